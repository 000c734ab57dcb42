#include <doctest.h>

#include "semb/error.hpp"
#include "semb/losses.hpp"
#include "semb/synth.hpp"
#include "support.hpp"

using namespace semb;

namespace {

constexpr double kD = kGeodesicMax;

// Triple-loop oracles for the two cycles.
Eigen::MatrixXd naive_cycle_mesh(const Eigen::MatrixXd& m_given_n, const Eigen::MatrixXd& n_given_m) {
  const Index Km = n_given_m.rows(), Kn = n_given_m.cols();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(Km, Km);
  for (Index k = 0; k < Km; ++k)
    for (Index t = 0; t < Km; ++t)
      for (Index l = 0; l < Kn; ++l) out(k, t) += m_given_n(l, k) * n_given_m(t, l);
  return out;
}

Eigen::MatrixXd naive_cycle_image(const Eigen::MatrixXd& pix_given_vert, const Eigen::MatrixXd& vert_given_pix,
                                  Index K) {
  const Index N = vert_given_pix.rows();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(N, N);
  for (Index x = 0; x < N; ++x)
    for (Index y = 0; y < N; ++y)
      for (Index k = 0; k < vert_given_pix.cols(); ++k) out(x, y) += pix_given_vert(k, y) * vert_given_pix(x, k);
  return out / static_cast<double>(K);
}

CorrespondenceMatrix wrap(Eigen::MatrixXd p) { return CorrespondenceMatrix{std::move(p)}; }

Eigen::MatrixXd permutation_matrix(const std::vector<int>& perm) {
  Eigen::MatrixXd P = Eigen::MatrixXd::Zero(static_cast<Index>(perm.size()), static_cast<Index>(perm.size()));
  for (std::size_t i = 0; i < perm.size(); ++i) P(static_cast<Index>(i), perm[i]) = 1.0;
  return P;
}

struct TwoMeshFixture {
  Mesh mesh;
  std::shared_ptr<const SpectralBasis> basis;
  GeodesicMatrix geo;
  TwoMeshFixture(Mesh m, Index Q) : mesh(std::move(m)), basis(test::basis_of(mesh, Q)), geo(test::normalized_geodesics(mesh)) {}
};

}  // namespace

TEST_CASE("loss_sup") {
  const Mesh tet = make_tetrahedron();
  const auto basis = test::basis_of(tet, 3);
  const GeodesicMatrix geo = test::normalized_geodesics(tet);
  const Mask mask = Mask::Constant(2, 2, true);
  const std::vector<GeodesicMatrix> geos{geo};

  SUBCASE("uniform correspondence on the tetrahedron") {
    const std::vector<CategoryEmbedding> embs{CategoryEmbedding(basis, Eigen::MatrixXd::Zero(3, 2))};
    const std::vector<PixelField> fields{PixelField(test::random_matrix(4, 2, 1), mask, 0, 0)};
    for (int v = 0; v < 4; ++v) {
      const std::vector<Annotation> ann{{0, 0, 1, 0, v}};
      CHECK(loss_sup(ann, embs, fields, geos).value == doctest::Approx(0.75 * kD).epsilon(1e-14));
    }
  }
  SUBCASE("delta correspondence") {
    const Eigen::MatrixXd ehat = 40.0 * test::random_matrix(3, 3, 2);
    const std::vector<CategoryEmbedding> embs{CategoryEmbedding(basis, ehat)};
    Eigen::MatrixXd grid = Eigen::MatrixXd::Zero(4, 3);
    grid.row(3) = embs[0].expanded().row(2);
    const std::vector<PixelField> fields{PixelField(grid, mask, 0, 0)};
    const std::vector<Annotation> ann{{0, 0, 1, 1, 2}};
    CHECK(loss_sup(ann, embs, fields, geos, Similarity::NegSqDist).value < 1e-12);
  }
  SUBCASE("unmasked annotation is rejected") {
    Mask m = mask;
    m(0, 1) = false;
    const std::vector<CategoryEmbedding> embs{CategoryEmbedding(basis, Eigen::MatrixXd::Zero(3, 2))};
    const std::vector<PixelField> fields{PixelField(Eigen::MatrixXd::Zero(4, 2), m, 0, 0)};
    const std::vector<Annotation> ann{{0, 0, 0, 1, 0}};
    CHECK_THROWS_AS(loss_sup(ann, embs, fields, geos), ContractError);
  }
  SUBCASE("gradients, Q=4, D=2, K=12") {
    const TwoMeshFixture fx(make_icosphere(0), 4);
    const std::vector<GeodesicMatrix> g12{fx.geo};
    const Mask m = Mask::Constant(3, 3, true);
    const Eigen::MatrixXd ehat = test::random_matrix(4, 2, 5);
    const Eigen::MatrixXd grid = test::random_matrix(9, 2, 6);
    const std::vector<Annotation> ann{{0, 0, 0, 0, 3}, {0, 0, 1, 2, 7}, {0, 0, 2, 2, 11}, {0, 0, 1, 2, 0}};
    for (Similarity mode : {Similarity::NegInner, Similarity::Inner, Similarity::NegSqDist}) {
      const auto eval = [&](const Eigen::MatrixXd& e, const Eigen::MatrixXd& g) {
        const std::vector<CategoryEmbedding> embs{CategoryEmbedding(fx.basis, e)};
        const std::vector<PixelField> fields{PixelField(g, m, 0, 0)};
        return loss_sup(ann, embs, fields, g12, mode);
      };
      const LossValue lv = eval(ehat, grid);
      CHECK(test::max_fd_relative_error([&](const Eigen::MatrixXd& e) { return eval(e, grid).value; }, ehat,
                                        lv.gradients.at({BlockId::Kind::Ehat, 0}), 8, 1) < 1e-4);
      CHECK(test::max_fd_relative_error([&](const Eigen::MatrixXd& g) { return eval(ehat, g).value; }, grid,
                                        lv.gradients.at({BlockId::Kind::Field, 0}), 18, 2) < 1e-4);
    }
  }
}

TEST_CASE("loss_anchor") {
  const TwoMeshFixture a(make_tetrahedron(), 3), b(make_tetrahedron(), 3);
  const std::vector<GeodesicMatrix> geos{a.geo, b.geo};
  const std::vector<CategoryEmbedding> uniform{CategoryEmbedding(a.basis, Eigen::MatrixXd::Zero(3, 2), 0),
                                               CategoryEmbedding(b.basis, Eigen::MatrixXd::Zero(3, 2), 1)};
  const std::vector<VertexAnchor> anchors{{0, 1, 1, 2}, {1, 3, 0, 0}};
  CHECK(loss_anchor(anchors, uniform, geos).value == doctest::Approx(0.75 * kD).epsilon(1e-14));

  const Eigen::MatrixXd e0 = test::random_matrix(3, 2, 8, 0.5), e1 = test::random_matrix(3, 2, 9, 0.5);
  const auto eval = [&](const Eigen::MatrixXd& x0, const Eigen::MatrixXd& x1) {
    const std::vector<CategoryEmbedding> embs{CategoryEmbedding(a.basis, x0, 0), CategoryEmbedding(b.basis, x1, 1)};
    return loss_anchor(anchors, embs, geos, Similarity::NegSqDist);
  };
  const LossValue lv = eval(e0, e1);
  CHECK(test::max_fd_relative_error([&](const Eigen::MatrixXd& x) { return eval(x, e1).value; }, e0,
                                    lv.gradients.at({BlockId::Kind::Ehat, 0}), 6, 3) < 1e-4);
  CHECK(test::max_fd_relative_error([&](const Eigen::MatrixXd& x) { return eval(e0, x).value; }, e1,
                                    lv.gradients.at({BlockId::Kind::Ehat, 1}), 6, 4) < 1e-4);
}

TEST_CASE("cycle_mesh") {
  SUBCASE("identity factors") {
    const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(6, 6);
    CHECK(cycle_mesh(wrap(I), wrap(I)) == I);
  }
  SUBCASE("uniform factors") {
    const Eigen::MatrixXd A = Eigen::MatrixXd::Constant(7, 5, 1.0 / 5), B = Eigen::MatrixXd::Constant(5, 7, 1.0 / 7);
    CHECK((cycle_mesh(wrap(A), wrap(B)).array() - 1.0 / 5).abs().maxCoeff() < 1e-15);
  }
  SUBCASE("permutation round trip") {
    const auto perm = permuted_copy(make_icosphere(0), 3).permutation;
    const Eigen::MatrixXd P = permutation_matrix(perm);
    CHECK((cycle_mesh(wrap(P.transpose()), wrap(P)) - Eigen::MatrixXd::Identity(12, 12)).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("100 random trials against the triple loop") {
    for (std::uint64_t s = 0; s < 100; ++s) {
      const Eigen::MatrixXd m_given_n = test::random_stochastic(7, 5, 2 * s), n_given_m = test::random_stochastic(5, 7, 2 * s + 1);
      const Eigen::MatrixXd c = cycle_mesh(wrap(m_given_n), wrap(n_given_m));
      CHECK((c - naive_cycle_mesh(m_given_n, n_given_m)).cwiseAbs().maxCoeff() < 1e-12);
      CHECK((c.colwise().sum().array() - 1.0).abs().maxCoeff() < 1e-9);
    }
  }
  SUBCASE("dimension mismatch") {
    CHECK_THROWS_AS(cycle_mesh(wrap(test::random_stochastic(7, 5, 1)), wrap(test::random_stochastic(6, 7, 2))),
                    ContractError);
  }
}

TEST_CASE("loss_m2m") {
  const TwoMeshFixture m(make_tetrahedron(), 3), n(make_tetrahedron(), 3);

  SUBCASE("uniform cycle on the unit tetrahedron") {
    const CategoryEmbedding em(m.basis, Eigen::MatrixXd::Zero(3, 2)), en(n.basis, Eigen::MatrixXd::Zero(3, 2));
    // (1/K) * 12 off-diagonal entries of 2.27, each weighted by 1/4.
    CHECK(loss_m2m(em, en, m.geo).value == doctest::Approx(1.7025).epsilon(1e-14));
  }
  SUBCASE("sharp identity cycle") {
    const Eigen::MatrixXd e = 60.0 * test::random_matrix(3, 3, 4);
    const CategoryEmbedding em(m.basis, e), en(n.basis, e);
    CHECK(loss_m2m(em, en, m.geo, Similarity::NegSqDist).value < 1e-12);
  }
  SUBCASE("gradients on two tetrahedra, Q=3, D=2") {
    const Eigen::MatrixXd e0 = test::random_matrix(3, 2, 10), e1 = test::random_matrix(3, 2, 11);
    for (Similarity mode : {Similarity::NegInner, Similarity::Inner, Similarity::NegSqDist}) {
      const auto eval = [&](const Eigen::MatrixXd& x0, const Eigen::MatrixXd& x1) {
        return loss_m2m(CategoryEmbedding(m.basis, x0, 0), CategoryEmbedding(n.basis, x1, 1), m.geo, mode);
      };
      const LossValue lv = eval(e0, e1);
      CHECK(lv.value >= 0.0);
      CHECK(test::max_fd_relative_error([&](const Eigen::MatrixXd& x) { return eval(x, e1).value; }, e0,
                                        lv.gradients.at({BlockId::Kind::Ehat, 0}), 6, 5) < 1e-4);
      CHECK(test::max_fd_relative_error([&](const Eigen::MatrixXd& x) { return eval(e0, x).value; }, e1,
                                        lv.gradients.at({BlockId::Kind::Ehat, 1}), 6, 6) < 1e-4);
    }
  }
  SUBCASE("relabeling the marginalized mesh") {
    const Mesh sphere = make_icosphere(1);
    const TwoMeshFixture a(sphere, 9);
    const auto pm = permuted_copy(sphere, 17);
    const auto basis_n = test::basis_of(sphere, 9);
    const CategoryEmbedding em(a.basis, test::random_matrix(9, 4, 12), 0);
    const CategoryEmbedding en(basis_n, test::random_matrix(9, 4, 13), 1);
    // Same embedding values, rows moved by the permutation.
    auto permuted_basis = std::make_shared<SpectralBasis>(*basis_n);
    permuted_basis->U = permutation_matrix(pm.permutation).transpose() * basis_n->U;
    const CategoryEmbedding en_perm(permuted_basis, en.ehat(), 1);
    for (Similarity mode : {Similarity::NegInner, Similarity::NegSqDist})
      CHECK(std::abs(loss_m2m(em, en, a.geo, mode).value - loss_m2m(em, en_perm, a.geo, mode).value) < 1e-12);
  }
  SUBCASE("unnormalized geodesics are rejected") {
    const CategoryEmbedding em(m.basis, Eigen::MatrixXd::Zero(3, 2)), en(n.basis, Eigen::MatrixXd::Zero(3, 2));
    CHECK_THROWS_AS(loss_m2m(em, en, geodesic_matrix(m.mesh)), ContractError);
  }
}

TEST_CASE("cycle_image") {
  SUBCASE("uniform factors") {
    const Index K = 5, N = 6;
    const auto c = cycle_image(wrap(Eigen::MatrixXd::Constant(K, N, 1.0 / N)), wrap(Eigen::MatrixXd::Constant(N, K, 1.0 / K)), K);
    CHECK((c.array() - 1.0 / (K * N)).abs().maxCoeff() < 1e-15);
  }
  SUBCASE("composition to a permutation") {
    const auto perm = permuted_copy(make_tetrahedron(), 9).permutation;
    const Eigen::MatrixXd P = permutation_matrix(perm);
    const auto c = cycle_image(wrap(Eigen::MatrixXd::Identity(4, 4)), wrap(P), 4);
    CHECK((c - P / 4.0).cwiseAbs().maxCoeff() == 0.0);
    const auto c_sum = cycle_image(wrap(Eigen::MatrixXd::Identity(4, 4)), wrap(P), 4, CycleNormalization::SumOnly);
    CHECK(c_sum == P);
  }
  SUBCASE("100 random trials against the triple loop") {
    for (std::uint64_t s = 0; s < 100; ++s) {
      const Eigen::MatrixXd vert_given_pix = test::random_stochastic(6, 5, 3 * s), pix_given_vert = test::random_stochastic(5, 6, 3 * s + 1);
      const Eigen::MatrixXd c = cycle_image(wrap(pix_given_vert), wrap(vert_given_pix), 5);
      CHECK((c - naive_cycle_image(pix_given_vert, vert_given_pix, 5)).cwiseAbs().maxCoeff() < 1e-12);
      CHECK((c.rowwise().sum().array() - 0.2).abs().maxCoeff() < 1e-12);
    }
  }
}

TEST_CASE("loss_i2m") {
  const TwoMeshFixture tet(make_tetrahedron(), 3);
  const Mask mask = Mask::Constant(4, 4, true);

  SUBCASE("single pixel") {
    const CategoryEmbedding e(tet.basis, test::random_matrix(3, 2, 1));
    const PixelField f(test::random_matrix(16, 2, 2), mask, 0, 0);
    CHECK(loss_i2m(e, f, {5}, image_distance({5}, 4, 4)).value == 0.0);
  }
  SUBCASE("uniform cycle over two pixels") {
    const CategoryEmbedding e(tet.basis, Eigen::MatrixXd::Zero(3, 2));
    const PixelField f(Eigen::MatrixXd::Zero(16, 2), mask, 0, 0);
    const std::vector<Index> px{0, 15};
    const Eigen::MatrixXd d = image_distance(px, 4, 4);
    const double r = d(0, 1);
    CHECK(loss_i2m(e, f, px, d).value == doctest::Approx(r / (2 * 4)).epsilon(1e-14));
    CHECK(loss_i2m(e, f, px, d, Similarity::NegInner, CycleNormalization::SumOnly).value ==
          doctest::Approx(r / 2).epsilon(1e-14));
  }
  SUBCASE("gradients, 4x4 grid, 4 pixels, tetrahedron") {
    const std::vector<Index> px{1, 6, 11, 12};
    const Eigen::MatrixXd d = image_distance(px, 4, 4);
    const Eigen::MatrixXd ehat = test::random_matrix(3, 2, 20), grid = test::random_matrix(16, 2, 21);
    for (Similarity mode : {Similarity::NegInner, Similarity::Inner, Similarity::NegSqDist})
      for (auto norm : {CycleNormalization::Literal, CycleNormalization::SumOnly}) {
        const auto eval = [&](const Eigen::MatrixXd& e, const Eigen::MatrixXd& g) {
          return loss_i2m(CategoryEmbedding(tet.basis, e), PixelField(g, mask, 0, 0), px, d, mode, norm);
        };
        const LossValue lv = eval(ehat, grid);
        const Eigen::MatrixXd& gf = lv.gradients.at({BlockId::Kind::Field, 0});
        for (Index r = 0; r < 16; ++r)
          if (std::find(px.begin(), px.end(), r) == px.end()) CHECK(gf.row(r).isZero(0.0));
        CHECK(test::max_fd_relative_error([&](const Eigen::MatrixXd& e) { return eval(e, grid).value; }, ehat,
                                          lv.gradients.at({BlockId::Kind::Ehat, 0}), 6, 7) < 1e-4);
        Eigen::MatrixXd sub(4, 2), sub_grad(4, 2);
        for (int i = 0; i < 4; ++i) {
          sub.row(i) = grid.row(px[i]);
          sub_grad.row(i) = gf.row(px[i]);
        }
        const auto f_sub = [&](const Eigen::MatrixXd& s) {
          Eigen::MatrixXd g = grid;
          for (int i = 0; i < 4; ++i) g.row(px[i]) = s.row(i);
          return eval(ehat, g).value;
        };
        CHECK(test::max_fd_relative_error(f_sub, sub, sub_grad, 8, 8) < 1e-4);
      }
  }
  SUBCASE("injective pixel embeddings reach zero") {
    const TwoMeshFixture sphere(make_icosphere(1), 16);
    const CategoryEmbedding e(sphere.basis, 30.0 * test::random_matrix(16, 6, 22));
    Eigen::MatrixXd grid = Eigen::MatrixXd::Zero(16, 6);
    const std::vector<Index> px{0, 3, 5, 9, 10, 14};
    for (std::size_t i = 0; i < px.size(); ++i) grid.row(px[i]) = e.expanded().row(static_cast<Index>(7 * i + 2));
    const PixelField f(grid, mask, 0, 0);
    const double loss = loss_i2m(e, f, px, image_distance(px, 4, 4), Similarity::NegSqDist).value;
    CHECK(loss < 1e-10);
  }
  SUBCASE("pixel outside the mask") {
    Mask m = mask;
    m(0, 1) = false;
    const CategoryEmbedding e(tet.basis, Eigen::MatrixXd::Zero(3, 2));
    const PixelField f(Eigen::MatrixXd::Zero(16, 2), m, 0, 0);
    CHECK_THROWS_AS(loss_i2m(e, f, {0, 1}, image_distance({0, 1}, 4, 4)), ContractError);
  }
}

TEST_CASE("loss_i2m_all") {
  const Mask mask = Mask::Constant(4, 4, true);
  const std::vector<Index> px{2, 4, 9, 15};
  const Eigen::MatrixXd d = image_distance(px, 4, 4);
  const PixelField f(test::random_matrix(16, 3, 30), mask, 0, 0);
  const TwoMeshFixture tet(make_tetrahedron(), 3), ico(make_icosphere(0), 6), ico1(make_icosphere(1), 8);

  const std::vector<CategoryEmbedding> one{CategoryEmbedding(tet.basis, test::random_matrix(3, 3, 31), 0)};
  CHECK(loss_i2m_all(one, f, px, d).value == doctest::Approx(loss_i2m(one[0], f, px, d).value).epsilon(1e-15));

  const Eigen::MatrixXd shared = test::random_matrix(3, 3, 32);
  const std::vector<CategoryEmbedding> twins{CategoryEmbedding(tet.basis, shared, 0),
                                             CategoryEmbedding(tet.basis, shared, 1)};
  CHECK(loss_i2m_all(twins, f, px, d).value == doctest::Approx(loss_i2m(twins[1], f, px, d).value).epsilon(1e-14));

  const std::vector<CategoryEmbedding> three{CategoryEmbedding(tet.basis, test::random_matrix(3, 3, 33), 0),
                                             CategoryEmbedding(ico.basis, test::random_matrix(6, 3, 34), 1),
                                             CategoryEmbedding(ico1.basis, test::random_matrix(8, 3, 35), 2)};
  double mean = 0.0;
  for (const auto& e : three) mean += loss_i2m(e, f, px, d, Similarity::Inner).value / 3.0;
  const LossValue all = loss_i2m_all(three, f, px, d, Similarity::Inner);
  CHECK(std::abs(all.value - mean) < 1e-12);
  CHECK(all.gradients.size() == 4);
}

TEST_CASE("loss_total") {
  const Mesh sphere = make_icosphere(1);
  const TwoMeshFixture a(sphere, 9), b(permuted_copy(sphere, 4).mesh, 9);
  const std::vector<GeodesicMatrix> geos{a.geo, b.geo};
  const std::vector<CategoryEmbedding> embs{CategoryEmbedding(a.basis, test::random_matrix(9, 3, 40), 0),
                                            CategoryEmbedding(b.basis, test::random_matrix(9, 3, 41), 1)};
  const Mask mask = Mask::Constant(3, 4, true);
  const std::vector<PixelField> fields{PixelField(test::random_matrix(12, 3, 42), mask, 0, 0),
                                       PixelField(test::random_matrix(12, 3, 43), mask, 1, 1)};
  const std::vector<Annotation> ann{{0, 0, 1, 1, 5}, {1, 1, 2, 3, 40}};
  const std::vector<VertexAnchor> anchors{{0, 3, 1, 7}};
  const std::vector<std::vector<Index>> samples{{0, 5, 11}, {1, 2, 3, 7}};
  const ProblemState state{embs, fields, geos, ann, anchors, samples, Similarity::NegSqDist};

  SUBCASE("sup only") {
    const TotalLoss t = loss_total(state, {1.0, 0.0, 0.0});
    const double expect = loss_sup(ann, embs, fields, geos, Similarity::NegSqDist).value +
                          loss_anchor(anchors, embs, geos, Similarity::NegSqDist).value;
    CHECK(t.total.value == doctest::Approx(expect).epsilon(1e-15));
  }
  SUBCASE("m2m averages the two ordered pairs") {
    const TotalLoss t = loss_total(state, {0.0, 1.0, 0.0});
    const double expect = 0.5 * (loss_m2m(embs[0], embs[1], geos[0], Similarity::NegSqDist).value +
                                 loss_m2m(embs[1], embs[0], geos[1], Similarity::NegSqDist).value);
    CHECK(t.total.value == doctest::Approx(expect).epsilon(1e-14));
    CHECK(t.m2m == doctest::Approx(expect).epsilon(1e-14));
  }
  SUBCASE("weighted sum of terms, values and gradients") {
    const LossWeights w{0.7, 2.5, 1.3};
    const TotalLoss t = loss_total(state, w);
    const TotalLoss s = loss_total(state, {1.0, 0.0, 0.0}), m = loss_total(state, {0.0, 1.0, 0.0}),
                    i = loss_total(state, {0.0, 0.0, 1.0});
    CHECK(std::abs(t.total.value - (0.7 * s.total.value + 2.5 * m.total.value + 1.3 * i.total.value)) < 1e-12);
    CHECK(t.sup == s.sup);
    CHECK(t.i2m == i.i2m);
    for (const auto& [id, g] : t.total.gradients) {
      Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(g.rows(), g.cols());
      if (auto it = s.total.gradients.find(id); it != s.total.gradients.end()) sum += 0.7 * it->second;
      if (auto it = m.total.gradients.find(id); it != m.total.gradients.end()) sum += 2.5 * it->second;
      if (auto it = i.total.gradients.find(id); it != i.total.gradients.end()) sum += 1.3 * it->second;
      CHECK((g - sum).cwiseAbs().maxCoeff() < 1e-12);
    }
    double mean_i2m = 0.0;
    for (std::size_t sc = 0; sc < 2; ++sc)
      mean_i2m += 0.5 * loss_i2m(embs[sc], fields[sc], samples[sc], image_distance(samples[sc], 3, 4),
                                 Similarity::NegSqDist).value;
    CHECK(i.total.value == doctest::Approx(mean_i2m).epsilon(1e-14));
  }
  SUBCASE("contract errors") {
    CHECK_THROWS_AS(loss_total(state, {0.0, 0.0, 0.0}), ContractError);
    const std::vector<CategoryEmbedding> single{embs[0]};
    const std::vector<GeodesicMatrix> g1{geos[0]};
    const ProblemState lone{single, {}, g1, {}, {}, {}, Similarity::NegSqDist};
    CHECK_THROWS_AS(loss_total(lone, {0.0, 1.0, 0.0}), ContractError);
  }
  SUBCASE("values are nonnegative and finite") {
    const TotalLoss t = loss_total(state);
    CHECK(t.total.value >= 0.0);
    CHECK(std::isfinite(t.total.value));
    for (const auto& [id, g] : t.total.gradients) CHECK(g.allFinite());
  }
}
