#include <functional>
#include <limits>
#include <queue>
#include <set>
#include <vector>

#include "semb/error.hpp"
#include "semb/mesh.hpp"

namespace semb {

GeodesicMatrix geodesic_matrix(const Mesh& mesh, Index max_vertices) {
  const Index K = mesh.num_vertices();
  if (K > max_vertices)
    throw ContractError("geodesic matrix for K=" + std::to_string(K) + " exceeds the cap of " +
                        std::to_string(max_vertices) + " vertices");

  // Adjacency with lengths computed once per undirected edge so both directions agree bitwise.
  std::set<std::pair<int, int>> edges;
  for (Index f = 0; f < mesh.num_faces(); ++f)
    for (int c = 0; c < 3; ++c) {
      const int u = mesh.faces()(f, c), w = mesh.faces()(f, (c + 1) % 3);
      edges.emplace(std::min(u, w), std::max(u, w));
    }
  std::vector<std::vector<std::pair<int, double>>> adjacency(static_cast<std::size_t>(K));
  for (const auto& [u, w] : edges) {
    const double len = (mesh.vertices().row(u) - mesh.vertices().row(w)).norm();
    adjacency[u].emplace_back(w, len);
    adjacency[w].emplace_back(u, len);
  }

  GeodesicMatrix out;
  out.values.resize(K, K);
  const double inf = std::numeric_limits<double>::infinity();
  using Entry = std::pair<double, int>;
  std::vector<double> dist(static_cast<std::size_t>(K));
  for (Index source = 0; source < K; ++source) {
    std::fill(dist.begin(), dist.end(), inf);
    std::priority_queue<Entry, std::vector<Entry>, std::greater<>> heap;
    dist[source] = 0.0;
    heap.emplace(0.0, static_cast<int>(source));
    while (!heap.empty()) {
      const auto [d, u] = heap.top();
      heap.pop();
      if (d > dist[u]) continue;
      for (const auto& [w, len] : adjacency[u]) {
        const double candidate = d + len;
        if (candidate < dist[w]) {
          dist[w] = candidate;
          heap.emplace(candidate, w);
        }
      }
    }
    for (Index t = 0; t < K; ++t) {
      if (dist[t] == inf) throw TopologyError("mesh is disconnected: infinite geodesic distance");
      out.values(source, t) = dist[t];
    }
  }
  // Path sums accumulated from opposite ends can differ in the last ulp.
  out.values = out.values.cwiseMin(out.values.transpose()).eval();
  return out;
}

GeodesicMatrix normalize_geodesics(const GeodesicMatrix& geodesics, double d_max) {
  if (geodesics.normalized) throw ContractError("geodesic matrix is already normalized");
  if (!(d_max > 0.0)) throw ContractError("d_max must be positive");
  const double current = geodesics.values.maxCoeff();
  if (!(current > 0.0)) throw ContractError("geodesic matrix has no positive entry");
  GeodesicMatrix out;
  out.values = geodesics.values * (d_max / current);
  out.normalized = true;
  return out;
}

}  // namespace semb
