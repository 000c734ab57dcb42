#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace semb {

/// Binary tensor container.
///
///   bytes 0-3   magic "SEMB"
///   u16         version (1)
///   u16         dtype tag (1 = f64, 2 = i32)
///   u32         rank
///   u32 x rank  dims
///   payload     row-major, little-endian
struct MatrixFile {
  enum class DType : std::uint16_t { F64 = 1, I32 = 2 };
  static constexpr std::uint16_t kVersion = 1;

  DType dtype = DType::F64;
  std::vector<std::uint32_t> dims;
  std::vector<double> f64;
  std::vector<std::int32_t> i32;

  std::size_t element_count() const;
};

std::string encode_matrix_file(const MatrixFile& file);
MatrixFile decode_matrix_file(std::string_view bytes);

MatrixFile read_matrix_file(const std::filesystem::path& path);
/// Writes to a temporary sibling and renames it into place.
void write_matrix_file(const std::filesystem::path& path, const MatrixFile& file);

MatrixFile from_matrix(const Eigen::MatrixXd& m);
MatrixFile from_vector(const Eigen::VectorXd& v);
MatrixFile from_int_grid(const Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>& m);
/// Rank-3 (height, width, D) tensor from a raster-ordered (H*W) x D grid.
MatrixFile from_pixel_grid(const Eigen::MatrixXd& grid, int height, int width);

Eigen::MatrixXd to_matrix(const MatrixFile& file);
Eigen::VectorXd to_vector(const MatrixFile& file);
Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> to_int_grid(const MatrixFile& file);
Eigen::MatrixXd to_pixel_grid(const MatrixFile& file, int& height, int& width);

void write_bytes_atomic(const std::filesystem::path& path, std::string_view bytes);
std::string read_bytes(const std::filesystem::path& path);

}  // namespace semb
