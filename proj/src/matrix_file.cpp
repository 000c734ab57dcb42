#include "semb/matrix_file.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <system_error>
#include <unistd.h>

#include "semb/error.hpp"

namespace semb {

namespace {

template <typename T>
void put_le(std::string& out, T value) {
  using U = std::make_unsigned_t<std::conditional_t<sizeof(T) == 8, std::int64_t,
                                                    std::conditional_t<sizeof(T) == 4, std::int32_t, std::int16_t>>>;
  U bits;
  std::memcpy(&bits, &value, sizeof(T));
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

template <typename T>
T get_le(std::string_view bytes, std::size_t& offset) {
  using U = std::make_unsigned_t<std::conditional_t<sizeof(T) == 8, std::int64_t,
                                                    std::conditional_t<sizeof(T) == 4, std::int32_t, std::int16_t>>>;
  if (offset + sizeof(T) > bytes.size()) throw ParseError("matrix file truncated");
  U bits = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i)
    bits |= static_cast<U>(static_cast<unsigned char>(bytes[offset + i])) << (8 * i);
  offset += sizeof(T);
  T value;
  std::memcpy(&value, &bits, sizeof(T));
  return value;
}

}  // namespace

std::size_t MatrixFile::element_count() const {
  std::size_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

std::string encode_matrix_file(const MatrixFile& file) {
  const std::size_t n = file.element_count();
  if ((file.dtype == MatrixFile::DType::F64 && file.f64.size() != n) ||
      (file.dtype == MatrixFile::DType::I32 && file.i32.size() != n))
    throw ContractError("matrix payload length does not match its dims");
  std::string out = "SEMB";
  put_le<std::uint16_t>(out, MatrixFile::kVersion);
  put_le<std::uint16_t>(out, static_cast<std::uint16_t>(file.dtype));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(file.dims.size()));
  for (auto d : file.dims) put_le<std::uint32_t>(out, d);
  if (file.dtype == MatrixFile::DType::F64)
    for (double v : file.f64) put_le<double>(out, v);
  else
    for (std::int32_t v : file.i32) put_le<std::int32_t>(out, v);
  return out;
}

MatrixFile decode_matrix_file(std::string_view bytes) {
  if (bytes.size() < 4 || bytes.substr(0, 4) != "SEMB") throw ParseError("not a SEMB matrix file (bad magic)");
  std::size_t offset = 4;
  const auto version = get_le<std::uint16_t>(bytes, offset);
  if (version != MatrixFile::kVersion) throw ParseError("unsupported SEMB version " + std::to_string(version));
  MatrixFile file;
  const auto tag = get_le<std::uint16_t>(bytes, offset);
  if (tag != 1 && tag != 2) throw ParseError("unknown SEMB dtype tag " + std::to_string(tag));
  file.dtype = static_cast<MatrixFile::DType>(tag);
  const auto rank = get_le<std::uint32_t>(bytes, offset);
  if (rank > 8) throw ParseError("SEMB rank too large");
  for (std::uint32_t i = 0; i < rank; ++i) file.dims.push_back(get_le<std::uint32_t>(bytes, offset));
  const std::size_t n = file.element_count();
  const std::size_t width = file.dtype == MatrixFile::DType::F64 ? 8 : 4;
  if (bytes.size() - offset != n * width) throw ParseError("SEMB payload length does not match dims");
  if (file.dtype == MatrixFile::DType::F64) {
    file.f64.reserve(n);
    for (std::size_t i = 0; i < n; ++i) file.f64.push_back(get_le<double>(bytes, offset));
  } else {
    file.i32.reserve(n);
    for (std::size_t i = 0; i < n; ++i) file.i32.push_back(get_le<std::int32_t>(bytes, offset));
  }
  return file;
}

std::string read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ContractError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_bytes_atomic(const std::filesystem::path& path, std::string_view bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp" + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ContractError("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw ContractError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

MatrixFile read_matrix_file(const std::filesystem::path& path) { return decode_matrix_file(read_bytes(path)); }

void write_matrix_file(const std::filesystem::path& path, const MatrixFile& file) {
  write_bytes_atomic(path, encode_matrix_file(file));
}

MatrixFile from_matrix(const Eigen::MatrixXd& m) {
  MatrixFile file;
  file.dims = {static_cast<std::uint32_t>(m.rows()), static_cast<std::uint32_t>(m.cols())};
  file.f64.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) file.f64.push_back(m(r, c));
  return file;
}

MatrixFile from_vector(const Eigen::VectorXd& v) {
  MatrixFile file;
  file.dims = {static_cast<std::uint32_t>(v.size())};
  file.f64.assign(v.data(), v.data() + v.size());
  return file;
}

MatrixFile from_int_grid(const Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>& m) {
  MatrixFile file;
  file.dtype = MatrixFile::DType::I32;
  file.dims = {static_cast<std::uint32_t>(m.rows()), static_cast<std::uint32_t>(m.cols())};
  file.i32.assign(m.data(), m.data() + m.size());
  return file;
}

MatrixFile from_pixel_grid(const Eigen::MatrixXd& grid, int height, int width) {
  if (grid.rows() != static_cast<Eigen::Index>(height) * width) throw ContractError("pixel grid size mismatch");
  MatrixFile file = from_matrix(grid);
  file.dims = {static_cast<std::uint32_t>(height), static_cast<std::uint32_t>(width),
               static_cast<std::uint32_t>(grid.cols())};
  return file;
}

Eigen::MatrixXd to_matrix(const MatrixFile& file) {
  if (file.dtype != MatrixFile::DType::F64 || file.dims.size() != 2) throw ParseError("expected a rank-2 f64 matrix");
  Eigen::MatrixXd m(file.dims[0], file.dims[1]);
  std::size_t i = 0;
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = file.f64[i++];
  return m;
}

Eigen::VectorXd to_vector(const MatrixFile& file) {
  if (file.dtype != MatrixFile::DType::F64 || file.dims.size() != 1) throw ParseError("expected a rank-1 f64 vector");
  return Eigen::Map<const Eigen::VectorXd>(file.f64.data(), static_cast<Eigen::Index>(file.f64.size()));
}

Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> to_int_grid(const MatrixFile& file) {
  if (file.dtype != MatrixFile::DType::I32 || file.dims.size() != 2) throw ParseError("expected a rank-2 i32 grid");
  using Grid = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  return Eigen::Map<const Grid>(file.i32.data(), file.dims[0], file.dims[1]);
}

Eigen::MatrixXd to_pixel_grid(const MatrixFile& file, int& height, int& width) {
  if (file.dtype != MatrixFile::DType::F64 || file.dims.size() != 3) throw ParseError("expected a rank-3 f64 pixel grid");
  height = static_cast<int>(file.dims[0]);
  width = static_cast<int>(file.dims[1]);
  MatrixFile flat = file;
  flat.dims = {file.dims[0] * file.dims[1], file.dims[2]};
  return to_matrix(flat);
}

}  // namespace semb
