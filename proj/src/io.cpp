#include "dbp/io.hpp"

#include "dbp/errors.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace dbp {

namespace {

constexpr char kMagic[8] = {'D', 'B', 'P', 'T', 'N', 'S', 'R', '1'};

static_assert(std::endian::native == std::endian::little, "tensor io assumes a little-endian host");

void put_u64(std::string& out, std::uint64_t v) {
  char b[8];
  std::memcpy(b, &v, 8);
  out.append(b, 8);
}

std::uint64_t get_u64(const std::string& in, std::size_t& pos) {
  if (pos + 8 > in.size()) throw IoError("tensor data truncated");
  std::uint64_t v;
  std::memcpy(&v, in.data() + pos, 8);
  pos += 8;
  return v;
}

}  // namespace

std::string encode_tensor(const Tensor& t) {
  std::string out(kMagic, 8);
  put_u64(out, t.rank());
  for (std::size_t e : t.shape()) put_u64(out, e);
  out.append(reinterpret_cast<const char*>(t.array().data()), t.size() * sizeof(double));
  return out;
}

Tensor decode_tensor(const std::string& bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, 8) != 0) throw IoError("not a tensor file (bad magic)");
  std::size_t pos = 8;
  const std::uint64_t rank = get_u64(bytes, pos);
  if (rank == 0 || rank > 16) throw IoError("tensor file has rank " + std::to_string(rank));
  Shape shape;
  for (std::uint64_t i = 0; i < rank; ++i) shape.push_back(get_u64(bytes, pos));
  for (std::size_t e : shape) {
    if (e == 0) throw IoError("tensor file has a zero extent");
  }
  const std::size_t n = shape_size(shape);
  if (bytes.size() - pos != n * sizeof(double)) throw IoError("tensor payload size does not match its shape");
  Eigen::ArrayXd data(static_cast<Eigen::Index>(n));
  std::memcpy(data.data(), bytes.data() + pos, n * sizeof(double));
  return Tensor(std::move(shape), std::move(data));
}

void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write '" + path + "'");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("write failed for '" + path + "'");
}

void write_tensor(const std::string& path, const Tensor& t) { write_file(path, encode_tensor(t)); }

Tensor read_tensor(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return decode_tensor(ss.str());
}

void write_pgm(const std::string& path, const Tensor& image, double lo, double hi) {
  if (image.rank() != 2) throw ShapeError("pgm needs an (H, W) image");
  if (!(hi > lo)) throw RangeError("pgm range must be increasing");
  std::string out = "P5\n" + std::to_string(image.shape()[1]) + " " + std::to_string(image.shape()[0]) + "\n255\n";
  for (std::size_t i = 0; i < image.size(); ++i) {
    const double u = std::clamp((image[i] - lo) / (hi - lo), 0.0, 1.0);
    out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(255.0 * u))));
  }
  write_file(path, out);
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

}  // namespace dbp
