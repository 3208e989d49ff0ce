#include "asdl/tensor.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "asdl/errors.hpp"

namespace asdl {

namespace {

constexpr char kMagic[8] = {'A', 'S', 'D', 'L', 'T', 'E', 'N', 'S'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void write_raw(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_raw(std::istream& in, const char* what) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw DataError(std::string("tensor blob truncated while reading ") + what);
  return v;
}

}  // namespace

bool Tensor::all_finite() const {
  for (double v : data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void write_tensor(const std::filesystem::path& path, const Tensor& t, Dtype dtype) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write tensor blob: " + path.string());
  out.write(kMagic, sizeof(kMagic));
  write_raw(out, kVersion);
  write_raw(out, static_cast<std::uint8_t>(dtype));
  write_raw(out, static_cast<std::uint8_t>(t.ndim()));
  write_raw(out, static_cast<std::uint16_t>(0));
  for (std::int64_t d : t.shape) {
    write_raw(out, static_cast<std::uint64_t>(d));
  }
  if (dtype == Dtype::f64) {
    out.write(reinterpret_cast<const char*>(t.data.data()),
              static_cast<std::streamsize>(t.data.size() * sizeof(double)));
  } else {
    std::vector<float> narrow(t.data.size());
    for (std::size_t i = 0; i < t.data.size(); ++i) narrow[i] = static_cast<float>(t.data[i]);
    out.write(reinterpret_cast<const char*>(narrow.data()),
              static_cast<std::streamsize>(narrow.size() * sizeof(float)));
  }
  if (!out) throw DataError("short write on tensor blob: " + path.string());
}

Tensor read_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open tensor blob: " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw DataError("not a tensor blob: " + path.string());
  }
  const auto version = read_raw<std::uint32_t>(in, "version");
  if (version != kVersion) {
    throw DataError("unsupported tensor blob version " + std::to_string(version));
  }
  const auto dtype = read_raw<std::uint8_t>(in, "dtype");
  const auto rank = read_raw<std::uint8_t>(in, "rank");
  read_raw<std::uint16_t>(in, "reserved");
  std::vector<std::int64_t> shape(rank);
  for (auto& d : shape) {
    d = static_cast<std::int64_t>(read_raw<std::uint64_t>(in, "dimension"));
  }
  Tensor t(shape);
  const std::size_t n = t.data.size();
  if (dtype == static_cast<std::uint8_t>(Dtype::f64)) {
    in.read(reinterpret_cast<char*>(t.data.data()), static_cast<std::streamsize>(n * sizeof(double)));
    if (!in) throw DataError("tensor blob payload truncated: " + path.string());
  } else if (dtype == static_cast<std::uint8_t>(Dtype::f32)) {
    std::vector<float> narrow(n);
    in.read(reinterpret_cast<char*>(narrow.data()), static_cast<std::streamsize>(n * sizeof(float)));
    if (!in) throw DataError("tensor blob payload truncated: " + path.string());
    for (std::size_t i = 0; i < n; ++i) t.data[i] = static_cast<double>(narrow[i]);
  } else {
    throw DataError("unknown tensor blob dtype code " + std::to_string(dtype));
  }
  return t;
}

}  // namespace asdl
