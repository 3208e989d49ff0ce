#pragma once

#include <cstdint>
#include <filesystem>
#include <numeric>
#include <vector>

namespace asdl {

// Dense row-major tensor of doubles. All numerical state in the project
// (signals, feature maps, network activations, parameters) uses this type;
// narrower dtypes exist only at the file boundary.
struct Tensor {
  std::vector<std::int64_t> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::int64_t> s) : shape(std::move(s)) {
    data.assign(static_cast<std::size_t>(count(shape)), 0.0);
  }

  static std::int64_t count(const std::vector<std::int64_t>& s) {
    std::int64_t n = 1;
    for (std::int64_t d : s) n *= d;
    return n;
  }

  std::int64_t size() const { return static_cast<std::int64_t>(data.size()); }
  std::int64_t dim(int i) const { return shape[static_cast<std::size_t>(i)]; }
  int ndim() const { return static_cast<int>(shape.size()); }

  double* ptr() { return data.data(); }
  const double* ptr() const { return data.data(); }

  // Row-major offsets for the common ranks.
  double& at2(std::int64_t i, std::int64_t j) { return data[static_cast<std::size_t>(i * shape[1] + j)]; }
  double at2(std::int64_t i, std::int64_t j) const { return data[static_cast<std::size_t>(i * shape[1] + j)]; }
  double& at3(std::int64_t i, std::int64_t j, std::int64_t k) {
    return data[static_cast<std::size_t>((i * shape[1] + j) * shape[2] + k)];
  }
  double at3(std::int64_t i, std::int64_t j, std::int64_t k) const {
    return data[static_cast<std::size_t>((i * shape[1] + j) * shape[2] + k)];
  }

  void fill(double v) { std::fill(data.begin(), data.end(), v); }
  bool same_shape(const Tensor& other) const { return shape == other.shape; }
  bool all_finite() const;
};

enum class Dtype : std::uint8_t { f32 = 1, f64 = 2 };

// Flat binary tensor blob with a self-describing header:
//   bytes 0..7   magic "ASDLTENS"
//   u32          format version (1)
//   u8           dtype (1 = float32, 2 = float64)
//   u8           rank
//   u16          reserved (0)
//   u64 * rank   dimensions
//   payload      row-major values, little-endian
void write_tensor(const std::filesystem::path& path, const Tensor& t, Dtype dtype);
Tensor read_tensor(const std::filesystem::path& path);

}  // namespace asdl
