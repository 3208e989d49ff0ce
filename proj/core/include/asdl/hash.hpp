#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

namespace asdl {

// FNV-1a 64-bit. Content identity for manifests and idempotence checks,
// not a cryptographic hash.
class Fnv1a64 {
 public:
  Fnv1a64& update(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      state_ ^= p[i];
      state_ *= 1099511628211ULL;
    }
    return *this;
  }

  Fnv1a64& update(const std::string& s) { return update(s.data(), s.size()); }

  std::uint64_t value() const { return state_; }

 private:
  std::uint64_t state_ = 14695981039346656037ULL;
};

std::uint64_t hash_bytes(const void* data, std::size_t n);
std::uint64_t hash_file(const std::filesystem::path& path);
std::string hash_hex(std::uint64_t h);

}  // namespace asdl
