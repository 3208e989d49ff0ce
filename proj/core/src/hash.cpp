#include "asdl/hash.hpp"

#include <cstdio>
#include <fstream>
#include <vector>

#include "asdl/errors.hpp"

namespace asdl {

std::uint64_t hash_bytes(const void* data, std::size_t n) {
  return Fnv1a64().update(data, n).value();
}

std::uint64_t hash_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw DataError("cannot open file for hashing: " + path.string());
  }
  Fnv1a64 h;
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    h.update(buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  return h.value();
}

std::string hash_hex(std::uint64_t h) {
  char out[17];
  std::snprintf(out, sizeof(out), "%016llx", static_cast<unsigned long long>(h));
  return out;
}

}  // namespace asdl
