#include "asdl/audio.hpp"

#include <cstring>
#include <fstream>
#include <string>

#include "asdl/errors.hpp"

namespace asdl {

namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

template <typename T>
void write_raw(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

struct FmtChunk {
  std::uint16_t format = 0;
  std::uint16_t channels = 0;
  std::uint32_t sample_rate = 0;
  std::uint16_t bits_per_sample = 0;
};

double decode_sample(const unsigned char* p, const FmtChunk& fmt) {
  switch (fmt.bits_per_sample) {
    case 16: {
      std::int16_t v;
      std::memcpy(&v, p, 2);
      return static_cast<double>(v) / 32768.0;
    }
    case 24: {
      std::int32_t v = static_cast<std::int32_t>(p[0]) | (static_cast<std::int32_t>(p[1]) << 8) |
                       (static_cast<std::int32_t>(p[2]) << 16);
      if (v & 0x800000) v |= ~0xFFFFFF;  // sign extend
      return static_cast<double>(v) / 8388608.0;
    }
    case 32: {
      float v;
      std::memcpy(&v, p, 4);
      return static_cast<double>(v);
    }
    default:
      throw DataError("unsupported WAV bit depth: " + std::to_string(fmt.bits_per_sample));
  }
}

}  // namespace

MultichannelClip read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open WAV file: " + path.string());

  char riff[4], wave[4];
  std::uint32_t riff_size = 0;
  in.read(riff, 4);
  in.read(reinterpret_cast<char*>(&riff_size), 4);
  in.read(wave, 4);
  if (!in || std::memcmp(riff, "RIFF", 4) != 0 || std::memcmp(wave, "WAVE", 4) != 0) {
    throw DataError("not a RIFF/WAVE file: " + path.string());
  }

  FmtChunk fmt;
  bool have_fmt = false;
  std::vector<char> payload;

  while (in) {
    char id[4];
    std::uint32_t size = 0;
    in.read(id, 4);
    in.read(reinterpret_cast<char*>(&size), 4);
    if (!in) break;
    if (std::memcmp(id, "fmt ", 4) == 0) {
      std::vector<char> chunk(size);
      in.read(chunk.data(), size);
      if (!in || size < 16) throw DataError("malformed fmt chunk: " + path.string());
      std::memcpy(&fmt.format, chunk.data() + 0, 2);
      std::memcpy(&fmt.channels, chunk.data() + 2, 2);
      std::memcpy(&fmt.sample_rate, chunk.data() + 4, 4);
      std::memcpy(&fmt.bits_per_sample, chunk.data() + 14, 2);
      if (fmt.format == kFormatExtensible && size >= 26) {
        // The first subformat field distinguishes PCM from float.
        std::uint16_t sub;
        std::memcpy(&sub, chunk.data() + 24, 2);
        fmt.format = sub;
      }
      have_fmt = true;
    } else if (std::memcmp(id, "data", 4) == 0) {
      payload.resize(size);
      in.read(payload.data(), size);
      if (!in) throw DataError("truncated data chunk: " + path.string());
      break;
    } else {
      in.seekg(size + (size & 1), std::ios::cur);
    }
  }

  if (!have_fmt) throw DataError("WAV file has no fmt chunk: " + path.string());
  if (payload.empty()) throw DataError("WAV file has no data chunk: " + path.string());
  if (fmt.channels == 0) throw DataError("WAV file declares zero channels: " + path.string());
  if (fmt.format != kFormatPcm && fmt.format != kFormatFloat) {
    throw DataError("unsupported WAV format code " + std::to_string(fmt.format));
  }
  if (fmt.format == kFormatFloat && fmt.bits_per_sample != 32) {
    throw DataError("only 32-bit float WAV is supported");
  }
  if (fmt.format == kFormatPcm && fmt.bits_per_sample != 16 && fmt.bits_per_sample != 24) {
    throw DataError("only 16/24-bit PCM WAV is supported");
  }

  const std::size_t bytes_per_sample = fmt.bits_per_sample / 8;
  const std::size_t frame_bytes = bytes_per_sample * fmt.channels;
  const std::size_t n_frames = payload.size() / frame_bytes;

  MultichannelClip clip;
  clip.sample_rate = static_cast<int>(fmt.sample_rate);
  clip.channels.assign(fmt.channels, std::vector<double>(n_frames));
  const auto* p = reinterpret_cast<const unsigned char*>(payload.data());
  for (std::size_t i = 0; i < n_frames; ++i) {
    for (std::uint16_t c = 0; c < fmt.channels; ++c) {
      clip.channels[c][i] = decode_sample(p + i * frame_bytes + c * bytes_per_sample, fmt);
    }
  }
  return clip;
}

void write_wav(const std::filesystem::path& path, const MultichannelClip& clip) {
  if (clip.channels.empty()) throw DataError("refusing to write WAV with zero channels");
  const std::size_t n = static_cast<std::size_t>(clip.n_samples());
  for (const auto& ch : clip.channels) {
    if (ch.size() != n) throw DataError("WAV writer: channels of unequal length");
  }

  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write WAV file: " + path.string());

  const std::uint16_t channels = static_cast<std::uint16_t>(clip.channels.size());
  const std::uint32_t data_bytes = static_cast<std::uint32_t>(n * channels * 4);
  const std::uint32_t byte_rate = static_cast<std::uint32_t>(clip.sample_rate) * channels * 4;

  out.write("RIFF", 4);
  write_raw<std::uint32_t>(out, 36 + data_bytes);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  write_raw<std::uint32_t>(out, 16);
  write_raw<std::uint16_t>(out, kFormatFloat);
  write_raw<std::uint16_t>(out, channels);
  write_raw<std::uint32_t>(out, static_cast<std::uint32_t>(clip.sample_rate));
  write_raw<std::uint32_t>(out, byte_rate);
  write_raw<std::uint16_t>(out, static_cast<std::uint16_t>(channels * 4));
  write_raw<std::uint16_t>(out, 32);
  out.write("data", 4);
  write_raw<std::uint32_t>(out, data_bytes);

  std::vector<float> frame(channels);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::uint16_t c = 0; c < channels; ++c) frame[c] = static_cast<float>(clip.channels[c][i]);
    out.write(reinterpret_cast<const char*>(frame.data()), channels * 4);
  }
  if (!out) throw DataError("short write on WAV file: " + path.string());
}

}  // namespace asdl
