#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace asdl {

// Channel-major multichannel sample block, one vector per channel.
struct MultichannelClip {
  int sample_rate = 48000;
  std::vector<std::vector<double>> channels;

  int n_channels() const { return static_cast<int>(channels.size()); }
  std::int64_t n_samples() const {
    return channels.empty() ? 0 : static_cast<std::int64_t>(channels[0].size());
  }
  double duration_s() const {
    return sample_rate > 0 ? static_cast<double>(n_samples()) / sample_rate : 0.0;
  }
};

// RIFF/WAVE reader for PCM 16-bit, PCM 24-bit and IEEE float32, any channel
// count. Samples are normalized to [-1, 1] doubles.
MultichannelClip read_wav(const std::filesystem::path& path);

// Writes IEEE float32 WAVE.
void write_wav(const std::filesystem::path& path, const MultichannelClip& clip);

}  // namespace asdl
