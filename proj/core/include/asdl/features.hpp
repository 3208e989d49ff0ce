#pragma once

#include <complex>
#include <cstdint>
#include <span>
#include <vector>

#include "asdl/audio.hpp"
#include "asdl/geometry.hpp"
#include "asdl/tensor.hpp"

namespace asdl {

// Short-time Fourier transform of one channel, row-major time x frequency.
struct Spectrogram {
  std::vector<std::complex<double>> values;
  std::int64_t time_bins = 0;
  std::int64_t freq_bins = 0;  // window_size / 2 + 1
  int sample_rate = 48000;
  int hop = 100;
  int window_size = 512;

  std::complex<double>& at(std::int64_t t, std::int64_t f) {
    return values[static_cast<std::size_t>(t * freq_bins + f)];
  }
  const std::complex<double>& at(std::int64_t t, std::int64_t f) const {
    return values[static_cast<std::size_t>(t * freq_bins + f)];
  }
};

// Hann-windowed STFT. Frame t covers samples [t*hop, t*hop + window_size),
// zero-padded past the end of the signal, so the frame count is
// ceil(len / hop); a 2 s / 48 kHz signal with hop 100 gives 960 frames.
Spectrogram stft(std::span<const double> signal, int window_size = 512, int hop = 100,
                 int sample_rate = 48000);

// Triangular mel filterbank (HTK mel scale, 2595*log10(1 + f/700)) spanning
// 0 Hz to Nyquist, returned as an n_mels x (window_size/2 + 1) weight matrix.
// Weights are triangle areas integrated across each STFT bin's width, which
// keeps every filter non-empty even where the bin grid is coarser than the
// low-frequency mel spacing.
Tensor mel_filterbank(int window_size = 512, int n_mels = 64, int sample_rate = 48000);

// log(mel power + eps), time x n_mels.
Tensor log_mel(const Spectrogram& spec, const Tensor& filterbank);

// Phase-transform generalized cross-correlation per frame. Output is
// time x n_lags with lags ascending from -n_lags/2 to n_lags/2 - 1 samples;
// a positive peak lag means `other` receives the signal later than `ref`.
Tensor gcc_phat(const Spectrogram& ref, const Spectrogram& other, int n_lags = 64);

// Network input tensor: channel 0 is the reference channel's log-mel, the
// remaining channels are GCC-PHAT maps against each other microphone in
// ascending microphone order.
struct FeatureTensor {
  Tensor values;  // channels x time x freq(=lag)
  int reference_mic = 0;
  std::vector<int> gcc_mic_for_channel;  // per channel; -1 marks the log-mel channel
};

FeatureTensor assemble_features(const MultichannelClip& clip, const RigConfig& rig);

constexpr double kLogMelEpsilon = 1e-10;
constexpr double kPhatMagnitudeFloor = 1e-12;
constexpr int kSegmentSamples = 96000;  // 2 s at 48 kHz

double mel_from_hz(double hz);
double hz_from_mel(double mel);

}  // namespace asdl
