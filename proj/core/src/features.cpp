#include "asdl/features.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

#include "asdl/errors.hpp"
#include "fft.hpp"

namespace asdl {

namespace {

constexpr double kPi = 3.141592653589793238462643383279502884;

// Integral of the triangle rising over [lo, peak] and falling over
// [peak, hi], restricted to [a, b].
double triangle_integral(double lo, double peak, double hi, double a, double b) {
  double total = 0.0;
  const double ra = std::max(a, lo);
  const double rb = std::min(b, peak);
  if (rb > ra && peak > lo) {
    total += ((rb - lo) * (rb - lo) - (ra - lo) * (ra - lo)) / (2.0 * (peak - lo));
  }
  const double fa = std::max(a, peak);
  const double fb = std::min(b, hi);
  if (fb > fa && hi > peak) {
    total += ((hi - fa) * (hi - fa) - (hi - fb) * (hi - fb)) / (2.0 * (hi - peak));
  }
  return total;
}

}  // namespace

double mel_from_hz(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }

double hz_from_mel(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

Spectrogram stft(std::span<const double> signal, int window_size, int hop, int sample_rate) {
  if (signal.empty()) throw DataError("stft: empty signal");
  if (static_cast<int>(signal.size()) < window_size) {
    throw DataError("stft: signal shorter than one window");
  }
  if (hop <= 0) throw std::invalid_argument("stft: hop must be positive");

  Spectrogram spec;
  spec.window_size = window_size;
  spec.hop = hop;
  spec.sample_rate = sample_rate;
  spec.freq_bins = window_size / 2 + 1;
  spec.time_bins = static_cast<std::int64_t>(
      (signal.size() + static_cast<std::size_t>(hop) - 1) / static_cast<std::size_t>(hop));
  spec.values.assign(static_cast<std::size_t>(spec.time_bins * spec.freq_bins), {0.0, 0.0});

  std::vector<double> window(static_cast<std::size_t>(window_size));
  for (int i = 0; i < window_size; ++i) {
    window[static_cast<std::size_t>(i)] = 0.5 * (1.0 - std::cos(2.0 * kPi * i / window_size));
  }

  RealFft fft(window_size);
  std::vector<double> frame(static_cast<std::size_t>(window_size));
  const std::int64_t len = static_cast<std::int64_t>(signal.size());
  for (std::int64_t t = 0; t < spec.time_bins; ++t) {
    const std::int64_t start = t * hop;
    for (int i = 0; i < window_size; ++i) {
      const std::int64_t idx = start + i;
      const double s = idx < len ? signal[static_cast<std::size_t>(idx)] : 0.0;
      frame[static_cast<std::size_t>(i)] = s * window[static_cast<std::size_t>(i)];
    }
    fft.forward(frame.data(), &spec.at(t, 0));
  }
  return spec;
}

Tensor mel_filterbank(int window_size, int n_mels, int sample_rate) {
  if (n_mels >= window_size / 2) {
    throw std::invalid_argument("mel_filterbank: n_mels must be below window_size/2");
  }
  const int n_bins = window_size / 2 + 1;
  const double nyquist = sample_rate / 2.0;
  const double bin_width = static_cast<double>(sample_rate) / window_size;

  std::vector<double> edges(static_cast<std::size_t>(n_mels) + 2);
  const double mel_max = mel_from_hz(nyquist);
  for (int i = 0; i < n_mels + 2; ++i) {
    edges[static_cast<std::size_t>(i)] = hz_from_mel(mel_max * i / (n_mels + 1));
  }

  Tensor fb({n_mels, n_bins});
  for (int m = 0; m < n_mels; ++m) {
    const double lo = edges[static_cast<std::size_t>(m)];
    const double peak = edges[static_cast<std::size_t>(m) + 1];
    const double hi = edges[static_cast<std::size_t>(m) + 2];
    for (int b = 0; b < n_bins; ++b) {
      const double center = b * bin_width;
      const double a = std::max(0.0, center - bin_width / 2.0);
      const double bb = std::min(nyquist, center + bin_width / 2.0);
      fb.at2(m, b) = triangle_integral(lo, peak, hi, a, bb) / bin_width;
    }
  }
  return fb;
}

Tensor log_mel(const Spectrogram& spec, const Tensor& filterbank) {
  if (filterbank.ndim() != 2 || filterbank.dim(1) != spec.freq_bins) {
    throw DataError("log_mel: filterbank width does not match spectrogram bins");
  }
  const std::int64_t T = spec.time_bins;
  const std::int64_t F = spec.freq_bins;
  const std::int64_t M = filterbank.dim(0);

  Eigen::MatrixXd power(T, F);
  for (std::int64_t t = 0; t < T; ++t) {
    for (std::int64_t f = 0; f < F; ++f) {
      power(t, f) = std::norm(spec.at(t, f));
    }
  }
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> fb(
      filterbank.ptr(), M, F);

  Tensor out({T, M});
  Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> mapped(
      out.ptr(), T, M);
  mapped = power * fb.transpose();
  for (double& v : out.data) v = std::log(v + kLogMelEpsilon);
  return out;
}

Tensor gcc_phat(const Spectrogram& ref, const Spectrogram& other, int n_lags) {
  if (ref.time_bins != other.time_bins || ref.freq_bins != other.freq_bins ||
      ref.window_size != other.window_size) {
    throw DataError("gcc_phat: spectrogram shapes do not match");
  }
  const int n = ref.window_size;
  if (n_lags <= 0 || n_lags > n) {
    throw std::invalid_argument("gcc_phat: lag count out of range");
  }

  RealFft fft(n);
  std::vector<std::complex<double>> cross(static_cast<std::size_t>(ref.freq_bins));
  std::vector<double> corr(static_cast<std::size_t>(n));

  Tensor out({ref.time_bins, n_lags});
  const int lag_lo = -n_lags / 2;
  for (std::int64_t t = 0; t < ref.time_bins; ++t) {
    for (std::int64_t f = 0; f < ref.freq_bins; ++f) {
      const std::complex<double> r = std::conj(ref.at(t, f)) * other.at(t, f);
      cross[static_cast<std::size_t>(f)] = r / std::max(std::abs(r), kPhatMagnitudeFloor);
    }
    fft.inverse(cross.data(), corr.data());
    for (int k = 0; k < n_lags; ++k) {
      const int lag = lag_lo + k;
      out.at2(t, k) = corr[static_cast<std::size_t>((lag + n) % n)];
    }
  }
  return out;
}

FeatureTensor assemble_features(const MultichannelClip& clip, const RigConfig& rig) {
  const int n_mics = rig.layout.n_microphones();
  if (clip.n_channels() != n_mics) {
    throw DataError("assemble_features: expected " + std::to_string(n_mics) + " channels, got " +
                    std::to_string(clip.n_channels()));
  }
  if (clip.n_samples() != kSegmentSamples) {
    throw DataError("assemble_features: expected a 2 s (96000 sample) segment, got " +
                    std::to_string(clip.n_samples()) + " samples");
  }

  const int ref = rig.layout.reference_index;
  std::vector<Spectrogram> specs(static_cast<std::size_t>(n_mics));
  for (int m = 0; m < n_mics; ++m) {
    specs[static_cast<std::size_t>(m)] =
        stft(clip.channels[static_cast<std::size_t>(m)], 512, 100, clip.sample_rate);
  }

  const Tensor fb = mel_filterbank(512, 64, clip.sample_rate);
  const Tensor mel = log_mel(specs[static_cast<std::size_t>(ref)], fb);
  const std::int64_t T = mel.dim(0);
  const std::int64_t F = mel.dim(1);

  FeatureTensor features;
  features.reference_mic = ref;
  features.values = Tensor({n_mics, T, F});
  features.gcc_mic_for_channel.assign(static_cast<std::size_t>(n_mics), -1);

  std::copy(mel.data.begin(), mel.data.end(), features.values.data.begin());

  int channel = 1;
  for (int m = 0; m < n_mics; ++m) {
    if (m == ref) continue;
    const Tensor gcc = gcc_phat(specs[static_cast<std::size_t>(ref)],
                                specs[static_cast<std::size_t>(m)], static_cast<int>(F));
    std::copy(gcc.data.begin(), gcc.data.end(),
              features.values.data.begin() + static_cast<std::ptrdiff_t>(channel * T * F));
    features.gcc_mic_for_channel[static_cast<std::size_t>(channel)] = m;
    ++channel;
  }
  return features;
}

}  // namespace asdl
