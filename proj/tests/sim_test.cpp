#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "asdl/errors.hpp"
#include "asdl/features.hpp"
#include "asdl/hash.hpp"
#include "asdl/sim.hpp"

#include "oracles.hpp"

using namespace asdl;
namespace fs = std::filesystem;

namespace {

double rms(const std::vector<double>& v, std::size_t begin, std::size_t end) {
  double acc = 0.0;
  for (std::size_t i = begin; i < end && i < v.size(); ++i) acc += v[i] * v[i];
  return std::sqrt(acc / static_cast<double>(end - begin));
}

// Integer cross-correlation peak refined with a parabolic fit.
double subsample_peak_lag(const std::vector<double>& a, const std::vector<double>& b,
                          int max_lag) {
  const int n = static_cast<int>(a.size());
  auto corr_at = [&](int lag) {
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
      const int j = i + lag;
      if (j >= 0 && j < n) acc += a[static_cast<std::size_t>(i)] * b[static_cast<std::size_t>(j)];
    }
    return acc;
  };
  int best = 0;
  double best_v = -1e300;
  for (int lag = -max_lag; lag <= max_lag; ++lag) {
    const double v = corr_at(lag);
    if (v > best_v) {
      best_v = v;
      best = lag;
    }
  }
  const double ym = corr_at(best - 1);
  const double y0 = best_v;
  const double yp = corr_at(best + 1);
  const double denom = ym - 2.0 * y0 + yp;
  const double frac = denom != 0.0 ? 0.5 * (ym - yp) / denom : 0.0;
  return best + frac;
}

SceneScript static_script(double azimuth, double distance, std::uint64_t seed) {
  SceneScript script;
  script.duration_s = 2.0;
  script.seed = seed;
  script.trajectory = {{0.0, azimuth, distance}};
  script.activity = {{0.0, 2.0}};
  return script;
}

}  // namespace

TEST_SUITE_BEGIN("sim");

TEST_CASE("excitations are deterministic with 0.1 RMS") {
  for (ExcitationKind kind : {ExcitationKind::am_noise, ExcitationKind::harmonic}) {
    const auto a = make_excitation(kind, 2.0, 42);
    const auto b = make_excitation(kind, 2.0, 42);
    REQUIRE(a.size() == 96000);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
    CHECK(rms(a, 0, a.size()) == doctest::Approx(0.1).epsilon(1e-6));
  }
  const auto c = make_excitation(ExcitationKind::am_noise, 2.0, 43);
  const auto a = make_excitation(ExcitationKind::am_noise, 2.0, 42);
  CHECK(a != c);
}

TEST_CASE("am_noise keeps sub-100 Hz energy at least 20 dB under the passband") {
  const auto x = make_excitation(ExcitationKind::am_noise, 2.0, 7);
  const Spectrogram spec = stft(x);
  const double bin_hz = 48000.0 / 512.0;
  double low = 0.0, pass = 0.0;
  for (std::int64_t t = 0; t < spec.time_bins; ++t) {
    for (std::int64_t f = 0; f < spec.freq_bins; ++f) {
      const double hz = static_cast<double>(f) * bin_hz;
      const double p = std::norm(spec.at(t, f));
      if (hz < 100.0) low += p;
      if (hz >= 200.0 && hz <= 8000.0) pass += p;
    }
  }
  CHECK(10.0 * std::log10(pass / low) >= 20.0);
}

TEST_CASE("script validation enforces ordering and bounds") {
  SceneScript script = static_script(0.0, 3.5, 1);
  script.activity = {{0.5, 1.5}, {1.0, 1.8}};  // overlap
  CHECK_THROWS_AS(validate_script(script), ConfigError);

  script = static_script(0.0, 3.5, 1);
  script.activity = {{-0.1, 0.5}};
  CHECK_THROWS_AS(validate_script(script), ConfigError);

  script = static_script(0.0, 3.5, 1);
  script.activity = {{0.5, 2.5}};
  CHECK_THROWS_AS(validate_script(script), ConfigError);

  script = static_script(0.0, 3.5, 1);
  script.trajectory = {{1.0, 0.0, 3.5}, {0.5, 5.0, 3.5}};
  CHECK_THROWS_AS(validate_script(script), ConfigError);

  script = static_script(0.0, -1.0, 1);
  CHECK_THROWS_AS(validate_script(script), ConfigError);
}

TEST_CASE("scripts round-trip through their key-value file") {
  SceneScript script;
  script.duration_s = 4.0;
  script.seed = 123456789ULL;
  script.excitation = ExcitationKind::harmonic;
  script.trajectory = {{0.0, -12.5, 3.25}, {4.0, 14.0, 3.75}};
  script.activity = {{0.25, 1.5}, {2.0, 3.75}};
  script.occlusion = {{1.0, 1.25}};
  script.snr_db = 25.0;
  script.face_offset_px = 4.0;
  const auto path = fs::temp_directory_path() / "asdl_script.kv";
  save_script(path, script);
  const SceneScript back = load_script(path);
  CHECK(back.duration_s == script.duration_s);
  CHECK(back.seed == script.seed);
  CHECK(back.excitation == script.excitation);
  REQUIRE(back.trajectory.size() == 2);
  CHECK(back.trajectory[1].azimuth_deg == script.trajectory[1].azimuth_deg);
  REQUIRE(back.activity.size() == 2);
  CHECK(back.activity[1].end == script.activity[1].end);
  REQUIRE(back.occlusion.size() == 1);
  CHECK(back.snr_db == 25.0);
  CHECK(back.face_offset_px == 4.0);
  fs::remove(path);
}

TEST_CASE("activity interval [0.5, 1.5) labels exactly frames 15..44 active") {
  SceneScript script = static_script(0.0, 3.5, 5);
  script.activity = {{0.5, 1.5}};
  const RenderedScene scene = render_scene(build_default_rig(), script);
  CHECK(scene.n_frames == 60);
  for (const auto& label : scene.labels) {
    const bool expected = label.frame_index >= 15 && label.frame_index <= 44;
    CHECK(label.active == expected);
  }
}

TEST_CASE("a broadside source labels the central camera at mid-frame") {
  const RigConfig rig = build_default_rig();
  const RenderedScene scene = render_scene(rig, static_script(0.0, 3.5, 2));
  int checked = 0;
  for (const auto& label : scene.labels) {
    if (label.camera_id != 5) continue;
    CHECK(label.active);
    REQUIRE(label.has_center);
    CHECK(label.x_center_norm == doctest::Approx(0.5).epsilon(1e-9));
    ++checked;
  }
  CHECK(checked == 60);
}

TEST_CASE("rendered channel delays match the geometry within half a sample") {
  const RigConfig rig = build_default_rig();
  SceneScript script = static_script(20.0, 3.5, 3);
  script.add_noise = false;
  const RenderedScene scene = render_scene(rig, script);

  const int ref = rig.layout.reference_index;
  for (int mic : {1, 3, 7, 8, 12, 15}) {
    const double measured =
        subsample_peak_lag(scene.clip.channels[static_cast<std::size_t>(ref)],
                           scene.clip.channels[static_cast<std::size_t>(mic)], 40);
    const double expected = expected_tdoa(rig.layout, mic, 20.0, 3.5) * 48000.0;
    CHECK(std::abs(measured - expected) <= 0.5);
  }
}

TEST_CASE("active frames carry audio energy on the reference channel") {
  const RigConfig rig = build_default_rig();
  SceneScript script = static_script(-10.0, 3.0, 11);
  script.activity = {{0.4, 1.2}};
  const RenderedScene scene = render_scene(rig, script);
  const auto& ref = scene.clip.channels[static_cast<std::size_t>(rig.layout.reference_index)];
  for (int f = 0; f < scene.n_frames; ++f) {
    const bool active = f >= 12 && f < 36;
    if (!active) continue;
    const std::size_t begin = static_cast<std::size_t>(f) * 1600;
    CHECK(rms(ref, begin, begin + 1600) > 1e-4);
  }
}

TEST_CASE("default diffuse noise sits near the 30 dB design point") {
  const RigConfig rig = build_default_rig();
  SceneScript script = static_script(0.0, 3.5, 23);
  script.activity.clear();  // silence: only the noise floor remains
  const RenderedScene scene = render_scene(rig, script);
  const double expected_std = 0.1 / 3.5 * std::pow(10.0, -30.0 / 20.0);
  const double measured = rms(scene.clip.channels[0], 0, 96000);
  CHECK(measured == doctest::Approx(expected_std).epsilon(0.05));
}

TEST_CASE("trajectories outside every camera's view are rejected") {
  const RigConfig rig = build_default_rig();
  CHECK_THROWS_AS(render_scene(rig, static_script(60.0, 3.5, 1)), DataError);
}

TEST_CASE("occlusion intervals suppress the visual bump") {
  const RigConfig rig = build_default_rig();
  SceneScript script = static_script(5.0, 3.5, 17);
  script.occlusion = {{0.5, 1.0}};
  const RenderedScene scene = render_scene(rig, script);
  // Peak column value per frame for the central camera.
  auto peak = [&](int frame) {
    double best = -1e300;
    for (std::int64_t c = 0; c < scene.visual.dim(2); ++c) {
      best = std::max(best, scene.visual.at3(5, frame, c));
    }
    return best;
  };
  CHECK(peak(5) > 0.5);    // visible
  CHECK(peak(20) < 0.25);  // occluded (t = 0.667 s)
  CHECK(peak(40) > 0.5);   // visible again
}

TEST_CASE("generate_corpus writes a deterministic 10/2 split for 12 scenes") {
  const RigConfig rig = build_default_rig();
  const fs::path dir_a = fs::temp_directory_path() / "asdl_corpus_a";
  const fs::path dir_b = fs::temp_directory_path() / "asdl_corpus_b";
  fs::remove_all(dir_a);
  fs::remove_all(dir_b);

  const CorpusManifest a = generate_corpus(rig, 12, 7, dir_a);
  const CorpusManifest b = generate_corpus(rig, 12, 7, dir_b);

  REQUIRE(a.scenes.size() == 12);
  CHECK(a.split("train").size() == 10);
  CHECK(a.split("test").size() == 2);
  for (const auto& scene : a.scenes) {
    CHECK(fs::exists(dir_a / scene.audio_path));
    CHECK(fs::exists(dir_a / scene.labels_path));
    CHECK(fs::exists(dir_a / scene.visual_path));
    CHECK(fs::exists(dir_a / scene.script_path));
    CHECK(scene.n_frames == 60);
  }

  CHECK(hash_file(dir_a / "manifest.tsv") == hash_file(dir_b / "manifest.tsv"));
  for (const auto& scene : a.scenes) {
    CHECK(hash_file(dir_a / scene.audio_path) == hash_file(dir_b / scene.audio_path));
    CHECK(hash_file(dir_a / scene.labels_path) == hash_file(dir_b / scene.labels_path));
  }

  // Labels survive the CSV round trip losslessly.
  const auto labels = read_labels(dir_a / a.scenes[0].labels_path);
  const fs::path copy = fs::temp_directory_path() / "asdl_labels_copy.csv";
  write_labels(copy, labels);
  CHECK(hash_file(copy) == hash_file(dir_a / a.scenes[0].labels_path));

  fs::remove_all(dir_a);
  fs::remove_all(dir_b);
  fs::remove(copy);
}

TEST_CASE("generate_corpus rejects invalid scene counts") {
  const RigConfig rig = build_default_rig();
  CHECK_THROWS_AS(generate_corpus(rig, 0, 7, fs::temp_directory_path() / "asdl_x"), ConfigError);
}

TEST_SUITE_END();
