#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "asdl/audio.hpp"
#include "asdl/geometry.hpp"
#include "asdl/tensor.hpp"

namespace asdl {

enum class ExcitationKind { am_noise, harmonic };

std::string to_string(ExcitationKind kind);
ExcitationKind excitation_from_string(const std::string& name);

struct TrajectoryPoint {
  double t = 0.0;
  double azimuth_deg = 0.0;
  double distance_m = 3.5;
};

struct TimeInterval {
  double start = 0.0;
  double end = 0.0;
};

// Script for one synthetic scene: a single talker on a piecewise-linear
// horizontal trajectory, speaking inside the activity intervals.
struct SceneScript {
  double duration_s = 2.0;
  std::vector<TrajectoryPoint> trajectory;  // sorted by t, clamped outside
  std::vector<TimeInterval> activity;       // sorted, disjoint, within [0, duration]
  std::vector<TimeInterval> occlusion;      // visual bump suppressed inside
  ExcitationKind excitation = ExcitationKind::am_noise;
  std::uint64_t seed = 0;
  bool add_noise = true;    // diffuse sensor noise
  double snr_db = 30.0;     // nominal signal-to-noise at the array
  double face_offset_px = 0.0;  // face-box center minus mouth, pixels
  bool floor_reflection = false;  // optional first-order image source
};

void validate_script(const SceneScript& script);
double azimuth_at(const SceneScript& script, double t);
double distance_at(const SceneScript& script, double t);
bool is_active(const SceneScript& script, double t);  // half-open intervals

void save_script(const std::filesystem::path& path, const SceneScript& script);
SceneScript load_script(const std::filesystem::path& path);

// Per video frame, per camera ground truth. The x fields are present only
// when the frame is active and the talker projects inside that camera's
// image; ingested data may carry the face-box center without mouth
// coordinates, hence the separate presence flags.
struct FrameLabel {
  int frame_index = 0;
  int camera_id = 0;
  bool active = false;
  bool has_center = false;     // x_center_norm present (training target)
  bool has_mouth = false;      // mouth_x_px present (evaluation target)
  double x_center_norm = 0.0;  // face-box-center proxy, [0, 1]
  double mouth_x_px = 0.0;     // evaluation target, pixels
};

void write_labels(const std::filesystem::path& path, const std::vector<FrameLabel>& labels);
std::vector<FrameLabel> read_labels(const std::filesystem::path& path);

constexpr int kLabelFps = 30;
constexpr int kAudioRate = 48000;

// Deterministic excitation signal, RMS-normalized to 0.1 full scale.
// am_noise: 200 Hz - 8 kHz noise, amplitude-modulated at 4 Hz.
// harmonic: 150 Hz pulse train with a 1/h harmonic decay.
std::vector<double> make_excitation(ExcitationKind kind, double duration_s, std::uint64_t seed);

struct RenderedScene {
  MultichannelClip clip;
  std::vector<FrameLabel> labels;  // frame-major, camera-minor
  Tensor visual;                   // cameras x frames x columns
  int n_frames = 0;
};

// Renders the 16 microphone channels with exact fractional propagation
// delays (64-tap windowed sinc) and 1/distance attenuation, plus the frame
// labels and the per-camera visual column profiles.
RenderedScene render_scene(const RigConfig& rig, const SceneScript& script,
                           int visual_columns = 64);

struct SceneEntry {
  std::string scene_id;
  std::string split;  // "train" or "test"
  std::string audio_path;
  std::string labels_path;
  std::string visual_path;
  std::string script_path;
  int n_frames = 0;
  double duration_s = 0.0;
};

struct CorpusManifest {
  std::vector<SceneEntry> scenes;

  std::vector<const SceneEntry*> split(const std::string& name) const;
};

void save_manifest(const std::filesystem::path& path, const CorpusManifest& manifest);
CorpusManifest load_manifest(const std::filesystem::path& path);

struct CorpusOptions {
  int n_scenes = 12;
  std::uint64_t seed = 0;
  double duration_s = 2.0;
  double azimuth_abs_min_deg = 0.0;
  double azimuth_abs_max_deg = 20.0;
  double distance_min_m = 3.0;
  double distance_max_m = 4.0;
  double moving_fraction = 0.3;
  double occlusion_fraction = 0.0;
  double snr_db = 30.0;
  int visual_columns = 64;
};

// Writes per-scene WAV + labels + visual blobs + scripts under out_dir and
// returns the manifest (also saved as out_dir/manifest.tsv). Roughly one in
// six scenes is held out as the test split, seeded and deterministic.
CorpusManifest generate_corpus(const RigConfig& rig, const CorpusOptions& options,
                               const std::filesystem::path& out_dir);

CorpusManifest generate_corpus(const RigConfig& rig, int n_scenes, std::uint64_t seed,
                               const std::filesystem::path& out_dir);

}  // namespace asdl
