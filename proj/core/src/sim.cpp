#include "asdl/sim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "asdl/errors.hpp"
#include "asdl/keyvalue.hpp"
#include "asdl/rng.hpp"
#include "fft.hpp"

namespace asdl {

namespace {

constexpr double kPi = 3.141592653589793238462643383279502884;
constexpr double kExcitationRms = 0.1;
constexpr double kGateRampSeconds = 0.005;
constexpr int kSincTaps = 64;
constexpr double kVisualBumpSigma = 1.5;   // columns
constexpr double kVisualNoiseLevel = 0.01;
constexpr double kFovHalfAngleDeg = 45.0;

double sinc(double x) {
  if (std::abs(x) < 1e-12) return 1.0;
  return std::sin(kPi * x) / (kPi * x);
}

// Raised-cosine activity gate, ramps contained inside the interval.
double gate_value(const SceneScript& script, double t) {
  for (const auto& iv : script.activity) {
    if (t < iv.start || t >= iv.end) continue;
    const double ramp = std::min(kGateRampSeconds, (iv.end - iv.start) / 4.0);
    if (t < iv.start + ramp) {
      const double u = (t - iv.start) / ramp;
      return 0.5 * (1.0 - std::cos(kPi * u));
    }
    if (t > iv.end - ramp) {
      const double u = (iv.end - t) / ramp;
      return 0.5 * (1.0 - std::cos(kPi * u));
    }
    return 1.0;
  }
  return 0.0;
}

// 64-tap windowed-sinc read of `signal` at fractional position `pos`.
double fractional_sample(const std::vector<double>& signal, double pos) {
  const int center = static_cast<int>(std::floor(pos));
  const int lo = center - kSincTaps / 2 + 1;
  const int hi = center + kSincTaps / 2;
  const int n = static_cast<int>(signal.size());
  double acc = 0.0;
  for (int k = std::max(lo, 0); k <= std::min(hi, n - 1); ++k) {
    const double d = pos - k;
    const double u = d / (kSincTaps / 2);
    const double window = 0.5 * (1.0 + std::cos(kPi * u));
    acc += signal[static_cast<std::size_t>(k)] * sinc(d) * window;
  }
  return acc;
}

std::string format_intervals(const std::vector<TimeInterval>& intervals) {
  std::ostringstream out;
  for (std::size_t i = 0; i < intervals.size(); ++i) {
    if (i) out << ", ";
    out << format_double(intervals[i].start) << "-" << format_double(intervals[i].end);
  }
  return out.str();
}

std::vector<TimeInterval> parse_intervals(const std::string& text, const std::string& what) {
  std::vector<TimeInterval> out;
  std::istringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    std::string t = item;
    t.erase(std::remove_if(t.begin(), t.end(), [](unsigned char c) { return std::isspace(c); }),
            t.end());
    if (t.empty()) continue;
    const std::size_t dash = t.find('-', 1);  // allow a leading minus sign
    if (dash == std::string::npos) {
      throw ConfigError(what + ": expected 'start-end', got '" + item + "'");
    }
    TimeInterval iv;
    try {
      iv.start = std::stod(t.substr(0, dash));
      iv.end = std::stod(t.substr(dash + 1));
    } catch (const std::exception&) {
      throw ConfigError(what + ": cannot parse interval '" + item + "'");
    }
    out.push_back(iv);
  }
  return out;
}

std::string format_trajectory(const std::vector<TrajectoryPoint>& pts) {
  std::ostringstream out;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (i) out << ", ";
    out << format_double(pts[i].t) << ":" << format_double(pts[i].azimuth_deg) << ":"
        << format_double(pts[i].distance_m);
  }
  return out.str();
}

std::vector<TrajectoryPoint> parse_trajectory(const std::string& text) {
  std::vector<TrajectoryPoint> out;
  std::istringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    std::string t = item;
    t.erase(std::remove_if(t.begin(), t.end(), [](unsigned char c) { return std::isspace(c); }),
            t.end());
    if (t.empty()) continue;
    const std::size_t c1 = t.find(':');
    const std::size_t c2 = t.find(':', c1 == std::string::npos ? c1 : c1 + 1);
    if (c1 == std::string::npos || c2 == std::string::npos) {
      throw ConfigError("trajectory: expected 't:azimuth:distance', got '" + item + "'");
    }
    TrajectoryPoint p;
    try {
      p.t = std::stod(t.substr(0, c1));
      p.azimuth_deg = std::stod(t.substr(c1 + 1, c2 - c1 - 1));
      p.distance_m = std::stod(t.substr(c2 + 1));
    } catch (const std::exception&) {
      throw ConfigError("trajectory: cannot parse waypoint '" + item + "'");
    }
    out.push_back(p);
  }
  return out;
}

}  // namespace

std::string to_string(ExcitationKind kind) {
  return kind == ExcitationKind::am_noise ? "am_noise" : "harmonic";
}

ExcitationKind excitation_from_string(const std::string& name) {
  if (name == "am_noise") return ExcitationKind::am_noise;
  if (name == "harmonic") return ExcitationKind::harmonic;
  throw ConfigError("unknown excitation kind '" + name + "'");
}

void validate_script(const SceneScript& script) {
  if (script.duration_s <= 0.0) throw ConfigError("scene duration must be positive");
  if (script.trajectory.empty()) throw ConfigError("scene trajectory must have a waypoint");
  for (std::size_t i = 0; i < script.trajectory.size(); ++i) {
    if (script.trajectory[i].distance_m <= 0.0) {
      throw ConfigError("trajectory distances must be positive");
    }
    if (i > 0 && script.trajectory[i].t < script.trajectory[i - 1].t) {
      throw ConfigError("trajectory waypoints must be sorted by time");
    }
  }
  auto check_intervals = [&](const std::vector<TimeInterval>& ivs, const char* what) {
    for (std::size_t i = 0; i < ivs.size(); ++i) {
      if (ivs[i].end <= ivs[i].start) {
        throw ConfigError(std::string(what) + " interval must have positive length");
      }
      if (ivs[i].start < 0.0 || ivs[i].end > script.duration_s) {
        throw ConfigError(std::string(what) + " interval outside [0, duration]");
      }
      if (i > 0 && ivs[i].start < ivs[i - 1].end) {
        throw ConfigError(std::string(what) + " intervals must be sorted and disjoint");
      }
    }
  };
  check_intervals(script.activity, "activity");
  check_intervals(script.occlusion, "occlusion");
}

double azimuth_at(const SceneScript& script, double t) {
  const auto& pts = script.trajectory;
  if (t <= pts.front().t) return pts.front().azimuth_deg;
  if (t >= pts.back().t) return pts.back().azimuth_deg;
  for (std::size_t i = 1; i < pts.size(); ++i) {
    if (t <= pts[i].t) {
      const double span = pts[i].t - pts[i - 1].t;
      if (span <= 0.0) return pts[i].azimuth_deg;
      const double u = (t - pts[i - 1].t) / span;
      return pts[i - 1].azimuth_deg + u * (pts[i].azimuth_deg - pts[i - 1].azimuth_deg);
    }
  }
  return pts.back().azimuth_deg;
}

double distance_at(const SceneScript& script, double t) {
  const auto& pts = script.trajectory;
  if (t <= pts.front().t) return pts.front().distance_m;
  if (t >= pts.back().t) return pts.back().distance_m;
  for (std::size_t i = 1; i < pts.size(); ++i) {
    if (t <= pts[i].t) {
      const double span = pts[i].t - pts[i - 1].t;
      if (span <= 0.0) return pts[i].distance_m;
      const double u = (t - pts[i - 1].t) / span;
      return pts[i - 1].distance_m + u * (pts[i].distance_m - pts[i - 1].distance_m);
    }
  }
  return pts.back().distance_m;
}

bool is_active(const SceneScript& script, double t) {
  for (const auto& iv : script.activity) {
    if (t >= iv.start && t < iv.end) return true;
  }
  return false;
}

void save_script(const std::filesystem::path& path, const SceneScript& script) {
  KeyValueFile file;
  auto& sec = file.add_section("scene");
  sec.set_double("duration_s", script.duration_s);
  sec.set("excitation", to_string(script.excitation));
  sec.set_uint64("seed", script.seed);
  sec.set("trajectory", format_trajectory(script.trajectory));
  sec.set("activity", format_intervals(script.activity));
  sec.set("occlusion", format_intervals(script.occlusion));
  sec.set_bool("add_noise", script.add_noise);
  sec.set_double("snr_db", script.snr_db);
  sec.set_double("face_offset_px", script.face_offset_px);
  sec.set_bool("floor_reflection", script.floor_reflection);
  file.save(path);
}

SceneScript load_script(const std::filesystem::path& path) {
  const KeyValueFile file = KeyValueFile::load(path);
  const auto& sec = file.section("scene");
  sec.reject_unknown_keys({"duration_s", "excitation", "seed", "trajectory", "activity",
                           "occlusion", "add_noise", "snr_db", "face_offset_px",
                           "floor_reflection"});
  SceneScript script;
  script.duration_s = sec.get_double("duration_s");
  script.excitation = excitation_from_string(sec.get_string("excitation"));
  script.seed = sec.get_uint64("seed");
  script.trajectory = parse_trajectory(sec.get_string("trajectory"));
  script.activity = parse_intervals(sec.get_string("activity", ""), "activity");
  script.occlusion = parse_intervals(sec.get_string("occlusion", ""), "occlusion");
  script.add_noise = sec.get_bool("add_noise", true);
  script.snr_db = sec.get_double("snr_db", 30.0);
  script.face_offset_px = sec.get_double("face_offset_px", 0.0);
  script.floor_reflection = sec.get_bool("floor_reflection", false);
  validate_script(script);
  return script;
}

void write_labels(const std::filesystem::path& path, const std::vector<FrameLabel>& labels) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write label file: " + path.string());
  out << "frame_index,camera_id,active,x_center_norm,mouth_x_px\n";
  for (const auto& l : labels) {
    out << l.frame_index << "," << l.camera_id << "," << (l.active ? 1 : 0) << ",";
    if (l.has_center) out << format_double(l.x_center_norm);
    out << ",";
    if (l.has_mouth) out << format_double(l.mouth_x_px);
    out << "\n";
  }
  if (!out) throw DataError("short write on label file: " + path.string());
}

std::vector<FrameLabel> read_labels(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open label file: " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "frame_index,camera_id,active,x_center_norm,mouth_x_px") {
    throw DataError("label file has an unexpected header: " + path.string());
  }
  std::vector<FrameLabel> labels;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::istringstream row(line);
    std::string field;
    while (std::getline(row, field, ',')) fields.push_back(field);
    while (fields.size() < 5) fields.emplace_back();
    if (fields.size() != 5) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": malformed label row");
    }
    try {
      FrameLabel l;
      l.frame_index = std::stoi(fields[0]);
      l.camera_id = std::stoi(fields[1]);
      l.active = std::stoi(fields[2]) != 0;
      l.has_center = !fields[3].empty();
      if (l.has_center) l.x_center_norm = std::stod(fields[3]);
      l.has_mouth = !fields[4].empty();
      if (l.has_mouth) l.mouth_x_px = std::stod(fields[4]);
      labels.push_back(l);
    } catch (const std::exception&) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": malformed label row");
    }
  }
  return labels;
}

std::vector<double> make_excitation(ExcitationKind kind, double duration_s, std::uint64_t seed) {
  if (duration_s <= 0.0) throw std::invalid_argument("excitation duration must be positive");
  const std::int64_t n = std::llround(duration_s * kAudioRate);
  std::vector<double> signal(static_cast<std::size_t>(n));

  if (kind == ExcitationKind::am_noise) {
    Rng rng(derive_seed(seed, "excitation"));
    for (auto& s : signal) s = rng.normal();

    // Brick-wall 200 Hz - 8 kHz bandpass via a zero-padded FFT.
    std::int64_t padded = 1;
    while (padded < n) padded <<= 1;
    std::vector<double> buf(static_cast<std::size_t>(padded), 0.0);
    std::copy(signal.begin(), signal.end(), buf.begin());
    RealFft fft(static_cast<int>(padded));
    std::vector<std::complex<double>> spec(static_cast<std::size_t>(padded / 2 + 1));
    fft.forward(buf.data(), spec.data());
    const double bin_hz = static_cast<double>(kAudioRate) / static_cast<double>(padded);
    for (std::size_t k = 0; k < spec.size(); ++k) {
      const double f = k * bin_hz;
      if (f < 200.0 || f > 8000.0) spec[k] = 0.0;
    }
    fft.inverse(spec.data(), buf.data());

    for (std::int64_t i = 0; i < n; ++i) {
      const double t = static_cast<double>(i) / kAudioRate;
      const double am = 0.55 + 0.45 * std::sin(2.0 * kPi * 4.0 * t);
      signal[static_cast<std::size_t>(i)] = buf[static_cast<std::size_t>(i)] * am;
    }
  } else {
    const double f0 = 150.0;
    const int harmonics = static_cast<int>(8000.0 / f0);
    for (std::int64_t i = 0; i < n; ++i) {
      const double t = static_cast<double>(i) / kAudioRate;
      double v = 0.0;
      for (int h = 1; h <= harmonics; ++h) {
        v += std::sin(2.0 * kPi * f0 * h * t) / h;
      }
      signal[static_cast<std::size_t>(i)] = v;
    }
  }

  double sum_sq = 0.0;
  for (double s : signal) sum_sq += s * s;
  const double rms = std::sqrt(sum_sq / static_cast<double>(n));
  const double scale = rms > 0.0 ? kExcitationRms / rms : 0.0;
  for (auto& s : signal) s *= scale;
  return signal;
}

RenderedScene render_scene(const RigConfig& rig, const SceneScript& script, int visual_columns) {
  validate_script(script);
  if (visual_columns < 4) throw std::invalid_argument("visual_columns must be at least 4");

  const int n_frames = static_cast<int>(std::llround(script.duration_s * kLabelFps));
  const std::int64_t n_samples = std::llround(script.duration_s * kAudioRate);
  const int n_mics = rig.layout.n_microphones();
  const int n_cams = static_cast<int>(rig.cameras.size());

  // The talker must stay inside at least one camera's field of view.
  for (int f = 0; f < n_frames; ++f) {
    const double t = static_cast<double>(f) / kLabelFps;
    const Vec3 src = source_position(azimuth_at(script, t), distance_at(script, t));
    bool visible = false;
    for (const auto& cam : rig.cameras) {
      if (std::abs(azimuth_from(cam.position_x_m, src)) < kFovHalfAngleDeg) {
        visible = true;
        break;
      }
    }
    if (!visible) {
      throw DataError("trajectory leaves every camera's field of view at t=" +
                      format_double(t) + " s");
    }
  }

  // Source signal, gated at emission time.
  std::vector<double> emitted = make_excitation(script.excitation, script.duration_s, script.seed);
  for (std::int64_t i = 0; i < n_samples; ++i) {
    emitted[static_cast<std::size_t>(i)] *= gate_value(script, static_cast<double>(i) / kAudioRate);
  }

  RenderedScene out;
  out.n_frames = n_frames;
  out.clip.sample_rate = kAudioRate;
  out.clip.channels.assign(static_cast<std::size_t>(n_mics),
                           std::vector<double>(static_cast<std::size_t>(n_samples), 0.0));

  const double c = rig.layout.speed_of_sound;
  double mean_distance = 0.0;
  for (int f = 0; f < n_frames; ++f) {
    mean_distance += distance_at(script, static_cast<double>(f) / kLabelFps);
  }
  mean_distance /= std::max(1, n_frames);

  for (int m = 0; m < n_mics; ++m) {
    auto& channel = out.clip.channels[static_cast<std::size_t>(m)];
    const Vec3& mic = rig.layout.positions[static_cast<std::size_t>(m)];
    const Vec3 mic_image{mic.x, -2.0 - mic.y, mic.z};  // floor mirror 1 m below the rig
    for (std::int64_t i = 0; i < n_samples; ++i) {
      const double t = static_cast<double>(i) / kAudioRate;
      const Vec3 src = source_position(azimuth_at(script, t), distance_at(script, t));
      const double dist = distance(src, mic);
      const double pos = static_cast<double>(i) - dist / c * kAudioRate;
      double v = fractional_sample(emitted, pos) / dist;
      if (script.floor_reflection) {
        const double rdist = distance(src, mic_image);
        const double rpos = static_cast<double>(i) - rdist / c * kAudioRate;
        v += 0.5 * fractional_sample(emitted, rpos) / rdist;
      }
      channel[static_cast<std::size_t>(i)] = v;
    }
  }

  if (script.add_noise) {
    // Diffuse noise scaled against the nominal received level.
    const double signal_rms = kExcitationRms / mean_distance;
    const double noise_std = signal_rms * std::pow(10.0, -script.snr_db / 20.0);
    for (int m = 0; m < n_mics; ++m) {
      Rng rng(derive_seed(script.seed, "noise_" + std::to_string(m)));
      for (auto& s : out.clip.channels[static_cast<std::size_t>(m)]) {
        s += noise_std * rng.normal();
      }
    }
  }

  // Labels and visual column profiles.
  out.visual = Tensor({n_cams, n_frames, visual_columns});
  Rng visual_rng(derive_seed(script.seed, "visual"));
  out.labels.reserve(static_cast<std::size_t>(n_frames) * static_cast<std::size_t>(n_cams));
  for (int f = 0; f < n_frames; ++f) {
    const double t = static_cast<double>(f) / kLabelFps;
    const bool active = is_active(script, t);
    const Vec3 src = source_position(azimuth_at(script, t), distance_at(script, t));
    bool occluded = false;
    for (const auto& iv : script.occlusion) {
      if (t >= iv.start && t < iv.end) occluded = true;
    }
    for (int cam_i = 0; cam_i < n_cams; ++cam_i) {
      const CameraModel& cam = rig.cameras[static_cast<std::size_t>(cam_i)];
      const double az = azimuth_from(cam.position_x_m, src);
      bool in_image = false;
      double mouth_px = 0.0;
      double center_px = 0.0;
      if (std::abs(az) < kFovHalfAngleDeg) {
        mouth_px = project_azimuth_to_pixel(cam, az);
        center_px = mouth_px + script.face_offset_px;
        in_image = mouth_px >= 0.0 && mouth_px < cam.image_width_px && center_px >= 0.0 &&
                   center_px < cam.image_width_px;
      }

      FrameLabel label;
      label.frame_index = f;
      label.camera_id = cam.camera_id;
      label.active = active;
      if (active && in_image) {
        label.has_center = true;
        label.has_mouth = true;
        label.x_center_norm = center_px / cam.image_width_px;
        label.mouth_x_px = mouth_px;
      }
      out.labels.push_back(label);

      for (int col = 0; col < visual_columns; ++col) {
        double v = kVisualNoiseLevel * visual_rng.normal();
        if (in_image && !occluded) {
          const double center_col = center_px / cam.image_width_px * (visual_columns - 1);
          const double d = (col - center_col) / kVisualBumpSigma;
          v += std::exp(-0.5 * d * d);
        }
        out.visual.at3(cam_i, f, col) = v;
      }
    }
  }
  return out;
}

std::vector<const SceneEntry*> CorpusManifest::split(const std::string& name) const {
  std::vector<const SceneEntry*> out;
  for (const auto& s : scenes) {
    if (s.split == name) out.push_back(&s);
  }
  return out;
}

void save_manifest(const std::filesystem::path& path, const CorpusManifest& manifest) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write manifest: " + path.string());
  out << "scene_id\tsplit\taudio\tlabels\tvisual\tscript\tn_frames\tduration_s\n";
  for (const auto& s : manifest.scenes) {
    out << s.scene_id << "\t" << s.split << "\t" << s.audio_path << "\t" << s.labels_path << "\t"
        << s.visual_path << "\t" << s.script_path << "\t" << s.n_frames << "\t"
        << format_double(s.duration_s) << "\n";
  }
  if (!out) throw DataError("short write on manifest: " + path.string());
}

CorpusManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest: " + path.string());
  std::string line;
  if (!std::getline(in, line) ||
      line != "scene_id\tsplit\taudio\tlabels\tvisual\tscript\tn_frames\tduration_s") {
    throw DataError("manifest has an unexpected header: " + path.string());
  }
  CorpusManifest manifest;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::istringstream row(line);
    std::string field;
    while (std::getline(row, field, '\t')) fields.push_back(field);
    if (fields.size() != 8) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": malformed manifest row");
    }
    SceneEntry s;
    s.scene_id = fields[0];
    s.split = fields[1];
    s.audio_path = fields[2];
    s.labels_path = fields[3];
    s.visual_path = fields[4];
    s.script_path = fields[5];
    try {
      s.n_frames = std::stoi(fields[6]);
      s.duration_s = std::stod(fields[7]);
    } catch (const std::exception&) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": malformed manifest row");
    }
    manifest.scenes.push_back(std::move(s));
  }
  return manifest;
}

CorpusManifest generate_corpus(const RigConfig& rig, const CorpusOptions& options,
                               const std::filesystem::path& out_dir) {
  if (options.n_scenes < 1) throw ConfigError("corpus needs at least one scene");
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec || !std::filesystem::is_directory(out_dir)) {
    throw DataError("cannot create corpus directory: " + out_dir.string());
  }

  // Seeded split assignment, roughly one test scene per six.
  const int n_test = std::max(1, static_cast<int>(std::llround(options.n_scenes / 6.0)));
  std::vector<int> order(static_cast<std::size_t>(options.n_scenes));
  for (int i = 0; i < options.n_scenes; ++i) order[static_cast<std::size_t>(i)] = i;
  Rng split_rng(derive_seed(options.seed, "split"));
  split_rng.shuffle(order);
  std::vector<bool> is_test(static_cast<std::size_t>(options.n_scenes), false);
  for (int i = 0; i < n_test; ++i) {
    is_test[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] = true;
  }

  CorpusManifest manifest;
  for (int i = 0; i < options.n_scenes; ++i) {
    Rng rng(derive_seed(options.seed, static_cast<std::uint64_t>(i)));

    SceneScript script;
    script.duration_s = options.duration_s;
    script.seed = derive_seed(options.seed, "scene_signal_" + std::to_string(i));
    script.excitation = rng.uniform() < 0.5 ? ExcitationKind::am_noise : ExcitationKind::harmonic;
    script.snr_db = options.snr_db;

    const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
    const double az0 =
        sign * rng.uniform(options.azimuth_abs_min_deg, options.azimuth_abs_max_deg);
    const double dist = rng.uniform(options.distance_min_m, options.distance_max_m);
    if (rng.uniform() < options.moving_fraction) {
      const double az1 = sign * rng.uniform(options.azimuth_abs_min_deg, options.azimuth_abs_max_deg);
      script.trajectory = {{0.0, az0, dist}, {options.duration_s, az1, dist}};
    } else {
      script.trajectory = {{0.0, az0, dist}};
    }

    const double start = rng.uniform(0.05, 0.2) * options.duration_s;
    const double end = rng.uniform(0.8, 0.95) * options.duration_s;
    script.activity = {{start, end}};

    if (rng.uniform() < options.occlusion_fraction) {
      const double occ_start = rng.uniform(0.3, 0.5) * options.duration_s;
      const double occ_end = occ_start + 0.2 * options.duration_s;
      script.occlusion = {{occ_start, occ_end}};
    }

    char name[32];
    std::snprintf(name, sizeof(name), "scene_%03d", i);
    const std::filesystem::path scene_dir = out_dir / name;
    std::filesystem::create_directories(scene_dir, ec);
    if (ec && !std::filesystem::is_directory(scene_dir)) {
      throw DataError("cannot create scene directory: " + scene_dir.string());
    }

    const RenderedScene rendered = render_scene(rig, script, options.visual_columns);
    write_wav(scene_dir / "audio.wav", rendered.clip);
    write_labels(scene_dir / "labels.csv", rendered.labels);
    write_tensor(scene_dir / "visual.tensor", rendered.visual, Dtype::f32);
    save_script(scene_dir / "script.kv", script);

    SceneEntry entry;
    entry.scene_id = name;
    entry.split = is_test[static_cast<std::size_t>(i)] ? "test" : "train";
    entry.audio_path = std::string(name) + "/audio.wav";
    entry.labels_path = std::string(name) + "/labels.csv";
    entry.visual_path = std::string(name) + "/visual.tensor";
    entry.script_path = std::string(name) + "/script.kv";
    entry.n_frames = rendered.n_frames;
    entry.duration_s = script.duration_s;
    manifest.scenes.push_back(entry);
  }

  save_manifest(out_dir / "manifest.tsv", manifest);
  return manifest;
}

CorpusManifest generate_corpus(const RigConfig& rig, int n_scenes, std::uint64_t seed,
                               const std::filesystem::path& out_dir) {
  CorpusOptions options;
  options.n_scenes = n_scenes;
  options.seed = seed;
  return generate_corpus(rig, options, out_dir);
}

}  // namespace asdl
