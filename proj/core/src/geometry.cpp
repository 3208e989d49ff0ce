#include "asdl/geometry.hpp"

#include <algorithm>
#include <limits>

#include "asdl/errors.hpp"
#include "asdl/keyvalue.hpp"

namespace asdl {

namespace {

constexpr int kMicrophones = 16;
constexpr int kCameras = 11;
constexpr double kHorizontalAperture = 0.450;
constexpr double kVerticalAperture = 0.040;
constexpr double kFovHalfAngleDeg = 45.0;

}  // namespace

const CameraModel& RigConfig::camera(int camera_id) const {
  for (const auto& cam : cameras) {
    if (cam.camera_id == camera_id) return cam;
  }
  throw ConfigError("rig '" + rig_id + "' has no camera " + std::to_string(camera_id));
}

RigConfig build_default_rig() {
  RigConfig rig;
  rig.rig_id = "ava-desk-rig";
  rig.layout.speed_of_sound = 343.0;
  rig.layout.reference_index = 0;

  // Gap sizes double away from the array center: g, 2g, 4g, 8g per side.
  // 7 gaps of total width (1 + 2*2 + 2*4 + 2*8) * g = 29 g span the aperture.
  const double g = kHorizontalAperture / 29.0;
  const double offsets[8] = {-14.5 * g, -6.5 * g, -2.5 * g, -0.5 * g,
                             0.5 * g,   2.5 * g,  6.5 * g,  14.5 * g};
  const double half_gap = kVerticalAperture / 2.0;
  rig.layout.positions.resize(kMicrophones);
  for (int i = 0; i < 8; ++i) {
    rig.layout.positions[i] = Vec3{offsets[i], -half_gap, 0.0};      // lower sub-array
    rig.layout.positions[8 + i] = Vec3{offsets[i], half_gap, 0.0};   // upper sub-array
  }

  rig.cameras.resize(kCameras);
  for (int k = 0; k < kCameras; ++k) {
    CameraModel cam;
    cam.camera_id = k;
    cam.degrees_per_pixel_linear = 2.0 / 89.0;
    cam.focal_length_px = 89.0 / std::tan(deg_to_rad(2.0));
    cam.image_width_px = 2448.0;
    cam.principal_point_px = cam.image_width_px / 2.0;
    cam.position_x_m = (k - kCameras / 2) * 0.05;
    rig.cameras[static_cast<std::size_t>(k)] = cam;
  }

  validate_rig(rig);
  return rig;
}

void validate_layout(const MicrophoneArrayLayout& layout) {
  if (layout.n_microphones() != kMicrophones) {
    throw ConfigError("layout must have exactly 16 microphones, got " +
                      std::to_string(layout.n_microphones()));
  }
  if (layout.reference_index < 0 || layout.reference_index >= kMicrophones) {
    throw ConfigError("reference microphone index out of range");
  }
  if (layout.speed_of_sound <= 0.0) {
    throw ConfigError("speed of sound must be positive");
  }
  double min_x = std::numeric_limits<double>::infinity();
  double max_x = -min_x;
  double min_y = min_x;
  double max_y = -min_x;
  for (const auto& p : layout.positions) {
    min_x = std::min(min_x, p.x);
    max_x = std::max(max_x, p.x);
    min_y = std::min(min_y, p.y);
    max_y = std::max(max_y, p.y);
  }
  if (std::abs((max_x - min_x) - kHorizontalAperture) > 1e-9) {
    throw ConfigError("horizontal aperture must be 450 mm");
  }
  if (std::abs((max_y - min_y) - kVerticalAperture) > 1e-9) {
    throw ConfigError("vertical aperture must be 40 mm");
  }
  for (int i = 0; i < kMicrophones; ++i) {
    for (int j = i + 1; j < kMicrophones; ++j) {
      if (distance(layout.positions[i], layout.positions[j]) <= 0.0) {
        throw ConfigError("microphones " + std::to_string(i) + " and " + std::to_string(j) +
                          " are co-located");
      }
    }
  }
}

void validate_rig(const RigConfig& rig) {
  validate_layout(rig.layout);
  if (static_cast<int>(rig.cameras.size()) != kCameras) {
    throw ConfigError("rig must have exactly 11 cameras, got " +
                      std::to_string(rig.cameras.size()));
  }
  std::vector<bool> seen(kCameras, false);
  for (const auto& cam : rig.cameras) {
    if (cam.camera_id < 0 || cam.camera_id >= kCameras) {
      throw ConfigError("camera id " + std::to_string(cam.camera_id) + " out of [0, 11)");
    }
    if (seen[static_cast<std::size_t>(cam.camera_id)]) {
      throw ConfigError("duplicate camera id " + std::to_string(cam.camera_id));
    }
    seen[static_cast<std::size_t>(cam.camera_id)] = true;
    if (cam.focal_length_px <= 0.0 || cam.image_width_px <= 0.0) {
      throw ConfigError("camera " + std::to_string(cam.camera_id) + " has invalid intrinsics");
    }
    if (std::abs(cam.degrees_per_pixel_linear - 2.0 / 89.0) > 1e-9) {
      throw ConfigError("camera " + std::to_string(cam.camera_id) +
                        " must use the 2/89 deg-per-pixel evaluation factor");
    }
  }
}

Vec3 source_position(double azimuth_deg, double distance_m) {
  const double a = deg_to_rad(azimuth_deg);
  return Vec3{-distance_m * std::sin(a), 0.0, distance_m * std::cos(a)};
}

double expected_tdoa(const MicrophoneArrayLayout& layout, int mic_index, double azimuth_deg,
                     double distance_m) {
  if (mic_index < 0 || mic_index >= layout.n_microphones()) {
    throw std::invalid_argument("microphone index out of range");
  }
  if (mic_index == layout.reference_index) {
    throw std::invalid_argument("TDOA of the reference microphone against itself is undefined");
  }
  if (distance_m <= 0.0) {
    throw std::invalid_argument("source distance must be positive");
  }
  const Vec3 src = source_position(azimuth_deg, distance_m);
  const Vec3& mic = layout.positions[static_cast<std::size_t>(mic_index)];
  const Vec3& ref = layout.positions[static_cast<std::size_t>(layout.reference_index)];
  return (distance(src, mic) - distance(src, ref)) / layout.speed_of_sound;
}

double azimuth_from(double origin_x, const Vec3& point) {
  return rad_to_deg(std::atan2(origin_x - point.x, point.z));
}

double project_azimuth_to_pixel(const CameraModel& camera, double azimuth_deg) {
  if (std::abs(azimuth_deg) >= kFovHalfAngleDeg) {
    throw std::invalid_argument("azimuth outside the camera field of view");
  }
  return camera.principal_point_px + camera.focal_length_px * std::tan(deg_to_rad(azimuth_deg));
}

double pixel_to_azimuth(const CameraModel& camera, double pixel) {
  return rad_to_deg(std::atan((pixel - camera.principal_point_px) / camera.focal_length_px));
}

double pixel_error_to_degrees(const CameraModel& camera, double pixel_error) {
  if (pixel_error < 0.0) {
    throw std::invalid_argument("pixel error must be non-negative");
  }
  return pixel_error * camera.degrees_per_pixel_linear;
}

void save_rig(const std::filesystem::path& path, const RigConfig& rig) {
  KeyValueFile file;
  auto& head = file.add_section("rig");
  head.set("id", rig.rig_id);
  head.set_double("speed_of_sound", rig.layout.speed_of_sound);
  head.set_int("reference_microphone", rig.layout.reference_index);

  auto& mics = file.add_section("microphones");
  mics.set_int("count", rig.layout.n_microphones());
  for (int i = 0; i < rig.layout.n_microphones(); ++i) {
    const auto& p = rig.layout.positions[static_cast<std::size_t>(i)];
    mics.set("mic_" + std::to_string(i),
             format_double(p.x) + " " + format_double(p.y) + " " + format_double(p.z));
  }

  for (const auto& cam : rig.cameras) {
    auto& sec = file.add_section("camera_" + std::to_string(cam.camera_id));
    sec.set_double("focal_length_px", cam.focal_length_px);
    sec.set_double("principal_point_px", cam.principal_point_px);
    sec.set_double("image_width_px", cam.image_width_px);
    sec.set_double("degrees_per_pixel_linear", cam.degrees_per_pixel_linear);
    sec.set_double("position_x_m", cam.position_x_m);
  }
  file.save(path);
}

RigConfig load_rig(const std::filesystem::path& path) {
  const KeyValueFile file = KeyValueFile::load(path);
  RigConfig rig;
  const auto& head = file.section("rig");
  head.reject_unknown_keys({"id", "speed_of_sound", "reference_microphone"});
  rig.rig_id = head.get_string("id");
  rig.layout.speed_of_sound = head.get_double("speed_of_sound", 343.0);
  rig.layout.reference_index = static_cast<int>(head.get_int("reference_microphone"));

  const auto& mics = file.section("microphones");
  const int count = static_cast<int>(mics.get_int("count"));
  rig.layout.positions.resize(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    const std::string key = "mic_" + std::to_string(i);
    const auto coords = parse_double_list(mics.get_string(key), key);
    if (coords.size() != 3) {
      throw ConfigError("microphone '" + key + "' needs exactly three coordinates");
    }
    rig.layout.positions[static_cast<std::size_t>(i)] = Vec3{coords[0], coords[1], coords[2]};
  }

  for (const auto& name : file.section_names()) {
    if (name.rfind("camera_", 0) != 0) continue;
    const auto& sec = file.section(name);
    sec.reject_unknown_keys({"focal_length_px", "principal_point_px", "image_width_px",
                             "degrees_per_pixel_linear", "position_x_m"});
    CameraModel cam;
    cam.camera_id = std::stoi(name.substr(7));
    cam.focal_length_px = sec.get_double("focal_length_px");
    cam.principal_point_px = sec.get_double("principal_point_px");
    cam.image_width_px = sec.get_double("image_width_px");
    cam.degrees_per_pixel_linear = sec.get_double("degrees_per_pixel_linear", 2.0 / 89.0);
    cam.position_x_m = sec.get_double("position_x_m", 0.0);
    rig.cameras.push_back(cam);
  }
  std::sort(rig.cameras.begin(), rig.cameras.end(),
            [](const CameraModel& a, const CameraModel& b) { return a.camera_id < b.camera_id; });

  validate_rig(rig);
  return rig;
}

}  // namespace asdl
