#pragma once

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

namespace asdl {

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
};

inline double distance(const Vec3& a, const Vec3& b) {
  const double dx = a.x - b.x;
  const double dy = a.y - b.y;
  const double dz = a.z - b.z;
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

// Rig coordinate frame: origin at the array center, x along the baffle,
// y up, z toward the scene. Azimuth is measured from broadside (the z axis)
// and increases toward the reference-microphone end of the array (-x), so a
// source at positive azimuth arrives later at every other microphone.
struct MicrophoneArrayLayout {
  std::vector<Vec3> positions;  // 16 microphones, meters
  int reference_index = 0;      // first channel of the lower sub-array
  double speed_of_sound = 343.0;

  int n_microphones() const { return static_cast<int>(positions.size()); }
};

struct CameraModel {
  int camera_id = 0;
  double focal_length_px = 0.0;
  double principal_point_px = 0.0;
  double image_width_px = 0.0;
  double degrees_per_pixel_linear = 2.0 / 89.0;  // evaluation conversion factor
  double position_x_m = 0.0;                     // horizontal offset on the baffle
};

struct RigConfig {
  std::string rig_id;
  MicrophoneArrayLayout layout;
  std::vector<CameraModel> cameras;  // 11 views

  const CameraModel& camera(int camera_id) const;
  const CameraModel& central_camera() const { return camera(static_cast<int>(cameras.size()) / 2); }
};

// 16 microphones in two rows 40 mm apart, dyadically log-spaced gaps spanning
// a 450 mm horizontal aperture, plus 11 cameras spread 50 mm apart along the
// baffle. The true Tragic Talkers coordinates are not published; these
// defaults satisfy the array's documented apertures and spacing style.
RigConfig build_default_rig();

// Throws ConfigError when a type invariant is violated.
void validate_layout(const MicrophoneArrayLayout& layout);
void validate_rig(const RigConfig& rig);

// Point source position for a given azimuth/distance in the rig's horizontal
// plane (y = 0).
Vec3 source_position(double azimuth_deg, double distance_m);

// Path-length difference (mic minus reference) divided by the speed of sound.
// Positive result: sound reaches `mic_index` later than the reference.
double expected_tdoa(const MicrophoneArrayLayout& layout, int mic_index, double azimuth_deg,
                     double distance_m);

// Azimuth of `point` as seen from a pinhole at horizontal offset `origin_x`
// looking down the z axis, in degrees, same sign convention as above.
double azimuth_from(double origin_x, const Vec3& point);

// Pinhole projection u = principal_point + focal * tan(azimuth). The azimuth
// is relative to the camera axis and must be inside the +-45 degree field of
// view. `pixel_to_azimuth` is the exact inverse.
double project_azimuth_to_pixel(const CameraModel& camera, double azimuth_deg);
double pixel_to_azimuth(const CameraModel& camera, double pixel);

// Linear pixel-to-degree conversion used by the evaluation metrics.
double pixel_error_to_degrees(const CameraModel& camera, double pixel_error);

void save_rig(const std::filesystem::path& path, const RigConfig& rig);
RigConfig load_rig(const std::filesystem::path& path);

inline double deg_to_rad(double deg) { return deg * 3.141592653589793238462643383279502884 / 180.0; }
inline double rad_to_deg(double rad) { return rad * 180.0 / 3.141592653589793238462643383279502884; }

}  // namespace asdl
