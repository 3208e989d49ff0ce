#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "asdl/errors.hpp"
#include "asdl/geometry.hpp"
#include "asdl/rng.hpp"

#include "oracles.hpp"

using namespace asdl;

namespace {

// Path-length TDOA recomputed from raw coordinates.
double tdoa_by_path_lengths(const RigConfig& rig, int mic, double azimuth_deg, double dist) {
  const double a = azimuth_deg * oracle::kPi / 180.0;
  const double sx = -dist * std::sin(a);
  const double sz = dist * std::cos(a);
  auto path = [&](const Vec3& p) {
    const double dx = sx - p.x;
    const double dy = 0.0 - p.y;
    const double dz = sz - p.z;
    return std::sqrt(dx * dx + dy * dy + dz * dz);
  };
  const Vec3& m = rig.layout.positions[static_cast<std::size_t>(mic)];
  const Vec3& r = rig.layout.positions[static_cast<std::size_t>(rig.layout.reference_index)];
  return (path(m) - path(r)) / rig.layout.speed_of_sound;
}

}  // namespace

TEST_SUITE_BEGIN("geometry");

TEST_CASE("default rig satisfies the published apertures") {
  const RigConfig rig = build_default_rig();
  CHECK(rig.layout.n_microphones() == 16);
  CHECK(rig.cameras.size() == 11);

  double min_x = 1e9, max_x = -1e9, min_y = 1e9, max_y = -1e9;
  for (const auto& p : rig.layout.positions) {
    min_x = std::min(min_x, p.x);
    max_x = std::max(max_x, p.x);
    min_y = std::min(min_y, p.y);
    max_y = std::max(max_y, p.y);
  }
  CHECK(max_x - min_x == doctest::Approx(0.450).epsilon(1e-12));
  CHECK(max_y - min_y == doctest::Approx(0.040).epsilon(1e-12));

  for (int i = 0; i < 16; ++i) {
    for (int j = i + 1; j < 16; ++j) {
      CHECK(distance(rig.layout.positions[static_cast<std::size_t>(i)],
                     rig.layout.positions[static_cast<std::size_t>(j)]) > 0.0);
    }
  }
}

TEST_CASE("default rig is bitwise deterministic") {
  const RigConfig a = build_default_rig();
  const RigConfig b = build_default_rig();
  REQUIRE(a.layout.positions.size() == b.layout.positions.size());
  for (std::size_t i = 0; i < a.layout.positions.size(); ++i) {
    CHECK(a.layout.positions[i].x == b.layout.positions[i].x);
    CHECK(a.layout.positions[i].y == b.layout.positions[i].y);
    CHECK(a.layout.positions[i].z == b.layout.positions[i].z);
  }
  for (std::size_t i = 0; i < a.cameras.size(); ++i) {
    CHECK(a.cameras[i].focal_length_px == b.cameras[i].focal_length_px);
    CHECK(a.cameras[i].position_x_m == b.cameras[i].position_x_m);
  }
}

TEST_CASE("expected_tdoa matches the independent path-length computation") {
  const RigConfig rig = build_default_rig();

  // End microphone of the lower row, 0.45 m from the reference.
  const int far_mic = 7;
  CHECK(distance(rig.layout.positions[7], rig.layout.positions[0]) ==
        doctest::Approx(0.450).epsilon(1e-12));

  const double tdoa = expected_tdoa(rig.layout, far_mic, 30.0, 3.5);
  const double expected = tdoa_by_path_lengths(rig, far_mic, 30.0, 3.5);
  CHECK(tdoa == doctest::Approx(expected).epsilon(1e-12));

  // Far-field magnitude: (aperture * sin 30deg) / c, positive sign.
  CHECK(tdoa > 0.0);
  CHECK(tdoa == doctest::Approx(0.45 * 0.5 / 343.0).epsilon(0.02));

  // Spot checks across microphones and azimuths.
  for (int mic : {1, 5, 9, 14}) {
    for (double az : {-25.0, -5.0, 10.0, 30.0}) {
      CHECK(expected_tdoa(rig.layout, mic, az, 3.0) ==
            doctest::Approx(tdoa_by_path_lengths(rig, mic, az, 3.0)).epsilon(1e-12));
    }
  }
}

TEST_CASE("expected_tdoa far-field limit approaches d sin(theta) / c") {
  const RigConfig rig = build_default_rig();
  const double exact = expected_tdoa(rig.layout, 7, 20.0, 100.0);
  const double mic_dx = rig.layout.positions[7].x - rig.layout.positions[0].x;
  const double far_field = mic_dx * std::sin(20.0 * oracle::kPi / 180.0) / 343.0;
  CHECK(std::abs(exact - far_field) / std::abs(far_field) < 0.01);
}

TEST_CASE("mirrored microphone pair has antisymmetric pairwise delay") {
  const RigConfig rig = build_default_rig();
  // Microphones 3 and 4 mirror each other about the array center.
  CHECK(rig.layout.positions[3].x == doctest::Approx(-rig.layout.positions[4].x));

  auto pair_delay = [&](double az) {
    return expected_tdoa(rig.layout, 3, az, 3.5) - expected_tdoa(rig.layout, 4, az, 3.5);
  };
  CHECK(pair_delay(0.0) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(pair_delay(15.0) == doctest::Approx(-pair_delay(-15.0)).epsilon(1e-12));
  CHECK(std::abs(pair_delay(15.0)) > 0.0);
}

TEST_CASE("expected_tdoa rejects invalid arguments") {
  const RigConfig rig = build_default_rig();
  CHECK_THROWS_AS(expected_tdoa(rig.layout, rig.layout.reference_index, 0.0, 3.5),
                  std::invalid_argument);
  CHECK_THROWS_AS(expected_tdoa(rig.layout, 16, 0.0, 3.5), std::invalid_argument);
  CHECK_THROWS_AS(expected_tdoa(rig.layout, 3, 0.0, -1.0), std::invalid_argument);
}

TEST_CASE("all in-view TDOAs fit inside the 64-sample lag window") {
  const RigConfig rig = build_default_rig();
  for (int mic = 1; mic < 16; ++mic) {
    for (double az = -44.0; az <= 44.0; az += 4.0) {
      for (double dist : {2.5, 3.5, 5.0}) {
        const double lag = std::abs(expected_tdoa(rig.layout, mic, az, dist)) * 48000.0;
        CHECK(lag < 64.0);
      }
    }
  }
}

TEST_CASE("projection hits the principal point at zero azimuth") {
  const CameraModel cam = build_default_rig().cameras[5];
  CHECK(project_azimuth_to_pixel(cam, 0.0) == doctest::Approx(cam.principal_point_px));
}

TEST_CASE("two degrees project 89 pixels from the principal point") {
  const CameraModel cam = build_default_rig().cameras[5];
  const double u = project_azimuth_to_pixel(cam, 2.0);
  CHECK(std::abs(u - cam.principal_point_px - 89.0) < 0.5);
}

TEST_CASE("projection round-trips through pixel_to_azimuth") {
  const CameraModel cam = build_default_rig().cameras[0];
  Rng rng(1234);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const double az = rng.uniform(-44.9, 44.9);
    const double back = pixel_to_azimuth(cam, project_azimuth_to_pixel(cam, az));
    worst = std::max(worst, std::abs(back - az));
  }
  CHECK(worst < 1e-9);
}

TEST_CASE("projection rejects azimuths outside the field of view") {
  const CameraModel cam = build_default_rig().cameras[5];
  CHECK_THROWS_AS(project_azimuth_to_pixel(cam, 45.0), std::invalid_argument);
  CHECK_THROWS_AS(project_azimuth_to_pixel(cam, -88.0), std::invalid_argument);
}

TEST_CASE("pixel_error_to_degrees reproduces the published calibration pairs") {
  const CameraModel cam = build_default_rig().cameras[5];
  CHECK(pixel_error_to_degrees(cam, 89.0) == doctest::Approx(2.0).epsilon(1e-12));

  // Published aD values print at two significant figures; check at that
  // precision.
  struct Pair {
    double px, printed, scale;
  };
  for (const Pair& p : {Pair{32.0, 0.72, 100.0}, Pair{210.0, 4.7, 10.0}, Pair{39.0, 0.88, 100.0},
                        Pair{35.0, 0.79, 100.0}, Pair{50.0, 1.1, 10.0}}) {
    const double deg = pixel_error_to_degrees(cam, p.px);
    const double rounded = std::round(deg * p.scale) / p.scale;
    CHECK(std::abs(rounded - p.printed) <= 0.01);
  }
}

TEST_CASE("pixel_error_to_degrees is linear") {
  const CameraModel cam = build_default_rig().cameras[5];
  Rng rng(77);
  CHECK(pixel_error_to_degrees(cam, 0.0) == 0.0);
  for (int i = 0; i < 100; ++i) {
    const double a = rng.uniform(0.0, 500.0);
    const double b = rng.uniform(0.0, 500.0);
    CHECK(pixel_error_to_degrees(cam, a + b) ==
          doctest::Approx(pixel_error_to_degrees(cam, a) + pixel_error_to_degrees(cam, b))
              .epsilon(1e-12));
  }
  CHECK_THROWS_AS(pixel_error_to_degrees(cam, -1.0), std::invalid_argument);
}

TEST_CASE("rig round-trips through its key-value file") {
  const RigConfig rig = build_default_rig();
  const auto path = std::filesystem::temp_directory_path() / "asdl_test_rig.kv";
  save_rig(path, rig);
  const RigConfig loaded = load_rig(path);
  CHECK(loaded.rig_id == rig.rig_id);
  CHECK(loaded.layout.reference_index == rig.layout.reference_index);
  for (std::size_t i = 0; i < rig.layout.positions.size(); ++i) {
    CHECK(loaded.layout.positions[i].x == rig.layout.positions[i].x);
    CHECK(loaded.layout.positions[i].y == rig.layout.positions[i].y);
  }
  for (std::size_t i = 0; i < rig.cameras.size(); ++i) {
    CHECK(loaded.cameras[i].focal_length_px == rig.cameras[i].focal_length_px);
    CHECK(loaded.cameras[i].position_x_m == rig.cameras[i].position_x_m);
  }
  std::filesystem::remove(path);
}

TEST_CASE("validation rejects broken layouts") {
  RigConfig rig = build_default_rig();
  rig.layout.positions[3] = rig.layout.positions[2];
  CHECK_THROWS_AS(validate_rig(rig), ConfigError);

  RigConfig rig2 = build_default_rig();
  rig2.cameras[4].camera_id = 5;  // duplicate id
  CHECK_THROWS_AS(validate_rig(rig2), ConfigError);

  RigConfig rig3 = build_default_rig();
  rig3.cameras[0].degrees_per_pixel_linear = 0.03;
  CHECK_THROWS_AS(validate_rig(rig3), ConfigError);
}

TEST_SUITE_END();
