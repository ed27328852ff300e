#include "driftguard/drift.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <stdexcept>

#include "driftguard/rng.hpp"

namespace driftguard {

namespace {

std::uint8_t clamp_round(double v) {
  const long r = std::lround(v);
  return static_cast<std::uint8_t>(r < 0 ? 0 : (r > 255 ? 255 : r));
}

// cos/sin of an angle given in degrees, exact at quadrant angles so that
// 90/180 degree tilts are pure pixel permutations.
struct Rotation {
  double c;
  double s;
};

Rotation rotation_for(double angle_degrees) {
  if (angle_degrees == 0.0) return {1.0, 0.0};
  if (angle_degrees == 90.0) return {0.0, 1.0};
  if (angle_degrees == -90.0) return {0.0, -1.0};
  if (angle_degrees == 180.0 || angle_degrees == -180.0) return {-1.0, 0.0};
  const double theta = angle_degrees * std::numbers::pi / 180.0;
  return {std::cos(theta), std::sin(theta)};
}

}  // namespace

std::string_view to_string(DriftKind kind) {
  switch (kind) {
    case DriftKind::gaussian_noise: return "gaussian_noise";
    case DriftKind::brightness: return "brightness";
    case DriftKind::tilt: return "tilt";
  }
  return "?";
}

std::optional<DriftKind> drift_kind_from_string(std::string_view name) {
  if (name == "gaussian_noise") return DriftKind::gaussian_noise;
  if (name == "brightness") return DriftKind::brightness;
  if (name == "tilt") return DriftKind::tilt;
  return std::nullopt;
}

ImageBuffer apply_drift(const ImageBuffer& img, const DriftSpec& spec) {
  switch (spec.kind) {
    case DriftKind::gaussian_noise:
      return add_gaussian_noise(img, spec.sigma, spec.seed);
    case DriftKind::brightness:
      return adjust_brightness(img, spec.gain);
    case DriftKind::tilt:
      return tilt(img, spec.angle);
  }
  throw std::logic_error("unknown drift kind");
}

ImageBuffer add_gaussian_noise(const ImageBuffer& img, double sigma,
                               std::uint64_t seed) {
  if (sigma < 0.0) {
    throw std::invalid_argument("gaussian noise sigma must be >= 0");
  }
  ImageBuffer out = img;
  if (sigma == 0.0) return out;
  GaussianStream normals(seed);
  for (auto& value : out.pixels) {
    value = clamp_round(value + sigma * normals.next());
  }
  return out;
}

ImageBuffer adjust_brightness(const ImageBuffer& img, double gain) {
  if (!(gain > 0.0)) {
    throw std::invalid_argument("brightness gain must be > 0");
  }
  ImageBuffer out = img;
  for (auto& value : out.pixels) {
    value = clamp_round(value * gain);
  }
  return out;
}

ImageBuffer tilt(const ImageBuffer& img, double angle_degrees) {
  if (angle_degrees < -180.0 || angle_degrees > 180.0) {
    throw std::invalid_argument("tilt angle must be in [-180, 180]");
  }
  if (angle_degrees == 0.0) return img;

  const auto [c, s] = rotation_for(angle_degrees);
  const double cx = (img.width - 1) / 2.0;
  const double cy = (img.height - 1) / 2.0;

  ImageBuffer out;
  out.width = img.width;
  out.height = img.height;
  out.pixels.resize(img.pixels.size());
  for (int y = 0; y < out.height; ++y) {
    for (int x = 0; x < out.width; ++x) {
      // Inverse map: where did this output pixel come from?
      const double dx = x - cx;
      const double dy = y - cy;
      const double sx = cx + c * dx + s * dy;
      const double sy = cy - s * dx + c * dy;
      const auto rgb = bilinear_sample(img, sx, sy);
      out.at(x, y, 0) = rgb[0];
      out.at(x, y, 1) = rgb[1];
      out.at(x, y, 2) = rgb[2];
    }
  }
  return out;
}

std::optional<BoundingBox> transform_bbox(const BoundingBox& box,
                                          double angle_degrees, int width,
                                          int height) {
  if (angle_degrees < -180.0 || angle_degrees > 180.0) {
    throw std::invalid_argument("tilt angle must be in [-180, 180]");
  }
  const auto [c, s] = rotation_for(angle_degrees);
  // Box corners live in edge coordinates; the rotation center there is
  // (w/2, h/2), the same physical point tilt() turns around.
  const double cx = width / 2.0;
  const double cy = height / 2.0;

  double min_x = 1e300, min_y = 1e300, max_x = -1e300, max_y = -1e300;
  const double xs[2] = {static_cast<double>(box.x1), static_cast<double>(box.x2)};
  const double ys[2] = {static_cast<double>(box.y1), static_cast<double>(box.y2)};
  for (const double px : xs) {
    for (const double py : ys) {
      const double dx = px - cx;
      const double dy = py - cy;
      // Forward map, inverse of the sampling map used by tilt().
      const double rx = cx + c * dx - s * dy;
      const double ry = cy + s * dx + c * dy;
      min_x = std::min(min_x, rx);
      min_y = std::min(min_y, ry);
      max_x = std::max(max_x, rx);
      max_y = std::max(max_y, ry);
    }
  }

  BoundingBox hull;
  hull.x1 = std::max(0, static_cast<int>(std::floor(min_x)));
  hull.y1 = std::max(0, static_cast<int>(std::floor(min_y)));
  hull.x2 = std::min(width, static_cast<int>(std::ceil(max_x)));
  hull.y2 = std::min(height, static_cast<int>(std::ceil(max_y)));
  if (hull.x1 >= hull.x2 || hull.y1 >= hull.y2) return std::nullopt;
  return hull;
}

std::string drift_tag(const DriftSpec& spec) {
  double param = 0.0;
  switch (spec.kind) {
    case DriftKind::gaussian_noise: param = spec.sigma; break;
    case DriftKind::brightness: param = spec.gain; break;
    case DriftKind::tilt: param = spec.angle; break;
  }
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s_%g", std::string(to_string(spec.kind)).c_str(),
                param);
  // Filenames should not carry '.' or '-' from the parameter.
  std::string tag = buf;
  std::replace(tag.begin(), tag.end(), '.', 'p');
  std::replace(tag.begin(), tag.end(), '-', 'm');
  return tag;
}

}  // namespace driftguard
