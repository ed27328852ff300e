#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "driftguard/geometry.hpp"
#include "driftguard/image.hpp"

namespace driftguard {

enum class DriftKind { gaussian_noise, brightness, tilt };

std::string_view to_string(DriftKind kind);
std::optional<DriftKind> drift_kind_from_string(std::string_view name);

/// One augmentation step. Only the parameter matching `kind` is meaningful
/// (sigma for noise, gain for brightness, angle for tilt); the seed is
/// recorded for every kind so dataset metadata stays uniform, but only the
/// noise transform consumes it.
struct DriftSpec {
  DriftKind kind = DriftKind::gaussian_noise;
  double sigma = 0.0;   // pixel-value units, >= 0
  double gain = 1.0;    // dimensionless, > 0
  double angle = 0.0;   // degrees, in [-180, 180]
  std::uint64_t seed = 0;

  bool operator==(const DriftSpec&) const = default;
};

/// Applies whichever transform `spec` names.
ImageBuffer apply_drift(const ImageBuffer& img, const DriftSpec& spec);

/// Per-channel additive N(0, sigma), clamped to [0,255]. Draw order is
/// row-major, R then G then B within a pixel, normals taken in Box-Muller
/// pair order; identical (input, sigma, seed) gives identical bytes.
ImageBuffer add_gaussian_noise(const ImageBuffer& img, double sigma,
                               std::uint64_t seed);

/// Multiplicative gain per channel, clamp(round(v * gain), 0, 255).
ImageBuffer adjust_brightness(const ImageBuffer& img, double gain);

/// Rotation about the image center, positive angle turning the content
/// clockwise on screen. Bilinear resampling, exterior sampled as black,
/// output dimensions unchanged.
ImageBuffer tilt(const ImageBuffer& img, double angle_degrees);

/// Axis-aligned hull of a box's four corners under the same rotation tilt()
/// applies, clamped to the image. Empty when clamping leaves no area.
std::optional<BoundingBox> transform_bbox(const BoundingBox& box,
                                          double angle_degrees, int width,
                                          int height);

/// Short token for filenames and reports, e.g. "gaussian_noise_10".
std::string drift_tag(const DriftSpec& spec);

}  // namespace driftguard
