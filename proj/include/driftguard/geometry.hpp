#pragma once

namespace driftguard {

/// Object location as fractions of image size: center (cx, cy) in [0,1],
/// extent (w, h) in (0,1]. A box may poke past the image edge; clamping is
/// the pixel-space conversion's job.
struct NormalizedBox {
  double cx = 0.0;
  double cy = 0.0;
  double w = 0.0;
  double h = 0.0;

  bool operator==(const NormalizedBox&) const = default;
};

/// Pixel-space box in edge coordinates: the region [x1,x2) x [y1,y2) of the
/// raster. x1 < x2 and y1 < y2 for any box that passed conversion/clamping.
struct BoundingBox {
  int x1 = 0;
  int y1 = 0;
  int x2 = 0;
  int y2 = 0;

  int width() const { return x2 - x1; }
  int height() const { return y2 - y1; }
  long long area() const {
    return static_cast<long long>(width()) * height();
  }

  bool operator==(const BoundingBox&) const = default;
};

/// Intersection area over union area; 0 for disjoint or empty boxes.
inline double iou(const BoundingBox& a, const BoundingBox& b) {
  const int ix1 = a.x1 > b.x1 ? a.x1 : b.x1;
  const int iy1 = a.y1 > b.y1 ? a.y1 : b.y1;
  const int ix2 = a.x2 < b.x2 ? a.x2 : b.x2;
  const int iy2 = a.y2 < b.y2 ? a.y2 : b.y2;
  if (ix1 >= ix2 || iy1 >= iy2) return 0.0;
  const long long inter = static_cast<long long>(ix2 - ix1) * (iy2 - iy1);
  const long long uni = a.area() + b.area() - inter;
  if (uni <= 0) return 0.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace driftguard
