#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace driftguard {

/// Row-major RGB8 raster, the unit flowing through the pipeline.
/// pixels.size() == width * height * 3, channels interleaved R,G,B.
struct ImageBuffer {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  static ImageBuffer filled(int w, int h, std::uint8_t r, std::uint8_t g,
                            std::uint8_t b);

  std::size_t index(int x, int y, int c) const {
    return (static_cast<std::size_t>(y) * width + x) * 3 + c;
  }
  std::uint8_t at(int x, int y, int c) const { return pixels[index(x, y, c)]; }
  std::uint8_t& at(int x, int y, int c) { return pixels[index(x, y, c)]; }

  bool valid() const {
    return width >= 1 && height >= 1 &&
           pixels.size() == static_cast<std::size_t>(width) * height * 3;
  }

  bool operator==(const ImageBuffer&) const = default;
};

/// Canonical on-disk raster: binary PPM, maxval 255, with the exact header
/// layout `P6\n<w> <h>\n255\n`. The reader accepts only this layout, which
/// makes write(read(bytes)) == bytes on every accepted input.
enum class PpmErrorKind { bad_magic, bad_header, bad_maxval, truncated, trailing_data };

class PpmError : public std::runtime_error {
 public:
  PpmError(PpmErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  PpmErrorKind kind() const { return kind_; }

 private:
  PpmErrorKind kind_;
};

ImageBuffer read_ppm(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> write_ppm(const ImageBuffer& img);

ImageBuffer load_ppm(const std::filesystem::path& path);
void save_ppm(const ImageBuffer& img, const std::filesystem::path& path);

/// Bilinear sample at continuous pixel-center coordinates (x, y); neighbors
/// outside the raster contribute black. Returns rounded RGB channel values.
std::array<std::uint8_t, 3> bilinear_sample(const ImageBuffer& img, double x,
                                            double y);

}  // namespace driftguard
