#include "driftguard/image.hpp"

#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>

namespace driftguard {

ImageBuffer ImageBuffer::filled(int w, int h, std::uint8_t r, std::uint8_t g,
                                std::uint8_t b) {
  ImageBuffer img;
  img.width = w;
  img.height = h;
  img.pixels.resize(static_cast<std::size_t>(w) * h * 3);
  for (std::size_t i = 0; i < img.pixels.size(); i += 3) {
    img.pixels[i] = r;
    img.pixels[i + 1] = g;
    img.pixels[i + 2] = b;
  }
  return img;
}

namespace {

// Reads a base-10 integer token ending exactly at `term`.
int parse_dim(const std::vector<std::uint8_t>& bytes, std::size_t& pos,
              char term, PpmErrorKind kind, const char* what) {
  const char* begin = reinterpret_cast<const char*>(bytes.data()) + pos;
  const char* end = reinterpret_cast<const char*>(bytes.data()) + bytes.size();
  int value = 0;
  const auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr == begin) {
    throw PpmError(kind, std::string("ppm: malformed ") + what);
  }
  if (ptr >= end || *ptr != term) {
    throw PpmError(kind, std::string("ppm: bad separator after ") + what);
  }
  pos += static_cast<std::size_t>(ptr - begin) + 1;
  return value;
}

}  // namespace

ImageBuffer read_ppm(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') {
    throw PpmError(PpmErrorKind::bad_magic, "ppm: magic is not P6");
  }
  if (bytes.size() < 3 || bytes[2] != '\n') {
    throw PpmError(PpmErrorKind::bad_magic, "ppm: expected newline after magic");
  }
  std::size_t pos = 3;
  const int width =
      parse_dim(bytes, pos, ' ', PpmErrorKind::bad_header, "width");
  const int height =
      parse_dim(bytes, pos, '\n', PpmErrorKind::bad_header, "height");
  if (width < 1 || height < 1) {
    throw PpmError(PpmErrorKind::bad_header, "ppm: nonpositive dimensions");
  }
  const int maxval =
      parse_dim(bytes, pos, '\n', PpmErrorKind::bad_maxval, "maxval");
  if (maxval != 255) {
    throw PpmError(PpmErrorKind::bad_maxval,
                   "ppm: maxval " + std::to_string(maxval) + " unsupported");
  }

  const std::size_t expected = static_cast<std::size_t>(width) * height * 3;
  const std::size_t available = bytes.size() - pos;
  if (available < expected) {
    throw PpmError(PpmErrorKind::truncated,
                   "ppm: pixel data truncated (" + std::to_string(available) +
                       " of " + std::to_string(expected) + " bytes)");
  }
  if (available > expected) {
    throw PpmError(PpmErrorKind::trailing_data,
                   "ppm: " + std::to_string(available - expected) +
                       " trailing bytes after pixel data");
  }

  ImageBuffer img;
  img.width = width;
  img.height = height;
  img.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                    bytes.end());
  return img;
}

std::vector<std::uint8_t> write_ppm(const ImageBuffer& img) {
  const std::string header = "P6\n" + std::to_string(img.width) + " " +
                             std::to_string(img.height) + "\n255\n";
  std::vector<std::uint8_t> out;
  out.reserve(header.size() + img.pixels.size());
  out.insert(out.end(), header.begin(), header.end());
  out.insert(out.end(), img.pixels.begin(), img.pixels.end());
  return out;
}

ImageBuffer load_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("cannot open image: " + path.string());
  }
  std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in),
                                  std::istreambuf_iterator<char>()};
  try {
    return read_ppm(bytes);
  } catch (const PpmError& e) {
    throw PpmError(e.kind(), path.string() + ": " + e.what());
  }
}

void save_ppm(const ImageBuffer& img, const std::filesystem::path& path) {
  const auto bytes = write_ppm(img);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw std::runtime_error("cannot write image: " + path.string());
  }
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) {
    throw std::runtime_error("short write: " + path.string());
  }
}

std::array<std::uint8_t, 3> bilinear_sample(const ImageBuffer& img, double x,
                                            double y) {
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  const double fx = x - x0;
  const double fy = y - y0;

  const auto fetch = [&](int px, int py, int c) -> double {
    if (px < 0 || py < 0 || px >= img.width || py >= img.height) return 0.0;
    return img.at(px, py, c);
  };

  std::array<std::uint8_t, 3> out{};
  for (int c = 0; c < 3; ++c) {
    const double top =
        fetch(x0, y0, c) * (1.0 - fx) + fetch(x0 + 1, y0, c) * fx;
    const double bottom =
        fetch(x0, y0 + 1, c) * (1.0 - fx) + fetch(x0 + 1, y0 + 1, c) * fx;
    const double v = top * (1.0 - fy) + bottom * fy;
    const long r = std::lround(v);
    out[c] = static_cast<std::uint8_t>(r < 0 ? 0 : (r > 255 ? 255 : r));
  }
  return out;
}

}  // namespace driftguard
