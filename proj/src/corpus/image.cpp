#include "terraexpr/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>

namespace terraexpr {

namespace {

std::string next_token(std::istream& in) {
  std::string token;
  char c;
  while (in.get(c)) {
    if (c == '#') {
      std::string rest;
      std::getline(in, rest);
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!token.empty()) break;
      continue;
    }
    token.push_back(c);
  }
  return token;
}

}  // namespace

Image read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ImageError("cannot open image " + path.string());
  if (next_token(in) != "P6") throw ImageError(path.string() + ": not a binary PPM (P6)");
  Image image;
  try {
    image.width = std::stoul(next_token(in));
    image.height = std::stoul(next_token(in));
    if (std::stoul(next_token(in)) != 255) throw ImageError(path.string() + ": maxval must be 255");
  } catch (const std::logic_error&) {
    throw ImageError(path.string() + ": malformed PPM header");
  }
  if (image.width == 0 || image.height == 0) throw ImageError(path.string() + ": empty image");
  image.rgb.resize(image.width * image.height * 3);
  in.read(reinterpret_cast<char*>(image.rgb.data()), static_cast<std::streamsize>(image.rgb.size()));
  if (in.gcount() != static_cast<std::streamsize>(image.rgb.size())) {
    throw ImageError(path.string() + ": truncated pixel data");
  }
  return image;
}

void write_ppm(const std::filesystem::path& path, const Image& image) {
  if (image.rgb.size() != image.width * image.height * 3) throw ImageError("image buffer size mismatch");
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << "P6\n" << image.width << ' ' << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.rgb.data()), static_cast<std::streamsize>(image.rgb.size()));
  if (!out) throw ImageError("failed writing " + path.string());
}

Image resize_bilinear(const Image& image, std::size_t width, std::size_t height) {
  if (image.width == width && image.height == height) return image;
  Image out{width, height, std::vector<std::uint8_t>(width * height * 3)};
  const double sx = static_cast<double>(image.width) / static_cast<double>(width);
  const double sy = static_cast<double>(image.height) / static_cast<double>(height);
  auto pixel = [&](std::size_t x, std::size_t y, std::size_t c) {
    return static_cast<double>(image.rgb[(y * image.width + x) * 3 + c]);
  };
  for (std::size_t y = 0; y < height; ++y) {
    const double fy = std::clamp((static_cast<double>(y) + 0.5) * sy - 0.5, 0.0, static_cast<double>(image.height - 1));
    const auto y0 = static_cast<std::size_t>(fy);
    const auto y1 = std::min(y0 + 1, image.height - 1);
    const double wy = fy - static_cast<double>(y0);
    for (std::size_t x = 0; x < width; ++x) {
      const double fx = std::clamp((static_cast<double>(x) + 0.5) * sx - 0.5, 0.0, static_cast<double>(image.width - 1));
      const auto x0 = static_cast<std::size_t>(fx);
      const auto x1 = std::min(x0 + 1, image.width - 1);
      const double wx = fx - static_cast<double>(x0);
      for (std::size_t c = 0; c < 3; ++c) {
        const double top = pixel(x0, y0, c) * (1 - wx) + pixel(x1, y0, c) * wx;
        const double bottom = pixel(x0, y1, c) * (1 - wx) + pixel(x1, y1, c) * wx;
        out.rgb[(y * width + x) * 3 + c] = static_cast<std::uint8_t>(std::lround(top * (1 - wy) + bottom * wy));
      }
    }
  }
  return out;
}

template <typename T>
void append_planar(const Image& image, std::vector<T>& out) {
  const std::size_t plane = image.width * image.height;
  const std::size_t base = out.size();
  out.resize(base + 3 * plane);
  for (std::size_t i = 0; i < plane; ++i)
    for (std::size_t c = 0; c < 3; ++c)
      out[base + c * plane + i] = static_cast<T>(image.rgb[i * 3 + c] / 127.5 - 1.0);
}

template <typename T>
Image image_from_planar(std::span<const T> planar, std::size_t width, std::size_t height) {
  const std::size_t plane = width * height;
  if (planar.size() != 3 * plane) throw ImageError("planar buffer size mismatch");
  Image image{width, height, std::vector<std::uint8_t>(plane * 3)};
  for (std::size_t i = 0; i < plane; ++i)
    for (std::size_t c = 0; c < 3; ++c) {
      const double v = std::clamp(static_cast<double>(planar[c * plane + i]), -1.0, 1.0);
      image.rgb[i * 3 + c] = static_cast<std::uint8_t>(std::lround((v + 1.0) * 127.5));
    }
  return image;
}

template void append_planar(const Image&, std::vector<double>&);
template void append_planar(const Image&, std::vector<float>&);
template Image image_from_planar(std::span<const double>, std::size_t, std::size_t);
template Image image_from_planar(std::span<const float>, std::size_t, std::size_t);

}  // namespace terraexpr
