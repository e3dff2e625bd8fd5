#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <vector>

#include "terraexpr/tensor.hpp"

namespace terraexpr {

// 8-bit RGB, row-major, interleaved.
struct Image {
  std::size_t width = 0, height = 0;
  std::vector<std::uint8_t> rgb;

  bool operator==(const Image&) const = default;
};

class ImageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Binary PPM (P6, maxval 255).
Image read_ppm(const std::filesystem::path& path);
void write_ppm(const std::filesystem::path& path, const Image& image);

// Bilinear with half-pixel centers.
Image resize_bilinear(const Image& image, std::size_t width, std::size_t height);

// Planar [3,H,W] values in [-1,1] appended to `out`.
template <typename T>
void append_planar(const Image& image, std::vector<T>& out);

// One sample [3,H,W] (or [N,3,H,W] with batch index) back to 8-bit RGB,
// clamping to [-1,1].
template <typename T>
Image image_from_planar(std::span<const T> planar, std::size_t width, std::size_t height);

}  // namespace terraexpr
