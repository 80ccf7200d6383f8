#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace mpa {

/// 8-bit RGB image, row-major, channels interleaved.
struct Raster {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::vector<std::uint8_t> pixels;  // width * height * 3

  static constexpr std::uint32_t kChannels = 3;

  Raster() = default;
  /// Black image. Throws InvalidArgument for zero dimensions.
  Raster(std::uint32_t w, std::uint32_t h);
  /// Throws InvalidArgument unless pixels.size() == w * h * 3.
  Raster(std::uint32_t w, std::uint32_t h, std::vector<std::uint8_t> pixels);

  std::uint8_t& at(std::uint32_t x, std::uint32_t y, std::uint32_t c) {
    return pixels[(static_cast<std::size_t>(y) * width + x) * kChannels + c];
  }
  std::uint8_t at(std::uint32_t x, std::uint32_t y, std::uint32_t c) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * kChannels + c];
  }

  bool operator==(const Raster&) const = default;
};

/// True when the buffer starts with the 8-byte PNG signature.
bool is_png(std::span<const std::uint8_t> bytes) noexcept;

/// Decodes any PNG into 8-bit RGB (alpha is composited away, gray expanded).
/// Throws FormatError for invalid streams.
Raster decode_png(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_png(const Raster& img);

Raster load_png(const std::filesystem::path& path);
void save_png(const Raster& img, const std::filesystem::path& path);

}  // namespace mpa
