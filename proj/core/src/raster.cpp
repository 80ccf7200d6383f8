#include "mpa/raster.hpp"

#include <png.h>

#include <array>
#include <fstream>
#include <iterator>

#include "mpa/error.hpp"

namespace mpa {

Raster::Raster(std::uint32_t w, std::uint32_t h) : width(w), height(h) {
  if (w == 0 || h == 0) fail(ErrorKind::InvalidArgument, "raster dimensions must be positive");
  pixels.assign(static_cast<std::size_t>(w) * h * kChannels, 0);
}

Raster::Raster(std::uint32_t w, std::uint32_t h, std::vector<std::uint8_t> px)
    : width(w), height(h), pixels(std::move(px)) {
  if (w == 0 || h == 0) fail(ErrorKind::InvalidArgument, "raster dimensions must be positive");
  if (pixels.size() != static_cast<std::size_t>(w) * h * kChannels) {
    fail(ErrorKind::InvalidArgument, "pixel buffer length must equal width * height * 3");
  }
}

bool is_png(std::span<const std::uint8_t> bytes) noexcept {
  static constexpr std::array<std::uint8_t, 8> kSig{0x89, 'P', 'N', 'G', '\r', '\n', 0x1A, '\n'};
  return bytes.size() >= kSig.size() && std::equal(kSig.begin(), kSig.end(), bytes.begin());
}

namespace {

// RAII over libpng's simplified-API control structure.
struct PngImage {
  png_image image{};
  PngImage() {
    image.version = PNG_IMAGE_VERSION;
  }
  ~PngImage() { png_image_free(&image); }
  PngImage(const PngImage&) = delete;
  PngImage& operator=(const PngImage&) = delete;
};

}  // namespace

Raster decode_png(std::span<const std::uint8_t> bytes) {
  if (!is_png(bytes)) fail(ErrorKind::FormatError, "not a PNG stream");
  PngImage png;
  if (!png_image_begin_read_from_memory(&png.image, bytes.data(), bytes.size())) {
    fail(ErrorKind::FormatError, std::string("PNG header: ") + png.image.message);
  }
  png.image.format = PNG_FORMAT_RGB;
  if (png.image.width == 0 || png.image.height == 0) fail(ErrorKind::FormatError, "empty PNG");
  std::vector<std::uint8_t> px(PNG_IMAGE_SIZE(png.image));
  // Transparent pixels are composited over black.
  png_color black{0, 0, 0};
  if (!png_image_finish_read(&png.image, &black, px.data(), 0, nullptr)) {
    fail(ErrorKind::FormatError, std::string("PNG decode: ") + png.image.message);
  }
  return Raster(png.image.width, png.image.height, std::move(px));
}

std::vector<std::uint8_t> encode_png(const Raster& img) {
  PngImage png;
  png.image.width = img.width;
  png.image.height = img.height;
  png.image.format = PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&png.image, nullptr, &size, 0, img.pixels.data(), 0, nullptr)) {
    fail(ErrorKind::FormatError, std::string("PNG size query: ") + png.image.message);
  }
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&png.image, out.data(), &size, 0, img.pixels.data(), 0, nullptr)) {
    fail(ErrorKind::FormatError, std::string("PNG encode: ") + png.image.message);
  }
  out.resize(size);
  return out;
}

Raster load_png(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::IoError, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_png(bytes);
  } catch (const Error& e) {
    fail(e.kind(), path.string() + ": " + e.what());
  }
}

void save_png(const Raster& img, const std::filesystem::path& path) {
  const auto bytes = encode_png(img);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::IoError, "cannot open for writing: " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorKind::IoError, "write failed: " + path.string());
}

}  // namespace mpa
