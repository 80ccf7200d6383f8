#include "mpa/hma.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "mpa/error.hpp"

namespace mpa {

void JitterParams::validate() const {
  auto in_unit = [](double m) { return m >= 0.0 && m <= 1.0; };
  if (!in_unit(brightness) || !in_unit(contrast) || !in_unit(saturation)) {
    fail(ErrorKind::InvalidArgument, "jitter brightness/contrast/saturation must lie in [0, 1]");
  }
  if (!(hue >= 0.0 && hue <= 0.5)) fail(ErrorKind::InvalidArgument, "jitter hue must lie in [0, 0.5]");
}

std::string_view to_string(ViewKind kind) noexcept {
  switch (kind) {
    case ViewKind::Crop: return "crop";
    case ViewKind::Rotation: return "rotation";
    case ViewKind::Jitter: return "jitter";
    case ViewKind::Reflection: return "reflection";
  }
  return "unknown";
}

void ViewPlan::validate_for(const Raster& img) const {
  const std::uint32_t limit = std::min(img.width, img.height);
  for (auto s : crop_sizes) {
    if (s == 0) fail(ErrorKind::InvalidArgument, "crop size must be positive");
    if (s > limit) {
      fail(ErrorKind::CropTooLarge, fmt::format("crop {} exceeds image {}x{}", s, img.width, img.height));
    }
  }
  for (double d : rotation_degrees) {
    if (!(d > 0.0 && d < 360.0)) fail(ErrorKind::InvalidArgument, fmt::format("rotation {} outside (0, 360)", d));
  }
  jitter.validate();
}

std::string ViewPlan::describe() const {
  return fmt::format("crops={} rotations={} jitter={},{},{},{} jitter_samples={} reflection={}",
                     fmt::join(crop_sizes, ","), fmt::join(rotation_degrees, ","), jitter.brightness,
                     jitter.contrast, jitter.saturation, jitter.hue, jitter_samples, include_reflection);
}

Raster center_crop(const Raster& img, std::uint32_t size) {
  if (size == 0) fail(ErrorKind::InvalidArgument, "crop size must be positive");
  if (size > img.width || size > img.height) {
    fail(ErrorKind::CropTooLarge, fmt::format("crop {} exceeds image {}x{}", size, img.width, img.height));
  }
  const std::uint32_t x0 = (img.width - size) / 2;
  const std::uint32_t y0 = (img.height - size) / 2;
  Raster out(size, size);
  const std::size_t row_bytes = static_cast<std::size_t>(size) * Raster::kChannels;
  for (std::uint32_t y = 0; y < size; ++y) {
    const auto src = img.pixels.begin() + ((static_cast<std::size_t>(y0 + y) * img.width + x0) * Raster::kChannels);
    std::copy(src, src + static_cast<std::ptrdiff_t>(row_bytes), out.pixels.begin() + y * row_bytes);
  }
  return out;
}

namespace {

void copy_pixel(const Raster& src, std::uint32_t sx, std::uint32_t sy, Raster& dst, std::uint32_t dx,
                std::uint32_t dy) {
  for (std::uint32_t c = 0; c < Raster::kChannels; ++c) dst.at(dx, dy, c) = src.at(sx, sy, c);
}

Raster rotate_quarter_turns(const Raster& img, int turns) {
  const std::uint32_t w = img.width, h = img.height;
  if (turns == 2) {
    Raster out(w, h);
    for (std::uint32_t y = 0; y < h; ++y)
      for (std::uint32_t x = 0; x < w; ++x) copy_pixel(img, x, y, out, w - 1 - x, h - 1 - y);
    return out;
  }
  Raster out(h, w);
  for (std::uint32_t y = 0; y < h; ++y) {
    for (std::uint32_t x = 0; x < w; ++x) {
      // 90 CCW: top row becomes the left column read bottom-up.
      if (turns == 1) copy_pixel(img, x, y, out, y, w - 1 - x);
      else copy_pixel(img, x, y, out, h - 1 - y, x);
    }
  }
  return out;
}

std::uint8_t to_byte(double v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0))); }

}  // namespace

Raster rotate(const Raster& img, double degrees) {
  if (!(degrees > 0.0 && degrees < 360.0)) {
    fail(ErrorKind::InvalidArgument, fmt::format("rotation {} outside (0, 360)", degrees));
  }
  if (std::fmod(degrees, 90.0) == 0.0) return rotate_quarter_turns(img, static_cast<int>(degrees / 90.0));

  const double theta = degrees * std::numbers::pi / 180.0;
  const double cs = std::cos(theta), sn = std::sin(theta);
  const double cx = (img.width - 1) / 2.0, cy = (img.height - 1) / 2.0;
  const double max_x = img.width - 1, max_y = img.height - 1;
  constexpr double kEdge = 1e-9;
  Raster out(img.width, img.height);
  for (std::uint32_t y = 0; y < img.height; ++y) {
    for (std::uint32_t x = 0; x < img.width; ++x) {
      // Inverse map (y axis points down, so CCW on screen flips the sine sign).
      const double dx = x - cx, dy = y - cy;
      double sx = cx + dx * cs - dy * sn;
      double sy = cy + dx * sn + dy * cs;
      if (sx < -kEdge || sy < -kEdge || sx > max_x + kEdge || sy > max_y + kEdge) continue;
      sx = std::clamp(sx, 0.0, max_x);
      sy = std::clamp(sy, 0.0, max_y);
      const auto x0 = static_cast<std::uint32_t>(sx), y0 = static_cast<std::uint32_t>(sy);
      const std::uint32_t x1 = std::min(x0 + 1, img.width - 1), y1 = std::min(y0 + 1, img.height - 1);
      const double fx = sx - x0, fy = sy - y0;
      for (std::uint32_t c = 0; c < Raster::kChannels; ++c) {
        const double top = (1 - fx) * img.at(x0, y0, c) + fx * img.at(x1, y0, c);
        const double bottom = (1 - fx) * img.at(x0, y1, c) + fx * img.at(x1, y1, c);
        out.at(x, y, c) = to_byte((1 - fy) * top + fy * bottom);
      }
    }
  }
  return out;
}

namespace {

double luma(double r, double g, double b) { return 0.299 * r + 0.587 * g + 0.114 * b; }

void rgb_to_hsv(double r, double g, double b, double& h, double& s, double& v) {
  const double mx = std::max({r, g, b}), mn = std::min({r, g, b});
  const double delta = mx - mn;
  v = mx;
  s = mx > 0.0 ? delta / mx : 0.0;
  if (delta == 0.0) {
    h = 0.0;
    return;
  }
  if (mx == r) h = (g - b) / delta;
  else if (mx == g) h = 2.0 + (b - r) / delta;
  else h = 4.0 + (r - g) / delta;
  h /= 6.0;
  if (h < 0.0) h += 1.0;
}

void hsv_to_rgb(double h, double s, double v, double& r, double& g, double& b) {
  if (s == 0.0) {
    r = g = b = v;
    return;
  }
  const double h6 = h * 6.0;
  const int sector = static_cast<int>(std::floor(h6)) % 6;
  const double f = h6 - std::floor(h6);
  const double p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
  switch (sector) {
    case 0: r = v; g = t; b = p; break;
    case 1: r = q; g = v; b = p; break;
    case 2: r = p; g = v; b = t; break;
    case 3: r = p; g = q; b = v; break;
    case 4: r = t; g = p; b = v; break;
    default: r = v; g = p; b = q; break;
  }
}

}  // namespace

Raster color_jitter(const Raster& img, const JitterParams& jitter, RngStream& rng) {
  jitter.validate();
  const double bf = rng.uniform(1.0 - jitter.brightness, 1.0 + jitter.brightness);
  const double cf = rng.uniform(1.0 - jitter.contrast, 1.0 + jitter.contrast);
  const double sf = rng.uniform(1.0 - jitter.saturation, 1.0 + jitter.saturation);
  const double hf = rng.uniform(-jitter.hue, jitter.hue);

  const std::size_t n = static_cast<std::size_t>(img.width) * img.height;
  std::vector<double> px(img.pixels.begin(), img.pixels.end());
  auto clamp255 = [](double v) { return std::clamp(v, 0.0, 255.0); };

  for (double& v : px) v = clamp255(bf * v);

  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) mean += luma(px[3 * i], px[3 * i + 1], px[3 * i + 2]);
  mean /= static_cast<double>(n);
  for (double& v : px) v = clamp255(cf * v + (1.0 - cf) * mean);

  for (std::size_t i = 0; i < n; ++i) {
    const double gray = luma(px[3 * i], px[3 * i + 1], px[3 * i + 2]);
    for (int c = 0; c < 3; ++c) px[3 * i + c] = clamp255(sf * px[3 * i + c] + (1.0 - sf) * gray);
  }

  if (hf != 0.0) {
    for (std::size_t i = 0; i < n; ++i) {
      double h, s, v;
      rgb_to_hsv(px[3 * i] / 255.0, px[3 * i + 1] / 255.0, px[3 * i + 2] / 255.0, h, s, v);
      h += hf;
      h -= std::floor(h);
      double r, g, b;
      hsv_to_rgb(h, s, v, r, g, b);
      px[3 * i] = clamp255(r * 255.0);
      px[3 * i + 1] = clamp255(g * 255.0);
      px[3 * i + 2] = clamp255(b * 255.0);
    }
  }

  Raster out(img.width, img.height);
  for (std::size_t i = 0; i < px.size(); ++i) out.pixels[i] = to_byte(px[i]);
  return out;
}

Raster horizontal_flip(const Raster& img) {
  Raster out(img.width, img.height);
  for (std::uint32_t y = 0; y < img.height; ++y)
    for (std::uint32_t x = 0; x < img.width; ++x) copy_pixel(img, x, y, out, img.width - 1 - x, y);
  return out;
}

std::vector<View> generate_views(const Raster& img, const ViewPlan& plan, RngStream& rng) {
  plan.validate_for(img);
  if (plan.view_count() > 0xFFFF) fail(ErrorKind::InvalidArgument, "view plan exceeds 65535 views");
  std::vector<View> views;
  views.reserve(plan.view_count());
  std::uint16_t next_id = 1;
  for (auto size : plan.crop_sizes) views.push_back({next_id++, ViewKind::Crop, center_crop(img, size)});
  for (double deg : plan.rotation_degrees) views.push_back({next_id++, ViewKind::Rotation, rotate(img, deg)});
  for (std::uint32_t i = 0; i < plan.jitter_samples; ++i) {
    views.push_back({next_id++, ViewKind::Jitter, color_jitter(img, plan.jitter, rng)});
  }
  if (plan.include_reflection) views.push_back({next_id++, ViewKind::Reflection, horizontal_flip(img)});
  return views;
}

Modality view_modality(ViewKind kind) noexcept {
  return kind == ViewKind::Reflection ? Modality::VisualGeometric : Modality::VisualNatural;
}

std::vector<LabeledEmbedding> embed_views(std::span<const View> views, const ImageEncoder& encoder,
                                          std::uint32_t class_id, std::uint32_t item_id) {
  if (views.empty()) fail(ErrorKind::InvalidArgument, "embed_views needs at least one view");
  std::vector<Raster> rasters;
  rasters.reserve(views.size());
  for (const auto& v : views) rasters.push_back(v.raster);
  auto vectors = encoder.encode_images(rasters);
  if (vectors.size() != views.size()) {
    fail(ErrorKind::ProviderContractViolation,
         fmt::format("encoder returned {} vectors for {} views", vectors.size(), views.size()));
  }
  std::vector<LabeledEmbedding> out;
  out.reserve(views.size());
  for (std::size_t i = 0; i < views.size(); ++i) {
    out.push_back({class_id, item_id, views[i].view_id, view_modality(views[i].kind), std::move(vectors[i])});
  }
  return out;
}

EmbeddingVector toy_encode(const Raster& img, std::size_t dim) {
  if (dim < kToyFeatureDim) fail(ErrorKind::InvalidArgument, fmt::format("toy encoder dim must be >= {}", kToyFeatureDim));
  if (img.width == 0 || img.height == 0) fail(ErrorKind::InvalidArgument, "cannot encode an empty raster");
  // Cell j spans [floor(j*w/8), floor((j+1)*w/8)), widened to one pixel for tiny images.
  auto span_of = [](std::size_t j, std::uint32_t extent) {
    const std::size_t lo = j * extent / kToyGrid;
    const std::size_t hi = std::max(lo + 1, (j + 1) * extent / kToyGrid);
    return std::pair{lo, hi};
  };
  std::vector<double> out(dim, 0.0);
  for (std::size_t gy = 0; gy < kToyGrid; ++gy) {
    const auto [y0, y1] = span_of(gy, img.height);
    for (std::size_t gx = 0; gx < kToyGrid; ++gx) {
      const auto [x0, x1] = span_of(gx, img.width);
      const double count = static_cast<double>((y1 - y0) * (x1 - x0));
      for (std::uint32_t c = 0; c < Raster::kChannels; ++c) {
        double sum = 0.0;
        for (std::size_t y = y0; y < y1; ++y)
          for (std::size_t x = x0; x < x1; ++x)
            sum += img.at(static_cast<std::uint32_t>(x), static_cast<std::uint32_t>(y), c);
        out[(gy * kToyGrid + gx) * Raster::kChannels + c] = sum / count / 255.0;
      }
    }
  }
  return EmbeddingVector(std::move(out));
}

ToyImageEncoder::ToyImageEncoder(std::size_t dim) : dim_(dim) {
  if (dim < kToyFeatureDim) fail(ErrorKind::InvalidArgument, fmt::format("toy encoder dim must be >= {}", kToyFeatureDim));
}

std::vector<EmbeddingVector> ToyImageEncoder::encode_images(std::span<const Raster> images) const {
  std::vector<EmbeddingVector> out;
  out.reserve(images.size());
  for (const auto& img : images) out.push_back(toy_encode(img, dim_));
  return out;
}

std::string ToyImageEncoder::id() const { return fmt::format("toy-grid8-d{}", dim_); }

}  // namespace mpa
