#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mpa/encoders.hpp"
#include "mpa/raster.hpp"
#include "mpa/rng.hpp"
#include "mpa/types.hpp"

namespace mpa {

/// Colour jitter magnitudes. Factors are drawn from [1-m, 1+m] (hue: [-m, +m]
/// turns of the hue circle).
struct JitterParams {
  double brightness = 0.5;
  double contrast = 0.5;
  double saturation = 0.5;
  double hue = 0.2;

  /// brightness/contrast/saturation in [0, 1], hue in [0, 0.5]; else InvalidArgument.
  void validate() const;
  bool operator==(const JitterParams&) const = default;
};

enum class ViewKind : std::uint8_t { Crop, Rotation, Jitter, Reflection };
std::string_view to_string(ViewKind kind) noexcept;

/// Transformation schedule applied to each support image.
struct ViewPlan {
  std::vector<std::uint32_t> crop_sizes{120, 170, 200};
  std::vector<double> rotation_degrees{45, 90, 180, 270, 315};
  JitterParams jitter;
  std::uint32_t jitter_samples = 1;
  bool include_reflection = true;

  std::size_t view_count() const noexcept {
    return crop_sizes.size() + rotation_degrees.size() + jitter_samples + (include_reflection ? 1 : 0);
  }
  /// Checks the plan against an input image. Throws CropTooLarge / InvalidArgument.
  void validate_for(const Raster& img) const;
  /// Compact one-line description recorded in bank manifests.
  std::string describe() const;
};

struct View {
  std::uint16_t view_id = 0;
  ViewKind kind = ViewKind::Crop;
  Raster raster;
};

/// size x size window at offset (floor((w-size)/2), floor((h-size)/2)).
Raster center_crop(const Raster& img, std::uint32_t size);

/// Counter-clockwise rotation about the image centre. Multiples of 90 degrees
/// are exact pixel permutations (90/270 swap width and height); other angles
/// keep the input size, sample bilinearly and fill out-of-frame pixels black.
Raster rotate(const Raster& img, double degrees);

/// brightness -> contrast -> saturation -> hue, clamping to [0, 255] after each.
/// Always consumes exactly four uniforms from `rng`.
Raster color_jitter(const Raster& img, const JitterParams& jitter, RngStream& rng);

Raster horizontal_flip(const Raster& img);

/// Every transform is applied to the original image, never composed. Order:
/// crops, rotations, jitter samples, reflection; view ids count up from 1.
std::vector<View> generate_views(const Raster& img, const ViewPlan& plan, RngStream& rng);

/// Reflection is geometric; crops, rotations and jitter are natural views.
Modality view_modality(ViewKind kind) noexcept;

std::vector<LabeledEmbedding> embed_views(std::span<const View> views, const ImageEncoder& encoder,
                                          std::uint32_t class_id, std::uint32_t item_id);

inline constexpr std::size_t kToyGrid = 8;
inline constexpr std::size_t kToyFeatureDim = kToyGrid * kToyGrid * Raster::kChannels;

/// Offline stand-in encoder: area-average onto an 8x8 grid, scale to [0, 1],
/// flatten (row, column, channel) and zero-pad to `dim` (>= 192).
EmbeddingVector toy_encode(const Raster& img, std::size_t dim = kToyFeatureDim);

class ToyImageEncoder final : public ImageEncoder {
 public:
  explicit ToyImageEncoder(std::size_t dim = kToyFeatureDim);
  std::vector<EmbeddingVector> encode_images(std::span<const Raster> images) const override;
  std::string id() const override;

 private:
  std::size_t dim_;
};

}  // namespace mpa
