#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "mpa/bank.hpp"
#include "mpa/encoders.hpp"
#include "mpa/hma.hpp"
#include "mpa/lmse.hpp"

namespace mpa {

enum class Regime : std::uint8_t { Separated, Clustered };
std::string_view to_string(Regime r) noexcept;
/// "separated" | "clustered"; InvalidArgument otherwise.
Regime regime_from_string(std::string_view s);

struct RegimeBankConfig {
  Regime regime = Regime::Separated;
  std::uint32_t n_classes = 5;
  std::uint32_t dim = 64;
  std::uint32_t items_per_class = 40;
  /// Extra Natural view records per raw item (item + 0.25 sigma noise); 0 = none.
  std::uint32_t views_per_item = 0;
  /// Semantic records per class (class mean + 0.25 sigma noise); 0 = none.
  std::uint32_t semantic_per_class = 0;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Class means A*u0 + B_j*u_j over an orthonormal basis {u0, u1, ...}; items
/// add N(0, I) noise (sigma = 1). A = 24 is shared by every class; B_j is
/// geometric from 6 to 96 (separated: pairwise mean distance >= 13 sigma) or from
/// 0.1 to 0.7 (clustered: pairwise distance < 1 sigma). Requires dim > n_classes.
std::vector<EmbeddingVector> regime_class_means(const RegimeBankConfig& config);
EmbeddingBank synthesize_regime_bank(const RegimeBankConfig& config);

/// Deterministic stand-in description generator: the class name followed by
/// a variant tag.
class TemplateVariantSource final : public VariantSource {
 public:
  std::vector<std::string> generate_variants(const std::string& class_name, const std::string& prompt,
                                             std::uint32_t n_variants) const override;
  std::string id() const override { return "template-variants"; }
};

/// Text encoder aligned with an image encoder: a text naming a known class maps
/// to that class's reference embedding plus small text-seeded noise. Texts
/// naming no known class are an InvalidArgument.
class TemplateTextEncoder final : public TextEncoder {
 public:
  TemplateTextEncoder(std::map<std::string, EmbeddingVector> references, double noise_sigma = 0.01);
  std::vector<EmbeddingVector> encode_texts(std::span<const std::string> texts) const override;
  std::string id() const override { return "template-text"; }

 private:
  std::map<std::string, EmbeddingVector> references_;
  double noise_sigma_;
};

struct NoisyImageConfig {
  std::uint32_t n_classes = 10;
  std::uint32_t items_per_class = 20;
  std::uint32_t image_size = 224;
  /// Per-cell colour offsets of a class template around its base colour.
  double template_spread = 40.0;
  /// Per-item, per-cell colour noise.
  double cell_sigma = 120.0;
  /// Per-pixel noise.
  double pixel_sigma = 20.0;
  ViewPlan plan;
  std::uint32_t n_variants = 4;
  std::uint64_t seed = 0;

  void validate() const;
};

struct NoisyImageClass {
  std::string name;
  Raster clean;
  std::vector<Raster> items;
};

/// Class images built from per-class random 8x8 colour templates plus cell and
/// pixel noise.
std::vector<NoisyImageClass> noisy_image_classes(const NoisyImageConfig& config);

/// Bank of toy-encoded raw images, their HMA views and semantic records
/// generated through the LMSE chain with TemplateVariantSource and a
/// TemplateTextEncoder aligned to the clean templates.
EmbeddingBank synthesize_noisy_image_bank(const NoisyImageConfig& config);

}  // namespace mpa
