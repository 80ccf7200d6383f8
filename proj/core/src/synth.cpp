#include "mpa/synth.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "mpa/error.hpp"
#include "mpa/rng.hpp"

namespace mpa {

namespace {

constexpr double kSharedScale = 24.0;
constexpr double kEnrichmentSigma = 0.25;

std::string class_label(std::uint32_t c) { return fmt::format("class_{:02}", c); }

std::vector<double> geometric(double lo, double hi, std::uint32_t n) {
  std::vector<double> out(n);
  for (std::uint32_t i = 0; i < n; ++i)
    out[i] = n == 1 ? lo : lo * std::pow(hi / lo, static_cast<double>(i) / (n - 1));
  return out;
}

std::vector<std::vector<double>> orthonormal_basis(std::uint32_t count, std::uint32_t dim, RngStream& rng) {
  std::vector<std::vector<double>> basis;
  while (basis.size() < count) {
    std::vector<double> v(dim);
    for (auto& x : v) x = rng.normal();
    for (const auto& b : basis) {
      double p = 0.0;
      for (std::uint32_t d = 0; d < dim; ++d) p += v[d] * b[d];
      for (std::uint32_t d = 0; d < dim; ++d) v[d] -= p * b[d];
    }
    double n = 0.0;
    for (double x : v) n += x * x;
    n = std::sqrt(n);
    if (n < 1e-6) continue;
    for (auto& x : v) x /= n;
    basis.push_back(std::move(v));
  }
  return basis;
}

EmbeddingVector add_noise(const EmbeddingVector& v, double sigma, RngStream& rng) {
  std::vector<double> out(v.begin(), v.end());
  for (auto& x : out) x += sigma * rng.normal();
  return EmbeddingVector(std::move(out));
}

std::uint8_t to_byte(double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); }

std::uint64_t text_seed(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

std::string_view to_string(Regime r) noexcept { return r == Regime::Separated ? "separated" : "clustered"; }

Regime regime_from_string(std::string_view s) {
  if (s == "separated") return Regime::Separated;
  if (s == "clustered") return Regime::Clustered;
  fail(ErrorKind::InvalidArgument, fmt::format("unknown regime '{}' (expected separated or clustered)", s));
}

void RegimeBankConfig::validate() const {
  if (n_classes < 2) fail(ErrorKind::InvalidArgument, "synthetic bank needs at least 2 classes");
  if (dim <= n_classes)
    fail(ErrorKind::InvalidArgument, fmt::format("dim {} must exceed the class count {}", dim, n_classes));
  if (items_per_class == 0) fail(ErrorKind::InvalidArgument, "items per class must be positive");
  if (views_per_item > 0xFFFF || semantic_per_class > 0xFFFF)
    fail(ErrorKind::InvalidArgument, "view and semantic counts must fit in 16 bits");
}

std::vector<EmbeddingVector> regime_class_means(const RegimeBankConfig& config) {
  config.validate();
  RngStream root(config.seed);
  auto basis_rng = root.child(1);
  const auto basis = orthonormal_basis(config.n_classes + 1, config.dim, basis_rng);
  const auto specific = config.regime == Regime::Separated ? geometric(6.0, 96.0, config.n_classes)
                                                           : geometric(0.1, 0.7, config.n_classes);
  std::vector<EmbeddingVector> means;
  for (std::uint32_t c = 0; c < config.n_classes; ++c) {
    std::vector<double> m(config.dim);
    for (std::uint32_t d = 0; d < config.dim; ++d)
      m[d] = kSharedScale * basis[0][d] + specific[c] * basis[c + 1][d];
    means.emplace_back(std::move(m));
  }
  return means;
}

EmbeddingBank synthesize_regime_bank(const RegimeBankConfig& config) {
  const auto means = regime_class_means(config);
  RngStream root(config.seed);
  std::vector<LabeledEmbedding> records;
  Manifest manifest;
  manifest.dataset_name = fmt::format("synthetic-{}", to_string(config.regime));
  manifest.encoder_id = "synthetic-gaussian";
  manifest.metadata["regime"] = std::string(to_string(config.regime));
  manifest.metadata["seed"] = std::to_string(config.seed);

  for (std::uint32_t c = 0; c < config.n_classes; ++c) {
    manifest.class_names[c] = class_label(c);
    auto rng = root.child(100 + c);
    for (std::uint32_t i = 0; i < config.items_per_class; ++i) {
      auto item = add_noise(means[c], 1.0, rng);
      for (std::uint32_t v = 1; v <= config.views_per_item; ++v)
        records.push_back({c, i, static_cast<std::uint16_t>(v), Modality::VisualNatural,
                           add_noise(item, kEnrichmentSigma, rng)});
      records.push_back({c, i, 0, Modality::VisualRaw, std::move(item)});
    }
    for (std::uint32_t s = 0; s < config.semantic_per_class; ++s)
      records.push_back({c, 0, static_cast<std::uint16_t>(s), Modality::Semantic,
                         add_noise(means[c], kEnrichmentSigma, rng)});
  }
  return EmbeddingBank(std::move(records), std::move(manifest));
}

std::vector<std::string> TemplateVariantSource::generate_variants(const std::string& class_name,
                                                                  const std::string& /*prompt*/,
                                                                  std::uint32_t n_variants) const {
  std::vector<std::string> out{fmt::format("{} as usually seen", class_name)};
  for (std::uint32_t i = 1; i <= n_variants; ++i) out.push_back(fmt::format("{}, rendering {}", class_name, i));
  return out;
}

TemplateTextEncoder::TemplateTextEncoder(std::map<std::string, EmbeddingVector> references, double noise_sigma)
    : references_(std::move(references)), noise_sigma_(noise_sigma) {
  if (references_.empty()) fail(ErrorKind::InvalidArgument, "template text encoder needs references");
  const auto dim = references_.begin()->second.dim();
  for (const auto& [name, v] : references_)
    if (v.dim() != dim) fail(ErrorKind::DimMismatch, "template references differ in dimension");
  if (!(noise_sigma_ >= 0.0)) fail(ErrorKind::InvalidArgument, "noise sigma must be non-negative");
}

std::vector<EmbeddingVector> TemplateTextEncoder::encode_texts(std::span<const std::string> texts) const {
  std::vector<EmbeddingVector> out;
  out.reserve(texts.size());
  for (const auto& text : texts) {
    const EmbeddingVector* best = nullptr;
    std::size_t best_len = 0;
    for (const auto& [name, v] : references_)
      if (name.size() > best_len && text.find(name) != std::string::npos) {
        best = &v;
        best_len = name.size();
      }
    if (best == nullptr) fail(ErrorKind::InvalidArgument, fmt::format("text names no known class: '{}'", text));
    RngStream rng(text_seed(text));
    out.push_back(add_noise(*best, noise_sigma_, rng));
  }
  return out;
}

void NoisyImageConfig::validate() const {
  if (n_classes < 2) fail(ErrorKind::InvalidArgument, "fixture needs at least 2 classes");
  if (items_per_class == 0) fail(ErrorKind::InvalidArgument, "items per class must be positive");
  if (image_size < kToyGrid) fail(ErrorKind::InvalidArgument, "image too small for the toy grid");
  if (!(template_spread >= 0.0 && cell_sigma >= 0.0 && pixel_sigma >= 0.0))
    fail(ErrorKind::InvalidArgument, "noise levels must be non-negative");
}

std::vector<NoisyImageClass> noisy_image_classes(const NoisyImageConfig& config) {
  config.validate();
  const std::uint32_t n = config.image_size;
  const std::size_t cells = kToyGrid * kToyGrid * Raster::kChannels;
  auto cell_of = [&](std::uint32_t p) { return std::min<std::size_t>(kToyGrid - 1, p * kToyGrid / n); };
  auto render = [&](const std::vector<double>& grid, double pixel_sigma, RngStream& rng) {
    Raster img(n, n);
    for (std::uint32_t y = 0; y < n; ++y)
      for (std::uint32_t x = 0; x < n; ++x)
        for (std::uint32_t ch = 0; ch < Raster::kChannels; ++ch) {
          const double base = grid[(cell_of(y) * kToyGrid + cell_of(x)) * Raster::kChannels + ch];
          img.at(x, y, ch) = to_byte(pixel_sigma > 0.0 ? base + pixel_sigma * rng.normal() : base);
        }
    return img;
  };

  RngStream root(config.seed);
  std::vector<NoisyImageClass> out;
  for (std::uint32_t c = 0; c < config.n_classes; ++c) {
    auto rng = root.child(c);
    double base[Raster::kChannels];
    for (auto& b : base) b = rng.uniform(60.0, 195.0);
    std::vector<double> tmpl(cells);
    for (std::size_t k = 0; k < cells; ++k)
      tmpl[k] = base[k % Raster::kChannels] + rng.uniform(-config.template_spread, config.template_spread);

    NoisyImageClass cls;
    cls.name = class_label(c);
    cls.clean = render(tmpl, 0.0, rng);
    for (std::uint32_t i = 0; i < config.items_per_class; ++i) {
      std::vector<double> grid(tmpl);
      for (auto& g : grid) g += config.cell_sigma * rng.normal();
      cls.items.push_back(render(grid, config.pixel_sigma, rng));
    }
    out.push_back(std::move(cls));
  }
  return out;
}

EmbeddingBank synthesize_noisy_image_bank(const NoisyImageConfig& config) {
  const auto classes = noisy_image_classes(config);
  const ToyImageEncoder encoder;

  std::map<std::string, EmbeddingVector> references;
  for (const auto& cls : classes) references.emplace(cls.name, toy_encode(cls.clean));
  const TemplateTextEncoder text_encoder(references);
  const TemplateVariantSource variants;
  LmseConfig lmse;
  lmse.n_variants = config.n_variants;
  lmse.llm_id = variants.id();
  lmse.fallback_enabled = false;

  Manifest manifest;
  manifest.dataset_name = "synthetic-noisy-images";
  manifest.encoder_id = encoder.id();
  manifest.metadata["view_plan"] = config.plan.describe();
  manifest.metadata["text_encoder"] = text_encoder.id();
  manifest.metadata["seed"] = std::to_string(config.seed);

  std::vector<LabeledEmbedding> records;
  for (std::uint32_t c = 0; c < classes.size(); ++c) {
    const auto& cls = classes[c];
    manifest.class_names[c] = cls.name;
    for (std::uint32_t i = 0; i < cls.items.size(); ++i) {
      const auto& img = cls.items[i];
      records.push_back({c, i, 0, Modality::VisualRaw, toy_encode(img)});
      auto rng = RngStream(mix_seed(config.seed, (static_cast<std::uint64_t>(c) << 32) | i));
      const auto views = generate_views(img, config.plan, rng);
      for (auto& r : embed_views(views, encoder, c, i)) records.push_back(std::move(r));
    }
    const auto set = fetch_variants(c, cls.name, lmse, &variants, nullptr);
    for (auto& r : semantic_features(set, text_encoder, kToyFeatureDim)) {
      records.push_back(std::move(r));
    }
  }
  return EmbeddingBank(std::move(records), std::move(manifest));
}

}  // namespace mpa
