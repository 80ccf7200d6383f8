#include "mpa/lmse.hpp"

#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iterator>

#include <fmt/chrono.h>
#include <fmt/format.h>
#include <json.hpp>

#include "mpa/error.hpp"

namespace mpa {

using nlohmann::json;

std::string_view to_string(VariantOrigin origin) noexcept {
  switch (origin) {
    case VariantOrigin::LlmProvider: return "llm_provider";
    case VariantOrigin::CacheFile: return "cache_file";
    case VariantOrigin::Fallback: return "fallback";
  }
  return "unknown";
}

std::string normalize_class_name(std::string_view class_name) {
  constexpr std::string_view kSpace = " \t\r\n\f\v";
  const auto first = class_name.find_first_not_of(kSpace);
  if (first == std::string_view::npos) fail(ErrorKind::EmptyClassName, "class name is empty");
  const auto last = class_name.find_last_not_of(kSpace);
  return std::string(class_name.substr(first, last - first + 1));
}

std::string build_prompt(std::string_view class_name) {
  return "Please generate an appearance description for " + normalize_class_name(class_name) +
         ", with four paraphrased variants.";
}

std::string fallback_description(std::string_view class_name) {
  return "a photo of a " + normalize_class_name(class_name);
}

VariantCache::VariantCache(std::filesystem::path path) : path_(std::move(path)) {
  if (!std::filesystem::exists(*path_)) return;
  std::ifstream in(*path_);
  if (!in) fail(ErrorKind::IoError, "cannot open variant cache " + path_->string());
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    const json j = json::parse(text);
    for (const auto& e : j.at("entries")) {
      Key key{e.at("class_name").get<std::string>(), e.at("n_variants").get<std::uint32_t>(),
              e.at("llm_id").get<std::string>()};
      entries_[key] = Entry{e.at("descriptions").get<std::vector<std::string>>(), e.value("timestamp", "")};
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::FormatError, fmt::format("malformed variant cache {}: {}", path_->string(), e.what()));
  }
}

std::optional<std::vector<std::string>> VariantCache::lookup(const Key& key) const {
  std::lock_guard lock(mutex_);
  const auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second.descriptions;
}

void VariantCache::insert(const Key& key, std::vector<std::string> descriptions) {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::lock_guard lock(mutex_);
  entries_[key] = Entry{std::move(descriptions), fmt::format("{:%Y-%m-%dT%H:%M:%SZ}", fmt::gmtime(now))};
}

void VariantCache::save() const {
  if (!path_) return;
  std::lock_guard lock(mutex_);
  json entries = json::array();
  for (const auto& [key, entry] : entries_) {
    entries.push_back({{"llm_id", key.llm_id},
                       {"class_name", key.class_name},
                       {"n_variants", key.n_variants},
                       {"descriptions", entry.descriptions},
                       {"timestamp", entry.timestamp}});
  }
  const auto tmp = std::filesystem::path(path_->string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) fail(ErrorKind::IoError, "cannot write variant cache " + tmp.string());
    out << json{{"entries", entries}}.dump(2) << '\n';
    if (!out) fail(ErrorKind::IoError, "write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, *path_);
}

std::size_t VariantCache::size() const {
  std::lock_guard lock(mutex_);
  return entries_.size();
}

SemanticVariantSet fetch_variants(std::uint32_t class_id, std::string_view class_name, const LmseConfig& config,
                                  const VariantSource* source, VariantCache* cache) {
  const std::string name = normalize_class_name(class_name);
  if (config.n_variants == 0) fail(ErrorKind::InvalidArgument, "n_variants must be >= 1");
  const VariantCache::Key key{name, config.n_variants, config.llm_id};

  if (cache != nullptr) {
    if (auto hit = cache->lookup(key)) return {class_id, name, std::move(*hit), VariantOrigin::CacheFile};
  }

  auto fallback = [&] {
    return SemanticVariantSet{class_id, name, {fallback_description(name)}, VariantOrigin::Fallback};
  };

  if (source == nullptr) {
    if (config.fallback_enabled) return fallback();
    fail(ErrorKind::ProviderUnavailable, "no description generator configured for class '" + name + "'");
  }

  std::vector<std::string> descriptions;
  try {
    descriptions = source->generate_variants(name, build_prompt(name), config.n_variants);
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::ProviderUnavailable && config.fallback_enabled) return fallback();
    throw;
  }
  if (descriptions.size() != config.n_variants + 1) {
    fail(ErrorKind::ProviderContractViolation,
         fmt::format("expected {} descriptions for '{}', got {}", config.n_variants + 1, name, descriptions.size()));
  }
  for (const auto& d : descriptions) {
    if (d.find_first_not_of(" \t\r\n") == std::string::npos) {
      fail(ErrorKind::ProviderContractViolation, "empty description for '" + name + "'");
    }
  }
  if (cache != nullptr) {
    cache->insert(key, descriptions);
    cache->save();
  }
  return {class_id, name, std::move(descriptions), VariantOrigin::LlmProvider};
}

EmbeddingVector fit_dimension(const EmbeddingVector& v, std::size_t target_dim) {
  if (target_dim == 0) fail(ErrorKind::InvalidArgument, "target_dim must be >= 1");
  if (v.dim() == target_dim) return v;
  std::vector<double> out(target_dim);
  for (std::size_t i = 0; i < target_dim; ++i) out[i] = v[i % v.dim()];
  return EmbeddingVector(std::move(out));
}

std::vector<LabeledEmbedding> semantic_features(const SemanticVariantSet& variants, const TextEncoder& encoder,
                                                std::size_t target_dim) {
  if (target_dim == 0) fail(ErrorKind::InvalidArgument, "target_dim must be >= 1");
  if (variants.descriptions.empty()) fail(ErrorKind::InvalidArgument, "variant set has no descriptions");
  if (variants.descriptions.size() > 0xFFFF) fail(ErrorKind::InvalidArgument, "too many descriptions");
  const auto vectors = encoder.encode_texts(variants.descriptions);
  if (vectors.size() != variants.descriptions.size()) {
    fail(ErrorKind::ProviderContractViolation,
         fmt::format("text encoder returned {} vectors for {} texts", vectors.size(), variants.descriptions.size()));
  }
  std::vector<LabeledEmbedding> out;
  out.reserve(vectors.size());
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    out.push_back({variants.class_id, 0, static_cast<std::uint16_t>(i), Modality::Semantic,
                   fit_dimension(vectors[i], target_dim)});
  }
  return out;
}

namespace {

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

ToyTextEncoder::ToyTextEncoder(std::size_t dim) : dim_(dim) {
  if (dim == 0) fail(ErrorKind::InvalidArgument, "toy text encoder dim must be >= 1");
}

std::vector<EmbeddingVector> ToyTextEncoder::encode_texts(std::span<const std::string> texts) const {
  std::vector<EmbeddingVector> out;
  out.reserve(texts.size());
  for (const auto& raw : texts) {
    std::string text;
    for (unsigned char c : raw) text.push_back(static_cast<char>(std::tolower(c)));
    std::vector<double> v(dim_, 0.0);
    auto add = [&](std::string_view feature) {
      const std::uint64_t h = fnv1a(feature);
      v[h % dim_] += (h >> 63) ? 1.0 : -1.0;
    };
    const std::string padded = " " + text + " ";
    for (std::size_t i = 0; i + 3 <= padded.size(); ++i) add(std::string_view(padded).substr(i, 3));
    double norm = 0.0;
    for (double x : v) norm += x * x;
    if (norm == 0.0) {
      v[0] = 1.0;
      norm = 1.0;
    }
    norm = std::sqrt(norm);
    for (double& x : v) x /= norm;
    out.emplace_back(std::move(v));
  }
  return out;
}

std::string ToyTextEncoder::id() const { return fmt::format("toy-trigram-d{}", dim_); }

}  // namespace mpa
