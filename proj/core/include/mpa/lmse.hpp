#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "mpa/encoders.hpp"
#include "mpa/types.hpp"

namespace mpa {

enum class VariantOrigin : std::uint8_t { LlmProvider, CacheFile, Fallback };
std::string_view to_string(VariantOrigin origin) noexcept;

struct SemanticVariantSet {
  std::uint32_t class_id = 0;
  std::string class_name;
  std::vector<std::string> descriptions;
  VariantOrigin source = VariantOrigin::LlmProvider;
};

struct LmseConfig {
  std::uint32_t n_variants = 4;
  /// Identity of the description generator; part of the cache key.
  std::string llm_id = "provider-default";
  bool fallback_enabled = true;
};

/// Trims surrounding whitespace. Throws EmptyClassName if nothing remains.
std::string normalize_class_name(std::string_view class_name);

/// The fixed description-request prompt with the (trimmed) class name substituted.
std::string build_prompt(std::string_view class_name);

/// Offline template used when no generator is reachable.
std::string fallback_description(std::string_view class_name);

/// Persistent (class_name, n_variants, llm_id) -> descriptions map. Lookups and
/// inserts are serialized through one mutex; save() rewrites the whole file.
class VariantCache {
 public:
  struct Key {
    std::string class_name;
    std::uint32_t n_variants = 0;
    std::string llm_id;
    auto operator<=>(const Key&) const = default;
  };

  VariantCache() = default;
  /// Loads `path` if it exists (FormatError when malformed); saves go there.
  explicit VariantCache(std::filesystem::path path);

  std::optional<std::vector<std::string>> lookup(const Key& key) const;
  void insert(const Key& key, std::vector<std::string> descriptions);
  /// No-op for a cache without a backing path.
  void save() const;
  std::size_t size() const;

 private:
  struct Entry {
    std::vector<std::string> descriptions;
    std::string timestamp;
  };
  std::optional<std::filesystem::path> path_;
  std::map<Key, Entry> entries_;
  mutable std::mutex mutex_;
};

/// Cache first; on a miss asks `source` and persists the answer. If `source` is
/// null or fails with ProviderUnavailable and fallback is enabled, returns the
/// single fallback description (never cached).
SemanticVariantSet fetch_variants(std::uint32_t class_id, std::string_view class_name, const LmseConfig& config,
                                  const VariantSource* source, VariantCache* cache);

/// Tile end-to-end and truncate to target_dim (identity when dims agree).
EmbeddingVector fit_dimension(const EmbeddingVector& v, std::size_t target_dim);

/// One Semantic record per description: view_id = variant index, item_id = 0.
std::vector<LabeledEmbedding> semantic_features(const SemanticVariantSet& variants, const TextEncoder& encoder,
                                                std::size_t target_dim);

/// Offline text encoder: signed hashed character trigrams, L2-normalised.
/// Deterministic, but carries no visual semantics.
class ToyTextEncoder final : public TextEncoder {
 public:
  explicit ToyTextEncoder(std::size_t dim = 192);
  std::vector<EmbeddingVector> encode_texts(std::span<const std::string> texts) const override;
  std::string id() const override;

 private:
  std::size_t dim_;
};

}  // namespace mpa
