#pragma once

#include <compare>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string_view>
#include <tuple>
#include <vector>

namespace mpa {

/// Dense embedding coordinates. Arithmetic is binary64; the bank stores binary32.
/// Construction rejects empty or non-finite input, so every live instance is valid.
class EmbeddingVector {
 public:
  explicit EmbeddingVector(std::vector<double> values);
  EmbeddingVector(std::initializer_list<double> values);

  std::size_t dim() const noexcept { return values_.size(); }
  std::span<const double> values() const noexcept { return values_; }
  double operator[](std::size_t i) const { return values_[i]; }

  auto begin() const noexcept { return values_.begin(); }
  auto end() const noexcept { return values_.end(); }

  bool operator==(const EmbeddingVector&) const = default;

 private:
  std::vector<double> values_;
};

enum class Modality : std::uint8_t {
  VisualRaw = 0,
  VisualNatural = 1,
  VisualGeometric = 2,
  Semantic = 3,
  Uncertain = 4,
};

std::string_view to_string(Modality m) noexcept;
/// Throws FormatError for codes outside 0..4.
Modality modality_from_code(std::uint8_t code);

struct RecordKey {
  std::uint32_t class_id = 0;
  std::uint32_t item_id = 0;
  std::uint16_t view_id = 0;
  Modality modality = Modality::VisualRaw;

  auto operator<=>(const RecordKey&) const = default;
};

struct LabeledEmbedding {
  std::uint32_t class_id = 0;
  std::uint32_t item_id = 0;
  std::uint16_t view_id = 0;  // 0 = raw / original
  Modality modality = Modality::VisualRaw;
  EmbeddingVector vector;

  RecordKey key() const noexcept { return {class_id, item_id, view_id, modality}; }
  bool operator==(const LabeledEmbedding&) const = default;
};

struct Prototype {
  std::uint32_t class_id = 0;
  EmbeddingVector vector;
};

struct EpisodeSpec {
  std::uint32_t n_way = 5;
  std::uint32_t k_shot = 1;
  std::uint32_t q_queries = 15;
  std::uint64_t seed = 0;

  /// Throws InvalidArgument unless n_way >= 2, k_shot >= 1, q_queries >= 1.
  void validate() const;
};

}  // namespace mpa
