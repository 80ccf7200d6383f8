#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "mpa/types.hpp"

namespace mpa {

// Bank file layout (little-endian throughout):
//   header  magic[4]="MPAB" | version u32 | dim u32 | dtype u8 | pad[3]=0 | record_count u64
//   record  class_id u32 | item_id u32 | view_id u16 | modality u8 | reserved u8 | dim x f32
inline constexpr std::array<char, 4> kBankMagic{'M', 'P', 'A', 'B'};
inline constexpr std::uint32_t kBankVersion = 1;
inline constexpr std::uint8_t kDtypeFloat32 = 1;
inline constexpr std::size_t kBankHeaderBytes = 24;
inline constexpr std::size_t kRecordPrefixBytes = 12;

constexpr std::size_t record_bytes(std::uint32_t dim) noexcept { return kRecordPrefixBytes + 4u * dim; }

struct BankHeader {
  std::uint32_t version = kBankVersion;
  std::uint32_t dim = 0;
  std::uint8_t dtype = kDtypeFloat32;
  std::uint64_t record_count = 0;
};

/// Human-editable sidecar describing a bank. Stored as JSON next to the bank.
struct Manifest {
  std::string dataset_name;
  std::string encoder_id;
  std::map<std::uint32_t, std::string> class_names;
  std::map<std::string, std::string> metadata;

  std::string to_json() const;
  /// Throws FormatError on malformed input.
  static Manifest from_json(const std::string& text);

  bool operator==(const Manifest&) const = default;
};

/// Serializes records into the bank byte layout. Records are validated first
/// (non-empty, uniform dim, unique keys); values are narrowed to binary32.
std::vector<std::uint8_t> encode_bank(std::span<const LabeledEmbedding> records);

struct DecodedBank {
  BankHeader header;
  std::vector<LabeledEmbedding> records;
};

/// Parses a complete bank image. Throws FormatError on any layout violation.
DecodedBank decode_bank(std::span<const std::uint8_t> bytes);
BankHeader decode_bank_header(std::span<const std::uint8_t> bytes);

std::filesystem::path manifest_path(const std::filesystem::path& bank_path);

/// Writes `path` and `path.manifest`. Every class_id in `records` must be named
/// in the manifest.
void write_bank(std::span<const LabeledEmbedding> records, const Manifest& manifest,
                const std::filesystem::path& path);

struct BankFile {
  std::vector<LabeledEmbedding> records;
  Manifest manifest;
};

BankFile read_bank(const std::filesystem::path& path);
BankHeader read_bank_header(const std::filesystem::path& path);

/// In-memory, indexed, read-only bank. Safe to share across threads.
class EmbeddingBank {
 public:
  EmbeddingBank(std::vector<LabeledEmbedding> records, Manifest manifest);
  static EmbeddingBank load(const std::filesystem::path& path);

  std::uint32_t dim() const noexcept { return dim_; }
  std::span<const LabeledEmbedding> records() const noexcept { return records_; }
  const Manifest& manifest() const noexcept { return manifest_; }

  /// Sorted ids of classes owning at least one raw record.
  const std::vector<std::uint32_t>& class_ids() const noexcept { return class_ids_; }
  /// Sorted raw item ids of a class (empty if unknown).
  std::span<const std::uint32_t> raw_items(std::uint32_t class_id) const;

  const LabeledEmbedding* find(const RecordKey& key) const;
  /// Raw record of (class, item); throws InsufficientData when absent.
  const LabeledEmbedding& raw(std::uint32_t class_id, std::uint32_t item_id) const;
  /// Natural and geometric view records of one item, ordered by view_id.
  std::vector<const LabeledEmbedding*> views(std::uint32_t class_id, std::uint32_t item_id) const;
  /// Semantic records of a class, ordered by view_id.
  std::vector<const LabeledEmbedding*> semantic(std::uint32_t class_id) const;

  std::string class_name(std::uint32_t class_id) const;

 private:
  std::vector<LabeledEmbedding> records_;
  Manifest manifest_;
  std::uint32_t dim_ = 0;
  std::map<RecordKey, std::size_t> index_;
  std::map<std::uint32_t, std::vector<std::uint32_t>> raw_items_;
  std::vector<std::uint32_t> class_ids_;
};

}  // namespace mpa
