#include "mpa/bank.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>

#include <fmt/format.h>
#include <json.hpp>

#include "mpa/error.hpp"

namespace mpa {

using nlohmann::json;

namespace {

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint16_t get_u16(const std::uint8_t* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

std::uint64_t get_u64(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

void validate_records(std::span<const LabeledEmbedding> records) {
  if (records.empty()) fail(ErrorKind::InvalidArgument, "bank must contain at least one record");
  const std::size_t dim = records.front().vector.dim();
  std::vector<RecordKey> keys;
  keys.reserve(records.size());
  for (const auto& r : records) {
    if (r.vector.dim() != dim) {
      fail(ErrorKind::DimMismatch,
           fmt::format("record (class {}, item {}) has dim {}, bank dim is {}", r.class_id, r.item_id,
                       r.vector.dim(), dim));
    }
    keys.push_back(r.key());
  }
  std::sort(keys.begin(), keys.end());
  const auto dup = std::adjacent_find(keys.begin(), keys.end());
  if (dup != keys.end()) {
    fail(ErrorKind::DuplicateRecord,
         fmt::format("duplicate record key (class {}, item {}, view {}, {})", dup->class_id, dup->item_id,
                     dup->view_id, to_string(dup->modality)));
  }
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::IoError, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) fail(ErrorKind::IoError, "read failed: " + path.string());
  return bytes;
}

void write_file(const std::filesystem::path& path, const void* data, std::size_t size) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::IoError, "cannot open for writing: " + path.string());
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(size));
  if (!out) fail(ErrorKind::IoError, "write failed: " + path.string());
}

}  // namespace

std::string Manifest::to_json() const {
  json names = json::object();
  for (const auto& [id, name] : class_names) names[std::to_string(id)] = name;
  json j = {
      {"dataset_name", dataset_name},
      {"encoder_id", encoder_id},
      {"class_names", names},
      {"metadata", metadata},
  };
  return j.dump(2) + "\n";
}

Manifest Manifest::from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    Manifest m;
    m.dataset_name = j.value("dataset_name", "");
    m.encoder_id = j.value("encoder_id", "");
    for (const auto& [key, value] : j.at("class_names").items()) {
      std::size_t consumed = 0;
      const unsigned long id = std::stoul(key, &consumed);
      if (consumed != key.size() || id > 0xFFFFFFFFul) {
        fail(ErrorKind::FormatError, "manifest class id '" + key + "' is not a u32");
      }
      m.class_names[static_cast<std::uint32_t>(id)] = value.get<std::string>();
    }
    if (j.contains("metadata")) {
      for (const auto& [key, value] : j.at("metadata").items()) {
        m.metadata[key] = value.is_string() ? value.get<std::string>() : value.dump();
      }
    }
    return m;
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    fail(ErrorKind::FormatError, std::string("malformed manifest: ") + e.what());
  }
}

std::vector<std::uint8_t> encode_bank(std::span<const LabeledEmbedding> records) {
  validate_records(records);
  const auto dim = static_cast<std::uint32_t>(records.front().vector.dim());
  std::vector<std::uint8_t> out;
  out.reserve(kBankHeaderBytes + records.size() * record_bytes(dim));
  out.insert(out.end(), kBankMagic.begin(), kBankMagic.end());
  put_u32(out, kBankVersion);
  put_u32(out, dim);
  out.push_back(kDtypeFloat32);
  out.insert(out.end(), 3, std::uint8_t{0});
  put_u64(out, records.size());
  for (const auto& r : records) {
    put_u32(out, r.class_id);
    put_u32(out, r.item_id);
    put_u16(out, r.view_id);
    out.push_back(static_cast<std::uint8_t>(r.modality));
    out.push_back(0);
    for (double x : r.vector) {
      const auto f = static_cast<float>(x);
      if (!std::isfinite(f)) {
        fail(ErrorKind::NonFiniteValue,
             fmt::format("value {} of class {} item {} overflows binary32", x, r.class_id, r.item_id));
      }
      put_u32(out, std::bit_cast<std::uint32_t>(f));
    }
  }
  return out;
}

BankHeader decode_bank_header(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kBankHeaderBytes) {
    fail(ErrorKind::FormatError, fmt::format("bank too short for header: {} bytes", bytes.size()));
  }
  if (!std::equal(kBankMagic.begin(), kBankMagic.end(), bytes.begin(),
                  [](char a, std::uint8_t b) { return static_cast<std::uint8_t>(a) == b; })) {
    fail(ErrorKind::FormatError, "bad bank magic");
  }
  BankHeader h;
  h.version = get_u32(bytes.data() + 4);
  h.dim = get_u32(bytes.data() + 8);
  h.dtype = bytes[12];
  h.record_count = get_u64(bytes.data() + 16);
  if (h.version != kBankVersion) fail(ErrorKind::FormatError, fmt::format("unsupported bank version {}", h.version));
  if (h.dim == 0) fail(ErrorKind::FormatError, "bank dim must be >= 1");
  if (h.dtype != kDtypeFloat32) fail(ErrorKind::FormatError, fmt::format("unsupported dtype code {}", h.dtype));
  if (bytes[13] != 0 || bytes[14] != 0 || bytes[15] != 0) fail(ErrorKind::FormatError, "nonzero header padding");
  return h;
}

DecodedBank decode_bank(std::span<const std::uint8_t> bytes) {
  DecodedBank out;
  out.header = decode_bank_header(bytes);
  const std::size_t stride = record_bytes(out.header.dim);
  const std::size_t body = bytes.size() - kBankHeaderBytes;
  if (out.header.record_count > body / stride || body != out.header.record_count * stride) {
    fail(ErrorKind::FormatError,
         fmt::format("bank length {} inconsistent with {} records of {} bytes", bytes.size(),
                     out.header.record_count, stride));
  }
  out.records.reserve(out.header.record_count);
  const std::uint8_t* p = bytes.data() + kBankHeaderBytes;
  for (std::uint64_t i = 0; i < out.header.record_count; ++i, p += stride) {
    if (p[11] != 0) fail(ErrorKind::FormatError, fmt::format("record {} has nonzero reserved byte", i));
    std::vector<double> values(out.header.dim);
    for (std::uint32_t d = 0; d < out.header.dim; ++d) {
      const float f = std::bit_cast<float>(get_u32(p + kRecordPrefixBytes + 4 * d));
      if (!std::isfinite(f)) fail(ErrorKind::FormatError, fmt::format("record {} holds a non-finite value", i));
      values[d] = f;
    }
    out.records.push_back(LabeledEmbedding{get_u32(p), get_u32(p + 4), get_u16(p + 8), modality_from_code(p[10]),
                                           EmbeddingVector(std::move(values))});
  }
  return out;
}

std::filesystem::path manifest_path(const std::filesystem::path& bank_path) {
  return std::filesystem::path(bank_path.string() + ".manifest");
}

void write_bank(std::span<const LabeledEmbedding> records, const Manifest& manifest,
                const std::filesystem::path& path) {
  const auto bytes = encode_bank(records);
  for (const auto& r : records) {
    if (!manifest.class_names.contains(r.class_id)) {
      fail(ErrorKind::FormatError, fmt::format("manifest has no name for class {}", r.class_id));
    }
  }
  write_file(path, bytes.data(), bytes.size());
  const std::string text = manifest.to_json();
  write_file(manifest_path(path), text.data(), text.size());
}

BankHeader read_bank_header(const std::filesystem::path& path) { return decode_bank_header(read_file(path)); }

BankFile read_bank(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) fail(ErrorKind::IoError, "no such bank: " + path.string());
  auto decoded = decode_bank(read_file(path));
  const auto mpath = manifest_path(path);
  if (!std::filesystem::exists(mpath)) fail(ErrorKind::FormatError, "missing manifest " + mpath.string());
  const auto mbytes = read_file(mpath);
  Manifest manifest = Manifest::from_json(std::string(mbytes.begin(), mbytes.end()));
  for (const auto& r : decoded.records) {
    if (!manifest.class_names.contains(r.class_id)) {
      fail(ErrorKind::FormatError, fmt::format("manifest has no name for class {}", r.class_id));
    }
  }
  return {std::move(decoded.records), std::move(manifest)};
}

EmbeddingBank::EmbeddingBank(std::vector<LabeledEmbedding> records, Manifest manifest)
    : records_(std::move(records)), manifest_(std::move(manifest)) {
  validate_records(records_);
  dim_ = static_cast<std::uint32_t>(records_.front().vector.dim());
  for (std::size_t i = 0; i < records_.size(); ++i) {
    const auto& r = records_[i];
    if (!manifest_.class_names.contains(r.class_id)) {
      fail(ErrorKind::FormatError, fmt::format("manifest has no name for class {}", r.class_id));
    }
    index_.emplace(r.key(), i);
    if (r.modality == Modality::VisualRaw) raw_items_[r.class_id].push_back(r.item_id);
  }
  for (auto& [cls, items] : raw_items_) {
    std::sort(items.begin(), items.end());
    items.erase(std::unique(items.begin(), items.end()), items.end());
    class_ids_.push_back(cls);
  }
}

EmbeddingBank EmbeddingBank::load(const std::filesystem::path& path) {
  auto file = read_bank(path);
  return EmbeddingBank(std::move(file.records), std::move(file.manifest));
}

std::span<const std::uint32_t> EmbeddingBank::raw_items(std::uint32_t class_id) const {
  const auto it = raw_items_.find(class_id);
  if (it == raw_items_.end()) return {};
  return it->second;
}

const LabeledEmbedding* EmbeddingBank::find(const RecordKey& key) const {
  const auto it = index_.find(key);
  return it == index_.end() ? nullptr : &records_[it->second];
}

const LabeledEmbedding& EmbeddingBank::raw(std::uint32_t class_id, std::uint32_t item_id) const {
  const auto* r = find({class_id, item_id, 0, Modality::VisualRaw});
  if (r == nullptr) {
    fail(ErrorKind::InsufficientData, fmt::format("bank has no raw record for class {} item {}", class_id, item_id));
  }
  return *r;
}

std::vector<const LabeledEmbedding*> EmbeddingBank::views(std::uint32_t class_id, std::uint32_t item_id) const {
  std::vector<const LabeledEmbedding*> out;
  // RecordKey orders by (class, item, view, modality): scan the item's key range.
  for (auto it = index_.lower_bound({class_id, item_id, 1, Modality::VisualRaw});
       it != index_.end() && it->first.class_id == class_id && it->first.item_id == item_id; ++it) {
    const auto m = it->first.modality;
    if (m == Modality::VisualNatural || m == Modality::VisualGeometric) out.push_back(&records_[it->second]);
  }
  return out;
}

std::vector<const LabeledEmbedding*> EmbeddingBank::semantic(std::uint32_t class_id) const {
  std::vector<const LabeledEmbedding*> out;
  for (auto it = index_.lower_bound({class_id, 0, 0, Modality::VisualRaw});
       it != index_.end() && it->first.class_id == class_id; ++it) {
    if (it->first.modality == Modality::Semantic) out.push_back(&records_[it->second]);
  }
  std::sort(out.begin(), out.end(), [](auto* a, auto* b) { return a->view_id < b->view_id; });
  return out;
}

std::string EmbeddingBank::class_name(std::uint32_t class_id) const {
  const auto it = manifest_.class_names.find(class_id);
  if (it == manifest_.class_names.end()) fail(ErrorKind::FormatError, fmt::format("no name for class {}", class_id));
  return it->second;
}

}  // namespace mpa
