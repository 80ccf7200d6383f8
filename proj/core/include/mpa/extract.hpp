#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mpa/bank.hpp"
#include "mpa/encoders.hpp"
#include "mpa/hma.hpp"
#include "mpa/lmse.hpp"

namespace mpa {

struct ExtractOptions {
  /// Layout: <image_dir>/<class_name>/<item>.png
  std::filesystem::path image_dir;
  /// Manifest (sidecar format) assigning class ids; every class directory
  /// must be named in it. Without one, ids follow sorted directory names.
  std::optional<Manifest> manifest;
  std::string dataset_name = "extracted";
  bool hma = false;
  ViewPlan plan;
  bool lmse = false;
  LmseConfig lmse_config;
  std::uint64_t seed = 0;
};

struct ExtractResult {
  std::vector<LabeledEmbedding> records;
  Manifest manifest;
  std::size_t images_ok = 0;
  std::vector<std::string> warnings;  // one per unreadable image
};

/// Embeds every readable image (raw, plus HMA views) and, with LMSE on, one
/// Semantic record per description. Item ids follow sorted file names; an
/// unreadable file is skipped with a warning. Throws FormatError when no
/// image could be read or a class directory is missing from the manifest.
/// Jitter for (class, item) draws from mix_seed(seed, class << 32 | item).
ExtractResult extract_bank(const ExtractOptions& options, const ImageEncoder& images, const TextEncoder* texts,
                           const VariantSource* variants, VariantCache* cache);

}  // namespace mpa
