#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mpa/raster.hpp"
#include "mpa/types.hpp"

namespace mpa {

// Encoder seams. Implementations must be safe to call concurrently.

class ImageEncoder {
 public:
  virtual ~ImageEncoder() = default;
  /// One vector per image, order-preserving, uniform dim.
  virtual std::vector<EmbeddingVector> encode_images(std::span<const Raster> images) const = 0;
  virtual std::string id() const = 0;
};

class TextEncoder {
 public:
  virtual ~TextEncoder() = default;
  virtual std::vector<EmbeddingVector> encode_texts(std::span<const std::string> texts) const = 0;
  virtual std::string id() const = 0;
};

/// Source of class descriptions (an LLM behind the provider in production).
class VariantSource {
 public:
  virtual ~VariantSource() = default;
  /// Returns 1 + n_variants non-empty descriptions.
  virtual std::vector<std::string> generate_variants(const std::string& class_name, const std::string& prompt,
                                                     std::uint32_t n_variants) const = 0;
  virtual std::string id() const = 0;
};

}  // namespace mpa
