#pragma once

#include <chrono>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mpa/encoders.hpp"
#include "mpa/types.hpp"

namespace mpa {

/// Connection settings for the embedding provider.
struct ProviderConfig {
  std::string base_url = "http://127.0.0.1:8700";
  std::chrono::milliseconds timeout{30000};
  std::uint32_t max_in_flight = 4;
  std::uint32_t retry_count = 3;
  std::chrono::milliseconds backoff_base{250};
  /// Items per request; a request never carries more than this many inputs.
  std::uint32_t batch_items = 16;

  /// base_url from MPA_PROVIDER_URL when set, defaults otherwise.
  static ProviderConfig from_env();
  /// Throws InvalidArgument for a non-positive timeout, max_in_flight or batch size.
  void validate() const;
};

struct ProviderHealth {
  std::string status;
  std::string encoder_id;
  std::uint32_t dim = 0;
};

/// Client side of the provider wire protocol:
///   POST /v1/embed/image {"images_b64": [...]}             -> {"dim": D, "vectors": [[...]]}
///   POST /v1/embed/text  {"texts": [...]}                  -> {"dim": D, "vectors": [[...]]}
///   POST /v1/variants    {"class_name": s, "n_variants": n} -> {"descriptions": [...]}
///   GET  /v1/health                                        -> {"status", "encoder_id", "dim"}
///
/// Large inputs are split into batches sent with up to max_in_flight concurrent
/// requests. Each request carries an X-Request-Id header and results are placed
/// by that id, so output order always matches input order. Transport failures
/// and 5xx responses are retried with exponential backoff (base, x2, ...,
/// retry_count retries) and then surface as ProviderUnavailable; malformed or
/// inconsistent responses raise ProviderContractViolation.
class ProviderClient final : public ImageEncoder, public TextEncoder, public VariantSource {
 public:
  explicit ProviderClient(ProviderConfig config);

  const ProviderConfig& config() const noexcept { return config_; }

  ProviderHealth health() const;

  /// Each element must be a PNG byte stream (InvalidArgument otherwise).
  std::vector<EmbeddingVector> embed_images(std::span<const std::vector<std::uint8_t>> png_images) const;
  std::vector<EmbeddingVector> embed_texts(std::span<const std::string> texts) const;
  std::vector<std::string> generate_variants(const std::string& class_name, std::uint32_t n_variants) const;

  // Encoder seams.
  std::vector<EmbeddingVector> encode_images(std::span<const Raster> images) const override;
  std::vector<EmbeddingVector> encode_texts(std::span<const std::string> texts) const override;
  std::vector<std::string> generate_variants(const std::string& class_name, const std::string& prompt,
                                             std::uint32_t n_variants) const override;
  /// "provider:<base_url>"
  std::string id() const override;

 private:
  std::string post_with_retry(const std::string& path, const std::string& body, std::size_t request_id) const;
  std::vector<EmbeddingVector> embed_batched(const std::string& path, const char* field,
                                             const std::vector<std::string>& items) const;

  ProviderConfig config_;
};

}  // namespace mpa
