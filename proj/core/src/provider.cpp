#include "mpa/provider.hpp"

#include <sodium.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <optional>
#include <thread>

#include <fmt/format.h>
#include <httplib.h>
#include <json.hpp>

#include "mpa/error.hpp"

namespace mpa {

using nlohmann::json;

ProviderConfig ProviderConfig::from_env() {
  ProviderConfig cfg;
  if (const char* url = std::getenv("MPA_PROVIDER_URL"); url != nullptr && *url != '\0') cfg.base_url = url;
  return cfg;
}

void ProviderConfig::validate() const {
  if (timeout.count() <= 0) fail(ErrorKind::InvalidArgument, "provider timeout must be > 0");
  if (max_in_flight == 0) fail(ErrorKind::InvalidArgument, "max_in_flight must be >= 1");
  if (batch_items == 0) fail(ErrorKind::InvalidArgument, "batch size must be >= 1");
  if (base_url.empty()) fail(ErrorKind::InvalidArgument, "provider base_url is empty");
}

namespace {

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  static std::once_flag init;
  std::call_once(init, [] {
    if (sodium_init() < 0) fail(ErrorKind::InvalidArgument, "libsodium failed to initialise");
  });
  constexpr int kVariant = sodium_base64_VARIANT_ORIGINAL;
  std::string out(sodium_base64_ENCODED_LEN(bytes.size(), kVariant), '\0');
  sodium_bin2base64(out.data(), out.size(), bytes.data(), bytes.size(), kVariant);
  out.resize(out.size() - 1);  // drop the terminating NUL
  return out;
}

httplib::Client make_client(const ProviderConfig& cfg) {
  httplib::Client cli(cfg.base_url);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(cfg.timeout);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(cfg.timeout - secs);
  cli.set_connection_timeout(secs.count(), usecs.count());
  cli.set_read_timeout(secs.count(), usecs.count());
  cli.set_write_timeout(secs.count(), usecs.count());
  return cli;
}

[[noreturn]] void contract(const std::string& msg) { fail(ErrorKind::ProviderContractViolation, msg); }

json parse_body(const std::string& body, const std::string& path) {
  try {
    return json::parse(body);
  } catch (const json::exception& e) {
    contract(fmt::format("{}: response is not valid JSON ({})", path, e.what()));
  }
}

struct VectorBatch {
  std::uint32_t dim = 0;
  std::vector<EmbeddingVector> vectors;
};

VectorBatch parse_vectors(const json& j, std::size_t expected, const std::string& path) {
  if (!j.is_object() || !j.contains("dim") || !j.contains("vectors")) {
    contract(path + ": response lacks \"dim\" or \"vectors\"");
  }
  if (!j["dim"].is_number_unsigned() || j["dim"].get<std::uint64_t>() == 0) contract(path + ": bad \"dim\"");
  const auto& arr = j["vectors"];
  if (!arr.is_array()) contract(path + ": \"vectors\" is not an array");
  if (arr.size() != expected) {
    contract(fmt::format("{}: provider returned {} vectors for {} inputs", path, arr.size(), expected));
  }
  VectorBatch out;
  out.dim = j["dim"].get<std::uint32_t>();
  out.vectors.reserve(expected);
  for (const auto& v : arr) {
    if (!v.is_array() || v.size() != out.dim) {
      contract(fmt::format("{}: vector length disagrees with declared dim {}", path, out.dim));
    }
    std::vector<double> values;
    values.reserve(out.dim);
    for (const auto& x : v) {
      if (!x.is_number() || !std::isfinite(x.get<double>())) contract(path + ": non-numeric or non-finite coordinate");
      values.push_back(x.get<double>());
    }
    out.vectors.emplace_back(std::move(values));
  }
  return out;
}

}  // namespace

ProviderClient::ProviderClient(ProviderConfig config) : config_(std::move(config)) { config_.validate(); }

std::string ProviderClient::id() const { return "provider:" + config_.base_url; }

std::string ProviderClient::post_with_retry(const std::string& path, const std::string& body,
                                            std::size_t request_id) const {
  auto cli = make_client(config_);
  const httplib::Headers headers{{"X-Request-Id", std::to_string(request_id)}};
  std::string last_error;
  for (std::uint32_t attempt = 0; attempt <= config_.retry_count; ++attempt) {
    if (attempt > 0) std::this_thread::sleep_for(config_.backoff_base * (1u << std::min(attempt - 1, 16u)));
    auto res = cli.Post(path, headers, body, "application/json");
    if (!res) {
      last_error = httplib::to_string(res.error());
      continue;
    }
    if (res->status == 200) return res->body;
    if (res->status >= 500 || res->status == 429) {
      last_error = fmt::format("HTTP {}", res->status);
      continue;
    }
    contract(fmt::format("{}: HTTP {} {}", path, res->status, res->body));
  }
  fail(ErrorKind::ProviderUnavailable,
       fmt::format("{}{} failed after {} attempt(s): {}", config_.base_url, path, config_.retry_count + 1, last_error));
}

ProviderHealth ProviderClient::health() const {
  auto cli = make_client(config_);
  std::string last_error;
  for (std::uint32_t attempt = 0; attempt <= config_.retry_count; ++attempt) {
    if (attempt > 0) std::this_thread::sleep_for(config_.backoff_base * (1u << std::min(attempt - 1, 16u)));
    auto res = cli.Get("/v1/health");
    if (!res) {
      last_error = httplib::to_string(res.error());
      continue;
    }
    if (res->status != 200) {
      last_error = fmt::format("HTTP {}", res->status);
      continue;
    }
    const json j = parse_body(res->body, "/v1/health");
    try {
      return {j.at("status").get<std::string>(), j.value("encoder_id", ""), j.at("dim").get<std::uint32_t>()};
    } catch (const json::exception& e) {
      contract(std::string("/v1/health: ") + e.what());
    }
  }
  fail(ErrorKind::ProviderUnavailable, fmt::format("{}/v1/health unreachable: {}", config_.base_url, last_error));
}

std::vector<EmbeddingVector> ProviderClient::embed_batched(const std::string& path, const char* field,
                                                           const std::vector<std::string>& items) const {
  const std::size_t n_batches = (items.size() + config_.batch_items - 1) / config_.batch_items;
  std::vector<std::optional<VectorBatch>> results(n_batches);
  std::vector<std::exception_ptr> errors(n_batches);
  std::atomic<std::size_t> next{0};

  auto worker = [&] {
    for (std::size_t b = next++; b < n_batches; b = next++) {
      try {
        const std::size_t lo = b * config_.batch_items;
        const std::size_t hi = std::min(items.size(), lo + config_.batch_items);
        json body;
        body[field] = std::vector<std::string>(items.begin() + lo, items.begin() + hi);
        const auto text = post_with_retry(path, body.dump(), b);
        results[b] = parse_vectors(parse_body(text, path), hi - lo, path);
      } catch (...) {
        errors[b] = std::current_exception();
      }
    }
  };

  const std::size_t n_workers = std::min<std::size_t>(config_.max_in_flight, n_batches);
  {
    std::vector<std::jthread> pool;
    for (std::size_t i = 1; i < n_workers; ++i) pool.emplace_back(worker);
    worker();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  std::vector<EmbeddingVector> out;
  out.reserve(items.size());
  const std::uint32_t dim = results.front()->dim;
  for (auto& batch : results) {
    if (batch->dim != dim) contract(fmt::format("{}: dim changed across batches ({} vs {})", path, dim, batch->dim));
    for (auto& v : batch->vectors) out.push_back(std::move(v));
  }
  return out;
}

std::vector<EmbeddingVector> ProviderClient::embed_images(std::span<const std::vector<std::uint8_t>> png_images) const {
  if (png_images.empty()) fail(ErrorKind::InvalidArgument, "embed_images needs at least one image");
  std::vector<std::string> encoded;
  encoded.reserve(png_images.size());
  for (std::size_t i = 0; i < png_images.size(); ++i) {
    if (!is_png(png_images[i])) fail(ErrorKind::InvalidArgument, fmt::format("image {} is not a PNG stream", i));
    encoded.push_back(base64_encode(png_images[i]));
  }
  return embed_batched("/v1/embed/image", "images_b64", encoded);
}

std::vector<EmbeddingVector> ProviderClient::embed_texts(std::span<const std::string> texts) const {
  if (texts.empty()) fail(ErrorKind::InvalidArgument, "embed_texts needs at least one text");
  return embed_batched("/v1/embed/text", "texts", std::vector<std::string>(texts.begin(), texts.end()));
}

std::vector<std::string> ProviderClient::generate_variants(const std::string& class_name, const std::string& prompt,
                                                           std::uint32_t n_variants) const {
  if (class_name.find_first_not_of(" \t\r\n") == std::string::npos) {
    fail(ErrorKind::EmptyClassName, "class name is empty");
  }
  if (n_variants == 0) fail(ErrorKind::InvalidArgument, "n_variants must be >= 1");
  json body{{"class_name", class_name}, {"n_variants", n_variants}};
  if (!prompt.empty()) body["prompt"] = prompt;
  const json j = parse_body(post_with_retry("/v1/variants", body.dump(), 0), "/v1/variants");
  if (!j.is_object() || !j.contains("descriptions") || !j["descriptions"].is_array()) {
    contract("/v1/variants: response lacks a \"descriptions\" array");
  }
  std::vector<std::string> out;
  for (const auto& d : j["descriptions"]) {
    if (!d.is_string()) contract("/v1/variants: description is not a string");
    auto s = d.get<std::string>();
    if (s.find_first_not_of(" \t\r\n") == std::string::npos) contract("/v1/variants: empty description");
    out.push_back(std::move(s));
  }
  if (out.size() != n_variants + 1) {
    contract(fmt::format("/v1/variants: expected {} descriptions, got {}", n_variants + 1, out.size()));
  }
  return out;
}

std::vector<std::string> ProviderClient::generate_variants(const std::string& class_name,
                                                           std::uint32_t n_variants) const {
  return generate_variants(class_name, std::string{}, n_variants);
}

std::vector<EmbeddingVector> ProviderClient::encode_images(std::span<const Raster> images) const {
  std::vector<std::vector<std::uint8_t>> pngs;
  pngs.reserve(images.size());
  for (const auto& img : images) pngs.push_back(encode_png(img));
  return embed_images(pngs);
}

std::vector<EmbeddingVector> ProviderClient::encode_texts(std::span<const std::string> texts) const {
  return embed_texts(texts);
}

}  // namespace mpa
