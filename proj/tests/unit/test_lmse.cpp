#include <doctest.h>

#include <atomic>
#include <cmath>
#include <fstream>

#include "helpers.hpp"
#include "mpa/lmse.hpp"

using namespace mpa;
using mpa::test::error_of;
using mpa::test::TempDir;
using mpa::test::vec;

namespace {

class CountingSource final : public VariantSource {
 public:
  enum class Mode { Ok, Down, Short, Blank };
  explicit CountingSource(Mode mode = Mode::Ok) : mode_(mode) {}

  std::vector<std::string> generate_variants(const std::string& class_name, const std::string& prompt,
                                             std::uint32_t n) const override {
    ++calls;
    last_prompt = prompt;
    if (mode_ == Mode::Down) fail(ErrorKind::ProviderUnavailable, "down");
    std::vector<std::string> out{"original " + class_name};
    for (std::uint32_t i = 1; i <= n; ++i) out.push_back("variant " + std::to_string(i) + " " + class_name);
    if (mode_ == Mode::Short) out.pop_back();
    if (mode_ == Mode::Blank) out[1] = "  ";
    return out;
  }
  std::string id() const override { return "counting"; }

  mutable std::atomic<int> calls{0};
  mutable std::string last_prompt;

 private:
  Mode mode_;
};

// Text i of a batch maps to a vector whose entries are its length and i.
class LengthEncoder final : public TextEncoder {
 public:
  explicit LengthEncoder(std::size_t dim) : dim_(dim) {}
  std::vector<EmbeddingVector> encode_texts(std::span<const std::string> texts) const override {
    std::vector<EmbeddingVector> out;
    for (std::size_t i = 0; i < texts.size(); ++i) {
      std::vector<double> v(dim_);
      for (std::size_t d = 0; d < dim_; ++d) v[d] = static_cast<double>(texts[i].size() + d);
      out.emplace_back(std::move(v));
    }
    return out;
  }
  std::string id() const override { return "length"; }

 private:
  std::size_t dim_;
};

}  // namespace

TEST_CASE("prompt text") {
  CHECK(build_prompt("sparrow") ==
        "Please generate an appearance description for sparrow, with four paraphrased variants.");
  CHECK(build_prompt("  oak tree \t") ==
        "Please generate an appearance description for oak tree, with four paraphrased variants.");
  CHECK(error_of([] { build_prompt(""); }) == ErrorKind::EmptyClassName);
  CHECK(error_of([] { build_prompt("   "); }) == ErrorKind::EmptyClassName);
  CHECK(fallback_description(" sparrow ") == "a photo of a sparrow");
}

TEST_CASE("fit_dimension tiles and truncates") {
  const auto v = vec({1, 2});
  CHECK(fit_dimension(v, 2) == v);
  CHECK(fit_dimension(v, 5) == vec({1, 2, 1, 2, 1}));
  CHECK(fit_dimension(vec({1, 2, 3}), 2) == vec({1, 2}));
  CHECK(fit_dimension(vec({4}), 3) == vec({4, 4, 4}));
  std::vector<double> big(512);
  for (std::size_t i = 0; i < 512; ++i) big[i] = static_cast<double>(i);
  const auto fitted = fit_dimension(vec(big), 768);
  REQUIRE(fitted.dim() == 768);
  for (std::size_t i = 0; i < 768; ++i) CHECK(fitted[i] == static_cast<double>(i % 512));
  CHECK(error_of([&] { fit_dimension(v, 0); }) == ErrorKind::InvalidArgument);
}

TEST_CASE("fetch_variants from a live source") {
  CountingSource source;
  VariantCache cache;
  const LmseConfig config;
  const auto set = fetch_variants(3, " oak tree ", config, &source, &cache);
  CHECK(set.class_id == 3);
  CHECK(set.class_name == "oak tree");
  CHECK(set.source == VariantOrigin::LlmProvider);
  CHECK(set.descriptions.size() == 5);
  CHECK(source.last_prompt == build_prompt("oak tree"));

  const auto again = fetch_variants(3, "oak tree", config, &source, &cache);
  CHECK(again.source == VariantOrigin::CacheFile);
  CHECK(again.descriptions == set.descriptions);
  CHECK(source.calls == 1);

  LmseConfig one = config;
  one.n_variants = 1;
  CHECK(fetch_variants(3, "oak tree", one, &source, &cache).descriptions.size() == 2);
  CHECK(source.calls == 2);

  LmseConfig other_llm = config;
  other_llm.llm_id = "another";
  CHECK(fetch_variants(3, "oak tree", other_llm, &source, &cache).source == VariantOrigin::LlmProvider);
  CHECK(source.calls == 3);
  CHECK(cache.size() == 3);
}

TEST_CASE("fetch_variants fallback and failures") {
  const LmseConfig config;
  CountingSource down(CountingSource::Mode::Down);
  VariantCache cache;
  const auto fb = fetch_variants(0, "sparrow", config, &down, &cache);
  CHECK(fb.source == VariantOrigin::Fallback);
  CHECK(fb.descriptions == std::vector<std::string>{"a photo of a sparrow"});
  CHECK(cache.size() == 0);
  CHECK(fetch_variants(0, "sparrow", config, nullptr, nullptr).source == VariantOrigin::Fallback);

  LmseConfig strict = config;
  strict.fallback_enabled = false;
  CHECK(error_of([&] { fetch_variants(0, "sparrow", strict, &down, &cache); }) == ErrorKind::ProviderUnavailable);
  CHECK(error_of([&] { fetch_variants(0, "sparrow", strict, nullptr, nullptr); }) == ErrorKind::ProviderUnavailable);

  CountingSource short_source(CountingSource::Mode::Short);
  CHECK(error_of([&] { fetch_variants(0, "sparrow", config, &short_source, &cache); }) ==
        ErrorKind::ProviderContractViolation);
  CountingSource blank(CountingSource::Mode::Blank);
  CHECK(error_of([&] { fetch_variants(0, "sparrow", config, &blank, &cache); }) ==
        ErrorKind::ProviderContractViolation);
  CHECK(error_of([&] { fetch_variants(0, " ", config, &down, &cache); }) == ErrorKind::EmptyClassName);
}

TEST_CASE("variant cache persists across instances") {
  TempDir dir("cache");
  const auto path = dir / "variants.json";
  CountingSource source;
  const LmseConfig config;
  std::vector<std::string> first;
  {
    VariantCache cache(path);
    first = fetch_variants(1, "heron", config, &source, &cache).descriptions;
  }
  REQUIRE(std::filesystem::exists(path));
  VariantCache reloaded(path);
  const auto warm = fetch_variants(1, "heron", config, &source, &reloaded);
  CHECK(warm.source == VariantOrigin::CacheFile);
  CHECK(warm.descriptions == first);
  CHECK(source.calls == 1);

  std::ofstream(dir / "bad.json") << "{\"entries\": [{\"class_name\": 3}]}";
  CHECK(error_of([&] { VariantCache bad(dir / "bad.json"); }) == ErrorKind::FormatError);
}

TEST_CASE("semantic features") {
  SemanticVariantSet set{2, "heron", {"a", "bb", "ccc", "dddd", "eeeee"}, VariantOrigin::LlmProvider};
  const LengthEncoder enc(4);
  const auto recs = semantic_features(set, enc, 4);
  REQUIRE(recs.size() == 5);
  for (std::uint16_t i = 0; i < 5; ++i) {
    CHECK(recs[i].class_id == 2);
    CHECK(recs[i].item_id == 0);
    CHECK(recs[i].view_id == i);
    CHECK(recs[i].modality == Modality::Semantic);
    CHECK(recs[i].vector == vec({i + 1.0, i + 2.0, i + 3.0, i + 4.0}));
  }
  const auto tiled = semantic_features(set, enc, 6);
  CHECK(tiled[0].vector == vec({1, 2, 3, 4, 1, 2}));
  CHECK(error_of([&] { semantic_features(set, enc, 0); }) == ErrorKind::InvalidArgument);
}

TEST_CASE("toy text encoder") {
  const ToyTextEncoder enc(64);
  const std::vector<std::string> texts{"a small brown bird", "a small brown bird", "A SMALL BROWN BIRD", "oak"};
  const auto v = enc.encode_texts(texts);
  REQUIRE(v.size() == 4);
  CHECK(v[0] == v[1]);
  CHECK(v[0] == v[2]);
  CHECK_FALSE(v[0] == v[3]);
  for (const auto& x : v) {
    double n = 0;
    for (double c : x) n += c * c;
    CHECK(std::abs(n - 1.0) < 1e-12);
  }
  CHECK(enc.id() == "toy-trigram-d64");
}
