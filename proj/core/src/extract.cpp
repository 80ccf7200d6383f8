#include "mpa/extract.hpp"

#include <algorithm>

#include <fmt/format.h>

#include "mpa/error.hpp"
#include "mpa/raster.hpp"
#include "mpa/rng.hpp"

namespace mpa {

namespace fs = std::filesystem;

namespace {

std::vector<fs::path> sorted_entries(const fs::path& dir, bool directories) {
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (directories ? e.is_directory() : e.is_regular_file()) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

ExtractResult extract_bank(const ExtractOptions& options, const ImageEncoder& images, const TextEncoder* texts,
                           const VariantSource* variants, VariantCache* cache) {
  if (!fs::is_directory(options.image_dir))
    fail(ErrorKind::IoError, fmt::format("image directory not found: {}", options.image_dir.string()));
  if (options.lmse && texts == nullptr) fail(ErrorKind::InvalidArgument, "semantic extraction needs a text encoder");

  ExtractResult result;
  result.manifest.dataset_name = options.dataset_name;
  result.manifest.encoder_id = images.id();
  if (options.hma) result.manifest.metadata["view_plan"] = options.plan.describe();
  if (options.lmse) {
    result.manifest.metadata["text_encoder"] = texts->id();
    result.manifest.metadata["n_variants"] = std::to_string(options.lmse_config.n_variants);
  }
  result.manifest.metadata["seed"] = std::to_string(options.seed);

  std::map<std::string, std::uint32_t> ids;
  const auto class_dirs = sorted_entries(options.image_dir, true);
  if (options.manifest) {
    for (const auto& [id, name] : options.manifest->class_names) ids[name] = id;
    for (const auto& dir : class_dirs)
      if (!ids.contains(dir.filename().string()))
        fail(ErrorKind::FormatError, fmt::format("class directory '{}' is not named in the manifest",
                                                 dir.filename().string()));
  } else {
    std::uint32_t next = 0;
    for (const auto& dir : class_dirs) ids[dir.filename().string()] = next++;
  }

  std::size_t attempted = 0;
  for (const auto& dir : class_dirs) {
    const auto name = dir.filename().string();
    const auto cls = ids.at(name);
    bool any = false;
    std::uint32_t item = 0;
    for (const auto& file : sorted_entries(dir, false)) {
      if (file.extension() != ".png" && file.extension() != ".PNG") continue;
      const auto item_id = item++;
      ++attempted;
      Raster img;
      try {
        img = load_png(file);
      } catch (const Error& e) {
        result.warnings.push_back(fmt::format("skipping {}: {}", file.string(), e.what()));
        continue;
      }
      std::vector<Raster> batch{img};
      std::vector<View> views;
      if (options.hma) {
        auto rng = RngStream(mix_seed(options.seed, (static_cast<std::uint64_t>(cls) << 32) | item_id));
        views = generate_views(img, options.plan, rng);
        for (const auto& v : views) batch.push_back(v.raster);
      }
      const auto vectors = images.encode_images(batch);
      if (vectors.size() != batch.size())
        fail(ErrorKind::ProviderContractViolation, "image encoder returned a wrong vector count");
      result.records.push_back({cls, item_id, 0, Modality::VisualRaw, vectors[0]});
      for (std::size_t i = 0; i < views.size(); ++i)
        result.records.push_back({cls, item_id, views[i].view_id, view_modality(views[i].kind), vectors[i + 1]});
      ++result.images_ok;
      any = true;
    }
    if (!any) continue;
    result.manifest.class_names[cls] = name;
    if (options.lmse) {
      const auto set = fetch_variants(cls, name, options.lmse_config, variants, cache);
      for (auto& r : semantic_features(set, *texts, result.records.front().vector.dim()))
        result.records.push_back(std::move(r));
    }
  }
  if (result.images_ok == 0)
    fail(ErrorKind::FormatError, fmt::format("no readable images under {} ({} attempted)",
                                             options.image_dir.string(), attempted));
  return result;
}

}  // namespace mpa
