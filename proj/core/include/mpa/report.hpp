#pragma once

#include <span>
#include <string>

#include "mpa/episodes.hpp"

namespace mpa {

/// Pretty JSON. Without timings (wall clock, stage timings, RSS) the output is
/// a pure function of bank, spec and config.
std::string to_json(const RunReport& report, bool include_timings);
std::string to_json(const LambdaStatistics& stats, const EpisodeSpec& spec, const AucaConfig& auca);
std::string to_json(std::span<const AblationRow> rows, bool include_timings);
std::string to_json(std::span<const EfficiencyRow> rows);

/// Aligned plain-text tables.
std::string render_table(const RunReport& report);
std::string render_table(std::span<const AblationRow> rows);
std::string render_table(std::span<const EfficiencyRow> rows);
std::string render_table(const LambdaStatistics& stats);

}  // namespace mpa
