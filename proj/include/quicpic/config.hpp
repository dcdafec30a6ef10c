#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include "quicpic/metrics.hpp"
#include "quicpic/pipeline.hpp"

namespace quicpic {

/// Value of one TOML key. The config format is a deliberate subset: flat
/// [section] headers, scalar values (string, integer, float, bool) and
/// one-dimensional arrays of strings or numbers.
using TomlValue = std::variant<bool, std::int64_t, double, std::string,
                               std::vector<std::string>, std::vector<double>>;

/// Keys are "key" or "section.key".
using TomlTable = std::map<std::string, TomlValue>;

TomlTable parse_toml(const std::string& text);
TomlTable parse_toml_file(const std::filesystem::path& path);

/// Pipeline config from a TOML file; unknown keys raise Error{BadConfig} so
/// typos do not silently fall back to defaults.
PipelineConfig load_pipeline_config(const std::filesystem::path& path);

/// Loss hyperparameters from a [loss] TOML section or a JSON object:
/// {alpha, beta, gamma, weights}. `weights` is either an array of positive
/// reals or the string "auto" (resolved later from class counts, leaving the
/// vector empty here).
LossConfig load_loss_config(const std::filesystem::path& path);

NormalizationMode parse_normalization(const std::string& name);
SplitMode parse_split_mode(const std::string& name);
const char* normalization_name(NormalizationMode mode);
const char* split_mode_name(SplitMode mode);

}  // namespace quicpic
