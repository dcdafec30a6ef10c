#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "quicpic/image.hpp"
#include "quicpic/labeling.hpp"
#include "quicpic/windowing.hpp"

namespace quicpic {

/// Run-level parameters of one dataset build. Input layout is
/// <input>/<server_label>/<trace>.pcap with a matching <trace>.events.jsonl
/// sidecar per capture.
struct PipelineConfig {
  double window_seconds = 0.1;  // T
  Index resolution = 32;        // M = N
  std::uint32_t mtu = 1500;     // L
  double overlap = 0.0;
  NormalizationMode normalization = NormalizationMode::PerWindow;
  bool dedup = true;
  int max_label = 20;
  std::uint64_t seed = 0;
  SplitMode split_mode = SplitMode::KnownServers8020;
  std::vector<std::string> holdout;
  std::filesystem::path output_root = "quicpic-out";
  std::optional<std::filesystem::path> websites_file;
  int jobs = 0;  // 0 = hardware concurrency

  WindowSpec window_spec() const {
    WindowSpec spec;
    spec.window_us = seconds_to_us(window_seconds);
    spec.time_bins = resolution;
    spec.length_bins = resolution;
    spec.max_length = mtu;
    spec.overlap = overlap;
    return spec;
  }

  nlohmann::json to_json() const;
};

struct RunSummary {
  std::uint64_t traces = 0;
  std::uint64_t windows = 0;
  std::uint64_t kept = 0;      // images written (admitted + rejected)
  std::uint64_t deduped = 0;   // windows dropped as duplicates
  std::uint64_t admitted = 0;  // kept with label <= max_label
  std::uint64_t rejected = 0;  // kept with label > max_label
  std::uint64_t servers = 0;

  nlohmann::json to_json() const;
};

/// Run the full PCAP -> image dataset build. Outputs are staged in a
/// temporary sibling of `output_root` and promoted only on success:
/// images/, manifest.csv, splits.json, stats.csv, dedup_report.json and
/// run_config.json. Rerunning with identical inputs and config reproduces
/// every byte.
RunSummary run_pipeline(const PipelineConfig& config,
                        const std::filesystem::path& input_dir);

struct ManifestRow {
  std::string sample_id;
  std::string trace_id;
  Index window_index = 0;
  std::string window_start;  // seconds, fixed six decimals
  int label = 0;
  bool admitted = false;
  std::string digest;
  std::string png_path;  // empty for windows dropped by dedup
};

std::vector<ManifestRow> read_manifest(const std::filesystem::path& path);

struct ServerStatsRow {
  std::string server_label;
  std::optional<std::int64_t> websites;  // set only with a websites file
  std::uint64_t traces = 0;
  std::uint64_t images = 0;  // admitted images at the current config
};

struct StatsReport {
  std::vector<ServerStatsRow> rows;
  ResponseDistribution distribution;  // over admitted samples

  nlohmann::json to_json() const;
};

/// Per-server table plus the label histogram, both over the manifest.
/// `websites_file` is a JSON object mapping server label -> website count.
StatsReport compute_stats(
    const std::filesystem::path& manifest_path,
    const std::optional<std::filesystem::path>& websites_file = std::nullopt);

/// Score a predictions CSV (header "sample_id,prediction") against a
/// manifest: CAP at each requested tolerance plus the per-trace aggregation.
/// Predictions must cover exactly the admitted, non-deduplicated samples;
/// unknown ids raise Error{UnknownSampleId} and absent ones
/// Error{MissingPrediction}.
nlohmann::json evaluate_predictions(const std::filesystem::path& manifest_path,
                                    const std::filesystem::path& predictions_path,
                                    const std::vector<int>& cap_tolerances,
                                    int trace_tolerance);

/// splits.json (de)serialization, shared by the pipeline and tests.
nlohmann::json split_to_json(const SplitManifest& manifest);

}  // namespace quicpic
