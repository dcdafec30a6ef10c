#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "quicpic/image.hpp"
#include "quicpic/types.hpp"

namespace quicpic {

/// Start-of-response marker from the sidecar event stream; time is relative
/// to trace start like packet timestamps.
struct ResponseEvent {
  std::string trace_id;
  std::int64_t time_us = 0;
};

/// Parse a JSON-Lines sidecar, one object per line: {"trace_id": str, "t":
/// seconds}. Blank lines are skipped; anything else malformed raises
/// Error{MalformedEvents}.
std::vector<ResponseEvent> read_events_jsonl(std::istream& in);
std::vector<ResponseEvent> read_events_file(const std::filesystem::path& path);

/// Number of events with time in [window_start, window_start + T); the window
/// end is exclusive, matching packet binning.
int label_window(std::span<const std::int64_t> sorted_event_times_us,
                 std::int64_t window_start_us, std::int64_t window_us);

/// Train/eval admission rule; rejected samples stay in the raw archive.
inline bool admit(int label, int max_label = 20) { return label <= max_label; }

struct LabeledSample {
  TrafficImage image;
  int label = 0;
  std::string server_label;
};

enum class SplitMode {
  KnownServers8020,  // per-server 80:20 over traces
  LeaveServersOut,   // hold whole servers out of training
};

struct SplitManifest {
  SplitMode mode = SplitMode::KnownServers8020;
  std::uint64_t seed = 0;
  std::vector<std::string> train;  // sample refs "trace_id/window_index"
  std::vector<std::string> test;
  std::vector<std::string> held_out_servers;  // LeaveServersOut only
  std::vector<std::string> flagged_servers;   // 8020 servers with < 5 traces
};

/// Split input: one entry per trace with the admitted window indices.
struct TraceSamples {
  std::string trace_id;
  std::string server_label;
  std::vector<Index> window_indices;
};

constexpr int kMinTracesPerServer = 5;

/// Deterministic split. KnownServers8020 shuffles each server's traces with a
/// generator seeded from (seed, server label) and cuts at floor(0.8 * n);
/// servers with fewer than kMinTracesPerServer traces are flagged and left
/// out of both sides (Error{TooFewTraces} if that leaves nothing).
/// LeaveServersOut assigns every trace of a held-out server to test and the
/// rest to train; the holdout list must name 1 <= x < #servers existing
/// servers or Error{InvalidHoldoutCount} is raised. All windows of a trace
/// land on the same side in both modes.
SplitManifest split(std::span<const TraceSamples> traces, SplitMode mode,
                    std::uint64_t seed,
                    std::span<const std::string> holdout = {});

/// Minority-class augmentation: independent Gaussian noise (default sigma
/// 2.55) on every nonzero channel value, rounded and clamped to [0,255].
/// Zero pixels stay zero, blue stays zero, the label is unchanged. Only
/// labels in [10, 20] are eligible; others raise
/// Error{LabelOutOfAugmentationRange}.
LabeledSample augment_minority(const LabeledSample& sample, std::uint64_t seed,
                               double sigma = 2.55);

struct ResponseDistribution {
  std::map<int, std::uint64_t> counts;
  std::uint64_t total = 0;
  double low_label_share = 0.0;  // share of labels 0, 1 and 2
};

ResponseDistribution response_distribution(std::span<const int> labels);

}  // namespace quicpic
