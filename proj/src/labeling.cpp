#include "quicpic/labeling.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>

#include <json.hpp>

namespace quicpic {
namespace {

// FNV-1a; stable across platforms, unlike std::hash.
std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ull;
  }
  return h;
}

// In-place Fisher-Yates with explicit index derivation so shuffles do not
// depend on the standard library's distribution implementation.
template <typename T>
void deterministic_shuffle(std::vector<T>& items, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  for (std::size_t i = items.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(gen() % i);
    std::swap(items[i - 1], items[j]);
  }
}

std::string sample_ref(const std::string& trace_id, Index window_index) {
  return trace_id + "/" + std::to_string(window_index);
}

void append_trace_refs(std::vector<std::string>& out, const TraceSamples& trace) {
  for (Index w : trace.window_indices) out.push_back(sample_ref(trace.trace_id, w));
}

ByteGrid add_noise(const ByteGrid& grid, std::mt19937_64& gen, double sigma) {
  std::normal_distribution<double> noise(0.0, sigma);
  ByteGrid out = grid;
  for (Index i = 0; i < out.rows(); ++i) {
    for (Index j = 0; j < out.cols(); ++j) {
      if (out(i, j) == 0) continue;  // structural zeros are traffic absence
      const double v = std::round(static_cast<double>(out(i, j)) + noise(gen));
      out(i, j) = static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
    }
  }
  return out;
}

}  // namespace

std::vector<ResponseEvent> read_events_jsonl(std::istream& in) {
  std::vector<ResponseEvent> events;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::MalformedEvents,
                  "line " + std::to_string(lineno) + ": " + e.what());
    }
    if (!obj.is_object() || !obj.contains("trace_id") || !obj.contains("t") ||
        !obj["trace_id"].is_string() || !obj["t"].is_number()) {
      throw Error(ErrorCode::MalformedEvents,
                  "line " + std::to_string(lineno) +
                      ": expected {\"trace_id\": str, \"t\": seconds}");
    }
    const double t = obj["t"].get<double>();
    if (t < 0)
      throw Error(ErrorCode::MalformedEvents,
                  "line " + std::to_string(lineno) + ": negative timestamp");
    events.push_back(
        ResponseEvent{obj["trace_id"].get<std::string>(), seconds_to_us(t)});
  }
  return events;
}

std::vector<ResponseEvent> read_events_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
  return read_events_jsonl(in);
}

int label_window(std::span<const std::int64_t> sorted_event_times_us,
                 std::int64_t window_start_us, std::int64_t window_us) {
  const auto lo = std::lower_bound(sorted_event_times_us.begin(),
                                   sorted_event_times_us.end(), window_start_us);
  const auto hi =
      std::lower_bound(lo, sorted_event_times_us.end(),
                       window_start_us + window_us);
  return static_cast<int>(hi - lo);
}

SplitManifest split(std::span<const TraceSamples> traces, SplitMode mode,
                    std::uint64_t seed, std::span<const std::string> holdout) {
  SplitManifest manifest;
  manifest.mode = mode;
  manifest.seed = seed;

  // Group trace indices per server; map keys give a stable server order.
  std::map<std::string, std::vector<std::size_t>> by_server;
  for (std::size_t i = 0; i < traces.size(); ++i)
    by_server[traces[i].server_label].push_back(i);
  for (auto& [server, idx] : by_server) {
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      return traces[a].trace_id < traces[b].trace_id;
    });
  }

  if (mode == SplitMode::KnownServers8020) {
    bool any_included = false;
    for (auto& [server, idx] : by_server) {
      if (idx.size() < static_cast<std::size_t>(kMinTracesPerServer)) {
        manifest.flagged_servers.push_back(server);
        continue;
      }
      any_included = true;
      std::vector<std::size_t> order = idx;
      deterministic_shuffle(order, seed ^ fnv1a(server));
      const std::size_t n_train =
          static_cast<std::size_t>(0.8 * static_cast<double>(order.size()));
      for (std::size_t k = 0; k < order.size(); ++k) {
        auto& side = k < n_train ? manifest.train : manifest.test;
        append_trace_refs(side, traces[order[k]]);
      }
    }
    if (!any_included && !by_server.empty())
      throw Error(ErrorCode::TooFewTraces,
                  "no server has at least " +
                      std::to_string(kMinTracesPerServer) + " traces");
  } else {
    const std::size_t n_servers = by_server.size();
    if (holdout.empty() || holdout.size() >= n_servers)
      throw Error(ErrorCode::InvalidHoldoutCount,
                  "holdout must name between 1 and #servers-1 servers");
    std::set<std::string> held(holdout.begin(), holdout.end());
    for (const auto& name : held) {
      if (!by_server.contains(name))
        throw Error(ErrorCode::InvalidHoldoutCount,
                    "unknown server in holdout: " + name);
    }
    manifest.held_out_servers.assign(held.begin(), held.end());
    for (auto& [server, idx] : by_server) {
      auto& side = held.contains(server) ? manifest.test : manifest.train;
      for (std::size_t i : idx) append_trace_refs(side, traces[i]);
    }
  }

  std::sort(manifest.train.begin(), manifest.train.end());
  std::sort(manifest.test.begin(), manifest.test.end());
  return manifest;
}

LabeledSample augment_minority(const LabeledSample& sample, std::uint64_t seed,
                               double sigma) {
  if (sample.label < 10 || sample.label > 20)
    throw Error(ErrorCode::LabelOutOfAugmentationRange,
                "label " + std::to_string(sample.label) +
                    " outside the augmented range [10, 20]");
  std::mt19937_64 gen(seed);
  LabeledSample out = sample;
  if (sigma > 0.0) {
    out.image.red = add_noise(sample.image.red, gen, sigma);
    out.image.green = add_noise(sample.image.green, gen, sigma);
  }
  return out;
}

ResponseDistribution response_distribution(std::span<const int> labels) {
  ResponseDistribution dist;
  std::uint64_t low = 0;
  for (int label : labels) {
    ++dist.counts[label];
    ++dist.total;
    if (label >= 0 && label <= 2) ++low;
  }
  dist.low_label_share =
      dist.total == 0 ? 0.0
                      : static_cast<double>(low) / static_cast<double>(dist.total);
  return dist;
}

}  // namespace quicpic
