#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "quicpic/types.hpp"
#include "quicpic/windowing.hpp"

namespace quicpic {

enum class NormalizationMode {
  PerWindow,  // min/max over the bins of one window, per channel
  PerTrace,   // min/max over all bins of all windows of the trace, per channel
};

struct ChannelStats {
  std::uint32_t min = 0;
  std::uint32_t max = 0;
};

struct TraceStats {
  ChannelStats server_to_client;
  ChannelStats client_to_server;
};

/// RGB traffic image on the histogram grid: red carries server-to-client
/// intensity, green client-to-server. Blue is identically zero and therefore
/// not stored. Grids are indexed (time bin, length bin) like WindowHistogram.
struct TrafficImage {
  ByteGrid red;
  ByteGrid green;
  std::string trace_id;
  Index window_index = 0;
  std::int64_t window_start_us = 0;

  Index time_bins() const { return red.rows(); }
  Index length_bins() const { return red.cols(); }
};

/// Min-max normalization to [0,1]. Degenerate ranges (max == min) map any
/// nonzero value to 1 and zero to 0, so uniform nonzero windows do not render
/// black.
double normalize(std::uint32_t value, std::uint32_t min, std::uint32_t max);

/// Channel extrema across every bin of every window of one trace.
TraceStats compute_trace_stats(std::span<const WindowHistogram> windows);

/// Map a histogram to pixel intensities: per channel,
/// round_half_up(normalize(count, min, max) * 255), with min/max scoped by
/// `mode`. PerTrace mode requires `trace_stats`.
TrafficImage render(const WindowHistogram& hist, NormalizationMode mode,
                    const std::optional<TraceStats>& trace_stats = std::nullopt);

/// SHA-256 over (time bins, length bins, row-major RGB bytes). Provenance
/// fields are excluded, so pixel-identical images collide by construction.
std::array<std::uint8_t, 32> image_digest(const TrafficImage& img);

std::string digest_hex(const std::array<std::uint8_t, 32>& digest);

/// Row-major RGB8 bytes in image orientation: length bin 0 at the top row,
/// time bin 0 at the left column (time runs along the horizontal axis).
std::vector<std::uint8_t> image_rgb_bytes(const TrafficImage& img);

struct DedupReport {
  std::uint64_t input = 0;
  std::uint64_t kept = 0;
  std::uint64_t dropped = 0;
};

/// Streaming duplicate filter keyed on (pixel digest, label): the first
/// occurrence of a key is kept, later ones dropped. Identical pixels with
/// different labels are distinct keys and all survive.
class Deduplicator {
 public:
  /// True when the (digest, label) pair has not been seen before.
  bool admit(const std::array<std::uint8_t, 32>& digest, int label);

  const DedupReport& report() const { return report_; }

 private:
  std::unordered_set<std::string> seen_;
  DedupReport report_;
};

/// Batch form of the streaming filter; kept items preserve input order.
std::pair<std::vector<std::pair<TrafficImage, int>>, DedupReport> dedup(
    std::span<const std::pair<TrafficImage, int>> samples);

}  // namespace quicpic
