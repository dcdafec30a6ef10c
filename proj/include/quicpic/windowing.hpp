#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "quicpic/types.hpp"

namespace quicpic {

/// Sliding-window geometry. Times are integer microseconds so window
/// membership and time-bin assignment stay exact: the i-th time bin covers
/// [i*T/M, (i+1)*T/M) as a rational interval, evaluated with integer
/// arithmetic rather than a precomputed floating-point bin width.
struct WindowSpec {
  std::int64_t window_us = 100'000;  // T
  Index time_bins = 32;              // M
  Index length_bins = 32;            // N
  std::uint32_t max_length = 1500;   // L; longer packets clamp into the last bin
  double overlap = 0.0;              // fraction of T shared by consecutive windows

  /// Distance between consecutive window starts, rounded to whole
  /// microseconds.
  std::int64_t step_us() const {
    return static_cast<std::int64_t>(
        static_cast<double>(window_us) * (1.0 - overlap) + 0.5);
  }

  double window_seconds() const { return us_to_seconds(window_us); }
  double dt_seconds() const {
    return static_cast<double>(window_us) / static_cast<double>(time_bins) / 1e6;
  }
  double dl_bytes() const {
    return static_cast<double>(max_length) / static_cast<double>(length_bins);
  }

  /// Throws Error{InvalidWindowSpec} unless T > 0, M > 0, N > 0, L > 0 and
  /// overlap ∈ [0, 1) with a positive step.
  void validate() const;
};

/// Per-window packet-count histogram, one channel per direction.
/// counts(i, j): i = time bin (row), j = length bin (column).
struct WindowHistogram {
  CountGrid server_to_client;
  CountGrid client_to_server;
  std::int64_t window_start_us = 0;
  Index window_index = 0;
  std::string trace_id;

  const CountGrid& channel(Direction d) const {
    return d == Direction::ServerToClient ? server_to_client : client_to_server;
  }
  std::uint64_t total() const {
    return static_cast<std::uint64_t>(server_to_client.cast<std::uint64_t>().sum()) +
           static_cast<std::uint64_t>(client_to_server.cast<std::uint64_t>().sum());
  }
};

/// Window starts 0, step, 2*step, ... for every start <= trace duration.
/// An empty trace yields exactly one window at start 0; the final window may
/// extend past the trace end so trailing packets keep their image.
std::vector<std::pair<Index, std::int64_t>> enumerate_windows(
    const TraceMeta& trace, const WindowSpec& spec);

/// Grid cell for one packet relative to a window, or nullopt when the packet
/// falls outside [window_start, window_start + T). Lengths >= L land in the
/// last length bin.
std::optional<std::pair<Index, Index>> bin_packet(const PacketRecord& packet,
                                                  std::int64_t window_start_us,
                                                  const WindowSpec& spec);

WindowHistogram build_histogram(const TraceMeta& trace,
                                std::int64_t window_start_us,
                                const WindowSpec& spec, Index window_index = 0);

/// Debug serialization, one row per grid cell: i,j,channel,count.
std::string histogram_csv(const WindowHistogram& hist);

}  // namespace quicpic
