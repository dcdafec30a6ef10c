#include "quicpic/windowing.hpp"

#include <algorithm>
#include <sstream>

namespace quicpic {

void WindowSpec::validate() const {
  if (window_us <= 0)
    throw Error(ErrorCode::InvalidWindowSpec, "window length must be positive");
  if (time_bins <= 0 || length_bins <= 0)
    throw Error(ErrorCode::InvalidWindowSpec, "bin counts must be positive");
  if (max_length == 0)
    throw Error(ErrorCode::InvalidWindowSpec, "max length must be positive");
  if (!(overlap >= 0.0 && overlap < 1.0))
    throw Error(ErrorCode::InvalidWindowSpec, "overlap must lie in [0,1)");
  if (step_us() <= 0)
    throw Error(ErrorCode::InvalidWindowSpec, "window step rounds to zero");
}

std::vector<std::pair<Index, std::int64_t>> enumerate_windows(
    const TraceMeta& trace, const WindowSpec& spec) {
  spec.validate();
  const std::int64_t step = spec.step_us();
  std::vector<std::pair<Index, std::int64_t>> out;
  for (Index k = 0;; ++k) {
    const std::int64_t start = static_cast<std::int64_t>(k) * step;
    if (start > trace.duration_us) break;
    out.emplace_back(k, start);
  }
  return out;
}

std::optional<std::pair<Index, Index>> bin_packet(const PacketRecord& packet,
                                                  std::int64_t window_start_us,
                                                  const WindowSpec& spec) {
  const std::int64_t offset = packet.time_us - window_start_us;
  if (offset < 0 || offset >= spec.window_us) return std::nullopt;

  // i = floor(offset / (T/M)) computed as floor(offset*M / T); exact in
  // integers, so the clamp is a pure guard.
  Index i = static_cast<Index>(offset * spec.time_bins / spec.window_us);
  i = std::min(i, spec.time_bins - 1);

  // j = floor(length / (L/N)), lengths >= L clamped into the last bin.
  Index j = static_cast<Index>(static_cast<std::int64_t>(packet.length) *
                               spec.length_bins / spec.max_length);
  j = std::min(j, spec.length_bins - 1);

  return std::make_pair(i, j);
}

WindowHistogram build_histogram(const TraceMeta& trace,
                                std::int64_t window_start_us,
                                const WindowSpec& spec, Index window_index) {
  spec.validate();
  WindowHistogram hist;
  hist.server_to_client = CountGrid::Zero(spec.time_bins, spec.length_bins);
  hist.client_to_server = CountGrid::Zero(spec.time_bins, spec.length_bins);
  hist.window_start_us = window_start_us;
  hist.window_index = window_index;
  hist.trace_id = trace.trace_id;

  // Packets are sorted by timestamp; restrict to the window span first.
  const auto lo = std::lower_bound(
      trace.packets.begin(), trace.packets.end(), window_start_us,
      [](const PacketRecord& p, std::int64_t t) { return p.time_us < t; });
  const auto hi = std::lower_bound(
      lo, trace.packets.end(), window_start_us + spec.window_us,
      [](const PacketRecord& p, std::int64_t t) { return p.time_us < t; });

  for (auto it = lo; it != hi; ++it) {
    const auto cell = bin_packet(*it, window_start_us, spec);
    if (!cell) continue;
    CountGrid& grid = it->direction == Direction::ServerToClient
                          ? hist.server_to_client
                          : hist.client_to_server;
    ++grid(cell->first, cell->second);
  }
  return hist;
}

std::string histogram_csv(const WindowHistogram& hist) {
  std::ostringstream out;
  out << "i,j,channel,count\n";
  const auto dump = [&](const CountGrid& grid, const char* name) {
    for (Index i = 0; i < grid.rows(); ++i)
      for (Index j = 0; j < grid.cols(); ++j)
        out << i << ',' << j << ',' << name << ',' << grid(i, j) << '\n';
  };
  dump(hist.server_to_client, "server");
  dump(hist.client_to_server, "client");
  return out.str();
}

}  // namespace quicpic
