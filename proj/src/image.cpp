#include "quicpic/image.hpp"

#include <cmath>
#include <cstring>

#include <openssl/evp.h>

namespace quicpic {
namespace {

std::uint8_t scale_to_byte(std::uint32_t count, const ChannelStats& stats) {
  const double unit = normalize(count, stats.min, stats.max);
  return static_cast<std::uint8_t>(std::floor(unit * 255.0 + 0.5));
}

ByteGrid render_channel(const CountGrid& counts, const ChannelStats& stats) {
  return counts.unaryExpr(
      [&](std::uint32_t c) { return scale_to_byte(c, stats); });
}

ChannelStats window_stats(const CountGrid& counts) {
  return ChannelStats{counts.minCoeff(), counts.maxCoeff()};
}

}  // namespace

double normalize(std::uint32_t value, std::uint32_t min, std::uint32_t max) {
  if (max == min) return value > 0 ? 1.0 : 0.0;
  return static_cast<double>(value - min) / static_cast<double>(max - min);
}

TraceStats compute_trace_stats(std::span<const WindowHistogram> windows) {
  TraceStats stats;
  bool first = true;
  for (const auto& w : windows) {
    const ChannelStats s = window_stats(w.server_to_client);
    const ChannelStats c = window_stats(w.client_to_server);
    if (first) {
      stats.server_to_client = s;
      stats.client_to_server = c;
      first = false;
      continue;
    }
    stats.server_to_client.min = std::min(stats.server_to_client.min, s.min);
    stats.server_to_client.max = std::max(stats.server_to_client.max, s.max);
    stats.client_to_server.min = std::min(stats.client_to_server.min, c.min);
    stats.client_to_server.max = std::max(stats.client_to_server.max, c.max);
  }
  return stats;
}

TrafficImage render(const WindowHistogram& hist, NormalizationMode mode,
                    const std::optional<TraceStats>& trace_stats) {
  ChannelStats server;
  ChannelStats client;
  if (mode == NormalizationMode::PerTrace) {
    if (!trace_stats)
      throw Error(ErrorCode::MissingTraceStats,
                  "per-trace normalization needs trace-wide channel stats");
    server = trace_stats->server_to_client;
    client = trace_stats->client_to_server;
  } else {
    server = window_stats(hist.server_to_client);
    client = window_stats(hist.client_to_server);
  }

  TrafficImage img;
  img.red = render_channel(hist.server_to_client, server);
  img.green = render_channel(hist.client_to_server, client);
  img.trace_id = hist.trace_id;
  img.window_index = hist.window_index;
  img.window_start_us = hist.window_start_us;
  return img;
}

std::vector<std::uint8_t> image_rgb_bytes(const TrafficImage& img) {
  const Index width = img.time_bins();
  const Index height = img.length_bins();
  std::vector<std::uint8_t> rgb(static_cast<std::size_t>(width) * height * 3);
  std::size_t at = 0;
  for (Index y = 0; y < height; ++y) {    // y = length bin
    for (Index x = 0; x < width; ++x) {   // x = time bin
      rgb[at++] = img.red(x, y);
      rgb[at++] = img.green(x, y);
      rgb[at++] = 0;
    }
  }
  return rgb;
}

std::array<std::uint8_t, 32> image_digest(const TrafficImage& img) {
  std::vector<std::uint8_t> buf;
  const auto push_u32 = [&buf](std::uint32_t v) {
    buf.push_back(static_cast<std::uint8_t>(v & 0xFF));
    buf.push_back(static_cast<std::uint8_t>((v >> 8) & 0xFF));
    buf.push_back(static_cast<std::uint8_t>((v >> 16) & 0xFF));
    buf.push_back(static_cast<std::uint8_t>((v >> 24) & 0xFF));
  };
  push_u32(static_cast<std::uint32_t>(img.time_bins()));
  push_u32(static_cast<std::uint32_t>(img.length_bins()));
  const auto rgb = image_rgb_bytes(img);
  buf.insert(buf.end(), rgb.begin(), rgb.end());

  std::array<std::uint8_t, 32> out{};
  unsigned int len = 0;
  EVP_Digest(buf.data(), buf.size(), out.data(), &len, EVP_sha256(), nullptr);
  return out;
}

std::string digest_hex(const std::array<std::uint8_t, 32>& digest) {
  static const char* hex = "0123456789abcdef";
  std::string out;
  out.reserve(64);
  for (auto b : digest) {
    out.push_back(hex[b >> 4]);
    out.push_back(hex[b & 0x0F]);
  }
  return out;
}

bool Deduplicator::admit(const std::array<std::uint8_t, 32>& digest, int label) {
  std::string key(reinterpret_cast<const char*>(digest.data()), digest.size());
  key.push_back(':');
  key += std::to_string(label);
  ++report_.input;
  if (seen_.insert(std::move(key)).second) {
    ++report_.kept;
    return true;
  }
  ++report_.dropped;
  return false;
}

std::pair<std::vector<std::pair<TrafficImage, int>>, DedupReport> dedup(
    std::span<const std::pair<TrafficImage, int>> samples) {
  Deduplicator filter;
  std::vector<std::pair<TrafficImage, int>> kept;
  for (const auto& sample : samples) {
    if (filter.admit(image_digest(sample.first), sample.second))
      kept.push_back(sample);
  }
  return {std::move(kept), filter.report()};
}

}  // namespace quicpic
