#pragma once

#include <array>
#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace quicpic {

using Index = Eigen::Index;

/// Packet counts on the (time bin, length bin) grid of one direction channel.
/// Row index = time bin, column index = length bin.
using CountGrid = Eigen::Matrix<std::uint32_t, Eigen::Dynamic, Eigen::Dynamic>;

/// 8-bit pixel intensities on the same grid layout as CountGrid.
using ByteGrid = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>;

constexpr std::int64_t kMicrosPerSecond = 1'000'000;

inline std::int64_t seconds_to_us(double s) {
  return static_cast<std::int64_t>(s * 1e6 + (s >= 0 ? 0.5 : -0.5));
}

inline double us_to_seconds(std::int64_t us) {
  return static_cast<double>(us) / 1e6;
}

enum class ErrorCode {
  MalformedHeader,
  TruncatedPacket,
  AmbiguousEndpoints,
  InvalidWindowSpec,
  MissingTraceStats,
  IoFailure,
  BadPng,
  MalformedEvents,
  TooFewTraces,
  InvalidHoldoutCount,
  LabelOutOfAugmentationRange,
  EmptyInput,
  LengthMismatch,
  AllZeroCounts,
  MalformedManifest,
  UnknownSampleId,
  MissingPrediction,
  BadConfig,
};

const char* error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

enum class Direction : std::uint8_t {
  ClientToServer = 0,
  ServerToClient = 1,
};

/// IPv4 or IPv6 address plus UDP port. IPv4 addresses occupy the first four
/// bytes of `addr` with the rest zeroed.
struct Endpoint {
  std::array<std::uint8_t, 16> addr{};
  std::uint16_t port = 0;
  bool is_v6 = false;

  bool operator==(const Endpoint&) const = default;
  std::string to_string() const;
};

/// One retained packet. Timestamps are microseconds since the first retained
/// packet of the trace; integer microseconds keep window membership and bin
/// arithmetic exact.
struct PacketRecord {
  std::int64_t time_us = 0;
  std::uint32_t length = 0;  // original wire length from the record header
  Direction direction = Direction::ClientToServer;

  double seconds() const { return us_to_seconds(time_us); }
};

struct TraceMeta {
  std::string trace_id;
  std::string server_label;
  Endpoint client;
  Endpoint server;
  std::vector<PacketRecord> packets;
  std::int64_t duration_us = 0;  // last timestamp, 0 for an empty trace
  bool no_quic_traffic = false;  // set when zero packets passed the filter
  std::uint64_t endpoint_mismatches = 0;  // packets dropped off the chosen pair

  bool empty() const { return packets.empty(); }
};

inline const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::MalformedHeader: return "MalformedHeader";
    case ErrorCode::TruncatedPacket: return "TruncatedPacket";
    case ErrorCode::AmbiguousEndpoints: return "AmbiguousEndpoints";
    case ErrorCode::InvalidWindowSpec: return "InvalidWindowSpec";
    case ErrorCode::MissingTraceStats: return "MissingTraceStats";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::BadPng: return "BadPng";
    case ErrorCode::MalformedEvents: return "MalformedEvents";
    case ErrorCode::TooFewTraces: return "TooFewTraces";
    case ErrorCode::InvalidHoldoutCount: return "InvalidHoldoutCount";
    case ErrorCode::LabelOutOfAugmentationRange: return "LabelOutOfAugmentationRange";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::AllZeroCounts: return "AllZeroCounts";
    case ErrorCode::MalformedManifest: return "MalformedManifest";
    case ErrorCode::UnknownSampleId: return "UnknownSampleId";
    case ErrorCode::MissingPrediction: return "MissingPrediction";
    case ErrorCode::BadConfig: return "BadConfig";
  }
  return "UnknownError";
}

inline std::string Endpoint::to_string() const {
  char buf[64];
  if (is_v6) {
    std::string hex;
    for (int i = 0; i < 16; i += 2) {
      char part[8];
      std::snprintf(part, sizeof(part), "%02x%02x", addr[i], addr[i + 1]);
      if (!hex.empty()) hex += ':';
      hex += part;
    }
    return "[" + hex + "]:" + std::to_string(port);
  }
  std::snprintf(buf, sizeof(buf), "%u.%u.%u.%u:%u", addr[0], addr[1], addr[2],
                addr[3], port);
  return buf;
}

}  // namespace quicpic
