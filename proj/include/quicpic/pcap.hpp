#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "quicpic/types.hpp"

namespace quicpic {

/// Predicate configuration for QUIC retention plus endpoint resolution
/// overrides for traces carrying more than one flow.
struct QuicFilterConfig {
  std::vector<std::uint16_t> quic_ports{443};

  /// When set, this endpoint is taken as the client regardless of which side
  /// sent the first retained packet.
  std::optional<Endpoint> client_override;

  /// When set, parsing keeps exactly this (client, server) pair instead of
  /// electing the dominant one.
  std::optional<std::pair<Endpoint, Endpoint>> endpoint_override;
};

/// True iff a UDP datagram looks like a QUIC packet: one endpoint port is a
/// configured QUIC port, the payload is non-empty, and the QUIC v1 fixed bit
/// (0x40) of the first byte is set. Long-header packets (0x80 set) must also
/// be long enough to carry the 4-byte version field and the two
/// connection-id length bytes.
bool classify_quic(std::span<const std::uint8_t> payload, std::uint16_t src_port,
                   std::uint16_t dst_port, const QuicFilterConfig& config);

/// ClientToServer when (src,dst) == (client,server), ServerToClient when
/// reversed, nullopt when the packet belongs to neither orientation.
std::optional<Direction> resolve_direction(const Endpoint& src, const Endpoint& dst,
                                           const Endpoint& client,
                                           const Endpoint& server);

/// Parse a classic libpcap capture and keep only QUIC-over-UDP packets of the
/// dominant (client, server) endpoint pair. Timestamps are rebased so the
/// first retained packet sits at t = 0. A capture with no QUIC traffic yields
/// an empty TraceMeta with `no_quic_traffic` set rather than an error.
///
/// Throws Error{MalformedHeader} on a bad magic or truncated global header,
/// Error{TruncatedPacket} when a record header or body runs past the buffer,
/// and Error{AmbiguousEndpoints} when two endpoint pairs tie for dominance
/// and no override is configured.
TraceMeta parse_pcap(std::span<const std::byte> data,
                     const QuicFilterConfig& config = {});

/// Same, splitting the capture into one TraceMeta per endpoint pair instead
/// of electing a dominant one. Flows are ordered by first appearance.
std::vector<TraceMeta> parse_pcap_per_flow(std::span<const std::byte> data,
                                           const QuicFilterConfig& config = {});

TraceMeta parse_pcap_file(const std::filesystem::path& path,
                          const QuicFilterConfig& config = {});

/// Serialize a trace back to classic libpcap bytes (Ethernet + IPv4/IPv6 +
/// UDP, microsecond timestamps). Round-tripping through parse_pcap yields the
/// same packet list; used by the filter-idempotence checks and test fixtures.
std::vector<std::byte> write_pcap(const TraceMeta& trace,
                                  std::int64_t base_time_us = 0);

}  // namespace quicpic
