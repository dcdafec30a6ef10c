#include "quicpic/pcap.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <map>

namespace quicpic {
namespace {

constexpr std::uint32_t kMagicMicros = 0xA1B2C3D4;
constexpr std::uint32_t kMagicMicrosSwapped = 0xD4C3B2A1;
constexpr std::uint32_t kMagicNanos = 0xA1B23C4D;
constexpr std::uint32_t kMagicNanosSwapped = 0x4D3CB2A1;

constexpr std::uint32_t kLinkEthernet = 1;
constexpr std::uint32_t kLinkRawBsd = 12;
constexpr std::uint32_t kLinkRawIp = 101;

struct Cursor {
  const std::uint8_t* data;
  std::size_t size;
  std::size_t pos = 0;

  std::size_t remaining() const { return size - pos; }
};

std::uint16_t read_u16(const std::uint8_t* p, bool swap) {
  std::uint16_t v = static_cast<std::uint16_t>(p[0]) |
                    static_cast<std::uint16_t>(p[1]) << 8;
  return swap ? static_cast<std::uint16_t>(v >> 8 | v << 8) : v;
}

std::uint32_t read_u32(const std::uint8_t* p, bool swap) {
  std::uint32_t v = static_cast<std::uint32_t>(p[0]) |
                    static_cast<std::uint32_t>(p[1]) << 8 |
                    static_cast<std::uint32_t>(p[2]) << 16 |
                    static_cast<std::uint32_t>(p[3]) << 24;
  if (swap) {
    v = (v >> 24) | ((v >> 8) & 0x0000FF00u) | ((v << 8) & 0x00FF0000u) |
        (v << 24);
  }
  return v;
}

std::uint16_t read_be16(const std::uint8_t* p) {
  return static_cast<std::uint16_t>(p[0] << 8 | p[1]);
}

// One QUIC-passing packet before endpoint-pair election.
struct RawQuicPacket {
  std::int64_t abs_time_us;
  std::uint32_t wire_length;
  Endpoint src;
  Endpoint dst;
};

struct PairKey {
  Endpoint a;  // lexicographically smaller endpoint
  Endpoint b;

  bool operator<(const PairKey& o) const {
    auto tup = [](const Endpoint& e) {
      return std::make_tuple(e.is_v6, e.addr, e.port);
    };
    return std::make_tuple(tup(a), tup(b)) < std::make_tuple(tup(o.a), tup(o.b));
  }
};

PairKey make_pair_key(const Endpoint& x, const Endpoint& y) {
  auto tup = [](const Endpoint& e) {
    return std::make_tuple(e.is_v6, e.addr, e.port);
  };
  if (tup(x) <= tup(y)) return {x, y};
  return {y, x};
}

// UDP datagram pulled out of one capture record, if any.
struct UdpView {
  Endpoint src;
  Endpoint dst;
  std::span<const std::uint8_t> payload;
};

std::optional<UdpView> dissect_udp(std::span<const std::uint8_t> frame,
                                   std::uint32_t linktype) {
  std::span<const std::uint8_t> ip = frame;
  if (linktype == kLinkEthernet) {
    if (frame.size() < 14) return std::nullopt;
    const std::uint16_t ethertype = read_be16(frame.data() + 12);
    if (ethertype != 0x0800 && ethertype != 0x86DD) return std::nullopt;
    ip = frame.subspan(14);
  }

  if (ip.empty()) return std::nullopt;
  const std::uint8_t version = ip[0] >> 4;

  Endpoint src;
  Endpoint dst;
  std::span<const std::uint8_t> l4;

  if (version == 4) {
    const std::size_t ihl = static_cast<std::size_t>(ip[0] & 0x0F) * 4;
    if (ihl < 20 || ip.size() < ihl) return std::nullopt;
    if (ip[9] != 17) return std::nullopt;  // UDP only
    const std::uint16_t frag = read_be16(ip.data() + 6);
    if ((frag & 0x1FFF) != 0) return std::nullopt;  // non-first fragment
    std::memcpy(src.addr.data(), ip.data() + 12, 4);
    std::memcpy(dst.addr.data(), ip.data() + 16, 4);
    l4 = ip.subspan(ihl);
  } else if (version == 6) {
    if (ip.size() < 40) return std::nullopt;
    if (ip[6] != 17) return std::nullopt;  // no extension-header walking
    src.is_v6 = dst.is_v6 = true;
    std::memcpy(src.addr.data(), ip.data() + 8, 16);
    std::memcpy(dst.addr.data(), ip.data() + 24, 16);
    l4 = ip.subspan(40);
  } else {
    return std::nullopt;
  }

  if (l4.size() < 8) return std::nullopt;
  src.port = read_be16(l4.data());
  dst.port = read_be16(l4.data() + 2);
  const std::size_t udp_len = read_be16(l4.data() + 4);
  std::size_t payload_len = l4.size() - 8;
  if (udp_len >= 8) payload_len = std::min(payload_len, udp_len - 8);
  return UdpView{src, dst, l4.subspan(8, payload_len)};
}

std::vector<RawQuicPacket> scan_quic_packets(std::span<const std::byte> data,
                                             const QuicFilterConfig& config) {
  Cursor cur{reinterpret_cast<const std::uint8_t*>(data.data()), data.size()};
  if (cur.remaining() < 24)
    throw Error(ErrorCode::MalformedHeader, "truncated global header");

  const std::uint32_t raw_magic = read_u32(cur.data, false);
  bool swap = false;
  bool nanos = false;
  switch (raw_magic) {
    case kMagicMicros: break;
    case kMagicMicrosSwapped: swap = true; break;
    case kMagicNanos: nanos = true; break;
    case kMagicNanosSwapped: swap = true; nanos = true; break;
    default:
      throw Error(ErrorCode::MalformedHeader, "unrecognized pcap magic");
  }

  const std::uint32_t linktype = read_u32(cur.data + 20, swap);
  if (linktype != kLinkEthernet && linktype != kLinkRawIp &&
      linktype != kLinkRawBsd) {
    throw Error(ErrorCode::MalformedHeader,
                "unsupported link type " + std::to_string(linktype));
  }
  cur.pos = 24;

  std::vector<RawQuicPacket> out;
  while (cur.remaining() > 0) {
    if (cur.remaining() < 16)
      throw Error(ErrorCode::TruncatedPacket, "truncated record header");
    const std::uint8_t* rh = cur.data + cur.pos;
    const std::uint32_t ts_sec = read_u32(rh, swap);
    const std::uint32_t ts_frac = read_u32(rh + 4, swap);
    const std::uint32_t incl_len = read_u32(rh + 8, swap);
    const std::uint32_t orig_len = read_u32(rh + 12, swap);
    cur.pos += 16;
    if (cur.remaining() < incl_len)
      throw Error(ErrorCode::TruncatedPacket, "record body exceeds capture");

    std::span<const std::uint8_t> frame(cur.data + cur.pos, incl_len);
    cur.pos += incl_len;

    auto udp = dissect_udp(frame, linktype);
    if (!udp) continue;
    if (!classify_quic(udp->payload, udp->src.port, udp->dst.port, config))
      continue;

    const std::int64_t us =
        static_cast<std::int64_t>(ts_sec) * kMicrosPerSecond +
        (nanos ? ts_frac / 1000 : ts_frac);
    out.push_back(RawQuicPacket{us, orig_len, udp->src, udp->dst});
  }
  return out;
}

TraceMeta assemble_trace(const std::vector<RawQuicPacket>& pair_packets,
                         std::uint64_t mismatches,
                         const QuicFilterConfig& config) {
  TraceMeta trace;
  trace.endpoint_mismatches = mismatches;
  if (pair_packets.empty()) {
    trace.no_quic_traffic = true;
    return trace;
  }

  const Endpoint first_src = pair_packets.front().src;
  const Endpoint first_dst = pair_packets.front().dst;
  Endpoint client = first_src;
  Endpoint server = first_dst;
  if (config.client_override &&
      (*config.client_override == first_src || *config.client_override == first_dst)) {
    client = *config.client_override;
    server = client == first_src ? first_dst : first_src;
  }
  trace.client = client;
  trace.server = server;

  const std::int64_t base = pair_packets.front().abs_time_us;
  trace.packets.reserve(pair_packets.size());
  for (const auto& raw : pair_packets) {
    auto dir = resolve_direction(raw.src, raw.dst, client, server);
    if (!dir) {  // unreachable for packets of the elected pair
      ++trace.endpoint_mismatches;
      continue;
    }
    trace.packets.push_back(
        PacketRecord{raw.abs_time_us - base, raw.wire_length, *dir});
  }

  // Captures are chronological in practice; restore monotonicity if not,
  // keeping capture order among equal timestamps.
  if (!std::is_sorted(trace.packets.begin(), trace.packets.end(),
                      [](const PacketRecord& a, const PacketRecord& b) {
                        return a.time_us < b.time_us;
                      })) {
    std::stable_sort(trace.packets.begin(), trace.packets.end(),
                     [](const PacketRecord& a, const PacketRecord& b) {
                       return a.time_us < b.time_us;
                     });
    const std::int64_t shift = trace.packets.front().time_us;
    for (auto& p : trace.packets) p.time_us -= shift;
  }

  trace.duration_us = trace.packets.back().time_us;
  return trace;
}

void append_u16le(std::vector<std::byte>& out, std::uint16_t v) {
  out.push_back(static_cast<std::byte>(v & 0xFF));
  out.push_back(static_cast<std::byte>(v >> 8));
}

void append_u32le(std::vector<std::byte>& out, std::uint32_t v) {
  out.push_back(static_cast<std::byte>(v & 0xFF));
  out.push_back(static_cast<std::byte>((v >> 8) & 0xFF));
  out.push_back(static_cast<std::byte>((v >> 16) & 0xFF));
  out.push_back(static_cast<std::byte>((v >> 24) & 0xFF));
}

void append_be16(std::vector<std::byte>& out, std::uint16_t v) {
  out.push_back(static_cast<std::byte>(v >> 8));
  out.push_back(static_cast<std::byte>(v & 0xFF));
}

}  // namespace

bool classify_quic(std::span<const std::uint8_t> payload, std::uint16_t src_port,
                   std::uint16_t dst_port, const QuicFilterConfig& config) {
  const auto& ports = config.quic_ports;
  const bool port_ok =
      std::find(ports.begin(), ports.end(), src_port) != ports.end() ||
      std::find(ports.begin(), ports.end(), dst_port) != ports.end();
  if (!port_ok) return false;
  if (payload.empty()) return false;

  const std::uint8_t first = payload[0];
  if ((first & 0x40) == 0) return false;  // QUIC v1 fixed bit
  if (first & 0x80) {
    // Long header: first byte + 4-byte version + DCID/SCID length bytes.
    if (payload.size() < 7) return false;
  }
  return true;
}

std::optional<Direction> resolve_direction(const Endpoint& src, const Endpoint& dst,
                                           const Endpoint& client,
                                           const Endpoint& server) {
  if (src == client && dst == server) return Direction::ClientToServer;
  if (src == server && dst == client) return Direction::ServerToClient;
  return std::nullopt;
}

TraceMeta parse_pcap(std::span<const std::byte> data,
                     const QuicFilterConfig& config) {
  const auto raw = scan_quic_packets(data, config);
  if (raw.empty()) {
    TraceMeta trace;
    trace.no_quic_traffic = true;
    return trace;
  }

  PairKey chosen{};
  if (config.endpoint_override) {
    chosen = make_pair_key(config.endpoint_override->first,
                           config.endpoint_override->second);
  } else {
    std::map<PairKey, std::size_t> counts;
    for (const auto& p : raw) ++counts[make_pair_key(p.src, p.dst)];
    auto best = counts.begin();
    bool tie = false;
    for (auto it = std::next(counts.begin()); it != counts.end(); ++it) {
      if (it->second > best->second) {
        best = it;
        tie = false;
      } else if (it->second == best->second) {
        tie = true;
      }
    }
    if (tie && counts.size() > 1)
      throw Error(ErrorCode::AmbiguousEndpoints,
                  "endpoint pairs tie for dominance; set an override");
    chosen = best->first;
  }

  std::vector<RawQuicPacket> kept;
  std::uint64_t mismatches = 0;
  for (const auto& p : raw) {
    const PairKey key = make_pair_key(p.src, p.dst);
    if (key < chosen || chosen < key)
      ++mismatches;
    else
      kept.push_back(p);
  }
  return assemble_trace(kept, mismatches, config);
}

std::vector<TraceMeta> parse_pcap_per_flow(std::span<const std::byte> data,
                                           const QuicFilterConfig& config) {
  const auto raw = scan_quic_packets(data, config);
  std::vector<PairKey> order;
  std::map<PairKey, std::vector<RawQuicPacket>> flows;
  for (const auto& p : raw) {
    const PairKey key = make_pair_key(p.src, p.dst);
    auto [it, inserted] = flows.try_emplace(key);
    if (inserted) order.push_back(key);
    it->second.push_back(p);
  }

  std::vector<TraceMeta> out;
  out.reserve(order.size());
  for (const auto& key : order) out.push_back(assemble_trace(flows[key], 0, config));
  return out;
}

TraceMeta parse_pcap_file(const std::filesystem::path& path,
                          const QuicFilterConfig& config) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());
  return parse_pcap(std::as_bytes(std::span<const char>(bytes)), config);
}

std::vector<std::byte> write_pcap(const TraceMeta& trace,
                                  std::int64_t base_time_us) {
  std::vector<std::byte> out;
  append_u32le(out, kMagicMicros);
  append_u16le(out, 2);       // version major
  append_u16le(out, 4);       // version minor
  append_u32le(out, 0);       // thiszone
  append_u32le(out, 0);       // sigfigs
  append_u32le(out, 65535);   // snaplen
  append_u32le(out, kLinkEthernet);

  const bool v6 = trace.client.is_v6 || trace.server.is_v6;
  // Minimal QUIC short-header payload; real lengths live in orig_len.
  const std::vector<std::uint8_t> payload{0x40, 0x00, 0x00, 0x00,
                                          0x00, 0x00, 0x00, 0x00};

  for (const auto& pkt : trace.packets) {
    const Endpoint& src =
        pkt.direction == Direction::ClientToServer ? trace.client : trace.server;
    const Endpoint& dst =
        pkt.direction == Direction::ClientToServer ? trace.server : trace.client;

    std::vector<std::byte> frame;
    // Ethernet header: zero MACs, ethertype by address family.
    frame.insert(frame.end(), 12, std::byte{0});
    append_be16(frame, v6 ? 0x86DD : 0x0800);

    const std::uint16_t udp_len = static_cast<std::uint16_t>(8 + payload.size());
    if (v6) {
      frame.push_back(std::byte{0x60});
      frame.insert(frame.end(), 3, std::byte{0});
      append_be16(frame, udp_len);
      frame.push_back(std::byte{17});
      frame.push_back(std::byte{64});  // hop limit
      for (auto b : src.addr) frame.push_back(static_cast<std::byte>(b));
      for (auto b : dst.addr) frame.push_back(static_cast<std::byte>(b));
    } else {
      frame.push_back(std::byte{0x45});
      frame.push_back(std::byte{0});
      append_be16(frame, static_cast<std::uint16_t>(20 + udp_len));
      append_be16(frame, 0);  // identification
      append_be16(frame, 0);  // flags/fragment offset
      frame.push_back(std::byte{64});  // TTL
      frame.push_back(std::byte{17});
      append_be16(frame, 0);  // checksum (unvalidated)
      for (int i = 0; i < 4; ++i) frame.push_back(static_cast<std::byte>(src.addr[i]));
      for (int i = 0; i < 4; ++i) frame.push_back(static_cast<std::byte>(dst.addr[i]));
    }
    append_be16(frame, src.port);
    append_be16(frame, dst.port);
    append_be16(frame, udp_len);
    append_be16(frame, 0);  // UDP checksum
    for (auto b : payload) frame.push_back(static_cast<std::byte>(b));

    const std::int64_t abs_us = base_time_us + pkt.time_us;
    append_u32le(out, static_cast<std::uint32_t>(abs_us / kMicrosPerSecond));
    append_u32le(out, static_cast<std::uint32_t>(abs_us % kMicrosPerSecond));
    append_u32le(out, static_cast<std::uint32_t>(frame.size()));
    append_u32le(out, pkt.length);  // wire length preserved verbatim
    out.insert(out.end(), frame.begin(), frame.end());
  }
  return out;
}

}  // namespace quicpic
