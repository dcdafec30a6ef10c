#pragma once

// Shared builders for the test binaries: hand-constructed pcap bytes with
// full control over byte order and resolution, synthetic traces, and a tiny
// record walker kept independent of the library's parser so fixtures can be
// cross-checked against it.

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "quicpic/pcap.hpp"
#include "quicpic/types.hpp"

namespace fixtures {

using quicpic::Direction;
using quicpic::Endpoint;
using quicpic::PacketRecord;
using quicpic::TraceMeta;

inline Endpoint v4(std::uint8_t a, std::uint8_t b, std::uint8_t c,
                   std::uint8_t d, std::uint16_t port) {
  Endpoint e;
  e.addr = {a, b, c, d};
  e.port = port;
  return e;
}

inline Endpoint default_client() { return v4(10, 0, 0, 1, 50000); }
inline Endpoint default_server() { return v4(93, 184, 216, 34, 443); }

inline void push16be(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v & 0xFF));
}

inline void push32(std::vector<std::uint8_t>& out, std::uint32_t v, bool be) {
  if (be) {
    out.push_back(static_cast<std::uint8_t>(v >> 24));
    out.push_back(static_cast<std::uint8_t>((v >> 16) & 0xFF));
    out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xFF));
    out.push_back(static_cast<std::uint8_t>(v & 0xFF));
  } else {
    out.push_back(static_cast<std::uint8_t>(v & 0xFF));
    out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xFF));
    out.push_back(static_cast<std::uint8_t>((v >> 16) & 0xFF));
    out.push_back(static_cast<std::uint8_t>(v >> 24));
  }
}

inline void push16(std::vector<std::uint8_t>& out, std::uint16_t v, bool be) {
  if (be) {
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v & 0xFF));
  } else {
    out.push_back(static_cast<std::uint8_t>(v & 0xFF));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
  }
}

inline std::vector<std::uint8_t> quic_payload(std::size_t size = 8,
                                              std::uint8_t first = 0x40) {
  std::vector<std::uint8_t> payload(size, 0);
  if (!payload.empty()) payload[0] = first;
  return payload;
}

inline std::vector<std::uint8_t> udp4_frame(const Endpoint& src,
                                            const Endpoint& dst,
                                            std::span<const std::uint8_t> payload) {
  std::vector<std::uint8_t> frame(12, 0);  // zero MACs
  push16be(frame, 0x0800);
  const std::uint16_t udp_len = static_cast<std::uint16_t>(8 + payload.size());
  frame.push_back(0x45);
  frame.push_back(0);
  push16be(frame, static_cast<std::uint16_t>(20 + udp_len));
  push16be(frame, 0);       // identification
  push16be(frame, 0);       // flags/fragment
  frame.push_back(64);      // TTL
  frame.push_back(17);      // UDP
  push16be(frame, 0);       // header checksum
  for (int i = 0; i < 4; ++i) frame.push_back(src.addr[i]);
  for (int i = 0; i < 4; ++i) frame.push_back(dst.addr[i]);
  push16be(frame, src.port);
  push16be(frame, dst.port);
  push16be(frame, udp_len);
  push16be(frame, 0);  // UDP checksum
  frame.insert(frame.end(), payload.begin(), payload.end());
  return frame;
}

inline std::vector<std::uint8_t> tcp4_frame(const Endpoint& src,
                                            const Endpoint& dst) {
  std::vector<std::uint8_t> frame(12, 0);
  push16be(frame, 0x0800);
  frame.push_back(0x45);
  frame.push_back(0);
  push16be(frame, 40);  // 20 IP + 20 TCP
  push16be(frame, 0);
  push16be(frame, 0);
  frame.push_back(64);
  frame.push_back(6);  // TCP
  push16be(frame, 0);
  for (int i = 0; i < 4; ++i) frame.push_back(src.addr[i]);
  for (int i = 0; i < 4; ++i) frame.push_back(dst.addr[i]);
  push16be(frame, src.port);
  push16be(frame, dst.port);
  push32(frame, 0, true);  // seq
  push32(frame, 0, true);  // ack
  frame.push_back(0x50);   // data offset
  frame.push_back(0x02);   // SYN
  push16be(frame, 0);      // window
  push16be(frame, 0);      // checksum
  push16be(frame, 0);      // urgent
  return frame;
}

struct RawPacketSpec {
  std::int64_t abs_us = 0;
  std::vector<std::uint8_t> frame;
  std::uint32_t orig_len = 0;  // 0 = frame size
};

inline std::vector<std::byte> build_pcap(std::span<const RawPacketSpec> packets,
                                         bool byte_swapped = false,
                                         bool nanos = false,
                                         std::uint32_t linktype = 1) {
  // A byte-swapped file stores every header field in the opposite order of
  // the reader's native little-endian view.
  const bool be = byte_swapped;
  std::vector<std::uint8_t> out;
  const std::uint32_t magic = nanos ? 0xA1B23C4D : 0xA1B2C3D4;
  push32(out, magic, be);
  push16(out, 2, be);
  push16(out, 4, be);
  push32(out, 0, be);
  push32(out, 0, be);
  push32(out, 65535, be);
  push32(out, linktype, be);
  for (const auto& pkt : packets) {
    push32(out, static_cast<std::uint32_t>(pkt.abs_us / 1'000'000), be);
    const std::uint32_t frac = static_cast<std::uint32_t>(pkt.abs_us % 1'000'000);
    push32(out, nanos ? frac * 1000 : frac, be);
    push32(out, static_cast<std::uint32_t>(pkt.frame.size()), be);
    push32(out, pkt.orig_len == 0 ? static_cast<std::uint32_t>(pkt.frame.size())
                                  : pkt.orig_len,
           be);
    out.insert(out.end(), pkt.frame.begin(), pkt.frame.end());
  }
  std::vector<std::byte> bytes(out.size());
  std::memcpy(bytes.data(), out.data(), out.size());
  return bytes;
}

/// Capture record as seen by the independent walker below.
struct RefRecord {
  std::uint64_t ts_us = 0;
  std::uint32_t incl_len = 0;
  std::uint32_t orig_len = 0;
};

/// Minimal little-endian microsecond pcap walker, deliberately sharing no
/// code with quicpic::parse_pcap.
inline std::vector<RefRecord> reference_walk(std::span<const std::byte> data) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(data.data());
  const auto u32 = [&](std::size_t at) {
    return static_cast<std::uint32_t>(p[at]) |
           static_cast<std::uint32_t>(p[at + 1]) << 8 |
           static_cast<std::uint32_t>(p[at + 2]) << 16 |
           static_cast<std::uint32_t>(p[at + 3]) << 24;
  };
  std::vector<RefRecord> records;
  std::size_t at = 24;
  while (at + 16 <= data.size()) {
    RefRecord rec;
    rec.ts_us = static_cast<std::uint64_t>(u32(at)) * 1'000'000 + u32(at + 4);
    rec.incl_len = u32(at + 8);
    rec.orig_len = u32(at + 12);
    records.push_back(rec);
    at += 16 + rec.incl_len;
  }
  return records;
}

/// Trace straight from (time, length, direction) triples, for the windowing
/// and rendering tests that do not involve the parser.
inline TraceMeta make_trace(
    std::span<const std::tuple<std::int64_t, std::uint32_t, Direction>> packets,
    std::string trace_id = "test/trace") {
  TraceMeta trace;
  trace.trace_id = std::move(trace_id);
  trace.client = default_client();
  trace.server = default_server();
  for (const auto& [us, len, dir] : packets)
    trace.packets.push_back(PacketRecord{us, len, dir});
  std::sort(trace.packets.begin(), trace.packets.end(),
            [](const PacketRecord& a, const PacketRecord& b) {
              return a.time_us < b.time_us;
            });
  trace.duration_us = trace.packets.empty() ? 0 : trace.packets.back().time_us;
  return trace;
}

/// Uniform integer in [0, n) from a raw 64-bit generator; implementation-
/// independent unlike std::uniform_int_distribution.
inline std::uint64_t pick(std::mt19937_64& gen, std::uint64_t n) {
  return gen() % n;
}

/// Self-cleaning unique directory under the system temp root.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<unsigned> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("quicpic_" + tag + "_" + std::to_string(::getpid()) + "_" +
             std::to_string(counter.fetch_add(1)));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

/// Random but well-formed browsing-like trace: client requests followed by
/// server bursts, wire lengths in the realistic 60..1500 range.
inline TraceMeta random_session_trace(std::mt19937_64& gen,
                                      std::int64_t duration_us,
                                      std::size_t packets) {
  std::vector<std::tuple<std::int64_t, std::uint32_t, Direction>> tuples;
  tuples.emplace_back(0, 120u, Direction::ClientToServer);
  for (std::size_t k = 1; k < packets; ++k) {
    const auto t = static_cast<std::int64_t>(pick(gen, duration_us + 1));
    const bool from_server = pick(gen, 10) < 7;
    const auto len = static_cast<std::uint32_t>(
        from_server ? 400 + pick(gen, 1101) : 60 + pick(gen, 400));
    tuples.emplace_back(t, len,
                        from_server ? Direction::ServerToClient
                                    : Direction::ClientToServer);
  }
  // Pin the duration so window counts are predictable.
  tuples.emplace_back(duration_us, 1200u, Direction::ServerToClient);
  return make_trace(tuples);
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

inline void write_file(const std::filesystem::path& path,
                       const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string());
  out << text;
}

/// JSONL sidecar with counts[k] response starts inside window k (T = 0.1 s,
/// no overlap).
inline std::string events_for_windows(const std::string& trace_id,
                                      std::span<const int> counts) {
  std::ostringstream out;
  for (std::size_t k = 0; k < counts.size(); ++k)
    for (int e = 0; e < counts[k]; ++e) {
      const double t = 0.1 * static_cast<double>(k) + 0.001 * (e + 1);
      out << "{\"trace_id\": \"" << trace_id << "\", \"t\": " << t << "}\n";
    }
  return out.str();
}

/// Drop one pcap + events pair into <root>/<server>/ in the pipeline's input
/// layout.
inline void write_corpus_trace(const std::filesystem::path& input_root,
                               const std::string& server,
                               const std::string& stem, const TraceMeta& trace,
                               const std::string& events_jsonl) {
  const std::filesystem::path dir = input_root / server;
  std::filesystem::create_directories(dir);
  const auto bytes = quicpic::write_pcap(trace, 1'600'000'000'000'000);
  std::ofstream pcap(dir / (stem + ".pcap"), std::ios::binary);
  if (!pcap) throw std::runtime_error("cannot write pcap fixture");
  pcap.write(reinterpret_cast<const char*>(bytes.data()),
             static_cast<std::streamsize>(bytes.size()));
  write_file(dir / (stem + ".events.jsonl"), events_jsonl);
}

/// Relative path -> file bytes for a whole tree; the byte-determinism checks
/// compare these maps.
inline std::map<std::string, std::string> hash_tree(
    const std::filesystem::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& entry :
       std::filesystem::recursive_directory_iterator(root)) {
    if (!entry.is_regular_file()) continue;
    files[std::filesystem::relative(entry.path(), root).string()] =
        read_file(entry.path());
  }
  return files;
}

}  // namespace fixtures
