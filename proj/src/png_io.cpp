#include "quicpic/png_io.hpp"

#include <array>
#include <cstring>
#include <fstream>

namespace quicpic {
namespace {

constexpr std::array<std::uint8_t, 8> kSignature = {0x89, 0x50, 0x4E, 0x47,
                                                    0x0D, 0x0A, 0x1A, 0x0A};

std::uint32_t crc32(std::span<const std::uint8_t> data) {
  static const auto table = [] {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t n = 0; n < 256; ++n) {
      std::uint32_t c = n;
      for (int k = 0; k < 8; ++k)
        c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      t[n] = c;
    }
    return t;
  }();
  std::uint32_t c = 0xFFFFFFFFu;
  for (auto b : data) c = table[(c ^ b) & 0xFF] ^ (c >> 8);
  return c ^ 0xFFFFFFFFu;
}

std::uint32_t adler32(std::span<const std::uint8_t> data) {
  std::uint32_t a = 1, b = 0;
  for (auto byte : data) {
    a = (a + byte) % 65521;
    b = (b + a) % 65521;
  }
  return (b << 16) | a;
}

void push_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>((v >> 16) & 0xFF));
  out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xFF));
  out.push_back(static_cast<std::uint8_t>(v & 0xFF));
}

std::uint32_t get_be32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) << 24 |
         static_cast<std::uint32_t>(p[1]) << 16 |
         static_cast<std::uint32_t>(p[2]) << 8 | static_cast<std::uint32_t>(p[3]);
}

void push_chunk(std::vector<std::uint8_t>& out, const char type[4],
                std::span<const std::uint8_t> data) {
  push_be32(out, static_cast<std::uint32_t>(data.size()));
  std::vector<std::uint8_t> body(type, type + 4);
  body.insert(body.end(), data.begin(), data.end());
  out.insert(out.end(), body.begin(), body.end());
  push_be32(out, crc32(body));
}

// zlib stream with stored (uncompressed) deflate blocks only.
std::vector<std::uint8_t> zlib_store(std::span<const std::uint8_t> raw) {
  std::vector<std::uint8_t> out{0x78, 0x01};
  std::size_t pos = 0;
  do {
    const std::size_t n = std::min<std::size_t>(raw.size() - pos, 65535);
    const bool last = pos + n == raw.size();
    out.push_back(last ? 0x01 : 0x00);
    out.push_back(static_cast<std::uint8_t>(n & 0xFF));
    out.push_back(static_cast<std::uint8_t>(n >> 8));
    out.push_back(static_cast<std::uint8_t>(~n & 0xFF));
    out.push_back(static_cast<std::uint8_t>((~n >> 8) & 0xFF));
    out.insert(out.end(), raw.begin() + pos, raw.begin() + pos + n);
    pos += n;
  } while (pos < raw.size());
  push_be32(out, adler32(raw));
  return out;
}

std::vector<std::uint8_t> zlib_unstore(std::span<const std::uint8_t> stream) {
  if (stream.size() < 6) throw Error(ErrorCode::BadPng, "zlib stream too short");
  if ((stream[0] & 0x0F) != 8)
    throw Error(ErrorCode::BadPng, "not a deflate stream");
  std::size_t pos = 2;
  std::vector<std::uint8_t> raw;
  bool final_block = false;
  while (!final_block) {
    if (pos >= stream.size() - 4)
      throw Error(ErrorCode::BadPng, "deflate stream truncated");
    const std::uint8_t header = stream[pos++];
    final_block = header & 0x01;
    if (((header >> 1) & 0x03) != 0)
      throw Error(ErrorCode::BadPng,
                  "compressed deflate blocks are not supported");
    if (pos + 4 > stream.size() - 4)
      throw Error(ErrorCode::BadPng, "stored block header truncated");
    const std::size_t len = stream[pos] | (stream[pos + 1] << 8);
    const std::size_t nlen = stream[pos + 2] | (stream[pos + 3] << 8);
    if ((len ^ nlen) != 0xFFFF)
      throw Error(ErrorCode::BadPng, "stored block length mismatch");
    pos += 4;
    if (pos + len > stream.size() - 4)
      throw Error(ErrorCode::BadPng, "stored block body truncated");
    raw.insert(raw.end(), stream.begin() + pos, stream.begin() + pos + len);
    pos += len;
  }
  if (adler32(raw) != get_be32(stream.data() + stream.size() - 4))
    throw Error(ErrorCode::BadPng, "adler32 mismatch");
  return raw;
}

}  // namespace

std::vector<std::uint8_t> encode_png(const TrafficImage& img) {
  const Index width = img.time_bins();
  const Index height = img.length_bins();

  std::vector<std::uint8_t> ihdr;
  push_be32(ihdr, static_cast<std::uint32_t>(width));
  push_be32(ihdr, static_cast<std::uint32_t>(height));
  ihdr.push_back(8);  // bit depth
  ihdr.push_back(2);  // color type: truecolor
  ihdr.push_back(0);  // compression
  ihdr.push_back(0);  // filter method
  ihdr.push_back(0);  // no interlace

  const auto rgb = image_rgb_bytes(img);
  std::vector<std::uint8_t> raw;
  raw.reserve(static_cast<std::size_t>(height) * (1 + 3 * width));
  for (Index y = 0; y < height; ++y) {
    raw.push_back(0);  // filter type None
    const std::size_t row = static_cast<std::size_t>(y) * width * 3;
    raw.insert(raw.end(), rgb.begin() + row, rgb.begin() + row + 3 * width);
  }
  const auto idat = zlib_store(raw);

  std::vector<std::uint8_t> out(kSignature.begin(), kSignature.end());
  push_chunk(out, "IHDR", ihdr);
  push_chunk(out, "IDAT", idat);
  push_chunk(out, "IEND", {});
  return out;
}

DecodedPng decode_png(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kSignature.size() ||
      !std::equal(kSignature.begin(), kSignature.end(), bytes.begin()))
    throw Error(ErrorCode::BadPng, "missing PNG signature");

  DecodedPng png;
  std::vector<std::uint8_t> idat;
  std::size_t pos = kSignature.size();
  bool saw_ihdr = false;
  while (pos + 8 <= bytes.size()) {
    const std::uint32_t len = get_be32(bytes.data() + pos);
    if (pos + 12 + len > bytes.size())
      throw Error(ErrorCode::BadPng, "chunk exceeds file");
    const char* type = reinterpret_cast<const char*>(bytes.data() + pos + 4);
    std::span<const std::uint8_t> data(bytes.data() + pos + 8, len);

    std::vector<std::uint8_t> body(bytes.begin() + pos + 4,
                                   bytes.begin() + pos + 8 + len);
    if (crc32(body) != get_be32(bytes.data() + pos + 8 + len))
      throw Error(ErrorCode::BadPng, "chunk CRC mismatch");

    if (std::memcmp(type, "IHDR", 4) == 0) {
      if (len != 13) throw Error(ErrorCode::BadPng, "bad IHDR length");
      png.width = get_be32(data.data());
      png.height = get_be32(data.data() + 4);
      if (data[8] != 8 || data[9] != 2 || data[10] != 0 || data[11] != 0 ||
          data[12] != 0)
        throw Error(ErrorCode::BadPng, "unsupported PNG format");
      saw_ihdr = true;
    } else if (std::memcmp(type, "IDAT", 4) == 0) {
      idat.insert(idat.end(), data.begin(), data.end());
    } else if (std::memcmp(type, "IEND", 4) == 0) {
      break;
    }
    pos += 12 + len;
  }
  if (!saw_ihdr || png.width <= 0 || png.height <= 0)
    throw Error(ErrorCode::BadPng, "missing or empty IHDR");

  const auto raw = zlib_unstore(idat);
  const std::size_t stride = 1 + 3 * static_cast<std::size_t>(png.width);
  if (raw.size() != stride * static_cast<std::size_t>(png.height))
    throw Error(ErrorCode::BadPng, "pixel payload size mismatch");

  png.rgb.reserve(raw.size() - png.height);
  for (Index y = 0; y < png.height; ++y) {
    const std::uint8_t* row = raw.data() + static_cast<std::size_t>(y) * stride;
    if (row[0] != 0)
      throw Error(ErrorCode::BadPng, "unsupported scanline filter");
    png.rgb.insert(png.rgb.end(), row + 1, row + stride);
  }
  return png;
}

void write_png(const TrafficImage& img, const std::filesystem::path& path) {
  const auto bytes = encode_png(img);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::IoFailure, "short write to " + path.string());
}

DecodedPng read_png_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return decode_png(bytes);
}

}  // namespace quicpic
