#include "mpscan/pcap.hpp"

#include <istream>
#include <ostream>

#include "mpscan/error.hpp"

namespace mpscan {

namespace {

constexpr std::uint32_t kMagicMicros = 0xa1b2c3d4;
constexpr std::uint32_t kMagicNanos = 0xa1b23c4d;

std::uint32_t bswap32(std::uint32_t v) {
  return (v >> 24) | ((v >> 8) & 0xFF00) | ((v << 8) & 0xFF0000) | (v << 24);
}

void put_le32(std::ostream& out, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v), static_cast<char>(v >> 8), static_cast<char>(v >> 16),
                     static_cast<char>(v >> 24)};
  out.write(b, 4);
}

void put_le16(std::ostream& out, std::uint16_t v) {
  const char b[2] = {static_cast<char>(v), static_cast<char>(v >> 8)};
  out.write(b, 2);
}

}  // namespace

PcapReader::PcapReader(std::istream& in) : in_(in) {
  std::uint8_t hdr[24];
  if (!in_.read(reinterpret_cast<char*>(hdr), sizeof hdr)) {
    throw Error(ErrorCode::MalformedCapture, "file shorter than the pcap global header");
  }
  const std::uint32_t magic = hdr[0] | (hdr[1] << 8) | (hdr[2] << 16) | (std::uint32_t{hdr[3]} << 24);
  if (magic == kMagicMicros || magic == kMagicNanos) {
    swapped_ = false;
  } else if (bswap32(magic) == kMagicMicros || bswap32(magic) == kMagicNanos) {
    swapped_ = true;
  } else {
    throw Error(ErrorCode::MalformedCapture, "unknown pcap magic");
  }
  nanos_ = (swapped_ ? bswap32(magic) : magic) == kMagicNanos;
  snaplen_ = read32(hdr + 16);
  link_type_ = read32(hdr + 20) & 0x0FFFFFFF;
}

std::uint32_t PcapReader::read32(const std::uint8_t* p) const noexcept {
  const std::uint32_t v = p[0] | (p[1] << 8) | (p[2] << 16) | (std::uint32_t{p[3]} << 24);
  return swapped_ ? bswap32(v) : v;
}

std::optional<CapturedPacket> PcapReader::next() {
  std::uint8_t rec[16];
  in_.read(reinterpret_cast<char*>(rec), sizeof rec);
  if (in_.gcount() == 0) return std::nullopt;
  if (in_.gcount() != sizeof rec) throw Error(ErrorCode::MalformedCapture, "truncated record header");
  const std::uint32_t sec = read32(rec);
  const std::uint32_t frac = read32(rec + 4);
  const std::uint32_t incl = read32(rec + 8);
  CapturedPacket pkt;
  pkt.original_length = read32(rec + 12);
  if (incl > std::max<std::uint32_t>(snaplen_, 262144)) throw Error(ErrorCode::MalformedCapture, "record too large");
  pkt.timestamp = std::chrono::seconds(sec) + (nanos_ ? std::chrono::nanoseconds(frac) : std::chrono::microseconds(frac));
  pkt.data.resize(incl);
  if (!in_.read(reinterpret_cast<char*>(pkt.data.data()), incl)) {
    throw Error(ErrorCode::MalformedCapture, "truncated record body");
  }
  return pkt;
}

PcapWriter::PcapWriter(std::ostream& out, std::uint32_t link_type, std::uint32_t snaplen) : out_(out) {
  put_le32(out_, kMagicNanos);
  put_le16(out_, 2);
  put_le16(out_, 4);
  put_le32(out_, 0);
  put_le32(out_, 0);
  put_le32(out_, snaplen);
  put_le32(out_, link_type);
}

void PcapWriter::write(std::chrono::nanoseconds timestamp, std::span<const std::uint8_t> frame) {
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timestamp);
  put_le32(out_, static_cast<std::uint32_t>(secs.count()));
  put_le32(out_, static_cast<std::uint32_t>((timestamp - secs).count()));
  put_le32(out_, static_cast<std::uint32_t>(frame.size()));
  put_le32(out_, static_cast<std::uint32_t>(frame.size()));
  out_.write(reinterpret_cast<const char*>(frame.data()), static_cast<std::streamsize>(frame.size()));
}

std::optional<std::span<const std::uint8_t>> ip_payload(std::uint32_t link_type, std::span<const std::uint8_t> f) {
  auto is_ip = [](std::span<const std::uint8_t> p) -> std::optional<std::span<const std::uint8_t>> {
    if (p.empty()) return std::nullopt;
    const unsigned v = p[0] >> 4;
    if (v != 4 && v != 6) return std::nullopt;
    return p;
  };
  switch (link_type) {
    case linktype::kRaw:
    case linktype::kIpv4:
    case linktype::kIpv6:
      return is_ip(f);
    case linktype::kNull:
    case linktype::kLoop:
      return f.size() > 4 ? is_ip(f.subspan(4)) : std::nullopt;
    case linktype::kEthernet: {
      std::size_t off = 12;
      while (f.size() >= off + 2) {
        const unsigned type = (f[off] << 8) | f[off + 1];
        if (type == 0x8100 || type == 0x88a8) {
          off += 4;
          continue;
        }
        if (type == 0x0800 || type == 0x86DD) return is_ip(f.subspan(off + 2));
        return std::nullopt;
      }
      return std::nullopt;
    }
    case linktype::kLinuxSll: {
      if (f.size() < 16) return std::nullopt;
      const unsigned type = (f[14] << 8) | f[15];
      if (type == 0x0800 || type == 0x86DD) return is_ip(f.subspan(16));
      return std::nullopt;
    }
    default:
      return std::nullopt;
  }
}

}  // namespace mpscan
