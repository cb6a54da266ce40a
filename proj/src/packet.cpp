#include "mpscan/packet.hpp"

#include "mpscan/error.hpp"

namespace mpscan {

namespace {

void put16(Bytes& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

void put32(Bytes& out, std::uint32_t v) {
  put16(out, static_cast<std::uint16_t>(v >> 16));
  put16(out, static_cast<std::uint16_t>(v));
}

std::uint16_t get16(std::span<const std::uint8_t> b, std::size_t at) {
  return static_cast<std::uint16_t>((b[at] << 8) | b[at + 1]);
}

std::uint32_t get32(std::span<const std::uint8_t> b, std::size_t at) {
  return (std::uint32_t{get16(b, at)} << 16) | get16(b, at + 2);
}

std::uint32_t sum_words(std::span<const std::uint8_t> data, std::uint32_t acc) {
  std::size_t i = 0;
  for (; i + 1 < data.size(); i += 2) acc += static_cast<std::uint32_t>((data[i] << 8) | data[i + 1]);
  if (i < data.size()) acc += static_cast<std::uint32_t>(data[i] << 8);
  return acc;
}

}  // namespace

std::uint16_t internet_checksum(std::span<const std::uint8_t> data, std::uint32_t initial) {
  std::uint32_t acc = sum_words(data, initial);
  while (acc >> 16) acc = (acc & 0xFFFF) + (acc >> 16);
  return static_cast<std::uint16_t>(~acc);
}

Bytes serialize_packet(const TcpPacket& p) {
  if (p.src.family() != p.dst.family()) throw Error(ErrorCode::InvalidArgument, "mixed address families");
  const Bytes options = serialize_options_padded(p.options);

  Bytes tcp;
  tcp.reserve(20 + options.size() + p.payload_length);
  put16(tcp, p.src_port);
  put16(tcp, p.dst_port);
  put32(tcp, p.seq);
  put32(tcp, p.ack);
  tcp.push_back(static_cast<std::uint8_t>(((20 + options.size()) / 4) << 4));
  tcp.push_back(p.flags);
  put16(tcp, p.window);
  put16(tcp, 0);  // checksum
  put16(tcp, 0);  // urgent pointer
  tcp.insert(tcp.end(), options.begin(), options.end());
  tcp.insert(tcp.end(), p.payload_length, 0);

  // Pseudo-header sum.
  std::uint32_t pseudo = sum_words(p.src.bytes(), 0);
  pseudo = sum_words(p.dst.bytes(), pseudo);
  pseudo += kProtoTcp;
  pseudo += static_cast<std::uint32_t>(tcp.size() & 0xFFFF) + static_cast<std::uint32_t>(tcp.size() >> 16);
  const std::uint16_t csum = internet_checksum(tcp, pseudo);
  tcp[16] = static_cast<std::uint8_t>(csum >> 8);
  tcp[17] = static_cast<std::uint8_t>(csum);

  Bytes out;
  if (p.src.is_v4()) {
    const std::size_t total = 20 + tcp.size();
    out.reserve(total);
    out.push_back(0x45);
    out.push_back(0);
    put16(out, static_cast<std::uint16_t>(total));
    put16(out, p.ip_id);
    put16(out, 0x4000);  // DF
    out.push_back(p.ttl);
    out.push_back(kProtoTcp);
    put16(out, 0);
    out.insert(out.end(), p.src.bytes().begin(), p.src.bytes().end());
    out.insert(out.end(), p.dst.bytes().begin(), p.dst.bytes().end());
    const std::uint16_t hsum = internet_checksum(out);
    out[10] = static_cast<std::uint8_t>(hsum >> 8);
    out[11] = static_cast<std::uint8_t>(hsum);
  } else {
    out.reserve(40 + tcp.size());
    put32(out, 0x60000000);
    put16(out, static_cast<std::uint16_t>(tcp.size()));
    out.push_back(kProtoTcp);
    out.push_back(p.ttl);
    out.insert(out.end(), p.src.bytes().begin(), p.src.bytes().end());
    out.insert(out.end(), p.dst.bytes().begin(), p.dst.bytes().end());
  }
  out.insert(out.end(), tcp.begin(), tcp.end());
  return out;
}

std::optional<ParsedTcp> parse_ip_tcp(std::span<const std::uint8_t> b) {
  if (b.empty()) return std::nullopt;
  ParsedTcp out;
  std::size_t l4 = 0;
  const unsigned ver = b[0] >> 4;
  if (ver == 4) {
    if (b.size() < 20) return std::nullopt;
    const std::size_t ihl = (b[0] & 0x0F) * 4u;
    if (ihl < 20 || b.size() < ihl) return std::nullopt;
    if (b[9] != kProtoTcp) return std::nullopt;
    if ((get16(b, 6) & 0x1FFF) != 0) return std::nullopt;  // non-first fragment
    out.ip_total_length = get16(b, 2);
    out.packet.ip_id = get16(b, 4);
    out.packet.ttl = b[8];
    out.packet.src = *IpAddress::from_bytes(AddressFamily::V4, b.subspan(12, 4));
    out.packet.dst = *IpAddress::from_bytes(AddressFamily::V4, b.subspan(16, 4));
    l4 = ihl;
  } else if (ver == 6) {
    if (b.size() < 40) return std::nullopt;
    // Extension headers are not walked; captures of MPTCP handshakes carry TCP directly.
    if (b[6] != kProtoTcp) return std::nullopt;
    out.ip_total_length = 40u + get16(b, 4);
    out.packet.ttl = b[7];
    out.packet.src = *IpAddress::from_bytes(AddressFamily::V6, b.subspan(8, 16));
    out.packet.dst = *IpAddress::from_bytes(AddressFamily::V6, b.subspan(24, 16));
    l4 = 40;
  } else {
    return std::nullopt;
  }

  auto tcp = b.subspan(l4);
  if (tcp.size() < 8) return std::nullopt;
  out.packet.src_port = get16(tcp, 0);
  out.packet.dst_port = get16(tcp, 2);
  out.packet.seq = get32(tcp, 4);
  if (tcp.size() < 20) return out;
  out.packet.ack = get32(tcp, 8);
  out.packet.flags = tcp[13];
  out.packet.window = get16(tcp, 14);
  const std::size_t data_offset = (tcp[12] >> 4) * 4u;
  if (data_offset < 20) throw Error(ErrorCode::IllegalLength, "TCP data offset " + std::to_string(data_offset));
  if (tcp.size() < data_offset) return out;
  out.packet.options = parse_options(tcp.subspan(20, data_offset - 20));
  out.options_complete = true;
  const std::size_t l4_total = out.ip_total_length > l4 ? out.ip_total_length - l4 : 0;
  if (l4_total > data_offset) out.packet.payload_length = static_cast<std::uint16_t>(l4_total - data_offset);
  return out;
}

}  // namespace mpscan
