#pragma once

// IPv4/IPv6 + TCP header building and parsing for probes, quotes and captures.

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "mpscan/ip.hpp"
#include "mpscan/option_codec.hpp"

namespace mpscan {

namespace tcp_flag {
inline constexpr std::uint8_t kFin = 0x01;
inline constexpr std::uint8_t kSyn = 0x02;
inline constexpr std::uint8_t kRst = 0x04;
inline constexpr std::uint8_t kPsh = 0x08;
inline constexpr std::uint8_t kAck = 0x10;
}  // namespace tcp_flag

inline constexpr std::uint8_t kProtoTcp = 6;

struct TcpPacket {
  IpAddress src;
  IpAddress dst;
  std::uint16_t src_port = 0;
  std::uint16_t dst_port = 0;
  std::uint32_t seq = 0;
  std::uint32_t ack = 0;
  std::uint8_t flags = 0;
  std::uint16_t window = 65535;
  std::uint8_t ttl = 64;
  std::uint16_t ip_id = 0;
  std::vector<TcpOption> options;
  std::uint16_t payload_length = 0;  // zero-filled payload bytes

  bool is_syn_ack() const noexcept {
    return (flags & (tcp_flag::kSyn | tcp_flag::kAck)) == (tcp_flag::kSyn | tcp_flag::kAck);
  }
  bool is_rst() const noexcept { return flags & tcp_flag::kRst; }
};

/// Full IP datagram with valid IPv4 header checksum and TCP checksum.
Bytes serialize_packet(const TcpPacket& packet);

std::uint16_t internet_checksum(std::span<const std::uint8_t> data, std::uint32_t initial = 0);

/// Result of parsing a (possibly truncated) IP datagram carrying TCP.
struct ParsedTcp {
  TcpPacket packet;
  /// False when the bytes end before the TCP options region does (e.g. ICMP quotes).
  bool options_complete = false;
  /// Bytes the IP header claims for the whole datagram.
  std::uint32_t ip_total_length = 0;
};

/// Returns nullopt when the bytes are not IP, not TCP, or too short for the ports.
/// Options that fail to parse throw the option-codec errors.
std::optional<ParsedTcp> parse_ip_tcp(std::span<const std::uint8_t> bytes);

}  // namespace mpscan
