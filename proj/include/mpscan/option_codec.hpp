#pragma once

// TCP option list and MP_CAPABLE wire codec (RFC 6824 version 0, RFC 8684 version 1).

#include <compare>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mpscan {

using Bytes = std::vector<std::uint8_t>;

/// 64-bit MPTCP sender's/receiver's key.
struct Key {
  std::uint64_t value = 0;

  friend auto operator<=>(const Key&, const Key&) = default;
};

std::string to_hex(Key key);
std::optional<Key> parse_key(std::string_view hex);

namespace option_kind {
inline constexpr std::uint8_t kEol = 0;
inline constexpr std::uint8_t kNop = 1;
inline constexpr std::uint8_t kMss = 2;
inline constexpr std::uint8_t kWindowScale = 3;
inline constexpr std::uint8_t kSackPermitted = 4;
inline constexpr std::uint8_t kTimestamp = 8;
inline constexpr std::uint8_t kMptcp = 30;
}  // namespace option_kind

inline constexpr std::size_t kMaxOptionBytes = 40;

struct TcpOption {
  std::uint8_t kind = 0;
  Bytes payload;  // excludes kind and length bytes

  bool single_byte() const noexcept { return kind == option_kind::kEol || kind == option_kind::kNop; }
  std::size_t encoded_size() const noexcept { return single_byte() ? 1 : payload.size() + 2; }

  friend bool operator==(const TcpOption&, const TcpOption&) = default;
};

/// Options in wire order. Stops at EOL (the EOL itself is not returned).
std::vector<TcpOption> parse_options(std::span<const std::uint8_t> bytes);

/// Serializes without padding.
Bytes serialize_options(std::span<const TcpOption> options);

/// Serializes and pads with EOL to a multiple of four; throws IllegalLength above 40 bytes.
Bytes serialize_options_padded(std::span<const TcpOption> options);

Bytes encode_option(const TcpOption& option);

enum class McVersion : std::uint8_t { V0 = 0, V1 = 1 };

inline std::uint8_t to_int(McVersion v) { return static_cast<std::uint8_t>(v); }
std::optional<McVersion> parse_version(std::string_view text);

enum class HandshakePhase : std::uint8_t { Syn, SynAck, Ack };

std::string_view to_string(HandshakePhase phase);

namespace mc_flags {
inline constexpr std::uint8_t kChecksumRequired = 0x80;  // A
inline constexpr std::uint8_t kHmacSha1 = 0x01;          // H (v0)
inline constexpr std::uint8_t kHmacSha256 = 0x01;        // H (v1)
inline constexpr std::uint8_t kDefaultV0 = kChecksumRequired | kHmacSha1;
inline constexpr std::uint8_t kDefaultV1 = kHmacSha256;
}  // namespace mc_flags

inline std::uint8_t default_flags(McVersion v) {
  return v == McVersion::V0 ? mc_flags::kDefaultV0 : mc_flags::kDefaultV1;
}

struct MpCapable {
  McVersion version = McVersion::V0;
  std::uint8_t flags = 0;
  std::optional<Key> sender_key;
  std::optional<Key> receiver_key;

  friend bool operator==(const MpCapable&, const MpCapable&) = default;
};

inline constexpr std::uint8_t kMpCapableSubtype = 0;

/// Option length (kind + length + payload) mandated for (version, phase).
std::size_t mp_capable_length(McVersion version, HandshakePhase phase);

MpCapable decode_mp_capable(const TcpOption& option, HandshakePhase phase);
TcpOption encode_mp_capable(const MpCapable& mc, HandshakePhase phase);
Bytes encode_mp_capable_bytes(const MpCapable& mc, HandshakePhase phase);

/// First kind-30 option whose subtype nibble is MP_CAPABLE.
const TcpOption* find_mp_capable(std::span<const TcpOption> options);

/// Sender key carried in an MP_CAPABLE option, read positionally without validating phase.
std::optional<Key> peek_sender_key(const TcpOption& option);

}  // namespace mpscan
