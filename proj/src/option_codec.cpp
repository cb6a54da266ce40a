#include "mpscan/option_codec.hpp"

#include <charconv>
#include <cstdio>

#include "mpscan/error.hpp"

namespace mpscan {

std::string to_hex(Key key) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(key.value));
  return buf;
}

std::optional<Key> parse_key(std::string_view hex) {
  if (hex.starts_with("0x") || hex.starts_with("0X")) hex.remove_prefix(2);
  if (hex.empty() || hex.size() > 16) return std::nullopt;
  std::uint64_t value = 0;
  auto [ptr, ec] = std::from_chars(hex.data(), hex.data() + hex.size(), value, 16);
  if (ec != std::errc{} || ptr != hex.data() + hex.size()) return std::nullopt;
  return Key{value};
}

std::vector<TcpOption> parse_options(std::span<const std::uint8_t> bytes) {
  std::vector<TcpOption> out;
  std::size_t pos = 0;
  while (pos < bytes.size()) {
    const std::uint8_t kind = bytes[pos];
    if (kind == option_kind::kEol) break;
    if (kind == option_kind::kNop) {
      out.push_back({kind, {}});
      ++pos;
      continue;
    }
    if (pos + 1 >= bytes.size()) {
      throw Error(ErrorCode::TruncatedOption, "kind " + std::to_string(kind) + " has no length byte");
    }
    const std::size_t length = bytes[pos + 1];
    if (length < 2) {
      throw Error(ErrorCode::IllegalLength, "kind " + std::to_string(kind) + " length " + std::to_string(length));
    }
    if (length > bytes.size() - pos) {
      throw Error(ErrorCode::TruncatedOption, "kind " + std::to_string(kind) + " claims " + std::to_string(length) +
                                                  " bytes, " + std::to_string(bytes.size() - pos) + " remain");
    }
    out.push_back({kind, Bytes(bytes.begin() + pos + 2, bytes.begin() + pos + length)});
    pos += length;
  }
  return out;
}

Bytes encode_option(const TcpOption& option) {
  if (option.single_byte()) {
    if (!option.payload.empty()) throw Error(ErrorCode::IllegalLength, "EOL/NOP carry no payload");
    return {option.kind};
  }
  if (option.payload.size() > 253) throw Error(ErrorCode::IllegalLength, "option payload too long");
  Bytes out;
  out.reserve(option.payload.size() + 2);
  out.push_back(option.kind);
  out.push_back(static_cast<std::uint8_t>(option.payload.size() + 2));
  out.insert(out.end(), option.payload.begin(), option.payload.end());
  return out;
}

Bytes serialize_options(std::span<const TcpOption> options) {
  Bytes out;
  for (const auto& opt : options) {
    auto enc = encode_option(opt);
    out.insert(out.end(), enc.begin(), enc.end());
  }
  return out;
}

Bytes serialize_options_padded(std::span<const TcpOption> options) {
  Bytes out = serialize_options(options);
  if (out.size() > kMaxOptionBytes) {
    throw Error(ErrorCode::IllegalLength, "options need " + std::to_string(out.size()) + " bytes, limit is 40");
  }
  while (out.size() % 4 != 0) out.push_back(option_kind::kEol);
  return out;
}

std::optional<McVersion> parse_version(std::string_view text) {
  if (text == "0" || text == "v0") return McVersion::V0;
  if (text == "1" || text == "v1") return McVersion::V1;
  return std::nullopt;
}

std::string_view to_string(HandshakePhase phase) {
  switch (phase) {
    case HandshakePhase::Syn: return "SYN";
    case HandshakePhase::SynAck: return "SYN-ACK";
    case HandshakePhase::Ack: return "ACK";
  }
  return "?";
}

std::size_t mp_capable_length(McVersion version, HandshakePhase phase) {
  switch (phase) {
    case HandshakePhase::Syn: return version == McVersion::V0 ? 12 : 4;
    case HandshakePhase::SynAck: return 12;
    case HandshakePhase::Ack: return 20;
  }
  return 0;
}

namespace {

std::uint64_t read_be64(std::span<const std::uint8_t> p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v = (v << 8) | p[i];
  return v;
}

void write_be64(Bytes& out, std::uint64_t v) {
  for (int shift = 56; shift >= 0; shift -= 8) out.push_back(static_cast<std::uint8_t>(v >> shift));
}

// Number of keys each (version, phase) carries on the wire.
int keys_for(McVersion version, HandshakePhase phase) {
  switch (phase) {
    case HandshakePhase::Syn: return version == McVersion::V0 ? 1 : 0;
    case HandshakePhase::SynAck: return 1;
    case HandshakePhase::Ack: return 2;
  }
  return 0;
}

}  // namespace

MpCapable decode_mp_capable(const TcpOption& option, HandshakePhase phase) {
  if (option.kind != option_kind::kMptcp) {
    throw Error(ErrorCode::BadSubtype, "not an MPTCP option (kind " + std::to_string(option.kind) + ")");
  }
  const auto& p = option.payload;
  if (p.empty()) throw Error(ErrorCode::BadLength, "MPTCP option without subtype byte");
  const std::uint8_t subtype = p[0] >> 4;
  if (subtype != kMpCapableSubtype) {
    throw Error(ErrorCode::BadSubtype, "subtype " + std::to_string(subtype));
  }
  const std::uint8_t version_nibble = p[0] & 0x0F;
  if (version_nibble > 1) throw Error(ErrorCode::UnknownVersion, "version " + std::to_string(version_nibble));
  const auto version = static_cast<McVersion>(version_nibble);

  const std::size_t length = p.size() + 2;
  const std::size_t expected = mp_capable_length(version, phase);
  const bool v1_ack_with_data =
      version == McVersion::V1 && phase == HandshakePhase::Ack && (length == 22 || length == 24);
  if (length != expected && !v1_ack_with_data) {
    throw Error(ErrorCode::BadLength, "v" + std::to_string(version_nibble) + " " + std::string(to_string(phase)) +
                                          " expects " + std::to_string(expected) + " bytes, got " +
                                          std::to_string(length));
  }

  MpCapable mc;
  mc.version = version;
  mc.flags = p[1];
  const int keys = keys_for(version, phase);
  if (keys >= 1) mc.sender_key = Key{read_be64(std::span(p).subspan(2, 8))};
  if (keys >= 2) mc.receiver_key = Key{read_be64(std::span(p).subspan(10, 8))};
  return mc;
}

TcpOption encode_mp_capable(const MpCapable& mc, HandshakePhase phase) {
  const int keys = keys_for(mc.version, phase);
  const int present = mc.sender_key ? (mc.receiver_key ? 2 : 1) : (mc.receiver_key ? -1 : 0);
  if (present != keys) {
    throw Error(ErrorCode::IllegalCombination,
                "v" + std::to_string(to_int(mc.version)) + " " + std::string(to_string(phase)) + " requires " +
                    std::to_string(keys) + " key(s)");
  }
  TcpOption opt;
  opt.kind = option_kind::kMptcp;
  opt.payload.push_back(static_cast<std::uint8_t>((kMpCapableSubtype << 4) | to_int(mc.version)));
  opt.payload.push_back(mc.flags);
  if (mc.sender_key) write_be64(opt.payload, mc.sender_key->value);
  if (mc.receiver_key) write_be64(opt.payload, mc.receiver_key->value);
  return opt;
}

Bytes encode_mp_capable_bytes(const MpCapable& mc, HandshakePhase phase) {
  return encode_option(encode_mp_capable(mc, phase));
}

const TcpOption* find_mp_capable(std::span<const TcpOption> options) {
  for (const auto& opt : options) {
    if (opt.kind == option_kind::kMptcp && !opt.payload.empty() && (opt.payload[0] >> 4) == kMpCapableSubtype) {
      return &opt;
    }
  }
  return nullptr;
}

std::optional<Key> peek_sender_key(const TcpOption& option) {
  if (option.kind != option_kind::kMptcp || option.payload.size() < 10) return std::nullopt;
  return Key{read_be64(std::span(option.payload).subspan(2, 8))};
}

}  // namespace mpscan
