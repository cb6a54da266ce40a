#include <doctest.h>

#include <random>

#include "mpscan/error.hpp"
#include "mpscan/option_codec.hpp"

using namespace mpscan;

namespace {

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an mpscan::Error");
  return ErrorCode::InvalidArgument;
}

}  // namespace

TEST_CASE("v0 SYN encodes to the hand-assembled RFC 6824 layout") {
  const MpCapable mc{McVersion::V0, 0x81, Key{0x0102030405060708ULL}, std::nullopt};
  const Bytes expected{0x1E, 0x0C, 0x00, 0x81, 0x01, 0x02, 0x03, 0x04, 0x05, 0x06, 0x07, 0x08};
  CHECK(encode_mp_capable_bytes(mc, HandshakePhase::Syn) == expected);
}

TEST_CASE("v1 SYN carries no key and is four bytes") {
  const MpCapable mc{McVersion::V1, 0x01, std::nullopt, std::nullopt};
  CHECK(encode_mp_capable_bytes(mc, HandshakePhase::Syn) == Bytes{0x1E, 0x04, 0x01, 0x01});
}

TEST_CASE("v0 ACK carries sender then receiver key") {
  const MpCapable mc{McVersion::V0, 0x81, Key{0x1111111111111111ULL}, Key{0x2222222222222222ULL}};
  const Bytes wire = encode_mp_capable_bytes(mc, HandshakePhase::Ack);
  REQUIRE(wire.size() == 20);
  CHECK(wire[1] == 20);
  CHECK(wire[4] == 0x11);
  CHECK(wire[12] == 0x22);
}

TEST_CASE("mandated lengths per version and phase") {
  CHECK(mp_capable_length(McVersion::V0, HandshakePhase::Syn) == 12);
  CHECK(mp_capable_length(McVersion::V0, HandshakePhase::SynAck) == 12);
  CHECK(mp_capable_length(McVersion::V0, HandshakePhase::Ack) == 20);
  CHECK(mp_capable_length(McVersion::V1, HandshakePhase::Syn) == 4);
  CHECK(mp_capable_length(McVersion::V1, HandshakePhase::SynAck) == 12);
  CHECK(mp_capable_length(McVersion::V1, HandshakePhase::Ack) == 20);
}

TEST_CASE("decode inverts the hand-assembled bytes") {
  const Bytes wire{0x1E, 0x0C, 0x01, 0x01, 0xDE, 0xAD, 0xBE, 0xEF, 0x00, 0x00, 0x00, 0x2A};
  const auto opts = parse_options(wire);
  REQUIRE(opts.size() == 1);
  const MpCapable mc = decode_mp_capable(opts[0], HandshakePhase::SynAck);
  CHECK(mc.version == McVersion::V1);
  CHECK(mc.flags == 0x01);
  CHECK(mc.sender_key == Key{0xDEADBEEF0000002AULL});
  CHECK_FALSE(mc.receiver_key.has_value());
}

TEST_CASE("v1 ACK with a data-length field is tolerated on decode") {
  TcpOption opt{option_kind::kMptcp, Bytes(20, 0)};
  opt.payload[0] = 0x01;
  CHECK(decode_mp_capable(opt, HandshakePhase::Ack).receiver_key.has_value());
  opt.payload.resize(22);
  CHECK_NOTHROW(decode_mp_capable(opt, HandshakePhase::Ack));
  opt.payload.resize(21);
  CHECK(code_of([&] { decode_mp_capable(opt, HandshakePhase::Ack); }) == ErrorCode::BadLength);
}

TEST_CASE("decode errors") {
  CHECK(code_of([] { decode_mp_capable({option_kind::kMptcp, {0x10, 0x81}}, HandshakePhase::Syn); }) ==
        ErrorCode::BadSubtype);
  CHECK(code_of([] { decode_mp_capable({option_kind::kMptcp, {0x02, 0x01}}, HandshakePhase::Syn); }) ==
        ErrorCode::UnknownVersion);
  CHECK(code_of([] { decode_mp_capable({option_kind::kMptcp, {0x00, 0x81}}, HandshakePhase::Syn); }) ==
        ErrorCode::BadLength);
  CHECK(code_of([] { decode_mp_capable({option_kind::kMss, {0x05, 0xB4}}, HandshakePhase::Syn); }) ==
        ErrorCode::BadSubtype);
}

TEST_CASE("encode rejects keys that do not fit the phase") {
  CHECK(code_of([] {
          encode_mp_capable({McVersion::V1, 0x01, Key{1}, std::nullopt}, HandshakePhase::Syn);
        }) == ErrorCode::IllegalCombination);
  CHECK(code_of([] {
          encode_mp_capable({McVersion::V0, 0x81, std::nullopt, std::nullopt}, HandshakePhase::Syn);
        }) == ErrorCode::IllegalCombination);
  CHECK(code_of([] {
          encode_mp_capable({McVersion::V0, 0x81, std::nullopt, Key{1}}, HandshakePhase::Ack);
        }) == ErrorCode::IllegalCombination);
}

TEST_CASE("parse_options handles NOP, EOL and errors") {
  const Bytes wire{0x01, 0x01, 0x02, 0x04, 0x05, 0xB4, 0x00, 0xFF, 0xFF};
  const auto opts = parse_options(wire);
  REQUIRE(opts.size() == 3);
  CHECK(opts[0].kind == option_kind::kNop);
  CHECK(opts[2] == TcpOption{option_kind::kMss, {0x05, 0xB4}});

  CHECK(code_of([] { parse_options(Bytes{0x02}); }) == ErrorCode::TruncatedOption);
  CHECK(code_of([] { parse_options(Bytes{0x02, 0x06, 0x05}); }) == ErrorCode::TruncatedOption);
  CHECK(code_of([] { parse_options(Bytes{0x08, 0x01}); }) == ErrorCode::IllegalLength);
}

TEST_CASE("padded serialization aligns to four and caps at forty bytes") {
  const std::vector<TcpOption> opts{{option_kind::kMss, {0x05, 0xB4}}, {option_kind::kSackPermitted, {}}};
  const Bytes padded = serialize_options_padded(opts);
  CHECK(padded.size() == 8);
  CHECK(padded[6] == 0);
  CHECK(parse_options(padded) == opts);

  const std::vector<TcpOption> big{{option_kind::kMptcp, Bytes(18)}, {option_kind::kMptcp, Bytes(18)},
                                   {option_kind::kNop, {}}};
  CHECK(serialize_options(big).size() == 41);
  CHECK(code_of([&] { serialize_options_padded(big); }) == ErrorCode::IllegalLength);
}

TEST_CASE("key hex round trip") {
  CHECK(to_hex(Key{0xA5A500000000A5A5ULL}) == "a5a500000000a5a5");
  CHECK(parse_key("0xA5A500000000A5A5") == Key{0xA5A500000000A5A5ULL});
  CHECK(parse_key("a5") == Key{0xA5});
  CHECK_FALSE(parse_key("xyz").has_value());
  CHECK_FALSE(parse_key("11111111111111111").has_value());
}

TEST_CASE("peek_sender_key reads positionally") {
  const TcpOption opt = encode_mp_capable({McVersion::V0, 0x81, Key{42}, std::nullopt}, HandshakePhase::Syn);
  CHECK(peek_sender_key(opt) == Key{42});
  CHECK_FALSE(peek_sender_key({option_kind::kMptcp, {0x01, 0x01}}).has_value());
}

TEST_CASE("random option regions never crash the parser") {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 2000; ++i) {
    Bytes b(rng() % 41);
    for (auto& x : b) x = static_cast<std::uint8_t>(rng());
    try {
      for (const auto& o : parse_options(b)) {
        if (o.kind == option_kind::kMptcp) {
          try {
            decode_mp_capable(o, HandshakePhase::SynAck);
          } catch (const Error&) {
          }
        }
      }
    } catch (const Error&) {
    }
  }
}
