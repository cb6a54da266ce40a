#pragma once

// TTL-stepping MP_CAPABLE probes with per-hop option diffing and a three-way path verdict.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "mpscan/probe_engine.hpp"

namespace mpscan {

namespace option_diff {
struct Unobserved {
  friend bool operator==(const Unobserved&, const Unobserved&) = default;
};
struct Untouched {
  friend bool operator==(const Untouched&, const Untouched&) = default;
};
struct Stripped {
  friend bool operator==(const Stripped&, const Stripped&) = default;
};
struct KeyChanged {
  Key new_key;
  friend bool operator==(const KeyChanged&, const KeyChanged&) = default;
};
struct OtherModification {
  std::string description;
  friend bool operator==(const OtherModification&, const OtherModification&) = default;
};
}  // namespace option_diff

using OptionDiff = std::variant<option_diff::Unobserved, option_diff::Untouched, option_diff::Stripped,
                                option_diff::KeyChanged, option_diff::OtherModification>;

std::string_view label(const OptionDiff& diff);
bool is_modification(const OptionDiff& diff) noexcept;

/// Compares the MP_CAPABLE option of `sent` with whatever `observed` carries.
OptionDiff diff_options(std::span<const TcpOption> sent, std::span<const TcpOption> observed);

struct HopRecord {
  int ttl = 1;
  std::optional<IpAddress> responder;
  std::optional<std::vector<TcpOption>> quoted_options;
  OptionDiff diff = option_diff::Unobserved{};
  bool from_target = false;
};

namespace path_verdict {
struct TrulyCapable {
  Key sender_key;
  friend bool operator==(const TrulyCapable&, const TrulyCapable&) = default;
};
struct MiddleboxAffected {
  int first_modifying_ttl = 0;
  friend bool operator==(const MiddleboxAffected&, const MiddleboxAffected&) = default;
};
enum class UnreachableReason { NoResponse, NotCapable };
struct Unreachable {
  UnreachableReason reason = UnreachableReason::NoResponse;
  friend bool operator==(const Unreachable&, const Unreachable&) = default;
};
}  // namespace path_verdict

using PathVerdict = std::variant<path_verdict::TrulyCapable, path_verdict::MiddleboxAffected, path_verdict::Unreachable>;

std::string_view label(const PathVerdict& verdict);

struct PathTrace {
  ProbeSpec spec;
  TcpOption sent_mp_capable;
  std::vector<TcpOption> sent_options;
  std::vector<HopRecord> hops;
  std::optional<ProbeResponse> final_response;
};

inline constexpr int kMaxPathTtl = 64;
inline constexpr int kDefaultTtlRepetitions = 3;

/// One record per TTL from 1 upward, stopping after a SYN-ACK or RST from the target.
PathTrace probe_path(const ProbeSpec& spec, int max_ttl, PacketTransport& transport,
                     int repetitions = kDefaultTtlRepetitions);

/// Unreachable first, then MiddleboxAffected on any non-target modification, then TrulyCapable.
PathVerdict classify_path(std::span<const HopRecord> hops, const std::optional<ProbeResponse>& final_response,
                          const ProbeSpec& spec);

inline PathVerdict classify_path(const PathTrace& trace) {
  return classify_path(trace.hops, trace.final_response, trace.spec);
}

}  // namespace mpscan
