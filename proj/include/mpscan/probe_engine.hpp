#pragma once

// Stateless SYN probing with MP_CAPABLE and SYN-ACK classification.

#include <cstdint>
#include <functional>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "mpscan/ip.hpp"
#include "mpscan/option_codec.hpp"
#include "mpscan/transport.hpp"

namespace mpscan {

/// Weight-16 key used when a campaign does not supply one.
inline constexpr Key kDefaultProbeKey{0xA5A5'0000'0000'A5A5ULL};

struct ProbeSpec {
  Endpoint target;
  McVersion version = McVersion::V0;
  std::optional<Key> probe_key;  // required iff version 0
  Millis timeout{1000};
  std::uint8_t flags = mc_flags::kDefaultV0;
  std::uint64_t campaign_seed = 0;
  std::optional<IpAddress> source;  // defaults per family when absent

  /// Throws IllegalCombination when the key presence does not match the version.
  void validate() const;
};

struct SynProbe {
  TcpPacket packet;
  TcpOption mp_capable;
};

IpAddress default_source_address(AddressFamily family);

/// Source port and ISN are a keyed hash of (source, target, port, seed), so
/// replies can be validated without per-target state.
struct ProbeIdentity {
  std::uint16_t source_port;
  std::uint32_t sequence;
};
ProbeIdentity derive_probe_identity(const IpAddress& source, const Endpoint& target, std::uint64_t seed);

SynProbe build_syn_probe(const ProbeSpec& spec);

/// True when `resp` acknowledges the ISN derived for `spec`.
bool response_matches(const ProbeSpec& spec, const ProbeResponse& resp);

namespace classification {
struct NoResponse {
  std::string note;  // "timeout", "rst", "not-syn-ack"
  friend bool operator==(const NoResponse&, const NoResponse&) = default;
};
struct NoMpCapable {
  std::string note;
  friend bool operator==(const NoMpCapable&, const NoMpCapable&) = default;
};
struct MirroredKey {
  friend bool operator==(const MirroredKey&, const MirroredKey&) = default;
};
struct VersionMismatch {
  std::uint8_t got = 0;
  friend bool operator==(const VersionMismatch&, const VersionMismatch&) = default;
};
struct PotentialCapable {
  Key sender_key;
  McVersion version = McVersion::V0;
  friend bool operator==(const PotentialCapable&, const PotentialCapable&) = default;
};
}  // namespace classification

using Classification = std::variant<classification::NoResponse, classification::NoMpCapable,
                                    classification::MirroredKey, classification::VersionMismatch,
                                    classification::PotentialCapable>;

std::string_view label(const Classification& c);

Classification classify_response(const ProbeSpec& spec, const std::optional<ProbeResponse>& resp);

struct CampaignGuard {
  double max_packets_per_second = 0;
  std::optional<std::vector<IpPrefix>> blocklist;
  bool dry_run = false;

  /// Throws GuardViolation for a non-positive rate or a missing blocklist outside dry runs.
  void validate() const;
  bool blocked(const IpAddress& address) const;
};

/// Per-campaign probe parameters; the target is filled in per record.
struct ProbeTemplate {
  McVersion version = McVersion::V0;
  std::optional<Key> probe_key = kDefaultProbeKey;
  std::optional<std::uint8_t> flags;
  Millis timeout{1000};
  std::uint64_t seed = 0;
  std::optional<IpAddress> source_v4;
  std::optional<IpAddress> source_v6;

  ProbeSpec spec_for(const Endpoint& target) const;
};

struct Skipped {
  std::string reason;
};

struct PlannedProbe {
  Bytes wire;
};

using CampaignOutcome = std::variant<Classification, Skipped, PlannedProbe>;

struct CampaignRecord {
  Clock::TimePoint timestamp{0};
  Endpoint target;
  McVersion version = McVersion::V0;
  CampaignOutcome outcome;
};

std::string_view outcome_label(const CampaignOutcome& outcome);

/// Paces sends so that no half-open one-second window holds more than `rate` tokens.
class TokenBucket {
 public:
  TokenBucket(double rate_per_second, Clock& clock);
  /// Blocks (on the clock) until the next send slot and returns it.
  Clock::TimePoint acquire();

 private:
  double rate_;
  Clock& clock_;
  Clock::TimePoint start_;
  std::uint64_t issued_ = 0;
  std::mutex mutex_;
};

using CampaignSink = std::function<void(const CampaignRecord&)>;

/// One record per target, in completion order. `transport` may be null only for dry runs.
void run_campaign(std::span<const Endpoint> targets, const ProbeTemplate& tmpl, const CampaignGuard& guard,
                  PacketTransport* transport, Clock& clock, const CampaignSink& sink, unsigned workers = 1);

std::vector<CampaignRecord> run_campaign(std::span<const Endpoint> targets, const ProbeTemplate& tmpl,
                                         const CampaignGuard& guard, PacketTransport* transport, Clock& clock,
                                         unsigned workers = 1);

}  // namespace mpscan
