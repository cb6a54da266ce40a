#include "mpscan/probe_engine.hpp"

#include <sodium.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <thread>

#include "mpscan/error.hpp"

namespace mpscan {

void ProbeSpec::validate() const {
  if (version == McVersion::V0 && !probe_key) {
    throw Error(ErrorCode::IllegalCombination, "version 0 probes carry a sender's key");
  }
  if (version == McVersion::V1 && probe_key) {
    throw Error(ErrorCode::IllegalCombination, "version 1 SYN carries no key");
  }
  if (source && source->family() != target.address.family()) {
    throw Error(ErrorCode::InvalidArgument, "source and target address families differ");
  }
}

IpAddress default_source_address(AddressFamily family) {
  // Documentation ranges (RFC 5737 / RFC 3849).
  return family == AddressFamily::V4 ? *IpAddress::parse("192.0.2.1") : *IpAddress::parse("2001:db8::1");
}

ProbeIdentity derive_probe_identity(const IpAddress& source, const Endpoint& target, std::uint64_t seed) {
  static_assert(crypto_shorthash_KEYBYTES == 16 && crypto_shorthash_BYTES == 8);
  unsigned char key[crypto_shorthash_KEYBYTES];
  for (int i = 0; i < 8; ++i) {
    key[i] = static_cast<unsigned char>(seed >> (8 * i));
    key[8 + i] = static_cast<unsigned char>((seed ^ 0x6d70746370726f62ULL) >> (8 * i));
  }
  Bytes msg;
  msg.push_back(static_cast<std::uint8_t>(target.address.family()));
  msg.insert(msg.end(), source.bytes().begin(), source.bytes().end());
  msg.insert(msg.end(), target.address.bytes().begin(), target.address.bytes().end());
  msg.push_back(static_cast<std::uint8_t>(target.port >> 8));
  msg.push_back(static_cast<std::uint8_t>(target.port));
  unsigned char out[crypto_shorthash_BYTES];
  crypto_shorthash(out, msg.data(), msg.size(), key);
  std::uint64_t h = 0;
  for (int i = 7; i >= 0; --i) h = (h << 8) | out[i];
  // Ports 32768..61439 keep clear of well-known and most OS ephemeral defaults.
  return {static_cast<std::uint16_t>(32768 + (h >> 32) % 28672), static_cast<std::uint32_t>(h)};
}

SynProbe build_syn_probe(const ProbeSpec& spec) {
  spec.validate();
  MpCapable mc{spec.version, spec.flags, spec.probe_key, std::nullopt};
  SynProbe probe;
  probe.mp_capable = encode_mp_capable(mc, HandshakePhase::Syn);

  auto& p = probe.packet;
  p.src = spec.source.value_or(default_source_address(spec.target.address.family()));
  p.dst = spec.target.address;
  const auto id = derive_probe_identity(p.src, spec.target, spec.campaign_seed);
  p.src_port = id.source_port;
  p.dst_port = spec.target.port;
  p.seq = id.sequence;
  p.flags = tcp_flag::kSyn;
  p.window = 65535;
  p.ttl = 64;
  p.ip_id = static_cast<std::uint16_t>(id.sequence >> 16);
  p.options.push_back({option_kind::kMss, {0x05, 0xB4}});
  p.options.push_back({option_kind::kSackPermitted, {}});
  p.options.push_back(probe.mp_capable);
  return probe;
}

bool response_matches(const ProbeSpec& spec, const ProbeResponse& resp) {
  const auto src = spec.source.value_or(default_source_address(spec.target.address.family()));
  const auto id = derive_probe_identity(src, spec.target, spec.campaign_seed);
  return resp.ack_number == id.sequence + 1;
}

std::string_view label(const Classification& c) {
  static constexpr std::string_view names[] = {"NoResponse", "NoMpCapable", "MirroredKey", "VersionMismatch",
                                               "PotentialCapable"};
  return names[c.index()];
}

Classification classify_response(const ProbeSpec& spec, const std::optional<ProbeResponse>& resp) {
  using namespace classification;
  if (!resp) return NoResponse{"timeout"};
  if (resp->is_rst()) return NoResponse{"rst"};
  if (!resp->is_syn_ack()) return NoResponse{"not-syn-ack"};

  const TcpOption* opt = find_mp_capable(resp->options);
  if (!opt) return NoMpCapable{"absent"};

  if (spec.version == McVersion::V1) {
    // Byte-identity has priority over any version reading.
    const MpCapable sent{McVersion::V1, spec.flags, std::nullopt, std::nullopt};
    if (*opt == encode_mp_capable(sent, HandshakePhase::Syn)) return MirroredKey{};
  }

  MpCapable mc;
  try {
    mc = decode_mp_capable(*opt, HandshakePhase::SynAck);
  } catch (const Error& e) {
    return NoMpCapable{std::string(to_string(e.code()))};
  }
  if (spec.version == McVersion::V0 && spec.probe_key && mc.sender_key == spec.probe_key) return MirroredKey{};
  if (mc.version != spec.version) return VersionMismatch{to_int(mc.version)};
  return PotentialCapable{*mc.sender_key, mc.version};
}

void CampaignGuard::validate() const {
  if (!(max_packets_per_second > 0) || !std::isfinite(max_packets_per_second)) {
    throw Error(ErrorCode::GuardViolation, "a positive packet rate is required");
  }
  if (!blocklist && !dry_run) throw Error(ErrorCode::GuardViolation, "refusing to probe without a blocklist");
}

bool CampaignGuard::blocked(const IpAddress& address) const {
  if (!blocklist) return false;
  return std::any_of(blocklist->begin(), blocklist->end(), [&](const IpPrefix& p) { return p.contains(address); });
}

ProbeSpec ProbeTemplate::spec_for(const Endpoint& target) const {
  ProbeSpec spec;
  spec.target = target;
  spec.version = version;
  spec.probe_key = version == McVersion::V0 ? probe_key : std::nullopt;
  spec.timeout = timeout;
  spec.flags = flags.value_or(default_flags(version));
  spec.campaign_seed = seed;
  spec.source = target.address.is_v4() ? source_v4 : source_v6;
  return spec;
}

std::string_view outcome_label(const CampaignOutcome& outcome) {
  if (const auto* c = std::get_if<Classification>(&outcome)) return label(*c);
  if (std::holds_alternative<Skipped>(outcome)) return "Skipped";
  return "Planned";
}

TokenBucket::TokenBucket(double rate_per_second, Clock& clock)
    : rate_(rate_per_second), clock_(clock), start_(clock.now()) {
  if (!(rate_ > 0)) throw Error(ErrorCode::GuardViolation, "rate must be positive");
}

Clock::TimePoint TokenBucket::acquire() {
  Clock::TimePoint slot;
  {
    std::lock_guard lock(mutex_);
    ++issued_;
    // Bucket starts empty: token n becomes available at start + n / rate.
    const double ns = std::ceil(static_cast<double>(issued_) * 1e9 / rate_);
    slot = start_ + Clock::TimePoint(static_cast<std::int64_t>(ns));
  }
  clock_.sleep_until(slot);
  return slot;
}

void run_campaign(std::span<const Endpoint> targets, const ProbeTemplate& tmpl, const CampaignGuard& guard,
                  PacketTransport* transport, Clock& clock, const CampaignSink& sink, unsigned workers) {
  guard.validate();
  if (!guard.dry_run && transport == nullptr) {
    throw Error(ErrorCode::TransportUnavailable, "no packet transport configured");
  }
  // Surface template errors before any packet leaves.
  if (!targets.empty()) tmpl.spec_for(targets.front()).validate();

  TokenBucket bucket(guard.max_packets_per_second, clock);
  std::mutex sink_mutex;
  auto emit = [&](CampaignRecord rec) {
    std::lock_guard lock(sink_mutex);
    sink(rec);
  };

  auto process = [&](const Endpoint& target) {
    CampaignRecord rec;
    rec.target = target;
    rec.version = tmpl.version;
    if (guard.blocked(target.address)) {
      rec.timestamp = clock.now();
      rec.outcome = Skipped{"blocklisted"};
      emit(std::move(rec));
      return;
    }
    const ProbeSpec spec = tmpl.spec_for(target);
    const SynProbe probe = build_syn_probe(spec);
    if (guard.dry_run) {
      rec.timestamp = clock.now();
      rec.outcome = PlannedProbe{serialize_packet(probe.packet)};
      emit(std::move(rec));
      return;
    }
    rec.timestamp = bucket.acquire();
    auto resp = transport->exchange(probe.packet, spec.timeout);
    if (resp && !response_matches(spec, *resp)) resp.reset();
    rec.outcome = classify_response(spec, resp);
    emit(std::move(rec));
  };

  if (workers <= 1) {
    for (const auto& t : targets) process(t);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < targets.size(); i = next++) {
          try {
            process(targets[i]);
          } catch (...) {
            std::lock_guard lock(failure_mutex);
            if (!failure) failure = std::current_exception();
            next = targets.size();
            return;
          }
        }
      });
    }
  }
  if (failure) std::rethrow_exception(failure);
}

std::vector<CampaignRecord> run_campaign(std::span<const Endpoint> targets, const ProbeTemplate& tmpl,
                                         const CampaignGuard& guard, PacketTransport* transport, Clock& clock,
                                         unsigned workers) {
  std::vector<CampaignRecord> out;
  run_campaign(targets, tmpl, guard, transport, clock, [&](const CampaignRecord& r) { out.push_back(r); }, workers);
  return out;
}

}  // namespace mpscan
