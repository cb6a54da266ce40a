#include "mpscan/path_inspector.hpp"

#include "mpscan/error.hpp"

namespace mpscan {

std::string_view label(const OptionDiff& diff) {
  static constexpr std::string_view names[] = {"Unobserved", "Untouched", "Stripped", "KeyChanged",
                                               "OtherModification"};
  return names[diff.index()];
}

bool is_modification(const OptionDiff& diff) noexcept {
  return std::holds_alternative<option_diff::Stripped>(diff) || std::holds_alternative<option_diff::KeyChanged>(diff) ||
         std::holds_alternative<option_diff::OtherModification>(diff);
}

OptionDiff diff_options(std::span<const TcpOption> sent, std::span<const TcpOption> observed) {
  const TcpOption* mine = find_mp_capable(sent);
  if (!mine) throw Error(ErrorCode::InvalidArgument, "sent options carry no MP_CAPABLE");
  const TcpOption* theirs = find_mp_capable(observed);
  if (!theirs) return option_diff::Stripped{};
  if (*theirs == *mine) return option_diff::Untouched{};

  const auto key_sent = peek_sender_key(*mine);
  const auto key_seen = peek_sender_key(*theirs);
  if (key_seen && key_seen != key_sent) return option_diff::KeyChanged{*key_seen};

  std::string what;
  if (theirs->payload.size() != mine->payload.size()) {
    what = "length " + std::to_string(mine->payload.size() + 2) + "->" + std::to_string(theirs->payload.size() + 2);
  } else {
    for (std::size_t i = 0; i < mine->payload.size(); ++i) {
      if (mine->payload[i] != theirs->payload[i]) {
        what = "byte" + std::to_string(i + 2);
        break;
      }
    }
  }
  return option_diff::OtherModification{what};
}

std::string_view label(const PathVerdict& verdict) {
  if (std::holds_alternative<path_verdict::TrulyCapable>(verdict)) return "TrulyCapable";
  if (std::holds_alternative<path_verdict::MiddleboxAffected>(verdict)) return "MiddleboxAffected";
  return std::get<path_verdict::Unreachable>(verdict).reason == path_verdict::UnreachableReason::NotCapable
             ? "NotCapable"
             : "Unreachable";
}

PathTrace probe_path(const ProbeSpec& spec, int max_ttl, PacketTransport& transport, int repetitions) {
  if (max_ttl < 1 || max_ttl > kMaxPathTtl) throw Error(ErrorCode::InvalidArgument, "maxTtl must be in [1, 64]");
  if (repetitions < 1) throw Error(ErrorCode::InvalidArgument, "repetitions must be positive");
  const SynProbe probe = build_syn_probe(spec);

  PathTrace trace;
  trace.spec = spec;
  trace.sent_mp_capable = probe.mp_capable;
  trace.sent_options = probe.packet.options;

  for (int ttl = 1; ttl <= max_ttl; ++ttl) {
    std::optional<HopReply> reply;
    for (int rep = 0; rep < repetitions && !reply; ++rep) {
      TcpPacket pkt = probe.packet;
      pkt.ttl = static_cast<std::uint8_t>(ttl);
      reply = transport.exchange_ttl(pkt, pkt.ttl, spec.timeout);
      if (reply) {
        if (const auto* r = std::get_if<ProbeResponse>(&*reply); r && !response_matches(spec, *r)) reply.reset();
      }
    }

    HopRecord hop;
    hop.ttl = ttl;
    if (!reply) {
      trace.hops.push_back(std::move(hop));
      continue;
    }
    if (const auto* quote = std::get_if<IcmpQuote>(&*reply)) {
      hop.responder = quote->responder;
      std::optional<ParsedTcp> parsed;
      try {
        parsed = parse_ip_tcp(quote->quoted);
      } catch (const Error&) {
        parsed.reset();
      }
      if (parsed && parsed->options_complete) {
        hop.quoted_options = parsed->packet.options;
        hop.diff = diff_options(trace.sent_options, *hop.quoted_options);
      }
      trace.hops.push_back(std::move(hop));
      continue;
    }

    auto& resp = std::get<ProbeResponse>(*reply);
    hop.responder = spec.target.address;
    hop.from_target = true;
    hop.quoted_options = resp.options;
    hop.diff = diff_options(trace.sent_options, resp.options);
    trace.hops.push_back(std::move(hop));
    trace.final_response = std::move(resp);
    break;
  }
  return trace;
}

PathVerdict classify_path(std::span<const HopRecord> hops, const std::optional<ProbeResponse>& final_response,
                          const ProbeSpec& spec) {
  using namespace path_verdict;
  if (!final_response) return Unreachable{UnreachableReason::NoResponse};

  for (const auto& hop : hops) {
    if (!hop.from_target && is_modification(hop.diff)) return MiddleboxAffected{hop.ttl};
  }

  // A fresh key in a valid SYN-ACK means only the target touched the option.
  if (final_response->is_syn_ack()) {
    const auto cls = classify_response(spec, final_response);
    if (const auto* pc = std::get_if<classification::PotentialCapable>(&cls)) return TrulyCapable{pc->sender_key};
  }
  return Unreachable{UnreachableReason::NotCapable};
}

}  // namespace mpscan
