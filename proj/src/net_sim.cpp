#include "mpscan/net_sim.hpp"

#include <algorithm>
#include <charconv>
#include <sstream>

#include "mpscan/error.hpp"

namespace mpscan {

std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

bool is_endpoint(const NodeBehavior& n) noexcept {
  return std::holds_alternative<node::TrueMptcpHost>(n) || std::holds_alternative<node::TcpOnlyHost>(n);
}

std::string format_node(const NodeBehavior& n) {
  return std::visit(
      [](const auto& b) -> std::string {
        using T = std::decay_t<decltype(b)>;
        if constexpr (std::is_same_v<T, node::TrueMptcpHost>) {
          std::string v;
          if (b.versions.v0) v += "v0";
          if (b.versions.v1) v += v.empty() ? "v1" : ",v1";
          return "mptcp_host(" + (v.empty() ? std::string("none") : v) + ")";
        } else if constexpr (std::is_same_v<T, node::TcpOnlyHost>) {
          return "tcp_host";
        } else if constexpr (std::is_same_v<T, node::MirrorMiddlebox>) {
          return "mirror";
        } else if constexpr (std::is_same_v<T, node::StripMiddlebox>) {
          return "strip";
        } else if constexpr (std::is_same_v<T, node::KeyRewriteMiddlebox>) {
          return "key_rewrite";
        } else if constexpr (std::is_same_v<T, node::DropFirewall>) {
          return "drop";
        } else if constexpr (std::is_same_v<T, node::SilentRouter>) {
          return "silent_router";
        } else {
          return "quoting_router(" + std::to_string(b.quote_bytes) + ")";
        }
      },
      n);
}

std::optional<NodeBehavior> parse_node(std::string_view token) {
  std::string_view name = token;
  std::string_view arg;
  if (const auto open = token.find('('); open != std::string_view::npos) {
    if (token.back() != ')') return std::nullopt;
    name = token.substr(0, open);
    arg = token.substr(open + 1, token.size() - open - 2);
  }
  if (name == "tcp_host") return node::TcpOnlyHost{};
  if (name == "mirror") return node::MirrorMiddlebox{};
  if (name == "strip") return node::StripMiddlebox{};
  if (name == "key_rewrite") return node::KeyRewriteMiddlebox{};
  if (name == "drop") return node::DropFirewall{};
  if (name == "silent_router") return node::SilentRouter{};
  if (name == "quoting_router") {
    std::size_t q = 64;
    if (!arg.empty()) {
      auto [ptr, ec] = std::from_chars(arg.data(), arg.data() + arg.size(), q);
      if (ec != std::errc{} || ptr != arg.data() + arg.size()) return std::nullopt;
    }
    return node::QuotingRouter{q};
  }
  if (name == "mptcp_host") {
    VersionSet vs;
    if (arg.empty()) arg = "v0";
    if (arg != "none") {
      while (!arg.empty()) {
        const auto comma = arg.find(',');
        const auto v = arg.substr(0, comma);
        if (v == "v0") {
          vs.v0 = true;
        } else if (v == "v1") {
          vs.v1 = true;
        } else {
          return std::nullopt;
        }
        arg = comma == std::string_view::npos ? std::string_view{} : arg.substr(comma + 1);
      }
    }
    return node::TrueMptcpHost{vs};
  }
  return std::nullopt;
}

namespace {

void check_path(const std::vector<NodeBehavior>& nodes) {
  if (nodes.empty()) throw Error(ErrorCode::InvalidArgument, "a path needs at least its endpoint");
  for (std::size_t i = 0; i + 1 < nodes.size(); ++i) {
    if (is_endpoint(nodes[i])) throw Error(ErrorCode::InvalidArgument, "endpoint before the tail of a path");
  }
  if (!is_endpoint(nodes.back())) throw Error(ErrorCode::InvalidArgument, "path must end in an endpoint");
}


void remove_mptcp(std::vector<TcpOption>& options) {
  std::erase_if(options, [](const TcpOption& o) { return o.kind == option_kind::kMptcp; });
}

TcpOption* find_mp_capable_mut(std::vector<TcpOption>& options) {
  for (auto& o : options) {
    if (o.kind == option_kind::kMptcp && !o.payload.empty() && (o.payload[0] >> 4) == kMpCapableSubtype) return &o;
  }
  return nullptr;
}

struct ForwardResult {
  bool dropped = false;
  TcpPacket packet;
  std::vector<std::optional<TcpOption>> mirrored;  // per node index
};

// Applies nodes [0, upto) to a forward packet.
ForwardResult forward(SimPath& path, const TcpPacket& in, std::size_t upto) {
  ForwardResult r;
  r.packet = in;
  r.mirrored.resize(path.length());
  for (std::size_t i = 0; i < upto; ++i) {
    const auto& n = path.nodes()[i];
    if (std::holds_alternative<node::DropFirewall>(n)) {
      r.dropped = true;
      return r;
    }
    if (std::holds_alternative<node::StripMiddlebox>(n)) {
      remove_mptcp(r.packet.options);
    } else if (std::holds_alternative<node::KeyRewriteMiddlebox>(n)) {
      if (auto* mc = find_mp_capable_mut(r.packet.options); mc && mc->payload.size() >= 10) {
        const auto old = peek_sender_key(*mc);
        std::uint64_t k = path.draw(i);
        while (old && k == old->value) k = path.draw(i);
        for (int b = 0; b < 8; ++b) mc->payload[2 + b] = static_cast<std::uint8_t>(k >> (56 - 8 * b));
      }
    } else if (std::holds_alternative<node::MirrorMiddlebox>(n)) {
      if (const auto* mc = find_mp_capable(r.packet.options)) r.mirrored[i] = *mc;
    }
  }
  return r;
}

TcpPacket endpoint_reply(SimPath& path, const TcpPacket& syn) {
  const std::size_t idx = path.length() - 1;
  TcpPacket reply;
  reply.src = syn.dst;
  reply.dst = syn.src;
  reply.src_port = syn.dst_port;
  reply.dst_port = syn.src_port;
  reply.seq = static_cast<std::uint32_t>(path.draw(idx));
  reply.ack = syn.seq + 1;
  reply.flags = tcp_flag::kSyn | tcp_flag::kAck;
  reply.window = 65160;
  reply.ttl = 64;
  reply.options.push_back({option_kind::kMss, {0x05, 0xB4}});

  const auto* host = std::get_if<node::TrueMptcpHost>(&path.nodes()[idx]);
  if (!host) return reply;
  const TcpOption* offered = find_mp_capable(syn.options);
  if (!offered) return reply;
  MpCapable request;
  try {
    request = decode_mp_capable(*offered, HandshakePhase::Syn);
  } catch (const Error&) {
    return reply;
  }
  std::optional<McVersion> chosen;
  if (host->versions.v1 && request.version == McVersion::V1) {
    chosen = McVersion::V1;
  } else if (host->versions.v0) {
    chosen = McVersion::V0;
  }
  if (!chosen) return reply;
  std::uint64_t key = path.draw(idx);
  while (request.sender_key && key == request.sender_key->value) key = path.draw(idx);
  MpCapable answer{*chosen, default_flags(*chosen), Key{key}, std::nullopt};
  reply.options.push_back(encode_mp_capable(answer, HandshakePhase::SynAck));
  return reply;
}

}  // namespace

SimPath::SimPath(std::vector<NodeBehavior> nodes, std::vector<Millis> per_hop_latency, std::uint64_t seed)
    : nodes_(std::move(nodes)), latency_(std::move(per_hop_latency)) {
  check_path(nodes_);
  if (latency_.size() != nodes_.size()) throw Error(ErrorCode::InvalidArgument, "one latency per hop required");
  sources_.reserve(nodes_.size());
  for (std::size_t i = 0; i < nodes_.size(); ++i) sources_.emplace_back(splitmix64(seed ^ splitmix64(i + 1)));
}

SimPath::SimPath(std::vector<NodeBehavior> nodes, Millis per_hop_latency, std::uint64_t seed)
    : SimPath(nodes, std::vector<Millis>(nodes.size(), per_hop_latency), seed) {}

Millis SimPath::round_trip() const noexcept { return round_trip_to(latency_.size()); }

Millis SimPath::round_trip_to(std::size_t ttl) const noexcept {
  Millis one_way{0};
  for (std::size_t i = 0; i < std::min(ttl, latency_.size()); ++i) one_way += latency_[i];
  return one_way * 2;
}

bool SimPath::has_node(std::size_t variant_index) const noexcept {
  return std::any_of(nodes_.begin(), nodes_.end(), [&](const NodeBehavior& n) { return n.index() == variant_index; });
}

std::uint64_t SimPath::draw(std::size_t node_index) { return sources_.at(node_index)(); }

std::optional<ProbeResponse> simulate_handshake(SimPath& path, const TcpPacket& syn) {
  if (!(syn.flags & tcp_flag::kSyn)) throw Error(ErrorCode::InvalidArgument, "simulate_handshake needs a SYN");
  const std::size_t interior = path.length() - 1;
  auto fwd = forward(path, syn, interior);
  if (fwd.dropped) return std::nullopt;

  TcpPacket reply = endpoint_reply(path, fwd.packet);
  for (std::size_t i = interior; i-- > 0;) {
    const auto& n = path.nodes()[i];
    if (std::holds_alternative<node::StripMiddlebox>(n)) {
      remove_mptcp(reply.options);
    } else if (std::holds_alternative<node::MirrorMiddlebox>(n) && fwd.mirrored[i]) {
      if (auto* mc = find_mp_capable_mut(reply.options)) {
        *mc = *fwd.mirrored[i];
      } else {
        reply.options.push_back(*fwd.mirrored[i]);
      }
    }
  }
  return response_from_packet(reply, path.round_trip());
}

IpAddress hop_address(const IpAddress& target, std::size_t ttl) {
  const auto low = target.bytes().back();
  if (target.is_v4()) {
    return IpAddress::v4((198U << 24) | (18U << 16) | (static_cast<std::uint32_t>(ttl & 0xFF) << 8) | low);
  }
  std::array<std::uint8_t, 16> b{0x20, 0x01, 0x0d, 0xb8, 0xff, 0xff};
  b[13] = static_cast<std::uint8_t>(ttl);
  b[15] = low;
  return IpAddress::v6(b);
}

std::optional<HopReply> simulate_ttl_probe(SimPath& path, const TcpPacket& packet, std::uint8_t ttl) {
  if (ttl < 1) throw Error(ErrorCode::InvalidArgument, "ttl must be at least 1");
  if (ttl >= path.length()) {
    auto resp = simulate_handshake(path, packet);
    if (!resp) return std::nullopt;
    return HopReply{std::move(*resp)};
  }
  const std::size_t hop = ttl - 1;
  const auto& n = path.nodes()[hop];
  // Middleboxes quote what they forward, i.e. after their own transform.
  const bool self_transform = std::holds_alternative<node::StripMiddlebox>(n) || std::holds_alternative<node::MirrorMiddlebox>(n) ||
                              std::holds_alternative<node::KeyRewriteMiddlebox>(n);
  auto fwd = forward(path, packet, self_transform ? hop + 1 : hop);
  if (fwd.dropped) return std::nullopt;
  if (std::holds_alternative<node::SilentRouter>(n) || std::holds_alternative<node::DropFirewall>(n)) {
    return std::nullopt;
  }
  TcpPacket expired = fwd.packet;
  expired.ttl = 1;
  Bytes wire = serialize_packet(expired);
  if (const auto* q = std::get_if<node::QuotingRouter>(&n); q && q->quote_bytes < wire.size()) {
    wire.resize(q->quote_bytes);
  }
  return HopReply{IcmpQuote{hop_address(packet.dst, ttl), std::move(wire)}};
}

Topology parse_topology(std::string_view text) {
  Topology topo;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  auto fail = [&](const std::string& why) {
    throw Error(ErrorCode::ParseError, "topology line " + std::to_string(line_no) + ": " + why);
  };
  auto parse_ms = [&](std::string_view s) {
    double v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size() || v < 0) fail("bad duration '" + std::string(s) + "'");
    return Millis{v};
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream words(line);
    std::vector<std::string> tok;
    for (std::string w; words >> w;) tok.push_back(w);
    if (tok.empty()) continue;
    if (tok[0] == "latency_ms" && tok.size() == 2) {
      topo.default_latency = parse_ms(tok[1]);
    } else if (tok[0] == "fallback_penalty_ms" && tok.size() == 2) {
      topo.fallback_penalty = parse_ms(tok[1]);
    } else if (tok[0] == "target" && tok.size() >= 3) {
      TopologyEntry e;
      auto addr = IpAddress::parse(tok[1]);
      if (!addr) fail("bad address '" + tok[1] + "'");
      e.address = *addr;
      for (std::size_t i = 2; i < tok.size(); ++i) {
        if (tok[i].starts_with("latency=")) {
          e.latency = parse_ms(std::string_view(tok[i]).substr(8));
          continue;
        }
        auto nodeb = parse_node(tok[i]);
        if (!nodeb) fail("unknown node '" + tok[i] + "'");
        e.nodes.push_back(*nodeb);
      }
      try {
        check_path(e.nodes);
      } catch (const Error& err) {
        fail(err.what());
      }
      topo.entries.push_back(std::move(e));
    } else {
      fail("unrecognized directive '" + tok[0] + "'");
    }
  }
  return topo;
}

std::string format_topology(const Topology& topo) {
  std::ostringstream out;
  out << "latency_ms " << topo.default_latency.count() << '\n';
  out << "fallback_penalty_ms " << topo.fallback_penalty.count() << '\n';
  for (const auto& e : topo.entries) {
    out << "target " << e.address.to_string();
    if (e.latency) out << " latency=" << e.latency->count();
    for (const auto& n : e.nodes) out << ' ' << format_node(n);
    out << '\n';
  }
  return out.str();
}

Population generate_population(std::size_t count, std::uint64_t seed, std::uint16_t port) {
  std::mt19937_64 rng(splitmix64(seed));
  auto pick = [&](std::uint64_t n) { return rng() % n; };
  Population pop;
  for (std::size_t i = 0; i < count; ++i) {
    TopologyEntry e;
    e.address = IpAddress::v4(0x0A000000U + static_cast<std::uint32_t>(i) + 1);
    const bool mptcp = pick(100) < 45;
    const std::size_t interior = pick(5);
    bool clean = true;
    for (std::size_t h = 0; h < interior; ++h) {
      const auto r = pick(100);
      NodeBehavior n;
      if (r < 25) {
        n = node::SilentRouter{};
      } else if (r < 55) {
        n = node::QuotingRouter{64};
      } else if (r < 60) {
        n = node::QuotingRouter{28};
      } else if (r < 75) {
        n = node::MirrorMiddlebox{};
      } else if (r < 83) {
        n = node::StripMiddlebox{};
      } else if (r < 90) {
        n = node::KeyRewriteMiddlebox{};
      } else {
        n = mptcp ? NodeBehavior{node::QuotingRouter{64}} : NodeBehavior{node::DropFirewall{}};
      }
      if (!std::holds_alternative<node::SilentRouter>(n) && !std::holds_alternative<node::QuotingRouter>(n)) {
        clean = false;
      }
      e.nodes.push_back(n);
    }
    if (mptcp) {
      e.nodes.push_back(node::TrueMptcpHost{VersionSet{true, pick(100) < 40}});
      ++pop.true_hosts;
      if (clean) ++pop.clean_true_hosts;
    } else {
      e.nodes.push_back(node::TcpOnlyHost{});
    }
    pop.targets.push_back({e.address, port});
    pop.topology.entries.push_back(std::move(e));
  }
  return pop;
}

SimNetwork::SimNetwork(const Topology& topology, std::uint64_t seed) : topology_(topology) {
  for (const auto& e : topology_.entries) {
    const std::uint64_t path_seed = splitmix64(seed ^ std::hash<IpAddress>{}(e.address));
    paths_.erase(e.address);
    paths_.emplace(e.address, SimPath(e.nodes, e.latency.value_or(topology_.default_latency), path_seed));
  }
}

SimPath* SimNetwork::path(const IpAddress& address) {
  auto it = paths_.find(address);
  return it == paths_.end() ? nullptr : &it->second;
}

std::optional<ProbeResponse> SimNetwork::exchange(const TcpPacket& probe, Millis timeout) {
  std::lock_guard lock(mutex_);
  auto* p = path(probe.dst);
  if (!p) return std::nullopt;
  auto resp = simulate_handshake(*p, probe);
  if (resp && resp->rtt > timeout) return std::nullopt;
  return resp;
}

std::optional<HopReply> SimNetwork::exchange_ttl(const TcpPacket& probe, std::uint8_t ttl, Millis timeout) {
  std::lock_guard lock(mutex_);
  auto* p = path(probe.dst);
  if (!p) return std::nullopt;
  if (p->round_trip_to(ttl) > timeout) return std::nullopt;
  return simulate_ttl_probe(*p, probe, ttl);
}

}  // namespace mpscan
