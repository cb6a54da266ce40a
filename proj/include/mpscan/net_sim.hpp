#pragma once

// Deterministic in-process network: per-target paths of middleboxes ending in an endpoint.

#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "mpscan/transport.hpp"

namespace mpscan {

struct VersionSet {
  bool v0 = false;
  bool v1 = false;

  bool empty() const noexcept { return !v0 && !v1; }
  bool contains(McVersion v) const noexcept { return v == McVersion::V0 ? v0 : v1; }
  friend bool operator==(const VersionSet&, const VersionSet&) = default;
};

namespace node {
/// Answers with a fresh key for the highest supported version not above the requested one.
struct TrueMptcpHost {
  VersionSet versions{true, false};
  friend bool operator==(const TrueMptcpHost&, const TrueMptcpHost&) = default;
};
struct TcpOnlyHost {
  friend bool operator==(const TcpOnlyHost&, const TcpOnlyHost&) = default;
};
/// Copies the MP_CAPABLE it saw on the SYN into the returning SYN-ACK.
struct MirrorMiddlebox {
  friend bool operator==(const MirrorMiddlebox&, const MirrorMiddlebox&) = default;
};
/// Removes MP_CAPABLE in both directions.
struct StripMiddlebox {
  friend bool operator==(const StripMiddlebox&, const StripMiddlebox&) = default;
};
/// Replaces the SYN's sender key with one of its own.
struct KeyRewriteMiddlebox {
  friend bool operator==(const KeyRewriteMiddlebox&, const KeyRewriteMiddlebox&) = default;
};
struct DropFirewall {
  friend bool operator==(const DropFirewall&, const DropFirewall&) = default;
};
struct SilentRouter {
  friend bool operator==(const SilentRouter&, const SilentRouter&) = default;
};
struct QuotingRouter {
  std::size_t quote_bytes = 64;
  friend bool operator==(const QuotingRouter&, const QuotingRouter&) = default;
};
}  // namespace node

using NodeBehavior = std::variant<node::TrueMptcpHost, node::TcpOnlyHost, node::MirrorMiddlebox, node::StripMiddlebox,
                                  node::KeyRewriteMiddlebox, node::DropFirewall, node::SilentRouter,
                                  node::QuotingRouter>;

bool is_endpoint(const NodeBehavior& n) noexcept;
std::string format_node(const NodeBehavior& n);
std::optional<NodeBehavior> parse_node(std::string_view token);

/// A path to one target. Key sources are seeded per node, so equal seeds give equal traffic.
class SimPath {
 public:
  SimPath(std::vector<NodeBehavior> nodes, std::vector<Millis> per_hop_latency, std::uint64_t seed);
  SimPath(std::vector<NodeBehavior> nodes, Millis per_hop_latency, std::uint64_t seed);

  const std::vector<NodeBehavior>& nodes() const noexcept { return nodes_; }
  const std::vector<Millis>& latencies() const noexcept { return latency_; }
  std::size_t length() const noexcept { return nodes_.size(); }
  Millis round_trip() const noexcept;
  /// Round trip to the node at 1-based hop `ttl`.
  Millis round_trip_to(std::size_t ttl) const noexcept;

  bool has_node(std::size_t variant_index) const noexcept;

  std::uint64_t draw(std::size_t node_index);

 private:
  std::vector<NodeBehavior> nodes_;
  std::vector<Millis> latency_;
  std::vector<std::mt19937_64> sources_;
};

std::optional<ProbeResponse> simulate_handshake(SimPath& path, const TcpPacket& syn);
std::optional<HopReply> simulate_ttl_probe(SimPath& path, const TcpPacket& packet, std::uint8_t ttl);

/// Address the simulator assigns to interior hop `ttl` on the way to `target`.
IpAddress hop_address(const IpAddress& target, std::size_t ttl);

struct TopologyEntry {
  IpAddress address;
  std::vector<NodeBehavior> nodes;
  std::optional<Millis> latency;
};

struct Topology {
  Millis default_latency{5};
  Millis fallback_penalty{1000};
  std::vector<TopologyEntry> entries;
};

/// Line format:
///   latency_ms <x>
///   fallback_penalty_ms <x>
///   target <address> [latency=<ms>] <node> ... <endpoint>
Topology parse_topology(std::string_view text);
std::string format_topology(const Topology& topology);

/// Deterministic mixed population for end-to-end runs.
struct Population {
  Topology topology;
  std::vector<Endpoint> targets;
  std::size_t true_hosts = 0;
  std::size_t clean_true_hosts = 0;  // TrueMptcpHost behind routers only
};
Population generate_population(std::size_t count, std::uint64_t seed, std::uint16_t port = 443);

std::uint64_t splitmix64(std::uint64_t x) noexcept;

class SimNetwork final : public PacketTransport {
 public:
  SimNetwork(const Topology& topology, std::uint64_t seed);

  std::optional<ProbeResponse> exchange(const TcpPacket& probe, Millis timeout) override;
  std::optional<HopReply> exchange_ttl(const TcpPacket& probe, std::uint8_t ttl, Millis timeout) override;

  const Topology& topology() const noexcept { return topology_; }
  /// Null for unknown targets. Callers must not race exchange() on the same path.
  SimPath* path(const IpAddress& address);

 private:
  Topology topology_;
  std::map<IpAddress, SimPath> paths_;
  std::mutex mutex_;
};

}  // namespace mpscan
