#pragma once

// Passive MPTCP detection and flow statistics over packet captures.

#include <chrono>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mpscan/packet.hpp"
#include "mpscan/pcap.hpp"

namespace mpscan {

enum class FlowMode { Bidirectional, Unidirectional };

struct FlowKey {
  IpAddress src;
  IpAddress dst;
  std::uint16_t src_port = 0;
  std::uint16_t dst_port = 0;
  std::uint8_t protocol = kProtoTcp;

  friend auto operator<=>(const FlowKey&, const FlowKey&) = default;
};

/// Bidirectional keys put the lexicographically smaller (address, port) endpoint first.
FlowKey make_flow_key(const TcpPacket& packet, FlowMode mode);

struct FlowStats {
  std::uint64_t packets = 0;
  std::uint64_t bytes = 0;  // IP total length
  std::chrono::nanoseconds first_ts{0};
  std::chrono::nanoseconds last_ts{0};
  bool mp_capable_seen = false;
  std::optional<McVersion> mptcp_version;
  std::optional<std::string> service_label;

  friend bool operator==(const FlowStats&, const FlowStats&) = default;
};

struct FlowTable {
  std::map<FlowKey, FlowStats> flows;
  std::uint64_t parsed_packets = 0;
  std::uint64_t parsed_bytes = 0;
  std::uint64_t parse_failures = 0;
  std::uint64_t skipped_packets = 0;  // non-IP or non-TCP

  /// Associative union; used to combine per-file ingestion.
  FlowTable& merge(const FlowTable& other);
};

class FlowAggregator {
 public:
  explicit FlowAggregator(FlowMode mode = FlowMode::Bidirectional) : mode_(mode) {}

  /// Accounts one IP datagram. Parse failures are counted, never thrown.
  void add(std::chrono::nanoseconds ts, std::span<const std::uint8_t> ip_bytes);
  void add(std::chrono::nanoseconds ts, const TcpPacket& packet, std::uint32_t ip_bytes);

  const FlowTable& table() const noexcept { return table_; }
  FlowTable take() { return std::move(table_); }

 private:
  FlowMode mode_;
  FlowTable table_;
};

FlowTable ingest_capture(PcapReader& reader, FlowMode mode = FlowMode::Bidirectional);
FlowTable ingest_capture_file(const std::string& path, FlowMode mode = FlowMode::Bidirectional);

inline constexpr std::uint64_t kDefaultMinPackets = 5;

FlowTable filter_min_packets(const FlowTable& table, std::uint64_t min_packets = kDefaultMinPackets);

struct ShareReport {
  std::uint64_t tcp_flows = 0;
  std::uint64_t tcp_bytes = 0;
  std::uint64_t mptcp_flows = 0;
  std::uint64_t mptcp_bytes = 0;
  std::optional<double> flow_share;  // absent when there are no TCP flows
  std::optional<double> byte_share;
};

ShareReport mptcp_share(const FlowTable& table);

struct ConcentrationReport {
  double top1_share = 0;
  double top5_share = 0;
  double top_half_share = 0;
  std::size_t flows = 0;
};

/// Shares of MPTCP bytes carried by the largest flow, the five largest and the ceil(n/2) largest.
ConcentrationReport concentration(std::span<const std::uint64_t> flow_bytes);
ConcentrationReport concentration(const FlowTable& table);

inline constexpr double kDefaultEwmaAlpha = 0.2;

std::vector<double> ewma(std::span<const double> series, double alpha = kDefaultEwmaAlpha);

struct ServiceTables {
  std::map<std::pair<std::uint16_t, std::string>, std::string> registry;
  std::map<std::pair<std::uint16_t, std::string>, std::string> vendor;

  bool empty() const noexcept { return registry.empty() && vendor.empty(); }
  /// Parses `port,protocol,label` lines into `into`.
  static void parse_into(std::string_view text, std::map<std::pair<std::uint16_t, std::string>, std::string>& into);
  static ServiceTables load(const std::string& registry_path, const std::string& vendor_path = {});
};

inline constexpr std::uint16_t kLastRegisteredPort = 49151;
inline constexpr std::string_view kUnknownService = "Unknown";
inline constexpr std::string_view kReservedZero = "ReservedZero";

/// Vendor table first, then the registry; both ports ephemeral gives Unknown.
std::string map_service(const FlowKey& key, const ServiceTables& tables);

void label_services(FlowTable& table, const ServiceTables& tables);

}  // namespace mpscan
