#include "mpscan/traffic_lens.hpp"

#include <algorithm>
#include <charconv>
#include <cctype>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>

#include "mpscan/error.hpp"

namespace mpscan {

FlowKey make_flow_key(const TcpPacket& p, FlowMode mode) {
  FlowKey k{p.src, p.dst, p.src_port, p.dst_port, kProtoTcp};
  if (mode == FlowMode::Bidirectional && std::tie(p.dst, p.dst_port) < std::tie(p.src, p.src_port)) {
    std::swap(k.src, k.dst);
    std::swap(k.src_port, k.dst_port);
  }
  return k;
}

FlowTable& FlowTable::merge(const FlowTable& other) {
  for (const auto& [key, s] : other.flows) {
    auto [it, inserted] = flows.try_emplace(key, s);
    if (inserted) continue;
    auto& d = it->second;
    const bool other_first = s.first_ts < d.first_ts;
    d.packets += s.packets;
    d.bytes += s.bytes;
    if (d.mp_capable_seen && s.mp_capable_seen) {
      if (other_first) d.mptcp_version = s.mptcp_version;
    } else if (s.mp_capable_seen) {
      d.mptcp_version = s.mptcp_version;
    }
    d.mp_capable_seen = d.mp_capable_seen || s.mp_capable_seen;
    d.first_ts = std::min(d.first_ts, s.first_ts);
    d.last_ts = std::max(d.last_ts, s.last_ts);
    if (!d.service_label) d.service_label = s.service_label;
  }
  parsed_packets += other.parsed_packets;
  parsed_bytes += other.parsed_bytes;
  parse_failures += other.parse_failures;
  skipped_packets += other.skipped_packets;
  return *this;
}

namespace {

HandshakePhase phase_of(std::uint8_t flags) {
  if (flags & tcp_flag::kSyn) return (flags & tcp_flag::kAck) ? HandshakePhase::SynAck : HandshakePhase::Syn;
  return HandshakePhase::Ack;
}

}  // namespace

void FlowAggregator::add(std::chrono::nanoseconds ts, const TcpPacket& p, std::uint32_t ip_bytes) {
  auto [it, inserted] = table_.flows.try_emplace(make_flow_key(p, mode_));
  auto& s = it->second;
  if (inserted) s.first_ts = ts;
  s.first_ts = std::min(s.first_ts, ts);
  s.last_ts = std::max(s.last_ts, ts);
  ++s.packets;
  s.bytes += ip_bytes;
  ++table_.parsed_packets;
  table_.parsed_bytes += ip_bytes;
  if (const TcpOption* opt = find_mp_capable(p.options)) {
    try {
      const auto mc = decode_mp_capable(*opt, phase_of(p.flags));
      if (!s.mp_capable_seen) s.mptcp_version = mc.version;
      s.mp_capable_seen = true;
    } catch (const Error&) {
      // Undecodable MP_CAPABLE does not mark the flow.
    }
  }
}

void FlowAggregator::add(std::chrono::nanoseconds ts, std::span<const std::uint8_t> ip_bytes) {
  std::optional<ParsedTcp> parsed;
  if (ip_bytes.empty() || ((ip_bytes[0] >> 4) != 4 && (ip_bytes[0] >> 4) != 6)) {
    ++table_.skipped_packets;
    return;
  }
  const bool is_tcp = (ip_bytes[0] >> 4) == 4 ? (ip_bytes.size() > 9 && ip_bytes[9] == kProtoTcp)
                                              : (ip_bytes.size() > 6 && ip_bytes[6] == kProtoTcp);
  if (!is_tcp) {
    ++table_.skipped_packets;
    return;
  }
  try {
    parsed = parse_ip_tcp(ip_bytes);
  } catch (const Error&) {
    parsed.reset();
  }
  if (!parsed || !parsed->options_complete) {
    ++table_.parse_failures;
    return;
  }
  add(ts, parsed->packet, parsed->ip_total_length);
}

FlowTable ingest_capture(PcapReader& reader, FlowMode mode) {
  FlowAggregator agg(mode);
  while (auto pkt = reader.next()) {
    auto ip = ip_payload(reader.link_type(), pkt->data);
    agg.add(pkt->timestamp, ip.value_or(std::span<const std::uint8_t>{}));
  }
  return agg.take();
}

FlowTable ingest_capture_file(const std::string& path, FlowMode mode) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::MalformedCapture, "cannot open " + path);
  PcapReader reader(in);
  return ingest_capture(reader, mode);
}

FlowTable filter_min_packets(const FlowTable& table, std::uint64_t min_packets) {
  FlowTable out;
  out.parsed_packets = table.parsed_packets;
  out.parsed_bytes = table.parsed_bytes;
  out.parse_failures = table.parse_failures;
  out.skipped_packets = table.skipped_packets;
  for (const auto& [k, s] : table.flows) {
    if (s.packets >= min_packets) out.flows.emplace(k, s);
  }
  return out;
}

ShareReport mptcp_share(const FlowTable& table) {
  ShareReport r;
  for (const auto& [k, s] : table.flows) {
    ++r.tcp_flows;
    r.tcp_bytes += s.bytes;
    if (s.mp_capable_seen) {
      ++r.mptcp_flows;
      r.mptcp_bytes += s.bytes;
    }
  }
  if (r.tcp_flows > 0) r.flow_share = static_cast<double>(r.mptcp_flows) / static_cast<double>(r.tcp_flows);
  if (r.tcp_bytes > 0) r.byte_share = static_cast<double>(r.mptcp_bytes) / static_cast<double>(r.tcp_bytes);
  return r;
}

ConcentrationReport concentration(std::span<const std::uint64_t> flow_bytes) {
  if (flow_bytes.empty()) throw Error(ErrorCode::EmptyInput, "no MPTCP flows");
  std::vector<std::uint64_t> sorted(flow_bytes.begin(), flow_bytes.end());
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  const std::uint64_t total = std::accumulate(sorted.begin(), sorted.end(), std::uint64_t{0});
  if (total == 0) throw Error(ErrorCode::DivisionUndefined, "MPTCP flows carry no bytes");
  auto top = [&](std::size_t n) {
    n = std::min(n, sorted.size());
    const auto sum = std::accumulate(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(n), std::uint64_t{0});
    return static_cast<double>(sum) / static_cast<double>(total);
  };
  ConcentrationReport r;
  r.flows = sorted.size();
  r.top1_share = top(1);
  r.top5_share = top(5);
  r.top_half_share = top((sorted.size() + 1) / 2);
  return r;
}

ConcentrationReport concentration(const FlowTable& table) {
  std::vector<std::uint64_t> bytes;
  for (const auto& [k, s] : table.flows) {
    if (s.mp_capable_seen) bytes.push_back(s.bytes);
  }
  return concentration(bytes);
}

std::vector<double> ewma(std::span<const double> series, double alpha) {
  if (series.empty()) throw Error(ErrorCode::EmptyInput, "EWMA of an empty series");
  if (!(alpha > 0 && alpha <= 1)) throw Error(ErrorCode::InvalidArgument, "alpha must be in (0, 1]");
  std::vector<double> out;
  out.reserve(series.size());
  out.push_back(series[0]);
  for (std::size_t t = 1; t < series.size(); ++t) out.push_back(alpha * series[t] + (1 - alpha) * out.back());
  return out;
}

void ServiceTables::parse_into(std::string_view text,
                               std::map<std::pair<std::uint16_t, std::string>, std::string>& into) {
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    auto view = trim(line);
    if (view.empty()) continue;
    const auto c1 = view.find(',');
    const auto c2 = c1 == std::string_view::npos ? c1 : view.find(',', c1 + 1);
    if (c2 == std::string_view::npos) {
      throw Error(ErrorCode::ParseError, "service line " + std::to_string(line_no) + ": expected port,protocol,label");
    }
    const auto port_text = trim(view.substr(0, c1));
    unsigned port = 0;
    auto [ptr, ec] = std::from_chars(port_text.data(), port_text.data() + port_text.size(), port);
    if (ec != std::errc{} || ptr != port_text.data() + port_text.size() || port > 65535) {
      throw Error(ErrorCode::ParseError, "service line " + std::to_string(line_no) + ": bad port");
    }
    std::string proto(trim(view.substr(c1 + 1, c2 - c1 - 1)));
    std::transform(proto.begin(), proto.end(), proto.begin(), [](unsigned char ch) { return std::tolower(ch); });
    into[{static_cast<std::uint16_t>(port), proto}] = std::string(trim(view.substr(c2 + 1)));
  }
}

ServiceTables ServiceTables::load(const std::string& registry_path, const std::string& vendor_path) {
  ServiceTables t;
  if (registry_path.empty()) throw Error(ErrorCode::MissingTables, "no port registry file given");
  parse_into(read_text_file(registry_path), t.registry);
  if (!vendor_path.empty()) parse_into(read_text_file(vendor_path), t.vendor);
  return t;
}

std::string map_service(const FlowKey& key, const ServiceTables& tables) {
  if (tables.empty()) throw Error(ErrorCode::MissingTables, "service tables not loaded");
  if (key.src_port == 0 || key.dst_port == 0) return std::string(kReservedZero);
  const std::string proto = key.protocol == kProtoTcp ? "tcp" : "udp";
  std::vector<std::uint16_t> candidates;
  for (auto port : {key.src_port, key.dst_port}) {
    if (port <= kLastRegisteredPort) candidates.push_back(port);
  }
  if (candidates.empty()) return std::string(kUnknownService);
  std::sort(candidates.begin(), candidates.end());
  for (const auto* table : {&tables.vendor, &tables.registry}) {
    for (auto port : candidates) {
      if (auto it = table->find({port, proto}); it != table->end()) return it->second;
    }
  }
  return std::string(kUnknownService);
}

void label_services(FlowTable& table, const ServiceTables& tables) {
  for (auto& [k, s] : table.flows) s.service_label = map_service(k, tables);
}

}  // namespace mpscan
