#include "mpscan/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>

#include "mpscan/campaign_store.hpp"
#include "mpscan/error.hpp"
#include "mpscan/key_entropy.hpp"
#include "mpscan/net_sim.hpp"
#include "mpscan/path_inspector.hpp"
#include "mpscan/probe_engine.hpp"
#include "mpscan/raw_transport.hpp"
#include "mpscan/record_io.hpp"
#include "mpscan/traffic_lens.hpp"
#include "mpscan/transfer_bench.hpp"

namespace mpscan::cli {

namespace {

/// Bad flag combinations detected after parsing; reported like parse errors.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string num(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return ec == std::errc{} ? std::string(buf, end) : std::string("nan");
}

std::string num(std::uint64_t v) { return std::to_string(v); }

std::string opt_num(const std::optional<double>& v) { return v ? num(*v) : "-"; }

std::string version_text(McVersion v) { return v == McVersion::V0 ? "0" : "1"; }

/// Writes to a file when a path is given, otherwise to the fallback stream.
class Output {
 public:
  Output(const std::string& path, std::ostream& fallback) : fallback_(fallback) {
    if (path.empty()) return;
    file_.open(path, std::ios::binary | std::ios::trunc);
    if (!file_) throw Error(ErrorCode::IoError, "cannot open " + path + " for writing");
  }
  std::ostream& stream() { return file_.is_open() ? file_ : fallback_; }

 private:
  std::ofstream file_;
  std::ostream& fallback_;
};

RecordFormat format_from(const std::string& name) {
  auto f = parse_record_format(name);
  if (!f) throw UsageError("unknown format '" + name + "'");
  return *f;
}

struct ProbeOptions {
  std::string version = "0";
  std::string key = to_hex(kDefaultProbeKey);
  std::uint64_t seed = 0;
  double timeout_ms = 1000;

  void add_to(CLI::App& app) {
    app.add_option("--version", version, "MP_CAPABLE version to probe (0 or 1)")
        ->check(CLI::IsMember({"0", "1", "v0", "v1"}));
    app.add_option("--key", key, "64-bit probe key in hex (version 0 only)");
    app.add_option("--seed", seed, "Seed for probe identities and simulated key draws");
    app.add_option("--timeout-ms", timeout_ms, "Reply timeout in milliseconds")->check(CLI::PositiveNumber);
  }

  McVersion parsed_version() const { return *parse_version(version); }

  ProbeTemplate to_template() const {
    ProbeTemplate t;
    t.version = parsed_version();
    if (t.version == McVersion::V0) {
      t.probe_key = parse_key(key);
      if (!t.probe_key) throw UsageError("bad --key '" + key + "'");
    } else {
      t.probe_key.reset();
    }
    t.timeout = Millis{timeout_ms};
    t.seed = seed;
    return t;
  }
};

struct GuardOptions {
  std::string blocklist;
  std::optional<double> rate;

  void add_to(CLI::App& app) {
    app.add_option("--blocklist", blocklist, "Prefixes never to probe, one per line")->envname(kBlocklistEnv);
    app.add_option("--rate", rate, "Maximum packets per second")->check(CLI::PositiveNumber);
  }

  bool live_ready() const { return !blocklist.empty() && rate.has_value(); }

  CampaignGuard guard(double fallback_rate) const {
    CampaignGuard g;
    g.max_packets_per_second = rate.value_or(fallback_rate);
    g.blocklist = blocklist.empty() ? std::vector<IpPrefix>{} : parse_prefix_list(read_text_file(blocklist));
    return g;
  }
};

constexpr double kSimulatedRate = 1e6;

const char* kLiveRefusal =
    "refusing live probing without both --blocklist (or $MPSCAN_BLOCKLIST) and --rate; "
    "use --sim for simulated runs or --dry-run to plan";

std::unique_ptr<SimNetwork> load_sim(const std::string& path, std::uint64_t seed) {
  return std::make_unique<SimNetwork>(parse_topology(read_text_file(path)), seed);
}

/// Spends one token per packet before handing it to the wrapped transport.
class PacedTransport final : public PacketTransport {
 public:
  PacedTransport(PacketTransport& inner, double rate, Clock& clock) : inner_(inner), bucket_(rate, clock) {}

  std::optional<ProbeResponse> exchange(const TcpPacket& probe, Millis timeout) override {
    bucket_.acquire();
    return inner_.exchange(probe, timeout);
  }
  std::optional<HopReply> exchange_ttl(const TcpPacket& probe, std::uint8_t ttl, Millis timeout) override {
    bucket_.acquire();
    return inner_.exchange_ttl(probe, ttl, timeout);
  }

 private:
  PacketTransport& inner_;
  TokenBucket bucket_;
};

void set_live_sources(ProbeTemplate& tmpl, std::span<const Endpoint> targets) {
  for (const auto& t : targets) {
    if (t.address.is_v4()) {
      tmpl.source_v4 = RawSocketTransport::local_source_for(t.address);
      return;
    }
  }
}

// ---------------------------------------------------------------- scan

struct ScanOptions {
  std::string targets;
  std::string sim;
  std::string out;
  std::string format = "text";
  bool dry_run = false;
  unsigned workers = 1;
  ProbeOptions probe;
  GuardOptions guard;
};

Fields scan_fields(const CampaignRecord& r, const ProbeTemplate& tmpl) {
  std::string key = "-";
  std::string note;
  if (const auto* c = std::get_if<Classification>(&r.outcome)) {
    if (const auto* p = std::get_if<classification::PotentialCapable>(c)) {
      key = to_hex(p->sender_key);
    } else if (std::holds_alternative<classification::MirroredKey>(*c) && r.version == McVersion::V0) {
      key = to_hex(*tmpl.probe_key);
    } else if (const auto* n = std::get_if<classification::NoResponse>(c)) {
      note = n->note;
    } else if (const auto* n = std::get_if<classification::NoMpCapable>(c)) {
      note = n->note;
    } else if (const auto* v = std::get_if<classification::VersionMismatch>(c)) {
      note = "got=" + std::to_string(v->got);
    }
  } else if (const auto* s = std::get_if<Skipped>(&r.outcome)) {
    note = s->reason;
  } else {
    std::ostringstream hex;
    for (auto b : std::get<PlannedProbe>(r.outcome).wire) {
      static constexpr char digits[] = "0123456789abcdef";
      hex << digits[b >> 4] << digits[b & 15];
    }
    note = hex.str();
  }
  return {{"ts_ms", num(std::chrono::duration<double, std::milli>(r.timestamp).count())},
          {"addr", r.target.address.to_string()},
          {"port", std::to_string(r.target.port)},
          {"version", version_text(r.version)},
          {"class", std::string(outcome_label(r.outcome))},
          {"key", key},
          {"note", note.empty() ? "-" : note}};
}

int do_scan(const ScanOptions& o, std::ostream& out, std::ostream& err) {
  const RecordFormat format = format_from(o.format);
  const auto targets = parse_target_list(read_text_file(o.targets));
  ProbeTemplate tmpl = o.probe.to_template();

  std::unique_ptr<SimNetwork> sim;
  std::unique_ptr<RawSocketTransport> live;
  std::unique_ptr<Clock> clock;
  PacketTransport* transport = nullptr;
  CampaignGuard guard;

  if (!o.sim.empty()) {
    sim = load_sim(o.sim, o.probe.seed);
    transport = sim.get();
    clock = std::make_unique<VirtualClock>();
    guard = o.guard.guard(kSimulatedRate);
  } else if (o.dry_run) {
    clock = std::make_unique<SteadyClock>();
    guard = o.guard.guard(kSimulatedRate);
  } else {
    if (!o.guard.live_ready()) {
      err << "mpscan scan: " << kLiveRefusal << '\n';
      return kExitFailure;
    }
    guard = o.guard.guard(0);
    live = std::make_unique<RawSocketTransport>();
    set_live_sources(tmpl, targets);
    transport = live.get();
    clock = std::make_unique<SteadyClock>();
  }
  guard.dry_run = o.dry_run;

  auto records = run_campaign(targets, tmpl, guard, transport, *clock, std::max(1u, o.workers));
  std::stable_sort(records.begin(), records.end(), [](const CampaignRecord& a, const CampaignRecord& b) {
    return std::tie(a.timestamp, a.target) < std::tie(b.timestamp, b.target);
  });

  Output output(o.out, out);
  RecordWriter writer(output.stream(), format);
  for (const auto& r : records) writer.write(scan_fields(r, tmpl));
  return kExitOk;
}

// ---------------------------------------------------------------- trace

struct TraceOptions {
  std::string targets;
  std::string from_scan;
  std::string sim;
  std::string out;
  std::string hops_out;
  std::string format = "text";
  int max_ttl = 30;
  int repetitions = kDefaultTtlRepetitions;
  ProbeOptions probe;
  GuardOptions guard;
};

struct TraceTarget {
  Endpoint target;
  McVersion version;
};

std::vector<TraceTarget> trace_targets(const TraceOptions& o) {
  std::vector<TraceTarget> out;
  if (!o.targets.empty()) {
    for (const auto& t : parse_target_list(read_text_file(o.targets))) out.push_back({t, o.probe.parsed_version()});
    return out;
  }
  for (const auto& row : read_records(read_text_file(o.from_scan))) {
    if (require_field(row, "class") != "PotentialCapable") continue;
    auto addr = IpAddress::parse(require_field(row, "addr"));
    if (!addr) throw Error(ErrorCode::ParseError, "bad address in scan record");
    const std::string port = require_field(row, "port");
    std::uint16_t p = 0;
    if (std::from_chars(port.data(), port.data() + port.size(), p).ec != std::errc{}) {
      throw Error(ErrorCode::ParseError, "bad port '" + port + "' in scan record");
    }
    auto v = parse_version(require_field(row, "version"));
    if (!v) throw Error(ErrorCode::ParseError, "bad version in scan record");
    out.push_back({{*addr, p}, *v});
  }
  return out;
}

Fields verdict_fields(const TraceTarget& t, const PathVerdict& v, std::size_t hops) {
  std::string ttl = "-";
  std::string key = "-";
  if (const auto* m = std::get_if<path_verdict::MiddleboxAffected>(&v)) ttl = std::to_string(m->first_modifying_ttl);
  if (const auto* c = std::get_if<path_verdict::TrulyCapable>(&v)) key = to_hex(c->sender_key);
  return {{"addr", t.target.address.to_string()},
          {"port", std::to_string(t.target.port)},
          {"version", version_text(t.version)},
          {"verdict", std::string(label(v))},
          {"ttl", ttl},
          {"key", key},
          {"hops", std::to_string(hops)}};
}

int do_trace(const TraceOptions& o, std::ostream& out, std::ostream& err) {
  const RecordFormat format = format_from(o.format);
  if (o.max_ttl < 1 || o.max_ttl > kMaxPathTtl) throw UsageError("--max-ttl must be in [1, 64]");
  const auto targets = trace_targets(o);
  ProbeTemplate tmpl = o.probe.to_template();

  std::unique_ptr<SimNetwork> sim;
  std::unique_ptr<RawSocketTransport> live;
  std::unique_ptr<PacedTransport> paced;
  SteadyClock steady;
  PacketTransport* transport = nullptr;
  CampaignGuard guard;
  if (!o.sim.empty()) {
    sim = load_sim(o.sim, o.probe.seed);
    transport = sim.get();
    guard = o.guard.guard(kSimulatedRate);
  } else {
    if (!o.guard.live_ready()) {
      err << "mpscan trace: " << kLiveRefusal << '\n';
      return kExitFailure;
    }
    guard = o.guard.guard(0);
    live = std::make_unique<RawSocketTransport>();
    std::vector<Endpoint> eps;
    for (const auto& t : targets) eps.push_back(t.target);
    set_live_sources(tmpl, eps);
    paced = std::make_unique<PacedTransport>(*live, guard.max_packets_per_second, steady);
    transport = paced.get();
  }

  Output output(o.out, out);
  RecordWriter writer(output.stream(), format);
  std::unique_ptr<Output> hops_output;
  std::unique_ptr<RecordWriter> hops_writer;
  if (!o.hops_out.empty()) {
    hops_output = std::make_unique<Output>(o.hops_out, out);
    hops_writer = std::make_unique<RecordWriter>(hops_output->stream(), format);
  }

  for (const auto& t : targets) {
    if (guard.blocked(t.target.address)) continue;
    ProbeTemplate per = tmpl;
    per.version = t.version;
    if (t.version == McVersion::V1) per.probe_key.reset();
    if (t.version == McVersion::V0 && !per.probe_key) per.probe_key = kDefaultProbeKey;
    const PathTrace trace = probe_path(per.spec_for(t.target), o.max_ttl, *transport, o.repetitions);
    writer.write(verdict_fields(t, classify_path(trace), trace.hops.size()));
    if (hops_writer) {
      for (const auto& h : trace.hops) {
        hops_writer->write({{"addr", t.target.address.to_string()},
                            {"port", std::to_string(t.target.port)},
                            {"ttl", std::to_string(h.ttl)},
                            {"responder", h.responder ? h.responder->to_string() : "-"},
                            {"diff", std::string(label(h.diff))},
                            {"from_target", h.from_target ? "1" : "0"}});
      }
    }
  }
  return kExitOk;
}

// ---------------------------------------------------------------- keys

struct KeysOptions {
  std::string in;
  std::string probe_key = to_hex(kDefaultProbeKey);
  std::string out;
  bool raw = false;
};

int do_keys(const KeysOptions& o, std::ostream& out, std::ostream&) {
  auto probe = parse_key(o.probe_key);
  if (!probe) throw UsageError("bad --probe-key '" + o.probe_key + "'");
  const std::string text = read_text_file(o.in);
  std::vector<Key> keys;
  if (o.raw) {
    std::istringstream lines(text);
    std::string line;
    while (std::getline(lines, line)) {
      const std::string t(trim(line));
      if (t.empty() || t[0] == '#') continue;
      auto k = parse_key(t);
      if (!k) throw Error(ErrorCode::ParseError, "bad key '" + t + "'");
      keys.push_back(*k);
    }
  } else {
    for (const auto& row : read_records(text)) {
      const std::string* k = find_field(row, "key");
      if (!k || k->empty() || *k == "-") continue;
      auto key = parse_key(*k);
      if (!key) throw Error(ErrorCode::ParseError, "bad key '" + *k + "'");
      keys.push_back(*key);
    }
  }
  const EntropyReport report = analyze_keys(keys, *probe);
  Output output(o.out, out);
  write_report(output.stream(), report);
  return kExitOk;
}

// ---------------------------------------------------------------- simulate

struct SimulateOptions {
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> population;
  std::string topology;
  std::uint16_t port = 443;
  std::string out;
  std::string targets_out;
  std::string format = "text";
  int max_ttl = 30;
  ProbeOptions probe;
};

int do_simulate(const SimulateOptions& o, std::ostream& out, std::ostream& err) {
  if (!o.seed) throw UsageError("simulate requires --seed");
  if (o.population.has_value() == !o.topology.empty()) {
    throw UsageError("simulate needs exactly one of --population or --topology");
  }
  const RecordFormat format = format_from(o.format);

  if (o.population) {
    const Population pop = generate_population(*o.population, *o.seed, o.port);
    {
      Output topo(o.out, out);
      topo.stream() << format_topology(pop.topology);
    }
    if (!o.targets_out.empty()) {
      Output t(o.targets_out, out);
      for (const auto& e : pop.targets) t.stream() << e.address.to_string() << ',' << e.port << '\n';
    }
    std::ostream& summary = o.out.empty() ? err : out;
    RecordWriter(summary, format)
        .write({{"targets", std::to_string(pop.targets.size())},
                {"true_hosts", std::to_string(pop.true_hosts)},
                {"clean_true_hosts", std::to_string(pop.clean_true_hosts)}});
    return kExitOk;
  }

  ProbeOptions probe = o.probe;
  probe.seed = *o.seed;
  const ProbeTemplate tmpl = probe.to_template();
  SimNetwork net(parse_topology(read_text_file(o.topology)), *o.seed);
  Output output(o.out, out);
  RecordWriter writer(output.stream(), format);
  for (const auto& entry : net.topology().entries) {
    const Endpoint target{entry.address, o.port};
    const ProbeSpec spec = tmpl.spec_for(target);
    const SynProbe syn = build_syn_probe(spec);
    auto resp = net.exchange(syn.packet, spec.timeout);
    if (resp && !response_matches(spec, *resp)) resp.reset();
    const Classification c = classify_response(spec, resp);
    std::string verdict = "-";
    std::string ttl = "-";
    std::string key = "-";
    if (const auto* p = std::get_if<classification::PotentialCapable>(&c)) {
      key = to_hex(p->sender_key);
      const PathVerdict v = classify_path(probe_path(spec, o.max_ttl, net));
      verdict = std::string(label(v));
      if (const auto* m = std::get_if<path_verdict::MiddleboxAffected>(&v)) ttl = std::to_string(m->first_modifying_ttl);
    }
    writer.write({{"addr", target.address.to_string()},
                  {"port", std::to_string(target.port)},
                  {"version", version_text(spec.version)},
                  {"class", std::string(label(c))},
                  {"verdict", verdict},
                  {"ttl", ttl},
                  {"key", key}});
  }
  return kExitOk;
}

// ---------------------------------------------------------------- analyze-pcap

struct PcapOptions {
  std::vector<std::string> inputs;
  std::uint64_t min_packets = kDefaultMinPackets;
  std::string services;
  std::string vendor_services;
  bool unidirectional = false;
  double bin_seconds = 0;
  double alpha = kDefaultEwmaAlpha;
  std::string out;
  std::string flows_out;
  std::string services_out;
  std::string series_out;
  std::string format = "text";
};

Fields share_fields(const std::string& scope, const FlowTable& raw, const FlowTable& kept) {
  const ShareReport s = mptcp_share(kept);
  Fields f{{"scope", scope},
           {"tcp_flows", num(s.tcp_flows)},
           {"tcp_bytes", num(s.tcp_bytes)},
           {"mptcp_flows", num(s.mptcp_flows)},
           {"mptcp_bytes", num(s.mptcp_bytes)},
           {"flow_share", opt_num(s.flow_share)},
           {"byte_share", opt_num(s.byte_share)},
           {"filtered_flows", num(static_cast<std::uint64_t>(raw.flows.size() - kept.flows.size()))},
           {"parse_failures", num(raw.parse_failures)}};
  std::optional<ConcentrationReport> c;
  if (s.mptcp_flows > 0 && s.mptcp_bytes > 0) c = concentration(kept);
  f.emplace_back("top1_share", c ? num(c->top1_share) : "-");
  f.emplace_back("top5_share", c ? num(c->top5_share) : "-");
  f.emplace_back("top_half_share", c ? num(c->top_half_share) : "-");
  return f;
}

/// Per-bin MPTCP byte share over flows kept by the packet filter.
void write_series(const PcapOptions& o, const FlowTable& kept, FlowMode mode, RecordWriter& writer) {
  std::map<std::int64_t, std::pair<std::uint64_t, std::uint64_t>> bins;  // bin -> (mptcp, total)
  const auto bin_ns = static_cast<std::int64_t>(o.bin_seconds * 1e9);
  std::optional<std::int64_t> origin;
  for (const auto& path : o.inputs) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
    PcapReader reader(in);
    while (auto pkt = reader.next()) {
      auto ip = ip_payload(reader.link_type(), pkt->data);
      if (!ip) continue;
      auto parsed = parse_ip_tcp(*ip);
      if (!parsed) continue;
      auto it = kept.flows.find(make_flow_key(parsed->packet, mode));
      if (it == kept.flows.end()) continue;
      const std::int64_t ts = pkt->timestamp.count();
      if (!origin || ts < *origin) origin = origin ? std::min(*origin, ts) : ts;
      auto& b = bins[ts / bin_ns];
      b.second += parsed->ip_total_length;
      if (it->second.mp_capable_seen) b.first += parsed->ip_total_length;
    }
  }
  if (bins.empty()) return;
  const std::int64_t first = bins.begin()->first;
  const std::int64_t last = bins.rbegin()->first;
  std::vector<double> shares;
  std::vector<std::pair<std::uint64_t, std::uint64_t>> raw;
  for (std::int64_t b = first; b <= last; ++b) {
    auto it = bins.find(b);
    const auto v = it == bins.end() ? std::pair<std::uint64_t, std::uint64_t>{0, 0} : it->second;
    raw.push_back(v);
    shares.push_back(v.second ? static_cast<double>(v.first) / static_cast<double>(v.second) : 0.0);
  }
  const auto smoothed = ewma(shares, o.alpha);
  for (std::size_t i = 0; i < shares.size(); ++i) {
    writer.write({{"bin_start_s", num(static_cast<double>((first + static_cast<std::int64_t>(i)) * bin_ns) / 1e9)},
                  {"mptcp_bytes", num(raw[i].first)},
                  {"total_bytes", num(raw[i].second)},
                  {"share", num(shares[i])},
                  {"ewma", num(smoothed[i])}});
  }
}

int do_analyze_pcap(const PcapOptions& o, std::ostream& out, std::ostream&) {
  const RecordFormat format = format_from(o.format);
  if (o.bin_seconds < 0) throw UsageError("--bin-seconds must be positive");
  if (!o.series_out.empty() && o.bin_seconds <= 0) throw UsageError("--series-out needs --bin-seconds");
  const FlowMode mode = o.unidirectional ? FlowMode::Unidirectional : FlowMode::Bidirectional;

  Output output(o.out, out);
  RecordWriter writer(output.stream(), format);
  FlowTable total;
  for (const auto& path : o.inputs) {
    FlowTable t = ingest_capture_file(path, mode);
    if (o.inputs.size() > 1) writer.write(share_fields(path, t, filter_min_packets(t, o.min_packets)));
    total.merge(t);
  }
  FlowTable kept = filter_min_packets(total, o.min_packets);
  writer.write(share_fields("total", total, kept));

  if (!o.services.empty() || !o.vendor_services.empty()) {
    ServiceTables tables;
    if (!o.services.empty()) ServiceTables::parse_into(read_text_file(o.services), tables.registry);
    if (!o.vendor_services.empty()) ServiceTables::parse_into(read_text_file(o.vendor_services), tables.vendor);
    label_services(kept, tables);
  }

  if (!o.services_out.empty()) {
    std::map<std::string, std::pair<std::uint64_t, std::uint64_t>> by_service;
    std::uint64_t mptcp_bytes = 0;
    for (const auto& [key, s] : kept.flows) {
      if (!s.mp_capable_seen) continue;
      auto& e = by_service[s.service_label.value_or(std::string(kUnknownService))];
      ++e.first;
      e.second += s.bytes;
      mptcp_bytes += s.bytes;
    }
    Output svc(o.services_out, out);
    RecordWriter w(svc.stream(), format);
    for (const auto& [name, e] : by_service) {
      w.write({{"service", name},
               {"mptcp_flows", num(e.first)},
               {"mptcp_bytes", num(e.second)},
               {"byte_share", num(static_cast<double>(e.second) / static_cast<double>(mptcp_bytes))}});
    }
  }

  if (!o.flows_out.empty()) {
    Output fl(o.flows_out, out);
    RecordWriter w(fl.stream(), format);
    for (const auto& [key, s] : kept.flows) {
      w.write({{"src", key.src.to_string()},
               {"sport", std::to_string(key.src_port)},
               {"dst", key.dst.to_string()},
               {"dport", std::to_string(key.dst_port)},
               {"packets", num(s.packets)},
               {"bytes", num(s.bytes)},
               {"duration_s", num(std::chrono::duration<double>(s.last_ts - s.first_ts).count())},
               {"mptcp", s.mp_capable_seen ? (s.mptcp_version ? version_text(*s.mptcp_version) : "?") : "-"},
               {"service", s.service_label.value_or("-")}});
    }
  }

  if (!o.series_out.empty()) {
    Output se(o.series_out, out);
    RecordWriter w(se.stream(), format);
    write_series(o, kept, mode, w);
  }
  return kExitOk;
}

// ---------------------------------------------------------------- report

struct ReportOptions {
  std::vector<std::string> inputs;
  std::string field;
  std::string store;
  std::string month;
  std::string family = "v4";
  std::uint16_t port = 443;
  std::string version = "0";
  std::string by;
  int window = kDefaultWindowMonths;
  bool list = false;
  std::string prefixes;
  std::string asns;
  std::size_t k = 10;
  std::string out;
  std::string format = "text";
};

YearMonth month_of(const ReportOptions& o) {
  auto m = YearMonth::parse(o.month);
  if (!m) throw UsageError("bad --month '" + o.month + "' (want YYYY-MM)");
  return *m;
}

AddressFamily family_of(const ReportOptions& o) {
  auto f = parse_family(o.family);
  if (!f) throw UsageError("bad --family '" + o.family + "'");
  return *f;
}

McVersion version_of(const ReportOptions& o) {
  auto v = parse_version(o.version);
  if (!v) throw UsageError("bad --version '" + o.version + "'");
  return *v;
}

AddressSet positives(const SnapshotStore& store, const SnapshotId& id) {
  AddressSet out;
  if (auto snap = store.load(id)) {
    for (const auto& [addr, rec] : snap->records) {
      if (is_positive_status(rec.status)) out.insert(addr);
    }
  }
  return out;
}

void write_overlap(RecordWriter& w, const std::string& a, const std::string& b, const Overlap& ov) {
  w.write({{"both", num(static_cast<std::uint64_t>(ov.both.size()))},
           {"only_" + a, num(static_cast<std::uint64_t>(ov.only_a.size()))},
           {"only_" + b, num(static_cast<std::uint64_t>(ov.only_b.size()))},
           {"union", num(static_cast<std::uint64_t>(ov.union_size()))},
           {"fraction_both", num(ov.fraction_both())},
           {"fraction_only_" + a, num(ov.fraction_only_a())},
           {"fraction_only_" + b, num(ov.fraction_only_b())}});
}

void write_addresses(RecordWriter& w, const std::string& set, const AddressSet& addrs) {
  for (const auto& a : addrs) w.write({{"set", set}, {"addr", a.to_string()}});
}

int report_verdicts(const ReportOptions& o, RecordWriter& w) {
  std::map<std::string, std::uint64_t> counts;
  std::uint64_t total = 0;
  for (const auto& path : o.inputs) {
    for (const auto& row : read_records(read_text_file(path))) {
      const std::string* v = nullptr;
      if (!o.field.empty()) {
        v = find_field(row, o.field);
      } else {
        v = find_field(row, "verdict");
        if (!v || *v == "-") v = find_field(row, "class");
      }
      if (!v || *v == "-") continue;
      ++counts[*v];
      ++total;
    }
  }
  for (const auto& [status, n] : counts) {
    w.write({{"status", status},
             {"count", num(n)},
             {"fraction", num(static_cast<double>(n) / static_cast<double>(total))}});
  }
  return kExitOk;
}

int report_ingest(const ReportOptions& o, RecordWriter& w) {
  if (o.store.empty()) throw UsageError("report ingest requires --store");
  const YearMonth month = month_of(o);
  std::map<SnapshotId, ScanSnapshot> snapshots;
  for (const auto& path : o.inputs) {
    for (const auto& row : read_records(read_text_file(path))) {
      const HostRecord rec = host_record_from_fields(row);
      SnapshotId id;
      id.month = month;
      id.family = rec.address.family();
      const std::string port = require_field(row, "port");
      if (std::from_chars(port.data(), port.data() + port.size(), id.port).ec != std::errc{}) {
        throw Error(ErrorCode::ParseError, "bad port '" + port + "'");
      }
      auto v = parse_version(require_field(row, "version"));
      if (!v) throw Error(ErrorCode::ParseError, "bad version in record");
      id.version = *v;
      auto [it, inserted] = snapshots.try_emplace(id, ScanSnapshot{id, {}});
      it->second.merge(rec);
    }
  }
  SnapshotStore store(o.store);
  for (const auto& [id, snap] : snapshots) {
    const std::size_t appended = store.ingest(snap);
    w.write({{"snapshot", id.file_name()},
             {"records", num(static_cast<std::uint64_t>(snap.records.size()))},
             {"appended", num(static_cast<std::uint64_t>(appended))}});
  }
  return kExitOk;
}

int report_overlap(const ReportOptions& o, RecordWriter& w) {
  const SnapshotStore store(o.store);
  const YearMonth month = month_of(o);
  const AddressFamily family = family_of(o);
  if (o.by == "port") {
    const McVersion v = version_of(o);
    const auto a = positives(store, {month, family, 80, v});
    const auto b = positives(store, {month, family, 443, v});
    const Overlap ov = port_overlap(a, b);
    write_overlap(w, "80", "443", ov);
    if (o.list) {
      write_addresses(w, "both", ov.both);
      write_addresses(w, "only_80", ov.only_a);
      write_addresses(w, "only_443", ov.only_b);
    }
  } else if (o.by == "version") {
    const auto a = positives(store, {month, family, o.port, McVersion::V0});
    const auto b = positives(store, {month, family, o.port, McVersion::V1});
    const Overlap ov = version_overlap(a, b);
    write_overlap(w, "v0", "v1", ov);
    if (o.list) {
      write_addresses(w, "both", ov.both);
      write_addresses(w, "only_v0", ov.only_a);
      write_addresses(w, "only_v1", ov.only_b);
    }
  } else {
    throw UsageError("report overlap requires --by port|version");
  }
  return kExitOk;
}

int report_consistency(const ReportOptions& o, RecordWriter& w) {
  const SnapshotStore store(o.store);
  const YearMonth month = month_of(o);
  const auto series = store.series(family_of(o), o.port, version_of(o));
  const AddressSet consistent = consistent_hosts(series, o.window, month);
  const AddressSet eligible = eligible_for_path_probe(series, month, o.window);
  w.write({{"month", month.to_string()},
           {"window", std::to_string(o.window)},
           {"consistent", num(static_cast<std::uint64_t>(consistent.size()))},
           {"eligible", num(static_cast<std::uint64_t>(eligible.size()))}});
  if (o.list) {
    write_addresses(w, "consistent", consistent);
    write_addresses(w, "eligible", eligible);
  }
  return kExitOk;
}

int report_migration(const ReportOptions& o, RecordWriter& w) {
  const SnapshotStore store(o.store);
  const YearMonth month = month_of(o);
  const AddressFamily family = family_of(o);
  auto support = [&](YearMonth m) {
    return VersionSupport{positives(store, {m, family, o.port, McVersion::V0}),
                          positives(store, {m, family, o.port, McVersion::V1})};
  };
  const MigrationReport r = migration_report(support(month.prev()), support(month));
  w.write({{"month", month.to_string()},
           {"added_v1_support", num(static_cast<std::uint64_t>(r.added_v1_support.size()))},
           {"migrated_v0_to_v1", num(static_cast<std::uint64_t>(r.migrated_v0_to_v1.size()))},
           {"added_v0_support", num(static_cast<std::uint64_t>(r.added_v0_support.size()))},
           {"migrated_v1_to_v0", num(static_cast<std::uint64_t>(r.migrated_v1_to_v0.size()))}});
  if (o.list) {
    write_addresses(w, "added_v1_support", r.added_v1_support);
    write_addresses(w, "migrated_v0_to_v1", r.migrated_v0_to_v1);
    write_addresses(w, "added_v0_support", r.added_v0_support);
    write_addresses(w, "migrated_v1_to_v0", r.migrated_v1_to_v0);
  }
  return kExitOk;
}

int report_top(const ReportOptions& o, RecordWriter& w) {
  if (o.prefixes.empty() || o.asns.empty()) throw Error(ErrorCode::MissingTable, "report top needs --prefixes and --asns");
  GroupBy group;
  if (o.by == "asn" || o.by.empty()) {
    group = GroupBy::Asn;
  } else if (o.by == "country") {
    group = GroupBy::Country;
  } else {
    throw UsageError("report top --by must be asn or country");
  }
  const SnapshotStore store(o.store);
  const YearMonth month = month_of(o);
  const AddressFamily family = family_of(o);
  const McVersion v = version_of(o);
  const EnrichmentTable table = EnrichmentTable::load(o.prefixes, o.asns);
  std::vector<EnrichedHost> hosts;
  for (std::uint16_t port : {std::uint16_t{80}, std::uint16_t{443}}) {
    for (const auto& addr : positives(store, {month, family, port, v})) hosts.push_back({addr, port, enrich(addr, table)});
  }
  std::size_t rank = 0;
  for (const auto& row : top_report(hosts, group, o.k)) {
    w.write({{"rank", std::to_string(++rank)},
             {group == GroupBy::Asn ? "asn" : "country", row.key},
             {"organization", row.info.organization},
             {"country", row.info.country},
             {"port80", num(static_cast<std::uint64_t>(row.port80))},
             {"port443", num(static_cast<std::uint64_t>(row.port443))},
             {"unique", num(static_cast<std::uint64_t>(row.unique_addresses))}});
  }
  return kExitOk;
}

// ---------------------------------------------------------------- bench

struct BenchOptions {
  std::string targets;
  std::string sim;
  int runs = kMinRuns;
  std::uint64_t seed = 0;
  double jitter_ms = 0;
  double server_ms = 2;
  double transfer_ms = 5;
  double tolerance_ms = kDefaultDeltaTolerance.count();
  double timeout_ms = 5000;
  std::string host;
  std::string out;
  std::string deltas_out;
  std::string samples_out;
  std::string cdf_dir;
  std::string format = "text";
};

int do_bench(const BenchOptions& o, std::ostream& out, std::ostream& err) {
  const RecordFormat format = format_from(o.format);
  if (o.runs < kMinRuns) throw UsageError("--runs must be at least 10");
  const auto targets = parse_target_list(read_text_file(o.targets));

  std::unique_ptr<SimNetwork> sim;
  std::unique_ptr<TimingProvider> provider;
  if (!o.sim.empty()) {
    sim = load_sim(o.sim, o.seed);
    SimTimingConfig cfg;
    cfg.server_time = Millis{o.server_ms};
    cfg.transfer_time = Millis{o.transfer_ms};
    cfg.jitter = Millis{o.jitter_ms};
    cfg.seed = o.seed;
    provider = std::make_unique<SimTimingProvider>(*sim, cfg);
  } else {
    provider = std::make_unique<SocketTimingProvider>(Millis{o.timeout_ms}, o.host);
  }

  bool mptcp_unavailable = false;
  const PairedRuns runs = run_paired(targets, *provider, o.runs, &mptcp_unavailable);
  if (mptcp_unavailable) {
    err << "mpscan bench: MPTCP sockets are unavailable on this host\n";
    return kExitFailure;
  }

  if (!o.samples_out.empty()) {
    Output s(o.samples_out, out);
    RecordWriter w(s.stream(), format);
    for (const auto* side : {&runs.mptcp, &runs.tcp}) {
      for (const auto& t : *side) {
        w.write({{"addr", t.target.address.to_string()},
                 {"port", std::to_string(t.target.port)},
                 {"run", std::to_string(t.run)},
                 {"transport", std::string(to_string(t.transport))},
                 {"success", t.success ? "1" : "0"},
                 {"connect_ms", num(t.connect.count())},
                 {"tls_ms", t.tls_handshake ? num(t.tls_handshake->count()) : "-"},
                 {"ttfb_ms", num(t.ttfb.count())},
                 {"total_ms", num(t.total.count())}});
      }
    }
  }

  const DeltaReport report = delta_report(runs.mptcp, runs.tcp, Millis{o.tolerance_ms});
  {
    Output s(o.out, out);
    RecordWriter w(s.stream(), format);
    for (const auto& [metric, sum] : report.summary) {
      w.write({{"metric", std::string(to_string(metric))},
               {"pairs", num(static_cast<std::uint64_t>(sum.count))},
               {"mptcp_faster", num(sum.mptcp_faster)},
               {"about_equal", num(sum.about_equal)},
               {"tcp_faster", num(sum.tcp_faster)}});
    }
  }
  if (!o.deltas_out.empty()) {
    Output d(o.deltas_out, out);
    RecordWriter w(d.stream(), format);
    for (const auto& r : report.records) {
      w.write({{"addr", r.target.address.to_string()},
               {"port", std::to_string(r.target.port)},
               {"run", std::to_string(r.run)},
               {"metric", std::string(to_string(r.metric))},
               {"delta_ms", num(r.delta_ms)}});
    }
  }
  if (!o.cdf_dir.empty()) {
    std::filesystem::create_directories(o.cdf_dir);
    for (const auto& [metric, cdf] : report.cdf) {
      const auto path = std::filesystem::path(o.cdf_dir) / ("cdf_" + std::string(to_string(metric)) + ".txt");
      std::ofstream f(path, std::ios::binary | std::ios::trunc);
      if (!f) throw Error(ErrorCode::IoError, "cannot write " + path.string());
      write_cdf(f, cdf);
    }
  }
  return kExitOk;
}

void add_output_options(CLI::App& app, std::string& out, std::string& format) {
  app.add_option("--out", out, "Output file (default: standard output)");
  app.add_option("--format", format, "Record format")->check(CLI::IsMember({"text", "csv", "jsonl"}));
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"MPTCP measurement toolkit: active scans, path inspection, key entropy, passive traffic analysis",
               "mpscan"};
  app.require_subcommand(1);
  app.fallthrough(false);

  ScanOptions scan;
  auto* scan_cmd = app.add_subcommand("scan", "SYN-probe targets with MP_CAPABLE and classify the replies");
  scan_cmd->add_option("--targets", scan.targets, "Target list: one `address,port` per line")->required();
  scan_cmd->add_option("--sim", scan.sim, "Probe a simulated topology instead of the network");
  scan_cmd->add_flag("--dry-run", scan.dry_run, "Emit planned probes without sending");
  scan_cmd->add_option("--workers", scan.workers, "Concurrent probe workers");
  scan.probe.add_to(*scan_cmd);
  scan.guard.add_to(*scan_cmd);
  add_output_options(*scan_cmd, scan.out, scan.format);

  TraceOptions trace;
  auto* trace_cmd = app.add_subcommand("trace", "TTL-stepping path inspection of MP_CAPABLE handling");
  auto* tt = trace_cmd->add_option("--targets", trace.targets, "Target list: one `address,port` per line");
  auto* ts = trace_cmd->add_option("--from-scan", trace.from_scan, "Trace the PotentialCapable rows of a scan output");
  tt->excludes(ts);
  ts->excludes(tt);
  trace_cmd->add_option("--sim", trace.sim, "Trace a simulated topology instead of the network");
  trace_cmd->add_option("--max-ttl", trace.max_ttl, "Highest TTL to probe");
  trace_cmd->add_option("--repetitions", trace.repetitions, "Attempts per TTL")->check(CLI::PositiveNumber);
  trace_cmd->add_option("--hops-out", trace.hops_out, "Per-hop diff records");
  trace.probe.add_to(*trace_cmd);
  trace.guard.add_to(*trace_cmd);
  add_output_options(*trace_cmd, trace.out, trace.format);

  KeysOptions keys;
  auto* keys_cmd = app.add_subcommand("keys", "Hamming-weight analysis of collected sender's keys");
  keys_cmd->add_option("--in", keys.in, "Scan records (or raw hex keys with --raw)")->required();
  keys_cmd->add_option("--probe-key", keys.probe_key, "Key the scan sent, in hex");
  keys_cmd->add_flag("--raw", keys.raw, "Input holds one hex key per line");
  keys_cmd->add_option("--out", keys.out, "Output file (default: standard output)");

  SimulateOptions simulate;
  auto* sim_cmd = app.add_subcommand("simulate", "Generate a population or run a topology end to end");
  sim_cmd->add_option("--seed", simulate.seed, "Seed for all simulated randomness")->required();
  sim_cmd->add_option("--population", simulate.population, "Generate a mixed population of N targets");
  sim_cmd->add_option("--topology", simulate.topology, "Scan and trace every target of a topology file");
  sim_cmd->add_option("--port", simulate.port, "Target port");
  sim_cmd->add_option("--targets-out", simulate.targets_out, "With --population: target list file");
  sim_cmd->add_option("--max-ttl", simulate.max_ttl, "Highest TTL to probe");
  sim_cmd->add_option("--version", simulate.probe.version, "MP_CAPABLE version to probe (0 or 1)")
      ->check(CLI::IsMember({"0", "1", "v0", "v1"}));
  sim_cmd->add_option("--key", simulate.probe.key, "64-bit probe key in hex (version 0 only)");
  add_output_options(*sim_cmd, simulate.out, simulate.format);

  PcapOptions pcap;
  auto* pcap_cmd = app.add_subcommand("analyze-pcap", "Flow statistics and MPTCP shares from packet captures");
  pcap_cmd->add_option("--in", pcap.inputs, "Capture file (repeatable)")->required();
  pcap_cmd->add_option("--min-packets", pcap.min_packets, "Drop flows with fewer packets");
  pcap_cmd->add_option("--services", pcap.services, "Registry table: port,protocol,label");
  pcap_cmd->add_option("--vendor-services", pcap.vendor_services, "Vendor table consulted before the registry");
  pcap_cmd->add_flag("--unidirectional", pcap.unidirectional, "Count each direction as its own flow");
  pcap_cmd->add_option("--bin-seconds", pcap.bin_seconds, "Time-series bin width");
  pcap_cmd->add_option("--alpha", pcap.alpha, "EWMA smoothing factor")->check(CLI::Range(0.0, 1.0));
  pcap_cmd->add_option("--flows-out", pcap.flows_out, "Per-flow records");
  pcap_cmd->add_option("--services-out", pcap.services_out, "MPTCP traffic per service");
  pcap_cmd->add_option("--series-out", pcap.series_out, "Binned MPTCP byte share with EWMA");
  add_output_options(*pcap_cmd, pcap.out, pcap.format);

  ReportOptions report;
  auto* report_cmd = app.add_subcommand("report", "Campaign-store analyses");
  report_cmd->require_subcommand(1);
  auto add_store = [&](CLI::App* c) {
    c->add_option("--store", report.store, "Snapshot directory")->required();
    c->add_option("--month", report.month, "Month YYYY-MM")->required();
    c->add_option("--family", report.family, "Address family (v4 or v6)");
  };
  auto* r_verdicts = report_cmd->add_subcommand("verdicts", "Count classes or verdicts in scan/trace outputs");
  r_verdicts->add_option("--in", report.inputs, "Record file (repeatable)")->required();
  r_verdicts->add_option("--field", report.field, "Field to count (default: verdict, else class)");
  auto* r_ingest = report_cmd->add_subcommand("ingest", "Append scan or trace records to monthly snapshots");
  r_ingest->add_option("--in", report.inputs, "Record file (repeatable)")->required();
  add_store(r_ingest);
  auto* r_overlap = report_cmd->add_subcommand("overlap", "Port 80/443 or v0/v1 overlap of positive hosts");
  add_store(r_overlap);
  r_overlap->add_option("--by", report.by, "port or version")->required()->check(CLI::IsMember({"port", "version"}));
  r_overlap->add_option("--port", report.port, "Port for version overlap");
  r_overlap->add_option("--version", report.version, "Version for port overlap");
  r_overlap->add_flag("--list", report.list, "Also list member addresses");
  auto* r_consistency = report_cmd->add_subcommand("consistency", "Hosts positive across a window of months");
  add_store(r_consistency);
  r_consistency->add_option("--port", report.port, "Port");
  r_consistency->add_option("--version", report.version, "Version");
  r_consistency->add_option("--window", report.window, "Months")->check(CLI::PositiveNumber);
  r_consistency->add_flag("--list", report.list, "Also list member addresses");
  auto* r_migration = report_cmd->add_subcommand("migration", "Version changes against the previous month");
  add_store(r_migration);
  r_migration->add_option("--port", report.port, "Port");
  r_migration->add_flag("--list", report.list, "Also list member addresses");
  auto* r_top = report_cmd->add_subcommand("top", "Top ASes or countries by positive hosts");
  add_store(r_top);
  r_top->add_option("--prefixes", report.prefixes, "prefix,asn table");
  r_top->add_option("--asns", report.asns, "asn,organization,country,rank table");
  r_top->add_option("--by", report.by, "asn or country")->check(CLI::IsMember({"asn", "country"}));
  r_top->add_option("--version", report.version, "Version");
  r_top->add_option("-k,--top", report.k, "Rows")->check(CLI::PositiveNumber);
  for (auto* c : {r_verdicts, r_ingest, r_overlap, r_consistency, r_migration, r_top}) {
    add_output_options(*c, report.out, report.format);
  }

  BenchOptions bench;
  auto* bench_cmd = app.add_subcommand("bench", "Paired MPTCP vs TCP GET timings");
  bench_cmd->add_option("--targets", bench.targets, "Target list: one `address,port` per line")->required();
  bench_cmd->add_option("--sim", bench.sim, "Time a simulated topology instead of the network");
  bench_cmd->add_option("--runs", bench.runs, "Runs per target and transport");
  bench_cmd->add_option("--seed", bench.seed, "Seed for simulated jitter");
  bench_cmd->add_option("--jitter-ms", bench.jitter_ms, "Simulated uniform jitter");
  bench_cmd->add_option("--server-ms", bench.server_ms, "Simulated server think time");
  bench_cmd->add_option("--transfer-ms", bench.transfer_ms, "Simulated body transfer time");
  bench_cmd->add_option("--tolerance-ms", bench.tolerance_ms, "Deltas within this are about equal");
  bench_cmd->add_option("--timeout-ms", bench.timeout_ms, "Live connect/read timeout");
  bench_cmd->add_option("--host", bench.host, "Live Host header and TLS SNI");
  bench_cmd->add_option("--deltas-out", bench.deltas_out, "Per-pair delta records");
  bench_cmd->add_option("--samples-out", bench.samples_out, "Raw timing samples");
  bench_cmd->add_option("--cdf-dir", bench.cdf_dir, "Directory for per-metric CDF files");
  add_output_options(*bench_cmd, bench.out, bench.format);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "mpscan: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  try {
    if (*scan_cmd) return do_scan(scan, out, err);
    if (*trace_cmd) {
      if (trace.targets.empty() == trace.from_scan.empty()) {
        throw UsageError("trace needs exactly one of --targets or --from-scan");
      }
      return do_trace(trace, out, err);
    }
    if (*keys_cmd) return do_keys(keys, out, err);
    if (*sim_cmd) return do_simulate(simulate, out, err);
    if (*pcap_cmd) return do_analyze_pcap(pcap, out, err);
    if (*report_cmd) {
      format_from(report.format);
      Output output(report.out, out);
      RecordWriter w(output.stream(), *parse_record_format(report.format));
      if (*r_verdicts) return report_verdicts(report, w);
      if (*r_ingest) return report_ingest(report, w);
      if (*r_overlap) return report_overlap(report, w);
      if (*r_consistency) return report_consistency(report, w);
      if (*r_migration) return report_migration(report, w);
      return report_top(report, w);
    }
    return do_bench(bench, out, err);
  } catch (const UsageError& e) {
    err << "mpscan: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  } catch (const Error& e) {
    err << "mpscan: " << to_string(e.code()) << ": " << e.what() << '\n';
    return kExitFailure;
  } catch (const std::exception& e) {
    err << "mpscan: " << e.what() << '\n';
    return kExitFailure;
  }
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv{"mpscan"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace mpscan::cli
