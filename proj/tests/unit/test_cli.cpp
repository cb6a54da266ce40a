#include <doctest.h>

#include <unistd.h>

#include <charconv>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "mpscan/cli.hpp"
#include "mpscan/record_io.hpp"
#include "support/synth_capture.hpp"

using namespace mpscan;
namespace fs = std::filesystem;

namespace {

struct Workspace {
  fs::path dir;
  explicit Workspace(const std::string& name)
      : dir(fs::temp_directory_path() / ("mpscan_cli_" + name + "_" + std::to_string(::getpid()))) {
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~Workspace() { fs::remove_all(dir); }

  std::string path(const std::string& name) const { return (dir / name).string(); }
  std::string write(const std::string& name, const std::string& text) const {
    std::ofstream(dir / name, std::ios::binary) << text;
    return path(name);
  }
  std::set<std::string> listing() const {
    std::set<std::string> names;
    for (const auto& e : fs::recursive_directory_iterator(dir)) names.insert(fs::relative(e.path(), dir).string());
    return names;
  }
};

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const std::string& path) { return read_text_file(path); }

double as_double(const std::string& s) {
  double v = 0;
  std::from_chars(s.data(), s.data() + s.size(), v);
  return v;
}

const char* const kTopology =
    "target 10.0.0.1 mptcp_host(v0)\n"
    "target 10.0.0.2 mirror tcp_host\n"
    "target 10.0.0.3 strip mptcp_host(v0)\n"
    "target 10.0.0.4 quoting_router(28) key_rewrite mptcp_host(v0)\n"
    "target 10.0.0.5 drop tcp_host\n";
const char* const kTargets = "10.0.0.1,443\n10.0.0.2,443\n10.0.0.3,443\n10.0.0.4,443\n10.0.0.5,443\n";

}  // namespace

TEST_CASE("exit codes") {
  const Result none = run({});
  CHECK(none.code == cli::kExitUsage);
  CHECK(none.err.find("Usage") != std::string::npos);
  CHECK(run({"scan", "--bogus"}).code == cli::kExitUsage);
  CHECK(run({"frobnicate"}).code == cli::kExitUsage);
  CHECK(run({"--help"}).code == cli::kExitOk);
  CHECK(run({"simulate", "--population", "3"}).code == cli::kExitUsage);
  CHECK(run({"simulate", "--seed", "1"}).code == cli::kExitUsage);
  CHECK(run({"scan", "--targets", "t", "--format", "xml"}).code == cli::kExitUsage);

  Workspace ws("codes");
  const Result missing = run({"keys", "--in", ws.path("absent.txt")});
  CHECK(missing.code == cli::kExitFailure);
  CHECK(missing.err.rfind("mpscan: ", 0) == 0);
  CHECK(ws.listing().empty());
}

TEST_CASE("live probing is refused without a blocklist and a rate") {
  Workspace ws("guard");
  const auto targets = ws.write("t.txt", kTargets);
  ::unsetenv(cli::kBlocklistEnv);
  for (const auto& args : std::vector<std::vector<std::string>>{
           {"scan", "--targets", targets},
           {"scan", "--targets", targets, "--rate", "10"},
           {"scan", "--targets", targets, "--blocklist", ws.write("b.txt", "192.0.2.0/24\n")},
           {"trace", "--targets", targets},
           {"trace", "--targets", targets, "--rate", "5"}}) {
    const Result r = run(args);
    CHECK(r.code == cli::kExitFailure);
    CHECK(r.err.find("refusing") != std::string::npos);
    CHECK(r.out.empty());
  }
}

TEST_CASE("dry-run plans probes and honours the blocklist from the environment") {
  Workspace ws("dry");
  const auto targets = ws.write("t.txt", kTargets);
  ::setenv(cli::kBlocklistEnv, ws.write("b.txt", "10.0.0.2/32\n").c_str(), 1);
  const Result r = run({"scan", "--targets", targets, "--dry-run", "--rate", "100", "--seed", "4"});
  ::unsetenv(cli::kBlocklistEnv);
  REQUIRE(r.code == cli::kExitOk);
  const auto rows = read_records(r.out);
  REQUIRE(rows.size() == 5);
  std::size_t skipped = 0;
  for (const auto& row : rows) skipped += require_field(row, "class") == "Skipped";
  CHECK(skipped == 1);
}

TEST_CASE("simulated runs are reproducible under a seed") {
  Workspace ws("seed");
  const auto topo = ws.write("topo.txt", kTopology);
  const Result a = run({"simulate", "--seed", "11", "--topology", topo, "--format", "jsonl"});
  const Result b = run({"simulate", "--seed", "11", "--topology", topo, "--format", "jsonl"});
  const Result c = run({"simulate", "--seed", "12", "--topology", topo, "--format", "jsonl"});
  REQUIRE(a.code == 0);
  CHECK(a.out == b.out);
  CHECK(a.out != c.out);

  const auto rows = read_records(a.out);
  REQUIRE(rows.size() == 5);
  CHECK(require_field(rows[0], "verdict") == "TrulyCapable");
  CHECK(require_field(rows[1], "class") == "MirroredKey");
  CHECK(require_field(rows[2], "class") == "NoMpCapable");
  CHECK(require_field(rows[3], "verdict") == "MiddleboxAffected");
  CHECK(require_field(rows[3], "ttl") == "2");
  CHECK(require_field(rows[4], "class") == "NoResponse");

  CHECK(run({"simulate", "--seed", "5", "--population", "40", "--out", ws.path("p1"), "--targets-out",
             ws.path("t1")}).code == 0);
  CHECK(run({"simulate", "--seed", "5", "--population", "40", "--out", ws.path("p2"), "--targets-out",
             ws.path("t2")}).code == 0);
  CHECK(slurp(ws.path("p1")) == slurp(ws.path("p2")));
  CHECK(slurp(ws.path("t1")) == slurp(ws.path("t2")));
  CHECK(ws.listing() == std::set<std::string>{"topo.txt", "p1", "p2", "t1", "t2"});
}

TEST_CASE("scan, trace and report over a simulated topology") {
  Workspace ws("pipeline");
  const auto topo = ws.write("topo.txt", kTopology);
  const auto targets = ws.write("t.txt", kTargets);
  REQUIRE(run({"scan", "--targets", targets, "--sim", topo, "--seed", "2", "--format", "csv", "--out",
               ws.path("scan.csv")}).code == 0);
  const auto scan_rows = read_records(slurp(ws.path("scan.csv")));
  REQUIRE(scan_rows.size() == 5);

  REQUIRE(run({"trace", "--from-scan", ws.path("scan.csv"), "--sim", topo, "--seed", "2", "--out",
               ws.path("trace.txt"), "--hops-out", ws.path("hops.txt")}).code == 0);
  const auto trace_rows = read_records(slurp(ws.path("trace.txt")));
  REQUIRE(trace_rows.size() == 2);  // the two PotentialCapable rows

  const Result v = run({"report", "verdicts", "--in", ws.path("trace.txt"), "--format", "csv"});
  REQUIRE(v.code == 0);
  CHECK(v.out.find("MiddleboxAffected,1,") != std::string::npos);
  CHECK(v.out.find("TrulyCapable,1,") != std::string::npos);

  const Result ing = run({"report", "ingest", "--store", ws.path("store"), "--month", "2022-01", "--in",
                          ws.path("scan.csv")});
  REQUIRE(ing.code == 0);
  CHECK(ing.out.find("appended=5") != std::string::npos);
  CHECK(run({"report", "ingest", "--store", ws.path("store"), "--month", "2022-01", "--in", ws.path("scan.csv")})
            .out.find("appended=0") != std::string::npos);
  const Result ov = run({"report", "overlap", "--store", ws.path("store"), "--month", "2022-01", "--by", "version"});
  REQUIRE(ov.code == 0);
  CHECK(ov.out.find("only_v0=2") != std::string::npos);
  CHECK(run({"report", "consistency", "--store", ws.path("store"), "--month", "2022-01", "--window", "2"}).code ==
        cli::kExitFailure);
  CHECK(run({"report", "top", "--store", ws.path("store"), "--month", "2022-01"}).code == cli::kExitFailure);
}

TEST_CASE("keys over a scan output") {
  Workspace ws("keys");
  const auto topo = ws.write("topo.txt", kTopology);
  const auto targets = ws.write("t.txt", kTargets);
  REQUIRE(run({"scan", "--targets", targets, "--sim", topo, "--out", ws.path("scan.txt")}).code == 0);
  const Result k = run({"keys", "--in", ws.path("scan.txt")});
  REQUIRE(k.code == 0);
  CHECK(k.out == run({"keys", "--in", ws.path("scan.txt")}).out);
  CHECK_FALSE(k.out.empty());
}

TEST_CASE("analyze-pcap share row") {
  using testing::SynthFlow;
  Workspace ws("pcap");
  const IpAddress server = *IpAddress::parse("198.51.100.1");
  std::vector<SynthFlow> flows;
  for (std::uint16_t i = 0; i < 3; ++i) {
    SynthFlow f;
    f.client = IpAddress::v4(0x0A000001U + i);
    f.server = server;
    f.client_port = static_cast<std::uint16_t>(40000 + i);
    f.start_ns = i * 100'000'000LL;
    if (i == 2) f.mptcp = McVersion::V0;
    flows.push_back(f);
  }
  SynthFlow shorty = flows[0];
  shorty.client_port = 50000;
  shorty.packets = 3;
  flows.push_back(shorty);
  {
    std::ofstream(ws.dir / "c.pcap", std::ios::binary) << testing::synth_capture(flows);
  }

  const Result r = run({"analyze-pcap", "--in", ws.path("c.pcap"), "--min-packets", "5"});
  REQUIRE(r.code == 0);
  const auto rows = read_records(r.out);
  REQUIRE(rows.size() == 1);
  const auto& row = rows[0];
  CHECK(require_field(row, "scope") == "total");
  CHECK(require_field(row, "tcp_flows") == "3");
  CHECK(require_field(row, "mptcp_flows") == "1");
  CHECK(require_field(row, "filtered_flows") == "1");
  CHECK(require_field(row, "parse_failures") == "0");
  const double plain = static_cast<double>(testing::synth_flow_bytes(flows[0]));
  const double mp = static_cast<double>(testing::synth_flow_bytes(flows[2]));
  CHECK(as_double(require_field(row, "flow_share")) == 1.0 / 3.0);
  CHECK(as_double(require_field(row, "byte_share")) == mp / (2 * plain + mp));
  CHECK(require_field(row, "top1_share") == "1");
}
