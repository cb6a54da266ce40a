#include <doctest.h>

#include <sstream>

#include "mpscan/error.hpp"
#include "mpscan/transfer_bench.hpp"

using namespace mpscan;

namespace {

const char* const kTopology =
    "latency_ms 5\nfallback_penalty_ms 300\n"
    "target 10.0.0.1 strip mptcp_host(v0,v1)\n"
    "target 10.0.0.2 quoting_router mptcp_host(v1)\n"
    "target 10.0.0.3 drop tcp_host\n";

Endpoint ep(const char* a, std::uint16_t port = 443) { return {*IpAddress::parse(a), port}; }

TimingSample sample(const char* addr, int run, TransportKind kind, double connect, double total) {
  TimingSample s;
  s.target = ep(addr);
  s.run = run;
  s.transport = kind;
  s.success = true;
  s.connect = Millis{connect};
  s.ttfb = Millis{total / 2};
  s.total = Millis{total};
  return s;
}

}  // namespace

TEST_CASE("simulated timings follow the path") {
  SimNetwork net(parse_topology(kTopology), 1);
  SimTimingProvider sim(net, {});
  // Plain path: 2 hops at 5 ms each way gives a 20 ms round trip.
  const auto tcp = sim.measure(ep("10.0.0.2"), TransportKind::Tcp, 0);
  REQUIRE(tcp.success);
  CHECK(tcp.connect.count() == doctest::Approx(20));
  REQUIRE(tcp.tls_handshake.has_value());
  CHECK(tcp.tls_handshake->count() == doctest::Approx(40));
  CHECK(tcp.ttfb.count() == doctest::Approx(20 + 40 + 20 + 2));
  CHECK(tcp.total.count() == doctest::Approx(82 + 5));
  CHECK(sim.measure(ep("10.0.0.2"), TransportKind::Mptcp, 0).connect == tcp.connect);

  const auto strip = sim.measure(ep("10.0.0.1"), TransportKind::Mptcp, 0);
  CHECK(strip.connect.count() == doctest::Approx(20 + 300));
  CHECK_FALSE(sim.measure(ep("10.0.0.3"), TransportKind::Tcp, 0).success);
  CHECK_FALSE(sim.measure(ep("10.9.9.9"), TransportKind::Tcp, 0).success);
  CHECK_FALSE(sim.measure(ep("10.0.0.2", 80), TransportKind::Tcp, 0).tls_handshake.has_value());
}

TEST_CASE("jitter is reproducible under a seed") {
  SimNetwork net(parse_topology(kTopology), 1);
  SimTimingProvider a(net, {.jitter = Millis{3}, .seed = 9});
  SimTimingProvider b(net, {.jitter = Millis{3}, .seed = 9});
  for (int run = 0; run < 10; ++run) {
    const auto x = a.measure(ep("10.0.0.2"), TransportKind::Tcp, run);
    const auto y = b.measure(ep("10.0.0.2"), TransportKind::Tcp, run);
    CHECK(x.total == y.total);
    CHECK(x.connect.count() >= 20);
    CHECK(x.connect.count() <= 23);
  }
}

TEST_CASE("paired runs and deltas") {
  SimNetwork net(parse_topology(kTopology), 1);
  SimTimingProvider sim(net, {.jitter = Millis{2}, .seed = 3});
  const std::vector<Endpoint> targets{ep("10.0.0.1"), ep("10.0.0.2")};
  CHECK_THROWS_AS(run_paired(targets, sim, 9), Error);
  CHECK_THROWS_AS(time_get(targets[0], TransportKind::Tcp, sim, 3), Error);
  const PairedRuns runs = run_paired(targets, sim, 12);
  CHECK(runs.mptcp.size() == 24);
  CHECK(runs.tcp.size() == 24);

  const DeltaReport report = delta_report(runs.mptcp, runs.tcp);
  std::size_t strip_connect = 0;
  for (const auto& r : report.records) {
    if (r.metric == Metric::Connect && r.target == targets[0]) {
      ++strip_connect;
      CHECK(r.delta_ms > 0);
    }
  }
  CHECK(strip_connect == 12);

  const DeltaReport swapped = delta_report(runs.tcp, runs.mptcp);
  REQUIRE(swapped.records.size() == report.records.size());
  for (std::size_t i = 0; i < report.records.size(); ++i) {
    CHECK(swapped.records[i].delta_ms == -report.records[i].delta_ms);
  }
  CHECK(report.summary.at(Metric::Connect).count == 24);
  CHECK(report.summary.at(Metric::Connect).tcp_faster >= 0.5);
}

TEST_CASE("delta report pairing, summary and CDF") {
  using K = TransportKind;
  const std::vector<TimingSample> m{sample("10.0.0.1", 0, K::Mptcp, 11, 50), sample("10.0.0.1", 1, K::Mptcp, 12, 40),
                                    sample("10.0.0.1", 2, K::Mptcp, 30, 40), sample("10.0.0.1", 3, K::Mptcp, 11, 40)};
  const std::vector<TimingSample> t{sample("10.0.0.1", 0, K::Tcp, 10.5, 50), sample("10.0.0.1", 1, K::Tcp, 20, 40),
                                    sample("10.0.0.1", 2, K::Tcp, 20, 40), sample("10.0.0.1", 3, K::Tcp, 10.5, 40)};
  const DeltaReport r = delta_report(m, t);
  const DeltaSummary& s = r.summary.at(Metric::Connect);
  CHECK(s.count == 4);
  CHECK(s.mptcp_faster == 0.25);
  CHECK(s.about_equal == 0.5);
  CHECK(s.tcp_faster == 0.25);
  CHECK_FALSE(r.summary.contains(Metric::Tls));

  // Ties collapse into one step of the CDF.
  const auto& cdf = r.cdf.at(Metric::Connect);
  REQUIRE(cdf.size() == 3);
  CHECK(cdf[0].delta_ms == -8);
  CHECK(cdf[0].cumulative == 0.25);
  CHECK(cdf[1].delta_ms == 0.5);
  CHECK(cdf[1].cumulative == 0.75);
  CHECK(cdf[2].cumulative == 1.0);
  CHECK(r.cdf.at(Metric::Total).size() == 1);

  std::ostringstream out;
  write_cdf(out, cdf);
  CHECK(out.str().find("-8 0.25\n") != std::string::npos);

  auto failed = m;
  failed[2].success = false;
  CHECK(delta_report(failed, t).summary.at(Metric::Connect).count == 3);

  CHECK_THROWS_AS(delta_report(std::span(m).first(3), t), Error);
  auto dup = m;
  dup[3].run = 2;
  CHECK_THROWS_AS(delta_report(dup, t), Error);
}
