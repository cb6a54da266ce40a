#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include <unistd.h>

#include "mpscan/campaign_store.hpp"
#include "mpscan/error.hpp"

using namespace mpscan;

namespace {

IpAddress a4(std::uint32_t i) { return IpAddress::v4(0x0A000000U + i); }

std::filesystem::path fresh_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("mpscan_store_" + name + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  return dir;
}

ScanSnapshot snapshot(YearMonth m, std::uint16_t port, McVersion v,
                      std::vector<std::pair<std::uint32_t, std::string>> rows) {
  ScanSnapshot s{{m, AddressFamily::V4, port, v}, {}};
  for (auto& [i, status] : rows) s.merge({a4(i), status, std::nullopt});
  return s;
}

AddressSet set_of(std::initializer_list<std::uint32_t> ids) {
  AddressSet s;
  for (auto i : ids) s.insert(a4(i));
  return s;
}

}  // namespace

TEST_CASE("months") {
  const auto m = YearMonth::parse("2021-12");
  REQUIRE(m.has_value());
  CHECK(m->next().to_string() == "2022-01");
  CHECK(YearMonth{2022, 1}.prev() == *m);
  CHECK_FALSE(YearMonth::parse("2021-13").has_value());
  CHECK_FALSE(YearMonth::parse("21-12").has_value());
}

TEST_CASE("snapshot file names") {
  const SnapshotId id{{2021, 12}, AddressFamily::V6, 443, McVersion::V1};
  CHECK(id.file_name() == "2021-12_v6_443_1");
  CHECK(SnapshotId::parse_file_name(id.file_name()) == id);
  CHECK_FALSE(SnapshotId::parse_file_name("2021-12_v4_443").has_value());
  CHECK_FALSE(SnapshotId::parse_file_name("notes.txt").has_value());
}

TEST_CASE("merging keeps the strongest status of the month") {
  ScanSnapshot s{{{2022, 3}, AddressFamily::V4, 80, McVersion::V0}, {}};
  CHECK(s.merge({a4(1), "NoResponse", std::nullopt}));
  CHECK(s.merge({a4(1), "MirroredKey", std::nullopt}));
  CHECK(s.merge({a4(1), "PotentialCapable", Key{5}}));
  CHECK_FALSE(s.merge({a4(1), "NoMpCapable", std::nullopt}));
  CHECK(s.records.at(a4(1)).status == "PotentialCapable");
  CHECK_THROWS_AS(s.merge({*IpAddress::parse("::1"), "NoResponse", std::nullopt}), Error);
}

TEST_CASE("store ingestion is append-only and idempotent") {
  const auto dir = fresh_dir("ingest");
  SnapshotStore store(dir);
  const auto snap = snapshot({2022, 1}, 443, McVersion::V0, {{1, "PotentialCapable"}, {2, "NoMpCapable"}});
  CHECK(store.ingest(snap) == 2);
  const auto size_after_first = std::filesystem::file_size(dir / snap.id.file_name());
  CHECK(store.ingest(snap) == 0);
  CHECK(std::filesystem::file_size(dir / snap.id.file_name()) == size_after_first);

  CHECK(store.ingest(snapshot({2022, 1}, 443, McVersion::V0, {{2, "PotentialCapable"}, {3, "NoResponse"}})) == 2);
  const auto loaded = store.load(snap.id);
  REQUIRE(loaded.has_value());
  CHECK(loaded->records.size() == 3);
  CHECK(loaded->records.at(a4(2)).status == "PotentialCapable");
  CHECK(store.list() == std::vector<SnapshotId>{snap.id});
  CHECK_FALSE(store.load({{2022, 2}, AddressFamily::V4, 443, McVersion::V0}).has_value());
  std::filesystem::remove_all(dir);
}

TEST_CASE("consistency over a window of months") {
  SnapshotSeries series;
  series[{2022, 1}] = snapshot({2022, 1}, 443, McVersion::V0, {{1, "PotentialCapable"}, {2, "PotentialCapable"}, {3, "MirroredKey"}});
  series[{2022, 2}] = snapshot({2022, 2}, 443, McVersion::V0, {{1, "PotentialCapable"}, {2, "NoResponse"}, {3, "MirroredKey"}});
  series[{2022, 3}] = snapshot({2022, 3}, 443, McVersion::V0, {{1, "TrulyCapable"}, {2, "PotentialCapable"}, {3, "PotentialCapable"}});
  CHECK(consistent_hosts(series, 3, {2022, 3}) == set_of({1}));
  CHECK(consistent_hosts(series, 1, {2022, 3}) == set_of({1, 2, 3}));
  CHECK(eligible_for_path_probe(series, {2022, 3}) == set_of({1, 3}));
  CHECK_THROWS_AS(consistent_hosts(series, 4, {2022, 3}), Error);
  CHECK_THROWS_AS(consistent_hosts(series, 0, {2022, 3}), Error);
}

TEST_CASE("overlaps partition the union for every pair of subsets") {
  for (unsigned ma = 0; ma < 32; ++ma) {
    for (unsigned mb = 0; mb < 32; ++mb) {
      AddressSet a, b, u;
      for (unsigned i = 0; i < 5; ++i) {
        if (ma >> i & 1) a.insert(a4(i));
        if (mb >> i & 1) b.insert(a4(i));
      }
      u = a;
      u.insert(b.begin(), b.end());
      const Overlap o = port_overlap(a, b);
      CHECK(o.union_size() == u.size());
      AddressSet joined = o.both;
      joined.insert(o.only_a.begin(), o.only_a.end());
      joined.insert(o.only_b.begin(), o.only_b.end());
      CHECK(joined == u);
      for (const auto& x : o.both) CHECK((a.contains(x) && b.contains(x)));
      for (const auto& x : o.only_a) CHECK((a.contains(x) && !b.contains(x)));
      for (const auto& x : o.only_b) CHECK((!a.contains(x) && b.contains(x)));
      if (!u.empty()) {
        CHECK(o.fraction_both() + o.fraction_only_a() + o.fraction_only_b() == doctest::Approx(1.0));
      }
    }
  }
  CHECK(version_overlap({}, {}).fraction_both() == 0.0);
}

TEST_CASE("migration only follows hosts that supported one version the month before") {
  const VersionSupport prev{set_of({1, 2, 5, 6}), set_of({3, 4, 6})};
  const VersionSupport cur{set_of({1, 3, 6}), set_of({1, 2, 3, 6})};
  const MigrationReport r = migration_report(prev, cur);
  CHECK(r.added_v1_support == set_of({1}));
  CHECK(r.migrated_v0_to_v1 == set_of({2}));
  CHECK(r.added_v0_support == set_of({3}));
  CHECK(r.migrated_v1_to_v0.empty());
  // Host 6 supported both before and is ignored; host 5 vanished; host 4 vanished.
}

TEST_CASE("longest-prefix match with Unknown fallback") {
  const EnrichmentTable t = EnrichmentTable::parse(
      "10.0.0.0/8,100\n10.1.0.0/16,200\n10.1.2.0/24,300\n2001:db8::/32,400\n",
      "100,Big Org,US,5\n200,Mid Org,DE,-\n300,Small Org,FR,9\n");
  CHECK(enrich(*IpAddress::parse("10.1.2.3"), t).asn == 300u);
  CHECK(enrich(*IpAddress::parse("10.1.3.3"), t).organization == "Mid Org");
  CHECK(enrich(*IpAddress::parse("10.9.9.9"), t).country == "US");
  CHECK(enrich(*IpAddress::parse("2001:db8::1"), t).asn == 400u);
  CHECK(enrich(*IpAddress::parse("2001:db8::1"), t).organization == "Unknown");
  const Enrichment miss = enrich(*IpAddress::parse("192.0.2.1"), t);
  CHECK_FALSE(miss.asn.has_value());
  CHECK(miss.country == "Unknown");
  CHECK_THROWS_AS(enrich(*IpAddress::parse("10.0.0.1"), EnrichmentTable{}), Error);
  CHECK_THROWS_AS(EnrichmentTable::parse("10.0.0.0/8\n", ""), Error);
}

TEST_CASE("longest match agrees with a linear scan") {
  std::mt19937 rng(4);
  EnrichmentTable t;
  std::vector<std::pair<IpPrefix, std::uint32_t>> all;
  for (std::uint32_t i = 0; i < 300; ++i) {
    const unsigned len = 8 + rng() % 17;
    const IpPrefix p{IpAddress::v4(0x0A000000U | (rng() & 0x00FFFFFFU)).masked(len), len};
    t.add_prefix(p, i);
    all.emplace_back(p, i);
  }
  for (int q = 0; q < 2000; ++q) {
    const IpAddress addr = IpAddress::v4(0x0A000000U | (rng() & 0x00FFFFFFU));
    std::optional<std::uint32_t> best;
    unsigned best_len = 0;
    for (const auto& [p, asn] : all) {
      if (p.contains(addr) && (!best || p.length >= best_len)) {
        best = asn;
        best_len = p.length;
      }
    }
    CHECK(t.longest_match(addr) == best);
  }
}

TEST_CASE("top report ranks by unique addresses with ascending ties") {
  auto host = [](std::uint32_t i, std::uint16_t port, std::optional<std::uint32_t> asn, std::string cc) {
    Enrichment e;
    e.asn = asn;
    e.country = std::move(cc);
    return EnrichedHost{a4(i), port, e};
  };
  const std::vector<EnrichedHost> hosts{host(1, 80, 7, "US"),  host(1, 443, 7, "US"), host(2, 443, 7, "US"),
                                        host(3, 80, 5, "DE"),  host(4, 443, 5, "DE"), host(5, 443, 9, "AR"),
                                        host(6, 80, {}, "Unknown"), host(7, 80, {}, "Unknown")};
  const auto rows = top_report(hosts, GroupBy::Asn, 10);
  REQUIRE(rows.size() == 4);
  CHECK(rows[0].key == "5");
  CHECK(rows[0].unique_addresses == 2);
  CHECK(rows[1].key == "7");
  CHECK(rows[1].port80 == 1);
  CHECK(rows[1].port443 == 2);
  CHECK(rows[2].key == "Unknown");
  CHECK(rows[3].key == "9");
  CHECK(top_report(hosts, GroupBy::Asn, 1).size() == 1);
  const auto by_country = top_report(hosts, GroupBy::Country, 10);
  CHECK(by_country[0].key == "DE");
  CHECK(by_country[1].key == "US");
}

TEST_CASE("host records from scan and trace rows") {
  const HostRecord scan = host_record_from_fields({{"addr", "10.0.0.1"}, {"class", "PotentialCapable"}, {"key", "ff"}});
  CHECK(scan.sender_key == Key{0xff});
  const HostRecord trace = host_record_from_fields({{"addr", "10.0.0.1"}, {"verdict", "TrulyCapable"}, {"key", "-"}});
  CHECK(trace.status == "TrulyCapable");
  CHECK_FALSE(trace.sender_key.has_value());
  CHECK(host_record_from_fields(host_record_fields(scan)) == scan);
  CHECK_THROWS_AS(host_record_from_fields({{"addr", "nope"}, {"class", "x"}}), Error);
}
