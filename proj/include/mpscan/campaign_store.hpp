#pragma once

// Dated scan snapshots and the longitudinal analyses run over them.

#include <compare>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include "mpscan/ip.hpp"
#include "mpscan/option_codec.hpp"
#include "mpscan/record_io.hpp"

namespace mpscan {

struct YearMonth {
  int year = 1970;
  int month = 1;  // 1..12

  static std::optional<YearMonth> parse(std::string_view text);  // "YYYY-MM"
  std::string to_string() const;
  YearMonth prev() const noexcept;
  YearMonth next() const noexcept;

  friend auto operator<=>(const YearMonth&, const YearMonth&) = default;
};

/// Status labels shared with the probe engine and path inspector outputs.
bool is_positive_status(std::string_view status) noexcept;   // PotentialCapable / TrulyCapable
bool is_reachable_status(std::string_view status) noexcept;  // answered with MP_CAPABLE

struct HostRecord {
  IpAddress address;
  std::string status;
  std::optional<Key> sender_key;

  friend bool operator==(const HostRecord&, const HostRecord&) = default;
};

struct SnapshotId {
  YearMonth month;
  AddressFamily family = AddressFamily::V4;
  std::uint16_t port = 0;
  McVersion version = McVersion::V0;

  /// `YYYY-MM_family_port_version`, e.g. `2021-12_v4_443_0`.
  std::string file_name() const;
  static std::optional<SnapshotId> parse_file_name(std::string_view name);

  friend auto operator<=>(const SnapshotId&, const SnapshotId&) = default;
};

struct ScanSnapshot {
  SnapshotId id;
  std::map<IpAddress, HostRecord> records;

  /// Collapses scans within one month; a stronger status replaces a weaker one.
  /// Returns true when the stored record changed.
  bool merge(const HostRecord& record);

  friend bool operator==(const ScanSnapshot&, const ScanSnapshot&) = default;
};

/// Append-only directory of snapshot files.
class SnapshotStore {
 public:
  explicit SnapshotStore(std::filesystem::path dir);

  /// Appends records that change the stored state; re-ingesting is a no-op. Returns lines appended.
  std::size_t ingest(const ScanSnapshot& snapshot);
  std::optional<ScanSnapshot> load(const SnapshotId& id) const;
  std::vector<SnapshotId> list() const;
  std::map<YearMonth, ScanSnapshot> series(AddressFamily family, std::uint16_t port, McVersion version) const;

 private:
  std::filesystem::path dir_;
};

using AddressSet = std::set<IpAddress>;
using SnapshotSeries = std::map<YearMonth, ScanSnapshot>;

inline constexpr int kDefaultWindowMonths = 3;

/// Hosts positive in every one of the `window` months ending at `at`.
AddressSet consistent_hosts(const SnapshotSeries& series, int window, YearMonth at);

/// Reachable in all `window` months and PotentialCapable in at least one.
AddressSet eligible_for_path_probe(const SnapshotSeries& series, YearMonth at, int window = kDefaultWindowMonths);

struct Overlap {
  AddressSet both;
  AddressSet only_a;
  AddressSet only_b;

  std::size_t union_size() const noexcept { return both.size() + only_a.size() + only_b.size(); }
  double fraction_both() const noexcept;
  double fraction_only_a() const noexcept;
  double fraction_only_b() const noexcept;
};

/// A = port 80 hosts, B = port 443 hosts.
Overlap port_overlap(const AddressSet& port80, const AddressSet& port443);
/// A = v0 hosts, B = v1 hosts.
Overlap version_overlap(const AddressSet& v0, const AddressSet& v1);

struct VersionSupport {
  AddressSet v0;
  AddressSet v1;
};

struct MigrationReport {
  AddressSet added_v1_support;
  AddressSet migrated_v0_to_v1;
  AddressSet added_v0_support;
  AddressSet migrated_v1_to_v0;
};

MigrationReport migration_report(const VersionSupport& prev, const VersionSupport& current);

struct AsnInfo {
  std::uint32_t asn = 0;
  std::string organization;
  std::string country;
  std::optional<std::uint32_t> rank;
};

struct Enrichment {
  std::optional<std::uint32_t> asn;
  std::string organization = "Unknown";
  std::string country = "Unknown";
  std::optional<std::uint32_t> rank;
};

class EnrichmentTable {
 public:
  void add_prefix(const IpPrefix& prefix, std::uint32_t asn);
  void add_asn(AsnInfo info);
  bool empty() const noexcept { return prefix_count_ == 0; }

  std::optional<std::uint32_t> longest_match(const IpAddress& address) const;
  const AsnInfo* asn_info(std::uint32_t asn) const;

  /// `prefix,asn` lines and `asn,org,country,rank` lines.
  static EnrichmentTable parse(std::string_view prefixes, std::string_view asns);
  static EnrichmentTable load(const std::string& prefix_path, const std::string& asn_path);

 private:
  // Per family, per prefix length: masked network -> ASN.
  std::array<std::vector<std::unordered_map<IpAddress, std::uint32_t>>, 2> by_length_{
      std::vector<std::unordered_map<IpAddress, std::uint32_t>>(33),
      std::vector<std::unordered_map<IpAddress, std::uint32_t>>(129)};
  std::map<std::uint32_t, AsnInfo> asns_;
  std::size_t prefix_count_ = 0;
};

/// Longest-prefix match with Unknown fallback; MissingTable when nothing is loaded.
Enrichment enrich(const IpAddress& address, const EnrichmentTable& table);

struct EnrichedHost {
  IpAddress address;
  std::uint16_t port = 0;
  Enrichment info;
};

enum class GroupBy { Asn, Country };

struct TopRow {
  std::string key;  // ASN digits or country code
  Enrichment info;
  std::size_t port80 = 0;
  std::size_t port443 = 0;
  std::size_t unique_addresses = 0;
};

/// Groups by unique addresses descending; ties by ascending ASN or country code.
std::vector<TopRow> top_report(const std::vector<EnrichedHost>& hosts, GroupBy group_by, std::size_t k);

/// Builds host records from probe-engine or path-inspector output rows.
HostRecord host_record_from_fields(const Fields& fields);
Fields host_record_fields(const HostRecord& record);

}  // namespace mpscan
