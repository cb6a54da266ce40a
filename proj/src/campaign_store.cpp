#include "mpscan/campaign_store.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>

#include "mpscan/error.hpp"

namespace mpscan {

std::optional<YearMonth> YearMonth::parse(std::string_view text) {
  if (text.size() != 7 || text[4] != '-') return std::nullopt;
  YearMonth ym;
  auto [p1, e1] = std::from_chars(text.data(), text.data() + 4, ym.year);
  auto [p2, e2] = std::from_chars(text.data() + 5, text.data() + 7, ym.month);
  if (e1 != std::errc{} || e2 != std::errc{} || p1 != text.data() + 4 || p2 != text.data() + 7) return std::nullopt;
  if (ym.month < 1 || ym.month > 12) return std::nullopt;
  return ym;
}

std::string YearMonth::to_string() const {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02d", year, month);
  return buf;
}

YearMonth YearMonth::prev() const noexcept { return month == 1 ? YearMonth{year - 1, 12} : YearMonth{year, month - 1}; }
YearMonth YearMonth::next() const noexcept { return month == 12 ? YearMonth{year + 1, 1} : YearMonth{year, month + 1}; }

bool is_positive_status(std::string_view s) noexcept { return s == "PotentialCapable" || s == "TrulyCapable"; }

bool is_reachable_status(std::string_view s) noexcept {
  return is_positive_status(s) || s == "MirroredKey" || s == "VersionMismatch" || s == "MiddleboxAffected";
}

namespace {

int status_rank(std::string_view s) {
  if (is_positive_status(s)) return 3;
  if (is_reachable_status(s)) return 2;
  if (s == "NoMpCapable" || s == "NotCapable") return 1;
  return 0;
}

}  // namespace

std::string SnapshotId::file_name() const {
  return month.to_string() + "_" + std::string(to_string(family)) + "_" + std::to_string(port) + "_" +
         std::to_string(to_int(version));
}

std::optional<SnapshotId> SnapshotId::parse_file_name(std::string_view name) {
  std::vector<std::string_view> parts;
  while (true) {
    const auto u = name.find('_');
    parts.push_back(name.substr(0, u));
    if (u == std::string_view::npos) break;
    name.remove_prefix(u + 1);
  }
  if (parts.size() != 4) return std::nullopt;
  SnapshotId id;
  auto month = YearMonth::parse(parts[0]);
  auto family = parse_family(parts[1]);
  auto version = parse_version(parts[3]);
  unsigned port = 0;
  auto [ptr, ec] = std::from_chars(parts[2].data(), parts[2].data() + parts[2].size(), port);
  if (!month || !family || !version || ec != std::errc{} || ptr != parts[2].data() + parts[2].size() || port > 65535) {
    return std::nullopt;
  }
  return SnapshotId{*month, *family, static_cast<std::uint16_t>(port), *version};
}

bool ScanSnapshot::merge(const HostRecord& record) {
  if (record.address.family() != id.family) {
    throw Error(ErrorCode::InvalidArgument, "record family does not match snapshot " + id.file_name());
  }
  auto [it, inserted] = records.try_emplace(record.address, record);
  if (inserted) return true;
  if (status_rank(record.status) > status_rank(it->second.status)) {
    it->second = record;
    return true;
  }
  return false;
}

HostRecord host_record_from_fields(const Fields& f) {
  HostRecord r;
  auto addr = IpAddress::parse(require_field(f, "addr"));
  if (!addr) throw Error(ErrorCode::ParseError, "bad address in record");
  r.address = *addr;
  if (const auto* c = find_field(f, "class")) {
    r.status = *c;
  } else {
    r.status = require_field(f, "verdict");
  }
  if (const auto* k = find_field(f, "key"); k && !k->empty() && *k != "-") {
    auto key = parse_key(*k);
    if (!key) throw Error(ErrorCode::ParseError, "bad key '" + *k + "'");
    r.sender_key = key;
  }
  return r;
}

Fields host_record_fields(const HostRecord& r) {
  return {{"addr", r.address.to_string()}, {"class", r.status}, {"key", r.sender_key ? to_hex(*r.sender_key) : "-"}};
}

SnapshotStore::SnapshotStore(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::error_code ec;
  std::filesystem::create_directories(dir_, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create store " + dir_.string() + ": " + ec.message());
}

std::optional<ScanSnapshot> SnapshotStore::load(const SnapshotId& id) const {
  const auto path = dir_ / id.file_name();
  if (!std::filesystem::exists(path)) return std::nullopt;
  ScanSnapshot snap{id, {}};
  for (const auto& fields : read_records(read_text_file(path.string()))) snap.merge(host_record_from_fields(fields));
  return snap;
}

std::size_t SnapshotStore::ingest(const ScanSnapshot& snapshot) {
  ScanSnapshot current = load(snapshot.id).value_or(ScanSnapshot{snapshot.id, {}});
  const auto path = dir_ / snapshot.id.file_name();
  std::ofstream out(path, std::ios::app);
  if (!out) throw Error(ErrorCode::IoError, "cannot append to " + path.string());
  RecordWriter writer(out, RecordFormat::Text);
  std::size_t appended = 0;
  for (const auto& [addr, rec] : snapshot.records) {
    if (current.merge(rec)) {
      writer.write(host_record_fields(rec));
      ++appended;
    }
  }
  return appended;
}

std::vector<SnapshotId> SnapshotStore::list() const {
  std::vector<SnapshotId> ids;
  for (const auto& entry : std::filesystem::directory_iterator(dir_)) {
    if (auto id = SnapshotId::parse_file_name(entry.path().filename().string())) ids.push_back(*id);
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

SnapshotSeries SnapshotStore::series(AddressFamily family, std::uint16_t port, McVersion version) const {
  SnapshotSeries out;
  for (const auto& id : list()) {
    if (id.family == family && id.port == port && id.version == version) out.emplace(id.month, *load(id));
  }
  return out;
}

namespace {

std::vector<const ScanSnapshot*> window_of(const SnapshotSeries& series, int window, YearMonth at) {
  if (window < 1) throw Error(ErrorCode::InvalidArgument, "window must be at least one month");
  std::vector<const ScanSnapshot*> out;
  YearMonth m = at;
  for (int i = 0; i < window; ++i, m = m.prev()) {
    auto it = series.find(m);
    if (it == series.end()) throw Error(ErrorCode::InsufficientHistory, "no snapshot for " + m.to_string());
    out.push_back(&it->second);
  }
  return out;
}

template <typename Pred>
AddressSet present_in_all(const std::vector<const ScanSnapshot*>& months, Pred pred) {
  AddressSet out;
  for (const auto& [addr, rec] : months.front()->records) {
    const bool everywhere = std::all_of(months.begin(), months.end(), [&](const ScanSnapshot* s) {
      auto it = s->records.find(addr);
      return it != s->records.end() && pred(it->second.status);
    });
    if (everywhere) out.insert(addr);
  }
  return out;
}

double ratio(std::size_t part, std::size_t whole) {
  return whole == 0 ? 0.0 : static_cast<double>(part) / static_cast<double>(whole);
}

Overlap partition(const AddressSet& a, const AddressSet& b) {
  Overlap o;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::inserter(o.both, o.both.end()));
  std::set_difference(a.begin(), a.end(), b.begin(), b.end(), std::inserter(o.only_a, o.only_a.end()));
  std::set_difference(b.begin(), b.end(), a.begin(), a.end(), std::inserter(o.only_b, o.only_b.end()));
  return o;
}

}  // namespace

AddressSet consistent_hosts(const SnapshotSeries& series, int window, YearMonth at) {
  if (series.empty()) throw Error(ErrorCode::InsufficientHistory, "no snapshots");
  return present_in_all(window_of(series, window, at), is_positive_status);
}

AddressSet eligible_for_path_probe(const SnapshotSeries& series, YearMonth at, int window) {
  if (series.empty()) throw Error(ErrorCode::InsufficientHistory, "no snapshots");
  const auto months = window_of(series, window, at);
  AddressSet out;
  for (const auto& addr : present_in_all(months, is_reachable_status)) {
    const bool fresh_key_once = std::any_of(months.begin(), months.end(), [&](const ScanSnapshot* s) {
      return s->records.at(addr).status == "PotentialCapable";
    });
    if (fresh_key_once) out.insert(addr);
  }
  return out;
}

double Overlap::fraction_both() const noexcept { return ratio(both.size(), union_size()); }
double Overlap::fraction_only_a() const noexcept { return ratio(only_a.size(), union_size()); }
double Overlap::fraction_only_b() const noexcept { return ratio(only_b.size(), union_size()); }

Overlap port_overlap(const AddressSet& port80, const AddressSet& port443) { return partition(port80, port443); }
Overlap version_overlap(const AddressSet& v0, const AddressSet& v1) { return partition(v0, v1); }

MigrationReport migration_report(const VersionSupport& prev, const VersionSupport& cur) {
  const Overlap before = version_overlap(prev.v0, prev.v1);
  const Overlap after = version_overlap(cur.v0, cur.v1);
  MigrationReport r;
  for (const auto& a : before.only_a) {
    if (after.both.contains(a)) r.added_v1_support.insert(a);
    if (after.only_b.contains(a)) r.migrated_v0_to_v1.insert(a);
  }
  for (const auto& a : before.only_b) {
    if (after.both.contains(a)) r.added_v0_support.insert(a);
    if (after.only_a.contains(a)) r.migrated_v1_to_v0.insert(a);
  }
  return r;
}

void EnrichmentTable::add_prefix(const IpPrefix& prefix, std::uint32_t asn) {
  auto& maps = by_length_[prefix.network.is_v4() ? 0 : 1];
  maps.at(prefix.length)[prefix.network.masked(prefix.length)] = asn;
  ++prefix_count_;
}

void EnrichmentTable::add_asn(AsnInfo info) {
  const auto asn = info.asn;
  asns_[asn] = std::move(info);
}

std::optional<std::uint32_t> EnrichmentTable::longest_match(const IpAddress& address) const {
  const auto& maps = by_length_[address.is_v4() ? 0 : 1];
  for (std::size_t len = maps.size(); len-- > 0;) {
    if (maps[len].empty()) continue;
    if (auto it = maps[len].find(address.masked(static_cast<unsigned>(len))); it != maps[len].end()) return it->second;
  }
  return std::nullopt;
}

const AsnInfo* EnrichmentTable::asn_info(std::uint32_t asn) const {
  auto it = asns_.find(asn);
  return it == asns_.end() ? nullptr : &it->second;
}

namespace {

std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> out;
  while (true) {
    const auto c = line.find(',');
    out.emplace_back(trim(line.substr(0, c)));
    if (c == std::string_view::npos) break;
    line.remove_prefix(c + 1);
  }
  return out;
}

std::uint32_t parse_u32(std::string_view s, const char* what) {
  if (s.starts_with("AS") || s.starts_with("as")) s.remove_prefix(2);
  std::uint32_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    throw Error(ErrorCode::ParseError, std::string("bad ") + what + " '" + std::string(s) + "'");
  }
  return v;
}

template <typename Fn>
void each_data_line(std::string_view text, Fn&& fn) {
  while (!text.empty()) {
    const auto nl = text.find('\n');
    auto line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (auto h = line.find('#'); h != std::string_view::npos) line = line.substr(0, h);
    line = trim(line);
    if (!line.empty()) fn(line);
  }
}

}  // namespace

EnrichmentTable EnrichmentTable::parse(std::string_view prefixes, std::string_view asns) {
  EnrichmentTable t;
  each_data_line(prefixes, [&](std::string_view line) {
    const auto cells = split_csv_line(line);
    if (cells.size() != 2) throw Error(ErrorCode::ParseError, "expected prefix,asn: " + std::string(line));
    auto prefix = IpPrefix::parse(cells[0]);
    if (!prefix) throw Error(ErrorCode::ParseError, "bad prefix '" + cells[0] + "'");
    t.add_prefix(*prefix, parse_u32(cells[1], "ASN"));
  });
  each_data_line(asns, [&](std::string_view line) {
    const auto cells = split_csv_line(line);
    if (cells.size() != 4) throw Error(ErrorCode::ParseError, "expected asn,org,country,rank: " + std::string(line));
    AsnInfo info{parse_u32(cells[0], "ASN"), cells[1], cells[2], std::nullopt};
    if (!cells[3].empty() && cells[3] != "-") info.rank = parse_u32(cells[3], "rank");
    t.add_asn(std::move(info));
  });
  return t;
}

EnrichmentTable EnrichmentTable::load(const std::string& prefix_path, const std::string& asn_path) {
  if (prefix_path.empty()) throw Error(ErrorCode::MissingTable, "no prefix-to-ASN file given");
  return parse(read_text_file(prefix_path), asn_path.empty() ? std::string{} : read_text_file(asn_path));
}

Enrichment enrich(const IpAddress& address, const EnrichmentTable& table) {
  if (table.empty()) throw Error(ErrorCode::MissingTable, "enrichment table not loaded");
  Enrichment e;
  e.asn = table.longest_match(address);
  if (e.asn) {
    if (const auto* info = table.asn_info(*e.asn)) {
      e.organization = info->organization;
      e.country = info->country;
      e.rank = info->rank;
    }
  }
  return e;
}

std::vector<TopRow> top_report(const std::vector<EnrichedHost>& hosts, GroupBy group_by, std::size_t k) {
  struct Acc {
    Enrichment info;
    std::set<IpAddress> all, p80, p443;
  };
  // Sort key: (is_unknown, numeric ASN or country) so ties resolve ascending.
  using GroupKey = std::pair<bool, std::variant<std::uint32_t, std::string>>;
  std::map<GroupKey, Acc> groups;
  for (const auto& h : hosts) {
    GroupKey key;
    if (group_by == GroupBy::Asn) {
      key = {!h.info.asn.has_value(), h.info.asn.value_or(0)};
    } else {
      key = {h.info.country == "Unknown", h.info.country};
    }
    auto& acc = groups[key];
    acc.info = h.info;
    acc.all.insert(h.address);
    if (h.port == 80) acc.p80.insert(h.address);
    if (h.port == 443) acc.p443.insert(h.address);
  }
  std::vector<std::pair<GroupKey, const Acc*>> ordered;
  for (const auto& [key, acc] : groups) ordered.emplace_back(key, &acc);
  std::stable_sort(ordered.begin(), ordered.end(),
                   [](const auto& a, const auto& b) { return a.second->all.size() > b.second->all.size(); });
  std::vector<TopRow> rows;
  for (const auto& [key, acc] : ordered) {
    if (rows.size() == k) break;
    TopRow row;
    if (group_by == GroupBy::Asn) {
      row.key = key.first ? "Unknown" : std::to_string(std::get<std::uint32_t>(key.second));
    } else {
      row.key = std::get<std::string>(key.second);
    }
    row.info = acc->info;
    if (group_by == GroupBy::Country) {
      row.info.asn.reset();
      row.info.organization.clear();
      row.info.rank.reset();
    }
    row.port80 = acc->p80.size();
    row.port443 = acc->p443.size();
    row.unique_addresses = acc->all.size();
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace mpscan
