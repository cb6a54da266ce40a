#include "mpscan/record_io.hpp"

#include <cctype>
#include <json.hpp>
#include <ostream>
#include <sstream>

#include "mpscan/error.hpp"

namespace mpscan {

std::optional<RecordFormat> parse_record_format(std::string_view name) {
  if (name == "text") return RecordFormat::Text;
  if (name == "csv") return RecordFormat::Csv;
  if (name == "jsonl") return RecordFormat::Jsonl;
  return std::nullopt;
}

namespace {

bool needs_escape(char c) { return c == ' ' || c == '=' || c == '%' || c == '\n' || c == '\t' || c == '\r'; }

std::string escape_text(std::string_view v) {
  std::string out;
  for (char c : v) {
    if (needs_escape(c)) {
      static constexpr char hex[] = "0123456789ABCDEF";
      out += '%';
      out += hex[(static_cast<unsigned char>(c) >> 4) & 0xF];
      out += hex[static_cast<unsigned char>(c) & 0xF];
    } else {
      out += c;
    }
  }
  return out;
}

std::string unescape_text(std::string_view v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (v[i] == '%' && i + 2 < v.size() && std::isxdigit(static_cast<unsigned char>(v[i + 1])) &&
        std::isxdigit(static_cast<unsigned char>(v[i + 2]))) {
      out += static_cast<char>(std::stoi(std::string(v.substr(i + 1, 2)), nullptr, 16));
      i += 2;
    } else {
      out += v[i];
    }
  }
  return out;
}

std::string csv_quote(std::string_view v) {
  if (v.find_first_of(",\"\n") == std::string_view::npos) return std::string(v);
  std::string out = "\"";
  for (char c : v) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

std::vector<std::string> csv_split(std::string_view line) {
  std::vector<std::string> cells(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cells.back() += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cells.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      cells.emplace_back();
    } else {
      cells.back() += c;
    }
  }
  return cells;
}

}  // namespace

void RecordWriter::write(const Fields& fields) {
  switch (format_) {
    case RecordFormat::Text: {
      bool first = true;
      for (const auto& [k, v] : fields) {
        if (!first) out_ << ' ';
        first = false;
        out_ << k << '=' << escape_text(v);
      }
      out_ << '\n';
      break;
    }
    case RecordFormat::Csv: {
      if (!header_written_) {
        for (std::size_t i = 0; i < fields.size(); ++i) out_ << (i ? "," : "") << csv_quote(fields[i].first);
        out_ << '\n';
        header_written_ = true;
      }
      for (std::size_t i = 0; i < fields.size(); ++i) out_ << (i ? "," : "") << csv_quote(fields[i].second);
      out_ << '\n';
      break;
    }
    case RecordFormat::Jsonl: {
      nlohmann::ordered_json j = nlohmann::ordered_json::object();
      for (const auto& [k, v] : fields) j[k] = v;
      out_ << j.dump() << '\n';
      break;
    }
  }
}

std::vector<Fields> read_records(std::string_view text) {
  std::vector<Fields> out;
  std::istringstream in{std::string(text)};
  std::string line;
  std::optional<std::vector<std::string>> csv_header;
  bool first_data = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    if (first_data && line[0] != '{' && line.find('=') == std::string::npos) {
      csv_header = csv_split(line);
      first_data = false;
      continue;
    }
    first_data = false;
    Fields f;
    if (csv_header) {
      auto cells = csv_split(line);
      if (cells.size() != csv_header->size()) throw Error(ErrorCode::ParseError, "CSV row width mismatch");
      for (std::size_t i = 0; i < cells.size(); ++i) f.emplace_back((*csv_header)[i], cells[i]);
    } else if (line[0] == '{') {
      nlohmann::ordered_json j;
      try {
        j = nlohmann::ordered_json::parse(line);
      } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ParseError, e.what());
      }
      for (auto it = j.begin(); it != j.end(); ++it) {
        f.emplace_back(it.key(), it.value().is_string() ? it.value().get<std::string>() : it.value().dump());
      }
    } else {
      std::istringstream words(line);
      for (std::string w; words >> w;) {
        const auto eq = w.find('=');
        if (eq == std::string::npos) throw Error(ErrorCode::ParseError, "field without '=': " + w);
        f.emplace_back(w.substr(0, eq), unescape_text(std::string_view(w).substr(eq + 1)));
      }
    }
    out.push_back(std::move(f));
  }
  return out;
}

const std::string* find_field(const Fields& fields, std::string_view key) {
  for (const auto& [k, v] : fields) {
    if (k == key) return &v;
  }
  return nullptr;
}

std::string require_field(const Fields& fields, std::string_view key) {
  if (const auto* v = find_field(fields, key)) return *v;
  throw Error(ErrorCode::ParseError, "record lacks field '" + std::string(key) + "'");
}

}  // namespace mpscan
