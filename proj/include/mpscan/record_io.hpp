#pragma once

// Line-delimited structured records: `key=value` text (default), CSV, or JSON lines.

#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace mpscan {

enum class RecordFormat { Text, Csv, Jsonl };

std::optional<RecordFormat> parse_record_format(std::string_view name);

using Fields = std::vector<std::pair<std::string, std::string>>;

class RecordWriter {
 public:
  RecordWriter(std::ostream& out, RecordFormat format) : out_(out), format_(format) {}

  /// CSV takes its header from the first record; later records must share the key order.
  void write(const Fields& fields);

 private:
  std::ostream& out_;
  RecordFormat format_;
  bool header_written_ = false;
};

/// Reads text or JSON-lines records; CSV is recognized by a header line without '=' or '{'.
std::vector<Fields> read_records(std::string_view text);

const std::string* find_field(const Fields& fields, std::string_view key);
std::string require_field(const Fields& fields, std::string_view key);

}  // namespace mpscan
