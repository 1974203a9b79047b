#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace eigoverlap {

/// A comma-separated table with leading `#` lines.
///
/// Metadata lines are written as `# key=value`; free comments as `# text`.
/// Fields never contain commas, so no quoting is done.
struct CsvTable {
  std::vector<std::pair<std::string, std::string>> metadata;
  std::vector<std::string> comments;
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  void set_meta(const std::string& key, const std::string& value);
  std::optional<std::string> meta(const std::string& key) const;

  std::size_t column_index(const std::string& name) const;  // ParseError if absent
  std::vector<double> numeric_column(const std::string& name) const;
};

std::string format_csv(const CsvTable& table);
CsvTable parse_csv(const std::string& text);

/// Atomic: the table is written to a sibling temp file and renamed.
void write_csv(const std::filesystem::path& path, const CsvTable& table);
CsvTable read_csv(const std::filesystem::path& path);

}  // namespace eigoverlap
