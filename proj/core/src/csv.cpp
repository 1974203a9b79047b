#include "eigoverlap/csv.hpp"

#include <fstream>
#include <sstream>
#include <system_error>

#include "eigoverlap/error.hpp"
#include "text_util.hpp"

namespace eigoverlap {

namespace detail {

void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + tmp.string() + " for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw Error("write failed: " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw Error("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace detail

void CsvTable::set_meta(const std::string& key, const std::string& value) {
  for (auto& [k, v] : metadata) {
    if (k == key) {
      v = value;
      return;
    }
  }
  metadata.emplace_back(key, value);
}

std::optional<std::string> CsvTable::meta(const std::string& key) const {
  for (const auto& [k, v] : metadata) {
    if (k == key) return v;
  }
  return std::nullopt;
}

std::size_t CsvTable::column_index(const std::string& name) const {
  for (std::size_t k = 0; k < columns.size(); ++k) {
    if (columns[k] == name) return k;
  }
  throw ParseError("missing column '" + name + "'");
}

std::vector<double> CsvTable::numeric_column(const std::string& name) const {
  const std::size_t col = column_index(name);
  std::vector<double> out;
  out.reserve(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    double v = 0.0;
    if (col >= rows[r].size() || !detail::parse_double(rows[r][col], v)) {
      throw ParseError("non-numeric value in column '" + name + "'", static_cast<int>(r + 1));
    }
    out.push_back(v);
  }
  return out;
}

std::string format_csv(const CsvTable& table) {
  std::string out;
  for (const auto& [k, v] : table.metadata) out += "# " + k + "=" + v + "\n";
  for (const auto& c : table.comments) out += "# " + c + "\n";
  auto join = [&out](const std::vector<std::string>& fields) {
    for (std::size_t k = 0; k < fields.size(); ++k) {
      if (k) out += ',';
      out += fields[k];
    }
    out += '\n';
  };
  join(table.columns);
  for (const auto& row : table.rows) join(row);
  return out;
}

CsvTable parse_csv(const std::string& text) {
  CsvTable table;
  bool have_header = false;
  int line_no = 0;
  for (std::string_view line : detail::split_lines(text)) {
    ++line_no;
    line = detail::trim(line);
    if (line.empty()) continue;
    if (line.front() == '#') {
      std::string_view body = detail::trim(line.substr(1));
      const auto eq = body.find('=');
      const auto space = body.find(' ');
      if (eq != std::string_view::npos && (space == std::string_view::npos || space > eq)) {
        table.set_meta(std::string(body.substr(0, eq)), std::string(body.substr(eq + 1)));
      } else {
        table.comments.emplace_back(body);
      }
      continue;
    }
    std::vector<std::string> fields;
    for (auto f : detail::split(line, ',')) fields.emplace_back(detail::trim(f));
    if (!have_header) {
      table.columns = std::move(fields);
      have_header = true;
      continue;
    }
    if (fields.size() != table.columns.size()) {
      throw ParseError("expected " + std::to_string(table.columns.size()) + " fields, got " +
                           std::to_string(fields.size()),
                       line_no);
    }
    table.rows.push_back(std::move(fields));
  }
  if (!have_header) throw ParseError("CSV has no header row");
  return table;
}

void write_csv(const std::filesystem::path& path, const CsvTable& table) {
  detail::write_file_atomic(path, format_csv(table));
}

CsvTable read_csv(const std::filesystem::path& path) {
  return parse_csv(detail::read_file(path));
}

}  // namespace eigoverlap
