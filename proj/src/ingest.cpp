#include "ppodc/ingest.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <random>
#include <sstream>

#include "ppodc/errors.hpp"

namespace ppodc::ingest {

namespace {

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_row(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

bool is_missing(const std::string& cell) {
  return cell.empty() || cell == "?" || cell == "NA" || cell == "NaN" || cell == "nan";
}

bool parse_double(const std::string& cell, double& out) {
  const char* begin = cell.c_str();
  char* end = nullptr;
  errno = 0;
  out = std::strtod(begin, &end);
  return end != begin && *end == '\0' && errno == 0 && std::isfinite(out);
}

}  // namespace

std::vector<std::int64_t> scale_column(const std::vector<double>& column, std::int64_t v_max) {
  std::vector<std::int64_t> out(column.size(), 0);
  if (column.empty()) return out;
  auto [lo, hi] = std::minmax_element(column.begin(), column.end());
  double range = *hi - *lo;
  if (range <= 0) return out;
  for (std::size_t i = 0; i < column.size(); ++i) {
    // nearbyint under the default rounding mode rounds half to even.
    double v = std::nearbyint((column[i] - *lo) / range * static_cast<double>(v_max));
    out[i] = std::clamp<std::int64_t>(static_cast<std::int64_t>(v), 0, v_max);
  }
  return out;
}

IngestResult ingest_csv(std::istream& in, std::int64_t v_max) {
  if (v_max < 1) throw ConfigError("v_max must be positive");
  IngestResult res;
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto cells = split_row(line);
    if (rows.empty() && !res.had_header && res.rows_read == 0) {
      bool any_numeric = false;
      double tmp;
      for (const auto& c : cells) any_numeric = any_numeric || parse_double(c, tmp);
      if (!any_numeric) {
        res.had_header = true;
        width = cells.size();
        continue;
      }
    }
    ++res.rows_read;
    if (width == 0) width = cells.size();
    if (cells.size() < width) {
      ++res.rows_dropped;
      continue;
    }
    if (cells.size() > width)
      throw IngestError("row " + std::to_string(line_no) + ": expected " + std::to_string(width) +
                        " columns, found " + std::to_string(cells.size()));
    if (std::any_of(cells.begin(), cells.end(), is_missing)) {
      ++res.rows_dropped;
      continue;
    }
    std::vector<double> row(width);
    for (std::size_t c = 0; c < width; ++c) {
      if (!parse_double(cells[c], row[c]))
        throw IngestError("row " + std::to_string(line_no) + ", column " + std::to_string(c + 1) +
                          ": non-numeric value '" + cells[c] + "'");
    }
    rows.push_back(std::move(row));
  }
  res.records.assign(rows.size(), PlainRecord{});
  for (std::size_t c = 0; c < width; ++c) {
    std::vector<double> column;
    column.reserve(rows.size());
    for (const auto& r : rows) column.push_back(r[c]);
    auto scaled = scale_column(column, v_max);
    for (std::size_t i = 0; i < rows.size(); ++i) res.records[i].attrs.push_back(scaled[i]);
  }
  return res;
}

IngestResult ingest_file(const std::filesystem::path& path, std::int64_t v_max) {
  std::ifstream in(path);
  if (!in) throw IngestError("cannot open " + path.string());
  return ingest_csv(in, v_max);
}

std::vector<PlainRecord> synthetic(std::size_t m, std::size_t l, std::int64_t v_max,
                                   std::uint64_t seed, std::size_t groups) {
  if (groups == 0) groups = 1;
  std::mt19937_64 gen(seed);
  std::uniform_int_distribution<std::int64_t> uniform(0, v_max);
  std::vector<std::vector<double>> centres(groups, std::vector<double>(l));
  for (auto& c : centres)
    for (auto& v : c) v = static_cast<double>(uniform(gen));
  std::normal_distribution<double> noise(0.0, static_cast<double>(v_max) / 20.0);
  std::vector<PlainRecord> out(m);
  for (std::size_t i = 0; i < m; ++i) {
    const auto& c = centres[i % groups];
    for (std::size_t s = 0; s < l; ++s) {
      double v = std::round(c[s] + noise(gen));
      out[i].attrs.push_back(std::clamp<std::int64_t>(static_cast<std::int64_t>(v), 0, v_max));
    }
  }
  return out;
}

std::vector<std::vector<PlainRecord>> partition(const std::vector<PlainRecord>& records,
                                                std::size_t n_users) {
  if (n_users == 0) throw ConfigError("at least one user required");
  std::vector<std::vector<PlainRecord>> out(n_users);
  std::size_t pos = 0;
  for (std::size_t j = 0; j < n_users; ++j) {
    std::size_t take = records.size() / n_users + (j < records.size() % n_users ? 1 : 0);
    out[j].assign(records.begin() + static_cast<std::ptrdiff_t>(pos),
                  records.begin() + static_cast<std::ptrdiff_t>(pos + take));
    pos += take;
  }
  return out;
}

std::vector<PlainRecord> concat(const std::vector<std::vector<PlainRecord>>& users) {
  std::vector<PlainRecord> out;
  for (const auto& u : users) out.insert(out.end(), u.begin(), u.end());
  return out;
}

void write_records_csv(const std::vector<PlainRecord>& records, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IngestError("cannot write " + path.string());
  for (const auto& r : records) {
    for (std::size_t s = 0; s < r.dim(); ++s) out << (s ? "," : "") << r.attrs[s];
    out << '\n';
  }
}

}  // namespace ppodc::ingest
