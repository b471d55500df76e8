#include "lcirt/data.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "lcirt/errors.hpp"

namespace lcirt {

void ResponseDataset::check() const {
  if (r < 1 || static_cast<int>(categories.size()) != r) {
    throw UsageError("dataset: categories must list one count per item");
  }
  if (patterns.size() != counts.size()) {
    throw UsageError("dataset: patterns and counts misaligned");
  }
  int total = 0;
  for (std::size_t i = 0; i < patterns.size(); ++i) {
    if (static_cast<int>(patterns[i].size()) != r) {
      throw UsageError("dataset: pattern " + std::to_string(i) +
                       " has wrong length");
    }
    if (counts[i] <= 0) {
      throw UsageError("dataset: pattern " + std::to_string(i) +
                       " has non-positive count");
    }
    if (i > 0 && !(patterns[i - 1] < patterns[i])) {
      throw UsageError("dataset: patterns not in sorted distinct order");
    }
    for (int j = 0; j < r; ++j) {
      if (patterns[i][j] < 0 || patterns[i][j] >= categories[j]) {
        throw UsageError("dataset: pattern " + std::to_string(i) + " item " +
                         std::to_string(j + 1) + " out of range");
      }
    }
    total += counts[i];
  }
  if (total != n) throw UsageError("dataset: counts do not sum to n");
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) {
    s.remove_prefix(1);
  }
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) {
    s.remove_suffix(1);
  }
  return s;
}

bool is_missing(std::string_view cell) {
  return cell.empty() || cell == "NA" || cell == "na";
}

}  // namespace

RawTable load_csv_rows(const std::string& path, bool has_header,
                       bool drop_incomplete) {
  std::ifstream in(path);
  if (!in) throw FileNotFoundError("cannot open file: " + path);

  RawTable table;
  std::string line;
  int line_no = 0;
  int data_row = 0;
  int width = -1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (has_header && line_no == 1) continue;
    if (trim(line).empty()) continue;
    ++data_row;

    std::vector<int> row;
    bool incomplete = false;
    std::string_view rest = line;
    int col = 0;
    while (true) {
      ++col;
      const std::size_t comma = rest.find(',');
      const std::string_view cell =
          trim(comma == std::string_view::npos ? rest : rest.substr(0, comma));
      if (is_missing(cell)) {
        if (drop_incomplete) {
          incomplete = true;
        } else {
          throw ParseError("row " + std::to_string(data_row) + ", column " +
                           std::to_string(col) + ": missing value");
        }
      } else {
        int value = 0;
        const auto [ptr, ec] =
            std::from_chars(cell.data(), cell.data() + cell.size(), value);
        if (ec != std::errc() || ptr != cell.data() + cell.size()) {
          throw ParseError("row " + std::to_string(data_row) + ", column " +
                           std::to_string(col) + ": not an integer: \"" +
                           std::string(cell) + "\"");
        }
        if (value < 0) {
          throw ParseError("row " + std::to_string(data_row) + ", column " +
                           std::to_string(col) + ": negative value");
        }
        row.push_back(value);
      }
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }

    if (width < 0) width = col;
    if (col != width) {
      throw ParseError("row " + std::to_string(data_row) + ": has " +
                       std::to_string(col) + " columns, expected " +
                       std::to_string(width));
    }
    if (incomplete) {
      ++table.dropped_incomplete;
      continue;
    }
    table.rows.push_back(std::move(row));
  }
  if (width < 0) throw ParseError("empty file: " + path);
  if (table.rows.empty()) {
    throw ParseError("no complete rows in file: " + path);
  }
  return table;
}

ResponseDataset aggregate(const std::vector<std::vector<int>>& rows,
                          const std::vector<int>& categories_override) {
  if (rows.empty()) throw UsageError("aggregate: no rows");
  const int r = static_cast<int>(rows.front().size());

  ResponseDataset data;
  data.r = r;
  data.n = static_cast<int>(rows.size());

  std::vector<int> max_value(r, 0);
  std::map<std::vector<int>, int> tally;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (static_cast<int>(rows[i].size()) != r) {
      throw UsageError("aggregate: row " + std::to_string(i + 1) +
                       " has wrong length");
    }
    for (int j = 0; j < r; ++j) {
      max_value[j] = std::max(max_value[j], rows[i][j]);
    }
    ++tally[rows[i]];
  }

  if (!categories_override.empty()) {
    if (static_cast<int>(categories_override.size()) != r) {
      throw UsageError("aggregate: categories override has wrong length");
    }
    for (int j = 0; j < r; ++j) {
      if (categories_override[j] < max_value[j] + 1) {
        throw ParseError("column " + std::to_string(j + 1) +
                         ": observed value " + std::to_string(max_value[j]) +
                         " exceeds declared categories " +
                         std::to_string(categories_override[j]));
      }
    }
    data.categories = categories_override;
  } else {
    data.categories.resize(r);
    for (int j = 0; j < r; ++j) {
      data.categories[j] = std::max(2, max_value[j] + 1);
    }
  }

  // flag items whose responses never vary
  for (int j = 0; j < r; ++j) {
    const int first = rows.front()[j];
    if (std::all_of(rows.begin(), rows.end(),
                    [&](const std::vector<int>& row) {
                      return row[j] == first;
                    })) {
      data.warnings.push_back("column " + std::to_string(j + 1) +
                              " is constant (all responses " +
                              std::to_string(first) + ")");
    }
  }

  data.patterns.reserve(tally.size());
  data.counts.reserve(tally.size());
  for (auto& [pattern, count] : tally) {
    data.patterns.push_back(pattern);
    data.counts.push_back(count);
  }
  data.check();
  return data;
}

ResponseDataset load_csv(const std::string& path, bool has_header,
                         const std::vector<int>& categories_override,
                         bool drop_incomplete) {
  RawTable table = load_csv_rows(path, has_header, drop_incomplete);
  ResponseDataset data = aggregate(table.rows, categories_override);
  if (table.dropped_incomplete > 0) {
    data.warnings.push_back("dropped " +
                            std::to_string(table.dropped_incomplete) +
                            " incomplete rows");
  }
  return data;
}

Eigen::VectorXd marginal_distribution(const ResponseDataset& data, int item) {
  if (item < 0 || item >= data.r) {
    throw UsageError("marginal_distribution: unknown item index");
  }
  Eigen::VectorXd freq = Eigen::VectorXd::Zero(data.categories[item]);
  for (std::size_t i = 0; i < data.patterns.size(); ++i) {
    freq[data.patterns[i][item]] += data.counts[i];
  }
  return freq / data.n;
}

std::vector<int> raw_scores(const std::vector<std::vector<int>>& rows,
                            const std::vector<int>& items) {
  std::vector<int> scores;
  scores.reserve(rows.size());
  for (const auto& row : rows) {
    int score = 0;
    for (int j : items) {
      if (j < 0 || j >= static_cast<int>(row.size())) {
        throw UsageError("raw_scores: unknown item index " +
                         std::to_string(j + 1));
      }
      score += row[j];
    }
    scores.push_back(score);
  }
  return scores;
}

std::vector<std::vector<int>> expand(const ResponseDataset& data) {
  std::vector<std::vector<int>> rows;
  rows.reserve(data.n);
  for (std::size_t i = 0; i < data.patterns.size(); ++i) {
    for (int c = 0; c < data.counts[i]; ++c) rows.push_back(data.patterns[i]);
  }
  return rows;
}

void write_csv(const std::string& path,
               const std::vector<std::vector<int>>& rows) {
  std::ofstream out(path);
  if (!out) throw UsageError("cannot write file: " + path);
  for (const auto& row : rows) {
    for (std::size_t j = 0; j < row.size(); ++j) {
      if (j > 0) out << ',';
      out << row[j];
    }
    out << '\n';
  }
}

}  // namespace lcirt
