#include "htesel/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include <fmt/format.h>

#include "htesel/error.hpp"
#include "htesel/scores.hpp"

namespace htesel {

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(line.substr(start, comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

double parse_double(std::string_view field, std::size_t line, std::string_view column) {
  field = trim(field);
  if (!field.empty() && field.front() == '+') field.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || ptr != field.data() + field.size() || field.empty()) {
    throw ParseError(fmt::format("column '{}': cannot parse '{}' as a number", column, field),
                     line);
  }
  if (!std::isfinite(v)) {
    throw ParseError(fmt::format("column '{}': value is not finite", column), line);
  }
  return v;
}

bool next_line(std::istream& in, std::string& line, std::size_t& lineno) {
  while (std::getline(in, line)) {
    ++lineno;
    if (!trim(line).empty()) return true;
  }
  return false;
}

void expect_header(std::string_view header, const std::vector<std::string>& expected) {
  const auto fields = split_fields(header);
  if (fields.size() != expected.size()) {
    throw ParseError(fmt::format("header has {} columns, expected {}", fields.size(),
                                 expected.size()),
                     1);
  }
  for (std::size_t k = 0; k < fields.size(); ++k) {
    if (trim(fields[k]) != expected[k]) {
      throw ParseError(fmt::format("header column {} is '{}', expected '{}'", k, trim(fields[k]),
                                   expected[k]),
                       1);
    }
  }
}

std::ifstream open_or_throw(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open file: " + path.string());
  return in;
}

}  // namespace

Dataset read_dataset_csv(std::istream& in) {
  std::string line;
  std::size_t lineno = 0;
  if (!next_line(in, line, lineno)) throw ParseError("missing header", 1);

  const auto header = split_fields(line);
  if (header.size() < 3) throw ParseError("dataset header needs x_0..x_{d-1},t,y", lineno);
  const std::size_t d = header.size() - 2;
  std::vector<std::string> expected;
  for (std::size_t k = 0; k < d; ++k) expected.push_back("x_" + std::to_string(k));
  expected.emplace_back("t");
  expected.emplace_back("y");
  expect_header(line, expected);

  std::vector<double> xs;
  std::vector<int> ts;
  std::vector<double> ys;
  while (next_line(in, line, lineno)) {
    const auto fields = split_fields(line);
    if (fields.size() != d + 2) {
      throw ParseError(fmt::format("row has {} fields, expected {}", fields.size(), d + 2),
                       lineno);
    }
    for (std::size_t k = 0; k < d; ++k) xs.push_back(parse_double(fields[k], lineno, expected[k]));
    const double t = parse_double(fields[d], lineno, "t");
    if (t != 0.0 && t != 1.0) {
      throw ParseError(fmt::format("treatment must be 0 or 1, got {}", trim(fields[d])), lineno);
    }
    ts.push_back(static_cast<int>(t));
    ys.push_back(parse_double(fields[d + 1], lineno, "y"));
  }
  if (ts.empty()) throw ParseError("dataset has no rows", lineno);

  const auto n = static_cast<Eigen::Index>(ts.size());
  Eigen::MatrixXd x(n, static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index k = 0; k < x.cols(); ++k) {
      x(i, k) = xs[static_cast<std::size_t>(i) * d + static_cast<std::size_t>(k)];
    }
  }
  Eigen::VectorXd y = Eigen::Map<Eigen::VectorXd>(ys.data(), n);
  return Dataset(std::move(x), std::move(ts), std::move(y));
}

Dataset read_dataset_csv(const std::filesystem::path& path) {
  auto in = open_or_throw(path);
  return read_dataset_csv(in);
}

CandidateSet read_predictions_csv(std::istream& in, std::optional<std::size_t> expected_n) {
  std::string line;
  std::size_t lineno = 0;
  if (!next_line(in, line, lineno)) throw ParseError("missing header", 1);
  const std::size_t p = split_fields(line).size();
  std::vector<std::string> expected;
  for (std::size_t k = 0; k < p; ++k) expected.push_back("tau_" + std::to_string(k));
  expect_header(line, expected);

  std::vector<double> values;
  std::size_t rows = 0;
  while (next_line(in, line, lineno)) {
    const auto fields = split_fields(line);
    if (fields.size() != p) {
      throw ParseError(fmt::format("row has {} fields, expected {}", fields.size(), p), lineno);
    }
    for (std::size_t k = 0; k < p; ++k) values.push_back(parse_double(fields[k], lineno, expected[k]));
    ++rows;
  }
  if (rows == 0) throw ParseError("predictions file has no rows", lineno);
  if (expected_n && *expected_n != rows) {
    throw DataError(fmt::format("predictions file has {} rows but the dataset has {} units", rows,
                                *expected_n));
  }
  Eigen::MatrixXd pred(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(rows));
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t r = 0; r < p; ++r) {
      pred(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(i)) = values[i * p + r];
    }
  }
  return CandidateSet(std::move(pred));
}

CandidateSet read_predictions_csv(const std::filesystem::path& path,
                                  std::optional<std::size_t> expected_n) {
  auto in = open_or_throw(path);
  return read_predictions_csv(in, expected_n);
}

void write_dataset_csv(std::ostream& out, const Dataset& data) {
  for (std::size_t k = 0; k < data.d(); ++k) out << "x_" << k << ',';
  out << "t,y\n";
  for (std::size_t i = 0; i < data.n(); ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    for (Eigen::Index k = 0; k < data.x().cols(); ++k) out << fmt::format("{},", data.x()(row, k));
    out << data.t()[i] << ',' << fmt::format("{}", data.y()[row]) << '\n';
  }
}

void write_predictions_csv(std::ostream& out, const CandidateSet& candidates) {
  for (std::size_t r = 0; r < candidates.p(); ++r) {
    out << (r ? "," : "") << "tau_" << r;
  }
  out << '\n';
  for (std::size_t i = 0; i < candidates.n(); ++i) {
    for (std::size_t r = 0; r < candidates.p(); ++r) {
      out << (r ? "," : "") << fmt::format("{}", candidates(r, i));
    }
    out << '\n';
  }
}

void write_tensor_csv(std::ostream& out, const ScoreTensor& tensor) {
  out << "r,s,i,score\n";
  for (std::size_t r = 0; r < tensor.p(); ++r) {
    for (std::size_t s = 0; s < tensor.p(); ++s) {
      if (r == s) continue;
      for (std::size_t i = 0; i < tensor.n(); ++i) {
        out << fmt::format("{},{},{},{}\n", r, s, i, tensor(r, s, i));
      }
    }
  }
}

}  // namespace htesel
