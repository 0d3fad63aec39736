#include "rstar/timeseries.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "rstar/errors.hpp"

namespace rstar {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r\n");
  auto e = s.find_last_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(trim(cur));
  return out;
}

double parse_double(const std::string& s, const std::string& column, const std::string& date) {
  if (s.empty() || s == "NA" || s == "NaN" || s == "nan")
    throw ValidationError("missing value in column '" + column + "' at " + date);
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == nullptr || *end != '\0')
    throw ValidationError("unparseable value '" + s + "' in column '" + column + "' at " + date);
  return v;
}

}  // namespace

std::vector<double> expected_inflation(const std::vector<double>& inflation) {
  if (inflation.size() < 4)
    throw ValidationError("series too short: expected inflation needs at least 4 observations, got " +
                          std::to_string(inflation.size()));
  std::vector<double> out(inflation.size(), kNaN);
  for (std::size_t t = 3; t < inflation.size(); ++t)
    out[t] = 0.25 * (inflation[t] + inflation[t - 1] + inflation[t - 2] + inflation[t - 3]);
  return out;
}

void TimeSeriesData::derive() {
  expected_inflation.assign(size(), kNaN);
  real_rate.assign(size(), kNaN);
  if (size() >= 4) {
    expected_inflation = rstar::expected_inflation(inflation);
    for (std::size_t t = 0; t < size(); ++t)
      real_rate[t] = nominal_rate[t] - expected_inflation[t];
  }
}

TimeSeriesData load_country_csv(const std::filesystem::path& path,
                                std::optional<std::pair<Quarter, Quarter>> window) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");

  std::string line;
  if (!std::getline(in, line)) throw ValidationError("empty file '" + path.string() + "'");
  if (!line.empty() && static_cast<unsigned char>(line[0]) == 0xEF && line.size() >= 3)
    line = line.substr(3);  // UTF-8 BOM

  const std::vector<std::string> expected = {"date", "gdp.log", "inflation", "interest"};
  auto header = split_csv_line(line);
  if (header.size() < expected.size()) throw ValidationError("missing column 'interest' in header");
  for (std::size_t i = 0; i < expected.size(); ++i)
    if (header[i] != expected[i])
      throw ValidationError("missing column '" + expected[i] + "': header field " +
                            std::to_string(i + 1) + " is '" + header[i] + "'");

  TimeSeriesData data;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto fields = split_csv_line(line);
    if (fields.size() < 4)
      throw ValidationError("row " + std::to_string(line_no) + " has " +
                            std::to_string(fields.size()) + " fields, expected 4");
    const Quarter q = Quarter::parse(fields[0]);
    if (!data.dates.empty()) {
      const Quarter expected_q = data.dates.back().plus(1);
      if (q != expected_q)
        throw ValidationError("non-contiguous dates: expected " + expected_q.str() + " after " +
                              data.dates.back().str() + ", got " + q.str());
    }
    data.dates.push_back(q);
    data.log_output.push_back(parse_double(fields[1], "gdp.log", q.str()));
    data.inflation.push_back(parse_double(fields[2], "inflation", q.str()));
    data.nominal_rate.push_back(parse_double(fields[3], "interest", q.str()));
  }
  if (data.dates.empty()) throw ValidationError("no data rows in '" + path.string() + "'");

  if (window) {
    const auto [w0, w1] = *window;
    if (w0 > w1) throw ValidationError("window start " + w0.str() + " after end " + w1.str());
    auto idx = [&](const Quarter& q) -> std::size_t {
      const int off = q.index() - data.dates.front().index();
      if (off < 0 || off >= static_cast<int>(data.size()))
        throw ValidationError("window endpoint " + q.str() + " not in file (" +
                              data.dates.front().str() + ".." + data.dates.back().str() + ")");
      return static_cast<std::size_t>(off);
    };
    const std::size_t i0 = idx(w0), i1 = idx(w1);
    auto slice = [&](std::vector<double>& v) {
      v = std::vector<double>(v.begin() + i0, v.begin() + i1 + 1);
    };
    data.dates = std::vector<Quarter>(data.dates.begin() + i0, data.dates.begin() + i1 + 1);
    slice(data.log_output);
    slice(data.inflation);
    slice(data.nominal_rate);
  }

  for (std::size_t t = 0; t < data.size(); ++t) {
    auto check = [&](double v, const char* col) {
      if (!std::isfinite(v))
        throw ValidationError(std::string("non-finite value in column '") + col + "' at " +
                              data.dates[t].str());
    };
    check(data.log_output[t], "gdp.log");
    check(data.inflation[t], "inflation");
    check(data.nominal_rate[t], "interest");
  }

  data.derive();
  return data;
}

std::string format_number(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", x);
  return buf;
}

void write_country_csv(const TimeSeriesData& data, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << "date,gdp.log,inflation,interest\n";
  for (std::size_t t = 0; t < data.size(); ++t)
    out << data.dates[t].str() << ',' << format_number(data.log_output[t]) << ','
        << format_number(data.inflation[t]) << ',' << format_number(data.nominal_rate[t]) << '\n';
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

ModelData prepare_model_data(const TimeSeriesData& data, std::optional<Quarter> start,
                             std::optional<Quarter> end) {
  if (data.size() < static_cast<std::size_t>(kLagTrim) + 16)
    throw ValidationError("series too short: need at least " + std::to_string(kLagTrim + 16) +
                          " rows, got " + std::to_string(data.size()));

  const int base = data.dates.front().index();
  int t0 = kLagTrim;
  if (start) {
    t0 = start->index() - base;
    if (t0 < kLagTrim)
      throw ValidationError("window start " + start->str() + " leaves fewer than " +
                            std::to_string(kLagTrim) + " leading observations for lags");
  }
  int t1 = static_cast<int>(data.size()) - 1;
  if (end) {
    t1 = end->index() - base;
    if (t1 >= static_cast<int>(data.size()))
      throw ValidationError("window end " + end->str() + " beyond last observation " +
                            data.dates.back().str());
  }
  if (t1 - t0 + 1 < 16)
    throw ValidationError("estimation window shorter than 16 quarters after lag trimming");

  const Eigen::Index T = t1 - t0 + 1;
  ModelData md;
  md.obs.resize(T, 2);
  md.exog.resize(T, ModelData::kNumExog);
  md.dates.reserve(T);
  for (Eigen::Index i = 0; i < T; ++i) {
    const int t = t0 + static_cast<int>(i);
    md.dates.push_back(data.dates[t]);
    md.obs(i, 0) = data.log_output[t];
    md.obs(i, 1) = data.inflation[t];
    md.exog(i, ModelData::kYLag1) = data.log_output[t - 1];
    md.exog(i, ModelData::kYLag2) = data.log_output[t - 2];
    md.exog(i, ModelData::kRLag1) = data.real_rate[t - 1];
    md.exog(i, ModelData::kRLag2) = data.real_rate[t - 2];
    md.exog(i, ModelData::kPiLag1) = data.inflation[t - 1];
    md.exog(i, ModelData::kPiLag24) =
        (data.inflation[t - 2] + data.inflation[t - 3] + data.inflation[t - 4]) / 3.0;
    md.exog(i, ModelData::kConst) = 1.0;
  }
  if (!md.obs.allFinite() || !md.exog.allFinite())
    throw ValidationError("non-finite value inside the estimation window");
  return md;
}

}  // namespace rstar
