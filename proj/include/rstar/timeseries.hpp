#ifndef RSTAR_TIMESERIES_HPP
#define RSTAR_TIMESERIES_HPP

#include <Eigen/Dense>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "rstar/quarter.hpp"

namespace rstar {

// Quarterly input data. Raw columns are read from file; expected inflation
// and the ex-ante real rate are always derived internally:
//
//   pi_e[t] = (pi[t] + pi[t-1] + pi[t-2] + pi[t-3]) / 4
//   r[t]    = i[t] - pi_e[t]
//
// The first three entries of the derived columns are undefined (NaN); model
// code trims them away together with the regression lags.
struct TimeSeriesData {
  std::vector<Quarter> dates;
  std::vector<double> log_output;          // 100 * log real GDP
  std::vector<double> inflation;           // annualized quarter-on-quarter, percent
  std::vector<double> nominal_rate;        // annualized, percent
  std::vector<double> expected_inflation;  // derived
  std::vector<double> real_rate;           // derived

  std::size_t size() const { return dates.size(); }
  void derive();
};

// 4-quarter trailing moving average; entries 0..2 are NaN. Throws
// ValidationError("series too short ...") if fewer than 4 observations.
std::vector<double> expected_inflation(const std::vector<double>& inflation);

// Reads a CSV with header `date,gdp.log,inflation,interest`. Dates must be
// consecutive quarters. If a window is given, rows outside [first, second]
// are dropped (endpoints must exist in the file). Derived columns are
// populated before returning.
TimeSeriesData load_country_csv(const std::filesystem::path& path,
                                std::optional<std::pair<Quarter, Quarter>> window = std::nullopt);

// Writes the raw input columns back out in the input schema.
void write_country_csv(const TimeSeriesData& data, const std::filesystem::path& path);

// Observables and exogenous regressors over the estimation sample, ready
// for the state-space machinery. Column order of `exog` is fixed.
struct ModelData {
  enum ExogCol { kYLag1 = 0, kYLag2, kRLag1, kRLag2, kPiLag1, kPiLag24, kConst, kNumExog };

  Eigen::MatrixXd obs;   // T x 2: (output, inflation)
  Eigen::MatrixXd exog;  // T x kNumExog
  std::vector<Quarter> dates;

  Eigen::Index T() const { return obs.rows(); }
};

// Number of leading observations consumed by lags: r[t-2] needs pi[t-5].
inline constexpr int kLagTrim = 5;

// Builds ModelData for the window [start, end] (defaults: first usable
// quarter, last quarter). Verifies the window leaves T >= 16 and that all
// required values are finite.
ModelData prepare_model_data(const TimeSeriesData& data,
                             std::optional<Quarter> start = std::nullopt,
                             std::optional<Quarter> end = std::nullopt);

// Formats a double with 9 significant digits (the precision used for all
// numeric output files).
std::string format_number(double x);

}  // namespace rstar

#endif  // RSTAR_TIMESERIES_HPP
