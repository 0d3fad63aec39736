#ifndef RSTAR_MUE_HPP
#define RSTAR_MUE_HPP

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "rstar/mle.hpp"
#include "rstar/models.hpp"

namespace rstar {

/*
  Median unbiased estimation of the signal-to-noise ratio lambda_z.

  A constructed series is tested for a structural break in its mean at
  every candidate date tau; the resulting F(tau) sequence is condensed
  into mean-Wald, exponential-Wald and sup-F statistics (plus the
  cumulative-sum L statistic, which needs no break grid). Each statistic
  is mapped to a median-unbiased estimate of lambda = T * lambda_z by
  inverting a simulated look-up table for the local-level model

      x_t = b_t + u_t,   b_t = b_{t-1} + (lambda/T) n_t,

  with u, n i.i.d. standard normal.

  Two break-regression styles are supported:
    sw:  the left-hand side is fully constructed with fixed coefficients
         and regressed on {1, D_t(tau)} only;
    hlw: the dependent variable is regressed on lagged regressors whose
         coefficients are re-estimated at every tau, plus D_t(tau).
  The grid convention is a style property: sw uses tau0 = floor(0.15 T),
  tau1 = T - tau0; hlw uses tau0 = 4, tau1 = T - 4.
*/

// ---- break grid ---------------------------------------------------------

struct BreakGrid {
  int tau0 = 0;  // first break index (1-based, dummy is 1 for t > tau)
  int tau1 = 0;  // last break index

  int n_tau() const { return tau1 - tau0 + 1; }
  // Validity: at least 2 observations on each side of every tau.
  void validate(int T) const;

  static BreakGrid sw_style(int T);   // floor(0.15 T) .. T - floor(0.15 T)
  static BreakGrid hlw_style(int T);  // 4 .. T - 4
};

enum class BreakStyle { kSw, kHlw };
BreakGrid make_grid(BreakStyle style, int T);
std::string to_string(BreakStyle style);

// ---- statistics ---------------------------------------------------------

struct BreakStats {
  double mw = 0;   // mean of F(tau)
  double ew = 0;   // log mean of exp(F(tau)/2), computed with a max shift
  double qlr = 0;  // max of F(tau)
};

BreakStats break_stats(std::span<const double> f_seq);

// L = sum_t S_t^2 / (T^2 * s2) with S_t the cumulative sum of the demeaned
// series and s2 its variance (divisor T). Throws on a zero-variance input.
double nyblom_L(std::span<const double> x);

// F(tau) for each tau in the grid from the regression of lhs on
// {1, D_t(tau)}: the squared t-statistic of the dummy coefficient under
// homoskedastic OLS. A constant lhs yields an all-zero sequence.
std::vector<double> fstat_sequence_sw(std::span<const double> lhs, const BreakGrid& grid);

// F(tau) from the regression of y on {extras, 1 (optional), D_t(tau)};
// the extras' coefficients are re-estimated at every tau. With no extras
// and the intercept on this coincides with the sw form.
std::vector<double> fstat_sequence_hlw(std::span<const double> y, const Eigen::MatrixXd& extras,
                                       const BreakGrid& grid, bool include_intercept);

// ---- look-up table ------------------------------------------------------

struct MueLookup {
  static const std::vector<std::string>& stat_names();  // {"L","MW","EW","QLR"}

  std::vector<int> lambda_grid;                        // 0..30
  std::map<std::string, std::vector<double>> median;   // per stat, one entry per lambda
  std::map<std::string, std::vector<double>> q05, q95;
  std::map<std::string, std::vector<double>> null_draws;  // sorted lambda=0 draws
  std::map<std::string, bool> isotonic_applied;

  int T_sim = 0;
  int n_reps = 0;
  std::uint64_t seed = 0;
  std::string L_divisor = "T";
  std::string style = "sw";

  void save(const std::filesystem::path& csv_path) const;  // also writes .meta.json / .null.csv
  static MueLookup load(const std::filesystem::path& csv_path);
};

// Simulates the table: for each lambda in 0..30 and each replication,
// draws T_sim observations from the local-level model, computes the four
// statistics with the sw-style regression and grid, and records medians
// and 5%/95% quantiles. Draws for lambda = 0 are kept for p-values.
// Replications use independent streams keyed by (seed, lambda, rep).
MueLookup simulate_lookup(int T_sim, int n_reps, std::uint64_t seed, int n_threads = 0);

struct MueEntry {
  double stat_value = 0;
  double p_value = 1;
  double lambda_hat = 0;    // 0 exactly below the lambda=0 median
  double lambda_z = 0;      // lambda_hat / T
  double ci90_lo = 0, ci90_hi = 0;  // on the lambda_z scale, truncated at 0
  bool extrapolated = false;        // statistic above the lambda=30 median
};

MueEntry lookup_mue(const std::string& stat_name, double value, const MueLookup& table, int T);

// ---- stage-2 break regression inputs ------------------------------------

// The four ways the break regression is assembled from a fitted stage-2
// model, its smoothed states and the data. "ConstructedLhs" forms build
// the left-hand side with the fixed estimated coefficients (sw style);
// "RegressorForm" forms re-estimate those coefficients alongside the
// break dummy (hlw style).
enum class BreakRegression {
  kHlwModelRegressorForm,    // gap on own lags, rate average, g_{t-1}, intercept
  kHlwModelConstructedLhs,   // a_y(L)gap - a_0 - a_r(L)r - a_g g_{t-1}
  kCorrectModelRegressorForm,  // gap on own lags and the (r - 4g) average, intercept
  kCorrectModelConstructedLhs  // a_y(L)gap - a_r(L)[r - 4g]
};

struct BreakInputs {
  std::vector<double> y;      // dependent variable (or constructed lhs)
  Eigen::MatrixXd extras;     // T x k; empty for constructed forms
  bool include_intercept = false;
  bool constructed = false;   // true -> sw-form regression on {1, D}
  std::vector<Quarter> dates;
};

// Smoothed states must come from the matching stage-2 variant (legacy
// model for the Hlw* forms, correct model otherwise); mismatches throw.
// The first two observations are dropped for the gap lags.
BreakInputs stage2_break_inputs(BreakRegression form, const StageParams& params,
                                const FilterOutput& smoothed, const ModelData& data,
                                VariantTag fitted_tag);

// ---- pipeline-level estimate --------------------------------------------

enum class Stage2Pipeline { kHlwReplication, kHlwMleSigmaG, kCorrect };
std::string to_string(Stage2Pipeline p);

struct Stage2Fit {
  Stage2Pipeline pipeline;
  FitResult fit;
  FilterOutput states;  // filtered + smoothed
};

struct MueResult {
  Stage2Pipeline pipeline;
  BreakStyle style;
  BreakGrid grid;
  std::vector<double> f_seq;
  std::vector<Quarter> f_dates;
  std::map<std::string, MueEntry> by_stat;  // keys L, MW, EW, QLR

  // The exponential-Wald entry, used downstream to pin sigma_z.
  const MueEntry& primary() const { return by_stat.at("EW"); }
};

// fit -> break inputs -> F(tau) -> statistics -> table inversion. The L
// statistic is always computed from the constructed-lhs series of the
// fitted model, so it does not depend on the regression style.
MueResult estimate_lambda_z(const Stage2Fit& fit, BreakStyle style, const MueLookup& table,
                            const ModelData& data);

}  // namespace rstar

#endif  // RSTAR_MUE_HPP
