#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "rstar/errors.hpp"
#include "rstar/rng.hpp"
#include "rstar/timeseries.hpp"

using namespace rstar;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "rstar_tests";
  fs::create_directories(dir);
  return dir / name;
}

void write_file(const fs::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::trunc);
  out << content;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p);
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("quarter parsing and formatting") {
  CHECK(Quarter::parse("1961:Q1") == Quarter{1961, 1});
  CHECK(Quarter::parse("1961Q3") == Quarter{1961, 3});
  CHECK(Quarter::parse("1961-04") == Quarter{1961, 2});
  CHECK(Quarter::parse("1961-10-01") == Quarter{1961, 4});
  CHECK(Quarter{1961, 4}.plus(1) == Quarter{1962, 1});
  CHECK(Quarter{1961, 1}.str() == "1961:Q1");
  CHECK_THROWS_AS(Quarter::parse("1961:Q5"), ValidationError);
  CHECK_THROWS_AS(Quarter::parse("1961-02"), ValidationError);
  CHECK_THROWS_AS(Quarter::parse("junk"), ValidationError);
}

TEST_CASE("expected inflation") {
  SUBCASE("constant series stays constant") {
    std::vector<double> pi(12, 2.0);
    const auto e = expected_inflation(pi);
    for (std::size_t t = 3; t < pi.size(); ++t) CHECK(e[t] == doctest::Approx(2.0).epsilon(1e-14));
    CHECK(std::isnan(e[0]));
    CHECK(std::isnan(e[2]));
  }
  SUBCASE("single spike averages to a quarter") {
    const std::vector<double> pi = {4.0, 0.0, 0.0, 0.0};
    CHECK(expected_inflation(pi)[3] == doctest::Approx(1.0).epsilon(1e-15));
  }
  SUBCASE("matches a brute-force moving average") {
    Rng rng(11);
    std::vector<double> pi(50);
    for (auto& v : pi) v = rng.normal(2.0, 1.5);
    const auto e = expected_inflation(pi);
    for (std::size_t t = 3; t < pi.size(); ++t) {
      const double ref = (pi[t] + pi[t - 1] + pi[t - 2] + pi[t - 3]) / 4.0;
      CHECK(e[t] == doctest::Approx(ref).epsilon(1e-14));
    }
  }
  SUBCASE("too short") {
    CHECK_THROWS_WITH_AS(expected_inflation({1.0, 2.0}), doctest::Contains("series too short"),
                         ValidationError);
  }
  SUBCASE("adding a constant shifts the average by the constant") {
    Rng rng(12);
    std::vector<double> pi(30), shifted(30);
    for (std::size_t i = 0; i < pi.size(); ++i) {
      pi[i] = rng.normal();
      shifted[i] = pi[i] + 3.25;
    }
    const auto a = expected_inflation(pi);
    const auto b = expected_inflation(shifted);
    for (std::size_t t = 3; t < pi.size(); ++t)
      CHECK(b[t] == doctest::Approx(a[t] + 3.25).epsilon(1e-13));
  }
}

TEST_CASE("csv loading") {
  SUBCASE("minimal valid file") {
    const auto p = temp_file("mini.csv");
    write_file(p,
               "date,gdp.log,inflation,interest\n"
               "1961:Q1,740.1,1.2,3.0\n"
               "1961:Q2,740.9,1.4,3.1\n"
               "1961:Q3,741.5,1.1,3.2\n"
               "1961:Q4,742.2,1.3,3.4\n");
    const auto d = load_country_csv(p);
    CHECK(d.size() == 4);
    CHECK(d.dates.front().str() == "1961:Q1");
    CHECK(std::isnan(d.real_rate[2]));
    CHECK(d.real_rate[3] == doctest::Approx(3.4 - 1.25).epsilon(1e-12));
  }
  SUBCASE("gap in dates names the missing quarter") {
    const auto p = temp_file("gap.csv");
    write_file(p,
               "date,gdp.log,inflation,interest\n"
               "1961:Q1,1,1,1\n"
               "1961:Q2,1,1,1\n"
               "1961:Q4,1,1,1\n");
    CHECK_THROWS_WITH_AS(load_country_csv(p), doctest::Contains("1961:Q3"), ValidationError);
  }
  SUBCASE("missing column is named") {
    const auto p = temp_file("badheader.csv");
    write_file(p, "date,gdp.log,infl,interest\n1961:Q1,1,1,1\n");
    CHECK_THROWS_WITH_AS(load_country_csv(p), doctest::Contains("inflation"), ValidationError);
  }
  SUBCASE("missing value names column and date") {
    const auto p = temp_file("nan.csv");
    write_file(p,
               "date,gdp.log,inflation,interest\n"
               "1961:Q1,1,1,1\n"
               "1961:Q2,1,NA,1\n");
    CHECK_THROWS_WITH_AS(load_country_csv(p), doctest::Contains("1961:Q2"), ValidationError);
  }
  SUBCASE("window trimming and missing endpoints") {
    const auto p = temp_file("window.csv");
    std::string content = "date,gdp.log,inflation,interest\n";
    Quarter q{1960, 1};
    for (int i = 0; i < 40; ++i) {
      content += q.plus(i).str() + ",1,1,1\n";
    }
    write_file(p, content);
    const auto d = load_country_csv(p, std::make_pair(Quarter{1961, 1}, Quarter{1968, 4}));
    CHECK(d.size() == 32);
    CHECK(d.dates.front() == Quarter{1961, 1});
    CHECK_THROWS_WITH_AS(load_country_csv(p, std::make_pair(Quarter{1950, 1}, Quarter{1968, 4})),
                         doctest::Contains("1950:Q1"), ValidationError);
  }
}

TEST_CASE("write then load is a fixed point at stored precision") {
  Rng rng(5);
  TimeSeriesData d;
  for (int i = 0; i < 30; ++i) {
    d.dates.push_back(Quarter{1970, 1}.plus(i));
    d.log_output.push_back(700.0 + 0.8 * i + 0.3 * rng.normal());
    d.inflation.push_back(rng.normal(2.0, 1.0));
    d.nominal_rate.push_back(rng.normal(4.0, 1.0));
  }
  d.derive();

  const auto p1 = temp_file("roundtrip1.csv");
  const auto p2 = temp_file("roundtrip2.csv");
  write_country_csv(d, p1);
  const auto loaded = load_country_csv(p1);
  write_country_csv(loaded, p2);
  CHECK(read_file(p1) == read_file(p2));
  for (std::size_t i = 0; i < d.size(); ++i) {
    CHECK(loaded.log_output[i] == doctest::Approx(d.log_output[i]).epsilon(5e-9));
    CHECK(loaded.inflation[i] == doctest::Approx(d.inflation[i]).epsilon(5e-9));
  }
}

TEST_CASE("real rate is translation consistent") {
  Rng rng(6);
  TimeSeriesData a;
  for (int i = 0; i < 24; ++i) {
    a.dates.push_back(Quarter{1970, 1}.plus(i));
    a.log_output.push_back(700.0 + i);
    a.inflation.push_back(rng.normal(2.0, 1.0));
    a.nominal_rate.push_back(rng.normal(4.0, 1.0));
  }
  a.derive();
  TimeSeriesData b = a;
  for (auto& v : b.nominal_rate) v += 2.0;
  b.derive();
  for (std::size_t i = 3; i < a.size(); ++i)
    CHECK(b.real_rate[i] == doctest::Approx(a.real_rate[i] + 2.0).epsilon(1e-13));
}

TEST_CASE("model data preparation") {
  Rng rng(7);
  TimeSeriesData d;
  for (int i = 0; i < 40; ++i) {
    d.dates.push_back(Quarter{1960, 1}.plus(i));
    d.log_output.push_back(700.0 + 0.8 * i + 0.2 * rng.normal());
    d.inflation.push_back(rng.normal(2.0, 0.5));
    d.nominal_rate.push_back(rng.normal(4.0, 0.5));
  }
  d.derive();

  const ModelData md = prepare_model_data(d);
  CHECK(md.T() == 35);  // 5 leading quarters feed the lags
  CHECK(md.dates.front() == Quarter{1961, 2});
  // lag columns line up with the raw series
  CHECK(md.exog(0, ModelData::kYLag1) == doctest::Approx(d.log_output[4]).epsilon(1e-15));
  CHECK(md.exog(3, ModelData::kRLag2) == doctest::Approx(d.real_rate[6]).epsilon(1e-12));
  CHECK(md.exog(2, ModelData::kPiLag24) ==
        doctest::Approx((d.inflation[5] + d.inflation[4] + d.inflation[3]) / 3.0).epsilon(1e-12));

  CHECK_THROWS_WITH_AS(prepare_model_data(d, Quarter{1960, 2}), doctest::Contains("leading"),
                       ValidationError);
  CHECK_THROWS_WITH_AS(prepare_model_data(d, Quarter{1968, 1}),
                       doctest::Contains("16"), ValidationError);
}
