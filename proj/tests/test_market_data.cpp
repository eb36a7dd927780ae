#include <random>
#include <string>

#include "arbsurf/errors.hpp"
#include "arbsurf/market_data.hpp"
#include "doctest.h"

using namespace arbsurf;

namespace {

std::string long_header() { return "date,tenor,delta,iv,spot,rd,rf\n"; }

std::string flat_day(const std::string& date, double iv) {
  std::string s;
  for (auto t : kTenorLabels)
    for (double d : kDeltas)
      s += date + "," + std::string(t) + "," + format_double(d) + "," + format_double(iv) + ",0.75,0.01,0.02\n";
  return s;
}

}  // namespace

TEST_CASE("empty body yields an empty archive") {
  auto a = parse_quote_file(long_header());
  CHECK(a.size() == 0);
}

TEST_CASE("flat long-format day parses to a constant grid") {
  auto a = parse_quote_file(long_header() + flat_day("2020-01-02", 0.10));
  REQUIRE(a.size() == 1);
  CHECK((a.days[0].vols.array() == 0.10).all());
  CHECK(a.days[0].spot == 0.75);
  CHECK(a.days[0].rd[3] == 0.01);
  CHECK(a.days[0].carry(7) == doctest::Approx(-0.05));
}

TEST_CASE("dates are sorted ascending") {
  auto a = parse_quote_file(long_header() + flat_day("2020-01-03", 0.2) + flat_day("2020-01-02", 0.1));
  REQUIRE(a.size() == 2);
  CHECK(a.days[0].vols(0, 0) == 0.1);
  CHECK(format_date(a.days[1].date) == "2020-01-03");
}

TEST_CASE("broker format converts with the simplified identities") {
  std::string csv = "date,tenor,atm,rr25,bf25,rr10,bf10,spot,rd,rf\n";
  for (auto t : kTenorLabels) csv += "2021-05-04," + std::string(t) + ",0.10,0.02,0.005,0.03,0.01,1,0,0\n";
  auto a = parse_quote_file(csv);
  REQUIRE(a.size() == 1);
  const auto& v = a.days[0].vols;
  CHECK(v(1, 0) == doctest::Approx(0.115).epsilon(1e-15));
  CHECK(v(3, 0) == doctest::Approx(0.095).epsilon(1e-15));
  CHECK(v(2, 4) == 0.10);
  CHECK(v(0, 7) == doctest::Approx(0.125));
  CHECK(v(4, 7) == doctest::Approx(0.095));
}

TEST_CASE("convert_broker_quotes examples and guard") {
  auto z = convert_broker_quotes({Tenor::M1, 0.1, 0, 0, 0, 0});
  for (double x : z) CHECK(x == 0.1);
  auto r = convert_broker_quotes({Tenor::M1, 0.1, 0.02, 0.0, 0, 0});
  CHECK(r[1] == doctest::Approx(0.11));
  CHECK(r[3] == doctest::Approx(0.09));
  CHECK_THROWS_AS(convert_broker_quotes({Tenor::M1, 0.1, 0, -0.15, 0, 0}), DataError);
}

TEST_CASE("broker conversion is linear in the spreads and keeps atm at 50 delta") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-0.01, 0.01);
  for (int i = 0; i < 200; ++i) {
    BrokerQuoteRow row{Tenor::Y1, 0.2, u(rng), u(rng), u(rng), u(rng)};
    BrokerQuoteRow twice = row;
    twice.rr25 *= 2;
    twice.bf25 *= 2;
    twice.rr10 *= 2;
    twice.bf10 *= 2;
    auto a = convert_broker_quotes(row), b = convert_broker_quotes(twice);
    CHECK(a[2] == 0.2);
    for (int k = 0; k < kNumDeltas; ++k) CHECK(b[k] - 0.2 == doctest::Approx(2 * (a[k] - 0.2)).epsilon(1e-12));
  }
}

TEST_CASE("long-format serialization round-trips bit-exactly") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.03, 0.6), r(-0.05, 0.05);
  QuoteArchive a;
  for (int d = 0; d < 5; ++d) {
    IVSurfaceGrid g;
    g.date = Date{std::chrono::year(2019), std::chrono::month(3), std::chrono::day(1 + d)};
    g.spot = u(rng) * 3;
    for (int t = 0; t < kNumTenors; ++t) {
      g.rd[t] = r(rng);
      g.rf[t] = r(rng);
      for (int k = 0; k < kNumDeltas; ++k) g.vols(k, t) = u(rng);
    }
    a.days.push_back(g);
  }
  auto b = parse_quote_file(serialize_quote_file(a));
  REQUIRE(b.size() == a.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(b.days[i] == a.days[i]);
}

TEST_CASE("malformed input reports line numbers") {
  std::string body = flat_day("2020-01-02", 0.1);
  auto bad = long_header() + body.substr(0, body.find('\n') + 1) + "2020-01-02,1M,0.25,abc,1,0,0\n";
  try {
    parse_quote_file(bad);
    FAIL("expected an error");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
  auto missing = long_header() + body.substr(0, body.rfind("2020"));
  CHECK_THROWS_AS(parse_quote_file(missing), DataError);
  auto negative = long_header() + "2020-01-02,1M,0.25,-0.1,1,0,0\n";
  CHECK_THROWS_AS(parse_quote_file(negative), DataError);
  CHECK_THROWS_AS(parse_quote_file("foo,bar\n"), DataError);
}

TEST_CASE("conditioning series aligns by date") {
  auto a = parse_quote_file(long_header() + flat_day("2020-01-02", 0.1) + flat_day("2020-01-03", 0.1));
  auto s = parse_conditioning_file("date,value\n2020-01-01,9\n2020-01-02,15.5\n2020-01-03,16\n");
  attach_conditioning(a, s);
  REQUIRE(a.conditioning.size() == 2);
  CHECK(a.conditioning[0] == 15.5);
  CHECK(a.conditioning[1] == 16);
  auto short_series = parse_conditioning_file("date,value\n2020-01-02,15.5\n");
  CHECK_THROWS_AS(attach_conditioning(a, short_series), DataError);
  CHECK_THROWS_AS(parse_conditioning_file("date,value\n2020-01-03,1\n2020-01-02,2\n"), DataError);
}
