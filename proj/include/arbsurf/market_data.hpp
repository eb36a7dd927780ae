#pragma once

#include <array>
#include <chrono>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace arbsurf {

inline constexpr int kNumTenors = 8;
inline constexpr int kNumDeltas = 5;
inline constexpr int kGridSize = kNumTenors * kNumDeltas;

enum class Tenor { M1, M2, M3, M6, M9, Y1, Y3, Y5 };

inline constexpr std::array<double, kNumTenors> kTenorYears{
    1.0 / 12.0, 2.0 / 12.0, 3.0 / 12.0, 0.5, 0.75, 1.0, 3.0, 5.0};
inline constexpr std::array<std::string_view, kNumTenors> kTenorLabels{
    "1M", "2M", "3M", "6M", "9M", "1Y", "3Y", "5Y"};
// Call deltas; strikes decrease along this list.
inline constexpr std::array<double, kNumDeltas> kDeltas{0.1, 0.25, 0.5, 0.75, 0.9};

inline double tenor_years(Tenor t) { return kTenorYears[static_cast<int>(t)]; }
Tenor parse_tenor(std::string_view label);

using Date = std::chrono::year_month_day;
Date parse_date(std::string_view iso);
std::string format_date(Date d);

using VolGrid = Eigen::Matrix<double, kNumDeltas, kNumTenors>;
using TenorVector = Eigen::Matrix<double, kNumTenors, 1>;
using GridVector = Eigen::Matrix<double, kGridSize, 1>;

struct IVSurfaceGrid {
  Date date{};
  double spot = 1.0;
  TenorVector rd = TenorVector::Zero();
  TenorVector rf = TenorVector::Zero();
  VolGrid vols = VolGrid::Constant(0.1);

  // Carry c_n = (rd - rf) * tau_n and forward S0 * exp(c_n).
  double carry(int tenor) const { return (rd[tenor] - rf[tenor]) * kTenorYears[tenor]; }
  double forward(int tenor) const;
  // Column-major flattening: tenor-major blocks of five deltas.
  GridVector flatten() const;
  static VolGrid unflatten(const GridVector& v);

  bool operator==(const IVSurfaceGrid& o) const;
};

struct BrokerQuoteRow {
  Tenor tenor = Tenor::M1;
  double atm = 0.0;
  double rr25 = 0.0;
  double bf25 = 0.0;
  double rr10 = 0.0;
  double bf10 = 0.0;
};

// Vols at kDeltas order {0.1, 0.25, 0.5, 0.75, 0.9}.
std::array<double, kNumDeltas> convert_broker_quotes(const BrokerQuoteRow& row);

struct QuoteArchive {
  std::vector<IVSurfaceGrid> days;
  // Empty when no conditioning series is attached, otherwise one value per day.
  std::vector<double> conditioning;

  bool has_conditioning() const { return !conditioning.empty(); }
  std::size_t size() const { return days.size(); }
  QuoteArchive slice(std::size_t first, std::size_t count) const;
};

QuoteArchive parse_quote_file(std::string_view csv);
// Long format, shortest round-trip number formatting.
std::string serialize_quote_file(const QuoteArchive& archive);

struct ConditioningPoint {
  Date date;
  double value;
};
std::vector<ConditioningPoint> parse_conditioning_file(std::string_view csv);
std::string serialize_conditioning_file(const QuoteArchive& archive);
// Every archive date must be present in the series.
void attach_conditioning(QuoteArchive& archive, const std::vector<ConditioningPoint>& series);

QuoteArchive read_quote_archive(const std::string& path);
std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, std::string_view text);

std::string format_double(double x);

}  // namespace arbsurf
