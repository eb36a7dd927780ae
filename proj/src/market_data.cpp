#include "arbsurf/market_data.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "arbsurf/errors.hpp"

namespace arbsurf {

namespace {

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  for (auto& f : out) {
    while (!f.empty() && (f.front() == ' ' || f.front() == '\t')) f.remove_prefix(1);
    while (!f.empty() && (f.back() == ' ' || f.back() == '\t' || f.back() == '\r')) f.remove_suffix(1);
  }
  return out;
}

std::vector<std::string_view> lines_of(std::string_view text) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (start < text.size()) {
    auto pos = text.find('\n', start);
    if (pos == std::string_view::npos) pos = text.size();
    auto line = text.substr(start, pos - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    out.push_back(line);
    start = pos + 1;
  }
  return out;
}

double parse_number(std::string_view s, std::size_t line_no) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size() || !std::isfinite(v))
    throw DataError("line " + std::to_string(line_no) + ": bad number '" + std::string(s) + "'");
  return v;
}

int delta_index(double d) {
  for (int i = 0; i < kNumDeltas; ++i)
    if (std::abs(d - kDeltas[i]) < 1e-9) return i;
  return -1;
}

struct PartialDay {
  IVSurfaceGrid grid;
  std::array<bool, kGridSize> filled{};
  std::array<bool, kNumTenors> rates_set{};
  bool spot_set = false;
};

void set_day_fields(PartialDay& pd, int tenor, double spot, double rd, double rf, std::size_t line_no) {
  auto fail = [&](const char* what) {
    throw DataError("line " + std::to_string(line_no) + ": inconsistent " + what + " within a day");
  };
  if (!(spot > 0.0)) throw DataError("line " + std::to_string(line_no) + ": non-positive spot");
  if (pd.spot_set && pd.grid.spot != spot) fail("spot");
  pd.grid.spot = spot;
  pd.spot_set = true;
  if (pd.rates_set[tenor] && (pd.grid.rd[tenor] != rd || pd.grid.rf[tenor] != rf)) fail("rates");
  pd.grid.rd[tenor] = rd;
  pd.grid.rf[tenor] = rf;
  pd.rates_set[tenor] = true;
}

}  // namespace

Tenor parse_tenor(std::string_view label) {
  for (int i = 0; i < kNumTenors; ++i)
    if (kTenorLabels[i] == label) return static_cast<Tenor>(i);
  throw DataError("unknown tenor '" + std::string(label) + "'");
}

Date parse_date(std::string_view iso) {
  auto parts = split(iso, '-');
  if (parts.size() != 3 || parts[0].size() != 4 || parts[1].size() != 2 || parts[2].size() != 2)
    throw DataError("bad date '" + std::string(iso) + "'");
  int y = 0;
  unsigned m = 0, d = 0;
  auto ok = [](auto res, std::string_view s) {
    return res.ec == std::errc() && res.ptr == s.data() + s.size();
  };
  if (!ok(std::from_chars(parts[0].data(), parts[0].data() + 4, y), parts[0]) ||
      !ok(std::from_chars(parts[1].data(), parts[1].data() + 2, m), parts[1]) ||
      !ok(std::from_chars(parts[2].data(), parts[2].data() + 2, d), parts[2]))
    throw DataError("bad date '" + std::string(iso) + "'");
  Date out{std::chrono::year(y), std::chrono::month(m), std::chrono::day(d)};
  if (!out.ok()) throw DataError("invalid date '" + std::string(iso) + "'");
  return out;
}

std::string format_date(Date d) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(d.year()),
                static_cast<unsigned>(d.month()), static_cast<unsigned>(d.day()));
  return buf;
}

std::string format_double(double x) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

double IVSurfaceGrid::forward(int tenor) const { return spot * std::exp(carry(tenor)); }

GridVector IVSurfaceGrid::flatten() const { return Eigen::Map<const GridVector>(vols.data()); }

VolGrid IVSurfaceGrid::unflatten(const GridVector& v) { return Eigen::Map<const VolGrid>(v.data()); }

bool IVSurfaceGrid::operator==(const IVSurfaceGrid& o) const {
  return date == o.date && spot == o.spot && rd == o.rd && rf == o.rf && vols == o.vols;
}

std::array<double, kNumDeltas> convert_broker_quotes(const BrokerQuoteRow& r) {
  if (!(r.atm > 0.0)) throw DataError("atm vol must be positive");
  std::array<double, kNumDeltas> v{r.atm + r.bf10 + r.rr10 / 2, r.atm + r.bf25 + r.rr25 / 2, r.atm,
                                   r.atm + r.bf25 - r.rr25 / 2, r.atm + r.bf10 - r.rr10 / 2};
  for (double x : v)
    if (!(x > 0.0) || !std::isfinite(x)) throw DataError("broker quotes imply a non-positive wing vol");
  return v;
}

QuoteArchive QuoteArchive::slice(std::size_t first, std::size_t count) const {
  QuoteArchive out;
  out.days.assign(days.begin() + first, days.begin() + first + count);
  if (has_conditioning())
    out.conditioning.assign(conditioning.begin() + first, conditioning.begin() + first + count);
  return out;
}

QuoteArchive parse_quote_file(std::string_view csv) {
  auto lines = lines_of(csv);
  std::size_t i = 0;
  while (i < lines.size() && lines[i].empty()) ++i;
  if (i == lines.size()) throw DataError("missing header row");
  auto header = split(lines[i], ',');
  static const std::vector<std::string_view> long_cols{"date", "tenor", "delta", "iv", "spot", "rd", "rf"};
  static const std::vector<std::string_view> broker_cols{"date", "tenor", "atm",  "rr25", "bf25",
                                                         "rr10", "bf10",  "spot", "rd",   "rf"};
  bool is_long = header == long_cols;
  bool is_broker = header == broker_cols;
  if (!is_long && !is_broker) throw DataError("line " + std::to_string(i + 1) + ": unrecognized header");

  std::map<Date, PartialDay> days;
  for (++i; i < lines.size(); ++i) {
    std::size_t line_no = i + 1;
    if (lines[i].empty()) continue;
    auto f = split(lines[i], ',');
    if (f.size() != header.size())
      throw DataError("line " + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                      " fields, got " + std::to_string(f.size()));
    Date date;
    int tenor = 0;
    try {
      date = parse_date(f[0]);
      tenor = static_cast<int>(parse_tenor(f[1]));
    } catch (const DataError& e) {
      throw DataError("line " + std::to_string(line_no) + ": " + e.what());
    }
    auto& pd = days[date];
    pd.grid.date = date;
    if (is_long) {
      int di = delta_index(parse_number(f[2], line_no));
      if (di < 0) throw DataError("line " + std::to_string(line_no) + ": delta not on the grid");
      double iv = parse_number(f[3], line_no);
      if (!(iv > 0.0)) throw DataError("line " + std::to_string(line_no) + ": non-positive vol");
      set_day_fields(pd, tenor, parse_number(f[4], line_no), parse_number(f[5], line_no),
                     parse_number(f[6], line_no), line_no);
      int cell = tenor * kNumDeltas + di;
      if (pd.filled[cell]) throw DataError("line " + std::to_string(line_no) + ": duplicate cell");
      pd.grid.vols(di, tenor) = iv;
      pd.filled[cell] = true;
    } else {
      BrokerQuoteRow row{static_cast<Tenor>(tenor),       parse_number(f[2], line_no),
                         parse_number(f[3], line_no), parse_number(f[4], line_no),
                         parse_number(f[5], line_no), parse_number(f[6], line_no)};
      std::array<double, kNumDeltas> v;
      try {
        v = convert_broker_quotes(row);
      } catch (const DataError& e) {
        throw DataError("line " + std::to_string(line_no) + ": " + e.what());
      }
      set_day_fields(pd, tenor, parse_number(f[7], line_no), parse_number(f[8], line_no),
                     parse_number(f[9], line_no), line_no);
      for (int di = 0; di < kNumDeltas; ++di) {
        int cell = tenor * kNumDeltas + di;
        if (pd.filled[cell]) throw DataError("line " + std::to_string(line_no) + ": duplicate tenor");
        pd.grid.vols(di, tenor) = v[di];
        pd.filled[cell] = true;
      }
    }
  }

  QuoteArchive out;
  for (auto& [date, pd] : days) {
    for (int c = 0; c < kGridSize; ++c)
      if (!pd.filled[c])
        throw DataError("missing cell for " + format_date(date) + " tenor " +
                        std::string(kTenorLabels[c / kNumDeltas]) + " delta " +
                        format_double(kDeltas[c % kNumDeltas]));
    out.days.push_back(pd.grid);
  }
  return out;
}

std::string serialize_quote_file(const QuoteArchive& archive) {
  std::string out = "date,tenor,delta,iv,spot,rd,rf\n";
  for (const auto& d : archive.days) {
    auto date = format_date(d.date);
    for (int t = 0; t < kNumTenors; ++t)
      for (int k = 0; k < kNumDeltas; ++k) {
        out += date;
        out += ',';
        out += kTenorLabels[t];
        out += ',' + format_double(kDeltas[k]) + ',' + format_double(d.vols(k, t)) + ',' +
               format_double(d.spot) + ',' + format_double(d.rd[t]) + ',' + format_double(d.rf[t]) + '\n';
      }
  }
  return out;
}

std::vector<ConditioningPoint> parse_conditioning_file(std::string_view csv) {
  auto lines = lines_of(csv);
  if (lines.empty() || split(lines[0], ',') != std::vector<std::string_view>{"date", "value"})
    throw DataError("line 1: conditioning header must be date,value");
  std::vector<ConditioningPoint> out;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    auto f = split(lines[i], ',');
    if (f.size() != 2) throw DataError("line " + std::to_string(i + 1) + ": expected 2 fields");
    Date d;
    try {
      d = parse_date(f[0]);
    } catch (const DataError& e) {
      throw DataError("line " + std::to_string(i + 1) + ": " + e.what());
    }
    if (!out.empty() && !(out.back().date < d))
      throw DataError("line " + std::to_string(i + 1) + ": dates must be strictly increasing");
    out.push_back({d, parse_number(f[1], i + 1)});
  }
  return out;
}

std::string serialize_conditioning_file(const QuoteArchive& archive) {
  std::string out = "date,value\n";
  for (std::size_t i = 0; i < archive.conditioning.size(); ++i)
    out += format_date(archive.days[i].date) + ',' + format_double(archive.conditioning[i]) + '\n';
  return out;
}

void attach_conditioning(QuoteArchive& archive, const std::vector<ConditioningPoint>& series) {
  std::map<Date, double> by_date;
  for (const auto& p : series) by_date[p.date] = p.value;
  std::vector<double> aligned;
  aligned.reserve(archive.days.size());
  for (const auto& d : archive.days) {
    auto it = by_date.find(d.date);
    if (it == by_date.end()) throw DataError("conditioning series has no value for " + format_date(d.date));
    aligned.push_back(it->second);
  }
  archive.conditioning = std::move(aligned);
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
}

QuoteArchive read_quote_archive(const std::string& path) { return parse_quote_file(read_text_file(path)); }

}  // namespace arbsurf
