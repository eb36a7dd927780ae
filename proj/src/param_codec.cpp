#include "arbsurf/param_codec.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "arbsurf/calibrate.hpp"
#include "arbsurf/errors.hpp"

namespace arbsurf {

namespace {

double logit(double p) { return std::log(p / (1.0 - p)); }
double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

constexpr double kMinAPlus = 1.0 + 1e-3;
constexpr double kMinAMinus = 1e-3;
constexpr double kMinM = 1.0 + 1e-3;
constexpr double kYOff = 1e-6;

double repair_y(double y) {
  y = std::clamp(y, 1e-3, 2.0 - 1e-3);
  if (std::abs(y - 1.0) < kYOff) y = y < 1.0 ? 1.0 - kYOff : 1.0 + kYOff;
  return y;
}

}  // namespace

int features_per_period(ModelKind kind, int regimes) {
  switch (kind) {
    case ModelKind::Ctmc: return 3 * regimes;
    case ModelKind::Dejd: return 5;
    case ModelKind::Gmjd: return 7;
    case ModelKind::Cgmy: return 4;
  }
  return 0;
}

int feature_dim(ModelKind kind, int periods, int regimes) { return periods * features_per_period(kind, regimes); }

std::vector<std::string> feature_names(ModelKind kind, int periods, int regimes) {
  std::vector<std::string> block;
  switch (kind) {
    case ModelKind::Ctmc:
      for (const char* name : {"mu", "sigma", "lambda"})
        for (int k = 1; k <= regimes; ++k) block.push_back(name + std::to_string(k));
      break;
    case ModelKind::Dejd: block = {"sigma", "lambda", "p", "a_plus", "a_minus"}; break;
    case ModelKind::Gmjd: block = {"sigma", "lambda", "eta2", "mean1", "mean2", "stdev1", "stdev2"}; break;
    case ModelKind::Cgmy: block = {"C", "G", "M", "Y"}; break;
  }
  std::vector<std::string> out;
  for (int n = 1; n <= periods; ++n)
    for (const auto& b : block) out.push_back("p" + std::to_string(n) + "." + b);
  return out;
}

Eigen::VectorXd transform_params(const SdeParams& p) {
  const int periods = p.periods();
  if (p.is_ctmc()) {
    const auto& c = p.ctmc();
    const int k = c.regimes();
    Eigen::VectorXd v(periods * 3 * k);
    for (int n = 0; n < periods; ++n) {
      auto blk = v.segment(n * 3 * k, 3 * k);
      for (int j = 0; j < k; ++j) {
        blk[j] = c.mu(j, n);
        blk[k + j] = std::log(c.sigma(j, n));
        blk[2 * k + j] = std::log(c.lambda(j, n));
      }
    }
    return v;
  }
  const int d = features_per_period(p.kind());
  Eigen::VectorXd v(periods * d);
  for (int n = 0; n < periods; ++n) {
    auto blk = v.segment(n * d, d);
    std::visit(
        [&](const auto& b) {
          using T = std::decay_t<decltype(b)>;
          if constexpr (std::is_same_v<T, DejdParams>) {
            blk << std::log(b.sigma), b.lambda, logit(b.p), b.a_plus, b.a_minus;
          } else if constexpr (std::is_same_v<T, GmjdParams>) {
            blk << std::log(b.sigma), b.lambda, std::log(b.weight[1] / b.weight[0]), b.mean[0], b.mean[1],
                std::log(b.stdev[0]), std::log(b.stdev[1]);
          } else {
            blk << std::log(b.C), std::log(b.G), std::log(b.M), std::log(b.Y);
          }
        },
        p.levy().periods[n]);
  }
  return v;
}

SdeParams inverse_transform(const Eigen::VectorXd& v, ModelKind kind, const MaturitySchedule& sched) {
  const int periods = sched.size();
  SdeParams p;
  p.schedule = sched;
  if (kind == ModelKind::Ctmc) {
    if (periods == 0 || v.size() % (3 * periods) != 0) throw std::invalid_argument("CTMC feature length mismatch");
    const int k = static_cast<int>(v.size() / (3 * periods));
    CtmcParams c;
    c.mu.resize(k, periods);
    c.sigma.resize(k, periods);
    c.lambda.resize(k, periods);
    for (int n = 0; n < periods; ++n) {
      auto blk = v.segment(n * 3 * k, 3 * k);
      std::vector<double> mu(blk.data(), blk.data() + k);
      std::sort(mu.begin(), mu.end());
      for (int j = 0; j < k; ++j) {
        c.mu(j, n) = mu[j];
        c.sigma(j, n) = std::exp(blk[k + j]);
        c.lambda(j, n) = std::exp(blk[2 * k + j]);
      }
    }
    p.model = std::move(c);
    return p;
  }
  const int d = features_per_period(kind);
  if (v.size() != periods * d) throw std::invalid_argument("Levy feature length mismatch");
  LevyParams lp;
  for (int n = 0; n < periods; ++n) {
    auto b = v.segment(n * d, d);
    switch (kind) {
      case ModelKind::Dejd: {
        DejdParams q;
        q.sigma = std::exp(b[0]);
        q.lambda = std::max(b[1], 0.0);
        q.p = std::clamp(sigmoid(b[2]), 1e-12, 1.0 - 1e-12);
        q.a_plus = std::max(b[3], kMinAPlus);
        q.a_minus = std::max(b[4], kMinAMinus);
        lp.periods.push_back(q);
        break;
      }
      case ModelKind::Gmjd: {
        GmjdParams q;
        q.sigma = std::exp(b[0]);
        q.lambda = std::max(b[1], 0.0);
        q.weight = {sigmoid(-b[2]), sigmoid(b[2])};
        q.mean = {b[3], b[4]};
        q.stdev = {std::exp(b[5]), std::exp(b[6])};
        lp.periods.push_back(q);
        break;
      }
      default: {
        CgmyParams q;
        q.C = std::exp(b[0]);
        q.G = std::exp(b[1]);
        q.M = std::max(std::exp(b[2]), kMinM);
        q.Y = repair_y(std::exp(b[3]));
        lp.periods.push_back(q);
        break;
      }
    }
  }
  p.model = std::move(lp);
  return p;
}

Eigen::VectorXd NormalizationStats::apply(const Eigen::VectorXd& x) const {
  if (x.size() != mean.size()) throw std::invalid_argument("feature dimension mismatch");
  return (x - mean).cwiseQuotient(sd);
}

Eigen::VectorXd NormalizationStats::invert(const Eigen::VectorXd& z) const {
  if (z.size() != mean.size()) throw std::invalid_argument("feature dimension mismatch");
  return mean + z.cwiseProduct(sd);
}

Eigen::MatrixXd NormalizationStats::apply_rows(const Eigen::MatrixXd& rows) const {
  if (rows.cols() != mean.size()) throw std::invalid_argument("feature dimension mismatch");
  return (rows.rowwise() - mean.transpose()).array().rowwise() / sd.transpose().array();
}

Eigen::MatrixXd NormalizationStats::invert_rows(const Eigen::MatrixXd& rows) const {
  if (rows.cols() != mean.size()) throw std::invalid_argument("feature dimension mismatch");
  Eigen::MatrixXd out = rows.array().rowwise() * sd.transpose().array();
  return out.rowwise() + mean.transpose();
}

bool NormalizationStats::operator==(const NormalizationStats& o) const {
  return mean.size() == o.mean.size() && mean == o.mean && sd == o.sd && constant == o.constant;
}

std::string NormalizationStats::serialize(const std::vector<std::string>& names) const {
  std::string out;
  for (int i = 0; i < dim(); ++i) {
    std::string name = i < static_cast<int>(names.size()) ? names[i] : "f" + std::to_string(i);
    out += name + "=" + format_double(mean[i]) + "," + format_double(sd[i]) + "," + (constant[i] ? "1" : "0") + "\n";
  }
  return out;
}

NormalizationStats NormalizationStats::parse(const std::string& text) {
  std::vector<double> m, s;
  std::vector<char> c;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    auto eq = line.find('=');
    double a, b;
    int flag;
    if (eq == std::string::npos || std::sscanf(line.c_str() + eq + 1, "%lf,%lf,%d", &a, &b, &flag) != 3)
      throw DataError("stats line " + std::to_string(lineno) + ": expected name=mean,sd,constant");
    if (!(b > 0.0)) throw DataError("stats line " + std::to_string(lineno) + ": sd must be positive");
    m.push_back(a);
    s.push_back(b);
    c.push_back(flag != 0);
  }
  NormalizationStats st;
  st.mean = Eigen::Map<Eigen::VectorXd>(m.data(), m.size());
  st.sd = Eigen::Map<Eigen::VectorXd>(s.data(), s.size());
  st.constant = c;
  return st;
}

NormalizationStats fit_normalization_stats(const Eigen::MatrixXd& rows) {
  if (rows.rows() == 0) throw DataError("normalization stats need at least one row");
  NormalizationStats st;
  const double n = static_cast<double>(rows.rows());
  // Shifted by the first row so identical columns reproduce their value exactly.
  Eigen::RowVectorXd first = rows.row(0);
  st.mean = (first + (rows.rowwise() - first).colwise().sum() / n).transpose();
  st.sd.resize(rows.cols());
  st.constant.assign(rows.cols(), 0);
  for (int j = 0; j < rows.cols(); ++j) {
    double var = (rows.col(j).array() - st.mean[j]).square().sum() / n;
    double sd = std::sqrt(var);
    if (!(sd > 1e-12 * std::max(1.0, std::abs(st.mean[j])))) {
      sd = 1.0;
      st.constant[j] = 1;
    }
    st.sd[j] = sd;
  }
  return st;
}

NormalizationStats fit_normalization_stats(const ParamPanel& panel) {
  if (panel.fits.empty()) throw DataError("normalization stats need a nonempty panel");
  return fit_normalization_stats(panel.feature_matrix());
}

Eigen::VectorXd encode_params(const SdeParams& p, const NormalizationStats& stats) {
  return stats.apply(transform_params(p));
}

SdeParams decode_params(const Eigen::VectorXd& z, const NormalizationStats& stats, ModelKind kind,
                        const MaturitySchedule& sched) {
  Eigen::VectorXd zc = z;
  for (int i = 0; i < zc.size(); ++i)
    zc[i] = std::isfinite(zc[i]) ? std::clamp(zc[i], -kDecodeClamp, kDecodeClamp) : 0.0;
  return inverse_transform(stats.invert(zc), kind, sched);
}

Eigen::MatrixXd iv_matrix(const QuoteArchive& archive) {
  Eigen::MatrixXd rows(archive.size(), kGridSize);
  for (std::size_t i = 0; i < archive.size(); ++i) rows.row(i) = archive.days[i].flatten().transpose();
  return rows;
}

IvDataset build_iv_dataset(const QuoteArchive& archive) {
  if (archive.size() == 0) throw DataError("IV dataset needs a nonempty archive");
  IvDataset ds;
  Eigen::MatrixXd raw = iv_matrix(archive);
  ds.stats = fit_normalization_stats(raw);
  ds.rows = ds.stats.apply_rows(raw);
  return ds;
}

GridVector decode_iv(const Eigen::VectorXd& z, const NormalizationStats& stats) { return stats.invert(z); }

std::string features_to_csv(const std::vector<std::string>& names, const Eigen::MatrixXd& rows,
                            const std::vector<std::string>& row_labels) {
  std::string out;
  const bool labels = !row_labels.empty();
  if (labels) out += "label,";
  for (std::size_t j = 0; j < names.size(); ++j) out += (j ? "," : "") + names[j];
  out += "\n";
  for (int i = 0; i < rows.rows(); ++i) {
    if (labels) out += row_labels.at(i) + ",";
    for (int j = 0; j < rows.cols(); ++j) out += (j ? "," : "") + format_double(rows(i, j));
    out += "\n";
  }
  return out;
}

}  // namespace arbsurf
