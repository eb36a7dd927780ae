#include "arbsurf/genmodel.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>

#include "arbsurf/binary_io.hpp"
#include "arbsurf/errors.hpp"
#include "arbsurf/market_data.hpp"

namespace arbsurf {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using Layers = std::vector<Vae::Layer>;

constexpr char kMagic[] = "VFVA";
constexpr std::uint32_t kVersion = 1;
const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

MatrixXd softplus(const MatrixXd& a) {
  return (a.array() > 30.0).select(a.array(), a.array().exp().log1p()).matrix();
}

MatrixXd sigmoid(const MatrixXd& a) { return (1.0 / (1.0 + (-a.array()).exp())).matrix(); }

Eigen::Map<const MatrixXd> weights(const VectorXd& theta, const Vae::Layer& l) {
  return {theta.data() + l.w, l.out, l.in};
}

Eigen::Map<const VectorXd> bias(const VectorXd& theta, const Vae::Layer& l) { return {theta.data() + l.b, l.out}; }

struct Trace {
  std::vector<MatrixXd> pre;  // pre-activations of the hidden layers
  std::vector<MatrixXd> act;  // act[0] is the input, act[i + 1] = softplus(pre[i])
};

MatrixXd forward(const VectorXd& theta, const Layers& layers, const MatrixXd& input, Trace* trace) {
  MatrixXd a = input;
  if (trace) {
    trace->pre.clear();
    trace->act.assign(1, input);
  }
  for (std::size_t i = 0; i < layers.size(); ++i) {
    MatrixXd z = weights(theta, layers[i]) * a;
    z.colwise() += bias(theta, layers[i]);
    if (i + 1 == layers.size()) return z;
    a = softplus(z);
    if (trace) {
      trace->pre.push_back(std::move(z));
      trace->act.push_back(a);
    }
  }
  return a;
}

// Accumulates parameter gradients into grad and returns the gradient with respect to the input.
MatrixXd backward(const VectorXd& theta, const Layers& layers, const Trace& trace, MatrixXd d_out, VectorXd& grad) {
  for (std::size_t k = layers.size(); k-- > 0;) {
    const auto& l = layers[k];
    Eigen::Map<MatrixXd>(grad.data() + l.w, l.out, l.in).noalias() += d_out * trace.act[k].transpose();
    Eigen::Map<VectorXd>(grad.data() + l.b, l.out) += d_out.rowwise().sum();
    MatrixXd d_in = weights(theta, l).transpose() * d_out;
    if (k > 0) d_in.array() *= sigmoid(trace.pre[k - 1]).array();
    d_out = std::move(d_in);
  }
  return d_out;
}

MatrixXd stack(const MatrixXd& top, const MatrixXd& bottom, int bottom_rows) {
  if (bottom_rows == 0) return top;
  MatrixXd out(top.rows() + bottom_rows, top.cols());
  out.topRows(top.rows()) = top;
  out.bottomRows(bottom_rows) = bottom;
  return out;
}

void check_cond(const Vae& m, const MatrixXd& cond, Index examples, const char* what) {
  if (m.cond_dim() == 0) return;
  if (cond.rows() != m.cond_dim() || cond.cols() != examples)
    throw std::invalid_argument(std::string(what) + ": conditioning shape does not match the model");
}

MatrixXd standard_normal(std::mt19937_64& rng, Index rows, Index cols) {
  std::normal_distribution<double> nd(0.0, 1.0);
  MatrixXd e(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) e(i, j) = nd(rng);
  return e;
}

}  // namespace

void MlpSpec::validate() const {
  if (hidden.empty()) throw ConfigError("vae: at least one hidden layer is required");
  for (int w : hidden)
    if (w < 1) throw ConfigError("vae: hidden widths must be positive");
}

void VaeConfig::validate() const {
  mlp.validate();
  if (latent_dim < 1) throw ConfigError("vae.latent_dim must be at least 1");
  if (!(beta > 0.0) || !std::isfinite(beta)) throw ConfigError("vae.beta must be positive");
  if (cond_dim < 0) throw ConfigError("vae.cond_dim must be nonnegative");
  if (!(learning_rate > 0.0)) throw ConfigError("vae.learning_rate must be positive");
  if (!(weight_decay >= 0.0)) throw ConfigError("vae.weight_decay must be nonnegative");
  if (batch < 1) throw ConfigError("vae.batch must be at least 1");
  if (epochs < 0) throw ConfigError("vae.epochs must be nonnegative");
}

void Vae::build_layout() {
  Index off = 0;
  auto chain = [&](int in, int out) {
    Layers ls;
    int prev = in;
    std::vector<int> widths = cfg_.mlp.hidden;
    widths.push_back(out);
    for (int w : widths) {
      Layer l{prev, w, off, off + static_cast<Index>(prev) * w};
      off = l.b + w;
      ls.push_back(l);
      prev = w;
    }
    return ls;
  };
  enc_ = chain(data_dim_ + cfg_.cond_dim, 2 * cfg_.latent_dim);
  dec_ = chain(cfg_.latent_dim + cfg_.cond_dim, data_dim_);
  log_sigma_ = off;
  theta_ = VectorXd::Zero(off + data_dim_);
}

Vae::Vae(int data_dim, const VaeConfig& cfg) : cfg_(cfg), data_dim_(data_dim) {
  cfg.validate();
  if (data_dim < 1) throw ConfigError("vae: data dimension must be at least 1");
  build_layout();
  std::mt19937_64 rng(cfg.seed);
  for (const auto* net : {&enc_, &dec_})
    for (const auto& l : *net) {
      std::uniform_real_distribution<double> u(-1.0 / std::sqrt(l.in), 1.0 / std::sqrt(l.in));
      for (Index i = l.w; i < l.b + l.out; ++i) theta_[i] = u(rng);
    }
}

Eigen::Map<const VectorXd> Vae::decoder_log_sigma() const { return {theta_.data() + log_sigma_, data_dim_}; }

void Vae::encode(const MatrixXd& x, const MatrixXd& cond, MatrixXd& mu, MatrixXd& log_sigma) const {
  if (x.rows() != data_dim_) throw std::invalid_argument("encode: data dimension mismatch");
  check_cond(*this, cond, x.cols(), "encode");
  MatrixXd out = forward(theta_, enc_, stack(x, cond, cfg_.cond_dim), nullptr);
  mu = out.topRows(cfg_.latent_dim);
  log_sigma = out.bottomRows(cfg_.latent_dim);
}

MatrixXd Vae::decode(const MatrixXd& z, const MatrixXd& cond) const {
  if (z.rows() != cfg_.latent_dim) throw std::invalid_argument("decode: latent dimension mismatch");
  check_cond(*this, cond, z.cols(), "decode");
  return forward(theta_, dec_, stack(z, cond, cfg_.cond_dim), nullptr);
}

bool Vae::operator==(const Vae& o) const {
  auto same_cfg = [](const VaeConfig& a, const VaeConfig& b) {
    return a.latent_dim == b.latent_dim && a.beta == b.beta && a.cond_dim == b.cond_dim &&
           a.learning_rate == b.learning_rate && a.weight_decay == b.weight_decay && a.batch == b.batch &&
           a.epochs == b.epochs && a.seed == b.seed && a.mlp.hidden == b.mlp.hidden;
  };
  if (!same_cfg(cfg_, o.cfg_) || data_dim_ != o.data_dim_ || theta_ != o.theta_) return false;
  if (loss_trace.size() != o.loss_trace.size()) return false;
  for (std::size_t i = 0; i < loss_trace.size(); ++i)
    if (loss_trace[i].neg_elbo != o.loss_trace[i].neg_elbo || loss_trace[i].recon != o.loss_trace[i].recon ||
        loss_trace[i].kld != o.loss_trace[i].kld)
      return false;
  return true;
}

ElboTerms elbo_loss(const Vae& m, const MatrixXd& x, const MatrixXd& cond, const MatrixXd& noise, VectorXd* grad) {
  const Index batch = x.cols();
  const int d = m.data_dim(), k = m.latent_dim(), c = m.cond_dim();
  if (batch == 0) throw std::invalid_argument("elbo: empty batch");
  if (x.rows() != d) throw std::invalid_argument("elbo: data dimension mismatch");
  if (noise.rows() != k || noise.cols() != batch) throw std::invalid_argument("elbo: noise shape mismatch");
  check_cond(m, cond, batch, "elbo");
  const VectorXd& theta = m.theta();
  const double beta = m.config().beta;

  Trace enc, dec;
  MatrixXd eout = forward(theta, m.encoder(), stack(x, cond, c), grad ? &enc : nullptr);
  MatrixXd mu = eout.topRows(k), ls = eout.bottomRows(k);
  MatrixXd sig = ls.array().exp().matrix();
  MatrixXd z = mu + sig.cwiseProduct(noise);
  MatrixXd mean = forward(theta, m.decoder(), stack(z, cond, c), grad ? &dec : nullptr);
  VectorXd s = m.decoder_log_sigma();
  VectorXd inv_var = (-2.0 * s.array()).exp();

  MatrixXd resid = x - mean;
  double recon = batch * (d * kHalfLog2Pi + s.sum()) +
                 0.5 * (resid.array().square().colwise() * inv_var.array()).sum();
  double kld = 0.5 * (mu.array().square() + sig.array().square() - 1.0 - 2.0 * ls.array()).sum();
  ElboTerms out;
  out.recon = recon / batch;
  out.kld = kld / batch;
  out.neg_elbo = out.recon + beta * out.kld;
  if (!std::isfinite(out.neg_elbo)) throw NumericalError("vae forward pass produced a non-finite loss");
  if (!grad) return out;

  grad->setZero(theta.size());
  const double inv_b = 1.0 / batch;
  Eigen::Map<VectorXd>(grad->data() + m.log_sigma_offset(), d) =
      inv_b * (batch - (resid.array().square().colwise() * inv_var.array()).rowwise().sum()).matrix();
  MatrixXd d_mean = -inv_b * (resid.array().colwise() * inv_var.array()).matrix();
  MatrixXd d_dec_in = backward(theta, m.decoder(), dec, std::move(d_mean), *grad);
  MatrixXd dz = d_dec_in.topRows(k);
  MatrixXd d_eout(2 * k, batch);
  d_eout.topRows(k) = dz + beta * inv_b * mu;
  d_eout.bottomRows(k) = (dz.array() * noise.array() * sig.array() + beta * inv_b * (sig.array().square() - 1.0)).matrix();
  backward(theta, m.encoder(), enc, std::move(d_eout), *grad);
  return out;
}

ElboTerms elbo_loss(const Vae& m, const MatrixXd& x, const MatrixXd& cond, std::mt19937_64& rng) {
  return elbo_loss(m, x, cond, standard_normal(rng, m.latent_dim(), x.cols()));
}

Vae train_vae(const MatrixXd& data, const MatrixXd& cond, const VaeConfig& cfg) {
  cfg.validate();
  const Index n = data.rows();
  if (n == 0) throw DataError("vae: empty training set");
  if (!data.allFinite()) throw DataError("vae: training data must be finite");
  if (cfg.cond_dim > 0 && (cond.rows() != n || cond.cols() != cfg.cond_dim))
    throw DataError("vae: conditioning must have one row per example and cond_dim columns");
  if (cfg.cond_dim == 0 && cond.size() != 0) throw ConfigError("vae: conditioning given but cond_dim is 0");
  Vae model(static_cast<int>(data.cols()), cfg);
  const MatrixXd xt = data.transpose();
  const MatrixXd ct = cond.transpose();
  const Index batch = std::min<Index>(cfg.batch, n);
  const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  VectorXd& theta = model.theta();
  VectorXd m1 = VectorXd::Zero(theta.size()), m2 = VectorXd::Zero(theta.size()), grad;
  std::mt19937_64 rng(cfg.seed ^ 0x5DEECE66DULL);
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  long step = 0;
  MatrixXd xb, cb;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    EpochLoss acc;
    for (Index start = 0; start < n; start += batch) {
      const Index len = std::min(batch, n - start);
      xb.resize(xt.rows(), len);
      cb.resize(ct.rows(), len);
      for (Index j = 0; j < len; ++j) {
        xb.col(j) = xt.col(order[start + j]);
        if (cfg.cond_dim > 0) cb.col(j) = ct.col(order[start + j]);
      }
      ElboTerms t;
      try {
        t = elbo_loss(model, xb, cb, standard_normal(rng, cfg.latent_dim, len), &grad);
      } catch (const NumericalError&) {
        std::ostringstream msg;
        msg << "vae training diverged at epoch " << epoch + 1;
        if (!model.loss_trace.empty()) msg << " (last epoch loss " << model.loss_trace.back().neg_elbo << ")";
        throw NumericalError(msg.str());
      }
      acc.neg_elbo += t.neg_elbo * len;
      acc.recon += t.recon * len;
      acc.kld += t.kld * len;
      ++step;
      m1 = b1 * m1 + (1.0 - b1) * grad;
      m2 = b2 * m2 + (1.0 - b2) * grad.cwiseAbs2();
      const double c1 = 1.0 - std::pow(b1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(b2, static_cast<double>(step));
      theta *= 1.0 - cfg.learning_rate * cfg.weight_decay;
      theta.array() -= cfg.learning_rate * (m1.array() / c1) / ((m2.array() / c2).sqrt() + eps);
    }
    acc.neg_elbo /= static_cast<double>(n);
    acc.recon /= static_cast<double>(n);
    acc.kld /= static_cast<double>(n);
    model.loss_trace.push_back(acc);
  }
  if (!theta.allFinite()) throw NumericalError("vae training produced non-finite weights");
  return model;
}

double gradient_check(const Vae& model, const MatrixXd& x, const MatrixXd& cond, double eps, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const MatrixXd xt = x.transpose(), ct = cond.transpose();
  const MatrixXd noise = standard_normal(rng, model.latent_dim(), xt.cols());
  VectorXd grad;
  elbo_loss(model, xt, ct, noise, &grad);
  const Index p = model.num_params();
  std::vector<Index> idx(static_cast<std::size_t>(p));
  std::iota(idx.begin(), idx.end(), Index{0});
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(static_cast<std::size_t>(std::max<Index>(1, (p + 99) / 100)));
  Vae probe = model;
  std::vector<double> fd(idx.size());
  double largest = 0.0;
  for (std::size_t j = 0; j < idx.size(); ++j) {
    const Index i = idx[j];
    const double orig = probe.theta()[i];
    probe.theta()[i] = orig + eps;
    const double up = elbo_loss(probe, xt, ct, noise).neg_elbo;
    probe.theta()[i] = orig - eps;
    const double down = elbo_loss(probe, xt, ct, noise).neg_elbo;
    probe.theta()[i] = orig;
    fd[j] = (up - down) / (2.0 * eps);
    largest = std::max({largest, std::abs(fd[j]), std::abs(grad[i])});
  }
  // Entries far below the largest gradient are compared against a floor: their differences are
  // dominated by roundoff in the loss, not by the derivative.
  const double floor = std::max(1e-3 * largest, 1e-12);
  double worst = 0.0;
  for (std::size_t j = 0; j < idx.size(); ++j) {
    const double a = grad[idx[j]];
    worst = std::max(worst, std::abs(fd[j] - a) / std::max({std::abs(fd[j]), std::abs(a), floor}));
  }
  return worst;
}

PosteriorDraws posterior_sample(const Vae& model, const MatrixXd& data, const MatrixXd& cond, int n,
                                std::uint64_t seed, const MatrixXd& cond_override) {
  if (n < 0) throw std::invalid_argument("posterior_sample: negative draw count");
  if (data.rows() == 0) throw DataError("posterior_sample: empty dataset");
  if (data.cols() != model.data_dim()) throw std::invalid_argument("posterior_sample: data dimension mismatch");
  const int c = model.cond_dim();
  const bool override_cond = cond_override.size() > 0;
  if (c > 0 && override_cond && (cond_override.rows() != n || cond_override.cols() != c))
    throw std::invalid_argument("posterior_sample: one conditioning row per draw is required");
  if (c > 0 && !override_cond && (cond.rows() != data.rows() || cond.cols() != c))
    throw std::invalid_argument("posterior_sample: conditioning must pair with data rows");

  PosteriorDraws out;
  out.z.resize(n, model.latent_dim());
  out.cond.resize(n, c);
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<Index> pick(0, data.rows() - 1);
  MatrixXd xs(model.data_dim(), n), ys(c, n);
  for (int i = 0; i < n; ++i) {
    const Index r = pick(rng);
    out.source.push_back(r);
    xs.col(i) = data.row(r).transpose();
    if (c > 0) ys.col(i) = override_cond ? cond_override.row(i).transpose() : cond.row(r).transpose();
  }
  if (n == 0) return out;
  MatrixXd mu, ls;
  model.encode(xs, ys, mu, ls);
  const MatrixXd eps = standard_normal(rng, model.latent_dim(), n);
  out.z = (mu + ls.array().exp().matrix().cwiseProduct(eps)).transpose();
  if (c > 0) out.cond = ys.transpose();
  return out;
}

MatrixXd decode_latent(const Vae& model, const MatrixXd& z, const MatrixXd& cond) {
  if (!z.allFinite()) throw std::invalid_argument("decode_latent: latent vectors must be finite");
  if (z.rows() == 0) return MatrixXd(0, model.data_dim());
  return model.decode(z.transpose(), cond.transpose()).transpose();
}

std::string vae_to_bytes(const Vae& m) {
  BinaryWriter w(std::string_view(kMagic, 4), kVersion);
  const auto& cfg = m.config();
  w.u32(static_cast<std::uint32_t>(m.data_dim()));
  w.u32(static_cast<std::uint32_t>(cfg.latent_dim));
  w.u32(static_cast<std::uint32_t>(cfg.cond_dim));
  w.u32(static_cast<std::uint32_t>(cfg.mlp.hidden.size()));
  for (int h : cfg.mlp.hidden) w.u32(static_cast<std::uint32_t>(h));
  w.f64(cfg.beta);
  w.f64(cfg.learning_rate);
  w.f64(cfg.weight_decay);
  w.u32(static_cast<std::uint32_t>(cfg.batch));
  w.u32(static_cast<std::uint32_t>(cfg.epochs));
  w.u64(cfg.seed);
  for (const auto* net : {&m.encoder(), &m.decoder()}) {
    w.u32(static_cast<std::uint32_t>(net->size()));
    for (const auto& l : *net) {
      w.matrix(weights(m.theta(), l));
      w.matrix(bias(m.theta(), l));
    }
  }
  w.matrix(m.decoder_log_sigma());
  w.u64(m.loss_trace.size());
  for (const auto& e : m.loss_trace) {
    w.f64(e.neg_elbo);
    w.f64(e.recon);
    w.f64(e.kld);
  }
  return w.bytes();
}

Vae vae_from_bytes(std::string bytes) {
  BinaryReader r(std::move(bytes), std::string_view(kMagic, 4), kVersion);
  VaeConfig cfg;
  const int data_dim = static_cast<int>(r.u32());
  cfg.latent_dim = static_cast<int>(r.u32());
  cfg.cond_dim = static_cast<int>(r.u32());
  const std::uint32_t layers = r.u32();
  if (layers > 64) throw DataError("VFVA: implausible layer count");
  cfg.mlp.hidden.clear();
  for (std::uint32_t i = 0; i < layers; ++i) cfg.mlp.hidden.push_back(static_cast<int>(r.u32()));
  cfg.beta = r.f64();
  cfg.learning_rate = r.f64();
  cfg.weight_decay = r.f64();
  cfg.batch = static_cast<int>(r.u32());
  cfg.epochs = static_cast<int>(r.u32());
  cfg.seed = r.u64();
  Vae m;
  try {
    m = Vae(data_dim, cfg);
  } catch (const ConfigError& e) {
    throw DataError(std::string("VFVA: invalid config block: ") + e.what());
  }
  for (const auto* net : {&m.encoder(), &m.decoder()}) {
    if (r.u32() != net->size()) throw DataError("VFVA: layer count does not match the config");
    for (const auto& l : *net) {
      MatrixXd w = r.matrix(), b = r.matrix();
      if (w.rows() != l.out || w.cols() != l.in || b.rows() != l.out || b.cols() != 1)
        throw DataError("VFVA: layer shape does not match the config");
      Eigen::Map<MatrixXd>(m.theta().data() + l.w, l.out, l.in) = w;
      Eigen::Map<VectorXd>(m.theta().data() + l.b, l.out) = b;
    }
  }
  MatrixXd s = r.matrix();
  if (s.rows() != data_dim || s.cols() != 1) throw DataError("VFVA: decoder sigma shape mismatch");
  Eigen::Map<VectorXd>(m.theta().data() + m.log_sigma_offset(), data_dim) = s;
  const std::uint64_t epochs = r.u64();
  if (epochs > (std::uint64_t{1} << 32)) throw DataError("VFVA: implausible loss trace length");
  for (std::uint64_t i = 0; i < epochs; ++i) {
    EpochLoss e;
    e.neg_elbo = r.f64();
    e.recon = r.f64();
    e.kld = r.f64();
    m.loss_trace.push_back(e);
  }
  if (!r.at_end()) throw DataError("VFVA: trailing bytes");
  if (!m.theta().allFinite()) throw DataError("VFVA: non-finite weights");
  return m;
}

void save_vae(const Vae& model, const std::string& path) { write_text_file(path, vae_to_bytes(model)); }

Vae load_vae(const std::string& path) { return vae_from_bytes(read_text_file(path)); }

std::string loss_trace_csv(const Vae& model) {
  std::string out = "epoch,neg_elbo,recon,kld\n";
  for (std::size_t i = 0; i < model.loss_trace.size(); ++i) {
    const auto& e = model.loss_trace[i];
    out += std::to_string(i + 1) + "," + format_double(e.neg_elbo) + "," + format_double(e.recon) + "," +
           format_double(e.kld) + "\n";
  }
  return out;
}

}  // namespace arbsurf
