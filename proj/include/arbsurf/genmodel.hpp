#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace arbsurf {

struct MlpSpec {
  std::vector<int> hidden{64, 128, 256, 512};
  void validate() const;
};

struct VaeConfig {
  int latent_dim = 5;
  double beta = 1.0;
  int cond_dim = 0;
  double learning_rate = 1e-3;
  double weight_decay = 0.01;
  int batch = 200;
  int epochs = 2000;
  std::uint64_t seed = 1;
  MlpSpec mlp;

  void validate() const;
};

struct EpochLoss {
  double neg_elbo = 0.0;
  double recon = 0.0;
  double kld = 0.0;
};

// Encoder maps [x; y] to (mu, log sigma) of the latent posterior, decoder maps [z; y] to the data mean.
// The decoder log sigma is a free per-dimension vector. All weights live in one flat vector.
class Vae {
 public:
  struct Layer {
    int in = 0;
    int out = 0;
    Eigen::Index w = 0;  // offset of the out x in column-major weight block
    Eigen::Index b = 0;  // offset of the bias
  };

  Vae() = default;
  Vae(int data_dim, const VaeConfig& cfg);  // scaled uniform fan-in initialization from cfg.seed

  const VaeConfig& config() const { return cfg_; }
  int data_dim() const { return data_dim_; }
  int latent_dim() const { return cfg_.latent_dim; }
  int cond_dim() const { return cfg_.cond_dim; }
  Eigen::Index num_params() const { return theta_.size(); }

  Eigen::VectorXd& theta() { return theta_; }
  const Eigen::VectorXd& theta() const { return theta_; }
  const std::vector<Layer>& encoder() const { return enc_; }
  const std::vector<Layer>& decoder() const { return dec_; }
  Eigen::Index log_sigma_offset() const { return log_sigma_; }
  Eigen::Map<const Eigen::VectorXd> decoder_log_sigma() const;

  // Columns are examples. cond is cond_dim x batch (ignored when cond_dim is 0).
  void encode(const Eigen::MatrixXd& x, const Eigen::MatrixXd& cond, Eigen::MatrixXd& mu,
              Eigen::MatrixXd& log_sigma) const;
  Eigen::MatrixXd decode(const Eigen::MatrixXd& z, const Eigen::MatrixXd& cond) const;

  std::vector<EpochLoss> loss_trace;

  bool operator==(const Vae& o) const;

 private:
  void build_layout();

  VaeConfig cfg_;
  int data_dim_ = 0;
  std::vector<Layer> enc_, dec_;
  Eigen::Index log_sigma_ = 0;
  Eigen::VectorXd theta_;
};

struct ElboTerms {
  double neg_elbo = 0.0;
  double recon = 0.0;  // Gaussian negative log-likelihood summed over dims, averaged over the batch
  double kld = 0.0;    // KL to N(0, I) summed over dims, averaged over the batch
};

// Single-sample ELBO with the reparameterization noise given (latent_dim x batch).
// When grad is non-null it receives d neg_elbo / d theta.
ElboTerms elbo_loss(const Vae& model, const Eigen::MatrixXd& x, const Eigen::MatrixXd& cond,
                    const Eigen::MatrixXd& noise, Eigen::VectorXd* grad = nullptr);
// Draws the noise from rng.
ElboTerms elbo_loss(const Vae& model, const Eigen::MatrixXd& x, const Eigen::MatrixXd& cond, std::mt19937_64& rng);

// Rows of data (and cond) are examples; cond has cond_dim columns or is empty.
Vae train_vae(const Eigen::MatrixXd& data, const Eigen::MatrixXd& cond, const VaeConfig& cfg);

// Max relative error between analytic and central-difference gradients over a random 1% of the weights.
double gradient_check(const Vae& model, const Eigen::MatrixXd& x, const Eigen::MatrixXd& cond, double eps = 1e-5,
                      std::uint64_t seed = 1);

struct PosteriorDraws {
  Eigen::MatrixXd z;              // n x latent_dim
  std::vector<Eigen::Index> source;  // sampled data row per draw
  Eigen::MatrixXd cond;           // n x cond_dim, the conditioning used per draw
};

// x0 uniform over data rows, z ~ N(mu(x0, y), sigma(x0, y)). With cond_override empty, y is the
// conditioning paired with x0; otherwise row i of cond_override is used for draw i.
PosteriorDraws posterior_sample(const Vae& model, const Eigen::MatrixXd& data, const Eigen::MatrixXd& cond,
                                int n, std::uint64_t seed, const Eigen::MatrixXd& cond_override = {});

// Decoder mean for each row of z; rows of cond pair with rows of z.
Eigen::MatrixXd decode_latent(const Vae& model, const Eigen::MatrixXd& z, const Eigen::MatrixXd& cond = {});

void save_vae(const Vae& model, const std::string& path);
Vae load_vae(const std::string& path);
std::string vae_to_bytes(const Vae& model);
Vae vae_from_bytes(std::string bytes);

std::string loss_trace_csv(const Vae& model);

}  // namespace arbsurf
