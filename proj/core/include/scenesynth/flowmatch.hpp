#pragma once

// Conditional flow matching over a toy latent space.
//
// Training regresses v(z_t, t, C) onto the constant velocity z1 - z0 along
// z_t = (1 - t) z0 + t z1. Sampling integrates dz/dt = v from Gaussian noise
// at t = 0 to t = 1 with forward Euler and classifier-free guidance.

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "scenesynth/caption.hpp"
#include "scenesynth/diffcore.hpp"
#include "scenesynth/optim.hpp"

namespace scenesynth::flowmatch {

using diffcore::Matrix;
using diffcore::Param;
using diffcore::Tape;
using diffcore::Var;

enum class FlowErrc {
  ShapeMismatch,
  TOutOfRange,
  NonFiniteState,
  DivergedLoss,
  InvalidConfig,
  InvalidTask,
};

using FlowError = CodedError<FlowErrc>;

/// Shape of one latent clip: `frames` rows of `dim` features.
struct LatentSpec {
  std::size_t dim = 8;
  double frame_rate_hz = 25.0;
  std::size_t frames = 4;

  void validate() const;
  double duration_seconds() const noexcept {
    return static_cast<double>(frames) / frame_rate_hz;
  }
};

/// std::nullopt selects the unconditional (null-embedding) branch.
using Condition = std::optional<caption::StructuredCaption>;

/// (1 - t) z0 + t z1.
Matrix interpolate(const Matrix& z0, const Matrix& z1, double t);
/// z1 - z0, the velocity target along the straight path.
Matrix fm_target(const Matrix& z0, const Matrix& z1);

struct FlowSample {
  Matrix z0;
  Matrix z1;
  double t = 0.0;
  Matrix zt;

  static FlowSample make(Matrix z0, Matrix z1, double t);
};

/// A conditional vector field. forward() binds trainable parameters on the
/// tape; velocity() is gradient-free and safe to call concurrently on a
/// model that is not being trained.
class VelocityField {
 public:
  virtual ~VelocityField() = default;

  virtual Var forward(Tape& tape, Var zt, double t, const Condition& cond) = 0;
  virtual Matrix velocity(const Matrix& zt, double t,
                          const Condition& cond) const = 0;
};

struct FlowExample {
  Matrix z0;
  Matrix z1;
  double t = 0.0;
  Condition condition;
};

/// Batch mean of ||v(z_t, t, C) - (z1 - z0)||_F^2 as a 1x1 node.
Var fm_loss(Tape& tape, VelocityField& field,
            std::span<const FlowExample> batch);
/// Same quantity without recording gradients.
double fm_loss_value(const VelocityField& field,
                     std::span<const FlowExample> batch);

/// v_u + scale (v_c - v_u). scale 1 returns the conditional pass and scale 0
/// the unconditional pass unchanged.
Matrix cfg_velocity(const VelocityField& field, const Matrix& zt, double t,
                    const Condition& cond, double scale);

struct SamplerConfig {
  std::size_t steps = 25;
  double cfg_scale = 5.0;
  std::uint64_t rng_seed = 0;

  void validate() const;
};

/// Forward Euler from `z0` at t = 0 to t = 1 with uniform steps 1/steps.
Matrix integrate(const VelocityField& field, Matrix z0, const Condition& cond,
                 const SamplerConfig& cfg);

/// Draws z0 ~ N(0, I) of the given shape from `rng`, then integrate().
Matrix sample(const VelocityField& field, const LatentSpec& latent,
              const Condition& cond, const SamplerConfig& cfg,
              std::mt19937_64& rng);

/// 16-dim (by default) sinusoidal features of t in [0, 1], as a 1xN row.
Matrix time_features(double t, std::size_t count);

struct ModelConfig {
  LatentSpec latent;
  std::size_t hidden = 32;
  std::size_t cond_dim = 16;
  std::size_t attn_dim = 16;
  std::size_t ff_hidden = 64;
  std::size_t blocks = 2;
  std::size_t time_features = 16;

  void validate() const;
};

/// Toy stand-in for the text encoder plus transformer backbone:
///   C = E + (mean_rows(E) W_pool + b_pool)        E = token embeddings
///   H = (z_t W_in + b_in) + P + (tfeat(t) W_t + b_t)
///   per block: H += M H;  H += CrossAttn(H, C);  H += FF(H)
///   v = H W_out + b_out
class VectorFieldModel final : public VelocityField {
 public:
  static constexpr std::string_view kUnknownToken = "<unk>";

  VectorFieldModel(ModelConfig config, std::vector<std::string> vocabulary,
                   std::uint64_t init_seed);

  /// "<unk>", the six view tokens, then the sorted words of `captions`.
  static std::vector<std::string> build_vocabulary(
      std::span<const caption::StructuredCaption> captions);

  const ModelConfig& config() const noexcept { return config_; }
  const LatentSpec& latent() const noexcept { return config_.latent; }
  const std::vector<std::string>& vocabulary() const noexcept {
    return vocabulary_;
  }

  /// Whitespace split of the serialized caption, lowercased, view tokens kept
  /// atomic; unknown words map to "<unk>".
  std::vector<std::size_t> tokenize(
      const caption::StructuredCaption& caption) const;

  /// L x cond_dim token states, or the 1 x cond_dim null embedding.
  Matrix encode_condition(const Condition& cond) const;
  Var encode_condition(Tape& tape, const Condition& cond);

  Var forward(Tape& tape, Var zt, double t, const Condition& cond) override;
  Matrix velocity(const Matrix& zt, double t,
                  const Condition& cond) const override;

  std::vector<Param*> parameters();
  std::vector<const Param*> parameters() const;
  std::size_t parameter_count() const;

  /// diffcore-v1 document with the model config and vocabulary as metadata.
  std::string to_checkpoint(
      const diffcore::AdamWState* optimizer = nullptr) const;
  static VectorFieldModel from_checkpoint(std::string_view json);

 private:
  struct Block {
    Param mix;
    Param wq;
    Param wk;
    Param wv;
    Param ff_w1;
    Param ff_b1;
    Param ff_w2;
    Param ff_b2;
  };

  template <typename Self, typename Bind>
  static Var encode_impl(Self& self, Tape& tape, const Condition& cond,
                         Bind bind);
  template <typename Self, typename Bind>
  static Var forward_impl(Self& self, Tape& tape, Var zt, double t,
                          const Condition& cond, Bind bind);

  ModelConfig config_;
  std::vector<std::string> vocabulary_;
  Param token_table_;
  Param pool_w_;
  Param pool_b_;
  Param null_embedding_;
  Param in_w_;
  Param in_b_;
  Param position_;
  Param time_w_;
  Param time_b_;
  std::vector<Block> blocks_;
  Param out_w_;
  Param out_b_;
};

/// Per-condition Gaussian with diagonal covariance over frames x dim.
struct TargetDistribution {
  caption::StructuredCaption caption;
  Matrix mean;
  Matrix stddev;
};

struct SyntheticTask {
  LatentSpec latent;
  std::vector<TargetDistribution> conditions;

  /// Shapes match, stddev >= 0, and every pair of means is at least
  /// 3 * (largest stddev) apart in Frobenius norm.
  void validate() const;
  Matrix draw(std::size_t condition, std::mt19937_64& rng) const;

  /// Three 1 x 2 clusters on an equilateral triangle of the given side,
  /// centred at the origin, all with isotropic `sigma`.
  static SyntheticTask three_cluster(double side = 3.0, double sigma = 0.25);
};

SyntheticTask task_from_json(std::string_view json);
std::string to_json(const SyntheticTask& task);

struct TrainConfig {
  ModelConfig model;
  std::size_t steps = 2000;
  std::size_t batch_size = 16;
  diffcore::AdamWConfig optimizer{.lr = 3e-3,
                                  .beta1 = 0.9,
                                  .beta2 = 0.999,
                                  .eps = 1e-8,
                                  .weight_decay = 0.0};
  /// Cosine decay from optimizer.lr down to this fraction of it.
  double final_lr_fraction = 0.1;
  caption::AugmentConfig dropout{.drop_probability = 0.2, .rng_seed = 0};
  /// Whole-condition replacement by the null embedding, for CFG.
  double null_condition_probability = 0.1;
  std::uint64_t seed = 0;
  /// Use this noise for every example instead of sampling N(0, I).
  std::optional<Matrix> fixed_noise;
};

struct TrainResult {
  VectorFieldModel model;
  std::vector<double> loss_curve;
  diffcore::AdamWState optimizer_state;
};

/// Deterministic given config.seed. Throws DivergedLoss on a non-finite loss.
TrainResult train(const SyntheticTask& task, const TrainConfig& config);

/// Continues training `model` in place; appends to `loss_curve`.
void train_steps(VectorFieldModel& model, diffcore::AdamW& optimizer,
                 const SyntheticTask& task, const TrainConfig& config,
                 std::mt19937_64& rng, std::vector<double>& loss_curve);

struct ConditionFit {
  Matrix sample_mean;
  double sample_cov_trace = 0.0;
  double target_cov_trace = 0.0;
  /// Frobenius distance between the sample mean and the target mean.
  double mean_error = 0.0;
};

/// Samples n_samples latents per condition (n_samples >= 100). Condition i
/// uses rng seed cfg.rng_seed + i.
std::vector<ConditionFit> evaluate_conditional_fit(
    const VelocityField& field, const SyntheticTask& task,
    std::size_t n_samples, const SamplerConfig& cfg);

/// CSV with one row per frame and one column per latent feature.
std::string latent_to_csv(const Matrix& latent);
Matrix latent_from_csv(std::string_view csv);

}  // namespace scenesynth::flowmatch
