#include "scenesynth/flowmatch.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numbers>
#include <set>
#include <sstream>

#include "json.hpp"
#include "scenesynth/checkpoint.hpp"

namespace scenesynth::flowmatch {

using nlohmann::json;

namespace {

void require_same_shape(const char* op, const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) {
    throw FlowError(FlowErrc::ShapeMismatch,
                    std::string(op) + ": " + std::to_string(a.rows()) + "x" +
                        std::to_string(a.cols()) + " vs " +
                        std::to_string(b.rows()) + "x" +
                        std::to_string(b.cols()));
  }
}

Matrix standard_normal(std::size_t rows, std::size_t cols,
                       std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix m(rows, cols);
  for (double& v : m.data()) v = normal(rng);
  return m;
}

std::string lowercase_ascii(std::string_view s) {
  std::string out(s);
  for (char& c : out) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return out;
}

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> words;
  std::istringstream in{std::string(text)};
  for (std::string w; in >> w;) words.push_back(lowercase_ascii(w));
  return words;
}

void append_number(std::string& out, double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, end);
}

}  // namespace

// --- Path and loss --------------------------------------------------------

void LatentSpec::validate() const {
  if (dim < 1 || frames < 1) {
    throw FlowError(FlowErrc::InvalidConfig,
                    "latent dim and frames must be at least 1");
  }
  if (!(frame_rate_hz > 0.0)) {
    throw FlowError(FlowErrc::InvalidConfig, "frame rate must be positive");
  }
}

Matrix interpolate(const Matrix& z0, const Matrix& z1, double t) {
  require_same_shape("interpolate", z0, z1);
  if (!(t >= 0.0 && t <= 1.0)) {
    throw FlowError(FlowErrc::TOutOfRange, "t must lie in [0, 1]");
  }
  Matrix out(z0.rows(), z0.cols());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = (1.0 - t) * z0[i] + t * z1[i];
  }
  return out;
}

Matrix fm_target(const Matrix& z0, const Matrix& z1) {
  require_same_shape("fm_target", z0, z1);
  return z1 - z0;
}

FlowSample FlowSample::make(Matrix z0, Matrix z1, double t) {
  Matrix zt = interpolate(z0, z1, t);
  return FlowSample{std::move(z0), std::move(z1), t, std::move(zt)};
}

Var fm_loss(Tape& tape, VelocityField& field,
            std::span<const FlowExample> batch) {
  if (batch.empty()) {
    throw FlowError(FlowErrc::InvalidConfig, "fm_loss needs a non-empty batch");
  }
  std::optional<Var> total;
  for (const FlowExample& ex : batch) {
    Var zt = tape.constant(interpolate(ex.z0, ex.z1, ex.t));
    Var pred = field.forward(tape, zt, ex.t, ex.condition);
    Matrix target = fm_target(ex.z0, ex.z1);
    require_same_shape("fm_loss", pred.value(), target);
    Var err = diffcore::squared_norm(diffcore::sub(pred, tape.constant(target)));
    total = total ? diffcore::add(*total, err) : err;
  }
  return diffcore::scale(*total, 1.0 / static_cast<double>(batch.size()));
}

double fm_loss_value(const VelocityField& field,
                     std::span<const FlowExample> batch) {
  if (batch.empty()) {
    throw FlowError(FlowErrc::InvalidConfig, "fm_loss needs a non-empty batch");
  }
  double total = 0.0;
  for (const FlowExample& ex : batch) {
    Matrix pred = field.velocity(interpolate(ex.z0, ex.z1, ex.t), ex.t,
                                 ex.condition);
    Matrix target = fm_target(ex.z0, ex.z1);
    require_same_shape("fm_loss", pred, target);
    total += diffcore::squared_norm(pred - target);
  }
  return total / static_cast<double>(batch.size());
}

// --- Sampling -------------------------------------------------------------

Matrix cfg_velocity(const VelocityField& field, const Matrix& zt, double t,
                    const Condition& cond, double scale) {
  if (!(scale >= 0.0)) {
    throw FlowError(FlowErrc::InvalidConfig, "cfg scale must be >= 0");
  }
  if (!cond || scale == 1.0) return field.velocity(zt, t, cond);
  Matrix uncond = field.velocity(zt, t, std::nullopt);
  if (scale == 0.0) return uncond;
  Matrix guided = field.velocity(zt, t, cond);
  for (std::size_t i = 0; i < guided.size(); ++i) {
    guided[i] = uncond[i] + scale * (guided[i] - uncond[i]);
  }
  return guided;
}

void SamplerConfig::validate() const {
  if (steps < 1) {
    throw FlowError(FlowErrc::InvalidConfig, "sampler needs at least 1 step");
  }
  if (!(cfg_scale >= 0.0)) {
    throw FlowError(FlowErrc::InvalidConfig, "cfg scale must be >= 0");
  }
}

Matrix integrate(const VelocityField& field, Matrix z, const Condition& cond,
                 const SamplerConfig& cfg) {
  cfg.validate();
  const double dt = 1.0 / static_cast<double>(cfg.steps);
  for (std::size_t i = 0; i < cfg.steps; ++i) {
    const double t = static_cast<double>(i) * dt;
    Matrix v = cfg_velocity(field, z, t, cond, cfg.cfg_scale);
    require_same_shape("integrate", v, z);
    for (std::size_t k = 0; k < z.size(); ++k) z[k] += dt * v[k];
    if (!z.all_finite()) {
      throw FlowError(FlowErrc::NonFiniteState,
                      "non-finite latent at Euler step " + std::to_string(i));
    }
  }
  return z;
}

Matrix sample(const VelocityField& field, const LatentSpec& latent,
              const Condition& cond, const SamplerConfig& cfg,
              std::mt19937_64& rng) {
  latent.validate();
  cfg.validate();
  return integrate(field, standard_normal(latent.frames, latent.dim, rng), cond,
                   cfg);
}

Matrix time_features(double t, std::size_t count) {
  // Frequencies geometrically spaced in [1, 100] rad per unit t.
  Matrix out(1, count);
  const std::size_t half = count / 2;
  for (std::size_t k = 0; k < half; ++k) {
    const double ratio =
        half > 1 ? static_cast<double>(k) / static_cast<double>(half - 1)
                 : 0.0;
    const double omega = std::pow(100.0, ratio);
    out(0, k) = std::sin(omega * t);
    out(0, half + k) = std::cos(omega * t);
  }
  if (count % 2 == 1) out(0, count - 1) = t;
  return out;
}

// --- Model ----------------------------------------------------------------

void ModelConfig::validate() const {
  latent.validate();
  if (hidden == 0 || cond_dim == 0 || attn_dim == 0 || ff_hidden == 0 ||
      time_features == 0) {
    throw FlowError(FlowErrc::InvalidConfig, "model widths must be positive");
  }
}

VectorFieldModel::VectorFieldModel(ModelConfig config,
                                   std::vector<std::string> vocabulary,
                                   std::uint64_t init_seed)
    : config_(config), vocabulary_(std::move(vocabulary)) {
  config_.validate();
  if (vocabulary_.empty() || vocabulary_.front() != kUnknownToken) {
    throw FlowError(FlowErrc::InvalidConfig,
                    "vocabulary must start with the <unk> entry");
  }
  std::mt19937_64 rng(init_seed);
  const std::size_t h = config_.hidden;
  const std::size_t dc = config_.cond_dim;
  const std::size_t da = config_.attn_dim;
  const std::size_t T = config_.latent.frames;
  const std::size_t D = config_.latent.dim;

  // Embedding-style tables use fan_in 1 so entries start in [-1, 1].
  token_table_ = Param::uniform("cond.tokens", vocabulary_.size(), dc, 1, rng);
  pool_w_ = Param::uniform("cond.pool.w", dc, dc, dc, rng);
  pool_b_ = Param::zeros("cond.pool.b", 1, dc);
  null_embedding_ = Param::uniform("cond.null", 1, dc, 1, rng);
  in_w_ = Param::uniform("in.w", D, h, D, rng);
  in_b_ = Param::zeros("in.b", 1, h);
  position_ = Param::uniform("in.position", T, h, h, rng);
  time_w_ = Param::uniform("time.w", config_.time_features, h,
                           config_.time_features, rng);
  time_b_ = Param::zeros("time.b", 1, h);
  for (std::size_t b = 0; b < config_.blocks; ++b) {
    const std::string p = "block" + std::to_string(b) + ".";
    blocks_.push_back(Block{
        Param::uniform(p + "mix", T, T, T, rng),
        Param::uniform(p + "attn.wq", h, da, h, rng),
        Param::uniform(p + "attn.wk", dc, da, dc, rng),
        Param::uniform(p + "attn.wv", dc, h, dc, rng),
        Param::uniform(p + "ff.w1", h, config_.ff_hidden, h, rng),
        Param::zeros(p + "ff.b1", 1, config_.ff_hidden),
        Param::uniform(p + "ff.w2", config_.ff_hidden, h, config_.ff_hidden,
                       rng),
        Param::zeros(p + "ff.b2", 1, h),
    });
  }
  out_w_ = Param::uniform("out.w", h, D, h, rng);
  out_b_ = Param::zeros("out.b", 1, D);
}

std::vector<std::string> VectorFieldModel::build_vocabulary(
    std::span<const caption::StructuredCaption> captions) {
  std::vector<std::string> vocab{std::string(kUnknownToken)};
  for (caption::ViewKind kind : caption::kAllViewKinds) {
    vocab.emplace_back(caption::token_of(kind));
  }
  std::set<std::string> words;
  for (const auto& c : captions) {
    for (const auto& view : c.views()) {
      for (auto& w : split_words(view.text)) words.insert(std::move(w));
    }
  }
  for (const auto& w : words) {
    if (std::find(vocab.begin(), vocab.end(), w) == vocab.end()) {
      vocab.push_back(w);
    }
  }
  return vocab;
}

std::vector<std::size_t> VectorFieldModel::tokenize(
    const caption::StructuredCaption& caption) const {
  std::vector<std::size_t> ids;
  for (const auto& word : split_words(caption::serialize_caption(caption))) {
    auto it = std::find(vocabulary_.begin(), vocabulary_.end(), word);
    ids.push_back(it == vocabulary_.end()
                      ? 0
                      : static_cast<std::size_t>(it - vocabulary_.begin()));
  }
  return ids;
}

template <typename Self, typename Bind>
Var VectorFieldModel::encode_impl(Self& self, Tape& tape,
                                  const Condition& cond, Bind bind) {
  if (!cond) return bind(self.null_embedding_);
  const std::vector<std::size_t> ids = self.tokenize(*cond);
  Var tokens = diffcore::gather_rows(bind(self.token_table_), ids);
  Var averager = tape.constant(Matrix(
      1, ids.size(), 1.0 / static_cast<double>(ids.size())));
  Var pooled = diffcore::linear(diffcore::matmul(averager, tokens),
                                bind(self.pool_w_), bind(self.pool_b_));
  return diffcore::add_row(tokens, pooled);
}

template <typename Self, typename Bind>
Var VectorFieldModel::forward_impl(Self& self, Tape& tape, Var zt, double t,
                                   const Condition& cond, Bind bind) {
  const LatentSpec& latent = self.config_.latent;
  if (zt.rows() != latent.frames || zt.cols() != latent.dim) {
    throw FlowError(FlowErrc::ShapeMismatch,
                    "latent must be " + std::to_string(latent.frames) + "x" +
                        std::to_string(latent.dim));
  }
  Var context = encode_impl(self, tape, cond, bind);

  Var h = diffcore::linear(zt, bind(self.in_w_), bind(self.in_b_));
  h = diffcore::add(h, bind(self.position_));
  Var temb = diffcore::linear(
      tape.constant(time_features(t, self.config_.time_features)),
      bind(self.time_w_), bind(self.time_b_));
  h = diffcore::add_row(h, temb);

  for (auto& block : self.blocks_) {
    h = diffcore::add(h, diffcore::matmul(bind(block.mix), h));
    h = diffcore::add(h, diffcore::cross_attention(h, context, bind(block.wq),
                                                   bind(block.wk),
                                                   bind(block.wv)));
    Var ff = diffcore::gelu(
        diffcore::linear(h, bind(block.ff_w1), bind(block.ff_b1)));
    h = diffcore::add(h,
                      diffcore::linear(ff, bind(block.ff_w2), bind(block.ff_b2)));
  }
  return diffcore::linear(h, bind(self.out_w_), bind(self.out_b_));
}

Matrix VectorFieldModel::encode_condition(const Condition& cond) const {
  Tape tape;
  auto bind = [&tape](const Param& p) { return tape.constant(p.value); };
  return encode_impl(*this, tape, cond, bind).value();
}

Var VectorFieldModel::encode_condition(Tape& tape, const Condition& cond) {
  auto bind = [&tape](Param& p) { return tape.param(p); };
  return encode_impl(*this, tape, cond, bind);
}

Var VectorFieldModel::forward(Tape& tape, Var zt, double t,
                              const Condition& cond) {
  auto bind = [&tape](Param& p) { return tape.param(p); };
  return forward_impl(*this, tape, zt, t, cond, bind);
}

Matrix VectorFieldModel::velocity(const Matrix& zt, double t,
                                  const Condition& cond) const {
  Tape tape;
  auto bind = [&tape](const Param& p) { return tape.constant(p.value); };
  return forward_impl(*this, tape, tape.constant(zt), t, cond, bind).value();
}

std::vector<Param*> VectorFieldModel::parameters() {
  std::vector<Param*> out{&token_table_, &pool_w_, &pool_b_, &null_embedding_,
                          &in_w_,        &in_b_,   &position_, &time_w_,
                          &time_b_};
  for (auto& b : blocks_) {
    for (Param* p : {&b.mix, &b.wq, &b.wk, &b.wv, &b.ff_w1, &b.ff_b1,
                     &b.ff_w2, &b.ff_b2}) {
      out.push_back(p);
    }
  }
  out.push_back(&out_w_);
  out.push_back(&out_b_);
  return out;
}

std::vector<const Param*> VectorFieldModel::parameters() const {
  auto mutable_params = const_cast<VectorFieldModel*>(this)->parameters();
  return {mutable_params.begin(), mutable_params.end()};
}

std::size_t VectorFieldModel::parameter_count() const {
  std::size_t n = 0;
  for (const Param* p : parameters()) n += p->value.size();
  return n;
}

namespace {

json config_to_json(const ModelConfig& c) {
  return json{{"latent",
               {{"dim", c.latent.dim},
                {"frames", c.latent.frames},
                {"frame_rate_hz", c.latent.frame_rate_hz}}},
              {"hidden", c.hidden},
              {"cond_dim", c.cond_dim},
              {"attn_dim", c.attn_dim},
              {"ff_hidden", c.ff_hidden},
              {"blocks", c.blocks},
              {"time_features", c.time_features}};
}

ModelConfig config_from_json(const json& j, ModelConfig c = {}) {
  if (auto it = j.find("latent"); it != j.end()) {
    c.latent.dim = it->value("dim", c.latent.dim);
    c.latent.frames = it->value("frames", c.latent.frames);
    c.latent.frame_rate_hz = it->value("frame_rate_hz", c.latent.frame_rate_hz);
  }
  c.hidden = j.value("hidden", c.hidden);
  c.cond_dim = j.value("cond_dim", c.cond_dim);
  c.attn_dim = j.value("attn_dim", c.attn_dim);
  c.ff_hidden = j.value("ff_hidden", c.ff_hidden);
  c.blocks = j.value("blocks", c.blocks);
  c.time_features = j.value("time_features", c.time_features);
  return c;
}

}  // namespace

std::string VectorFieldModel::to_checkpoint(
    const diffcore::AdamWState* optimizer) const {
  diffcore::Checkpoint cp;
  for (const Param* p : parameters()) cp.params.emplace(p->name, p->value);
  if (optimizer != nullptr) cp.optimizer = *optimizer;
  cp.metadata_json = json{{"model", "vector-field-toy"},
                          {"config", config_to_json(config_)},
                          {"vocabulary", vocabulary_}}
                         .dump();
  return diffcore::to_json(cp);
}

VectorFieldModel VectorFieldModel::from_checkpoint(std::string_view text) {
  diffcore::Checkpoint cp = diffcore::checkpoint_from_json(text);
  json meta = json::parse(cp.metadata_json);
  if (!meta.contains("config") || !meta.contains("vocabulary")) {
    throw diffcore::CheckpointError(
        diffcore::CheckpointErrc::Malformed,
        "checkpoint metadata lacks model config or vocabulary");
  }
  VectorFieldModel model(config_from_json(meta["config"]),
                         meta["vocabulary"].get<std::vector<std::string>>(), 0);
  for (Param* p : model.parameters()) {
    auto it = cp.params.find(p->name);
    if (it == cp.params.end()) {
      throw diffcore::CheckpointError(diffcore::CheckpointErrc::MissingParam,
                                      "missing parameter " + p->name);
    }
    if (!it->second.same_shape(p->value)) {
      throw diffcore::CheckpointError(diffcore::CheckpointErrc::Malformed,
                                      "shape mismatch for " + p->name);
    }
    p->value = it->second;
  }
  return model;
}

// --- Synthetic task -------------------------------------------------------

void SyntheticTask::validate() const {
  latent.validate();
  if (conditions.empty()) {
    throw FlowError(FlowErrc::InvalidTask, "task has no conditions");
  }
  double max_sigma = 0.0;
  for (const auto& c : conditions) {
    if (c.mean.rows() != latent.frames || c.mean.cols() != latent.dim ||
        !c.stddev.same_shape(c.mean)) {
      throw FlowError(FlowErrc::InvalidTask,
                      "target shapes must match the latent spec");
    }
    for (double s : c.stddev.data()) {
      if (!(s >= 0.0) || !std::isfinite(s)) {
        throw FlowError(FlowErrc::InvalidTask, "stddev must be finite, >= 0");
      }
      max_sigma = std::max(max_sigma, s);
    }
    if (!c.mean.all_finite()) {
      throw FlowError(FlowErrc::InvalidTask, "target mean is not finite");
    }
  }
  for (std::size_t i = 0; i < conditions.size(); ++i) {
    for (std::size_t j = i + 1; j < conditions.size(); ++j) {
      if (conditions[i].caption == conditions[j].caption) {
        throw FlowError(FlowErrc::InvalidTask, "duplicate condition caption");
      }
      const double gap = std::sqrt(
          diffcore::squared_norm(conditions[i].mean - conditions[j].mean));
      if (gap < 3.0 * max_sigma || gap == 0.0) {
        throw FlowError(FlowErrc::InvalidTask,
                        "condition means closer than 3 sigma");
      }
    }
  }
}

Matrix SyntheticTask::draw(std::size_t condition, std::mt19937_64& rng) const {
  const TargetDistribution& target = conditions.at(condition);
  Matrix z = standard_normal(latent.frames, latent.dim, rng);
  for (std::size_t i = 0; i < z.size(); ++i) {
    z[i] = target.mean[i] + target.stddev[i] * z[i];
  }
  return z;
}

SyntheticTask SyntheticTask::three_cluster(double side, double sigma) {
  SyntheticTask task;
  task.latent = LatentSpec{.dim = 2, .frame_rate_hz = 25.0, .frames = 1};
  const double radius = side / std::sqrt(3.0);
  const char* captions[] = {
      "<|caption|> a dog barking in a yard <|sfx|> sharp dog barks "
      "<|env|> open backyard",
      "<|caption|> a piano melody in a hall <|music|> slow solo piano "
      "<|env|> reverberant concert hall",
      "<|caption|> a woman speaking on a street <|speech|> calm female voice "
      "<|asr|> see you tomorrow <|env|> light traffic",
  };
  for (int k = 0; k < 3; ++k) {
    const double angle = std::numbers::pi / 2.0 + 2.0 * std::numbers::pi * k / 3.0;
    task.conditions.push_back(TargetDistribution{
        caption::parse_caption(captions[k]),
        Matrix::from_rows({{radius * std::cos(angle), radius * std::sin(angle)}}),
        Matrix(1, 2, sigma)});
  }
  return task;
}

SyntheticTask task_from_json(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw FlowError(FlowErrc::InvalidTask, e.what());
  }
  SyntheticTask task;
  try {
    const json& lat = doc.at("latent");
    task.latent.dim = lat.at("dim").get<std::size_t>();
    task.latent.frames = lat.at("frames").get<std::size_t>();
    task.latent.frame_rate_hz = lat.value("frame_rate_hz", 25.0);
    const std::size_t n = task.latent.dim * task.latent.frames;
    for (const json& c : doc.at("conditions")) {
      auto mean = c.at("mean").get<std::vector<double>>();
      std::vector<double> stddev;
      if (c.at("stddev").is_number()) {
        stddev.assign(n, c["stddev"].get<double>());
      } else {
        stddev = c["stddev"].get<std::vector<double>>();
      }
      if (mean.size() != n || stddev.size() != n) {
        throw FlowError(FlowErrc::InvalidTask,
                        "mean/stddev must have frames*dim entries");
      }
      task.conditions.push_back(TargetDistribution{
          caption::parse_caption(c.at("caption").get<std::string>()),
          Matrix(task.latent.frames, task.latent.dim, std::move(mean)),
          Matrix(task.latent.frames, task.latent.dim, std::move(stddev))});
    }
  } catch (const json::exception& e) {
    throw FlowError(FlowErrc::InvalidTask, e.what());
  }
  task.validate();
  return task;
}

std::string to_json(const SyntheticTask& task) {
  json doc;
  doc["latent"] = {{"dim", task.latent.dim},
                   {"frames", task.latent.frames},
                   {"frame_rate_hz", task.latent.frame_rate_hz}};
  doc["conditions"] = json::array();
  for (const auto& c : task.conditions) {
    doc["conditions"].push_back(
        {{"caption", caption::serialize_caption(c.caption)},
         {"mean", std::vector<double>(c.mean.data().begin(), c.mean.data().end())},
         {"stddev",
          std::vector<double>(c.stddev.data().begin(), c.stddev.data().end())}});
  }
  return doc.dump(2);
}

// --- Training -------------------------------------------------------------

void train_steps(VectorFieldModel& model, diffcore::AdamW& optimizer,
                 const SyntheticTask& task, const TrainConfig& config,
                 std::mt19937_64& rng, std::vector<double>& loss_curve) {
  if (config.batch_size == 0) {
    throw FlowError(FlowErrc::InvalidConfig, "batch size must be positive");
  }
  if (config.fixed_noise &&
      (config.fixed_noise->rows() != task.latent.frames ||
       config.fixed_noise->cols() != task.latent.dim)) {
    throw FlowError(FlowErrc::ShapeMismatch, "fixed noise has the wrong shape");
  }
  std::uniform_int_distribution<std::size_t> pick(0,
                                                  task.conditions.size() - 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<Param*> params = model.parameters();
  const double base_lr = config.optimizer.lr;
  const std::size_t total = config.steps;

  std::vector<FlowExample> batch(config.batch_size);
  for (std::size_t step = 0; step < total; ++step) {
    for (FlowExample& ex : batch) {
      const std::size_t k = pick(rng);
      ex.z1 = task.draw(k, rng);
      ex.z0 = config.fixed_noise
                  ? *config.fixed_noise
                  : standard_normal(task.latent.frames, task.latent.dim, rng);
      ex.t = unit(rng);
      if (unit(rng) < config.null_condition_probability) {
        ex.condition = std::nullopt;
      } else {
        ex.condition = caption::augment_dropout(task.conditions[k].caption,
                                                config.dropout, rng);
      }
    }

    const double progress =
        total > 1 ? static_cast<double>(step) / static_cast<double>(total - 1)
                  : 1.0;
    const double cosine = 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
    optimizer.set_lr(base_lr * (config.final_lr_fraction +
                                (1.0 - config.final_lr_fraction) * cosine));

    diffcore::zero_grad(params);
    Tape tape;
    Var loss = fm_loss(tape, model, batch);
    const double value = loss.value()(0, 0);
    if (!std::isfinite(value)) {
      throw FlowError(FlowErrc::DivergedLoss,
                      "loss became non-finite at step " + std::to_string(step));
    }
    tape.backward(loss);
    optimizer.step(params);
    loss_curve.push_back(value);
  }
  optimizer.set_lr(base_lr);
}

TrainResult train(const SyntheticTask& task, const TrainConfig& config) {
  task.validate();
  ModelConfig model_config = config.model;
  model_config.latent = task.latent;

  std::vector<caption::StructuredCaption> captions;
  for (const auto& c : task.conditions) captions.push_back(c.caption);

  std::mt19937_64 rng(config.seed);
  VectorFieldModel model(model_config,
                         VectorFieldModel::build_vocabulary(captions), rng());
  diffcore::AdamW optimizer(config.optimizer);
  std::vector<double> curve;
  curve.reserve(config.steps);
  train_steps(model, optimizer, task, config, rng, curve);
  return TrainResult{std::move(model), std::move(curve), optimizer.state()};
}

std::vector<ConditionFit> evaluate_conditional_fit(const VelocityField& field,
                                                   const SyntheticTask& task,
                                                   std::size_t n_samples,
                                                   const SamplerConfig& cfg) {
  if (n_samples < 100) {
    throw FlowError(FlowErrc::InvalidConfig,
                    "conditional fit needs at least 100 samples");
  }
  std::vector<ConditionFit> fits;
  for (std::size_t k = 0; k < task.conditions.size(); ++k) {
    const TargetDistribution& target = task.conditions[k];
    std::mt19937_64 rng(cfg.rng_seed + k);
    std::vector<Matrix> draws;
    draws.reserve(n_samples);
    Matrix mean(task.latent.frames, task.latent.dim);
    for (std::size_t s = 0; s < n_samples; ++s) {
      draws.push_back(sample(field, task.latent, target.caption, cfg, rng));
      mean += draws.back();
    }
    mean *= 1.0 / static_cast<double>(n_samples);

    double trace = 0.0;
    for (const Matrix& d : draws) trace += diffcore::squared_norm(d - mean);
    trace /= static_cast<double>(n_samples - 1);

    ConditionFit fit;
    fit.mean_error = std::sqrt(diffcore::squared_norm(mean - target.mean));
    fit.sample_mean = std::move(mean);
    fit.sample_cov_trace = trace;
    for (double s : target.stddev.data()) fit.target_cov_trace += s * s;
    fits.push_back(std::move(fit));
  }
  return fits;
}

std::string latent_to_csv(const Matrix& latent) {
  std::string out;
  for (std::size_t r = 0; r < latent.rows(); ++r) {
    for (std::size_t c = 0; c < latent.cols(); ++c) {
      if (c) out.push_back(',');
      append_number(out, latent(r, c));
    }
    out.push_back('\n');
  }
  return out;
}

Matrix latent_from_csv(std::string_view csv) {
  std::vector<double> values;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::istringstream in{std::string(csv)};
  for (std::string line; std::getline(in, line);) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::size_t count = 0;
    std::istringstream cells(line);
    for (std::string cell; std::getline(cells, cell, ',');) {
      try {
        values.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw FlowError(FlowErrc::ShapeMismatch, "bad number '" + cell + "'");
      }
      ++count;
    }
    if (rows == 0) cols = count;
    if (count != cols) {
      throw FlowError(FlowErrc::ShapeMismatch, "ragged latent CSV");
    }
    ++rows;
  }
  return Matrix(rows, cols, std::move(values));
}

}  // namespace scenesynth::flowmatch
