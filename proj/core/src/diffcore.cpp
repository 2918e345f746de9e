#include "scenesynth/diffcore.hpp"

#include <algorithm>
#include <cmath>

namespace scenesynth::diffcore {
namespace {

std::string shape_str(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

[[noreturn]] void shape_error(const char* op, const Matrix& a,
                              const Matrix& b) {
  throw DiffError(DiffErrc::ShapeMismatch, std::string(op) + ": " +
                                               shape_str(a) + " vs " +
                                               shape_str(b));
}

void require_same_shape(const char* op, const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) shape_error(op, a, b);
}

Tape& tape_of(Var a, Var b) {
  if (a.tape == nullptr || a.tape != b.tape) {
    throw DiffError(DiffErrc::ForeignVar, "vars belong to different tapes");
  }
  return *a.tape;
}

Tape& tape_of(Var a) {
  if (a.tape == nullptr) {
    throw DiffError(DiffErrc::ForeignVar, "var is not bound to a tape");
  }
  return *a.tape;
}

// out += a · b (optionally with either operand transposed).
void gemm_acc(const Matrix& a, bool ta, const Matrix& b, bool tb,
              Matrix& out) {
  const std::size_t n = ta ? a.cols() : a.rows();
  const std::size_t k = ta ? a.rows() : a.cols();
  const std::size_t m = tb ? b.rows() : b.cols();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ta ? a(p, i) : a(i, p);
      if (av == 0.0) continue;
      for (std::size_t j = 0; j < m; ++j) {
        out(i, j) += av * (tb ? b(j, p) : b(p, j));
      }
    }
  }
}

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

}  // namespace

// --- Matrix ---------------------------------------------------------------

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    throw DiffError(DiffErrc::ShapeMismatch,
                    "data length " + std::to_string(data_.size()) +
                        " does not match " + std::to_string(rows) + "x" +
                        std::to_string(cols));
  }
}

Matrix Matrix::from_rows(
    std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) {
      throw DiffError(DiffErrc::ShapeMismatch, "ragged row list");
    }
    data.insert(data.end(), row.begin(), row.end());
  }
  return Matrix(r, c, std::move(data));
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::row_vector(std::span<const double> values) {
  return Matrix(1, values.size(),
                std::vector<double>(values.begin(), values.end()));
}

bool Matrix::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(),
                     [](double v) { return std::isfinite(v); });
}

void Matrix::fill(double value) noexcept {
  std::fill(data_.begin(), data_.end(), value);
}

Matrix& Matrix::operator+=(const Matrix& other) {
  require_same_shape("add", *this, other);
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Matrix& Matrix::operator-=(const Matrix& other) {
  require_same_shape("sub", *this, other);
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
  return *this;
}

Matrix& Matrix::operator*=(double s) noexcept {
  for (double& v : data_) v *= s;
  return *this;
}

Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
Matrix operator*(Matrix a, double s) { return a *= s; }
Matrix operator*(double s, Matrix a) { return a *= s; }

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) shape_error("matmul", a, b);
  Matrix out(a.rows(), b.cols());
  gemm_acc(a, false, b, false, out);
  return out;
}

Matrix transpose(const Matrix& a) {
  Matrix out(a.cols(), a.rows());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    for (std::size_t c = 0; c < a.cols(); ++c) out(c, r) = a(r, c);
  }
  return out;
}

double sum(const Matrix& a) noexcept {
  double s = 0.0;
  for (double v : a.data()) s += v;
  return s;
}

double squared_norm(const Matrix& a) noexcept {
  double s = 0.0;
  for (double v : a.data()) s += v * v;
  return s;
}

Matrix softmax_rows(const Matrix& x) {
  Matrix out(x.rows(), x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto in = x.row(r);
    if (in.empty()) continue;
    const double peak = *std::max_element(in.begin(), in.end());
    double total = 0.0;
    for (std::size_t c = 0; c < x.cols(); ++c) {
      out(r, c) = std::exp(in[c] - peak);
      total += out(r, c);
    }
    for (std::size_t c = 0; c < x.cols(); ++c) out(r, c) /= total;
  }
  return out;
}

double gelu(double x) noexcept {
  return 0.5 * x * (1.0 + std::tanh(kGeluC * (x + kGeluA * x * x * x)));
}

double gelu_derivative(double x) noexcept {
  const double u = kGeluC * (x + kGeluA * x * x * x);
  const double th = std::tanh(u);
  const double du = kGeluC * (1.0 + 3.0 * kGeluA * x * x);
  return 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * du;
}

// --- Param ----------------------------------------------------------------

Param::Param(std::string name_, Matrix value_)
    : name(std::move(name_)),
      value(std::move(value_)),
      grad(value.rows(), value.cols()) {}

Param Param::uniform(std::string name, std::size_t rows, std::size_t cols,
                     std::size_t fan_in, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix m(rows, cols);
  for (double& v : m.data()) v = dist(rng);
  return Param(std::move(name), std::move(m));
}

Param Param::zeros(std::string name, std::size_t rows, std::size_t cols) {
  return Param(std::move(name), Matrix(rows, cols));
}

void zero_grad(std::span<Param* const> params) noexcept {
  for (Param* p : params) p->zero_grad();
}

// --- Tape -----------------------------------------------------------------

const Matrix& Var::value() const { return tape_of(*this).value(*this); }

void Tape::check(Var v) const {
  if (v.tape != this || v.id >= nodes_.size()) {
    throw DiffError(DiffErrc::ForeignVar, "var does not belong to this tape");
  }
}

Var Tape::constant(Matrix value) {
  nodes_.push_back(Node{std::move(value), {}, {}, {}, nullptr});
  return Var{this, nodes_.size() - 1};
}

Var Tape::param(Param& p) {
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) {
    return Var{this, it->second};
  }
  nodes_.push_back(Node{p.value, {}, {}, {}, &p});
  param_nodes_.emplace(&p, nodes_.size() - 1);
  return Var{this, nodes_.size() - 1};
}

Var Tape::record(Matrix value, std::vector<std::size_t> inputs,
                 BackwardFn fn) {
  nodes_.push_back(
      Node{std::move(value), {}, std::move(inputs), std::move(fn), nullptr});
  return Var{this, nodes_.size() - 1};
}

const Matrix& Tape::value(Var v) const {
  check(v);
  return nodes_[v.id].value;
}

const Matrix& Tape::grad(Var v) const {
  check(v);
  return nodes_[v.id].grad;
}

void Tape::backward(Var loss) {
  check(loss);
  const Matrix& lv = nodes_[loss.id].value;
  if (lv.rows() != 1 || lv.cols() != 1) {
    throw DiffError(DiffErrc::NotScalar,
                    "backward() needs a 1x1 loss, got " + shape_str(lv));
  }
  for (Node& node : nodes_) {
    node.grad = Matrix(node.value.rows(), node.value.cols());
  }
  nodes_[loss.id].grad(0, 0) = 1.0;

  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (!node.backward) continue;
    BackwardContext ctx;
    ctx.out_value_ = &node.value;
    ctx.out_grad_ = &node.grad;
    for (std::size_t input : node.inputs) {
      if (input >= i) {
        throw DiffError(DiffErrc::GraphCycle,
                        "node " + std::to_string(i) + " depends on node " +
                            std::to_string(input));
      }
      ctx.inputs_.push_back(&nodes_[input].value);
      ctx.input_grads_.push_back(&nodes_[input].grad);
    }
    node.backward(ctx);
  }

  for (Node& node : nodes_) {
    if (node.param != nullptr) {
      if (!node.param->grad.same_shape(node.value)) {
        node.param->grad = Matrix(node.value.rows(), node.value.cols());
      }
      node.param->grad += node.grad;
    }
  }
}

// --- Differentiable ops ---------------------------------------------------

Var add(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require_same_shape("add", a.value(), b.value());
  return t.record(a.value() + b.value(), {a.id, b.id},
                  [](BackwardContext& c) {
                    c.input_grad(0) += c.out_grad();
                    c.input_grad(1) += c.out_grad();
                  });
}

Var sub(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require_same_shape("sub", a.value(), b.value());
  return t.record(a.value() - b.value(), {a.id, b.id},
                  [](BackwardContext& c) {
                    c.input_grad(0) += c.out_grad();
                    c.input_grad(1) -= c.out_grad();
                  });
}

Var hadamard(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require_same_shape("hadamard", a.value(), b.value());
  Matrix out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return t.record(std::move(out), {a.id, b.id}, [](BackwardContext& c) {
    const Matrix& g = c.out_grad();
    for (std::size_t i = 0; i < g.size(); ++i) {
      c.input_grad(0)[i] += g[i] * c.input(1)[i];
      c.input_grad(1)[i] += g[i] * c.input(0)[i];
    }
  });
}

Var scale(Var a, double s) {
  Tape& t = tape_of(a);
  return t.record(a.value() * s, {a.id}, [s](BackwardContext& c) {
    const Matrix& g = c.out_grad();
    for (std::size_t i = 0; i < g.size(); ++i) c.input_grad(0)[i] += s * g[i];
  });
}

Var add_row(Var a, Var row) {
  Tape& t = tape_of(a, row);
  const Matrix& av = a.value();
  const Matrix& rv = row.value();
  if (rv.rows() != 1 || rv.cols() != av.cols()) shape_error("add_row", av, rv);
  Matrix out = av;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) += rv(0, c);
  }
  return t.record(std::move(out), {a.id, row.id}, [](BackwardContext& c) {
    const Matrix& g = c.out_grad();
    c.input_grad(0) += g;
    Matrix& rg = c.input_grad(1);
    for (std::size_t r = 0; r < g.rows(); ++r) {
      for (std::size_t k = 0; k < g.cols(); ++k) rg(0, k) += g(r, k);
    }
  });
}

Var matmul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  return t.record(matmul(a.value(), b.value()), {a.id, b.id},
                  [](BackwardContext& c) {
                    // dA = G·Bᵀ, dB = Aᵀ·G
                    gemm_acc(c.out_grad(), false, c.input(1), true,
                             c.input_grad(0));
                    gemm_acc(c.input(0), true, c.out_grad(), false,
                             c.input_grad(1));
                  });
}

Var matmul_nt(Var a, Var b) {
  Tape& t = tape_of(a, b);
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.cols() != bv.cols()) shape_error("matmul_nt", av, bv);
  Matrix out(av.rows(), bv.rows());
  gemm_acc(av, false, bv, true, out);
  return t.record(std::move(out), {a.id, b.id}, [](BackwardContext& c) {
    // Y = A·Bᵀ: dA = G·B, dB = Gᵀ·A
    gemm_acc(c.out_grad(), false, c.input(1), false, c.input_grad(0));
    gemm_acc(c.out_grad(), true, c.input(0), false, c.input_grad(1));
  });
}

Var gelu(Var a) {
  Tape& t = tape_of(a);
  Matrix out = a.value();
  for (double& v : out.data()) v = gelu(v);
  return t.record(std::move(out), {a.id}, [](BackwardContext& c) {
    const Matrix& g = c.out_grad();
    const Matrix& x = c.input(0);
    for (std::size_t i = 0; i < g.size(); ++i) {
      c.input_grad(0)[i] += g[i] * gelu_derivative(x[i]);
    }
  });
}

Var softmax_rows(Var a) {
  Tape& t = tape_of(a);
  return t.record(softmax_rows(a.value()), {a.id}, [](BackwardContext& c) {
    // dx_j = y_j (g_j - Σ_k g_k y_k) per row.
    const Matrix& y = c.out_value();
    const Matrix& g = c.out_grad();
    Matrix& dx = c.input_grad(0);
    for (std::size_t r = 0; r < y.rows(); ++r) {
      double dot = 0.0;
      for (std::size_t k = 0; k < y.cols(); ++k) dot += g(r, k) * y(r, k);
      for (std::size_t k = 0; k < y.cols(); ++k) {
        dx(r, k) += y(r, k) * (g(r, k) - dot);
      }
    }
  });
}

Var sum(Var a) {
  Tape& t = tape_of(a);
  return t.record(Matrix(1, 1, sum(a.value())), {a.id},
                  [](BackwardContext& c) {
                    const double g = c.out_grad()(0, 0);
                    for (double& v : c.input_grad(0).data()) v += g;
                  });
}

Var squared_norm(Var a) {
  Tape& t = tape_of(a);
  return t.record(Matrix(1, 1, squared_norm(a.value())), {a.id},
                  [](BackwardContext& c) {
                    const double g = c.out_grad()(0, 0);
                    const Matrix& x = c.input(0);
                    for (std::size_t i = 0; i < x.size(); ++i) {
                      c.input_grad(0)[i] += 2.0 * g * x[i];
                    }
                  });
}

Var gather_rows(Var table, std::span<const std::size_t> ids) {
  Tape& t = tape_of(table);
  const Matrix& tv = table.value();
  Matrix out(ids.size(), tv.cols());
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] >= tv.rows()) {
      throw DiffError(DiffErrc::ShapeMismatch,
                      "gather_rows: row " + std::to_string(ids[r]) +
                          " out of range for " + shape_str(tv));
    }
    auto src = tv.row(ids[r]);
    std::copy(src.begin(), src.end(), out.data().begin() + r * tv.cols());
  }
  std::vector<std::size_t> index(ids.begin(), ids.end());
  return t.record(std::move(out), {table.id},
                  [index = std::move(index)](BackwardContext& c) {
                    const Matrix& g = c.out_grad();
                    Matrix& tg = c.input_grad(0);
                    for (std::size_t r = 0; r < index.size(); ++r) {
                      for (std::size_t k = 0; k < g.cols(); ++k) {
                        tg(index[r], k) += g(r, k);
                      }
                    }
                  });
}

Var linear(Var x, Var weight, Var bias) {
  const Matrix& xv = x.value();
  const Matrix& wv = weight.value();
  const Matrix& bv = bias.value();
  if (xv.cols() != wv.rows()) shape_error("linear", xv, wv);
  if (bv.rows() != 1 || bv.cols() != wv.cols()) shape_error("linear", wv, bv);
  return add_row(matmul(x, weight), bias);
}

Var cross_attention(Var hidden, Var context, Var wq, Var wk, Var wv) {
  if (hidden.cols() != wq.rows()) {
    shape_error("cross_attention(Q)", hidden.value(), wq.value());
  }
  if (context.cols() != wk.rows()) {
    shape_error("cross_attention(K)", context.value(), wk.value());
  }
  if (context.cols() != wv.rows()) {
    shape_error("cross_attention(V)", context.value(), wv.value());
  }
  if (wq.cols() != wk.cols()) {
    shape_error("cross_attention(d)", wq.value(), wk.value());
  }
  Var q = matmul(hidden, wq);
  Var k = matmul(context, wk);
  Var v = matmul(context, wv);
  const double d = static_cast<double>(wq.cols());
  Var scores = scale(matmul_nt(q, k), 1.0 / std::sqrt(d));
  return matmul(softmax_rows(scores), v);
}

// --- Gradient verification ------------------------------------------------

GradCheckResult check_gradients(const std::function<Var(Tape&)>& loss_fn,
                                std::span<Param* const> params, double step,
                                double abs_floor) {
  zero_grad(params);
  {
    Tape tape;
    Var loss = loss_fn(tape);
    tape.backward(loss);
  }
  auto eval = [&loss_fn]() {
    Tape tape;
    return loss_fn(tape).value()(0, 0);
  };

  GradCheckResult result;
  for (Param* p : params) {
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double saved = p->value[i];
      p->value[i] = saved + step;
      const double up = eval();
      p->value[i] = saved - step;
      const double down = eval();
      p->value[i] = saved;

      const double numeric = (up - down) / (2.0 * step);
      const double analytic = p->grad[i];
      const double denom =
          std::max({std::abs(analytic), std::abs(numeric), abs_floor});
      const double rel = std::abs(analytic - numeric) / denom;
      ++result.entries_checked;
      if (rel > result.max_relative_error) {
        result.max_relative_error = rel;
        result.worst_param = p->name;
        result.worst_index = i;
        result.analytic = analytic;
        result.numeric = numeric;
      }
    }
  }
  return result;
}

}  // namespace scenesynth::diffcore
