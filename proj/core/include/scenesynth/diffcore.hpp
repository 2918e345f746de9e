#pragma once

// Minimal reverse-mode automatic differentiation over dense row-major
// matrices of doubles. Every value is 2-D; callers flatten batch and time.

#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "scenesynth/error.hpp"

namespace scenesynth::diffcore {

enum class DiffErrc { ShapeMismatch, GraphCycle, NotScalar, ForeignVar };

using DiffError = CodedError<DiffErrc>;

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Matrix from_rows(
      std::initializer_list<std::initializer_list<double>> rows);
  static Matrix identity(std::size_t n);
  static Matrix row_vector(std::span<const double> values);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool same_shape(const Matrix& other) const noexcept {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

  double& operator()(std::size_t r, std::size_t c) noexcept {
    return data_[r * cols_ + c];
  }
  double operator()(std::size_t r, std::size_t c) const noexcept {
    return data_[r * cols_ + c];
  }
  double& operator[](std::size_t i) noexcept { return data_[i]; }
  double operator[](std::size_t i) const noexcept { return data_[i]; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  std::span<const double> row(std::size_t r) const noexcept {
    return std::span<const double>(data_).subspan(r * cols_, cols_);
  }

  bool all_finite() const noexcept;
  void fill(double value) noexcept;

  Matrix& operator+=(const Matrix& other);
  Matrix& operator-=(const Matrix& other);
  Matrix& operator*=(double s) noexcept;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix operator+(Matrix a, const Matrix& b);
Matrix operator-(Matrix a, const Matrix& b);
Matrix operator*(Matrix a, double s);
Matrix operator*(double s, Matrix a);

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);
double sum(const Matrix& a) noexcept;
double squared_norm(const Matrix& a) noexcept;

/// Row-wise softmax with max subtraction; each row sums to one.
Matrix softmax_rows(const Matrix& x);

/// tanh approximation: 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3))).
double gelu(double x) noexcept;
double gelu_derivative(double x) noexcept;

/// A trainable matrix with its accumulated gradient.
struct Param {
  std::string name;
  Matrix value;
  Matrix grad;

  Param() = default;
  Param(std::string name, Matrix value);

  /// uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)).
  static Param uniform(std::string name, std::size_t rows, std::size_t cols,
                       std::size_t fan_in, std::mt19937_64& rng);
  static Param zeros(std::string name, std::size_t rows, std::size_t cols);

  void zero_grad() noexcept { grad.fill(0.0); }
};

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid while its tape lives.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Matrix& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
};

/// Read/write view handed to a node's backward function.
class BackwardContext {
 public:
  const Matrix& out_value() const noexcept { return *out_value_; }
  const Matrix& out_grad() const noexcept { return *out_grad_; }
  const Matrix& input(std::size_t i) const noexcept { return *inputs_[i]; }
  Matrix& input_grad(std::size_t i) noexcept { return *input_grads_[i]; }

 private:
  friend class Tape;
  const Matrix* out_value_ = nullptr;
  const Matrix* out_grad_ = nullptr;
  std::vector<const Matrix*> inputs_;
  std::vector<Matrix*> input_grads_;
};

using BackwardFn = std::function<void(BackwardContext&)>;

/// Records primitive operations in creation order, which is a topological
/// order; backward() replays them in reverse.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  /// Leaf bound to `param`. Binding the same Param twice returns the same node.
  Var param(Param& param);

  Var record(Matrix value, std::vector<std::size_t> inputs, BackwardFn fn);

  const Matrix& value(Var v) const;
  /// Gradient of the last backward() w.r.t. `v`.
  const Matrix& grad(Var v) const;
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Seeds d(loss)/d(loss) = 1 and accumulates into every bound Param's grad.
  /// Param grads are not cleared here; call zero_grad between steps.
  void backward(Var loss);

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    Param* param = nullptr;
  };

  void check(Var v) const;

  std::deque<Node> nodes_;  // deque keeps value references stable
  std::unordered_map<const Param*, std::size_t> param_nodes_;
};

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var hadamard(Var a, Var b);
Var scale(Var a, double s);
/// Adds a 1×cols row to every row of `a`.
Var add_row(Var a, Var row);
Var matmul(Var a, Var b);
/// a · bᵀ
Var matmul_nt(Var a, Var b);
Var gelu(Var a);
Var softmax_rows(Var a);
/// 1×1 sum of all entries.
Var sum(Var a);
/// 1×1 squared Frobenius norm.
Var squared_norm(Var a);
/// Rows of `table` selected by `ids` (gradients scatter-add back).
Var gather_rows(Var table, std::span<const std::size_t> ids);

/// y = x·W + b, b broadcast over rows.
Var linear(Var x, Var weight, Var bias);

/// softmax(Q(H) K(C)ᵀ / sqrt(d)) V(C) with Q(H) = H·Wq, K(C) = C·Wk,
/// V(C) = C·Wv and d the shared query/key width.
Var cross_attention(Var hidden, Var context, Var wq, Var wk, Var wv);

void zero_grad(std::span<Param* const> params) noexcept;

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t entries_checked = 0;
};

/// Compares backward() against central finite differences for every entry
/// of every param. Relative error is |a - n| / max(|a|, |n|, abs_floor).
/// `loss_fn` must build a scalar on the supplied tape and be deterministic.
GradCheckResult check_gradients(const std::function<Var(Tape&)>& loss_fn,
                                std::span<Param* const> params,
                                double step = 1e-5, double abs_floor = 1e-8);

}  // namespace scenesynth::diffcore
