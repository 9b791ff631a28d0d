#pragma once

// Reverse-mode automatic differentiation over dense vectors.
//
// A Tape records every operation eagerly: values are computed as nodes are
// pushed, and backward() walks the node list in reverse. Node values and
// gradients live in two flat arenas, so a Tape can be reused across windows
// without reallocating. Parameters are referenced by id into a ParamStore and
// their gradients are accumulated into a caller-supplied GradStore.

#include <cstdint>
#include <initializer_list>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "ndf/params.hpp"

namespace ndf::ad {

class Tape;

struct Var {
  Tape* tape = nullptr;
  std::int32_t id = -1;

  [[nodiscard]] bool valid() const { return tape != nullptr && id >= 0; }
  [[nodiscard]] Eigen::Index dim() const;
  [[nodiscard]] Eigen::Map<const Vec> value() const;
  [[nodiscard]] double scalar() const;
};

struct ConvShape {
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 0;
  int stride = 1;
  int padding = 0;
  int in_length = 0;
  int out_length = 0;
};

class Tape {
 public:
  explicit Tape(const ParamStore* params = nullptr);

  void reset();
  void set_params(const ParamStore* params) { params_ = params; }
  [[nodiscard]] const ParamStore* params() const { return params_; }

  // Rewinding discards every node pushed after the mark (used by the adaptive
  // solver to drop rejected steps).
  [[nodiscard]] std::int32_t mark() const { return static_cast<std::int32_t>(nodes_.size()); }
  void rewind(std::int32_t mark);

  [[nodiscard]] std::size_t node_count() const { return nodes_.size(); }

  // Leaves.
  Var input(const Vec& v, bool requires_grad = false);
  Var input(std::span<const double> v, bool requires_grad = false);
  Var constant(Eigen::Index dim, double fill);
  Var param(int pid);

  // Dense maps.
  Var affine(int w, int b, Var x);                  // W x + b
  Var affine2(int w, int u, int b, Var x, Var h);   // W x + U h + b
  Var matvec(int w, Var x);                         // W x
  Var const_matvec(const Mat& a, Var x);            // A x, A not learnable

  // Elementwise.
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var affine_scalar(Var a, double scale, double shift);  // scale * a + shift
  Var lincomb(std::span<const Var> xs, std::span<const double> coefs);
  Var tanh(Var a);
  Var sigmoid(Var a);
  Var softplus(Var a, double floor = 0.0);  // log(1 + e^a) + floor
  Var exp(Var a);
  Var log(Var a);
  Var square(Var a);

  // Structure.
  Var concat(std::span<const Var> xs);
  Var concat(std::initializer_list<Var> xs) { return concat(std::span<const Var>(xs.begin(), xs.size())); }
  Var slice(Var a, Eigen::Index offset, Eigen::Index length);
  Var kron(Var a, Var b);

  // Reductions to a 1-vector.
  Var sum(Var a);
  Var abs_sum(Var a);                  // L1 norm; subgradient 0 at 0
  Var kl_std_normal(Var mu, Var sigma);  // KL(N(mu, sigma^2) || N(0, I))

  // 1-D convolutions over channel-major (channels x length) vectors.
  Var conv1d(int w, int b, Var x, const ConvShape& shape);
  Var conv_transpose1d(int w, int b, Var x, const ConvShape& shape);

  // Backward pass. The output seed is ones for a scalar output, or an explicit
  // upstream vector. Parameter gradients are accumulated into `grads`.
  void backward(Var out, GradStore& grads);
  void backward(Var out, const Vec& upstream, GradStore* grads);

  [[nodiscard]] Eigen::Map<const Vec> value(Var v) const;
  [[nodiscard]] Eigen::Map<const Vec> grad(Var v) const;

 private:
  enum class Op : std::uint8_t {
    Input, Param, Affine, Affine2, MatVec, ConstMatVec,
    Add, Sub, Mul, AffineScalar, LinComb,
    Tanh, Sigmoid, Softplus, Exp, Log, Square,
    Concat, Slice, Kron, Sum, AbsSum, KlStdNormal,
    Conv1d, ConvT1d,
  };

  struct Node {
    Op op{};
    bool needs_grad = false;
    std::int32_t a = -1;
    std::int32_t b = -1;
    std::int32_t p0 = -1;
    std::int32_t p1 = -1;
    std::int32_t p2 = -1;
    std::int64_t offset = 0;  // into values_/grads_
    std::int32_t dim = 0;
    std::int32_t aux = 0;      // offset into aux_idx_/aux_coef_ or mats_/convs_
    std::int32_t aux_len = 0;
    double s0 = 0.0;
    double s1 = 0.0;
  };

  Var push(Node node);
  double* val(std::int32_t id) { return values_.data() + nodes_[static_cast<std::size_t>(id)].offset; }
  [[nodiscard]] const double* val(std::int32_t id) const { return values_.data() + nodes_[static_cast<std::size_t>(id)].offset; }
  double* grd(std::int32_t id) { return grads_.data() + nodes_[static_cast<std::size_t>(id)].offset; }
  [[nodiscard]] const Node& node(std::int32_t id) const { return nodes_[static_cast<std::size_t>(id)]; }
  [[nodiscard]] bool needs(Var v) const { return node(v.id).needs_grad; }
  void check(Var v) const;
  const Mat& pv(int pid) const;

  const ParamStore* params_;
  std::vector<Node> nodes_;
  std::vector<double> values_;
  std::vector<double> grads_;
  std::vector<std::int32_t> aux_idx_;
  std::vector<double> aux_coef_;
  std::vector<Mat> mats_;
  std::vector<ConvShape> convs_;
};

inline Var operator+(Var a, Var b) { return a.tape->add(a, b); }
inline Var operator-(Var a, Var b) { return a.tape->sub(a, b); }
inline Var operator*(Var a, Var b) { return a.tape->mul(a, b); }
inline Var operator*(double s, Var a) { return a.tape->affine_scalar(a, s, 0.0); }

}  // namespace ndf::ad
