#include "ndf/autodiff.hpp"

#include <cmath>
#include <stdexcept>

namespace ndf::ad {

namespace {

using MapV = Eigen::Map<Vec>;
using CMapV = Eigen::Map<const Vec>;

double softplus_value(double x) {
  // log1p(exp(x)) without overflow
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double sigmoid_value(double x) {
  if (x >= 0.0) {
    const double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Eigen::Index Var::dim() const { return tape->value(*this).size(); }
Eigen::Map<const Vec> Var::value() const { return tape->value(*this); }
double Var::scalar() const { return tape->value(*this)[0]; }

Tape::Tape(const ParamStore* params) : params_(params) {
  nodes_.reserve(4096);
  values_.reserve(1 << 16);
}

void Tape::reset() {
  nodes_.clear();
  values_.clear();
  grads_.clear();
  aux_idx_.clear();
  aux_coef_.clear();
  mats_.clear();
  convs_.clear();
}

void Tape::rewind(std::int32_t m) {
  if (m < 0 || m > mark()) throw std::out_of_range("tape rewind past end");
  if (m == mark()) return;
  const Node& first = nodes_[static_cast<std::size_t>(m)];
  values_.resize(static_cast<std::size_t>(first.offset));
  // Side storage is only ever appended to, so truncating to the smallest
  // referenced position of the dropped nodes keeps earlier nodes intact.
  std::size_t aux_keep = aux_idx_.size();
  std::size_t mats_keep = mats_.size();
  std::size_t convs_keep = convs_.size();
  for (std::size_t i = static_cast<std::size_t>(m); i < nodes_.size(); ++i) {
    const Node& n = nodes_[i];
    if (n.op == Op::LinComb || n.op == Op::Concat) aux_keep = std::min(aux_keep, static_cast<std::size_t>(n.aux));
    if (n.op == Op::ConstMatVec) mats_keep = std::min(mats_keep, static_cast<std::size_t>(n.aux));
    if (n.op == Op::Conv1d || n.op == Op::ConvT1d) convs_keep = std::min(convs_keep, static_cast<std::size_t>(n.aux));
  }
  aux_idx_.resize(aux_keep);
  aux_coef_.resize(std::min(aux_coef_.size(), aux_keep));
  mats_.resize(mats_keep);
  convs_.resize(convs_keep);
  nodes_.resize(static_cast<std::size_t>(m));
}

void Tape::check(Var v) const {
  if (v.tape != this || v.id < 0 || v.id >= mark()) {
    throw std::invalid_argument("variable does not belong to this tape");
  }
}

const Mat& Tape::pv(int pid) const {
  if (params_ == nullptr || pid < 0 || pid >= params_->size()) {
    throw std::invalid_argument("parameter id out of range");
  }
  return params_->value(pid);
}

Var Tape::push(Node n) {
  n.offset = static_cast<std::int64_t>(values_.size());
  values_.resize(values_.size() + static_cast<std::size_t>(n.dim));
  nodes_.push_back(n);
  return Var{this, static_cast<std::int32_t>(nodes_.size() - 1)};
}

Eigen::Map<const Vec> Tape::value(Var v) const {
  check(v);
  const Node& n = node(v.id);
  return CMapV(values_.data() + n.offset, n.dim);
}

Eigen::Map<const Vec> Tape::grad(Var v) const {
  check(v);
  const Node& n = node(v.id);
  if (grads_.size() < values_.size()) throw std::logic_error("backward() has not been run");
  return CMapV(grads_.data() + n.offset, n.dim);
}

// ---------------------------------------------------------------- leaves

Var Tape::input(const Vec& v, bool requires_grad) {
  return input(std::span<const double>(v.data(), static_cast<std::size_t>(v.size())), requires_grad);
}

Var Tape::input(std::span<const double> v, bool requires_grad) {
  Node n;
  n.op = Op::Input;
  n.dim = static_cast<std::int32_t>(v.size());
  n.needs_grad = requires_grad;
  Var out = push(n);
  std::copy(v.begin(), v.end(), val(out.id));
  return out;
}

Var Tape::constant(Eigen::Index dim, double fill) {
  Node n;
  n.op = Op::Input;
  n.dim = static_cast<std::int32_t>(dim);
  Var out = push(n);
  std::fill_n(val(out.id), dim, fill);
  return out;
}

Var Tape::param(int pid) {
  const Mat& p = pv(pid);
  Node n;
  n.op = Op::Param;
  n.p0 = pid;
  n.dim = static_cast<std::int32_t>(p.size());
  n.needs_grad = true;
  Var out = push(n);
  std::copy_n(p.data(), p.size(), val(out.id));
  return out;
}

// ---------------------------------------------------------------- dense maps

Var Tape::affine(int w, int b, Var x) {
  check(x);
  const Mat& W = pv(w);
  const Mat& B = pv(b);
  if (W.cols() != x.dim() || B.rows() != W.rows()) throw std::invalid_argument("affine: shape mismatch");
  Node n;
  n.op = Op::Affine;
  n.a = x.id;
  n.p0 = w;
  n.p1 = b;
  n.dim = static_cast<std::int32_t>(W.rows());
  n.needs_grad = true;
  Var out = push(n);
  MapV y(val(out.id), n.dim);
  y.noalias() = W * CMapV(val(x.id), W.cols());
  y += B.col(0);
  return out;
}

Var Tape::affine2(int w, int u, int b, Var x, Var h) {
  check(x);
  check(h);
  const Mat& W = pv(w);
  const Mat& U = pv(u);
  const Mat& B = pv(b);
  if (W.cols() != x.dim() || U.cols() != h.dim() || U.rows() != W.rows() || B.rows() != W.rows()) {
    throw std::invalid_argument("affine2: shape mismatch");
  }
  Node n;
  n.op = Op::Affine2;
  n.a = x.id;
  n.b = h.id;
  n.p0 = w;
  n.p1 = u;
  n.p2 = b;
  n.dim = static_cast<std::int32_t>(W.rows());
  n.needs_grad = true;
  Var out = push(n);
  MapV y(val(out.id), n.dim);
  y.noalias() = W * CMapV(val(x.id), W.cols());
  y.noalias() += U * CMapV(val(h.id), U.cols());
  y += B.col(0);
  return out;
}

Var Tape::matvec(int w, Var x) {
  check(x);
  const Mat& W = pv(w);
  if (W.cols() != x.dim()) throw std::invalid_argument("matvec: shape mismatch");
  Node n;
  n.op = Op::MatVec;
  n.a = x.id;
  n.p0 = w;
  n.dim = static_cast<std::int32_t>(W.rows());
  n.needs_grad = true;
  Var out = push(n);
  MapV(val(out.id), n.dim).noalias() = W * CMapV(val(x.id), W.cols());
  return out;
}

Var Tape::const_matvec(const Mat& a, Var x) {
  check(x);
  if (a.cols() != x.dim()) throw std::invalid_argument("const_matvec: shape mismatch");
  Node n;
  n.op = Op::ConstMatVec;
  n.a = x.id;
  n.aux = static_cast<std::int32_t>(mats_.size());
  n.dim = static_cast<std::int32_t>(a.rows());
  n.needs_grad = needs(x);
  mats_.push_back(a);
  Var out = push(n);
  MapV(val(out.id), n.dim).noalias() = a * CMapV(val(x.id), a.cols());
  return out;
}

// ---------------------------------------------------------------- elementwise

Var Tape::add(Var a, Var b) {
  check(a);
  check(b);
  if (a.dim() != b.dim()) throw std::invalid_argument("add: dimension mismatch");
  Node n;
  n.op = Op::Add;
  n.a = a.id;
  n.b = b.id;
  n.dim = static_cast<std::int32_t>(a.dim());
  n.needs_grad = needs(a) || needs(b);
  Var out = push(n);
  MapV(val(out.id), n.dim) = CMapV(val(a.id), n.dim) + CMapV(val(b.id), n.dim);
  return out;
}

Var Tape::sub(Var a, Var b) {
  check(a);
  check(b);
  if (a.dim() != b.dim()) throw std::invalid_argument("sub: dimension mismatch");
  Node n;
  n.op = Op::Sub;
  n.a = a.id;
  n.b = b.id;
  n.dim = static_cast<std::int32_t>(a.dim());
  n.needs_grad = needs(a) || needs(b);
  Var out = push(n);
  MapV(val(out.id), n.dim) = CMapV(val(a.id), n.dim) - CMapV(val(b.id), n.dim);
  return out;
}

Var Tape::mul(Var a, Var b) {
  check(a);
  check(b);
  if (a.dim() != b.dim()) throw std::invalid_argument("mul: dimension mismatch");
  Node n;
  n.op = Op::Mul;
  n.a = a.id;
  n.b = b.id;
  n.dim = static_cast<std::int32_t>(a.dim());
  n.needs_grad = needs(a) || needs(b);
  Var out = push(n);
  MapV(val(out.id), n.dim) = CMapV(val(a.id), n.dim).cwiseProduct(CMapV(val(b.id), n.dim));
  return out;
}

Var Tape::affine_scalar(Var a, double scale, double shift) {
  check(a);
  Node n;
  n.op = Op::AffineScalar;
  n.a = a.id;
  n.s0 = scale;
  n.s1 = shift;
  n.dim = static_cast<std::int32_t>(a.dim());
  n.needs_grad = needs(a);
  Var out = push(n);
  MapV(val(out.id), n.dim) = (scale * CMapV(val(a.id), n.dim)).array() + shift;
  return out;
}

Var Tape::lincomb(std::span<const Var> xs, std::span<const double> coefs) {
  if (xs.empty() || xs.size() != coefs.size()) throw std::invalid_argument("lincomb: bad operand count");
  const Eigen::Index d = xs[0].dim();
  Node n;
  n.op = Op::LinComb;
  n.aux = static_cast<std::int32_t>(aux_idx_.size());
  n.aux_len = static_cast<std::int32_t>(xs.size());
  n.dim = static_cast<std::int32_t>(d);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    check(xs[i]);
    if (xs[i].dim() != d) throw std::invalid_argument("lincomb: dimension mismatch");
    n.needs_grad = n.needs_grad || needs(xs[i]);
    aux_idx_.push_back(xs[i].id);
    aux_coef_.push_back(coefs[i]);
  }
  Var out = push(n);
  MapV y(val(out.id), d);
  y.setZero();
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (coefs[i] != 0.0) y += coefs[i] * CMapV(val(xs[i].id), d);
  }
  return out;
}

#define NDF_UNARY(NAME, OPCODE, EXPR)                          \
  Var Tape::NAME(Var a) {                                      \
    check(a);                                                  \
    Node n;                                                    \
    n.op = Op::OPCODE;                                         \
    n.a = a.id;                                                \
    n.dim = static_cast<std::int32_t>(a.dim());                \
    n.needs_grad = needs(a);                                   \
    Var out = push(n);                                         \
    const double* x = val(a.id);                               \
    double* y = val(out.id);                                   \
    for (std::int32_t i = 0; i < n.dim; ++i) y[i] = (EXPR);    \
    return out;                                                \
  }

NDF_UNARY(tanh, Tanh, std::tanh(x[i]))
NDF_UNARY(sigmoid, Sigmoid, sigmoid_value(x[i]))
NDF_UNARY(exp, Exp, std::exp(x[i]))
NDF_UNARY(log, Log, std::log(x[i]))
NDF_UNARY(square, Square, x[i] * x[i])

#undef NDF_UNARY

Var Tape::softplus(Var a, double floor) {
  check(a);
  Node n;
  n.op = Op::Softplus;
  n.a = a.id;
  n.s0 = floor;
  n.dim = static_cast<std::int32_t>(a.dim());
  n.needs_grad = needs(a);
  Var out = push(n);
  const double* x = val(a.id);
  double* y = val(out.id);
  for (std::int32_t i = 0; i < n.dim; ++i) y[i] = softplus_value(x[i]) + floor;
  return out;
}

// ---------------------------------------------------------------- structure

Var Tape::concat(std::span<const Var> xs) {
  if (xs.empty()) throw std::invalid_argument("concat: no operands");
  Node n;
  n.op = Op::Concat;
  n.aux = static_cast<std::int32_t>(aux_idx_.size());
  n.aux_len = static_cast<std::int32_t>(xs.size());
  for (const Var& x : xs) {
    check(x);
    n.dim += static_cast<std::int32_t>(x.dim());
    n.needs_grad = n.needs_grad || needs(x);
    aux_idx_.push_back(x.id);
    aux_coef_.push_back(0.0);
  }
  Var out = push(n);
  double* y = val(out.id);
  for (const Var& x : xs) {
    const auto d = node(x.id).dim;
    std::copy_n(val(x.id), d, y);
    y += d;
  }
  return out;
}

Var Tape::slice(Var a, Eigen::Index offset, Eigen::Index length) {
  check(a);
  if (offset < 0 || length < 0 || offset + length > a.dim()) throw std::out_of_range("slice out of range");
  Node n;
  n.op = Op::Slice;
  n.a = a.id;
  n.aux = static_cast<std::int32_t>(offset);
  n.dim = static_cast<std::int32_t>(length);
  n.needs_grad = needs(a);
  Var out = push(n);
  std::copy_n(val(a.id) + offset, length, val(out.id));
  return out;
}

Var Tape::kron(Var a, Var b) {
  check(a);
  check(b);
  const auto da = static_cast<std::int32_t>(a.dim());
  const auto db = static_cast<std::int32_t>(b.dim());
  Node n;
  n.op = Op::Kron;
  n.a = a.id;
  n.b = b.id;
  n.dim = da * db;
  n.needs_grad = needs(a) || needs(b);
  Var out = push(n);
  const double* x = val(a.id);
  const double* z = val(b.id);
  double* y = val(out.id);
  for (std::int32_t i = 0; i < da; ++i) {
    for (std::int32_t j = 0; j < db; ++j) y[i * db + j] = x[i] * z[j];
  }
  return out;
}

// ---------------------------------------------------------------- reductions

Var Tape::sum(Var a) {
  check(a);
  Node n;
  n.op = Op::Sum;
  n.a = a.id;
  n.dim = 1;
  n.needs_grad = needs(a);
  Var out = push(n);
  val(out.id)[0] = CMapV(val(a.id), node(a.id).dim).sum();
  return out;
}

Var Tape::abs_sum(Var a) {
  check(a);
  Node n;
  n.op = Op::AbsSum;
  n.a = a.id;
  n.dim = 1;
  n.needs_grad = needs(a);
  Var out = push(n);
  val(out.id)[0] = CMapV(val(a.id), node(a.id).dim).cwiseAbs().sum();
  return out;
}

Var Tape::kl_std_normal(Var mu, Var sigma) {
  check(mu);
  check(sigma);
  if (mu.dim() != sigma.dim()) throw std::invalid_argument("kl: dimension mismatch");
  {
    const double* sd = val(sigma.id);
    for (Eigen::Index i = 0; i < sigma.dim(); ++i) {
      if (!(sd[i] > 0.0) && !std::isnan(sd[i])) throw std::invalid_argument("kl: sigma must be positive");
    }
  }
  Node n;
  n.op = Op::KlStdNormal;
  n.a = mu.id;
  n.b = sigma.id;
  n.dim = 1;
  n.needs_grad = needs(mu) || needs(sigma);
  Var out = push(n);
  const auto d = node(mu.id).dim;
  const double* m = val(mu.id);
  const double* s = val(sigma.id);
  double kl = 0.0;
  for (std::int32_t i = 0; i < d; ++i) {
    if (!(s[i] > 0.0)) throw std::domain_error("kl: sigma must be positive");
    const double s2 = s[i] * s[i];
    kl += 0.5 * (m[i] * m[i] + s2 - 1.0 - std::log(s2));
  }
  val(out.id)[0] = kl;
  return out;
}

// ---------------------------------------------------------------- convolutions

Var Tape::conv1d(int w, int b, Var x, const ConvShape& shape_in) {
  check(x);
  ConvShape s = shape_in;
  s.out_length = (s.in_length + 2 * s.padding - s.kernel) / s.stride + 1;
  const Mat& W = pv(w);
  const Mat& B = pv(b);
  if (x.dim() != static_cast<Eigen::Index>(s.in_channels) * s.in_length || W.rows() != s.out_channels ||
      W.cols() != static_cast<Eigen::Index>(s.in_channels) * s.kernel || B.rows() != s.out_channels ||
      s.out_length <= 0) {
    throw std::invalid_argument("conv1d: shape mismatch");
  }
  Node n;
  n.op = Op::Conv1d;
  n.a = x.id;
  n.p0 = w;
  n.p1 = b;
  n.aux = static_cast<std::int32_t>(convs_.size());
  n.dim = s.out_channels * s.out_length;
  n.needs_grad = true;
  convs_.push_back(s);
  Var out = push(n);
  const double* xv = val(x.id);
  double* y = val(out.id);
  for (int o = 0; o < s.out_channels; ++o) {
    for (int j = 0; j < s.out_length; ++j) {
      double acc = B(o, 0);
      for (int c = 0; c < s.in_channels; ++c) {
        for (int k = 0; k < s.kernel; ++k) {
          const int pos = j * s.stride + k - s.padding;
          if (pos < 0 || pos >= s.in_length) continue;
          acc += W(o, c * s.kernel + k) * xv[c * s.in_length + pos];
        }
      }
      y[o * s.out_length + j] = acc;
    }
  }
  return out;
}

Var Tape::conv_transpose1d(int w, int b, Var x, const ConvShape& shape_in) {
  check(x);
  ConvShape s = shape_in;
  s.out_length = (s.in_length - 1) * s.stride - 2 * s.padding + s.kernel;
  const Mat& W = pv(w);
  const Mat& B = pv(b);
  if (x.dim() != static_cast<Eigen::Index>(s.in_channels) * s.in_length || W.rows() != s.in_channels ||
      W.cols() != static_cast<Eigen::Index>(s.out_channels) * s.kernel || B.rows() != s.out_channels ||
      s.out_length <= 0) {
    throw std::invalid_argument("conv_transpose1d: shape mismatch");
  }
  Node n;
  n.op = Op::ConvT1d;
  n.a = x.id;
  n.p0 = w;
  n.p1 = b;
  n.aux = static_cast<std::int32_t>(convs_.size());
  n.dim = s.out_channels * s.out_length;
  n.needs_grad = true;
  convs_.push_back(s);
  Var out = push(n);
  const double* xv = val(x.id);
  double* y = val(out.id);
  for (int o = 0; o < s.out_channels; ++o) {
    for (int j = 0; j < s.out_length; ++j) y[o * s.out_length + j] = B(o, 0);
  }
  for (int c = 0; c < s.in_channels; ++c) {
    for (int j = 0; j < s.in_length; ++j) {
      const double xj = xv[c * s.in_length + j];
      for (int o = 0; o < s.out_channels; ++o) {
        for (int k = 0; k < s.kernel; ++k) {
          const int pos = j * s.stride + k - s.padding;
          if (pos < 0 || pos >= s.out_length) continue;
          y[o * s.out_length + pos] += W(c, o * s.kernel + k) * xj;
        }
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------- backward

void Tape::backward(Var out, GradStore& grads) {
  check(out);
  if (out.dim() != 1) throw std::invalid_argument("backward: output must be scalar");
  backward(out, Vec::Ones(1), &grads);
}

void Tape::backward(Var out, const Vec& upstream, GradStore* grads) {
  check(out);
  if (upstream.size() != out.dim()) throw std::invalid_argument("backward: upstream size mismatch");
  grads_.assign(values_.size(), 0.0);
  MapV(grd(out.id), upstream.size()) = upstream;
  // Nodes after `out` cannot influence it.
  for (std::int32_t id = out.id; id >= 0; --id) {
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.needs_grad) continue;
    const double* g = grads_.data() + n.offset;
    const std::int32_t d = n.dim;
    auto gv = CMapV(g, d);

    auto need = [&](std::int32_t i) { return i >= 0 && nodes_[static_cast<std::size_t>(i)].needs_grad; };
    auto gmap = [&](std::int32_t i) { return MapV(grd(i), nodes_[static_cast<std::size_t>(i)].dim); };
    auto vmap = [&](std::int32_t i) { return CMapV(val(i), nodes_[static_cast<std::size_t>(i)].dim); };

    switch (n.op) {
      case Op::Input:
        break;
      case Op::Param:
        if (grads != nullptr) {
          Mat& G = (*grads)[n.p0];
          MapV(G.data(), G.size()) += gv;
        }
        break;
      case Op::Affine: {
        const Mat& W = pv(n.p0);
        if (grads != nullptr) {
          (*grads)[n.p0].noalias() += gv * vmap(n.a).transpose();
          (*grads)[n.p1].col(0) += gv;
        }
        if (need(n.a)) gmap(n.a).noalias() += W.transpose() * gv;
        break;
      }
      case Op::Affine2: {
        const Mat& W = pv(n.p0);
        const Mat& U = pv(n.p1);
        if (grads != nullptr) {
          (*grads)[n.p0].noalias() += gv * vmap(n.a).transpose();
          (*grads)[n.p1].noalias() += gv * vmap(n.b).transpose();
          (*grads)[n.p2].col(0) += gv;
        }
        if (need(n.a)) gmap(n.a).noalias() += W.transpose() * gv;
        if (need(n.b)) gmap(n.b).noalias() += U.transpose() * gv;
        break;
      }
      case Op::MatVec: {
        const Mat& W = pv(n.p0);
        if (grads != nullptr) (*grads)[n.p0].noalias() += gv * vmap(n.a).transpose();
        if (need(n.a)) gmap(n.a).noalias() += W.transpose() * gv;
        break;
      }
      case Op::ConstMatVec:
        if (need(n.a)) gmap(n.a).noalias() += mats_[static_cast<std::size_t>(n.aux)].transpose() * gv;
        break;
      case Op::Add:
        if (need(n.a)) gmap(n.a) += gv;
        if (need(n.b)) gmap(n.b) += gv;
        break;
      case Op::Sub:
        if (need(n.a)) gmap(n.a) += gv;
        if (need(n.b)) gmap(n.b) -= gv;
        break;
      case Op::Mul:
        if (need(n.a)) gmap(n.a) += gv.cwiseProduct(vmap(n.b));
        if (need(n.b)) gmap(n.b) += gv.cwiseProduct(vmap(n.a));
        break;
      case Op::AffineScalar:
        if (need(n.a)) gmap(n.a) += n.s0 * gv;
        break;
      case Op::LinComb:
        for (std::int32_t i = 0; i < n.aux_len; ++i) {
          const auto src = aux_idx_[static_cast<std::size_t>(n.aux + i)];
          const double c = aux_coef_[static_cast<std::size_t>(n.aux + i)];
          if (c != 0.0 && need(src)) gmap(src) += c * gv;
        }
        break;
      case Op::Tanh:
        if (need(n.a)) {
          auto y = CMapV(val(id), d);
          gmap(n.a).array() += gv.array() * (1.0 - y.array().square());
        }
        break;
      case Op::Sigmoid:
        if (need(n.a)) {
          auto y = CMapV(val(id), d);
          gmap(n.a).array() += gv.array() * y.array() * (1.0 - y.array());
        }
        break;
      case Op::Softplus:
        if (need(n.a)) {
          const double* x = val(n.a);
          double* ga = grd(n.a);
          for (std::int32_t i = 0; i < d; ++i) ga[i] += g[i] * sigmoid_value(x[i]);
        }
        break;
      case Op::Exp:
        if (need(n.a)) gmap(n.a).array() += gv.array() * CMapV(val(id), d).array();
        break;
      case Op::Log:
        if (need(n.a)) gmap(n.a).array() += gv.array() / vmap(n.a).array();
        break;
      case Op::Square:
        if (need(n.a)) gmap(n.a).array() += 2.0 * gv.array() * vmap(n.a).array();
        break;
      case Op::Concat: {
        std::int32_t off = 0;
        for (std::int32_t i = 0; i < n.aux_len; ++i) {
          const auto src = aux_idx_[static_cast<std::size_t>(n.aux + i)];
          const auto sd = nodes_[static_cast<std::size_t>(src)].dim;
          if (need(src)) gmap(src) += CMapV(g + off, sd);
          off += sd;
        }
        break;
      }
      case Op::Slice:
        if (need(n.a)) MapV(grd(n.a) + n.aux, d) += gv;
        break;
      case Op::Kron: {
        const auto da = nodes_[static_cast<std::size_t>(n.a)].dim;
        const auto db = nodes_[static_cast<std::size_t>(n.b)].dim;
        const double* x = val(n.a);
        const double* z = val(n.b);
        if (need(n.a)) {
          double* ga = grd(n.a);
          for (std::int32_t i = 0; i < da; ++i) {
            double acc = 0.0;
            for (std::int32_t j = 0; j < db; ++j) acc += g[i * db + j] * z[j];
            ga[i] += acc;
          }
        }
        if (need(n.b)) {
          double* gb = grd(n.b);
          for (std::int32_t i = 0; i < da; ++i) {
            for (std::int32_t j = 0; j < db; ++j) gb[j] += g[i * db + j] * x[i];
          }
        }
        break;
      }
      case Op::Sum:
        if (need(n.a)) gmap(n.a).array() += g[0];
        break;
      case Op::AbsSum:
        if (need(n.a)) {
          const double* x = val(n.a);
          double* ga = grd(n.a);
          const auto da = nodes_[static_cast<std::size_t>(n.a)].dim;
          for (std::int32_t i = 0; i < da; ++i) {
            if (x[i] > 0.0) ga[i] += g[0];
            else if (x[i] < 0.0) ga[i] -= g[0];
          }
        }
        break;
      case Op::KlStdNormal: {
        const auto dm = nodes_[static_cast<std::size_t>(n.a)].dim;
        if (need(n.a)) gmap(n.a) += g[0] * vmap(n.a);
        if (need(n.b)) {
          const double* s = val(n.b);
          double* gs = grd(n.b);
          for (std::int32_t i = 0; i < dm; ++i) gs[i] += g[0] * (s[i] - 1.0 / s[i]);
        }
        break;
      }
      case Op::Conv1d: {
        const ConvShape& s = convs_[static_cast<std::size_t>(n.aux)];
        const Mat& W = pv(n.p0);
        const double* xv = val(n.a);
        const bool gx = need(n.a);
        double* gxp = gx ? grd(n.a) : nullptr;
        Mat* GW = grads != nullptr ? &(*grads)[n.p0] : nullptr;
        Mat* GB = grads != nullptr ? &(*grads)[n.p1] : nullptr;
        for (int o = 0; o < s.out_channels; ++o) {
          for (int j = 0; j < s.out_length; ++j) {
            const double go = g[o * s.out_length + j];
            if (go == 0.0) continue;
            if (GB != nullptr) (*GB)(o, 0) += go;
            for (int c = 0; c < s.in_channels; ++c) {
              for (int k = 0; k < s.kernel; ++k) {
                const int pos = j * s.stride + k - s.padding;
                if (pos < 0 || pos >= s.in_length) continue;
                if (GW != nullptr) (*GW)(o, c * s.kernel + k) += go * xv[c * s.in_length + pos];
                if (gx) gxp[c * s.in_length + pos] += go * W(o, c * s.kernel + k);
              }
            }
          }
        }
        break;
      }
      case Op::ConvT1d: {
        const ConvShape& s = convs_[static_cast<std::size_t>(n.aux)];
        const Mat& W = pv(n.p0);
        const double* xv = val(n.a);
        const bool gx = need(n.a);
        double* gxp = gx ? grd(n.a) : nullptr;
        Mat* GW = grads != nullptr ? &(*grads)[n.p0] : nullptr;
        if (grads != nullptr) {
          Mat& GB = (*grads)[n.p1];
          for (int o = 0; o < s.out_channels; ++o) {
            for (int j = 0; j < s.out_length; ++j) GB(o, 0) += g[o * s.out_length + j];
          }
        }
        for (int c = 0; c < s.in_channels; ++c) {
          for (int j = 0; j < s.in_length; ++j) {
            const double xj = xv[c * s.in_length + j];
            double acc = 0.0;
            for (int o = 0; o < s.out_channels; ++o) {
              for (int k = 0; k < s.kernel; ++k) {
                const int pos = j * s.stride + k - s.padding;
                if (pos < 0 || pos >= s.out_length) continue;
                const double go = g[o * s.out_length + pos];
                if (GW != nullptr) (*GW)(c, o * s.kernel + k) += go * xj;
                acc += go * W(c, o * s.kernel + k);
              }
            }
            if (gx) gxp[c * s.in_length + j] += acc;
          }
        }
        break;
      }
    }
  }
}

}  // namespace ndf::ad
