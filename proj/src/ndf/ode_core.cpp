#include "ndf/ode_core.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace ndf::ode {

namespace {

// Dormand-Prince 5(4) tableau.
constexpr double c2 = 1.0 / 5.0, c3 = 3.0 / 10.0, c4 = 4.0 / 5.0, c5 = 8.0 / 9.0;
constexpr double a21 = 1.0 / 5.0;
constexpr double a31 = 3.0 / 40.0, a32 = 9.0 / 40.0;
constexpr double a41 = 44.0 / 45.0, a42 = -56.0 / 15.0, a43 = 32.0 / 9.0;
constexpr double a51 = 19372.0 / 6561.0, a52 = -25360.0 / 2187.0, a53 = 64448.0 / 6561.0, a54 = -212.0 / 729.0;
constexpr double a61 = 9017.0 / 3168.0, a62 = -355.0 / 33.0, a63 = 46732.0 / 5247.0, a64 = 49.0 / 176.0,
                 a65 = -5103.0 / 18656.0;
constexpr double b1 = 35.0 / 384.0, b3 = 500.0 / 1113.0, b4 = 125.0 / 192.0, b5 = -2187.0 / 6784.0,
                 b6 = 11.0 / 84.0;
// b - b*, the embedded 4th-order error weights
constexpr double e1 = 71.0 / 57600.0, e3 = -71.0 / 16695.0, e4 = 71.0 / 1920.0, e5 = -17253.0 / 339200.0,
                 e6 = 22.0 / 525.0, e7 = -1.0 / 40.0;

constexpr double kSafety = 0.9;
constexpr double kMinFactor = 0.2;
constexpr double kMaxFactor = 10.0;

double rms_scaled(const Vec& v, const Vec& scale) {
  if (v.size() == 0) return 0.0;
  return std::sqrt((v.array() / scale.array()).square().mean());
}

}  // namespace

std::string to_string(Method m) { return m == Method::Euler ? "euler" : "dopri5"; }

Method method_from_string(const std::string& s) {
  if (s == "euler") return Method::Euler;
  if (s == "dopri5") return Method::Dopri5;
  throw std::invalid_argument("unknown solver method: " + s);
}

OdeNet OdeNet::create(ParamStore& ps, const std::string& prefix, int dim, int hidden, std::mt19937_64& rng,
                      double output_scale) {
  OdeNet n;
  n.dim = dim;
  n.mlp = nn::Mlp::create(ps, prefix, {dim + 1, hidden, dim}, rng, output_scale);
  return n;
}

Var OdeNet::operator()(Tape& t, Var z, double time) const {
  return mlp(t, t.concat({z, t.constant(1, time)}));
}

VectorField OdeNet::field() const {
  return [this](Tape& t, Var z, double time) { return (*this)(t, z, time); };
}

Var Integrator::integrate(Tape& t, const VectorField& f, Var z0, double t0, double t1) {
  if (!std::isfinite(t0) || !std::isfinite(t1)) throw std::invalid_argument("integrate: non-finite time");
  if (t1 == t0) return z0;
  return cfg_.method == Method::Euler ? euler(t, f, z0, t0, t1) : dopri5(t, f, z0, t0, t1);
}

std::vector<Var> Integrator::integrate_path(Tape& t, const VectorField& f, Var z0, double t0,
                                            std::span<const double> times) {
  std::vector<Var> out;
  out.reserve(times.size());
  if (times.empty()) return out;
  if (times[0] < t0) throw std::invalid_argument("integrate_path: first query precedes t0");
  for (std::size_t i = 1; i < times.size(); ++i) {
    if (!(times[i] > times[i - 1])) throw std::invalid_argument("integrate_path: query times must strictly increase");
  }
  Var z = z0;
  double tc = t0;
  for (double ti : times) {
    z = integrate(t, f, z, tc, ti);
    tc = ti;
    out.push_back(z);
  }
  return out;
}

Var Integrator::euler(Tape& t, const VectorField& f, Var z0, double t0, double t1) {
  if (!(cfg_.step > 0.0)) throw std::invalid_argument("euler step must be positive");
  const double span = t1 - t0;
  const auto n = std::max<long>(1, static_cast<long>(std::ceil(std::abs(span) / cfg_.step - 1e-9)));
  const double dt = span / static_cast<double>(n);
  Var z = z0;
  for (long i = 0; i < n; ++i) {
    const double ti = t0 + static_cast<double>(i) * dt;
    Var k = f(t, z, ti);
    ++stats_.evaluations;
    const std::array<Var, 2> xs{z, k};
    const std::array<double, 2> cs{1.0, dt};
    z = t.lincomb(xs, cs);
    ++stats_.accepted;
  }
  return z;
}

Var Integrator::dopri5(Tape& t, const VectorField& f, Var z0, double t0, double t1) {
  if (!(cfg_.rtol > 0.0) || !(cfg_.atol > 0.0)) throw std::invalid_argument("dopri5 tolerances must be positive");
  const double dir = t1 > t0 ? 1.0 : -1.0;
  const double span = std::abs(t1 - t0);

  Var y = z0;
  Var k1;
  if (fsal_.tape == &t && fsal_.y.id == z0.id && fsal_.t == t0 && fsal_.k.id < t.mark()) {
    k1 = fsal_.k;
  } else {
    k1 = f(t, y, t0);
    ++stats_.evaluations;
  }

  double h = h_hint_;
  if (!(h > 0.0)) {
    // Hairer & Wanner's starting step heuristic.
    const Vec y0 = t.value(y);
    const Vec f0 = t.value(k1);
    const Vec sc = (cfg_.atol + cfg_.rtol * y0.array().abs()).matrix();
    const double d0 = rms_scaled(y0, sc);
    const double d1 = rms_scaled(f0, sc);
    double h0 = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
    h0 = std::min(h0, span);
    const auto mark = t.mark();
    const Vec y1v = y0 + dir * h0 * f0;
    Var f1 = f(t, t.input(y1v), t0 + dir * h0);
    ++stats_.evaluations;
    const double d2 = rms_scaled(Vec(t.value(f1)) - f0, sc) / h0;
    t.rewind(mark);
    const double dmax = std::max(d1, d2);
    const double h1 = dmax <= 1e-15 ? std::max(1e-6, h0 * 1e-3) : std::pow(0.01 / dmax, 1.0 / 5.0);
    h = std::min(100.0 * h0, h1);
  }

  double tc = t0;
  double remaining = span;
  int steps = 0;
  while (remaining > 0.0) {
    if (steps >= cfg_.max_steps) {
      throw SolverError("dopri5 exceeded max_steps (" + std::to_string(cfg_.max_steps) + ")", tc);
    }
    ++steps;
    bool last = false;
    double hs = h;
    if (hs >= remaining * (1.0 - 1e-12)) {
      hs = remaining;
      last = true;
    }
    const double dt = dir * hs;
    const auto mark = t.mark();

    auto stage = [&](std::initializer_list<Var> ks, std::initializer_list<double> as) {
      std::vector<Var> xs{y};
      std::vector<double> cs{1.0};
      auto a = as.begin();
      for (Var k : ks) {
        xs.push_back(k);
        cs.push_back(dt * *a++);
      }
      return t.lincomb(xs, cs);
    };

    Var k2 = f(t, stage({k1}, {a21}), tc + c2 * dt);
    Var k3 = f(t, stage({k1, k2}, {a31, a32}), tc + c3 * dt);
    Var k4 = f(t, stage({k1, k2, k3}, {a41, a42, a43}), tc + c4 * dt);
    Var k5 = f(t, stage({k1, k2, k3, k4}, {a51, a52, a53, a54}), tc + c5 * dt);
    Var k6 = f(t, stage({k1, k2, k3, k4, k5}, {a61, a62, a63, a64, a65}), tc + dt);
    Var y_new = stage({k1, k3, k4, k5, k6}, {b1, b3, b4, b5, b6});
    const double t_new = last ? t1 : tc + dt;
    Var k7 = f(t, y_new, t_new);
    stats_.evaluations += 6;

    const Vec err = dt * (e1 * t.value(k1) + e3 * t.value(k3) + e4 * t.value(k4) + e5 * t.value(k5) +
                          e6 * t.value(k6) + e7 * t.value(k7));
    const Vec sc = (cfg_.atol + cfg_.rtol * t.value(y).cwiseAbs().cwiseMax(t.value(y_new).cwiseAbs()).array()).matrix();
    const double err_norm = rms_scaled(err, sc);
    if (!std::isfinite(err_norm)) {
      throw SolverError("dopri5 produced a non-finite state", tc);
    }

    double factor = err_norm == 0.0 ? kMaxFactor : kSafety * std::pow(err_norm, -0.2);
    factor = std::clamp(factor, kMinFactor, kMaxFactor);

    if (err_norm <= 1.0) {
      ++stats_.accepted;
      y = y_new;
      k1 = k7;
      tc = t_new;
      remaining = last ? 0.0 : remaining - hs;
      h = last ? std::max(h, hs * factor) : hs * factor;
    } else {
      ++stats_.rejected;
      t.rewind(mark);
      h = hs * std::min(1.0, factor);
    }
  }
  h_hint_ = h;
  fsal_ = {&t, y, k1, t1};
  return y;
}

Var integrate(Tape& t, const VectorField& f, Var z0, double t0, double t1, const SolverConfig& cfg) {
  Integrator integ(cfg);
  return integ.integrate(t, f, z0, t0, t1);
}

std::vector<Var> integrate_path(Tape& t, const VectorField& f, Var z0, double t0, std::span<const double> times,
                                const SolverConfig& cfg) {
  Integrator integ(cfg);
  return integ.integrate_path(t, f, z0, t0, times);
}

OdeGradients gradients(const ParamStore& params, const VectorField& f, const Vec& z0, double t0, double t1,
                       const SolverConfig& cfg, const Vec& upstream) {
  Tape tape(&params);
  Var z = tape.input(z0, true);
  Var z1 = integrate(tape, f, z, t0, t1, cfg);
  OdeGradients out;
  out.z1 = tape.value(z1);
  out.dtheta = GradStore(params);
  tape.backward(z1, upstream, &out.dtheta);
  out.dz0 = tape.grad(z);
  return out;
}

}  // namespace ndf::ode
