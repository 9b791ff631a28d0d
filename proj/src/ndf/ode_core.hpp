#pragma once

#include <functional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ndf/autodiff.hpp"
#include "ndf/nn.hpp"

namespace ndf::ode {

using ad::Tape;
using ad::Var;

enum class Method { Euler, Dopri5 };

struct SolverConfig {
  Method method = Method::Dopri5;
  double step = 0.01;  // euler step in normalized time
  double rtol = 1e-5;
  double atol = 1e-7;
  int max_steps = 10000;

  static SolverConfig euler(double h = 0.01) { return {Method::Euler, h, 1e-5, 1e-7, 10000}; }
  static SolverConfig dopri5(double rtol = 1e-5, double atol = 1e-7) { return {Method::Dopri5, 0.01, rtol, atol, 10000}; }
};

std::string to_string(Method m);
Method method_from_string(const std::string& s);

// Raised when the adaptive solver exhausts its step budget.
class SolverError : public std::runtime_error {
 public:
  SolverError(const std::string& what, double last_t) : std::runtime_error(what), last_t_(last_t) {}
  [[nodiscard]] double last_accepted_time() const { return last_t_; }

 private:
  double last_t_;
};

// dz/dt = f(z, t), recorded on the tape so the solution is differentiable.
using VectorField = std::function<Var(Tape&, Var z, double t)>;

// Learnable vector field: an MLP on [z; t].
struct OdeNet {
  nn::Mlp mlp;
  int dim = 0;

  static OdeNet create(ParamStore& ps, const std::string& prefix, int dim, int hidden, std::mt19937_64& rng,
                       double output_scale = 0.1);
  Var operator()(Tape& t, Var z, double time) const;
  [[nodiscard]] VectorField field() const;
};

struct SolveStats {
  int accepted = 0;
  int rejected = 0;
  int evaluations = 0;
};

class Integrator {
 public:
  explicit Integrator(SolverConfig cfg) : cfg_(cfg) {}

  // z(t1) from z(t0). t1 < t0 integrates backwards.
  Var integrate(Tape& t, const VectorField& f, Var z0, double t0, double t1);

  // Values at each of `times` (strictly increasing, times[0] >= t0), each
  // segment continuing from the previous result.
  std::vector<Var> integrate_path(Tape& t, const VectorField& f, Var z0, double t0, std::span<const double> times);

  [[nodiscard]] const SolveStats& stats() const { return stats_; }
  [[nodiscard]] const SolverConfig& config() const { return cfg_; }

 private:
  Var euler(Tape& t, const VectorField& f, Var z0, double t0, double t1);
  Var dopri5(Tape& t, const VectorField& f, Var z0, double t0, double t1);

  SolverConfig cfg_;
  SolveStats stats_;
  double h_hint_ = 0.0;  // last accepted dopri5 step, reused by the next segment
  // Last stage of the previous segment, f(z_end, t_end), reused as the first
  // stage of a segment that starts from the same state.
  struct {
    const Tape* tape = nullptr;
    Var y;
    Var k;
    double t = 0.0;
  } fsal_;
};

// Convenience wrappers with a fresh Integrator.
Var integrate(Tape& t, const VectorField& f, Var z0, double t0, double t1, const SolverConfig& cfg);
std::vector<Var> integrate_path(Tape& t, const VectorField& f, Var z0, double t0, std::span<const double> times,
                                const SolverConfig& cfg);

struct OdeGradients {
  Vec z1;       // forward solution
  Vec dz0;      // upstream^T dz(t1)/dz0
  GradStore dtheta;
};

// Discretize-then-differentiate sensitivities of upstream . z(t1).
OdeGradients gradients(const ParamStore& params, const VectorField& f, const Vec& z0, double t0, double t1,
                       const SolverConfig& cfg, const Vec& upstream);

}  // namespace ndf::ode
