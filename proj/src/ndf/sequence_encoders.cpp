#include "ndf/sequence_encoders.hpp"

#include <stdexcept>

namespace ndf::model {

std::string to_string(CellKind k) { return k == CellKind::Gru ? "gru" : "lstm"; }

CellKind cell_kind_from_string(const std::string& s) {
  if (s == "gru") return CellKind::Gru;
  if (s == "lstm") return CellKind::Lstm;
  throw std::invalid_argument("unknown recurrent cell: " + s);
}

SequenceEncoder SequenceEncoder::create(ParamStore& ps, const std::string& prefix, int input_dim, int hidden_dim,
                                        int latent_dim, int ode_hidden, int head_hidden, CellKind kind,
                                        const ode::SolverConfig& solver, std::mt19937_64& rng) {
  SequenceEncoder e;
  e.kind = kind;
  e.input_dim = input_dim;
  e.hidden_dim = hidden_dim;
  e.latent_dim = latent_dim;
  e.solver = solver;
  if (kind == CellKind::Gru) {
    e.gru = nn::GruCell::create(ps, prefix + ".cell", input_dim, hidden_dim, rng);
  } else {
    e.lstm = nn::LstmCell::create(ps, prefix + ".cell", input_dim, hidden_dim, rng);
  }
  e.dynamics = ode::OdeNet::create(ps, prefix + ".ode", hidden_dim, ode_hidden, rng);
  e.head = nn::Mlp::create(ps, prefix + ".head", {hidden_dim, head_hidden, 2 * latent_dim}, rng);
  return e;
}

Var SequenceEncoder::encode_sequence(Tape& t, std::span<const TimedVector> seq, double t0) const {
  if (seq.empty()) throw std::invalid_argument("encode_sequence: empty sequence");
  for (std::size_t i = 0; i < seq.size(); ++i) {
    if (seq[i].values.size() != input_dim) throw std::invalid_argument("encode_sequence: input dimension mismatch");
    if (i > 0 && !(seq[i].t > seq[i - 1].t)) throw std::invalid_argument("encode_sequence: times must strictly increase");
  }
  if (seq.front().t < t0) throw std::invalid_argument("encode_sequence: observation precedes t0");

  ode::Integrator integ(solver);
  const auto field = dynamics.field();
  Var h = t.constant(hidden_dim, 0.0);
  Var c = t.constant(hidden_dim, 0.0);
  double tc = seq.back().t;
  for (std::size_t n = seq.size(); n-- > 0;) {
    h = integ.integrate(t, field, h, tc, seq[n].t);
    tc = seq[n].t;
    Var x = t.input(seq[n].values);
    if (kind == CellKind::Gru) {
      h = gru(t, h, x);
    } else {
      const auto s = lstm(t, h, c, x);
      h = s.h;
      c = s.c;
    }
  }
  return integ.integrate(t, field, h, tc, t0);
}

Posterior SequenceEncoder::posterior_head(Tape& t, Var h0) const {
  Var out = head(t, h0);
  return {t.slice(out, 0, latent_dim), t.softplus(t.slice(out, latent_dim, latent_dim), 1e-6)};
}

InitialLatent sample_initial(Tape& t, const Posterior& post, const Vec& epsilon) {
  if (epsilon.size() != post.mu.dim()) throw std::invalid_argument("sample_initial: epsilon dimension mismatch");
  InitialLatent out;
  out.posterior = post;
  out.epsilon = epsilon;
  out.z0 = epsilon.isZero(0.0) ? post.mu : t.add(post.mu, t.mul(post.sigma, t.input(epsilon)));
  return out;
}

}  // namespace ndf::model
