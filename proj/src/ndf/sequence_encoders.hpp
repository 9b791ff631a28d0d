#pragma once

#include <random>
#include <span>
#include <string>

#include "ndf/data_model.hpp"
#include "ndf/nn.hpp"
#include "ndf/ode_core.hpp"

namespace ndf::model {

using ad::Tape;
using ad::Var;

enum class CellKind { Gru, Lstm };

std::string to_string(CellKind k);
CellKind cell_kind_from_string(const std::string& s);

struct Posterior {
  Var mu;
  Var sigma;  // > 0
};

struct InitialLatent {
  Var z0;
  Posterior posterior;
  Vec epsilon;
};

// ODE-RNN encoder. The sequence is consumed from its last observation back
// to the first; between observations the hidden state follows a learned ODE
// backwards in time, and it is finally carried back to t0.
struct SequenceEncoder {
  CellKind kind = CellKind::Gru;
  nn::GruCell gru;
  nn::LstmCell lstm;
  ode::OdeNet dynamics;
  nn::Mlp head;  // hidden -> [mu; raw sigma]
  int input_dim = 0;
  int hidden_dim = 0;
  int latent_dim = 0;
  ode::SolverConfig solver = ode::SolverConfig::euler(0.01);

  static SequenceEncoder create(ParamStore& ps, const std::string& prefix, int input_dim, int hidden_dim,
                                int latent_dim, int ode_hidden, int head_hidden, CellKind kind,
                                const ode::SolverConfig& solver, std::mt19937_64& rng);

  // Hidden state at t0 after absorbing every observation; times strictly increasing and >= t0.
  Var encode_sequence(Tape& t, std::span<const TimedVector> seq, double t0) const;
  Posterior posterior_head(Tape& t, Var h0) const;
};

InitialLatent sample_initial(Tape& t, const Posterior& post, const Vec& epsilon);

}  // namespace ndf::model
