#pragma once

#include <random>
#include <string>
#include <vector>

#include "ndf/autodiff.hpp"
#include "ndf/params.hpp"

namespace ndf::nn {

using ad::Tape;
using ad::Var;

struct Linear {
  int w = -1;
  int b = -1;
  int in = 0;
  int out = 0;

  static Linear create(ParamStore& ps, const std::string& prefix, int in, int out, std::mt19937_64& rng,
                       double init_scale = 1.0);
  Var operator()(Tape& t, Var x) const { return t.affine(w, b, x); }
};

// Dense layers with tanh between them and a linear output.
struct Mlp {
  std::vector<Linear> layers;

  // widths = {in, hidden..., out}
  static Mlp create(ParamStore& ps, const std::string& prefix, const std::vector<int>& widths,
                    std::mt19937_64& rng, double last_layer_scale = 1.0);
  Var operator()(Tape& t, Var x) const;

  [[nodiscard]] int in_dim() const { return layers.front().in; }
  [[nodiscard]] int out_dim() const { return layers.back().out; }
  [[nodiscard]] const Linear& last() const { return layers.back(); }
};

// Gated recurrent unit:
//   u = sig(Wu x + Uu h + bu), r = sig(Wr x + Ur h + br)
//   n = tanh(Wn x + Un (r * h) + bn)
//   h' = (1 - u) * n + u * h
struct GruCell {
  int wu = -1, uu = -1, bu = -1;
  int wr = -1, ur = -1, br = -1;
  int wn = -1, un = -1, bn = -1;
  int input_dim = 0;
  int hidden_dim = 0;

  static GruCell create(ParamStore& ps, const std::string& prefix, int input_dim, int hidden_dim,
                        std::mt19937_64& rng);
  Var operator()(Tape& t, Var h_tilde, Var x) const;
};

// LSTM unit with a peephole from the new memory into the output gate:
//   c~ = tanh(Wrc s + Whc h + bc), f = sig(Wrf s + Whf h + bf), i = sig(Wri s + Whi h + bi)
//   c  = f * c_prev + i * c~
//   o  = sig(Wro s + Who h + Wco * c + bo)
//   h' = tanh(c) * o
struct LstmCell {
  int wrc = -1, whc = -1, bc = -1;
  int wrf = -1, whf = -1, bf = -1;
  int wri = -1, whi = -1, bi = -1;
  int wro = -1, who = -1, wco = -1, bo = -1;
  int input_dim = 0;
  int hidden_dim = 0;

  struct State {
    Var h;
    Var c;
  };

  static LstmCell create(ParamStore& ps, const std::string& prefix, int input_dim, int hidden_dim,
                         std::mt19937_64& rng);
  State operator()(Tape& t, Var h_tilde, Var c_prev, Var x) const;
};

}  // namespace ndf::nn
