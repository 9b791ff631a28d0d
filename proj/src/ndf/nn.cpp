#include "ndf/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace ndf::nn {

Linear Linear::create(ParamStore& ps, const std::string& prefix, int in, int out, std::mt19937_64& rng,
                      double init_scale) {
  if (in <= 0 || out <= 0) throw std::invalid_argument("linear layer dims must be positive");
  Linear l;
  l.in = in;
  l.out = out;
  l.w = ps.add(prefix + ".W", out, in);
  l.b = ps.add(prefix + ".b", out, 1);
  init_uniform_fan_in(ps.value(l.w), rng, init_scale);
  const double bound = init_scale / std::sqrt(static_cast<double>(in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Mat& b = ps.value(l.b);
  for (Eigen::Index i = 0; i < b.size(); ++i) b.data()[i] = dist(rng);
  return l;
}

Mlp Mlp::create(ParamStore& ps, const std::string& prefix, const std::vector<int>& widths, std::mt19937_64& rng,
                double last_layer_scale) {
  if (widths.size() < 2) throw std::invalid_argument("mlp needs at least input and output widths");
  Mlp m;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    const bool last = i + 2 == widths.size();
    m.layers.push_back(Linear::create(ps, prefix + ".l" + std::to_string(i), widths[i], widths[i + 1], rng,
                                      last ? last_layer_scale : 1.0));
  }
  return m;
}

Var Mlp::operator()(Tape& t, Var x) const {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    x = layers[i](t, x);
    if (i + 1 < layers.size()) x = t.tanh(x);
  }
  return x;
}

GruCell GruCell::create(ParamStore& ps, const std::string& prefix, int input_dim, int hidden_dim,
                        std::mt19937_64& rng) {
  GruCell g;
  g.input_dim = input_dim;
  g.hidden_dim = hidden_dim;
  auto mk = [&](const char* name, int rows, int cols) {
    const int id = ps.add(prefix + "." + name, rows, cols);
    // PyTorch-style recurrent init: U(-1/sqrt(H), 1/sqrt(H)) for all tensors.
    const double bound = 1.0 / std::sqrt(static_cast<double>(hidden_dim));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Mat& m = ps.value(id);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
    return id;
  };
  g.wu = mk("Wu", hidden_dim, input_dim);
  g.uu = mk("Uu", hidden_dim, hidden_dim);
  g.bu = mk("bu", hidden_dim, 1);
  g.wr = mk("Wr", hidden_dim, input_dim);
  g.ur = mk("Ur", hidden_dim, hidden_dim);
  g.br = mk("br", hidden_dim, 1);
  g.wn = mk("Wn", hidden_dim, input_dim);
  g.un = mk("Un", hidden_dim, hidden_dim);
  g.bn = mk("bn", hidden_dim, 1);
  return g;
}

Var GruCell::operator()(Tape& t, Var h_tilde, Var x) const {
  Var u = t.sigmoid(t.affine2(wu, uu, bu, x, h_tilde));
  Var r = t.sigmoid(t.affine2(wr, ur, br, x, h_tilde));
  Var n = t.tanh(t.affine2(wn, un, bn, x, t.mul(r, h_tilde)));
  // (1 - u) * n + u * h = n + u * (h - n)
  return t.add(n, t.mul(u, t.sub(h_tilde, n)));
}

LstmCell LstmCell::create(ParamStore& ps, const std::string& prefix, int input_dim, int hidden_dim,
                          std::mt19937_64& rng) {
  LstmCell l;
  l.input_dim = input_dim;
  l.hidden_dim = hidden_dim;
  auto mk = [&](const char* name, int rows, int cols) {
    const int id = ps.add(prefix + "." + name, rows, cols);
    const double bound = 1.0 / std::sqrt(static_cast<double>(hidden_dim));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Mat& m = ps.value(id);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
    return id;
  };
  l.wrc = mk("Wrc", hidden_dim, input_dim);
  l.whc = mk("Whc", hidden_dim, hidden_dim);
  l.bc = mk("bc", hidden_dim, 1);
  l.wrf = mk("Wrf", hidden_dim, input_dim);
  l.whf = mk("Whf", hidden_dim, hidden_dim);
  l.bf = mk("bf", hidden_dim, 1);
  l.wri = mk("Wri", hidden_dim, input_dim);
  l.whi = mk("Whi", hidden_dim, hidden_dim);
  l.bi = mk("bi", hidden_dim, 1);
  l.wro = mk("Wro", hidden_dim, input_dim);
  l.who = mk("Who", hidden_dim, hidden_dim);
  l.wco = mk("Wco", hidden_dim, 1);
  l.bo = mk("bo", hidden_dim, 1);
  return l;
}

LstmCell::State LstmCell::operator()(Tape& t, Var h_tilde, Var c_prev, Var x) const {
  Var cand = t.tanh(t.affine2(wrc, whc, bc, x, h_tilde));
  Var f = t.sigmoid(t.affine2(wrf, whf, bf, x, h_tilde));
  Var i = t.sigmoid(t.affine2(wri, whi, bi, x, h_tilde));
  Var c = t.add(t.mul(f, c_prev), t.mul(i, cand));
  Var o = t.sigmoid(t.add(t.affine2(wro, who, bo, x, h_tilde), t.mul(t.param(wco), c)));
  return {t.mul(t.tanh(c), o), c};
}

}  // namespace ndf::nn
