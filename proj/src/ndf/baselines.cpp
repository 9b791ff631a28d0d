#include "ndf/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "ndf/rng.hpp"

namespace ndf::baseline {

namespace {

void check_sequence(std::span<const TimedVector> seq, const char* who) {
  if (seq.empty()) throw std::invalid_argument(std::string(who) + ": empty sequence");
}

// Index of the last sample with time <= q, or -1.
std::ptrdiff_t last_at_or_before(std::span<const TimedVector> seq, double q) {
  auto it = std::upper_bound(seq.begin(), seq.end(), q, [](double v, const TimedVector& f) { return v < f.t; });
  return (it - seq.begin()) - 1;
}

}  // namespace

std::string to_string(Method m) {
  switch (m) {
    case Method::LinearInt: return "linear_int";
    case Method::NearestInt: return "nearest_int";
    case Method::RnnDecay: return "rnn_decay";
    case Method::RnnDelta: return "rnn_delta";
  }
  return "linear_int";
}

Method method_from_string(const std::string& s) {
  if (s == "linear_int") return Method::LinearInt;
  if (s == "nearest_int") return Method::NearestInt;
  if (s == "rnn_decay") return Method::RnnDecay;
  if (s == "rnn_delta") return Method::RnnDelta;
  throw std::invalid_argument("unknown baseline method: " + s);
}

std::string to_string(Bands b) {
  switch (b) {
    case Bands::Both: return "both";
    case Bands::Beam: return "beam";
    case Bands::Csi: return "csi";
  }
  return "both";
}

Bands bands_from_string(const std::string& s) {
  if (s == "both") return Bands::Both;
  if (s == "beam") return Bands::Beam;
  if (s == "csi") return Bands::Csi;
  throw std::invalid_argument("unknown band selection: " + s);
}

InterpResult linear_interp(std::span<const TimedVector> seq, std::span<const double> query) {
  check_sequence(seq, "linear_interp");
  InterpResult out;
  out.values.reserve(query.size());
  for (double q : query) {
    if (q <= seq.front().t || q >= seq.back().t) {
      if (q < seq.front().t || q > seq.back().t) ++out.clamped;
      out.values.push_back(q <= seq.front().t ? seq.front().values : seq.back().values);
      continue;
    }
    const auto i = static_cast<std::size_t>(last_at_or_before(seq, q));
    const auto& a = seq[i];
    if (a.t == q) {
      out.values.push_back(a.values);
      continue;
    }
    const auto& b = seq[i + 1];
    const double u = (q - a.t) / (b.t - a.t);
    out.values.push_back(a.values + u * (b.values - a.values));
  }
  return out;
}

InterpResult nearest_interp(std::span<const TimedVector> seq, std::span<const double> query) {
  check_sequence(seq, "nearest_interp");
  InterpResult out;
  out.values.reserve(query.size());
  for (double q : query) {
    if (q <= seq.front().t || q >= seq.back().t) {
      if (q < seq.front().t || q > seq.back().t) ++out.clamped;
      out.values.push_back(q <= seq.front().t ? seq.front().values : seq.back().values);
      continue;
    }
    const auto i = static_cast<std::size_t>(last_at_or_before(seq, q));
    const auto& a = seq[i];
    if (a.t == q) {
      out.values.push_back(a.values);
      continue;
    }
    const auto& b = seq[i + 1];
    out.values.push_back(q - a.t <= b.t - q ? a.values : b.values);
  }
  return out;
}

Var rnn_decay_step(Tape& t, const nn::GruCell& cell, Var h_prev, double dt, Var x) {
  if (!(dt >= 0.0)) throw std::invalid_argument("rnn_decay_step: negative time gap");
  return cell(t, dt == 0.0 ? h_prev : t.affine_scalar(h_prev, std::exp(-dt), 0.0), x);
}

Var rnn_delta_step(Tape& t, const nn::GruCell& cell, Var h_prev, double dt, Var x) {
  if (!(dt >= 0.0)) throw std::invalid_argument("rnn_delta_step: negative time gap");
  if (x.dim() + 1 != cell.input_dim) throw std::invalid_argument("rnn_delta_step: input dimension mismatch");
  return cell(t, h_prev, t.concat({x, t.constant(1, dt)}));
}

void BaselineConfig::validate() const {
  if (m_b <= 0 || m_c <= 0 || hidden <= 0 || head_hidden <= 0) {
    throw std::invalid_argument("baseline config: dimensions must be positive");
  }
}

json to_json(const BaselineConfig& c) {
  return {{"kind", to_string(c.method)}, {"bands", to_string(c.bands)},        {"M_b", c.m_b},
          {"M_c", c.m_c},                {"hidden", c.hidden},                 {"head_hidden", c.head_hidden},
          {"seed", c.seed}};
}

BaselineConfig baseline_config_from_json(const json& j) {
  BaselineConfig c;
  c.method = method_from_string(j.at("kind").get<std::string>());
  c.bands = bands_from_string(j.value("bands", to_string(c.bands)));
  c.m_b = j.value("M_b", c.m_b);
  c.m_c = j.value("M_c", c.m_c);
  c.hidden = j.value("hidden", c.hidden);
  c.head_hidden = j.value("head_hidden", c.head_hidden);
  c.seed = j.value("seed", c.seed);
  c.validate();
  return c;
}

BaselineModel::BaselineModel(const BaselineConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  auto rng = make_rng(cfg_.seed, {kTagInit});
  int feat = 0;
  if (recurrent()) {
    const int extra = cfg_.method == Method::RnnDelta ? 1 : 0;
    if (uses_beam()) cell_b = nn::GruCell::create(params_, "rnn_b", cfg_.m_b + extra, cfg_.hidden, rng);
    if (uses_csi()) cell_c = nn::GruCell::create(params_, "rnn_c", cfg_.m_c + extra, cfg_.hidden, rng);
    feat = (uses_beam() ? cfg_.hidden : 0) + (uses_csi() ? cfg_.hidden : 0);
  } else {
    feat = (uses_beam() ? cfg_.m_b : 0) + (uses_csi() ? cfg_.m_c : 0);
  }
  head = nn::Mlp::create(params_, "head", {feat, cfg_.head_hidden, cfg_.head_hidden, 2}, rng);
}

std::vector<Var> BaselineModel::rnn_states_at(Tape& t, const nn::GruCell& cell, std::span<const TimedVector> seq,
                                              std::span<const double> query) const {
  check_sequence(seq, "rnn fusion");
  const bool decay = cfg_.method == Method::RnnDecay;
  auto step = [&](Var h, double dt, Var x) {
    return decay ? rnn_decay_step(t, cell, h, dt, x) : rnn_delta_step(t, cell, h, dt, x);
  };
  // States after each observation, starting from zeros at t0 = 0.
  std::vector<Var> states;
  states.reserve(seq.size());
  Var h0 = t.constant(cfg_.hidden, 0.0);
  Var h = h0;
  double prev = 0.0;
  for (const auto& f : seq) {
    h = step(h, std::max(0.0, f.t - prev), t.input(f.values));
    states.push_back(h);
    prev = f.t;
  }
  const auto in_dim = static_cast<Eigen::Index>(seq.front().values.size());
  Var zero = t.constant(in_dim, 0.0);
  std::vector<Var> out;
  out.reserve(query.size());
  for (double q : query) {
    const auto i = last_at_or_before(seq, q);
    if (i < 0) {
      out.push_back(step(h0, std::max(0.0, q), zero));
    } else {
      const auto k = static_cast<std::size_t>(i);
      out.push_back(step(states[k], q - seq[k].t, zero));
    }
  }
  return out;
}

std::vector<Var> BaselineModel::regress(Tape& t, const MeasurementWindow& w) const {
  if (w.labels.empty()) throw std::invalid_argument("baseline: window has no labels");
  std::vector<double> query;
  query.reserve(w.labels.size());
  for (const auto& l : w.labels) query.push_back(l.t);

  std::vector<Var> beam_feat, csi_feat;
  if (recurrent()) {
    if (uses_beam()) beam_feat = rnn_states_at(t, cell_b, w.beam, query);
    if (uses_csi()) csi_feat = rnn_states_at(t, cell_c, w.csi, query);
  } else {
    const bool linear = cfg_.method == Method::LinearInt;
    auto interp = [&](std::span<const TimedVector> seq) {
      const InterpResult r = linear ? linear_interp(seq, query) : nearest_interp(seq, query);
      std::vector<Var> v;
      v.reserve(r.values.size());
      for (const auto& x : r.values) v.push_back(t.input(x));
      return v;
    };
    if (uses_beam()) beam_feat = interp(w.beam);
    if (uses_csi()) csi_feat = interp(w.csi);
  }

  std::vector<Var> out;
  out.reserve(query.size());
  for (std::size_t n = 0; n < query.size(); ++n) {
    Var x;
    if (uses_beam() && uses_csi()) {
      x = t.concat({csi_feat[n], beam_feat[n]});
    } else {
      x = uses_beam() ? beam_feat[n] : csi_feat[n];
    }
    out.push_back(head(t, x));
  }
  return out;
}

WindowLoss BaselineModel::window_loss(Tape& t, const MeasurementWindow& w, std::mt19937_64* /*rng*/) const {
  const auto pred = regress(t, w);
  std::vector<Var> terms;
  terms.reserve(pred.size());
  for (std::size_t n = 0; n < pred.size(); ++n) {
    terms.push_back(t.abs_sum(t.sub(pred[n], t.input(Vec(w.labels[n].xy)))));
  }
  const std::vector<double> ones(terms.size(), 1.0);
  Var total = t.lincomb(terms, ones);
  return {total, total.scalar()};
}

std::vector<Eigen::Vector2d> BaselineModel::predict(const MeasurementWindow& w) const {
  Tape t(&params_);
  std::vector<Eigen::Vector2d> out;
  for (Var p : regress(t, w)) out.emplace_back(t.value(p));
  return out;
}

void BaselineModel::set_output_bias(const Eigen::Vector2d& mean) { params_.value(head.last().b) = mean; }

}  // namespace ndf::baseline
