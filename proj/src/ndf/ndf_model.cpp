#include "ndf/ndf_model.hpp"

#include <algorithm>
#include <stdexcept>

#include "ndf/rng.hpp"

namespace ndf::model {

namespace {

json solver_to_json(const ode::SolverConfig& s) {
  return {{"method", ode::to_string(s.method)}, {"step", s.step}, {"rtol", s.rtol}, {"atol", s.atol},
          {"max_steps", s.max_steps}};
}

ode::SolverConfig solver_from_json(const json& j, ode::SolverConfig s) {
  s.method = ode::method_from_string(j.value("method", ode::to_string(s.method)));
  s.step = j.value("step", s.step);
  s.rtol = j.value("rtol", s.rtol);
  s.atol = j.value("atol", s.atol);
  s.max_steps = j.value("max_steps", s.max_steps);
  return s;
}

template <typename Frame>
std::vector<double> times_of(const std::vector<Frame>& frames) {
  std::vector<double> out;
  out.reserve(frames.size());
  for (const auto& f : frames) out.push_back(f.t);
  return out;
}

// Sorted union of two increasing lists, with the index of every input time in it.
std::vector<double> merge_times(const std::vector<double>& a, const std::vector<double>& b, std::vector<std::size_t>& ia,
                                std::vector<std::size_t>& ib) {
  std::vector<double> out;
  out.reserve(a.size() + b.size());
  ia.clear();
  ib.clear();
  std::size_t i = 0, j = 0;
  while (i < a.size() || j < b.size()) {
    const bool take_a = j >= b.size() || (i < a.size() && a[i] <= b[j]);
    const double t = take_a ? a[i] : b[j];
    if (out.empty() || out.back() != t) out.push_back(t);
    if (take_a) {
      ia.push_back(out.size() - 1);
      ++i;
    } else {
      ib.push_back(out.size() - 1);
      ++j;
    }
  }
  return out;
}

}  // namespace

void NdfConfig::validate() const {
  if (m_b <= 0 || m_c <= 0 || hidden <= 0 || latent_b <= 0 || latent_c <= 0 || ode_hidden <= 0 || head_hidden <= 0 ||
      lift_dim <= 0 || fused_dim <= 0 || fusion_hidden <= 0 || decoder_hidden <= 0) {
    throw std::invalid_argument("ndf config: dimensions must be positive");
  }
  if (encoder_solver.method == ode::Method::Euler && !(encoder_solver.step > 0.0)) {
    throw std::invalid_argument("ndf config: encoder step must be positive");
  }
  if (!(latent_solver.rtol > 0.0) || !(latent_solver.atol > 0.0) || latent_solver.max_steps <= 0) {
    throw std::invalid_argument("ndf config: invalid latent solver tolerances");
  }
  loss.validate();
}

json to_json(const NdfConfig& c) {
  return {{"kind", "ndf"},
          {"M_b", c.m_b},
          {"M_c", c.m_c},
          {"hidden", c.hidden},
          {"latent_b", c.latent_b},
          {"latent_c", c.latent_c},
          {"ode_hidden", c.ode_hidden},
          {"head_hidden", c.head_hidden},
          {"lift_dim", c.lift_dim},
          {"fused_dim", c.fused_dim},
          {"fusion_hidden", c.fusion_hidden},
          {"decoder_hidden", c.decoder_hidden},
          {"fusion", to_string(c.fusion)},
          {"cell", to_string(c.cell)},
          {"encoder_solver", solver_to_json(c.encoder_solver)},
          {"latent_solver", solver_to_json(c.latent_solver)},
          {"loss",
           {{"lambda1", c.loss.beam},
            {"lambda2", c.loss.csi},
            {"lambda3", c.loss.kl_beam},
            {"lambda4", c.loss.kl_csi},
            {"b_p", c.loss.laplace_scale}}},
          {"seed", c.seed}};
}

NdfConfig ndf_config_from_json(const json& j) {
  NdfConfig c;
  c.m_b = j.value("M_b", c.m_b);
  c.m_c = j.value("M_c", c.m_c);
  c.hidden = j.value("hidden", c.hidden);
  c.latent_b = j.value("latent_b", c.latent_b);
  c.latent_c = j.value("latent_c", c.latent_c);
  c.ode_hidden = j.value("ode_hidden", c.ode_hidden);
  c.head_hidden = j.value("head_hidden", c.head_hidden);
  c.lift_dim = j.value("lift_dim", c.lift_dim);
  c.fused_dim = j.value("fused_dim", c.fused_dim);
  c.fusion_hidden = j.value("fusion_hidden", c.fusion_hidden);
  c.decoder_hidden = j.value("decoder_hidden", c.decoder_hidden);
  c.fusion = fusion_scheme_from_string(j.value("fusion", to_string(c.fusion)));
  c.cell = cell_kind_from_string(j.value("cell", to_string(c.cell)));
  if (j.contains("encoder_solver")) c.encoder_solver = solver_from_json(j["encoder_solver"], c.encoder_solver);
  if (j.contains("latent_solver")) c.latent_solver = solver_from_json(j["latent_solver"], c.latent_solver);
  if (j.contains("loss")) {
    const auto& l = j["loss"];
    c.loss.beam = l.value("lambda1", c.loss.beam);
    c.loss.csi = l.value("lambda2", c.loss.csi);
    c.loss.kl_beam = l.value("lambda3", c.loss.kl_beam);
    c.loss.kl_csi = l.value("lambda4", c.loss.kl_csi);
    c.loss.laplace_scale = l.value("b_p", c.loss.laplace_scale);
  }
  c.seed = j.value("seed", c.seed);
  c.validate();
  return c;
}

NdfModel::NdfModel(const NdfConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  auto rng = make_rng(cfg_.seed, {kTagInit});
  enc_b = SequenceEncoder::create(params_, "enc_b", cfg_.m_b, cfg_.hidden, cfg_.latent_b, cfg_.ode_hidden,
                                  cfg_.head_hidden, cfg_.cell, cfg_.encoder_solver, rng);
  enc_c = SequenceEncoder::create(params_, "enc_c", cfg_.m_c, cfg_.hidden, cfg_.latent_c, cfg_.ode_hidden,
                                  cfg_.head_hidden, cfg_.cell, cfg_.encoder_solver, rng);
  dyn_b = ode::OdeNet::create(params_, "dyn_b", cfg_.latent_b, cfg_.ode_hidden, rng);
  dyn_c = ode::OdeNet::create(params_, "dyn_c", cfg_.latent_c, cfg_.ode_hidden, rng);
  fusion = Fusion::create(params_, "fusion", cfg_.fusion, cfg_.latent_b, cfg_.latent_c, cfg_.lift_dim, cfg_.fused_dim,
                          cfg_.fusion_hidden, rng);
  dec = Decoders::create(params_, "dec", cfg_.fused_dim, cfg_.latent_c, cfg_.latent_b, cfg_.m_c, cfg_.m_b,
                         cfg_.decoder_hidden, rng);
}

json NdfModel::config() const { return to_json(cfg_); }

NdfForward NdfModel::forward(Tape& t, const MeasurementWindow& w, const Vec& eps_b, const Vec& eps_c) const {
  if (w.beam.empty() || w.csi.empty() || w.labels.empty()) throw std::invalid_argument("ndf: window has an empty stream");
  constexpr double t0 = 0.0;
  NdfForward f;
  f.init_b = sample_initial(t, enc_b.posterior_head(t, enc_b.encode_sequence(t, w.beam, t0)), eps_b);
  f.init_c = sample_initial(t, enc_c.posterior_head(t, enc_c.encode_sequence(t, w.csi, t0)), eps_c);

  // Alignment and recovery share one unrolled path per band: the label times
  // and the band's own times are merged so the solver runs once.
  const auto label_t = times_of(w.labels);
  std::vector<std::size_t> at_label, at_native;
  {
    const auto times = merge_times(label_t, times_of(w.beam), at_label, at_native);
    const auto path = recover_latents(t, f.init_b.z0, t0, times, dyn_b, cfg_.latent_solver);
    for (auto i : at_label) f.aligned_b.push_back(path[i]);
    for (auto i : at_native) f.beam_hat.push_back(dec.decode_bsnr(t, path[i]));
  }
  {
    const auto times = merge_times(label_t, times_of(w.csi), at_label, at_native);
    const auto path = recover_latents(t, f.init_c.z0, t0, times, dyn_c, cfg_.latent_solver);
    for (auto i : at_label) f.aligned_c.push_back(path[i]);
    for (auto i : at_native) f.csi_hat.push_back(dec.decode_csi(t, path[i]));
  }

  const bool weighted = fusion.scheme == FusionScheme::Weighted;
  if (weighted) f.weights = fusion.importance(t, f.init_b.z0, f.init_c.z0);
  for (std::size_t n = 0; n < label_t.size(); ++n) {
    f.fused.push_back(fusion.fuse(t, f.aligned_b[n], f.aligned_c[n], weighted ? &f.weights : nullptr));
    f.trajectory.push_back(dec.decode_trajectory(t, f.fused.back()));
  }
  return f;
}

LossTerms NdfModel::loss(Tape& t, const MeasurementWindow& w, const NdfForward& f) const {
  return ndf_loss(t, w, f.trajectory, f.beam_hat, f.csi_hat, f.init_b.posterior, f.init_c.posterior, cfg_.loss);
}

WindowLoss NdfModel::window_loss(Tape& t, const MeasurementWindow& w, std::mt19937_64* rng) const {
  Vec eps_b = Vec::Zero(cfg_.latent_b);
  Vec eps_c = Vec::Zero(cfg_.latent_c);
  if (rng != nullptr) {
    std::normal_distribution<double> normal(0.0, 1.0);
    for (Eigen::Index i = 0; i < eps_b.size(); ++i) eps_b[i] = normal(*rng);
    for (Eigen::Index i = 0; i < eps_c.size(); ++i) eps_c[i] = normal(*rng);
  }
  const NdfForward f = forward(t, w, eps_b, eps_c);
  const LossTerms terms = loss(t, w, f);
  return {terms.total, terms.coord};
}

std::vector<Eigen::Vector2d> NdfModel::predict(const MeasurementWindow& w) const {
  Tape t(&params_);
  const NdfForward f = forward(t, w, Vec::Zero(cfg_.latent_b), Vec::Zero(cfg_.latent_c));
  std::vector<Eigen::Vector2d> out;
  out.reserve(f.trajectory.size());
  for (Var p : f.trajectory) out.emplace_back(t.value(p));
  return out;
}

std::vector<Vec> NdfModel::fused_latents(const MeasurementWindow& w) const {
  Tape t(&params_);
  const NdfForward f = forward(t, w, Vec::Zero(cfg_.latent_b), Vec::Zero(cfg_.latent_c));
  std::vector<Vec> out;
  for (Var z : f.fused) out.emplace_back(t.value(z));
  return out;
}

void NdfModel::set_output_bias(const Eigen::Vector2d& mean) { params_.value(dec.trajectory.last().b) = mean; }

}  // namespace ndf::model
