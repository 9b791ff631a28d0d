#include "ndf/decoders_loss.hpp"

#include <cmath>
#include <stdexcept>

#include "ndf/errors.hpp"

namespace ndf::model {

namespace {

Var l1_sum(Tape& t, std::span<const Var> pred, const std::vector<Vec>& target, const char* what) {
  if (pred.size() != target.size()) throw std::invalid_argument(std::string("loss: ") + what + " length mismatch");
  std::vector<Var> terms;
  terms.reserve(pred.size());
  for (std::size_t n = 0; n < pred.size(); ++n) terms.push_back(t.abs_sum(t.sub(pred[n], t.input(target[n]))));
  if (terms.empty()) return t.constant(1, 0.0);
  const std::vector<double> ones(terms.size(), 1.0);
  return t.lincomb(terms, ones);
}

template <typename Frame>
std::vector<Vec> values_of(const std::vector<Frame>& frames) {
  std::vector<Vec> out;
  out.reserve(frames.size());
  for (const auto& f : frames) out.push_back(f.values);
  return out;
}

}  // namespace

void LossWeights::validate() const {
  if (!(beam >= 0.0) || !(csi >= 0.0) || !(kl_beam >= 0.0) || !(kl_csi >= 0.0)) {
    throw std::invalid_argument("loss weights must be non-negative");
  }
  if (!(laplace_scale > 0.0)) throw std::invalid_argument("laplace scale must be positive");
}

Decoders Decoders::create(ParamStore& ps, const std::string& prefix, int fused_dim, int latent_c, int latent_b,
                          int m_c, int m_b, int hidden, std::mt19937_64& rng) {
  Decoders d;
  d.trajectory = nn::Mlp::create(ps, prefix + ".traj", {fused_dim, hidden, hidden, 2}, rng);
  d.csi = nn::Mlp::create(ps, prefix + ".csi", {latent_c, hidden, hidden, m_c}, rng);
  d.beam = nn::Mlp::create(ps, prefix + ".beam", {latent_b, hidden, hidden, m_b}, rng);
  return d;
}

std::vector<Var> integrated_trajectory(Tape& t, Var z0_b, Var z0_c, double t0, std::span<const double> label_times,
                                       const ode::OdeNet& dyn_b, const ode::OdeNet& dyn_c, const Fusion& fusion,
                                       const Decoders& dec, const ode::SolverConfig& cfg) {
  const AlignedLatents aligned = align_latents(t, z0_b, z0_c, t0, label_times, dyn_b, dyn_c, cfg);
  FusionWeights w;
  const bool weighted = fusion.scheme == FusionScheme::Weighted;
  if (weighted) w = fusion.importance(t, z0_b, z0_c);
  std::vector<Var> out;
  out.reserve(label_times.size());
  for (std::size_t n = 0; n < label_times.size(); ++n) {
    out.push_back(dec.decode_trajectory(t, fusion.fuse(t, aligned.beam[n], aligned.csi[n], weighted ? &w : nullptr)));
  }
  return out;
}

std::vector<Var> integrated_csi(Tape& t, Var z0_c, double t0, std::span<const double> csi_times,
                                const ode::OdeNet& dyn_c, const Decoders& dec, const ode::SolverConfig& cfg) {
  std::vector<Var> out;
  for (Var z : recover_latents(t, z0_c, t0, csi_times, dyn_c, cfg)) out.push_back(dec.decode_csi(t, z));
  return out;
}

std::vector<Var> integrated_bsnr(Tape& t, Var z0_b, double t0, std::span<const double> beam_times,
                                 const ode::OdeNet& dyn_b, const Decoders& dec, const ode::SolverConfig& cfg) {
  std::vector<Var> out;
  for (Var z : recover_latents(t, z0_b, t0, beam_times, dyn_b, cfg)) out.push_back(dec.decode_bsnr(t, z));
  return out;
}

Var kl_gaussian(Tape& t, const Posterior& post) { return t.kl_std_normal(post.mu, post.sigma); }

LossTerms ndf_loss(Tape& t, const MeasurementWindow& w, std::span<const Var> traj, std::span<const Var> beam_hat,
                   std::span<const Var> csi_hat, const Posterior& post_b, const Posterior& post_c,
                   const LossWeights& weights) {
  weights.validate();
  std::vector<Vec> labels;
  labels.reserve(w.labels.size());
  for (const auto& c : w.labels) labels.emplace_back(c.xy);

  Var coord = l1_sum(t, traj, labels, "trajectory");
  Var beam = l1_sum(t, beam_hat, values_of(w.beam), "beam");
  Var csi = l1_sum(t, csi_hat, values_of(w.csi), "csi");
  Var kl_b = kl_gaussian(t, post_b);
  Var kl_c = kl_gaussian(t, post_c);

  LossTerms out;
  out.coord = coord.scalar();
  out.beam = beam.scalar();
  out.csi = csi.scalar();
  out.kl_beam = kl_b.scalar();
  out.kl_csi = kl_c.scalar();
  const std::pair<const char*, double> named[] = {
      {"trajectory", out.coord}, {"beam", out.beam}, {"csi", out.csi}, {"kl_beam", out.kl_beam}, {"kl_csi", out.kl_csi}};
  for (const auto& [name, value] : named) {
    if (!std::isfinite(value)) {
      throw NumericError(std::string("loss term '") + name + "' is not finite in window " + std::to_string(w.id));
    }
  }
  const std::array<Var, 5> terms{coord, beam, csi, kl_b, kl_c};
  const std::array<double, 5> coefs{1.0 / weights.laplace_scale, weights.beam, weights.csi, weights.kl_beam,
                                    weights.kl_csi};
  out.total = t.lincomb(terms, coefs);
  return out;
}

}  // namespace ndf::model
