#include "ndf/latent_fusion.hpp"

#include <stdexcept>

namespace ndf::model {

std::string to_string(FusionScheme s) {
  switch (s) {
    case FusionScheme::Mlp: return "mlp";
    case FusionScheme::Pairwise: return "pairwise";
    case FusionScheme::Weighted: return "weighted";
  }
  return "mlp";
}

FusionScheme fusion_scheme_from_string(const std::string& s) {
  if (s == "mlp") return FusionScheme::Mlp;
  if (s == "pairwise") return FusionScheme::Pairwise;
  if (s == "weighted") return FusionScheme::Weighted;
  throw std::invalid_argument("unknown fusion scheme: " + s);
}

AlignedLatents align_latents(Tape& t, Var z0_b, Var z0_c, double t0, std::span<const double> label_times,
                             const ode::OdeNet& dyn_b, const ode::OdeNet& dyn_c, const ode::SolverConfig& cfg) {
  if (!label_times.empty() && label_times.front() < t0) throw std::invalid_argument("align_latents: label time before t0");
  AlignedLatents out;
  out.beam = recover_latents(t, z0_b, t0, label_times, dyn_b, cfg);
  out.csi = recover_latents(t, z0_c, t0, label_times, dyn_c, cfg);
  return out;
}

std::vector<Var> recover_latents(Tape& t, Var z0, double t0, std::span<const double> times, const ode::OdeNet& dyn,
                                 const ode::SolverConfig& cfg) {
  if (z0.dim() != dyn.dim) throw std::invalid_argument("recover_latents: latent dimension mismatch");
  ode::Integrator integ(cfg);
  return integ.integrate_path(t, dyn.field(), z0, t0, times);
}

Fusion Fusion::create(ParamStore& ps, const std::string& prefix, FusionScheme scheme, int latent_b, int latent_c,
                      int lift_dim, int fused_dim, int hidden, std::mt19937_64& rng) {
  Fusion f;
  f.scheme = scheme;
  f.latent_b = latent_b;
  f.latent_c = latent_c;
  f.lift_dim = lift_dim;
  f.fused_dim = fused_dim;
  if (scheme != FusionScheme::Pairwise) {
    f.lift_b = nn::Mlp::create(ps, prefix + ".lift_b", {latent_b, hidden, lift_dim}, rng);
    f.lift_c = nn::Mlp::create(ps, prefix + ".lift_c", {latent_c, hidden, lift_dim}, rng);
  }
  if (scheme == FusionScheme::Weighted) {
    f.weight_b = nn::Mlp::create(ps, prefix + ".weight_b", {latent_b, hidden, lift_dim}, rng);
    f.weight_c = nn::Mlp::create(ps, prefix + ".weight_c", {latent_c, hidden, lift_dim}, rng);
  }
  f.head = nn::Mlp::create(ps, prefix + ".head", {f.head_input_dim(), hidden, fused_dim}, rng);
  return f;
}

int Fusion::head_input_dim() const {
  switch (scheme) {
    case FusionScheme::Mlp: return 2 * lift_dim;
    case FusionScheme::Pairwise: return latent_b + latent_c + latent_b * latent_c;
    case FusionScheme::Weighted: return lift_dim;
  }
  return 0;
}

FusionWeights Fusion::importance(Tape& t, Var z0_b, Var z0_c) const {
  if (scheme != FusionScheme::Weighted) throw std::invalid_argument("importance weights need the weighted scheme");
  if (z0_b.dim() != latent_b || z0_c.dim() != latent_c) throw std::invalid_argument("importance: dimension mismatch");
  Var wb = weight_b(t, z0_b);
  Var wc = weight_c(t, z0_c);
  // softmax over {w_b, w_c} per element = sigmoid(w_b - w_c)
  Var beam = t.sigmoid(t.sub(wb, wc));
  return {beam, t.affine_scalar(beam, -1.0, 1.0)};
}

Var Fusion::fuse_mlp(Tape& t, Var z_pb, Var z_pc) const {
  if (z_pb.dim() != latent_b || z_pc.dim() != latent_c) throw std::invalid_argument("fuse_mlp: dimension mismatch");
  return head(t, t.concat({lift_b(t, z_pb), lift_c(t, z_pc)}));
}

Var Fusion::fuse_pairwise(Tape& t, Var z_pb, Var z_pc) const {
  if (z_pb.dim() != latent_b || z_pc.dim() != latent_c) throw std::invalid_argument("fuse_pairwise: dimension mismatch");
  return head(t, t.concat({z_pb, z_pc, t.kron(z_pb, z_pc)}));
}

Var Fusion::fuse_weighted(Tape& t, Var z_pb, Var z_pc, const FusionWeights& w) const {
  if (z_pb.dim() != latent_b || z_pc.dim() != latent_c) throw std::invalid_argument("fuse_weighted: dimension mismatch");
  return head(t, t.add(t.mul(lift_b(t, z_pb), w.beam), t.mul(lift_c(t, z_pc), w.csi)));
}

Var Fusion::fuse(Tape& t, Var z_pb, Var z_pc, const FusionWeights* w) const {
  switch (scheme) {
    case FusionScheme::Mlp: return fuse_mlp(t, z_pb, z_pc);
    case FusionScheme::Pairwise: return fuse_pairwise(t, z_pb, z_pc);
    case FusionScheme::Weighted:
      if (w == nullptr) throw std::invalid_argument("weighted fusion needs importance weights");
      return fuse_weighted(t, z_pb, z_pc, *w);
  }
  throw std::invalid_argument("unknown fusion scheme");
}

}  // namespace ndf::model
