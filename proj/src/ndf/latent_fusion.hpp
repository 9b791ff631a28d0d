#pragma once

#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ndf/nn.hpp"
#include "ndf/ode_core.hpp"

namespace ndf::model {

using ad::Tape;
using ad::Var;

enum class FusionScheme { Mlp, Pairwise, Weighted };

std::string to_string(FusionScheme s);
FusionScheme fusion_scheme_from_string(const std::string& s);

struct AlignedLatents {
  std::vector<Var> beam;
  std::vector<Var> csi;
};

// Both bands unrolled from t0 to the same query times.
AlignedLatents align_latents(Tape& t, Var z0_b, Var z0_c, double t0, std::span<const double> label_times,
                             const ode::OdeNet& dyn_b, const ode::OdeNet& dyn_c, const ode::SolverConfig& cfg);

// One band unrolled from t0 to its own measurement times.
std::vector<Var> recover_latents(Tape& t, Var z0, double t0, std::span<const double> times, const ode::OdeNet& dyn,
                                 const ode::SolverConfig& cfg);

// Importance weights after the two-way softmax; constant over a window.
struct FusionWeights {
  Var beam;
  Var csi;
};

struct Fusion {
  FusionScheme scheme = FusionScheme::Mlp;
  int latent_b = 0;
  int latent_c = 0;
  int lift_dim = 0;
  int fused_dim = 0;
  nn::Mlp lift_b;
  nn::Mlp lift_c;
  nn::Mlp weight_b;
  nn::Mlp weight_c;
  nn::Mlp head;

  static Fusion create(ParamStore& ps, const std::string& prefix, FusionScheme scheme, int latent_b, int latent_c,
                       int lift_dim, int fused_dim, int hidden, std::mt19937_64& rng);

  [[nodiscard]] int head_input_dim() const;

  // Only meaningful for the weighted scheme.
  FusionWeights importance(Tape& t, Var z0_b, Var z0_c) const;

  Var fuse_mlp(Tape& t, Var z_pb, Var z_pc) const;
  Var fuse_pairwise(Tape& t, Var z_pb, Var z_pc) const;
  Var fuse_weighted(Tape& t, Var z_pb, Var z_pc, const FusionWeights& w) const;

  // Dispatches on the scheme; `w` is required for the weighted scheme.
  Var fuse(Tape& t, Var z_pb, Var z_pc, const FusionWeights* w) const;
};

}  // namespace ndf::model
