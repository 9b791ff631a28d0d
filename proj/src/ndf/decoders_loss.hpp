#pragma once

#include <random>
#include <span>
#include <string>
#include <vector>

#include "ndf/data_model.hpp"
#include "ndf/latent_fusion.hpp"
#include "ndf/nn.hpp"
#include "ndf/sequence_encoders.hpp"

namespace ndf::model {

struct LossWeights {
  double beam = 0.7;      // lambda1
  double csi = 1.0;       // lambda2
  double kl_beam = 0.001; // lambda3
  double kl_csi = 0.25;   // lambda4
  double laplace_scale = 1.0;

  void validate() const;
};

struct Decoders {
  nn::Mlp trajectory;  // L_p -> 2
  nn::Mlp csi;         // L_c -> M_c
  nn::Mlp beam;        // L_b -> M_b

  static Decoders create(ParamStore& ps, const std::string& prefix, int fused_dim, int latent_c, int latent_b, int m_c,
                         int m_b, int hidden, std::mt19937_64& rng);

  Var decode_trajectory(Tape& t, Var z_p) const { return trajectory(t, z_p); }
  Var decode_csi(Tape& t, Var z_c) const { return csi(t, z_c); }
  Var decode_bsnr(Tape& t, Var z_b) const { return beam(t, z_b); }
};

// align -> fuse -> decode at every label time.
std::vector<Var> integrated_trajectory(Tape& t, Var z0_b, Var z0_c, double t0, std::span<const double> label_times,
                                       const ode::OdeNet& dyn_b, const ode::OdeNet& dyn_c, const Fusion& fusion,
                                       const Decoders& dec, const ode::SolverConfig& cfg);
std::vector<Var> integrated_csi(Tape& t, Var z0_c, double t0, std::span<const double> csi_times,
                                const ode::OdeNet& dyn_c, const Decoders& dec, const ode::SolverConfig& cfg);
std::vector<Var> integrated_bsnr(Tape& t, Var z0_b, double t0, std::span<const double> beam_times,
                                 const ode::OdeNet& dyn_b, const Decoders& dec, const ode::SolverConfig& cfg);

// sum_l 1/2 (mu^2 + sigma^2 - 1 - log sigma^2)
Var kl_gaussian(Tape& t, const Posterior& post);

struct LossTerms {
  Var total;
  double coord = 0.0;
  double beam = 0.0;
  double csi = 0.0;
  double kl_beam = 0.0;
  double kl_csi = 0.0;
};

// Window loss: sum_n |p - p^|_1 / b_p + l1 sum |b - b^|_1 + l2 sum |c - c^|_1 + l3 KL_b + l4 KL_c.
// Throws NumericError naming the first non-finite term.
LossTerms ndf_loss(Tape& t, const MeasurementWindow& w, std::span<const Var> traj, std::span<const Var> beam_hat,
                   std::span<const Var> csi_hat, const Posterior& post_b, const Posterior& post_c,
                   const LossWeights& weights);

}  // namespace ndf::model
