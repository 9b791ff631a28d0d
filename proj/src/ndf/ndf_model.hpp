#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "ndf/decoders_loss.hpp"
#include "ndf/estimator.hpp"
#include "ndf/latent_fusion.hpp"
#include "ndf/ode_core.hpp"
#include "ndf/sequence_encoders.hpp"

namespace ndf::model {

struct NdfConfig {
  int m_b = 36;
  int m_c = 36;
  int hidden = 20;       // encoder hidden size H
  int latent_b = 20;
  int latent_c = 20;
  int ode_hidden = 32;
  int head_hidden = 32;
  int lift_dim = 128;
  int fused_dim = 20;
  int fusion_hidden = 32;
  int decoder_hidden = 32;
  FusionScheme fusion = FusionScheme::Mlp;
  CellKind cell = CellKind::Gru;
  ode::SolverConfig encoder_solver = ode::SolverConfig::euler(0.01);
  ode::SolverConfig latent_solver = ode::SolverConfig::dopri5(1e-5, 1e-7);
  LossWeights loss;
  std::uint64_t seed = 0;

  void validate() const;
};

json to_json(const NdfConfig& c);
NdfConfig ndf_config_from_json(const json& j);

struct NdfForward {
  InitialLatent init_b;
  InitialLatent init_c;
  std::vector<Var> aligned_b;  // at label times
  std::vector<Var> aligned_c;
  std::vector<Var> fused;
  std::vector<Var> trajectory;
  std::vector<Var> beam_hat;   // at beam times
  std::vector<Var> csi_hat;    // at csi times
  FusionWeights weights;       // weighted scheme only
};

class NdfModel : public Estimator {
 public:
  explicit NdfModel(const NdfConfig& cfg);

  [[nodiscard]] std::string kind() const override { return "ndf"; }
  [[nodiscard]] json config() const override;
  WindowLoss window_loss(Tape& t, const MeasurementWindow& w, std::mt19937_64* rng) const override;
  [[nodiscard]] std::vector<Eigen::Vector2d> predict(const MeasurementWindow& w) const override;
  void set_output_bias(const Eigen::Vector2d& mean) override;
  [[nodiscard]] int beam_dim() const override { return cfg_.m_b; }
  [[nodiscard]] int csi_dim() const override { return cfg_.m_c; }

  // Full forward pass with explicit noise draws (zero vectors give the posterior means).
  NdfForward forward(Tape& t, const MeasurementWindow& w, const Vec& eps_b, const Vec& eps_c) const;
  LossTerms loss(Tape& t, const MeasurementWindow& w, const NdfForward& f) const;

  // Fused latent states at the label times (posterior means).
  [[nodiscard]] std::vector<Vec> fused_latents(const MeasurementWindow& w) const;

  [[nodiscard]] const NdfConfig& cfg() const { return cfg_; }
  void set_loss_weights(const LossWeights& w) { cfg_.loss = w; }

  SequenceEncoder enc_b;
  SequenceEncoder enc_c;
  ode::OdeNet dyn_b;
  ode::OdeNet dyn_c;
  Fusion fusion;
  Decoders dec;

 private:
  NdfConfig cfg_;
};

}  // namespace ndf::model
