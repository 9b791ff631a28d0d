#pragma once

#include <random>
#include <span>
#include <string>
#include <vector>

#include "ndf/data_model.hpp"
#include "ndf/estimator.hpp"
#include "ndf/nn.hpp"

namespace ndf::baseline {

using ad::Tape;
using ad::Var;

enum class Method { LinearInt, NearestInt, RnnDecay, RnnDelta };
enum class Bands { Both, Beam, Csi };

std::string to_string(Method m);
Method method_from_string(const std::string& s);
std::string to_string(Bands b);
Bands bands_from_string(const std::string& s);

struct InterpResult {
  std::vector<Vec> values;
  int clamped = 0;  // queries outside the sample range
};

// Queries outside [first, last] clamp to the end samples.
InterpResult linear_interp(std::span<const TimedVector> seq, std::span<const double> query);
// Ties go to the earlier sample.
InterpResult nearest_interp(std::span<const TimedVector> seq, std::span<const double> query);

// h = R(h_prev * exp(-dt), x)
Var rnn_decay_step(Tape& t, const nn::GruCell& cell, Var h_prev, double dt, Var x);
// h = R(h_prev, [x; dt])
Var rnn_delta_step(Tape& t, const nn::GruCell& cell, Var h_prev, double dt, Var x);

struct BaselineConfig {
  Method method = Method::LinearInt;
  Bands bands = Bands::Both;
  int m_b = 36;
  int m_c = 36;
  int hidden = 20;        // recurrent hidden size
  int head_hidden = 64;
  std::uint64_t seed = 0;

  void validate() const;
};

json to_json(const BaselineConfig& c);
BaselineConfig baseline_config_from_json(const json& j);

class BaselineModel : public Estimator {
 public:
  explicit BaselineModel(const BaselineConfig& cfg);

  [[nodiscard]] std::string kind() const override { return to_string(cfg_.method); }
  [[nodiscard]] json config() const override { return to_json(cfg_); }
  WindowLoss window_loss(Tape& t, const MeasurementWindow& w, std::mt19937_64* rng) const override;
  [[nodiscard]] std::vector<Eigen::Vector2d> predict(const MeasurementWindow& w) const override;
  void set_output_bias(const Eigen::Vector2d& mean) override;
  [[nodiscard]] int beam_dim() const override { return cfg_.m_b; }
  [[nodiscard]] int csi_dim() const override { return cfg_.m_c; }

  // Coordinate estimates at every label time.
  std::vector<Var> regress(Tape& t, const MeasurementWindow& w) const;

  // Hidden state of one band carried to each query time with zero input.
  std::vector<Var> rnn_states_at(Tape& t, const nn::GruCell& cell, std::span<const TimedVector> seq,
                                 std::span<const double> query) const;

  [[nodiscard]] const BaselineConfig& cfg() const { return cfg_; }

  nn::GruCell cell_b;
  nn::GruCell cell_c;
  nn::Mlp head;

 private:
  [[nodiscard]] bool uses_beam() const { return cfg_.bands != Bands::Csi; }
  [[nodiscard]] bool uses_csi() const { return cfg_.bands != Bands::Beam; }
  [[nodiscard]] bool recurrent() const { return cfg_.method == Method::RnnDecay || cfg_.method == Method::RnnDelta; }

  BaselineConfig cfg_;
};

}  // namespace ndf::baseline
