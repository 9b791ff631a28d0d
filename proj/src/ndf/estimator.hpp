#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ndf/autodiff.hpp"
#include "ndf/data_model.hpp"
#include "ndf/serialize.hpp"

namespace ndf {

struct WindowLoss {
  ad::Var total;
  double coord = 0.0;  // trajectory L1 sum over the window's labels
};

// Common surface of the fusion model and the baselines for training and evaluation.
// Windows passed in are already scaled and time-normalized.
class Estimator {
 public:
  virtual ~Estimator() = default;

  [[nodiscard]] virtual std::string kind() const = 0;
  [[nodiscard]] virtual json config() const = 0;

  // A null rng gives the deterministic pass (posterior means, no sampling).
  virtual WindowLoss window_loss(ad::Tape& t, const MeasurementWindow& w, std::mt19937_64* rng) const = 0;
  [[nodiscard]] virtual std::vector<Eigen::Vector2d> predict(const MeasurementWindow& w) const = 0;

  // Sets the trajectory decoder's output bias.
  virtual void set_output_bias(const Eigen::Vector2d& mean) = 0;

  [[nodiscard]] virtual int beam_dim() const = 0;
  [[nodiscard]] virtual int csi_dim() const = 0;

  [[nodiscard]] const ParamStore& params() const { return params_; }
  ParamStore& params() { return params_; }

 protected:
  ParamStore params_;
};

// {"kind": "ndf" | "linear_int" | "nearest_int" | "rnn_decay" | "rnn_delta", ...}
std::unique_ptr<Estimator> make_estimator(const json& cfg);

// An estimator plus the measurement scaler fitted on its training split.
struct TrainedModel {
  std::unique_ptr<Estimator> estimator;
  Scaler scaler;
  std::string provenance = "random-init";  // or "trained"
  int epoch = 0;
  json metrics = json::object();

  [[nodiscard]] MeasurementWindow prepare(const MeasurementWindow& raw) const;
  [[nodiscard]] std::vector<MeasurementWindow> prepare(const std::vector<MeasurementWindow>& raw) const;
};

json to_json(const Scaler& s);
Scaler scaler_from_json(const json& j);

// manifest.json (architecture, config hash, scaler, epoch, metrics, tensor layout) + params.bin
void save_checkpoint(const TrainedModel& m, const std::filesystem::path& dir);
TrainedModel load_checkpoint(const std::filesystem::path& dir);

}  // namespace ndf
