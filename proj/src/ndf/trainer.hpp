#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ndf/data_model.hpp"
#include "ndf/estimator.hpp"

namespace ndf {

enum class Selection { TotalLoss, CoordLoss };

struct TrainConfig {
  int batch_size = 32;
  int epochs = 250;
  double max_lr = 4e-3;
  double pct_start = 0.3;
  double div_factor = 25.0;
  double final_div_factor = 1e4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  int samples = 1;  // posterior draws per window
  bool checkpoint_best = true;
  Selection select_on = Selection::TotalLoss;
  std::uint64_t seed = 0;

  void validate() const;
};

json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const json& j, TrainConfig base = {});

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;  // mean window loss; epoch 0 is the untrained pass
  double val_loss = 0.0;    // deterministic pass
  double val_coord = 0.0;
  double lr = 0.0;          // last rate used in the epoch
};

struct TrainResult {
  std::vector<EpochRecord> history;
  int best_epoch = 0;
  double best_val = 0.0;
  bool aborted = false;  // non-finite loss; parameters restored to the best epoch
  std::string abort_reason;
  double max_lr_seen = 0.0;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

// Fits the scaler on `train`, sets the trajectory output bias to the mean
// training label and runs minibatch Adamax with a one-cycle schedule.
TrainResult train(TrainedModel& model, const std::vector<MeasurementWindow>& train,
                  const std::vector<MeasurementWindow>& val, const TrainConfig& cfg, const EpochCallback& on_epoch = {});

std::string losses_csv(const TrainResult& r);

// Mean total and coordinate loss of the deterministic pass over prepared windows.
std::pair<double, double> mean_loss(const Estimator& est, const std::vector<MeasurementWindow>& prepared);

// ---------------------------------------------------------------- metrics

// Linear interpolation between order statistics at q in [0, 1].
double percentile(std::vector<double> values, double q);

struct ErrorStats {
  double mean = 0.0;
  double median = 0.0;
  double cdf90 = 0.0;
};

ErrorStats error_stats(const std::vector<double>& errors);

struct PointEstimate {
  std::int64_t window_id = 0;
  double t = 0.0;  // seconds
  Eigen::Vector2d truth = Eigen::Vector2d::Zero();
  Eigen::Vector2d estimate = Eigen::Vector2d::Zero();
};

struct EvalReport {
  std::vector<double> errors;
  ErrorStats stats;
  std::string method;
  std::string split;
  std::string provenance;
  std::vector<PointEstimate> points;
};

EvalReport evaluate(const TrainedModel& model, const std::vector<MeasurementWindow>& windows,
                    const std::string& split = "test");

json to_json(const EvalReport& r);
std::string predictions_csv(const EvalReport& r);

// ---------------------------------------------------------------- search

struct SearchConfig {
  int trials = 100;
  int epochs = 125;
  std::uint64_t seed = 0;
  TrainConfig train;

  void validate() const;
};

struct SearchTrial {
  int index = 0;
  std::array<double, 4> lambda{};
  double val_coord = 0.0;
  double best_so_far = 0.0;
};

struct SearchResult {
  std::vector<SearchTrial> trials;
  int best_index = 0;
  std::array<double, 4> best_lambda{};
};

using TrialCallback = std::function<void(const SearchTrial&)>;

// Random search over the four loss weights in [0, 1]^4 minimizing the
// validation coordinate loss.
SearchResult search_hyperparams(const json& model_cfg, const std::vector<MeasurementWindow>& train,
                                const std::vector<MeasurementWindow>& val, const SearchConfig& cfg,
                                const TrialCallback& on_trial = {});

std::string search_csv(const SearchResult& r);

// ---------------------------------------------------------------- latent export

struct Region {
  std::string name;
  Box box;
};

// Four corner and four edge-midpoint boxes along a rectangular track.
std::vector<Region> track_regions(double x_min, double y_min, double x_max, double y_max, double half_width = 0.75);

json regions_to_json(const std::vector<Region>& regions);
std::vector<Region> regions_from_json(const json& j);

struct LatentRow {
  std::int64_t window_id = 0;
  double t = 0.0;
  int region = 0;
  Vec z;
};

struct LatentExport {
  std::vector<Region> regions;
  std::vector<LatentRow> rows;
  std::vector<std::size_t> counts;  // per region
  std::vector<std::string> warnings;
};

// Fused latents (posterior means) at every label inside a region; a label
// takes the first region that contains it.
LatentExport export_latents(const TrainedModel& model, const std::vector<MeasurementWindow>& windows,
                            const std::vector<Region>& regions);

// Header line then one row per line: {"window_id","t","band","region","z"}.
void write_latents(const std::filesystem::path& file, const LatentExport& e);
LatentExport read_latents(const std::filesystem::path& file);

}  // namespace ndf
