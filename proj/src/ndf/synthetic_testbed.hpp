#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ndf/csi_frontend.hpp"
#include "ndf/data_model.hpp"
#include "ndf/serialize.hpp"

namespace ndf::sim {

struct TrackSpec {
  double x_min = 0.0;
  double y_min = 0.0;
  double x_max = 6.0;
  double y_max = 4.0;
  double speed = 0.25;      // m/s
  double lap_jitter = 0.1;  // std of the per-lap inward offset, m
  Eigen::Vector2d ap{-0.5, -0.5};

  void validate() const;
  [[nodiscard]] double perimeter() const { return 2.0 * ((x_max - x_min) + (y_max - y_min)); }
  [[nodiscard]] double lap_time() const { return perimeter() / speed; }
};

// Point at `fraction` in [0, 1) of the counter-clockwise perimeter of the
// track rectangle shrunk by `inset` on every side, starting at (x_min, y_min).
Eigen::Vector2d point_on_track(const TrackSpec& spec, double inset, double fraction);

// Continuous ground-truth motion: constant-speed laps whose inward offset is
// drawn once per lap and blended linearly across the lap.
class Trajectory {
 public:
  Trajectory(const TrackSpec& spec, double duration, std::uint64_t seed);

  [[nodiscard]] Eigen::Vector2d at(double t) const;
  [[nodiscard]] const TrackSpec& spec() const { return spec_; }
  [[nodiscard]] double duration() const { return duration_; }

 private:
  TrackSpec spec_;
  double duration_;
  std::vector<double> lap_offsets_;
};

std::vector<Coordinate> gen_trajectory(const TrackSpec& spec, double duration, double label_rate, std::uint64_t seed);

struct SamplingModel {
  double csi_rate = 5.0;      // Hz
  double csi_jitter = 0.3;    // fraction of the nominal period, uniform +-
  double beam_mean_interval = 1.0;  // s
  double beam_shape = 4.0;          // gamma shape of beam inter-arrivals
  double label_rate = 10.0;   // Hz

  void validate() const;
};

struct SampleTimes {
  std::vector<double> csi;
  std::vector<double> beam;
};

SampleTimes sample_times(const SamplingModel& model, double duration, std::uint64_t seed);

struct SensorModel {
  int m_b = 36;
  double beam_az_min = -0.2;  // rad, beam centers spread uniformly
  double beam_az_max = 1.7708;
  double beam_width = 0.1;    // rad; lobe concentration 1 / width^2
  double tx_db = 30.0;
  double lobe_gain_db = 20.0;
  double path_loss_exp = 2.0;
  double beam_noise_db = 2.0;

  int m_c = 36;
  double csi_length_scale = 1.5;  // m
  double csi_amplitude = 1.0;
  double csi_noise = 0.25;

  void validate() const;
  [[nodiscard]] double beam_center(int m) const;
};

// Noise-free beam SNRs (dB) at a position.
Vec beam_snr(const SensorModel& model, const Eigen::Vector2d& ap, const Eigen::Vector2d& pos);

// Random Fourier features a * cos(W p + phi); Lipschitz constant a * ||W||_F.
struct CsiFeatureMap {
  Mat freq;   // m_c x 2, rad/m
  Vec phase;
  double amplitude = 1.0;

  static CsiFeatureMap create(const SensorModel& model, std::uint64_t seed);
  [[nodiscard]] Vec operator()(const Eigen::Vector2d& pos) const;
  [[nodiscard]] double lipschitz() const;
};

std::vector<BeamSnrFrame> render_beam_snr(std::span<const double> times, std::span<const Eigen::Vector2d> positions,
                                          const SensorModel& model, const Eigen::Vector2d& ap, std::uint64_t seed);
std::vector<CsiEmbedding> render_csi_embedding(std::span<const double> times,
                                               std::span<const Eigen::Vector2d> positions, const CsiFeatureMap& map,
                                               double noise_std, std::uint64_t seed);

// Three-path channel (direct + two wall images) with an injected sampling
// time offset ramp and a per-packet common phase.
struct RawCsiModel {
  int n_tx = 4;
  int n_rx = 2;
  int n_s = 234;
  double f_delta = 312.5e3;
  double carrier = 5.18e9;
  double sto_max = 50e-9;  // |tau| drawn uniformly up to this, s
  bool random_phase = true;
};

csi::RawCsiFrame render_raw_csi(const RawCsiModel& model, const TrackSpec& track, const Eigen::Vector2d& pos, double t,
                                double sto, double common_phase);

struct Scenario {
  TrackSpec track;
  SensorModel sensors;
  SamplingModel sampling;
  RawCsiModel raw;
  double duration = 8890.0;
  double window_span = 5.0;
  double step = 5.0;
  SplitSpec split;
  double val_fraction = 0.1;  // carved from train for temporal / coordinate splits
  bool raw_csi = false;
  std::uint64_t seed = 0;

  void validate() const;
  [[nodiscard]] DatasetConfig dataset_config() const;
};

json to_json(const Scenario& s);
Scenario scenario_from_json(const json& j);

struct Recording {
  StreamSet frames;
  std::vector<csi::RawCsiFrame> raw;  // aligned with frames.csi when requested
};

Recording record(const Scenario& s);

struct BuildSummary {
  std::size_t windows = 0;
  std::size_t train = 0;
  std::size_t val = 0;
  std::size_t test = 0;
  int dropped = 0;
  double cutoff = 0.0;
};

// Writes scenario.json, {train,val,test}.jsonl and optionally raw_csi_<split>.jsonl.
BuildSummary build_dataset(const Scenario& s, const std::filesystem::path& out_dir);

}  // namespace ndf::sim
