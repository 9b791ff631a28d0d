#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "ndf/params.hpp"

namespace ndf {

// One timestamped measurement vector: beam SNRs (dB) or a CSI embedding.
struct TimedVector {
  double t = 0.0;
  Vec values;
};

using BeamSnrFrame = TimedVector;
using CsiEmbedding = TimedVector;

struct Coordinate {
  double t = 0.0;
  Eigen::Vector2d xy = Eigen::Vector2d::Zero();
};

// All frames of a recording, per stream, each sorted by time.
struct StreamSet {
  std::vector<BeamSnrFrame> beam;
  std::vector<CsiEmbedding> csi;
  std::vector<Coordinate> labels;

  [[nodiscard]] std::size_t frame_count() const { return beam.size() + csi.size() + labels.size(); }
};

struct MeasurementWindow {
  std::int64_t id = 0;
  double start = 0.0;
  double span = 0.0;
  std::vector<BeamSnrFrame> beam;
  std::vector<CsiEmbedding> csi;
  std::vector<Coordinate> labels;
  bool normalized = false;
  int out_of_range = 0;  // scaled values outside [0, 1]; recorded, never clipped

  [[nodiscard]] std::vector<double> beam_times() const;
  [[nodiscard]] std::vector<double> csi_times() const;
  [[nodiscard]] std::vector<double> label_times() const;
};

struct DatasetConfig {
  int m_b = 36;
  int m_c = 36;
  int n_tx = 4;
  int n_rx = 2;
  int n_s = 234;
  double f_delta = 312.5e3;  // Hz
  double window_span = 5.0;  // s
  double label_rate = 10.0;  // Hz

  void validate() const;
};

struct Box {
  double x_min = 0.0;
  double y_min = 0.0;
  double x_max = 0.0;
  double y_max = 0.0;

  [[nodiscard]] bool contains(const Eigen::Vector2d& p) const {
    return p.x() >= x_min && p.x() <= x_max && p.y() >= y_min && p.y() <= y_max;
  }
  [[nodiscard]] bool degenerate() const { return !(x_max > x_min) || !(y_max > y_min); }
};

enum class SplitKind { Random, Temporal, Coordinate };

struct SplitSpec {
  SplitKind kind = SplitKind::Random;
  std::array<double, 3> ratios{0.8, 0.1, 0.1};  // random
  double cutoff_fraction = 0.6;                  // temporal
  Box region;                                    // coordinate
  double train_step = 5.0;
  double test_step = 5.0;

  void validate() const;
};

std::string to_string(SplitKind k);
SplitKind split_kind_from_string(const std::string& s);

// ---------------------------------------------------------------- windowing

struct WindowingResult {
  std::vector<MeasurementWindow> windows;
  int dropped = 0;     // windows with some but not all streams empty
  int empty = 0;       // windows with no frames at all (e.g. outside a split)
  int warnings = 0;
};

// Windows [origin + k*step, origin + k*step + span) that fit inside [origin, end].
// Windows missing any stream are dropped and counted.
WindowingResult window_sequences(const StreamSet& frames, double window_span, double stepsize, double origin,
                                 double end);

// One window per (id, start) pair; windows missing a stream are dropped.
WindowingResult windows_at(const StreamSet& frames, double window_span,
                           std::span<const std::pair<std::int64_t, double>> id_starts);

// Maps every timestamp to (t - start) / span.
MeasurementWindow normalize_window_times(const MeasurementWindow& w);

// ---------------------------------------------------------------- scaling

struct MinMax {
  Vec lo;
  Vec hi;

  [[nodiscard]] double apply(Eigen::Index dim, double x) const;
  [[nodiscard]] int constant_dims() const;
};

struct Scaler {
  MinMax beam;
  MinMax csi;
  int warnings = 0;  // constant dimensions seen while fitting

  [[nodiscard]] bool fitted() const { return beam.lo.size() > 0 && csi.lo.size() > 0; }
};

Scaler fit_measurement_scaler(std::span<const MeasurementWindow> train);
MeasurementWindow apply_scaler(const Scaler& scaler, const MeasurementWindow& w);

// ---------------------------------------------------------------- splits

struct WindowSplit {
  std::vector<MeasurementWindow> train;
  std::vector<MeasurementWindow> val;
  std::vector<MeasurementWindow> test;
};

// Largest-remainder allocation of n items to the given fractions; ties on the
// remainder go to the earlier bucket.
std::vector<std::size_t> largest_remainder(std::size_t n, std::span<const double> fractions);

WindowSplit split_random(const std::vector<MeasurementWindow>& windows, std::array<double, 3> ratios,
                         std::uint64_t seed);

struct FrameSplit {
  StreamSet train;
  StreamSet test;
  double cutoff = 0.0;  // first test time
};

// Chronological split over all frames of all streams: the first
// floor(s * total) frames in time order go to train.
FrameSplit split_temporal_frames(const StreamSet& frames, double s);

struct TemporalSplit {
  FrameSplit frames;
  WindowingResult train;
  WindowingResult test;
};

TemporalSplit split_temporal(const StreamSet& frames, double s, double window_span, double train_step,
                             double test_step, double origin, double end);

// Windows whose labels touch the region go to test, the rest to train.
WindowSplit split_coordinate(const std::vector<MeasurementWindow>& windows, const Box& region);

}  // namespace ndf
