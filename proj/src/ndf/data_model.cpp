#include "ndf/data_model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>
#include <tuple>

namespace ndf {

namespace {

template <typename Frame>
void require_sorted(const std::vector<Frame>& v, const char* stream) {
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (!(v[i].t > v[i - 1].t)) {
      throw std::invalid_argument(std::string("window_sequences: ") + stream + " stream is not strictly increasing");
    }
  }
}

template <typename Frame>
std::vector<Frame> frames_in(const std::vector<Frame>& v, double lo, double hi) {
  auto first = std::lower_bound(v.begin(), v.end(), lo, [](const Frame& f, double t) { return f.t < t; });
  auto last = std::lower_bound(first, v.end(), hi, [](const Frame& f, double t) { return f.t < t; });
  return {first, last};
}

template <typename Frame>
std::vector<double> times_of(const std::vector<Frame>& v) {
  std::vector<double> out;
  out.reserve(v.size());
  for (const auto& f : v) out.push_back(f.t);
  return out;
}

void fit_minmax(MinMax& mm, const std::vector<TimedVector>& frames) {
  for (const auto& f : frames) {
    if (mm.lo.size() == 0) {
      mm.lo = f.values;
      mm.hi = f.values;
    } else {
      if (f.values.size() != mm.lo.size()) throw std::invalid_argument("scaler: inconsistent measurement length");
      mm.lo = mm.lo.cwiseMin(f.values);
      mm.hi = mm.hi.cwiseMax(f.values);
    }
  }
}

int scale_frames(const MinMax& mm, std::vector<TimedVector>& frames) {
  int outside = 0;
  for (auto& f : frames) {
    if (f.values.size() != mm.lo.size()) throw std::invalid_argument("scaler: measurement length mismatch");
    for (Eigen::Index i = 0; i < f.values.size(); ++i) {
      const double v = mm.apply(i, f.values[i]);
      if (v < 0.0 || v > 1.0) ++outside;
      f.values[i] = v;
    }
  }
  return outside;
}

}  // namespace

std::vector<double> MeasurementWindow::beam_times() const { return times_of(beam); }
std::vector<double> MeasurementWindow::csi_times() const { return times_of(csi); }
std::vector<double> MeasurementWindow::label_times() const { return times_of(labels); }

void DatasetConfig::validate() const {
  if (m_b <= 0 || m_c <= 0 || n_tx <= 0 || n_rx <= 0 || n_s <= 0) {
    throw std::invalid_argument("dataset config: dimensions must be positive");
  }
  if (!(f_delta > 0.0) || !(window_span > 0.0) || !(label_rate > 0.0)) {
    throw std::invalid_argument("dataset config: rates and spans must be positive");
  }
}

void SplitSpec::validate() const {
  switch (kind) {
    case SplitKind::Random: {
      double sum = 0.0;
      for (double r : ratios) {
        if (r < 0.0) throw std::invalid_argument("split ratios must be non-negative");
        sum += r;
      }
      if (std::abs(sum - 1.0) > 1e-9) throw std::invalid_argument("split ratios must sum to 1");
      break;
    }
    case SplitKind::Temporal:
      if (!(cutoff_fraction > 0.0 && cutoff_fraction < 1.0)) {
        throw std::invalid_argument("temporal split fraction must lie in (0, 1)");
      }
      break;
    case SplitKind::Coordinate:
      if (region.degenerate()) throw std::invalid_argument("coordinate split region is degenerate");
      break;
  }
  if (!(train_step > 0.0) || !(test_step > 0.0)) throw std::invalid_argument("split stepsizes must be positive");
}

std::string to_string(SplitKind k) {
  switch (k) {
    case SplitKind::Random: return "random";
    case SplitKind::Temporal: return "temporal";
    case SplitKind::Coordinate: return "coordinate";
  }
  return "random";
}

SplitKind split_kind_from_string(const std::string& s) {
  if (s == "random") return SplitKind::Random;
  if (s == "temporal") return SplitKind::Temporal;
  if (s == "coordinate") return SplitKind::Coordinate;
  throw std::invalid_argument("unknown split kind: " + s);
}

WindowingResult windows_at(const StreamSet& frames, double window_span,
                           std::span<const std::pair<std::int64_t, double>> id_starts) {
  if (!(window_span > 0.0)) throw std::invalid_argument("window span must be positive");
  require_sorted(frames.beam, "beam");
  require_sorted(frames.csi, "csi");
  require_sorted(frames.labels, "label");

  WindowingResult out;
  if (frames.frame_count() == 0) {
    out.warnings = 1;
    return out;
  }
  for (const auto& [id, start] : id_starts) {
    MeasurementWindow w;
    w.id = id;
    w.start = start;
    w.span = window_span;
    w.beam = frames_in(frames.beam, start, start + window_span);
    w.csi = frames_in(frames.csi, start, start + window_span);
    w.labels = frames_in(frames.labels, start, start + window_span);
    const int nonempty = static_cast<int>(!w.beam.empty()) + static_cast<int>(!w.csi.empty()) +
                         static_cast<int>(!w.labels.empty());
    if (nonempty == 3) {
      out.windows.push_back(std::move(w));
    } else if (nonempty == 0) {
      ++out.empty;
    } else {
      ++out.dropped;
    }
  }
  return out;
}

WindowingResult window_sequences(const StreamSet& frames, double window_span, double stepsize, double origin,
                                 double end) {
  if (!(window_span > 0.0) || !(stepsize > 0.0)) throw std::invalid_argument("window span and stepsize must be positive");
  std::vector<std::pair<std::int64_t, double>> starts;
  if (end - origin >= window_span) {
    const auto count = static_cast<std::int64_t>(std::floor((end - origin - window_span) / stepsize + 1e-9)) + 1;
    for (std::int64_t k = 0; k < count; ++k) starts.emplace_back(k, origin + static_cast<double>(k) * stepsize);
  }
  return windows_at(frames, window_span, starts);
}

MeasurementWindow normalize_window_times(const MeasurementWindow& w) {
  if (!(w.span > 0.0)) throw std::invalid_argument("normalize_window_times: zero window span");
  if (w.normalized) return w;
  MeasurementWindow out = w;
  auto map = [&](double t) {
    const double u = (t - w.start) / w.span;
    if (u < -1e-12 || u > 1.0 + 1e-12) throw std::invalid_argument("normalize_window_times: timestamp outside window");
    return std::clamp(u, 0.0, 1.0);
  };
  for (auto& f : out.beam) f.t = map(f.t);
  for (auto& f : out.csi) f.t = map(f.t);
  for (auto& f : out.labels) f.t = map(f.t);
  out.normalized = true;
  return out;
}

double MinMax::apply(Eigen::Index dim, double x) const {
  const double range = hi[dim] - lo[dim];
  if (!(range > 0.0)) return 0.5;
  return (x - lo[dim]) / range;
}

int MinMax::constant_dims() const {
  int n = 0;
  for (Eigen::Index i = 0; i < lo.size(); ++i) n += static_cast<int>(!(hi[i] > lo[i]));
  return n;
}

Scaler fit_measurement_scaler(std::span<const MeasurementWindow> train) {
  Scaler s;
  for (const auto& w : train) {
    fit_minmax(s.beam, w.beam);
    fit_minmax(s.csi, w.csi);
  }
  if (!s.fitted()) throw std::invalid_argument("fit_measurement_scaler: no training frames");
  s.warnings = s.beam.constant_dims() + s.csi.constant_dims();
  return s;
}

MeasurementWindow apply_scaler(const Scaler& scaler, const MeasurementWindow& w) {
  if (!scaler.fitted()) throw std::invalid_argument("apply_scaler: scaler is not fitted");
  MeasurementWindow out = w;
  out.out_of_range = scale_frames(scaler.beam, out.beam) + scale_frames(scaler.csi, out.csi);
  return out;
}

std::vector<std::size_t> largest_remainder(std::size_t n, std::span<const double> fractions) {
  std::vector<std::size_t> sizes(fractions.size(), 0);
  std::vector<std::pair<double, std::size_t>> rem;
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < fractions.size(); ++i) {
    const double exact = fractions[i] * static_cast<double>(n);
    sizes[i] = static_cast<std::size_t>(std::floor(exact + 1e-9));
    assigned += sizes[i];
    rem.emplace_back(exact - static_cast<double>(sizes[i]), i);
  }
  std::stable_sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) { return a.first > b.first + 1e-12; });
  for (std::size_t k = 0; assigned < n && k < rem.size(); ++k, ++assigned) ++sizes[rem[k].second];
  return sizes;
}

WindowSplit split_random(const std::vector<MeasurementWindow>& windows, std::array<double, 3> ratios,
                         std::uint64_t seed) {
  SplitSpec spec;
  spec.ratios = ratios;
  spec.validate();
  const auto positive = std::count_if(ratios.begin(), ratios.end(), [](double r) { return r > 0.0; });
  if (windows.size() < static_cast<std::size_t>(positive)) {
    throw std::invalid_argument("split_random: fewer windows than splits");
  }
  const auto sizes = largest_remainder(windows.size(), ratios);

  std::vector<std::size_t> order(windows.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  // Fisher-Yates on raw engine output so the permutation does not depend on
  // the standard library's distribution implementations.
  for (std::size_t i = order.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng() % i);
    std::swap(order[i - 1], order[j]);
  }

  WindowSplit out;
  std::array<std::vector<MeasurementWindow>*, 3> dst{&out.train, &out.val, &out.test};
  std::size_t pos = 0;
  for (std::size_t b = 0; b < 3; ++b) {
    std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(pos),
                                 order.begin() + static_cast<std::ptrdiff_t>(pos + sizes[b]));
    std::sort(idx.begin(), idx.end());
    for (auto i : idx) dst[b]->push_back(windows[i]);
    pos += sizes[b];
  }
  return out;
}

FrameSplit split_temporal_frames(const StreamSet& frames, double s) {
  if (!(s > 0.0 && s < 1.0)) throw std::invalid_argument("split_temporal: s must lie in (0, 1)");
  // (time, stream, index) in chronological order
  std::vector<std::tuple<double, int, std::size_t>> all;
  all.reserve(frames.frame_count());
  for (std::size_t i = 0; i < frames.beam.size(); ++i) all.emplace_back(frames.beam[i].t, 0, i);
  for (std::size_t i = 0; i < frames.csi.size(); ++i) all.emplace_back(frames.csi[i].t, 1, i);
  for (std::size_t i = 0; i < frames.labels.size(); ++i) all.emplace_back(frames.labels[i].t, 2, i);
  std::sort(all.begin(), all.end());
  const auto k = static_cast<std::size_t>(std::floor(s * static_cast<double>(all.size()) + 1e-9));
  if (k == 0) throw std::invalid_argument("split_temporal: train split would be empty");
  if (k >= all.size()) throw std::invalid_argument("split_temporal: test split would be empty");

  FrameSplit out;
  out.cutoff = std::get<0>(all[k]);
  for (const auto& f : frames.beam) (f.t < out.cutoff ? out.train : out.test).beam.push_back(f);
  for (const auto& f : frames.csi) (f.t < out.cutoff ? out.train : out.test).csi.push_back(f);
  for (const auto& f : frames.labels) (f.t < out.cutoff ? out.train : out.test).labels.push_back(f);
  if (out.train.frame_count() == 0 || out.test.frame_count() == 0) {
    throw std::invalid_argument("split_temporal: degenerate cutoff");
  }
  return out;
}

TemporalSplit split_temporal(const StreamSet& frames, double s, double window_span, double train_step,
                             double test_step, double origin, double end) {
  TemporalSplit out;
  out.frames = split_temporal_frames(frames, s);
  out.train = window_sequences(out.frames.train, window_span, train_step, origin, out.frames.cutoff);
  out.test = window_sequences(out.frames.test, window_span, test_step, out.frames.cutoff, end);
  return out;
}

WindowSplit split_coordinate(const std::vector<MeasurementWindow>& windows, const Box& region) {
  WindowSplit out;
  for (const auto& w : windows) {
    const bool touches =
        std::any_of(w.labels.begin(), w.labels.end(), [&](const Coordinate& c) { return region.contains(c.xy); });
    (touches ? out.test : out.train).push_back(w);
  }
  if (out.train.empty() && !windows.empty()) {
    throw std::invalid_argument("split_coordinate: region covers all data");
  }
  return out;
}

}  // namespace ndf
