#include "ndf/synthetic_testbed.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

#include "ndf/dataset_io.hpp"
#include "ndf/rng.hpp"

namespace ndf::sim {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kLight = 299792458.0;

// Frames whose time lies in any [start, start + span) of the sorted starts.
template <typename Frame>
std::vector<Frame> frames_in_windows(const std::vector<Frame>& frames, double span, const std::vector<double>& starts,
                                     std::vector<std::size_t>* picked = nullptr) {
  std::vector<Frame> out;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const double t = frames[i].t;
    auto it = std::upper_bound(starts.begin(), starts.end(), t);
    if (it == starts.begin()) continue;
    --it;
    if (t < *it + span) {
      out.push_back(frames[i]);
      if (picked != nullptr) picked->push_back(i);
    }
  }
  return out;
}

}  // namespace

void TrackSpec::validate() const {
  if (!(x_max > x_min) || !(y_max > y_min)) throw std::invalid_argument("track rectangle is degenerate");
  if (!(speed > 0.0)) throw std::invalid_argument("track speed must be positive");
  if (!(lap_jitter >= 0.0)) throw std::invalid_argument("lap jitter must be non-negative");
}

Eigen::Vector2d point_on_track(const TrackSpec& spec, double inset, double fraction) {
  const double x0 = spec.x_min + inset;
  const double y0 = spec.y_min + inset;
  const double w = (spec.x_max - spec.x_min) - 2.0 * inset;
  const double h = (spec.y_max - spec.y_min) - 2.0 * inset;
  if (!(w > 0.0) || !(h > 0.0)) throw std::invalid_argument("track inset collapses the rectangle");
  double s = (fraction - std::floor(fraction)) * 2.0 * (w + h);
  if (s < w) return {x0 + s, y0};
  s -= w;
  if (s < h) return {x0 + w, y0 + s};
  s -= h;
  if (s < w) return {x0 + w - s, y0 + h};
  s -= w;
  return {x0, y0 + h - s};
}

Trajectory::Trajectory(const TrackSpec& spec, double duration, std::uint64_t seed) : spec_(spec), duration_(duration) {
  spec.validate();
  if (!(duration > 0.0)) throw std::invalid_argument("trajectory duration must be positive");
  const auto laps = static_cast<std::size_t>(std::ceil(duration / spec.lap_time())) + 2;
  auto rng = make_rng(seed, {kTagTrajectory});
  std::normal_distribution<double> normal(0.0, 1.0);
  lap_offsets_.resize(laps);
  for (auto& o : lap_offsets_) o = spec.lap_jitter * normal(rng);
}

Eigen::Vector2d Trajectory::at(double t) const {
  const double laps = std::max(0.0, t) / spec_.lap_time();
  const auto lap = std::min(static_cast<std::size_t>(laps), lap_offsets_.size() - 2);
  const double frac = laps - static_cast<double>(lap);
  const double offset = lap_offsets_[lap] + (lap_offsets_[lap + 1] - lap_offsets_[lap]) * frac;
  return point_on_track(spec_, offset, frac);
}

std::vector<Coordinate> gen_trajectory(const TrackSpec& spec, double duration, double label_rate, std::uint64_t seed) {
  if (!(label_rate > 0.0)) throw std::invalid_argument("label rate must be positive");
  Trajectory traj(spec, duration, seed);
  std::vector<Coordinate> out;
  for (std::int64_t k = 0;; ++k) {
    const double t = static_cast<double>(k) / label_rate;
    if (t >= duration) break;
    out.push_back({t, traj.at(t)});
  }
  return out;
}

void SamplingModel::validate() const {
  if (!(csi_rate > 0.0) || !(label_rate > 0.0) || !(beam_mean_interval > 0.0) || !(beam_shape > 0.0)) {
    throw std::invalid_argument("sampling rates must be positive");
  }
  if (!(csi_jitter >= 0.0 && csi_jitter < 1.0)) throw std::invalid_argument("csi jitter must lie in [0, 1)");
}

SampleTimes sample_times(const SamplingModel& model, double duration, std::uint64_t seed) {
  model.validate();
  if (!(duration > 0.0)) throw std::invalid_argument("sampling duration must be positive");
  SampleTimes out;
  const double period = 1.0 / model.csi_rate;
  {
    auto rng = make_rng(seed, {kTagCsiTimes});
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    if (model.csi_jitter > 0.0) {
      double t = period * model.csi_jitter * 0.5 * (u(rng) + 1.0);
      while (t < duration) {
        out.csi.push_back(t);
        t += period * (1.0 + model.csi_jitter * u(rng));
      }
    } else {
      for (std::size_t i = 0;; ++i) {
        const double t = static_cast<double>(i) * period;
        if (!(t < duration - 1e-9 * period)) break;
        out.csi.push_back(t);
      }
    }
  }
  {
    auto rng = make_rng(seed, {kTagBeamTimes});
    std::gamma_distribution<double> gap(model.beam_shape, model.beam_mean_interval / model.beam_shape);
    double t = gap(rng);
    while (t < duration) {
      out.beam.push_back(t);
      t += gap(rng);
    }
  }
  return out;
}

void SensorModel::validate() const {
  if (m_b <= 0 || m_c <= 0) throw std::invalid_argument("sensor dimensions must be positive");
  if (!(beam_width > 0.0) || !(beam_az_max > beam_az_min)) throw std::invalid_argument("invalid beam geometry");
  if (!(beam_noise_db >= 0.0) || !(csi_noise >= 0.0)) throw std::invalid_argument("noise std must be non-negative");
  if (!(csi_length_scale > 0.0)) throw std::invalid_argument("csi length scale must be positive");
}

double SensorModel::beam_center(int m) const {
  if (m_b == 1) return 0.5 * (beam_az_min + beam_az_max);
  return beam_az_min + (beam_az_max - beam_az_min) * static_cast<double>(m) / static_cast<double>(m_b - 1);
}

Vec beam_snr(const SensorModel& model, const Eigen::Vector2d& ap, const Eigen::Vector2d& pos) {
  const Eigen::Vector2d d = pos - ap;
  const double range = d.norm();
  if (!(range > 0.0)) throw std::invalid_argument("render_beam_snr: position coincides with the access point");
  const double az = std::atan2(d.y(), d.x());
  const double kappa = 1.0 / (model.beam_width * model.beam_width);
  const double loss = 10.0 * model.path_loss_exp * std::log10(range);
  Vec out(model.m_b);
  for (int m = 0; m < model.m_b; ++m) {
    const double lobe = std::exp(kappa * (std::cos(az - model.beam_center(m)) - 1.0));
    out[m] = model.tx_db + model.lobe_gain_db * lobe - loss;
  }
  return out;
}

CsiFeatureMap CsiFeatureMap::create(const SensorModel& model, std::uint64_t seed) {
  model.validate();
  auto rng = make_rng(seed, {kTagSensor});
  std::normal_distribution<double> normal(0.0, 1.0 / model.csi_length_scale);
  std::uniform_real_distribution<double> uphase(0.0, 2.0 * kPi);
  CsiFeatureMap m;
  m.freq.resize(model.m_c, 2);
  m.phase.resize(model.m_c);
  for (int i = 0; i < model.m_c; ++i) {
    m.freq(i, 0) = normal(rng);
    m.freq(i, 1) = normal(rng);
    m.phase[i] = uphase(rng);
  }
  m.amplitude = model.csi_amplitude;
  return m;
}

Vec CsiFeatureMap::operator()(const Eigen::Vector2d& pos) const {
  return amplitude * ((freq * pos) + phase).array().cos().matrix();
}

double CsiFeatureMap::lipschitz() const { return amplitude * freq.norm(); }

std::vector<BeamSnrFrame> render_beam_snr(std::span<const double> times, std::span<const Eigen::Vector2d> positions,
                                          const SensorModel& model, const Eigen::Vector2d& ap, std::uint64_t seed) {
  if (times.size() != positions.size()) throw std::invalid_argument("render_beam_snr: times/positions mismatch");
  model.validate();
  std::vector<BeamSnrFrame> out;
  out.reserve(times.size());
  for (std::size_t i = 0; i < times.size(); ++i) {
    Vec v = beam_snr(model, ap, positions[i]);
    if (model.beam_noise_db > 0.0) {
      auto rng = make_rng(seed, {kTagBeamNoise, i});
      std::normal_distribution<double> noise(0.0, model.beam_noise_db);
      for (Eigen::Index m = 0; m < v.size(); ++m) v[m] += noise(rng);
    }
    out.push_back({times[i], std::move(v)});
  }
  return out;
}

std::vector<CsiEmbedding> render_csi_embedding(std::span<const double> times,
                                               std::span<const Eigen::Vector2d> positions, const CsiFeatureMap& map,
                                               double noise_std, std::uint64_t seed) {
  if (times.size() != positions.size()) throw std::invalid_argument("render_csi_embedding: times/positions mismatch");
  std::vector<CsiEmbedding> out;
  out.reserve(times.size());
  for (std::size_t i = 0; i < times.size(); ++i) {
    Vec v = map(positions[i]);
    if (noise_std > 0.0) {
      auto rng = make_rng(seed, {kTagCsiNoise, i});
      std::normal_distribution<double> noise(0.0, noise_std);
      for (Eigen::Index m = 0; m < v.size(); ++m) v[m] += noise(rng);
    }
    out.push_back({times[i], std::move(v)});
  }
  return out;
}

csi::RawCsiFrame render_raw_csi(const RawCsiModel& model, const TrackSpec& track, const Eigen::Vector2d& pos, double t,
                                double sto, double common_phase) {
  const Eigen::Vector2d ap = track.ap;
  const std::array<Eigen::Vector2d, 3> sources{
      ap, Eigen::Vector2d(ap.x(), 2.0 * (track.y_max + 1.0) - ap.y()),
      Eigen::Vector2d(2.0 * (track.x_max + 1.0) - ap.x(), ap.y())};
  const std::array<double, 3> gains{1.0, 0.5, 0.4};
  csi::RawCsiFrame f;
  f.t = t;
  f.n_tx = model.n_tx;
  f.n_rx = model.n_rx;
  f.n_s = model.n_s;
  f.data.assign(static_cast<std::size_t>(model.n_tx) * static_cast<std::size_t>(model.n_rx) * static_cast<std::size_t>(model.n_s), {0.0, 0.0});
  for (std::size_t p = 0; p < sources.size(); ++p) {
    const Eigen::Vector2d d = pos - sources[p];
    const double dist = d.norm();
    if (!(dist > 0.0)) throw std::invalid_argument("render_raw_csi: position coincides with a source");
    const double delay = dist / kLight;
    const double angle = std::atan2(d.y(), d.x());
    const double amp = gains[p] / dist;
    for (int i = 0; i < model.n_tx; ++i) {
      for (int j = 0; j < model.n_rx; ++j) {
        const double spatial = kPi * (static_cast<double>(i) * std::cos(angle) + static_cast<double>(j) * std::sin(angle));
        for (int k = 0; k < model.n_s; ++k) {
          const double fk = model.carrier + (static_cast<double>(k) - 0.5 * static_cast<double>(model.n_s - 1)) * model.f_delta;
          f.data[f.index(i, j, k)] += std::polar(amp, -2.0 * kPi * fk * delay - spatial);
        }
      }
    }
  }
  for (int i = 0; i < model.n_tx; ++i) {
    for (int j = 0; j < model.n_rx; ++j) {
      for (int k = 0; k < model.n_s; ++k) {
        f.data[f.index(i, j, k)] *= std::polar(1.0, 2.0 * kPi * model.f_delta * static_cast<double>(k) * sto + common_phase);
      }
    }
  }
  return f;
}

void Scenario::validate() const {
  track.validate();
  sensors.validate();
  sampling.validate();
  split.validate();
  if (!(duration > 0.0) || !(window_span > 0.0) || !(step > 0.0)) {
    throw std::invalid_argument("scenario duration, window span and step must be positive");
  }
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) throw std::invalid_argument("val fraction must lie in [0, 1)");
  if (raw.n_tx <= 0 || raw.n_rx < 2 || raw.n_s < 2) throw std::invalid_argument("raw csi shape is invalid");
}

DatasetConfig Scenario::dataset_config() const {
  DatasetConfig c;
  c.m_b = sensors.m_b;
  c.m_c = sensors.m_c;
  c.n_tx = raw.n_tx;
  c.n_rx = raw.n_rx;
  c.n_s = raw.n_s;
  c.f_delta = raw.f_delta;
  c.window_span = window_span;
  c.label_rate = sampling.label_rate;
  return c;
}

json to_json(const Scenario& s) {
  json j;
  j["track"] = {{"x_min", s.track.x_min}, {"y_min", s.track.y_min}, {"x_max", s.track.x_max},
                {"y_max", s.track.y_max}, {"speed", s.track.speed}, {"lap_jitter", s.track.lap_jitter},
                {"ap", {s.track.ap.x(), s.track.ap.y()}}};
  j["sensors"] = {{"M_b", s.sensors.m_b},
                  {"beam_az_min", s.sensors.beam_az_min},
                  {"beam_az_max", s.sensors.beam_az_max},
                  {"beam_width", s.sensors.beam_width},
                  {"tx_db", s.sensors.tx_db},
                  {"lobe_gain_db", s.sensors.lobe_gain_db},
                  {"path_loss_exp", s.sensors.path_loss_exp},
                  {"beam_noise_db", s.sensors.beam_noise_db},
                  {"M_c", s.sensors.m_c},
                  {"csi_length_scale", s.sensors.csi_length_scale},
                  {"csi_amplitude", s.sensors.csi_amplitude},
                  {"csi_noise", s.sensors.csi_noise}};
  j["sampling"] = {{"csi_rate", s.sampling.csi_rate},
                   {"csi_jitter", s.sampling.csi_jitter},
                   {"beam_mean_interval", s.sampling.beam_mean_interval},
                   {"beam_shape", s.sampling.beam_shape},
                   {"label_rate", s.sampling.label_rate}};
  j["raw_csi"] = {{"enabled", s.raw_csi},        {"N_Tx", s.raw.n_tx},
                  {"N_Rx", s.raw.n_rx},          {"N_s", s.raw.n_s},
                  {"f_delta", s.raw.f_delta},    {"carrier", s.raw.carrier},
                  {"sto_max", s.raw.sto_max},    {"random_phase", s.raw.random_phase}};
  j["split"] = {{"kind", to_string(s.split.kind)},
                {"ratios", s.split.ratios},
                {"cutoff_fraction", s.split.cutoff_fraction},
                {"region", {s.split.region.x_min, s.split.region.y_min, s.split.region.x_max, s.split.region.y_max}},
                {"train_step", s.split.train_step},
                {"test_step", s.split.test_step},
                {"val_fraction", s.val_fraction}};
  j["duration"] = s.duration;
  j["window_span"] = s.window_span;
  j["step"] = s.step;
  j["seed"] = s.seed;
  return j;
}

Scenario scenario_from_json(const json& j) {
  Scenario s;
  if (j.contains("track")) {
    const auto& t = j["track"];
    s.track.x_min = t.value("x_min", s.track.x_min);
    s.track.y_min = t.value("y_min", s.track.y_min);
    s.track.x_max = t.value("x_max", s.track.x_max);
    s.track.y_max = t.value("y_max", s.track.y_max);
    s.track.speed = t.value("speed", s.track.speed);
    s.track.lap_jitter = t.value("lap_jitter", s.track.lap_jitter);
    if (t.contains("ap")) s.track.ap = {t["ap"].at(0).get<double>(), t["ap"].at(1).get<double>()};
  }
  if (j.contains("sensors")) {
    const auto& m = j["sensors"];
    auto& x = s.sensors;
    x.m_b = m.value("M_b", x.m_b);
    x.beam_az_min = m.value("beam_az_min", x.beam_az_min);
    x.beam_az_max = m.value("beam_az_max", x.beam_az_max);
    x.beam_width = m.value("beam_width", x.beam_width);
    x.tx_db = m.value("tx_db", x.tx_db);
    x.lobe_gain_db = m.value("lobe_gain_db", x.lobe_gain_db);
    x.path_loss_exp = m.value("path_loss_exp", x.path_loss_exp);
    x.beam_noise_db = m.value("beam_noise_db", x.beam_noise_db);
    x.m_c = m.value("M_c", x.m_c);
    x.csi_length_scale = m.value("csi_length_scale", x.csi_length_scale);
    x.csi_amplitude = m.value("csi_amplitude", x.csi_amplitude);
    x.csi_noise = m.value("csi_noise", x.csi_noise);
  }
  if (j.contains("sampling")) {
    const auto& m = j["sampling"];
    auto& x = s.sampling;
    x.csi_rate = m.value("csi_rate", x.csi_rate);
    x.csi_jitter = m.value("csi_jitter", x.csi_jitter);
    x.beam_mean_interval = m.value("beam_mean_interval", x.beam_mean_interval);
    x.beam_shape = m.value("beam_shape", x.beam_shape);
    x.label_rate = m.value("label_rate", x.label_rate);
  }
  if (j.contains("raw_csi")) {
    const auto& m = j["raw_csi"];
    s.raw_csi = m.value("enabled", s.raw_csi);
    s.raw.n_tx = m.value("N_Tx", s.raw.n_tx);
    s.raw.n_rx = m.value("N_Rx", s.raw.n_rx);
    s.raw.n_s = m.value("N_s", s.raw.n_s);
    s.raw.f_delta = m.value("f_delta", s.raw.f_delta);
    s.raw.carrier = m.value("carrier", s.raw.carrier);
    s.raw.sto_max = m.value("sto_max", s.raw.sto_max);
    s.raw.random_phase = m.value("random_phase", s.raw.random_phase);
  }
  if (j.contains("split")) {
    const auto& m = j["split"];
    s.split.kind = split_kind_from_string(m.value("kind", std::string("random")));
    if (m.contains("ratios")) s.split.ratios = m["ratios"].get<std::array<double, 3>>();
    s.split.cutoff_fraction = m.value("cutoff_fraction", s.split.cutoff_fraction);
    if (m.contains("region")) {
      const auto r = m["region"].get<std::array<double, 4>>();
      s.split.region = {r[0], r[1], r[2], r[3]};
    }
    s.split.train_step = m.value("train_step", s.split.train_step);
    s.split.test_step = m.value("test_step", s.split.test_step);
    s.val_fraction = m.value("val_fraction", s.val_fraction);
  }
  s.duration = j.value("duration", s.duration);
  s.window_span = j.value("window_span", s.window_span);
  s.step = j.value("step", s.step);
  s.seed = j.value("seed", s.seed);
  return s;
}

Recording record(const Scenario& s) {
  s.validate();
  Recording rec;
  Trajectory traj(s.track, s.duration, s.seed);
  rec.frames.labels = gen_trajectory(s.track, s.duration, s.sampling.label_rate, s.seed);
  const SampleTimes times = sample_times(s.sampling, s.duration, s.seed);

  auto positions = [&](const std::vector<double>& ts) {
    std::vector<Eigen::Vector2d> out;
    out.reserve(ts.size());
    for (double t : ts) out.push_back(traj.at(t));
    return out;
  };
  const auto beam_pos = positions(times.beam);
  const auto csi_pos = positions(times.csi);
  rec.frames.beam = render_beam_snr(times.beam, beam_pos, s.sensors, s.track.ap, s.seed);
  const CsiFeatureMap map = CsiFeatureMap::create(s.sensors, s.seed);
  rec.frames.csi = render_csi_embedding(times.csi, csi_pos, map, s.sensors.csi_noise, s.seed);

  if (s.raw_csi) {
    rec.raw.reserve(times.csi.size());
    for (std::size_t i = 0; i < times.csi.size(); ++i) {
      auto rng = make_rng(s.seed, {kTagRawCsi, i});
      std::uniform_real_distribution<double> u(-1.0, 1.0);
      const double sto = s.raw.sto_max * u(rng);
      const double phase = s.raw.random_phase ? kPi * u(rng) : 0.0;
      rec.raw.push_back(render_raw_csi(s.raw, s.track, csi_pos[i], times.csi[i], sto, phase));
    }
  }
  return rec;
}

BuildSummary build_dataset(const Scenario& s, const std::filesystem::path& out_dir) {
  const Recording rec = record(s);
  const DatasetConfig config = s.dataset_config();
  std::filesystem::create_directories(out_dir);
  write_text_file(out_dir / "scenario.json", to_json(s).dump(2) + "\n");

  BuildSummary summary;
  auto emit = [&](const std::string& name, const std::vector<MeasurementWindow>& windows, const WindowGrid& grid) {
    SplitData data;
    data.header.config = config;
    data.header.split = name;
    data.header.split_kind = to_string(s.split.kind);
    data.header.grid = grid;
    std::vector<MeasurementWindow> sorted = windows;
    std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.start < b.start; });
    std::vector<double> starts;
    for (const auto& w : sorted) {
      data.header.windows.emplace_back(w.id, w.start);
      starts.push_back(w.start);
    }
    std::vector<std::size_t> picked;
    data.frames.beam = frames_in_windows(rec.frames.beam, grid.span, starts);
    data.frames.csi = frames_in_windows(rec.frames.csi, grid.span, starts, &picked);
    data.frames.labels = frames_in_windows(rec.frames.labels, grid.span, starts);
    write_split(split_file(out_dir, name), data);
    if (s.raw_csi) {
      std::vector<csi::RawCsiFrame> raw;
      raw.reserve(picked.size());
      for (auto i : picked) raw.push_back(rec.raw[i]);
      write_raw_csi(raw_csi_file(out_dir, name), raw);
    }
  };

  auto carve_val = [&](std::vector<MeasurementWindow>& train) {
    const WindowSplit parts = split_random(train, {1.0 - s.val_fraction, s.val_fraction, 0.0},
                                           derive_seed(s.seed, {kTagSplit, 1}));
    train = parts.train;
    return parts.val;
  };

  switch (s.split.kind) {
    case SplitKind::Random: {
      const WindowingResult all = window_sequences(rec.frames, s.window_span, s.step, 0.0, s.duration);
      summary.windows = all.windows.size();
      summary.dropped = all.dropped;
      const WindowSplit parts = split_random(all.windows, s.split.ratios, derive_seed(s.seed, {kTagSplit}));
      const WindowGrid grid{s.window_span, s.step, 0.0, s.duration};
      emit("train", parts.train, grid);
      emit("val", parts.val, grid);
      emit("test", parts.test, grid);
      summary.train = parts.train.size();
      summary.val = parts.val.size();
      summary.test = parts.test.size();
      break;
    }
    case SplitKind::Temporal: {
      TemporalSplit parts = split_temporal(rec.frames, s.split.cutoff_fraction, s.window_span, s.split.train_step,
                                           s.split.test_step, 0.0, s.duration);
      summary.cutoff = parts.frames.cutoff;
      auto train = parts.train.windows;
      const auto val = carve_val(train);
      const WindowGrid train_grid{s.window_span, s.split.train_step, 0.0, parts.frames.cutoff};
      emit("train", train, train_grid);
      emit("val", val, train_grid);
      emit("test", parts.test.windows, {s.window_span, s.split.test_step, parts.frames.cutoff, s.duration});
      summary.windows = parts.train.windows.size() + parts.test.windows.size();
      summary.dropped = parts.train.dropped + parts.test.dropped;
      summary.train = train.size();
      summary.val = val.size();
      summary.test = parts.test.windows.size();
      break;
    }
    case SplitKind::Coordinate: {
      const WindowingResult all = window_sequences(rec.frames, s.window_span, s.step, 0.0, s.duration);
      summary.windows = all.windows.size();
      summary.dropped = all.dropped;
      WindowSplit parts = split_coordinate(all.windows, s.split.region);
      const auto val = carve_val(parts.train);
      const WindowGrid grid{s.window_span, s.step, 0.0, s.duration};
      emit("train", parts.train, grid);
      emit("val", val, grid);
      emit("test", parts.test, grid);
      summary.train = parts.train.size();
      summary.val = val.size();
      summary.test = parts.test.size();
      break;
    }
  }
  return summary;
}

}  // namespace ndf::sim
