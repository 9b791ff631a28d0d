#include <doctest.h>

#include <algorithm>
#include <random>
#include <set>

#include "ndf/data_model.hpp"

using namespace ndf;

namespace {

TimedVector tv(double t, std::initializer_list<double> v) {
  TimedVector f;
  f.t = t;
  f.values = Vec(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) f.values[i++] = x;
  return f;
}

// Frames every `dt` seconds on all three streams over [0, duration).
StreamSet regular_streams(double duration, double dt) {
  StreamSet s;
  for (double t = 0.0; t < duration - 1e-12; t += dt) {
    s.beam.push_back(tv(t, {t}));
    s.csi.push_back(tv(t + dt / 2, {t, 1.0}));
    s.labels.push_back({t, {t, -t}});
  }
  return s;
}

MeasurementWindow window_with_labels(std::int64_t id, std::vector<Eigen::Vector2d> pts) {
  MeasurementWindow w;
  w.id = id;
  w.span = 1.0;
  w.beam.push_back(tv(0.0, {1.0}));
  w.csi.push_back(tv(0.0, {1.0}));
  double t = 0.0;
  for (const auto& p : pts) w.labels.push_back({t += 0.1, p});
  return w;
}

std::vector<MeasurementWindow> numbered_windows(int n) {
  std::vector<MeasurementWindow> out;
  for (int i = 0; i < n; ++i) out.push_back(window_with_labels(i, {{0.0, 0.0}}));
  return out;
}

std::set<std::int64_t> ids(const std::vector<MeasurementWindow>& ws) {
  std::set<std::int64_t> s;
  for (const auto& w : ws) s.insert(w.id);
  return s;
}

}  // namespace

TEST_SUITE("windowing") {
  TEST_CASE("twelve seconds with span 5 and step 1 gives eight windows at 0..7") {
    const auto s = regular_streams(12.0, 0.5);
    const auto r = window_sequences(s, 5.0, 1.0, 0.0, 12.0);
    REQUIRE(r.windows.size() == 8);
    for (int k = 0; k < 8; ++k) CHECK(r.windows[static_cast<std::size_t>(k)].start == doctest::Approx(k));
  }

  TEST_CASE("window holds exactly the frames in [start, start + span)") {
    const auto s = regular_streams(12.0, 0.5);
    const auto r = window_sequences(s, 5.0, 1.0, 0.0, 12.0);
    for (const auto& w : r.windows) {
      for (const auto& f : w.beam) CHECK((f.t >= w.start && f.t < w.start + 5.0));
      for (const auto& f : w.labels) CHECK((f.t >= w.start && f.t < w.start + 5.0));
      const auto expected = std::count_if(s.beam.begin(), s.beam.end(),
                                          [&](const auto& f) { return f.t >= w.start && f.t < w.start + 5.0; });
      CHECK(static_cast<long>(w.beam.size()) == expected);
    }
  }

  TEST_CASE("step equal to span puts every frame in at most one window and loses none") {
    const auto s = regular_streams(20.0, 0.25);
    const auto r = window_sequences(s, 5.0, 5.0, 0.0, 20.0);
    REQUIRE(r.windows.size() == 4);
    std::size_t beam = 0, csi = 0, labels = 0;
    std::set<double> seen;
    for (const auto& w : r.windows) {
      beam += w.beam.size();
      csi += w.csi.size();
      labels += w.labels.size();
      for (const auto& f : w.beam) CHECK(seen.insert(f.t).second);
    }
    CHECK(beam == s.beam.size());
    CHECK(csi == s.csi.size());
    CHECK(labels == s.labels.size());
  }

  TEST_CASE("a window with an empty stream is dropped and counted") {
    auto s = regular_streams(10.0, 0.5);
    s.beam.erase(std::remove_if(s.beam.begin(), s.beam.end(), [](const auto& f) { return f.t < 5.0; }), s.beam.end());
    const auto r = window_sequences(s, 5.0, 5.0, 0.0, 10.0);
    CHECK(r.windows.size() == 1);
    CHECK(r.dropped == 1);
    CHECK(r.windows.front().start == 5.0);
  }

  TEST_CASE("empty input gives no windows and a warning") {
    const auto r = window_sequences(StreamSet{}, 5.0, 5.0, 0.0, 10.0);
    CHECK(r.windows.empty());
    CHECK(r.warnings > 0);
  }

  TEST_CASE("unsorted streams are rejected") {
    auto s = regular_streams(10.0, 0.5);
    std::swap(s.csi[2], s.csi[3]);
    CHECK_THROWS_AS(window_sequences(s, 5.0, 5.0, 0.0, 10.0), std::invalid_argument);
  }

  TEST_CASE("non-positive span or step is rejected") {
    const auto s = regular_streams(10.0, 0.5);
    CHECK_THROWS_AS(window_sequences(s, 0.0, 5.0, 0.0, 10.0), std::invalid_argument);
    CHECK_THROWS_AS(window_sequences(s, 5.0, -1.0, 0.0, 10.0), std::invalid_argument);
  }

  TEST_CASE("windows at explicit starts reproduce the regular grid") {
    const auto s = regular_streams(20.0, 0.5);
    const auto grid = window_sequences(s, 5.0, 5.0, 0.0, 20.0);
    std::vector<std::pair<std::int64_t, double>> starts{{1, 5.0}, {3, 15.0}};
    const auto picked = windows_at(s, 5.0, starts);
    REQUIRE(picked.windows.size() == 2);
    CHECK(picked.windows[0].id == 1);
    CHECK(picked.windows[1].labels.size() == grid.windows[3].labels.size());
  }
}

TEST_SUITE("time normalization") {
  TEST_CASE("endpoints and interior") {
    MeasurementWindow w;
    w.start = 10.0;
    w.span = 5.0;
    w.beam = {tv(10.0, {0.0})};
    w.csi = {tv(12.0, {0.0})};
    w.labels = {{15.0, {0, 0}}};
    const auto n = normalize_window_times(w);
    CHECK(n.beam[0].t == 0.0);
    CHECK(n.csi[0].t == doctest::Approx(0.4).epsilon(1e-15));
    CHECK(n.labels[0].t == 1.0);
    CHECK(n.normalized);
  }

  TEST_CASE("zero span is rejected") {
    MeasurementWindow w;
    w.span = 0.0;
    CHECK_THROWS_AS(normalize_window_times(w), std::invalid_argument);
  }

  TEST_CASE("normalization is order preserving and lands in [0, 1]") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
      MeasurementWindow w;
      w.start = 100.0 * u(rng);
      w.span = 0.5 + 9.5 * u(rng);
      std::vector<double> ts;
      for (int i = 0; i < 20; ++i) ts.push_back(w.start + w.span * u(rng));
      std::sort(ts.begin(), ts.end());
      ts.erase(std::unique(ts.begin(), ts.end()), ts.end());
      for (double t : ts) w.csi.push_back(tv(t, {0.0}));
      const auto n = normalize_window_times(w);
      for (std::size_t i = 0; i < n.csi.size(); ++i) {
        CHECK(n.csi[i].t >= 0.0);
        CHECK(n.csi[i].t <= 1.0);
        if (i > 0) CHECK(n.csi[i].t > n.csi[i - 1].t);
      }
    }
  }
}

TEST_SUITE("scaling") {
  MeasurementWindow scalar_window(std::initializer_list<double> beam, std::initializer_list<double> csi) {
    MeasurementWindow w;
    double t = 0.0;
    for (double v : beam) w.beam.push_back(tv(t += 1.0, {v}));
    t = 0.0;
    for (double v : csi) w.csi.push_back(tv(t += 1.0, {v}));
    return w;
  }

  TEST_CASE("train values {2, 4}: x = 3 maps to 0.5 and x = 5 to 1.5 with a flag") {
    const std::vector<MeasurementWindow> train{scalar_window({2.0, 4.0}, {0.0, 1.0})};
    const Scaler s = fit_measurement_scaler(train);
    const auto in = apply_scaler(s, scalar_window({3.0}, {0.5}));
    CHECK(in.beam[0].values[0] == 0.5);
    CHECK(in.out_of_range == 0);
    const auto out = apply_scaler(s, scalar_window({5.0}, {0.5}));
    CHECK(out.beam[0].values[0] == 1.5);
    CHECK(out.out_of_range == 1);
  }

  TEST_CASE("constant dimension maps to 0.5 with a warning") {
    const std::vector<MeasurementWindow> train{scalar_window({7.0, 7.0}, {0.0, 1.0})};
    const Scaler s = fit_measurement_scaler(train);
    CHECK(s.warnings == 1);
    CHECK(apply_scaler(s, scalar_window({7.0}, {0.0})).beam[0].values[0] == 0.5);
    CHECK(apply_scaler(s, scalar_window({100.0}, {0.0})).beam[0].values[0] == 0.5);
  }

  TEST_CASE("training data maps inside [0, 1]") {
    std::mt19937_64 rng(1);
    std::normal_distribution<double> n(3.0, 10.0);
    std::vector<MeasurementWindow> train;
    for (int k = 0; k < 10; ++k) train.push_back(scalar_window({n(rng), n(rng), n(rng)}, {n(rng), n(rng)}));
    const Scaler s = fit_measurement_scaler(train);
    for (const auto& w : train) {
      const auto sw = apply_scaler(s, w);
      CHECK(sw.out_of_range == 0);
      for (const auto& f : sw.beam) CHECK((f.values[0] >= 0.0 && f.values[0] <= 1.0));
    }
  }

  TEST_CASE("unfitted scaler is rejected") {
    CHECK_THROWS_AS(apply_scaler(Scaler{}, scalar_window({1.0}, {1.0})), std::invalid_argument);
    CHECK_THROWS_AS(fit_measurement_scaler({}), std::invalid_argument);
  }
}

TEST_SUITE("splits") {
  TEST_CASE("largest remainder on 1778 windows at 80:10:10") {
    const std::array<double, 3> r{0.8, 0.1, 0.1};
    const auto sizes = largest_remainder(1778, r);
    CHECK(sizes[0] == 1422);
    CHECK(sizes[1] == 178);
    CHECK(sizes[2] == 178);
  }

  TEST_CASE("largest remainder always sums to n") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int k = 0; k < 100; ++k) {
      std::array<double, 3> r{u(rng), u(rng), u(rng)};
      const double s = r[0] + r[1] + r[2];
      for (auto& x : r) x /= s;
      const std::size_t n = 1 + rng() % 5000;
      const auto sizes = largest_remainder(n, r);
      CHECK(sizes[0] + sizes[1] + sizes[2] == n);
      for (int i = 0; i < 3; ++i) CHECK(std::abs(static_cast<double>(sizes[i]) - r[i] * n) < 1.0);
    }
  }

  TEST_CASE("random split is a deterministic disjoint partition") {
    const auto ws = numbered_windows(1778);
    const auto a = split_random(ws, {0.8, 0.1, 0.1}, 42);
    const auto b = split_random(ws, {0.8, 0.1, 0.1}, 42);
    CHECK(a.train.size() == 1422);
    CHECK(a.val.size() == 178);
    CHECK(a.test.size() == 178);
    CHECK(ids(a.train) == ids(b.train));
    CHECK(ids(a.test) == ids(b.test));
    std::set<std::int64_t> all = ids(a.train);
    for (auto i : ids(a.val)) CHECK(all.insert(i).second);
    for (auto i : ids(a.test)) CHECK(all.insert(i).second);
    CHECK(all.size() == 1778);
    const auto c = split_random(ws, {0.8, 0.1, 0.1}, 43);
    CHECK(ids(a.test) != ids(c.test));
  }

  TEST_CASE("ratio 100:0:0 puts everything in train") {
    const auto s = split_random(numbered_windows(17), {1.0, 0.0, 0.0}, 1);
    CHECK(s.train.size() == 17);
    CHECK(s.val.empty());
    CHECK(s.test.empty());
  }

  TEST_CASE("fewer windows than splits is rejected") {
    CHECK_THROWS_AS(split_random(numbered_windows(2), {0.8, 0.1, 0.1}, 1), std::invalid_argument);
  }

  TEST_CASE("temporal split on 100 frames at s = 0.2 puts frames 0..19 in train") {
    StreamSet s;
    for (int i = 0; i < 100; ++i) s.labels.push_back({static_cast<double>(i), {0, 0}});
    const auto f = split_temporal_frames(s, 0.2);
    REQUIRE(f.train.labels.size() == 20);
    CHECK(f.train.labels.back().t == 19.0);
    CHECK(f.test.labels.front().t == 20.0);
  }

  TEST_CASE("temporal split at s = 0.6 keeps 60% of all frames in train, all before test") {
    const auto s = regular_streams(100.0, 0.5);
    const auto f = split_temporal_frames(s, 0.6);
    CHECK(f.train.frame_count() == static_cast<std::size_t>(0.6 * static_cast<double>(s.frame_count())));
    double train_max = -1.0, test_min = 1e9;
    for (const auto& x : f.train.beam) train_max = std::max(train_max, x.t);
    for (const auto& x : f.train.csi) train_max = std::max(train_max, x.t);
    for (const auto& x : f.train.labels) train_max = std::max(train_max, x.t);
    for (const auto& x : f.test.beam) test_min = std::min(test_min, x.t);
    for (const auto& x : f.test.csi) test_min = std::min(test_min, x.t);
    for (const auto& x : f.test.labels) test_min = std::min(test_min, x.t);
    CHECK(train_max < test_min);
  }

  TEST_CASE("temporal split rejects s outside (0, 1) and an empty test side") {
    const auto s = regular_streams(10.0, 0.5);
    CHECK_THROWS_AS(split_temporal_frames(s, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(split_temporal_frames(s, 1.0), std::invalid_argument);
    StreamSet same;
    for (int i = 0; i < 10; ++i) same.labels.push_back({3.0, {0.0, 0.0}});
    CHECK_THROWS_AS(split_temporal_frames(same, 0.5), std::invalid_argument);
  }

  TEST_CASE("temporal windows use their own steps and never cross the cutoff") {
    const auto s = regular_streams(100.0, 0.25);
    const auto t = split_temporal(s, 0.6, 5.0, 1.0, 5.0, 0.0, 100.0);
    CHECK(t.train.windows.size() > t.test.windows.size());
    for (const auto& w : t.train.windows) CHECK(w.start + 5.0 <= t.frames.cutoff + 1e-9);
    for (const auto& w : t.test.windows) CHECK(w.start >= t.frames.cutoff);
    CHECK(t.train.windows[1].start - t.train.windows[0].start == doctest::Approx(1.0));
    CHECK(t.test.windows[1].start - t.test.windows[0].start == doctest::Approx(5.0));
  }

  TEST_CASE("coordinate split sends windows touching the region to test") {
    const Box corner{4.5, 3.0, 6.5, 4.5};
    std::vector<MeasurementWindow> ws{window_with_labels(0, {{1, 1}, {2, 1}}),
                                      window_with_labels(1, {{4.0, 3.5}, {4.6, 3.5}}),  // straddles the edge
                                      window_with_labels(2, {{5, 4}, {6, 4}})};
    const auto s = split_coordinate(ws, corner);
    CHECK(ids(s.train) == std::set<std::int64_t>{0});
    CHECK(ids(s.test) == std::set<std::int64_t>{1, 2});
    for (const auto& w : s.train) {
      for (const auto& l : w.labels) CHECK_FALSE(corner.contains(l.xy));
    }
  }

  TEST_CASE("region with no data keeps everything in train") {
    std::vector<MeasurementWindow> ws{window_with_labels(0, {{1, 1}}), window_with_labels(1, {{2, 2}})};
    const auto s = split_coordinate(ws, Box{10, 10, 11, 11});
    CHECK(s.train.size() == 2);
    CHECK(s.test.empty());
  }

  TEST_CASE("region covering all data is rejected") {
    std::vector<MeasurementWindow> ws{window_with_labels(0, {{1, 1}}), window_with_labels(1, {{2, 2}})};
    CHECK_THROWS_AS(split_coordinate(ws, Box{0, 0, 3, 3}), std::invalid_argument);
  }

  TEST_CASE("split spec validation") {
    SplitSpec s;
    s.ratios = {0.5, 0.2, 0.2};
    CHECK_THROWS_AS(s.validate(), std::invalid_argument);
    s.kind = SplitKind::Temporal;
    s.cutoff_fraction = 1.0;
    CHECK_THROWS_AS(s.validate(), std::invalid_argument);
    s.kind = SplitKind::Coordinate;
    s.region = {1, 1, 1, 2};
    CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  }
}
