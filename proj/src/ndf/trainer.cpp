#include "ndf/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "ndf/errors.hpp"
#include "ndf/ndf_model.hpp"
#include "ndf/optim.hpp"
#include "ndf/rng.hpp"

namespace ndf {

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

void shuffle(std::vector<std::size_t>& order, std::mt19937_64& rng) {
  for (std::size_t i = order.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng() % i);
    std::swap(order[i - 1], order[j]);
  }
}

double unit_draw(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

std::string selection_name(Selection s) { return s == Selection::TotalLoss ? "total" : "coord"; }

Selection selection_from_string(const std::string& s) {
  if (s == "total") return Selection::TotalLoss;
  if (s == "coord") return Selection::CoordLoss;
  throw std::invalid_argument("unknown checkpoint selection: " + s);
}

}  // namespace

void TrainConfig::validate() const {
  if (batch_size <= 0) throw std::invalid_argument("train: batch size must be positive");
  if (epochs < 0) throw std::invalid_argument("train: epochs must be non-negative");
  if (!(max_lr >= 0.0) || !std::isfinite(max_lr)) throw std::invalid_argument("train: max_lr must be finite and >= 0");
  if (!(pct_start > 0.0 && pct_start < 1.0)) throw std::invalid_argument("train: pct_start must lie in (0, 1)");
  if (!(div_factor > 0.0) || !(final_div_factor > 0.0)) throw std::invalid_argument("train: div factors must be > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw std::invalid_argument("train: betas must lie in [0, 1)");
  }
  if (samples <= 0) throw std::invalid_argument("train: samples must be positive");
}

json to_json(const TrainConfig& c) {
  return {{"batch_size", c.batch_size},   {"epochs", c.epochs},
          {"max_lr", c.max_lr},           {"pct_start", c.pct_start},
          {"div_factor", c.div_factor},   {"final_div_factor", c.final_div_factor},
          {"beta1", c.beta1},             {"beta2", c.beta2},
          {"samples", c.samples},         {"checkpoint_best", c.checkpoint_best},
          {"select_on", selection_name(c.select_on)}, {"seed", c.seed}};
}

TrainConfig train_config_from_json(const json& j, TrainConfig c) {
  c.batch_size = j.value("batch_size", c.batch_size);
  c.epochs = j.value("epochs", c.epochs);
  c.max_lr = j.value("max_lr", c.max_lr);
  c.pct_start = j.value("pct_start", c.pct_start);
  c.div_factor = j.value("div_factor", c.div_factor);
  c.final_div_factor = j.value("final_div_factor", c.final_div_factor);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.samples = j.value("samples", c.samples);
  c.checkpoint_best = j.value("checkpoint_best", c.checkpoint_best);
  if (j.contains("select_on")) c.select_on = selection_from_string(j["select_on"].get<std::string>());
  c.seed = j.value("seed", c.seed);
  c.validate();
  return c;
}

std::pair<double, double> mean_loss(const Estimator& est, const std::vector<MeasurementWindow>& prepared) {
  if (prepared.empty()) return {0.0, 0.0};
  ad::Tape tape(&est.params());
  double total = 0.0;
  double coord = 0.0;
  for (const auto& w : prepared) {
    tape.reset();
    const WindowLoss l = est.window_loss(tape, w, nullptr);
    total += l.total.scalar();
    coord += l.coord;
  }
  const auto n = static_cast<double>(prepared.size());
  return {total / n, coord / n};
}

TrainResult train(TrainedModel& model, const std::vector<MeasurementWindow>& train_raw,
                  const std::vector<MeasurementWindow>& val_raw, const TrainConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  if (!model.estimator) throw std::invalid_argument("train: empty model");
  if (train_raw.empty()) throw std::invalid_argument("train: empty training split");
  Estimator& est = *model.estimator;

  model.scaler = fit_measurement_scaler(train_raw);
  Eigen::Vector2d label_mean = Eigen::Vector2d::Zero();
  std::size_t n_labels = 0;
  for (const auto& w : train_raw) {
    for (const auto& l : w.labels) label_mean += l.xy;
    n_labels += w.labels.size();
  }
  if (n_labels == 0) throw std::invalid_argument("train: training split has no labels");
  est.set_output_bias(label_mean / static_cast<double>(n_labels));

  const auto train_set = model.prepare(train_raw);
  const auto val_set = model.prepare(val_raw);
  const bool has_val = !val_set.empty();

  const auto n = train_set.size();
  const auto batches = static_cast<std::int64_t>((n + static_cast<std::size_t>(cfg.batch_size) - 1) /
                                                 static_cast<std::size_t>(cfg.batch_size));
  OneCycle schedule{cfg.max_lr, std::max<std::int64_t>(1, batches * cfg.epochs), cfg.pct_start, cfg.div_factor,
                    cfg.final_div_factor};
  Adamax opt(est.params(), cfg.beta1, cfg.beta2);
  GradStore grads(est.params());
  ad::Tape tape(&est.params());

  TrainResult result;
  auto selection_value = [&](const EpochRecord& r) {
    return cfg.select_on == Selection::TotalLoss ? r.val_loss : r.val_coord;
  };
  auto validate_epoch = [&](EpochRecord& r) {
    const auto [vl, vc] = mean_loss(est, has_val ? val_set : train_set);
    r.val_loss = vl;
    r.val_coord = vc;
    if (!std::isfinite(vl)) throw NumericError("validation loss is not finite");
  };

  std::vector<double> best_params;
  try {
    EpochRecord first;
    first.train_loss = mean_loss(est, train_set).first;
    validate_epoch(first);
    result.history.push_back(first);
    result.best_epoch = 0;
    result.best_val = selection_value(first);
    best_params = est.params().flatten();
    if (on_epoch) on_epoch(first);

    std::vector<std::size_t> order(n);
    std::int64_t step = 0;
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
      std::iota(order.begin(), order.end(), 0);
      auto shuffle_rng = make_rng(cfg.seed, {kTagShuffle, static_cast<std::uint64_t>(epoch)});
      shuffle(order, shuffle_rng);

      EpochRecord rec;
      rec.epoch = epoch;
      double loss_sum = 0.0;
      for (std::size_t b0 = 0; b0 < n; b0 += static_cast<std::size_t>(cfg.batch_size)) {
        const std::size_t b1 = std::min(n, b0 + static_cast<std::size_t>(cfg.batch_size));
        grads.zero();
        for (std::size_t k = b0; k < b1; ++k) {
          const auto& w = train_set[order[k]];
          for (int s = 0; s < cfg.samples; ++s) {
            auto eps_rng = make_rng(cfg.seed, {kTagEpsilon, static_cast<std::uint64_t>(epoch),
                                               static_cast<std::uint64_t>(w.id), static_cast<std::uint64_t>(s)});
            tape.reset();
            const WindowLoss l = est.window_loss(tape, w, &eps_rng);
            const double v = l.total.scalar();
            if (!std::isfinite(v)) throw NumericError("training loss is not finite");
            loss_sum += v;
            tape.backward(l.total, grads);
          }
        }
        grads.scale(1.0 / static_cast<double>((b1 - b0) * static_cast<std::size_t>(cfg.samples)));
        if (!grads.all_finite()) throw NumericError("gradient is not finite");
        rec.lr = schedule.lr(step);
        result.max_lr_seen = std::max(result.max_lr_seen, rec.lr);
        opt.step(est.params(), grads, rec.lr);
        ++step;
      }
      rec.train_loss = loss_sum / static_cast<double>(n * static_cast<std::size_t>(cfg.samples));
      validate_epoch(rec);
      result.history.push_back(rec);
      if (selection_value(rec) < result.best_val) {
        result.best_val = selection_value(rec);
        result.best_epoch = epoch;
        best_params = est.params().flatten();
      }
      if (on_epoch) on_epoch(rec);
    }
  } catch (const NumericError& e) {
    result.aborted = true;
    result.abort_reason = e.what();
  } catch (...) {
    if (!best_params.empty()) est.params().unflatten(best_params);
    throw;
  }

  if (result.aborted || cfg.checkpoint_best) {
    if (!best_params.empty()) est.params().unflatten(best_params);
    model.epoch = result.best_epoch;
  } else {
    model.epoch = result.history.back().epoch;
  }
  model.provenance = "trained";
  model.metrics = {{"best_epoch", result.best_epoch},
                   {"best_val", finite_or_null(result.best_val)},
                   {"selection", selection_name(cfg.select_on)},
                   {"epochs_run", static_cast<int>(result.history.size()) - 1},
                   {"aborted", result.aborted}};
  return result;
}

std::string losses_csv(const TrainResult& r) {
  std::ostringstream os;
  os << "epoch,train_loss,val_loss,val_coord,lr\n";
  for (const auto& e : r.history) {
    os << e.epoch << ',' << fmt(e.train_loss) << ',' << fmt(e.val_loss) << ',' << fmt(e.val_coord) << ','
       << fmt(e.lr) << '\n';
  }
  return os.str();
}

// ---------------------------------------------------------------- metrics

double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw std::invalid_argument("percentile: empty sample");
  if (!(q >= 0.0 && q <= 1.0)) throw std::invalid_argument("percentile: q must lie in [0, 1]");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const double frac = pos - static_cast<double>(lo);
  if (lo + 1 >= values.size() || frac == 0.0) return values[lo];
  return values[lo] + frac * (values[lo + 1] - values[lo]);
}

ErrorStats error_stats(const std::vector<double>& errors) {
  if (errors.empty()) throw std::invalid_argument("error_stats: empty error list");
  std::vector<double> sorted = errors;
  std::sort(sorted.begin(), sorted.end());
  ErrorStats s;
  // Summed in sorted order so the mean does not depend on input order.
  s.mean = std::accumulate(sorted.begin(), sorted.end(), 0.0) / static_cast<double>(sorted.size());
  s.median = percentile(sorted, 0.5);
  s.cdf90 = percentile(sorted, 0.9);
  return s;
}

EvalReport evaluate(const TrainedModel& model, const std::vector<MeasurementWindow>& windows,
                    const std::string& split) {
  if (!model.estimator) throw std::invalid_argument("evaluate: empty model");
  if (windows.empty()) throw std::invalid_argument("evaluate: empty test set");
  EvalReport r;
  r.method = model.estimator->kind();
  r.split = split;
  r.provenance = model.provenance;
  for (const auto& w : windows) {
    const auto pred = model.estimator->predict(model.prepare(w));
    for (std::size_t n = 0; n < w.labels.size(); ++n) {
      PointEstimate p;
      p.window_id = w.id;
      p.t = w.labels[n].t;
      p.truth = w.labels[n].xy;
      p.estimate = pred[n];
      r.errors.push_back((p.estimate - p.truth).norm());
      r.points.push_back(p);
    }
  }
  if (r.errors.empty()) throw std::invalid_argument("evaluate: test set has no labels");
  r.stats = error_stats(r.errors);
  return r;
}

json to_json(const EvalReport& r) {
  return {{"method", r.method},       {"split", r.split},           {"provenance", r.provenance},
          {"count", r.errors.size()}, {"mean", r.stats.mean},       {"median", r.stats.median},
          {"cdf90", r.stats.cdf90},   {"errors", r.errors}};
}

std::string predictions_csv(const EvalReport& r) {
  std::ostringstream os;
  os << "window_id,t,x,y,x_hat,y_hat,error\n";
  for (std::size_t i = 0; i < r.points.size(); ++i) {
    const auto& p = r.points[i];
    os << p.window_id << ',' << fmt(p.t) << ',' << fmt(p.truth.x()) << ',' << fmt(p.truth.y()) << ','
       << fmt(p.estimate.x()) << ',' << fmt(p.estimate.y()) << ',' << fmt(r.errors[i]) << '\n';
  }
  return os.str();
}

// ---------------------------------------------------------------- search

void SearchConfig::validate() const {
  if (trials < 1) throw std::invalid_argument("search: budget must be at least one trial");
  if (epochs < 0) throw std::invalid_argument("search: epochs must be non-negative");
  train.validate();
}

SearchResult search_hyperparams(const json& model_cfg, const std::vector<MeasurementWindow>& train_raw,
                                const std::vector<MeasurementWindow>& val_raw, const SearchConfig& cfg,
                                const TrialCallback& on_trial) {
  cfg.validate();
  if (model_cfg.value("kind", std::string("ndf")) != "ndf") {
    throw std::invalid_argument("search: loss weights only apply to the ndf model");
  }
  auto rng = make_rng(cfg.seed, {kTagSearch});
  SearchResult out;
  double best = std::numeric_limits<double>::infinity();
  for (int i = 0; i < cfg.trials; ++i) {
    SearchTrial trial;
    trial.index = i;
    for (auto& l : trial.lambda) l = unit_draw(rng);
    json mc = model_cfg;
    mc["kind"] = "ndf";
    json loss = mc.value("loss", json::object());
    loss["lambda1"] = trial.lambda[0];
    loss["lambda2"] = trial.lambda[1];
    loss["lambda3"] = trial.lambda[2];
    loss["lambda4"] = trial.lambda[3];
    mc["loss"] = loss;

    TrainedModel m;
    m.estimator = make_estimator(mc);
    TrainConfig tc = cfg.train;
    tc.epochs = cfg.epochs;
    tc.select_on = Selection::CoordLoss;
    const TrainResult tr = train(m, train_raw, val_raw, tc);
    trial.val_coord = tr.aborted && tr.best_epoch == 0 ? std::numeric_limits<double>::infinity() : tr.best_val;
    if (trial.val_coord < best || i == 0) {
      best = trial.val_coord;
      out.best_index = i;
      out.best_lambda = trial.lambda;
    }
    trial.best_so_far = best;
    out.trials.push_back(trial);
    if (on_trial) on_trial(trial);
  }
  return out;
}

std::string search_csv(const SearchResult& r) {
  std::ostringstream os;
  os << "trial,lambda1,lambda2,lambda3,lambda4,val_coord,best_so_far\n";
  for (const auto& t : r.trials) {
    os << t.index;
    for (double l : t.lambda) os << ',' << fmt(l);
    os << ',' << fmt(t.val_coord) << ',' << fmt(t.best_so_far) << '\n';
  }
  return os.str();
}

// ---------------------------------------------------------------- latent export

std::vector<Region> track_regions(double x_min, double y_min, double x_max, double y_max, double hw) {
  if (!(x_max > x_min) || !(y_max > y_min) || !(hw > 0.0)) throw std::invalid_argument("track_regions: bad track");
  auto box = [hw](double cx, double cy) { return Box{cx - hw, cy - hw, cx + hw, cy + hw}; };
  const double mx = 0.5 * (x_min + x_max);
  const double my = 0.5 * (y_min + y_max);
  return {{"sw", box(x_min, y_min)}, {"s", box(mx, y_min)}, {"se", box(x_max, y_min)}, {"e", box(x_max, my)},
          {"ne", box(x_max, y_max)}, {"n", box(mx, y_max)}, {"nw", box(x_min, y_max)}, {"w", box(x_min, my)}};
}

json regions_to_json(const std::vector<Region>& regions) {
  json a = json::array();
  for (std::size_t i = 0; i < regions.size(); ++i) {
    const auto& r = regions[i];
    a.push_back({{"id", i}, {"name", r.name}, {"box", {r.box.x_min, r.box.y_min, r.box.x_max, r.box.y_max}}});
  }
  return a;
}

std::vector<Region> regions_from_json(const json& j) {
  std::vector<Region> out;
  for (const auto& r : j) {
    const auto& b = r.at("box");
    if (!b.is_array() || b.size() != 4) throw std::invalid_argument("region box must be [x_min, y_min, x_max, y_max]");
    Region reg{r.value("name", "r" + std::to_string(out.size())),
               Box{b[0].get<double>(), b[1].get<double>(), b[2].get<double>(), b[3].get<double>()}};
    if (reg.box.degenerate()) throw std::invalid_argument("region " + reg.name + " is degenerate");
    out.push_back(reg);
  }
  return out;
}

LatentExport export_latents(const TrainedModel& model, const std::vector<MeasurementWindow>& windows,
                            const std::vector<Region>& regions) {
  const auto* ndf = dynamic_cast<const model::NdfModel*>(model.estimator.get());
  if (ndf == nullptr) throw std::invalid_argument("export_latents: model has no fused latent states");
  LatentExport e;
  e.regions = regions;
  e.counts.assign(regions.size(), 0);
  for (const auto& w : windows) {
    std::vector<int> region_of(w.labels.size(), -1);
    bool any = false;
    for (std::size_t n = 0; n < w.labels.size(); ++n) {
      for (std::size_t r = 0; r < regions.size(); ++r) {
        if (regions[r].box.contains(w.labels[n].xy)) {
          region_of[n] = static_cast<int>(r);
          any = true;
          break;
        }
      }
    }
    if (!any) continue;
    const auto z = ndf->fused_latents(model.prepare(w));
    for (std::size_t n = 0; n < w.labels.size(); ++n) {
      if (region_of[n] < 0) continue;
      e.rows.push_back({w.id, w.labels[n].t, region_of[n], z[n]});
      ++e.counts[static_cast<std::size_t>(region_of[n])];
    }
  }
  for (std::size_t r = 0; r < regions.size(); ++r) {
    if (e.counts[r] == 0) e.warnings.push_back("region " + regions[r].name + " has no points");
  }
  return e;
}

void write_latents(const std::filesystem::path& file, const LatentExport& e) {
  json regions = regions_to_json(e.regions);
  for (std::size_t i = 0; i < e.regions.size(); ++i) regions[i]["count"] = e.counts[i];
  const json header = {{"format", "ndf-latents"},
                       {"version", 1},
                       {"dim", e.rows.empty() ? 0 : e.rows.front().z.size()},
                       {"rows", e.rows.size()},
                       {"regions", regions}};
  std::ostringstream os;
  os << header.dump() << '\n';
  for (const auto& r : e.rows) {
    os << json{{"window_id", r.window_id}, {"t", r.t}, {"band", "fused"}, {"region", r.region}, {"z", vec_to_json(r.z)}}
              .dump()
       << '\n';
  }
  write_text_file(file, os.str());
}

LatentExport read_latents(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot open " + file.string());
  std::string line;
  if (!std::getline(in, line)) throw IoError(file.string() + ": empty latent file");
  LatentExport e;
  try {
    const json header = json::parse(line);
    if (header.value("format", std::string()) != "ndf-latents") throw IoError(file.string() + ": not a latent export");
    e.regions = regions_from_json(header.at("regions"));
    e.counts.assign(e.regions.size(), 0);
    int lineno = 1;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      const json j = json::parse(line);
      LatentRow r{j.at("window_id").get<std::int64_t>(), j.at("t").get<double>(), j.at("region").get<int>(),
                  vec_from_json(j.at("z"))};
      if (r.region < 0 || static_cast<std::size_t>(r.region) >= e.regions.size()) {
        throw IoError(file.string() + ":" + std::to_string(lineno) + ": region out of range");
      }
      ++e.counts[static_cast<std::size_t>(r.region)];
      e.rows.push_back(std::move(r));
    }
  } catch (const json::exception& ex) {
    throw IoError(file.string() + ": " + ex.what());
  } catch (const std::invalid_argument& ex) {
    throw IoError(file.string() + ": " + ex.what());
  }
  return e;
}

}  // namespace ndf
