#include "ndf/ndf.h"

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <exception>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "ndf/csi_frontend.hpp"
#include "ndf/dataset_io.hpp"
#include "ndf/errors.hpp"
#include "ndf/estimator.hpp"
#include "ndf/ode_core.hpp"
#include "ndf/plot.hpp"
#include "ndf/synthetic_testbed.hpp"
#include "ndf/trainer.hpp"

namespace fs = std::filesystem;
using ndf::json;

struct ndf_dataset {
  ndf::Dataset ds;
  bool raw_embedded = false;
};

struct ndf_model {
  ndf::TrainedModel m;
};

namespace {

thread_local std::string g_last_error;
ndf_log_fn g_log = nullptr;
void* g_log_user = nullptr;

void log_line(const json& j) {
  if (g_log != nullptr) g_log(j.dump().c_str(), g_log_user);
}

template <class F>
int guard(F&& f) {
  g_last_error.clear();
  try {
    return f();
  } catch (const ndf::ode::SolverError& e) {
    g_last_error = e.what();
    return NDF_ERR_SOLVER;
  } catch (const ndf::NumericError& e) {
    g_last_error = e.what();
    return NDF_ERR_NUMERIC;
  } catch (const ndf::IoError& e) {
    g_last_error = e.what();
    return NDF_ERR_IO;
  } catch (const fs::filesystem_error& e) {
    g_last_error = e.what();
    return NDF_ERR_IO;
  } catch (const std::invalid_argument& e) {
    g_last_error = e.what();
    return NDF_ERR_INVALID_ARGUMENT;
  } catch (const json::exception& e) {
    g_last_error = e.what();
    return NDF_ERR_INVALID_ARGUMENT;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return NDF_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown error";
    return NDF_ERR_INTERNAL;
  }
}

char* dup(const std::string& s) {
  auto* p = static_cast<char*>(std::malloc(s.size() + 1));
  if (p == nullptr) throw std::bad_alloc();
  std::memcpy(p, s.c_str(), s.size() + 1);
  return p;
}

void put(char** out, const json& j) {
  if (out != nullptr) *out = dup(j.dump());
}

json parse_or_empty(const char* text) {
  if (text == nullptr || *text == '\0') return json::object();
  json j = json::parse(text);
  if (!j.is_object()) throw std::invalid_argument("expected a JSON object");
  return j;
}

void require(const void* p, const char* what) {
  if (p == nullptr) throw std::invalid_argument(std::string(what) + " is null");
}

std::string read_text(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw ndf::IoError("cannot open " + file.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::vector<ndf::csi::RawCsiFrame> raw_split(const fs::path& dir, const std::string& split) {
  const fs::path file = ndf::raw_csi_file(dir, split);
  if (!fs::exists(file)) throw ndf::IoError("no raw CSI for split " + split + " (" + file.string() + ")");
  return ndf::read_raw_csi(file);
}

std::vector<ndf::Mat> calibrated(const std::vector<ndf::csi::RawCsiFrame>& frames, double f_delta) {
  std::vector<ndf::Mat> out;
  out.reserve(frames.size());
  for (const auto& f : frames) out.push_back(ndf::csi::calibrate_to_real(f, f_delta));
  return out;
}

}  // namespace

extern "C" {

const char* ndf_version(void) { return NDF_VERSION_STRING; }

const char* ndf_status_string(int status) {
  switch (status) {
    case NDF_OK: return "ok";
    case NDF_ERR_INVALID_ARGUMENT: return "invalid argument";
    case NDF_ERR_IO: return "i/o error";
    case NDF_ERR_NUMERIC: return "numeric error";
    case NDF_ERR_SOLVER: return "solver error";
    case NDF_ERR_INTERNAL: return "internal error";
    default: return "unknown status";
  }
}

const char* ndf_last_error(void) { return g_last_error.c_str(); }

void ndf_string_free(char* s) { std::free(s); }

void ndf_set_log_callback(ndf_log_fn fn, void* user) {
  g_log = fn;
  g_log_user = user;
}

int ndf_simulate(const char* scenario_json, const char* out_dir, char** summary_json) {
  return guard([&] {
    require(out_dir, "out_dir");
    const ndf::sim::Scenario s = ndf::sim::scenario_from_json(parse_or_empty(scenario_json));
    const auto sum = ndf::sim::build_dataset(s, out_dir);
    put(summary_json, {{"windows", sum.windows},
                       {"train", sum.train},
                       {"val", sum.val},
                       {"test", sum.test},
                       {"dropped", sum.dropped},
                       {"cutoff", sum.cutoff},
                       {"split_kind", ndf::to_string(s.split.kind)},
                       {"raw_csi", s.raw_csi},
                       {"seed", s.seed}});
    return NDF_OK;
  });
}

int ndf_dataset_open(const char* dir, const char* split, ndf_dataset** out) {
  return guard([&] {
    require(dir, "dir");
    require(split, "split");
    require(out, "out");
    *out = nullptr;
    auto ds = std::make_unique<ndf_dataset>();
    ds->ds = ndf::load_dataset(dir, split);
    *out = ds.release();
    return NDF_OK;
  });
}

void ndf_dataset_free(ndf_dataset* ds) { delete ds; }

int ndf_dataset_window_count(const ndf_dataset* ds, size_t* out) {
  return guard([&] {
    require(ds, "dataset");
    require(out, "out");
    *out = ds->ds.windows().size();
    return NDF_OK;
  });
}

int ndf_dataset_info(const ndf_dataset* ds, char** info_json) {
  return guard([&] {
    require(ds, "dataset");
    const auto& h = ds->ds.header;
    put(info_json, {{"dir", ds->ds.dir.string()},
                    {"split", h.split},
                    {"split_kind", h.split_kind},
                    {"windows", ds->ds.windows().size()},
                    {"dropped", ds->ds.windowing.dropped},
                    {"config", ndf::to_json(h.config)},
                    {"raw_csi_embedded", ds->raw_embedded}});
    return NDF_OK;
  });
}

int ndf_dataset_embed_raw_csi(ndf_dataset* ds, const char* cae_dir) {
  return guard([&] {
    require(ds, "dataset");
    require(cae_dir, "cae_dir");
    const auto cae = ndf::csi::Cae::load(cae_dir);
    ndf::embed_raw_csi(ds->ds, raw_split(ds->ds.dir, ds->ds.header.split), cae);
    ds->raw_embedded = true;
    return NDF_OK;
  });
}

int ndf_model_create(const char* model_json, ndf_model** out) {
  return guard([&] {
    require(out, "out");
    *out = nullptr;
    auto m = std::make_unique<ndf_model>();
    m->m.estimator = ndf::make_estimator(parse_or_empty(model_json));
    *out = m.release();
    return NDF_OK;
  });
}

int ndf_model_load(const char* checkpoint_dir, ndf_model** out) {
  return guard([&] {
    require(checkpoint_dir, "checkpoint_dir");
    require(out, "out");
    *out = nullptr;
    auto m = std::make_unique<ndf_model>();
    m->m = ndf::load_checkpoint(checkpoint_dir);
    *out = m.release();
    return NDF_OK;
  });
}

int ndf_model_save(const ndf_model* model, const char* checkpoint_dir) {
  return guard([&] {
    require(model, "model");
    require(checkpoint_dir, "checkpoint_dir");
    ndf::save_checkpoint(model->m, checkpoint_dir);
    return NDF_OK;
  });
}

void ndf_model_free(ndf_model* model) { delete model; }

int ndf_model_info(const ndf_model* model, char** info_json) {
  return guard([&] {
    require(model, "model");
    const auto& m = model->m;
    put(info_json, {{"kind", m.estimator->kind()},
                    {"config", m.estimator->config()},
                    {"parameters", m.estimator->params().scalar_count()},
                    {"provenance", m.provenance},
                    {"epoch", m.epoch},
                    {"metrics", m.metrics}});
    return NDF_OK;
  });
}

int ndf_train(ndf_model* model, const ndf_dataset* train, const ndf_dataset* val, const char* train_json,
              const char* out_dir, char** summary_json) {
  return guard([&] {
    require(model, "model");
    require(train, "train dataset");
    require(out_dir, "out_dir");
    const json opts = parse_or_empty(train_json);
    if (opts.value("csi_source", std::string("embedding")) == "raw") {
      if (!train->raw_embedded || (val != nullptr && !val->raw_embedded)) {
        throw std::invalid_argument("training on raw CSI needs a pretrained CSI autoencoder");
      }
    }
    const ndf::TrainConfig cfg = ndf::train_config_from_json(opts);
    static const std::vector<ndf::MeasurementWindow> kNone;
    const auto r = ndf::train(model->m, train->ds.windows(), val != nullptr ? val->ds.windows() : kNone, cfg,
                              [](const ndf::EpochRecord& e) {
                                log_line({{"event", "epoch"},
                                          {"epoch", e.epoch},
                                          {"train_loss", e.train_loss},
                                          {"val_loss", e.val_loss},
                                          {"val_coord", e.val_coord},
                                          {"lr", e.lr}});
                              });
    const fs::path dir(out_dir);
    ndf::write_text_file(dir / "losses.csv", ndf::losses_csv(r));
    ndf::save_checkpoint(model->m, dir / "checkpoint");
    put(summary_json, {{"best_epoch", r.best_epoch},
                       {"best_val", std::isfinite(r.best_val) ? json(r.best_val) : json(nullptr)},
                       {"epochs_run", static_cast<int>(r.history.size()) - 1},
                       {"max_lr_seen", r.max_lr_seen},
                       {"aborted", r.aborted},
                       {"abort_reason", r.abort_reason},
                       {"checkpoint", (dir / "checkpoint").string()},
                       {"train_config", ndf::to_json(cfg)}});
    if (r.aborted) {
      g_last_error = "training stopped: " + r.abort_reason + "; best checkpoint kept";
      return NDF_ERR_NUMERIC;
    }
    return NDF_OK;
  });
}

int ndf_evaluate(const ndf_model* model, const ndf_dataset* test, const char* out_dir, char** report_json) {
  return guard([&] {
    require(model, "model");
    require(test, "test dataset");
    const auto r = ndf::evaluate(model->m, test->ds.windows(), test->ds.header.split);
    const json j = ndf::to_json(r);
    if (out_dir != nullptr) {
      const fs::path dir(out_dir);
      ndf::write_text_file(dir / "report.json", j.dump(2) + "\n");
      ndf::write_text_file(dir / "predictions.csv", ndf::predictions_csv(r));
    }
    put(report_json, j);
    return NDF_OK;
  });
}

int ndf_search(const char* model_json, const ndf_dataset* train, const ndf_dataset* val, const char* search_json,
               const char* out_dir, char** result_json) {
  return guard([&] {
    require(train, "train dataset");
    require(val, "val dataset");
    const json opts = parse_or_empty(search_json);
    ndf::SearchConfig cfg;
    cfg.trials = opts.value("trials", cfg.trials);
    cfg.epochs = opts.value("epochs", cfg.epochs);
    cfg.seed = opts.value("seed", cfg.seed);
    cfg.train = ndf::train_config_from_json(opts.value("train", json::object()));
    const auto r = ndf::search_hyperparams(parse_or_empty(model_json), train->ds.windows(), val->ds.windows(), cfg,
                                           [](const ndf::SearchTrial& t) {
                                             log_line({{"event", "trial"},
                                                       {"trial", t.index},
                                                       {"lambda", t.lambda},
                                                       {"val_coord", t.val_coord},
                                                       {"best_so_far", t.best_so_far}});
                                           });
    const auto& best = r.trials[static_cast<std::size_t>(r.best_index)];
    const json j = {{"best_trial", r.best_index},
                    {"loss", {{"lambda1", r.best_lambda[0]},
                              {"lambda2", r.best_lambda[1]},
                              {"lambda3", r.best_lambda[2]},
                              {"lambda4", r.best_lambda[3]}}},
                    {"val_coord", std::isfinite(best.val_coord) ? json(best.val_coord) : json(nullptr)},
                    {"trials", r.trials.size()},
                    {"epochs", cfg.epochs}};
    if (out_dir != nullptr) {
      const fs::path dir(out_dir);
      ndf::write_text_file(dir / "search.csv", ndf::search_csv(r));
      ndf::write_text_file(dir / "best.json", j.dump(2) + "\n");
    }
    put(result_json, j);
    return NDF_OK;
  });
}

int ndf_export_latents(const ndf_model* model, const ndf_dataset* ds, const char* regions_json, const char* out_path,
                       char** summary_json) {
  return guard([&] {
    require(model, "model");
    require(ds, "dataset");
    require(out_path, "out_path");
    std::vector<ndf::Region> regions;
    if (regions_json != nullptr) {
      regions = ndf::regions_from_json(json::parse(regions_json));
    } else {
      ndf::sim::TrackSpec track;
      const fs::path scenario = ds->ds.dir / "scenario.json";
      if (fs::exists(scenario)) track = ndf::sim::scenario_from_json(ndf::read_json_file(scenario)).track;
      regions = ndf::track_regions(track.x_min, track.y_min, track.x_max, track.y_max);
    }
    const auto e = ndf::export_latents(model->m, ds->ds.windows(), regions);
    ndf::write_latents(out_path, e);
    put(summary_json, {{"rows", e.rows.size()}, {"counts", e.counts}, {"warnings", e.warnings}});
    return NDF_OK;
  });
}

int ndf_pretrain_cae(const char* dataset_dir, const char* options_json, const char* out_dir, char** summary_json) {
  return guard([&] {
    require(dataset_dir, "dataset_dir");
    require(out_dir, "out_dir");
    const json opts = parse_or_empty(options_json);
    const fs::path dir(dataset_dir);
    const auto header = ndf::read_split(ndf::split_file(dir, "train")).header;
    const double f_delta = header.config.f_delta;
    const auto train = calibrated(raw_split(dir, "train"), f_delta);
    std::vector<ndf::Mat> heldout;
    if (fs::exists(ndf::raw_csi_file(dir, "val"))) heldout = calibrated(raw_split(dir, "val"), f_delta);
    if (train.empty()) throw std::invalid_argument("pretrain-cae: no raw CSI frames in the training split");

    ndf::csi::CaeConfig cc;
    cc.rows = static_cast<int>(train.front().rows());
    cc.embed_dim = opts.value("embed_dim", header.config.m_c);
    ndf::csi::CaeTrainConfig tc;
    tc.epochs = opts.value("epochs", tc.epochs);
    tc.batch_size = opts.value("batch_size", tc.batch_size);
    tc.learning_rate = opts.value("learning_rate", tc.learning_rate);
    tc.seed = opts.value("seed", tc.seed);
    const std::size_t limit = opts.value("max_frames", std::size_t{0});
    std::vector<ndf::Mat> used = train;
    if (limit > 0 && used.size() > limit) used.resize(limit);

    auto cae = ndf::csi::Cae::create(cc, tc.seed);
    const auto r = ndf::csi::pretrain_cae(cae, used, heldout, tc);
    cae.training_record = json{{"epochs", tc.epochs},
                               {"batch_size", tc.batch_size},
                               {"learning_rate", tc.learning_rate},
                               {"seed", tc.seed},
                               {"frames", used.size()},
                               {"dataset", dir.string()}}
                              .dump();
    cae.save(out_dir);
    for (std::size_t i = 0; i < r.epoch_train_mse.size(); ++i) {
      log_line({{"event", "cae_epoch"}, {"epoch", i + 1}, {"train_mse", r.epoch_train_mse[i]}});
    }
    put(summary_json, {{"frames", used.size()},
                       {"heldout_frames", heldout.size()},
                       {"initial_heldout_mse", r.initial_heldout_mse},
                       {"final_heldout_mse", r.final_heldout_mse},
                       {"epoch_train_mse", r.epoch_train_mse}});
    return NDF_OK;
  });
}

int ndf_plot(const char* kind, const char* inputs_json, const char* out_path) {
  return guard([&] {
    require(kind, "kind");
    require(out_path, "out_path");
    const json in = parse_or_empty(inputs_json);
    const auto files = in.value("files", std::vector<std::string>{});
    const auto labels = in.value("labels", std::vector<std::string>{});
    if (files.empty()) throw std::invalid_argument("plot: no input files");
    const std::string k(kind);
    std::string svg;
    if (k == "trajectory") {
      const auto points = ndf::plot::read_predictions_csv(read_text(files.front()));
      svg = ndf::plot::trajectory_svg(points, in.value("t_from", -1e300), in.value("t_to", 1e300));
    } else if (k == "cdf") {
      std::vector<ndf::plot::Series> series;
      for (std::size_t i = 0; i < files.size(); ++i) {
        const json report = ndf::read_json_file(files[i]);
        const std::string label = i < labels.size() ? labels[i] : report.value("method", files[i]);
        series.push_back({label, report.at("errors").get<std::vector<double>>()});
      }
      svg = ndf::plot::error_cdf_svg(series);
    } else if (k == "latent") {
      svg = ndf::plot::latent_svg(ndf::read_latents(files.front()));
    } else {
      throw std::invalid_argument("plot: unknown kind " + k);
    }
    ndf::write_text_file(out_path, svg);
    return NDF_OK;
  });
}

}  // extern "C"
