// ndf command-line tool: simulate, pretrain-cae, train, eval, baseline, search,
// export-latents, plot.
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ndf/ndf.h"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr int kUsageExit = 64;

struct Failure {
  int status;
};

void check(int status, const char* what) {
  if (status != NDF_OK) {
    std::cerr << "ndf: " << what << " failed (" << ndf_status_string(status) << "): " << ndf_last_error() << "\n";
    throw Failure{status};
  }
}

struct CString {
  char* p = nullptr;
  ~CString() { ndf_string_free(p); }
  json parse() const { return p != nullptr ? json::parse(p) : json(); }
};

struct DatasetPtr {
  ndf_dataset* p = nullptr;
  ~DatasetPtr() { ndf_dataset_free(p); }
};

struct ModelPtr {
  ndf_model* p = nullptr;
  ~ModelPtr() { ndf_model_free(p); }
};

json read_json(const std::string& file) {
  std::ifstream in(file);
  if (!in) {
    std::cerr << "ndf: cannot open " << file << "\n";
    throw Failure{NDF_ERR_IO};
  }
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    std::cerr << "ndf: " << file << ": " << e.what() << "\n";
    throw Failure{NDF_ERR_INVALID_ARGUMENT};
  }
}

void print(const json& j) { std::cout << j.dump(2) << "\n"; }

void log_to_stderr(const char* line, void*) { std::cerr << line << "\n"; }

// Options every subcommand shares.
struct Common {
  std::uint64_t seed = 0;
  std::string out_dir = "out";
  bool quiet = false;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--seed", c.seed, "Random seed")->capture_default_str();
  sub->add_option("--out-dir", c.out_dir, "Output directory")->capture_default_str();
  sub->add_flag("--quiet", c.quiet, "No progress lines on stderr");
}

void open_split(DatasetPtr& ds, const std::string& dir, const std::string& split, const std::string& cae) {
  check(ndf_dataset_open(dir.c_str(), split.c_str(), &ds.p), ("open " + split + " split").c_str());
  if (!cae.empty()) check(ndf_dataset_embed_raw_csi(ds.p, cae.c_str()), "embed raw CSI");
}

struct ModelOpts {
  std::string kind = "ndf";
  std::string json_file;
  std::string fusion;
  std::string cell;
  std::string bands;
  std::vector<double> lambda;

  void add(CLI::App* sub, bool with_kind) {
    if (with_kind) {
      sub->add_option("--kind", kind, "ndf | linear_int | nearest_int | rnn_decay | rnn_delta")->capture_default_str();
    }
    sub->add_option("--model-json", json_file, "Model configuration (JSON)");
    sub->add_option("--fusion", fusion, "mlp | pairwise | weighted");
    sub->add_option("--cell", cell, "gru | lstm");
    sub->add_option("--lambda", lambda, "Loss weights lambda1..lambda4")->expected(4);
  }

  json build(std::uint64_t seed) const {
    json j = json_file.empty() ? json::object() : read_json(json_file);
    if (!j.contains("kind")) j["kind"] = kind;
    if (!fusion.empty()) j["fusion"] = fusion;
    if (!cell.empty()) j["cell"] = cell;
    if (!bands.empty()) j["bands"] = bands;
    if (lambda.size() == 4) {
      j["loss"]["lambda1"] = lambda[0];
      j["loss"]["lambda2"] = lambda[1];
      j["loss"]["lambda3"] = lambda[2];
      j["loss"]["lambda4"] = lambda[3];
    }
    j["seed"] = seed;
    return j;
  }
};

struct TrainOpts {
  int epochs = 250;
  int batch = 32;
  double max_lr = 4e-3;
  int samples = 1;
  bool last = false;
  std::string cae;

  void add(CLI::App* sub) {
    sub->add_option("--epochs", epochs, "Training epochs")->capture_default_str();
    sub->add_option("--batch", batch, "Minibatch size")->capture_default_str();
    sub->add_option("--max-lr", max_lr, "Peak one-cycle learning rate")->capture_default_str();
    sub->add_option("--samples", samples, "Posterior draws per window")->capture_default_str();
    sub->add_flag("--keep-last", last, "Keep the final parameters instead of the best validation epoch");
    sub->add_option("--cae", cae, "Pretrained CSI autoencoder; replaces the CSI stream with embeddings of raw CSI");
  }

  json build(std::uint64_t seed) const {
    json j = {{"epochs", epochs}, {"batch_size", batch}, {"max_lr", max_lr},
              {"samples", samples}, {"checkpoint_best", !last}, {"seed", seed}};
    if (!cae.empty()) j["csi_source"] = "raw";
    return j;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-band neural ODE localization"};
  app.set_config("--config", "", "Read options from an INI/TOML file ([subcommand] sections)");
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", std::string(ndf_version()));

  // simulate
  Common sim_c;
  std::string scenario_file, split = "random";
  double duration = 8890.0, step = 5.0, window = 5.0, cutoff = 0.6, val_fraction = 0.1;
  std::vector<double> ratios, region;
  bool raw_csi = false;
  std::optional<double> csi_noise, beam_noise;
  auto* sim = app.add_subcommand("simulate", "Generate a synthetic dataset");
  add_common(sim, sim_c);
  sim->add_option("--scenario", scenario_file, "Scenario JSON to start from");
  sim->add_option("--duration", duration, "Recording length (s)")->capture_default_str();
  sim->add_option("--step", step, "Window step (s)")->capture_default_str();
  sim->add_option("--window", window, "Window span (s)")->capture_default_str();
  sim->add_option("--split", split, "random | temporal | coordinate")->capture_default_str();
  sim->add_option("--ratios", ratios, "Train/val/test fractions")->expected(3);
  sim->add_option("--cutoff", cutoff, "Temporal split fraction")->capture_default_str();
  sim->add_option("--region", region, "Coordinate split box x_min y_min x_max y_max")->expected(4);
  sim->add_option("--val-fraction", val_fraction, "Validation share carved from train")->capture_default_str();
  sim->add_flag("--raw-csi", raw_csi, "Also write raw CSI frames");
  sim->add_option("--csi-noise", csi_noise, "CSI embedding noise std");
  sim->add_option("--beam-noise-db", beam_noise, "Beam SNR noise std (dB)");

  // pretrain-cae
  Common cae_c;
  std::string cae_data;
  int cae_epochs = 30, cae_batch = 16, cae_embed = 36, cae_max_frames = 0;
  double cae_lr = 2e-3;
  auto* cae = app.add_subcommand("pretrain-cae", "Pretrain the CSI autoencoder on raw CSI");
  add_common(cae, cae_c);
  cae->add_option("--data", cae_data, "Dataset directory")->required();
  cae->add_option("--epochs", cae_epochs)->capture_default_str();
  cae->add_option("--batch", cae_batch)->capture_default_str();
  cae->add_option("--lr", cae_lr)->capture_default_str();
  cae->add_option("--embed-dim", cae_embed)->capture_default_str();
  cae->add_option("--max-frames", cae_max_frames, "Use at most this many training frames (0 = all)");

  // train
  Common tr_c;
  std::string tr_data;
  ModelOpts tr_m;
  TrainOpts tr_t;
  auto* trn = app.add_subcommand("train", "Train a model");
  add_common(trn, tr_c);
  trn->add_option("--data", tr_data, "Dataset directory")->required();
  tr_m.add(trn, true);
  tr_t.add(trn);

  // eval
  Common ev_c;
  std::string ev_data, ev_ckpt, ev_split = "test", ev_cae;
  ModelOpts ev_m;
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint (or an untrained model) on a split");
  add_common(ev, ev_c);
  ev->add_option("--data", ev_data, "Dataset directory")->required();
  ev->add_option("--checkpoint", ev_ckpt, "Checkpoint directory; omitted = untrained model");
  ev->add_option("--split", ev_split)->capture_default_str();
  ev->add_option("--cae", ev_cae, "CSI autoencoder for raw CSI input");
  ev_m.add(ev, true);

  // baseline
  Common bl_c;
  std::string bl_data;
  ModelOpts bl_m;
  TrainOpts bl_t;
  auto* bl = app.add_subcommand("baseline", "Train and evaluate a fusion baseline");
  add_common(bl, bl_c);
  bl->add_option("--data", bl_data, "Dataset directory")->required();
  bl->add_option("--method", bl_m.kind, "linear_int | nearest_int | rnn_decay | rnn_delta")->required();
  bl->add_option("--bands", bl_m.bands, "both | beam | csi");
  bl->add_option("--model-json", bl_m.json_file, "Model configuration (JSON)");
  bl_t.add(bl);

  // search
  Common se_c;
  std::string se_data;
  int trials = 100, trial_epochs = 125;
  ModelOpts se_m;
  TrainOpts se_t;
  auto* se = app.add_subcommand("search", "Random search over the loss weights");
  add_common(se, se_c);
  se->add_option("--data", se_data, "Dataset directory")->required();
  se->add_option("--trials", trials)->capture_default_str();
  se->add_option("--trial-epochs", trial_epochs)->capture_default_str();
  se_m.add(se, false);
  se_t.add(se);

  // export-latents
  Common ex_c;
  std::string ex_data, ex_ckpt, ex_split = "test", ex_regions, ex_out = "latents.jsonl", ex_cae;
  auto* ex = app.add_subcommand("export-latents", "Export fused latent states grouped by track region");
  add_common(ex, ex_c);
  ex->add_option("--data", ex_data, "Dataset directory")->required();
  ex->add_option("--checkpoint", ex_ckpt, "Checkpoint directory")->required();
  ex->add_option("--split", ex_split)->capture_default_str();
  ex->add_option("--regions", ex_regions, "Regions JSON; default: eight boxes along the track");
  ex->add_option("--name", ex_out, "Output file name")->capture_default_str();
  ex->add_option("--cae", ex_cae, "CSI autoencoder for raw CSI input");

  // plot
  Common pl_c;
  std::string pl_kind, pl_name;
  std::vector<std::string> pl_inputs, pl_labels;
  std::optional<double> t_from, t_to;
  auto* pl = app.add_subcommand("plot", "Render an SVG plot");
  add_common(pl, pl_c);
  pl->add_option("--kind", pl_kind, "trajectory | cdf | latent")->required();
  pl->add_option("--input", pl_inputs, "predictions.csv, report.json files or a latent export")->required();
  pl->add_option("--label", pl_labels, "Legend labels for cdf inputs");
  pl->add_option("--t-from", t_from, "Trajectory start time (s)");
  pl->add_option("--t-to", t_to, "Trajectory end time (s)");
  pl->add_option("--name", pl_name, "Output file name (default <kind>.svg)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    std::cout << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::CallForVersion&) {
    std::cout << ndf_version() << "\n";
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << "ndf: " << e.what() << "\n\n";
    const auto subs = app.get_subcommands();
    std::cerr << (subs.empty() ? app.help() : subs.front()->help());
    return kUsageExit;
  }

  try {
    auto logging = [](const Common& c) { ndf_set_log_callback(c.quiet ? nullptr : log_to_stderr, nullptr); };

    if (sim->parsed()) {
      logging(sim_c);
      json s = scenario_file.empty() ? json::object() : read_json(scenario_file);
      s["seed"] = sim_c.seed;
      s["duration"] = duration;
      s["step"] = step;
      s["window_span"] = window;
      s["split"]["kind"] = split;
      s["split"]["train_step"] = step;
      s["split"]["test_step"] = step;
      s["split"]["cutoff_fraction"] = cutoff;
      s["split"]["val_fraction"] = val_fraction;
      if (ratios.size() == 3) s["split"]["ratios"] = ratios;
      if (region.size() == 4) s["split"]["region"] = region;
      if (raw_csi) s["raw_csi"]["enabled"] = true;
      if (csi_noise) s["sensors"]["csi_noise"] = *csi_noise;
      if (beam_noise) s["sensors"]["beam_noise_db"] = *beam_noise;
      CString out;
      check(ndf_simulate(s.dump().c_str(), sim_c.out_dir.c_str(), &out.p), "simulate");
      print(out.parse());
    } else if (cae->parsed()) {
      logging(cae_c);
      const json o = {{"epochs", cae_epochs},   {"batch_size", cae_batch}, {"learning_rate", cae_lr},
                      {"embed_dim", cae_embed}, {"seed", cae_c.seed},      {"max_frames", cae_max_frames}};
      CString out;
      check(ndf_pretrain_cae(cae_data.c_str(), o.dump().c_str(), cae_c.out_dir.c_str(), &out.p), "pretrain-cae");
      print(out.parse());
    } else if (trn->parsed() || bl->parsed()) {
      const bool is_baseline = bl->parsed();
      const Common& c = is_baseline ? bl_c : tr_c;
      const ModelOpts& mo = is_baseline ? bl_m : tr_m;
      const TrainOpts& to = is_baseline ? bl_t : tr_t;
      const std::string& data = is_baseline ? bl_data : tr_data;
      logging(c);
      DatasetPtr train, val;
      open_split(train, data, "train", to.cae);
      open_split(val, data, "val", to.cae);
      ModelPtr model;
      check(ndf_model_create(mo.build(c.seed).dump().c_str(), &model.p), "create model");
      CString summary;
      check(ndf_train(model.p, train.p, val.p, to.build(c.seed).dump().c_str(), c.out_dir.c_str(), &summary.p),
            "train");
      json out = summary.parse();
      if (is_baseline) {
        DatasetPtr test;
        open_split(test, data, "test", to.cae);
        CString report;
        check(ndf_evaluate(model.p, test.p, c.out_dir.c_str(), &report.p), "evaluate");
        json r = report.parse();
        r.erase("errors");
        out["report"] = r;
      }
      print(out);
    } else if (ev->parsed()) {
      logging(ev_c);
      DatasetPtr test;
      open_split(test, ev_data, ev_split, ev_cae);
      ModelPtr model;
      if (ev_ckpt.empty()) {
        check(ndf_model_create(ev_m.build(ev_c.seed).dump().c_str(), &model.p), "create model");
      } else {
        check(ndf_model_load(ev_ckpt.c_str(), &model.p), "load checkpoint");
      }
      CString report;
      check(ndf_evaluate(model.p, test.p, ev_c.out_dir.c_str(), &report.p), "evaluate");
      json r = report.parse();
      r.erase("errors");
      print(r);
    } else if (se->parsed()) {
      logging(se_c);
      DatasetPtr train, val;
      open_split(train, se_data, "train", se_t.cae);
      open_split(val, se_data, "val", se_t.cae);
      se_m.kind = "ndf";
      const json o = {{"trials", trials}, {"epochs", trial_epochs}, {"seed", se_c.seed}, {"train", se_t.build(se_c.seed)}};
      CString result;
      check(ndf_search(se_m.build(se_c.seed).dump().c_str(), train.p, val.p, o.dump().c_str(), se_c.out_dir.c_str(),
                       &result.p),
            "search");
      print(result.parse());
    } else if (ex->parsed()) {
      logging(ex_c);
      DatasetPtr ds;
      open_split(ds, ex_data, ex_split, ex_cae);
      ModelPtr model;
      check(ndf_model_load(ex_ckpt.c_str(), &model.p), "load checkpoint");
      std::string regions;
      if (!ex_regions.empty()) regions = read_json(ex_regions).dump();
      const std::string path = (fs::path(ex_c.out_dir) / ex_out).string();
      CString out;
      check(ndf_export_latents(model.p, ds.p, regions.empty() ? nullptr : regions.c_str(), path.c_str(), &out.p),
            "export-latents");
      json j = out.parse();
      j["file"] = path;
      for (const auto& w : j["warnings"]) std::cerr << "ndf: warning: " << w.get<std::string>() << "\n";
      print(j);
    } else if (pl->parsed()) {
      logging(pl_c);
      json in = {{"files", pl_inputs}, {"labels", pl_labels}};
      if (t_from) in["t_from"] = *t_from;
      if (t_to) in["t_to"] = *t_to;
      const std::string path = (fs::path(pl_c.out_dir) / (pl_name.empty() ? pl_kind + ".svg" : pl_name)).string();
      check(ndf_plot(pl_kind.c_str(), in.dump().c_str(), path.c_str()), "plot");
      print({{"file", path}});
    }
  } catch (const Failure& f) {
    return f.status;
  }
  return 0;
}
