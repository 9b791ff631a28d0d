#include "ndf/estimator.hpp"

#include <stdexcept>

#include "ndf/baselines.hpp"
#include "ndf/errors.hpp"
#include "ndf/ndf_model.hpp"

namespace ndf {

namespace {

constexpr const char* kManifest = "manifest.json";
constexpr const char* kParams = "params.bin";

json minmax_to_json(const MinMax& m) { return {{"lo", vec_to_json(m.lo)}, {"hi", vec_to_json(m.hi)}}; }

MinMax minmax_from_json(const json& j) {
  MinMax m;
  m.lo = vec_from_json(j.at("lo"));
  m.hi = vec_from_json(j.at("hi"));
  if (m.lo.size() != m.hi.size()) throw IoError("scaler: lo/hi length mismatch");
  return m;
}

}  // namespace

std::unique_ptr<Estimator> make_estimator(const json& cfg) {
  const std::string kind = cfg.value("kind", std::string("ndf"));
  if (kind == "ndf") return std::make_unique<model::NdfModel>(model::ndf_config_from_json(cfg));
  json c = cfg;
  c["kind"] = kind;
  return std::make_unique<baseline::BaselineModel>(baseline::baseline_config_from_json(c));
}

MeasurementWindow TrainedModel::prepare(const MeasurementWindow& raw) const {
  if (!raw.beam.empty() && raw.beam.front().values.size() != estimator->beam_dim()) {
    throw std::invalid_argument("prepare: beam dimension does not match the model");
  }
  if (!raw.csi.empty() && raw.csi.front().values.size() != estimator->csi_dim()) {
    throw std::invalid_argument("prepare: csi dimension does not match the model");
  }
  const MeasurementWindow scaled = scaler.fitted() ? apply_scaler(scaler, raw) : raw;
  return raw.normalized ? scaled : normalize_window_times(scaled);
}

std::vector<MeasurementWindow> TrainedModel::prepare(const std::vector<MeasurementWindow>& raw) const {
  std::vector<MeasurementWindow> out;
  out.reserve(raw.size());
  for (const auto& w : raw) out.push_back(prepare(w));
  return out;
}

json to_json(const Scaler& s) {
  if (!s.fitted()) return nullptr;
  return {{"beam", minmax_to_json(s.beam)}, {"csi", minmax_to_json(s.csi)}, {"warnings", s.warnings}};
}

Scaler scaler_from_json(const json& j) {
  Scaler s;
  if (j.is_null()) return s;
  s.beam = minmax_from_json(j.at("beam"));
  s.csi = minmax_from_json(j.at("csi"));
  s.warnings = j.value("warnings", 0);
  return s;
}

void save_checkpoint(const TrainedModel& m, const std::filesystem::path& dir) {
  if (!m.estimator) throw std::invalid_argument("save_checkpoint: empty model");
  std::filesystem::create_directories(dir);
  const json cfg = m.estimator->config();
  const std::string cfg_text = cfg.dump();
  write_param_blob(dir / kParams, m.estimator->params());
  json manifest = {
      {"format", "ndf-checkpoint"},
      {"version", 1},
      {"kind", m.estimator->kind()},
      {"config", cfg},
      {"config_hash", hex64(fnv1a64(cfg_text))},
      {"scaler", to_json(m.scaler)},
      {"provenance", m.provenance},
      {"epoch", m.epoch},
      {"metrics", m.metrics},
      {"layout", param_layout(m.estimator->params())},
      {"blob", kParams},
      {"blob_scalars", m.estimator->params().scalar_count()},
  };
  write_text_file(dir / kManifest, manifest.dump(2) + "\n");
}

TrainedModel load_checkpoint(const std::filesystem::path& dir) {
  const json manifest = read_json_file(dir / kManifest);
  if (manifest.value("format", std::string()) != "ndf-checkpoint") {
    throw IoError("checkpoint: " + (dir / kManifest).string() + " is not a checkpoint manifest");
  }
  if (manifest.value("version", 0) != 1) throw IoError("checkpoint: unsupported version");
  const json& cfg = manifest.at("config");
  if (manifest.value("config_hash", std::string()) != hex64(fnv1a64(cfg.dump()))) {
    throw IoError("checkpoint: config hash mismatch");
  }
  TrainedModel m;
  try {
    m.estimator = make_estimator(cfg);
  } catch (const std::invalid_argument& e) {
    throw IoError(std::string("checkpoint: bad config: ") + e.what());
  }
  check_param_layout(manifest.at("layout"), m.estimator->params());
  read_param_blob(dir / manifest.value("blob", std::string(kParams)), m.estimator->params());
  m.scaler = scaler_from_json(manifest.at("scaler"));
  m.provenance = manifest.value("provenance", std::string("random-init"));
  m.epoch = manifest.value("epoch", 0);
  m.metrics = manifest.value("metrics", json::object());
  return m;
}

}  // namespace ndf
