#include "ndf/dataset_io.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "ndf/errors.hpp"

namespace ndf {

namespace {

constexpr const char* kFormat = "ndf-dataset";
constexpr int kVersion = 1;

json frame_record(const char* stream, double t, const double* v, Eigen::Index n) {
  return {{"stream", stream}, {"t", t}, {"values", std::vector<double>(v, v + n)}};
}

Vec values_of(const json& rec, std::size_t expected, const std::string& where) {
  const auto& arr = rec.at("values");
  if (!arr.is_array() || arr.size() != expected) {
    throw IoError(where + ": expected " + std::to_string(expected) + " values");
  }
  Vec v(static_cast<Eigen::Index>(expected));
  for (std::size_t i = 0; i < expected; ++i) {
    v[static_cast<Eigen::Index>(i)] = arr[i].get<double>();
    if (!std::isfinite(v[static_cast<Eigen::Index>(i)])) throw IoError(where + ": non-finite value");
  }
  return v;
}

}  // namespace

json to_json(const DatasetConfig& c) {
  return {{"M_b", c.m_b},         {"M_c", c.m_c},     {"N_Tx", c.n_tx},
          {"N_Rx", c.n_rx},       {"N_s", c.n_s},     {"f_delta", c.f_delta},
          {"window_span", c.window_span}, {"label_rate", c.label_rate}};
}

DatasetConfig dataset_config_from_json(const json& j) {
  DatasetConfig c;
  c.m_b = j.value("M_b", c.m_b);
  c.m_c = j.value("M_c", c.m_c);
  c.n_tx = j.value("N_Tx", c.n_tx);
  c.n_rx = j.value("N_Rx", c.n_rx);
  c.n_s = j.value("N_s", c.n_s);
  c.f_delta = j.value("f_delta", c.f_delta);
  c.window_span = j.value("window_span", c.window_span);
  c.label_rate = j.value("label_rate", c.label_rate);
  c.validate();
  return c;
}

void write_split(const std::filesystem::path& file, const SplitData& data) {
  const auto& h = data.header;
  json header{{"format", kFormat},
              {"version", kVersion},
              {"config", to_json(h.config)},
              {"split", h.split},
              {"split_kind", h.split_kind},
              {"window", {{"span", h.grid.span}, {"step", h.grid.step}, {"origin", h.grid.origin}, {"end", h.grid.end}}},
              {"windows", json::array()}};
  for (const auto& [id, start] : h.windows) header["windows"].push_back({{"id", id}, {"start", start}});

  std::ostringstream os;
  os << header.dump() << '\n';
  const auto& f = data.frames;
  std::size_t ib = 0, ic = 0, il = 0;
  const double inf = std::numeric_limits<double>::infinity();
  while (ib < f.beam.size() || ic < f.csi.size() || il < f.labels.size()) {
    const double tb = ib < f.beam.size() ? f.beam[ib].t : inf;
    const double tc = ic < f.csi.size() ? f.csi[ic].t : inf;
    const double tl = il < f.labels.size() ? f.labels[il].t : inf;
    if (tb <= tc && tb <= tl) {
      const auto& fr = f.beam[ib++];
      os << frame_record("beam", fr.t, fr.values.data(), fr.values.size()).dump() << '\n';
    } else if (tc <= tl) {
      const auto& fr = f.csi[ic++];
      os << frame_record("csi", fr.t, fr.values.data(), fr.values.size()).dump() << '\n';
    } else {
      const auto& fr = f.labels[il++];
      os << frame_record("label", fr.t, fr.xy.data(), 2).dump() << '\n';
    }
  }
  write_text_file(file, os.str());
}

SplitData read_split(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot read " + file.string());
  std::string line;
  if (!std::getline(in, line)) throw IoError("empty dataset file: " + file.string());
  SplitData out;
  try {
    const json h = json::parse(line);
    if (h.value("format", "") != kFormat) throw IoError("not an ndf dataset file: " + file.string());
    if (h.value("version", 0) != kVersion) throw IoError("unsupported dataset version in " + file.string());
    auto& hdr = out.header;
    hdr.config = dataset_config_from_json(h.at("config"));
    hdr.split = h.at("split").get<std::string>();
    hdr.split_kind = h.value("split_kind", "random");
    const auto& w = h.at("window");
    hdr.grid = {w.at("span").get<double>(), w.at("step").get<double>(), w.at("origin").get<double>(),
                w.at("end").get<double>()};
    for (const auto& e : h.at("windows")) hdr.windows.emplace_back(e.at("id").get<std::int64_t>(), e.at("start").get<double>());
  } catch (const json::exception& e) {
    throw IoError("malformed dataset header in " + file.string() + ": " + e.what());
  }

  const auto m_b = static_cast<std::size_t>(out.header.config.m_b);
  const auto m_c = static_cast<std::size_t>(out.header.config.m_c);
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::string where = file.filename().string() + ":" + std::to_string(lineno);
    try {
      const json rec = json::parse(line);
      const auto stream = rec.at("stream").get<std::string>();
      const double t = rec.at("t").get<double>();
      if (!std::isfinite(t)) throw IoError(where + ": non-finite timestamp");
      if (stream == "beam") {
        out.frames.beam.push_back({t, values_of(rec, m_b, where)});
      } else if (stream == "csi") {
        out.frames.csi.push_back({t, values_of(rec, m_c, where)});
      } else if (stream == "label") {
        const Vec v = values_of(rec, 2, where);
        out.frames.labels.push_back({t, Eigen::Vector2d(v[0], v[1])});
      } else {
        throw IoError(where + ": unknown stream '" + stream + "'");
      }
    } catch (const json::exception& e) {
      throw IoError(where + ": " + e.what());
    }
  }
  return out;
}

std::filesystem::path split_file(const std::filesystem::path& dir, const std::string& split) {
  return dir / (split + ".jsonl");
}

std::filesystem::path raw_csi_file(const std::filesystem::path& dir, const std::string& split) {
  return dir / ("raw_csi_" + split + ".jsonl");
}

Dataset load_dataset(const std::filesystem::path& dir, const std::string& split) {
  SplitData data = read_split(split_file(dir, split));
  Dataset ds;
  ds.dir = dir;
  ds.header = std::move(data.header);
  ds.windowing = windows_at(data.frames, ds.header.grid.span, ds.header.windows);
  return ds;
}

void write_raw_csi(const std::filesystem::path& file, const std::vector<csi::RawCsiFrame>& frames) {
  std::ostringstream os;
  for (const auto& f : frames) {
    std::vector<double> re, im;
    re.reserve(f.data.size());
    im.reserve(f.data.size());
    for (const auto& c : f.data) {
      re.push_back(c.real());
      im.push_back(c.imag());
    }
    os << json{{"t", f.t}, {"shape", {f.n_tx, f.n_rx, f.n_s}}, {"re", re}, {"im", im}}.dump() << '\n';
  }
  write_text_file(file, os.str());
}

std::vector<csi::RawCsiFrame> read_raw_csi(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot read " + file.string());
  std::vector<csi::RawCsiFrame> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const json rec = json::parse(line);
      csi::RawCsiFrame f;
      f.t = rec.at("t").get<double>();
      const auto shape = rec.at("shape").get<std::vector<int>>();
      if (shape.size() != 3) throw IoError("raw csi shape must have three entries");
      f.n_tx = shape[0];
      f.n_rx = shape[1];
      f.n_s = shape[2];
      const auto re = rec.at("re").get<std::vector<double>>();
      const auto im = rec.at("im").get<std::vector<double>>();
      if (re.size() != im.size()) throw IoError("raw csi re/im length mismatch");
      f.data.resize(re.size());
      for (std::size_t i = 0; i < re.size(); ++i) f.data[i] = {re[i], im[i]};
      f.validate();
      out.push_back(std::move(f));
    } catch (const std::exception& e) {
      throw IoError(file.filename().string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

std::size_t embed_raw_csi(Dataset& ds, const std::vector<csi::RawCsiFrame>& raw, const csi::Cae& cae) {
  std::map<double, const csi::RawCsiFrame*> by_time;
  for (const auto& f : raw) by_time[f.t] = &f;
  std::map<double, Vec> cache;
  std::size_t replaced = 0;
  for (auto& w : ds.windowing.windows) {
    for (auto& f : w.csi) {
      auto hit = cache.find(f.t);
      if (hit == cache.end()) {
        const auto it = by_time.find(f.t);
        if (it == by_time.end()) throw IoError("raw CSI missing for the frame at t=" + std::to_string(f.t));
        hit = cache.emplace(f.t, cae.embed(csi::calibrate_to_real(*it->second, ds.header.config.f_delta))).first;
      }
      f.values = hit->second;
      ++replaced;
    }
  }
  ds.header.config.m_c = cae.config().embed_dim;
  return replaced;
}

}  // namespace ndf
