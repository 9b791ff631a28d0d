#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "ndf/csi_frontend.hpp"
#include "ndf/data_model.hpp"
#include "ndf/serialize.hpp"

namespace ndf {

// Window placement used to cut a split's frames back into windows on load.
struct WindowGrid {
  double span = 5.0;
  double step = 5.0;
  double origin = 0.0;
  double end = 0.0;
};

struct SplitHeader {
  DatasetConfig config;
  std::string split;       // train | val | test
  std::string split_kind;  // random | temporal | coordinate
  WindowGrid grid;
  std::vector<std::pair<std::int64_t, double>> windows;  // (id, start)
};

struct SplitData {
  SplitHeader header;
  StreamSet frames;
};

struct Dataset {
  SplitHeader header;
  WindowingResult windowing;
  std::filesystem::path dir;

  [[nodiscard]] const std::vector<MeasurementWindow>& windows() const { return windowing.windows; }
};

json to_json(const DatasetConfig& c);
DatasetConfig dataset_config_from_json(const json& j);

// First line: header object. Then one record per frame in time order:
// {"stream":"beam"|"csi"|"label","t":seconds,"values":[...]}
void write_split(const std::filesystem::path& file, const SplitData& data);
SplitData read_split(const std::filesystem::path& file);

std::filesystem::path split_file(const std::filesystem::path& dir, const std::string& split);
Dataset load_dataset(const std::filesystem::path& dir, const std::string& split);

// Raw CSI records: {"t":seconds,"shape":[tx,rx,s],"re":[...],"im":[...]}
void write_raw_csi(const std::filesystem::path& file, const std::vector<csi::RawCsiFrame>& frames);
std::vector<csi::RawCsiFrame> read_raw_csi(const std::filesystem::path& file);
std::filesystem::path raw_csi_file(const std::filesystem::path& dir, const std::string& split);

// Swaps every window's CSI values for the autoencoder embedding of the raw
// frame with the same timestamp. Returns the number of frames replaced.
std::size_t embed_raw_csi(Dataset& ds, const std::vector<csi::RawCsiFrame>& raw, const csi::Cae& cae);

}  // namespace ndf
