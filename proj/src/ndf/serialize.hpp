#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include <json.hpp>

#include "ndf/params.hpp"

namespace ndf {

using json = nlohmann::json;

std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t v);

// Parameter blob: the store's values in id order, column-major float64 little endian.
void write_param_blob(const std::filesystem::path& file, const ParamStore& params);
void read_param_blob(const std::filesystem::path& file, ParamStore& params);

// [{name, rows, cols}] in id order; read_param_layout checks a store against it.
json param_layout(const ParamStore& params);
void check_param_layout(const json& layout, const ParamStore& params);

json read_json_file(const std::filesystem::path& file);
void write_text_file(const std::filesystem::path& file, const std::string& text);

json vec_to_json(const Vec& v);
Vec vec_from_json(const json& j);

}  // namespace ndf
