#include "ndf/serialize.hpp"

#include <bit>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "ndf/errors.hpp"

namespace ndf {

static_assert(std::endian::native == std::endian::little, "parameter blobs assume a little-endian host");

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

void write_param_blob(const std::filesystem::path& file, const ParamStore& params) {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + file.string());
  for (const auto& p : params.all()) {
    out.write(reinterpret_cast<const char*>(p.value.data()),
              static_cast<std::streamsize>(p.value.size() * static_cast<Eigen::Index>(sizeof(double))));
  }
  if (!out) throw IoError("write failed: " + file.string());
}

void read_param_blob(const std::filesystem::path& file, ParamStore& params) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("cannot read " + file.string());
  for (int i = 0; i < params.size(); ++i) {
    Mat& m = params.value(i);
    in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * static_cast<Eigen::Index>(sizeof(double))));
    if (!in) throw IoError("parameter blob too short: " + file.string());
  }
  if (in.peek() != std::char_traits<char>::eof()) throw IoError("parameter blob has trailing bytes: " + file.string());
}

json param_layout(const ParamStore& params) {
  json out = json::array();
  for (const auto& p : params.all()) out.push_back({{"name", p.name}, {"rows", p.value.rows()}, {"cols", p.value.cols()}});
  return out;
}

void check_param_layout(const json& layout, const ParamStore& params) {
  if (!layout.is_array() || layout.size() != static_cast<std::size_t>(params.size())) {
    throw IoError("checkpoint parameter count does not match the architecture");
  }
  for (int i = 0; i < params.size(); ++i) {
    const auto& e = layout[static_cast<std::size_t>(i)];
    const auto& p = params[i];
    if (e.at("name").get<std::string>() != p.name || e.at("rows").get<Eigen::Index>() != p.value.rows() ||
        e.at("cols").get<Eigen::Index>() != p.value.cols()) {
      throw IoError("checkpoint tensor mismatch at " + p.name);
    }
  }
}

json read_json_file(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot read " + file.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw IoError("malformed JSON in " + file.string() + ": " + e.what());
  }
}

void write_text_file(const std::filesystem::path& file, const std::string& text) {
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + file.string());
  out << text;
  if (!out) throw IoError("write failed: " + file.string());
}

json vec_to_json(const Vec& v) { return json(std::vector<double>(v.data(), v.data() + v.size())); }

Vec vec_from_json(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace ndf
