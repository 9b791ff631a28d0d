#include "ndf/params.hpp"

#include <cmath>
#include <stdexcept>

namespace ndf {

int ParamStore::add(std::string name, Eigen::Index rows, Eigen::Index cols) {
  if (index_.count(name) != 0) {
    throw std::invalid_argument("duplicate parameter name: " + name);
  }
  const int id = size();
  index_.emplace(name, id);
  params_.push_back({std::move(name), Mat::Zero(rows, cols)});
  return id;
}

int ParamStore::find(std::string_view name) const {
  auto it = index_.find(std::string(name));
  return it == index_.end() ? -1 : it->second;
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
  return n;
}

std::string ParamStore::group_of(const std::string& name) {
  const auto pos = name.rfind('.');
  return pos == std::string::npos ? name : name.substr(0, pos);
}

std::vector<std::string> ParamStore::groups() const {
  std::vector<std::string> out;
  for (const auto& p : params_) {
    auto g = group_of(p.name);
    if (out.empty() || out.back() != g) {
      bool seen = false;
      for (const auto& e : out) seen = seen || e == g;
      if (!seen) out.push_back(std::move(g));
    }
  }
  return out;
}

std::vector<double> ParamStore::flatten() const {
  std::vector<double> flat;
  flat.reserve(scalar_count());
  for (const auto& p : params_) {
    flat.insert(flat.end(), p.value.data(), p.value.data() + p.value.size());
  }
  return flat;
}

void ParamStore::unflatten(const std::vector<double>& flat) {
  if (flat.size() != scalar_count()) {
    throw std::invalid_argument("parameter blob size mismatch");
  }
  std::size_t off = 0;
  for (auto& p : params_) {
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(off), p.value.size(), p.value.data());
    off += static_cast<std::size_t>(p.value.size());
  }
}

GradStore::GradStore(const ParamStore& params) {
  grads_.reserve(static_cast<std::size_t>(params.size()));
  for (const auto& p : params.all()) grads_.push_back(Mat::Zero(p.value.rows(), p.value.cols()));
}

void GradStore::zero() {
  for (auto& g : grads_) g.setZero();
}

void GradStore::add(const GradStore& other) {
  for (std::size_t i = 0; i < grads_.size(); ++i) grads_[i] += other.grads_[i];
}

void GradStore::scale(double s) {
  for (auto& g : grads_) g *= s;
}

bool GradStore::all_finite() const {
  for (const auto& g : grads_) {
    if (!g.allFinite()) return false;
  }
  return true;
}

void init_uniform_fan_in(Mat& m, std::mt19937_64& rng, double scale) {
  const double bound = scale / std::sqrt(static_cast<double>(std::max<Eigen::Index>(1, m.cols())));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
}

}  // namespace ndf
