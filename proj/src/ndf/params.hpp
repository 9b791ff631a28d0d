#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

namespace ndf {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

struct Parameter {
  std::string name;
  Mat value;
};

// Flat, ordered collection of learnable tensors. Modules keep integer ids
// into the store so a model can be copied by value.
class ParamStore {
 public:
  int add(std::string name, Eigen::Index rows, Eigen::Index cols);

  [[nodiscard]] int size() const { return static_cast<int>(params_.size()); }
  [[nodiscard]] const Parameter& operator[](int id) const { return params_[static_cast<std::size_t>(id)]; }
  [[nodiscard]] Parameter& operator[](int id) { return params_[static_cast<std::size_t>(id)]; }
  [[nodiscard]] const Mat& value(int id) const { return params_[static_cast<std::size_t>(id)].value; }
  [[nodiscard]] Mat& value(int id) { return params_[static_cast<std::size_t>(id)].value; }

  [[nodiscard]] int find(std::string_view name) const;
  [[nodiscard]] std::size_t scalar_count() const;

  // Group = name up to the last '.', e.g. "enc_b.cell.Wz" -> "enc_b.cell".
  [[nodiscard]] std::vector<std::string> groups() const;
  [[nodiscard]] static std::string group_of(const std::string& name);

  [[nodiscard]] std::vector<double> flatten() const;
  void unflatten(const std::vector<double>& flat);

  [[nodiscard]] const std::vector<Parameter>& all() const { return params_; }

 private:
  std::vector<Parameter> params_;
  std::unordered_map<std::string, int> index_;
};

// Per-parameter gradient buffers matching a ParamStore's shapes.
class GradStore {
 public:
  GradStore() = default;
  explicit GradStore(const ParamStore& params);

  void zero();
  void add(const GradStore& other);
  void scale(double s);
  [[nodiscard]] bool all_finite() const;

  [[nodiscard]] int size() const { return static_cast<int>(grads_.size()); }
  Mat& operator[](int id) { return grads_[static_cast<std::size_t>(id)]; }
  const Mat& operator[](int id) const { return grads_[static_cast<std::size_t>(id)]; }

 private:
  std::vector<Mat> grads_;
};

// Uniform(-scale/sqrt(fan_in), scale/sqrt(fan_in)), the usual dense-layer init.
void init_uniform_fan_in(Mat& m, std::mt19937_64& rng, double scale = 1.0);

}  // namespace ndf
