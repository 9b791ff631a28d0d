#pragma once

#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "ndf/trainer.hpp"

namespace ndf::plot {

struct Series {
  std::string label;
  std::vector<double> values;
};

// Ground truth and estimates as two polylines, optionally limited to a time range.
std::string trajectory_svg(const std::vector<PointEstimate>& points, double t_from = -1e300, double t_to = 1e300);

// Empirical CDF of each error list.
std::string error_cdf_svg(const std::vector<Series>& errors);

struct Projection {
  Eigen::MatrixX2d coords;  // one row per latent row
  Eigen::Vector2d explained = Eigen::Vector2d::Zero();  // variance fraction per component
};

// Principal component projection of the exported latents onto two axes.
Projection pca2(const LatentExport& e);
std::string latent_svg(const LatentExport& e);

// predictions.csv written by evaluation.
std::vector<PointEstimate> read_predictions_csv(const std::string& text);

}  // namespace ndf::plot
