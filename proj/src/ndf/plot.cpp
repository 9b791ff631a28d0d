#include "ndf/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace ndf::plot {

namespace {

constexpr double kWidth = 640.0;
constexpr double kHeight = 480.0;
constexpr double kMargin = 50.0;

const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                "#9467bd", "#8c564b", "#e377c2", "#17becf"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

// Data-to-pixel mapping with a frame and tick labels.
struct Canvas {
  double x0, x1, y0, y1;
  bool equal_aspect = false;
  std::ostringstream body;

  Canvas(double xa, double xb, double ya, double yb, bool equal) : x0(xa), x1(xb), y0(ya), y1(yb), equal_aspect(equal) {
    if (!(x1 > x0)) { x0 -= 0.5; x1 += 0.5; }
    if (!(y1 > y0)) { y0 -= 0.5; y1 += 0.5; }
    if (equal_aspect) {
      const double sx = (kWidth - 2 * kMargin) / (x1 - x0);
      const double sy = (kHeight - 2 * kMargin) / (y1 - y0);
      if (sx < sy) {
        const double pad = ((kHeight - 2 * kMargin) / sx - (y1 - y0)) / 2;
        y0 -= pad; y1 += pad;
      } else {
        const double pad = ((kWidth - 2 * kMargin) / sy - (x1 - x0)) / 2;
        x0 -= pad; x1 += pad;
      }
    }
  }

  [[nodiscard]] double px(double x) const { return kMargin + (x - x0) / (x1 - x0) * (kWidth - 2 * kMargin); }
  [[nodiscard]] double py(double y) const { return kHeight - kMargin - (y - y0) / (y1 - y0) * (kHeight - 2 * kMargin); }

  void polyline(const std::vector<std::pair<double, double>>& pts, const std::string& color, double width = 1.5) {
    if (pts.empty()) return;
    body << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"" << num(width) << "\" points=\"";
    for (const auto& [x, y] : pts) body << num(px(x)) << ',' << num(py(y)) << ' ';
    body << "\"/>\n";
  }

  void dot(double x, double y, const std::string& color, double r = 2.0) {
    body << "<circle cx=\"" << num(px(x)) << "\" cy=\"" << num(py(y)) << "\" r=\"" << num(r) << "\" fill=\"" << color
         << "\" fill-opacity=\"0.7\"/>\n";
  }

  void legend(const std::vector<std::pair<std::string, std::string>>& entries) {
    double y = kMargin + 12;
    for (const auto& [label, color] : entries) {
      body << "<rect x=\"" << num(kWidth - kMargin - 130) << "\" y=\"" << num(y - 8) << "\" width=\"12\" height=\"4\" fill=\""
           << color << "\"/>\n";
      body << "<text x=\"" << num(kWidth - kMargin - 112) << "\" y=\"" << num(y - 2)
           << "\" font-size=\"11\" font-family=\"sans-serif\">" << escape(label) << "</text>\n";
      y += 16;
    }
  }

  std::string finish(const std::string& title, const std::string& xlabel, const std::string& ylabel) {
    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
       << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<rect x=\"" << kMargin << "\" y=\"" << kMargin << "\" width=\"" << kWidth - 2 * kMargin << "\" height=\""
       << kHeight - 2 * kMargin << "\" fill=\"none\" stroke=\"black\"/>\n";
    for (int i = 0; i <= 4; ++i) {
      const double xv = x0 + (x1 - x0) * i / 4.0;
      const double yv = y0 + (y1 - y0) * i / 4.0;
      os << "<text x=\"" << num(px(xv)) << "\" y=\"" << num(kHeight - kMargin + 15)
         << "\" font-size=\"10\" text-anchor=\"middle\" font-family=\"sans-serif\">" << num(xv) << "</text>\n";
      os << "<text x=\"" << num(kMargin - 5) << "\" y=\"" << num(py(yv) + 3)
         << "\" font-size=\"10\" text-anchor=\"end\" font-family=\"sans-serif\">" << num(yv) << "</text>\n";
    }
    os << "<text x=\"" << kWidth / 2 << "\" y=\"25\" font-size=\"14\" text-anchor=\"middle\" font-family=\"sans-serif\">"
       << escape(title) << "</text>\n";
    os << "<text x=\"" << kWidth / 2 << "\" y=\"" << kHeight - 10
       << "\" font-size=\"12\" text-anchor=\"middle\" font-family=\"sans-serif\">" << escape(xlabel) << "</text>\n";
    os << "<text x=\"15\" y=\"" << kHeight / 2 << "\" font-size=\"12\" text-anchor=\"middle\" font-family=\"sans-serif\""
       << " transform=\"rotate(-90 15 " << kHeight / 2 << ")\">" << escape(ylabel) << "</text>\n";
    os << body.str() << "</svg>\n";
    return os.str();
  }
};

}  // namespace

std::string trajectory_svg(const std::vector<PointEstimate>& points, double t_from, double t_to) {
  std::vector<PointEstimate> sel;
  for (const auto& p : points) {
    if (p.t >= t_from && p.t <= t_to) sel.push_back(p);
  }
  if (sel.empty()) throw std::invalid_argument("trajectory plot: no points in range");
  std::stable_sort(sel.begin(), sel.end(), [](const auto& a, const auto& b) { return a.t < b.t; });
  double xa = 1e300, xb = -1e300, ya = 1e300, yb = -1e300;
  for (const auto& p : sel) {
    for (const auto& v : {p.truth, p.estimate}) {
      xa = std::min(xa, v.x()); xb = std::max(xb, v.x());
      ya = std::min(ya, v.y()); yb = std::max(yb, v.y());
    }
  }
  Canvas c(xa - 0.2, xb + 0.2, ya - 0.2, yb + 0.2, true);
  // Break the polylines between windows so gaps are not bridged.
  std::vector<std::pair<double, double>> truth, est;
  std::int64_t current = sel.front().window_id;
  auto flush = [&] {
    c.polyline(truth, "#222222", 2.0);
    c.polyline(est, kPalette[1], 1.2);
    truth.clear();
    est.clear();
  };
  for (const auto& p : sel) {
    if (p.window_id != current) {
      flush();
      current = p.window_id;
    }
    truth.emplace_back(p.truth.x(), p.truth.y());
    est.emplace_back(p.estimate.x(), p.estimate.y());
  }
  flush();
  c.legend({{"ground truth", "#222222"}, {"estimate", kPalette[1]}});
  return c.finish("Trajectory", "x (m)", "y (m)");
}

std::string error_cdf_svg(const std::vector<Series>& errors) {
  if (errors.empty()) throw std::invalid_argument("cdf plot: no series");
  double xmax = 0.0;
  for (const auto& s : errors) {
    if (s.values.empty()) throw std::invalid_argument("cdf plot: series " + s.label + " is empty");
    xmax = std::max(xmax, *std::max_element(s.values.begin(), s.values.end()));
  }
  Canvas c(0.0, xmax > 0.0 ? xmax : 1.0, 0.0, 1.0, false);
  std::vector<std::pair<std::string, std::string>> legend;
  for (std::size_t i = 0; i < errors.size(); ++i) {
    auto v = errors[i].values;
    std::sort(v.begin(), v.end());
    std::vector<std::pair<double, double>> pts{{0.0, 0.0}};
    const auto n = static_cast<double>(v.size());
    for (std::size_t k = 0; k < v.size(); ++k) {
      pts.emplace_back(v[k], static_cast<double>(k) / n);
      pts.emplace_back(v[k], static_cast<double>(k + 1) / n);
    }
    const std::string color = kPalette[i % std::size(kPalette)];
    c.polyline(pts, color);
    legend.emplace_back(errors[i].label, color);
  }
  c.legend(legend);
  return c.finish("Localization error CDF", "error (m)", "CDF");
}

Projection pca2(const LatentExport& e) {
  if (e.rows.size() < 2) throw std::invalid_argument("latent projection: need at least two rows");
  const auto dim = e.rows.front().z.size();
  Mat x(static_cast<Eigen::Index>(e.rows.size()), dim);
  for (std::size_t i = 0; i < e.rows.size(); ++i) {
    if (e.rows[i].z.size() != dim) throw std::invalid_argument("latent projection: inconsistent latent sizes");
    x.row(static_cast<Eigen::Index>(i)) = e.rows[i].z.transpose();
  }
  const Vec mean = x.colwise().mean();
  x.rowwise() -= mean.transpose();
  const Mat cov = x.transpose() * x / static_cast<double>(x.rows() - 1);
  Eigen::SelfAdjointEigenSolver<Mat> eig(cov);
  const auto k = dim - 1;
  Projection p;
  Mat axes(dim, 2);
  axes.col(0) = eig.eigenvectors().col(k);
  axes.col(1) = dim > 1 ? Vec(eig.eigenvectors().col(k - 1)) : Vec::Zero(dim);
  // Fix the sign so the largest loading of each axis is positive.
  for (int a = 0; a < 2; ++a) {
    Eigen::Index arg = 0;
    axes.col(a).cwiseAbs().maxCoeff(&arg);
    if (axes(arg, a) < 0) axes.col(a) *= -1.0;
  }
  p.coords = x * axes;
  const double total = eig.eigenvalues().sum();
  if (total > 0) {
    p.explained[0] = eig.eigenvalues()[k] / total;
    p.explained[1] = dim > 1 ? eig.eigenvalues()[k - 1] / total : 0.0;
  }
  return p;
}

std::string latent_svg(const LatentExport& e) {
  const Projection p = pca2(e);
  Canvas c(p.coords.col(0).minCoeff(), p.coords.col(0).maxCoeff(), p.coords.col(1).minCoeff(),
           p.coords.col(1).maxCoeff(), false);
  for (Eigen::Index i = 0; i < p.coords.rows(); ++i) {
    const auto r = static_cast<std::size_t>(e.rows[static_cast<std::size_t>(i)].region);
    c.dot(p.coords(i, 0), p.coords(i, 1), kPalette[r % std::size(kPalette)]);
  }
  std::vector<std::pair<std::string, std::string>> legend;
  for (std::size_t r = 0; r < e.regions.size(); ++r) {
    legend.emplace_back(e.regions[r].name, kPalette[r % std::size(kPalette)]);
  }
  c.legend(legend);
  return c.finish("Fused latent states", "PC1 (" + num(100 * p.explained[0]) + "%)",
                  "PC2 (" + num(100 * p.explained[1]) + "%)");
}

std::vector<PointEstimate> read_predictions_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line.rfind("window_id,t,x,y,x_hat,y_hat", 0) != 0) {
    throw std::invalid_argument("predictions: missing header");
  }
  std::vector<PointEstimate> out;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(row, cell, ',')) cells.push_back(cell);
    if (cells.size() < 6) throw std::invalid_argument("predictions: short row at line " + std::to_string(lineno));
    try {
      PointEstimate p;
      p.window_id = std::stoll(cells[0]);
      p.t = std::stod(cells[1]);
      p.truth = {std::stod(cells[2]), std::stod(cells[3])};
      p.estimate = {std::stod(cells[4]), std::stod(cells[5])};
      out.push_back(p);
    } catch (const std::exception&) {
      throw std::invalid_argument("predictions: bad number at line " + std::to_string(lineno));
    }
  }
  return out;
}

}  // namespace ndf::plot
