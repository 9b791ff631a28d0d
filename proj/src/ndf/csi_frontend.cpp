#include "ndf/csi_frontend.hpp"

#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>
#include <string>

#include "ndf/errors.hpp"
#include "ndf/optim.hpp"
#include "ndf/rng.hpp"
#include "ndf/serialize.hpp"

namespace ndf::csi {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kTwoPi = 2.0 * std::numbers::pi;

std::string idx_str(int i, int j, int k) {
  return "(" + std::to_string(i) + ", " + std::to_string(j) + ", " + std::to_string(k) + ")";
}

}  // namespace

void RawCsiFrame::validate() const {
  if (n_tx <= 0 || n_rx <= 0 || n_s <= 0) throw std::invalid_argument("raw csi: non-positive shape");
  if (data.size() != static_cast<std::size_t>(n_tx) * static_cast<std::size_t>(n_rx) * static_cast<std::size_t>(n_s)) {
    throw std::invalid_argument("raw csi: data size does not match shape");
  }
  for (const auto& c : data) {
    if (!std::isfinite(c.real()) || !std::isfinite(c.imag())) throw std::invalid_argument("raw csi: non-finite entry");
  }
}

PhaseTensor unwrap_phase(const RawCsiFrame& raw) {
  raw.validate();
  PhaseTensor out{raw.n_tx, raw.n_rx, raw.n_s, std::vector<double>(raw.data.size())};
  for (int i = 0; i < raw.n_tx; ++i) {
    for (int j = 0; j < raw.n_rx; ++j) {
      double offset = 0.0;
      double prev = 0.0;
      for (int k = 0; k < raw.n_s; ++k) {
        const cplx c = raw.at(i, j, k);
        if (std::abs(c) == 0.0) throw std::invalid_argument("unwrap_phase: zero magnitude at " + idx_str(i, j, k));
        const double a = std::arg(c);
        if (k > 0) {
          const double d = a - prev;
          double dmod = std::fmod(d + kPi, kTwoPi);
          if (dmod < 0.0) dmod += kTwoPi;
          dmod -= kPi;
          if (dmod == -kPi && d > 0.0) dmod = kPi;
          if (std::abs(d) >= kPi) offset += dmod - d;
        }
        prev = a;
        out.psi[raw.index(i, j, k)] = a + offset;
      }
    }
  }
  return out;
}

LineFit fit_sto_line(std::span<const double> psi, int n_rx, int n_s, double f_delta) {
  if (n_s < 2) throw std::invalid_argument("fit_sto_line: need at least two subcarriers");
  if (n_rx < 1 || psi.size() != static_cast<std::size_t>(n_rx) * static_cast<std::size_t>(n_s)) {
    throw std::invalid_argument("fit_sto_line: phase size does not match shape");
  }
  if (!(f_delta > 0.0)) throw std::invalid_argument("fit_sto_line: subcarrier spacing must be positive");
  // Regress on the subcarrier index, then convert the slope to a delay.
  const double k_mean = 0.5 * static_cast<double>(n_s - 1);
  const double y_mean = std::accumulate(psi.begin(), psi.end(), 0.0) / static_cast<double>(psi.size());
  double sxy = 0.0;
  double sxx = 0.0;
  for (int j = 0; j < n_rx; ++j) {
    for (int k = 0; k < n_s; ++k) {
      const double dx = static_cast<double>(k) - k_mean;
      sxy += dx * (psi[static_cast<std::size_t>(j * n_s + k)] - y_mean);
      sxx += dx * dx;
    }
  }
  const double slope = sxy / sxx;
  LineFit fit;
  fit.tau = slope / (kTwoPi * f_delta);
  fit.beta = y_mean - slope * k_mean;
  return fit;
}

CalibrationFit fit_sto(const PhaseTensor& psi, double f_delta) {
  CalibrationFit out;
  const std::size_t block = static_cast<std::size_t>(psi.n_rx) * static_cast<std::size_t>(psi.n_s);
  for (int i = 0; i < psi.n_tx; ++i) {
    out.per_tx.push_back(
        fit_sto_line(std::span<const double>(psi.psi).subspan(static_cast<std::size_t>(i) * block, block), psi.n_rx,
                     psi.n_s, f_delta));
  }
  return out;
}

PolarCsi remove_linear_phase(const RawCsiFrame& raw, const PhaseTensor& psi, const CalibrationFit& fit,
                             double f_delta) {
  if (psi.psi.size() != raw.data.size() || static_cast<int>(fit.per_tx.size()) != raw.n_tx) {
    throw std::invalid_argument("remove_linear_phase: fit does not match frame");
  }
  PolarCsi out{raw.n_tx, raw.n_rx, raw.n_s, std::vector<double>(raw.data.size()), std::vector<double>(raw.data.size())};
  for (int i = 0; i < raw.n_tx; ++i) {
    const double step = kTwoPi * f_delta * fit.per_tx[static_cast<std::size_t>(i)].tau;
    for (int j = 0; j < raw.n_rx; ++j) {
      for (int k = 0; k < raw.n_s; ++k) {
        const auto idx = raw.index(i, j, k);
        out.magnitude[idx] = std::abs(raw.data[idx]);
        out.phase[idx] = psi.psi[idx] - step * static_cast<double>(k);
      }
    }
  }
  return out;
}

CalibratedCsi conjugate_multiply(const PolarCsi& c) {
  if (c.n_rx < 2) throw std::invalid_argument("conjugate_multiply: need at least two receive antennas");
  CalibratedCsi out{c.n_tx, c.n_rx - 1, c.n_s, {}};
  out.data.reserve(static_cast<std::size_t>(c.n_tx) * static_cast<std::size_t>(c.n_rx - 1) * static_cast<std::size_t>(c.n_s));
  auto at = [&](int i, int j, int k) {
    return (static_cast<std::size_t>(i) * static_cast<std::size_t>(c.n_rx) + static_cast<std::size_t>(j)) *
               static_cast<std::size_t>(c.n_s) +
           static_cast<std::size_t>(k);
  };
  for (int i = 0; i < c.n_tx; ++i) {
    for (int j = 0; j + 1 < c.n_rx; ++j) {
      for (int k = 0; k < c.n_s; ++k) {
        const auto a = at(i, j, k);
        const auto b = at(i, j + 1, k);
        out.data.push_back(std::polar(c.magnitude[a] * c.magnitude[b], c.phase[a] - c.phase[b]));
      }
    }
  }
  return out;
}

Mat complex_to_real(const CalibratedCsi& cal) {
  Mat out(static_cast<Eigen::Index>(cal.data.size()), 4);
  for (std::size_t r = 0; r < cal.data.size(); ++r) {
    const cplx v = cal.data[r];
    double phase = std::arg(v);
    if (phase <= -kPi) phase = kPi;
    const auto row = static_cast<Eigen::Index>(r);
    out(row, 0) = v.real();
    out(row, 1) = v.imag();
    out(row, 2) = phase;
    out(row, 3) = std::abs(v);
  }
  return out;
}

Mat calibrate_to_real(const RawCsiFrame& raw, double f_delta) {
  const PhaseTensor psi = unwrap_phase(raw);
  const CalibrationFit fit = fit_sto(psi, f_delta);
  return complex_to_real(conjugate_multiply(remove_linear_phase(raw, psi, fit, f_delta)));
}

// ---------------------------------------------------------------- autoencoder

Cae Cae::create(const CaeConfig& cfg, std::uint64_t seed) {
  if (cfg.in_channels <= 0 || cfg.conv_channels <= 0 || cfg.conv_layers <= 0 || cfg.embed_dim <= 0 ||
      cfg.rows <= 0 || cfg.mlp_hidden <= 0) {
    throw std::invalid_argument("cae: dimensions must be positive");
  }
  if (cfg.kernel != 2 * cfg.stride || cfg.padding * 2 != cfg.kernel - cfg.stride) {
    throw std::invalid_argument("cae: only length-halving convolutions (kernel 2*stride) are supported");
  }
  Cae c;
  c.cfg_ = cfg;
  auto rng = make_rng(seed, {kTagCae});
  c.build(rng);
  return c;
}

void Cae::build(std::mt19937_64& rng) {
  ps_ = ParamStore();
  conv_w_.clear();
  conv_b_.clear();
  deconv_w_.clear();
  deconv_b_.clear();
  conv_shapes_.clear();
  deconv_shapes_.clear();
  int factor = 1;
  for (int l = 0; l < cfg_.conv_layers; ++l) factor *= cfg_.stride;
  padded_ = (cfg_.rows + factor - 1) / factor * factor;
  int length = padded_;
  int channels = cfg_.in_channels;
  for (int l = 0; l < cfg_.conv_layers; ++l) {
    ad::ConvShape s{channels, cfg_.conv_channels, cfg_.kernel, cfg_.stride, cfg_.padding, length, length / cfg_.stride};
    const std::string p = "cae.conv" + std::to_string(l);
    conv_w_.push_back(ps_.add(p + ".W", s.out_channels, static_cast<Eigen::Index>(s.in_channels) * s.kernel));
    conv_b_.push_back(ps_.add(p + ".b", s.out_channels, 1));
    init_uniform_fan_in(ps_.value(conv_w_.back()), rng);
    conv_shapes_.push_back(s);
    channels = cfg_.conv_channels;
    length /= cfg_.stride;
  }
  code_len_ = channels * length;
  enc_mlp_ = nn::Mlp::create(ps_, "cae.enc", {code_len_, cfg_.mlp_hidden, cfg_.mlp_hidden, cfg_.embed_dim}, rng);
  dec_mlp_ = nn::Mlp::create(ps_, "cae.dec", {cfg_.embed_dim, cfg_.mlp_hidden, cfg_.mlp_hidden, code_len_}, rng);
  for (int l = 0; l < cfg_.conv_layers; ++l) {
    const int out_ch = l + 1 == cfg_.conv_layers ? cfg_.in_channels : cfg_.conv_channels;
    ad::ConvShape s{cfg_.conv_channels, out_ch, cfg_.kernel, cfg_.stride, cfg_.padding, length, length * cfg_.stride};
    const std::string p = "cae.deconv" + std::to_string(l);
    deconv_w_.push_back(ps_.add(p + ".W", s.in_channels, static_cast<Eigen::Index>(s.out_channels) * s.kernel));
    deconv_b_.push_back(ps_.add(p + ".b", s.out_channels, 1));
    init_uniform_fan_in(ps_.value(deconv_w_.back()), rng);
    deconv_shapes_.push_back(s);
    length *= cfg_.stride;
  }
  col_mean_ = Vec::Zero(cfg_.in_channels);
  col_scale_ = Vec::Ones(cfg_.in_channels);
}

void Cae::fit_input_scaling(std::span<const Mat> frames) {
  if (frames.empty()) throw std::invalid_argument("cae: no frames to fit input scaling");
  Vec sum = Vec::Zero(cfg_.in_channels);
  Vec sq = Vec::Zero(cfg_.in_channels);
  double n = 0.0;
  for (const auto& f : frames) {
    if (f.cols() != cfg_.in_channels || f.rows() != cfg_.rows) throw std::invalid_argument("cae: frame shape mismatch");
    sum += f.colwise().sum().transpose();
    sq += f.array().square().colwise().sum().matrix().transpose();
    n += static_cast<double>(f.rows());
  }
  col_mean_ = sum / n;
  const Vec var = (sq / n).array() - col_mean_.array().square();
  col_scale_ = var.cwiseMax(0.0).cwiseSqrt();
  for (Eigen::Index c = 0; c < col_scale_.size(); ++c) {
    if (!(col_scale_[c] > 1e-12)) col_scale_[c] = 1.0;
  }
}

Vec Cae::to_input(const Mat& real) const {
  if (real.cols() != cfg_.in_channels || real.rows() != cfg_.rows) {
    throw std::invalid_argument("cae: expected a " + std::to_string(cfg_.rows) + "x" + std::to_string(cfg_.in_channels) +
                                " matrix, got " + std::to_string(real.rows()) + "x" + std::to_string(real.cols()));
  }
  Vec x = Vec::Zero(static_cast<Eigen::Index>(cfg_.in_channels) * padded_);
  for (int c = 0; c < cfg_.in_channels; ++c) {
    for (Eigen::Index r = 0; r < real.rows(); ++r) {
      x[c * padded_ + r] = (real(r, c) - col_mean_[c]) / col_scale_[c];
    }
  }
  return x;
}

ad::Var Cae::encode(ad::Tape& t, ad::Var x) const {
  for (std::size_t l = 0; l < conv_w_.size(); ++l) x = t.tanh(t.conv1d(conv_w_[l], conv_b_[l], x, conv_shapes_[l]));
  return enc_mlp_(t, x);
}

ad::Var Cae::decode(ad::Tape& t, ad::Var code) const {
  ad::Var x = t.tanh(dec_mlp_(t, code));
  for (std::size_t l = 0; l < deconv_w_.size(); ++l) {
    x = t.conv_transpose1d(deconv_w_[l], deconv_b_[l], x, deconv_shapes_[l]);
    if (l + 1 < deconv_w_.size()) x = t.tanh(x);
  }
  return x;
}

Vec Cae::embed(const Mat& real) const {
  ad::Tape t(&ps_);
  return t.value(encode(t, t.input(to_input(real))));
}

double Cae::reconstruction_mse(const Mat& real) const {
  ad::Tape t(&ps_);
  const Vec x = to_input(real);
  const Vec y = t.value(decode(t, encode(t, t.input(x))));
  return (y - x).squaredNorm() / static_cast<double>(x.size());
}

void Cae::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  json m;
  m["format"] = "ndf-cae";
  m["version"] = 1;
  m["config"] = {{"in_channels", cfg_.in_channels}, {"conv_channels", cfg_.conv_channels},
                 {"conv_layers", cfg_.conv_layers},  {"kernel", cfg_.kernel},
                 {"stride", cfg_.stride},            {"padding", cfg_.padding},
                 {"mlp_hidden", cfg_.mlp_hidden},    {"embed_dim", cfg_.embed_dim},
                 {"rows", cfg_.rows}};
  m["padded_length"] = padded_;
  m["input_mean"] = vec_to_json(col_mean_);
  m["input_scale"] = vec_to_json(col_scale_);
  m["tensors"] = param_layout(ps_);
  m["training"] = training_record.empty() ? json(nullptr) : json::parse(training_record);
  m["training_hash"] = hex64(fnv1a64(training_record));
  write_text_file(dir / "cae.json", m.dump(2) + "\n");
  write_param_blob(dir / "cae.bin", ps_);
}

Cae Cae::load(const std::filesystem::path& dir) {
  const json m = read_json_file(dir / "cae.json");
  if (m.value("format", "") != "ndf-cae") throw IoError("not a CAE checkpoint: " + dir.string());
  const auto& c = m.at("config");
  CaeConfig cfg;
  cfg.in_channels = c.at("in_channels");
  cfg.conv_channels = c.at("conv_channels");
  cfg.conv_layers = c.at("conv_layers");
  cfg.kernel = c.at("kernel");
  cfg.stride = c.at("stride");
  cfg.padding = c.at("padding");
  cfg.mlp_hidden = c.at("mlp_hidden");
  cfg.embed_dim = c.at("embed_dim");
  cfg.rows = c.at("rows");
  Cae cae = create(cfg, 0);
  check_param_layout(m.at("tensors"), cae.ps_);
  read_param_blob(dir / "cae.bin", cae.ps_);
  cae.col_mean_ = vec_from_json(m.at("input_mean"));
  cae.col_scale_ = vec_from_json(m.at("input_scale"));
  if (!m.at("training").is_null()) cae.training_record = m.at("training").dump();
  return cae;
}

CaeTrainResult pretrain_cae(Cae& cae, std::span<const Mat> train, std::span<const Mat> heldout,
                            const CaeTrainConfig& cfg) {
  if (train.empty()) throw std::invalid_argument("pretrain_cae: empty training set");
  if (cfg.epochs < 0 || cfg.batch_size <= 0 || !(cfg.learning_rate >= 0.0)) {
    throw std::invalid_argument("pretrain_cae: invalid training config");
  }
  cae.fit_input_scaling(train);
  std::vector<Vec> inputs;
  inputs.reserve(train.size());
  for (const auto& f : train) inputs.push_back(cae.to_input(f));

  auto heldout_mse = [&] {
    if (heldout.empty()) return 0.0;
    double s = 0.0;
    for (const auto& f : heldout) s += cae.reconstruction_mse(f);
    return s / static_cast<double>(heldout.size());
  };

  CaeTrainResult result;
  result.initial_heldout_mse = heldout_mse();
  Adamax opt(cae.params());
  GradStore grads(cae.params());
  GradStore batch(cae.params());
  ad::Tape tape(&cae.params());
  std::vector<std::size_t> order(inputs.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    auto rng = make_rng(cfg.seed, {kTagCae, static_cast<std::uint64_t>(epoch)});
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[static_cast<std::size_t>(rng() % i)]);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      batch.zero();
      for (std::size_t b = start; b < stop; ++b) {
        tape.reset();
        const Vec& x = inputs[order[b]];
        ad::Var in = tape.input(x);
        ad::Var rec = cae.decode(tape, cae.encode(tape, in));
        ad::Var loss = tape.affine_scalar(tape.sum(tape.square(tape.sub(rec, in))), 1.0 / static_cast<double>(x.size()), 0.0);
        const double value = loss.scalar();
        if (!std::isfinite(value)) {
          throw NumericError("pretrain_cae: non-finite reconstruction loss at epoch " + std::to_string(epoch) +
                             ", frame " + std::to_string(order[b]));
        }
        epoch_loss += value;
        grads.zero();
        tape.backward(loss, grads);
        batch.add(grads);
      }
      batch.scale(1.0 / static_cast<double>(stop - start));
      if (!batch.all_finite()) throw NumericError("pretrain_cae: non-finite gradient at epoch " + std::to_string(epoch));
      opt.step(cae.params(), batch, cfg.learning_rate);
    }
    result.epoch_train_mse.push_back(epoch_loss / static_cast<double>(order.size()));
  }
  result.final_heldout_mse = heldout_mse();
  json record{{"epochs", cfg.epochs}, {"batch_size", cfg.batch_size}, {"learning_rate", cfg.learning_rate},
              {"seed", cfg.seed}, {"train_frames", train.size()}};
  cae.training_record = record.dump();
  return result;
}

}  // namespace ndf::csi
