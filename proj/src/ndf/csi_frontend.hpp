#pragma once

#include <complex>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ndf/autodiff.hpp"
#include "ndf/nn.hpp"
#include "ndf/params.hpp"

namespace ndf::csi {

using cplx = std::complex<double>;

// Channel frequency response of one packet, laid out (tx, rx, subcarrier).
struct RawCsiFrame {
  double t = 0.0;
  int n_tx = 0;
  int n_rx = 0;
  int n_s = 0;
  std::vector<cplx> data;

  [[nodiscard]] std::size_t index(int i, int j, int k) const {
    return (static_cast<std::size_t>(i) * static_cast<std::size_t>(n_rx) + static_cast<std::size_t>(j)) *
               static_cast<std::size_t>(n_s) +
           static_cast<std::size_t>(k);
  }
  [[nodiscard]] cplx at(int i, int j, int k) const { return data[index(i, j, k)]; }
  void validate() const;
};

// Unwrapped phase, same layout as the frame.
struct PhaseTensor {
  int n_tx = 0;
  int n_rx = 0;
  int n_s = 0;
  std::vector<double> psi;
};

struct LineFit {
  double tau = 0.0;   // seconds
  double beta = 0.0;  // radians
};

// One fit per transmit antenna.
struct CalibrationFit {
  std::vector<LineFit> per_tx;
};

// Phase-corrected frame kept in polar form so magnitudes pass through untouched.
struct PolarCsi {
  int n_tx = 0;
  int n_rx = 0;
  int n_s = 0;
  std::vector<double> magnitude;
  std::vector<double> phase;
};

// Conjugate products of adjacent receive antennas: (tx, rx - 1, subcarrier).
struct CalibratedCsi {
  int n_tx = 0;
  int n_pairs = 0;
  int n_s = 0;
  std::vector<cplx> data;
};

PhaseTensor unwrap_phase(const RawCsiFrame& raw);

// Least-squares fit of psi(j, k) ~ 2 pi f_delta k tau + beta jointly over all
// receive antennas j (psi laid out rx-major, n_rx * n_s values).
LineFit fit_sto_line(std::span<const double> psi, int n_rx, int n_s, double f_delta);
CalibrationFit fit_sto(const PhaseTensor& psi, double f_delta);

PolarCsi remove_linear_phase(const RawCsiFrame& raw, const PhaseTensor& psi, const CalibrationFit& fit,
                             double f_delta);
CalibratedCsi conjugate_multiply(const PolarCsi& corrected);

// Rows ordered (tx, pair, subcarrier); columns re, im, arg in (-pi, pi], abs.
Mat complex_to_real(const CalibratedCsi& cal);

// unwrap -> fit -> remove -> conjugate multiply -> complex_to_real
Mat calibrate_to_real(const RawCsiFrame& raw, double f_delta);

// ---------------------------------------------------------------- autoencoder

struct CaeConfig {
  int in_channels = 4;
  int conv_channels = 8;
  int conv_layers = 3;
  int kernel = 4;
  int stride = 2;
  int padding = 1;
  int mlp_hidden = 64;
  int embed_dim = 36;
  int rows = 936;  // rows of the real matrix before padding
};

class Cae {
 public:
  static Cae create(const CaeConfig& cfg, std::uint64_t seed);

  [[nodiscard]] const CaeConfig& config() const { return cfg_; }
  [[nodiscard]] int padded_length() const { return padded_; }
  [[nodiscard]] int code_length() const { return code_len_; }
  [[nodiscard]] const ParamStore& params() const { return ps_; }
  ParamStore& params() { return ps_; }

  // Per-column standardization, fitted on training matrices.
  void fit_input_scaling(std::span<const Mat> frames);
  [[nodiscard]] Vec to_input(const Mat& real) const;  // channel-major, padded

  ad::Var encode(ad::Tape& t, ad::Var x) const;
  ad::Var decode(ad::Tape& t, ad::Var code) const;

  [[nodiscard]] Vec embed(const Mat& real) const;
  [[nodiscard]] double reconstruction_mse(const Mat& real) const;

  void save(const std::filesystem::path& dir) const;
  static Cae load(const std::filesystem::path& dir);

  // Serialized training settings, hashed into the manifest.
  std::string training_record;

 private:
  void build(std::mt19937_64& rng);

  CaeConfig cfg_;
  ParamStore ps_;
  int padded_ = 0;
  int code_len_ = 0;
  std::vector<int> conv_w_, conv_b_, deconv_w_, deconv_b_;
  std::vector<ad::ConvShape> conv_shapes_, deconv_shapes_;
  nn::Mlp enc_mlp_;
  nn::Mlp dec_mlp_;
  Vec col_mean_ = Vec::Zero(4);
  Vec col_scale_ = Vec::Ones(4);
};

struct CaeTrainConfig {
  int epochs = 30;
  int batch_size = 16;
  double learning_rate = 2e-3;
  std::uint64_t seed = 0;
};

struct CaeTrainResult {
  double initial_heldout_mse = 0.0;
  double final_heldout_mse = 0.0;
  std::vector<double> epoch_train_mse;
};

// Throws NumericError on a non-finite loss.
CaeTrainResult pretrain_cae(Cae& cae, std::span<const Mat> train, std::span<const Mat> heldout,
                            const CaeTrainConfig& cfg);

}  // namespace ndf::csi
