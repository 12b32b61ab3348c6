#pragma once

// Constrained Bayesian reconstruction of the photoelectron density matrix
// from subdiagonal traces.
//
// States are parameterized as rho = T T^dagger / tr(T T^dagger) with T lower
// triangular, so every estimate and every posterior sample is a valid
// density matrix by construction. The spectrometer response is folded into
// the forward map, which lets the estimator undo the apparent loss of
// coherence caused by finite resolution.

#include <cstdint>
#include <span>
#include <vector>

#include "kraken/extraction.hpp"
#include "kraken/forward_model.hpp"
#include "kraken/qstate.hpp"

namespace kraken {

struct EstimatorSettings {
  double prior_scale = 1.0;
  /// Floor on amplitude-ratio uncertainties (absolute) and on population
  /// uncertainties (relative to the largest population).
  double sigma_floor = 1e-3;
  /// Bins whose population is below this fraction of the maximum are
  /// dropped from the estimation window.
  double window_threshold = 1e-3;
  /// Phase terms are down-weighted where A < phase_snr * sigma_A.
  double phase_snr = 3.0;
  bool use_response = true;

  int map_max_iters = 5000;
  double map_tol = 1e-6;

  std::size_t n_samples = 1000;
  std::size_t n_warmup = 500;
  std::size_t n_leapfrog = 20;
  double step_size = 0.0;  // initial step; 0 picks one heuristically
  double target_accept = 0.75;
  std::size_t thin = 1;
  std::uint64_t seed = 1;

  void validate() const;
};

/// Lower-triangular factor T packed into n^2 reals: the n diagonal entries
/// first, then (re, im) of the strictly lower entries column by column.
///
/// Diagonal entries may be negative in the packed vector; T and the column
/// sign-flipped T give the same state, so canonical() flips columns to make
/// the diagonal nonnegative.
class CholeskyParam {
 public:
  explicit CholeskyParam(std::size_t n);
  CholeskyParam(std::size_t n, std::vector<double> values);

  /// Factor of a PSD matrix, scaled so that ||theta|| = radius.
  static CholeskyParam from_density(const DensityMatrix& rho, double radius);

  std::size_t dimension() const noexcept { return n_; }
  std::span<const double> values() const noexcept { return values_; }
  std::span<double> values() noexcept { return values_; }

  ComplexMatrix factor() const;
  CholeskyParam canonical() const;
  DensityMatrix reconstruct(const EnergyGrid& grid) const;

  static std::size_t parameter_count(std::size_t n) { return n * n; }
  static ComplexMatrix unpack(std::size_t n, std::span<const double> theta);

 private:
  std::size_t n_;
  std::vector<double> values_;
};

/// Cholesky factor of a Hermitian PSD matrix; pivots below
/// `threshold * max(diag)` are treated as zero, which keeps rank-deficient
/// inputs exact.
ComplexMatrix cholesky_factor_psd(const ComplexMatrix& a, double threshold = 1e-14);

/// Traces + spectrometer response + the estimation window.
class MeasurementSet {
 public:
  MeasurementSet(std::vector<SubdiagonalTrace> traces, ResponseFunction response,
                 double window_threshold = 1e-3);

  const std::vector<SubdiagonalTrace>& traces() const noexcept { return traces_; }
  const ResponseFunction& response() const noexcept { return response_; }
  /// Grid of all zero-beat populations.
  const EnergyGrid& full_grid() const noexcept { return full_grid_; }
  /// Estimation window (contiguous sub-range of full_grid()).
  const EnergyGrid& grid() const noexcept { return window_; }
  std::size_t window_offset() const noexcept { return window_offset_; }
  /// Median relative dc uncertainty per trace.
  const std::vector<double>& noise_estimates() const noexcept { return noise_; }

 private:
  std::vector<SubdiagonalTrace> traces_;
  ResponseFunction response_;
  EnergyGrid full_grid_;
  EnergyGrid window_;
  std::size_t window_offset_ = 0;
  std::vector<double> noise_;
};

/// Model prediction for one trace, in the same (A, phi, dc) form extraction
/// produces. `coherence` is A·e^{i phi} / dc anchored to the model's own
/// populations, i.e. the calibrated subdiagonal element.
struct PredictedTrace {
  double beat_energy;
  std::size_t offset;
  std::size_t first_row;  // window row of the first bin
  std::vector<double> amplitude;
  std::vector<double> phase;
  std::vector<double> dc;
  std::vector<Complex> coherence;
};

/// Gaussian likelihood on per-bin amplitude ratios A/dc and (wrapped) phases
/// of every beat trace, plus the zero-beat population profile, with a
/// standard normal prior on the Cholesky parameters.
class PosteriorModel {
 public:
  PosteriorModel(const MeasurementSet& data, const EstimatorSettings& settings);

  std::size_t dimension() const noexcept { return grid_.size(); }
  std::size_t parameter_count() const noexcept { return grid_.size() * grid_.size(); }
  const EnergyGrid& grid() const noexcept { return grid_; }
  double prior_scale() const noexcept { return prior_scale_; }
  std::size_t bin_count() const noexcept { return bin_count_; }

  /// Log-likelihood of a Hermitian matrix on grid(); if `gradient` is
  /// non-null it receives d/dRe + i d/dIm for every element.
  double log_likelihood(const ComplexMatrix& rho, ComplexMatrix* gradient = nullptr) const;

  double log_likelihood_theta(std::span<const double> theta,
                              std::span<double> gradient = {}) const;
  double log_prior(std::span<const double> theta, std::span<double> gradient = {}) const;
  double log_posterior(std::span<const double> theta) const;
  /// Returns log_posterior and writes its gradient.
  double log_posterior_gradient(std::span<const double> theta,
                                std::span<double> gradient) const;

  std::vector<PredictedTrace> forward_predict(const DensityMatrix& rho) const;

  /// Mean squared normalized amplitude-ratio residual per used bin.
  double chi2_per_bin(const DensityMatrix& rho) const;

 private:
  struct TraceTerm {
    double beat_energy;
    std::size_t offset;
    std::size_t first_row;
    double w1;
    double w2;
    Eigen::MatrixXd blur;  // bins x bins
    std::vector<double> ratio;
    std::vector<double> ratio_sigma;
    std::vector<double> phase;
    std::vector<double> phase_sigma;
    std::vector<double> phase_weight;
    std::vector<double> use;  // 0 or 1
  };

  EnergyGrid grid_;
  double prior_scale_;
  Eigen::MatrixXd population_blur_;
  std::vector<double> population_;
  std::vector<double> population_sigma_;
  std::vector<TraceTerm> terms_;
  std::size_t bin_count_ = 0;
};

std::vector<PredictedTrace> forward_predict(const DensityMatrix& rho,
                                            const MeasurementSet& data,
                                            const EstimatorSettings& settings = {});

struct MapResult {
  DensityMatrix estimate;
  std::vector<double> theta;
  bool converged = false;
  int iterations = 0;
  double gradient_norm = 0.0;
  double objective = 0.0;
};

/// Initial parameters from the PSD projection of the raw assembled matrix.
std::vector<double> default_initial_theta(const PosteriorModel& model,
                                          const MeasurementSet& data);

/// L-BFGS ascent. The prior is isotropic and the likelihood depends only on
/// the direction of theta, so the objective is the posterior density in
/// polar coordinates, log_posterior + (D - 1) log ||theta||; its maximizer
/// direction is the most probable state.
MapResult map_estimate(const PosteriorModel& model, std::span<const double> init,
                       int max_iters, double tol);

struct Interval {
  double mean;
  double lo;
  double hi;
};

/// Empirical mean and 2.5 / 97.5 percentiles; needs >= 100 values.
Interval credible_interval(std::span<const double> values);
Interval purity_ci(std::span<const DensityMatrix> samples);
Interval concurrence_ci(std::span<const DensityMatrix> samples);

struct HmcDiagnostics {
  double acceptance_rate = 0.0;  // post-warmup
  double warmup_acceptance = 0.0;
  double step_size = 0.0;
  std::size_t chain_length = 0;  // post-warmup iterations
  std::size_t warmup = 0;
  std::size_t n_leapfrog = 0;
  std::size_t divergences = 0;
  std::uint64_t seed = 0;
};

struct HmcChain {
  std::vector<std::vector<double>> thetas;  // thinned, post-warmup
  HmcDiagnostics diagnostics;
};

/// Hamiltonian Monte Carlo with identity mass matrix and a step size tuned
/// by dual averaging during warmup. Throws ErrorKind::Tuning if the
/// post-warmup acceptance rate is below 0.2.
HmcChain hmc_sample(const PosteriorModel& model, std::span<const double> init,
                    const EstimatorSettings& settings);

/// H(end) - H(start) for one leapfrog trajectory.
double leapfrog_energy_error(const PosteriorModel& model, std::span<const double> theta,
                             std::span<const double> momentum, double step_size,
                             std::size_t n_steps);

struct ReconstructionResult {
  DensityMatrix map_estimate;
  bool map_converged = false;
  int map_iterations = 0;
  std::vector<DensityMatrix> samples;
  std::vector<double> sample_purity;
  std::vector<double> sample_concurrence;
  Interval purity;
  Interval concurrence;
  HmcDiagnostics diagnostics;
};

/// MAP estimate followed by HMC sampling started at the MAP point. All
/// matrices are reported on the full population grid.
ReconstructionResult reconstruct(const MeasurementSet& data,
                                 const EstimatorSettings& settings);

}  // namespace kraken
