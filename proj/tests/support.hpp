#pragma once

// Shared fixtures for the unit tests and the acceptance runner.

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "kraken/estimation.hpp"
#include "kraken/extraction.hpp"
#include "kraken/forward_model.hpp"
#include "kraken/pipeline.hpp"
#include "kraken/scenario.hpp"

namespace ktest {

using namespace kraken;

inline const nlohmann::json& oracle() {
  static const nlohmann::json values = [] {
    std::ifstream in(KRAKEN_ORACLE_DIR "/values.json");
    return nlohmann::json::parse(in);
  }();
  return values;
}

inline ScenarioConfig noiseless(ScenarioConfig c) {
  c.noise_scale = 0.0;
  c.response = ResponseFunction::identity();
  return c;
}

inline std::vector<SubdiagonalTrace> traces_for(const ScenarioConfig& cfg) {
  return pipeline::extract(pipeline::simulate(cfg).spectrograms);
}

/// Random density matrix of rank `rank` on `grid`.
inline DensityMatrix random_state(const EnergyGrid& grid, std::size_t rank, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  const auto n = static_cast<Eigen::Index>(grid.size());
  ComplexMatrix a(n, static_cast<Eigen::Index>(rank));
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) a(i, j) = Complex(g(rng), g(rng));
  }
  ComplexMatrix rho = a * a.adjoint();
  rho = 0.5 * (rho + rho.adjoint());
  rho /= rho.trace().real();
  return DensityMatrix(grid, rho);
}

/// Eight-point problem used by the gradient checks: coarse grid, three
/// beat traces, mild noise and response.
inline ScenarioConfig small_scenario() {
  ScenarioConfig c = builtin_scenario("helium");
  c.name = "small";
  c.grid = EnergyGrid(5.41 - 3.5 * 0.06, 0.06, 8);
  c.xuv.intensity_fwhm = 0.144;
  c.beat_energies = {0.0, 0.06, 0.12, 0.18};
  c.response = ResponseFunction::gaussian(0.08);
  c.noise_scale = 0.02;
  return c;
}

inline PosteriorModel model_for(const ScenarioConfig& cfg, MeasurementSet* out_data = nullptr) {
  const MeasurementSet data = pipeline::measurement_set(traces_for(cfg), cfg);
  if (out_data) *out_data = data;
  return PosteriorModel(data, cfg.resolved_estimator());
}

/// Largest componentwise relative error between the analytic gradient and
/// central differences. Components are compared relative to
/// max(|g_i|, 1e-3 * max|g|) so that near-zero entries are judged on the
/// gradient's own scale.
inline double gradient_error(const PosteriorModel& model, const std::vector<double>& theta) {
  std::vector<double> g(theta.size());
  model.log_posterior_gradient(theta, g);
  double gmax = 0.0;
  for (double v : g) gmax = std::max(gmax, std::abs(v));
  double worst = 0.0;
  std::vector<double> t = theta;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double h = 1e-5 * std::max(1.0, std::abs(theta[i]));
    t[i] = theta[i] + h;
    const double up = model.log_posterior(t);
    t[i] = theta[i] - h;
    const double down = model.log_posterior(t);
    t[i] = theta[i];
    const double fd = (up - down) / (2.0 * h);
    const double denom = std::max(std::abs(g[i]), 1e-3 * gmax);
    worst = std::max(worst, std::abs(fd - g[i]) / denom);
  }
  return worst;
}

/// Median |dH| over `draws` random momenta at the given step size.
inline double median_energy_error(const PosteriorModel& model, const std::vector<double>& theta,
                                  double step, std::size_t n_steps, std::uint64_t seed,
                                  std::size_t draws = 41) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  std::vector<double> errors;
  std::vector<double> p(theta.size());
  for (std::size_t d = 0; d < draws; ++d) {
    for (double& v : p) v = g(rng);
    errors.push_back(std::abs(leapfrog_energy_error(model, theta, p, step, n_steps)));
  }
  std::nth_element(errors.begin(), errors.begin() + static_cast<long>(draws / 2), errors.end());
  return errors[draws / 2];
}

/// Ratio of median |dH| at step h to that at h/2 over a fixed trajectory
/// length, with h a quarter of the tuned step (second-order regime).
inline double quartering_ratio(const PosteriorModel& model, const std::vector<double>& theta,
                               double tuned_step) {
  const double h = 0.25 * tuned_step;
  return median_energy_error(model, theta, h, 80, 3) / median_energy_error(model, theta, 0.5 * h, 160, 3);
}

struct MonteCarloCalibration {
  double sigma_a_ratio;    // mean reported sigma_A / empirical std(A)
  double sigma_phi_ratio;
  double sigma_dc_ratio;
};

/// Refits `runs` noisy copies of one spectrogram and compares the reported
/// uncertainties with the empirical scatter, over the bins with a resolved
/// beat.
inline MonteCarloCalibration calibrate(const ScenarioConfig& cfg, std::size_t index,
                                       std::size_t runs) {
  const DensityMatrix truth = scenario_truth(cfg);
  std::vector<std::vector<double>> a, phi, dc, sa, sp, sd;
  for (std::size_t r = 0; r < runs; ++r) {
    const Spectrogram s = simulate_spectrogram(truth, cfg.probe(index), cfg.delays(), cfg.response,
                                               cfg.noise_scale, derive_seed(cfg.seed, 1000 + r));
    const SubdiagonalTrace t = fit_oscillation(s);
    a.push_back(t.amplitude);
    phi.push_back(t.phase);
    dc.push_back(t.dc);
    sa.push_back(t.amplitude_sigma);
    sp.push_back(t.phase_sigma);
    sd.push_back(t.dc_sigma);
  }
  const std::size_t nf = a.front().size();
  double ra = 0, rp = 0, rd = 0;
  std::size_t used = 0;
  for (std::size_t i = 0; i < nf; ++i) {
    double ma = 0, md = 0, msa = 0, msp = 0, msd = 0;
    for (std::size_t r = 0; r < runs; ++r) {
      ma += a[r][i];
      md += dc[r][i];
      msa += sa[r][i];
      msp += sp[r][i];
      msd += sd[r][i];
    }
    ma /= runs;
    md /= runs;
    msa /= runs;
    msp /= runs;
    msd /= runs;
    if (ma < 10.0 * msa) continue;  // phase is not Gaussian at low SNR
    // circular mean for the phase
    double cs = 0, sn = 0;
    for (std::size_t r = 0; r < runs; ++r) {
      cs += std::cos(phi[r][i]);
      sn += std::sin(phi[r][i]);
    }
    const double pm = std::atan2(sn, cs);
    double va = 0, vp = 0, vd = 0;
    for (std::size_t r = 0; r < runs; ++r) {
      va += (a[r][i] - ma) * (a[r][i] - ma);
      vd += (dc[r][i] - md) * (dc[r][i] - md);
      const double dp = std::remainder(phi[r][i] - pm, 2.0 * M_PI);
      vp += dp * dp;
    }
    const double n1 = static_cast<double>(runs - 1);
    ra += msa / std::sqrt(va / n1);
    rp += msp / std::sqrt(vp / n1);
    rd += msd / std::sqrt(vd / n1);
    ++used;
  }
  const double u = static_cast<double>(used);
  return {ra / u, rp / u, rd / u};
}

}  // namespace ktest
