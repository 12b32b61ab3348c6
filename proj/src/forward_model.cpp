#include "kraken/forward_model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "kraken/errors.hpp"

namespace kraken {

namespace {

const double kFwhmPerSigma = 2.0 * std::sqrt(2.0 * std::log(2.0));

// Gaussian kernels are truncated at this many standard deviations.
constexpr double kKernelSigmas = 5.0;

}  // namespace

double sigma_from_fwhm(double fwhm) { return fwhm / kFwhmPerSigma; }
double fwhm_from_sigma(double sigma) { return sigma * kFwhmPerSigma; }

double XuvPulse::sigma() const { return sigma_from_fwhm(intensity_fwhm); }

double ProbePair::beat_frequency() const { return beat_energy() / kHbarEvFs; }

void ProbePair::validate() const {
  if (!(omega1_energy > 0.0) || !std::isfinite(omega1_energy)) {
    fail(ErrorKind::Configuration, "probe: omega1_energy must be > 0");
  }
  if (!(omega2_energy > 0.0) || !std::isfinite(omega2_energy)) {
    fail(ErrorKind::Configuration, "probe: omega2_energy must be > 0");
  }
  if (beat_energy() < 0.0) {
    fail(ErrorKind::Configuration,
         "probe: omega2_energy must not exceed omega1_energy");
  }
  if (!(relative_amplitude > 0.0) || !std::isfinite(relative_amplitude)) {
    fail(ErrorKind::Configuration, "probe: relative_amplitude must be > 0");
  }
}

std::vector<Channel> channels(const TargetModel& target, const XuvPulse& xuv) {
  if (!(xuv.intensity_fwhm > 0.0)) {
    fail(ErrorKind::Configuration, "xuv: intensity_fwhm must be > 0");
  }
  if (const auto* he = std::get_if<Helium>(&target)) {
    if (!(he->ip > 0.0)) fail(ErrorKind::Configuration, "helium: ip must be > 0");
    if (xuv.central_photon_energy <= he->ip) {
      fail(ErrorKind::Configuration,
           "xuv: central_photon_energy must exceed the helium ionization threshold");
    }
    return {{"He+ 1s", 1.0, xuv.central_photon_energy - he->ip}};
  }
  const auto& ar = std::get<Argon>(target);
  if (!(ar.ip_3half > 0.0)) fail(ErrorKind::Configuration, "argon: ip_3half must be > 0");
  if (!(ar.so_splitting > 0.0)) {
    fail(ErrorKind::Configuration, "argon: so_splitting must be > 0");
  }
  if (xuv.central_photon_energy <= ar.ip_3half + ar.so_splitting) {
    fail(ErrorKind::Configuration,
         "xuv: central_photon_energy must exceed the argon 2P1/2 threshold");
  }
  const double c32 = xuv.central_photon_energy - ar.ip_3half;
  return {{"Ar+ 2P3/2", Argon::kWeight3Half, c32},
          {"Ar+ 2P1/2", Argon::kWeight1Half, c32 - ar.so_splitting}};
}

double argon_sigma_for_purity(double purity, double so_splitting) {
  const double floor = 5.0 / 9.0;
  if (!(purity > floor && purity < 1.0)) {
    fail(ErrorKind::Configuration,
         "argon_sigma_for_purity: purity must lie in (5/9, 1)");
  }
  if (!(so_splitting > 0.0)) {
    fail(ErrorKind::Configuration, "argon_sigma_for_purity: so_splitting must be > 0");
  }
  const double overlap2 = (purity - floor) / (4.0 / 9.0);
  return so_splitting / (2.0 * std::sqrt(-std::log(overlap2)));
}

ResponseFunction ResponseFunction::gaussian(double fwhm) {
  if (!(fwhm >= 0.0) || !std::isfinite(fwhm)) {
    fail(ErrorKind::Configuration, "response: gaussian fwhm must be >= 0");
  }
  return ResponseFunction(Kind::Gaussian, fwhm, {});
}

ResponseFunction ResponseFunction::tabulated(std::vector<double> samples) {
  if (samples.empty() || samples.size() % 2 == 0) {
    fail(ErrorKind::Configuration,
         "response: tabulated kernel must have an odd number of samples");
  }
  double sum = 0.0;
  for (double s : samples) {
    if (!(s >= 0.0) || !std::isfinite(s)) {
      fail(ErrorKind::Configuration, "response: kernel samples must be finite and >= 0");
    }
    sum += s;
  }
  if (!(sum > 0.0)) fail(ErrorKind::Configuration, "response: kernel sums to zero");
  for (double& s : samples) s /= sum;
  return ResponseFunction(Kind::Tabulated, 0.0, std::move(samples));
}

std::vector<double> ResponseFunction::kernel(double delta_epsilon) const {
  if (kind_ == Kind::Tabulated) return samples_;
  if (fwhm_ == 0.0) return {1.0};
  const double sigma = sigma_from_fwhm(fwhm_);
  const auto half = static_cast<std::size_t>(std::ceil(kKernelSigmas * sigma / delta_epsilon));
  std::vector<double> k(2 * half + 1);
  for (std::size_t j = 0; j < k.size(); ++j) {
    const double x = (static_cast<double>(j) - static_cast<double>(half)) * delta_epsilon;
    k[j] = std::exp(-0.5 * x * x / (sigma * sigma));
  }
  const double sum = std::accumulate(k.begin(), k.end(), 0.0);
  for (double& v : k) v /= sum;
  return k;
}

Eigen::MatrixXd convolution_matrix(std::size_t n, std::span<const double> kernel) {
  if (kernel.size() % 2 == 0) {
    fail(ErrorKind::Configuration, "convolution: kernel length must be odd");
  }
  const std::size_t half = kernel.size() / 2;
  if (half >= n) {
    std::ostringstream os;
    os << "convolution: kernel half-width " << half << " bins is not narrower than the "
       << n << "-bin grid";
    fail(ErrorKind::Configuration, os.str());
  }
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n),
                                            static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t lo = i >= half ? i - half : 0;
    const std::size_t hi = std::min(n - 1, i + half);
    double sum = 0.0;
    for (std::size_t j = lo; j <= hi; ++j) sum += kernel[j + half - i];
    for (std::size_t j = lo; j <= hi; ++j) {
      c(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          kernel[j + half - i] / sum;
    }
  }
  return c;
}

std::vector<double> apply_response(std::span<const double> profile,
                                   const EnergyGrid& grid,
                                   const ResponseFunction& response) {
  if (profile.size() != grid.size()) {
    fail(ErrorKind::Structural, "apply_response: profile length != grid size");
  }
  const std::vector<double> k = response.kernel(grid.delta_epsilon());
  const Eigen::MatrixXd c = convolution_matrix(grid.size(), k);
  const Eigen::Map<const Eigen::VectorXd> x(profile.data(),
                                            static_cast<Eigen::Index>(profile.size()));
  const Eigen::VectorXd y = c * x;
  return {y.data(), y.data() + y.size()};
}

Wavepacket channel_wavepacket(const EnergyGrid& grid, double center,
                              const XuvPulse& xuv) {
  const double sigma = xuv.sigma();
  ComplexVector a(static_cast<Eigen::Index>(grid.size()));
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double x = grid.point(i) - center;
    const double w = x / kHbarEvFs;
    const double phase = 0.5 * xuv.gdd * w * w;
    a(static_cast<Eigen::Index>(i)) =
        std::exp(-x * x / (4.0 * sigma * sigma)) * std::polar(1.0, phase);
  }
  const double norm = a.norm();
  if (!(norm > 0.0)) {
    fail(ErrorKind::Configuration, "channel wavepacket vanishes on the grid");
  }
  a /= norm;
  return Wavepacket(grid, std::move(a));
}

DensityMatrix model_density_matrix(const TargetModel& target, const XuvPulse& xuv,
                                   const EnergyGrid& grid) {
  const double sigma = xuv.sigma();
  const double slack = 1e-9 * grid.delta_epsilon();
  const auto chans = channels(target, xuv);
  for (const Channel& ch : chans) {
    const double lo = ch.center - 3.0 * sigma;
    const double hi = ch.center + 3.0 * sigma;
    if (grid.epsilon_min() > lo + slack || grid.epsilon_max() < hi - slack) {
      std::ostringstream os;
      os << "model_density_matrix: grid [" << grid.epsilon_min() << ", "
         << grid.epsilon_max() << "] eV does not cover +-3 sigma of channel "
         << ch.name << " [" << lo << ", " << hi << "] eV";
      fail(ErrorKind::Configuration, os.str());
    }
  }
  const auto n = static_cast<Eigen::Index>(grid.size());
  ComplexMatrix rho = ComplexMatrix::Zero(n, n);
  for (const Channel& ch : chans) {
    const Wavepacket psi = channel_wavepacket(grid, ch.center, xuv);
    rho += ch.weight * (psi.amplitudes() * psi.amplitudes().adjoint());
  }
  rho = 0.5 * (rho + rho.adjoint());
  rho /= rho.trace().real();
  return DensityMatrix::validated(grid, std::move(rho), "model_density_matrix");
}

void Spectrogram::validate() const {
  probe.validate();
  if (delays.empty()) fail(ErrorKind::DataValidation, "spectrogram: no delays");
  for (std::size_t t = 1; t < delays.size(); ++t) {
    if (!(delays[t] > delays[t - 1])) {
      fail(ErrorKind::DataValidation, "spectrogram: delays must be strictly increasing");
    }
  }
  if (counts.rows() != static_cast<Eigen::Index>(delays.size()) ||
      counts.cols() != static_cast<Eigen::Index>(final_energies.size())) {
    fail(ErrorKind::Structural, "spectrogram: counts shape does not match axes");
  }
  if (!counts.allFinite() || (counts.array() < 0.0).any()) {
    fail(ErrorKind::DataValidation, "spectrogram: counts must be finite and >= 0");
  }
  if (!(noise_scale >= 0.0)) {
    fail(ErrorKind::DataValidation, "spectrogram: noise_scale must be >= 0");
  }
}

std::vector<double> delay_axis(double start, double stop, double step) {
  if (!(step > 0.0) || !(stop > start)) {
    fail(ErrorKind::Configuration, "delays: need step > 0 and stop > start");
  }
  const auto count = static_cast<std::size_t>(std::floor((stop - start) / step + 1e-9)) + 1;
  std::vector<double> out(count);
  for (std::size_t t = 0; t < count; ++t) out[t] = start + static_cast<double>(t) * step;
  return out;
}

SubdiagonalOffset subdiagonal_offset(double beat_energy, double delta_epsilon) {
  if (!(beat_energy >= 0.0)) {
    fail(ErrorKind::Configuration, "subdiagonal offset: beat energy must be >= 0");
  }
  const double x = beat_energy / delta_epsilon;
  const double k = std::round(x);
  return {static_cast<std::size_t>(k), x - k};
}

Spectrogram simulate_spectrogram(const DensityMatrix& rho, const ProbePair& probe,
                                 std::span<const double> delays,
                                 const ResponseFunction& response,
                                 double noise_scale,
                                 std::optional<std::uint64_t> seed) {
  probe.validate();
  if (!(noise_scale >= 0.0) || !std::isfinite(noise_scale)) {
    fail(ErrorKind::Configuration, "simulate: noise_scale must be >= 0");
  }
  if (noise_scale > 0.0 && !seed) {
    fail(ErrorKind::Configuration, "simulate: a seed is required when noise_scale > 0");
  }
  const EnergyGrid& grid = rho.grid();
  const auto [k, residual] = subdiagonal_offset(probe.beat_energy(), grid.delta_epsilon());
  (void)residual;
  if (k + 2 > grid.size()) {
    std::ostringstream os;
    os << "simulate: beat energy " << probe.beat_energy()
       << " eV leaves no final energy whose partner e2 lies on the "
       << grid.size() << "-point grid";
    fail(ErrorKind::Configuration, os.str());
  }
  const std::size_t nf = grid.size() - k;
  Spectrogram spec{probe,
                   std::vector<double>(delays.begin(), delays.end()),
                   grid.subgrid(0, nf).shifted(probe.omega1_energy),
                   Eigen::MatrixXd(static_cast<Eigen::Index>(delays.size()),
                                   static_cast<Eigen::Index>(nf)),
                   seed,
                   noise_scale};

  const double w1 = 1.0;
  const double w2 = probe.relative_amplitude;
  const double dw = probe.beat_frequency();
  Eigen::VectorXd dc(static_cast<Eigen::Index>(nf));
  ComplexVector coh(static_cast<Eigen::Index>(nf));
  for (std::size_t i = 0; i < nf; ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    dc(ii) = w1 * w1 * rho(i, i).real() + w2 * w2 * rho(i + k, i + k).real();
    coh(ii) = 2.0 * w1 * w2 * rho(i, i + k);
  }
  const Eigen::MatrixXd blur = convolution_matrix(nf, response.kernel(grid.delta_epsilon()));
  for (std::size_t t = 0; t < delays.size(); ++t) {
    const Complex beat = std::polar(1.0, dw * delays[t]);
    const Eigen::VectorXd ideal = dc + (coh * beat).real();
    spec.counts.row(static_cast<Eigen::Index>(t)) = (blur * ideal).transpose();
  }
  if (noise_scale > 0.0) {
    std::mt19937_64 rng(*seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (Eigen::Index t = 0; t < spec.counts.rows(); ++t) {
      for (Eigen::Index i = 0; i < spec.counts.cols(); ++i) {
        spec.counts(t, i) *= 1.0 + noise_scale * normal(rng);
      }
    }
  }
  spec.counts = spec.counts.cwiseMax(0.0);
  spec.validate();
  return spec;
}

}  // namespace kraken
