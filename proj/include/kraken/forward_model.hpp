#pragma once

// Ground-truth photoelectron states and synthesis of bichromatic-probe
// spectrograms (probe beating, spectrometer response, shot noise).

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "kraken/qstate.hpp"

namespace kraken {

/// Ionizing XUV pulse. The spectral phase is (gdd/2)·((e - e_c)/hbar)^2 with
/// e_c the channel's central kinetic energy; gdd is in fs^2.
struct XuvPulse {
  double central_photon_energy = 30.0;  // eV
  double intensity_fwhm = 0.144;        // eV
  double gdd = 0.0;                     // fs^2

  double sigma() const;  // intensity standard deviation, eV
};

/// Bichromatic probe: fixed component hbar*w1, tunable hbar*w2 <= hbar*w1.
struct ProbePair {
  double omega1_energy = 1.55;  // eV
  double omega2_energy = 1.55;  // eV
  double relative_amplitude = 1.0;  // field amplitude of w2 relative to w1

  double beat_energy() const { return omega1_energy - omega2_energy; }
  /// Beat angular frequency in rad/fs.
  double beat_frequency() const;
  void validate() const;
};

struct Helium {
  double ip = 24.59;
};

/// Argon with spin-orbit split ionic ground state. The ion is traced out:
/// the photoelectron state is (2/3)|psi_3/2><psi_3/2| + (1/3)|psi_1/2><psi_1/2|.
struct Argon {
  static constexpr double kWeight3Half = 2.0 / 3.0;
  static constexpr double kWeight1Half = 1.0 / 3.0;

  double ip_3half = 15.76;
  double so_splitting = 0.177;
};

using TargetModel = std::variant<Helium, Argon>;

struct Channel {
  std::string name;
  double weight;
  double center;  // central kinetic energy, eV
};

std::vector<Channel> channels(const TargetModel& target, const XuvPulse& xuv);

double sigma_from_fwhm(double fwhm);
double fwhm_from_sigma(double sigma);

/// Intensity standard deviation that gives the two-channel argon mixture a
/// purity of `purity` for zero chirp: 5/9 + (4/9)·exp(-so^2 / (4 sigma^2)).
double argon_sigma_for_purity(double purity, double so_splitting);

/// Spectrometer energy response.
class ResponseFunction {
 public:
  enum class Kind { Gaussian, Tabulated };

  static ResponseFunction gaussian(double fwhm);
  static ResponseFunction identity() { return gaussian(0.0); }
  /// Odd-length kernel centered on the middle sample, sampled at the grid
  /// spacing. Normalized to unit sum on construction.
  static ResponseFunction tabulated(std::vector<double> samples);

  Kind kind() const noexcept { return kind_; }
  double fwhm() const noexcept { return fwhm_; }
  const std::vector<double>& samples() const noexcept { return samples_; }

  /// Normalized kernel at spacing `delta_epsilon`, length 2m+1.
  std::vector<double> kernel(double delta_epsilon) const;

 private:
  ResponseFunction(Kind kind, double fwhm, std::vector<double> samples)
      : kind_(kind), fwhm_(fwhm), samples_(std::move(samples)) {}

  Kind kind_;
  double fwhm_;
  std::vector<double> samples_;
};

/// Discrete convolution operator on `n` bins. Row i gathers kernel weights
/// from in-range bins and renormalizes them to unit sum.
Eigen::MatrixXd convolution_matrix(std::size_t n, std::span<const double> kernel);

/// Blurs `profile` (sampled on `grid`) with the response kernel.
std::vector<double> apply_response(std::span<const double> profile,
                                   const EnergyGrid& grid,
                                   const ResponseFunction& response);

Wavepacket channel_wavepacket(const EnergyGrid& grid, double center,
                              const XuvPulse& xuv);

DensityMatrix model_density_matrix(const TargetModel& target, const XuvPulse& xuv,
                                   const EnergyGrid& grid);

/// Photoelectron counts vs (delay, final energy) for one probe setting.
struct Spectrogram {
  ProbePair probe;
  std::vector<double> delays;  // fs, strictly increasing
  EnergyGrid final_energies;
  Eigen::MatrixXd counts;      // delays x energies, nonnegative
  std::optional<std::uint64_t> rng_seed;
  double noise_scale = 0.0;

  void validate() const;
};

std::vector<double> delay_axis(double start, double stop, double step);

/// Subdiagonal offset (in bins) for a beat energy, and its rounding residual.
struct SubdiagonalOffset {
  std::size_t offset;
  double residual;  // fractional offset - offset
};
SubdiagonalOffset subdiagonal_offset(double beat_energy, double delta_epsilon);

/// Synthesizes a spectrogram. Final energies are e_f = e1 + hbar*w1 for the
/// grid points e1 whose partner e2 = e1 + hbar*dw (rounded to the nearest
/// bin) stays on the grid. Multiplicative Gaussian noise is applied after
/// the response blur; a seed is required when noise_scale > 0.
Spectrogram simulate_spectrogram(const DensityMatrix& rho, const ProbePair& probe,
                                 std::span<const double> delays,
                                 const ResponseFunction& response,
                                 double noise_scale,
                                 std::optional<std::uint64_t> seed);

}  // namespace kraken
