#pragma once

namespace kraken {

/// Reduced Planck constant in eV·fs.
inline constexpr double kHbarEvFs = 0.6582119569;

/// Numerical tolerances shared by every module.
struct Tolerances {
  /// Hermiticity, relative to max |element|.
  double hermitian = 1e-12;
  /// |tr(rho) - 1|.
  double trace = 1e-10;
  /// Smallest admissible eigenvalue is -psd.
  double psd = 1e-8;
  /// | ||psi||^2 - 1 | for wavepackets.
  double norm = 1e-10;
  /// ||A v - lambda v|| <= eigen_residual * ||A||.
  double eigen_residual = 1e-9;
};

inline constexpr Tolerances kTolerances{};

}  // namespace kraken
