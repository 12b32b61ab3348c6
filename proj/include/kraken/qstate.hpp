#pragma once

// Discretized continuous-variable quantum states on a photoelectron energy
// grid, and the metric algebra used to compare them.

#include <complex>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>

#include <Eigen/Dense>

#include "kraken/config.hpp"

namespace kraken {

using Complex = std::complex<double>;
using ComplexMatrix = Eigen::MatrixXcd;
using ComplexVector = Eigen::VectorXcd;

/// Uniform grid of photoelectron kinetic energies in eV.
class EnergyGrid {
 public:
  EnergyGrid(double epsilon_min, double delta_epsilon, std::size_t n_points);

  double epsilon_min() const noexcept { return epsilon_min_; }
  double delta_epsilon() const noexcept { return delta_epsilon_; }
  std::size_t size() const noexcept { return n_points_; }

  double point(std::size_t i) const noexcept {
    return epsilon_min_ + static_cast<double>(i) * delta_epsilon_;
  }
  double epsilon_max() const noexcept { return point(n_points_ - 1); }

  /// Index of the grid point at `energy`, if it lies on the grid within
  /// `tol_bins` of a point.
  std::optional<std::size_t> index_of(double energy,
                                      double tol_bins = 1e-6) const;

  EnergyGrid shifted(double offset) const;
  EnergyGrid subgrid(std::size_t first, std::size_t count) const;

  bool operator==(const EnergyGrid&) const = default;

 private:
  double epsilon_min_;
  double delta_epsilon_;
  std::size_t n_points_;
};

/// Result of checking the Hermitian / unit-trace / PSD invariants.
struct InvariantReport {
  double hermitian_error = 0.0;  // max |a_ij - conj(a_ji)| / max|a|
  double trace_error = 0.0;
  double min_eigenvalue = 0.0;
  bool hermitian = false;
  bool unit_trace = false;
  bool psd = false;

  bool ok() const noexcept { return hermitian && unit_trace && psd; }
  std::string describe() const;
};

/// Density matrix rho(e1, e2) sampled on an EnergyGrid with unit trace
/// (grid spacing folded into the normalization).
///
/// Construction only checks shapes; producers call require_valid() before
/// handing a matrix out. Raw assembled matrices are the one place where an
/// instance may legitimately be indefinite.
class DensityMatrix {
 public:
  DensityMatrix(EnergyGrid grid, ComplexMatrix elements);

  /// Constructs and checks every invariant, throwing ErrorKind::Numerical.
  static DensityMatrix validated(EnergyGrid grid, ComplexMatrix elements,
                                 std::string_view producer);

  const EnergyGrid& grid() const noexcept { return grid_; }
  const ComplexMatrix& elements() const noexcept { return elements_; }
  std::size_t size() const noexcept { return grid_.size(); }
  Complex operator()(std::size_t i, std::size_t j) const {
    return elements_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  }

  InvariantReport check(const Tolerances& tol = kTolerances) const;
  void require_valid(std::string_view producer,
                     const Tolerances& tol = kTolerances) const;

 private:
  EnergyGrid grid_;
  ComplexMatrix elements_;
};

/// Unit-norm complex amplitude psi(e) on a grid.
class Wavepacket {
 public:
  Wavepacket(EnergyGrid grid, ComplexVector amplitudes);

  const EnergyGrid& grid() const noexcept { return grid_; }
  const ComplexVector& amplitudes() const noexcept { return amplitudes_; }

  /// |psi><psi|.
  DensityMatrix projector() const;
  Complex overlap(const Wavepacket& other) const;

 private:
  EnergyGrid grid_;
  ComplexVector amplitudes_;
};

struct HermitianEigen {
  Eigen::VectorXd values;  // ascending
  ComplexMatrix vectors;
};

/// Eigendecomposition of a Hermitian matrix. Throws ErrorKind::Numerical if
/// the solver fails or the residual exceeds tol.eigen_residual * ||A||.
HermitianEigen hermitian_eigen(const ComplexMatrix& a,
                               const Tolerances& tol = kTolerances);

/// Principal square root of a real symmetric PSD matrix; negative
/// eigenvalues are clipped to zero.
Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& a);

double purity(const DensityMatrix& rho);
double concurrence_from_purity(double purity);
double concurrence(const DensityMatrix& rho);

/// Uhlmann fidelity between the elementwise-modulus matrices |rho_a| and
/// |rho_b|, each renormalized to unit trace and eigen-clipped to PSD first.
double fidelity_amplitude(const DensityMatrix& rho_a, const DensityMatrix& rho_b);

/// (rho + rho^dagger) / 2. The result is not checked for trace or PSD.
DensityMatrix hermitize(const DensityMatrix& rho);
double min_eigenvalue(const DensityMatrix& rho);

/// Clip eigenvalues at zero and renormalize the trace. Input must already be
/// Hermitian within tolerance.
DensityMatrix project_psd(const DensityMatrix& rho,
                          const Tolerances& tol = kTolerances);

double frobenius_distance(const DensityMatrix& a, const DensityMatrix& b);

/// Embeds `rho` into `target` (a grid containing rho's grid as a contiguous
/// sub-range), zero elsewhere.
DensityMatrix embed(const DensityMatrix& rho, const EnergyGrid& target);

}  // namespace kraken
