#include "kraken/qstate.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "kraken/errors.hpp"

namespace kraken {

EnergyGrid::EnergyGrid(double epsilon_min, double delta_epsilon,
                       std::size_t n_points)
    : epsilon_min_(epsilon_min),
      delta_epsilon_(delta_epsilon),
      n_points_(n_points) {
  if (!std::isfinite(epsilon_min) || !std::isfinite(delta_epsilon) ||
      !(delta_epsilon > 0.0)) {
    fail(ErrorKind::Configuration,
         "energy grid: delta_epsilon must be finite and > 0");
  }
  if (n_points < 2) {
    fail(ErrorKind::Configuration, "energy grid: n_points must be >= 2");
  }
}

std::optional<std::size_t> EnergyGrid::index_of(double energy,
                                                double tol_bins) const {
  const double x = (energy - epsilon_min_) / delta_epsilon_;
  const double r = std::round(x);
  if (std::abs(x - r) > tol_bins || r < 0.0 ||
      r > static_cast<double>(n_points_ - 1)) {
    return std::nullopt;
  }
  return static_cast<std::size_t>(r);
}

EnergyGrid EnergyGrid::shifted(double offset) const {
  return EnergyGrid(epsilon_min_ + offset, delta_epsilon_, n_points_);
}

EnergyGrid EnergyGrid::subgrid(std::size_t first, std::size_t count) const {
  if (first + count > n_points_) {
    fail(ErrorKind::Structural, "energy grid: subgrid out of range");
  }
  return EnergyGrid(point(first), delta_epsilon_, count);
}

std::string InvariantReport::describe() const {
  std::ostringstream os;
  os << "hermitian_error=" << hermitian_error << (hermitian ? "" : " (FAIL)")
     << ", trace_error=" << trace_error << (unit_trace ? "" : " (FAIL)")
     << ", min_eigenvalue=" << min_eigenvalue << (psd ? "" : " (FAIL)");
  return os.str();
}

DensityMatrix::DensityMatrix(EnergyGrid grid, ComplexMatrix elements)
    : grid_(grid), elements_(std::move(elements)) {
  const auto n = static_cast<Eigen::Index>(grid_.size());
  if (elements_.rows() != n || elements_.cols() != n) {
    std::ostringstream os;
    os << "density matrix: elements are " << elements_.rows() << "x"
       << elements_.cols() << " but grid has " << n << " points";
    fail(ErrorKind::Structural, os.str());
  }
  if (!elements_.allFinite()) {
    fail(ErrorKind::DataValidation, "density matrix: non-finite element");
  }
}

DensityMatrix DensityMatrix::validated(EnergyGrid grid, ComplexMatrix elements,
                                       std::string_view producer) {
  DensityMatrix rho(grid, std::move(elements));
  rho.require_valid(producer);
  return rho;
}

InvariantReport DensityMatrix::check(const Tolerances& tol) const {
  InvariantReport r;
  const double scale = elements_.cwiseAbs().maxCoeff();
  const double herm = (elements_ - elements_.adjoint()).cwiseAbs().maxCoeff();
  r.hermitian_error = scale > 0.0 ? herm / scale : herm;
  r.hermitian = r.hermitian_error <= tol.hermitian;
  r.trace_error = std::abs(elements_.trace().real() - 1.0);
  r.unit_trace = r.trace_error <= tol.trace;
  const ComplexMatrix h = 0.5 * (elements_ + elements_.adjoint());
  Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(h, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) {
    fail(ErrorKind::Numerical, "density matrix: eigenvalue computation failed");
  }
  r.min_eigenvalue = es.eigenvalues().minCoeff();
  r.psd = r.min_eigenvalue >= -tol.psd;
  return r;
}

void DensityMatrix::require_valid(std::string_view producer,
                                  const Tolerances& tol) const {
  const InvariantReport r = check(tol);
  if (!r.ok()) {
    fail(ErrorKind::Numerical, std::string(producer) +
                                   ": density matrix invariants violated (" +
                                   r.describe() + ")");
  }
}

Wavepacket::Wavepacket(EnergyGrid grid, ComplexVector amplitudes)
    : grid_(grid), amplitudes_(std::move(amplitudes)) {
  if (amplitudes_.size() != static_cast<Eigen::Index>(grid_.size())) {
    fail(ErrorKind::Structural, "wavepacket: amplitude count != grid size");
  }
  if (std::abs(amplitudes_.squaredNorm() - 1.0) > kTolerances.norm) {
    fail(ErrorKind::Configuration, "wavepacket: amplitudes are not unit norm");
  }
}

DensityMatrix Wavepacket::projector() const {
  ComplexMatrix m = amplitudes_ * amplitudes_.adjoint();
  return DensityMatrix::validated(grid_, 0.5 * (m + m.adjoint()),
                                  "wavepacket projector");
}

Complex Wavepacket::overlap(const Wavepacket& other) const {
  if (!(grid_ == other.grid_)) {
    fail(ErrorKind::Structural, "wavepacket overlap: grid mismatch");
  }
  return amplitudes_.dot(other.amplitudes_);
}

HermitianEigen hermitian_eigen(const ComplexMatrix& a, const Tolerances& tol) {
  if (a.rows() != a.cols()) {
    fail(ErrorKind::Structural, "hermitian_eigen: matrix is not square");
  }
  Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(a);
  if (es.info() != Eigen::Success) {
    fail(ErrorKind::Numerical, "hermitian_eigen: solver did not converge");
  }
  HermitianEigen out{es.eigenvalues(), es.eigenvectors()};
  const double norm = std::max(a.norm(), 1e-300);
  const ComplexMatrix resid =
      a * out.vectors - out.vectors * out.values.cast<Complex>().asDiagonal();
  double worst = 0.0;
  for (Eigen::Index k = 0; k < resid.cols(); ++k) {
    worst = std::max(worst, resid.col(k).norm());
  }
  if (worst > tol.eigen_residual * norm) {
    std::ostringstream os;
    os << "hermitian_eigen: residual " << worst << " exceeds "
       << tol.eigen_residual << " * ||A|| (||A|| = " << norm
       << ", n = " << a.rows() << ")";
    fail(ErrorKind::Numerical, os.str());
  }
  return out;
}

namespace {

// Eigenvalues within roundoff of zero; their square roots would otherwise
// add O(sqrt(eps)) noise to every root.
Eigen::VectorXd clip_roundoff(const Eigen::VectorXd& values) {
  const double cut = static_cast<double>(values.size()) * 1e-15 * values.cwiseAbs().maxCoeff();
  return values.unaryExpr([cut](double v) { return v > cut ? v : 0.0; });
}

}  // namespace

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& a) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (a + a.transpose()));
  if (es.info() != Eigen::Success) {
    fail(ErrorKind::Numerical, "psd_sqrt: eigendecomposition failed");
  }
  const Eigen::VectorXd root = clip_roundoff(es.eigenvalues()).cwiseSqrt();
  return es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose();
}

double purity(const DensityMatrix& rho) {
  return std::clamp(rho.elements().cwiseAbs2().sum(), 0.0, 1.0);
}

// 1 - gamma below the purity roundoff is treated as exactly pure; the square
// root would otherwise turn 1e-15 into a visible 4e-8.
double concurrence_from_purity(double gamma) {
  const double d = 1.0 - gamma;
  if (d < 1e-12) return 0.0;
  return std::sqrt(2.0 * d);
}

double concurrence(const DensityMatrix& rho) {
  return concurrence_from_purity(purity(rho));
}

namespace {

// |rho| elementwise, unit trace, eigen-clipped.
Eigen::MatrixXd amplitude_state(const DensityMatrix& rho) {
  Eigen::MatrixXd r = rho.elements().cwiseAbs();
  r = 0.5 * (r + r.transpose());
  const double tr = r.trace();
  if (!(tr > 0.0)) {
    fail(ErrorKind::Degenerate, "fidelity: |rho| has zero trace");
  }
  r /= tr;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(r);
  if (es.info() != Eigen::Success) {
    fail(ErrorKind::Numerical, "fidelity: eigendecomposition of |rho| failed");
  }
  const Eigen::VectorXd clipped = es.eigenvalues().cwiseMax(0.0);
  const double mass = clipped.sum();
  if (!(mass > 0.0)) {
    fail(ErrorKind::Degenerate, "fidelity: |rho| has no positive spectrum");
  }
  return es.eigenvectors() * (clipped / mass).asDiagonal() *
         es.eigenvectors().transpose();
}

}  // namespace

double fidelity_amplitude(const DensityMatrix& rho_a, const DensityMatrix& rho_b) {
  if (!(rho_a.grid() == rho_b.grid())) {
    fail(ErrorKind::Structural, "fidelity: grid mismatch");
  }
  const Eigen::MatrixXd ra = amplitude_state(rho_a);
  const Eigen::MatrixXd rb = amplitude_state(rho_b);
  const Eigen::MatrixXd root_b = psd_sqrt(rb);
  Eigen::MatrixXd inner = root_b * ra * root_b;
  inner = 0.5 * (inner + inner.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(inner, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) {
    std::ostringstream os;
    os << "fidelity: eigendecomposition of sqrt(rb) ra sqrt(rb) failed (n = "
       << inner.rows() << ", ||inner|| = " << inner.norm() << ")";
    fail(ErrorKind::Numerical, os.str());
  }
  const double f = clip_roundoff(es.eigenvalues()).cwiseSqrt().sum();
  return std::clamp(f, 0.0, 1.0);
}

DensityMatrix hermitize(const DensityMatrix& rho) {
  const ComplexMatrix& m = rho.elements();
  return DensityMatrix(rho.grid(), 0.5 * (m + m.adjoint()));
}

double min_eigenvalue(const DensityMatrix& rho) {
  const ComplexMatrix h = hermitize(rho).elements();
  Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(h, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) {
    fail(ErrorKind::Numerical, "min_eigenvalue: solver did not converge");
  }
  return es.eigenvalues().minCoeff();
}

DensityMatrix project_psd(const DensityMatrix& rho, const Tolerances& tol) {
  const ComplexMatrix& m = rho.elements();
  const double scale = m.cwiseAbs().maxCoeff();
  const double herm = (m - m.adjoint()).cwiseAbs().maxCoeff();
  if (herm > tol.hermitian * std::max(scale, 1e-300) && herm > 0.0) {
    std::ostringstream os;
    os << "project_psd: input is not Hermitian (max |a - a^H| = " << herm
       << "); hermitize first";
    fail(ErrorKind::Numerical, os.str());
  }
  const HermitianEigen eig = hermitian_eigen(0.5 * (m + m.adjoint()), tol);
  const Eigen::VectorXd clipped = eig.values.cwiseMax(0.0);
  const double mass = clipped.sum();
  if (!(mass > 0.0)) {
    fail(ErrorKind::Degenerate, "project_psd: matrix is zero after clipping");
  }
  ComplexMatrix out = eig.vectors * (clipped / mass).cast<Complex>().asDiagonal() *
                      eig.vectors.adjoint();
  out = 0.5 * (out + out.adjoint());
  out /= out.trace().real();
  return DensityMatrix::validated(rho.grid(), std::move(out), "project_psd");
}

double frobenius_distance(const DensityMatrix& a, const DensityMatrix& b) {
  if (!(a.grid() == b.grid())) {
    fail(ErrorKind::Structural, "frobenius_distance: grid mismatch");
  }
  return (a.elements() - b.elements()).norm();
}

DensityMatrix embed(const DensityMatrix& rho, const EnergyGrid& target) {
  const EnergyGrid& g = rho.grid();
  if (std::abs(g.delta_epsilon() - target.delta_epsilon()) >
      1e-12 * target.delta_epsilon()) {
    fail(ErrorKind::Structural, "embed: grid spacing mismatch");
  }
  const auto first = target.index_of(g.epsilon_min());
  if (!first || *first + g.size() > target.size()) {
    fail(ErrorKind::Structural, "embed: source grid is not inside target grid");
  }
  ComplexMatrix out = ComplexMatrix::Zero(static_cast<Eigen::Index>(target.size()),
                                          static_cast<Eigen::Index>(target.size()));
  const auto f = static_cast<Eigen::Index>(*first);
  const auto n = static_cast<Eigen::Index>(g.size());
  out.block(f, f, n, n) = rho.elements();
  return DensityMatrix(target, std::move(out));
}

}  // namespace kraken
