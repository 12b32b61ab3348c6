#include "kraken/estimation.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numeric>
#include <sstream>

#include "kraken/errors.hpp"

namespace kraken {

void EstimatorSettings::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) fail(ErrorKind::Configuration, std::string("estimator: ") + what);
  };
  require(prior_scale > 0.0 && std::isfinite(prior_scale), "prior_scale must be > 0");
  require(sigma_floor > 0.0, "sigma_floor must be > 0");
  require(window_threshold >= 0.0 && window_threshold < 1.0,
          "window_threshold must lie in [0, 1)");
  require(phase_snr > 0.0, "phase_snr must be > 0");
  require(map_max_iters >= 0, "map_max_iters must be >= 0");
  require(map_tol > 0.0, "map_tol must be > 0");
  require(n_leapfrog >= 1, "n_leapfrog must be >= 1");
  require(n_samples >= 1, "n_samples must be >= 1");
  require(step_size >= 0.0 && std::isfinite(step_size), "step_size must be >= 0");
  require(target_accept > 0.0 && target_accept < 1.0, "target_accept must lie in (0, 1)");
  require(thin >= 1, "thin must be >= 1");
}

// ---------------------------------------------------------------------------
// Cholesky parameterization

ComplexMatrix cholesky_factor_psd(const ComplexMatrix& a, double threshold) {
  const Eigen::Index n = a.rows();
  if (a.cols() != n) fail(ErrorKind::Structural, "cholesky: matrix is not square");
  const double scale = a.diagonal().real().cwiseAbs().maxCoeff();
  ComplexMatrix l = ComplexMatrix::Zero(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    double d = a(j, j).real();
    for (Eigen::Index k = 0; k < j; ++k) d -= std::norm(l(j, k));
    if (d <= threshold * scale) continue;
    const double root = std::sqrt(d);
    l(j, j) = root;
    for (Eigen::Index i = j + 1; i < n; ++i) {
      Complex s = a(i, j);
      for (Eigen::Index k = 0; k < j; ++k) s -= l(i, k) * std::conj(l(j, k));
      l(i, j) = s / root;
    }
  }
  return l;
}

CholeskyParam::CholeskyParam(std::size_t n) : n_(n), values_(n * n, 0.0) {}

CholeskyParam::CholeskyParam(std::size_t n, std::vector<double> values)
    : n_(n), values_(std::move(values)) {
  if (values_.size() != n * n) {
    fail(ErrorKind::Structural, "CholeskyParam: expected n^2 parameters");
  }
}

ComplexMatrix CholeskyParam::unpack(std::size_t n, std::span<const double> theta) {
  if (theta.size() != n * n) {
    fail(ErrorKind::Structural, "CholeskyParam: parameter vector length != n^2");
  }
  const auto ni = static_cast<Eigen::Index>(n);
  ComplexMatrix t = ComplexMatrix::Zero(ni, ni);
  std::size_t p = 0;
  for (Eigen::Index k = 0; k < ni; ++k) t(k, k) = theta[p++];
  for (Eigen::Index j = 0; j < ni; ++j) {
    for (Eigen::Index i = j + 1; i < ni; ++i) {
      t(i, j) = Complex(theta[p], theta[p + 1]);
      p += 2;
    }
  }
  return t;
}

namespace {

void pack(const ComplexMatrix& t, std::span<double> out) {
  const Eigen::Index n = t.rows();
  std::size_t p = 0;
  for (Eigen::Index k = 0; k < n; ++k) out[p++] = t(k, k).real();
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = j + 1; i < n; ++i) {
      out[p++] = t(i, j).real();
      out[p++] = t(i, j).imag();
    }
  }
}

// rho = T T^dagger / tr, exactly Hermitian.
ComplexMatrix state_from_factor(const ComplexMatrix& t, double trace) {
  ComplexMatrix m = t.triangularView<Eigen::Lower>() * t.adjoint();
  m = 0.5 * (m + m.adjoint());
  return m / trace;
}

}  // namespace

ComplexMatrix CholeskyParam::factor() const { return unpack(n_, values_); }

CholeskyParam CholeskyParam::from_density(const DensityMatrix& rho, double radius) {
  const std::size_t n = rho.size();
  const ComplexMatrix l = cholesky_factor_psd(rho.elements());
  std::vector<double> values(n * n);
  pack(l, values);
  const double norm = std::sqrt(std::inner_product(values.begin(), values.end(),
                                                   values.begin(), 0.0));
  if (!(norm > 0.0)) fail(ErrorKind::Degenerate, "CholeskyParam: zero factor");
  for (double& v : values) v *= radius / norm;
  return CholeskyParam(n, std::move(values));
}

CholeskyParam CholeskyParam::canonical() const {
  ComplexMatrix t = factor();
  for (Eigen::Index j = 0; j < t.cols(); ++j) {
    if (t(j, j).real() < 0.0) t.col(j) = -t.col(j);
  }
  std::vector<double> values(values_.size());
  pack(t, values);
  return CholeskyParam(n_, std::move(values));
}

DensityMatrix CholeskyParam::reconstruct(const EnergyGrid& grid) const {
  if (grid.size() != n_) fail(ErrorKind::Structural, "CholeskyParam: grid size mismatch");
  const double tr = std::inner_product(values_.begin(), values_.end(), values_.begin(), 0.0);
  if (!(tr > 0.0)) fail(ErrorKind::Degenerate, "CholeskyParam: zero parameter vector");
  return DensityMatrix::validated(grid, state_from_factor(factor(), tr),
                                  "CholeskyParam::reconstruct");
}

// ---------------------------------------------------------------------------
// Measurement set

namespace {

long first_row_of(const SubdiagonalTrace& t, const EnergyGrid& grid) {
  const double x =
      (t.final_energies.epsilon_min() - t.omega1_energy - grid.epsilon_min()) / grid.delta_epsilon();
  const double r = std::round(x);
  if (std::abs(x - r) > 1e-6) {
    fail(ErrorKind::Structural, "measurement set: trace energies are not aligned with the grid");
  }
  return static_cast<long>(r);
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const auto mid = v.begin() + static_cast<long>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  return *mid;
}

}  // namespace

MeasurementSet::MeasurementSet(std::vector<SubdiagonalTrace> traces, ResponseFunction response,
                               double window_threshold)
    : traces_(std::move(traces)),
      response_(std::move(response)),
      full_grid_(population_grid(find_population_trace(traces_))),
      window_(full_grid_) {
  for (const auto& t : traces_) {
    t.validate();
    if (std::abs(t.final_energies.delta_epsilon() - full_grid_.delta_epsilon()) >
        1e-9 * full_grid_.delta_epsilon()) {
      fail(ErrorKind::Structural, "measurement set: traces use different energy steps");
    }
    std::vector<double> rel;
    for (std::size_t j = 0; j < t.dc.size(); ++j) {
      if (t.dc[j] > 0.0) rel.push_back(t.dc_sigma[j] / t.dc[j]);
    }
    noise_.push_back(median(std::move(rel)));
  }
  const SubdiagonalTrace& pop = find_population_trace(traces_);
  const double peak = *std::max_element(pop.dc.begin(), pop.dc.end());
  if (!(peak > 0.0)) fail(ErrorKind::DataValidation, "measurement set: populations are all zero");
  std::size_t lo = pop.dc.size();
  std::size_t hi = 0;
  for (std::size_t j = 0; j < pop.dc.size(); ++j) {
    if (pop.dc[j] > window_threshold * peak) {
      lo = std::min(lo, j);
      hi = std::max(hi, j);
    }
  }
  if (hi <= lo) fail(ErrorKind::DataValidation, "measurement set: estimation window is < 2 bins");
  window_offset_ = lo;
  window_ = full_grid_.subgrid(lo, hi - lo + 1);
}

// ---------------------------------------------------------------------------
// Posterior

PosteriorModel::PosteriorModel(const MeasurementSet& data, const EstimatorSettings& settings)
    : grid_(data.grid()), prior_scale_(settings.prior_scale) {
  settings.validate();
  const std::size_t n = grid_.size();
  const std::vector<double> kernel =
      settings.use_response ? data.response().kernel(grid_.delta_epsilon()) : std::vector<double>{1.0};

  const SubdiagonalTrace& pop = find_population_trace(data.traces());
  {
    const long i0 = first_row_of(pop, grid_);
    population_.assign(n, 0.0);
    population_sigma_.assign(n, 0.0);
    std::vector<double> raw_sigma(n, 0.0);
    double sum = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
      const long j = static_cast<long>(r) - i0;
      if (j < 0 || j >= static_cast<long>(pop.dc.size())) continue;
      population_[r] = pop.dc[static_cast<std::size_t>(j)];
      raw_sigma[r] = pop.dc_sigma[static_cast<std::size_t>(j)];
      sum += population_[r];
    }
    if (!(sum > 0.0)) fail(ErrorKind::DataValidation, "posterior: populations sum to zero");
    double peak = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
      population_[r] /= sum;
      peak = std::max(peak, population_[r]);
    }
    for (std::size_t r = 0; r < n; ++r) {
      population_sigma_[r] = std::max(
          {raw_sigma[r] / sum, settings.sigma_floor * population_[r], 1e-3 * settings.sigma_floor * peak});
    }
    population_blur_ = convolution_matrix(n, kernel);
    bin_count_ += n;
  }

  for (const auto& t : data.traces()) {
    if (t.is_population()) continue;
    const auto [k, residual] = subdiagonal_offset(t.beat_energy, grid_.delta_epsilon());
    if (k == 0 || std::abs(residual) > 0.5 + 1e-9) {
      fail(ErrorKind::Configuration, "posterior: beat energy cannot be placed on a subdiagonal");
    }
    if (k >= n) {
      std::ostringstream os;
      os << "posterior: subdiagonal offset " << k << " lies outside the " << n
         << "-bin estimation window";
      fail(ErrorKind::Configuration, os.str());
    }
    const long i0 = first_row_of(t, grid_);
    const long r_lo = std::max<long>(0, i0);
    const long r_hi = std::min<long>(static_cast<long>(n - 1 - k),
                                     i0 + static_cast<long>(t.dc.size()) - 1);
    if (r_hi < r_lo) continue;
    const auto bins = static_cast<std::size_t>(r_hi - r_lo + 1);
    TraceTerm term{t.beat_energy, k, static_cast<std::size_t>(r_lo), 1.0, t.relative_amplitude,
                   Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(bins),
                                             static_cast<Eigen::Index>(bins)),
                   {}, {}, {}, {}, {}, {}};
    if (kernel.size() > 1) term.blur = convolution_matrix(bins, kernel);
    for (std::size_t b = 0; b < bins; ++b) {
      const auto j = static_cast<std::size_t>(r_lo + static_cast<long>(b) - i0);
      const bool usable = !(t.flags[j] & kFlagZeroSignal) && t.dc[j] > 0.0;
      const double dc = usable ? t.dc[j] : 1.0;
      const double ratio = t.amplitude[j] / dc;
      const double sa = t.amplitude_sigma[j] / dc;
      const double sd = ratio * t.dc_sigma[j] / dc;
      const double var = sa * sa + sd * sd - 2.0 * t.amplitude_dc_correlation[j] * sa * sd;
      const double ratio_sigma = std::max(std::sqrt(std::max(var, 0.0)), settings.sigma_floor);
      const double phase_sigma =
          std::max(t.phase_sigma[j], ratio_sigma / std::max(ratio, 1e-300));
      const double snr = ratio / (settings.phase_snr * ratio_sigma);
      term.ratio.push_back(ratio);
      term.ratio_sigma.push_back(ratio_sigma);
      term.phase.push_back(t.phase[j]);
      term.phase_sigma.push_back(phase_sigma);
      term.phase_weight.push_back(usable ? std::min(1.0, snr * snr) : 0.0);
      term.use.push_back(usable ? 1.0 : 0.0);
      bin_count_ += usable;
    }
    terms_.push_back(std::move(term));
  }
}

double PosteriorModel::log_likelihood(const ComplexMatrix& rho, ComplexMatrix* gradient) const {
  const auto n = static_cast<Eigen::Index>(grid_.size());
  if (rho.rows() != n || rho.cols() != n) {
    fail(ErrorKind::Structural, "log_likelihood: matrix does not match the estimation grid");
  }
  if (gradient) *gradient = ComplexMatrix::Zero(n, n);
  double f = 0.0;

  {
    const Eigen::VectorXd diag = rho.diagonal().real();
    const Eigen::VectorXd pred = population_blur_ * diag;
    Eigen::VectorXd g(n);
    for (Eigen::Index r = 0; r < n; ++r) {
      const auto ru = static_cast<std::size_t>(r);
      const double res = (pred(r) - population_[ru]) / population_sigma_[ru];
      f -= 0.5 * res * res;
      g(r) = -res / population_sigma_[ru];
    }
    if (gradient) {
      const Eigen::VectorXd back = population_blur_.transpose() * g;
      for (Eigen::Index r = 0; r < n; ++r) (*gradient)(r, r) += back(r);
    }
  }

  for (const TraceTerm& term : terms_) {
    const auto bins = static_cast<Eigen::Index>(term.ratio.size());
    const auto k = static_cast<Eigen::Index>(term.offset);
    const auto r0 = static_cast<Eigen::Index>(term.first_row);
    const double cw = 2.0 * term.w1 * term.w2;
    ComplexVector coh(bins);
    Eigen::VectorXd dc0(bins);
    for (Eigen::Index b = 0; b < bins; ++b) {
      const Eigen::Index r = r0 + b;
      coh(b) = cw * rho(r, r + k);
      dc0(b) = term.w1 * term.w1 * rho(r, r).real() + term.w2 * term.w2 * rho(r + k, r + k).real();
    }
    const ComplexVector z = term.blur * coh;
    const Eigen::VectorXd d = term.blur * dc0;
    ComplexVector gz = ComplexVector::Zero(bins);
    Eigen::VectorXd gd = Eigen::VectorXd::Zero(bins);
    for (Eigen::Index b = 0; b < bins; ++b) {
      const auto bu = static_cast<std::size_t>(b);
      if (term.use[bu] == 0.0) continue;
      const double mag = std::abs(z(b));
      const double den = std::max(d(b), 1e-300);
      const double ratio = mag / den;
      const double res = (ratio - term.ratio[bu]) / term.ratio_sigma[bu];
      f -= 0.5 * res * res;
      const double g_ratio = -res / term.ratio_sigma[bu];
      double g_phase = 0.0;
      if (term.phase_weight[bu] > 0.0 && mag > 0.0) {
        const double dphi = std::arg(z(b)) - term.phase[bu];
        const double inv_var = term.phase_weight[bu] / (term.phase_sigma[bu] * term.phase_sigma[bu]);
        f -= inv_var * (1.0 - std::cos(dphi));
        g_phase = -inv_var * std::sin(dphi);
      }
      if (mag > 0.0) {
        const Complex u = z(b) / mag;
        gz(b) = g_ratio * u / den + g_phase * Complex(0.0, 1.0) * z(b) / (mag * mag);
      }
      gd(b) = -g_ratio * ratio / den;
    }
    if (gradient) {
      const ComplexVector back_c = term.blur.transpose() * gz;
      const Eigen::VectorXd back_d = term.blur.transpose() * gd;
      for (Eigen::Index b = 0; b < bins; ++b) {
        const Eigen::Index r = r0 + b;
        (*gradient)(r, r + k) += cw * back_c(b);
        (*gradient)(r, r) += term.w1 * term.w1 * back_d(b);
        (*gradient)(r + k, r + k) += term.w2 * term.w2 * back_d(b);
      }
    }
  }
  return f;
}

double PosteriorModel::log_likelihood_theta(std::span<const double> theta,
                                            std::span<double> gradient) const {
  const std::size_t n = grid_.size();
  const ComplexMatrix t = CholeskyParam::unpack(n, theta);
  const double tr = std::inner_product(theta.begin(), theta.end(), theta.begin(), 0.0);
  if (!(tr > 0.0)) fail(ErrorKind::Numerical, "log_likelihood: zero parameter vector");
  const ComplexMatrix rho = state_from_factor(t, tr);
  if (gradient.empty()) return log_likelihood(rho);

  if (gradient.size() != theta.size()) {
    fail(ErrorKind::Structural, "log_likelihood: gradient buffer has the wrong length");
  }
  ComplexMatrix g;
  const double f = log_likelihood(rho, &g);
  // d f / d T for rho = T T^H / tr(T T^H): (H T - 2 c T) / tr with
  // H = G + G^H and c = Re <G, rho>.
  const ComplexMatrix h = g + g.adjoint();
  const double c = (g.conjugate().cwiseProduct(rho)).sum().real();
  const ComplexMatrix gamma =
      (h * t.triangularView<Eigen::Lower>() - 2.0 * c * t) / tr;
  pack(gamma, gradient);
  return f;
}

double PosteriorModel::log_prior(std::span<const double> theta, std::span<double> gradient) const {
  const double inv_var = 1.0 / (prior_scale_ * prior_scale_);
  double f = 0.0;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    f -= 0.5 * theta[i] * theta[i] * inv_var;
    if (!gradient.empty()) gradient[i] = -theta[i] * inv_var;
  }
  return f;
}

double PosteriorModel::log_posterior(std::span<const double> theta) const {
  return log_likelihood_theta(theta) + log_prior(theta);
}

double PosteriorModel::log_posterior_gradient(std::span<const double> theta,
                                              std::span<double> gradient) const {
  std::vector<double> prior_grad(theta.size());
  const double fl = log_likelihood_theta(theta, gradient);
  const double fp = log_prior(theta, prior_grad);
  for (std::size_t i = 0; i < theta.size(); ++i) gradient[i] += prior_grad[i];
  return fl + fp;
}

std::vector<PredictedTrace> PosteriorModel::forward_predict(const DensityMatrix& rho) const {
  if (!(rho.grid() == grid_)) {
    fail(ErrorKind::Structural, "forward_predict: density matrix is not on the measurement grid");
  }
  const ComplexMatrix& m = rho.elements();
  std::vector<PredictedTrace> out;
  for (const TraceTerm& term : terms_) {
    const auto bins = static_cast<Eigen::Index>(term.ratio.size());
    const auto k = static_cast<Eigen::Index>(term.offset);
    const auto r0 = static_cast<Eigen::Index>(term.first_row);
    const double cw = 2.0 * term.w1 * term.w2;
    ComplexVector coh(bins);
    Eigen::VectorXd dc0(bins);
    for (Eigen::Index b = 0; b < bins; ++b) {
      const Eigen::Index r = r0 + b;
      coh(b) = cw * m(r, r + k);
      dc0(b) = term.w1 * term.w1 * m(r, r).real() + term.w2 * term.w2 * m(r + k, r + k).real();
    }
    const ComplexVector z = term.blur * coh;
    const Eigen::VectorXd d = term.blur * dc0;
    PredictedTrace p{term.beat_energy, term.offset, term.first_row, {}, {}, {}, {}};
    for (Eigen::Index b = 0; b < bins; ++b) {
      p.amplitude.push_back(std::abs(z(b)));
      p.phase.push_back(std::arg(z(b)));
      p.dc.push_back(d(b));
      p.coherence.push_back(d(b) > 0.0 ? z(b) / d(b) * dc0(b) / cw : Complex(0.0, 0.0));
    }
    out.push_back(std::move(p));
  }
  return out;
}

double PosteriorModel::chi2_per_bin(const DensityMatrix& rho) const {
  const auto pred = forward_predict(rho);
  double chi2 = 0.0;
  std::size_t used = 0;
  for (std::size_t t = 0; t < terms_.size(); ++t) {
    const TraceTerm& term = terms_[t];
    for (std::size_t b = 0; b < term.ratio.size(); ++b) {
      if (term.use[b] == 0.0) continue;
      const double ratio = pred[t].amplitude[b] / std::max(pred[t].dc[b], 1e-300);
      const double res = (ratio - term.ratio[b]) / term.ratio_sigma[b];
      chi2 += res * res;
      ++used;
    }
  }
  return used ? chi2 / static_cast<double>(used) : 0.0;
}

std::vector<PredictedTrace> forward_predict(const DensityMatrix& rho, const MeasurementSet& data,
                                            const EstimatorSettings& settings) {
  return PosteriorModel(data, settings).forward_predict(rho);
}

// ---------------------------------------------------------------------------
// MAP

std::vector<double> default_initial_theta(const PosteriorModel& model,
                                          const MeasurementSet& data) {
  const std::size_t n = model.dimension();
  const auto ni = static_cast<Eigen::Index>(n);
  const double radius = model.prior_scale() * std::sqrt(static_cast<double>(n * n - 1));
  ComplexMatrix start;
  try {
    const RawAssembly raw = assemble_raw_dm(data.traces(), data.full_grid());
    const DensityMatrix projected = project_psd(hermitize(raw.matrix));
    start = projected.elements().block(static_cast<Eigen::Index>(data.window_offset()),
                                       static_cast<Eigen::Index>(data.window_offset()), ni, ni);
  } catch (const Error&) {
    start = ComplexMatrix::Identity(ni, ni);
  }
  double tr = start.trace().real();
  if (!(tr > 0.0)) {
    start = ComplexMatrix::Identity(ni, ni);
    tr = static_cast<double>(n);
  }
  // A little full-rank admixture keeps every Cholesky column active.
  start = 0.99 * start / tr + 0.01 * ComplexMatrix::Identity(ni, ni) / static_cast<double>(n);
  const DensityMatrix rho0(model.grid(), 0.5 * (start + start.adjoint()));
  const CholeskyParam p = CholeskyParam::from_density(rho0, radius);
  return {p.values().begin(), p.values().end()};
}

namespace {

// Negative polar-coordinate objective and its gradient.
double map_objective(const PosteriorModel& model, std::span<const double> theta,
                     std::span<double> grad) {
  const double dof = static_cast<double>(theta.size()) - 1.0;
  const double f = model.log_posterior_gradient(theta, grad);
  const double r2 = std::inner_product(theta.begin(), theta.end(), theta.begin(), 0.0);
  for (std::size_t i = 0; i < theta.size(); ++i) {
    grad[i] = -(grad[i] + dof * theta[i] / r2);
  }
  return -(f + 0.5 * dof * std::log(r2));
}

double dot(std::span<const double> a, std::span<const double> b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

// Strong Wolfe line search (bracketing + bisection-safeguarded cubic zoom).
// On success x_new, f_new, g_new hold the accepted point.
bool wolfe_search(const PosteriorModel& model, const std::vector<double>& x, double f0,
                  double slope0, const std::vector<double>& dir, std::vector<double>& x_new,
                  double& f_new, std::vector<double>& g_new) {
  constexpr double c1 = 1e-4, c2 = 0.9;
  auto eval = [&](double step, double& slope) {
    for (std::size_t i = 0; i < x.size(); ++i) x_new[i] = x[i] + step * dir[i];
    const double f = map_objective(model, x_new, g_new);
    slope = dot(g_new, dir);
    return f;
  };
  auto zoom = [&](double lo, double f_lo, double d_lo, double hi, double f_hi, double d_hi) {
    for (int k = 0; k < 40; ++k) {
      // Cubic interpolation, falling back to bisection.
      double step = 0.5 * (lo + hi);
      const double d1 = d_lo + d_hi - 3.0 * (f_lo - f_hi) / (lo - hi);
      const double disc = d1 * d1 - d_lo * d_hi;
      if (disc >= 0.0 && std::isfinite(f_hi)) {
        const double d2 = std::copysign(std::sqrt(disc), hi - lo);
        const double cubic = hi - (hi - lo) * (d_hi + d2 - d1) / (d_hi - d_lo + 2.0 * d2);
        const double a = std::min(lo, hi), b = std::max(lo, hi);
        if (std::isfinite(cubic) && cubic > a + 0.1 * (b - a) && cubic < b - 0.1 * (b - a)) {
          step = cubic;
        }
      }
      double d = 0.0;
      const double f = eval(step, d);
      if (!std::isfinite(f) || f > f0 + c1 * step * slope0 || f >= f_lo) {
        hi = step;
        f_hi = f;
        d_hi = d;
      } else {
        if (std::abs(d) <= -c2 * slope0) {
          f_new = f;
          return true;
        }
        if (d * (hi - lo) >= 0.0) {
          hi = lo;
          f_hi = f_lo;
          d_hi = d_lo;
        }
        lo = step;
        f_lo = f;
        d_lo = d;
      }
      if (std::abs(hi - lo) < 1e-16 * std::max(1.0, std::abs(lo))) break;
    }
    // Accept the best sufficient-decrease point found, if any.
    if (lo > 0.0) {
      double d = 0.0;
      f_new = eval(lo, d);
      return true;
    }
    return false;
  };

  double prev = 0.0, f_prev = f0, d_prev = slope0;
  double step = 1.0;
  for (int k = 0; k < 30; ++k) {
    double d = 0.0;
    const double f = eval(step, d);
    if (!std::isfinite(f) || f > f0 + c1 * step * slope0 || (k > 0 && f >= f_prev)) {
      return zoom(prev, f_prev, d_prev, step, f, d);
    }
    if (std::abs(d) <= -c2 * slope0) {
      f_new = f;
      return true;
    }
    if (d >= 0.0) return zoom(step, f, d, prev, f_prev, d_prev);
    prev = step;
    f_prev = f;
    d_prev = d;
    step *= 2.0;
  }
  f_new = f_prev;
  return false;
}

}  // namespace

MapResult map_estimate(const PosteriorModel& model, std::span<const double> init, int max_iters,
                       double tol) {
  const std::size_t d = model.parameter_count();
  if (init.size() != d) fail(ErrorKind::Structural, "map_estimate: init has the wrong length");
  constexpr std::size_t kMemory = 12;

  std::vector<double> x(init.begin(), init.end());
  std::vector<double> g(d), x_new(d), g_new(d), dir(d);
  double f = map_objective(model, x, g);
  std::deque<std::vector<double>> s_hist, y_hist;
  std::deque<double> rho_hist;

  int it = 0;
  double gnorm = std::sqrt(dot(g, g));
  while (it < max_iters) {
    if (gnorm < tol) break;
    // Two-loop recursion.
    dir = g;
    std::vector<double> alpha(s_hist.size());
    for (std::size_t m = s_hist.size(); m-- > 0;) {
      alpha[m] = rho_hist[m] * dot(s_hist[m], dir);
      for (std::size_t i = 0; i < d; ++i) dir[i] -= alpha[m] * y_hist[m][i];
    }
    if (!s_hist.empty()) {
      const double gamma = dot(s_hist.back(), y_hist.back()) / dot(y_hist.back(), y_hist.back());
      for (double& v : dir) v *= gamma;
    } else {
      const double scale = 1.0 / std::max(gnorm, 1.0);
      for (double& v : dir) v *= scale;
    }
    for (std::size_t m = 0; m < s_hist.size(); ++m) {
      const double beta = rho_hist[m] * dot(y_hist[m], dir);
      for (std::size_t i = 0; i < d; ++i) dir[i] += (alpha[m] - beta) * s_hist[m][i];
    }
    for (double& v : dir) v = -v;
    double slope = dot(g, dir);
    if (!(slope < 0.0)) {
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
      for (std::size_t i = 0; i < d; ++i) dir[i] = -g[i] / std::max(gnorm, 1.0);
      slope = dot(g, dir);
    }

    double f_new = 0.0;
    if (!wolfe_search(model, x, f, slope, dir, x_new, f_new, g_new)) break;  // stalled
    ++it;

    std::vector<double> s(d), y(d);
    for (std::size_t i = 0; i < d; ++i) {
      s[i] = x_new[i] - x[i];
      y[i] = g_new[i] - g[i];
    }
    const double sy = dot(s, y);
    if (sy > 1e-12 * std::sqrt(dot(s, s) * dot(y, y))) {
      s_hist.push_back(std::move(s));
      y_hist.push_back(std::move(y));
      rho_hist.push_back(1.0 / sy);
      if (s_hist.size() > kMemory) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
    }
    x.swap(x_new);
    g.swap(g_new);
    f = f_new;
    gnorm = std::sqrt(dot(g, g));
  }

  DensityMatrix estimate = CholeskyParam(model.dimension(), x).reconstruct(model.grid());
  return {std::move(estimate), std::move(x), gnorm < tol, it, gnorm, -f};
}

}  // namespace kraken
