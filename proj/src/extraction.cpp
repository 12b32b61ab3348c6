#include "kraken/extraction.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "kraken/errors.hpp"

namespace kraken {

namespace {

constexpr double kPi = std::numbers::pi;

// Linear interpolation of `v` at fractional index x; nullopt outside range.
template <typename T>
std::optional<T> lerp_at(const std::vector<T>& v, double x) {
  if (x < -1e-9 || x > static_cast<double>(v.size() - 1) + 1e-9) return std::nullopt;
  const double xc = std::clamp(x, 0.0, static_cast<double>(v.size() - 1));
  const auto lo = static_cast<std::size_t>(std::floor(xc));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  const double f = xc - static_cast<double>(lo);
  return v[lo] * (1.0 - f) + v[hi] * f;
}

}  // namespace

void SubdiagonalTrace::validate() const {
  const std::size_t n = final_energies.size();
  for (const auto* v : {&amplitude, &phase, &amplitude_sigma, &phase_sigma, &dc, &dc_sigma}) {
    if (v->size() != n) {
      fail(ErrorKind::Structural, "trace: column length differs from final energy count");
    }
    for (double x : *v) {
      if (!std::isfinite(x)) fail(ErrorKind::DataValidation, "trace: non-finite entry");
    }
  }
  if (flags.size() != n || amplitude_dc_correlation.size() != n) {
    fail(ErrorKind::Structural, "trace: column length differs from final energy count");
  }
  for (double r : amplitude_dc_correlation) {
    if (!(r >= -1.0 && r <= 1.0)) fail(ErrorKind::DataValidation, "trace: correlation outside [-1, 1]");
  }
  if (!(beat_energy >= 0.0) || !(omega1_energy > 0.0) || !(relative_amplitude > 0.0)) {
    fail(ErrorKind::DataValidation, "trace: invalid probe metadata");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (amplitude[i] < 0.0 || amplitude_sigma[i] < 0.0 || phase_sigma[i] < 0.0 ||
        dc_sigma[i] < 0.0) {
      fail(ErrorKind::DataValidation, "trace: amplitudes and uncertainties must be >= 0");
    }
  }
}

SubdiagonalTrace fit_oscillation(const Spectrogram& spec) {
  spec.validate();
  const std::size_t nt = spec.delays.size();
  const std::size_t nf = spec.final_energies.size();
  SubdiagonalTrace out{
      .beat_energy = spec.probe.beat_energy(),
      .omega1_energy = spec.probe.omega1_energy,
      .relative_amplitude = spec.probe.relative_amplitude,
      .final_energies = spec.final_energies,
      .amplitude = std::vector<double>(nf, 0.0),
      .phase = std::vector<double>(nf, 0.0),
      .amplitude_sigma = std::vector<double>(nf, 0.0),
      .phase_sigma = std::vector<double>(nf, 0.0),
      .dc = std::vector<double>(nf, 0.0),
      .dc_sigma = std::vector<double>(nf, 0.0),
      .amplitude_dc_correlation = std::vector<double>(nf, 0.0),
      .flags = std::vector<std::uint8_t>(nf, 0),
  };
  const bool dc_only = out.beat_energy == 0.0;

  if (dc_only) {
    if (nt < 2) fail(ErrorKind::Configuration, "fit_oscillation: need >= 2 delays");
    for (std::size_t i = 0; i < nf; ++i) {
      const auto col = spec.counts.col(static_cast<Eigen::Index>(i));
      out.flags[i] = kFlagDcOnly;
      if ((col.array() == 0.0).all()) {
        out.flags[i] |= kFlagZeroSignal;
        continue;
      }
      const double mean = col.mean();
      const double var = (col.array() - mean).square().sum() / static_cast<double>(nt - 1);
      out.dc[i] = mean;
      out.dc_sigma[i] = std::sqrt(var / static_cast<double>(nt));
    }
    return out;
  }

  const double dw = spec.probe.beat_frequency();
  const double span = spec.delays.back() - spec.delays.front();
  if (nt < 6 || dw * span < 2.0 * kPi) {
    std::ostringstream os;
    os << "fit_oscillation: ill-conditioned design; " << nt << " delays spanning " << span
       << " fs do not cover one beat period (" << 2.0 * kPi / dw << " fs) with >= 6 samples";
    fail(ErrorKind::Configuration, os.str());
  }
  Eigen::MatrixXd x(static_cast<Eigen::Index>(nt), 3);
  for (std::size_t t = 0; t < nt; ++t) {
    const auto tt = static_cast<Eigen::Index>(t);
    x(tt, 0) = 1.0;
    x(tt, 1) = std::cos(dw * spec.delays[t]);
    x(tt, 2) = std::sin(dw * spec.delays[t]);
  }
  const Eigen::Matrix3d gram = x.transpose() * x;
  const Eigen::Matrix3d gram_inv = gram.inverse();
  const Eigen::MatrixXd coef = gram_inv * (x.transpose() * spec.counts);  // 3 x nf
  const Eigen::MatrixXd fitted = x * coef;
  const Eigen::MatrixXd resid = spec.counts - fitted;
  const Eigen::VectorXd leverage = (x * gram_inv).cwiseProduct(x).rowwise().sum();

  for (std::size_t i = 0; i < nf; ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    if ((spec.counts.col(ii).array() == 0.0).all()) {
      out.flags[i] = kFlagZeroSignal | kFlagPhaseUndefined;
      continue;
    }
    const double a = coef(0, ii);
    const double b = coef(1, ii);
    const double c = coef(2, ii);
    // Noise is modeled as multiplicative: var(tau) = kappa * S(tau)^2, with
    // kappa from the leverage-corrected residuals. The sandwich covariance
    // keeps the dc / amplitude correlation this induces.
    const Eigen::VectorXd s2 = fitted.col(ii).cwiseMax(0.0).array().square();
    const double denom = (s2.array() * (1.0 - leverage.array())).sum();
    Eigen::Matrix3d cov;
    if (denom > 0.0) {
      const double kappa = resid.col(ii).squaredNorm() / denom;
      const Eigen::Matrix3d meat = x.transpose() * (kappa * s2).asDiagonal() * x;
      cov = gram_inv * meat * gram_inv;
    } else {
      cov = resid.col(ii).squaredNorm() / static_cast<double>(nt - 3) * gram_inv;
    }
    const double amp = std::hypot(b, c);
    out.dc[i] = a;
    out.dc_sigma[i] = std::sqrt(cov(0, 0));
    out.amplitude[i] = amp;
    if (amp > 0.0) {
      const double cov_ad = (b * cov(0, 1) + c * cov(0, 2)) / amp;
      const double var_a =
          (b * b * cov(1, 1) + c * c * cov(2, 2) + 2.0 * b * c * cov(1, 2)) / (amp * amp);
      const double var_p = (c * c * cov(1, 1) + b * b * cov(2, 2) - 2.0 * b * c * cov(1, 2)) /
                           (amp * amp * amp * amp);
      out.amplitude_sigma[i] = std::sqrt(std::max(var_a, 0.0));
      out.phase_sigma[i] = std::min(std::sqrt(std::max(var_p, 0.0)), kPi);
      const double norm = out.amplitude_sigma[i] * out.dc_sigma[i];
      out.amplitude_dc_correlation[i] = norm > 0.0 ? std::clamp(cov_ad / norm, -1.0, 1.0) : 0.0;
      out.phase[i] = std::atan2(-c, b);
      if (out.phase[i] == -kPi) out.phase[i] = kPi;
    } else {
      out.amplitude_sigma[i] = std::sqrt(0.5 * (cov(1, 1) + cov(2, 2)));
      out.phase_sigma[i] = kPi;
    }
    if (!(amp > 3.0 * out.amplitude_sigma[i])) out.flags[i] |= kFlagPhaseUndefined;
  }
  return out;
}

std::pair<double, double> map_energies(double epsilon_f, const ProbePair& probe) {
  return {epsilon_f - probe.omega1_energy, epsilon_f - probe.omega2_energy};
}

std::size_t RawAssembly::covered_count() const {
  std::size_t n = 0;
  for (Eigen::Index j = 0; j < mask.cols(); ++j) {
    for (Eigen::Index i = 0; i < mask.rows(); ++i) n += mask(i, j) != 0;
  }
  return n;
}

const SubdiagonalTrace& find_population_trace(std::span<const SubdiagonalTrace> traces) {
  for (const auto& t : traces) {
    if (t.is_population()) return t;
  }
  fail(ErrorKind::Configuration,
       "assembly requires the zero-beat (hbar*dw = 0) trace carrying the populations");
}

EnergyGrid population_grid(const SubdiagonalTrace& populations) {
  return populations.final_energies.shifted(-populations.omega1_energy);
}

RawAssembly assemble_raw_dm(std::span<const SubdiagonalTrace> traces,
                            Placement placement) {
  return assemble_raw_dm(traces, population_grid(find_population_trace(traces)), placement);
}

RawAssembly assemble_raw_dm(std::span<const SubdiagonalTrace> traces,
                            const EnergyGrid& grid, Placement placement) {
  const SubdiagonalTrace& pop = find_population_trace(traces);
  const std::size_t n = grid.size();
  const double delta = grid.delta_epsilon();
  for (const auto& t : traces) {
    t.validate();
    if (std::abs(t.final_energies.delta_epsilon() - delta) > 1e-9 * delta) {
      fail(ErrorKind::Structural, "assembly: trace energy step differs from grid step");
    }
  }

  // Index of the first trace bin on the grid (e1 = e_f - hbar*w1).
  auto first_index = [&](const SubdiagonalTrace& t) -> long {
    const double x = (t.final_energies.epsilon_min() - t.omega1_energy - grid.epsilon_min()) / delta;
    const double r = std::round(x);
    if (std::abs(x - r) > 1e-6) {
      fail(ErrorKind::Structural, "assembly: trace final energies are not aligned with the grid");
    }
    return static_cast<long>(r);
  };

  const double w1 = 1.0;
  const double w2 = pop.relative_amplitude;
  std::vector<double> populations(n, 0.0);
  {
    const long i0 = first_index(pop);
    for (std::size_t j = 0; j < pop.dc.size(); ++j) {
      const long i = i0 + static_cast<long>(j);
      if (i < 0 || i >= static_cast<long>(n) || (pop.flags[j] & kFlagZeroSignal)) continue;
      populations[static_cast<std::size_t>(i)] = pop.dc[j] / ((w1 + w2) * (w1 + w2));
    }
  }

  const auto ni = static_cast<Eigen::Index>(n);
  ComplexMatrix sum = ComplexMatrix::Zero(ni, ni);
  Eigen::MatrixXi count = Eigen::MatrixXi::Zero(ni, ni);
  RawAssembly out{DensityMatrix(grid, ComplexMatrix::Zero(ni, ni)),
                  Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>::Zero(ni, ni),
                  {}};

  for (std::size_t i = 0; i < n; ++i) {
    sum(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) = populations[i];
    out.mask(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) = populations[i] > 0.0;
  }

  for (const auto& t : traces) {
    if (t.is_population()) continue;
    const auto [k, residual] = subdiagonal_offset(t.beat_energy, delta);
    if (std::abs(residual) > 0.5 + 1e-9 || k == 0 || k >= n) {
      std::ostringstream os;
      os << "assembly: beat energy " << t.beat_energy << " eV maps to subdiagonal " << k
         << " (residual " << residual << " bins) which cannot be placed on a " << n
         << "-point grid";
      fail(ErrorKind::Configuration, os.str());
    }
    out.placements.push_back({t.beat_energy, k, residual});
    const double tw1 = 1.0;
    const double tw2 = t.relative_amplitude;
    const double calib = 1.0 / (2.0 * tw1 * tw2);
    const long i0 = first_index(t);

    std::vector<Complex> z(t.amplitude.size());
    for (std::size_t j = 0; j < z.size(); ++j) z[j] = std::polar(t.amplitude[j], t.phase[j]);

    for (std::size_t i = 0; i + k < n; ++i) {
      Complex value;
      if (placement == Placement::Nearest) {
        const long j = static_cast<long>(i) - i0;
        if (j < 0 || j >= static_cast<long>(z.size())) continue;
        const auto ju = static_cast<std::size_t>(j);
        if ((t.flags[ju] & kFlagZeroSignal) || !(t.dc[ju] > 0.0)) continue;
        const double anchor = tw1 * tw1 * populations[i] + tw2 * tw2 * populations[i + k];
        value = z[ju] / t.dc[ju] * anchor * calib;
      } else {
        const double shift = -0.5 * residual;
        const double jx = static_cast<double>(static_cast<long>(i) - i0) + shift;
        const auto zj = lerp_at(z, jx);
        const auto dcj = lerp_at(t.dc, jx);
        const auto p1 = lerp_at(populations, static_cast<double>(i) + shift);
        const auto p2 = lerp_at(populations, static_cast<double>(i + k) - shift);
        if (!zj || !dcj || !p1 || !p2 || !(*dcj > 0.0)) continue;
        value = *zj / *dcj * (tw1 * tw1 * *p1 + tw2 * tw2 * *p2) * calib;
      }
      const auto r = static_cast<Eigen::Index>(i);
      const auto c = static_cast<Eigen::Index>(i + k);
      sum(r, c) += value;
      count(r, c) += 1;
    }
  }

  ComplexMatrix m = ComplexMatrix::Zero(ni, ni);
  for (Eigen::Index i = 0; i < ni; ++i) {
    m(i, i) = sum(i, i);
    for (Eigen::Index j = i + 1; j < ni; ++j) {
      if (count(i, j) == 0) continue;
      const Complex v = sum(i, j) / static_cast<double>(count(i, j));
      m(i, j) = v;
      m(j, i) = std::conj(v);
      out.mask(i, j) = 1;
      out.mask(j, i) = 1;
    }
  }
  const double tr = m.trace().real();
  if (!(tr > 0.0)) fail(ErrorKind::Degenerate, "assembly: populations sum to zero");
  m /= tr;
  out.matrix = DensityMatrix(grid, std::move(m));
  return out;
}

}  // namespace kraken
