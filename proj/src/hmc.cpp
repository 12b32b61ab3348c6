#include <algorithm>
#include <cmath>
#include <random>

#include "kraken/errors.hpp"
#include "kraken/estimation.hpp"

namespace kraken {

Interval credible_interval(std::span<const double> values) {
  if (values.size() < 100) {
    fail(ErrorKind::InsufficientSamples,
         "credible interval needs at least 100 samples, got " + std::to_string(values.size()));
  }
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  auto quantile = [&](double q) {
    const double pos = q * static_cast<double>(v.size() - 1);
    const auto i = static_cast<std::size_t>(pos);
    const double frac = pos - static_cast<double>(i);
    return i + 1 < v.size() ? v[i] + frac * (v[i + 1] - v[i]) : v[i];
  };
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  return {mean, quantile(0.025), quantile(0.975)};
}

Interval purity_ci(std::span<const DensityMatrix> samples) {
  std::vector<double> p;
  p.reserve(samples.size());
  for (const auto& s : samples) p.push_back(purity(s));
  return credible_interval(p);
}

Interval concurrence_ci(std::span<const DensityMatrix> samples) {
  std::vector<double> c;
  c.reserve(samples.size());
  for (const auto& s : samples) c.push_back(concurrence(s));
  return credible_interval(c);
}

namespace {

struct Integrator {
  const PosteriorModel& model;
  std::vector<double> grad;

  explicit Integrator(const PosteriorModel& m) : model(m), grad(m.parameter_count()) {}

  // Potential U = -log posterior; grad holds -dU/dtheta after the call.
  double potential(std::span<const double> theta) {
    return -model.log_posterior_gradient(theta, grad);
  }

  // Leapfrog in place; returns U at the end point. `grad` must hold the
  // log-posterior gradient at the start point.
  double run(std::vector<double>& theta, std::vector<double>& p, double eps, std::size_t steps) {
    double u = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) p[i] += 0.5 * eps * grad[i];
    for (std::size_t s = 0; s < steps; ++s) {
      for (std::size_t i = 0; i < theta.size(); ++i) theta[i] += eps * p[i];
      u = potential(theta);
      if (!std::isfinite(u)) return u;
      const double w = (s + 1 == steps) ? 0.5 : 1.0;
      for (std::size_t i = 0; i < p.size(); ++i) p[i] += w * eps * grad[i];
    }
    return u;
  }
};

double kinetic(std::span<const double> p) {
  double k = 0.0;
  for (double x : p) k += x * x;
  return 0.5 * k;
}

double safe_run(Integrator& integ, std::vector<double>& theta, std::vector<double>& p, double eps,
                std::size_t steps) {
  try {
    return integ.run(theta, p, eps, steps);
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::Numerical) return std::numeric_limits<double>::infinity();
    throw;
  }
}

}  // namespace

double leapfrog_energy_error(const PosteriorModel& model, std::span<const double> theta,
                             std::span<const double> momentum, double step_size,
                             std::size_t n_steps) {
  Integrator integ(model);
  std::vector<double> x(theta.begin(), theta.end());
  std::vector<double> p(momentum.begin(), momentum.end());
  const double h0 = integ.potential(x) + kinetic(p);
  const double u1 = integ.run(x, p, step_size, n_steps);
  return u1 + kinetic(p) - h0;
}

HmcChain hmc_sample(const PosteriorModel& model, std::span<const double> init,
                    const EstimatorSettings& settings) {
  settings.validate();
  const std::size_t d = model.parameter_count();
  if (init.size() != d) fail(ErrorKind::Structural, "hmc: init has the wrong length");

  std::mt19937_64 rng(settings.seed);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> uniform;
  Integrator integ(model);

  std::vector<double> theta(init.begin(), init.end());
  double u = integ.potential(theta);
  if (!std::isfinite(u)) fail(ErrorKind::Numerical, "hmc: initial point has non-finite density");
  std::vector<double> grad = integ.grad;
  std::vector<double> x(d), p(d);

  auto trial_accept = [&](double eps, std::size_t steps) {
    x = theta;
    for (double& v : p) v = normal(rng);
    const double h0 = u + kinetic(p);
    integ.grad = grad;
    const double u1 = safe_run(integ, x, p, eps, steps);
    const double dh = u1 + kinetic(p) - h0;
    return std::isfinite(dh) ? std::min(1.0, std::exp(-dh)) : 0.0;
  };

  // Initial step: double or halve until a single step crosses 50% acceptance.
  double eps = settings.step_size;
  if (eps <= 0.0) {
    eps = 0.1;
    const bool up = trial_accept(eps, 1) > 0.5;
    for (int i = 0; i < 60; ++i) {
      const double a = trial_accept(eps, 1);
      if (up ? a <= 0.5 : a > 0.5) break;
      eps = up ? eps * 2.0 : eps * 0.5;
    }
  }

  // Dual averaging.
  const double mu = std::log(10.0 * eps);
  double h_bar = 0.0;
  double log_eps_bar = 0.0;
  constexpr double kGamma = 0.05, kT0 = 10.0, kKappa = 0.75;

  HmcChain chain;
  const std::size_t total = settings.n_warmup + settings.n_samples * settings.thin;
  double warm_accept = 0.0;
  double post_accept = 0.0;
  std::size_t divergences = 0;
  for (std::size_t iter = 0; iter < total; ++iter) {
    const bool warmup = iter < settings.n_warmup;
    x = theta;
    for (double& v : p) v = normal(rng);
    const double h0 = u + kinetic(p);
    integ.grad = grad;
    const double u1 = safe_run(integ, x, p, eps, settings.n_leapfrog);
    const double dh = u1 + kinetic(p) - h0;
    double accept_prob = 0.0;
    if (!std::isfinite(dh) || std::abs(dh) > 1e3) {
      if (!warmup) ++divergences;
    } else {
      accept_prob = std::min(1.0, std::exp(-dh));
      if (uniform(rng) < accept_prob) {
        theta.swap(x);
        u = u1;
        grad = integ.grad;
      }
    }
    if (warmup) {
      warm_accept += accept_prob;
      const double m = static_cast<double>(iter + 1);
      h_bar = (1.0 - 1.0 / (m + kT0)) * h_bar + (settings.target_accept - accept_prob) / (m + kT0);
      const double log_eps = mu - std::sqrt(m) / kGamma * h_bar;
      const double eta = std::pow(m, -kKappa);
      log_eps_bar = eta * log_eps + (1.0 - eta) * log_eps_bar;
      eps = std::exp(log_eps);
      if (iter + 1 == settings.n_warmup) eps = std::exp(log_eps_bar);
    } else {
      post_accept += accept_prob;
      if ((iter - settings.n_warmup) % settings.thin == 0) chain.thetas.push_back(theta);
    }
  }

  const std::size_t post = settings.n_samples * settings.thin;
  chain.diagnostics = {post_accept / static_cast<double>(post),
                       settings.n_warmup ? warm_accept / static_cast<double>(settings.n_warmup) : 0.0,
                       eps,
                       post,
                       settings.n_warmup,
                       settings.n_leapfrog,
                       divergences,
                       settings.seed};
  if (chain.diagnostics.acceptance_rate < 0.2) {
    fail(ErrorKind::Tuning, "hmc: post-warmup acceptance rate " +
                                std::to_string(chain.diagnostics.acceptance_rate) +
                                " is below 0.2 (step size " + std::to_string(eps) + ")");
  }
  return chain;
}

ReconstructionResult reconstruct(const MeasurementSet& data, const EstimatorSettings& settings) {
  settings.validate();
  const PosteriorModel model(data, settings);
  const std::vector<double> init = default_initial_theta(model, data);
  MapResult map = map_estimate(model, init, settings.map_max_iters, settings.map_tol);
  HmcChain chain = hmc_sample(model, map.theta, settings);

  const EnergyGrid& full = data.full_grid();
  ReconstructionResult result{embed(map.estimate, full), map.converged, map.iterations, {}, {}, {},
                              {}, {}, chain.diagnostics};
  result.samples.reserve(chain.thetas.size());
  for (auto& theta : chain.thetas) {
    DensityMatrix s = embed(CholeskyParam(model.dimension(), std::move(theta)).reconstruct(model.grid()), full);
    result.sample_purity.push_back(purity(s));
    result.sample_concurrence.push_back(concurrence_from_purity(result.sample_purity.back()));
    result.samples.push_back(std::move(s));
  }
  result.purity = credible_interval(result.sample_purity);
  result.concurrence = credible_interval(result.sample_concurrence);
  return result;
}

}  // namespace kraken
