#include <doctest.h>

#include <random>

#include "kraken/errors.hpp"
#include "support.hpp"

using namespace kraken;

namespace {

std::vector<double> random_theta(std::size_t d, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  std::vector<double> t(d);
  for (double& v : t) v = g(rng);
  return t;
}

std::vector<double> truth_theta(const PosteriorModel& model, const DensityMatrix& truth,
                                std::size_t offset) {
  const auto n = static_cast<Eigen::Index>(model.dimension());
  const auto o = static_cast<Eigen::Index>(offset);
  const DensityMatrix block(model.grid(), truth.elements().block(o, o, n, n) /
                                              truth.elements().block(o, o, n, n).trace().real());
  const CholeskyParam p = CholeskyParam::from_density(block, std::sqrt(double(n * n)));
  return {p.values().begin(), p.values().end()};
}

double norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

TEST_CASE("cholesky parameterization round trip") {
  std::mt19937_64 rng(5);
  const EnergyGrid g(0.0, 0.02, 7);
  for (std::size_t rank : {1u, 3u, 7u}) {
    const DensityMatrix rho = ktest::random_state(g, rank, rng);
    const CholeskyParam p = CholeskyParam::from_density(rho, 2.5);
    CHECK(norm({p.values().begin(), p.values().end()}) == doctest::Approx(2.5));
    CHECK(frobenius_distance(p.reconstruct(g), rho) < 1e-12);
    CHECK(p.values().size() == CholeskyParam::parameter_count(7));
  }
}

TEST_CASE("canonical flips negative diagonals without changing the state") {
  std::mt19937_64 rng(9);
  const EnergyGrid g(0.0, 0.02, 5);
  const CholeskyParam p(5, random_theta(25, rng));
  const CholeskyParam c = p.canonical();
  for (std::size_t i = 0; i < 5; ++i) CHECK(c.values()[i] >= 0.0);
  CHECK(frobenius_distance(p.reconstruct(g), c.reconstruct(g)) < 1e-13);
}

TEST_CASE("posterior gradient matches finite differences") {
  const PosteriorModel model = ktest::model_for(ktest::small_scenario());
  REQUIRE(model.dimension() == 8);
  std::mt19937_64 rng(21);
  double worst = 0.0;
  for (int k = 0; k < 20; ++k) worst = std::max(worst, ktest::gradient_error(model, random_theta(64, rng)));
  CHECK(worst < 1e-5);
}

TEST_CASE("prior gradient is -theta / scale^2") {
  const PosteriorModel model = ktest::model_for(ktest::small_scenario());
  std::mt19937_64 rng(1);
  const auto t = random_theta(64, rng);
  std::vector<double> g(64);
  const double lp = model.log_prior(t, g);
  const double s2 = model.prior_scale() * model.prior_scale();
  CHECK(lp == doctest::Approx(-0.5 * norm(t) * norm(t) / s2));
  for (std::size_t i = 0; i < t.size(); ++i) CHECK(g[i] == doctest::Approx(-t[i] / s2));
}

TEST_CASE("likelihood depends only on the direction of theta") {
  const PosteriorModel model = ktest::model_for(ktest::small_scenario());
  std::mt19937_64 rng(2);
  auto t = random_theta(64, rng);
  const double a = model.log_likelihood_theta(t);
  for (double& v : t) v *= 3.7;
  CHECK(model.log_likelihood_theta(t) == doctest::Approx(a).epsilon(1e-12));
}

TEST_CASE("likelihood is stationary at the truth for noiseless data") {
  ScenarioConfig c = ktest::noiseless(builtin_scenario("helium"));
  MeasurementSet data = pipeline::measurement_set(ktest::traces_for(c), c);
  const PosteriorModel model(data, c.resolved_estimator());
  const auto theta = truth_theta(model, scenario_truth(c), data.window_offset());
  std::vector<double> g(theta.size());
  model.log_likelihood_theta(theta, g);
  // compare with the gradient scale at a perturbed point
  std::mt19937_64 rng(4);
  auto off = theta;
  std::normal_distribution<double> n01;
  for (double& v : off) v += 0.05 * n01(rng);
  std::vector<double> g_off(theta.size());
  model.log_likelihood_theta(off, g_off);
  CHECK(norm(g) < 1e-4 * norm(g_off));
  CHECK(model.chi2_per_bin(scenario_truth(c)) < 1e-12);
}

TEST_CASE("MAP started at the truth stays there") {
  ScenarioConfig c = ktest::noiseless(builtin_scenario("helium"));
  MeasurementSet data = pipeline::measurement_set(ktest::traces_for(c), c);
  const PosteriorModel model(data, c.resolved_estimator());
  const DensityMatrix truth = scenario_truth(c);
  const auto theta = truth_theta(model, truth, data.window_offset());
  const MapResult r = map_estimate(model, theta, 2, 1e-6);
  CHECK(r.iterations <= 2);
  CHECK(fidelity_amplitude(embed(r.estimate, truth.grid()), truth) > 0.9999);
}

TEST_CASE("scaling all counts leaves the posterior unchanged") {
  ScenarioConfig c = ktest::small_scenario();
  const auto traces = ktest::traces_for(c);
  auto scaled = traces;
  for (auto& t : scaled) {
    for (auto* v : {&t.amplitude, &t.amplitude_sigma, &t.dc, &t.dc_sigma}) {
      for (double& x : *v) x *= 250.0;
    }
  }
  const PosteriorModel a(pipeline::measurement_set(traces, c), c.resolved_estimator());
  const PosteriorModel b(pipeline::measurement_set(scaled, c), c.resolved_estimator());
  std::mt19937_64 rng(8);
  const auto t1 = random_theta(64, rng);
  const auto t2 = random_theta(64, rng);
  CHECK(a.log_posterior(t1) - a.log_posterior(t2) ==
        doctest::Approx(b.log_posterior(t1) - b.log_posterior(t2)).epsilon(1e-9));
}

TEST_CASE("populations alone leave coherences to the prior") {
  ScenarioConfig c = ktest::small_scenario();
  c.beat_energies = {0.0};
  c.estimator.n_samples = 400;
  c.estimator.n_warmup = 300;
  const auto result = pipeline::reconstruct(ktest::traces_for(c), c);
  // populations are pinned by the data
  const DensityMatrix truth = scenario_truth(c);
  for (std::size_t i = 2; i < 6; ++i) {
    CHECK(result.map_estimate(i, i).real() == doctest::Approx(truth(i, i).real()).epsilon(0.05));
  }
  // a pure state is not singled out: the state is far from pure and the
  // posterior spread of the purity is wide
  CHECK(result.purity.mean < 0.6);
  CHECK(result.purity.hi - result.purity.lo > 0.05);
}

TEST_CASE("halving the step size quarters the energy error") {
  ScenarioConfig c = ktest::small_scenario();
  c.estimator.n_samples = 100;
  c.estimator.n_warmup = 300;
  MeasurementSet data = pipeline::measurement_set(ktest::traces_for(c), c);
  const PosteriorModel model(data, c.resolved_estimator());
  const HmcChain chain = hmc_sample(model, default_initial_theta(model, data), c.resolved_estimator());
  CHECK(ktest::quartering_ratio(model, chain.thetas.back(), chain.diagnostics.step_size) ==
        doctest::Approx(4.0).epsilon(0.25));
}

TEST_CASE("seeded chains are bit reproducible") {
  ScenarioConfig c = ktest::small_scenario();
  c.estimator.n_samples = 100;
  c.estimator.n_warmup = 100;
  MeasurementSet data = pipeline::measurement_set(ktest::traces_for(c), c);
  const PosteriorModel model(data, c.resolved_estimator());
  const auto init = default_initial_theta(model, data);
  EstimatorSettings s = c.resolved_estimator();
  const HmcChain a = hmc_sample(model, init, s);
  const HmcChain b = hmc_sample(model, init, s);
  CHECK(a.thetas == b.thetas);
  s.seed += 1;
  const HmcChain d = hmc_sample(model, init, s);
  CHECK(a.thetas != d.thetas);
}

TEST_CASE("untuned huge steps are a tuning failure") {
  ScenarioConfig c = ktest::small_scenario();
  MeasurementSet data = pipeline::measurement_set(ktest::traces_for(c), c);
  const PosteriorModel model(data, c.resolved_estimator());
  EstimatorSettings s = c.resolved_estimator();
  s.n_warmup = 0;
  s.n_samples = 50;
  s.step_size = 5.0;
  try {
    (void)hmc_sample(model, default_initial_theta(model, data), s);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Tuning);
  }
}

TEST_CASE("credible interval") {
  std::vector<double> v(1001);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<double>(i);
  const Interval ci = credible_interval(v);
  CHECK(ci.mean == doctest::Approx(500.0));
  CHECK(ci.lo == doctest::Approx(25.0));
  CHECK(ci.hi == doctest::Approx(975.0));
  v.resize(99);
  try {
    (void)credible_interval(v);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::InsufficientSamples);
  }
}

TEST_CASE("response-aware reconstruction recovers helium") {
  const ScenarioConfig c = builtin_scenario("helium");
  const auto traces = ktest::traces_for(c);
  const DensityMatrix truth = scenario_truth(c);
  const auto with = pipeline::reconstruct(traces, c);
  ScenarioConfig off = c;
  off.estimator.use_response = false;
  const auto without = pipeline::reconstruct(traces, off);
  CHECK(fidelity_amplitude(with.map_estimate, truth) >= 0.98);
  CHECK(with.purity.mean >= 0.97);
  CHECK(without.purity.mean < with.purity.mean);
  CHECK(with.diagnostics.acceptance_rate >= 0.6);
  CHECK(with.diagnostics.acceptance_rate <= 0.9);
}

TEST_CASE("estimator settings validation") {
  EstimatorSettings s;
  s.target_accept = 1.0;
  CHECK_THROWS_AS(s.validate(), Error);
  s = {};
  s.n_leapfrog = 0;
  CHECK_THROWS_AS(s.validate(), Error);
}
