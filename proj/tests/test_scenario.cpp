#include <doctest.h>

#include <filesystem>
#include <set>

#include "kraken/errors.hpp"
#include "support.hpp"

using namespace kraken;
namespace fs = std::filesystem;

namespace {

std::string config_message(const io::Json& patch) {
  try {
    const ScenarioConfig c = merge_config(builtin_scenario("helium"), patch);
    c.validate();
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Configuration);
    return e.what();
  }
  FAIL("expected a configuration error");
  return {};
}

}  // namespace

TEST_CASE("builtin scenarios") {
  const ScenarioConfig he = builtin_scenario("helium");
  const ScenarioConfig ar = builtin_scenario("argon");
  he.validate();
  ar.validate();
  CHECK(he.beat_energies.size() == 7);
  CHECK(he.beat_energies.back() == doctest::Approx(0.134));
  CHECK(purity(scenario_truth(ar)) == doctest::Approx(0.61).epsilon(1e-3));
  CHECK(std::holds_alternative<Argon>(ar.target));
  CHECK_THROWS_AS(builtin_scenario("neon"), Error);
}

TEST_CASE("json round trip") {
  for (const char* name : {"helium", "argon"}) {
    const ScenarioConfig c = builtin_scenario(name);
    const io::Json j = c.to_json();
    CHECK(ScenarioConfig::from_json(j).to_json() == j);
  }
}

TEST_CASE("merge overrides and switches variants") {
  const ScenarioConfig c = merge_config(builtin_scenario("helium"),
                                        {{"noise", {{"scale", 0.05}}}, {"seed", 9}});
  CHECK(c.noise_scale == 0.05);
  CHECK(c.seed == 9);
  CHECK(c.beat_energies.size() == 7);
  const ScenarioConfig t = merge_config(builtin_scenario("helium"),
                                        {{"response", {{"kind", "tabulated"}, {"samples", {0.25, 0.5, 0.25}}}}});
  CHECK(t.response.kind() == ResponseFunction::Kind::Tabulated);
}

TEST_CASE("configuration errors name the field") {
  CHECK(config_message({{"noise", {{"scale", -1.0}}}}).find("noise") != std::string::npos);
  CHECK(config_message({{"grid", {{"n_points", 1}}}}).find("grid") != std::string::npos);
  CHECK(config_message({{"estimator", {{"n_leapfrog", 0}}}}).find("estimator") != std::string::npos);
  CHECK(config_message({{"bogus", 1}}).find("bogus") != std::string::npos);
  CHECK(config_message({{"xuv", {{"gdd", "twenty"}}}}).find("xuv.gdd") != std::string::npos);
  CHECK(config_message({{"probe", {{"beat_energies", {0.041}}}}}).find("probe") != std::string::npos);
}

TEST_CASE("seeds are derived per stream") {
  const ScenarioConfig c = builtin_scenario("helium");
  std::set<std::uint64_t> seeds;
  for (std::size_t i = 0; i < c.beat_energies.size(); ++i) seeds.insert(c.spectrogram_seed(i));
  seeds.insert(c.resolved_estimator().seed);
  CHECK(seeds.size() == c.beat_energies.size() + 1);
  ScenarioConfig fixed = c;
  fixed.estimator_seed = 42;
  CHECK(fixed.resolved_estimator().seed == 42);
}

TEST_CASE("simulation is deterministic per seed") {
  const ScenarioConfig c = builtin_scenario("argon");
  const auto a = pipeline::simulate(c);
  const auto b = pipeline::simulate(c);
  REQUIRE(a.spectrograms.size() == 7);
  for (std::size_t i = 0; i < 7; ++i) CHECK(a.spectrograms[i].counts == b.spectrograms[i].counts);
  ScenarioConfig d = c;
  d.seed += 1;
  CHECK(pipeline::simulate(d).spectrograms[3].counts != a.spectrograms[3].counts);
}

TEST_CASE("single zero beat gives populations only") {
  ScenarioConfig c = builtin_scenario("helium");
  c.beat_energies = {0.0};
  const auto sim = pipeline::simulate(c);
  REQUIRE(sim.spectrograms.size() == 1);
  const auto t = pipeline::extract(sim.spectrograms);
  CHECK(t[0].is_population());
}

TEST_CASE("stage manifests echo the config and are reproducible") {
  const fs::path dir = fs::temp_directory_path() / ("kraken_scenario_test_" + std::to_string(::getpid()));
  ScenarioConfig c = builtin_scenario("helium");
  c.estimator.n_samples = 150;
  c.estimator.n_warmup = 150;
  const io::Json s1 = pipeline::run(c, dir / "a");
  const io::Json s2 = pipeline::run(c, dir / "b");
  CHECK(s1 == s2);
  CHECK(s1["config"] == c.to_json());
  for (const char* f : {"simulate/manifest.json", "simulate/spectrogram_03.csv", "extract/trace_06.csv",
                        "assemble/raw.dm", "reconstruct/map.dm", "reconstruct/metrics.json",
                        "compare/compare.json"}) {
    CHECK(io::read_text(dir / "a" / f) == io::read_text(dir / "b" / f));
  }
  const io::Json manifest = io::Json::parse(io::read_text(dir / "a/simulate/manifest.json"));
  CHECK(ScenarioConfig::from_json(manifest["config"]).to_json() == c.to_json());
  fs::remove_all(dir);
}
