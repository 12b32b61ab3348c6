// Exercises the shared library through its C header only.

#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "kraken/kraken.h"

namespace fs = std::filesystem;

namespace {

const fs::path kTmp = KRAKEN_TEST_TMP;

std::string take(char* s) {
  std::string out = s ? s : "";
  kraken_string_free(s);
  return out;
}

kraken_scenario* scenario(const char* name, const char* patch = nullptr) {
  kraken_scenario* sc = nullptr;
  REQUIRE(kraken_scenario_builtin(name, &sc) == KRAKEN_OK);
  if (patch) REQUIRE(kraken_scenario_merge_json(sc, patch) == KRAKEN_OK);
  return sc;
}

}  // namespace

TEST_CASE("status names and version") {
  CHECK(std::string(kraken_version()) == "0.1.0");
  CHECK(std::string(kraken_status_name(KRAKEN_ERR_TUNING)) == "sampler tuning failure");
}

TEST_CASE("null arguments are rejected") {
  kraken_dm* dm = nullptr;
  CHECK(kraken_dm_read(nullptr, &dm) == KRAKEN_ERR_INVALID_ARGUMENT);
  CHECK(std::strlen(kraken_last_error()) > 0);
  double x = 0.0;
  CHECK(kraken_dm_purity(nullptr, &x) == KRAKEN_ERR_INVALID_ARGUMENT);
  CHECK(kraken_assemble(nullptr, 0, 0, &dm) == KRAKEN_ERR_INVALID_ARGUMENT);
  CHECK(kraken_dm_dimension(nullptr) == 0);
  kraken_dm_free(nullptr);
}

TEST_CASE("density matrix handle") {
  const double re[4] = {0.75, 0.0, 0.0, 0.25};
  const double im[4] = {0, 0, 0, 0};
  kraken_dm* dm = nullptr;
  REQUIRE(kraken_dm_create(1.0, 0.1, 2, re, im, &dm) == KRAKEN_OK);
  CHECK(kraken_dm_dimension(dm) == 2);
  double p = 0, c = 0, f = 0;
  CHECK(kraken_dm_purity(dm, &p) == KRAKEN_OK);
  CHECK(p == doctest::Approx(0.625));
  CHECK(kraken_dm_concurrence(dm, &c) == KRAKEN_OK);
  CHECK(c == doctest::Approx(std::sqrt(0.75)));
  CHECK(kraken_dm_fidelity(dm, dm, &f) == KRAKEN_OK);
  CHECK(f == doctest::Approx(1.0));

  const fs::path path = kTmp / "dm" / "a.dm";
  CHECK(kraken_dm_write(dm, path.c_str()) == KRAKEN_OK);
  kraken_dm* back = nullptr;
  REQUIRE(kraken_dm_read(path.c_str(), &back) == KRAKEN_OK);
  double r2[4], i2[4];
  CHECK(kraken_dm_elements(back, r2, i2) == KRAKEN_OK);
  CHECK(r2[0] == 0.75);
  kraken_dm_free(back);
  kraken_dm_free(dm);
}

TEST_CASE("invalid matrices map to error codes") {
  const double re[4] = {0.75, 0.1, 0.0, 0.25};  // not Hermitian
  const double im[4] = {0, 0, 0, 0};
  kraken_dm* dm = nullptr;
  CHECK(kraken_dm_create(1.0, 0.1, 2, re, im, &dm) == KRAKEN_ERR_NUMERICAL);
  CHECK(dm == nullptr);
  CHECK(kraken_dm_create(1.0, 0.1, 1, re, im, &dm) == KRAKEN_ERR_CONFIGURATION);
  CHECK(kraken_dm_read("/nonexistent/x.dm", &dm) == KRAKEN_ERR_IO);
  const double neg[4] = {-1.0, 0.0, 0.0, -1.0};
  // trace -2 fails validation before projection could see it
  CHECK(kraken_dm_create(1.0, 0.1, 2, neg, im, &dm) == KRAKEN_ERR_NUMERICAL);
}

TEST_CASE("scenario configuration") {
  kraken_scenario* sc = scenario("argon");
  CHECK(kraken_scenario_beat_count(sc) == 7);
  CHECK(kraken_scenario_merge_json(sc, "{\"noise\": {\"scale\": -1}}") == KRAKEN_OK);
  kraken_dm* truth = nullptr;
  CHECK(kraken_scenario_truth(sc, &truth) == KRAKEN_ERR_CONFIGURATION);
  CHECK(std::string(kraken_last_error()).find("noise.scale") != std::string::npos);
  CHECK(kraken_scenario_merge_json(sc, "{\"noise\": {\"scale\": 0.02}, \"seed\": 3}") == KRAKEN_OK);
  CHECK(kraken_scenario_merge_json(sc, "{not json") == KRAKEN_ERR_CONFIGURATION);
  CHECK(kraken_scenario_merge_json(sc, "{\"unknown\": 1}") == KRAKEN_ERR_CONFIGURATION);
  REQUIRE(kraken_scenario_truth(sc, &truth) == KRAKEN_OK);
  double p = 0;
  kraken_dm_purity(truth, &p);
  CHECK(p == doctest::Approx(0.61).epsilon(1e-3));
  char* json = nullptr;
  REQUIRE(kraken_scenario_to_json(sc, &json) == KRAKEN_OK);
  CHECK(take(json).find("\"seed\": 3") != std::string::npos);
  kraken_dm_free(truth);
  kraken_scenario_free(sc);
}

TEST_CASE("handle pipeline: simulate, extract, assemble, reconstruct") {
  kraken_scenario* sc = scenario("helium", R"({"estimator": {"n_samples": 200, "n_warmup": 200}})");
  std::vector<kraken_trace*> traces;
  for (size_t i = 0; i < kraken_scenario_beat_count(sc); ++i) {
    kraken_spectrogram* s = nullptr;
    REQUIRE(kraken_simulate(sc, i, &s) == KRAKEN_OK);
    kraken_trace* t = nullptr;
    REQUIRE(kraken_extract(s, &t) == KRAKEN_OK);
    traces.push_back(t);
    kraken_spectrogram_free(s);
  }
  kraken_spectrogram* bad = nullptr;
  CHECK(kraken_simulate(sc, 99, &bad) == KRAKEN_ERR_INVALID_ARGUMENT);

  std::vector<double> amp(kraken_trace_size(traces[3])), phase(amp.size());
  CHECK(kraken_trace_columns(traces[3], amp.data(), phase.data()) == KRAKEN_OK);
  CHECK(amp[amp.size() / 2] > 0.0);

  kraken_dm* raw = nullptr;
  REQUIRE(kraken_assemble(traces.data(), traces.size(), 0, &raw) == KRAKEN_OK);
  double raw_purity = 0;
  kraken_dm_purity(raw, &raw_purity);
  CHECK(raw_purity < 0.97);
  // missing zero-beat trace
  kraken_dm* none = nullptr;
  CHECK(kraken_assemble(traces.data() + 1, traces.size() - 1, 0, &none) == KRAKEN_ERR_CONFIGURATION);

  kraken_result* r = nullptr;
  REQUIRE(kraken_reconstruct(sc, traces.data(), traces.size(), &r) == KRAKEN_OK);
  double mean = 0, lo = 0, hi = 0;
  CHECK(kraken_result_purity(r, &mean, &lo, &hi) == KRAKEN_OK);
  CHECK(lo <= mean);
  CHECK(mean <= hi);
  CHECK(mean > 0.95);
  char* metrics = nullptr;
  REQUIRE(kraken_result_metrics_json(r, &metrics) == KRAKEN_OK);
  CHECK(take(metrics).find("purity_ci95") != std::string::npos);
  kraken_dm* map = nullptr;
  REQUIRE(kraken_result_map(r, &map) == KRAKEN_OK);
  kraken_dm* truth = nullptr;
  REQUIRE(kraken_scenario_truth(sc, &truth) == KRAKEN_OK);
  double f = 0;
  CHECK(kraken_dm_fidelity(map, truth, &f) == KRAKEN_OK);
  CHECK(f > 0.98);

  kraken_dm_free(truth);
  kraken_dm_free(map);
  kraken_result_free(r);
  kraken_dm_free(raw);
  for (auto* t : traces) kraken_trace_free(t);
  kraken_scenario_free(sc);
}

TEST_CASE("file commands") {
  kraken_scenario* sc = scenario("helium", R"({"estimator": {"n_samples": 150, "n_warmup": 150}})");
  const fs::path root = kTmp / "cmd";
  fs::remove_all(root);
  REQUIRE(kraken_cmd_simulate(sc, (root / "sim").c_str()) == KRAKEN_OK);
  const std::string sim = (root / "sim").string();
  const char* sim_in[] = {sim.c_str()};
  REQUIRE(kraken_cmd_extract(sim_in, 1, (root / "ext").c_str()) == KRAKEN_OK);
  const std::string ext = (root / "ext").string();
  const char* ext_in[] = {ext.c_str()};
  REQUIRE(kraken_cmd_assemble(ext_in, 1, 1, (root / "asm").c_str()) == KRAKEN_OK);
  char* metrics = nullptr;
  REQUIRE(kraken_cmd_reconstruct(sc, ext_in, 1, (root / "rec").c_str(), &metrics) == KRAKEN_OK);
  take(metrics);
  char* report = nullptr;
  REQUIRE(kraken_cmd_compare((root / "rec").c_str(), (root / "sim/truth.dm").c_str(),
                             (root / "cmp").c_str(), &report) == KRAKEN_OK);
  CHECK(take(report).find("fidelity") != std::string::npos);
  CHECK(fs::exists(root / "cmp/abs_rho.csv"));
  CHECK(fs::exists(root / "cmp/subdiagonal_amplitude.csv"));

  char* json = nullptr;
  REQUIRE(kraken_cmd_metrics((root / "sim/truth.dm").c_str(), nullptr, &json) == KRAKEN_OK);
  const std::string m = take(json);
  CHECK(m.find("\"concurrence\": 0.0") != std::string::npos);
  // raw assembly is indefinite: metrics refuse it
  CHECK(kraken_cmd_metrics((root / "asm/raw.dm").c_str(), nullptr, &json) == KRAKEN_ERR_NUMERICAL);
  const char* missing[] = {"/nonexistent/dir"};
  CHECK(kraken_cmd_extract(missing, 1, (root / "x").c_str()) == KRAKEN_ERR_IO);
  kraken_scenario_free(sc);
}
