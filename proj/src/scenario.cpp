#include "kraken/scenario.hpp"

#include <cmath>
#include <set>

#include "kraken/errors.hpp"

namespace kraken {

namespace {

using io::Json;

[[noreturn]] void config_error(const std::string& path, const std::string& what) {
  fail(ErrorKind::Configuration, "config." + path + ": " + what);
}

// Reads one JSON object, remembering which keys were consumed so leftovers
// can be reported with their full path.
class Section {
 public:
  Section(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) config_error(path_, "expected an object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  template <typename T>
  void read(const std::string& key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      config_error(child(key), "wrong type");
    }
  }

  Section sub(const std::string& key) {
    seen_.insert(key);
    static const Json empty = Json::object();
    return Section(j_.contains(key) ? j_.at(key) : empty, child(key));
  }

  const Json& raw(const std::string& key) {
    seen_.insert(key);
    return j_.at(key);
  }

  std::string child(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) config_error(child(key), "unknown key");
    }
  }

 private:
  const Json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

// Runs `f`, re-raising any kraken error as a configuration error at `path`.
template <typename F>
void at_path(const std::string& path, F&& f) {
  try {
    f();
  } catch (const Error& e) {
    config_error(path, e.what());
  }
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::vector<double> ScenarioConfig::delays() const {
  return delay_axis(delay_start, delay_stop, delay_step);
}

ProbePair ScenarioConfig::probe(std::size_t index) const {
  return {omega1_energy, omega1_energy - beat_energies.at(index), relative_amplitude};
}

std::uint64_t ScenarioConfig::spectrogram_seed(std::size_t index) const {
  return derive_seed(seed, index);
}

EstimatorSettings ScenarioConfig::resolved_estimator() const {
  EstimatorSettings s = estimator;
  s.seed = estimator_seed ? *estimator_seed : derive_seed(seed, 1ULL << 32);
  return s;
}

void ScenarioConfig::validate() const {
  at_path("target", [&] {
    if (const auto* he = std::get_if<Helium>(&target)) {
      if (!(he->ip > 0.0)) fail(ErrorKind::Configuration, "ip must be > 0");
    } else {
      const auto& ar = std::get<Argon>(target);
      if (!(ar.ip_3half > 0.0)) fail(ErrorKind::Configuration, "ip_3half must be > 0");
      if (!(ar.so_splitting > 0.0)) fail(ErrorKind::Configuration, "so_splitting must be > 0");
    }
  });
  at_path("xuv", [&] {
    if (!(xuv.intensity_fwhm > 0.0)) fail(ErrorKind::Configuration, "intensity_fwhm must be > 0");
    if (!std::isfinite(xuv.gdd)) fail(ErrorKind::Configuration, "gdd must be finite");
    channels(target, xuv);
  });
  at_path("probe.beat_energies", [&] {
    if (beat_energies.empty()) fail(ErrorKind::Configuration, "needs at least one entry");
    bool zero = false;
    for (double b : beat_energies) {
      if (!(b >= 0.0) || !(b < omega1_energy)) {
        fail(ErrorKind::Configuration, "entries must lie in [0, omega1_energy)");
      }
      zero = zero || b == 0.0;
    }
    if (!zero) fail(ErrorKind::Configuration, "the zero beat (populations) is required");
  });
  at_path("probe", [&] {
    for (std::size_t i = 0; i < beat_energies.size(); ++i) probe(i).validate();
  });
  at_path("delays", [&] { delays(); });
  at_path("noise.scale", [&] {
    if (!(noise_scale >= 0.0)) fail(ErrorKind::Configuration, "must be >= 0");
  });
  at_path("response", [&] { response.kernel(grid.delta_epsilon()); });
  at_path("estimator", [&] { estimator.validate(); });
  at_path("grid", [&] { model_density_matrix(target, xuv, grid); });
  if (output_dir.empty()) config_error("output_dir", "must not be empty");
}

Json ScenarioConfig::to_json() const {
  Json target_j;
  if (const auto* he = std::get_if<Helium>(&target)) {
    target_j = {{"kind", "helium"}, {"ip", he->ip}};
  } else {
    const auto& ar = std::get<Argon>(target);
    target_j = {{"kind", "argon"}, {"ip_3half", ar.ip_3half}, {"so_splitting", ar.so_splitting}};
  }
  Json response_j;
  if (response.kind() == ResponseFunction::Kind::Gaussian) {
    response_j = {{"kind", "gaussian"}, {"fwhm", response.fwhm()}};
  } else {
    response_j = {{"kind", "tabulated"}, {"samples", response.samples()}};
  }
  const EstimatorSettings& e = estimator;
  return Json{
      {"name", name},
      {"target", target_j},
      {"xuv",
       {{"central_photon_energy", xuv.central_photon_energy},
        {"intensity_fwhm", xuv.intensity_fwhm},
        {"gdd", xuv.gdd}}},
      {"probe",
       {{"omega1_energy", omega1_energy},
        {"relative_amplitude", relative_amplitude},
        {"beat_energies", beat_energies}}},
      {"grid", io::grid_to_json(grid)},
      {"delays", {{"start", delay_start}, {"stop", delay_stop}, {"step", delay_step}}},
      {"response", response_j},
      {"noise", {{"scale", noise_scale}}},
      {"seed", seed},
      {"estimator",
       {{"prior_scale", e.prior_scale},
        {"sigma_floor", e.sigma_floor},
        {"window_threshold", e.window_threshold},
        {"phase_snr", e.phase_snr},
        {"use_response", e.use_response},
        {"map_max_iters", e.map_max_iters},
        {"map_tol", e.map_tol},
        {"n_samples", e.n_samples},
        {"n_warmup", e.n_warmup},
        {"n_leapfrog", e.n_leapfrog},
        {"step_size", e.step_size},
        {"target_accept", e.target_accept},
        {"thin", e.thin},
        {"seed", estimator_seed ? Json(*estimator_seed) : Json(nullptr)}}},
      {"output_dir", output_dir}};
}

ScenarioConfig ScenarioConfig::from_json(const Json& j) {
  ScenarioConfig c;
  Section root(j, "");
  root.read("name", c.name);

  {
    Section t = root.sub("target");
    std::string kind = std::holds_alternative<Helium>(c.target) ? "helium" : "argon";
    t.read("kind", kind);
    if (kind == "helium") {
      Helium he;
      t.read("ip", he.ip);
      c.target = he;
    } else if (kind == "argon") {
      Argon ar;
      t.read("ip_3half", ar.ip_3half);
      t.read("so_splitting", ar.so_splitting);
      c.target = ar;
    } else {
      config_error("target.kind", "must be 'helium' or 'argon'");
    }
    t.finish();
  }
  {
    Section x = root.sub("xuv");
    x.read("central_photon_energy", c.xuv.central_photon_energy);
    x.read("intensity_fwhm", c.xuv.intensity_fwhm);
    x.read("gdd", c.xuv.gdd);
    x.finish();
  }
  {
    Section p = root.sub("probe");
    p.read("omega1_energy", c.omega1_energy);
    p.read("relative_amplitude", c.relative_amplitude);
    p.read("beat_energies", c.beat_energies);
    p.finish();
  }
  {
    Section g = root.sub("grid");
    double emin = c.grid.epsilon_min(), de = c.grid.delta_epsilon();
    std::size_t n = c.grid.size();
    g.read("epsilon_min", emin);
    g.read("delta_epsilon", de);
    g.read("n_points", n);
    g.finish();
    try {
      c.grid = EnergyGrid(emin, de, n);
    } catch (const Error& e) {
      config_error("grid", e.what());
    }
  }
  {
    Section d = root.sub("delays");
    d.read("start", c.delay_start);
    d.read("stop", c.delay_stop);
    d.read("step", c.delay_step);
    d.finish();
  }
  {
    Section r = root.sub("response");
    std::string kind = c.response.kind() == ResponseFunction::Kind::Gaussian ? "gaussian" : "tabulated";
    r.read("kind", kind);
    if (kind != "gaussian" && kind != "tabulated") {
      config_error("response.kind", "must be 'gaussian' or 'tabulated'");
    }
    double fwhm = c.response.fwhm();
    std::vector<double> samples = c.response.samples();
    if (kind == "gaussian") {
      r.read("fwhm", fwhm);
    } else {
      r.read("samples", samples);
    }
    at_path("response", [&] {
      c.response = kind == "gaussian" ? ResponseFunction::gaussian(fwhm)
                                      : ResponseFunction::tabulated(samples);
    });
    r.finish();
  }
  {
    Section n = root.sub("noise");
    n.read("scale", c.noise_scale);
    n.finish();
  }
  root.read("seed", c.seed);
  {
    Section e = root.sub("estimator");
    EstimatorSettings& s = c.estimator;
    e.read("prior_scale", s.prior_scale);
    e.read("sigma_floor", s.sigma_floor);
    e.read("window_threshold", s.window_threshold);
    e.read("phase_snr", s.phase_snr);
    e.read("use_response", s.use_response);
    e.read("map_max_iters", s.map_max_iters);
    e.read("map_tol", s.map_tol);
    e.read("n_samples", s.n_samples);
    e.read("n_warmup", s.n_warmup);
    e.read("n_leapfrog", s.n_leapfrog);
    e.read("step_size", s.step_size);
    e.read("target_accept", s.target_accept);
    e.read("thin", s.thin);
    if (e.has("seed")) {
      const Json& seed = e.raw("seed");
      if (seed.is_null()) {
        c.estimator_seed.reset();
      } else if (seed.is_number_unsigned()) {
        c.estimator_seed = seed.get<std::uint64_t>();
      } else {
        config_error("estimator.seed", "must be a nonnegative integer or null");
      }
    }
    e.finish();
  }
  root.read("output_dir", c.output_dir);
  root.finish();
  return c;
}

ScenarioConfig merge_config(const ScenarioConfig& base, const Json& patch) {
  if (!patch.is_object()) config_error("", "configuration must be a JSON object");
  Json merged = base.to_json();
  // Switching a variant replaces the whole section instead of mixing fields.
  for (const char* section : {"target", "response"}) {
    if (patch.contains(section) && patch[section].is_object() && patch[section].contains("kind") &&
        patch[section]["kind"] != merged[section]["kind"]) {
      merged[section] = Json::object();
    }
  }
  merged.merge_patch(patch);
  return ScenarioConfig::from_json(merged);
}

std::vector<std::string> builtin_scenario_names() { return {"helium", "argon"}; }

ScenarioConfig builtin_scenario(std::string_view name) {
  ScenarioConfig c;
  c.name = std::string(name);
  c.beat_energies = {0.0, 0.041, 0.061, 0.080, 0.098, 0.117, 0.134};
  c.response = ResponseFunction::gaussian(0.080);
  c.noise_scale = 0.02;
  c.seed = 20240101;
  c.estimator.target_accept = 0.7;
  c.output_dir = "kraken_" + c.name;
  if (name == "helium") {
    // Bandwidth is a free parameter; a small chirp gives the state a
    // nontrivial phase structure.
    c.target = Helium{};
    c.xuv.intensity_fwhm = 0.144;
    c.xuv.gdd = 20.0;
    c.grid = EnergyGrid(5.41 - 0.205, 0.0205, 21);
  } else if (name == "argon") {
    // Bandwidth fixed by the two-channel purity 0.61 at zero chirp.
    Argon ar;
    c.target = ar;
    c.xuv.intensity_fwhm = fwhm_from_sigma(argon_sigma_for_purity(0.61, ar.so_splitting));
    c.xuv.gdd = 0.0;
    const double center_1half = c.xuv.central_photon_energy - ar.ip_3half - ar.so_splitting;
    c.grid = EnergyGrid(center_1half - 0.205, 0.0205, 30);
  } else {
    fail(ErrorKind::Configuration,
         "unknown scenario '" + std::string(name) + "' (expected helium or argon)");
  }
  return c;
}

DensityMatrix scenario_truth(const ScenarioConfig& cfg) {
  return model_density_matrix(cfg.target, cfg.xuv, cfg.grid);
}

Spectrogram simulate_one(const ScenarioConfig& cfg, const DensityMatrix& truth, std::size_t index) {
  const auto delays = cfg.delays();
  std::optional<std::uint64_t> seed;
  if (cfg.noise_scale > 0.0) seed = cfg.spectrogram_seed(index);
  return simulate_spectrogram(truth, cfg.probe(index), delays, cfg.response, cfg.noise_scale,
                              seed);
}

}  // namespace kraken
