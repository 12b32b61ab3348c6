#include "kraken/pipeline.hpp"

#include <algorithm>
#include <cstdio>

#include "kraken/errors.hpp"

namespace kraken::pipeline {

namespace {

Json manifest(const std::string& command, const Json& config, const std::vector<Named>& inputs,
              const std::vector<Named>& outputs, Json extra = Json::object()) {
  Json in = Json::array();
  for (const auto& f : inputs) in.push_back({{"name", f.name}, {"digest", io::digest(f.text)}});
  Json out = Json::array();
  for (const auto& f : outputs) out.push_back({{"name", f.name}, {"digest", io::digest(f.text)}});
  Json m{{"tool", "kraken"}, {"version", kVersion}, {"command", command}, {"config", config}};
  for (auto& [k, v] : extra.items()) m[k] = v;
  m["inputs"] = in;
  m["outputs"] = out;
  return m;
}

void write_all(const fs::path& dir, const std::vector<Named>& files, const Json& manifest_json) {
  for (const auto& f : files) io::write_text_atomic(dir / f.name, f.text);
  io::write_text_atomic(dir / "manifest.json", manifest_json.dump(2) + "\n");
}

Json interval_json(const Interval& i) { return Json::array({i.lo, i.hi}); }

const char* placement_name(Placement p) {
  return p == Placement::Nearest ? "nearest" : "interpolated";
}

}  // namespace

std::string indexed_name(const std::string& prefix, std::size_t index, const std::string& ext) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%02zu", index);
  return prefix + buf + ext;
}

std::vector<fs::path> expand_inputs(const std::vector<std::string>& args, const std::string& prefix) {
  std::vector<fs::path> out;
  for (const auto& a : args) {
    const fs::path p(a);
    if (fs::is_directory(p)) {
      std::vector<fs::path> found;
      for (const auto& entry : fs::directory_iterator(p)) {
        const std::string name = entry.path().filename().string();
        if (entry.is_regular_file() && name.rfind(prefix, 0) == 0 && entry.path().extension() == ".csv") {
          found.push_back(entry.path());
        }
      }
      std::sort(found.begin(), found.end());
      if (found.empty()) {
        fail(ErrorKind::Io, "no " + prefix + "*.csv files in '" + p.string() + "'");
      }
      out.insert(out.end(), found.begin(), found.end());
    } else if (fs::exists(p)) {
      out.push_back(p);
    } else {
      fail(ErrorKind::Io, "input '" + a + "' does not exist");
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

Simulation simulate(const ScenarioConfig& cfg) {
  cfg.validate();
  Simulation sim{scenario_truth(cfg), {}};
  for (std::size_t i = 0; i < cfg.beat_energies.size(); ++i) {
    sim.spectrograms.push_back(simulate_one(cfg, sim.truth, i));
  }
  return sim;
}

void write_simulation(const fs::path& dir, const ScenarioConfig& cfg, const Simulation& sim) {
  std::vector<Named> files;
  Json seeds = Json::array();
  for (std::size_t i = 0; i < sim.spectrograms.size(); ++i) {
    files.push_back({indexed_name("spectrogram_", i, ".csv"), io::format_spectrogram(sim.spectrograms[i])});
    const auto& s = sim.spectrograms[i].rng_seed;
    seeds.push_back(s ? Json(*s) : Json(nullptr));
  }
  files.push_back({"truth.dm", io::format_density_matrix(sim.truth, {{"source", "model"}})});
  Json extra{{"spectrogram_seeds", seeds},
             {"truth", metrics(sim.truth)}};
  write_all(dir, files, manifest("simulate", cfg.to_json(), {}, files, extra));
}

std::vector<SubdiagonalTrace> extract(const std::vector<Spectrogram>& spectrograms) {
  std::vector<SubdiagonalTrace> traces;
  traces.reserve(spectrograms.size());
  for (const auto& s : spectrograms) traces.push_back(fit_oscillation(s));
  return traces;
}

void write_traces(const fs::path& dir, const std::vector<SubdiagonalTrace>& traces,
                  const std::vector<Named>& sources) {
  std::vector<Named> files;
  for (std::size_t i = 0; i < traces.size(); ++i) {
    files.push_back({indexed_name("trace_", i, ".csv"), io::format_trace(traces[i])});
  }
  write_all(dir, files, manifest("extract", nullptr, sources, files));
}

void write_assembly(const fs::path& dir, const RawAssembly& raw, Placement placement,
                    const std::vector<Named>& sources) {
  Json placements = Json::array();
  for (const auto& p : raw.placements) {
    placements.push_back(
        {{"beat_energy", p.beat_energy}, {"offset", p.offset}, {"residual", p.residual}});
  }
  const Json meta{{"source", "raw assembly"},
                  {"placement", placement_name(placement)},
                  {"placements", placements},
                  {"covered_elements", raw.covered_count()}};
  const std::vector<Named> files{{"raw.dm", io::format_density_matrix(raw.matrix, meta)},
                                 {"raw_mask.csv", io::format_mask(raw)}};
  Json extra{{"placement", placement_name(placement)},
             {"raw", {{"purity", purity(raw.matrix)}, {"min_eigenvalue", min_eigenvalue(raw.matrix)}}}};
  write_all(dir, files, manifest("assemble", nullptr, sources, files, extra));
}

MeasurementSet measurement_set(const std::vector<SubdiagonalTrace>& traces,
                               const ScenarioConfig& cfg) {
  return MeasurementSet(traces, cfg.response, cfg.estimator.window_threshold);
}

ReconstructionResult reconstruct(const std::vector<SubdiagonalTrace>& traces,
                                 const ScenarioConfig& cfg) {
  return kraken::reconstruct(measurement_set(traces, cfg), cfg.resolved_estimator());
}

Json result_metrics(const ReconstructionResult& r, const ScenarioConfig& cfg) {
  const HmcDiagnostics& d = r.diagnostics;
  const double map_purity = purity(r.map_estimate);
  return Json{
      {"interval", "95% posterior credible interval (2.5 / 97.5 percentiles of samples)"},
      {"purity_mean", r.purity.mean},
      {"purity_ci95", interval_json(r.purity)},
      {"concurrence_mean", r.concurrence.mean},
      {"concurrence_ci95", interval_json(r.concurrence)},
      {"map",
       {{"purity", map_purity},
        {"concurrence", concurrence_from_purity(map_purity)},
        {"converged", r.map_converged},
        {"iterations", r.map_iterations}}},
      {"use_response", cfg.estimator.use_response},
      {"diagnostics",
       {{"acceptance_rate", d.acceptance_rate},
        {"warmup_acceptance", d.warmup_acceptance},
        {"step_size", d.step_size},
        {"chain_length", d.chain_length},
        {"warmup", d.warmup},
        {"n_leapfrog", d.n_leapfrog},
        {"divergences", d.divergences},
        {"retained_samples", r.samples.size()},
        {"seed", d.seed}}}};
}

void write_reconstruction(const fs::path& dir, const ReconstructionResult& result,
                          const ScenarioConfig& cfg, const std::vector<Named>& sources) {
  std::string samples = "sample,purity,concurrence\n";
  for (std::size_t i = 0; i < result.sample_purity.size(); ++i) {
    samples += std::to_string(i) + "," + io::format_double(result.sample_purity[i]) + "," +
               io::format_double(result.sample_concurrence[i]) + "\n";
  }
  const Json m = result_metrics(result, cfg);
  const std::vector<Named> files{
      {"map.dm", io::format_density_matrix(result.map_estimate, {{"source", "MAP estimate"}})},
      {"samples_metrics.csv", samples},
      {"metrics.json", m.dump(2) + "\n"}};
  write_all(dir, files, manifest("reconstruct", cfg.to_json(), sources, files));
}

Json metrics(const DensityMatrix& a, const DensityMatrix* b) {
  const double p = purity(a);
  Json j{{"purity", p}, {"concurrence", concurrence_from_purity(p)}, {"min_eigenvalue", min_eigenvalue(a)}};
  if (b) {
    const DensityMatrix aligned = embed(a, b->grid());
    j["fidelity"] = fidelity_amplitude(aligned, *b);
    j["frobenius_distance"] = frobenius_distance(aligned, *b);
  }
  return j;
}

namespace {

struct CompareTables {
  Json report;
  std::string abs_rho;
  std::string subdiagonals;
};

CompareTables compare_tables(const DensityMatrix& estimate, const DensityMatrix& truth) {
  if (estimate.size() != truth.size()) {
    fail(ErrorKind::Structural, "compare: matrices are on grids of different size");
  }
  const DensityMatrix est = embed(estimate, truth.grid());
  const EnergyGrid& g = truth.grid();
  const std::size_t n = g.size();
  CompareTables t;
  t.report = {{"fidelity", fidelity_amplitude(est, truth)},
              {"frobenius_error", frobenius_distance(est, truth)},
              {"estimate", metrics(est)},
              {"truth", metrics(truth)}};
  t.abs_rho = "i,j,epsilon1,epsilon2,abs_estimate,abs_truth\n";
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      t.abs_rho += std::to_string(i) + "," + std::to_string(j) + "," + io::format_double(g.point(i)) +
                   "," + io::format_double(g.point(j)) + "," + io::format_double(std::abs(est(i, j))) +
                   "," + io::format_double(std::abs(truth(i, j))) + "\n";
    }
  }
  t.subdiagonals = "offset,beat_energy,mean_abs_estimate,mean_abs_truth\n";
  for (std::size_t k = 0; k < n; ++k) {
    double se = 0.0, st = 0.0;
    for (std::size_t i = 0; i + k < n; ++i) {
      se += std::abs(est(i, i + k));
      st += std::abs(truth(i, i + k));
    }
    const double count = static_cast<double>(n - k);
    t.subdiagonals += std::to_string(k) + "," + io::format_double(static_cast<double>(k) * g.delta_epsilon()) +
                      "," + io::format_double(se / count) + "," + io::format_double(st / count) + "\n";
  }
  return t;
}

}  // namespace

Json compare(const DensityMatrix& estimate, const DensityMatrix& truth) {
  return compare_tables(estimate, truth).report;
}

void write_compare(const fs::path& dir, const DensityMatrix& estimate, const DensityMatrix& truth,
                   const std::vector<Named>& sources) {
  CompareTables t = compare_tables(estimate, truth);
  const std::vector<Named> files{{"compare.json", t.report.dump(2) + "\n"},
                                 {"abs_rho.csv", std::move(t.abs_rho)},
                                 {"subdiagonal_amplitude.csv", std::move(t.subdiagonals)}};
  write_all(dir, files, manifest("compare", nullptr, sources, files));
}

// ---------------------------------------------------------------------------

Json run(const ScenarioConfig& cfg, const fs::path& dir) {
  const Simulation sim = simulate(cfg);
  write_simulation(dir / "simulate", cfg, sim);

  std::vector<Named> spec_files;
  for (std::size_t i = 0; i < sim.spectrograms.size(); ++i) {
    spec_files.push_back({indexed_name("spectrogram_", i, ".csv"), io::format_spectrogram(sim.spectrograms[i])});
  }
  const std::vector<SubdiagonalTrace> traces = extract(sim.spectrograms);
  write_traces(dir / "extract", traces, spec_files);

  std::vector<Named> trace_files;
  for (std::size_t i = 0; i < traces.size(); ++i) {
    trace_files.push_back({indexed_name("trace_", i, ".csv"), io::format_trace(traces[i])});
  }
  const RawAssembly raw = assemble_raw_dm(traces);
  write_assembly(dir / "assemble", raw, Placement::Nearest, trace_files);

  const ReconstructionResult result = reconstruct(traces, cfg);
  write_reconstruction(dir / "reconstruct", result, cfg, trace_files);

  const std::vector<Named> compare_sources{
      {"map.dm", io::format_density_matrix(result.map_estimate, {{"source", "MAP estimate"}})},
      {"truth.dm", io::format_density_matrix(sim.truth, {{"source", "model"}})}};
  write_compare(dir / "compare", result.map_estimate, sim.truth, compare_sources);

  Json summary{{"tool", "kraken"},
               {"version", kVersion},
               {"command", "pipeline"},
               {"config", cfg.to_json()},
               {"raw", {{"purity", purity(raw.matrix)}, {"min_eigenvalue", min_eigenvalue(raw.matrix)}}},
               {"reconstruction", result_metrics(result, cfg)},
               {"compare", compare(result.map_estimate, sim.truth)},
               {"stages", {"simulate", "extract", "assemble", "reconstruct", "compare"}}};
  io::write_text_atomic(dir / "manifest.json", summary.dump(2) + "\n");
  return summary;
}

}  // namespace kraken::pipeline
