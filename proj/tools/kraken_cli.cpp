// kraken command-line front end. Talks to the library through the C API only.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "kraken/kraken.h"

namespace {

struct Failure {
  int code;
};

int exit_code(kraken_status s) {
  switch (s) {
    case KRAKEN_OK:
      return 0;
    case KRAKEN_ERR_DEGENERATE:
    case KRAKEN_ERR_NUMERICAL:
    case KRAKEN_ERR_TUNING:
    case KRAKEN_ERR_INSUFFICIENT_SAMPLES:
    case KRAKEN_ERR_INTERNAL:
      return 3;
    default:
      return 2;
  }
}

void check(kraken_status s) {
  if (s == KRAKEN_OK) return;
  std::cerr << "kraken: " << kraken_status_name(s) << ": " << kraken_last_error() << "\n";
  throw Failure{exit_code(s)};
}

[[noreturn]] void usage_error(const std::string& msg) {
  std::cerr << "kraken: " << msg << "\n";
  throw Failure{2};
}

struct ScenarioDeleter {
  void operator()(kraken_scenario* s) const { kraken_scenario_free(s); }
};
using ScenarioPtr = std::unique_ptr<kraken_scenario, ScenarioDeleter>;

struct Common {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::string scenario;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config, "JSON config (merged onto the scenario)");
    cmd->add_option("--out", out, "output directory");
    cmd->add_option("--seed", seed, "master seed (overrides the config)");
    cmd->add_option("--scenario", scenario, "builtin scenario")
        ->check(CLI::IsMember({"helium", "argon"}));
  }

  // Builtin scenario, then the config file, then flags.
  ScenarioPtr resolve(const std::string& extra_patch = {}) const {
    nlohmann::json patch = nlohmann::json::object();
    if (!config.empty()) {
      std::ifstream in(config);
      if (!in) usage_error("cannot read config file " + config);
      std::stringstream ss;
      ss << in.rdbuf();
      try {
        patch = nlohmann::json::parse(ss.str());
      } catch (const nlohmann::json::exception& e) {
        usage_error("config: malformed JSON in " + config + ": " + e.what());
      }
      if (!patch.is_object()) usage_error("config: top level must be an object");
    }
    std::string base = "helium";
    if (patch.contains("base")) {
      if (!patch["base"].is_string()) usage_error("config.base: expected a string");
      base = patch["base"].get<std::string>();
      patch.erase("base");
    }
    if (!scenario.empty()) base = scenario;

    kraken_scenario* raw = nullptr;
    check(kraken_scenario_builtin(base.c_str(), &raw));
    ScenarioPtr sc(raw);
    check(kraken_scenario_merge_json(sc.get(), patch.dump().c_str()));
    if (!extra_patch.empty()) check(kraken_scenario_merge_json(sc.get(), extra_patch.c_str()));
    if (seed) check(kraken_scenario_set_seed(sc.get(), *seed));
    return sc;
  }

  std::string out_dir(const kraken_scenario* sc, const std::string& stage) const {
    if (!out.empty()) return out;
    char* json = nullptr;
    check(kraken_scenario_to_json(sc, &json));
    const auto j = nlohmann::json::parse(json);
    kraken_string_free(json);
    std::string dir = j.value("output_dir", std::string("kraken_out"));
    return stage.empty() ? dir : dir + "/" + stage;
  }

  std::string require_out(const char* verb) const {
    if (out.empty()) usage_error(std::string(verb) + ": --out is required");
    return out;
  }
};

void print_owned(char* s) {
  if (!s) return;
  std::cout << s << "\n";
  kraken_string_free(s);
}

std::vector<const char*> c_strings(const std::vector<std::string>& v) {
  std::vector<const char*> out;
  for (const auto& s : v) out.push_back(s.c_str());
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"kraken: photoelectron density-matrix simulator and reconstruction"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kraken_version());

  Common sim_opts, ext_opts, asm_opts, rec_opts, met_opts, cmp_opts, run_opts;

  auto* sim = app.add_subcommand("simulate", "write one spectrogram per beat energy plus truth.dm");
  sim_opts.attach(sim);

  std::vector<std::string> ext_inputs;
  auto* ext = app.add_subcommand("extract", "fit subdiagonal traces from spectrograms");
  ext_opts.attach(ext);
  ext->add_option("inputs", ext_inputs, "spectrogram files or directories")->required();

  std::vector<std::string> asm_inputs;
  bool interpolate = false;
  auto* asmb = app.add_subcommand("assemble", "place traces into a raw density matrix");
  asm_opts.attach(asmb);
  asmb->add_option("inputs", asm_inputs, "trace files or directories")->required();
  asmb->add_flag("--interpolate", interpolate, "interpolate traces onto off-grid subdiagonals");

  std::vector<std::string> rec_inputs;
  bool no_response = false;
  auto* rec = app.add_subcommand("reconstruct", "MAP estimate and posterior sampling");
  rec_opts.attach(rec);
  rec->add_option("inputs", rec_inputs, "trace files or directories")->required();
  rec->add_flag("--no-response", no_response, "ignore the spectrometer response in the model");

  std::string met_a, met_b;
  auto* met = app.add_subcommand("metrics", "purity, concurrence and optional fidelity");
  met_opts.attach(met);
  met->add_option("matrix", met_a, "density-matrix file")->required();
  met->add_option("other", met_b, "second density-matrix file");

  std::string cmp_est, cmp_truth;
  auto* cmp = app.add_subcommand("compare", "fidelity report and plot-ready CSVs");
  cmp_opts.attach(cmp);
  cmp->add_option("estimate", cmp_est, "density-matrix file or reconstruction directory")->required();
  cmp->add_option("truth", cmp_truth, "reference density-matrix file")->required();

  auto* run = app.add_subcommand("pipeline", "simulate, extract, assemble, reconstruct, compare");
  run_opts.attach(run);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*sim) {
      auto sc = sim_opts.resolve();
      check(kraken_cmd_simulate(sc.get(), sim_opts.out_dir(sc.get(), "simulate").c_str()));
    } else if (*ext) {
      const auto in = c_strings(ext_inputs);
      check(kraken_cmd_extract(in.data(), in.size(), ext_opts.require_out("extract").c_str()));
    } else if (*asmb) {
      const auto in = c_strings(asm_inputs);
      check(kraken_cmd_assemble(in.data(), in.size(), interpolate ? 1 : 0,
                                asm_opts.require_out("assemble").c_str()));
    } else if (*rec) {
      auto sc = rec_opts.resolve(no_response ? R"({"estimator":{"use_response":false}})" : "");
      const auto in = c_strings(rec_inputs);
      char* json = nullptr;
      check(kraken_cmd_reconstruct(sc.get(), in.data(), in.size(),
                                   rec_opts.out_dir(sc.get(), "reconstruct").c_str(), &json));
      print_owned(json);
    } else if (*met) {
      char* json = nullptr;
      check(kraken_cmd_metrics(met_a.c_str(), met_b.empty() ? nullptr : met_b.c_str(), &json));
      if (!met_opts.out.empty()) {
        std::ofstream f(met_opts.out);
        f << json << "\n";
        if (!f) {
          kraken_string_free(json);
          usage_error("cannot write " + met_opts.out);
        }
      }
      print_owned(json);
    } else if (*cmp) {
      char* json = nullptr;
      check(kraken_cmd_compare(cmp_est.c_str(), cmp_truth.c_str(),
                               cmp_opts.require_out("compare").c_str(), &json));
      print_owned(json);
    } else if (*run) {
      auto sc = run_opts.resolve();
      char* json = nullptr;
      check(kraken_run_pipeline(sc.get(), run_opts.out_dir(sc.get(), "").c_str(), &json));
      print_owned(json);
    }
  } catch (const Failure& f) {
    return f.code;
  }
  return 0;
}
