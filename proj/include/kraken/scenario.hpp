#pragma once

// Scenario configuration: everything needed to reproduce a run, loaded from
// a nested JSON document and echoed into every manifest.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "kraken/estimation.hpp"
#include "kraken/forward_model.hpp"
#include "kraken/io.hpp"

namespace kraken {

struct ScenarioConfig {
  std::string name = "custom";
  TargetModel target = Helium{};
  XuvPulse xuv;
  double omega1_energy = 1.55;
  double relative_amplitude = 1.0;
  std::vector<double> beat_energies;
  EnergyGrid grid{5.205, 0.0205, 21};
  double delay_start = 0.0;
  double delay_stop = 250.0;
  double delay_step = 5.0;
  ResponseFunction response = ResponseFunction::identity();
  double noise_scale = 0.0;
  std::uint64_t seed = 1;
  EstimatorSettings estimator;
  /// Unset means derived from `seed`.
  std::optional<std::uint64_t> estimator_seed;
  std::string output_dir = "kraken_out";

  /// Throws ErrorKind::Configuration naming the offending field path.
  void validate() const;

  std::vector<double> delays() const;
  ProbePair probe(std::size_t index) const;
  std::uint64_t spectrogram_seed(std::size_t index) const;
  /// Estimator settings with the seed resolved.
  EstimatorSettings resolved_estimator() const;

  io::Json to_json() const;
  /// Strict: unknown keys and type mismatches are configuration errors.
  static ScenarioConfig from_json(const io::Json& j);
};

/// "helium" or "argon".
ScenarioConfig builtin_scenario(std::string_view name);
std::vector<std::string> builtin_scenario_names();

/// RFC 7386 merge of `patch` onto the JSON form of `base`.
ScenarioConfig merge_config(const ScenarioConfig& base, const io::Json& patch);

/// SplitMix64 of base and stream index; independent per-spectrogram streams.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

DensityMatrix scenario_truth(const ScenarioConfig& cfg);
Spectrogram simulate_one(const ScenarioConfig& cfg, const DensityMatrix& truth, std::size_t index);

}  // namespace kraken
