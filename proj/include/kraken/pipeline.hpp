#pragma once

// Pipeline stages shared by the CLI verbs and the end-to-end run. Each stage
// writes its payload files plus a manifest.json into its own directory;
// manifests name inputs by basename and content digest so that a chain of
// single-stage runs and the end-to-end run produce identical directories.

#include <filesystem>
#include <string>
#include <vector>

#include "kraken/estimation.hpp"
#include "kraken/extraction.hpp"
#include "kraken/io.hpp"
#include "kraken/scenario.hpp"

namespace kraken::pipeline {

using io::Json;
namespace fs = std::filesystem;

inline constexpr const char* kVersion = "0.1.0";

struct Simulation {
  DensityMatrix truth;
  std::vector<Spectrogram> spectrograms;
};

Simulation simulate(const ScenarioConfig& cfg);
void write_simulation(const fs::path& dir, const ScenarioConfig& cfg, const Simulation& sim);

std::vector<SubdiagonalTrace> extract(const std::vector<Spectrogram>& spectrograms);
/// `sources` are the input file texts (or in-memory equivalents), named.
struct Named {
  std::string name;
  std::string text;
};
void write_traces(const fs::path& dir, const std::vector<SubdiagonalTrace>& traces,
                  const std::vector<Named>& sources);

void write_assembly(const fs::path& dir, const RawAssembly& raw, Placement placement,
                    const std::vector<Named>& sources);

MeasurementSet measurement_set(const std::vector<SubdiagonalTrace>& traces,
                               const ScenarioConfig& cfg);
ReconstructionResult reconstruct(const std::vector<SubdiagonalTrace>& traces,
                                 const ScenarioConfig& cfg);
Json result_metrics(const ReconstructionResult& result, const ScenarioConfig& cfg);
void write_reconstruction(const fs::path& dir, const ReconstructionResult& result,
                          const ScenarioConfig& cfg, const std::vector<Named>& sources);

/// Purity, concurrence and minimum eigenvalue of `a`; fidelity and Frobenius
/// distance when `b` is given.
Json metrics(const DensityMatrix& a, const DensityMatrix* b = nullptr);

/// Fidelity / Frobenius report plus plot-ready CSVs (|rho| on the grid and
/// mean |rho| per subdiagonal offset).
Json compare(const DensityMatrix& estimate, const DensityMatrix& truth);
void write_compare(const fs::path& dir, const DensityMatrix& estimate, const DensityMatrix& truth,
                   const std::vector<Named>& sources);

/// simulate -> extract -> assemble -> reconstruct -> compare, each stage in
/// its own subdirectory of `dir`. Returns the summary written to
/// dir/manifest.json.
Json run(const ScenarioConfig& cfg, const fs::path& dir);

/// Expands directories into their `prefix*.csv` files (sorted); files are
/// passed through.
std::vector<fs::path> expand_inputs(const std::vector<std::string>& args, const std::string& prefix);

std::string indexed_name(const std::string& prefix, std::size_t index, const std::string& ext);

}  // namespace kraken::pipeline
