#pragma once

// Per-energy beat fits on spectrograms and assembly of the raw density
// matrix from the resulting subdiagonal traces.

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "kraken/forward_model.hpp"
#include "kraken/qstate.hpp"

namespace kraken {

/// Per-bin flags on a SubdiagonalTrace.
enum TraceFlag : std::uint8_t {
  kFlagDcOnly = 1,          // zero beat: amplitude/phase are absent
  kFlagZeroSignal = 2,      // constant-zero bin
  kFlagPhaseUndefined = 4,  // amplitude not above 3 sigma
};

/// Phase convention identifier written to trace files:
/// S(tau) = dc + A·cos(dw·tau + phi), phi = atan2(-c, b) for the fit
/// S = a + b·cos(dw·tau) + c·sin(dw·tau).
inline constexpr const char* kPhaseConvention = "cos(dw*tau+phi);phi=atan2(-c,b)";

struct SubdiagonalTrace {
  double beat_energy = 0.0;  // hbar*dw, eV
  double omega1_energy = 0.0;
  double relative_amplitude = 1.0;
  EnergyGrid final_energies;
  std::vector<double> amplitude;
  std::vector<double> phase;  // (-pi, pi]
  std::vector<double> amplitude_sigma;
  std::vector<double> phase_sigma;
  std::vector<double> dc;
  std::vector<double> dc_sigma;
  std::vector<double> amplitude_dc_correlation;
  std::vector<std::uint8_t> flags;

  bool is_population() const { return beat_energy == 0.0; }
  ProbePair probe() const {
    return {omega1_energy, omega1_energy - beat_energy, relative_amplitude};
  }
  void validate() const;
};

/// Linear least squares on {1, cos(dw·tau), sin(dw·tau)} per energy bin.
/// Uncertainties assume noise proportional to the signal.
SubdiagonalTrace fit_oscillation(const Spectrogram& spec);

/// e1 = e_f - hbar*w1, e2 = e_f - hbar*w2.
std::pair<double, double> map_energies(double epsilon_f, const ProbePair& probe);

enum class Placement {
  Nearest,       // place at the nearest integer subdiagonal
  Interpolated,  // sample the trace at the anti-diagonal position of each cell
};

struct PlacementRecord {
  double beat_energy;
  std::size_t offset;
  double residual;
};

struct RawAssembly {
  DensityMatrix matrix;  // Hermitian, unit trace, not necessarily PSD
  Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic> mask;
  std::vector<PlacementRecord> placements;

  std::size_t covered_count() const;
};

/// Grid of the intermediate energies e1 implied by the zero-beat trace.
EnergyGrid population_grid(const SubdiagonalTrace& populations);

/// Places each trace on its subdiagonal, mirrors, and scales to unit trace.
/// Amplitudes are divided by the trace's own dc term and anchored to the
/// zero-beat populations.
RawAssembly assemble_raw_dm(std::span<const SubdiagonalTrace> traces,
                            const EnergyGrid& grid,
                            Placement placement = Placement::Nearest);
RawAssembly assemble_raw_dm(std::span<const SubdiagonalTrace> traces,
                            Placement placement = Placement::Nearest);

const SubdiagonalTrace& find_population_trace(std::span<const SubdiagonalTrace> traces);

}  // namespace kraken
