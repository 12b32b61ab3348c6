#include "kraken/kraken.h"

#include <cstdlib>
#include <cstring>
#include <memory>
#include <new>
#include <string>

#include "kraken/errors.hpp"
#include "kraken/estimation.hpp"
#include "kraken/io.hpp"
#include "kraken/pipeline.hpp"
#include "kraken/scenario.hpp"

using namespace kraken;

struct kraken_dm {
  DensityMatrix value;
};
struct kraken_scenario {
  ScenarioConfig value;
};
struct kraken_spectrogram {
  Spectrogram value;
};
struct kraken_trace {
  SubdiagonalTrace value;
};
struct kraken_result {
  ReconstructionResult value;
  ScenarioConfig config;
};

namespace {

thread_local std::string last_error;

kraken_status status_of(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Structural: return KRAKEN_ERR_STRUCTURAL;
    case ErrorKind::Configuration: return KRAKEN_ERR_CONFIGURATION;
    case ErrorKind::DataValidation: return KRAKEN_ERR_DATA;
    case ErrorKind::Degenerate: return KRAKEN_ERR_DEGENERATE;
    case ErrorKind::Numerical: return KRAKEN_ERR_NUMERICAL;
    case ErrorKind::Tuning: return KRAKEN_ERR_TUNING;
    case ErrorKind::InsufficientSamples: return KRAKEN_ERR_INSUFFICIENT_SAMPLES;
    case ErrorKind::Io: return KRAKEN_ERR_IO;
  }
  return KRAKEN_ERR_INTERNAL;
}

kraken_status invalid(const char* what) {
  last_error = what;
  return KRAKEN_ERR_INVALID_ARGUMENT;
}

template <typename F>
kraken_status guarded(F&& f) {
  try {
    f();
    last_error.clear();
    return KRAKEN_OK;
  } catch (const Error& e) {
    last_error = e.what();
    return status_of(e.kind());
  } catch (const std::bad_alloc&) {
    last_error = "out of memory";
    return KRAKEN_ERR_INTERNAL;
  } catch (const std::filesystem::filesystem_error& e) {
    last_error = e.what();
    return KRAKEN_ERR_IO;
  } catch (const std::exception& e) {
    last_error = e.what();
    return KRAKEN_ERR_INTERNAL;
  }
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

std::vector<std::string> strings(const char* const* items, std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) {
    if (!items[i]) fail(ErrorKind::Io, "null input path");
    out.emplace_back(items[i]);
  }
  return out;
}

std::vector<SubdiagonalTrace> collect(const kraken_trace* const* traces, std::size_t n) {
  std::vector<SubdiagonalTrace> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(traces[i]->value);
  return out;
}

bool any_null(const kraken_trace* const* traces, std::size_t n) {
  if (!traces) return true;
  for (std::size_t i = 0; i < n; ++i) {
    if (!traces[i]) return true;
  }
  return false;
}

std::vector<pipeline::Named> read_named(const std::vector<std::filesystem::path>& paths) {
  std::vector<pipeline::Named> out;
  for (const auto& p : paths) out.push_back({p.filename().string(), io::read_text(p)});
  return out;
}

}  // namespace

extern "C" {

const char* kraken_version(void) { return pipeline::kVersion; }

const char* kraken_status_name(kraken_status status) {
  switch (status) {
    case KRAKEN_OK: return "ok";
    case KRAKEN_ERR_INVALID_ARGUMENT: return "invalid argument";
    case KRAKEN_ERR_STRUCTURAL: return "structural error";
    case KRAKEN_ERR_CONFIGURATION: return "configuration error";
    case KRAKEN_ERR_DATA: return "data validation error";
    case KRAKEN_ERR_DEGENERATE: return "degenerate input";
    case KRAKEN_ERR_NUMERICAL: return "numerical error";
    case KRAKEN_ERR_TUNING: return "sampler tuning failure";
    case KRAKEN_ERR_INSUFFICIENT_SAMPLES: return "insufficient samples";
    case KRAKEN_ERR_IO: return "i/o error";
    case KRAKEN_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

const char* kraken_last_error(void) { return last_error.c_str(); }

void kraken_string_free(char* s) { std::free(s); }

// ---- density matrices -------------------------------------------------

kraken_status kraken_dm_create(double epsilon_min, double delta_epsilon, size_t n, const double* re,
                               const double* im, kraken_dm** out) {
  if (!re || !im || !out) return invalid("kraken_dm_create: null argument");
  return guarded([&] {
    EnergyGrid grid(epsilon_min, delta_epsilon, n);
    const auto ni = static_cast<Eigen::Index>(n);
    ComplexMatrix m(ni, ni);
    for (Eigen::Index i = 0; i < ni; ++i) {
      for (Eigen::Index j = 0; j < ni; ++j) {
        const auto k = static_cast<std::size_t>(i * ni + j);
        m(i, j) = Complex(re[k], im[k]);
      }
    }
    *out = new kraken_dm{DensityMatrix::validated(grid, std::move(m), "kraken_dm_create")};
  });
}

kraken_status kraken_dm_read(const char* path, kraken_dm** out) {
  if (!path || !out) return invalid("kraken_dm_read: null argument");
  return guarded([&] { *out = new kraken_dm{io::read_density_matrix(path)}; });
}

kraken_status kraken_dm_write(const kraken_dm* dm, const char* path) {
  if (!dm || !path) return invalid("kraken_dm_write: null argument");
  return guarded([&] { io::write_density_matrix(path, dm->value); });
}

void kraken_dm_free(kraken_dm* dm) { delete dm; }

size_t kraken_dm_dimension(const kraken_dm* dm) { return dm ? dm->value.size() : 0; }

kraken_status kraken_dm_grid(const kraken_dm* dm, double* epsilon_min, double* delta_epsilon) {
  if (!dm || !epsilon_min || !delta_epsilon) return invalid("kraken_dm_grid: null argument");
  *epsilon_min = dm->value.grid().epsilon_min();
  *delta_epsilon = dm->value.grid().delta_epsilon();
  return KRAKEN_OK;
}

kraken_status kraken_dm_elements(const kraken_dm* dm, double* re, double* im) {
  if (!dm || !re || !im) return invalid("kraken_dm_elements: null argument");
  const auto n = static_cast<Eigen::Index>(dm->value.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      const Complex z = dm->value.elements()(i, j);
      re[i * n + j] = z.real();
      im[i * n + j] = z.imag();
    }
  }
  return KRAKEN_OK;
}

kraken_status kraken_dm_purity(const kraken_dm* dm, double* out) {
  if (!dm || !out) return invalid("kraken_dm_purity: null argument");
  return guarded([&] { *out = purity(dm->value); });
}

kraken_status kraken_dm_concurrence(const kraken_dm* dm, double* out) {
  if (!dm || !out) return invalid("kraken_dm_concurrence: null argument");
  return guarded([&] { *out = concurrence(dm->value); });
}

kraken_status kraken_dm_min_eigenvalue(const kraken_dm* dm, double* out) {
  if (!dm || !out) return invalid("kraken_dm_min_eigenvalue: null argument");
  return guarded([&] { *out = min_eigenvalue(dm->value); });
}

kraken_status kraken_dm_fidelity(const kraken_dm* a, const kraken_dm* b, double* out) {
  if (!a || !b || !out) return invalid("kraken_dm_fidelity: null argument");
  return guarded([&] { *out = fidelity_amplitude(a->value, b->value); });
}

kraken_status kraken_dm_project_psd(const kraken_dm* dm, kraken_dm** out) {
  if (!dm || !out) return invalid("kraken_dm_project_psd: null argument");
  return guarded([&] { *out = new kraken_dm{project_psd(dm->value)}; });
}

// ---- scenarios ----------------------------------------------------------

kraken_status kraken_scenario_builtin(const char* name, kraken_scenario** out) {
  if (!name || !out) return invalid("kraken_scenario_builtin: null argument");
  return guarded([&] { *out = new kraken_scenario{builtin_scenario(name)}; });
}

kraken_status kraken_scenario_merge_json(kraken_scenario* sc, const char* json) {
  if (!sc || !json) return invalid("kraken_scenario_merge_json: null argument");
  return guarded([&] {
    io::Json patch;
    try {
      patch = io::Json::parse(json);
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::Configuration, std::string("config: malformed JSON: ") + e.what());
    }
    sc->value = merge_config(sc->value, patch);
  });
}

kraken_status kraken_scenario_set_seed(kraken_scenario* sc, uint64_t seed) {
  if (!sc) return invalid("kraken_scenario_set_seed: null argument");
  sc->value.seed = seed;
  return KRAKEN_OK;
}

kraken_status kraken_scenario_to_json(const kraken_scenario* sc, char** json) {
  if (!sc || !json) return invalid("kraken_scenario_to_json: null argument");
  return guarded([&] { *json = dup_string(sc->value.to_json().dump(2)); });
}

kraken_status kraken_scenario_truth(const kraken_scenario* sc, kraken_dm** out) {
  if (!sc || !out) return invalid("kraken_scenario_truth: null argument");
  return guarded([&] {
    sc->value.validate();
    *out = new kraken_dm{scenario_truth(sc->value)};
  });
}

size_t kraken_scenario_beat_count(const kraken_scenario* sc) {
  return sc ? sc->value.beat_energies.size() : 0;
}

void kraken_scenario_free(kraken_scenario* sc) { delete sc; }

// ---- spectrograms and traces --------------------------------------------

kraken_status kraken_simulate(const kraken_scenario* sc, size_t index, kraken_spectrogram** out) {
  if (!sc || !out) return invalid("kraken_simulate: null argument");
  if (index >= sc->value.beat_energies.size()) return invalid("kraken_simulate: index out of range");
  return guarded([&] {
    sc->value.validate();
    *out = new kraken_spectrogram{simulate_one(sc->value, scenario_truth(sc->value), index)};
  });
}

kraken_status kraken_spectrogram_read(const char* path, kraken_spectrogram** out) {
  if (!path || !out) return invalid("kraken_spectrogram_read: null argument");
  return guarded([&] { *out = new kraken_spectrogram{io::read_spectrogram(path)}; });
}

kraken_status kraken_spectrogram_write(const kraken_spectrogram* s, const char* path) {
  if (!s || !path) return invalid("kraken_spectrogram_write: null argument");
  return guarded([&] { io::write_spectrogram(path, s->value); });
}

void kraken_spectrogram_free(kraken_spectrogram* s) { delete s; }

kraken_status kraken_extract(const kraken_spectrogram* s, kraken_trace** out) {
  if (!s || !out) return invalid("kraken_extract: null argument");
  return guarded([&] { *out = new kraken_trace{fit_oscillation(s->value)}; });
}

kraken_status kraken_trace_read(const char* path, kraken_trace** out) {
  if (!path || !out) return invalid("kraken_trace_read: null argument");
  return guarded([&] { *out = new kraken_trace{io::read_trace(path)}; });
}

kraken_status kraken_trace_write(const kraken_trace* t, const char* path) {
  if (!t || !path) return invalid("kraken_trace_write: null argument");
  return guarded([&] { io::write_trace(path, t->value); });
}

size_t kraken_trace_size(const kraken_trace* t) { return t ? t->value.final_energies.size() : 0; }

kraken_status kraken_trace_columns(const kraken_trace* t, double* amplitude, double* phase) {
  if (!t || !amplitude || !phase) return invalid("kraken_trace_columns: null argument");
  std::copy(t->value.amplitude.begin(), t->value.amplitude.end(), amplitude);
  std::copy(t->value.phase.begin(), t->value.phase.end(), phase);
  return KRAKEN_OK;
}

void kraken_trace_free(kraken_trace* t) { delete t; }

kraken_status kraken_assemble(const kraken_trace* const* traces, size_t n, int interpolate,
                              kraken_dm** out) {
  if (!out || n == 0 || any_null(traces, n)) return invalid("kraken_assemble: null or empty input");
  return guarded([&] {
    const auto list = collect(traces, n);
    const RawAssembly raw =
        assemble_raw_dm(list, interpolate ? Placement::Interpolated : Placement::Nearest);
    *out = new kraken_dm{raw.matrix};
  });
}

// ---- reconstruction -----------------------------------------------------

kraken_status kraken_reconstruct(const kraken_scenario* sc, const kraken_trace* const* traces,
                                 size_t n, kraken_result** out) {
  if (!sc || !out || n == 0 || any_null(traces, n)) {
    return invalid("kraken_reconstruct: null or empty input");
  }
  return guarded([&] {
    *out = new kraken_result{pipeline::reconstruct(collect(traces, n), sc->value), sc->value};
  });
}

kraken_status kraken_result_map(const kraken_result* r, kraken_dm** out) {
  if (!r || !out) return invalid("kraken_result_map: null argument");
  return guarded([&] { *out = new kraken_dm{r->value.map_estimate}; });
}

kraken_status kraken_result_purity(const kraken_result* r, double* mean, double* lo, double* hi) {
  if (!r || !mean || !lo || !hi) return invalid("kraken_result_purity: null argument");
  *mean = r->value.purity.mean;
  *lo = r->value.purity.lo;
  *hi = r->value.purity.hi;
  return KRAKEN_OK;
}

kraken_status kraken_result_concurrence(const kraken_result* r, double* mean, double* lo,
                                        double* hi) {
  if (!r || !mean || !lo || !hi) return invalid("kraken_result_concurrence: null argument");
  *mean = r->value.concurrence.mean;
  *lo = r->value.concurrence.lo;
  *hi = r->value.concurrence.hi;
  return KRAKEN_OK;
}

kraken_status kraken_result_metrics_json(const kraken_result* r, char** json) {
  if (!r || !json) return invalid("kraken_result_metrics_json: null argument");
  return guarded([&] { *json = dup_string(pipeline::result_metrics(r->value, r->config).dump(2)); });
}

void kraken_result_free(kraken_result* r) { delete r; }

// ---- file-level commands ------------------------------------------------

kraken_status kraken_cmd_simulate(const kraken_scenario* sc, const char* out_dir) {
  if (!sc || !out_dir) return invalid("kraken_cmd_simulate: null argument");
  return guarded([&] {
    pipeline::write_simulation(out_dir, sc->value, pipeline::simulate(sc->value));
  });
}

kraken_status kraken_cmd_extract(const char* const* inputs, size_t n, const char* out_dir) {
  if (!inputs || n == 0 || !out_dir) return invalid("kraken_cmd_extract: no inputs");
  return guarded([&] {
    const auto paths = pipeline::expand_inputs(strings(inputs, n), "spectrogram_");
    const auto sources = read_named(paths);
    std::vector<Spectrogram> specs;
    for (const auto& s : sources) {
      try {
        specs.push_back(io::parse_spectrogram(s.text));
      } catch (const Error& e) {
        fail(e.kind(), s.name + ": " + e.what());
      }
    }
    pipeline::write_traces(out_dir, pipeline::extract(specs), sources);
  });
}

namespace {
std::vector<SubdiagonalTrace> parse_traces(const std::vector<pipeline::Named>& sources) {
  std::vector<SubdiagonalTrace> traces;
  for (const auto& s : sources) {
    try {
      traces.push_back(io::parse_trace(s.text));
    } catch (const Error& e) {
      fail(e.kind(), s.name + ": " + e.what());
    }
  }
  return traces;
}
}  // namespace

kraken_status kraken_cmd_assemble(const char* const* inputs, size_t n, int interpolate,
                                  const char* out_dir) {
  if (!inputs || n == 0 || !out_dir) return invalid("kraken_cmd_assemble: no inputs");
  return guarded([&] {
    const auto sources = read_named(pipeline::expand_inputs(strings(inputs, n), "trace_"));
    const Placement placement = interpolate ? Placement::Interpolated : Placement::Nearest;
    const RawAssembly raw = assemble_raw_dm(parse_traces(sources), placement);
    pipeline::write_assembly(out_dir, raw, placement, sources);
  });
}

kraken_status kraken_cmd_reconstruct(const kraken_scenario* sc, const char* const* inputs, size_t n,
                                     const char* out_dir, char** metrics_json) {
  if (!sc || !inputs || n == 0 || !out_dir) return invalid("kraken_cmd_reconstruct: no inputs");
  return guarded([&] {
    sc->value.estimator.validate();
    const auto sources = read_named(pipeline::expand_inputs(strings(inputs, n), "trace_"));
    const ReconstructionResult result = pipeline::reconstruct(parse_traces(sources), sc->value);
    pipeline::write_reconstruction(out_dir, result, sc->value, sources);
    if (metrics_json) *metrics_json = dup_string(pipeline::result_metrics(result, sc->value).dump(2));
  });
}

kraken_status kraken_cmd_metrics(const char* a_path, const char* b_path, char** json) {
  if (!a_path || !json) return invalid("kraken_cmd_metrics: null argument");
  return guarded([&] {
    const DensityMatrix a = io::read_density_matrix(a_path);
    a.require_valid(a_path);
    if (b_path) {
      const DensityMatrix b = io::read_density_matrix(b_path);
      b.require_valid(b_path);
      *json = dup_string(pipeline::metrics(a, &b).dump(2));
    } else {
      *json = dup_string(pipeline::metrics(a).dump(2));
    }
  });
}

kraken_status kraken_cmd_compare(const char* estimate, const char* truth_path, const char* out_dir,
                                 char** report_json) {
  if (!estimate || !truth_path || !out_dir) return invalid("kraken_cmd_compare: null argument");
  return guarded([&] {
    std::filesystem::path est_path(estimate);
    if (std::filesystem::is_directory(est_path)) est_path /= "map.dm";
    const auto sources = read_named({est_path, std::filesystem::path(truth_path)});
    const DensityMatrix est = io::parse_density_matrix(sources[0].text);
    const DensityMatrix truth = io::parse_density_matrix(sources[1].text);
    est.require_valid(est_path.string());
    truth.require_valid(truth_path);
    pipeline::write_compare(out_dir, est, truth, sources);
    if (report_json) *report_json = dup_string(pipeline::compare(est, truth).dump(2));
  });
}

kraken_status kraken_run_pipeline(const kraken_scenario* sc, const char* out_dir, char** summary) {
  if (!sc || !out_dir) return invalid("kraken_run_pipeline: null argument");
  return guarded([&] {
    const io::Json s = pipeline::run(sc->value, out_dir);
    if (summary) *summary = dup_string(s.dump(2));
  });
}

}  // extern "C"
