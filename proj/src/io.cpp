#include "kraken/io.hpp"

#include <unistd.h>

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "kraken/errors.hpp"

namespace kraken::io {

namespace {

constexpr int kFormatVersion = 1;

// Splits into lines without the trailing '\n'; a final empty line is dropped.
std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    start = end + 1;
  }
  return lines;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos
                                                                     : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

double parse_number(std::string_view field, std::string_view what) {
  while (!field.empty() && field.front() == ' ') field.remove_prefix(1);
  while (!field.empty() && field.back() == ' ') field.remove_suffix(1);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc() || ptr != field.data() + field.size()) {
    fail(ErrorKind::DataValidation,
         std::string(what) + ": cannot parse number '" + std::string(field) + "'");
  }
  return value;
}

std::vector<double> parse_row(std::string_view line, std::size_t expected, std::string_view what) {
  const auto fields = split_fields(line);
  if (fields.size() != expected) {
    std::ostringstream os;
    os << what << ": expected " << expected << " columns, found " << fields.size();
    fail(ErrorKind::Structural, os.str());
  }
  std::vector<double> out;
  out.reserve(expected);
  for (auto f : fields) out.push_back(parse_number(f, what));
  return out;
}

Json parse_header(std::string_view line, std::string_view format) {
  Json header;
  try {
    header = Json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::DataValidation, std::string(format) + ": malformed JSON header: " + e.what());
  }
  if (!header.is_object() || header.value("format", "") != format) {
    fail(ErrorKind::DataValidation, "expected a '" + std::string(format) + "' file");
  }
  if (header.value("version", 0) != kFormatVersion) {
    fail(ErrorKind::DataValidation, std::string(format) + ": unsupported format version");
  }
  return header;
}

template <typename F>
auto with_json_errors(std::string_view what, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::DataValidation, std::string(what) + ": " + e.what());
  }
}

void append_row(std::string& out, const double* values, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    if (i) out += ',';
    out += format_double(values[i]);
  }
  out += '\n';
}

}  // namespace

std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

void write_text_atomic(const fs::path& path, std::string_view text) {
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  fs::path tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::Io, "cannot open '" + tmp.string() + "' for writing");
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    out.flush();
    if (!out) fail(ErrorKind::Io, "write to '" + tmp.string() + "' failed");
  }
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    fail(ErrorKind::Io, "cannot move output into place at '" + path.string() + "'");
  }
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string digest(std::string_view bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

Json grid_to_json(const EnergyGrid& grid) {
  return Json{{"epsilon_min", grid.epsilon_min()},
              {"delta_epsilon", grid.delta_epsilon()},
              {"n_points", grid.size()}};
}

EnergyGrid grid_from_json(const Json& j) {
  return with_json_errors("grid", [&] {
    return EnergyGrid(j.at("epsilon_min").get<double>(), j.at("delta_epsilon").get<double>(),
                      j.at("n_points").get<std::size_t>());
  });
}

// ---------------------------------------------------------------------------
// DensityMatrix

std::string format_density_matrix(const DensityMatrix& rho, const Json& metadata) {
  const Json header{{"format", "kraken-density-matrix"},
                    {"version", kFormatVersion},
                    {"grid", grid_to_json(rho.grid())},
                    {"metadata", metadata}};
  std::string out = header.dump() + "\n";
  const auto n = static_cast<Eigen::Index>(rho.size());
  std::vector<double> row(static_cast<std::size_t>(n));
  out += "# real\n";
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) row[static_cast<std::size_t>(j)] = rho.elements()(i, j).real();
    append_row(out, row.data(), row.size());
  }
  out += "# imag\n";
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) row[static_cast<std::size_t>(j)] = rho.elements()(i, j).imag();
    append_row(out, row.data(), row.size());
  }
  return out;
}

DensityMatrix parse_density_matrix(std::string_view text, Json* metadata) {
  const auto lines = split_lines(text);
  if (lines.empty()) fail(ErrorKind::DataValidation, "density matrix: empty file");
  const Json header = parse_header(lines[0], "kraken-density-matrix");
  const EnergyGrid grid = grid_from_json(header.at("grid"));
  const std::size_t n = grid.size();
  if (lines.size() != 3 + 2 * n || lines[1] != "# real" || lines[2 + n] != "# imag") {
    fail(ErrorKind::Structural, "density matrix: expected '# real' and '# imag' blocks of " +
                                    std::to_string(n) + " rows");
  }
  ComplexMatrix m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const auto re = parse_row(lines[2 + i], n, "density matrix");
    const auto im = parse_row(lines[3 + n + i], n, "density matrix");
    for (std::size_t j = 0; j < n; ++j) {
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = Complex(re[j], im[j]);
    }
  }
  if (metadata) *metadata = header.value("metadata", Json::object());
  return DensityMatrix(grid, std::move(m));
}

void write_density_matrix(const fs::path& path, const DensityMatrix& rho, const Json& metadata) {
  write_text_atomic(path, format_density_matrix(rho, metadata));
}

DensityMatrix read_density_matrix(const fs::path& path, Json* metadata) {
  return parse_density_matrix(read_text(path), metadata);
}

// ---------------------------------------------------------------------------
// Spectrogram

std::string format_spectrogram(const Spectrogram& spec) {
  spec.validate();
  Json header{{"format", "kraken-spectrogram"},
              {"version", kFormatVersion},
              {"probe",
               {{"omega1_energy", spec.probe.omega1_energy},
                {"omega2_energy", spec.probe.omega2_energy},
                {"relative_amplitude", spec.probe.relative_amplitude}}},
              {"beat_energy", spec.probe.beat_energy()},
              {"final_energies", grid_to_json(spec.final_energies)},
              {"delays", spec.delays},
              {"noise_scale", spec.noise_scale},
              {"seed", spec.rng_seed ? Json(*spec.rng_seed) : Json(nullptr)}};
  std::string out = header.dump() + "\n";
  const auto nf = static_cast<std::size_t>(spec.counts.cols());
  std::vector<double> row(nf);
  for (Eigen::Index t = 0; t < spec.counts.rows(); ++t) {
    for (std::size_t j = 0; j < nf; ++j) row[j] = spec.counts(t, static_cast<Eigen::Index>(j));
    append_row(out, row.data(), nf);
  }
  return out;
}

Spectrogram parse_spectrogram(std::string_view text) {
  const auto lines = split_lines(text);
  if (lines.empty()) fail(ErrorKind::DataValidation, "spectrogram: empty file");
  const Json header = parse_header(lines[0], "kraken-spectrogram");
  Spectrogram spec = with_json_errors("spectrogram", [&] {
    const Json& p = header.at("probe");
    std::optional<std::uint64_t> seed;
    if (!header.at("seed").is_null()) seed = header.at("seed").get<std::uint64_t>();
    return Spectrogram{
        ProbePair{p.at("omega1_energy").get<double>(), p.at("omega2_energy").get<double>(),
                  p.at("relative_amplitude").get<double>()},
        header.at("delays").get<std::vector<double>>(),
        grid_from_json(header.at("final_energies")),
        Eigen::MatrixXd(),
        seed,
        header.at("noise_scale").get<double>()};
  });
  const std::size_t nt = spec.delays.size();
  const std::size_t nf = spec.final_energies.size();
  if (lines.size() != 1 + nt) {
    fail(ErrorKind::Structural, "spectrogram: expected " + std::to_string(nt) + " count rows");
  }
  spec.counts.resize(static_cast<Eigen::Index>(nt), static_cast<Eigen::Index>(nf));
  for (std::size_t t = 0; t < nt; ++t) {
    const auto row = parse_row(lines[1 + t], nf, "spectrogram");
    for (std::size_t j = 0; j < nf; ++j) {
      spec.counts(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(j)) = row[j];
    }
  }
  spec.validate();
  return spec;
}

void write_spectrogram(const fs::path& path, const Spectrogram& spec) {
  write_text_atomic(path, format_spectrogram(spec));
}

Spectrogram read_spectrogram(const fs::path& path) { return parse_spectrogram(read_text(path)); }

// ---------------------------------------------------------------------------
// SubdiagonalTrace

namespace {
constexpr const char* kTraceColumns =
    "epsilon_f,A,phi,sigma_A,sigma_phi,dc,sigma_dc,corr_A_dc,flags";
}

std::string format_trace(const SubdiagonalTrace& trace) {
  trace.validate();
  const Json header{{"format", "kraken-trace"},
                    {"version", kFormatVersion},
                    {"beat_energy", trace.beat_energy},
                    {"convention", kPhaseConvention},
                    {"omega1_energy", trace.omega1_energy},
                    {"relative_amplitude", trace.relative_amplitude},
                    {"final_energies", grid_to_json(trace.final_energies)}};
  std::string out = header.dump() + "\n" + kTraceColumns + "\n";
  for (std::size_t i = 0; i < trace.final_energies.size(); ++i) {
    const double row[] = {trace.final_energies.point(i), trace.amplitude[i],
                          trace.phase[i],                trace.amplitude_sigma[i],
                          trace.phase_sigma[i],          trace.dc[i],
                          trace.dc_sigma[i],             trace.amplitude_dc_correlation[i],
                          static_cast<double>(trace.flags[i])};
    append_row(out, row, 9);
  }
  return out;
}

SubdiagonalTrace parse_trace(std::string_view text) {
  const auto lines = split_lines(text);
  if (lines.size() < 2) fail(ErrorKind::DataValidation, "trace: missing header");
  const Json header = parse_header(lines[0], "kraken-trace");
  if (header.value("convention", "") != std::string(kPhaseConvention)) {
    fail(ErrorKind::DataValidation, "trace: unknown phase convention");
  }
  if (lines[1] != kTraceColumns) fail(ErrorKind::Structural, "trace: unexpected column header");
  SubdiagonalTrace trace = with_json_errors("trace", [&] {
    SubdiagonalTrace t{.beat_energy = header.at("beat_energy").get<double>(),
                       .final_energies = grid_from_json(header.at("final_energies")),
                       .amplitude = {}, .phase = {}, .amplitude_sigma = {}, .phase_sigma = {},
                       .dc = {}, .dc_sigma = {}, .amplitude_dc_correlation = {}, .flags = {}};
    t.omega1_energy = header.at("omega1_energy").get<double>();
    t.relative_amplitude = header.at("relative_amplitude").get<double>();
    return t;
  });
  const std::size_t n = trace.final_energies.size();
  if (lines.size() != 2 + n) {
    fail(ErrorKind::Structural, "trace: expected " + std::to_string(n) + " data rows");
  }
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = parse_row(lines[2 + i], 9, "trace");
    if (std::abs(row[0] - trace.final_energies.point(i)) >
        1e-9 * trace.final_energies.delta_epsilon()) {
      fail(ErrorKind::DataValidation, "trace: epsilon_f column disagrees with the header grid");
    }
    trace.amplitude.push_back(row[1]);
    trace.phase.push_back(row[2]);
    trace.amplitude_sigma.push_back(row[3]);
    trace.phase_sigma.push_back(row[4]);
    trace.dc.push_back(row[5]);
    trace.dc_sigma.push_back(row[6]);
    trace.amplitude_dc_correlation.push_back(row[7]);
    if (!(row[8] >= 0.0 && row[8] < 256.0) || row[8] != std::floor(row[8])) {
      fail(ErrorKind::DataValidation, "trace: invalid flags value");
    }
    trace.flags.push_back(static_cast<std::uint8_t>(row[8]));
  }
  trace.validate();
  return trace;
}

void write_trace(const fs::path& path, const SubdiagonalTrace& trace) {
  write_text_atomic(path, format_trace(trace));
}

SubdiagonalTrace read_trace(const fs::path& path) { return parse_trace(read_text(path)); }

std::string format_mask(const RawAssembly& raw) {
  std::string out;
  for (Eigen::Index i = 0; i < raw.mask.rows(); ++i) {
    for (Eigen::Index j = 0; j < raw.mask.cols(); ++j) {
      if (j) out += ',';
      out += raw.mask(i, j) ? '1' : '0';
    }
    out += '\n';
  }
  return out;
}

}  // namespace kraken::io
