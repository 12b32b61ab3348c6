#pragma once

// On-disk formats. Every file starts with a one-line JSON header followed by
// CSV; numbers are printed with 17 significant digits so that a write/read
// round trip is exact. Writes go to a temporary file that is renamed into
// place.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include <json.hpp>

#include "kraken/extraction.hpp"
#include "kraken/forward_model.hpp"
#include "kraken/qstate.hpp"

namespace kraken::io {

using Json = nlohmann::ordered_json;
namespace fs = std::filesystem;

std::string format_double(double x);

void write_text_atomic(const fs::path& path, std::string_view text);
std::string read_text(const fs::path& path);

/// FNV-1a 64-bit digest, hex encoded; used to tie manifests to payloads.
std::string digest(std::string_view bytes);

std::string format_density_matrix(const DensityMatrix& rho, const Json& metadata = Json::object());
/// Parses and checks shape; invariants are left to the caller (raw
/// assembled matrices are legitimately indefinite).
DensityMatrix parse_density_matrix(std::string_view text, Json* metadata = nullptr);
void write_density_matrix(const fs::path& path, const DensityMatrix& rho,
                          const Json& metadata = Json::object());
DensityMatrix read_density_matrix(const fs::path& path, Json* metadata = nullptr);

std::string format_spectrogram(const Spectrogram& spec);
Spectrogram parse_spectrogram(std::string_view text);
void write_spectrogram(const fs::path& path, const Spectrogram& spec);
Spectrogram read_spectrogram(const fs::path& path);

std::string format_trace(const SubdiagonalTrace& trace);
SubdiagonalTrace parse_trace(std::string_view text);
void write_trace(const fs::path& path, const SubdiagonalTrace& trace);
SubdiagonalTrace read_trace(const fs::path& path);

std::string format_mask(const RawAssembly& raw);

Json grid_to_json(const EnergyGrid& grid);
EnergyGrid grid_from_json(const Json& j);

}  // namespace kraken::io
