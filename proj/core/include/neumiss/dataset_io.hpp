#pragma once

#include "neumiss/simgen.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>

namespace neumiss::sim {

// CSV layout: header x0..x{d-1},m0..m{d-1},y; masked cells hold the token NA;
// numbers are written in shortest round-trip form.
void write_dataset_csv(std::ostream& out, const MaskedDataset& data);
void write_dataset_csv(const std::filesystem::path& path, const MaskedDataset& data);

/// Reads a dataset written by write_dataset_csv. Missing cells are unknown
/// afterwards (has_true_values() is false).
MaskedDataset read_dataset_csv(std::istream& in);
MaskedDataset read_dataset_csv(const std::filesystem::path& path);

/// Shortest decimal representation that parses back to the same double.
std::string format_double(double x);
double parse_double(std::string_view text);

} // namespace neumiss::sim
