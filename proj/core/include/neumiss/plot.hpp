#pragma once

#include "neumiss/experiment.hpp"

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace neumiss::bench {

enum class FigureKind {
    /// Median score against capacity, one panel per (mechanism, n, d).
    capacity,
    /// Median score against capacity on a grid of panels: rows d, columns n.
    depth_panels,
    /// Per-method boxplots over seeds, one panel per (mechanism, n, d).
    boxplot,
};

FigureKind parse_figure_kind(std::string_view name);
std::string_view to_string(FigureKind kind);

/// Deterministic SVG 1.1 text. The plotted score is delta when every plotted
/// record has one, r2_test otherwise. Failed records are skipped.
std::string render_svg(const std::vector<ExperimentRecord>& records, FigureKind kind);

/// Reads a results CSV (SchemaMismatch on a wrong header) and writes the SVG.
void plot_results(const std::filesystem::path& csv_path, FigureKind kind, const std::filesystem::path& svg_path);

} // namespace neumiss::bench
