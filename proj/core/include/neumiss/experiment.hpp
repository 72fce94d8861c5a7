#pragma once

#include "neumiss/dense.hpp"
#include "neumiss/simgen.hpp"
#include "neumiss/training.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace neumiss::bench {

/// Method names understood by run_cell.
///   bayes             analytic Bayes predictor (no capacity)
///   neumann_oracle    order-ℓ Neumann predictor with true parameters (capacity = ℓ)
///   neumiss           learned NeuMiss without residual connections (capacity = depth)
///   neumiss_res       learned NeuMiss with residual connections (capacity = depth)
///   neumiss_analytic  NeuMiss with analytic weights (capacity = depth ≥ 1)
///   mlp               one hidden layer of capacity·d units
///   mlp_deep          capacity hidden layers of d units
///   em                EM on (X, Y), then E[Y | X_obs] (no capacity)
///   mice_lr           iterative conditional imputation + least squares (no capacity)
bool is_known_method(std::string_view name);
bool method_has_capacity(std::string_view name);

struct MethodSpec {
    std::string name;
    std::vector<Index> capacities;
    /// true: one record per cell with the capacity chosen on validation R².
    /// false: one record per capacity.
    bool select = true;
    /// Name written to the results; defaults to `name`.
    std::string label;

    const std::string& display() const noexcept { return label.empty() ? name : label; }
};

struct TrainOverrides {
    /// Share of each training set held out for capacity selection.
    double validation_fraction = 0.2;
    TrainConfig neumiss = neumiss_train_defaults();
    TrainConfig mlp = mlp_train_defaults();
    double em_tol = 1e-6;
    Index em_max_iter = 200;
    Index imputer_iterations = 10;
    double ridge_penalty = 1e-3;
};

struct ExperimentConfig {
    std::vector<sim::MechanismKind> mechanisms;
    std::vector<Index> d_grid;
    std::vector<Index> n_grid;
    std::vector<MethodSpec> methods;
    double snr = 10.0;
    double missing_rate = 0.5;
    Index n_test = 10000;
    Index n_reps = 5;
    std::uint64_t base_seed = 0;
    std::string output_dir = "results";
    TrainOverrides train;

    /// Throws ConfigError on invalid values.
    void validate() const;
};

/// Parses a train_config object: shared TrainConfig keys, optional "neumiss"
/// and "mlp" sub-objects, and the EM / imputer settings.
TrainOverrides parse_train_overrides(std::string_view json_text);

/// Parses a JSON configuration. Unknown keys are rejected with ConfigError.
ExperimentConfig parse_config(std::string_view json_text);
ExperimentConfig load_config(const std::filesystem::path& path);

struct ExperimentRecord {
    std::string mechanism;
    Index n = 0;
    Index d = 0;
    std::string method;
    /// Empty for methods without capacity or when selection failed.
    std::optional<Index> capacity;
    std::uint64_t seed = 0;
    double r2_train = 0.0;
    double r2_val = 0.0;
    double r2_test = 0.0;
    std::optional<double> bayes_rate;
    /// r2_test minus the Bayes rate, or minus the best r2_test of the cell for probit self-masking.
    std::optional<double> delta;
    double wall_time_s = 0.0;
    std::string error;

    bool failed() const noexcept { return !error.empty(); }
};

inline constexpr std::string_view kCsvHeader =
    "schema=1,mechanism,n,d,method,capacity,seed,r2_train,r2_val,r2_test,bayes_rate,delta,wall_time_s,error";

std::string format_record(const ExperimentRecord& record);
ExperimentRecord parse_record(std::string_view line);
std::vector<ExperimentRecord> read_results_csv(const std::filesystem::path& path);
void write_results_csv(const std::filesystem::path& path, const std::vector<ExperimentRecord>& records);

/// One unit of work of an experiment grid.
struct Cell {
    sim::MechanismKind mechanism = sim::MechanismKind::mcar;
    Index n = 0;
    Index d = 0;
    Index method_index = 0;
    /// Fixed capacity for non-selecting methods.
    std::optional<Index> capacity;
    Index rep = 0;
};

/// Cells in deterministic order: mechanism, d, n, rep, method, capacity.
std::vector<Cell> plan_cells(const ExperimentConfig& cfg);

/// Generates the cell's data, fits the method (selecting capacity on
/// validation R² if requested) and scores it. Method failures are returned
/// as records with the error field set.
ExperimentRecord run_cell(const ExperimentConfig& cfg, const Cell& cell);

struct RunOptions {
    Index jobs = 1;
    /// Stop after this many newly computed cells (simulates an interruption).
    std::optional<Index> max_new_cells;
    /// Progress lines are written here when non-null.
    std::ostream* log = nullptr;
};

/// Runs every cell of the grid that is not already in <output_dir>/results.csv,
/// appending records as they finish, then rewrites the file in plan order
/// with the relative-to-best deltas filled in. Returns the CSV path.
std::filesystem::path run_experiment(const ExperimentConfig& cfg, const RunOptions& options = {});

/// Fills delta for records without a Bayes rate: r2_test minus the best
/// r2_test among successful records with the same mechanism, n, d and seed.
void fill_delta_to_best(std::vector<ExperimentRecord>& records);

/// Median of a non-empty sample.
double median(std::vector<double> values);

} // namespace neumiss::bench
