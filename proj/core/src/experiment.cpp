#include "neumiss/experiment.hpp"

#include "neumiss/dataset_io.hpp"
#include "neumiss/em.hpp"
#include "neumiss/errors.hpp"
#include "neumiss/imputer.hpp"
#include "neumiss/metrics.hpp"
#include "neumiss/mlp.hpp"
#include "neumiss/network.hpp"
#include "neumiss/oracle.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

namespace neumiss::bench {

namespace {

using nlohmann::json;

constexpr std::string_view kMethods[] = {"bayes",   "neumann_oracle", "neumiss", "neumiss_res", "neumiss_analytic",
                                         "mlp",     "mlp_deep",       "em",      "mice_lr"};

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void reject_unknown(const json& j, std::initializer_list<std::string_view> allowed, const std::string& where) {
    for (const auto& [key, value] : j.items()) {
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
            throw ConfigError("unknown key '" + key + "' in " + where);
        }
    }
}

void apply_train_keys(const json& j, TrainConfig& cfg, const std::string& where, bool allow_nested) {
    for (const auto& [key, value] : j.items()) {
        if (key == "batch_size") cfg.batch_size = value.get<Index>();
        else if (key == "lr_init") cfg.lr_init = value.get<double>();
        else if (key == "lr_decay_factor") cfg.lr_decay_factor = value.get<double>();
        else if (key == "plateau_epochs") cfg.plateau_epochs = value.get<Index>();
        else if (key == "plateau_threshold") cfg.plateau_threshold = value.get<double>();
        else if (key == "lr_floor") cfg.lr_floor = value.get<double>();
        else if (key == "max_epochs") cfg.max_epochs = value.get<Index>();
        else if (key == "optimizer") cfg.optimizer = parse_optimizer(value.get<std::string>());
        else if (key == "seed") cfg.seed = value.get<std::uint64_t>();
        else if (allow_nested && (key == "neumiss" || key == "mlp" || key == "em_tol" || key == "em_max_iter" ||
                                  key == "imputer_iterations" || key == "ridge_penalty" ||
                                  key == "validation_fraction")) {
            continue;
        } else {
            throw ConfigError("unknown key '" + key + "' in " + where);
        }
    }
}

TrainOverrides parse_train(const json& j) {
    if (!j.is_object()) throw ConfigError("train_config must be an object");
    TrainOverrides t;
    apply_train_keys(j, t.neumiss, "train_config", true);
    apply_train_keys(j, t.mlp, "train_config", true);
    if (j.contains("neumiss")) apply_train_keys(j.at("neumiss"), t.neumiss, "train_config.neumiss", false);
    if (j.contains("mlp")) apply_train_keys(j.at("mlp"), t.mlp, "train_config.mlp", false);
    t.validation_fraction = j.value("validation_fraction", t.validation_fraction);
    t.em_tol = j.value("em_tol", t.em_tol);
    t.em_max_iter = j.value("em_max_iter", t.em_max_iter);
    t.imputer_iterations = j.value("imputer_iterations", t.imputer_iterations);
    t.ridge_penalty = j.value("ridge_penalty", t.ridge_penalty);
    return t;
}

std::string sanitize(std::string text) {
    for (char& c : text) {
        if (c == ',' || c == ';') c = ';';
        else if (c == '\n' || c == '\r') c = ' ';
        else if (c == '"') c = '\'';
    }
    return text;
}

std::string format_optional(std::optional<double> v) {
    return v && std::isfinite(*v) ? sim::format_double(*v) : std::string();
}

std::string format_score(double v) { return std::isfinite(v) ? sim::format_double(v) : std::string(); }

double parse_score(std::string_view s) { return s.empty() ? kNaN : sim::parse_double(s); }

std::optional<double> parse_optional(std::string_view s) {
    if (s.empty()) return std::nullopt;
    return sim::parse_double(s);
}

Index parse_index(std::string_view s) {
    const double v = sim::parse_double(s);
    if (!(v >= 0.0) || v != std::floor(v)) throw SchemaMismatch("expected a count, got '" + std::string(s) + "'");
    return static_cast<Index>(v);
}

std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(',', start);
        if (pos == std::string_view::npos) {
            fields.push_back(line.substr(start));
            break;
        }
        fields.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return fields;
}

std::string cell_tag(const char* what, sim::MechanismKind mech, Index n, Index d, Index rep) {
    std::ostringstream s;
    s << what << '/' << sim::to_string(mech) << "/n=" << n << "/d=" << d << "/rep=" << rep;
    return s.str();
}

// Identity of a record inside an experiment; selecting methods use "*" for the capacity.
std::string record_key(std::string_view mech, Index n, Index d, std::string_view method, std::uint64_t seed,
                       std::optional<Index> capacity) {
    std::ostringstream s;
    s << mech << '|' << n << '|' << d << '|' << method << '|' << seed << '|';
    if (capacity) s << *capacity;
    else s << '*';
    return s.str();
}

std::string cell_key(const ExperimentConfig& cfg, const Cell& cell) {
    const auto& method = cfg.methods[cell.method_index];
    return record_key(sim::to_string(cell.mechanism), cell.n, cell.d, method.display(), cfg.base_seed + cell.rep,
                      cell.capacity);
}

std::string existing_key(const ExperimentConfig& cfg, const ExperimentRecord& r) {
    bool select = true;
    for (const auto& m : cfg.methods) {
        if (m.display() == r.method) select = m.select || !method_has_capacity(m.name);
    }
    return record_key(r.mechanism, r.n, r.d, r.method, r.seed, select ? std::nullopt : r.capacity);
}

struct Scores {
    double train = kNaN;
    double val = kNaN;
    double test = kNaN;
};

struct CellData {
    sim::GroundTruth gt;
    sim::MaskedDataset fit;
    sim::MaskedDataset validation;
    sim::MaskedDataset test;
};

CellData make_cell_data(const ExperimentConfig& cfg, const Cell& cell) {
    CellData data;
    RngStream gt_rng(cfg.base_seed, stable_hash(cell_tag("gt", cell.mechanism, 0, cell.d, cell.rep)));
    data.gt = sim::make_ground_truth(gt_rng, cell.d, cfg.snr, cell.mechanism, cfg.missing_rate);
    RngStream data_rng(cfg.base_seed, stable_hash(cell_tag("data", cell.mechanism, cell.n, cell.d, cell.rep)));
    auto train = sim::draw_dataset(data_rng, data.gt, cell.n);
    data.test = sim::draw_dataset(data_rng, data.gt, cfg.n_test);
    auto split = net::split_validation(train, cfg.train.validation_fraction, data_rng);
    data.fit = std::move(split.fit);
    data.validation = std::move(split.validation);
    return data;
}

template <class Predict>
Scores score(const CellData& data, Predict&& predict) {
    Scores s;
    s.train = r2_score(data.fit.y(), predict(data.fit));
    s.val = r2_score(data.validation.y(), predict(data.validation));
    s.test = r2_score(data.test.y(), predict(data.test));
    return s;
}

Vector neumann_predictions(const sim::GroundTruth& gt, const sim::MaskedDataset& data, Index order, double radius) {
    oracle::NeumannState state{Matrix::identity(gt.dim()), order, std::max<Index>(order, 50)};
    Vector out(data.rows());
    for (Index i = 0; i < data.rows(); ++i) {
        const auto pattern = oracle::PatternView::from_mask(data.m_row(i));
        out[i] = oracle::neumann_predict(gt, pattern, oracle::gather_observed(data.x_row(i), pattern), state, radius);
    }
    return out;
}

Scores fit_and_score(const ExperimentConfig& cfg, const MethodSpec& method, const CellData& data,
                     std::optional<Index> capacity, RngStream& rng) {
    const std::string& name = method.name;
    const Index d = data.gt.dim();
    if (name == "bayes") {
        return score(data, [&](const sim::MaskedDataset& s) { return oracle::bayes_predictions(data.gt, s); });
    }
    if (name == "neumann_oracle") {
        const double radius = oracle::safe_radius(data.gt.sigma);
        return score(data, [&](const sim::MaskedDataset& s) { return neumann_predictions(data.gt, s, *capacity, radius); });
    }
    if (name == "neumiss" || name == "neumiss_res") {
        auto result = net::train(data.fit, data.validation, *capacity, name == "neumiss_res", cfg.train.neumiss, rng);
        return score(data, [&](const sim::MaskedDataset& s) { return net::predict(result.weights, s); });
    }
    if (name == "neumiss_analytic") {
        const auto w = net::analytic_weights(data.gt, *capacity);
        return score(data, [&](const sim::MaskedDataset& s) { return net::predict(w, s); });
    }
    if (name == "mlp" || name == "mlp_deep") {
        const std::vector<Index> widths =
            name == "mlp" ? std::vector<Index>{*capacity * d} : mlp::deep_widths(d, *capacity);
        auto result = mlp::train(data.fit, data.validation, widths, cfg.train.mlp, rng);
        return score(data, [&](const sim::MaskedDataset& s) { return mlp::predict(result.weights, s); });
    }
    if (name == "em") {
        baselines::EmOptions opts;
        opts.tol = cfg.train.em_tol;
        opts.max_iter = cfg.train.em_max_iter;
        const auto est = baselines::em_fit(data.fit, opts);
        return score(data, [&](const sim::MaskedDataset& s) { return baselines::em_predictions(est, s); });
    }
    if (name == "mice_lr") {
        const auto model = baselines::impute_lr_train(data.fit, cfg.train.imputer_iterations, cfg.train.ridge_penalty);
        return score(data, [&](const sim::MaskedDataset& s) { return baselines::impute_lr_predict(model, s); });
    }
    throw ConfigError("unknown method '" + name + "'");
}

} // namespace

TrainOverrides parse_train_overrides(std::string_view json_text) {
    try {
        return parse_train(json::parse(json_text));
    } catch (const json::exception& e) {
        throw ConfigError(std::string("invalid train configuration: ") + e.what());
    }
}

bool is_known_method(std::string_view name) {
    return std::find(std::begin(kMethods), std::end(kMethods), name) != std::end(kMethods);
}

bool method_has_capacity(std::string_view name) {
    return name != "bayes" && name != "em" && name != "mice_lr";
}

void ExperimentConfig::validate() const {
    if (!(snr > 0.0)) throw ConfigError("snr must be positive");
    if (!(missing_rate > 0.0 && missing_rate < 1.0)) throw ConfigError("missing_rate must lie in (0, 1)");
    if (n_test < 10000) throw ConfigError("n_test must be at least 10000");
    if (n_reps < 1) throw ConfigError("n_reps must be at least 1");
    for (Index d : d_grid) {
        if (d < 1) throw ConfigError("d_grid entries must be positive");
    }
    for (Index n : n_grid) {
        if (n < 10) throw ConfigError("n_grid entries must be at least 10");
    }
    if (!(train.validation_fraction > 0.0 && train.validation_fraction < 1.0)) {
        throw ConfigError("train_config.validation_fraction must lie in (0, 1)");
    }
    train.neumiss.validate();
    train.mlp.validate();
    std::set<std::string> labels;
    for (const auto& m : methods) {
        if (!is_known_method(m.name)) throw ConfigError("unknown method '" + m.name + "'");
        if (!labels.insert(m.display()).second) throw ConfigError("duplicate method label '" + m.display() + "'");
        if (method_has_capacity(m.name) && m.capacities.empty()) {
            throw ConfigError("method '" + m.display() + "' needs a non-empty capacity grid");
        }
        if (!method_has_capacity(m.name) && !m.capacities.empty()) {
            throw ConfigError("method '" + m.name + "' takes no capacities");
        }
        for (Index c : m.capacities) {
            if ((m.name == "mlp" || m.name == "mlp_deep" || m.name == "neumiss_analytic") && c < 1) {
                throw ConfigError("method '" + m.display() + "' needs capacities >= 1");
            }
        }
    }
}

ExperimentConfig parse_config(std::string_view json_text) {
    ExperimentConfig cfg;
    try {
        const json j = json::parse(json_text);
        if (!j.is_object()) throw ConfigError("configuration must be a JSON object");
        reject_unknown(j,
                       {"mechanisms", "d_grid", "n_grid", "methods", "snr", "missing_rate", "n_test", "n_reps",
                        "base_seed", "output_dir", "train_config"},
                       "configuration");
        for (const auto& m : j.at("mechanisms")) cfg.mechanisms.push_back(sim::parse_mechanism(m.get<std::string>()));
        cfg.d_grid = j.at("d_grid").get<std::vector<Index>>();
        cfg.n_grid = j.at("n_grid").get<std::vector<Index>>();
        for (const auto& m : j.at("methods")) {
            reject_unknown(m, {"name", "capacities", "select", "label"}, "method entry");
            MethodSpec spec;
            spec.name = m.at("name").get<std::string>();
            spec.capacities = m.value("capacities", std::vector<Index>{});
            spec.select = m.value("select", true);
            spec.label = m.value("label", std::string());
            cfg.methods.push_back(std::move(spec));
        }
        cfg.snr = j.value("snr", cfg.snr);
        cfg.missing_rate = j.value("missing_rate", cfg.missing_rate);
        cfg.n_test = j.value("n_test", cfg.n_test);
        cfg.n_reps = j.value("n_reps", cfg.n_reps);
        cfg.base_seed = j.value("base_seed", cfg.base_seed);
        cfg.output_dir = j.value("output_dir", cfg.output_dir);
        if (j.contains("train_config")) cfg.train = parse_train(j.at("train_config"));
    } catch (const json::exception& e) {
        throw ConfigError(std::string("invalid configuration: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open configuration '" + path.string() + "'");
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_config(buffer.str());
}

std::string format_record(const ExperimentRecord& r) {
    std::ostringstream s;
    s << "1," << r.mechanism << ',' << r.n << ',' << r.d << ',' << sanitize(r.method) << ',';
    if (r.capacity) s << *r.capacity;
    s << ',' << r.seed << ',' << format_score(r.r2_train) << ',' << format_score(r.r2_val) << ','
      << format_score(r.r2_test) << ',' << format_optional(r.bayes_rate) << ',' << format_optional(r.delta) << ','
      << sim::format_double(r.wall_time_s) << ',' << sanitize(r.error);
    return s.str();
}

ExperimentRecord parse_record(std::string_view line) {
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    const auto f = split_fields(line);
    if (f.size() != 14 || f[0] != "1") throw SchemaMismatch("results row does not match schema 1: '" + std::string(line) + "'");
    ExperimentRecord r;
    r.mechanism = std::string(f[1]);
    r.n = parse_index(f[2]);
    r.d = parse_index(f[3]);
    r.method = std::string(f[4]);
    if (!f[5].empty()) r.capacity = parse_index(f[5]);
    r.seed = parse_index(f[6]);
    r.r2_train = parse_score(f[7]);
    r.r2_val = parse_score(f[8]);
    r.r2_test = parse_score(f[9]);
    r.bayes_rate = parse_optional(f[10]);
    r.delta = parse_optional(f[11]);
    r.wall_time_s = sim::parse_double(f[12]);
    r.error = std::string(f[13]);
    return r;
}

std::vector<ExperimentRecord> read_results_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open results '" + path.string() + "'");
    std::string line;
    if (!std::getline(in, line)) throw SchemaMismatch("results file '" + path.string() + "' is empty");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != kCsvHeader) throw SchemaMismatch("results file '" + path.string() + "' has an unexpected header");
    std::vector<ExperimentRecord> records;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        records.push_back(parse_record(line));
    }
    return records;
}

void write_results_csv(const std::filesystem::path& path, const std::vector<ExperimentRecord>& records) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::trunc);
        if (!out) throw Error("cannot write '" + tmp.string() + "'");
        out << kCsvHeader << '\n';
        for (const auto& r : records) out << format_record(r) << '\n';
        out.flush();
        if (!out) throw Error("failed writing '" + tmp.string() + "'");
    }
    std::filesystem::rename(tmp, path);
}

std::vector<Cell> plan_cells(const ExperimentConfig& cfg) {
    std::vector<Cell> cells;
    for (auto mech : cfg.mechanisms) {
        for (Index d : cfg.d_grid) {
            for (Index n : cfg.n_grid) {
                for (Index rep = 0; rep < cfg.n_reps; ++rep) {
                    for (Index mi = 0; mi < cfg.methods.size(); ++mi) {
                        const auto& m = cfg.methods[mi];
                        if (!method_has_capacity(m.name) || m.select) {
                            cells.push_back({mech, n, d, mi, std::nullopt, rep});
                        } else {
                            for (Index c : m.capacities) cells.push_back({mech, n, d, mi, c, rep});
                        }
                    }
                }
            }
        }
    }
    return cells;
}

ExperimentRecord run_cell(const ExperimentConfig& cfg, const Cell& cell) {
    const auto start = std::chrono::steady_clock::now();
    const auto& method = cfg.methods.at(cell.method_index);
    ExperimentRecord rec;
    rec.mechanism = std::string(sim::to_string(cell.mechanism));
    rec.n = cell.n;
    rec.d = cell.d;
    rec.method = method.display();
    rec.seed = cfg.base_seed + cell.rep;
    rec.r2_train = rec.r2_val = rec.r2_test = kNaN;
    try {
        const CellData data = make_cell_data(cfg, cell);
        if (cell.mechanism != sim::MechanismKind::selfmask_probit) {
            rec.bayes_rate = r2_score(data.test.y(), oracle::bayes_predictions(data.gt, data.test));
        }

        std::vector<std::optional<Index>> capacities;
        if (cell.capacity) capacities.push_back(cell.capacity);
        else if (method_has_capacity(method.name)) capacities.assign(method.capacities.begin(), method.capacities.end());
        else capacities.push_back(std::nullopt);

        std::optional<Scores> best;
        for (const auto& cap : capacities) {
            std::ostringstream tag;
            tag << cell_tag("fit", cell.mechanism, cell.n, cell.d, cell.rep) << '/' << method.name << '/';
            if (cap) tag << *cap;
            RngStream fit_rng(cfg.base_seed, stable_hash(tag.str()));
            const Scores s = fit_and_score(cfg, method, data, cap, fit_rng);
            if (!best || s.val > best->val) {
                best = s;
                rec.capacity = cap;
            }
        }
        rec.r2_train = best->train;
        rec.r2_val = best->val;
        rec.r2_test = best->test;
        if (rec.bayes_rate) rec.delta = rec.r2_test - *rec.bayes_rate;
    } catch (const std::exception& e) {
        rec.error = e.what();
        rec.capacity.reset();
        rec.r2_train = rec.r2_val = rec.r2_test = kNaN;
        rec.delta.reset();
    }
    rec.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return rec;
}

void fill_delta_to_best(std::vector<ExperimentRecord>& records) {
    std::map<std::string, double> best;
    auto group = [](const ExperimentRecord& r) {
        return r.mechanism + '|' + std::to_string(r.n) + '|' + std::to_string(r.d) + '|' + std::to_string(r.seed);
    };
    for (const auto& r : records) {
        if (r.failed() || !std::isfinite(r.r2_test)) continue;
        auto [it, inserted] = best.emplace(group(r), r.r2_test);
        if (!inserted) it->second = std::max(it->second, r.r2_test);
    }
    for (auto& r : records) {
        if (r.bayes_rate || r.failed() || !std::isfinite(r.r2_test)) continue;
        r.delta = r.r2_test - best.at(group(r));
    }
}

double median(std::vector<double> values) {
    if (values.empty()) throw std::invalid_argument("median of an empty sample");
    std::sort(values.begin(), values.end());
    const Index n = values.size();
    return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

std::filesystem::path run_experiment(const ExperimentConfig& cfg, const RunOptions& options) {
    cfg.validate();
    const std::filesystem::path dir(cfg.output_dir);
    std::filesystem::create_directories(dir);
    const auto csv = dir / "results.csv";

    std::set<std::string> done;
    if (std::filesystem::exists(csv)) {
        // Drop a trailing partial row left by an interrupted append.
        std::string content;
        {
            std::ifstream in(csv, std::ios::binary);
            std::stringstream buffer;
            buffer << in.rdbuf();
            content = buffer.str();
        }
        if (!content.empty() && content.back() != '\n') {
            const auto cut = content.rfind('\n');
            std::filesystem::resize_file(csv, cut == std::string::npos ? 0 : cut + 1);
        }
        if (std::filesystem::file_size(csv) == 0) {
            std::filesystem::remove(csv);
        } else {
            for (const auto& r : read_results_csv(csv)) done.insert(existing_key(cfg, r));
        }
    }
    if (!std::filesystem::exists(csv)) {
        std::ofstream out(csv);
        if (!out) throw Error("cannot create '" + csv.string() + "'");
        out << kCsvHeader << '\n';
    }

    const auto cells = plan_cells(cfg);
    std::vector<Index> pending;
    for (Index i = 0; i < cells.size(); ++i) {
        if (!done.count(cell_key(cfg, cells[i]))) pending.push_back(i);
    }
    if (options.max_new_cells && pending.size() > *options.max_new_cells) pending.resize(*options.max_new_cells);

    std::ofstream out(csv, std::ios::app);
    if (!out) throw Error("cannot append to '" + csv.string() + "'");
    std::mutex write_mutex;
    std::atomic<Index> next{0};
    Index finished = 0;
    std::exception_ptr io_error;

    auto worker = [&] {
        while (true) {
            const Index k = next.fetch_add(1);
            if (k >= pending.size()) return;
            const Cell& cell = cells[pending[k]];
            const ExperimentRecord rec = run_cell(cfg, cell);
            std::lock_guard lock(write_mutex);
            if (io_error) return;
            out << format_record(rec) << '\n';
            out.flush();
            if (!out) {
                io_error = std::make_exception_ptr(Error("failed appending to '" + csv.string() + "'"));
                next.store(pending.size());
                return;
            }
            ++finished;
            if (options.log) {
                *options.log << '[' << finished << '/' << pending.size() << "] " << rec.mechanism << " n=" << rec.n
                             << " d=" << rec.d << ' ' << rec.method;
                if (rec.capacity) *options.log << " capacity=" << *rec.capacity;
                *options.log << " seed=" << rec.seed;
                if (rec.failed()) *options.log << " error: " << rec.error;
                else *options.log << " r2_test=" << rec.r2_test;
                *options.log << " (" << rec.wall_time_s << " s)\n";
                options.log->flush();
            }
        }
    };

    const Index jobs = std::max<Index>(1, std::min<Index>(options.jobs, std::max<Index>(pending.size(), 1)));
    if (jobs == 1) {
        worker();
    } else {
        std::vector<std::thread> threads;
        for (Index t = 0; t < jobs; ++t) threads.emplace_back(worker);
        for (auto& t : threads) t.join();
    }
    out.close();
    if (io_error) std::rethrow_exception(io_error);

    // Rewrite in plan order with relative-to-best deltas filled in.
    auto records = read_results_csv(csv);
    std::map<std::string, Index> order;
    for (Index i = 0; i < cells.size(); ++i) order.emplace(cell_key(cfg, cells[i]), i);
    std::stable_sort(records.begin(), records.end(), [&](const ExperimentRecord& a, const ExperimentRecord& b) {
        const auto ia = order.find(existing_key(cfg, a));
        const auto ib = order.find(existing_key(cfg, b));
        const Index ka = ia == order.end() ? cells.size() : ia->second;
        const Index kb = ib == order.end() ? cells.size() : ib->second;
        return ka < kb;
    });
    fill_delta_to_best(records);
    write_results_csv(csv, records);
    return csv;
}

} // namespace neumiss::bench
