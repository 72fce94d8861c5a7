#include "neumiss/checkpoint.hpp"

#include "neumiss/errors.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>

namespace neumiss {

namespace {

using nlohmann::json;

json matrix_json(const Matrix& a) { return a.data(); }

Matrix matrix_from(const json& j, Index rows, Index cols, const char* name) {
    auto data = j.at(name).get<std::vector<double>>();
    if (data.size() != rows * cols) {
        throw SchemaMismatch(std::string("checkpoint: '") + name + "' has " + std::to_string(data.size()) +
                             " entries, expected " + std::to_string(rows * cols));
    }
    return Matrix(rows, cols, std::move(data));
}

Vector vector_from(const json& j, const char* name, Index size) {
    auto v = j.at(name).get<Vector>();
    if (v.size() != size) throw SchemaMismatch(std::string("checkpoint: '") + name + "' has the wrong length");
    return v;
}

json neumiss_json(const net::NeuMissWeights& w) {
    json out;
    out["d"] = w.dim();
    out["depth"] = w.depth;
    out["residual"] = w.residual;
    out["s0"] = matrix_json(w.s0);
    out["w_neu"] = json::array();
    for (const auto& m : w.w_neu) out["w_neu"].push_back(matrix_json(m));
    out["w_mix"] = matrix_json(w.w_mix);
    out["mu"] = w.mu;
    out["beta"] = w.beta;
    out["beta0"] = w.beta0;
    return out;
}

net::NeuMissWeights neumiss_from(const json& j) {
    const auto d = j.at("d").get<Index>();
    net::NeuMissWeights w;
    w.depth = j.at("depth").get<Index>();
    w.residual = j.at("residual").get<bool>();
    w.s0 = matrix_from(j, d, d, "s0");
    for (const auto& block : j.at("w_neu")) {
        auto data = block.get<std::vector<double>>();
        if (data.size() != d * d) throw SchemaMismatch("checkpoint: w_neu block has the wrong size");
        w.w_neu.emplace_back(d, d, std::move(data));
    }
    w.w_mix = matrix_from(j, d, d, "w_mix");
    w.mu = vector_from(j, "mu", d);
    w.beta = vector_from(j, "beta", d);
    w.beta0 = j.at("beta0").get<double>();
    w.validate();
    return w;
}

json mlp_json(const mlp::MlpWeights& w) {
    json out;
    out["kind"] = "mlp";
    out["layers"] = json::array();
    for (Index l = 0; l < w.weights.size(); ++l) {
        out["layers"].push_back({{"rows", w.weights[l].rows()},
                                 {"cols", w.weights[l].cols()},
                                 {"weight", matrix_json(w.weights[l])},
                                 {"bias", w.biases[l]}});
    }
    return out;
}

mlp::MlpWeights mlp_from(const json& j) {
    mlp::MlpWeights w;
    for (const auto& layer : j.at("layers")) {
        const auto rows = layer.at("rows").get<Index>();
        const auto cols = layer.at("cols").get<Index>();
        w.weights.push_back(matrix_from(layer, rows, cols, "weight"));
        w.biases.push_back(vector_from(layer, "bias", rows));
    }
    w.validate();
    return w;
}

json em_json(const baselines::JointGaussianEstimate& est) {
    json out;
    out["kind"] = "em";
    out["d"] = est.feature_dim();
    out["mean"] = est.mean;
    out["cov"] = matrix_json(est.cov);
    out["loglik_trace"] = est.loglik_trace;
    out["iterations"] = est.iterations;
    out["converged"] = est.converged;
    return out;
}

baselines::JointGaussianEstimate em_from(const json& j) {
    baselines::JointGaussianEstimate est;
    const auto d = j.at("d").get<Index>();
    est.mean = vector_from(j, "mean", d + 1);
    est.cov = matrix_from(j, d + 1, d + 1, "cov");
    est.loglik_trace = j.at("loglik_trace").get<std::vector<double>>();
    est.iterations = j.at("iterations").get<Index>();
    est.converged = j.at("converged").get<bool>();
    return est;
}

json impute_lr_json(const baselines::ImputeLrModel& model) {
    const auto& imp = model.imputer;
    json out;
    out["kind"] = "impute_lr";
    out["d"] = imp.dim();
    out["col_means"] = imp.col_means;
    out["ridge_penalty"] = imp.ridge_penalty;
    out["n_iterations"] = imp.n_iterations;
    out["last_sweep_change"] = imp.last_sweep_change;
    out["regressors"] = json::array();
    for (const auto& r : imp.regressors) out["regressors"].push_back({{"coef", r.coef}, {"intercept", r.intercept}});
    out["coef"] = model.coef;
    out["intercept"] = model.intercept;
    return out;
}

baselines::ImputeLrModel impute_lr_from(const json& j) {
    baselines::ImputeLrModel model;
    auto& imp = model.imputer;
    const auto d = j.at("d").get<Index>();
    imp.col_means = vector_from(j, "col_means", d);
    imp.ridge_penalty = j.at("ridge_penalty").get<double>();
    imp.n_iterations = j.at("n_iterations").get<Index>();
    imp.last_sweep_change = j.at("last_sweep_change").get<double>();
    for (const auto& r : j.at("regressors")) {
        imp.regressors.push_back({vector_from(r, "coef", d > 0 ? d - 1 : 0), r.at("intercept").get<double>()});
    }
    if (imp.regressors.size() != d) throw SchemaMismatch("checkpoint: need one regressor per feature");
    model.coef = vector_from(j, "coef", d);
    model.intercept = j.at("intercept").get<double>();
    return model;
}

} // namespace

std::string_view model_kind(const Model& model) {
    switch (model.index()) {
    case 0: return "neumiss";
    case 1: return "mlp";
    case 2: return "em";
    default: return "impute_lr";
    }
}

Vector predict_model(const Model& model, const sim::MaskedDataset& data) {
    return std::visit(
        [&](const auto& m) -> Vector {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, net::NeuMissWeights>) {
                if (m.dim() != data.dim()) throw ShapeMismatch("predict_model: dataset dimension mismatch");
                return net::predict(m, data);
            } else if constexpr (std::is_same_v<T, mlp::MlpWeights>) {
                if (m.input_dim() != 2 * data.dim()) throw ShapeMismatch("predict_model: dataset dimension mismatch");
                return mlp::predict(m, data);
            } else if constexpr (std::is_same_v<T, baselines::JointGaussianEstimate>) {
                return baselines::em_predictions(m, data);
            } else {
                return baselines::impute_lr_predict(m, data);
            }
        },
        model);
}

std::string to_json(const Model& model) {
    const json out = std::visit(
        [](const auto& m) -> json {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, net::NeuMissWeights>) return neumiss_json(m);
            else if constexpr (std::is_same_v<T, mlp::MlpWeights>) return mlp_json(m);
            else if constexpr (std::is_same_v<T, baselines::JointGaussianEstimate>) return em_json(m);
            else return impute_lr_json(m);
        },
        model);
    return out.dump(1) + "\n";
}

Model from_json(std::string_view text) {
    try {
        const json j = json::parse(text);
        if (!j.is_object()) throw SchemaMismatch("checkpoint: top level must be a JSON object");
        const std::string kind = j.value("kind", std::string("neumiss"));
        if (kind == "neumiss") return neumiss_from(j);
        if (kind == "mlp") return mlp_from(j);
        if (kind == "em") return em_from(j);
        if (kind == "impute_lr") return impute_lr_from(j);
        throw SchemaMismatch("checkpoint: unknown model kind '" + kind + "'");
    } catch (const json::exception& e) {
        throw SchemaMismatch(std::string("checkpoint: ") + e.what());
    } catch (const ShapeMismatch& e) {
        throw SchemaMismatch(std::string("checkpoint: ") + e.what());
    }
}

void save_model(const std::filesystem::path& path, const Model& model) {
    std::ofstream out(path);
    if (!out) throw Error("cannot open '" + path.string() + "' for writing");
    out << to_json(model);
    if (!out) throw Error("failed writing '" + path.string() + "'");
}

Model load_model(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open checkpoint '" + path.string() + "'");
    std::stringstream buffer;
    buffer << in.rdbuf();
    return from_json(buffer.str());
}

} // namespace neumiss
