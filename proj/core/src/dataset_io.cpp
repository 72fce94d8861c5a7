#include "neumiss/dataset_io.hpp"

#include "neumiss/errors.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <vector>

namespace neumiss::sim {

namespace {

std::vector<std::string_view> split_commas(std::string_view line) {
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(',', start);
        fields.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos
                                                                           : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return fields;
}

std::string_view trim_cr(std::string_view s) {
    if (!s.empty() && s.back() == '\r') s.remove_suffix(1);
    return s;
}

} // namespace

std::string format_double(double x) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), x);
    return std::string(buf, res.ptr);
}

double parse_double(std::string_view text) {
    double value = 0.0;
    const auto res = std::from_chars(text.data(), text.data() + text.size(), value);
    if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
        throw SchemaMismatch("cannot parse number '" + std::string(text) + "'");
    }
    return value;
}

void write_dataset_csv(std::ostream& out, const MaskedDataset& data) {
    const Index d = data.dim();
    for (Index j = 0; j < d; ++j) out << 'x' << j << ',';
    for (Index j = 0; j < d; ++j) out << 'm' << j << ',';
    out << "y\n";
    for (Index i = 0; i < data.rows(); ++i) {
        const auto x = data.x_row(i);
        const auto m = data.m_row(i);
        for (Index j = 0; j < d; ++j) out << (m[j] == 1.0 ? std::string("NA") : format_double(x[j])) << ',';
        for (Index j = 0; j < d; ++j) out << (m[j] == 1.0 ? '1' : '0') << ',';
        out << format_double(data.y()[i]) << '\n';
    }
}

void write_dataset_csv(const std::filesystem::path& path, const MaskedDataset& data) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
    write_dataset_csv(out, data);
}

MaskedDataset read_dataset_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw SchemaMismatch("dataset CSV: empty input");
    const auto header = split_commas(trim_cr(line));
    if (header.size() < 3 || (header.size() - 1) % 2 != 0 || header.back() != "y") {
        throw SchemaMismatch("dataset CSV: malformed header");
    }
    const Index d = (header.size() - 1) / 2;
    for (Index j = 0; j < d; ++j) {
        if (header[j] != "x" + std::to_string(j) || header[d + j] != "m" + std::to_string(j)) {
            throw SchemaMismatch("dataset CSV: unexpected column name");
        }
    }

    std::vector<double> xs;
    std::vector<double> ms;
    Vector y;
    while (std::getline(in, line)) {
        const auto row = trim_cr(line);
        if (row.empty()) continue;
        const auto fields = split_commas(row);
        if (fields.size() != 2 * d + 1) throw SchemaMismatch("dataset CSV: wrong field count");
        for (Index j = 0; j < d; ++j) {
            const double mj = parse_double(fields[d + j]);
            if (mj != 0.0 && mj != 1.0) throw SchemaMismatch("dataset CSV: mask must be 0/1");
            if (fields[j] == "NA") {
                if (mj != 1.0) throw SchemaMismatch("dataset CSV: NA cell with mask 0");
                xs.push_back(0.0);
            } else {
                xs.push_back(parse_double(fields[j]));
            }
            ms.push_back(mj);
        }
        y.push_back(parse_double(fields[2 * d]));
    }
    const Index n = y.size();
    return MaskedDataset::from_observed(Matrix(n, d, std::move(xs)), Matrix(n, d, std::move(ms)),
                                        std::move(y));
}

MaskedDataset read_dataset_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
    return read_dataset_csv(in);
}

} // namespace neumiss::sim
