#include "neumiss/plot.hpp"

#include "neumiss/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace neumiss::bench {

namespace {

constexpr double kPanelW = 340.0;
constexpr double kPanelH = 260.0;
constexpr double kLeft = 64.0;
constexpr double kRight = 16.0;
constexpr double kTop = 34.0;
constexpr double kBottom = 44.0;
constexpr double kLegendRow = 18.0;

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

std::string tick_label(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.3g", std::abs(v) < 1e-12 ? 0.0 : v);
    return buf;
}

std::string escape(std::string_view text) {
    std::string out;
    for (char c : text) {
        switch (c) {
        case '&': out += "&amp;"; break;
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '"': out += "&quot;"; break;
        default: out += c;
        }
    }
    return out;
}

struct Range {
    double lo = 0.0;
    double hi = 1.0;

    void pad() {
        if (hi - lo < 1e-12) {
            lo -= 0.5;
            hi += 0.5;
        } else {
            const double m = 0.05 * (hi - lo);
            lo -= m;
            hi += m;
        }
    }
};

Range range_of(const std::vector<double>& values) {
    Range r{values.front(), values.front()};
    for (double v : values) {
        r.lo = std::min(r.lo, v);
        r.hi = std::max(r.hi, v);
    }
    r.pad();
    return r;
}

// Quantile with linear interpolation between order statistics.
double quantile(const std::vector<double>& sorted, double q) {
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<Index>(std::floor(pos));
    const Index hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

struct PanelKey {
    std::string mechanism;
    Index n = 0;
    Index d = 0;
    auto operator<=>(const PanelKey&) const = default;
};

class SvgWriter {
public:
    SvgWriter(double width, double height) : width_(width), height_(height) {}

    void line(double x1, double y1, double x2, double y2, const char* stroke, double w = 1.0, bool dashed = false) {
        body_ << "<line x1=\"" << num(x1) << "\" y1=\"" << num(y1) << "\" x2=\"" << num(x2) << "\" y2=\"" << num(y2)
              << "\" stroke=\"" << stroke << "\" stroke-width=\"" << num(w) << '"';
        if (dashed) body_ << " stroke-dasharray=\"4 3\"";
        body_ << "/>\n";
    }
    void rect(double x, double y, double w, double h, const char* fill, const char* stroke) {
        body_ << "<rect x=\"" << num(x) << "\" y=\"" << num(y) << "\" width=\"" << num(w) << "\" height=\"" << num(h)
              << "\" fill=\"" << fill << "\" stroke=\"" << stroke << "\"/>\n";
    }
    void circle(double x, double y, double r, const char* fill) {
        body_ << "<circle cx=\"" << num(x) << "\" cy=\"" << num(y) << "\" r=\"" << num(r) << "\" fill=\"" << fill
              << "\"/>\n";
    }
    void polyline(const std::vector<std::pair<double, double>>& pts, const char* stroke) {
        body_ << "<polyline fill=\"none\" stroke=\"" << stroke << "\" stroke-width=\"1.50\" points=\"";
        for (Index i = 0; i < pts.size(); ++i) body_ << (i ? " " : "") << num(pts[i].first) << ',' << num(pts[i].second);
        body_ << "\"/>\n";
    }
    void text(double x, double y, std::string_view s, const char* anchor = "start", double size = 11.0) {
        body_ << "<text x=\"" << num(x) << "\" y=\"" << num(y) << "\" font-size=\"" << num(size)
              << "\" text-anchor=\"" << anchor << "\">" << escape(s) << "</text>\n";
    }
    std::string str() const {
        std::ostringstream out;
        out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
            << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << num(width_) << "\" height=\""
            << num(height_) << "\" viewBox=\"0 0 " << num(width_) << ' ' << num(height_) << "\" font-family=\"sans-serif\">\n"
            << "<rect x=\"0\" y=\"0\" width=\"" << num(width_) << "\" height=\"" << num(height_) << "\" fill=\"white\"/>\n"
            << body_.str() << "</svg>\n";
        return out.str();
    }

private:
    double width_;
    double height_;
    std::ostringstream body_;
};

struct Frame {
    double x0, y0, w, h;
    Range xr, yr;

    double px(double x) const { return x0 + (x - xr.lo) / (xr.hi - xr.lo) * w; }
    double py(double y) const { return y0 + h - (y - yr.lo) / (yr.hi - yr.lo) * h; }
};

void draw_axes(SvgWriter& svg, const Frame& f, const std::string& title, const std::string& ylabel,
               const std::string& xlabel, const std::vector<std::pair<double, std::string>>& xticks) {
    svg.rect(f.x0, f.y0, f.w, f.h, "none", "#333333");
    svg.text(f.x0 + f.w / 2, f.y0 - 10, title, "middle", 12);
    for (int k = 0; k <= 4; ++k) {
        const double v = f.yr.lo + (f.yr.hi - f.yr.lo) * k / 4.0;
        const double y = f.py(v);
        svg.line(f.x0, y, f.x0 + f.w, y, "#e5e5e5");
        svg.text(f.x0 - 4, y + 4, tick_label(v), "end", 10);
    }
    for (const auto& [x, label] : xticks) {
        svg.line(f.px(x), f.y0 + f.h, f.px(x), f.y0 + f.h + 4, "#333333");
        svg.text(f.px(x), f.y0 + f.h + 16, label, "middle", 10);
    }
    svg.text(f.x0 + f.w / 2, f.y0 + f.h + 34, xlabel, "middle", 11);
    svg.text(f.x0 - 48, f.y0 - 10, ylabel, "start", 10);
}

struct Prepared {
    std::vector<ExperimentRecord> rows;
    bool use_delta = true;
    std::vector<std::string> methods;  // in order of first appearance

    double value(const ExperimentRecord& r) const { return use_delta ? *r.delta : r.r2_test; }
    std::string ylabel() const { return use_delta ? "R2 minus reference" : "test R2"; }
};

Prepared prepare(const std::vector<ExperimentRecord>& records) {
    Prepared p;
    for (const auto& r : records) {
        if (r.failed() || !std::isfinite(r.r2_test)) continue;
        p.rows.push_back(r);
        if (!r.delta) p.use_delta = false;
        if (std::find(p.methods.begin(), p.methods.end(), r.method) == p.methods.end()) p.methods.push_back(r.method);
    }
    return p;
}

const char* color_of(const Prepared& p, const std::string& method) {
    const auto it = std::find(p.methods.begin(), p.methods.end(), method);
    return kPalette[static_cast<Index>(it - p.methods.begin()) % std::size(kPalette)];
}

void draw_legend(SvgWriter& svg, const Prepared& p, double y) {
    double x = kLeft;
    for (const auto& m : p.methods) {
        svg.rect(x, y - 9, 10, 10, color_of(p, m), color_of(p, m));
        svg.text(x + 14, y, m, "start", 11);
        x += 24 + 7.0 * static_cast<double>(m.size());
    }
}

std::string panel_title(const PanelKey& k) {
    return k.mechanism + ", n=" + std::to_string(k.n) + ", d=" + std::to_string(k.d);
}

// Median per (method, capacity) for one panel.
std::map<std::string, std::map<Index, double>> capacity_medians(const Prepared& p, const PanelKey& key) {
    std::map<std::string, std::map<Index, std::vector<double>>> samples;
    for (const auto& r : p.rows) {
        if (!r.capacity || PanelKey{r.mechanism, r.n, r.d} != key) continue;
        samples[r.method][*r.capacity].push_back(p.value(r));
    }
    std::map<std::string, std::map<Index, double>> out;
    for (auto& [method, by_cap] : samples) {
        for (auto& [cap, values] : by_cap) out[method][cap] = median(values);
    }
    return out;
}

void draw_curve_panel(SvgWriter& svg, const Prepared& p, const PanelKey& key, double ox, double oy,
                      const std::string& title) {
    const auto medians = capacity_medians(p, key);
    // Methods without capacity appear as horizontal reference lines.
    std::map<std::string, double> flat;
    {
        std::map<std::string, std::vector<double>> samples;
        for (const auto& r : p.rows) {
            if (r.capacity || PanelKey{r.mechanism, r.n, r.d} != key) continue;
            samples[r.method].push_back(p.value(r));
        }
        for (auto& [m, v] : samples) flat[m] = median(v);
    }
    std::vector<double> xs, ys;
    for (const auto& [m, by_cap] : medians) {
        for (const auto& [c, v] : by_cap) {
            xs.push_back(static_cast<double>(c));
            ys.push_back(v);
        }
    }
    for (const auto& [m, v] : flat) ys.push_back(v);
    if (xs.empty()) xs.push_back(0.0);
    if (ys.empty()) ys.push_back(0.0);

    Frame f{ox + kLeft, oy + kTop, kPanelW - kLeft - kRight, kPanelH - kTop - kBottom, range_of(xs), range_of(ys)};
    std::set<Index> caps;
    for (double x : xs) caps.insert(static_cast<Index>(x));
    std::vector<std::pair<double, std::string>> ticks;
    for (Index c : caps) ticks.emplace_back(static_cast<double>(c), std::to_string(c));
    draw_axes(svg, f, title, p.ylabel(), "capacity", ticks);

    for (const auto& method : p.methods) {
        if (const auto it = flat.find(method); it != flat.end()) {
            svg.line(f.x0, f.py(it->second), f.x0 + f.w, f.py(it->second), color_of(p, method), 1.5, true);
        }
        const auto it = medians.find(method);
        if (it == medians.end()) continue;
        std::vector<std::pair<double, double>> pts;
        for (const auto& [c, v] : it->second) pts.emplace_back(f.px(static_cast<double>(c)), f.py(v));
        if (pts.size() > 1) svg.polyline(pts, color_of(p, method));
        for (const auto& [x, y] : pts) svg.circle(x, y, 3.0, color_of(p, method));
    }
}

std::vector<PanelKey> panel_keys(const Prepared& p) {
    std::set<PanelKey> keys;
    for (const auto& r : p.rows) keys.insert({r.mechanism, r.n, r.d});
    return {keys.begin(), keys.end()};
}

std::string render_curves(const Prepared& p) {
    const auto keys = panel_keys(p);
    const double width = kPanelW * static_cast<double>(std::max<Index>(keys.size(), 1));
    SvgWriter svg(width, kPanelH + kLegendRow + 8);
    for (Index i = 0; i < keys.size(); ++i) {
        draw_curve_panel(svg, p, keys[i], kPanelW * static_cast<double>(i), 0.0, panel_title(keys[i]));
    }
    draw_legend(svg, p, kPanelH + kLegendRow);
    return svg.str();
}

std::string render_depth_panels(const Prepared& p) {
    std::set<std::pair<std::string, Index>> row_keys;
    std::set<Index> col_keys;
    for (const auto& r : p.rows) {
        row_keys.insert({r.mechanism, r.d});
        col_keys.insert(r.n);
    }
    const std::vector<std::pair<std::string, Index>> rows(row_keys.begin(), row_keys.end());
    const std::vector<Index> cols(col_keys.begin(), col_keys.end());
    const double width = kPanelW * static_cast<double>(std::max<Index>(cols.size(), 1));
    const double height = kPanelH * static_cast<double>(std::max<Index>(rows.size(), 1));
    SvgWriter svg(width, height + kLegendRow + 8);
    for (Index i = 0; i < rows.size(); ++i) {
        for (Index j = 0; j < cols.size(); ++j) {
            const PanelKey key{rows[i].first, cols[j], rows[i].second};
            draw_curve_panel(svg, p, key, kPanelW * static_cast<double>(j), kPanelH * static_cast<double>(i),
                             panel_title(key));
        }
    }
    draw_legend(svg, p, height + kLegendRow);
    return svg.str();
}

std::string render_boxplots(const Prepared& p) {
    const auto keys = panel_keys(p);
    const double width = kPanelW * static_cast<double>(std::max<Index>(keys.size(), 1));
    SvgWriter svg(width, kPanelH + kLegendRow + 8);
    for (Index i = 0; i < keys.size(); ++i) {
        const auto& key = keys[i];
        // Methods reporting several capacities per seed get one box per capacity.
        std::map<std::pair<std::string, std::uint64_t>, Index> per_seed;
        for (const auto& r : p.rows) {
            if (PanelKey{r.mechanism, r.n, r.d} == key) ++per_seed[{r.method, r.seed}];
        }
        std::set<std::string> split;
        for (const auto& [k, count] : per_seed) {
            if (count > 1) split.insert(k.first);
        }
        std::vector<std::pair<std::string, std::string>> boxes;  // (box label, method)
        std::map<std::string, std::vector<double>> samples;
        for (const auto& method : p.methods) {
            std::map<std::string, std::vector<double>> local;
            for (const auto& r : p.rows) {
                if (r.method != method || PanelKey{r.mechanism, r.n, r.d} != key) continue;
                std::string label = method;
                if (split.count(method) && r.capacity) label += "@" + std::to_string(*r.capacity);
                local[label].push_back(p.value(r));
            }
            for (auto& [label, v] : local) {
                boxes.emplace_back(label, method);
                samples[label] = std::move(v);
            }
        }
        std::vector<double> all;
        for (const auto& [label, v] : samples) all.insert(all.end(), v.begin(), v.end());
        if (all.empty()) all.push_back(0.0);
        const double n_boxes = static_cast<double>(std::max<Index>(boxes.size(), 1));
        Frame f{kPanelW * static_cast<double>(i) + kLeft, kTop, kPanelW - kLeft - kRight, kPanelH - kTop - kBottom,
                Range{0.0, n_boxes}, range_of(all)};
        std::vector<std::pair<double, std::string>> ticks;
        for (Index b = 0; b < boxes.size(); ++b) ticks.emplace_back(static_cast<double>(b) + 0.5, "");
        draw_axes(svg, f, panel_title(key), p.ylabel(), "method", ticks);
        const double bw = 0.6 * f.w / n_boxes;
        for (Index b = 0; b < boxes.size(); ++b) {
            auto v = samples[boxes[b].first];
            std::sort(v.begin(), v.end());
            const char* color = color_of(p, boxes[b].second);
            const double cx = f.px(static_cast<double>(b) + 0.5);
            const double q0 = f.py(v.front()), q1 = f.py(quantile(v, 0.25)), q2 = f.py(quantile(v, 0.5)),
                         q3 = f.py(quantile(v, 0.75)), q4 = f.py(v.back());
            svg.line(cx, q4, cx, q3, color);
            svg.line(cx, q1, cx, q0, color);
            svg.line(cx - bw / 4, q0, cx + bw / 4, q0, color);
            svg.line(cx - bw / 4, q4, cx + bw / 4, q4, color);
            svg.rect(cx - bw / 2, q3, bw, std::max(q1 - q3, 0.5), "white", color);
            svg.line(cx - bw / 2, q2, cx + bw / 2, q2, color, 2.0);
            // one dot per seed; with 3 to 5 seeds the raw values say more than the box
            for (double y : v) svg.circle(cx, f.py(y), 2.0, color);
            if (boxes[b].first != boxes[b].second) svg.text(cx, f.y0 + f.h + 28, boxes[b].first, "middle", 8);
        }
    }
    draw_legend(svg, p, kPanelH + kLegendRow);
    return svg.str();
}

} // namespace

FigureKind parse_figure_kind(std::string_view name) {
    if (name == "capacity") return FigureKind::capacity;
    if (name == "depth" || name == "depth_panels") return FigureKind::depth_panels;
    if (name == "boxplot") return FigureKind::boxplot;
    throw ConfigError("unknown figure kind '" + std::string(name) + "' (expected capacity, depth or boxplot)");
}

std::string_view to_string(FigureKind kind) {
    switch (kind) {
    case FigureKind::capacity: return "capacity";
    case FigureKind::depth_panels: return "depth";
    case FigureKind::boxplot: return "boxplot";
    }
    return "capacity";
}

std::string render_svg(const std::vector<ExperimentRecord>& records, FigureKind kind) {
    const Prepared p = prepare(records);
    switch (kind) {
    case FigureKind::capacity: return render_curves(p);
    case FigureKind::depth_panels: return render_depth_panels(p);
    case FigureKind::boxplot: return render_boxplots(p);
    }
    return render_curves(p);
}

void plot_results(const std::filesystem::path& csv_path, FigureKind kind, const std::filesystem::path& svg_path) {
    const auto records = read_results_csv(csv_path);
    const std::string svg = render_svg(records, kind);
    std::ofstream out(svg_path);
    if (!out) throw Error("cannot write '" + svg_path.string() + "'");
    out << svg;
    if (!out) throw Error("failed writing '" + svg_path.string() + "'");
}

} // namespace neumiss::bench
