#include "plumeseek/plots.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <regex>
#include <sstream>

#include "json.hpp"

namespace plumeseek {

namespace fs = std::filesystem;

namespace {

constexpr double kPanel = 400.0;
constexpr double kMargin = 30.0;

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

std::string num(double v) { return fmt("%.2f", v); }

// Five-stop ramp from dark blue to yellow.
std::string ramp(double t) {
    static const double stops[5][3] = {{68, 1, 84}, {59, 82, 139}, {33, 145, 140}, {94, 201, 98}, {253, 231, 37}};
    t = std::clamp(t, 0.0, 1.0) * 4.0;
    const int i = std::min(3, static_cast<int>(t));
    const double f = t - i;
    char buf[16];
    std::snprintf(buf, sizeof buf, "#%02x%02x%02x", static_cast<int>(std::lround(stops[i][0] + f * (stops[i + 1][0] - stops[i][0]))),
                  static_cast<int>(std::lround(stops[i][1] + f * (stops[i + 1][1] - stops[i][1]))),
                  static_cast<int>(std::lround(stops[i][2] + f * (stops[i + 1][2] - stops[i][2]))));
    return buf;
}

struct Frame {
    Box2 domain;
    double ox = kMargin;
    double oy = kMargin;
    double px(double x) const { return ox + (x - domain.x_lo) / (domain.x_hi - domain.x_lo) * kPanel; }
    double py(double y) const { return oy + kPanel - (y - domain.y_lo) / (domain.y_hi - domain.y_lo) * kPanel; }
};

std::string header(double w, double h) {
    return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(w) + "\" height=\"" + num(h) +
           "\" viewBox=\"0 0 " + num(w) + " " + num(h) + "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
}

std::string text(double x, double y, const std::string& s, const char* anchor = "start") {
    return "<text x=\"" + num(x) + "\" y=\"" + num(y) + "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"" +
           anchor + "\">" + s + "</text>\n";
}

std::string frame_outline(const Frame& f) {
    return "<rect x=\"" + num(f.ox) + "\" y=\"" + num(f.oy) + "\" width=\"" + num(kPanel) + "\" height=\"" + num(kPanel) +
           "\" fill=\"none\" stroke=\"black\"/>\n";
}

std::string source_marker(const Frame& f, const SourceParams& s) {
    const double x = f.px(s.x_s), y = f.py(s.y_s);
    return "<path class=\"source\" d=\"M" + num(x - 5) + " " + num(y - 5) + " L" + num(x + 5) + " " + num(y + 5) + " M" +
           num(x - 5) + " " + num(y + 5) + " L" + num(x + 5) + " " + num(y - 5) + "\" stroke=\"red\" stroke-width=\"2\"/>\n";
}

}  // namespace

std::string heatmap_svg(const std::optional<SourceParams>& source, const Box2& domain, const std::vector<TraceRow>& rows) {
    const Frame f{domain};
    std::string out = header(kPanel + 2 * kMargin, kPanel + 2 * kMargin);
    if (source) {
        constexpr int kCells = 40;
        std::vector<double> v(kCells * kCells);
        const double dx = (domain.x_hi - domain.x_lo) / kCells, dy = (domain.y_hi - domain.y_lo) / kCells;
        for (int i = 0; i < kCells; ++i)
            for (int j = 0; j < kCells; ++j)
                v[i * kCells + j] = std::log10(1e-6 + plume_concentration_unchecked(
                                                          *source, domain.x_lo + (i + 0.5) * dx, domain.y_lo + (j + 0.5) * dy));
        const double lo = *std::min_element(v.begin(), v.end()), hi = *std::max_element(v.begin(), v.end());
        const double cw = kPanel / kCells;
        out += "<g class=\"heatmap\">\n";
        for (int i = 0; i < kCells; ++i)
            for (int j = 0; j < kCells; ++j) {
                const double t = hi > lo ? (v[i * kCells + j] - lo) / (hi - lo) : 0.0;
                out += "<rect x=\"" + num(f.ox + i * cw) + "\" y=\"" + num(f.oy + kPanel - (j + 1) * cw) + "\" width=\"" +
                       num(cw) + "\" height=\"" + num(cw) + "\" fill=\"" + ramp(t) + "\"/>\n";
            }
        out += "</g>\n";
        out += source_marker(f, *source);
    }
    out += frame_outline(f);
    if (!rows.empty()) {
        out += "<g class=\"path\" stroke=\"white\" stroke-width=\"2\">\n";
        for (std::size_t k = 1; k < rows.size(); ++k)
            out += "<line class=\"path-seg\" x1=\"" + num(f.px(rows[k - 1].position.x)) + "\" y1=\"" +
                   num(f.py(rows[k - 1].position.y)) + "\" x2=\"" + num(f.px(rows[k].position.x)) + "\" y2=\"" +
                   num(f.py(rows[k].position.y)) + "\"/>\n";
        out += "</g>\n";
        out += "<circle class=\"start\" cx=\"" + num(f.px(rows.front().position.x)) + "\" cy=\"" +
               num(f.py(rows.front().position.y)) + "\" r=\"4\" fill=\"white\"/>\n";
    }
    out += text(kMargin, kMargin - 10, "field and agent path, " + std::to_string(rows.empty() ? 0 : rows.size() - 1) + " steps");
    out += "</svg>\n";
    return out;
}

std::string particles_svg(const std::vector<CloudSnapshot>& snapshots, const Box2& domain,
                          const std::optional<SourceParams>& truth) {
    const std::size_t n = std::max<std::size_t>(1, snapshots.size());
    const double w = n * (kPanel + kMargin) + kMargin;
    std::string out = header(w, kPanel + 2 * kMargin);
    for (std::size_t s = 0; s < snapshots.size(); ++s) {
        Frame f{domain};
        f.ox = kMargin + s * (kPanel + kMargin);
        out += frame_outline(f);
        out += text(f.ox, kMargin - 10, "step " + std::to_string(snapshots[s].step));
        out += "<g class=\"cloud\" fill=\"#3b528b\" fill-opacity=\"0.3\">\n";
        for (const auto& p : snapshots[s].positions)
            out += "<circle cx=\"" + num(f.px(p.x)) + "\" cy=\"" + num(f.py(p.y)) + "\" r=\"1.5\"/>\n";
        out += "</g>\n";
        if (truth) out += source_marker(f, *truth);
    }
    out += "</svg>\n";
    return out;
}

std::string metric_bars_svg(const std::vector<ReportRow>& rows) {
    const std::array<std::string, 3> metrics = {"oce", "ade", "lps"};
    std::string out;
    std::vector<std::string> panels;
    double height = kMargin;
    for (const auto& metric : metrics) {
        std::vector<const ReportRow*> sel;
        for (const auto& r : rows)
            if (r.metric == metric && !std::isnan(r.mean)) sel.push_back(&r);
        if (sel.empty()) continue;
        double top = 0.0;
        for (auto* r : sel) top = std::max(top, r->mean);
        if (top <= 0.0) top = 1.0;
        std::string p = text(kMargin, height + 12, metric);
        const double bar_h = 14.0;
        double y = height + 20;
        for (auto* r : sel) {
            const double len = r->mean / top * 300.0;
            p += text(kMargin, y + 11, r->method + " / " + r->field + (r->scope == "all" ? "" : " / " + r->scope));
            p += "<rect class=\"bar\" x=\"" + num(260) + "\" y=\"" + num(y) + "\" width=\"" + num(std::max(0.0, len)) +
                 "\" height=\"" + num(bar_h - 3) + "\" fill=\"#21918c\"/>\n";
            p += text(265 + std::max(0.0, len), y + 11, fmt("%.3f", r->mean));
            y += bar_h;
        }
        panels.push_back(p);
        height = y + kMargin;
    }
    out = header(700, std::max(height, 2 * kMargin));
    for (const auto& p : panels) out += p;
    out += "</svg>\n";
    return out;
}

std::string learning_curve_svg(const std::vector<LearningCurveRow>& rows) {
    const double w = 600, h = 300;
    std::string out = header(w + 2 * kMargin, h + 2 * kMargin);
    out += "<rect x=\"" + num(kMargin) + "\" y=\"" + num(kMargin) + "\" width=\"" + num(w) + "\" height=\"" + num(h) +
           "\" fill=\"none\" stroke=\"black\"/>\n";
    out += text(kMargin, kMargin - 10, "return (moving mean of 20) and epsilon per episode");
    if (!rows.empty()) {
        const double n = static_cast<double>(std::max<std::size_t>(rows.size() - 1, 1));
        double top = 1.0;
        for (const auto& r : rows) top = std::max(top, r.episode_return);
        std::string ret = "M", eps = "M";
        double window = 0.0;
        for (std::size_t i = 0; i < rows.size(); ++i) {
            window += rows[i].episode_return;
            if (i >= 20) window -= rows[i - 20].episode_return;
            const double mean = window / static_cast<double>(std::min<std::size_t>(i + 1, 20));
            const double x = kMargin + i / n * w;
            ret += (i ? " L" : "") + num(x) + " " + num(kMargin + h - mean / top * h);
            eps += (i ? " L" : "") + num(x) + " " + num(kMargin + h - rows[i].epsilon * h);
        }
        out += "<path class=\"return\" d=\"" + ret + "\" fill=\"none\" stroke=\"#21918c\" stroke-width=\"1.5\"/>\n";
        out += "<path class=\"epsilon\" d=\"" + eps + "\" fill=\"none\" stroke=\"#888888\" stroke-dasharray=\"4 3\"/>\n";
    }
    out += "</svg>\n";
    return out;
}

CloudSnapshot read_particles_csv(std::istream& in, int step) {
    CloudSnapshot snap;
    snap.step = step;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line_no == 1) {
            if (line.rfind("x_s,y_s,", 0) != 0) throw FormatError("particles line 1: unexpected header");
            continue;
        }
        if (line.empty()) continue;
        std::stringstream ss(line);
        double x = 0, y = 0;
        char c = 0;
        if (!(ss >> x >> c >> y) || c != ',')
            throw FormatError("particles line " + std::to_string(line_no) + ": malformed row");
        snap.positions.push_back({x, y});
    }
    if (line_no == 0) throw FormatError("particles line 1: missing header");
    return snap;
}

void write_scenario_json(const Scenario& sc, std::ostream& out) {
    nlohmann::json j;
    nlohmann::json src = nlohmann::json::object();
    const auto a = sc.source.to_array();
    for (std::size_t d = 0; d < kSourceDims; ++d) src[kSourceDimNames[d]] = a[d];
    j["source"] = src;
    j["field"] = std::string(to_string(sc.field_type));
    j["domain"] = {sc.domain.x_lo, sc.domain.x_hi, sc.domain.y_lo, sc.domain.y_hi};
    j["start_region"] = {sc.start_region.x_lo, sc.start_region.x_hi, sc.start_region.y_lo, sc.start_region.y_hi};
    j["max_steps"] = sc.max_steps;
    j["noise"] = {{"sensor_noise", sc.noise.sensor_noise}, {"env_noise", sc.noise.env_noise}};
    nlohmann::json prior = nlohmann::json::object();
    for (std::size_t d = 0; d < kSourceDims; ++d) prior[kSourceDimNames[d]] = sc.prior.bounds[d];
    j["prior"] = prior;
    out << j.dump(1) << '\n';
}

Scenario read_scenario_json(std::istream& in) {
    try {
        nlohmann::json j;
        in >> j;
        Scenario sc;
        std::array<double, kSourceDims> a{};
        for (std::size_t d = 0; d < kSourceDims; ++d) {
            a[d] = j.at("source").at(kSourceDimNames[d]).get<double>();
            sc.prior.bounds[d] = j.at("prior").at(kSourceDimNames[d]).get<std::array<double, 2>>();
        }
        sc.source = SourceParams::from_array(a);
        sc.field_type = field_kind_from_string(j.at("field").get<std::string>());
        const auto d = j.at("domain").get<std::array<double, 4>>();
        sc.domain = {d[0], d[1], d[2], d[3]};
        const auto s = j.at("start_region").get<std::array<double, 4>>();
        sc.start_region = {s[0], s[1], s[2], s[3]};
        sc.max_steps = j.at("max_steps").get<int>();
        sc.noise = {j.at("noise").at("sensor_noise").get<double>(), j.at("noise").at("env_noise").get<double>()};
        return sc;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("scenario file: ") + e.what());
    } catch (const ParameterError& e) {
        throw FormatError(std::string("scenario file: ") + e.what());
    }
}

std::vector<fs::path> emit_plots(const fs::path& in_dir, const fs::path& out_dir) {
    if (!fs::is_directory(in_dir)) throw UsageError("input directory '" + in_dir.string() + "' does not exist");
    fs::create_directories(out_dir);
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(in_dir))
        if (e.is_regular_file()) files.push_back(e.path());
    std::sort(files.begin(), files.end());

    std::vector<fs::path> written;
    auto write = [&](const std::string& name, const std::string& svg) {
        const fs::path p = out_dir / name;
        std::ofstream o(p, std::ios::binary);
        if (!o) throw UsageError("cannot write '" + p.string() + "'");
        o << svg;
        written.push_back(p);
    };
    auto open = [](const fs::path& p) {
        std::ifstream in(p);
        if (!in) throw UsageError("cannot open '" + p.string() + "'");
        return in;
    };

    const std::regex trace_re("trace_(\\d+)\\.csv");
    const std::regex particles_re("particles_(\\d+)_step(\\d+)\\.csv");
    const std::regex curve_re("learning_curve(.*)\\.csv");
    std::map<std::string, std::vector<CloudSnapshot>> clouds;
    std::smatch m;
    for (const auto& p : files) {
        const std::string name = p.filename().string();
        if (std::regex_match(name, m, trace_re)) {
            const std::string id = m[1];
            std::optional<SourceParams> source;
            Box2 domain{0.0, 20.0, 0.0, 20.0};
            const fs::path sp = in_dir / ("scenario_" + id + ".json");
            if (fs::exists(sp)) {
                auto in = open(sp);
                const Scenario sc = read_scenario_json(in);
                source = sc.source;
                domain = sc.domain;
            }
            auto in = open(p);
            std::vector<TraceRow> rows;
            try {
                rows = read_trace_csv(in);
            } catch (const FormatError& e) {
                throw FormatError(name + ": " + e.what());
            }
            write("heatmap_" + id + ".svg", heatmap_svg(source, domain, rows));
        } else if (std::regex_match(name, m, particles_re)) {
            auto in = open(p);
            try {
                clouds[m[1]].push_back(read_particles_csv(in, std::stoi(m[2])));
            } catch (const FormatError& e) {
                throw FormatError(name + ": " + e.what());
            }
        } else if (name == "report.csv") {
            auto in = open(p);
            write("metrics.svg", metric_bars_svg(read_report_csv(in)));
        } else if (std::regex_match(name, m, curve_re)) {
            auto in = open(p);
            write("learning_curve" + std::string(m[1]) + ".svg", learning_curve_svg(read_learning_curve_csv(in)));
        }
    }
    for (auto& [id, snaps] : clouds) {
        std::optional<SourceParams> truth;
        Box2 domain{0.0, 20.0, 0.0, 20.0};
        const fs::path sp = in_dir / ("scenario_" + id + ".json");
        if (fs::exists(sp)) {
            auto in = open(sp);
            const Scenario sc = read_scenario_json(in);
            truth = sc.source;
            domain = sc.domain;
        }
        std::sort(snaps.begin(), snaps.end(), [](const auto& a, const auto& b) { return a.step < b.step; });
        write("particles_" + id + ".svg", particles_svg(snaps, domain, truth));
    }
    std::sort(written.begin(), written.end());
    return written;
}

}  // namespace plumeseek
