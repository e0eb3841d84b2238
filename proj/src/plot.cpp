#include "its/plot.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <vector>

#include "its/error.hpp"

namespace its {

namespace {

constexpr double kWidth = 640;
constexpr double kHeight = 420;
constexpr double kLeft = 70;
constexpr double kRight = 20;
constexpr double kTop = 40;
constexpr double kBottom = 60;

const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                "#ff7f0e", "#8c564b", "#e377c2", "#17becf"};

struct Range {
    double lo = 0.0;
    double hi = 1.0;

    void pad() {
        if (hi - lo < 1e-12) {
            lo -= 0.5;
            hi += 0.5;
        }
        const double m = 0.05 * (hi - lo);
        lo -= m;
        hi += m;
    }
};

class Canvas {
public:
    Canvas(Range x, Range y) : x_(x), y_(y) {}

    double px(double x) const { return kLeft + (x - x_.lo) / (x_.hi - x_.lo) * (kWidth - kLeft - kRight); }
    double py(double y) const {
        return kHeight - kBottom - (y - y_.lo) / (y_.hi - y_.lo) * (kHeight - kTop - kBottom);
    }

    void axes(const std::string& title, const std::string& xlabel, const std::string& ylabel) {
        body_ << "<text x=\"" << kWidth / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">"
              << escape(title) << "</text>\n";
        body_ << "<line x1=\"" << kLeft << "\" y1=\"" << kHeight - kBottom << "\" x2=\""
              << kWidth - kRight << "\" y2=\"" << kHeight - kBottom << "\" stroke=\"black\"/>\n";
        body_ << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\""
              << kHeight - kBottom << "\" stroke=\"black\"/>\n";
        for (int i = 0; i <= 4; ++i) {
            const double xv = x_.lo + (x_.hi - x_.lo) * i / 4.0;
            const double yv = y_.lo + (y_.hi - y_.lo) * i / 4.0;
            body_ << "<text x=\"" << px(xv) << "\" y=\"" << kHeight - kBottom + 18
                  << "\" text-anchor=\"middle\" font-size=\"11\">" << tick(xv) << "</text>\n";
            body_ << "<text x=\"" << kLeft - 6 << "\" y=\"" << py(yv) + 4
                  << "\" text-anchor=\"end\" font-size=\"11\">" << tick(yv) << "</text>\n";
        }
        body_ << "<text x=\"" << (kLeft + kWidth - kRight) / 2 << "\" y=\"" << kHeight - 18
              << "\" text-anchor=\"middle\" font-size=\"13\">" << escape(xlabel) << "</text>\n";
        body_ << "<text transform=\"translate(18," << (kTop + kHeight - kBottom) / 2
              << ") rotate(-90)\" text-anchor=\"middle\" font-size=\"13\">" << escape(ylabel)
              << "</text>\n";
    }

    std::ostringstream& body() { return body_; }

    void write(const std::filesystem::path& path) const {
        if (path.has_parent_path()) {
            std::filesystem::create_directories(path.parent_path());
        }
        std::ofstream out(path);
        if (!out) {
            throw Error("cannot write " + path.string());
        }
        out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
            << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << kWidth
            << "\" height=\"" << kHeight << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight
            << "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
            << body_.str() << "</svg>\n";
    }

    static std::string escape(const std::string& s) {
        std::string out;
        for (char c : s) {
            switch (c) {
                case '<': out += "&lt;"; break;
                case '>': out += "&gt;"; break;
                case '&': out += "&amp;"; break;
                case '"': out += "&quot;"; break;
                default: out += c;
            }
        }
        return out;
    }

private:
    static std::string tick(double v) {
        std::ostringstream os;
        os.precision(3);
        os << v;
        return os.str();
    }

    Range x_;
    Range y_;
    std::ostringstream body_;
};

}  // namespace

void emit_svg_plot(const MetricTable& table, PlotKind kind, const std::string& reward,
                   const std::filesystem::path& path) {
    if (kind == PlotKind::boxes) {
        throw ConfigError("box plots are drawn from a distribution report");
    }
    const auto rows = table.rows_for(reward);
    if (rows.empty()) {
        throw PreconditionError("emit_svg_plot: no rows for reward '" + reward + "'");
    }
    const bool by_nfe = kind == PlotKind::nfe_curve;
    std::map<std::string, std::vector<std::tuple<double, double, double>>> series;
    Range xr{1e300, -1e300};
    Range yr{1e300, -1e300};
    for (const auto& r : rows) {
        const double x = by_nfe ? static_cast<double>(r.nfe) : r.alpha;
        if (std::isnan(x)) {
            continue;
        }
        std::string name = r.strategy + " / " + r.scheme;
        series[name].emplace_back(x, r.raw_mean, r.raw_std);
        xr.lo = std::min(xr.lo, x);
        xr.hi = std::max(xr.hi, x);
        yr.lo = std::min(yr.lo, r.raw_mean - r.raw_std);
        yr.hi = std::max(yr.hi, r.raw_mean + r.raw_std);
    }
    if (series.empty()) {
        throw PreconditionError("emit_svg_plot: no plottable rows");
    }
    xr.pad();
    yr.pad();
    Canvas c(xr, yr);
    c.axes(reward + (by_nfe ? " vs NFE" : " vs alpha"), by_nfe ? "NFE" : "alpha",
           reward + " (raw mean)");
    int color = 0;
    for (auto& [name, pts] : series) {
        std::sort(pts.begin(), pts.end());
        const char* stroke = kPalette[color % std::size(kPalette)];
        auto& b = c.body();
        b << "<polygon fill=\"" << stroke << "\" fill-opacity=\"0.18\" stroke=\"none\" points=\"";
        for (const auto& [x, m, s] : pts) {
            b << c.px(x) << ',' << c.py(m + s) << ' ';
        }
        for (auto it = pts.rbegin(); it != pts.rend(); ++it) {
            b << c.px(std::get<0>(*it)) << ',' << c.py(std::get<1>(*it) - std::get<2>(*it)) << ' ';
        }
        b << "\"/>\n<polyline fill=\"none\" stroke=\"" << stroke << "\" stroke-width=\"2\" points=\"";
        for (const auto& [x, m, s] : pts) {
            b << c.px(x) << ',' << c.py(m) << ' ';
        }
        b << "\"/>\n";
        for (const auto& [x, m, s] : pts) {
            b << "<circle cx=\"" << c.px(x) << "\" cy=\"" << c.py(m) << "\" r=\"3\" fill=\""
              << stroke << "\"/>\n";
        }
        b << "<text x=\"" << kLeft + 10 << "\" y=\"" << kTop + 14 + 16 * color
          << "\" font-size=\"12\" fill=\"" << stroke << "\">" << Canvas::escape(name)
          << "</text>\n";
        ++color;
    }
    c.write(path);
}

void emit_svg_plot(const DistributionReport& report, const std::filesystem::path& path) {
    if (report.entries.empty()) {
        throw PreconditionError("emit_svg_plot: empty report");
    }
    struct Box {
        std::string label;
        Summary s;
    };
    std::vector<Box> boxes;
    for (const auto& e : report.entries) {
        boxes.push_back({e.reward + " raw", e.raw});
    }
    for (const auto& e : report.entries) {
        boxes.push_back({e.reward + " z", e.normalized});
    }
    Range yr{1e300, -1e300};
    for (const auto& b : boxes) {
        yr.lo = std::min(yr.lo, b.s.min);
        yr.hi = std::max(yr.hi, b.s.max);
    }
    yr.pad();
    Range xr{0.0, static_cast<double>(boxes.size())};
    Canvas c(xr, yr);
    c.axes("reward distributions (n=" + std::to_string(report.num_samples) + ")", "reward",
           "value");
    auto& b = c.body();
    for (std::size_t i = 0; i < boxes.size(); ++i) {
        const auto& s = boxes[i].s;
        const double cx = c.px(i + 0.5);
        const double half = 0.3 * (c.px(1.0) - c.px(0.0));
        const char* stroke = kPalette[(i % report.entries.size()) % std::size(kPalette)];
        b << "<line x1=\"" << cx << "\" y1=\"" << c.py(s.min) << "\" x2=\"" << cx << "\" y2=\""
          << c.py(s.max) << "\" stroke=\"" << stroke << "\"/>\n";
        b << "<rect x=\"" << cx - half << "\" y=\"" << c.py(s.q3) << "\" width=\"" << 2 * half
          << "\" height=\"" << std::max(0.5, c.py(s.q1) - c.py(s.q3)) << "\" fill=\"" << stroke
          << "\" fill-opacity=\"0.3\" stroke=\"" << stroke << "\"/>\n";
        b << "<line x1=\"" << cx - half << "\" y1=\"" << c.py(s.median) << "\" x2=\"" << cx + half
          << "\" y2=\"" << c.py(s.median) << "\" stroke=\"black\" stroke-width=\"2\"/>\n";
        b << "<text x=\"" << cx << "\" y=\"" << kHeight - kBottom + 34
          << "\" text-anchor=\"middle\" font-size=\"11\">" << Canvas::escape(boxes[i].label)
          << "</text>\n";
    }
    c.write(path);
}

}  // namespace its
