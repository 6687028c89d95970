#include "report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace a2v::bench {

namespace {

std::string fmt(double v) {
    std::ostringstream os;
    os << std::setprecision(10) << v;
    return os.str();
}

}  // namespace

void EvalReport::write_csv(const std::string& path) const {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("report: cannot write " + path);
    os << "# " << title << "\n";
    os << "# " << provenance << "\n";
    for (const auto& w : warnings) os << "# warning: " << w << "\n";
    bool first = true;
    for (const auto& c : label_columns) {
        os << (first ? "" : ",") << c;
        first = false;
    }
    for (const auto& c : value_columns) {
        os << (first ? "" : ",") << c;
        first = false;
    }
    os << "\n";
    for (const auto& row : rows) {
        first = true;
        for (const auto& c : label_columns) {
            auto it = row.labels.find(c);
            os << (first ? "" : ",") << (it == row.labels.end() ? "" : it->second);
            first = false;
        }
        for (const auto& c : value_columns) {
            auto it = row.values.find(c);
            os << (first ? "" : ",") << (it == row.values.end() ? "" : fmt(it->second));
            first = false;
        }
        os << "\n";
    }
}

std::string EvalReport::text_summary() const {
    std::ostringstream os;
    os << "== " << title << " ==\n";
    os << provenance << "\n";
    for (const auto& w : warnings) os << "warning: " << w << "\n";
    if (!seeds.empty()) {
        os << "seeds:";
        for (uint64_t s : seeds) os << " " << s;
        os << "\n";
    }
    for (const auto& row : rows) {
        bool first = true;
        for (const auto& c : label_columns) {
            auto it = row.labels.find(c);
            if (it == row.labels.end()) continue;
            os << (first ? "" : "  ") << c << "=" << it->second;
            first = false;
        }
        for (const auto& c : value_columns) {
            auto it = row.values.find(c);
            if (it == row.values.end()) continue;
            os << (first ? "" : "  ") << c << "=" << std::setprecision(6) << it->second;
            first = false;
        }
        os << "\n";
    }
    return os.str();
}

void EvalReport::write_text(const std::string& path) const {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("report: cannot write " + path);
    os << text_summary();
}

void write_svg_plot(const std::string& path, const std::string& title, const std::string& x_label,
                    const std::string& y_label, const std::vector<PlotSeries>& series) {
    const double W = 640, H = 420, ml = 70, mr = 30, mt = 50, mb = 60;
    double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    for (const auto& s : series)
        for (size_t i = 0; i < s.x.size(); ++i) {
            xmin = std::min(xmin, s.x[i]);
            xmax = std::max(xmax, s.x[i]);
            ymin = std::min(ymin, s.y[i]);
            ymax = std::max(ymax, s.y[i]);
        }
    if (!(xmax > xmin)) xmax = xmin + 1.0;
    if (!(ymax > ymin)) ymax = ymin + 1.0;
    double ypad = 0.08 * (ymax - ymin);
    ymin -= ypad;
    ymax += ypad;
    auto px = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * (W - ml - mr); };
    auto py = [&](double y) { return H - mb - (y - ymin) / (ymax - ymin) * (H - mt - mb); };
    const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("plot: cannot write " + path);
    os << "<svg xmlns='http://www.w3.org/2000/svg' width='" << W << "' height='" << H << "'>\n";
    os << "<rect width='100%' height='100%' fill='white'/>\n";
    os << "<text x='" << W / 2 << "' y='24' text-anchor='middle' font-size='16'>" << title << "</text>\n";
    os << "<line x1='" << ml << "' y1='" << H - mb << "' x2='" << W - mr << "' y2='" << H - mb
       << "' stroke='black'/>\n";
    os << "<line x1='" << ml << "' y1='" << mt << "' x2='" << ml << "' y2='" << H - mb << "' stroke='black'/>\n";
    os << "<text x='" << W / 2 << "' y='" << H - 16 << "' text-anchor='middle' font-size='12'>" << x_label
       << "</text>\n";
    os << "<text x='18' y='" << H / 2 << "' text-anchor='middle' font-size='12' transform='rotate(-90 18 " << H / 2
       << ")'>" << y_label << "</text>\n";
    for (int tick = 0; tick <= 4; ++tick) {
        double xv = xmin + (xmax - xmin) * tick / 4.0;
        double yv = ymin + (ymax - ymin) * tick / 4.0;
        os << "<text x='" << px(xv) << "' y='" << H - mb + 18 << "' text-anchor='middle' font-size='10'>"
           << std::setprecision(4) << xv << "</text>\n";
        os << "<text x='" << ml - 8 << "' y='" << py(yv) + 4 << "' text-anchor='end' font-size='10'>"
           << std::setprecision(4) << yv << "</text>\n";
    }
    for (size_t si = 0; si < series.size(); ++si) {
        const auto& s = series[si];
        const char* color = colors[si % 6];
        os << "<polyline fill='none' stroke='" << color << "' stroke-width='2' points='";
        for (size_t i = 0; i < s.x.size(); ++i) os << px(s.x[i]) << "," << py(s.y[i]) << " ";
        os << "'/>\n";
        for (size_t i = 0; i < s.x.size(); ++i)
            os << "<circle cx='" << px(s.x[i]) << "' cy='" << py(s.y[i]) << "' r='3' fill='" << color << "'/>\n";
        os << "<text x='" << W - mr - 6 << "' y='" << mt + 16 * static_cast<double>(si) << "' text-anchor='end' "
           << "font-size='11' fill='" << color << "'>" << s.name << "</text>\n";
    }
    os << "</svg>\n";
}

}  // namespace a2v::bench
