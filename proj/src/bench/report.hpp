#ifndef A2V_BENCH_REPORT_HPP
#define A2V_BENCH_REPORT_HPP

#include <map>
#include <string>
#include <vector>

namespace a2v::bench {

// One row of an evaluation table: string labels plus numeric metric values.
struct EvalRow {
    std::map<std::string, std::string> labels;
    std::map<std::string, double> values;
};

struct EvalReport {
    std::string title;
    std::vector<std::string> label_columns;
    std::vector<std::string> value_columns;
    std::vector<EvalRow> rows;
    std::vector<uint64_t> seeds;
    std::vector<std::string> warnings;
    std::string provenance;  // checkpoint crc / config hash line

    void write_csv(const std::string& path) const;
    std::string text_summary() const;
    void write_text(const std::string& path) const;

    double value(size_t row, const std::string& col) const { return rows.at(row).values.at(col); }
};

// Minimal line-chart SVG: one polyline per series over shared x values.
struct PlotSeries {
    std::string name;
    std::vector<double> x, y;
};
void write_svg_plot(const std::string& path, const std::string& title, const std::string& x_label,
                    const std::string& y_label, const std::vector<PlotSeries>& series);

}  // namespace a2v::bench

#endif
