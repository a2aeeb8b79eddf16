#pragma once

#include <string>
#include <vector>

#include <json.hpp>

namespace atvr {

/// Schema-stable CSV: fixed header order, "%.17g" doubles, byte-identical
/// output for identical rows.
class CsvWriter {
  public:
    explicit CsvWriter(std::vector<std::string> header);

    void add_row(const std::vector<std::string>& cells);
    void add_row(const std::vector<double>& cells);

    const std::vector<std::string>& header() const { return header_; }
    std::string to_string() const;
    void write(const std::string& path) const;

    static std::string format_double(double v);

  private:
    std::vector<std::string> header_;
    std::vector<std::vector<std::string>> rows_;
};

struct PlotSeries {
    std::string label;
    std::vector<std::pair<double, double>> points;
    bool draw_line = false;
    std::string color = "#4477aa";
};

/// Minimal hand-written scatter/line SVG; diagnostics only, the CSVs are the
/// contract.
void write_svg_plot(const std::string& path, const std::string& title,
                    const std::vector<PlotSeries>& series);

void write_json(const std::string& path, const nlohmann::json& j);
nlohmann::json read_json(const std::string& path);
std::string read_file(const std::string& path);

}  // namespace atvr
