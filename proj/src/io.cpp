#include "atvr/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace atvr {

CsvWriter::CsvWriter(std::vector<std::string> header) : header_(std::move(header)) {}

std::string CsvWriter::format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void CsvWriter::add_row(const std::vector<std::string>& cells) {
    if (cells.size() != header_.size()) throw std::invalid_argument("CsvWriter: row size mismatch");
    rows_.push_back(cells);
}

void CsvWriter::add_row(const std::vector<double>& cells) {
    std::vector<std::string> text;
    text.reserve(cells.size());
    for (double v : cells) text.push_back(format_double(v));
    add_row(text);
}

std::string CsvWriter::to_string() const {
    std::ostringstream oss;
    for (std::size_t i = 0; i < header_.size(); ++i) {
        if (i) oss << ",";
        oss << header_[i];
    }
    oss << "\n";
    for (const auto& row : rows_) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i) oss << ",";
            oss << row[i];
        }
        oss << "\n";
    }
    return oss.str();
}

void CsvWriter::write(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("CsvWriter: cannot open " + path);
    out << to_string();
}

namespace {

struct Range {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    void update(double v) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    double span() const { return hi > lo ? hi - lo : 1.0; }
};

}  // namespace

void write_svg_plot(const std::string& path, const std::string& title,
                    const std::vector<PlotSeries>& series) {
    const double width = 640, height = 480, margin = 60;
    Range xr, yr;
    for (const auto& s : series)
        for (const auto& [x, y] : s.points) {
            xr.update(x);
            yr.update(y);
        }
    if (!std::isfinite(xr.lo)) {
        xr = {0.0, 1.0};
        yr = {0.0, 1.0};
    }
    auto sx = [&](double x) { return margin + (x - xr.lo) / xr.span() * (width - 2 * margin); };
    auto sy = [&](double y) { return height - margin - (y - yr.lo) / yr.span() * (height - 2 * margin); };

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
        << "\">\n";
    svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    svg << "<text x=\"" << width / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"14\">"
        << title << "</text>\n";
    // axes
    svg << "<line x1=\"" << margin << "\" y1=\"" << height - margin << "\" x2=\"" << width - margin
        << "\" y2=\"" << height - margin << "\" stroke=\"black\"/>\n";
    svg << "<line x1=\"" << margin << "\" y1=\"" << margin << "\" x2=\"" << margin << "\" y2=\""
        << height - margin << "\" stroke=\"black\"/>\n";
    svg << "<text x=\"" << margin << "\" y=\"" << height - margin + 18 << "\" font-size=\"10\">"
        << CsvWriter::format_double(xr.lo) << "</text>\n";
    svg << "<text x=\"" << width - margin << "\" y=\"" << height - margin + 18
        << "\" text-anchor=\"end\" font-size=\"10\">" << CsvWriter::format_double(xr.hi)
        << "</text>\n";
    svg << "<text x=\"" << margin - 4 << "\" y=\"" << height - margin
        << "\" text-anchor=\"end\" font-size=\"10\">" << CsvWriter::format_double(yr.lo)
        << "</text>\n";
    svg << "<text x=\"" << margin - 4 << "\" y=\"" << margin << "\" text-anchor=\"end\" font-size=\"10\">"
        << CsvWriter::format_double(yr.hi) << "</text>\n";

    double legend_y = margin;
    for (const auto& s : series) {
        if (s.draw_line && s.points.size() > 1) {
            svg << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"1.5\" points=\"";
            for (const auto& [x, y] : s.points) svg << sx(x) << "," << sy(y) << " ";
            svg << "\"/>\n";
        } else {
            for (const auto& [x, y] : s.points)
                svg << "<circle cx=\"" << sx(x) << "\" cy=\"" << sy(y) << "\" r=\"2.5\" fill=\""
                    << s.color << "\" fill-opacity=\"0.6\"/>\n";
        }
        svg << "<text x=\"" << width - margin - 4 << "\" y=\"" << legend_y
            << "\" text-anchor=\"end\" font-size=\"11\" fill=\"" << s.color << "\">" << s.label
            << "</text>\n";
        legend_y += 14;
    }
    svg << "</svg>\n";

    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("write_svg_plot: cannot open " + path);
    out << svg.str();
}

void write_json(const std::string& path, const nlohmann::json& j) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("write_json: cannot open " + path);
    out << j.dump(2) << "\n";
}

nlohmann::json read_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("read_json: cannot open " + path);
    nlohmann::json j;
    in >> j;
    return j;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("read_file: cannot open " + path);
    std::ostringstream oss;
    oss << in.rdbuf();
    return oss.str();
}

}  // namespace atvr
