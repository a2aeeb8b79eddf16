#include "atvr/dataset.hpp"

#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace atvr {

void save_dataset(const Dataset& data, const std::string& path) {
    nlohmann::json j;
    j["n"] = data.dim;
    j["points"] = data.points;
    j["labels"] = data.labels;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_dataset: cannot open " + path);
    out << j.dump() << "\n";
}

Dataset load_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_dataset: cannot open " + path);
    nlohmann::json j;
    try {
        in >> j;
        Dataset data;
        data.dim = j.at("n").get<std::size_t>();
        data.points = j.at("points").get<std::vector<Vec>>();
        data.labels = j.at("labels").get<std::vector<std::size_t>>();
        if (data.points.size() != data.labels.size())
            throw std::runtime_error("dataset schema error: points/labels size mismatch");
        for (const auto& p : data.points)
            if (p.size() != data.dim) throw std::runtime_error("dataset schema error: bad point size");
        return data;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(std::string("dataset schema error: ") + e.what());
    }
}

}  // namespace atvr
