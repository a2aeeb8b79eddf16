#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "atvr/numerics.hpp"

namespace atvr {

/// Labeled real vectors with small class counts.
struct Dataset {
    std::size_t dim = 0;
    std::vector<Vec> points;
    std::vector<std::size_t> labels;

    std::size_t size() const { return points.size(); }
};

void save_dataset(const Dataset& data, const std::string& path);
Dataset load_dataset(const std::string& path);

}  // namespace atvr
