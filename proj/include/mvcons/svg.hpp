#pragma once

#include <string>
#include <vector>

namespace mvcons {

struct ScatterPoint {
    double x = 0.0;
    double y = 0.0;
    int label = 0;
    std::string domain;
};

// Scatter plot colored by label and shaped by domain. Every point element
// carries class="pt", one element per input point.
std::string scatter_svg(const std::vector<ScatterPoint>& points, int width = 640, int height = 640);

void write_scatter_svg(const std::string& path, const std::vector<ScatterPoint>& points,
                       int width = 640, int height = 640);

}  // namespace mvcons
