#include "mvcons/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>

#include "mvcons/errors.hpp"

namespace mvcons {

namespace {

const char* kPalette[] = {"#e41a1c", "#377eb8", "#4daf4a", "#984ea3", "#ff7f00",
                          "#a65628", "#f781bf", "#17becf", "#666666", "#bcbd22"};
constexpr int kPaletteSize = 10;

std::string fmt2(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

}  // namespace

std::string scatter_svg(const std::vector<ScatterPoint>& points, int width, int height) {
    double xmin = 0.0, xmax = 1.0, ymin = 0.0, ymax = 1.0;
    if (!points.empty()) {
        xmin = xmax = points[0].x;
        ymin = ymax = points[0].y;
        for (const auto& p : points) {
            xmin = std::min(xmin, p.x);
            xmax = std::max(xmax, p.x);
            ymin = std::min(ymin, p.y);
            ymax = std::max(ymax, p.y);
        }
    }
    const double xspan = std::max(xmax - xmin, 1e-9);
    const double yspan = std::max(ymax - ymin, 1e-9);
    const double margin = 24.0;
    const double pw = width - 2 * margin;
    const double ph = height - 2 * margin;

    // domain -> marker shape index, in first-seen order
    std::map<std::string, int> domain_shape;
    for (const auto& p : points) {
        if (!domain_shape.count(p.domain)) {
            const int next = static_cast<int>(domain_shape.size());
            domain_shape[p.domain] = next % 3;
        }
    }

    std::string svg;
    svg += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(width) +
           "\" height=\"" + std::to_string(height) + "\" viewBox=\"0 0 " + std::to_string(width) +
           " " + std::to_string(height) + "\">\n";
    svg += "<rect width=\"" + std::to_string(width) + "\" height=\"" + std::to_string(height) +
           "\" fill=\"#ffffff\"/>\n";

    for (const auto& p : points) {
        const double sx = margin + (p.x - xmin) / xspan * pw;
        const double sy = margin + (1.0 - (p.y - ymin) / yspan) * ph;
        const char* color = kPalette[((p.label % kPaletteSize) + kPaletteSize) % kPaletteSize];
        switch (domain_shape[p.domain]) {
            case 0:
                svg += "<circle class=\"pt\" cx=\"" + fmt2(sx) + "\" cy=\"" + fmt2(sy) +
                       "\" r=\"3.5\" fill=\"" + color + "\"/>\n";
                break;
            case 1:
                svg += "<rect class=\"pt\" x=\"" + fmt2(sx - 3.0) + "\" y=\"" + fmt2(sy - 3.0) +
                       "\" width=\"6\" height=\"6\" fill=\"" + color + "\"/>\n";
                break;
            default:
                svg += "<path class=\"pt\" d=\"M " + fmt2(sx) + " " + fmt2(sy - 4.0) + " L " +
                       fmt2(sx - 3.5) + " " + fmt2(sy + 3.0) + " L " + fmt2(sx + 3.5) + " " +
                       fmt2(sy + 3.0) + " Z\" fill=\"" + color + "\"/>\n";
                break;
        }
    }
    svg += "</svg>\n";
    return svg;
}

void write_scatter_svg(const std::string& path, const std::vector<ScatterPoint>& points, int width,
                       int height) {
    std::ofstream os(path);
    if (!os) throw DataError("cannot write SVG: " + path);
    os << scatter_svg(points, width, height);
}

}  // namespace mvcons
