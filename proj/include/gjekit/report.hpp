#pragma once

#include "gjekit/geometry.hpp"

#include <fstream>
#include <sstream>
#include <string>

namespace gjekit {

/// Minimal SVG writer with one or more side-by-side square panels, each
/// mapping a data box to pixels.
class SvgPlot {
public:
    SvgPlot(int panels, int panel_px = 400);

    /// Sets the data window of a panel; y points up.
    void window(int panel, const P2& lo, const P2& hi);
    void fit(int panel, const std::vector<P2>& pts, double pad = 0.08);
    void polygon(int panel, const std::vector<P2>& pts, const std::string& stroke, const std::string& fill = "none",
                 double width = 1.5);
    void polyline(int panel, const std::vector<P2>& pts, const std::string& stroke, double width = 1.0);
    void dots(int panel, const std::vector<P2>& pts, const std::string& fill, double radius = 1.5);
    void title(int panel, const std::string& text);
    void save(const std::string& path) const;

private:
    P2 px(int panel, const P2& p) const;

    int panels_;
    int size_;
    std::vector<P2> lo_, hi_;
    std::ostringstream body_;
};

/// Opens `path` for writing or throws ConfigError naming the module.
std::ofstream open_output(const std::string& path, const std::string& module);

}  // namespace gjekit
