#include "gjekit/report.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>

namespace gjekit {

SvgPlot::SvgPlot(int panels, int panel_px)
    : panels_(std::max(1, panels)), size_(panel_px), lo_(static_cast<std::size_t>(panels_), P2(-1, -1)),
      hi_(static_cast<std::size_t>(panels_), P2(1, 1)) {
    body_ << std::setprecision(6);
}

void SvgPlot::window(int panel, const P2& lo, const P2& hi) {
    lo_.at(static_cast<std::size_t>(panel)) = lo;
    hi_.at(static_cast<std::size_t>(panel)) = hi;
}

void SvgPlot::fit(int panel, const std::vector<P2>& pts, double pad) {
    if (pts.empty()) return;
    P2 lo = pts.front(), hi = pts.front();
    for (const auto& p : pts) {
        lo = lo.cwiseMin(p);
        hi = hi.cwiseMax(p);
    }
    const P2 c = 0.5 * (lo + hi);
    const double half = std::max(0.5 * (hi - lo).maxCoeff() * (1.0 + pad), 1e-300);
    window(panel, c - P2(half, half), c + P2(half, half));
}

P2 SvgPlot::px(int panel, const P2& p) const {
    const auto k = static_cast<std::size_t>(panel);
    const P2 lo = lo_[k], hi = hi_[k];
    const double sx = (p.x() - lo.x()) / (hi.x() - lo.x());
    const double sy = (p.y() - lo.y()) / (hi.y() - lo.y());
    return {panel * size_ + sx * size_, (1.0 - sy) * size_};
}

void SvgPlot::polygon(int panel, const std::vector<P2>& pts, const std::string& stroke, const std::string& fill, double width) {
    body_ << "<polygon fill=\"" << fill << "\" stroke=\"" << stroke << "\" stroke-width=\"" << width << "\" points=\"";
    for (const auto& p : pts) {
        const P2 q = px(panel, p);
        body_ << q.x() << ',' << q.y() << ' ';
    }
    body_ << "\"/>\n";
}

void SvgPlot::polyline(int panel, const std::vector<P2>& pts, const std::string& stroke, double width) {
    body_ << "<polyline fill=\"none\" stroke=\"" << stroke << "\" stroke-width=\"" << width << "\" points=\"";
    for (const auto& p : pts) {
        const P2 q = px(panel, p);
        body_ << q.x() << ',' << q.y() << ' ';
    }
    body_ << "\"/>\n";
}

void SvgPlot::dots(int panel, const std::vector<P2>& pts, const std::string& fill, double radius) {
    for (const auto& p : pts) {
        const P2 q = px(panel, p);
        body_ << "<circle cx=\"" << q.x() << "\" cy=\"" << q.y() << "\" r=\"" << radius << "\" fill=\"" << fill << "\"/>\n";
    }
}

void SvgPlot::title(int panel, const std::string& text) {
    body_ << "<text x=\"" << panel * size_ + 8 << "\" y=\"18\" font-family=\"sans-serif\" font-size=\"13\">" << text << "</text>\n";
}

void SvgPlot::save(const std::string& path) const {
    auto out = open_output(path, "report");
    const int W = panels_ * size_;
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << size_ << "\" viewBox=\"0 0 " << W << ' '
        << size_ << "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
        << body_.str() << "</svg>\n";
}

std::ofstream open_output(const std::string& path, const std::string& module) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorKind::ConfigError, module, "cannot write " + path);
    out << std::setprecision(17);
    return out;
}

}  // namespace gjekit
