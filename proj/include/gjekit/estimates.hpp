#pragma once

#include "gjekit/gconvex.hpp"
#include "gjekit/geometry.hpp"
#include "gjekit/json.hpp"
#include "gjekit/transform.hpp"

#include <memory>
#include <optional>

namespace gjekit {

struct CaseOptions {
    double h = 0.0;
    /// Pinching window for det DY on the section (smooth solutions only).
    double lambda = 1e-3;
    double Lambda = 1e3;
    bool check_density = true;
    /// Nodes used for the density check, spread evenly over the section.
    std::size_t density_nodes = 2000;
    bool require_compact = true;
};

/// A section of a solution below the lifted support at its contact point.
struct SectionCase {
    GeneratorPtr gen;
    std::function<double(const Vec&)> u;
    std::shared_ptr<const SupportFamily> family;  // set for semi-discrete solutions
    Vec x0, y0;
    double z0 = 0.0;
    double h = 0.0;
    Section section;
    PointList nodes;    // section nodes
    double sup = 0.0;   // sup over D of |u - g(., y0, z_h)|
    double area = 0.0;  // |D|
    Vec ellipsoid_axes;
    Vec ellipsoid_center;
    bool density_checked = false;
    double density_min = 0.0, density_max = 0.0;
    double spacing = 0.0;
    int dim() const { return static_cast<int>(x0.size()); }
};

/// Smooth solution: the support at x0 comes from the Y/Z mappings of (u(x0), Du(x0)).
SectionCase make_case(GeneratorPtr gen, const SmoothField& u, const Vec& x0, const GridDomain& dom, const CaseOptions& opt);
/// Semi-discrete solution: the support is the active one at x0.
SectionCase make_case(std::shared_ptr<const SupportFamily> u, const Vec& x0, const GridDomain& dom, const CaseOptions& opt);

/// sup^n / |D|^2
double upper_estimate(const SectionCase& c);
/// |D|^2 / sup^n
double lower_estimate(const SectionCase& c);

struct NearBoundaryResult {
    double ratio = 0.0;  // |u(x_p) - g(x_p, y0, z_h)|^n / (eps |D_q|^2)
    double eps = 0.0;
    double d = 0.0;
    double gap = 0.0;  // |u-bar(q_p)|
    double area_q = 0.0;
    Vec probe;  // x_p in original coordinates
    P2 probe_q = P2::Zero();
};
/// Probe point on the longest nu-chord of D_q at sup <q, nu> - eps d.
/// d <= 0 takes the longest chord length.
NearBoundaryResult near_boundary_estimate(const SectionCase& c, const P2& nu, double eps, double d = 0.0);

struct ConeComparison {
    bool pass = false;
    double C = 0.0;  // max |g0(0)| / h over tested supports
    double C_max = 0.0;
    double K = 0.0;
    double h = 0.0;  // sup over D_q of |u-bar|
    std::size_t nodes = 0;
    std::size_t supports = 0;
    P2 center_q = P2::Zero();
};
/// Re-centres q-coordinates at the minimum ellipsoid centre of D_q and checks
/// |g0(0)| <= C h for every support active on (1/K) D_q.
ConeComparison cone_comparison(const SectionCase& c, double K, double C_max = 4.0);

struct EstimateCase {
    std::string id;
    double h = 0.0;
    double sup = 0.0;
    double area = 0.0;
    double upper = 0.0;
    double lower = 0.0;
    std::optional<double> near;
    std::optional<double> eps;
};

struct Window {
    double lo = 0.0;
    double hi = kInf;
    bool contains(double v) const { return v >= lo && v <= hi; }
};

struct EstimateReport {
    std::vector<EstimateCase> cases;
    double upper_min = kInf, upper_max = 0.0;
    double lower_min = kInf, lower_max = 0.0;
    double near_min = kInf, near_max = 0.0;
    bool upper_pass = true, lower_pass = true, near_pass = true;
    bool pass() const { return upper_pass && lower_pass && near_pass; }
};

EstimateReport summarize(std::vector<EstimateCase> cases, const Window& upper, const Window& lower, const Window& near = {});

struct StrictProbe {
    std::vector<double> h, diam;
    double alpha = 0.0;
    double C = 0.0;
    bool plateau = false;
    bool strict = false;
    double resolution = 0.0;
};
/// diam of {u < g(., y0, z_h)} over a grid of heights; a plateau above grid
/// resolution over the smallest heights flags non-strict convexity.
StrictProbe strict_convexity_probe(const std::function<double(const Vec&)>& u, const Generator& gen, const Vec& x0,
                                   const Vec& y0, const std::vector<double>& heights, const GridDomain& dom);
StrictProbe strict_convexity_probe(const SectionCase& c, const std::vector<double>& heights, const GridDomain& dom);

struct C1Probe {
    std::vector<double> deltas;
    std::vector<std::vector<double>> diameters;  // [point][delta]
    std::vector<double> median;                  // per delta
    std::vector<double> max;                     // per delta
    PointList points;                            // probe points after ridge snapping
};
/// Diameter of the hull of g_x(x, y_i, z_i) over supports within delta of u(x).
/// With `snap`, points move onto the nearest ridge between the two leading supports.
C1Probe c1_probe(const SupportFamily& u, const PointList& points, const std::vector<double>& deltas, bool snap = true);
C1Probe c1_probe(const SmoothField& u, const PointList& points, const std::vector<double>& deltas);

Json to_json(const SectionCase& c);
Json to_json(const NearBoundaryResult& r);
Json to_json(const ConeComparison& r);
Json to_json(const EstimateReport& r);
Json to_json(const StrictProbe& r);
Json to_json(const C1Probe& r);
void write_estimates_csv(const EstimateReport& r, const std::string& path);
void write_section_svg(const SectionCase& c, const GridDomain& dom, const std::string& path);

}  // namespace gjekit
