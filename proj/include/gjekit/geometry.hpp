#pragma once

#include "gjekit/common.hpp"

#include <Eigen/Dense>

namespace gjekit {

using P2 = Eigen::Vector2d;
using Polygon = std::vector<P2>;

/// Convex hull, counter-clockwise, without repeated or collinear points.
Polygon convex_hull(std::vector<P2> pts);
Polygon convex_hull(const PointList& pts);

double polygon_area(const Polygon& poly);
double polygon_perimeter(const Polygon& poly);
bool point_in_polygon(const Polygon& poly, const P2& p);
/// Largest pairwise distance between vertices.
double polygon_diameter(const Polygon& poly);
bool is_convex_ccw(const Polygon& poly, double tol = 1e-14);
/// max_k <v_k, w>
double support_function(const Polygon& poly, const P2& w);

/// {p : <a_k, p> <= b_k for all k} clipped to the box [-bound, bound]^2.
Polygon halfplane_intersection(const std::vector<std::pair<P2, double>>& halfplanes, double bound);

/// h * polar(D) = {p : <p, x> <= h for x in D} for a convex polygon D
/// containing the origin, from its edge normals.
Polygon scaled_polar(const Polygon& D, double h);

/// Symmetric Hausdorff distance between two finite sets.
double hausdorff(const std::vector<P2>& a, const std::vector<P2>& b);
/// Hausdorff distance between polygon boundaries sampled at `per_edge` points.
double hausdorff_polygons(const Polygon& a, const Polygon& b, int per_edge = 64);

/// Points evenly spaced along the boundary, `per_edge` per edge.
std::vector<P2> sample_boundary(const Polygon& poly, int per_edge);

/// Level-set extraction on a node grid with values[i + nx * j] at
/// (x0 + i * dx, y0 + j * dy). Polylines separate value < level from >= level.
struct Polyline {
    std::vector<P2> points;
    bool closed = false;
};

std::vector<Polyline> marching_squares(const std::vector<double>& values, int nx, int ny, double x0, double y0,
                                       double dx, double dy, double level = 0.0);

/// Area enclosed by the closed polylines (even-odd).
double polylines_area(const std::vector<Polyline>& lines);

/// Minimum-volume enclosing ellipsoid {x : (x - c)^T A (x - c) <= 1}.
struct Ellipsoid {
    Vec center;
    Mat A;
    int iterations = 0;
    double gap = 0.0;

    bool contains(const Vec& x, double tol = 0.0) const;
    double volume() const;
    /// Semi-axis lengths in ascending order.
    Vec axes() const;
};

/// Khachiyan iteration with Todd-Yildirim away steps to relative gap `tol`.
/// The result is rescaled so every input point lies inside.
Ellipsoid min_ellipsoid(const PointList& pts, double tol = 1e-7, int max_iter = 100000);

double ellipse_area_from_A(const Mat& A);

}  // namespace gjekit
