#pragma once

#include "gjekit/generator.hpp"
#include "gjekit/geometry.hpp"
#include "gjekit/json.hpp"

#include <functional>
#include <optional>

namespace gjekit {

struct Support {
    Vec y;
    double z = 0.0;
};

/// u(x) = max_i g(x, y_i, z_i)
class SupportFamily {
public:
    struct Eval {
        double value = -kInf;
        std::vector<std::size_t> active;
    };

    SupportFamily(GeneratorPtr gen, std::vector<Support> supports);

    const Generator& gen() const { return *gen_; }
    const GeneratorPtr& gen_ptr() const { return gen_; }
    std::size_t size() const { return supports_.size(); }
    const std::vector<Support>& supports() const { return supports_; }
    const Support& operator[](std::size_t i) const { return supports_[i]; }
    std::vector<double> heights() const;
    SupportFamily with_heights(const std::vector<double>& z) const;

    double value(const Vec& x) const;
    /// Value and all indices within 1e-12 (relative) of the max.
    Eval evaluate(const Vec& x, double tol = 1e-12) const;
    /// Index of the maximal admissible support, ties to the lowest index;
    /// npos when no support is admissible at x.
    std::size_t argmax(std::span<const double> x) const;

    static constexpr std::size_t npos = static_cast<std::size_t>(-1);

private:
    GeneratorPtr gen_;
    std::vector<Support> supports_;
};

/// A smooth height field given by callables; the gradient falls back to
/// fourth-order central differences.
struct SmoothField {
    std::function<double(const Vec&)> value;
    std::function<Vec(const Vec&)> gradient;

    double operator()(const Vec& x) const { return value(x); }
    Vec grad(const Vec& x, double step = 1e-4) const;

    /// u(x) = 0.5 x^T Q x
    static SmoothField quadratic(const Mat& Q);
    static SmoothField from_family(const SupportFamily& u);
};

enum class MaskShape { Box, Ball, Polygon };

/// Midpoint-rule discretization of the source domain with density f.
class GridDomain {
public:
    using Density = std::function<double(const Vec&)>;

    static GridDomain box(const Box& b, std::vector<int> res, Density f = nullptr);
    static GridDomain ball(const Box& b, std::vector<int> res, const Vec& center, double radius, Density f = nullptr);
    static GridDomain polygon(const Box& b, std::vector<int> res, const Polygon& poly, Density f = nullptr);

    int dim() const { return bbox_.dim(); }
    const Box& bbox() const { return bbox_; }
    const std::vector<int>& resolution() const { return res_; }
    MaskShape shape() const { return shape_; }
    double spacing(int axis) const { return (bbox_.hi[axis] - bbox_.lo[axis]) / res_[static_cast<std::size_t>(axis)]; }
    double cell_volume() const { return cell_volume_; }

    std::size_t grid_nodes() const { return mask_.size(); }
    bool in_mask(std::size_t grid_index) const { return mask_[grid_index] != 0; }
    Vec grid_point(std::size_t grid_index) const;

    /// Masked nodes only.
    std::size_t nodes() const { return active_.size(); }
    std::size_t grid_index(std::size_t node) const { return active_[node]; }
    std::span<const double> point(std::size_t node) const {
        return {coords_.data() + node * static_cast<std::size_t>(dim()), static_cast<std::size_t>(dim())};
    }
    Vec node(std::size_t k) const { return to_vec(point(k)); }
    double mass(std::size_t node) const { return mass_[node]; }
    double density(std::size_t node) const { return mass_[node] / cell_volume_; }
    double total_mass() const { return total_; }
    /// Node index for a grid index, or npos outside the mask.
    std::size_t node_of(std::size_t grid_index) const { return node_of_[grid_index]; }
    bool contains(const Vec& x) const;
    double domain_volume() const { return cell_volume_ * static_cast<double>(nodes()); }

    void set_density(const Density& f);

    static constexpr std::size_t npos = static_cast<std::size_t>(-1);

private:
    GridDomain(const Box& b, std::vector<int> res, MaskShape shape, std::function<bool(const Vec&)> inside, Density f);

    Box bbox_;
    std::vector<int> res_;
    MaskShape shape_;
    std::function<bool(const Vec&)> inside_;
    double cell_volume_ = 0.0;
    std::vector<char> mask_;
    std::vector<std::size_t> active_;
    std::vector<std::size_t> node_of_;
    std::vector<double> coords_;
    std::vector<double> mass_;
    double total_ = 0.0;
};

struct MeasureReport {
    std::vector<double> masses;
    std::vector<std::size_t> counts;
    double total = 0.0;
    double domain_total = 0.0;
    std::vector<std::size_t> owner;  // per masked node
    double max_ratio = 0.0;          // max_i m_i / target_i, when targets are given
    double min_ratio = 0.0;
    double max_rel_error = 0.0;
};

struct YMap {
    std::vector<std::size_t> indices;
    PointList targets;    // y_i of the active supports
    PointList covectors;  // g_x(x, y_i, z_i)
};

SupportFamily::Eval evaluate(const SupportFamily& u, const Vec& x);
YMap y_mapping(const SupportFamily& u, const Vec& x);

MeasureReport cell_decomposition(const SupportFamily& u, const GridDomain& dom,
                                 const std::vector<double>& target_masses = {});

/// {x in Omega : u(x) < g(x, y0, z_h)} with z_h = g*(x0, y0, u(x0) + h).
struct Section {
    std::vector<char> mask;  // per masked node
    std::size_t count = 0;
    double z_h = 0.0;
    double h = 0.0;
    Vec contact;
    Vec y0;
    bool compact = true;
    std::vector<Polyline> boundary;  // n = 2
    double area = 0.0;               // polygon area when the boundary closes, else node area
    double node_area = 0.0;
    /// sup over the section of |u - g(., y0, z_h)|
    double depth = 0.0;
};

Section section(const std::function<double(const Vec&)>& u, const Generator& gen, const Vec& x0, const Vec& y0,
                double h, const GridDomain& dom, bool require_compact = true);
Section section(const SupportFamily& u, const Vec& x0, const Vec& y0, double z0, double h, const GridDomain& dom,
                bool require_compact = true);

/// Nodes where the section mask is set, as points.
PointList section_points(const Section& s, const GridDomain& dom);
/// Convex-hull defect of a 2D mask: |hull \ mask| / |mask| in node counts.
double hull_defect(const std::vector<char>& mask, const GridDomain& dom, const std::function<Vec(const Vec&)>& map = nullptr);

/// Integral of det DY(x, u, Du) over the masked nodes of E.
struct PushforwardResult {
    double integral = 0.0;
    double det_min = 0.0;
    double det_max = 0.0;
    std::size_t nodes = 0;
};
PushforwardResult pushforward_density(const Generator& gen, const SmoothField& u, const GridDomain& dom,
                                      const std::vector<char>& E);

Json to_json(const MeasureReport& r, bool with_owner = false);
Json to_json(const Section& s);
void write_cells_csv(const MeasureReport& r, const GridDomain& dom, const std::string& path);
void write_cells_svg(const MeasureReport& r, const GridDomain& dom, const std::string& path, const PointList& targets = {});

}  // namespace gjekit
