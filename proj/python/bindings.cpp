#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "gjekit/certify.hpp"
#include "gjekit/cli.hpp"
#include "gjekit/config.hpp"
#include "gjekit/solver.hpp"

namespace py = pybind11;
using namespace gjekit;

namespace {

struct PyGenerator {
    GeneratorPtr ptr;
};

PyGenerator from_config(const std::string& json) { return {generator_from_json(Json::parse(json))}; }

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Generating functions, structure-condition certification and the semi-discrete second boundary value solver.";

    py::register_exception<Error>(m, "GjekitError", PyExc_RuntimeError);

    py::class_<PyGenerator>(m, "Generator")
        .def_property_readonly("name", [](const PyGenerator& g) { return g.ptr->name(); })
        .def_property_readonly("dim", [](const PyGenerator& g) { return g.ptr->dim(); })
        .def("value", [](const PyGenerator& g, const Vec& x, const Vec& y, double z) { return g.ptr->value(x, y, z); })
        .def("dz", [](const PyGenerator& g, const Vec& x, const Vec& y, double z) { return g.ptr->dz(as_span(x), as_span(y), z); })
        .def("gradient",
             [](const PyGenerator& g, const Vec& x, const Vec& y, double z) { return Vec(g.ptr->jet(x, y, z, 1).grad); },
             "(g_x, g_y, g_z) stacked")
        .def("dual", [](const PyGenerator& g, const Vec& x, const Vec& y, double u) { return dual_g_star(*g.ptr, x, y, u); })
        .def(
            "solve_yz",
            [](const PyGenerator& g, const Vec& x, double u, const Vec& p) {
                const YZ r = solve_YZ(*g.ptr, x, u, p);
                return py::make_tuple(r.y, r.z);
            },
            "(y, z) with g(x, y, z) = u and g_x(x, y, z) = p")
        .def("matrix_E", [](const PyGenerator& g, const Vec& x, const Vec& y, double z) { return Mat(matrix_E(*g.ptr, x, y, z).E); })
        .def("__repr__", [](const PyGenerator& g) { return "<Generator " + g.ptr->name() + ">"; });

    m.def("monge_ampere", [](int dim) { return PyGenerator{make_monge_ampere(dim)}; }, py::arg("dim") = 2);
    m.def("perturbed", [](double eps, int dim) { return PyGenerator{make_perturbed(eps, dim)}; }, py::arg("epsilon") = 0.05,
          py::arg("dim") = 2);
    m.def("cost", [](const std::string& id, int dim) { return PyGenerator{make_cost_generator(id, dim)}; }, py::arg("cost_id"),
          py::arg("dim") = 2);
    m.def("_generator_from_json", &from_config);
    m.def("cost_ids", &cost_ids);
    m.def("builtin_ids", &builtin_ids);

    m.def(
        "_certify",
        [](const PyGenerator& g, std::size_t samples, std::uint64_t seed) {
            py::gil_scoped_release release;
            return to_json(certify(*g.ptr, samples, seed)).dump();
        },
        py::arg("gen"), py::arg("samples") = 10000, py::arg("seed") = 1);
    m.def("_list_builtins", [](std::size_t samples, std::uint64_t seed) { return list_builtins(samples, seed).dump(); },
          py::arg("samples") = 2000, py::arg("seed") = 1);
    m.def("_schema", [] { return config_schema().dump(); });
    m.def("_validate_config", [](const std::string& cfg) { validate_config(Json::parse(cfg)); });
    m.def(
        "_run",
        [](const std::string& command, const std::string& cfg, const std::string& out_dir, std::optional<std::uint64_t> seed) {
            RunOptions opt;
            opt.out_dir = out_dir;
            opt.seed = seed;
            RunOutcome o;
            {
                py::gil_scoped_release release;
                o = run_command(command, Json::parse(cfg), opt);
            }
            return py::make_tuple(o.exit_code, o.report.dump());
        },
        py::arg("command"), py::arg("config"), py::arg("out_dir"), py::arg("seed") = py::none());
    m.def(
        "_solve",
        [](const std::string& cfg, std::optional<std::uint64_t> seed) {
            const ProblemSpec spec = problem_from_json(Json::parse(cfg), seed);
            py::gil_scoped_release release;
            return to_json(solve_second_bvp(spec)).dump();
        },
        py::arg("config"), py::arg("seed") = py::none());
}
