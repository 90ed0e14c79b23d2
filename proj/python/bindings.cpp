#include "dscn/error.hpp"
#include "dscn/fcls.hpp"
#include "dscn/harness.hpp"
#include "dscn/io.hpp"
#include "dscn/model.hpp"
#include "dscn/optimizer.hpp"
#include "dscn/scene.hpp"

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

namespace py = pybind11;
using namespace dscn;
namespace fs = std::filesystem;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

// (H, W, B) or (N, B) arrays; a 2-D array is treated as a 1 x N image.
HyperCube to_cube(const Array& a) {
    HyperCube c;
    if (a.ndim() == 3) {
        c = HyperCube(a.shape(1), a.shape(0), a.shape(2));
    } else if (a.ndim() == 2) {
        c = HyperCube(a.shape(0), 1, a.shape(1));
    } else {
        throw InputError("cube must be a 2-D (pixels, bands) or 3-D (height, width, bands) array");
    }
    std::copy(a.data(), a.data() + a.size(), c.data.begin());
    return c;
}

Array from_cube(const HyperCube& c) {
    Array out({c.height, c.width, c.bands});
    std::copy(c.data.begin(), c.data.end(), out.mutable_data());
    return out;
}

EndmemberMatrix to_endmembers(const Array& a) {
    if (a.ndim() != 2) throw InputError("endmembers must be a 2-D (bands, K) array");
    EndmemberMatrix e(a.shape(0), a.shape(1));
    auto r = a.unchecked<2>();
    for (py::ssize_t b = 0; b < a.shape(0); ++b)
        for (py::ssize_t k = 0; k < a.shape(1); ++k) e(b, k) = r(b, k);
    return e;
}

Array from_endmembers(const EndmemberMatrix& e) {
    Array out({e.bands, e.count});
    auto w = out.mutable_unchecked<2>();
    for (std::size_t b = 0; b < e.bands; ++b)
        for (std::size_t k = 0; k < e.count; ++k) w(b, k) = e(b, k);
    return out;
}

AbundanceMap to_abundance(const Array& a) {
    AbundanceMap m;
    if (a.ndim() == 3) {
        m = AbundanceMap(a.shape(1), a.shape(0), a.shape(2));
    } else if (a.ndim() == 2) {
        m = AbundanceMap(a.shape(0), 1, a.shape(1));
    } else {
        throw InputError("abundances must be a 2-D (pixels, K) or 3-D (height, width, K) array");
    }
    std::copy(a.data(), a.data() + a.size(), m.data.begin());
    return m;
}

Array from_abundance(const AbundanceMap& m) {
    Array out({m.height, m.width, m.count});
    std::copy(m.data.begin(), m.data.end(), out.mutable_data());
    return out;
}

Fusion parse_fusion(const std::string& s) {
    if (s == "s" || s == "S" || s == "sparse") return Fusion::Sparse;
    if (s == "p" || s == "P" || s == "probabilistic") return Fusion::Probabilistic;
    throw ConfigError("fusion must be 's' or 'p', got '" + s + "'");
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Spectral-convolution unmixing encoder";

    static py::exception<Error> base(m, "DscnError", PyExc_RuntimeError);
    static py::exception<InputError> input(m, "InputError", base.ptr());
    static py::exception<ConfigError> config(m, "ConfigError", base.ptr());
    static py::exception<FormatError> format(m, "FormatError", base.ptr());
    static py::exception<NumericalError> numerical(m, "NumericalError", base.ptr());
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const FormatError& e) {
            py::set_error(format, e.what());
        } catch (const InputError& e) {
            py::set_error(input, e.what());
        } catch (const ConfigError& e) {
            py::set_error(config, e.what());
        } catch (const NumericalError& e) {
            py::set_error(numerical, e.what());
        } catch (const Error& e) {
            py::set_error(base, e.what());
        }
    });

    m.def(
        "synth_scene",
        [](std::size_t endmembers, std::size_t bands, std::size_t width, std::size_t height,
           std::optional<double> snr_db, double alpha, std::uint64_t seed) {
            SceneSpec s;
            s.endmembers = endmembers;
            s.bands = bands;
            s.width = width;
            s.height = height;
            s.snr_db = snr_db;
            s.dirichlet_alpha = alpha;
            s.seed = seed;
            const Scene scene = synth_scene(s);
            py::dict d;
            d["cube"] = from_cube(scene.cube);
            d["endmembers"] = from_endmembers(scene.endmembers);
            d["abundances"] = from_abundance(scene.abundances);
            return d;
        },
        py::arg("endmembers") = 3, py::arg("bands") = 64, py::arg("width") = 32, py::arg("height") = 32,
        py::arg("snr_db") = py::none(), py::arg("alpha") = 1.0, py::arg("seed") = 0,
        "Synthetic scene as a dict of cube (H, W, B), endmembers (B, K) and abundances (H, W, K).");

    m.def(
        "simplex_project",
        [](const std::vector<double>& v) { return simplex_project(v); }, py::arg("v"),
        "Euclidean projection onto the probability simplex.");

    m.def(
        "fcls",
        [](const Array& cube, const Array& endmembers, std::size_t max_iters, double tol) {
            FclsConfig cfg;
            cfg.max_iters = max_iters;
            cfg.tol = tol;
            const HyperCube c = to_cube(cube);
            AbundanceMap a;
            {
                py::gil_scoped_release release;
                a = fcls_unmix_cube(c, to_endmembers(endmembers), cfg);
            }
            Array out = from_abundance(a);
            return cube.ndim() == 2 ? Array(out.reshape({static_cast<py::ssize_t>(a.pixel_count()),
                                                          static_cast<py::ssize_t>(a.count)}))
                                    : out;
        },
        py::arg("cube"), py::arg("endmembers"), py::arg("max_iters") = 2000, py::arg("tol") = 1e-10,
        "Fully constrained least squares abundances per pixel.");

    m.def(
        "rmse",
        [](const Array& estimate, const Array& truth) {
            const RmseReport r = rmse_per_material(to_abundance(estimate), to_abundance(truth));
            return py::make_tuple(r.per_material, r.average);
        },
        py::arg("estimate"), py::arg("truth"), "Per-material RMSE and their average.");

    py::class_<ModelParams>(m, "Model")
        .def_property_readonly("bands", [](const ModelParams& p) { return p.config.bands; })
        .def_property_readonly("endmember_count", [](const ModelParams& p) { return p.config.endmembers; })
        .def_property_readonly("fusion", [](const ModelParams& p) { return std::string(to_string(p.config.fusion)); })
        .def_property_readonly("endmembers", [](const ModelParams& p) { return from_endmembers(p.endmembers); })
        .def(
            "unmix",
            [](const ModelParams& p, const Array& cube) {
                const HyperCube c = to_cube(cube);
                AbundanceMap a;
                {
                    py::gil_scoped_release release;
                    a = unmix_cube(p, c);
                }
                Array out = from_abundance(a);
                return cube.ndim() == 2 ? Array(out.reshape({static_cast<py::ssize_t>(a.pixel_count()),
                                                              static_cast<py::ssize_t>(a.count)}))
                                        : out;
            },
            py::arg("cube"), "Abundances for every pixel (inference mode).")
        .def("save", [](const ModelParams& p, const fs::path& path) { io::save_model(path, p); }, py::arg("path"));

    m.def("load_model", &io::load_model, py::arg("path"));

    m.def(
        "train",
        [](const Array& cube, const Array& endmembers, const std::string& fusion, std::size_t iterations,
           std::size_t batch_size, std::uint64_t seed, double lr, double lambda1, double lambda2, double lambda3) {
            const HyperCube c = to_cube(cube);
            const EndmemberMatrix e = to_endmembers(endmembers);
            ModelConfig cfg;
            cfg.bands = c.bands;
            cfg.endmembers = e.count;
            cfg.fusion = parse_fusion(fusion);
            cfg.seed = seed;
            TrainConfig tc;
            tc.iterations = iterations;
            tc.batch_size = batch_size;
            tc.seed = seed;
            tc.adam.lr = lr;
            tc.weights = {lambda1, lambda2, lambda3};
            TrainResult r;
            {
                py::gil_scoped_release release;
                r = train(c, e, cfg, tc);
            }
            Array trace(static_cast<py::ssize_t>(r.trace.size()));
            for (std::size_t i = 0; i < r.trace.size(); ++i) trace.mutable_data()[i] = r.trace[i].total;
            return py::make_tuple(std::move(r.params), trace);
        },
        py::arg("cube"), py::arg("endmembers"), py::arg("fusion") = "p", py::arg("iterations") = 5000,
        py::arg("batch_size") = 64, py::arg("seed") = 0, py::arg("lr") = 1e-3, py::arg("lambda1") = 10.0,
        py::arg("lambda2") = 0.4, py::arg("lambda3") = 1e-5,
        "Train an encoder against frozen endmembers. Returns (model, per-iteration loss).");

    m.def(
        "gradcheck",
        [](double h, double tol, std::uint64_t seed) {
            harness::GradcheckSuiteOptions o;
            o.h = h;
            o.tol = tol;
            o.seed = seed;
            const auto r = harness::run_gradcheck_suite(o);
            py::list entries;
            for (const auto& e : r.entries) entries.append(py::make_tuple(e.layer, e.target, e.report.max_rel_error));
            return py::make_tuple(r.passed, entries);
        },
        py::arg("h") = 1e-3, py::arg("tol") = 1e-4, py::arg("seed") = 0,
        "Finite-difference check of every layer. Returns (passed, [(layer, target, max_rel_error)]).");

    m.def("read_cube", [](const fs::path& p) { return from_cube(io::read_cube(p)); }, py::arg("path"));
    m.def("write_cube", [](const fs::path& p, const Array& a) { io::write_cube(p, to_cube(a)); }, py::arg("path"),
          py::arg("cube"));
    m.def("read_endmembers", [](const fs::path& p) { return from_endmembers(io::read_endmembers_any(p)); },
          py::arg("path"), "EMM1 file, or CSV when the extension is .csv.");
    m.def("write_endmembers", [](const fs::path& p, const Array& a) { io::write_endmembers(p, to_endmembers(a)); },
          py::arg("path"), py::arg("endmembers"));
    m.def("read_abundance", [](const fs::path& p) { return from_abundance(io::read_abundance(p)); }, py::arg("path"));
    m.def("write_abundance", [](const fs::path& p, const Array& a) { io::write_abundance(p, to_abundance(a)); },
          py::arg("path"), py::arg("abundances"));
}
