#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cstring>
#include <numbers>
#include <optional>

#include "onli/cli/commands.hpp"
#include "onli/eval/metrics.hpp"
#include "onli/field/fft.hpp"
#include "onli/field/io.hpp"
#include "onli/neuralop/checkpoint.hpp"
#include "onli/neuralop/model.hpp"
#include "onli/physics/inversion.hpp"
#include "onli/physics/solver.hpp"
#include "onli/preprocess/preprocess.hpp"
#include "onli/train/optim.hpp"

namespace py = pybind11;
using namespace onli;
using cd = std::complex<double>;

namespace {

// numpy (C, nx, ny, nz) or (nx, ny, nz) <-> Volume; spacing defaults to 1
template <class T>
Volume<T> to_volume(const py::array_t<T, py::array::c_style | py::array::forcecast>& a, double h = 1.0) {
    if (a.ndim() != 3 && a.ndim() != 4) throw SizingError("expected an array of shape (C, nx, ny, nz) or (nx, ny, nz)");
    const int off = a.ndim() == 4 ? 1 : 0;
    const int c = off ? static_cast<int>(a.shape(0)) : 1;
    const Grid3 g(static_cast<int>(a.shape(off)), static_cast<int>(a.shape(off + 1)), static_cast<int>(a.shape(off + 2)),
                  h, h, h);
    Volume<T> v(g, c);
    std::memcpy(v.data.data(), a.data(), v.data.size() * sizeof(T));
    return v;
}

template <class T>
py::array_t<T> to_array(const Volume<T>& v) {
    py::array_t<T> a({static_cast<py::ssize_t>(v.channels), static_cast<py::ssize_t>(v.grid.nx),
                      static_cast<py::ssize_t>(v.grid.ny), static_cast<py::ssize_t>(v.grid.nz)});
    std::memcpy(a.mutable_data(), v.data.data(), v.data.size() * sizeof(T));
    return a;
}

SegmentationMask to_mask(const py::array_t<std::uint16_t, py::array::c_style | py::array::forcecast>& a, int classes) {
    if (a.ndim() != 3) throw SizingError("mask must have shape (nx, ny, nz)");
    const Grid3 g(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)), static_cast<int>(a.shape(2)));
    std::vector<std::uint16_t> labels(a.data(), a.data() + a.size());
    SegmentationMask m(g, classes, std::move(labels));
    m.validate();
    return m;
}

py::array_t<std::uint16_t> mask_array(const SegmentationMask& m) {
    py::array_t<std::uint16_t> a({m.grid.nx, m.grid.ny, m.grid.nz});
    std::memcpy(a.mutable_data(), m.labels.data(), m.labels.size() * sizeof(std::uint16_t));
    return a;
}

BoundaryKind parse_face(const std::string& s) {
    if (s == "sponge") return BoundaryKind::sponge;
    if (s == "free") return BoundaryKind::free;
    throw ConfigError("face must be sponge or free, got '" + s + "'");
}

} // namespace

PYBIND11_MODULE(_onli, m) {
    m.doc() = "onli core bindings";

    auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
    py::register_exception<SizingError>(m, "SizingError", base.ptr());
    py::register_exception<GeometryError>(m, "GeometryError", base.ptr());
    py::register_exception<CapacityError>(m, "CapacityError", base.ptr());
    py::register_exception<ContractError>(m, "ContractError", base.ptr());
    py::register_exception<NumericalError>(m, "NumericalError", base.ptr());

    m.def("fftn", [](const py::array_t<cd, py::array::c_style | py::array::forcecast>& a, bool inverse) {
        return to_array(fftn(to_volume<cd>(a), inverse));
    }, py::arg("field"), py::arg("inverse") = false);
    m.def("naive_dftn", [](const py::array_t<cd, py::array::c_style | py::array::forcecast>& a, bool inverse) {
        return to_array(naive_dftn(to_volume<cd>(a), inverse));
    }, py::arg("field"), py::arg("inverse") = false);

    m.def("read_real_field", [](const std::filesystem::path& p) { return to_array(read_real_field(p)); });
    m.def("read_complex_field", [](const std::filesystem::path& p) { return to_array(read_complex_field(p)); });
    m.def("read_mask", [](const std::filesystem::path& p) {
        const auto mk = read_mask(p);
        return py::make_tuple(mask_array(mk), mk.classes);
    });
    m.def("write_real_field", [](const std::filesystem::path& p, const py::array_t<double, py::array::c_style | py::array::forcecast>& a,
                                 bool f32) { write_field(p, to_volume<double>(a), f32 ? FieldDtype::f32 : FieldDtype::f64); },
          py::arg("path"), py::arg("field"), py::arg("f32") = false);
    m.def("write_complex_field", [](const std::filesystem::path& p, const py::array_t<cd, py::array::c_style | py::array::forcecast>& a,
                                    bool f32) { write_field(p, to_volume<cd>(a), f32 ? FieldDtype::f32 : FieldDtype::f64); },
          py::arg("path"), py::arg("field"), py::arg("f32") = false);

    m.def("solve_forward", [](const py::array_t<cd, py::array::c_style | py::array::forcecast>& mu, double spacing,
                              double frequency_hz, double density, std::vector<std::string> faces, double tolerance) {
        SolverConfig c;
        c.omega = 2.0 * std::numbers::pi * frequency_hz;
        c.density = density;
        c.tolerance = tolerance;
        if (faces.size() != 5) throw ConfigError("faces needs five entries (x_high y_low y_high z_low z_high)");
        for (int i = 0; i < 5; ++i) c.faces[i] = parse_face(faces[i]);
        SolveReport rep;
        ComplexVolume u;
        {
            py::gil_scoped_release nogil;
            u = solve_forward(to_volume<cd>(mu, spacing), c, &rep);
        }
        return py::make_tuple(to_array(u), rep.method, rep.residual);
    }, py::arg("mu"), py::arg("spacing"), py::arg("frequency_hz"), py::arg("density") = 1000.0,
          py::arg("faces") = std::vector<std::string>(5, "sponge"), py::arg("tolerance") = 1e-8);

    m.def("curl", [](const py::array_t<cd, py::array::c_style | py::array::forcecast>& u, double spacing) {
        return to_array(curl(to_volume<cd>(u, spacing)));
    }, py::arg("u"), py::arg("spacing"));
    m.def("direct_inversion", [](const py::array_t<cd, py::array::c_style | py::array::forcecast>& u, double spacing,
                                 double frequency_hz, double density) {
        const auto r = direct_inversion(to_volume<cd>(u, spacing), density, 2.0 * std::numbers::pi * frequency_hz);
        py::array_t<bool> valid({r.mu.grid.nx, r.mu.grid.ny, r.mu.grid.nz});
        for (std::size_t i = 0; i < r.valid.size(); ++i) valid.mutable_data()[i] = r.valid[i] != 0;
        return py::make_tuple(to_array(r.mu), valid);
    }, py::arg("u"), py::arg("spacing"), py::arg("frequency_hz"), py::arg("density") = 1000.0);
    m.def("assemble_input", [](const py::array_t<cd, py::array::c_style | py::array::forcecast>& c, double f) {
        return to_array(assemble_input(to_volume<cd>(c), f));
    }, py::arg("curl"), py::arg("frequency_hz"));

    py::class_<ModelConfig>(m, "ModelConfig")
        .def(py::init<>())
        .def_readwrite("layers", &ModelConfig::layers)
        .def_readwrite("modes", &ModelConfig::modes)
        .def_readwrite("width", &ModelConfig::width)
        .def_readwrite("in_channels", &ModelConfig::in_channels)
        .def_readwrite("out_channels", &ModelConfig::out_channels)
        .def_readwrite("spade", &ModelConfig::spade)
        .def_readwrite("spade_hidden", &ModelConfig::spade_hidden)
        .def_readwrite("spade_classes", &ModelConfig::spade_classes)
        .def("__repr__", [](const ModelConfig& c) { return format_model_config(c); });

    py::class_<Model>(m, "Model")
        .def_static("init", &init_model, py::arg("config"), py::arg("seed") = 0)
        .def_static("load", [](const std::filesystem::path& p) { return load_checkpoint(p); })
        .def("save", [](const Model& md, const std::filesystem::path& p) { save_checkpoint(p, md); })
        .def_readonly("config", &Model::config)
        .def_property_readonly("parameter_count", [](const Model& md) { return md.params.size(); })
        .def("forward", [](const Model& md, const py::array_t<double, py::array::c_style | py::array::forcecast>& x,
                           const std::optional<py::array_t<std::uint16_t, py::array::c_style | py::array::forcecast>>& mask) {
            const RealVolume in = to_volume<double>(x);
            std::optional<SegmentationMask> mk;
            if (mask) mk = to_mask(*mask, md.config.spade_classes);
            RealVolume out;
            {
                py::gil_scoped_release nogil;
                out = model_forward(md, in, mk ? &*mk : nullptr);
            }
            return to_array(out);
        }, py::arg("x"), py::arg("mask") = py::none());

    m.def("relative_l2_loss", [](const py::array_t<double, py::array::c_style | py::array::forcecast>& p,
                                 const py::array_t<double, py::array::c_style | py::array::forcecast>& t) {
        return relative_l2_loss(to_volume<double>(p), to_volume<double>(t));
    });
    m.def("pearson_r", [](const std::vector<double>& x, const std::vector<double>& y) { return pearson_r(x, y); });
    m.def("ape", &ape);
    m.def("ssim3d", [](const py::array_t<double, py::array::c_style | py::array::forcecast>& a,
                       const py::array_t<double, py::array::c_style | py::array::forcecast>& b) {
        return ssim3d(to_volume<double>(a), to_volume<double>(b));
    }, py::arg("pred"), py::arg("reference"));
    m.def("fold_stats", [](const std::vector<double>& losses, const std::string& ci) {
        const FoldStats s = fold_stats(losses, parse_ci_method(ci));
        py::dict d;
        d["mean"] = s.mean;
        d["std"] = s.std;
        d["ci_low"] = s.ci_low;
        d["ci_high"] = s.ci_high;
        return d;
    }, py::arg("losses"), py::arg("ci") = "normal");
    m.def("paired_t_test", [](const std::vector<double>& a, const std::vector<double>& b) {
        const TTest t = paired_t_test(a, b);
        return py::make_tuple(t.t, t.p, t.df);
    });

    m.def("run_cli", [](std::vector<std::string> args) {
        args.insert(args.begin(), "onli");
        std::vector<char*> argv;
        for (auto& a : args) argv.push_back(a.data());
        return run_cli(static_cast<int>(argv.size()), argv.data());
    }, py::arg("args"));
}
