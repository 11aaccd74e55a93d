#include "dyrect/analysis.hpp"
#include "dyrect/baseline.hpp"
#include "dyrect/config.hpp"
#include "dyrect/errors.hpp"
#include "dyrect/event_reconstruction.hpp"
#include "dyrect/io.hpp"
#include "dyrect/pipeline.hpp"
#include "dyrect/projector.hpp"

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <algorithm>
#include <optional>

namespace py = pybind11;
using namespace dyrect;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

// Volumes cross the boundary as (nz, ny, nx) arrays, x fastest.
Array to_numpy(const ScalarField3& f)
{
    const VoxelGrid3& g = f.grid();
    Array a({g.nz, g.ny, g.nx});
    std::copy(f.storage().begin(), f.storage().end(), a.mutable_data());
    return a;
}

ScalarField3 to_field(const VoxelGrid3& g, const Array& a)
{
    if (a.ndim() != 3 || a.shape(0) != g.nz || a.shape(1) != g.ny || a.shape(2) != g.nx)
        throw DataError("volume array must have shape (nz, ny, nx) of the grid");
    return ScalarField3(g, std::vector<double>(a.data(), a.data() + a.size()));
}

Array to_numpy(const ProjectionSet& p)
{
    Array a({static_cast<py::ssize_t>(p.n_views()), static_cast<py::ssize_t>(p.rows()),
             static_cast<py::ssize_t>(p.cols())});
    std::copy(p.data().begin(), p.data().end(), a.mutable_data());
    return a;
}

ProjectionSet to_projections(const AcquisitionGeometry& g, const Array& a)
{
    if (a.ndim() != 3 || a.shape(0) != static_cast<py::ssize_t>(g.n_views()) ||
        a.shape(1) != g.det_rows || a.shape(2) != g.det_cols)
        throw DataError("projection array must have shape (n_views, det_rows, det_cols)");
    return ProjectionSet(g, std::vector<double>(a.data(), a.data() + a.size()));
}

py::dict to_dict(const MetricsReport& r)
{
    py::dict d;
    for (const auto& [k, v] : r.entries()) {
        char* end = nullptr;
        const double x = std::strtod(v.c_str(), &end);
        if (end != v.c_str() && *end == '\0')
            d[py::str(k)] = x;
        else
            d[py::str(k)] = v;
    }
    return d;
}

} // namespace

PYBIND11_MODULE(_dyrect, m)
{
    m.doc() = "Event-based 4D CT reconstruction";
    m.attr("__version__") = DYRECT_VERSION;

    py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
    py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);

    py::class_<VoxelGrid3>(m, "VoxelGrid3")
        .def(py::init([](int nx, int ny, int nz, double voxel_size, std::array<double, 3> origin) {
                 return VoxelGrid3(nx, ny, nz, voxel_size, Vec3(origin[0], origin[1], origin[2]));
             }),
             py::arg("nx"), py::arg("ny"), py::arg("nz"), py::arg("voxel_size"), py::arg("origin"))
        .def_static("centered", &VoxelGrid3::centered, py::arg("nx"), py::arg("ny"), py::arg("nz"),
                    py::arg("voxel_size"))
        .def_readonly("nx", &VoxelGrid3::nx)
        .def_readonly("ny", &VoxelGrid3::ny)
        .def_readonly("nz", &VoxelGrid3::nz)
        .def_readonly("voxel_size", &VoxelGrid3::voxel_size)
        .def_property_readonly("origin",
                               [](const VoxelGrid3& g) {
                                   return std::array<double, 3>{g.origin.x(), g.origin.y(), g.origin.z()};
                               })
        .def_property_readonly("shape", [](const VoxelGrid3& g) { return py::make_tuple(g.nz, g.ny, g.nx); })
        .def("__eq__", &VoxelGrid3::operator==);

    py::enum_<BeamType>(m, "BeamType").value("parallel", BeamType::parallel).value("cone", BeamType::cone);

    py::class_<AcquisitionGeometry>(m, "AcquisitionGeometry")
        .def_static(
            "circular",
            [](BeamType beam, int rows, int cols, double pitch, int ppr, int n_views, double start_angle,
               double start_time, double source_to_origin, double origin_to_detector) {
                auto g = AcquisitionGeometry::circular(beam, rows, cols, pitch, ppr, n_views, start_angle,
                                                       start_time);
                g.source_to_origin = source_to_origin;
                g.origin_to_detector = origin_to_detector;
                g.validate();
                return g;
            },
            py::arg("beam"), py::arg("det_rows"), py::arg("det_cols"), py::arg("pixel_pitch"),
            py::arg("projections_per_rotation"), py::arg("n_views"), py::arg("start_angle") = 0.0,
            py::arg("start_time") = 0.0, py::arg("source_to_origin") = 0.0,
            py::arg("origin_to_detector") = 0.0)
        .def_readonly("beam", &AcquisitionGeometry::beam)
        .def_readonly("det_rows", &AcquisitionGeometry::det_rows)
        .def_readonly("det_cols", &AcquisitionGeometry::det_cols)
        .def_readonly("pixel_pitch", &AcquisitionGeometry::pixel_pitch)
        .def_readonly("source_to_origin", &AcquisitionGeometry::source_to_origin)
        .def_readonly("origin_to_detector", &AcquisitionGeometry::origin_to_detector)
        .def_readonly("projections_per_rotation", &AcquisitionGeometry::projections_per_rotation)
        .def_property_readonly("n_views", &AcquisitionGeometry::n_views)
        .def_property_readonly("times",
                               [](const AcquisitionGeometry& g) {
                                   std::vector<double> t;
                                   for (const auto& v : g.views)
                                       t.push_back(v.time);
                                   return t;
                               })
        .def_property_readonly("angles", [](const AcquisitionGeometry& g) {
            std::vector<double> a;
            for (const auto& v : g.views)
                a.push_back(v.angle);
            return a;
        });

    py::class_<EventVolume>(m, "EventVolume")
        .def(py::init([](const VoxelGrid3& g, const Array& mu0, const Array& mu1, const Array& tstar) {
                 return EventVolume(to_field(g, mu0), to_field(g, mu1), to_field(g, tstar));
             }),
             py::arg("grid"), py::arg("mu0"), py::arg("mu1"), py::arg("tstar"))
        .def_static("uniform", &EventVolume::uniform, py::arg("grid"), py::arg("mu0"), py::arg("mu1"),
                    py::arg("tstar"))
        .def_property_readonly("grid", &EventVolume::grid)
        .def_property_readonly("mu0", [](const EventVolume& v) { return to_numpy(v.mu0); })
        .def_property_readonly("mu1", [](const EventVolume& v) { return to_numpy(v.mu1); })
        .def_property_readonly("tstar", [](const EventVolume& v) { return to_numpy(v.tstar); });

    py::class_<ProjectionSet>(m, "ProjectionSet")
        .def(py::init(&to_projections), py::arg("geometry"), py::arg("data"))
        .def_property_readonly("geometry", &ProjectionSet::geometry)
        .def_property_readonly("data", [](const ProjectionSet& p) { return to_numpy(p); });

    py::class_<ReconParams>(m, "ReconParams")
        .def(py::init<>())
        .def_readwrite("lambda_t", &ReconParams::lambda_t)
        .def_readwrite("lambda_0", &ReconParams::lambda_0)
        .def_readwrite("lambda_1", &ReconParams::lambda_1)
        .def_readwrite("lambda_delta", &ReconParams::lambda_delta)
        .def_readwrite("lambda_mu", &ReconParams::lambda_mu)
        .def_readwrite("epsilon", &ReconParams::epsilon)
        .def_readwrite("n_iterations", &ReconParams::n_iterations)
        .def_readwrite("n_subsets", &ReconParams::n_subsets)
        .def_readwrite("rng_seed", &ReconParams::rng_seed)
        .def_readwrite("use_weights", &ReconParams::use_weights)
        .def_readwrite("weight_floor", &ReconParams::weight_floor)
        .def_readwrite("ray_step", &ReconParams::ray_step)
        .def_readwrite("fix_attenuations", &ReconParams::fix_attenuations)
        .def_readwrite("threads", &ReconParams::threads);

    m.def(
        "forward_project",
        [](const EventVolume& vol, const AcquisitionGeometry& g, double ray_step, int threads) {
            return forward_project(vol, g, std::nullopt, {ray_step, threads});
        },
        py::arg("volume"), py::arg("geometry"), py::arg("ray_step") = 0.5, py::arg("threads") = 1,
        py::call_guard<py::gil_scoped_release>());

    m.def(
        "project_static",
        [](const VoxelGrid3& grid, const Array& field, const AcquisitionGeometry& g, double ray_step,
           int threads) {
            const ScalarField3 f = to_field(grid, field);
            py::gil_scoped_release release;
            return project_static(f, g, {ray_step, threads});
        },
        py::arg("grid"), py::arg("field"), py::arg("geometry"), py::arg("ray_step") = 0.5,
        py::arg("threads") = 1);

    m.def(
        "reconstruct_dyrect",
        [](const ProjectionSet& measured, const ReconParams& params, const EventVolume& init) {
            DyrectResult r = reconstruct_dyrect(measured, params, init);
            return py::make_tuple(std::move(r.volume), r.residuals);
        },
        py::arg("measured"), py::arg("params"), py::arg("init"),
        "Returns (EventVolume, per-iteration mean squared projection error).");

    m.def(
        "reconstruct_sirt",
        [](const ProjectionSet& measured, const VoxelGrid3& grid, int n_iterations, double relax,
           int n_subsets, std::uint64_t seed) {
            std::vector<std::size_t> views(measured.n_views());
            for (std::size_t i = 0; i < views.size(); ++i)
                views[i] = i;
            SirtOptions o;
            o.n_subsets = n_subsets;
            o.rng_seed = seed;
            const SirtResult r = reconstruct_sirt(measured, views, grid, n_iterations, relax, o);
            return py::make_tuple(to_numpy(r.volume), r.residuals);
        },
        py::arg("measured"), py::arg("grid"), py::arg("n_iterations") = 10, py::arg("relax") = 1.0,
        py::arg("n_subsets") = 1, py::arg("seed") = 0);

    m.def(
        "mae_transition",
        [](const EventVolume& gt, const EventVolume& rec, double contrast_fraction) {
            return mae_transition(gt, rec, {contrast_fraction});
        },
        py::arg("ground_truth"), py::arg("reconstruction"), py::arg("contrast_fraction") = 0.5);

    m.def("difference_sinogram", &difference_sinogram, py::arg("measured"));
    m.def("detect_event_time", &detect_event_time, py::arg("difference"), py::arg("relative_threshold") = 0.1);

    m.def("read_event_volume", &read_event_volume, py::arg("stem"));
    m.def("write_event_volume", &write_event_volume, py::arg("stem"), py::arg("volume"));
    m.def("read_projections", &read_projections, py::arg("stem"));
    m.def("write_projections", &write_projections, py::arg("stem"), py::arg("projections"));

    m.def(
        "run_pipeline",
        [](const std::filesystem::path& config, std::optional<std::filesystem::path> output_dir,
           std::optional<std::uint64_t> seed, std::optional<int> threads) {
            RunConfig c = RunConfig::load(config);
            if (output_dir)
                c.output_dir = *output_dir;
            if (seed)
                c.seed = *seed;
            if (threads)
                c.threads = *threads;
            c.validate();
            MetricsReport r;
            {
                py::gil_scoped_release release;
                r = run_pipeline(c);
            }
            return to_dict(r);
        },
        py::arg("config"), py::arg("output_dir") = py::none(), py::arg("seed") = py::none(),
        py::arg("threads") = py::none(), "Runs every enabled stage and returns the metrics.");
}
