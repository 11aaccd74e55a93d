#include "dyrect/errors.hpp"
#include "dyrect/phantom.hpp"
#include "dyrect/projector.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

using namespace dyrect;

namespace {

// Exact line integral through piecewise-constant voxels: split the ray at
// every voxel boundary plane and add length * voxel value.
double siddon_integral(const ScalarField3& f, const Vec3& origin, const Vec3& dir)
{
    const VoxelGrid3& g = f.grid();
    const Vec3 lo = g.box_min();
    const int n[3] = {g.nx, g.ny, g.nz};
    std::vector<double> alphas;
    double a_min = -1e300, a_max = 1e300;
    for (int a = 0; a < 3; ++a) {
        const double hi = lo[a] + n[a] * g.voxel_size;
        if (std::abs(dir[a]) < 1e-15) {
            if (origin[a] < lo[a] || origin[a] > hi)
                return 0.0;
            continue;
        }
        const double t0 = (lo[a] - origin[a]) / dir[a];
        const double t1 = (hi - origin[a]) / dir[a];
        a_min = std::max(a_min, std::min(t0, t1));
        a_max = std::min(a_max, std::max(t0, t1));
        for (int p = 0; p <= n[a]; ++p)
            alphas.push_back((lo[a] + p * g.voxel_size - origin[a]) / dir[a]);
    }
    if (a_max <= a_min)
        return 0.0;
    alphas.push_back(a_min);
    alphas.push_back(a_max);
    std::sort(alphas.begin(), alphas.end());
    double sum = 0.0;
    for (std::size_t i = 1; i < alphas.size(); ++i) {
        const double s0 = std::max(alphas[i - 1], a_min);
        const double s1 = std::min(alphas[i], a_max);
        if (s1 <= s0)
            continue;
        const Vec3 mid = origin + 0.5 * (s0 + s1) * dir;
        int idx[3];
        for (int a = 0; a < 3; ++a)
            idx[a] = std::clamp(static_cast<int>(std::floor((mid[a] - lo[a]) / g.voxel_size)), 0, n[a] - 1);
        sum += (s1 - s0) * f(idx[0], idx[1], idx[2]);
    }
    return sum * 0.1; // mm -> cm
}

AcquisitionGeometry parallel_geometry(int rows, int cols, double pitch, int ppr, int n_views)
{
    return AcquisitionGeometry::circular(BeamType::parallel, rows, cols, pitch, ppr, n_views);
}

double max_abs_diff(std::span<const double> a, std::span<const double> b)
{
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

} // namespace

TEST_CASE("central parallel ray at angle 0 runs along the optical axis through the centre")
{
    const auto g = VoxelGrid3::centered(8, 8, 8, 1.0);
    const auto geom = parallel_geometry(9, 9, 1.0, 4, 4);
    const Ray r = trace_ray(geom, g, 0, 4, 4);
    CHECK(r.direction.isApprox(Vec3::UnitY()));
    CHECK(r.origin.norm() == doctest::Approx(0.0));
    CHECK(r.length() == doctest::Approx(8.0));

    // angle pi: antiparallel, same chord
    const Ray back = trace_ray(geom, g, 2, 4, 4);
    CHECK(back.direction.dot(r.direction) == doctest::Approx(-1.0));
    CHECK(back.length() == doctest::Approx(r.length()));
}

TEST_CASE("cone central ray through a centred cube has length equal to its side")
{
    const auto g = VoxelGrid3::centered(10, 10, 10, 0.7);
    auto geom = AcquisitionGeometry::circular(BeamType::cone, 11, 11, 0.5, 8, 8);
    geom.source_to_origin = 40.0;
    geom.origin_to_detector = 20.0;
    for (std::size_t v = 0; v < 8; v += 2) {
        const Ray r = trace_ray(geom, g, v, 5, 5);
        CHECK(r.length() == doctest::Approx(7.0));
    }
}

TEST_CASE("intersection lengths")
{
    const auto g = VoxelGrid3::centered(10, 10, 10, 1.0);
    const auto geom = parallel_geometry(11, 31, 1.0, 4, 4);
    const auto L = intersection_lengths(geom, g);
    CHECK(L[5 * 31 + 15] == doctest::Approx(1.0)); // 10 mm side = 1 cm
    CHECK(L[5 * 31 + 0] == 0.0);                   // misses

    // L equals the projection of an all-ones (1/cm) volume
    const auto ones = project_static(ScalarField3(g, 1.0), geom, {0.25, 1});
    for (std::size_t i = 0; i < L.size(); ++i)
        CHECK(ones.data()[i] == doctest::Approx(L[i]).epsilon(1e-9));
}

TEST_CASE("all-zero volume projects to zero")
{
    const auto g = VoxelGrid3::centered(6, 6, 6, 1.0);
    const auto geom = parallel_geometry(6, 9, 1.0, 12, 36);
    const auto p = forward_project(EventVolume::uniform(g, 0.0, 0.0, 1.0), geom);
    for (double v : p.data())
        CHECK(v == 0.0);
}

TEST_CASE("uniform cylinder chord")
{
    const double r = 2.5, mu = 0.8;
    const auto g = VoxelGrid3::centered(64, 64, 4, 0.1);
    const auto cyl = voxelize_tube(g, 0.0, r, mu, 8);
    const auto geom = parallel_geometry(3, 65, 0.1, 8, 8);
    const auto p = project_static(cyl, geom, {0.25, 1});
    const double expected = 2.0 * r * 0.1 * mu;
    for (std::size_t v = 0; v < 8; ++v)
        CHECK(p.at(v, 1, 32) == doctest::Approx(expected).epsilon(0.01));
}

TEST_CASE("static projection matches an exact voxel traversal oracle")
{
    const auto g = VoxelGrid3::centered(8, 8, 8, 1.0);
    ScalarField3 f(g);
    for (int k = 0; k < 8; ++k)
        for (int j = 0; j < 8; ++j)
            for (int i = 0; i < 8; ++i)
                f(i, j, k) = 1.0 + 0.05 * i - 0.03 * j + 0.02 * k;

    SUBCASE("parallel")
    {
        const auto geom = parallel_geometry(7, 11, 0.9, 7, 7);
        const auto p = project_static(f, geom, {0.25, 1});
        int checked = 0;
        for (std::size_t v = 0; v < geom.n_views(); ++v)
            for (int row = 0; row < geom.det_rows; ++row)
                for (int col = 0; col < geom.det_cols; ++col) {
                    const Ray ray = trace_ray(geom, g, v, row, col);
                    if (ray.length() < 2.0)
                        continue; // corner grazes are dominated by edge handling
                    const double oracle = siddon_integral(f, ray.origin, ray.direction);
                    CHECK(p.at(v, row, col) == doctest::Approx(oracle).epsilon(0.02));
                    ++checked;
                }
        CHECK(checked > 200);
    }
    SUBCASE("cone")
    {
        auto geom = AcquisitionGeometry::circular(BeamType::cone, 7, 11, 1.2, 5, 5);
        geom.source_to_origin = 30.0;
        geom.origin_to_detector = 15.0;
        const auto p = project_static(f, geom, {0.25, 1});
        for (std::size_t v = 0; v < geom.n_views(); ++v)
            for (int row = 0; row < geom.det_rows; ++row)
                for (int col = 0; col < geom.det_cols; ++col) {
                    const Ray ray = trace_ray(geom, g, v, row, col);
                    if (ray.length() < 2.0)
                        continue;
                    const double oracle = siddon_integral(f, ray.origin, ray.direction);
                    CHECK(p.at(v, row, col) == doctest::Approx(oracle).epsilon(0.02));
                }
    }
}

TEST_CASE("project_static is linear and equals forward_project for mu0 = mu1")
{
    const auto g = VoxelGrid3::centered(12, 12, 12, 0.5);
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.0, 2.0);
    ScalarField3 f(g);
    for (std::size_t i = 0; i < g.size(); ++i)
        f[i] = u(rng);
    auto geom = AcquisitionGeometry::circular(BeamType::cone, 10, 14, 0.6, 10, 30);
    geom.source_to_origin = 25.0;
    geom.origin_to_detector = 10.0;

    const auto p = project_static(f, geom);
    ScalarField3 scaled(g);
    for (std::size_t i = 0; i < g.size(); ++i)
        scaled[i] = 3.5 * f[i];
    const auto ps = project_static(scaled, geom);
    for (std::size_t i = 0; i < p.size(); ++i)
        CHECK(std::abs(ps.data()[i] - 3.5 * p.data()[i]) <= 1e-10 * std::max(1.0, std::abs(ps.data()[i])));

    ScalarField3 tstar(g);
    for (std::size_t i = 0; i < g.size(); ++i)
        tstar[i] = u(rng);
    const auto fp = forward_project(EventVolume(f, f, tstar), geom);
    CHECK(std::equal(fp.data().begin(), fp.data().end(), p.data().begin()));
}

TEST_CASE("halving the ray step converges")
{
    const auto g = VoxelGrid3::centered(24, 24, 4, 0.25);
    ScalarField3 f(g);
    for (int k = 0; k < g.nz; ++k)
        for (int j = 0; j < g.ny; ++j)
            for (int i = 0; i < g.nx; ++i) {
                const Vec3 x = g.voxel_center(i, j, k);
                f(i, j, k) = std::exp(-x.squaredNorm() / 4.0) + 0.3 * std::sin(1.3 * x.x());
            }
    const auto geom = parallel_geometry(2, 41, 0.17, 7, 7);
    std::vector<ProjectionSet> p;
    for (double h : {0.8, 0.4, 0.2, 0.1})
        p.push_back(project_static(f, geom, {h, 1}));
    const double d1 = max_abs_diff(p[0].data(), p[1].data());
    const double d2 = max_abs_diff(p[1].data(), p[2].data());
    const double d3 = max_abs_diff(p[2].data(), p[3].data());
    CHECK(d1 / d2 >= 1.5);
    CHECK(d2 / d3 >= 1.5);
}

TEST_CASE("static phantom repeats every rotation")
{
    const auto coarse = VoxelGrid3::centered(10, 10, 10, 0.5);
    FlowSpec s;
    s.grid = coarse;
    s.matrix_texture = 0.2;
    PoreRegion r;
    r.centers = {Vec3::Zero()};
    r.radii = {1.0};
    r.front_start_time = 10.0; // after the scan
    s.pore_regions = {r};
    s.t_begin = 10.0;
    s.t_end = 11.0;
    const auto vol = build_flow_phantom(s);
    const int ppr = 12;
    const auto geom = parallel_geometry(10, 14, 0.5, ppr, 3 * ppr); // no ray grazes the box faces
    const auto p = forward_project(vol, geom);
    for (std::size_t v = 0; v < static_cast<std::size_t>(2 * ppr); ++v)
        CHECK(max_abs_diff(p.view(v), p.view(v + ppr)) < 1e-9);
}

TEST_CASE("an event only changes rays that cross it, and only after t*")
{
    const auto g = VoxelGrid3::centered(12, 12, 12, 0.5);
    auto vol = EventVolume::uniform(g, 0.5, 0.5, 10.0);
    vol.mu1(6, 6, 6) = 2.0;
    vol.tstar(6, 6, 6) = 1.5;
    const int ppr = 16;
    const auto geom = parallel_geometry(12, 18, 0.5, ppr, 3 * ppr);
    const auto p = forward_project(vol, geom);
    const Vec3 event = g.voxel_center(6, 6, 6);
    for (std::size_t v = 0; v + ppr < geom.n_views(); ++v) {
        const double t1 = geom.views[v + ppr].time;
        for (int row = 0; row < geom.det_rows; ++row)
            for (int col = 0; col < geom.det_cols; ++col) {
                const Ray ray = trace_ray(geom, g, v, row, col);
                const Vec3 rel = event - ray.origin;
                const double dist = (rel - rel.dot(ray.direction) * ray.direction).norm();
                const double a = p.at(v, row, col), b = p.at(v + ppr, row, col);
                const bool crosses = dist < 2.0 * g.voxel_size * std::sqrt(3.0);
                // interpolated t* near the event lies between 1.5 and 10
                if (!crosses || t1 < 1.5)
                    CHECK(std::abs(a - b) < 1e-9);
            }
    }
}

TEST_CASE("affine motion model")
{
    Eigen::Matrix4d A = Eigen::Matrix4d::Identity();
    const Vec3 d(1.0, -2.0, 0.5);
    A.block<3, 1>(0, 3) = d;
    const AffineMotionModel m(A, 0.0, 1.0, 0.5);
    const Vec3 x(0.3, 0.2, -0.1);
    CHECK(apply_affine_motion(x, 0.5, m).isApprox(x));
    CHECK(apply_affine_motion(x, 1.5, m).isApprox(x + d));
    CHECK(apply_affine_motion(x, 1.0, m).isApprox(x + 0.5 * d));
    CHECK(m.apply_inverse(m.apply(x, 1.3), 1.3).isApprox(x));

    // rotation about z by 90 degrees: half exponent is 45 degrees
    Eigen::Matrix4d R = Eigen::Matrix4d::Identity();
    R(0, 0) = 0; R(0, 1) = -1; R(1, 0) = 1; R(1, 1) = 0;
    const AffineMotionModel rot(R, 0.0, 1.0, 0.0);
    const Vec3 half = rot.apply(Vec3(1, 0, 0), 0.5);
    CHECK(half.x() == doctest::Approx(std::sqrt(0.5)));
    CHECK(half.y() == doctest::Approx(std::sqrt(0.5)));

    CHECK_THROWS_AS(AffineMotionModel(Eigen::Matrix4d::Zero(), 0.0, 1.0, 0.0), DataError);
    Eigen::Matrix4d flip = Eigen::Matrix4d::Identity();
    flip(0, 0) = -1;
    CHECK_THROWS_AS(AffineMotionModel(flip, 0.0, 1.0, 0.0), DataError);
    CHECK_THROWS_AS(AffineMotionModel(A, 1.0, 1.0, 0.0), DataError);
}

TEST_CASE("forward projection under translation equals projecting the moved object")
{
    // The model maps ray sample points into the reference volume, so a +1 voxel
    // z translation at t = t_ref + 1 shows the object shifted by -1 voxel.
    const VoxelGrid3 g(8, 8, 12, 1.0, Vec3(-3.5, -3.5, -5.5));
    ScalarField3 f(g), shifted(g);
    for (int k = 2; k < 8; ++k)
        for (int j = 2; j < 6; ++j)
            for (int i = 2; i < 6; ++i) {
                f(i, j, k) = 1.0 + 0.1 * k;
                shifted(i, j, k - 1) = 1.0 + 0.1 * k;
            }
    Eigen::Matrix4d A = Eigen::Matrix4d::Identity();
    A(2, 3) = 1.0;
    const AffineMotionModel m(A, 0.0, 1.0, 0.0);
    const auto geom = parallel_geometry(14, 12, 1.0, 4, 8); // view 4 is at t = 1
    const auto moving = forward_project(EventVolume::from_static(f, 100.0), geom, m, {0.25, 1});
    const auto reference = project_static(shifted, geom, {0.25, 1});
    CHECK(max_abs_diff(moving.view(4), reference.view(4)) < 1e-9);
    CHECK(max_abs_diff(moving.view(0), project_static(f, geom, {0.25, 1}).view(0)) < 1e-9);
}

TEST_CASE("exterior normalisation")
{
    const auto g = VoxelGrid3::centered(48, 48, 4, 0.1);
    const auto crucible = voxelize_tube(g, 2.0, 2.3, 3.0, 4);
    const auto interior = voxelize_tube(g, 0.0, 1.5, 1.0, 4);
    ScalarField3 both(g);
    for (std::size_t i = 0; i < g.size(); ++i)
        both[i] = crucible[i] + interior[i];
    const auto geom = parallel_geometry(4, 60, 0.1, 12, 12);

    const auto measured = project_static(both, geom);
    const auto normalized = normalize_exterior(measured, crucible);
    const auto expected = project_static(interior, geom);
    CHECK(max_abs_diff(normalized.data(), expected.data()) < 1e-6);

    CHECK(max_abs_diff(normalize_exterior(measured, ScalarField3(g)).data(), measured.data()) == 0.0);
    const auto self = normalize_exterior(expected, interior);
    for (double v : self.data())
        CHECK(std::abs(v) < 1e-12);

    const auto other = parallel_geometry(4, 61, 0.1, 12, 12);
    CHECK_THROWS_AS(normalize_exterior(measured, ProjectionSet(other)), DataError);
}

TEST_CASE("threaded projection is bit-identical")
{
    const auto g = VoxelGrid3::centered(10, 10, 10, 0.5);
    auto vol = EventVolume::uniform(g, 0.3, 1.2, 1.5);
    const auto geom = parallel_geometry(10, 15, 0.5, 10, 30);
    const auto a = forward_project(vol, geom, std::nullopt, {0.5, 1});
    const auto b = forward_project(vol, geom, std::nullopt, {0.5, 4});
    CHECK(std::equal(a.data().begin(), a.data().end(), b.data().begin()));
}
