#include "dyrect/core.hpp"
#include "dyrect/errors.hpp"

#include <doctest.h>

#include <random>

using namespace dyrect;

TEST_CASE("world_to_index identity and scaling")
{
    const VoxelGrid3 unit(4, 4, 4, 1.0, Vec3::Zero());
    CHECK(world_to_index(unit, Vec3::Zero()).isApprox(Vec3::Zero()));

    const VoxelGrid3 twice(4, 4, 4, 2.0, Vec3::Zero());
    const Vec3 idx = world_to_index(twice, Vec3(4, 2, 0));
    CHECK(idx.x() == doctest::Approx(2.0));
    CHECK(idx.y() == doctest::Approx(1.0));
    CHECK(idx.z() == doctest::Approx(0.0));
}

TEST_CASE("world/index mappings round-trip")
{
    const VoxelGrid3 g(7, 5, 9, 0.37, Vec3(-1.2, 3.4, 0.5));
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-20.0, 20.0);
    for (int i = 0; i < 1000; ++i) {
        const Vec3 x(u(rng), u(rng), u(rng));
        const Vec3 back = index_to_world(g, world_to_index(g, x));
        CHECK((back - x).norm() <= 1e-12 * std::max(1.0, x.norm()));
    }
}

TEST_CASE("centered grid box is symmetric")
{
    const auto g = VoxelGrid3::centered(8, 6, 4, 0.5);
    CHECK((g.box_min() + g.box_max()).norm() < 1e-12);
    CHECK(g.box_max().x() == doctest::Approx(2.0));
    CHECK(g.voxel_center(g.linear_index(3, 2, 1)).isApprox(g.voxel_center(3, 2, 1)));
}

TEST_CASE("grid rejects bad dimensions")
{
    CHECK_THROWS_AS(VoxelGrid3(0, 1, 1, 1.0, Vec3::Zero()), DataError);
    CHECK_THROWS_AS(VoxelGrid3(1, 1, 1, -1.0, Vec3::Zero()), DataError);
}

TEST_CASE("sample_event_volume step semantics")
{
    const auto g = VoxelGrid3::centered(4, 4, 4, 1.0);

    SUBCASE("before the transition gives mu0")
    {
        // Times in projection-index units for this case.
        const auto vol = EventVolume::uniform(g, 0.6, 0.9, 768.0);
        CHECK(sample_event_volume(vol, Vec3::Zero(), 400.0) == doctest::Approx(0.6));
    }
    SUBCASE("degenerate step is constant")
    {
        const auto vol = EventVolume::uniform(g, 0.7, 0.7, 1.5);
        for (double t : {-5.0, 0.0, 1.5, 2.0, 100.0})
            CHECK(sample_event_volume(vol, Vec3::Zero(), t) == doctest::Approx(0.7));
    }
    SUBCASE("t equal to t* gives mu1")
    {
        const auto vol = EventVolume::uniform(g, 0.2, 1.1, 1.25);
        CHECK(sample_event_volume(vol, Vec3::Zero(), 1.25) == 1.1);
        CHECK(sample_event_volume(vol, Vec3::Zero(), std::nextafter(1.25, 0.0)) == 0.2);
    }
    SUBCASE("vacuum outside the grid")
    {
        const auto vol = EventVolume::uniform(g, 1.0, 1.0, 1.0);
        CHECK(sample_event_volume(vol, Vec3(10, 0, 0), 0.0) == 0.0);
    }
}

TEST_CASE("interpolation happens before the step")
{
    // Two voxels along x with different t*; halfway between them the
    // interpolated t* is the mean, and the step is taken on that value.
    const VoxelGrid3 g(2, 1, 1, 1.0, Vec3::Zero());
    ScalarField3 mu0(g, 0.0), mu1(g, 1.0), tstar(g);
    tstar[0] = 1.0;
    tstar[1] = 2.0;
    const EventVolume vol(mu0, mu1, tstar);
    CHECK(sample_event_volume(vol, Vec3(0.5, 0, 0), 1.49) == 0.0);
    CHECK(sample_event_volume(vol, Vec3(0.5, 0, 0), 1.5) == 1.0);
}

TEST_CASE("sample_event_volume has at most one discontinuity in t")
{
    const auto g = VoxelGrid3::centered(5, 5, 5, 1.0);
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(0.0, 3.0);
    ScalarField3 mu0(g), mu1(g), tstar(g);
    for (std::size_t i = 0; i < g.size(); ++i) {
        mu0[i] = u(rng);
        mu1[i] = u(rng);
        tstar[i] = u(rng);
    }
    const EventVolume vol(mu0, mu1, tstar);
    for (int trial = 0; trial < 50; ++trial) {
        const Vec3 x(u(rng) - 1.5, u(rng) - 1.5, u(rng) - 1.5);
        int jumps = 0;
        double prev = sample_event_volume(vol, x, -1.0);
        for (int s = 1; s <= 400; ++s) {
            const double v = sample_event_volume(vol, x, -1.0 + s * 0.0125);
            jumps += v != prev;
            prev = v;
        }
        CHECK(jumps <= 1);
    }
}

TEST_CASE("t* below the scan start makes the volume time independent")
{
    const auto g = VoxelGrid3::centered(4, 4, 4, 1.0);
    const auto vol = EventVolume::uniform(g, 0.3, 0.8, -1.0);
    for (double t : {0.0, 0.5, 2.9})
        CHECK(sample_event_volume(vol, Vec3(0.2, -0.4, 0.1), t) == 0.8);
}

TEST_CASE("trilinear sampling reproduces linear fields")
{
    const VoxelGrid3 g(5, 5, 5, 0.5, Vec3(-1, -1, -1));
    ScalarField3 f(g);
    for (int k = 0; k < 5; ++k)
        for (int j = 0; j < 5; ++j)
            for (int i = 0; i < 5; ++i) {
                const Vec3 x = g.voxel_center(i, j, k);
                f(i, j, k) = 1.0 + 2.0 * x.x() - x.y() + 0.5 * x.z();
            }
    const Vec3 q(0.13, -0.42, 0.77);
    CHECK(f.sample(q) == doctest::Approx(1.0 + 2.0 * q.x() - q.y() + 0.5 * q.z()));
}

TEST_CASE("field validation")
{
    const auto g = VoxelGrid3::centered(2, 2, 2, 1.0);
    ScalarField3 f(g);
    CHECK_NOTHROW(f.require_finite());
    f[3] = std::nan("");
    CHECK_THROWS_AS(f.require_finite(), DataError);
    CHECK_THROWS_AS(ScalarField3(g, std::vector<double>(3)), DataError);
}

TEST_CASE("circular geometry timing")
{
    const auto g = AcquisitionGeometry::circular(BeamType::parallel, 4, 6, 1.0, 180, 540);
    CHECK(g.n_views() == 540);
    CHECK(g.time_per_view() == doctest::Approx(1.0 / 180));
    CHECK(g.scan_duration() == doctest::Approx(3.0));
    CHECK_NOTHROW(g.require_event_span());

    const auto short_scan = AcquisitionGeometry::circular(BeamType::parallel, 4, 6, 1.0, 180, 500);
    CHECK_THROWS_AS(short_scan.require_event_span(), DataError);
}

TEST_CASE("geometry rejects non-monotone times")
{
    auto g = AcquisitionGeometry::circular(BeamType::parallel, 2, 2, 1.0, 4, 8);
    g.views[3].time = g.views[2].time;
    CHECK_THROWS_AS(g.validate(), DataError);
}

TEST_CASE("projection set layout")
{
    const auto g = AcquisitionGeometry::circular(BeamType::parallel, 2, 3, 1.0, 4, 3);
    ProjectionSet p(g);
    CHECK(p.size() == 18);
    p.at(2, 1, 0) = 5.0;
    CHECK(p.view(2)[3] == 5.0);
}

TEST_CASE("recon params validation")
{
    ReconParams p;
    CHECK_NOTHROW(p.validate());
    p.lambda_t = 0.0;
    CHECK_THROWS_AS(p.validate(), DataError);
    p = {};
    p.lambda_0 = 1.5;
    CHECK_THROWS_AS(p.validate(), DataError);
}
