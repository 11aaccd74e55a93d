#include "dyrect/errors.hpp"
#include "dyrect/io.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <random>

using namespace dyrect;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name)
{
    const fs::path dir = fs::temp_directory_path() / "dyrect_test_io";
    fs::create_directories(dir);
    return dir / name;
}

std::vector<unsigned char> bytes_of(const fs::path& p)
{
    std::ifstream is(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

} // namespace

TEST_CASE("volume round trip is exact for float-representable values")
{
    const VoxelGrid3 g(5, 4, 3, 0.25, Vec3(-1.0, 0.5, 2.0));
    ScalarField3 f(g);
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<float> u(-3.0f, 3.0f);
    for (std::size_t i = 0; i < f.size(); ++i)
        f[i] = u(rng);
    const auto stem = scratch("vol");
    write_volume(stem, f);
    const auto back = read_volume(stem);
    CHECK(back.grid() == g);
    CHECK(back.storage() == f.storage());
}

TEST_CASE("raw layout is little-endian float32")
{
    const VoxelGrid3 g(1, 1, 1, 1.0, Vec3::Zero());
    const auto stem = scratch("one");
    write_volume(stem, ScalarField3(g, 1.0));
    const auto b = bytes_of(with_suffix(stem, ".raw"));
    REQUIRE(b.size() == 4);
    CHECK(b[0] == 0x00);
    CHECK(b[1] == 0x00);
    CHECK(b[2] == 0x80);
    CHECK(b[3] == 0x3F);
}

TEST_CASE("truncated and corrupt volumes are rejected")
{
    const auto g = VoxelGrid3::centered(3, 3, 3, 1.0);
    const auto stem = scratch("trunc");
    write_volume(stem, ScalarField3(g, 2.0));
    fs::resize_file(with_suffix(stem, ".raw"), 20);
    CHECK_THROWS_AS(read_volume(stem), DataError);

    ScalarField3 bad(g, 1.0);
    bad[5] = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(write_volume(scratch("inf"), bad), DataError);

    CHECK_THROWS_AS(read_volume(scratch("missing")), DataError);
}

TEST_CASE("event volume round trip")
{
    const auto g = VoxelGrid3::centered(3, 2, 2, 0.5);
    auto vol = EventVolume::uniform(g, 0.5, 1.25, 1.75);
    vol.tstar[3] = 2.5;
    const auto stem = scratch("event");
    write_event_volume(stem, vol);
    const auto back = read_event_volume(stem);
    CHECK(back.mu0.storage() == vol.mu0.storage());
    CHECK(back.mu1.storage() == vol.mu1.storage());
    CHECK(back.tstar.storage() == vol.tstar.storage());
    CHECK(read_key_value_file(with_suffix(stem, "_tstar.meta")).at("unit") == "rotations");
}

TEST_CASE("projection round trip keeps geometry and view table")
{
    auto g = AcquisitionGeometry::circular(BeamType::cone, 2, 2, 0.5, 3, 3);
    g.source_to_origin = 100.0;
    g.origin_to_detector = 50.0;
    ProjectionSet p(g);
    for (std::size_t i = 0; i < p.size(); ++i)
        p.data()[i] = 0.5 * static_cast<double>(i);
    const auto stem = scratch("proj");
    write_projections(stem, p);
    CHECK(fs::file_size(with_suffix(stem, ".raw")) == 48);

    const auto back = read_projections(stem);
    const auto& bg = back.geometry();
    CHECK(bg.beam == BeamType::cone);
    CHECK(bg.source_to_origin == 100.0);
    CHECK(bg.n_views() == 3);
    for (std::size_t v = 0; v < 3; ++v) {
        CHECK(bg.views[v].angle == g.views[v].angle);
        CHECK(bg.views[v].time == g.views[v].time);
    }
    CHECK(std::vector<double>(back.data().begin(), back.data().end()) ==
          std::vector<double>(p.data().begin(), p.data().end()));
}

TEST_CASE("projection reader validates the view table")
{
    const auto g = AcquisitionGeometry::circular(BeamType::parallel, 1, 2, 1.0, 4, 4);
    const auto stem = scratch("views");
    write_projections(stem, ProjectionSet(g));

    const auto table = with_suffix(stem, "_views.csv");
    {
        std::ofstream os(table);
        os << "index,angle_rad,time_rotations\n0,0,0\n1,0.1,0.5\n2,0.2,0.25\n3,0.3,0.75\n";
    }
    CHECK_THROWS_AS(read_projections(stem), DataError);

    fs::remove(table);
    CHECK_THROWS_AS(read_projections(stem), DataError);
}

TEST_CASE("non-finite projection values are rejected on read")
{
    const auto g = AcquisitionGeometry::circular(BeamType::parallel, 1, 1, 1.0, 2, 2);
    const auto stem = scratch("nan");
    write_projections(stem, ProjectionSet(g));
    {
        std::fstream f(with_suffix(stem, ".raw"), std::ios::in | std::ios::out | std::ios::binary);
        const unsigned char nan[4] = {0x00, 0x00, 0xC0, 0x7F};
        f.write(reinterpret_cast<const char*>(nan), 4);
    }
    CHECK_THROWS_AS(read_projections(stem), DataError);
}

TEST_CASE("key-value parsing")
{
    const auto kv = parse_key_values("# comment\n\na = 1\nb=two words \n", "test");
    CHECK(kv.at("a") == "1");
    CHECK(kv.at("b") == "two words");
    CHECK_THROWS_AS(parse_key_values("a=1\na=2\n", "test"), DataError);
    CHECK_THROWS_AS(parse_key_values("no equals sign\n", "test"), DataError);
}
