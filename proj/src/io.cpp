#include "dyrect/io.hpp"
#include "dyrect/errors.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace dyrect {

namespace fs = std::filesystem;

namespace {

std::string trim(const std::string& s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos)
        return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::string fmt(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

double parse_double(const std::string& s, const std::string& what)
{
    double v = 0.0;
    const auto t = trim(s);
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc{} || ptr != t.data() + t.size() || t.empty())
        throw DataError("cannot parse number '" + s + "' for " + what);
    return v;
}

long parse_long(const std::string& s, const std::string& what)
{
    long v = 0;
    const auto t = trim(s);
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc{} || ptr != t.data() + t.size() || t.empty())
        throw DataError("cannot parse integer '" + s + "' for " + what);
    return v;
}

const std::string& require_key(const std::map<std::string, std::string>& kv,
                               const std::string& key, const fs::path& file)
{
    const auto it = kv.find(key);
    if (it == kv.end())
        throw DataError(file.string() + ": missing key '" + key + "'");
    return it->second;
}

Vec3 parse_vec3(const std::string& s, const std::string& what)
{
    Vec3 v;
    std::stringstream ss(s);
    std::string part;
    int n = 0;
    while (std::getline(ss, part, ',')) {
        if (n == 3)
            throw DataError("expected three components for " + what);
        v[n++] = parse_double(part, what);
    }
    if (n != 3)
        throw DataError("expected three components for " + what);
    return v;
}

void write_text(const fs::path& path, const std::string& text)
{
    std::ofstream os(path, std::ios::binary);
    if (!os)
        throw DataError("cannot open " + path.string() + " for writing");
    os << text;
    if (!os)
        throw DataError("failed writing " + path.string());
}

void write_raw(const fs::path& path, std::span<const double> values)
{
    std::vector<unsigned char> bytes(values.size() * 4);
    for (std::size_t i = 0; i < values.size(); ++i) {
        const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(values[i]));
        for (int b = 0; b < 4; ++b)
            bytes[4 * i + b] = static_cast<unsigned char>(bits >> (8 * b));
    }
    std::ofstream os(path, std::ios::binary);
    if (!os)
        throw DataError("cannot open " + path.string() + " for writing");
    os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!os)
        throw DataError("failed writing " + path.string());
}

std::vector<double> read_raw(const fs::path& path, std::size_t count)
{
    std::error_code ec;
    const auto size = fs::file_size(path, ec);
    if (ec)
        throw DataError("cannot stat " + path.string());
    if (size != count * 4)
        throw DataError(path.string() + ": size mismatch, expected " + std::to_string(count * 4) +
                        " bytes, found " + std::to_string(size));
    std::vector<unsigned char> bytes(size);
    std::ifstream is(path, std::ios::binary);
    is.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size));
    if (!is)
        throw DataError("failed reading " + path.string());
    std::vector<double> values(count);
    for (std::size_t i = 0; i < count; ++i) {
        std::uint32_t bits = 0;
        for (int b = 0; b < 4; ++b)
            bits |= static_cast<std::uint32_t>(bytes[4 * i + b]) << (8 * b);
        const float f = std::bit_cast<float>(bits);
        if (!std::isfinite(f))
            throw DataError(path.string() + ": non-finite value at index " + std::to_string(i));
        values[i] = f;
    }
    return values;
}

} // namespace

fs::path with_suffix(const fs::path& stem, const std::string& suffix)
{
    return fs::path(stem.string() + suffix);
}

std::map<std::string, std::string> parse_key_values(const std::string& text, const std::string& source)
{
    std::map<std::string, std::string> kv;
    std::stringstream ss(text);
    std::string line;
    int lineno = 0;
    while (std::getline(ss, line)) {
        ++lineno;
        const auto t = trim(line);
        if (t.empty() || t[0] == '#')
            continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            throw DataError(source + ":" + std::to_string(lineno) + ": expected key=value");
        const auto key = trim(t.substr(0, eq));
        if (key.empty())
            throw DataError(source + ":" + std::to_string(lineno) + ": empty key");
        if (!kv.emplace(key, trim(t.substr(eq + 1))).second)
            throw DataError(source + ":" + std::to_string(lineno) + ": duplicate key '" + key + "'");
    }
    return kv;
}

std::map<std::string, std::string> read_key_value_file(const fs::path& path)
{
    std::ifstream is(path);
    if (!is)
        throw DataError("cannot open " + path.string());
    std::stringstream ss;
    ss << is.rdbuf();
    return parse_key_values(ss.str(), path.string());
}

void write_volume(const fs::path& stem, const ScalarField3& field, const std::string& unit)
{
    field.require_finite();
    const VoxelGrid3& g = field.grid();
    std::ostringstream meta;
    meta << "nx=" << g.nx << "\nny=" << g.ny << "\nnz=" << g.nz << "\nvoxel_size_mm="
         << fmt(g.voxel_size) << "\norigin_mm=" << fmt(g.origin.x()) << ',' << fmt(g.origin.y())
         << ',' << fmt(g.origin.z()) << "\nunit=" << unit << '\n';
    write_raw(with_suffix(stem, ".raw"), field.values());
    write_text(with_suffix(stem, ".meta"), meta.str());
}

ScalarField3 read_volume(const fs::path& stem)
{
    const auto meta_path = with_suffix(stem, ".meta");
    const auto kv = read_key_value_file(meta_path);
    const VoxelGrid3 grid(static_cast<int>(parse_long(require_key(kv, "nx", meta_path), "nx")),
                          static_cast<int>(parse_long(require_key(kv, "ny", meta_path), "ny")),
                          static_cast<int>(parse_long(require_key(kv, "nz", meta_path), "nz")),
                          parse_double(require_key(kv, "voxel_size_mm", meta_path), "voxel_size_mm"),
                          parse_vec3(require_key(kv, "origin_mm", meta_path), "origin_mm"));
    require_key(kv, "unit", meta_path);
    return ScalarField3(grid, read_raw(with_suffix(stem, ".raw"), grid.size()));
}

void write_event_volume(const fs::path& stem, const EventVolume& vol)
{
    vol.validate();
    write_volume(with_suffix(stem, "_mu0"), vol.mu0);
    write_volume(with_suffix(stem, "_mu1"), vol.mu1);
    write_volume(with_suffix(stem, "_tstar"), vol.tstar, "rotations");
}

EventVolume read_event_volume(const fs::path& stem)
{
    EventVolume vol(read_volume(with_suffix(stem, "_mu0")), read_volume(with_suffix(stem, "_mu1")),
                    read_volume(with_suffix(stem, "_tstar")));
    vol.validate();
    return vol;
}

void write_projections(const fs::path& stem, const ProjectionSet& projections)
{
    projections.require_finite();
    const AcquisitionGeometry& g = projections.geometry();
    g.validate();
    std::ostringstream meta;
    meta << "beam=" << (g.beam == BeamType::cone ? "cone" : "parallel")
         << "\nsource_to_origin_mm=" << fmt(g.source_to_origin)
         << "\norigin_to_detector_mm=" << fmt(g.origin_to_detector) << "\ndet_rows=" << g.det_rows
         << "\ndet_cols=" << g.det_cols << "\npixel_pitch_mm=" << fmt(g.pixel_pitch)
         << "\nrotation_period=" << fmt(g.rotation_period)
         << "\nprojections_per_rotation=" << g.projections_per_rotation
         << "\nn_views=" << g.n_views() << "\nunit=optical_depth\n";
    std::ostringstream views;
    views << "index,angle_rad,time_rotations\n";
    for (std::size_t i = 0; i < g.n_views(); ++i)
        views << i << ',' << fmt(g.views[i].angle) << ',' << fmt(g.views[i].time) << '\n';
    write_raw(with_suffix(stem, ".raw"), projections.data());
    write_text(with_suffix(stem, ".meta"), meta.str());
    write_text(with_suffix(stem, "_views.csv"), views.str());
}

ProjectionSet read_projections(const fs::path& stem)
{
    const auto meta_path = with_suffix(stem, ".meta");
    const auto kv = read_key_value_file(meta_path);
    AcquisitionGeometry g;
    const auto& beam = require_key(kv, "beam", meta_path);
    if (beam == "parallel")
        g.beam = BeamType::parallel;
    else if (beam == "cone")
        g.beam = BeamType::cone;
    else
        throw DataError(meta_path.string() + ": unknown beam '" + beam + "'");
    g.source_to_origin = parse_double(require_key(kv, "source_to_origin_mm", meta_path), "source_to_origin_mm");
    g.origin_to_detector = parse_double(require_key(kv, "origin_to_detector_mm", meta_path), "origin_to_detector_mm");
    g.det_rows = static_cast<int>(parse_long(require_key(kv, "det_rows", meta_path), "det_rows"));
    g.det_cols = static_cast<int>(parse_long(require_key(kv, "det_cols", meta_path), "det_cols"));
    g.pixel_pitch = parse_double(require_key(kv, "pixel_pitch_mm", meta_path), "pixel_pitch_mm");
    g.rotation_period = parse_double(require_key(kv, "rotation_period", meta_path), "rotation_period");
    g.projections_per_rotation = static_cast<int>(
        parse_long(require_key(kv, "projections_per_rotation", meta_path), "projections_per_rotation"));
    const long n_views = parse_long(require_key(kv, "n_views", meta_path), "n_views");
    if (n_views < 1)
        throw DataError(meta_path.string() + ": n_views must be positive");

    const auto table_path = with_suffix(stem, "_views.csv");
    std::ifstream table(table_path);
    if (!table)
        throw DataError("missing view table " + table_path.string());
    std::string line;
    if (!std::getline(table, line) || trim(line) != "index,angle_rad,time_rotations")
        throw DataError(table_path.string() + ": bad header");
    while (std::getline(table, line)) {
        if (trim(line).empty())
            continue;
        std::stringstream ss(line);
        std::string idx, angle, time;
        if (!std::getline(ss, idx, ',') || !std::getline(ss, angle, ',') || !std::getline(ss, time))
            throw DataError(table_path.string() + ": malformed row '" + line + "'");
        if (parse_long(idx, "view index") != static_cast<long>(g.views.size()))
            throw DataError(table_path.string() + ": view indices must be consecutive from 0");
        g.views.push_back({parse_double(angle, "angle_rad"), parse_double(time, "time_rotations")});
    }
    if (static_cast<long>(g.views.size()) != n_views)
        throw DataError(table_path.string() + ": view count does not match n_views");
    g.validate();
    return ProjectionSet(g, read_raw(with_suffix(stem, ".raw"), g.n_views() * g.pixels_per_view()));
}

} // namespace dyrect
