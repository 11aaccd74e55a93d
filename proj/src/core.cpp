#include "dyrect/core.hpp"
#include "dyrect/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace dyrect {

VoxelGrid3::VoxelGrid3(int nx_, int ny_, int nz_, double voxel_size_, const Vec3& origin_)
    : nx(nx_), ny(ny_), nz(nz_), voxel_size(voxel_size_), origin(origin_)
{
    if (nx < 1 || ny < 1 || nz < 1)
        throw DataError("voxel grid dimensions must be positive");
    if (!(voxel_size > 0.0) || !std::isfinite(voxel_size))
        throw DataError("voxel size must be positive");
    if (!origin.allFinite())
        throw DataError("voxel grid origin must be finite");
}

VoxelGrid3 VoxelGrid3::centered(int nx, int ny, int nz, double voxel_size)
{
    const Vec3 origin = -0.5 * voxel_size * Vec3(nx - 1, ny - 1, nz - 1);
    return VoxelGrid3(nx, ny, nz, voxel_size, origin);
}

Vec3 VoxelGrid3::voxel_center(std::size_t linear) const
{
    const auto sx = static_cast<std::size_t>(nx);
    const auto sy = static_cast<std::size_t>(ny);
    const int i = static_cast<int>(linear % sx);
    const int j = static_cast<int>((linear / sx) % sy);
    const int k = static_cast<int>(linear / (sx * sy));
    return voxel_center(i, j, k);
}

bool VoxelGrid3::operator==(const VoxelGrid3& other) const
{
    return nx == other.nx && ny == other.ny && nz == other.nz &&
           voxel_size == other.voxel_size && origin == other.origin;
}

Vec3 world_to_index(const VoxelGrid3& grid, const Vec3& x)
{
    return (x - grid.origin) / grid.voxel_size;
}

Vec3 index_to_world(const VoxelGrid3& grid, const Vec3& index)
{
    return grid.origin + grid.voxel_size * index;
}

TrilinearStencil::TrilinearStencil(const VoxelGrid3& grid, const Vec3& q)
{
    const int dims[3] = {grid.nx, grid.ny, grid.nz};
    const std::size_t strides[3] = {1, static_cast<std::size_t>(grid.nx),
                                    static_cast<std::size_t>(grid.nx) * grid.ny};
    std::size_t b = 0;
    for (int a = 0; a < 3; ++a) {
        const double n = dims[a];
        if (!(q[a] >= -0.5 && q[a] <= n - 0.5))
            return;
        const double c = std::clamp(q[a], 0.0, n - 1.0);
        int i0 = static_cast<int>(c);
        if (i0 >= dims[a] - 1) {
            i0 = dims[a] - 1;
            step[a] = 0;
            frac[a] = 0.0;
        } else {
            step[a] = strides[a];
            frac[a] = c - i0;
        }
        b += static_cast<std::size_t>(i0) * strides[a];
    }
    base = b;
    inside = true;
}

ScalarField3::ScalarField3(const VoxelGrid3& grid, double fill)
    : grid_(grid), values_(grid.size(), fill)
{
}

ScalarField3::ScalarField3(const VoxelGrid3& grid, std::vector<double> values)
    : grid_(grid), values_(std::move(values))
{
    if (values_.size() != grid_.size())
        throw DataError("field value count " + std::to_string(values_.size()) +
                        " does not match grid size " + std::to_string(grid_.size()));
}

double ScalarField3::sample(const Vec3& x) const
{
    const TrilinearStencil s(grid_, world_to_index(grid_, x));
    return s.inside ? s.apply(values_) : 0.0;
}

void ScalarField3::require_finite() const
{
    for (double v : values_)
        if (!std::isfinite(v))
            throw DataError("scalar field contains non-finite values");
}

EventVolume::EventVolume(ScalarField3 mu0_, ScalarField3 mu1_, ScalarField3 tstar_)
    : mu0(std::move(mu0_)), mu1(std::move(mu1_)), tstar(std::move(tstar_))
{
    validate();
}

EventVolume EventVolume::uniform(const VoxelGrid3& grid, double mu0, double mu1, double tstar)
{
    return EventVolume(ScalarField3(grid, mu0), ScalarField3(grid, mu1),
                       ScalarField3(grid, tstar));
}

EventVolume EventVolume::from_static(const ScalarField3& field, double tstar)
{
    return EventVolume(field, field, ScalarField3(field.grid(), tstar));
}

void EventVolume::validate() const
{
    if (mu0.grid() != mu1.grid() || mu0.grid() != tstar.grid())
        throw DataError("event volume fields do not share one grid");
    mu0.require_finite();
    mu1.require_finite();
    tstar.require_finite();
    for (std::size_t i = 0; i < mu0.size(); ++i)
        if (mu0[i] < 0.0 || mu1[i] < 0.0)
            throw DataError("event volume attenuations must be non-negative");
}

double sample_event_volume(const EventVolume& vol, const Vec3& x, double t)
{
    const TrilinearStencil s(vol.grid(), world_to_index(vol.grid(), x));
    if (!s.inside)
        return 0.0;
    const double ts = s.apply(vol.tstar.storage());
    return t < ts ? s.apply(vol.mu0.storage()) : s.apply(vol.mu1.storage());
}

AcquisitionGeometry AcquisitionGeometry::circular(BeamType beam, int det_rows, int det_cols,
                                                  double pixel_pitch,
                                                  int projections_per_rotation, int n_views,
                                                  double start_angle, double start_time)
{
    AcquisitionGeometry g;
    g.beam = beam;
    g.det_rows = det_rows;
    g.det_cols = det_cols;
    g.pixel_pitch = pixel_pitch;
    g.projections_per_rotation = projections_per_rotation;
    if (projections_per_rotation < 1 || n_views < 1)
        throw DataError("circular scan needs positive view counts");
    g.views.reserve(static_cast<std::size_t>(n_views));
    const double dangle = 2.0 * std::numbers::pi / projections_per_rotation;
    const double dt = g.rotation_period / projections_per_rotation;
    for (int i = 0; i < n_views; ++i)
        g.views.push_back({start_angle + dangle * i, start_time + dt * i});
    return g;
}

void AcquisitionGeometry::validate() const
{
    if (views.empty())
        throw DataError("acquisition geometry has no views");
    if (det_rows < 1 || det_cols < 1)
        throw DataError("detector must have positive row and column counts");
    if (!(pixel_pitch > 0.0))
        throw DataError("pixel pitch must be positive");
    if (projections_per_rotation < 1)
        throw DataError("projections_per_rotation must be positive");
    if (!(rotation_period > 0.0))
        throw DataError("rotation period must be positive");
    if (beam == BeamType::cone && !(source_to_origin > 0.0))
        throw DataError("cone beam needs a positive source-to-origin distance");
    for (const auto& v : views)
        if (!std::isfinite(v.angle) || !std::isfinite(v.time))
            throw DataError("view angles and times must be finite");
    for (std::size_t i = 1; i < views.size(); ++i)
        if (!(views[i].time > views[i - 1].time))
            throw DataError("view times must be strictly increasing");
    if (views.size() > 2) {
        const double step = views[1].angle - views[0].angle;
        for (std::size_t i = 2; i < views.size(); ++i) {
            const double d = views[i].angle - views[i - 1].angle;
            if (std::abs(d - step) > 1e-9 * std::max(1.0, std::abs(step)))
                throw DataError("angular step must be constant for a circular scan");
        }
    }
}

void AcquisitionGeometry::require_event_span() const
{
    validate();
    if (scan_duration() < 3.0 * rotation_period - 1e-9)
        throw DataError("event reconstruction needs a scan spanning at least 3 rotations");
}

bool AcquisitionGeometry::operator==(const AcquisitionGeometry& o) const
{
    if (beam != o.beam || source_to_origin != o.source_to_origin ||
        origin_to_detector != o.origin_to_detector || det_rows != o.det_rows ||
        det_cols != o.det_cols || pixel_pitch != o.pixel_pitch ||
        rotation_period != o.rotation_period ||
        projections_per_rotation != o.projections_per_rotation ||
        views.size() != o.views.size())
        return false;
    for (std::size_t i = 0; i < views.size(); ++i)
        if (views[i].angle != o.views[i].angle || views[i].time != o.views[i].time)
            return false;
    return true;
}

ProjectionSet::ProjectionSet(AcquisitionGeometry geometry, double fill)
    : geometry_(std::move(geometry)),
      data_(geometry_.n_views() * geometry_.pixels_per_view(), fill)
{
}

ProjectionSet::ProjectionSet(AcquisitionGeometry geometry, std::vector<double> data)
    : geometry_(std::move(geometry)), data_(std::move(data))
{
    if (data_.size() != geometry_.n_views() * geometry_.pixels_per_view())
        throw DataError("projection data size does not match geometry");
}

void ProjectionSet::require_finite() const
{
    for (double v : data_)
        if (!std::isfinite(v))
            throw DataError("projection data contains non-finite values");
}

void ReconParams::validate() const
{
    auto in_unit = [](double v) { return v > 0.0 && v <= 1.0; };
    if (!in_unit(lambda_t) || !in_unit(lambda_0) || !in_unit(lambda_1))
        throw DataError("relaxation factors lambda_t, lambda_0, lambda_1 must lie in (0, 1]");
    if (!(lambda_delta >= 0.0) || !(lambda_mu >= 0.0))
        throw DataError("lambda_delta and lambda_mu must be non-negative");
    if (!(epsilon > 0.0))
        throw DataError("epsilon must be positive");
    if (!in_unit(ray_step))
        throw DataError("ray_step must lie in (0, 1]");
    if (n_iterations < 1 || n_subsets < 1)
        throw DataError("iteration and subset counts must be positive");
    if (!(weight_floor >= 0.0))
        throw DataError("weight floor must be non-negative");
    if (threads < 1)
        throw DataError("thread count must be positive");
}

} // namespace dyrect
