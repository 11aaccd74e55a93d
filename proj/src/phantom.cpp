#include "dyrect/phantom.hpp"
#include "dyrect/errors.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace dyrect {

namespace {

double distance_to_segment(const Vec3& x, const Vec3& a, const Vec3& b)
{
    const Vec3 ab = b - a;
    const double len2 = ab.squaredNorm();
    const double s = len2 > 0.0 ? std::clamp((x - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
    return (x - (a + s * ab)).norm();
}

bool inside_box(const VoxelGrid3& grid, const Vec3& x, double margin)
{
    const Vec3 lo = grid.box_min().array() + margin;
    const Vec3 hi = grid.box_max().array() - margin;
    return (x.array() >= lo.array()).all() && (x.array() <= hi.array()).all();
}

bool in_sample(const VoxelGrid3& grid, const Vec3& x, double radius)
{
    if (radius <= 0.0)
        return true;
    const Vec3 c = 0.5 * (grid.box_min() + grid.box_max());
    return std::hypot(x.x() - c.x(), x.y() - c.y()) <= radius;
}

// Uniform in [-1, 1) from the top 53 bits, independent of the standard
// library's distribution implementation.
double signed_unit(std::mt19937_64& rng)
{
    return static_cast<double>(rng() >> 11) * 0x1.0p-52 - 1.0;
}

// Overlap of coarse cell i (width f in fine units) with each fine cell.
struct AxisWeights {
    std::vector<int> first;
    std::vector<std::vector<double>> weights;
};

AxisWeights axis_weights(int n_coarse, int n_fine, double f)
{
    AxisWeights aw;
    aw.first.resize(n_coarse);
    aw.weights.resize(n_coarse);
    for (int i = 0; i < n_coarse; ++i) {
        const double lo = i * f;
        const double hi = std::min((i + 1) * f, static_cast<double>(n_fine));
        const int j0 = static_cast<int>(std::floor(lo + 1e-9));
        aw.first[i] = j0;
        for (int j = j0; j < n_fine && j < hi - 1e-9; ++j) {
            const double w = std::min<double>(hi, j + 1) - std::max<double>(lo, j);
            aw.weights[i].push_back(std::max(w, 0.0));
        }
    }
    return aw;
}

void check_same_box(const VoxelGrid3& fine, const VoxelGrid3& coarse)
{
    const double tol = 1e-6 * std::max(coarse.voxel_size, 1.0);
    if ((fine.box_min() - coarse.box_min()).cwiseAbs().maxCoeff() > tol ||
        (fine.box_max() - coarse.box_max()).cwiseAbs().maxCoeff() > tol)
        throw DataError("downsampling requires grids with identical bounding boxes");
    if (coarse.voxel_size < fine.voxel_size)
        throw DataError("downsampling target must not be finer than the source");
}

} // namespace

bool PoreRegion::contains(const Vec3& x) const
{
    switch (shape) {
    case PoreShape::sphere:
        return (x - centers[0]).norm() <= radii[0];
    case PoreShape::channel:
        return distance_to_segment(x, centers[0], centers[1]) <= radii[0];
    case PoreShape::blob_union:
        for (std::size_t i = 0; i < centers.size(); ++i)
            if ((x - centers[i]).norm() <= radii[i])
                return true;
        return false;
    }
    return false;
}

double PoreRegion::arrival_time(const Vec3& x) const
{
    if (front == FrontType::planar)
        return front_start_time + (x - anchor()).dot(front_direction) / front_speed;
    return front_start_time + (x - anchor()).norm() / front_speed;
}

void PoreRegion::validate() const
{
    const std::size_t need_centers = shape == PoreShape::sphere ? 1 : shape == PoreShape::channel ? 2 : 0;
    if (need_centers ? centers.size() != need_centers : centers.empty())
        throw DataError("pore region has the wrong number of centres");
    const std::size_t need_radii = shape == PoreShape::blob_union ? centers.size() : 1;
    if (radii.size() != need_radii)
        throw DataError("pore region has the wrong number of radii");
    for (double r : radii)
        if (!(r > 0.0))
            throw DataError("pore radii must be positive");
    if (!(front_speed > 0.0))
        throw DataError("front speed must be positive");
    if (std::abs(front_direction.norm() - 1.0) > 1e-9)
        throw DataError("front direction must be a unit vector");
}

void FlowSpec::validate() const
{
    if (!(t_begin < t_end))
        throw DataError("dynamic window needs t_begin < t_end");
    if (matrix_mu < 0.0 || fluid0_mu < 0.0 || fluid1_mu < 0.0)
        throw DataError("attenuations must be non-negative");
    if (matrix_texture < 0.0 || matrix_texture >= 1.0)
        throw DataError("matrix texture must lie in [0, 1)");
    for (const auto& r : pore_regions) {
        r.validate();
        for (std::size_t i = 0; i < r.centers.size(); ++i)
            if (!inside_box(grid, r.centers[i], r.radii[std::min(i, r.radii.size() - 1)]))
                throw DataError("pore region extends outside the grid");
    }
}

EventVolume build_flow_phantom(const FlowSpec& spec)
{
    spec.validate();
    const VoxelGrid3& g = spec.grid;
    ScalarField3 mu0(g), mu1(g), tstar(g, spec.static_tstar());
    std::mt19937_64 rng(spec.rng_seed);

    for (int k = 0; k < g.nz; ++k)
        for (int j = 0; j < g.ny; ++j)
            for (int i = 0; i < g.nx; ++i) {
                const std::size_t idx = g.linear_index(i, j, k);
                const Vec3 x = g.voxel_center(i, j, k);
                // Drawn for every voxel so the texture does not depend on the pore layout.
                const double grain = signed_unit(rng);

                bool dynamic = false;
                double t = 0.0;
                for (const auto& region : spec.pore_regions) {
                    if (!region.contains(x))
                        continue;
                    const double tr =
                        std::clamp(region.arrival_time(x), spec.t_begin, spec.t_end);
                    if (dynamic && std::abs(tr - t) > 1e-12)
                        throw DataError("overlapping pore regions assign conflicting transition times");
                    dynamic = true;
                    t = tr;
                }
                if (dynamic) {
                    mu0[idx] = spec.fluid0_mu;
                    mu1[idx] = spec.fluid1_mu;
                    tstar[idx] = t;
                } else if (in_sample(g, x, spec.matrix_radius)) {
                    const double m = spec.matrix_mu * (1.0 + spec.matrix_texture * grain);
                    mu0[idx] = m;
                    mu1[idx] = m;
                }
            }
    return EventVolume(std::move(mu0), std::move(mu1), std::move(tstar));
}

EventVolume build_film_rupture_phantom(const VoxelGrid3& g, const RuptureSpec& spec,
                                       double rupture_time)
{
    if (spec.wall_thickness < g.voxel_size)
        throw DataError("film wall must be at least one voxel thick");
    if (!(spec.bubble_radius > 0.0) || !(spec.neck_radius > 0.0) ||
        spec.neck_radius > spec.bubble_radius)
        throw DataError("rupture phantom needs 0 < neck_radius <= bubble_radius");
    if (spec.matrix_mu < 0.0 || spec.gas_mu < 0.0)
        throw DataError("attenuations must be non-negative");

    const double offset = spec.bubble_radius + 0.5 * spec.wall_thickness;
    const Vec3 c_left = spec.center - offset * Vec3::UnitX();
    const Vec3 c_right = spec.center + offset * Vec3::UnitX();
    const double static_t = rupture_time + 10.0;

    ScalarField3 mu0(g), mu1(g), tstar(g, static_t);
    for (int k = 0; k < g.nz; ++k)
        for (int j = 0; j < g.ny; ++j)
            for (int i = 0; i < g.nx; ++i) {
                const std::size_t idx = g.linear_index(i, j, k);
                const Vec3 x = g.voxel_center(i, j, k);
                const Vec3 rel = x - spec.center;
                if ((x - c_left).norm() <= spec.bubble_radius ||
                    (x - c_right).norm() <= spec.bubble_radius) {
                    mu0[idx] = mu1[idx] = spec.gas_mu;
                } else if (std::abs(rel.x()) < 0.5 * spec.wall_thickness &&
                           std::hypot(rel.y(), rel.z()) <= spec.neck_radius) {
                    mu0[idx] = spec.matrix_mu;
                    mu1[idx] = spec.gas_mu;
                    tstar[idx] = rupture_time;
                } else if (in_sample(g, x, spec.sample_radius)) {
                    mu0[idx] = mu1[idx] = spec.matrix_mu;
                }
            }
    return EventVolume(std::move(mu0), std::move(mu1), std::move(tstar));
}

VoxelGrid3 refine_grid(const VoxelGrid3& coarse, double factor)
{
    if (!(factor >= 1.0))
        throw DataError("refinement factor must be >= 1");
    auto scaled = [factor](int n) {
        const double v = n * factor;
        const int r = static_cast<int>(std::lround(v));
        if (std::abs(v - r) > 1e-9)
            throw DataError("refinement factor must give integer voxel counts");
        return r;
    };
    const double vs = coarse.voxel_size / factor;
    const Vec3 origin = coarse.box_min() + Vec3::Constant(0.5 * vs);
    return VoxelGrid3(scaled(coarse.nx), scaled(coarse.ny), scaled(coarse.nz), vs, origin);
}

ScalarField3 downsample_field(const ScalarField3& fine, const VoxelGrid3& coarse)
{
    const VoxelGrid3& fg = fine.grid();
    check_same_box(fg, coarse);
    const double f = coarse.voxel_size / fg.voxel_size;
    const auto ax = axis_weights(coarse.nx, fg.nx, f);
    const auto ay = axis_weights(coarse.ny, fg.ny, f);
    const auto az = axis_weights(coarse.nz, fg.nz, f);
    ScalarField3 out(coarse);
    for (int k = 0; k < coarse.nz; ++k)
        for (int j = 0; j < coarse.ny; ++j)
            for (int i = 0; i < coarse.nx; ++i) {
                double acc = 0.0, wsum = 0.0;
                for (std::size_t c = 0; c < az.weights[k].size(); ++c)
                    for (std::size_t b = 0; b < ay.weights[j].size(); ++b)
                        for (std::size_t a = 0; a < ax.weights[i].size(); ++a) {
                            const double w = az.weights[k][c] * ay.weights[j][b] * ax.weights[i][a];
                            acc += w * fine(ax.first[i] + static_cast<int>(a),
                                            ay.first[j] + static_cast<int>(b),
                                            az.first[k] + static_cast<int>(c));
                            wsum += w;
                        }
                out(i, j, k) = wsum > 0.0 ? acc / wsum : 0.0;
            }
    return out;
}

EventVolume downsample_event_volume(const EventVolume& fine, const VoxelGrid3& coarse)
{
    const VoxelGrid3& fg = fine.grid();
    check_same_box(fg, coarse);
    const double f = coarse.voxel_size / fg.voxel_size;
    const auto ax = axis_weights(coarse.nx, fg.nx, f);
    const auto ay = axis_weights(coarse.ny, fg.ny, f);
    const auto az = axis_weights(coarse.nz, fg.nz, f);
    ScalarField3 mu0(coarse), mu1(coarse), tstar(coarse);
    for (int k = 0; k < coarse.nz; ++k)
        for (int j = 0; j < coarse.ny; ++j)
            for (int i = 0; i < coarse.nx; ++i) {
                double m0 = 0.0, m1 = 0.0, wsum = 0.0;
                double t_dyn = 0.0, w_dyn = 0.0, t_all = 0.0;
                for (std::size_t c = 0; c < az.weights[k].size(); ++c)
                    for (std::size_t b = 0; b < ay.weights[j].size(); ++b)
                        for (std::size_t a = 0; a < ax.weights[i].size(); ++a) {
                            const double w = az.weights[k][c] * ay.weights[j][b] * ax.weights[i][a];
                            const std::size_t src = fg.linear_index(ax.first[i] + static_cast<int>(a),
                                                                    ay.first[j] + static_cast<int>(b),
                                                                    az.first[k] + static_cast<int>(c));
                            m0 += w * fine.mu0[src];
                            m1 += w * fine.mu1[src];
                            t_all += w * fine.tstar[src];
                            wsum += w;
                            const double contrast = std::abs(fine.mu1[src] - fine.mu0[src]);
                            t_dyn += w * contrast * fine.tstar[src];
                            w_dyn += w * contrast;
                        }
                mu0(i, j, k) = m0 / wsum;
                mu1(i, j, k) = m1 / wsum;
                tstar(i, j, k) = w_dyn > 0.0 ? t_dyn / w_dyn : t_all / wsum;
            }
    return EventVolume(std::move(mu0), std::move(mu1), std::move(tstar));
}

ScalarField3 voxelize_tube(const VoxelGrid3& g, double r_inner, double r_outer, double mu,
                           int supersample)
{
    if (supersample < 1 || r_inner < 0.0 || !(r_outer > r_inner))
        throw DataError("invalid tube voxelisation parameters");
    ScalarField3 out(g);
    const double h = g.voxel_size / supersample;
    const int n_sub = supersample * supersample;
    for (int k = 0; k < g.nz; ++k)
        for (int j = 0; j < g.ny; ++j)
            for (int i = 0; i < g.nx; ++i) {
                const Vec3 c = g.voxel_center(i, j, k);
                int hits = 0;
                for (int b = 0; b < supersample; ++b)
                    for (int a = 0; a < supersample; ++a) {
                        const double x = c.x() - 0.5 * g.voxel_size + (a + 0.5) * h;
                        const double y = c.y() - 0.5 * g.voxel_size + (b + 0.5) * h;
                        const double r = std::hypot(x, y);
                        hits += (r >= r_inner && r <= r_outer) ? 1 : 0;
                    }
                out(i, j, k) = mu * hits / n_sub;
            }
    return out;
}

} // namespace dyrect
