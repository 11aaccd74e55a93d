#include "dyrect/projector.hpp"
#include "dyrect/errors.hpp"
#include "dyrect/parallel.hpp"

#include <unsupported/Eigen/MatrixFunctions>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace dyrect {

namespace {

constexpr double kMmToCm = 0.1;

Vec3 pixel_offset(const AcquisitionGeometry& g, const ViewFrame& f, int row, int col)
{
    const double u = (col - 0.5 * (g.det_cols - 1)) * g.pixel_pitch;
    const double v = (row - 0.5 * (g.det_rows - 1)) * g.pixel_pitch;
    return u * f.u + v * f.v;
}

Ray unclipped_ray(const AcquisitionGeometry& g, const ViewFrame& f, int row, int col)
{
    Ray ray;
    const Vec3 offset = pixel_offset(g, f, row, col);
    if (g.beam == BeamType::parallel) {
        ray.origin = offset;
        ray.direction = f.beam;
    } else {
        const Vec3 source = -g.source_to_origin * f.beam;
        const Vec3 pixel = g.origin_to_detector * f.beam + offset;
        ray.origin = source;
        ray.direction = (pixel - source).normalized();
    }
    return ray;
}

// Parameter interval [lo, hi] of the line o + s*d inside the box; hi < lo on a miss.
void slab_clip(const Vec3& o, const Vec3& d, const Vec3& bmin, const Vec3& bmax, double& lo,
               double& hi)
{
    lo = -std::numeric_limits<double>::infinity();
    hi = std::numeric_limits<double>::infinity();
    for (int a = 0; a < 3; ++a) {
        if (d[a] == 0.0) {
            if (o[a] < bmin[a] || o[a] > bmax[a]) {
                lo = 0.0;
                hi = -1.0;
                return;
            }
            continue;
        }
        double s0 = (bmin[a] - o[a]) / d[a];
        double s1 = (bmax[a] - o[a]) / d[a];
        if (s0 > s1)
            std::swap(s0, s1);
        lo = std::max(lo, s0);
        hi = std::min(hi, s1);
    }
    if (!(hi > lo)) {
        lo = 0.0;
        hi = -1.0;
    }
}

// Equidistant midpoint samples of a (possibly motion-mapped) ray in the
// grid's fractional index space.
struct RaySamples {
    Vec3 q0;
    Vec3 dq;
    int count = 0;
    double step_mm = 0.0;
};

RaySamples sample_ray(const Ray& ray, bool cone, const VoxelGrid3& grid, double nominal_step,
                      const Eigen::Matrix4d* motion)
{
    Vec3 o = ray.origin;
    Vec3 d = ray.direction;
    if (motion) {
        o = motion->topLeftCorner<3, 3>() * o + motion->topRightCorner<3, 1>();
        d = motion->topLeftCorner<3, 3>() * d;
    }
    double lo, hi;
    slab_clip(o, d, grid.box_min(), grid.box_max(), lo, hi);
    if (cone)
        lo = std::max(lo, 0.0);
    RaySamples rs;
    if (!(hi > lo))
        return rs;
    const double len = hi - lo;
    rs.count = std::max(1, static_cast<int>(std::ceil(len / nominal_step - 1e-9)));
    rs.step_mm = len / rs.count;
    const Vec3 start = o + (lo + 0.5 * rs.step_mm) * d;
    rs.q0 = (start - grid.origin) / grid.voxel_size;
    rs.dq = d * (rs.step_mm / grid.voxel_size);
    return rs;
}

double integrate_event(const RaySamples& rs, const EventVolume& vol, double t)
{
    const VoxelGrid3& grid = vol.grid();
    const auto& mu0 = vol.mu0.storage();
    const auto& mu1 = vol.mu1.storage();
    const auto& ts = vol.tstar.storage();
    double acc = 0.0;
    Vec3 q = rs.q0;
    for (int k = 0; k < rs.count; ++k, q += rs.dq) {
        const TrilinearStencil st(grid, q);
        if (!st.inside)
            continue;
        acc += t < st.apply(ts) ? st.apply(mu0) : st.apply(mu1);
    }
    return acc * rs.step_mm * kMmToCm;
}

double integrate_field(const RaySamples& rs, const ScalarField3& field)
{
    const VoxelGrid3& grid = field.grid();
    const auto& values = field.storage();
    double acc = 0.0;
    Vec3 q = rs.q0;
    for (int k = 0; k < rs.count; ++k, q += rs.dq) {
        const TrilinearStencil st(grid, q);
        if (st.inside)
            acc += st.apply(values);
    }
    return acc * rs.step_mm * kMmToCm;
}

template <typename PixelFn>
void for_each_pixel(const AcquisitionGeometry& g, std::span<const std::size_t> views,
                    int threads, std::span<double> out, PixelFn&& pixel)
{
    const std::size_t ppv = g.pixels_per_view();
    if (out.size() != views.size() * ppv)
        throw DataError("projection output buffer has the wrong size");
    std::vector<ViewFrame> frames;
    frames.reserve(views.size());
    for (std::size_t v : views) {
        if (v >= g.n_views())
            throw DataError("view index out of range");
        frames.push_back(view_frame(g, v));
    }
    parallel_for(views.size() * g.det_rows, threads, [&](std::size_t begin, std::size_t end) {
        for (std::size_t line = begin; line < end; ++line) {
            const std::size_t k = line / g.det_rows;
            const int row = static_cast<int>(line % g.det_rows);
            double* dst = out.data() + k * ppv + static_cast<std::size_t>(row) * g.det_cols;
            for (int col = 0; col < g.det_cols; ++col)
                dst[col] = pixel(k, unclipped_ray(g, frames[k], row, col));
        }
    });
}

std::vector<std::size_t> all_views(const AcquisitionGeometry& g)
{
    std::vector<std::size_t> v(g.n_views());
    std::iota(v.begin(), v.end(), std::size_t{0});
    return v;
}

} // namespace

ViewFrame view_frame(const AcquisitionGeometry& geometry, std::size_t view)
{
    const double a = geometry.views.at(view).angle;
    const double c = std::cos(a);
    const double s = std::sin(a);
    return {Vec3(-s, c, 0.0), Vec3(c, s, 0.0), Vec3::UnitZ()};
}

void clip_to_grid(Ray& ray, const VoxelGrid3& grid)
{
    slab_clip(ray.origin, ray.direction, grid.box_min(), grid.box_max(), ray.entry, ray.exit);
}

Ray trace_ray(const AcquisitionGeometry& geometry, const VoxelGrid3& grid, std::size_t view,
              int row, int col)
{
    if (view >= geometry.n_views() || row < 0 || row >= geometry.det_rows || col < 0 ||
        col >= geometry.det_cols)
        throw DataError("trace_ray: index out of range");
    Ray ray = unclipped_ray(geometry, view_frame(geometry, view), row, col);
    clip_to_grid(ray, grid);
    if (geometry.beam == BeamType::cone && ray.hits()) {
        ray.entry = std::max(ray.entry, 0.0);
        if (!(ray.exit > ray.entry)) {
            ray.entry = 0.0;
            ray.exit = -1.0;
        }
    }
    return ray;
}

DetectorMapper::DetectorMapper(const AcquisitionGeometry& g)
    : cone_(g.beam == BeamType::cone), source_to_origin_(g.source_to_origin),
      magnification_num_(g.source_to_origin + g.origin_to_detector),
      inv_pitch_(1.0 / g.pixel_pitch), row_center_(0.5 * (g.det_rows - 1)),
      col_center_(0.5 * (g.det_cols - 1))
{
    frames_.reserve(g.n_views());
    for (std::size_t v = 0; v < g.n_views(); ++v)
        frames_.push_back(view_frame(g, v));
}

DetectorPoint project_point(const AcquisitionGeometry& g, std::size_t view, const Vec3& x)
{
    const ViewFrame f = view_frame(g, view);
    double u = x.dot(f.u);
    double v = x.dot(f.v);
    if (g.beam == BeamType::cone) {
        const double mag =
            (g.source_to_origin + g.origin_to_detector) / (g.source_to_origin + x.dot(f.beam));
        u *= mag;
        v *= mag;
    }
    return {v / g.pixel_pitch + 0.5 * (g.det_rows - 1), u / g.pixel_pitch + 0.5 * (g.det_cols - 1)};
}

double sample_detector(std::span<const double> image, int rows, int cols, const DetectorPoint& p)
{
    if (!(p.row > -1.0 && p.row < rows && p.col > -1.0 && p.col < cols))
        return 0.0;
    const int r0 = static_cast<int>(std::floor(p.row));
    const int c0 = static_cast<int>(std::floor(p.col));
    const double fr = p.row - r0;
    const double fc = p.col - c0;
    auto at = [&](int r, int c) {
        return (r < 0 || r >= rows || c < 0 || c >= cols)
                   ? 0.0
                   : image[static_cast<std::size_t>(r) * cols + c];
    };
    const double top = at(r0, c0) + fc * (at(r0, c0 + 1) - at(r0, c0));
    const double bottom = at(r0 + 1, c0) + fc * (at(r0 + 1, c0 + 1) - at(r0 + 1, c0));
    return top + fr * (bottom - top);
}

AffineMotionModel::AffineMotionModel(const Eigen::Matrix4d& A, double t0, double t1,
                                     double t_ref)
    : a_(A), t0_(t0), t1_(t1), t_ref_(t_ref)
{
    if (!(t1 > t0))
        throw DataError("affine motion model needs t1 > t0");
    if (!A.allFinite())
        throw DataError("affine motion matrix must be finite");
    if (A.row(3) != Eigen::RowVector4d(0, 0, 0, 1))
        throw DataError("affine motion matrix must be homogeneous (last row 0 0 0 1)");
    const Eigen::EigenSolver<Eigen::Matrix4d> es(A, false);
    const double scale = std::max(1.0, A.cwiseAbs().maxCoeff());
    for (const auto& ev : es.eigenvalues()) {
        const bool real = std::abs(ev.imag()) <= 1e-12 * scale;
        if (std::abs(ev) <= 1e-12 * scale || (real && ev.real() < 0.0))
            throw DataError("affine motion matrix has no real logarithm");
    }
    log_a_ = A.log();
    if (!log_a_.allFinite())
        throw DataError("affine motion matrix logarithm is not finite");
}

Eigen::Matrix4d AffineMotionModel::matrix_at(double t) const
{
    const double s = (t - t_ref_) / (t1_ - t0_);
    if (s == 0.0)
        return Eigen::Matrix4d::Identity();
    return (s * log_a_).exp();
}

Vec3 AffineMotionModel::apply(const Vec3& x, double t) const
{
    const Eigen::Matrix4d m = matrix_at(t);
    return m.topLeftCorner<3, 3>() * x + m.topRightCorner<3, 1>();
}

Vec3 AffineMotionModel::apply_inverse(const Vec3& x, double t) const
{
    const double s = (t - t_ref_) / (t1_ - t0_);
    const Eigen::Matrix4d m = s == 0.0 ? Eigen::Matrix4d::Identity().eval() : (-s * log_a_).exp();
    return m.topLeftCorner<3, 3>() * x + m.topRightCorner<3, 1>();
}

Vec3 apply_affine_motion(const Vec3& x, double t, const AffineMotionModel& model)
{
    return model.apply(x, t);
}

void forward_project_views(const EventVolume& vol, const AcquisitionGeometry& geometry,
                           std::span<const std::size_t> views, const MotionOption& motion,
                           const ProjectorOptions& options, std::span<double> out)
{
    const double step = options.ray_step * vol.grid().voxel_size;
    const bool cone = geometry.beam == BeamType::cone;
    std::vector<Eigen::Matrix4d> motions;
    if (motion)
        for (std::size_t v : views)
            motions.push_back(motion->matrix_at(geometry.views.at(v).time));
    for_each_pixel(geometry, views, options.threads, out, [&](std::size_t k, const Ray& ray) {
        const RaySamples rs =
            sample_ray(ray, cone, vol.grid(), step, motion ? &motions[k] : nullptr);
        return integrate_event(rs, vol, geometry.views[views[k]].time);
    });
}

ProjectionSet forward_project(const EventVolume& vol, const AcquisitionGeometry& geometry,
                              const MotionOption& motion, const ProjectorOptions& options)
{
    geometry.validate();
    ProjectionSet out(geometry);
    const auto views = all_views(geometry);
    forward_project_views(vol, geometry, views, motion, options, out.data());
    return out;
}

void project_static_views(const ScalarField3& field, const AcquisitionGeometry& geometry,
                          std::span<const std::size_t> views, const ProjectorOptions& options,
                          std::span<double> out)
{
    const double step = options.ray_step * field.grid().voxel_size;
    const bool cone = geometry.beam == BeamType::cone;
    for_each_pixel(geometry, views, options.threads, out, [&](std::size_t, const Ray& ray) {
        return integrate_field(sample_ray(ray, cone, field.grid(), step, nullptr), field);
    });
}

ProjectionSet project_static(const ScalarField3& field, const AcquisitionGeometry& geometry,
                             const ProjectorOptions& options)
{
    geometry.validate();
    ProjectionSet out(geometry);
    const auto views = all_views(geometry);
    project_static_views(field, geometry, views, options, out.data());
    return out;
}

std::vector<double> intersection_lengths(const AcquisitionGeometry& geometry,
                                         const VoxelGrid3& grid)
{
    geometry.validate();
    std::vector<double> lengths(geometry.n_views() * geometry.pixels_per_view());
    const auto views = all_views(geometry);
    const bool cone = geometry.beam == BeamType::cone;
    for_each_pixel(geometry, views, 1, lengths, [&](std::size_t, Ray ray) {
        clip_to_grid(ray, grid);
        if (cone)
            ray.entry = std::max(ray.entry, 0.0);
        return ray.length() * kMmToCm;
    });
    return lengths;
}

ProjectionSet normalize_exterior(const ProjectionSet& measured,
                                 const ProjectionSet& exterior_projection)
{
    if (!(measured.geometry() == exterior_projection.geometry()))
        throw DataError("exterior projection geometry does not match the measurement");
    ProjectionSet out = measured;
    auto dst = out.data();
    const auto ext = exterior_projection.data();
    for (std::size_t i = 0; i < dst.size(); ++i)
        dst[i] -= ext[i];
    return out;
}

ProjectionSet normalize_exterior(const ProjectionSet& measured, const ScalarField3& exterior,
                                 const ProjectorOptions& options)
{
    return normalize_exterior(measured, project_static(exterior, measured.geometry(), options));
}

} // namespace dyrect
