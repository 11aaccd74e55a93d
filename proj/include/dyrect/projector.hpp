#pragma once

#include "dyrect/core.hpp"

#include <Eigen/Core>

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace dyrect {

struct Ray {
    Vec3 origin = Vec3::Zero();
    Vec3 direction = Vec3::UnitY();
    // Ray parameters (mm along `direction`) where it enters and leaves the
    // grid bounding box. exit <= entry means the ray misses.
    double entry = 0.0;
    double exit = -1.0;

    bool hits() const { return exit > entry; }
    double length() const { return hits() ? exit - entry : 0.0; }
};

// Beam-aligned frame of one view: `beam` is the optical axis (source towards
// detector), `u` the detector column axis, `v` the row axis (world z).
struct ViewFrame {
    Vec3 beam;
    Vec3 u;
    Vec3 v;
};

ViewFrame view_frame(const AcquisitionGeometry& geometry, std::size_t view);

// Ray through the centre of detector pixel (row, col) of `view`.
Ray trace_ray(const AcquisitionGeometry& geometry, const VoxelGrid3& grid, std::size_t view,
              int row, int col);

// Slab intersection of a ray with the grid's bounding box.
void clip_to_grid(Ray& ray, const VoxelGrid3& grid);

// Fractional detector coordinates (row, col) where the point x lands in
// `view`; used to sample pixel-domain data at a voxel position.
struct DetectorPoint {
    double row = 0.0;
    double col = 0.0;
};
DetectorPoint project_point(const AcquisitionGeometry& geometry, std::size_t view,
                            const Vec3& x);

// project_point with the per-view frames precomputed, for voxel-driven loops.
class DetectorMapper {
public:
    explicit DetectorMapper(const AcquisitionGeometry& geometry);

    DetectorPoint operator()(std::size_t view, const Vec3& x) const
    {
        const ViewFrame& f = frames_[view];
        double u = x.dot(f.u);
        double v = x.z();
        if (cone_) {
            const double mag = magnification_num_ / (source_to_origin_ + x.dot(f.beam));
            u *= mag;
            v *= mag;
        }
        return {v * inv_pitch_ + row_center_, u * inv_pitch_ + col_center_};
    }

private:
    std::vector<ViewFrame> frames_;
    bool cone_;
    double source_to_origin_;
    double magnification_num_;
    double inv_pitch_;
    double row_center_;
    double col_center_;
};

// Bilinear read of one view image at fractional detector coordinates; 0
// outside the detector.
double sample_detector(std::span<const double> image, int rows, int cols,
                       const DetectorPoint& p);

// Global motion x -> A^((t - t_ref)/(t1 - t0)) x in homogeneous coordinates,
// mapping reconstruction coordinates to acquisition coordinates at time t.
class AffineMotionModel {
public:
    // Throws DataError if A is singular, has a negative real eigenvalue (no
    // real logarithm), or t1 <= t0.
    AffineMotionModel(const Eigen::Matrix4d& A, double t0, double t1, double t_ref);

    Eigen::Matrix4d matrix_at(double t) const;
    Vec3 apply(const Vec3& x, double t) const;
    Vec3 apply_inverse(const Vec3& x, double t) const;

    const Eigen::Matrix4d& matrix() const { return a_; }
    double t0() const { return t0_; }
    double t1() const { return t1_; }
    double t_ref() const { return t_ref_; }

private:
    Eigen::Matrix4d a_;
    Eigen::Matrix4d log_a_;
    double t0_;
    double t1_;
    double t_ref_;
};

Vec3 apply_affine_motion(const Vec3& x, double t, const AffineMotionModel& model);

using MotionOption = std::optional<AffineMotionModel>;

struct ProjectorOptions {
    double ray_step = 0.5; // fraction of voxel_size
    int threads = 1;
};

// Time-resolved line integrals of an event volume: each pixel of view i is the
// equidistant-quadrature sum of mu(x', t_i) * step along its centre ray, with
// x' the motion-mapped sample point. Optical depth (1/cm * cm).
ProjectionSet forward_project(const EventVolume& vol, const AcquisitionGeometry& geometry,
                              const MotionOption& motion = std::nullopt,
                              const ProjectorOptions& options = {});

// Projects only `views` (indices into geometry.views) into `out`, laid out
// [k][row][col] for k over `views`.
void forward_project_views(const EventVolume& vol, const AcquisitionGeometry& geometry,
                           std::span<const std::size_t> views, const MotionOption& motion,
                           const ProjectorOptions& options, std::span<double> out);

ProjectionSet project_static(const ScalarField3& field, const AcquisitionGeometry& geometry,
                             const ProjectorOptions& options = {});

void project_static_views(const ScalarField3& field, const AcquisitionGeometry& geometry,
                          std::span<const std::size_t> views, const ProjectorOptions& options,
                          std::span<double> out);

// Path length (cm) of every pixel's ray inside the grid bounding box, laid
// out like a projection stack; 0 for misses.
std::vector<double> intersection_lengths(const AcquisitionGeometry& geometry,
                                         const VoxelGrid3& grid);

// measured - project_static(exterior): removes mass outside the
// reconstruction field of view.
ProjectionSet normalize_exterior(const ProjectionSet& measured, const ScalarField3& exterior,
                                 const ProjectorOptions& options = {});
// Same subtraction with a precomputed exterior projection; throws DataError
// when the geometries differ.
ProjectionSet normalize_exterior(const ProjectionSet& measured,
                                 const ProjectionSet& exterior_projection);

} // namespace dyrect
