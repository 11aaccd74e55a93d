#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace dyrect {

using Vec3 = Eigen::Vector3d;

// Isotropic voxel grid. `origin` is the world position (mm) of the centre of
// voxel (0,0,0); x-index runs fastest in memory.
struct VoxelGrid3 {
    int nx = 1;
    int ny = 1;
    int nz = 1;
    double voxel_size = 1.0;
    Vec3 origin = Vec3::Zero();

    VoxelGrid3() = default;
    VoxelGrid3(int nx, int ny, int nz, double voxel_size, const Vec3& origin);

    // Grid whose bounding box is centred on the world origin.
    static VoxelGrid3 centered(int nx, int ny, int nz, double voxel_size);

    std::size_t size() const
    {
        return static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny) *
               static_cast<std::size_t>(nz);
    }
    std::size_t linear_index(int i, int j, int k) const
    {
        return static_cast<std::size_t>(i) +
               static_cast<std::size_t>(nx) *
                   (static_cast<std::size_t>(j) + static_cast<std::size_t>(ny) * k);
    }
    Vec3 voxel_center(int i, int j, int k) const
    {
        return origin + voxel_size * Vec3(i, j, k);
    }
    Vec3 voxel_center(std::size_t linear) const;
    // Axis-aligned bounding box covering all voxels (centres +- half a voxel).
    Vec3 box_min() const { return origin - Vec3::Constant(0.5 * voxel_size); }
    Vec3 box_max() const
    {
        return origin + voxel_size * Vec3(nx - 0.5, ny - 0.5, nz - 0.5);
    }

    bool operator==(const VoxelGrid3& other) const;
    bool operator!=(const VoxelGrid3& other) const { return !(*this == other); }
};

// Fractional index of a world position; out-of-range results are legal.
Vec3 world_to_index(const VoxelGrid3& grid, const Vec3& x);
Vec3 index_to_world(const VoxelGrid3& grid, const Vec3& index);

// Trilinear interpolation weights of a point given in fractional index
// coordinates. Inside the grid's bounding box the index is clamped to the
// outermost voxel centres (constant extension over the last half voxel);
// outside the box `inside` is false.
struct TrilinearStencil {
    bool inside = false;
    std::size_t base = 0;       // linear index of the lower corner
    std::size_t step[3] = {};   // strides to the upper neighbour (0 at clamped edges)
    double frac[3] = {};

    TrilinearStencil(const VoxelGrid3& grid, const Vec3& index);

    template <typename Values>
    double apply(const Values& v) const
    {
        const std::size_t b = base;
        const std::size_t sx = step[0], sy = step[1], sz = step[2];
        const double fx = frac[0], fy = frac[1], fz = frac[2];
        const double c00 = v[b] + fx * (v[b + sx] - v[b]);
        const double c10 = v[b + sy] + fx * (v[b + sy + sx] - v[b + sy]);
        const double c01 = v[b + sz] + fx * (v[b + sz + sx] - v[b + sz]);
        const double c11 = v[b + sz + sy] + fx * (v[b + sz + sy + sx] - v[b + sz + sy]);
        const double c0 = c00 + fy * (c10 - c00);
        const double c1 = c01 + fy * (c11 - c01);
        return c0 + fz * (c1 - c0);
    }
};

class ScalarField3 {
public:
    ScalarField3() = default;
    explicit ScalarField3(const VoxelGrid3& grid, double fill = 0.0);
    ScalarField3(const VoxelGrid3& grid, std::vector<double> values);

    const VoxelGrid3& grid() const { return grid_; }
    std::size_t size() const { return values_.size(); }

    std::span<const double> values() const { return values_; }
    std::span<double> values() { return values_; }
    const std::vector<double>& storage() const { return values_; }

    double& operator[](std::size_t i) { return values_[i]; }
    double operator[](std::size_t i) const { return values_[i]; }
    double& operator()(int i, int j, int k) { return values_[grid_.linear_index(i, j, k)]; }
    double operator()(int i, int j, int k) const
    {
        return values_[grid_.linear_index(i, j, k)];
    }

    // Trilinear value at a world position, 0 outside the bounding box.
    double sample(const Vec3& x) const;

    // Throws DataError if any value is NaN or infinite.
    void require_finite() const;

private:
    VoxelGrid3 grid_;
    std::vector<double> values_;
};

// Single-step event representation: mu0 before the transition time, mu1 from
// the transition time onwards. Attenuation in 1/cm, time in rotation periods.
struct EventVolume {
    ScalarField3 mu0;
    ScalarField3 mu1;
    ScalarField3 tstar;

    EventVolume() = default;
    EventVolume(ScalarField3 mu0, ScalarField3 mu1, ScalarField3 tstar);

    static EventVolume uniform(const VoxelGrid3& grid, double mu0, double mu1, double tstar);
    // A time-independent volume: mu0 = mu1 = field, tstar = `tstar`.
    static EventVolume from_static(const ScalarField3& field, double tstar);

    const VoxelGrid3& grid() const { return mu0.grid(); }
    void validate() const;
};

// mu(x, t) with interpolate-then-step semantics: the three parameter fields are
// interpolated independently, then mu0 is returned for t < t* and mu1 for
// t >= t*. Zero outside the grid.
double sample_event_volume(const EventVolume& vol, const Vec3& x, double t);

enum class BeamType { parallel, cone };

struct View {
    double angle = 0.0; // radians
    double time = 0.0;  // rotation periods
};

// Circular trajectory around the world z axis. At angle 0 the beam travels
// along +y and the detector column axis is +x; detector rows run along +z.
struct AcquisitionGeometry {
    BeamType beam = BeamType::parallel;
    double source_to_origin = 0.0;   // mm, cone only
    double origin_to_detector = 0.0; // mm
    int det_rows = 1;
    int det_cols = 1;
    double pixel_pitch = 1.0; // mm
    std::vector<View> views;
    double rotation_period = 1.0;
    int projections_per_rotation = 1;

    // Continuous scan: view i at angle start_angle + 2*pi*i/ppr and time
    // start_time + i/ppr.
    static AcquisitionGeometry circular(BeamType beam, int det_rows, int det_cols,
                                        double pixel_pitch, int projections_per_rotation,
                                        int n_views, double start_angle = 0.0,
                                        double start_time = 0.0);

    std::size_t n_views() const { return views.size(); }
    std::size_t pixels_per_view() const
    {
        return static_cast<std::size_t>(det_rows) * static_cast<std::size_t>(det_cols);
    }
    double time_per_view() const { return rotation_period / projections_per_rotation; }
    // Each view covers one exposure interval, so the scan occupies
    // [first time, last time + time_per_view).
    double scan_begin() const { return views.front().time; }
    double scan_end() const { return views.back().time + time_per_view(); }
    double scan_duration() const { return scan_end() - scan_begin(); }

    // Throws DataError on broken invariants (non-increasing times, uneven
    // angular step, bad detector description).
    void validate() const;
    // Additionally requires the >= 3 rotation span the event reconstruction needs.
    void require_event_span() const;

    bool operator==(const AcquisitionGeometry& other) const;
};

class ProjectionSet {
public:
    ProjectionSet() = default;
    explicit ProjectionSet(AcquisitionGeometry geometry, double fill = 0.0);
    ProjectionSet(AcquisitionGeometry geometry, std::vector<double> data);

    const AcquisitionGeometry& geometry() const { return geometry_; }
    std::size_t n_views() const { return geometry_.n_views(); }
    int rows() const { return geometry_.det_rows; }
    int cols() const { return geometry_.det_cols; }
    std::size_t size() const { return data_.size(); }

    std::span<const double> data() const { return data_; }
    std::span<double> data() { return data_; }
    std::span<const double> view(std::size_t v) const
    {
        return std::span<const double>(data_).subspan(v * geometry_.pixels_per_view(),
                                                      geometry_.pixels_per_view());
    }
    std::span<double> view(std::size_t v)
    {
        return std::span<double>(data_).subspan(v * geometry_.pixels_per_view(),
                                                geometry_.pixels_per_view());
    }
    double& at(std::size_t v, int row, int col)
    {
        return data_[v * geometry_.pixels_per_view() +
                     static_cast<std::size_t>(row) * geometry_.det_cols + col];
    }
    double at(std::size_t v, int row, int col) const
    {
        return data_[v * geometry_.pixels_per_view() +
                     static_cast<std::size_t>(row) * geometry_.det_cols + col];
    }

    void require_finite() const;

private:
    AcquisitionGeometry geometry_;
    std::vector<double> data_;
};

struct ReconParams {
    double lambda_t = 0.5;
    double lambda_0 = 0.3;
    double lambda_1 = 0.3;
    double lambda_delta = 1.0;
    double lambda_mu = 1.0;
    double epsilon = 1e-4; // 1/cm
    int n_iterations = 10;
    int n_subsets = 1;
    std::uint64_t rng_seed = 0;
    bool use_weights = false;
    double weight_floor = 0.01;
    double ray_step = 0.5; // fraction of voxel_size
    // Keep mu0/mu1 at their initial values and estimate only t*.
    bool fix_attenuations = false;
    int threads = 1;

    void validate() const;
};

struct WeightVolume {
    ScalarField3 values;
};

} // namespace dyrect
