#pragma once

#include "dyrect/core.hpp"

#include <cstdint>
#include <vector>

namespace dyrect {

enum class PoreShape { sphere, channel, blob_union };
enum class FrontType { planar, radial };

// One dynamic pore. Shape parameters:
//   sphere      centers = {c},      radii = {r}
//   channel     centers = {p0, p1}, radii = {r}   (capsule around segment p0-p1)
//   blob_union  centers = {c0..cn}, radii = {r0..rn}
// The front anchor is centers[0]. Planar fronts arrive at
//   start + <x - anchor, direction> / speed,
// radial fronts at start + |x - anchor| / speed.
struct PoreRegion {
    PoreShape shape = PoreShape::sphere;
    std::vector<Vec3> centers;
    std::vector<double> radii;
    FrontType front = FrontType::planar;
    Vec3 front_direction = Vec3::UnitX();
    double front_speed = 1.0;      // mm per rotation period
    double front_start_time = 0.0; // rotation periods

    const Vec3& anchor() const { return centers.front(); }
    bool contains(const Vec3& x) const;
    double arrival_time(const Vec3& x) const; // before clamping to the dynamic window
    void validate() const;
};

struct FlowSpec {
    VoxelGrid3 grid;
    double matrix_mu = 1.0;
    double fluid0_mu = 0.2;
    double fluid1_mu = 1.2;
    // Matrix fills a z-aligned cylinder of this radius around the grid centre
    // (vacuum outside); 0 fills the whole grid.
    double matrix_radius = 0.0;
    // Relative amplitude of seeded uniform grain texture on the matrix.
    double matrix_texture = 0.0;
    std::vector<PoreRegion> pore_regions;
    double t_begin = 1.0;
    double t_end = 2.0;
    std::uint64_t rng_seed = 0;

    // Transition time written to voxels without an event.
    double static_tstar() const { return t_end + 10.0; }
    void validate() const;
};

// Static matrix with dynamic pores whose transition times are monotone fronts
// clamped to [t_begin, t_end]. Throws DataError when overlapping pores would
// assign different transition times to one voxel.
EventVolume build_flow_phantom(const FlowSpec& spec);

struct RuptureSpec {
    double matrix_mu = 2.0; // film / foam material
    double gas_mu = 0.05;   // bubble content
    double bubble_radius = 1.0;
    double wall_thickness = 0.2; // mm, along x
    double neck_radius = 0.6;    // radius of the film disc
    Vec3 center = Vec3::Zero();  // centre of the film
    double sample_radius = 0.0;  // as FlowSpec::matrix_radius
};

// Two gas bubbles separated along x by a film disc of `wall_thickness` and
// `neck_radius`. Film voxels switch from matrix to gas at `rupture_time`;
// everything else is static (t* = rupture_time + 10).
EventVolume build_film_rupture_phantom(const VoxelGrid3& grid, const RuptureSpec& spec,
                                       double rupture_time);

// Grid with the same bounding box as `coarse` but `factor` times finer.
VoxelGrid3 refine_grid(const VoxelGrid3& coarse, double factor);

// Box-filter resampling of a fine phantom onto a coarser grid with the same
// bounding box. mu0/mu1 are overlap-weighted means; t* is the mean over
// dynamic fine voxels weighted by overlap * |mu1 - mu0| (static voxels keep
// the averaged sentinel).
EventVolume downsample_event_volume(const EventVolume& fine, const VoxelGrid3& coarse);
ScalarField3 downsample_field(const ScalarField3& fine, const VoxelGrid3& coarse);

// Partial-volume voxelisation of a z-aligned tube (r_inner = 0 gives a
// solid cylinder) centred on the world z axis, using supersample^2 in-plane
// points per voxel.
ScalarField3 voxelize_tube(const VoxelGrid3& grid, double r_inner, double r_outer, double mu,
                           int supersample = 4);

} // namespace dyrect
