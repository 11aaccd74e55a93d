#pragma once

#include "dyrect/core.hpp"
#include "dyrect/projector.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <utility>
#include <vector>

namespace dyrect {

// Partition of the view indices into ordered subsets. Views inside a subset
// are sorted by time.
struct SubsetPlan {
    std::vector<std::vector<std::size_t>> subsets;
    std::uint64_t rng_seed = 0;
};

// Random, seed-deterministic partition stratified over consecutive blocks of
// n_subsets views, so every subset samples the whole scan evenly. Throws
// DataError when subsets would hold fewer than 8 views (n_subsets > 1) or
// would cover less than 80% of the scan duration.
SubsetPlan make_subsets(const AcquisitionGeometry& geometry, int n_subsets,
                        std::uint64_t rng_seed);

// Seeded split of indices [0, n) into n_subsets parts whose sizes differ by at
// most one; each block of n_subsets consecutive indices feeds every part once.
std::vector<std::vector<std::size_t>> stratified_partition(std::size_t n, int n_subsets,
                                                          std::uint64_t rng_seed);

// Fraction of the scan duration covered by a subset, counting one exposure
// interval for its last view.
double subset_time_coverage(const AcquisitionGeometry& geometry,
                            std::span<const std::size_t> subset);

// C = (P - P_hat) / L per pixel, 0 where L = 0.
void correction_terms(std::span<const double> measured, std::span<const double> estimated,
                      std::span<const double> lengths, std::span<double> out);
ProjectionSet correction_terms(const ProjectionSet& measured, const ProjectionSet& estimated,
                               std::span<const double> lengths);

// Time bounds of the scan used by the transition-time updates.
struct ScanClock {
    double begin = 0.0;
    double end = 0.0;
    double period = 1.0;

    static ScanClock from(const AcquisitionGeometry& geometry);
};

// The one-rotation covariance windows around a prior transition time:
// minus = [split - period, split), plus = [split, split + period). `split`
// equals t_prev unless a window would leave the scan, in which case both are
// shifted inward.
struct CovarianceWindows {
    double minus_begin = 0.0;
    double split = 0.0;
    double plus_end = 0.0;
};
CovarianceWindows covariance_windows(const ScanClock& clock, double t_prev);

struct CorrectionSample {
    double time = 0.0;
    double correction = 0.0;
};

struct VoxelCorrectionStats {
    double sigma_minus = 0.0;
    double sigma_plus = 0.0;
    double mean_minus = 0.0;
    double mean_plus = 0.0;
    std::size_t n_minus = 0;
    std::size_t n_plus = 0;
};

// Single pass over samples, accumulating the (time, correction) population
// covariance and mean per window. Samples outside both windows are ignored.
VoxelCorrectionStats window_stats(std::span<const CorrectionSample> samples,
                                  const CovarianceWindows& windows);

// Reads the correction stack at the detector position of x_m in every listed
// view whose time falls inside the windows around t_prev. `corrections` is
// laid out [k][row][col] for k over `views`.
std::vector<CorrectionSample> gather_samples(std::span<const double> corrections,
                                             const AcquisitionGeometry& geometry,
                                             std::span<const std::size_t> views,
                                             const Vec3& x_m, const CovarianceWindows& windows,
                                             const MotionOption& motion = std::nullopt);

VoxelCorrectionStats voxel_stats(const ProjectionSet& corrections, const Vec3& x_m,
                                 double t_prev, const MotionOption& motion = std::nullopt);

// Covariance-balancing transition-time step:
//   dt = (sigma+ - sigma-) * min(lambda_delta |dmu|, lambda_mu) / (dmu + sign(dmu) eps)
// clipped to half a rotation, relaxed by lambda_t (times `weight`, capped at
// 1) and clamped to the scan extended by one rotation on each side.
// sign(0) is taken as +1.
double transition_step(const VoxelCorrectionStats& stats, double mu0, double mu1,
                       const ReconParams& params, double period);
double update_transition_time(const VoxelCorrectionStats& stats, double mu0, double mu1,
                              const ReconParams& params, double t_prev, const ScanClock& clock,
                              double weight = 1.0);

// Alternating attenuation step: candidate mu0 is the mean of mu(t_j) + C_j over
// samples with t_j < t_new, candidate mu1 over t_j >= t_new, where mu(t_j) is
// the prior step model (t_prev). Each phase moves by lambda (times `weight`,
// capped at 1) towards its candidate and is clamped at 0; a phase without
// samples is left unchanged.
std::pair<double, double> update_attenuations(std::span<const CorrectionSample> samples,
                                              double t_prev, double t_new, double mu0_prev,
                                              double mu1_prev, const ReconParams& params,
                                              double weight = 1.0);

// w = floor + |mu1 - mu0|, rescaled to mean 1.
WeightVolume compute_weights(const EventVolume& vol, double floor);

// Middle of the scan, the default transition-time initialisation.
double mid_scan_time(const AcquisitionGeometry& geometry);

struct DyrectProgress {
    int iteration = 0;
    int subset = 0;
    double residual = 0.0; // mean squared projection error of this subset
};

struct DyrectResult {
    EventVolume volume;
    // Mean squared projection error per iteration, accumulated over the
    // subsets' forward projections.
    std::vector<double> residuals;
};

// Ordered-subset event reconstruction. Per subset: forward project the
// current event volume at the subset's view times, form correction terms,
// then update every voxel's transition time and attenuations from its
// detector samples. Throws NumericalError if the residual becomes non-finite.
DyrectResult reconstruct_dyrect(const ProjectionSet& measured, const ReconParams& params,
                                const EventVolume& init,
                                const MotionOption& motion = std::nullopt,
                                const std::function<void(const DyrectProgress&)>& progress = {});

} // namespace dyrect
