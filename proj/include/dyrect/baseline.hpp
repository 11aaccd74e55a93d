#pragma once

#include "dyrect/core.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace dyrect {

struct SirtOptions {
    int n_subsets = 1; // > 1 gives the greedier SART-like schedule
    std::uint64_t rng_seed = 0;
    double ray_step = 0.5;
    int threads = 1;
};

struct SirtResult {
    ScalarField3 volume;
    // Mean squared projection error over the used views, one entry per
    // iteration, measured before that iteration's update.
    std::vector<double> residuals;
};

// Static SIRT: mu <- max(0, mu + relax * mean_j C(V(t_j, x))) over `views`,
// starting from zero.
SirtResult reconstruct_sirt(const ProjectionSet& measured, std::span<const std::size_t> views,
                            const VoxelGrid3& grid, int n_iterations, double relax,
                            const SirtOptions& options = {});

struct Frame {
    double time = 0.0; // centre of the window, rotation periods
    std::size_t first_view = 0;
    ScalarField3 volume;
};

// One SIRT reconstruction per window of `window_views` consecutive views,
// advancing by `stride_views`.
std::vector<Frame> reconstruct_sliding_window(const ProjectionSet& measured, int window_views,
                                              int stride_views, const VoxelGrid3& grid,
                                              int n_iterations, double relax = 1.0,
                                              const SirtOptions& options = {});

double rmse(const ScalarField3& a, const ScalarField3& b);

} // namespace dyrect
