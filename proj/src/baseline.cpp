#include "dyrect/baseline.hpp"
#include "dyrect/errors.hpp"
#include "dyrect/event_reconstruction.hpp"
#include "dyrect/parallel.hpp"
#include "dyrect/projector.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace dyrect {

SirtResult reconstruct_sirt(const ProjectionSet& measured, std::span<const std::size_t> views,
                            const VoxelGrid3& grid, int n_iterations, double relax,
                            const SirtOptions& options)
{
    if (views.empty())
        throw DataError("SIRT needs a non-empty view subset");
    if (n_iterations < 1 || !(relax > 0.0))
        throw DataError("SIRT needs positive iterations and relaxation");
    const AcquisitionGeometry& g = measured.geometry();
    g.validate();
    const std::size_t ppv = g.pixels_per_view();
    const std::vector<double> all_lengths = intersection_lengths(g, grid);
    const DetectorMapper mapper(g);
    const ProjectorOptions popts{options.ray_step, options.threads};

    std::vector<std::vector<std::size_t>> subsets;
    for (const auto& part : stratified_partition(views.size(), options.n_subsets, options.rng_seed)) {
        std::vector<std::size_t> s;
        for (std::size_t p : part)
            s.push_back(views[p]);
        subsets.push_back(std::move(s));
    }

    SirtResult result{ScalarField3(grid), {}};
    ScalarField3& mu = result.volume;
    std::vector<double> meas, est, len, corr;
    for (int it = 0; it < n_iterations; ++it) {
        double sse = 0.0;
        for (const auto& subset : subsets) {
            const std::size_t n = subset.size() * ppv;
            meas.resize(n);
            est.resize(n);
            len.resize(n);
            corr.resize(n);
            for (std::size_t k = 0; k < subset.size(); ++k) {
                const auto src = measured.view(subset[k]);
                std::copy(src.begin(), src.end(), meas.begin() + k * ppv);
                std::copy_n(all_lengths.begin() + subset[k] * ppv, ppv, len.begin() + k * ppv);
            }
            project_static_views(mu, g, subset, popts, est);
            for (std::size_t i = 0; i < n; ++i)
                sse += (meas[i] - est[i]) * (meas[i] - est[i]);
            correction_terms(meas, est, len, corr);

            const double scale = relax / static_cast<double>(subset.size());
            parallel_for(grid.size(), options.threads, [&](std::size_t begin, std::size_t end) {
                for (std::size_t l = begin; l < end; ++l) {
                    const Vec3 x = grid.voxel_center(l);
                    double acc = 0.0;
                    for (std::size_t k = 0; k < subset.size(); ++k) {
                        const std::span<const double> image(corr.data() + k * ppv, ppv);
                        acc += sample_detector(image, g.det_rows, g.det_cols, mapper(subset[k], x));
                    }
                    mu[l] = std::max(0.0, mu[l] + scale * acc);
                }
            });
        }
        if (!std::isfinite(sse))
            throw NumericalError("SIRT residual became non-finite");
        result.residuals.push_back(sse / static_cast<double>(views.size() * ppv));
    }
    return result;
}

std::vector<Frame> reconstruct_sliding_window(const ProjectionSet& measured, int window_views,
                                              int stride_views, const VoxelGrid3& grid,
                                              int n_iterations, double relax,
                                              const SirtOptions& options)
{
    const AcquisitionGeometry& g = measured.geometry();
    const auto n_views = static_cast<int>(g.n_views());
    if (window_views < 1 || window_views > n_views)
        throw DataError("sliding window must hold between 1 and n_views views");
    if (stride_views < 1)
        throw DataError("sliding window stride must be positive");

    std::vector<Frame> frames;
    for (int first = 0; first + window_views <= n_views; first += stride_views) {
        std::vector<std::size_t> views(static_cast<std::size_t>(window_views));
        std::iota(views.begin(), views.end(), static_cast<std::size_t>(first));
        const double t0 = g.views[views.front()].time;
        const double t1 = g.views[views.back()].time + g.time_per_view();
        frames.push_back({0.5 * (t0 + t1), static_cast<std::size_t>(first),
                          reconstruct_sirt(measured, views, grid, n_iterations, relax, options).volume});
    }
    return frames;
}

double rmse(const ScalarField3& a, const ScalarField3& b)
{
    if (a.grid() != b.grid())
        throw DataError("rmse needs fields on the same grid");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        acc += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(acc / static_cast<double>(a.size()));
}

} // namespace dyrect
