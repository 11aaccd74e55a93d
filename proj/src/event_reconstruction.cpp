#include "dyrect/event_reconstruction.hpp"
#include "dyrect/errors.hpp"
#include "dyrect/parallel.hpp"
#include "dyrect/running_covariance.hpp"

#include <Eigen/LU>
#include <algorithm>
#include <cassert>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

namespace dyrect {

namespace {

// Fisher-Yates driven directly by the engine output so that plans are
// reproducible across standard library implementations.
template <typename T>
void seeded_shuffle(std::vector<T>& v, std::mt19937_64& rng)
{
    for (std::size_t i = v.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng() % i);
        std::swap(v[i - 1], v[j]);
    }
}

struct SubsetWorkspace {
    std::vector<double> measured;
    std::vector<double> estimated;
    std::vector<double> lengths;
    std::vector<double> corrections;
};

} // namespace

std::vector<std::vector<std::size_t>> stratified_partition(std::size_t n, int n_subsets,
                                                          std::uint64_t rng_seed)
{
    if (n_subsets < 1 || static_cast<std::size_t>(n_subsets) > n)
        throw DataError("n_subsets must lie in [1, n_views]");
    const auto ns = static_cast<std::size_t>(n_subsets);
    std::vector<std::vector<std::size_t>> parts(ns);

    // Each block of ns consecutive indices contributes one index to every
    // part. The first and last full block share their permutation so every
    // part reaches from the first block to the last.
    std::mt19937_64 rng(rng_seed);
    std::vector<std::size_t> order(ns);
    std::iota(order.begin(), order.end(), std::size_t{0});
    const std::size_t full_blocks = n / ns;
    std::vector<std::size_t> first_perm;
    for (std::size_t b = 0; b * ns < n; ++b) {
        std::vector<std::size_t> perm = order;
        seeded_shuffle(perm, rng);
        if (b == 0)
            first_perm = perm;
        else if (b + 1 == full_blocks)
            perm = first_perm;
        const std::size_t count = std::min(ns, n - b * ns);
        for (std::size_t a = 0; a < count; ++a)
            parts[perm[a]].push_back(b * ns + a);
    }
    return parts;
}

SubsetPlan make_subsets(const AcquisitionGeometry& geometry, int n_subsets,
                        std::uint64_t rng_seed)
{
    geometry.validate();
    const std::size_t n = geometry.n_views();
    if (n_subsets < 1 || static_cast<std::size_t>(n_subsets) > n)
        throw DataError("n_subsets must lie in [1, n_views]");
    if (n_subsets > 1 && n / static_cast<std::size_t>(n_subsets) < 8)
        throw DataError("n_subsets = " + std::to_string(n_subsets) +
                        " leaves fewer than 8 views per subset");

    SubsetPlan plan;
    plan.rng_seed = rng_seed;
    plan.subsets = stratified_partition(n, n_subsets, rng_seed);
    for (const auto& s : plan.subsets)
        if (subset_time_coverage(geometry, s) < 0.8)
            throw DataError("subsets too small to cover 80% of the scan duration");
    return plan;
}

double subset_time_coverage(const AcquisitionGeometry& geometry,
                            std::span<const std::size_t> subset)
{
    if (subset.empty())
        return 0.0;
    double lo = geometry.views.at(subset.front()).time;
    double hi = lo;
    for (std::size_t v : subset) {
        lo = std::min(lo, geometry.views.at(v).time);
        hi = std::max(hi, geometry.views.at(v).time);
    }
    return (hi - lo + geometry.time_per_view()) / geometry.scan_duration();
}

void correction_terms(std::span<const double> measured, std::span<const double> estimated,
                      std::span<const double> lengths, std::span<double> out)
{
    if (measured.size() != estimated.size() || measured.size() != lengths.size() ||
        measured.size() != out.size())
        throw DataError("correction terms need equally sized stacks");
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = lengths[i] > 0.0 ? (measured[i] - estimated[i]) / lengths[i] : 0.0;
}

ProjectionSet correction_terms(const ProjectionSet& measured, const ProjectionSet& estimated,
                               std::span<const double> lengths)
{
    if (!(measured.geometry() == estimated.geometry()))
        throw DataError("measured and estimated projections have different geometries");
    ProjectionSet out(measured.geometry());
    correction_terms(measured.data(), estimated.data(), lengths, out.data());
    return out;
}

ScanClock ScanClock::from(const AcquisitionGeometry& geometry)
{
    return {geometry.scan_begin(), geometry.scan_end(), geometry.rotation_period};
}

CovarianceWindows covariance_windows(const ScanClock& clock, double t_prev)
{
    double split = t_prev;
    if (split - clock.period < clock.begin)
        split = clock.begin + clock.period;
    if (split + clock.period > clock.end)
        split = clock.end - clock.period;
    return {split - clock.period, split, split + clock.period};
}

VoxelCorrectionStats window_stats(std::span<const CorrectionSample> samples,
                                  const CovarianceWindows& w)
{
    RunningCovariance minus, plus;
    for (const auto& s : samples) {
        if (s.time >= w.minus_begin && s.time < w.split)
            minus.add(s.time, s.correction);
        else if (s.time >= w.split && s.time < w.plus_end)
            plus.add(s.time, s.correction);
    }
    VoxelCorrectionStats st;
    st.sigma_minus = minus.covariance();
    st.sigma_plus = plus.covariance();
    st.mean_minus = minus.mean_y();
    st.mean_plus = plus.mean_y();
    st.n_minus = minus.count();
    st.n_plus = plus.count();
    return st;
}

std::vector<CorrectionSample> gather_samples(std::span<const double> corrections,
                                             const AcquisitionGeometry& geometry,
                                             std::span<const std::size_t> views,
                                             const Vec3& x_m, const CovarianceWindows& windows,
                                             const MotionOption& motion)
{
    const std::size_t ppv = geometry.pixels_per_view();
    if (corrections.size() != views.size() * ppv)
        throw DataError("correction stack does not match the view list");
    std::vector<CorrectionSample> out;
    for (std::size_t k = 0; k < views.size(); ++k) {
        const double t = geometry.views.at(views[k]).time;
        if (t < windows.minus_begin || t >= windows.plus_end)
            continue;
        const Vec3 x = motion ? motion->apply_inverse(x_m, t) : x_m;
        const DetectorPoint p = project_point(geometry, views[k], x);
        out.push_back({t, sample_detector(corrections.subspan(k * ppv, ppv), geometry.det_rows,
                                          geometry.det_cols, p)});
    }
    return out;
}

VoxelCorrectionStats voxel_stats(const ProjectionSet& corrections, const Vec3& x_m,
                                 double t_prev, const MotionOption& motion)
{
    const AcquisitionGeometry& g = corrections.geometry();
    g.require_event_span();
    std::vector<std::size_t> views(g.n_views());
    std::iota(views.begin(), views.end(), std::size_t{0});
    const auto windows = covariance_windows(ScanClock::from(g), t_prev);
    const auto samples = gather_samples(corrections.data(), g, views, x_m, windows, motion);
    return window_stats(samples, windows);
}

double transition_step(const VoxelCorrectionStats& stats, double mu0, double mu1,
                       const ReconParams& params, double period)
{
    // sigma carries time * attenuation; the ratio below is attenuation over
    // attenuation, so the step is a time.
    const double dmu = mu1 - mu0;
    const double sign = dmu >= 0.0 ? 1.0 : -1.0;
    const double gain = std::min(params.lambda_delta * std::abs(dmu), params.lambda_mu);
    const double dt = (stats.sigma_plus - stats.sigma_minus) * gain / (dmu + sign * params.epsilon);
    return std::clamp(dt, -0.5 * period, 0.5 * period);
}

double update_transition_time(const VoxelCorrectionStats& stats, double mu0, double mu1,
                              const ReconParams& params, double t_prev, const ScanClock& clock,
                              double weight)
{
    const double lambda = std::min(1.0, params.lambda_t * weight);
    const double t_new = t_prev + lambda * transition_step(stats, mu0, mu1, params, clock.period);
    return std::clamp(t_new, clock.begin - clock.period, clock.end + clock.period);
}

std::pair<double, double> update_attenuations(std::span<const CorrectionSample> samples,
                                              double t_prev, double t_new, double mu0_prev,
                                              double mu1_prev, const ReconParams& params,
                                              double weight)
{
    // Accumulate deviations from the phase's prior value rather than absolute
    // values, so zero corrections give a zero step exactly.
    double dev0 = 0.0, dev1 = 0.0;
    std::size_t n0 = 0, n1 = 0;
    for (const auto& s : samples) {
        const double corrected = (s.time < t_prev ? mu0_prev : mu1_prev) + s.correction;
        if (s.time < t_new) {
            dev0 += s.time < t_prev ? s.correction : corrected - mu0_prev;
            ++n0;
        } else {
            dev1 += s.time >= t_prev ? s.correction : corrected - mu1_prev;
            ++n1;
        }
    }
    double mu0 = mu0_prev, mu1 = mu1_prev;
    if (n0 > 0) {
        const double lambda = std::min(1.0, params.lambda_0 * weight);
        mu0 = std::max(0.0, mu0_prev + lambda * (dev0 / static_cast<double>(n0)));
    }
    if (n1 > 0) {
        const double lambda = std::min(1.0, params.lambda_1 * weight);
        mu1 = std::max(0.0, mu1_prev + lambda * (dev1 / static_cast<double>(n1)));
    }
    return {mu0, mu1};
}

WeightVolume compute_weights(const EventVolume& vol, double floor)
{
    if (!(floor >= 0.0))
        throw DataError("weight floor must be non-negative");
    ScalarField3 w(vol.grid());
    double sum = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
        w[i] = floor + std::abs(vol.mu1[i] - vol.mu0[i]);
        sum += w[i];
    }
    const double mean = sum / static_cast<double>(w.size());
    for (std::size_t i = 0; i < w.size(); ++i)
        w[i] = mean > 0.0 ? w[i] / mean : 1.0;
    return {std::move(w)};
}

double mid_scan_time(const AcquisitionGeometry& geometry)
{
    return 0.5 * (geometry.scan_begin() + geometry.scan_end());
}

DyrectResult reconstruct_dyrect(const ProjectionSet& measured, const ReconParams& params,
                                const EventVolume& init, const MotionOption& motion,
                                const std::function<void(const DyrectProgress&)>& progress)
{
    params.validate();
    init.validate();
    const AcquisitionGeometry& g = measured.geometry();
    g.require_event_span();
    measured.require_finite();

    const VoxelGrid3& grid = init.grid();
    const ScanClock clock = ScanClock::from(g);
    const SubsetPlan plan = make_subsets(g, params.n_subsets, params.rng_seed);
    const std::vector<double> all_lengths = intersection_lengths(g, grid);
    const std::size_t ppv = g.pixels_per_view();
    const ProjectorOptions popts{params.ray_step, params.threads};
    const DetectorMapper mapper(g);

    // Reconstruction-to-acquisition inverse maps, one per view.
    std::vector<Eigen::Matrix4d> inverse_motion;
    if (motion) {
        inverse_motion.reserve(g.n_views());
        for (const auto& v : g.views)
            inverse_motion.push_back(motion->matrix_at(v.time).inverse());
    }

    DyrectResult result{init, {}};
    EventVolume& vol = result.volume;
    EventVolume next = vol;
    SubsetWorkspace ws;

    const double total_pixels = static_cast<double>(g.n_views() * ppv);
    for (int it = 0; it < params.n_iterations; ++it) {
        const WeightVolume weights =
            params.use_weights ? compute_weights(vol, params.weight_floor) : WeightVolume{};
        double iteration_sse = 0.0;

        for (std::size_t s = 0; s < plan.subsets.size(); ++s) {
            const auto& views = plan.subsets[s];
            const std::size_t n = views.size() * ppv;
            ws.measured.resize(n);
            ws.estimated.resize(n);
            ws.lengths.resize(n);
            ws.corrections.resize(n);
            for (std::size_t k = 0; k < views.size(); ++k) {
                const auto src = measured.view(views[k]);
                std::copy(src.begin(), src.end(), ws.measured.begin() + k * ppv);
                std::copy_n(all_lengths.begin() + views[k] * ppv, ppv, ws.lengths.begin() + k * ppv);
            }
            forward_project_views(vol, g, views, motion, popts, ws.estimated);

            // Fixed-order reduction keeps the trace independent of the thread count.
            double sse = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                const double r = ws.measured[i] - ws.estimated[i];
                sse += r * r;
            }
            if (!std::isfinite(sse))
                throw NumericalError("projection residual became non-finite");
            iteration_sse += sse;
            correction_terms(ws.measured, ws.estimated, ws.lengths, ws.corrections);

            std::vector<double> times(views.size());
            for (std::size_t k = 0; k < views.size(); ++k)
                times[k] = g.views[views[k]].time;

            parallel_for(grid.size(), params.threads, [&](std::size_t begin, std::size_t end) {
                std::vector<CorrectionSample> samples;
                for (std::size_t l = begin; l < end; ++l) {
                    const double t_prev = vol.tstar[l];
                    const double m0 = vol.mu0[l];
                    const double m1 = vol.mu1[l];
                    next.tstar[l] = t_prev;
                    next.mu0[l] = m0;
                    next.mu1[l] = m1;
                    const double gain =
                        std::min(params.lambda_delta * std::abs(m1 - m0), params.lambda_mu);
                    if (params.fix_attenuations && gain == 0.0)
                        continue; // the transition step is exactly zero

                    const CovarianceWindows win = covariance_windows(clock, t_prev);
                    assert(std::abs(win.split - win.minus_begin - clock.period) < 1e-9 &&
                           std::abs(win.plus_end - win.split - clock.period) < 1e-9);
                    const Vec3 x_m = grid.voxel_center(l);
                    samples.clear();
                    const auto first = std::lower_bound(times.begin(), times.end(), win.minus_begin);
                    const auto last = std::lower_bound(times.begin(), times.end(), win.plus_end);
                    for (auto tp = first; tp != last; ++tp) {
                        const auto k = static_cast<std::size_t>(tp - times.begin());
                        Vec3 x = x_m;
                        if (motion) {
                            const Eigen::Matrix4d& m = inverse_motion[views[k]];
                            x = m.topLeftCorner<3, 3>() * x_m + m.topRightCorner<3, 1>();
                        }
                        const DetectorPoint p = mapper(views[k], x);
                        const std::span<const double> image(ws.corrections.data() + k * ppv, ppv);
                        samples.push_back({*tp, sample_detector(image, g.det_rows, g.det_cols, p)});
                    }

                    const double w = params.use_weights ? weights.values[l] : 1.0;
                    const VoxelCorrectionStats st = window_stats(samples, win);
                    const double t_new = update_transition_time(st, m0, m1, params, t_prev, clock, w);
                    next.tstar[l] = t_new;
                    if (!params.fix_attenuations) {
                        const auto [n0, n1] = update_attenuations(samples, t_prev, t_new, m0, m1, params, w);
                        next.mu0[l] = n0;
                        next.mu1[l] = n1;
                    }
                }
            });
            std::swap(vol, next);

            if (progress)
                progress({it, static_cast<int>(s), sse / static_cast<double>(n)});
        }
        result.residuals.push_back(iteration_sse / total_pixels);
    }
    return result;
}

} // namespace dyrect
