#include "dyrect/analysis.hpp"
#include "dyrect/errors.hpp"
#include "dyrect/projector.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

namespace dyrect {

namespace {

void require_same_grid(const EventVolume& a, const EventVolume& b)
{
    if (a.grid() != b.grid())
        throw DataError("ground truth and reconstruction live on different grids");
}

std::vector<std::uint8_t> nonempty_mask(const EventVolume& gt, const MaskPolicy& policy)
{
    auto mask = metric_mask(gt, policy);
    if (mask_count(mask) == 0)
        throw DataError("metric mask is empty (no dynamic voxels)");
    return mask;
}

int bin_of(double t, double lo, double hi, int n)
{
    const int b = static_cast<int>(std::floor((t - lo) / (hi - lo) * n));
    return std::clamp(b, 0, n - 1);
}

std::string format_double(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

} // namespace

std::vector<std::uint8_t> metric_mask(const EventVolume& gt, const MaskPolicy& policy)
{
    const std::size_t n = gt.mu0.size();
    double max_dmu = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        max_dmu = std::max(max_dmu, std::abs(gt.mu1[i] - gt.mu0[i]));
    const double threshold = policy.contrast_fraction * max_dmu;
    std::vector<std::uint8_t> mask(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        const double d = std::abs(gt.mu1[i] - gt.mu0[i]);
        mask[i] = d != 0.0 && d >= threshold;
    }
    return mask;
}

std::size_t mask_count(const std::vector<std::uint8_t>& mask)
{
    return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), std::uint8_t{1}));
}

double mae_transition(const EventVolume& gt, const EventVolume& rec, const MaskPolicy& policy)
{
    require_same_grid(gt, rec);
    const auto mask = nonempty_mask(gt, policy);
    double acc = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < mask.size(); ++i) {
        if (!mask[i])
            continue;
        acc += std::abs(gt.tstar[i] - rec.tstar[i]);
        ++n;
    }
    return acc / static_cast<double>(n);
}

double median_transition(const EventVolume& rec, const std::vector<std::uint8_t>& mask)
{
    if (mask.size() != rec.tstar.size())
        throw DataError("mask size does not match the volume");
    std::vector<double> t;
    for (std::size_t i = 0; i < mask.size(); ++i)
        if (mask[i])
            t.push_back(rec.tstar[i]);
    if (t.empty())
        throw DataError("median over an empty mask");
    const std::size_t mid = t.size() / 2;
    std::nth_element(t.begin(), t.begin() + static_cast<std::ptrdiff_t>(mid), t.end());
    const double upper = t[mid];
    if (t.size() % 2 == 1)
        return upper;
    const double lower = *std::max_element(t.begin(), t.begin() + static_cast<std::ptrdiff_t>(mid));
    return 0.5 * (lower + upper);
}

std::int64_t CooccurrenceHistogram::total() const
{
    std::int64_t s = 0;
    for (const auto& row : counts)
        for (auto c : row)
            s += c;
    return s;
}

double CooccurrenceHistogram::diagonal_fraction(int band) const
{
    const std::int64_t all = total();
    if (all == 0)
        return 0.0;
    std::int64_t diag = 0;
    const int n = static_cast<int>(counts.size());
    for (int i = 0; i < n; ++i)
        for (int j = std::max(0, i - band); j <= std::min(n - 1, i + band); ++j)
            diag += counts[i][j];
    return static_cast<double>(diag) / static_cast<double>(all);
}

CooccurrenceHistogram cooccurrence_hist(const EventVolume& gt, const EventVolume& rec,
                                        int n_bins, double t_lo, double t_hi,
                                        const MaskPolicy& policy)
{
    if (n_bins < 2)
        throw DataError("co-occurrence histogram needs at least 2 bins");
    if (!(t_hi > t_lo))
        throw DataError("co-occurrence histogram needs t_hi > t_lo");
    require_same_grid(gt, rec);
    const auto mask = nonempty_mask(gt, policy);

    CooccurrenceHistogram h;
    for (int b = 0; b <= n_bins; ++b) {
        const double e = t_lo + (t_hi - t_lo) * b / n_bins;
        h.bins_gt.push_back(e);
        h.bins_rec.push_back(e);
    }
    h.counts.assign(static_cast<std::size_t>(n_bins), std::vector<std::int64_t>(n_bins, 0));
    for (std::size_t i = 0; i < mask.size(); ++i) {
        if (!mask[i])
            continue;
        ++h.counts[bin_of(gt.tstar[i], t_lo, t_hi, n_bins)][bin_of(rec.tstar[i], t_lo, t_hi, n_bins)];
    }
    return h;
}

AngleCategory classify_angle(double degrees)
{
    if (degrees <= 20.0 || degrees >= 160.0)
        return AngleCategory::parallel;
    if (degrees >= 80.0 && degrees <= 100.0)
        return AngleCategory::orthogonal;
    return AngleCategory::mid;
}

const char* category_name(AngleCategory c)
{
    switch (c) {
    case AngleCategory::parallel: return "parallel";
    case AngleCategory::mid: return "mid";
    case AngleCategory::orthogonal: return "orthogonal";
    }
    return "unknown";
}

FlowField flow_direction(const ScalarField3& tstar, const std::vector<std::uint8_t>& mask)
{
    const VoxelGrid3& g = tstar.grid();
    if (mask.size() != g.size())
        throw DataError("mask size does not match the volume");
    FlowField f;
    f.direction.assign(g.size(), Vec3::Zero());
    f.valid.assign(g.size(), 0);

    const int dims[3] = {g.nx, g.ny, g.nz};
    for (int k = 0; k < g.nz; ++k)
        for (int j = 0; j < g.ny; ++j)
            for (int i = 0; i < g.nx; ++i) {
                const std::size_t l = g.linear_index(i, j, k);
                if (!mask[l])
                    continue;
                Vec3 grad = Vec3::Zero();
                for (int a = 0; a < 3; ++a) {
                    int lo[3] = {i, j, k};
                    int hi[3] = {i, j, k};
                    --lo[a];
                    ++hi[a];
                    const int c = a == 0 ? i : (a == 1 ? j : k);
                    const bool has_lo = c > 0 && mask[g.linear_index(lo[0], lo[1], lo[2])];
                    const bool has_hi = c + 1 < dims[a] && mask[g.linear_index(hi[0], hi[1], hi[2])];
                    if (has_lo && has_hi)
                        grad[a] = (tstar(hi[0], hi[1], hi[2]) - tstar(lo[0], lo[1], lo[2])) / 2.0;
                    else if (has_hi)
                        grad[a] = tstar(hi[0], hi[1], hi[2]) - tstar[l];
                    else if (has_lo)
                        grad[a] = tstar[l] - tstar(lo[0], lo[1], lo[2]);
                }
                const double norm = grad.norm();
                if (norm > 0.0) {
                    f.direction[l] = grad / norm;
                    f.valid[l] = 1;
                } else {
                    ++f.zero_gradient;
                }
            }
    return f;
}

std::vector<std::optional<double>> flow_beam_angles(const EventVolume& gt,
                                                    const AcquisitionGeometry& geometry,
                                                    const std::vector<std::uint8_t>& mask)
{
    geometry.validate();
    const FlowField flow = flow_direction(gt.tstar, mask);
    const VoxelGrid3& g = gt.grid();
    const double t0 = geometry.scan_begin();
    const double dt = geometry.time_per_view();
    const auto last = static_cast<long>(geometry.n_views()) - 1;

    std::vector<std::optional<double>> angles(g.size());
    for (std::size_t l = 0; l < g.size(); ++l) {
        if (!flow.valid[l])
            continue;
        const long v = std::clamp(std::lround((gt.tstar[l] - t0) / dt), 0L, last);
        const ViewFrame frame = view_frame(geometry, static_cast<std::size_t>(v));
        Vec3 axis = frame.beam;
        if (geometry.beam == BeamType::cone) {
            const Vec3 source = -geometry.source_to_origin * frame.beam;
            axis = (g.voxel_center(l) - source).normalized();
        }
        const double c = std::clamp(flow.direction[l].dot(axis), -1.0, 1.0);
        angles[l] = std::acos(c) * 180.0 / std::numbers::pi;
    }
    return angles;
}

AngularBreakdown angular_breakdown(const EventVolume& gt, const EventVolume& rec,
                                   const AcquisitionGeometry& geometry,
                                   const MaskPolicy& policy)
{
    require_same_grid(gt, rec);
    const auto mask = nonempty_mask(gt, policy);
    const auto angles = flow_beam_angles(gt, geometry, mask);

    AngularBreakdown b;
    std::array<double, 3> acc{};
    for (std::size_t l = 0; l < mask.size(); ++l) {
        if (!mask[l])
            continue;
        if (!angles[l]) {
            ++b.zero_gradient_excluded;
            continue;
        }
        const auto c = static_cast<std::size_t>(classify_angle(*angles[l]));
        acc[c] += std::abs(gt.tstar[l] - rec.tstar[l]);
        ++b.counts[c];
    }
    for (std::size_t c = 0; c < 3; ++c)
        b.mae[c] = b.counts[c] ? acc[c] / static_cast<double>(b.counts[c]) : 0.0;
    return b;
}

ProjectionSet difference_sinogram(const ProjectionSet& measured)
{
    const AcquisitionGeometry& g = measured.geometry();
    const auto k = static_cast<std::size_t>(g.projections_per_rotation);
    if (g.n_views() < 2 * k)
        throw DataError("difference sinogram needs at least two rotations");
    ProjectionSet out(g);
    for (std::size_t v = k; v < g.n_views(); ++v) {
        const auto cur = measured.view(v);
        const auto prev = measured.view(v - k);
        auto dst = out.view(v);
        for (std::size_t p = 0; p < dst.size(); ++p)
            dst[p] = cur[p] - prev[p];
    }
    return out;
}

// Repeated views of a static object differ only by round-off in the ray setup.
constexpr double kRoundOffFloor = 1e-9;

std::optional<double> detect_event_time(const ProjectionSet& difference, double relative_threshold)
{
    if (!(relative_threshold > 0.0 && relative_threshold < 1.0))
        throw DataError("event detection threshold must lie in (0, 1)");
    std::vector<double> peak(difference.n_views(), 0.0);
    for (std::size_t v = 0; v < peak.size(); ++v)
        for (double d : difference.view(v))
            peak[v] = std::max(peak[v], std::abs(d));
    const double global = peak.empty() ? 0.0 : *std::max_element(peak.begin(), peak.end());
    if (global <= kRoundOffFloor)
        return std::nullopt;
    for (std::size_t v = 0; v < peak.size(); ++v)
        if (peak[v] > relative_threshold * global)
            return difference.geometry().views[v].time;
    return std::nullopt;
}

void write_histogram_csv(std::ostream& os, const CooccurrenceHistogram& hist)
{
    os << "gt_bin,rec_bin,gt_lo,gt_hi,rec_lo,rec_hi,count\n";
    for (std::size_t i = 0; i < hist.counts.size(); ++i)
        for (std::size_t j = 0; j < hist.counts[i].size(); ++j)
            os << i << ',' << j << ',' << format_double(hist.bins_gt[i]) << ','
               << format_double(hist.bins_gt[i + 1]) << ',' << format_double(hist.bins_rec[j]) << ','
               << format_double(hist.bins_rec[j + 1]) << ',' << hist.counts[i][j] << '\n';
}

void write_breakdown_csv(std::ostream& os, const AngularBreakdown& breakdown)
{
    static const char* ranges[3] = {"[0,20]u[160,180]", "(20,80)u(100,160)", "[80,100]"};
    os << "category,angle_range_deg,count,mae_rotations\n";
    for (std::size_t c = 0; c < 3; ++c)
        os << category_name(static_cast<AngleCategory>(c)) << ',' << ranges[c] << ','
           << breakdown.counts[c] << ',' << format_double(breakdown.mae[c]) << '\n';
    os << "zero_gradient,," << breakdown.zero_gradient_excluded << ",\n";
}

void MetricsReport::set(const std::string& key, double value)
{
    set(key, format_double(value));
}

void MetricsReport::set(const std::string& key, const std::string& value)
{
    for (auto& [k, v] : entries_)
        if (k == key) {
            v = value;
            return;
        }
    entries_.emplace_back(key, value);
}

void MetricsReport::write(std::ostream& os) const
{
    for (const auto& [k, v] : entries_)
        os << k << '=' << v << '\n';
}

} // namespace dyrect
