#pragma once

#include "dyrect/core.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

namespace dyrect {

// Voxels scored by the metrics: ground-truth dmu != 0, further restricted to
// |dmu| >= contrast_fraction * max|dmu| when contrast_fraction > 0.
struct MaskPolicy {
    double contrast_fraction = 0.5;
};

std::vector<std::uint8_t> metric_mask(const EventVolume& gt, const MaskPolicy& policy);
std::size_t mask_count(const std::vector<std::uint8_t>& mask);

// Mean |t*_gt - t*_rec| over the mask, in rotation periods. Throws DataError
// on an empty mask or mismatched grids.
double mae_transition(const EventVolume& gt, const EventVolume& rec,
                      const MaskPolicy& policy = {});

// Median reconstructed t* over the mask.
double median_transition(const EventVolume& rec, const std::vector<std::uint8_t>& mask);

struct CooccurrenceHistogram {
    std::vector<double> bins_gt;  // n_bins + 1 edges
    std::vector<double> bins_rec; // n_bins + 1 edges
    std::vector<std::vector<std::int64_t>> counts; // [gt bin][rec bin]

    std::int64_t total() const;
    // Share of the counts with |gt bin - rec bin| <= band.
    double diagonal_fraction(int band = 0) const;
};

// Joint histogram of (t*_gt, t*_rec) over the mask with n_bins equal bins
// spanning [t_lo, t_hi]; values outside are counted in the edge bins.
CooccurrenceHistogram cooccurrence_hist(const EventVolume& gt, const EventVolume& rec,
                                        int n_bins, double t_lo, double t_hi,
                                        const MaskPolicy& policy = {});

enum class AngleCategory { parallel = 0, mid = 1, orthogonal = 2 };

// parallel: [0, 20] or [160, 180] degrees; orthogonal: [80, 100]; mid otherwise.
AngleCategory classify_angle(double degrees);
const char* category_name(AngleCategory c);

struct AngularBreakdown {
    std::array<double, 3> mae{};          // rotation periods, indexed by AngleCategory
    std::array<std::size_t, 3> counts{};
    std::size_t zero_gradient_excluded = 0;
};

// Angle between the ground-truth flow direction (normalised grad t*) and the
// optical axis of the view acquired nearest to t*_gt, per masked voxel;
// reports per-category MAE of rec vs. gt.
AngularBreakdown angular_breakdown(const EventVolume& gt, const EventVolume& rec,
                                   const AcquisitionGeometry& geometry,
                                   const MaskPolicy& policy = {});

// Per-voxel angle (degrees) used by angular_breakdown, nullopt where the
// gradient vanishes or the voxel is masked out.
std::vector<std::optional<double>> flow_beam_angles(const EventVolume& gt,
                                                    const AcquisitionGeometry& geometry,
                                                    const std::vector<std::uint8_t>& mask);

struct FlowField {
    std::vector<Vec3> direction;   // unit vectors, zero where invalid
    std::vector<std::uint8_t> valid;
    std::size_t zero_gradient = 0; // masked voxels with vanishing gradient
};

// Normalised central-difference gradient of t*, using only neighbours inside
// the mask (one-sided at the mask border).
FlowField flow_direction(const ScalarField3& tstar, const std::vector<std::uint8_t>& mask);

// View i minus view i - projections_per_rotation; the first rotation is 0.
ProjectionSet difference_sinogram(const ProjectionSet& measured);

// Time of the first view whose largest |difference| exceeds
// relative_threshold times the global maximum; nullopt when no difference
// rises above round-off (1e-9 optical depth).
std::optional<double> detect_event_time(const ProjectionSet& difference,
                                        double relative_threshold = 0.1);

void write_histogram_csv(std::ostream& os, const CooccurrenceHistogram& hist);
void write_breakdown_csv(std::ostream& os, const AngularBreakdown& breakdown);

// Line-oriented key=value report.
class MetricsReport {
public:
    void set(const std::string& key, double value);
    void set(const std::string& key, const std::string& value);
    const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }
    void write(std::ostream& os) const;

private:
    std::vector<std::pair<std::string, std::string>> entries_;
};

} // namespace dyrect
