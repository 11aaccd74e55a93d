#pragma once

#include "dyrect/core.hpp"
#include "dyrect/phantom.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace dyrect {

enum class PhantomKind { flow, rupture };

struct PhantomConfig {
    PhantomKind kind = PhantomKind::flow;
    int size = 64;               // voxels per axis of the reconstruction grid
    double voxel_size = 0.1;     // mm
    double generation_factor = 1.5; // generation grid is this much finer
    // flow
    double matrix_mu = 1.0;
    double fluid0_mu = 0.2;
    double fluid1_mu = 1.2;
    double matrix_radius = 0.0;
    double matrix_texture = 0.0;
    double t_begin = 1.0;
    double t_end = 2.0;
    std::vector<PoreRegion> regions;
    // rupture
    RuptureSpec rupture;
    double rupture_time = 1.4;
};

struct GeometryConfig {
    BeamType beam = BeamType::parallel;
    int det_rows = 64;
    int det_cols = 96;
    double pixel_pitch = 0.1;       // mm
    double source_to_origin = 0.0;  // mm, cone only
    double origin_to_detector = 0.0;
    int projections_per_rotation = 180;
    int n_views = 540;
    double start_angle_deg = 0.0;
    double start_time = 0.0;
};

enum class ReconMethod { dyrect, sirt, sliding };
enum class AttenuationInit { zero, ground_truth };

struct ReconConfig {
    ReconMethod method = ReconMethod::dyrect;
    ReconParams params;
    AttenuationInit init_attenuations = AttenuationInit::zero;
    bool init_tstar_mid_scan = true;
    double init_tstar = 0.0; // used when init_tstar_mid_scan is false
    int sirt_iterations = 10;
    double sirt_relax = 1.0;
    int sirt_subsets = 1;
    int window_views = 40;
    int stride_views = 40;
};

struct NoiseConfig {
    double sigma = 0.0; // additive Gaussian on optical depth
};

struct AnalysisConfig {
    double contrast_fraction = 0.5;
    int hist_bins = 10;
    double diff_threshold = 0.1;
};

struct StageToggles {
    bool phantom = true;
    bool simulate = true;
    bool reconstruct = true;
    bool analyze = true;
};

struct RunConfig {
    PhantomConfig phantom;
    GeometryConfig geometry;
    ReconConfig recon;
    NoiseConfig noise;
    AnalysisConfig analysis;
    StageToggles stages;
    std::uint64_t seed = 0;
    int threads = 1;
    std::filesystem::path output_dir = "dyrect_out";

    // Unknown keys and out-of-range values throw DataError.
    static RunConfig from_key_values(const std::map<std::string, std::string>& kv);
    static RunConfig load(const std::filesystem::path& path);

    // Every setting with its resolved value, in a fixed order. The output
    // directory is left out so that manifests only depend on the inputs.
    std::vector<std::pair<std::string, std::string>> to_key_values() const;

    void validate() const;
};

} // namespace dyrect
