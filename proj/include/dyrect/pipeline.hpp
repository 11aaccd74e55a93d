#pragma once

#include "dyrect/analysis.hpp"
#include "dyrect/baseline.hpp"
#include "dyrect/config.hpp"
#include "dyrect/core.hpp"

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace dyrect {

const char* version_string();

struct Phantom {
    EventVolume generation; // fine grid used to simulate projections
    EventVolume truth;      // downsampled to the reconstruction grid
};

VoxelGrid3 reconstruction_grid(const RunConfig& config);
Phantom build_phantom(const RunConfig& config);
AcquisitionGeometry build_geometry(const RunConfig& config);

// Forward projection of the generation phantom plus optional Gaussian noise
// on optical depth, seeded from the config.
ProjectionSet simulate(const RunConfig& config, const EventVolume& generation);

struct ReconOutput {
    std::optional<EventVolume> events; // dyrect, or derived from sliding frames
    std::optional<ScalarField3> static_volume; // sirt
    std::vector<Frame> frames;         // sliding
    std::vector<double> residuals;     // per iteration (last frame for sliding)
};

// `truth` is only consulted for recon.init_attenuations = ground_truth.
ReconOutput reconstruct(const RunConfig& config, const ProjectionSet& measured,
                        const EventVolume* truth);

// Per-voxel event estimate from a frame series: mu0 = first frame, mu1 = last
// frame, t* halfway between the frames bracketing the first crossing of the
// midpoint between them. Voxels that do not change get the sentinel
// last frame time + 10.
EventVolume events_from_frames(const std::vector<Frame>& frames);

enum class Metric { mae, hist, angles, diffsino };

// Adds the chosen metric's entries to `report` and writes any tables into
// `output_dir` (histogram.csv, angles.csv, diffsino.*). `rec` may be null
// for diffsino.
void analyze(const RunConfig& config, Metric metric, const EventVolume& truth,
             const EventVolume* rec, const ProjectionSet* measured,
             const std::filesystem::path& output_dir, MetricsReport& report);

// Manifest text: version plus the resolved config.
std::string manifest_text(const RunConfig& config);

void write_manifest(const RunConfig& config, const std::filesystem::path& dir);
// recon_* / sirt.* / frames/ plus residuals.csv, depending on the method.
void write_recon_output(const std::filesystem::path& dir, const ReconOutput& output);
void write_metrics(const std::filesystem::path& dir, const MetricsReport& report);

using LogFn = std::function<void(const std::string&)>;

// Runs the enabled stages, reading earlier stages' outputs from the output
// directory when a stage is disabled.
MetricsReport run_pipeline(const RunConfig& config, const LogFn& log = {});

} // namespace dyrect
