#include "dyrect/pipeline.hpp"
#include "dyrect/errors.hpp"
#include "dyrect/event_reconstruction.hpp"
#include "dyrect/io.hpp"
#include "dyrect/phantom.hpp"
#include "dyrect/projector.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#ifndef DYRECT_VERSION
#define DYRECT_VERSION "unknown"
#endif

namespace dyrect {

namespace fs = std::filesystem;

namespace {

void write_file(const fs::path& path, const std::string& text)
{
    std::ofstream os(path, std::ios::binary);
    if (!os)
        throw DataError("cannot open " + path.string() + " for writing");
    os << text;
}

std::string fmt(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

MaskPolicy mask_policy(const RunConfig& c)
{
    return {c.analysis.contrast_fraction};
}

class Stopwatch {
public:
    double seconds() const
    {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

} // namespace

const char* version_string()
{
    return "dyrect " DYRECT_VERSION;
}

VoxelGrid3 reconstruction_grid(const RunConfig& config)
{
    const auto n = config.phantom.size;
    return VoxelGrid3::centered(n, n, n, config.phantom.voxel_size);
}

Phantom build_phantom(const RunConfig& config)
{
    const PhantomConfig& p = config.phantom;
    const VoxelGrid3 coarse = reconstruction_grid(config);
    const VoxelGrid3 fine = refine_grid(coarse, p.generation_factor);
    EventVolume generation;
    if (p.kind == PhantomKind::flow) {
        FlowSpec spec;
        spec.grid = fine;
        spec.matrix_mu = p.matrix_mu;
        spec.fluid0_mu = p.fluid0_mu;
        spec.fluid1_mu = p.fluid1_mu;
        spec.matrix_radius = p.matrix_radius;
        spec.matrix_texture = p.matrix_texture;
        spec.pore_regions = p.regions;
        spec.t_begin = p.t_begin;
        spec.t_end = p.t_end;
        spec.rng_seed = config.seed;
        generation = build_flow_phantom(spec);
    } else {
        generation = build_film_rupture_phantom(fine, p.rupture, p.rupture_time);
    }
    EventVolume truth = fine == coarse ? generation : downsample_event_volume(generation, coarse);
    return {std::move(generation), std::move(truth)};
}

AcquisitionGeometry build_geometry(const RunConfig& config)
{
    const GeometryConfig& g = config.geometry;
    AcquisitionGeometry geom = AcquisitionGeometry::circular(
        g.beam, g.det_rows, g.det_cols, g.pixel_pitch, g.projections_per_rotation, g.n_views,
        g.start_angle_deg * std::numbers::pi / 180.0, g.start_time);
    geom.source_to_origin = g.source_to_origin;
    geom.origin_to_detector = g.origin_to_detector;
    geom.validate();
    return geom;
}

ProjectionSet simulate(const RunConfig& config, const EventVolume& generation)
{
    const ProjectorOptions opts{config.recon.params.ray_step, config.threads};
    ProjectionSet p = forward_project(generation, build_geometry(config), std::nullopt, opts);
    if (config.noise.sigma > 0.0) {
        std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
        std::normal_distribution<double> noise(0.0, config.noise.sigma);
        for (double& v : p.data())
            v += noise(rng);
    }
    return p;
}

EventVolume events_from_frames(const std::vector<Frame>& frames)
{
    if (frames.size() < 2)
        throw DataError("event extraction needs at least two frames");
    const ScalarField3& first = frames.front().volume;
    const ScalarField3& last = frames.back().volume;
    const VoxelGrid3& g = first.grid();
    ScalarField3 tstar(g, frames.back().time + 10.0);
    for (std::size_t l = 0; l < g.size(); ++l) {
        const double delta = last[l] - first[l];
        if (delta == 0.0)
            continue;
        for (std::size_t f = 1; f < frames.size(); ++f) {
            if ((frames[f].volume[l] - first[l]) / delta >= 0.5) {
                tstar[l] = 0.5 * (frames[f - 1].time + frames[f].time);
                break;
            }
        }
    }
    return EventVolume(first, last, std::move(tstar));
}

ReconOutput reconstruct(const RunConfig& config, const ProjectionSet& measured,
                        const EventVolume* truth)
{
    const VoxelGrid3 grid = reconstruction_grid(config);
    const ReconConfig& rc = config.recon;
    ReconOutput out;
    switch (rc.method) {
    case ReconMethod::dyrect: {
        ReconParams params = rc.params;
        params.rng_seed = config.seed;
        params.threads = config.threads;
        const double t0 = rc.init_tstar_mid_scan ? mid_scan_time(measured.geometry()) : rc.init_tstar;
        EventVolume init = EventVolume::uniform(grid, 0.0, 0.0, t0);
        if (rc.init_attenuations == AttenuationInit::ground_truth) {
            if (!truth || truth->grid() != grid)
                throw DataError("ground-truth attenuation init needs the phantom on the reconstruction grid");
            init.mu0 = truth->mu0;
            init.mu1 = truth->mu1;
        }
        DyrectResult r = reconstruct_dyrect(measured, params, init);
        out.events = std::move(r.volume);
        out.residuals = std::move(r.residuals);
        break;
    }
    case ReconMethod::sirt: {
        std::vector<std::size_t> views(measured.n_views());
        for (std::size_t i = 0; i < views.size(); ++i)
            views[i] = i;
        const SirtOptions opts{rc.sirt_subsets, config.seed, rc.params.ray_step, config.threads};
        SirtResult r = reconstruct_sirt(measured, views, grid, rc.sirt_iterations, rc.sirt_relax, opts);
        out.static_volume = std::move(r.volume);
        out.residuals = std::move(r.residuals);
        break;
    }
    case ReconMethod::sliding: {
        const SirtOptions opts{rc.sirt_subsets, config.seed, rc.params.ray_step, config.threads};
        out.frames = reconstruct_sliding_window(measured, rc.window_views, rc.stride_views, grid,
                                                rc.sirt_iterations, rc.sirt_relax, opts);
        if (out.frames.size() >= 2)
            out.events = events_from_frames(out.frames);
        break;
    }
    }
    return out;
}

void analyze(const RunConfig& config, Metric metric, const EventVolume& truth,
             const EventVolume* rec, const ProjectionSet* measured, const fs::path& output_dir,
             MetricsReport& report)
{
    const MaskPolicy policy = mask_policy(config);
    const auto need_rec = [rec] {
        if (!rec)
            throw DataError("this metric needs an event reconstruction");
    };
    switch (metric) {
    case Metric::mae: {
        need_rec();
        const auto mask = metric_mask(truth, policy);
        report.set("mae_rotations", mae_transition(truth, *rec, policy));
        report.set("mask_voxels", static_cast<double>(mask_count(mask)));
        report.set("median_tstar_rotations", median_transition(*rec, mask));
        double lo = 0.0, hi = 0.0;
        for (std::size_t i = 0; i < truth.mu0.size(); ++i) {
            lo = std::min({lo, truth.mu0[i], truth.mu1[i]});
            hi = std::max({hi, truth.mu0[i], truth.mu1[i]});
        }
        const double r0 = rmse(truth.mu0, rec->mu0);
        const double r1 = rmse(truth.mu1, rec->mu1);
        report.set("attenuation_range_per_cm", hi - lo);
        report.set("rmse_mu0_per_cm", r0);
        report.set("rmse_mu1_per_cm", r1);
        if (hi > lo) {
            report.set("rmse_mu0_relative", r0 / (hi - lo));
            report.set("rmse_mu1_relative", r1 / (hi - lo));
        }
        break;
    }
    case Metric::hist: {
        need_rec();
        const auto h = cooccurrence_hist(truth, *rec, config.analysis.hist_bins,
                                         config.phantom.t_begin, config.phantom.t_end, policy);
        std::ofstream os(output_dir / "histogram.csv");
        write_histogram_csv(os, h);
        report.set("hist_diagonal_fraction", h.diagonal_fraction(0));
        report.set("hist_diagonal_pm1_fraction", h.diagonal_fraction(1));
        break;
    }
    case Metric::angles: {
        need_rec();
        if (!measured)
            throw DataError("angular breakdown needs the acquisition geometry");
        const auto b = angular_breakdown(truth, *rec, measured->geometry(), policy);
        std::ofstream os(output_dir / "angles.csv");
        write_breakdown_csv(os, b);
        for (std::size_t c = 0; c < 3; ++c) {
            const std::string name = category_name(static_cast<AngleCategory>(c));
            report.set("mae_" + name + "_rotations", b.mae[c]);
            report.set("count_" + name, static_cast<double>(b.counts[c]));
        }
        report.set("zero_gradient_excluded", static_cast<double>(b.zero_gradient_excluded));
        break;
    }
    case Metric::diffsino: {
        if (!measured)
            throw DataError("difference sinogram needs projections");
        const ProjectionSet diff = difference_sinogram(*measured);
        write_projections(output_dir / "diffsino", diff);
        const auto t = detect_event_time(diff, config.analysis.diff_threshold);
        report.set("diffsino_event_time_rotations", t ? fmt(*t) : std::string("none"));
        if (t && rec) {
            const double median = median_transition(*rec, metric_mask(truth, policy));
            report.set("diffsino_vs_median_rotations", std::abs(*t - median));
        }
        break;
    }
    }
}

std::string manifest_text(const RunConfig& config)
{
    std::ostringstream os;
    os << "version=" << version_string() << '\n';
    for (const auto& [k, v] : config.to_key_values())
        os << k << '=' << v << '\n';
    return os.str();
}

void write_manifest(const RunConfig& config, const fs::path& dir)
{
    fs::create_directories(dir);
    write_file(dir / "manifest.txt", manifest_text(config));
}

void write_recon_output(const fs::path& dir, const ReconOutput& r)
{
    if (r.events)
        write_event_volume(dir / "recon", *r.events);
    if (r.static_volume)
        write_volume(dir / "sirt", *r.static_volume);
    if (!r.frames.empty()) {
        fs::create_directories(dir / "frames");
        std::ostringstream table;
        table << "index,time_rotations,first_view\n";
        for (std::size_t f = 0; f < r.frames.size(); ++f) {
            char name[32];
            std::snprintf(name, sizeof name, "frame_%03zu", f);
            write_volume(dir / "frames" / name, r.frames[f].volume);
            table << f << ',' << fmt(r.frames[f].time) << ',' << r.frames[f].first_view << '\n';
        }
        write_file(dir / "frames" / "frames.csv", table.str());
    }
    std::ostringstream res;
    res << "iteration,residual\n";
    for (std::size_t i = 0; i < r.residuals.size(); ++i)
        res << i << ',' << fmt(r.residuals[i]) << '\n';
    write_file(dir / "residuals.csv", res.str());
}

void write_metrics(const fs::path& dir, const MetricsReport& report)
{
    std::ostringstream os;
    report.write(os);
    write_file(dir / "metrics.txt", os.str());
}

MetricsReport run_pipeline(const RunConfig& config, const LogFn& log)
{
    const auto say = [&log](const std::string& m) {
        if (log)
            log(m);
    };
    const fs::path out = config.output_dir;
    write_manifest(config, out);

    std::optional<Phantom> phantom;
    const auto ensure_phantom = [&] {
        if (!phantom)
            phantom = build_phantom(config);
    };

    EventVolume truth;
    if (config.stages.phantom) {
        Stopwatch sw;
        ensure_phantom();
        truth = phantom->truth;
        write_event_volume(out / "phantom", truth);
        say("phantom: " + std::to_string(sw.seconds()) + " s");
    } else {
        truth = read_event_volume(out / "phantom");
    }

    ProjectionSet measured;
    if (config.stages.simulate) {
        Stopwatch sw;
        ensure_phantom();
        measured = simulate(config, phantom->generation);
        write_projections(out / "projections", measured);
        say("simulate: " + std::to_string(sw.seconds()) + " s");
    } else {
        measured = read_projections(out / "projections");
    }
    phantom.reset();

    std::optional<EventVolume> rec;
    if (config.stages.reconstruct) {
        Stopwatch sw;
        ReconOutput r = reconstruct(config, measured, &truth);
        write_recon_output(out, r);
        rec = std::move(r.events);
        say("reconstruct: " + std::to_string(sw.seconds()) + " s");
    } else if (fs::exists(with_suffix(out / "recon", "_tstar.meta"))) {
        rec = read_event_volume(out / "recon");
    }

    MetricsReport report;
    if (config.stages.analyze) {
        if (rec) {
            for (Metric m : {Metric::mae, Metric::hist, Metric::angles})
                analyze(config, m, truth, &*rec, &measured, out, report);
        }
        if (measured.n_views() >= 2 * static_cast<std::size_t>(measured.geometry().projections_per_rotation))
            analyze(config, Metric::diffsino, truth, rec ? &*rec : nullptr, &measured, out, report);
        write_metrics(out, report);
    }
    return report;
}

} // namespace dyrect
