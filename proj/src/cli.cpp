#include "dyrect/cli.hpp"
#include "dyrect/errors.hpp"
#include "dyrect/io.hpp"
#include "dyrect/pipeline.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>

namespace dyrect {

namespace fs = std::filesystem;

namespace {

struct GlobalFlags {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<int> threads;
    std::optional<std::string> output_dir;
};

RunConfig resolve(const GlobalFlags& flags)
{
    RunConfig c = RunConfig::load(flags.config);
    if (flags.seed)
        c.seed = *flags.seed;
    if (flags.threads)
        c.threads = *flags.threads;
    if (flags.output_dir)
        c.output_dir = *flags.output_dir;
    c.validate();
    return c;
}

MetricsReport load_metrics(const fs::path& dir)
{
    MetricsReport report;
    const auto path = dir / "metrics.txt";
    if (!fs::exists(path))
        return report;
    std::ifstream is(path);
    std::string line;
    while (std::getline(is, line)) {
        const auto eq = line.find('=');
        if (eq != std::string::npos)
            report.set(line.substr(0, eq), line.substr(eq + 1));
    }
    return report;
}

} // namespace

int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Event-based 4D CT reconstruction toolkit", "dyrect"};
    app.fallthrough();
    app.require_subcommand(1);
    app.set_version_flag("--version", version_string());

    GlobalFlags flags;
    app.add_option("--config", flags.config, "Run configuration (key=value)")->required()->check(CLI::ExistingFile);
    app.add_option("--seed", flags.seed, "Override pipeline.seed");
    app.add_option("--threads", flags.threads, "Override pipeline.threads")->check(CLI::PositiveNumber);
    app.add_option("--output-dir", flags.output_dir, "Override pipeline.output_dir");

    auto* phantom = app.add_subcommand("phantom", "Build the phantom and save it");
    auto* simulate_cmd = app.add_subcommand("simulate", "Forward-project the phantom and save projections");
    auto* recon_cmd = app.add_subcommand("reconstruct", "Reconstruct from saved projections");
    std::string method;
    recon_cmd->add_option("--method", method, "dyrect, sirt or sliding")
        ->check(CLI::IsMember({"dyrect", "sirt", "sliding"}));
    auto* analyze_cmd = app.add_subcommand("analyze", "Compute metrics from saved outputs");
    std::string metric = "mae";
    analyze_cmd->add_option("--metric", metric, "mae, hist, angles or diffsino")
        ->check(CLI::IsMember({"mae", "hist", "angles", "diffsino"}));
    auto* pipeline = app.add_subcommand("pipeline", "Run all enabled stages");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        if (code != 0 && !dynamic_cast<const CLI::CallForHelp*>(&e))
            err << app.help();
        return code == 0 ? 0 : 1;
    }

    const auto log = [&err](const std::string& m) { err << m << '\n'; };
    try {
        RunConfig config = resolve(flags);
        if (!method.empty()) {
            std::map<std::string, ReconMethod> m{{"dyrect", ReconMethod::dyrect},
                                                 {"sirt", ReconMethod::sirt},
                                                 {"sliding", ReconMethod::sliding}};
            config.recon.method = m.at(method);
        }
        const fs::path dir = config.output_dir;

        if (*pipeline) {
            const MetricsReport report = run_pipeline(config, log);
            report.write(out);
            return 0;
        }

        write_manifest(config, dir);
        if (*phantom) {
            write_event_volume(dir / "phantom", build_phantom(config).truth);
        } else if (*simulate_cmd) {
            write_projections(dir / "projections", simulate(config, build_phantom(config).generation));
        } else if (*recon_cmd) {
            const ProjectionSet measured = read_projections(dir / "projections");
            std::optional<EventVolume> truth;
            if (config.recon.init_attenuations == AttenuationInit::ground_truth)
                truth = read_event_volume(dir / "phantom");
            const auto t0 = std::chrono::steady_clock::now();
            write_recon_output(dir, reconstruct(config, measured, truth ? &*truth : nullptr));
            log("reconstruct: " +
                std::to_string(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()) +
                " s");
        } else if (*analyze_cmd) {
            const EventVolume truth = read_event_volume(dir / "phantom");
            std::optional<EventVolume> rec;
            if (fs::exists(with_suffix(dir / "recon", "_tstar.meta")))
                rec = read_event_volume(dir / "recon");
            std::optional<ProjectionSet> measured;
            if (fs::exists(with_suffix(dir / "projections", ".meta")))
                measured = read_projections(dir / "projections");
            const std::map<std::string, Metric> m{{"mae", Metric::mae},
                                                  {"hist", Metric::hist},
                                                  {"angles", Metric::angles},
                                                  {"diffsino", Metric::diffsino}};
            MetricsReport report = load_metrics(dir);
            analyze(config, m.at(metric), truth, rec ? &*rec : nullptr, measured ? &*measured : nullptr,
                    dir, report);
            write_metrics(dir, report);
            report.write(out);
        }
        return 0;
    } catch (const DataError& e) {
        err << "data error: " << e.what() << '\n';
        return 2;
    } catch (const NumericalError& e) {
        err << "numerical failure: " << e.what() << '\n';
        return 3;
    } catch (const std::filesystem::filesystem_error& e) {
        err << "data error: " << e.what() << '\n';
        return 2;
    }
}

} // namespace dyrect
