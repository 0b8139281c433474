#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "nvspec/benchmark.hpp"
#include "nvspec/io.hpp"

// nvsd: NV-center nuclear-spin detection pipeline.
// Exit codes: 0 success (a run with zero detected spins is a success),
// 2 input/config error, 3 internal numerical failure.

namespace {

using nvspec::io::json;

struct CommonArgs {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<int> threads;
    std::string out_dir = ".";
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "pipeline config JSON");
    cmd->add_option("--seed", args.seed, "override the scenario RNG seed");
    cmd->add_option("--threads", args.threads, "worker threads (0 = hardware)");
    cmd->add_option("--out", args.out_dir, "output directory");
}

nvspec::PipelineConfig resolve_config(const CommonArgs& args, const json& fallback = {}) {
    nvspec::PipelineConfig cfg;
    if (!args.config_path.empty()) {
        cfg = nvspec::io::load_config(args.config_path);
    } else if (fallback.is_object() && fallback.contains("config")) {
        cfg = nvspec::io::config_from_json(fallback.at("config"));
    }
    if (args.seed) cfg.scenario.rng_seed = *args.seed;
    if (args.threads) {
        cfg.threads = *args.threads;
    } else if (const char* env = std::getenv("NVSD_THREADS")) {
        cfg.threads = std::atoi(env);
    }
    return cfg;
}

std::filesystem::path out_path(const CommonArgs& args, const std::string& name) {
    std::filesystem::create_directories(args.out_dir);
    return std::filesystem::path(args.out_dir) / name;
}

json provenance(const char* command, const nvspec::PipelineConfig& cfg) {
    return json{{"command", command}, {"config", nvspec::io::config_to_json(cfg)}};
}

int run_simulate(const CommonArgs& args) {
    const auto cfg = resolve_config(args);
    const auto sim = nvspec::simulate(cfg);
    nvspec::io::write_signal_csv(out_path(args, "signal.csv"), sim.signal,
                                 provenance("simulate", cfg));
    nvspec::io::write_scenario_json(out_path(args, "scenario.json"), sim.scenario, cfg);
    std::cout << "simulate: " << sim.scenario.targets.size() << " target spins, "
              << sim.scenario.bath.size() << " bath spins, " << sim.signal.tau.size()
              << " samples -> " << args.out_dir << "\n";
    return 0;
}

int run_analyze(const CommonArgs& args, const std::string& input) {
    const auto file = nvspec::io::read_signal_csv(input);
    json fallback;
    if (file.provenance.is_object()) fallback = file.provenance;
    const auto cfg = resolve_config(args, fallback);
    const auto result = nvspec::analyze_signal(file.signal, cfg);
    nvspec::io::write_analysis_json(out_path(args, "spins.json"), result, cfg);
    nvspec::io::write_reconstruction_csv(out_path(args, "reconstruction.csv"), file.signal, result,
                                         provenance("analyze", cfg));
    nvspec::io::write_fan_csv(out_path(args, "fan.csv"), result);
    nvspec::io::write_components_csv(out_path(args, "components.csv"), result);
    std::cout << "analyze: " << result.spins.size() << " spins (" << result.candidates.size()
              << " candidates, " << result.lines.size() << " lines) -> " << args.out_dir << "\n";
    for (const auto& s : result.spins)
        std::cout << "  A = " << s.params.a_hz / 1e3 << " kHz, B = " << s.params.b_hz / 1e3
                  << " kHz (" << s.member_dip_count << " dips)\n";
    return 0;
}

json cell_to_json(const nvspec::CellResult& c) {
    return json{{"a_khz", c.truth.a_hz / 1e3},
                {"b_khz", c.truth.b_hz / 1e3},
                {"detected", c.detected},
                {"error", c.error},
                {"fp_error_khz", c.fp_error_hz / 1e3},
                {"est_a_khz", c.estimate.a_hz / 1e3},
                {"est_b_khz", c.estimate.b_hz / 1e3},
                {"n_reported", c.n_reported}};
}

void write_json(const std::filesystem::path& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << j.dump(2) << "\n";
}

int run_benchmark(const CommonArgs& args, const std::string& mode, int replicates, double ref_a_khz,
                  double ref_b_khz) {
    const auto cfg = resolve_config(args);
    json j = provenance("benchmark", cfg);
    j["mode"] = mode;

    if (mode == "single_spin_map") {
        const auto report = nvspec::single_spin_map(cfg, {});
        json cells = json::array();
        for (const auto& c : report.cells) cells.push_back(cell_to_json(c));
        j["cells"] = cells;
        j["n_detected"] = report.n_detected;
        j["mean_detected_error"] = report.mean_detected_error;
        std::cout << "single_spin_map: " << report.n_detected << "/" << report.cells.size()
                  << " cells detected, mean error " << report.mean_detected_error << "\n";
    } else if (mode == "two_spin_resolution") {
        const nvspec::SpinParams ref{ref_a_khz * 1e3, ref_b_khz * 1e3};
        const auto report = nvspec::two_spin_resolution(cfg, ref, {});
        j["reference"] = {{"a_khz", ref_a_khz}, {"b_khz", ref_b_khz}};
        json cells = json::array();
        for (const auto& c : report.cells) {
            json e = cell_to_json(c.spin_2);
            e["both_detected"] = c.both_detected;
            e["delta_fp_khz"] = c.delta_fp_hz / 1e3;
            e["reference_error"] = c.spin_1.error;
            cells.push_back(e);
        }
        j["cells"] = cells;
        j["n_both_detected"] = report.n_both_detected;
        std::cout << "two_spin_resolution: " << report.n_both_detected << "/"
                  << report.cells.size() << " cells resolved both spins\n";
    } else if (mode == "multi_spin_map") {
        const auto report = nvspec::multi_spin_map(cfg, replicates);
        json cells = json::array();
        const auto& g = report.reachable;
        for (std::size_t ia = 0; ia < g.na; ++ia) {
            for (std::size_t ib = 0; ib < g.nb; ++ib) {
                if (!g.at(ia, ib)) continue;
                const std::size_t idx = ia * g.nb + ib;
                cells.push_back({{"a_khz", (g.a_lo_hz + (ia + 0.5) * g.cell_hz) / 1e3},
                                 {"b_khz", (g.b_lo_hz + (ib + 0.5) * g.cell_hz) / 1e3},
                                 {"seen", report.cell_seen[idx]},
                                 {"detected", report.cell_detected[idx]}});
            }
        }
        j["cells"] = cells;
        j["replicates"] = replicates;
        j["n_in_region"] = report.n_in_region;
        j["n_detected"] = report.n_detected;
        j["mean_detected_error"] = report.mean_detected_error;
        j["overlap_fraction"] = report.overlap_fraction;
        std::cout << "multi_spin_map: " << report.n_detected << "/" << report.n_in_region
                  << " in-region spins detected over " << replicates << " replicates, mean error "
                  << report.mean_detected_error << ", overlap fraction "
                  << report.overlap_fraction << "\n";
    } else {
        std::cerr << "error: unknown benchmark mode '" << mode << "'\n";
        return 2;
    }
    write_json(out_path(args, "benchmark_" + mode + ".json"), j);
    return 0;
}

void heatmap_csv(const std::filesystem::path& path, const json& bench) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    const std::string mode = bench.at("mode");
    if (mode == "multi_spin_map") {
        out << "a_khz,b_khz,seen,detected,rate\n";
        for (const auto& c : bench.at("cells")) {
            const double seen = c.at("seen").get<double>();
            const double det = c.at("detected").get<double>();
            out << c.at("a_khz").get<double>() << "," << c.at("b_khz").get<double>() << "," << seen
                << "," << det << "," << (seen > 0 ? det / seen : 0.0) << "\n";
        }
    } else {
        out << "a_khz,b_khz,detected,error,fp_error_khz\n";
        for (const auto& c : bench.at("cells"))
            out << c.at("a_khz").get<double>() << "," << c.at("b_khz").get<double>() << ","
                << (c.at("detected").get<bool>() ? 1 : 0) << "," << c.at("error").get<double>()
                << "," << c.at("fp_error_khz").get<double>() << "\n";
    }
}

int report_one(const CommonArgs& args, const std::string& input) {
    const std::filesystem::path path(input);
    if (!std::filesystem::exists(path)) {
        std::cerr << "error: missing input '" << input << "'\n";
        return 2;
    }
    if (path.extension() == ".csv") {
        // Trace overlay: RMSE between the measured and reconstructed traces.
        std::ifstream in(path);
        std::string line;
        double sum2 = 0.0;
        std::size_t n = 0;
        while (std::getline(in, line)) {
            if (line.empty() || line[0] == '#' || line.rfind("tau_s", 0) == 0) continue;
            double tau, px, model;
            if (std::sscanf(line.c_str(), "%lf,%lf,%lf", &tau, &px, &model) == 3) {
                sum2 += (px - model) * (px - model);
                ++n;
            }
        }
        if (n == 0) {
            std::cerr << "error: '" << input << "' has no overlay rows (tau,p_x,p_x_model)\n";
            return 2;
        }
        std::cout << input << ": overlay RMSE " << std::sqrt(sum2 / n) << " over " << n
                  << " samples\n";
        return 0;
    }

    std::ifstream in(path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        std::cerr << "error: cannot parse '" << input << "': " << e.what() << "\n";
        return 2;
    }
    if (j.contains("spins")) {
        const auto& spins = j.at("spins");
        std::cout << input << ": " << spins.size() << " spins\n";
        std::cout << "  id    A_kHz      B_kHz      dips  rmse      region\n";
        int id = 0;
        for (const auto& s : spins) {
            const auto& dips = s.at("member_dips");
            const int n_dips = dips.is_array() ? static_cast<int>(dips.size()) : dips.get<int>();
            char row[160];
            std::snprintf(row, sizeof(row), "  %-4d  %9.3f  %9.3f  %-4d  %8.5f  %s", id++,
                          s.at("A_kHz").get<double>(), s.at("B_kHz").get<double>(), n_dips,
                          s.at("filtered_rmse").get<double>(),
                          s.at("in_confidence_region").get<bool>() ? "yes" : "no");
            std::cout << row << "\n";
        }
        return 0;
    }
    if (j.contains("mode")) {
        const std::string mode = j.at("mode");
        std::cout << input << ": benchmark mode " << mode << ", " << j.at("cells").size()
                  << " cells";
        if (j.contains("mean_detected_error"))
            std::cout << ", mean detected error " << j.at("mean_detected_error").get<double>();
        if (j.contains("overlap_fraction"))
            std::cout << ", overlap fraction " << j.at("overlap_fraction").get<double>();
        std::cout << "\n";
        const auto csv = out_path(args, path.stem().string() + "_heatmap.csv");
        heatmap_csv(csv, j);
        std::cout << "  wrote " << csv.string() << "\n";
        return 0;
    }
    std::cerr << "error: '" << input << "' is neither an analysis nor a benchmark output\n";
    return 2;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"NV-center nuclear-spin detection pipeline"};
    app.require_subcommand(1);

    CommonArgs sim_args, ana_args, bench_args, rep_args;
    std::string analyze_input;
    std::string mode;
    int replicates = 50;
    double ref_a_khz = 25.0, ref_b_khz = 25.0;
    std::vector<std::string> report_inputs;

    auto* sim = app.add_subcommand("simulate", "synthesize a seeded scenario trace");
    add_common(sim, sim_args);

    auto* ana = app.add_subcommand("analyze", "extract spins from a signal CSV");
    add_common(ana, ana_args);
    ana->add_option("input", analyze_input, "signal CSV")->required();

    auto* bench = app.add_subcommand("benchmark", "recovery benchmarks over synthetic scenarios");
    add_common(bench, bench_args);
    bench->add_option("--mode", mode, "single_spin_map | two_spin_resolution | multi_spin_map")
        ->required();
    bench->add_option("--replicates", replicates, "replicate count (multi_spin_map)");
    bench->add_option("--ref-a-khz", ref_a_khz, "reference spin A (two_spin_resolution)");
    bench->add_option("--ref-b-khz", ref_b_khz, "reference spin B (two_spin_resolution)");

    auto* rep = app.add_subcommand("report", "summarize analysis/benchmark outputs");
    add_common(rep, rep_args);
    rep->add_option("inputs", report_inputs, "analysis JSON, benchmark JSON, or overlay CSV")
        ->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (sim->parsed()) return run_simulate(sim_args);
        if (ana->parsed()) return run_analyze(ana_args, analyze_input);
        if (bench->parsed())
            return run_benchmark(bench_args, mode, replicates, ref_a_khz, ref_b_khz);
        if (rep->parsed()) {
            int rc = 0;
            for (const auto& input : report_inputs) rc = std::max(rc, report_one(rep_args, input));
            return rc;
        }
    } catch (const nvspec::io::ParseError& e) {
        std::cerr << "error: " << e.what();
        if (e.line > 0) {
            std::cerr << " (line " << e.line;
            if (e.column > 0) std::cerr << ", column " << e.column;
            std::cerr << ")";
        }
        std::cerr << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
