#include "nvspec/io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace nvspec::io {

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

json config_to_json(const PipelineConfig& c) {
    json j;
    j["threshold"] = c.threshold;
    j["d_max_s"] = c.d_max_s;
    j["m_layers"] = c.m_layers;
    j["split_floor"] = c.split_floor;
    j["min_members"] = c.min_members;
    j["beam_width"] = c.beam_width;
    j["max_components"] = c.max_components;
    j["em_max_iter"] = c.em_max_iter;
    j["em_tol"] = c.em_tol;
    j["threads"] = c.threads;
    j["fit"] = {{"a_bound_hz", c.fit.a_bound_hz},
                {"b_bound_hz", c.fit.b_bound_hz},
                {"eval_budget", c.fit.eval_budget},
                {"tol_hz", c.fit.tol_hz},
                {"outer_iterations", c.fit.outer_iterations}};
    j["field"] = {{"b0_tesla", c.field.b0_tesla},
                  {"gamma_e_hz_per_t", c.field.gamma_e_hz_per_t},
                  {"gamma_n_hz_per_t", c.field.gamma_n_hz_per_t}};
    j["sequence"] = {{"n_pulses", c.sequence.n_pulses},
                     {"tau_start_s", c.sequence.tau_start},
                     {"tau_stop_s", c.sequence.tau_stop},
                     {"tau_step_s", c.sequence.tau_step}};
    j["scenario"] = {{"n_target_spins", c.scenario.n_target_spins},
                     {"a_min_hz", c.scenario.a_min_hz},
                     {"a_max_hz", c.scenario.a_max_hz},
                     {"b_min_hz", c.scenario.b_min_hz},
                     {"b_max_hz", c.scenario.b_max_hz},
                     {"radius_max_m", c.scenario.radius_max_m},
                     {"bath_site_count", c.scenario.bath_site_count},
                     {"bath_a_max_hz", c.scenario.bath_a_max_hz},
                     {"bath_b_max_hz", c.scenario.bath_b_max_hz},
                     {"bath_radius_max_m", c.scenario.bath_radius_max_m},
                     {"rng_seed", c.scenario.rng_seed}};
    return j;
}

namespace {

template <typename T>
void maybe(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

} // namespace

PipelineConfig config_from_json(const json& j) {
    PipelineConfig c;
    maybe(j, "threshold", c.threshold);
    maybe(j, "d_max_s", c.d_max_s);
    maybe(j, "m_layers", c.m_layers);
    c.split_floor = c.threshold / 2.0;
    maybe(j, "split_floor", c.split_floor);
    maybe(j, "min_members", c.min_members);
    maybe(j, "beam_width", c.beam_width);
    maybe(j, "max_components", c.max_components);
    maybe(j, "em_max_iter", c.em_max_iter);
    maybe(j, "em_tol", c.em_tol);
    maybe(j, "threads", c.threads);
    if (j.contains("fit")) {
        const auto& f = j.at("fit");
        maybe(f, "a_bound_hz", c.fit.a_bound_hz);
        maybe(f, "b_bound_hz", c.fit.b_bound_hz);
        maybe(f, "eval_budget", c.fit.eval_budget);
        maybe(f, "tol_hz", c.fit.tol_hz);
        maybe(f, "outer_iterations", c.fit.outer_iterations);
    }
    if (j.contains("field")) {
        const auto& f = j.at("field");
        maybe(f, "b0_tesla", c.field.b0_tesla);
        maybe(f, "gamma_e_hz_per_t", c.field.gamma_e_hz_per_t);
        maybe(f, "gamma_n_hz_per_t", c.field.gamma_n_hz_per_t);
    }
    if (j.contains("sequence")) {
        const auto& s = j.at("sequence");
        maybe(s, "n_pulses", c.sequence.n_pulses);
        maybe(s, "tau_start_s", c.sequence.tau_start);
        maybe(s, "tau_stop_s", c.sequence.tau_stop);
        maybe(s, "tau_step_s", c.sequence.tau_step);
    }
    if (j.contains("scenario")) {
        const auto& s = j.at("scenario");
        maybe(s, "n_target_spins", c.scenario.n_target_spins);
        maybe(s, "a_min_hz", c.scenario.a_min_hz);
        maybe(s, "a_max_hz", c.scenario.a_max_hz);
        maybe(s, "b_min_hz", c.scenario.b_min_hz);
        maybe(s, "b_max_hz", c.scenario.b_max_hz);
        maybe(s, "radius_max_m", c.scenario.radius_max_m);
        maybe(s, "bath_site_count", c.scenario.bath_site_count);
        maybe(s, "bath_a_max_hz", c.scenario.bath_a_max_hz);
        maybe(s, "bath_b_max_hz", c.scenario.bath_b_max_hz);
        maybe(s, "bath_radius_max_m", c.scenario.bath_radius_max_m);
        maybe(s, "rng_seed", c.scenario.rng_seed);
    }
    return c;
}

PipelineConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open config file: " + path.string(), 0);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ParseError(std::string("config JSON parse error: ") + e.what(), 0);
    }
    return config_from_json(j);
}

void write_signal_csv(const std::filesystem::path& path, const Signal& signal,
                      const json& provenance) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "# " << provenance.dump() << "\n";
    out << "tau_s,p_x\n";
    for (std::size_t i = 0; i < signal.tau.size(); ++i)
        out << format_double(signal.tau[i]) << "," << format_double(signal.p_x[i]) << "\n";
}

SignalFile read_signal_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open signal file: " + path.string(), 0);
    SignalFile out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        if (line[0] == '#') {
            const auto body = line.substr(1);
            if (out.provenance.is_null() && body.find_first_not_of(" \t") != std::string::npos) {
                try {
                    out.provenance = json::parse(body);
                } catch (const json::exception&) {
                    // Non-JSON comment; ignore.
                }
            }
            continue;
        }
        if (line.rfind("tau_s", 0) == 0) continue; // header row
        const auto comma = line.find(',');
        if (comma == std::string::npos)
            throw ParseError("expected 'tau,p_x' row", lineno, 1);
        double tau = 0.0, px = 0.0;
        auto r1 = std::from_chars(line.data(), line.data() + comma, tau);
        if (r1.ec != std::errc{})
            throw ParseError("cannot parse tau value", lineno, 1);
        auto r2 = std::from_chars(line.data() + comma + 1, line.data() + line.size(), px);
        if (r2.ec != std::errc{})
            throw ParseError("cannot parse p_x value", lineno, static_cast<int>(comma + 2));
        out.signal.tau.push_back(tau);
        out.signal.p_x.push_back(px);
    }
    if (out.signal.tau.size() < 2) throw ParseError("signal file has fewer than two samples", lineno);
    return out;
}

void write_scenario_json(const std::filesystem::path& path, const Scenario& scenario,
                         const PipelineConfig& config) {
    json j;
    j["config"] = config_to_json(config);
    j["seed"] = config.scenario.rng_seed;
    json targets = json::array();
    for (std::size_t i = 0; i < scenario.targets.size(); ++i) {
        json t;
        t["a_hz"] = scenario.targets[i].a_hz;
        t["b_hz"] = scenario.targets[i].b_hz;
        if (i < scenario.target_sites.size()) {
            const auto& s = scenario.target_sites[i];
            t["site"] = {{"r_m", {s.r[0], s.r[1], s.r[2]}},
                         {"r_mag_m", s.r_mag},
                         {"cos_theta", s.cos_theta}};
        }
        targets.push_back(t);
    }
    j["targets"] = targets;
    double max_abs_a = 0.0, max_b = 0.0;
    for (const auto& b : scenario.bath) {
        max_abs_a = std::max(max_abs_a, std::abs(b.a_hz));
        max_b = std::max(max_b, b.b_hz);
    }
    j["bath_summary"] = {{"count", scenario.bath.size()},
                         {"max_abs_a_hz", max_abs_a},
                         {"max_b_hz", max_b}};
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << j.dump(2) << "\n";
}

Scenario read_scenario_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open scenario file: " + path.string(), 0);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ParseError(std::string("scenario JSON parse error: ") + e.what(), 0);
    }
    Scenario out;
    for (const auto& t : j.at("targets")) {
        out.targets.push_back({t.at("a_hz").get<double>(), t.at("b_hz").get<double>()});
        if (t.contains("site")) {
            LatticeSite s;
            const auto& r = t.at("site").at("r_m");
            s.r = {r.at(0).get<double>(), r.at(1).get<double>(), r.at(2).get<double>()};
            s.r_mag = t.at("site").at("r_mag_m").get<double>();
            s.cos_theta = t.at("site").at("cos_theta").get<double>();
            out.target_sites.push_back(s);
        }
    }
    return out;
}

json spin_estimate_to_json(const SpinEstimate& est, const FieldConfig& field) {
    json j;
    j["A_kHz"] = est.params.a_hz / 1e3;
    j["B_kHz"] = est.params.b_hz / 1e3;
    j["A_init_kHz"] = est.initial.a_hz / 1e3;
    j["B_init_kHz"] = est.initial.b_hz / 1e3;
    j["slope_s_per_k"] = est.line.slope;
    j["sigma_s"] = est.params.b_hz > 0.0 ? sigma_from_params(est.params, field) : 0.0;
    j["dip_frequency_kHz"] = dip_frequency(est.params, field) / 1e3;
    j["member_dips"] = est.line.members;
    j["filtered_rmse"] = est.filtered_rmse;
    j["converged"] = est.converged;
    j["in_confidence_region"] = est.in_confidence_region;
    return j;
}

void write_analysis_json(const std::filesystem::path& path, const AnalysisResult& result,
                         const PipelineConfig& config) {
    json j;
    j["config"] = config_to_json(config);
    json spins = json::array();
    for (const auto& s : result.spins) spins.push_back(spin_estimate_to_json(s, config.field));
    j["spins"] = spins;
    j["n_lines"] = result.lines.size();
    j["n_components"] = result.components.size();
    j["selection_rmse"] = result.selection.total_filtered_rmse;
    json excl = json::array();
    for (const auto& [idx, marginal] : result.selection.excluded_marginals)
        excl.push_back({{"candidate", idx}, {"rmse_increase", marginal}});
    j["excluded"] = excl;
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << j.dump(2) << "\n";
}

void write_reconstruction_csv(const std::filesystem::path& path, const Signal& signal,
                              const AnalysisResult& result, const json& provenance) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "# " << provenance.dump() << "\n";
    out << "tau_s,p_x,p_x_model\n";
    for (std::size_t i = 0; i < signal.tau.size(); ++i)
        out << format_double(signal.tau[i]) << "," << format_double(signal.p_x[i]) << ","
            << format_double(result.reconstruction[i]) << "\n";
}

void write_fan_csv(const std::filesystem::path& path, const AnalysisResult& result) {
    // source_id -> emitted line index
    std::vector<long> line_of;
    std::size_t max_id = 0;
    for (const auto& p : result.fan.points) max_id = std::max(max_id, p.source_id);
    line_of.assign(max_id + 1, -1);
    for (std::size_t li = 0; li < result.lines.size(); ++li)
        for (std::size_t id : result.lines[li].members) line_of[id] = static_cast<long>(li);

    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "k,delta_tau_s,amplitude,sigma_s,clone_offset,assigned_line_id\n";
    for (const auto& p : result.fan.points)
        out << p.k << "," << format_double(p.delta_tau) << "," << format_double(p.amplitude) << ","
            << format_double(p.sigma) << "," << p.clone_offset << "," << line_of[p.source_id]
            << "\n";
}

void write_components_csv(const std::filesystem::path& path, const AnalysisResult& result) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "fragment_id,a,mu_s,sigma_s,bic,converged\n";
    for (std::size_t f = 0; f < result.decomposition.fits.size(); ++f) {
        const auto& fit = result.decomposition.fits[f];
        for (const auto& g : fit.components)
            out << f << "," << format_double(g.amplitude) << "," << format_double(g.mu) << ","
                << format_double(g.sigma) << "," << format_double(fit.bic) << ","
                << (fit.converged ? 1 : 0) << "\n";
    }
}

} // namespace nvspec::io
