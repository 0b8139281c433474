#include "nvspec/benchmark.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace nvspec {

namespace {

// Bath realization shared across benchmark cells: parameters plus the
// precomputed coherence product on the sequence grid.
struct SharedBath {
    std::vector<SpinParams> spins;
    std::vector<double> tau;
    std::vector<double> product;
};

SharedBath make_shared_bath(const PipelineConfig& config) {
    ScenarioConfig sc = config.scenario;
    sc.n_target_spins = 0;
    SharedBath out;
    out.spins = make_scenario(sc, config.field).bath;
    out.tau = config.sequence.grid();
    out.product =
        coherence_product_grid(out.spins, config.field, config.sequence.n_pulses, out.tau);
    return out;
}

Signal overlay(const SharedBath& bath, std::span<const SpinParams> targets,
               const PipelineConfig& config) {
    Signal sig;
    sig.tau = bath.tau;
    const auto m = coherence_product_grid(targets, config.field, config.sequence.n_pulses, sig.tau);
    sig.p_x.resize(sig.tau.size());
    for (std::size_t i = 0; i < sig.tau.size(); ++i)
        sig.p_x[i] = 0.5 * (1.0 + bath.product[i] * m[i]);
    return sig;
}

// Assignment-based scoring of one scenario: per-truth detection flags under
// the dip-frequency gate, plus the estimate each truth was paired with.
std::vector<CellResult> score_scenario(std::span<const SpinParams> truth,
                                       std::span<const SpinEstimate> reported,
                                       const FieldConfig& field) {
    std::vector<SpinParams> est;
    for (const auto& s : reported) est.push_back(s.params);
    const auto match = match_spins(truth, est);

    std::vector<CellResult> out(truth.size());
    for (std::size_t i = 0; i < truth.size(); ++i) {
        out[i].truth = truth[i];
        out[i].n_reported = static_cast<int>(est.size());
        const std::size_t j = match.matched[i];
        if (j == SpinMatch::npos) continue;
        const double fp_err =
            std::abs(dip_frequency(truth[i], field) - dip_frequency(est[j], field));
        if (fp_err > kDetectionFpGateHz) continue;
        out[i].detected = true;
        out[i].estimate = est[j];
        out[i].error = match.errors[i];
        out[i].fp_error_hz = fp_err;
    }
    return out;
}

std::vector<double> linspace_cells(double lo, double hi, double step) {
    std::vector<double> out;
    for (double v = lo; v <= hi + 0.5 * step; v += step) out.push_back(v);
    return out;
}

} // namespace

SingleSpinMapReport single_spin_map(const PipelineConfig& config,
                                    const SingleSpinMapOptions& options) {
    config.validate();
    if (!(options.cell_hz > 0.0))
        throw std::invalid_argument("single_spin_map: cell size must be positive");

    SingleSpinMapReport report;
    report.options = options;
    report.a_values_hz = linspace_cells(options.a_lo_hz, options.a_hi_hz, options.cell_hz);
    report.b_values_hz = linspace_cells(options.b_lo_hz, options.b_hi_hz, options.cell_hz);

    const auto bath = make_shared_bath(config);
    const std::size_t nb = report.b_values_hz.size();
    report.cells.resize(report.a_values_hz.size() * nb);

    parallel_for(report.cells.size(), config.threads, [&](std::size_t idx) {
        const SpinParams truth{report.a_values_hz[idx / nb], report.b_values_hz[idx % nb]};
        const auto signal = overlay(bath, std::span(&truth, 1), config);
        const auto analysis = analyze_signal(signal, config);
        report.cells[idx] = score_scenario(std::span(&truth, 1), analysis.spins, config.field)[0];
    });

    double sum = 0.0;
    for (const auto& c : report.cells) {
        if (!c.detected) continue;
        sum += c.error;
        ++report.n_detected;
    }
    if (report.n_detected > 0) report.mean_detected_error = sum / report.n_detected;
    return report;
}

TwoSpinResult two_spin_case(const PipelineConfig& config, const SpinParams& s1,
                            const SpinParams& s2) {
    config.validate();
    const auto bath = make_shared_bath(config);
    const std::array<SpinParams, 2> truth{s1, s2};
    const auto signal = overlay(bath, truth, config);
    const auto analysis = analyze_signal(signal, config);
    const auto scored = score_scenario(truth, analysis.spins, config.field);

    TwoSpinResult out;
    out.truth_1 = s1;
    out.truth_2 = s2;
    out.delta_fp_hz = std::abs(dip_frequency(s1, config.field) - dip_frequency(s2, config.field));
    out.spin_1 = scored[0];
    out.spin_2 = scored[1];
    out.both_detected = scored[0].detected && scored[1].detected;
    return out;
}

TwoSpinMapReport two_spin_resolution(const PipelineConfig& config, const SpinParams& reference,
                                     const SingleSpinMapOptions& options) {
    config.validate();
    if (!(options.cell_hz > 0.0))
        throw std::invalid_argument("two_spin_resolution: cell size must be positive");

    TwoSpinMapReport report;
    report.reference = reference;
    report.options = options;
    report.a_values_hz = linspace_cells(options.a_lo_hz, options.a_hi_hz, options.cell_hz);
    report.b_values_hz = linspace_cells(options.b_lo_hz, options.b_hi_hz, options.cell_hz);

    const auto bath = make_shared_bath(config);
    const std::size_t nb = report.b_values_hz.size();
    report.cells.resize(report.a_values_hz.size() * nb);

    parallel_for(report.cells.size(), config.threads, [&](std::size_t idx) {
        const SpinParams swept{report.a_values_hz[idx / nb], report.b_values_hz[idx % nb]};
        const std::array<SpinParams, 2> truth{reference, swept};
        const auto signal = overlay(bath, truth, config);
        const auto analysis = analyze_signal(signal, config);
        const auto scored = score_scenario(truth, analysis.spins, config.field);

        TwoSpinResult& out = report.cells[idx];
        out.truth_1 = reference;
        out.truth_2 = swept;
        out.delta_fp_hz =
            std::abs(dip_frequency(reference, config.field) - dip_frequency(swept, config.field));
        out.spin_1 = scored[0];
        out.spin_2 = scored[1];
        out.both_detected = scored[0].detected && scored[1].detected;
    });

    for (const auto& c : report.cells)
        if (c.both_detected) ++report.n_both_detected;
    return report;
}

MultiSpinReport multi_spin_map(const PipelineConfig& config, int replicates) {
    config.validate();
    if (replicates < 1) throw std::invalid_argument("multi_spin_map: need at least one replicate");

    const auto bath = make_shared_bath(config);

    MultiSpinReport report;
    report.replicates.resize(static_cast<std::size_t>(replicates));
    parallel_for(report.replicates.size(), config.threads, [&](std::size_t r) {
        ScenarioConfig sc = config.scenario;
        sc.bath_site_count = 0;
        // Per-replicate target seed; replicate 0 reproduces the base draw.
        sc.rng_seed = config.scenario.rng_seed + 0x9E3779B97F4A7C15ull * r;
        const auto scenario = make_scenario(sc, config.field);

        const auto signal = overlay(bath, scenario.targets, config);
        const auto analysis = analyze_signal(signal, config);

        ReplicateResult& rep = report.replicates[r];
        rep.truth = scenario.targets;
        rep.per_spin = score_scenario(rep.truth, analysis.spins, config.field);
        rep.n_reported = static_cast<int>(analysis.spins.size());

        rep.in_region.resize(rep.truth.size());
        rep.overlapped.resize(rep.truth.size());
        std::vector<double> fp(rep.truth.size());
        for (std::size_t i = 0; i < rep.truth.size(); ++i)
            fp[i] = dip_frequency(rep.truth[i], config.field);
        for (std::size_t i = 0; i < rep.truth.size(); ++i) {
            rep.in_region[i] = in_confidence_region(rep.truth[i]) ? 1 : 0;
            bool near = false;
            for (std::size_t j = 0; j < rep.truth.size(); ++j)
                if (j != i && std::abs(fp[i] - fp[j]) < kOverlapFpHz) near = true;
            rep.overlapped[i] = near ? 1 : 0;
        }
    });

    report.reachable = reachable_cells(config.scenario.radius_max_m, config.field);
    report.cell_seen.assign(report.reachable.reachable.size(), 0);
    report.cell_detected.assign(report.reachable.reachable.size(), 0);

    double sum = 0.0;
    std::size_t overlapped = 0;
    for (const auto& rep : report.replicates) {
        for (std::size_t i = 0; i < rep.truth.size(); ++i) {
            if (!rep.in_region[i]) continue;
            ++report.n_in_region;
            if (rep.overlapped[i]) ++overlapped;
            if (rep.per_spin[i].detected) {
                ++report.n_detected;
                sum += rep.per_spin[i].error;
            }
            const auto& g = report.reachable;
            const auto ia =
                static_cast<long>(std::floor((rep.truth[i].a_hz - g.a_lo_hz) / g.cell_hz));
            const auto ib =
                static_cast<long>(std::floor((rep.truth[i].b_hz - g.b_lo_hz) / g.cell_hz));
            if (ia >= 0 && ib >= 0 && ia < static_cast<long>(g.na) && ib < static_cast<long>(g.nb)) {
                const std::size_t cell = static_cast<std::size_t>(ia) * g.nb + ib;
                ++report.cell_seen[cell];
                if (rep.per_spin[i].detected) ++report.cell_detected[cell];
            }
        }
    }
    if (report.n_detected > 0) report.mean_detected_error = sum / report.n_detected;
    if (report.n_in_region > 0)
        report.overlap_fraction = static_cast<double>(overlapped) / report.n_in_region;
    return report;
}

} // namespace nvspec
