#include "nvspec/pipeline.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <functional>
#include <limits>
#include <thread>

namespace nvspec {

DecomposeOptions PipelineConfig::decompose_options() const {
    return {split_floor, max_components, em_max_iter, em_tol};
}

int PipelineConfig::k_max(double tau_max) const {
    const double t = field.period();
    return std::max(1, static_cast<int>(std::floor(tau_max / t + 0.5)));
}

void PipelineConfig::validate() const {
    field.validate();
    sequence.validate();
    if (!(threshold > 0.0)) throw std::invalid_argument("config: threshold must be positive");
    if (!(d_max_s > 0.0)) throw std::invalid_argument("config: d_max must be positive");
    if (m_layers < 1) throw std::invalid_argument("config: m_layers must be >= 1");
    if (!(split_floor > 0.0)) throw std::invalid_argument("config: split_floor must be positive");
    if (min_members < 1) throw std::invalid_argument("config: min_members must be >= 1");
    if (beam_width == 0) throw std::invalid_argument("config: beam_width must be positive");
    if (max_components < 1) throw std::invalid_argument("config: max_components must be >= 1");
}

Signal synthesize(std::span<const SpinParams> spins, const PipelineConfig& config) {
    Signal out;
    out.tau = config.sequence.grid();
    const auto prod =
        coherence_product_grid(spins, config.field, config.sequence.n_pulses, out.tau);
    out.p_x.resize(prod.size());
    for (std::size_t i = 0; i < prod.size(); ++i) out.p_x[i] = 0.5 * (1.0 + prod[i]);
    return out;
}

SimulationOutput simulate(const PipelineConfig& config) {
    config.validate();
    SimulationOutput out;
    out.scenario = make_scenario(config.scenario, config.field);
    std::vector<SpinParams> all = out.scenario.targets;
    all.insert(all.end(), out.scenario.bath.begin(), out.scenario.bath.end());
    out.signal = synthesize(all, config);
    return out;
}

AnalysisResult analyze_signal(const Signal& signal, const PipelineConfig& config) {
    config.validate();
    signal.validate();

    AnalysisResult out;
    const auto spectrum = DipSpectrum::from_signal(signal);
    out.decomposition = decompose(spectrum, config.decompose_options());
    out.components = prune(out.decomposition.components, config.threshold);
    out.k_max = config.k_max(signal.tau.back());

    FanOptions fan_opt{config.field.period(), out.k_max, config.m_layers};
    out.fan = fan_diagram(out.components, fan_opt, signal.tau.front(), signal.tau.back());
    out.lines = greedy_extract(out.fan.points, config.d_max_s, out.k_max, config.min_members);

    // Background model from everything outside any detected dip.
    std::vector<std::pair<double, double>> mask;
    for (const auto& g : out.decomposition.components)
        mask.emplace_back(g.mu - 3.0 * g.sigma, g.mu + 3.0 * g.sigma);
    out.bath = BathModel::fit(signal, mask);

    // Closed-form initial estimates per line.
    struct Working {
        std::size_t line_id;
        SpinParams params;
        SpinParams initial;
        double max_amplitude;
    };
    std::vector<Working> work;
    for (std::size_t li = 0; li < out.lines.size(); ++li) {
        SpinParams init;
        try {
            init = initial_estimate(out.lines[li], out.components, config.field);
        } catch (const InconsistentConstraints&) {
            out.unfittable_lines.push_back(li);
            continue;
        }
        init.a_hz = std::clamp(init.a_hz, -config.fit.a_bound_hz, config.fit.a_bound_hz);
        init.b_hz = std::clamp(init.b_hz, 1.0, config.fit.b_bound_hz);
        double amp = 0.0;
        for (std::size_t id : out.lines[li].members)
            amp = std::max(amp, out.components[id].amplitude);
        work.push_back({li, init, init, amp});
    }

    // Each candidate is fit on its own dip windows with no other spins in
    // the model; joint effects are handled by the post-selection polish.
    std::stable_sort(work.begin(), work.end(),
                     [](const Working& a, const Working& b) { return a.max_amplitude > b.max_amplitude; });
    std::vector<SpinEstimate> refined(work.size());
    for (std::size_t i = 0; i < work.size(); ++i) {
        auto est = refine(signal, work[i].params, {}, out.bath, config.field,
                          config.sequence.n_pulses, config.fit);
        est.initial = work[i].initial;
        est.line_id = work[i].line_id;
        est.line = out.lines[work[i].line_id];
        est.member_dip_count = static_cast<int>(est.line.members.size());
        est.in_confidence_region = in_confidence_region(est.params);
        refined[i] = std::move(est);
    }
    out.candidates = std::move(refined);

    if (!out.candidates.empty()) {
        // Joint configuration RMSE over the union of the given parameter
        // sets' windows; a shared support makes before/after comparable.
        auto joint_rmse = [&](std::span<const SpinParams> model,
                              std::span<const SpinParams> window_sources) -> double {
            const auto support = filter_support(signal, window_sources, config.field);
            if (support.empty()) return std::numeric_limits<double>::infinity();
            return filtered_rmse(signal, model, out.bath, config.field,
                                 config.sequence.n_pulses, support);
        };

        auto polish = [&](std::vector<SpinEstimate>& spins) {
            // Two coordinate-descent sweeps, each spin refit with the
            // current state of the others fixed. A refit is only accepted
            // if it does not worsen the joint filtered RMSE (evaluated on
            // the union of the old and new windows), so a fit that escapes
            // its dip toward some unrelated feature is discarded.
            for (int sweep = 0; sweep < 2 && spins.size() > 1; ++sweep) {
                for (std::size_t i = 0; i < spins.size(); ++i) {
                    std::vector<SpinParams> others;
                    for (std::size_t j = 0; j < spins.size(); ++j)
                        if (j != i) others.push_back(spins[j].params);
                    auto est = refine(signal, spins[i].params, others, out.bath, config.field,
                                      config.sequence.n_pulses, config.fit);
                    std::vector<SpinParams> old_model = others, new_model = others;
                    old_model.push_back(spins[i].params);
                    new_model.push_back(est.params);
                    std::vector<SpinParams> windows = others;
                    windows.push_back(spins[i].params);
                    windows.push_back(est.params);
                    if (joint_rmse(new_model, windows) > joint_rmse(old_model, windows)) continue;
                    spins[i].params = est.params;
                    spins[i].filtered_rmse = est.filtered_rmse;
                    spins[i].converged = est.converged;
                    spins[i].in_confidence_region = in_confidence_region(est.params);
                }
            }
        };

        // Select, polish, then give every candidate a second refinement
        // pass with the accepted spins in the model; overlapping dips that
        // spoiled the first, context-free fit are explained away and the
        // re-selection can admit the corrected candidates.
        const int rounds = 2;
        for (int round = 0; round < rounds; ++round) {
            // Beam search handles up to 63 candidates; beyond that keep
            // the best-supported ones.
            std::vector<SpinEstimate> pool = out.candidates;
            if (pool.size() > 63) {
                std::stable_sort(pool.begin(), pool.end(),
                                 [](const SpinEstimate& a, const SpinEstimate& b) {
                                     return a.member_dip_count > b.member_dip_count;
                                 });
                pool.resize(63);
            }
            out.selection = beam_select(pool, signal, out.bath, config.field,
                                        config.sequence.n_pulses, config.beam_width);
            out.spins.clear();
            for (std::size_t idx : out.selection.selected) out.spins.push_back(pool[idx]);
            polish(out.spins);

            if (round + 1 == rounds) break;
            for (auto& cand : out.candidates) {
                std::vector<SpinParams> others;
                for (const auto& s : out.spins)
                    if (s.line_id != cand.line_id) others.push_back(s.params);
                auto est = refine(signal, cand.params, others, out.bath, config.field,
                                  config.sequence.n_pulses, config.fit);
                // A candidate dragged toward a stronger neighbor in the
                // context-free pass can recover from its pristine estimate.
                auto est2 = refine(signal, cand.initial, others, out.bath, config.field,
                                   config.sequence.n_pulses, config.fit);
                // Pick between the incumbent and the two refits on the
                // union of all three window sets; the per-fit rmse values
                // are taken over different supports and not comparable.
                const std::array<SpinParams, 3> contenders{cand.params, est.params, est2.params};
                std::vector<SpinParams> model = others;
                model.push_back(cand.params);
                double best = joint_rmse(model, contenders);
                for (const auto* e : {&est, &est2}) {
                    model.back() = e->params;
                    const double j = joint_rmse(model, contenders);
                    if (j < best) {
                        best = j;
                        cand.params = e->params;
                        cand.filtered_rmse = e->filtered_rmse;
                        cand.converged = e->converged;
                        cand.in_confidence_region = in_confidence_region(e->params);
                    }
                }
            }
        }
    }

    // Model trace over the full grid.
    std::vector<SpinParams> chosen;
    for (const auto& s : out.spins) chosen.push_back(s.params);
    out.reconstruction.resize(signal.tau.size());
    const auto prod =
        coherence_product_grid(chosen, config.field, config.sequence.n_pulses, signal.tau);
    for (std::size_t i = 0; i < signal.tau.size(); ++i)
        out.reconstruction[i] = 0.5 * (1.0 + out.bath.m(signal.tau[i]) * prod[i]);
    return out;
}

void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
    if (n == 0) return;
    unsigned workers = threads > 0 ? static_cast<unsigned>(threads)
                                   : std::max(1u, std::thread::hardware_concurrency());
    workers = static_cast<unsigned>(std::min<std::size_t>(workers, n));
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
        });
    }
    for (auto& t : pool) t.join();
}

} // namespace nvspec
