#pragma once

#include <cstdint>
#include <vector>

#include "nvspec/pipeline.hpp"

// Recovery benchmarks over synthetic scenarios: single-spin (A, B) maps,
// two-spin resolution cases, and multi-spin replicate studies. Every run is
// seeded and reproducible; heavy loops go through parallel_for with results
// written to index-addressed slots so aggregation is deterministic.

namespace nvspec {

// A truth spin is counted as detected when the assignment pairs it with an
// estimate and the dip-frequency error stays below this gate.
inline constexpr double kDetectionFpGateHz = 3e3;
// Two in-region truth spins closer than this in dip frequency "overlap".
inline constexpr double kOverlapFpHz = 2e3;

struct CellResult {
    SpinParams truth;
    bool detected = false;
    double error = 1.0;        // normalized (A, B) distance; 1.0 when missed
    double fp_error_hz = 0.0;  // |f_p truth - f_p estimate|; 0 when missed
    SpinParams estimate;       // meaningful only when detected
    int n_reported = 0;        // spins the analysis reported for this cell
};

struct SingleSpinMapOptions {
    double a_lo_hz = -100e3, a_hi_hz = 100e3;
    double b_lo_hz = 5e3, b_hi_hz = 100e3;
    double cell_hz = 5e3; // spacing of sampled (A, B) centers
};

struct SingleSpinMapReport {
    SingleSpinMapOptions options;
    std::vector<double> a_values_hz;
    std::vector<double> b_values_hz;
    std::vector<CellResult> cells; // row-major: a index * nb + b index
    double mean_detected_error = 0.0;
    std::size_t n_detected = 0;
};

// One target spin per cell on a shared bath realization (drawn once from
// config.scenario with the target count forced to zero).
SingleSpinMapReport single_spin_map(const PipelineConfig& config,
                                    const SingleSpinMapOptions& options);

struct TwoSpinResult {
    SpinParams truth_1, truth_2;
    double delta_fp_hz = 0.0; // dip-frequency separation of the truth pair
    CellResult spin_1, spin_2;
    bool both_detected = false;
};

// Joint recovery of an explicit pair on the shared bath.
TwoSpinResult two_spin_case(const PipelineConfig& config, const SpinParams& s1,
                            const SpinParams& s2);

struct TwoSpinMapReport {
    SpinParams reference;
    SingleSpinMapOptions options; // grid of the swept second spin
    std::vector<double> a_values_hz;
    std::vector<double> b_values_hz;
    std::vector<TwoSpinResult> cells; // row-major; spin_1 = reference
    std::size_t n_both_detected = 0;
};

// Resolution map: the reference spin is fixed, the second sweeps the grid.
TwoSpinMapReport two_spin_resolution(const PipelineConfig& config, const SpinParams& reference,
                                     const SingleSpinMapOptions& options);

struct ReplicateResult {
    std::vector<SpinParams> truth;
    std::vector<CellResult> per_spin;       // one per truth spin
    std::vector<std::uint8_t> in_region;    // confidence-region flags per truth
    std::vector<std::uint8_t> overlapped;   // another truth within kOverlapFpHz
    int n_reported = 0;
};

struct MultiSpinReport {
    std::vector<ReplicateResult> replicates;
    // Aggregates over in-region truth spins across all replicates.
    std::size_t n_in_region = 0;
    std::size_t n_detected = 0;
    double mean_detected_error = 0.0;
    double overlap_fraction = 0.0; // overlapped / in-region
    ReachableGrid reachable;       // mask for plotting the per-cell rates
    // Per reachable cell: detected / seen counts, same layout as `reachable`.
    std::vector<std::uint32_t> cell_seen;
    std::vector<std::uint32_t> cell_detected;
};

// `replicates` scenarios of config.scenario.n_target_spins lattice spins
// each; target draws use per-replicate seeds derived from the base seed,
// the bath realization is shared across replicates.
MultiSpinReport multi_spin_map(const PipelineConfig& config, int replicates);

} // namespace nvspec
