#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "nvspec/decompose.hpp"
#include "nvspec/detect.hpp"
#include "nvspec/fit.hpp"
#include "nvspec/lattice.hpp"
#include "nvspec/physics.hpp"

// End-to-end orchestration: resolved configuration, signal synthesis from a
// scenario, and the analysis chain (decompose -> detect -> fit -> select).

namespace nvspec {

struct PipelineConfig {
    double threshold = 0.05;      // minimum Gaussian amplitude kept
    double d_max_s = 1e-8;        // line-fit distance clamp, seconds
    int m_layers = 3;             // clone layers in the fan diagram
    double split_floor = 0.025;   // fragment floor, defaults to threshold / 2
    int min_members = 3;          // dips required to emit a line
    std::size_t beam_width = 8;
    DecomposeOptions decompose_options() const;
    FitOptions fit;
    FieldConfig field;
    SequenceConfig sequence;
    ScenarioConfig scenario;
    int max_components = 4;
    int em_max_iter = 500;
    double em_tol = 1e-8;
    int threads = 0; // 0 = hardware default

    int k_max(double tau_max) const; // time windows covered by the grid
    void validate() const;
};

struct SimulationOutput {
    Scenario scenario;
    Signal signal;
};

// Deterministic per seed: targets + bath drawn from the lattice, trace
// synthesized with the product rule.
SimulationOutput simulate(const PipelineConfig& config);

// Synthesize a trace for explicit spin lists (targets and optional bath).
Signal synthesize(std::span<const SpinParams> spins, const PipelineConfig& config);

struct AnalysisResult {
    Decomposition decomposition;               // raw fits per fragment
    std::vector<GaussianComponent> components; // pruned, sorted by center
    FanDiagram fan;
    std::vector<LineCandidate> lines;
    std::vector<std::size_t> unfittable_lines; // no real (A, B) from the inverse
    std::vector<SpinEstimate> candidates;      // refined, one per fittable line
    Configuration selection;
    std::vector<SpinEstimate> spins;           // the selected configuration
    std::vector<double> reconstruction;        // model p_x on the input grid
    BathModel bath;
    int k_max = 0;
};

AnalysisResult analyze_signal(const Signal& signal, const PipelineConfig& config);

// Runs fn(i) for i in [0, n) on `threads` workers (0 = hardware count).
// Results must be written to disjoint slots; iteration order is unspecified
// but any aggregation by index is deterministic.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

} // namespace nvspec
