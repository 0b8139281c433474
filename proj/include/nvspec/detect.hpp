#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "nvspec/decompose.hpp"

// Fan diagram construction (dip offsets vs. period index, with clone
// layers) and the greedy CPMG line fit that groups dips per nuclear spin.

namespace nvspec {

struct DipPoint {
    int k = 0;                 // period index after clone shifting
    double delta_tau = 0.0;    // mu - (k - 1/2) T, seconds
    double amplitude = 0.0;
    double sigma = 0.0;        // seconds
    int clone_offset = 0;      // 0 for original points
    std::size_t source_id = 0; // index of the originating GaussianComponent
};

struct LineCandidate {
    double slope = 0.0;                  // seconds per period, through (0.5, 0)
    std::vector<std::size_t> members;    // distinct source_ids, sorted
    double mean_sq_distance = 0.0;       // seconds^2
    int seed_k = 0;
    double seed_delta_tau = 0.0;
};

struct FanOptions {
    double period = 0.0; // T = pi / omega_L
    int k_max = 1;
    int m_layers = 3;
};

// Maps components to (k, delta_tau) and adds clone layers. Components whose
// center falls outside [tau_lo, tau_hi] are skipped and reported.
struct FanDiagram {
    std::vector<DipPoint> points;
    std::vector<std::size_t> skipped; // component indices outside the grid
};

FanDiagram fan_diagram(std::span<const GaussianComponent> components, const FanOptions& opt,
                       double tau_lo, double tau_hi);

struct LineScore {
    double mean_sq_distance = 0.0;
    std::vector<std::size_t> matched; // distinct source_ids
};

// Mean over k = 1..k_max of the squared clamped distance between the line
// delta_tau = slope * (k - 0.5) and the nearest dip at each k.
LineScore score_line(double slope, std::span<const DipPoint> points, double d_max, int k_max);

// Greedy extraction: seed one candidate per remaining original dip, emit the
// best-scoring one when it has at least min_members matched dips, remove its
// members (all clones included), repeat.
std::vector<LineCandidate> greedy_extract(std::vector<DipPoint> points, double d_max, int k_max,
                                          int min_members);

} // namespace nvspec
