#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "nvspec/physics.hpp"

// Decomposition of a coherence trace into Gaussian dip components:
// fragment splitting at baseline crossings, weighted EM mixture fits per
// fragment with BIC model selection, and amplitude-threshold pruning.

namespace nvspec {

struct DipSpectrum {
    std::vector<double> tau;
    std::vector<double> y; // 1 - p_x

    static DipSpectrum from_signal(const Signal& s);
};

struct Fragment {
    std::size_t begin = 0; // index range [begin, end) into the tau grid
    std::size_t end = 0;

    std::size_t size() const { return end - begin; }
};

struct GaussianComponent {
    double amplitude = 0.0; // peak height in y units
    double mu = 0.0;        // seconds
    double sigma = 0.0;     // seconds
};

struct FragmentFit {
    std::vector<GaussianComponent> components;
    double bic = 0.0;
    double residual_rmse = 0.0;
    bool converged = true;
};

struct DecomposeOptions {
    double split_floor = 0.025;  // threshold / 2
    int max_components = 4;
    int max_iter = 500;
    double tol = 1e-8;           // relative change in weighted log-likelihood
};

// Maximal runs of y > split_floor, each extended to the nearest local
// minima below the floor; runs shorter than 3 samples merge into a neighbor.
std::vector<Fragment> split_fragments(const DipSpectrum& spectrum, double split_floor);

// Weighted Gaussian mixture fit of one fragment; component count chosen by
// BIC over 1..max_components. Deterministic: the EM seed derives from
// `fragment_index`. Negative y is clamped to zero before weighting.
FragmentFit em_decompose(std::span<const double> tau, std::span<const double> y,
                         int max_components, std::size_t fragment_index = 0,
                         int max_iter = 500, double tol = 1e-8);

// Removes components with amplitude strictly below the threshold.
std::vector<GaussianComponent> prune(std::vector<GaussianComponent> components,
                                     double threshold);

// Pointwise sum of the components over a tau grid.
std::vector<double> reconstruct(std::span<const GaussianComponent> components,
                                std::span<const double> tau);

// Full trace decomposition: split, fit each fragment, concatenate (sorted
// by center), no pruning applied.
struct Decomposition {
    std::vector<Fragment> fragments;
    std::vector<FragmentFit> fits;            // one per fragment
    std::vector<GaussianComponent> components; // concatenated, sorted by mu
};

Decomposition decompose(const DipSpectrum& spectrum, const DecomposeOptions& opt);

} // namespace nvspec
