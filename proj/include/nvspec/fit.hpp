#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "nvspec/detect.hpp"
#include "nvspec/physics.hpp"

// Hyperfine parameter extraction per detected line: closed-form initial
// estimate, window-filtered nonlinear refinement against the coherence
// model, beam-search post-selection, and benchmark scoring utilities.

namespace nvspec {

// Smooth multiplicative background M_bath(tau): a natural cubic spline
// through binned means of the masked coherence product.
class BathModel {
  public:
    static BathModel unity();
    // mask_windows: [lo, hi] intervals excluded from the background fit.
    static BathModel fit(const Signal& signal,
                         std::span<const std::pair<double, double>> mask_windows,
                         int bins = 150);

    double m(double tau) const;

  private:
    std::vector<double> knots_x_;
    std::vector<double> knots_y_;
    std::vector<double> second_deriv_;
};

struct SpinEstimate {
    SpinParams params;
    SpinParams initial;
    std::size_t line_id = 0; // index into the extracted line list
    LineCandidate line;
    double filtered_rmse = 0.0;
    int member_dip_count = 0;
    bool in_confidence_region = false;
    bool converged = false;
};

bool in_confidence_region(const SpinParams& p);

struct FitOptions {
    double a_bound_hz = 200e3;  // |A| <= bound
    double b_bound_hz = 200e3;  // 0 < B <= bound
    int eval_budget = 2000;
    double tol_hz = 1.0;
    int outer_iterations = 3;
};

// sigma-hat = median member sigma; closed-form inverse of the slope and
// width relations (params_from_slope_sigma).
// Throws InconsistentConstraints when the line admits no real (A, B).
SpinParams initial_estimate(const LineCandidate& line,
                            std::span<const GaussianComponent> components,
                            const FieldConfig& field);

// Sample indices of the union of dip windows [tau_k - sigma, tau_k + sigma]
// of the given spins over the signal grid. Widths use sigma_from_params.
std::vector<std::size_t> filter_support(const Signal& signal,
                                        std::span<const SpinParams> spins,
                                        const FieldConfig& field);

// RMSE between the measured trace and the joint reconstruction (product of
// spin coherences times the bath background), restricted to the support.
// Throws std::domain_error when the support is empty.
double filtered_rmse(const Signal& signal, std::span<const SpinParams> spins,
                     const BathModel& bath, const FieldConfig& field, int n_pulses,
                     std::span<const std::size_t> support);

// Refines one spin's (A, B) with the others held fixed, windows recomputed
// from the current iterate each outer iteration. Never returns an iterate
// worse than the initial one under the self-consistent objective.
SpinEstimate refine(const Signal& signal, const SpinParams& initial,
                    std::span<const SpinParams> other_fixed, const BathModel& bath,
                    const FieldConfig& field, int n_pulses, const FitOptions& opt = {});

struct Configuration {
    std::vector<std::size_t> selected; // indices into the candidate list
    double total_filtered_rmse = 0.0;
    // (candidate index, RMSE increase when added to the selection)
    std::vector<std::pair<std::size_t, double>> excluded_marginals;
};

// Width-limited breadth-first subset search over include/exclude decisions,
// scored by joint filtered RMSE over the union of all candidates' windows.
Configuration beam_select(std::span<const SpinEstimate> candidates, const Signal& signal,
                          const BathModel& bath, const FieldConfig& field, int n_pulses,
                          std::size_t beam_width);

// Normalized (A, B)-plane distance. Throws std::domain_error when the
// reference pair is identically zero.
double error_metric(const SpinParams& orig, const SpinParams& obtained);

struct SpinMatch {
    // matched[i]: estimate index paired with truth i, or npos for a miss
    std::vector<std::size_t> matched;
    std::vector<double> errors; // per truth; 1.0 for misses
    double total_error = 0.0;

    static constexpr std::size_t npos = static_cast<std::size_t>(-1);
};

// Minimum-total-error bipartite assignment; misses cost 1.0.
SpinMatch match_spins(std::span<const SpinParams> truth, std::span<const SpinParams> estimates);

} // namespace nvspec
