#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "nvspec/physics.hpp"

// Diamond-lattice enumeration around the NV pair and dipolar hyperfine
// parameters for candidate 13C sites, plus seeded scenario generation
// (target spins + weakly coupled bath) for benchmarking.

namespace nvspec {

inline constexpr double kDiamondLatticeConstant = 0.3567e-9; // meters
inline constexpr double kMu0 = 4.0 * kPi * 1e-7;             // H/m
inline constexpr double kPlanckH = 6.62607015e-34;           // J s

struct LatticeSite {
    std::array<double, 3> r{}; // displacement from the vacancy, meters (cube axes)
    double r_mag = 0.0;
    double cos_theta = 0.0;    // component of r_hat along the [111] NV axis
};

struct ScenarioConfig {
    int n_target_spins = 10;
    double a_min_hz = 5e3;      // allowed |A| interval for targets
    double a_max_hz = 70e3;
    double b_min_hz = 15e3;     // allowed B interval for targets
    double b_max_hz = 80e3;
    double radius_max_m = 2e-9;
    int bath_site_count = 50000;
    double bath_a_max_hz = 8e3;
    double bath_b_max_hz = 0.25e3;
    double bath_radius_max_m = 6e-9; // outer shell radius for bath sites
    std::uint64_t rng_seed = 1;
};

struct Scenario {
    std::vector<SpinParams> targets;
    std::vector<LatticeSite> target_sites;
    std::vector<SpinParams> bath;
};

// All diamond-cubic sites with 0 < |r| <= radius_max about the vacancy,
// NV axis along [111]. The nitrogen site and the two sites nearest the NV
// pair are excluded. Deterministic ordering: by r_mag, then lexicographic.
// Throws std::length_error when the site count would exceed `site_cap`.
std::vector<LatticeSite> diamond_lattice(double radius_max_m,
                                         std::size_t site_cap = 4'000'000);

// Secular dipolar hyperfine components from a site position.
SpinParams hyperfine_from_position(const LatticeSite& site, const FieldConfig& field);

// Seeded target + bath draw. Byte-identical for identical config.
Scenario make_scenario(const ScenarioConfig& config, const FieldConfig& field);

// 5-kHz-binned reachability mask of the (A, B) plane for sites within
// radius_max: cell (ia, ib) covers A in [a_lo + ia*cell, ...), B likewise.
struct ReachableGrid {
    double a_lo_hz, b_lo_hz, cell_hz;
    std::size_t na, nb;
    std::vector<std::uint8_t> reachable; // na * nb, row-major in A

    bool at(std::size_t ia, std::size_t ib) const { return reachable[ia * nb + ib] != 0; }
    bool contains(double a_hz, double b_hz) const;
};

ReachableGrid reachable_cells(double radius_max_m, const FieldConfig& field,
                              double a_lo_hz = -100e3, double a_hi_hz = 100e3,
                              double b_lo_hz = 0.0, double b_hi_hz = 100e3,
                              double cell_hz = 5e3);

// Deterministic stream of uniform deviates; used everywhere randomness is
// required so outputs do not depend on the standard library's distributions.
class SplitMix64 {
  public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}
    std::uint64_t next_u64();
    double next_double();                    // [0, 1)
    std::uint64_t next_below(std::uint64_t n); // [0, n), unbiased
    double uniform(double lo, double hi);

  private:
    std::uint64_t state_;
};

} // namespace nvspec
