#include "nvspec/lattice.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace nvspec {

namespace {

constexpr double kInvSqrt3 = 0.5773502691896257645;

// 8-atom conventional diamond cell, in units of the lattice constant.
constexpr std::array<std::array<double, 3>, 8> kBasis{{
    {0.00, 0.00, 0.00},
    {0.00, 0.50, 0.50},
    {0.50, 0.00, 0.50},
    {0.50, 0.50, 0.00},
    {0.25, 0.25, 0.25},
    {0.25, 0.75, 0.75},
    {0.75, 0.25, 0.75},
    {0.75, 0.75, 0.25},
}};

bool site_less(const LatticeSite& a, const LatticeSite& b) {
    if (a.r_mag != b.r_mag) return a.r_mag < b.r_mag;
    return a.r < b.r;
}

} // namespace

std::uint64_t SplitMix64::next_u64() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

double SplitMix64::next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

std::uint64_t SplitMix64::next_below(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("next_below: n must be positive");
    const std::uint64_t bound = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t x;
    do {
        x = next_u64();
    } while (x >= bound);
    return x % n;
}

double SplitMix64::uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

std::vector<LatticeSite> diamond_lattice(double radius_max_m, std::size_t site_cap) {
    if (!(radius_max_m > 0.0)) throw std::invalid_argument("diamond_lattice: radius must be positive");
    const double a = kDiamondLatticeConstant;
    const int span = static_cast<int>(std::ceil(radius_max_m / a)) + 1;
    const double r2_max = radius_max_m * radius_max_m;

    std::vector<LatticeSite> sites;
    const std::array<double, 3> nitrogen{0.25 * a, 0.25 * a, 0.25 * a};
    for (int ix = -span; ix <= span; ++ix) {
        for (int iy = -span; iy <= span; ++iy) {
            for (int iz = -span; iz <= span; ++iz) {
                for (const auto& b : kBasis) {
                    const double x = (ix + b[0]) * a;
                    const double y = (iy + b[1]) * a;
                    const double z = (iz + b[2]) * a;
                    const double r2 = x * x + y * y + z * z;
                    if (r2 <= 1e-30 || r2 > r2_max) continue;
                    LatticeSite s;
                    s.r = {x, y, z};
                    s.r_mag = std::sqrt(r2);
                    s.cos_theta = (x + y + z) * kInvSqrt3 / s.r_mag;
                    sites.push_back(s);
                    if (sites.size() > site_cap)
                        throw std::length_error("diamond_lattice: site count exceeds cap");
                }
            }
        }
    }
    std::sort(sites.begin(), sites.end(), site_less);

    // Drop the nitrogen site and the two remaining sites closest to the NV
    // pair; such strongly coupled spins are outside the weak-coupling model.
    std::erase_if(sites, [&](const LatticeSite& s) {
        return std::abs(s.r[0] - nitrogen[0]) < 1e-13 && std::abs(s.r[1] - nitrogen[1]) < 1e-13 &&
               std::abs(s.r[2] - nitrogen[2]) < 1e-13;
    });
    auto pair_dist = [&](const LatticeSite& s) {
        const double dx = s.r[0] - nitrogen[0];
        const double dy = s.r[1] - nitrogen[1];
        const double dz = s.r[2] - nitrogen[2];
        return std::min(s.r_mag, std::sqrt(dx * dx + dy * dy + dz * dz));
    };
    for (int drop = 0; drop < 2 && !sites.empty(); ++drop) {
        auto it = std::min_element(sites.begin(), sites.end(),
                                   [&](const LatticeSite& x, const LatticeSite& y) {
                                       const double dx = pair_dist(x), dy = pair_dist(y);
                                       if (dx != dy) return dx < dy;
                                       return site_less(x, y);
                                   });
        sites.erase(it);
    }
    return sites;
}

SpinParams hyperfine_from_position(const LatticeSite& site, const FieldConfig& field) {
    if (!(site.r_mag > 0.0)) throw std::domain_error("hyperfine_from_position: zero displacement");
    const double d = kMu0 * field.gamma_e_hz_per_t * field.gamma_n_hz_per_t * kPlanckH /
                     (4.0 * kPi * site.r_mag * site.r_mag * site.r_mag);
    const double c = site.cos_theta;
    const double s = std::sqrt(std::max(0.0, 1.0 - c * c));
    return {d * (1.0 - 3.0 * c * c), std::abs(3.0 * d * c * s)};
}

Scenario make_scenario(const ScenarioConfig& config, const FieldConfig& field) {
    if (config.n_target_spins < 0)
        throw std::invalid_argument("make_scenario: negative target count");
    if (!(config.a_max_hz > config.a_min_hz) || !(config.b_max_hz > config.b_min_hz))
        throw std::invalid_argument("make_scenario: empty target (A, B) range");

    const auto all = diamond_lattice(config.bath_radius_max_m);

    std::vector<LatticeSite> target_pool;
    std::vector<SpinParams> target_pool_params;
    std::vector<SpinParams> bath_pool;
    for (const auto& site : all) {
        const auto hp = hyperfine_from_position(site, field);
        if (site.r_mag <= config.radius_max_m) {
            const double abs_a = std::abs(hp.a_hz);
            if (abs_a >= config.a_min_hz && abs_a <= config.a_max_hz &&
                hp.b_hz >= config.b_min_hz && hp.b_hz <= config.b_max_hz) {
                target_pool.push_back(site);
                target_pool_params.push_back(hp);
            }
        } else {
            if (std::abs(hp.a_hz) < config.bath_a_max_hz && hp.b_hz < config.bath_b_max_hz)
                bath_pool.push_back(hp);
        }
    }

    if (static_cast<int>(target_pool.size()) < config.n_target_spins)
        throw std::invalid_argument(
            "make_scenario: too few lattice sites satisfy the target (A, B) range filter");

    SplitMix64 rng(config.rng_seed);
    Scenario out;

    // Targets: uniform draw without replacement from the qualifying pool.
    // Symmetry-equivalent sites share the same (A, B) and contribute
    // literally identical signal factors, so duplicates are skipped.
    std::vector<std::size_t> idx(target_pool.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::size_t taken = 0;
    while (static_cast<int>(out.targets.size()) < config.n_target_spins) {
        if (taken >= idx.size())
            throw std::invalid_argument(
                "make_scenario: too few distinct (A, B) pairs satisfy the target filter");
        const std::size_t pick = taken + static_cast<std::size_t>(rng.next_below(idx.size() - taken));
        std::swap(idx[taken], idx[pick]);
        const auto& hp = target_pool_params[idx[taken]];
        const bool dup = std::any_of(out.targets.begin(), out.targets.end(), [&](const SpinParams& t) {
            return std::abs(t.a_hz - hp.a_hz) < 1.0 && std::abs(t.b_hz - hp.b_hz) < 1.0;
        });
        if (!dup) {
            out.targets.push_back(hp);
            out.target_sites.push_back(target_pool[idx[taken]]);
        }
        ++taken;
    }

    // Bath: uniform draw without replacement from the shell pool; if the
    // pool is smaller than requested, take it whole.
    const std::size_t want = static_cast<std::size_t>(std::max(config.bath_site_count, 0));
    if (bath_pool.size() <= want) {
        out.bath = bath_pool;
    } else {
        std::vector<std::size_t> bidx(bath_pool.size());
        for (std::size_t i = 0; i < bidx.size(); ++i) bidx[i] = i;
        for (std::size_t k = 0; k < want; ++k) {
            const std::size_t pick = k + static_cast<std::size_t>(rng.next_below(bidx.size() - k));
            std::swap(bidx[k], bidx[pick]);
            out.bath.push_back(bath_pool[bidx[k]]);
        }
    }
    return out;
}

bool ReachableGrid::contains(double a_hz, double b_hz) const {
    const auto ia = static_cast<long>(std::floor((a_hz - a_lo_hz) / cell_hz));
    const auto ib = static_cast<long>(std::floor((b_hz - b_lo_hz) / cell_hz));
    if (ia < 0 || ib < 0 || ia >= static_cast<long>(na) || ib >= static_cast<long>(nb)) return false;
    return at(static_cast<std::size_t>(ia), static_cast<std::size_t>(ib));
}

ReachableGrid reachable_cells(double radius_max_m, const FieldConfig& field, double a_lo_hz,
                              double a_hi_hz, double b_lo_hz, double b_hi_hz, double cell_hz) {
    ReachableGrid grid;
    grid.a_lo_hz = a_lo_hz;
    grid.b_lo_hz = b_lo_hz;
    grid.cell_hz = cell_hz;
    grid.na = static_cast<std::size_t>(std::ceil((a_hi_hz - a_lo_hz) / cell_hz));
    grid.nb = static_cast<std::size_t>(std::ceil((b_hi_hz - b_lo_hz) / cell_hz));
    grid.reachable.assign(grid.na * grid.nb, 0);
    for (const auto& site : diamond_lattice(radius_max_m)) {
        const auto hp = hyperfine_from_position(site, field);
        const auto ia = static_cast<long>(std::floor((hp.a_hz - a_lo_hz) / cell_hz));
        const auto ib = static_cast<long>(std::floor((hp.b_hz - b_lo_hz) / cell_hz));
        if (ia < 0 || ib < 0 || ia >= static_cast<long>(grid.na) || ib >= static_cast<long>(grid.nb))
            continue;
        grid.reachable[static_cast<std::size_t>(ia) * grid.nb + static_cast<std::size_t>(ib)] = 1;
    }
    return grid;
}

} // namespace nvspec
