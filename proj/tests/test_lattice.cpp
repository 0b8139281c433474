#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "nvspec/lattice.hpp"

using namespace nvspec;

namespace {

const FieldConfig kField;

// Independent enumeration oracle: fcc Bravais lattice with a two-atom basis
// (0,0,0) and a/4(1,1,1), deliberately different from the production
// 8-atom-conventional-cell loop.
std::size_t fcc_count(double radius) {
    const double a = kDiamondLatticeConstant;
    const int span = static_cast<int>(std::ceil(radius / a)) + 2;
    const double r2max = radius * radius;
    std::size_t count = 0;
    const double fcc[4][3] = {{0, 0, 0}, {0, 0.5, 0.5}, {0.5, 0, 0.5}, {0.5, 0.5, 0}};
    for (int i = -span; i <= span; ++i)
        for (int j = -span; j <= span; ++j)
            for (int k = -span; k <= span; ++k)
                for (const auto& f : fcc)
                    for (const double shift : {0.0, 0.25}) {
                        const double x = (i + f[0] + shift) * a;
                        const double y = (j + f[1] + shift) * a;
                        const double z = (k + f[2] + shift) * a;
                        const double r2 = x * x + y * y + z * z;
                        if (r2 > 1e-30 && r2 <= r2max) ++count;
                    }
    return count;
}

} // namespace

TEST_CASE("diamond_lattice matches the independent fcc-basis count") {
    for (const double radius : {0.6e-9, 1.0e-9, 2.0e-9}) {
        const auto sites = diamond_lattice(radius);
        // Production list drops the nitrogen and the 2 sites nearest the pair.
        CHECK(sites.size() == fcc_count(radius) - 3);
        for (const auto& s : sites) {
            CHECK(s.r_mag > 0.0);
            CHECK(s.r_mag <= radius + 1e-15);
            CHECK(s.r_mag ==
                  doctest::Approx(std::hypot(s.r[0], s.r[1], s.r[2])).epsilon(1e-12));
            CHECK(std::abs(s.cos_theta) <= 1.0 + 1e-12);
        }
    }
    CHECK_THROWS_AS(diamond_lattice(2e-9, 10), std::length_error);
    CHECK_THROWS_AS(diamond_lattice(0.0), std::invalid_argument);
}

TEST_CASE("lattice ordering is deterministic and sorted by distance") {
    const auto a = diamond_lattice(1.2e-9);
    const auto b = diamond_lattice(1.2e-9);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].r == b[i].r);
        if (i > 0) CHECK(a[i - 1].r_mag <= a[i].r_mag + 1e-18);
    }
}

TEST_CASE("fcc sublattice of the vacancy is inversion symmetric") {
    // Sites at integer-plus-fcc positions come in (r, -r) pairs about the
    // vacancy; the shifted sublattice does not.
    const auto sites = diamond_lattice(1.0e-9);
    std::set<std::array<long, 3>> keys;
    auto key = [](const LatticeSite& s) {
        const double a4 = kDiamondLatticeConstant / 4.0;
        return std::array<long, 3>{std::lround(s.r[0] / a4), std::lround(s.r[1] / a4),
                                   std::lround(s.r[2] / a4)};
    };
    for (const auto& s : sites) keys.insert(key(s));
    for (const auto& s : sites) {
        const auto k = key(s);
        const bool vacancy_sublattice = (k[0] % 4 == 0) && (k[1] % 4 == 0) && (k[2] % 4 == 0);
        if (vacancy_sublattice) CHECK(keys.count({-k[0], -k[1], -k[2]}) == 1);
    }
}

TEST_CASE("hyperfine_from_position scaling and angles") {
    const double a = kDiamondLatticeConstant;
    const double inv_sqrt3 = 1.0 / std::sqrt(3.0);

    // Site on the NV axis: theta = 0 so B = 0 and A = -2 d.
    LatticeSite axial;
    axial.r = {a, a, a};
    axial.r_mag = std::sqrt(3.0) * a;
    axial.cos_theta = 1.0;
    const auto on_axis = hyperfine_from_position(axial, kField);
    CHECK(on_axis.b_hz == doctest::Approx(0.0).epsilon(1e-12));
    const double d = kMu0 * kField.gamma_e_hz_per_t * kField.gamma_n_hz_per_t * kPlanckH /
                     (4.0 * kPi * std::pow(axial.r_mag, 3));
    CHECK(on_axis.a_hz == doctest::Approx(-2.0 * d).epsilon(1e-12));

    // Magic angle: A = 0.
    LatticeSite magic = axial;
    magic.cos_theta = inv_sqrt3;
    CHECK(hyperfine_from_position(magic, kField).a_hz == doctest::Approx(0.0).epsilon(1e-9));

    // 1/r^3 scaling.
    LatticeSite twice = axial;
    twice.r_mag *= 2.0;
    CHECK(hyperfine_from_position(twice, kField).a_hz ==
          doctest::Approx(on_axis.a_hz / 8.0).epsilon(1e-12));

    // In-plane site: A = d, B = 0.
    LatticeSite planar = axial;
    planar.cos_theta = 0.0;
    const auto perp = hyperfine_from_position(planar, kField);
    CHECK(perp.a_hz == doctest::Approx(d).epsilon(1e-12));
    CHECK(perp.b_hz == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("nearest shells give strong couplings") {
    // The strongest remaining site after the NV-pair exclusions still
    // couples at hundreds of kHz; the weak-coupling model range only
    // starts further out.
    const auto sites = diamond_lattice(1.0e-9);
    const auto strongest = hyperfine_from_position(sites.front(), kField);
    CHECK(std::abs(strongest.a_hz) + strongest.b_hz > 100e3);
}

TEST_CASE("make_scenario is deterministic and respects the filters") {
    ScenarioConfig cfg;
    cfg.n_target_spins = 10;
    cfg.bath_site_count = 2000;
    cfg.rng_seed = 42;

    const auto s1 = make_scenario(cfg, kField);
    const auto s2 = make_scenario(cfg, kField);
    REQUIRE(s1.targets.size() == 10);
    REQUIRE(s1.bath.size() == 2000);
    for (std::size_t i = 0; i < s1.targets.size(); ++i) {
        CHECK(s1.targets[i].a_hz == s2.targets[i].a_hz);
        CHECK(s1.targets[i].b_hz == s2.targets[i].b_hz);
    }
    for (std::size_t i = 0; i < s1.bath.size(); ++i) CHECK(s1.bath[i].a_hz == s2.bath[i].a_hz);

    for (const auto& t : s1.targets) {
        CHECK(std::abs(t.a_hz) >= cfg.a_min_hz);
        CHECK(std::abs(t.a_hz) <= cfg.a_max_hz);
        CHECK(t.b_hz >= cfg.b_min_hz);
        CHECK(t.b_hz <= cfg.b_max_hz);
    }
    for (std::size_t i = 0; i < s1.target_sites.size(); ++i)
        CHECK(s1.target_sites[i].r_mag <= cfg.radius_max_m + 1e-15);
    for (const auto& b : s1.bath) {
        CHECK(std::abs(b.a_hz) < cfg.bath_a_max_hz);
        CHECK(b.b_hz < cfg.bath_b_max_hz);
    }

    // No two targets share the same hyperfine pair.
    for (std::size_t i = 0; i < s1.targets.size(); ++i)
        for (std::size_t j = i + 1; j < s1.targets.size(); ++j)
            CHECK((std::abs(s1.targets[i].a_hz - s1.targets[j].a_hz) >= 1.0 ||
                   std::abs(s1.targets[i].b_hz - s1.targets[j].b_hz) >= 1.0));

    // Different seed, different draw.
    cfg.rng_seed = 43;
    const auto s3 = make_scenario(cfg, kField);
    bool any_diff = false;
    for (std::size_t i = 0; i < s1.targets.size(); ++i)
        if (s1.targets[i].a_hz != s3.targets[i].a_hz) any_diff = true;
    CHECK(any_diff);

    // Impossible filter is reported as a configuration error.
    cfg.a_min_hz = 1e9;
    cfg.a_max_hz = 2e9;
    CHECK_THROWS_AS(make_scenario(cfg, kField), std::invalid_argument);
}

TEST_CASE("reachable_cells covers exactly the attainable hyperfine pairs") {
    const auto grid = reachable_cells(2e-9, kField);
    CHECK(grid.na == 40);
    CHECK(grid.nb == 20);

    // Every enumerated site within the radius maps to a reachable cell.
    std::size_t reachable_count = 0;
    for (const auto& s : diamond_lattice(2e-9)) {
        const auto hp = hyperfine_from_position(s, kField);
        if (hp.a_hz >= -100e3 && hp.a_hz < 100e3 && hp.b_hz < 100e3)
            CHECK(grid.contains(hp.a_hz, hp.b_hz));
    }
    for (const auto v : grid.reachable) reachable_count += v;
    CHECK(reachable_count > 0);
    CHECK(reachable_count < grid.reachable.size()); // gray region exists
    CHECK_FALSE(grid.contains(99.9e3, 99.9e3));     // far corner: unattainable
}

TEST_CASE("SplitMix64 reference stream") {
    // Reference values of the splitmix64 algorithm for seed 1234567.
    SplitMix64 rng(1234567);
    CHECK(rng.next_u64() == 6457827717110365317ull);
    CHECK(rng.next_u64() == 3203168211198807973ull);

    SplitMix64 u(99);
    for (int i = 0; i < 1000; ++i) {
        const double d = u.next_double();
        CHECK(d >= 0.0);
        CHECK(d < 1.0);
        const auto below = u.next_below(7);
        CHECK(below < 7);
        const double x = u.uniform(-2.0, 3.0);
        CHECK(x >= -2.0);
        CHECK(x < 3.0);
    }
    CHECK_THROWS_AS(u.next_below(0), std::invalid_argument);
}
