#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "nvspec/lattice.hpp"
#include "nvspec/physics.hpp"

using namespace nvspec;

namespace {

const FieldConfig kField; // B0 = 0.04 T, default gammas

// Dense-grid dip locator used as the independent oracle for dip_position:
// maximizes the resonance factor 1 - n0.n1 (the p_x minimum itself hops
// between ripple lobes for strong B, so it is not a stable reference).
double resonance_argmax(const SpinParams& spin, int k, double step = 1e-11) {
    const auto g = RotationGeometry::from(spin, kField);
    const double wl = kField.larmor_omega();
    const double center = kPi * (2 * k - 1) / (g.omega_tilde + wl);
    double best_t = center, best_v = -1.0;
    for (double t = center - 0.1e-6; t <= center + 0.1e-6; t += step) {
        const double ca = std::cos(g.omega_tilde * t), cb = std::cos(wl * t);
        const double cphi = ca * cb - g.m_z * std::sin(g.omega_tilde * t) * std::sin(wl * t);
        if (1.0 + cphi < 1e-12) continue;
        const double v = g.m_x * g.m_x * (1.0 - ca) * (1.0 - cb) / (1.0 + cphi);
        if (v > best_v) {
            best_v = v;
            best_t = t;
        }
    }
    return best_t;
}

} // namespace

TEST_CASE("field constants") {
    CHECK(kField.larmor_freq() == doctest::Approx(428320.0).epsilon(1e-12));
    CHECK(kField.period() == doctest::Approx(1.167351513e-6).epsilon(1e-9));
    CHECK_THROWS_AS(FieldConfig{-1.0}.validate(), std::invalid_argument);
}

TEST_CASE("rotation geometry at A = B = 50 kHz") {
    const SpinParams s{50e3, 50e3};
    const auto g = RotationGeometry::from(s, kField);
    CHECK(g.omega_tilde / kTwoPi == doctest::Approx(480926.2131).epsilon(1e-9));
    CHECK(g.m_z * g.m_z + g.m_x * g.m_x == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(g.m_x == doctest::Approx(kTwoPi * 50e3 / g.omega_tilde).epsilon(1e-12));
}

TEST_CASE("coherence_single frozen values") {
    const SpinParams s{50e3, 50e3};
    // Frozen from a direct transcription of the conditional-rotation model.
    const auto p = coherence_single(s, kField, 32, 1e-6);
    CHECK(p.m == doctest::Approx(0.997937567).epsilon(1e-8));
    CHECK(p.p_x == doctest::Approx(0.9989687835).epsilon(1e-8));
    // Deep dip at the first resonance.
    const auto dip = coherence_single(s, kField, 32, 5.520188998e-7);
    CHECK(dip.m == doctest::Approx(-0.9720794218).epsilon(1e-7));

    // A = B = 0: no nuclear spin, coherence stays at 1.
    const auto flat = coherence_single(SpinParams{0.0, 0.0}, kField, 32, 1e-6);
    CHECK(flat.p_x == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("coherence bounds and tau = 0") {
    const SpinParams s{-20e3, 35e3};
    for (int i = 1; i <= 400; ++i) {
        const auto p = coherence_single(s, kField, 32, i * 37e-9);
        CHECK(p.m >= -1.0 - 1e-12);
        CHECK(p.m <= 1.0 + 1e-12);
        CHECK(p.p_x == doctest::Approx(0.5 * (1.0 + p.m)).epsilon(1e-14));
    }
    // tau = 0 is excluded from the model (trivially coherent).
    CHECK_THROWS_AS(coherence_single(s, kField, 32, 0.0), std::invalid_argument);
}

TEST_CASE("coherence_multi is the product rule") {
    const std::vector<SpinParams> spins{{50e3, 50e3}, {10e3, 20e3}};
    CHECK(coherence_multi(spins, kField, 32, 1e-6) ==
          doctest::Approx(0.9978205784).epsilon(1e-8));
    CHECK(coherence_multi({}, kField, 32, 1e-6) == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("coherence_product_grid matches pointwise evaluation") {
    const std::vector<SpinParams> spins{{50e3, 50e3}, {-12e3, 33e3}, {3e3, 0.2e3}};
    SequenceConfig seq;
    seq.tau_stop = 10e-6;
    const auto tau = seq.grid();
    const auto grid = coherence_product_grid(spins, kField, seq.n_pulses, tau);
    REQUIRE(grid.size() == tau.size());
    double worst = 0.0;
    for (std::size_t i = 0; i < tau.size(); i += 97) {
        double m = 1.0;
        for (const auto& s : spins) m *= coherence_single(s, kField, seq.n_pulses, tau[i]).m;
        worst = std::max(worst, std::abs(m - grid[i]));
    }
    CHECK(worst < 1e-9);
}

TEST_CASE("dip_position frozen values at A = B = 50 kHz") {
    const SpinParams s{50e3, 50e3};
    CHECK(dip_position(s, kField, 1, DipOrder::linear) ==
          doctest::Approx(5.499060572e-7).epsilon(1e-9));
    CHECK(dip_position(s, kField, 2, DipOrder::linear) ==
          doctest::Approx(1.649718171e-6).epsilon(1e-9));
    CHECK(dip_position(s, kField, 1) == doctest::Approx(5.520188998e-7).epsilon(1e-9));
    // The correction alternates sign with k.
    CHECK(dip_position(s, kField, 2) == doctest::Approx(1.647605329e-6).epsilon(1e-9));
    CHECK_THROWS_AS(dip_position(s, kField, 0), std::invalid_argument);
}

TEST_CASE("dip_position tracks the dense-grid resonance maximum") {
    SplitMix64 rng(20240811);
    for (int trial = 0; trial < 25; ++trial) {
        SpinParams s{rng.uniform(5e3, 70e3) * (rng.next_double() < 0.5 ? -1.0 : 1.0),
                     rng.uniform(15e3, 80e3)};
        for (int k = 1; k <= 3; ++k) {
            const double oracle = resonance_argmax(s, k);
            CHECK(std::abs(dip_position(s, kField, k) - oracle) < 1.2e-8);
        }
    }
}

TEST_CASE("dip_frequency") {
    CHECK(dip_frequency(SpinParams{50e3, 50e3}, kField) ==
          doctest::Approx(454623.1065).epsilon(1e-9));
    // B = 0, A = 0 degenerates to the Larmor frequency.
    CHECK(dip_frequency(SpinParams{0.0, 0.0}, kField) ==
          doctest::Approx(428320.0).epsilon(1e-12));
}

TEST_CASE("slope and sigma frozen values") {
    const SpinParams s{50e3, 50e3};
    CHECK(slope_from_params(s, kField) == doctest::Approx(-6.753939858e-8).epsilon(1e-8));
    CHECK(sigma_from_params(s, kField) == doctest::Approx(1.545619035e-8).epsilon(1e-8));
    const SpinParams neg{-30e3, 25e3};
    CHECK(slope_from_params(neg, kField) == doctest::Approx(4.121903035e-8).epsilon(1e-8));
    CHECK(sigma_from_params(neg, kField) == doctest::Approx(1.023336777e-8).epsilon(1e-8));
    CHECK(slope_from_params(SpinParams{0.0, 0.0}, kField) == doctest::Approx(0.0));
    CHECK_THROWS_AS(sigma_from_params(SpinParams{10e3, 0.0}, kField), std::domain_error);
}

TEST_CASE("params_from_slope_sigma inverts the forward maps") {
    SplitMix64 rng(77);
    for (int trial = 0; trial < 200; ++trial) {
        SpinParams s{rng.uniform(-70e3, 70e3), rng.uniform(5e3, 90e3)};
        const double slope = slope_from_params(s, kField);
        const double sigma = sigma_from_params(s, kField);
        const auto back = params_from_slope_sigma(slope, sigma, kField);
        CHECK(back.a_hz == doctest::Approx(s.a_hz).epsilon(1e-9));
        CHECK(back.b_hz == doctest::Approx(s.b_hz).epsilon(1e-9));
    }
    // Constraints with no real solution must be rejected.
    CHECK_THROWS_AS(params_from_slope_sigma(0.0, 1e-3, kField), InconsistentConstraints);
    CHECK_THROWS_AS(params_from_slope_sigma(-1e-6, 1e-8, kField), std::invalid_argument);
}

TEST_CASE("lorentzian envelope and Gaussian width agree at half maximum") {
    const SpinParams s{20e3, 40e3};
    const double tk = dip_position(s, kField, 1);
    CHECK(lorentzian_envelope(s, kField, tk, tk) == doctest::Approx(2.0).epsilon(1e-12));
    // sigma converts the Lorentzian FWHM into a Gaussian FWHM.
    const double sigma = sigma_from_params(s, kField);
    const double half_width = std::sqrt(2.0 * std::log(2.0)) * sigma;
    CHECK(lorentzian_envelope(s, kField, tk + half_width, tk) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK_THROWS_AS(lorentzian_envelope(SpinParams{20e3, 0.0}, kField, tk, tk), std::domain_error);
}

TEST_CASE("sequence grid and signal validation") {
    SequenceConfig seq;
    seq.tau_start = 5e-9;
    seq.tau_stop = 1e-6;
    seq.tau_step = 5e-9;
    const auto tau = seq.grid();
    REQUIRE(tau.size() == 200);
    CHECK(tau.front() == doctest::Approx(5e-9));
    CHECK(tau.back() == doctest::Approx(1e-6));

    Signal sig;
    sig.tau = tau;
    sig.p_x.assign(tau.size(), 1.0);
    CHECK_NOTHROW(sig.validate());
    sig.p_x.pop_back();
    CHECK_THROWS_AS(sig.validate(), std::invalid_argument);
    sig.p_x.push_back(1.0);
    sig.tau[10] += 1e-9; // non-uniform grid
    CHECK_THROWS_AS(sig.validate(), std::invalid_argument);
}

TEST_CASE("dip amplitude sensitivity") {
    // Weak-coupling gain approaches 2 as B -> 0.
    const auto weak = dip_amplitude_sensitivity(SpinParams{10e3, 1e3}, kField, 32);
    CHECK(weak.relative_gain == doctest::Approx(2.0).epsilon(0.05));
    // Finite-difference agreement of the analytic derivative.
    const SpinParams s{10e3, 3e3};
    const double h = 1.0;
    const auto lo = dip_amplitude_sensitivity(SpinParams{s.a_hz, s.b_hz - h}, kField, 32);
    const auto hi = dip_amplitude_sensitivity(SpinParams{s.a_hz, s.b_hz + h}, kField, 32);
    const auto mid = dip_amplitude_sensitivity(s, kField, 32);
    CHECK(mid.d_depth_d_b ==
          doctest::Approx((hi.depth - lo.depth) / (2.0 * h)).epsilon(1e-4));
}
