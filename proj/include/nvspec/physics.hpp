#pragma once

#include <span>
#include <stdexcept>
#include <vector>

// Closed-form physics of CPMG coherence dips for an NV electron spin
// coupled to a single 13C nuclear spin.
//
// Unit convention: hyperfine components A and B are stored as ordinary
// frequencies in Hz. Every angular quantity (omega_L, omega_tilde, phases)
// multiplies by 2*pi at the point of use. This is the single boundary
// between "table units" (kHz in reports) and the angular formulas.

namespace nvspec {

inline constexpr double kPi = 3.141592653589793238462643383279502884;
inline constexpr double kTwoPi = 2.0 * kPi;

struct FieldConfig {
    double b0_tesla = 0.04;            // field along the NV axis
    double gamma_e_hz_per_t = 20824e6; // electron gyromagnetic ratio
    double gamma_n_hz_per_t = 10.708e6; // 13C gyromagnetic ratio

    // Larmor angular frequency of the 13C bath, rad/s.
    double larmor_omega() const { return kTwoPi * gamma_n_hz_per_t * b0_tesla; }
    // Larmor frequency in Hz.
    double larmor_freq() const { return gamma_n_hz_per_t * b0_tesla; }
    // Dip period T = pi / omega_L, seconds.
    double period() const { return kPi / larmor_omega(); }

    void validate() const;
};

struct SpinParams {
    double a_hz = 0.0; // parallel hyperfine component, signed
    double b_hz = 0.0; // perpendicular hyperfine component, >= 0
};

// Rotation-axis geometry of the conditional nuclear precession.
struct RotationGeometry {
    double omega_tilde; // rad/s
    double m_z;
    double m_x;

    static RotationGeometry from(const SpinParams& spin, const FieldConfig& field);
};

struct SequenceConfig {
    int n_pulses = 32;
    double tau_start = 5e-9;
    double tau_stop = 50e-6;
    double tau_step = 5e-9;

    void validate() const;
    std::vector<double> grid() const;
};

struct Signal {
    std::vector<double> tau;
    std::vector<double> p_x;

    double step() const;
    void validate() const; // uniform, strictly increasing, equal lengths
};

struct CoherencePoint {
    double m;   // in [-1, 1]
    double p_x; // (m + 1) / 2
};

// Raised when the inverse (slope, sigma) -> (A, B) map has no real solution.
struct InconsistentConstraints : std::domain_error {
    using std::domain_error::domain_error;
};

// Single-spin coherence at one evolution time, from the conditional
// nuclear-rotation model. Throws std::domain_error if omega_tilde vanishes.
CoherencePoint coherence_single(const SpinParams& spin, const FieldConfig& field,
                                int n_pulses, double tau);

// Product composition over independent spins: p_x = (1 + prod M_i) / 2.
double coherence_multi(std::span<const SpinParams> spins, const FieldConfig& field,
                       int n_pulses, double tau);

// Grid evaluation of the M-product over a uniform tau grid. Uses phasor
// recurrences so the cost is O(spins * samples) without per-sample trig.
// Results are independent of call order; spins are combined in fixed blocks.
std::vector<double> coherence_product_grid(std::span<const SpinParams> spins,
                                           const FieldConfig& field, int n_pulses,
                                           std::span<const double> tau);

inline std::vector<double> coherence_multi_grid(std::span<const SpinParams> spins,
                                                const FieldConfig& field, int n_pulses,
                                                std::span<const double> tau) {
    auto m = coherence_product_grid(spins, field, n_pulses, tau);
    for (double& v : m) v = 0.5 * (1.0 + v);
    return m;
}

enum class DipOrder { linear, expanded };

// Position of the k-th coherence dip. `expanded` keeps the alternating
// 2nd/4th-order correction in (B / (f_L + A)); `linear` is the straight-line
// model used by the fan-diagram fit.
double dip_position(const SpinParams& spin, const FieldConfig& field, int k,
                    DipOrder order = DipOrder::expanded);

// f_p = (omega_tilde + omega_L) / (4 pi), Hz.
double dip_frequency(const SpinParams& spin, const FieldConfig& field);

// Lorentzian envelope of the dip, equal to 2 at tau = tau_k.
// Throws std::domain_error for B = 0.
double lorentzian_envelope(const SpinParams& spin, const FieldConfig& field,
                           double tau, double tau_k);

// Gaussian width matching the Lorentzian FWHM, seconds. Requires B > 0.
double sigma_from_params(const SpinParams& spin, const FieldConfig& field);

// d tau / d k of the dip train, seconds per period. Zero for A = B = 0.
double slope_from_params(const SpinParams& spin, const FieldConfig& field);

// Closed-form inverse of (slope_from_params, sigma_from_params).
// Throws InconsistentConstraints when no real A exists.
SpinParams params_from_slope_sigma(double slope, double sigma, const FieldConfig& field);

struct DipSensitivity {
    double depth;          // P = sin^2((N/2) * 2piB / omega_tilde0)
    double d_depth_d_b;    // dP/dB, per Hz
    double relative_gain;  // (dP/dB) * (B/P), -> 2 as B -> 0
};

// Small-coupling dip-depth model and its sensitivity to B. Diagnostics only.
DipSensitivity dip_amplitude_sensitivity(const SpinParams& spin, const FieldConfig& field,
                                         int n_pulses);

} // namespace nvspec
