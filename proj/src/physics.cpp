#include "nvspec/physics.hpp"

#include <algorithm>
#include <cmath>

namespace nvspec {

namespace {

double clamp_unit(double x) { return std::clamp(x, -1.0, 1.0); }

// cos(n*phi) from cos(phi). Power-of-two n uses doubling; otherwise the
// Chebyshev recurrence.
double cos_multiple(double cos_phi, int n) {
    if (n == 1) return cos_phi;
    if ((n & (n - 1)) == 0) {
        double c = cos_phi;
        for (int m = n; m > 1; m >>= 1) c = 2.0 * c * c - 1.0;
        return c;
    }
    double prev = 1.0, cur = cos_phi;
    for (int i = 2; i <= n; ++i) {
        double next = 2.0 * cos_phi * cur - prev;
        prev = cur;
        cur = next;
    }
    return cur;
}

// 1 - n0.n1 and cos(phi) at one evolution time, from precomputed geometry.
struct DipFactors {
    double one_minus_dot; // in [0, 2]
    double cos_phi;
};

DipFactors dip_factors(const RotationGeometry& g, double omega_l, double tau) {
    const double ca = std::cos(g.omega_tilde * tau);
    const double sa = std::sin(g.omega_tilde * tau);
    const double cb = std::cos(omega_l * tau);
    const double sb = std::sin(omega_l * tau);
    const double cos_phi = clamp_unit(ca * cb - g.m_z * sa * sb);
    const double denom = 1.0 + cos_phi;
    double omd = 0.0;
    if (denom > 1e-300) {
        omd = g.m_x * g.m_x * (1.0 - ca) * (1.0 - cb) / denom;
    } else {
        omd = 2.0;
    }
    return {std::clamp(omd, 0.0, 2.0), cos_phi};
}

} // namespace

void FieldConfig::validate() const {
    if (!(b0_tesla > 0.0)) throw std::invalid_argument("FieldConfig: B0 must be positive");
    if (!(gamma_e_hz_per_t > 0.0) || !(gamma_n_hz_per_t > 0.0))
        throw std::invalid_argument("FieldConfig: gyromagnetic ratios must be positive");
}

RotationGeometry RotationGeometry::from(const SpinParams& spin, const FieldConfig& field) {
    const double omega_l = field.larmor_omega();
    const double az = kTwoPi * spin.a_hz + omega_l;
    const double bx = kTwoPi * spin.b_hz;
    const double omega_tilde = std::hypot(az, bx);
    if (!(omega_tilde > 0.0))
        throw std::domain_error("RotationGeometry: omega_tilde vanishes (A = -f_L, B = 0)");
    return {omega_tilde, az / omega_tilde, bx / omega_tilde};
}

void SequenceConfig::validate() const {
    if (n_pulses < 1) throw std::invalid_argument("SequenceConfig: N must be >= 1");
    if (!(tau_step > 0.0)) throw std::invalid_argument("SequenceConfig: tau step must be positive");
    if (!(tau_stop > tau_start)) throw std::invalid_argument("SequenceConfig: tau stop must exceed start");
    if (!(tau_start > 0.0)) throw std::invalid_argument("SequenceConfig: tau start must be positive");
}

std::vector<double> SequenceConfig::grid() const {
    validate();
    const auto n = static_cast<std::size_t>(std::floor((tau_stop - tau_start) / tau_step + 0.5)) + 1;
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = tau_start + static_cast<double>(i) * tau_step;
    return out;
}

double Signal::step() const {
    if (tau.size() < 2) throw std::invalid_argument("Signal: need at least two samples");
    return tau[1] - tau[0];
}

void Signal::validate() const {
    if (tau.size() != p_x.size()) throw std::invalid_argument("Signal: tau/p_x length mismatch");
    if (tau.size() < 2) throw std::invalid_argument("Signal: need at least two samples");
    const double h = tau[1] - tau[0];
    if (!(h > 0.0)) throw std::invalid_argument("Signal: tau must be strictly increasing");
    for (std::size_t i = 1; i < tau.size(); ++i) {
        const double d = tau[i] - tau[i - 1];
        if (std::abs(d - h) > 1e-6 * h)
            throw std::invalid_argument("Signal: tau grid is not uniform");
    }
}

CoherencePoint coherence_single(const SpinParams& spin, const FieldConfig& field,
                                int n_pulses, double tau) {
    if (n_pulses < 1) throw std::invalid_argument("coherence_single: N must be >= 1");
    if (!(tau > 0.0)) throw std::invalid_argument("coherence_single: tau must be positive");
    const auto g = RotationGeometry::from(spin, field);
    const auto f = dip_factors(g, field.larmor_omega(), tau);
    const double cos_n_phi = clamp_unit(cos_multiple(f.cos_phi, n_pulses));
    const double m = clamp_unit(1.0 - f.one_minus_dot * 0.5 * (1.0 - cos_n_phi));
    return {m, 0.5 * (m + 1.0)};
}

double coherence_multi(std::span<const SpinParams> spins, const FieldConfig& field,
                       int n_pulses, double tau) {
    double prod = 1.0;
    for (const auto& s : spins) prod *= coherence_single(s, field, n_pulses, tau).m;
    return 0.5 * (1.0 + prod);
}

std::vector<double> coherence_product_grid(std::span<const SpinParams> spins,
                                           const FieldConfig& field, int n_pulses,
                                           std::span<const double> tau) {
    if (n_pulses < 1) throw std::invalid_argument("coherence_product_grid: N must be >= 1");
    const std::size_t n = tau.size();
    std::vector<double> prod(n, 1.0);
    if (n == 0) return prod;
    const double omega_l = field.larmor_omega();
    const double h = n > 1 ? tau[1] - tau[0] : 0.0;

    // Shared Larmor phasor along the grid.
    std::vector<double> cb(n), sb(n);
    for (std::size_t i = 0; i < n; ++i) {
        cb[i] = std::cos(omega_l * tau[i]);
        sb[i] = std::sin(omega_l * tau[i]);
    }

    constexpr std::size_t kRenorm = 1024;
    for (const auto& spin : spins) {
        const auto g = RotationGeometry::from(spin, field);
        const double dc = std::cos(g.omega_tilde * h);
        const double ds = std::sin(g.omega_tilde * h);
        double ca = std::cos(g.omega_tilde * tau[0]);
        double sa = std::sin(g.omega_tilde * tau[0]);
        const double mx2 = g.m_x * g.m_x;
        for (std::size_t i = 0; i < n; ++i) {
            const double cos_phi = clamp_unit(ca * cb[i] - g.m_z * sa * sb[i]);
            const double denom = 1.0 + cos_phi;
            double omd = denom > 1e-300 ? mx2 * (1.0 - ca) * (1.0 - cb[i]) / denom : 2.0;
            omd = std::clamp(omd, 0.0, 2.0);
            const double cn = clamp_unit(cos_multiple(cos_phi, n_pulses));
            prod[i] *= clamp_unit(1.0 - omd * 0.5 * (1.0 - cn));
            const double ca2 = ca * dc - sa * ds;
            sa = sa * dc + ca * ds;
            ca = ca2;
            if ((i + 1) % kRenorm == 0) {
                const double t = tau[0] + static_cast<double>(i + 1) * h;
                ca = std::cos(g.omega_tilde * t);
                sa = std::sin(g.omega_tilde * t);
            }
        }
    }
    return prod;
}

double dip_position(const SpinParams& spin, const FieldConfig& field, int k, DipOrder order) {
    if (k < 1) throw std::invalid_argument("dip_position: k must be >= 1");
    const auto g = RotationGeometry::from(spin, field);
    const double omega_l = field.larmor_omega();
    const double base = kPi / (g.omega_tilde + omega_l);
    if (order == DipOrder::linear) return base * (2.0 * k - 1.0);
    const double x = kTwoPi * spin.b_hz / (omega_l + kTwoPi * spin.a_hz);
    const double x2 = x * x;
    const double corr = (x2 / (2.0 * std::sqrt(2.0))) - (x2 * x2 / (4.0 * std::sqrt(2.0)));
    const double sign = (k % 2 == 1) ? 1.0 : -1.0; // (-1)^(k-1)
    return base * ((2.0 * k - 1.0) + sign * corr);
}

double dip_frequency(const SpinParams& spin, const FieldConfig& field) {
    const auto g = RotationGeometry::from(spin, field);
    return (g.omega_tilde + field.larmor_omega()) / (2.0 * kTwoPi);
}

double lorentzian_envelope(const SpinParams& spin, const FieldConfig& field,
                           double tau, double tau_k) {
    if (!(spin.b_hz > 0.0)) throw std::domain_error("lorentzian_envelope: undefined for B <= 0");
    const auto g = RotationGeometry::from(spin, field);
    const double arg = (g.omega_tilde + field.larmor_omega()) * g.omega_tilde * (tau - tau_k) /
                       (kTwoPi * spin.b_hz);
    return 2.0 / (1.0 + arg * arg);
}

double sigma_from_params(const SpinParams& spin, const FieldConfig& field) {
    if (!(spin.b_hz > 0.0)) throw std::domain_error("sigma_from_params: undefined for B <= 0");
    const auto g = RotationGeometry::from(spin, field);
    return kTwoPi * spin.b_hz /
           (std::sqrt(2.0 * std::log(2.0)) * (g.omega_tilde + field.larmor_omega()) * g.omega_tilde);
}

double slope_from_params(const SpinParams& spin, const FieldConfig& field) {
    const auto g = RotationGeometry::from(spin, field);
    return kTwoPi / (g.omega_tilde + field.larmor_omega()) - field.period();
}

SpinParams params_from_slope_sigma(double slope, double sigma, const FieldConfig& field) {
    const double t = field.period();
    if (!(slope > -0.5 * t))
        throw std::invalid_argument("params_from_slope_sigma: slope must exceed -T/2");
    if (!(sigma > 0.0)) throw std::invalid_argument("params_from_slope_sigma: sigma must be positive");
    const double omega_l = field.larmor_omega();
    const double sum = kTwoPi / (slope + t); // omega_tilde + omega_L
    const double omega_tilde = sum - omega_l;
    if (!(omega_tilde > 0.0))
        throw InconsistentConstraints("params_from_slope_sigma: omega_tilde not positive");
    const double b_ang = sigma * std::sqrt(2.0 * std::log(2.0)) * sum * omega_tilde;
    const double disc = omega_tilde * omega_tilde - b_ang * b_ang;
    if (disc < 0.0)
        throw InconsistentConstraints("params_from_slope_sigma: sigma too large for slope (no real A)");
    return {(std::sqrt(disc) - omega_l) / kTwoPi, b_ang / kTwoPi};
}

DipSensitivity dip_amplitude_sensitivity(const SpinParams& spin, const FieldConfig& field,
                                         int n_pulses) {
    const double w = field.larmor_omega() + kTwoPi * spin.a_hz;
    const double b = kTwoPi * spin.b_hz;
    const double wt = std::hypot(w, b);
    const double u = b / wt;
    const double half_n = 0.5 * n_pulses;
    const double s = std::sin(half_n * u);
    const double depth = s * s;
    // dP/db with u'(b) = w^2 / wt^3, then to per-Hz of B.
    const double du_db = (w * w) / (wt * wt * wt);
    const double dp_db = half_n * std::sin(2.0 * half_n * u) * du_db;
    const double dp_dB = kTwoPi * dp_db;
    const double gain = depth > 0.0 ? dp_dB * spin.b_hz / depth : 2.0;
    return {depth, dp_dB, gain};
}

} // namespace nvspec
