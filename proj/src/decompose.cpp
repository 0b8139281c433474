#include "nvspec/decompose.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "nvspec/lattice.hpp" // SplitMix64

namespace nvspec {

namespace {

constexpr double kSqrtTwoPi = 2.5066282746310005;

double gauss_pdf(double x, double mu, double sigma) {
    const double z = (x - mu) / sigma;
    return std::exp(-0.5 * z * z) / (sigma * kSqrtTwoPi);
}

struct MixtureState {
    std::vector<double> w, mu, sigma;
    double loglik = -std::numeric_limits<double>::infinity();
    bool converged = false;
};

// Weighted k-means++ seeding followed by a few Lloyd iterations.
MixtureState seed_mixture(std::span<const double> tau, std::span<const double> c, double total,
                          int k, SplitMix64& rng, double sigma_floor) {
    const std::size_t n = tau.size();
    std::vector<double> centers;
    centers.reserve(k);

    auto pick_weighted = [&](const std::vector<double>& score, double sum) {
        double u = rng.next_double() * sum;
        for (std::size_t i = 0; i < n; ++i) {
            u -= score[i];
            if (u <= 0.0) return i;
        }
        return n - 1;
    };

    std::vector<double> score(c.begin(), c.end());
    centers.push_back(tau[pick_weighted(score, total)]);
    while (static_cast<int>(centers.size()) < k) {
        double sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double d = std::numeric_limits<double>::infinity();
            for (double m : centers) d = std::min(d, std::abs(tau[i] - m));
            score[i] = c[i] * d * d;
            sum += score[i];
        }
        if (!(sum > 0.0)) {
            centers.push_back(centers.back());
            continue;
        }
        centers.push_back(tau[pick_weighted(score, sum)]);
    }
    std::sort(centers.begin(), centers.end());

    for (int iter = 0; iter < 10; ++iter) {
        std::vector<double> wsum(k, 0.0), msum(k, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            int best = 0;
            double bd = std::abs(tau[i] - centers[0]);
            for (int j = 1; j < k; ++j) {
                const double d = std::abs(tau[i] - centers[j]);
                if (d < bd) {
                    bd = d;
                    best = j;
                }
            }
            wsum[best] += c[i];
            msum[best] += c[i] * tau[i];
        }
        for (int j = 0; j < k; ++j)
            if (wsum[j] > 0.0) centers[j] = msum[j] / wsum[j];
    }

    MixtureState st;
    st.w.assign(k, 1.0 / k);
    st.mu = centers;
    st.sigma.assign(k, 0.0);
    for (int j = 0; j < k; ++j) {
        double wsum = 0.0, vsum = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            int best = 0;
            double bd = std::abs(tau[i] - centers[0]);
            for (int jj = 1; jj < k; ++jj) {
                const double d = std::abs(tau[i] - centers[jj]);
                if (d < bd) {
                    bd = d;
                    best = jj;
                }
            }
            if (best == j) {
                wsum += c[i];
                vsum += c[i] * (tau[i] - centers[j]) * (tau[i] - centers[j]);
            }
        }
        st.sigma[j] = std::max(sigma_floor, wsum > 0.0 ? std::sqrt(vsum / wsum) : sigma_floor);
        st.w[j] = total > 0.0 ? std::max(wsum / total, 1e-6) : 1.0 / k;
    }
    double wtot = 0.0;
    for (double v : st.w) wtot += v;
    for (double& v : st.w) v /= wtot;
    return st;
}

MixtureState run_em(std::span<const double> tau, std::span<const double> c, double total, int k,
                    SplitMix64& rng, double sigma_floor, int max_iter, double tol) {
    const std::size_t n = tau.size();
    MixtureState st = seed_mixture(tau, c, total, k, rng, sigma_floor);
    std::vector<double> resp(n * k);

    for (int iter = 0; iter < max_iter; ++iter) {
        // E step
        double ll = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double dens = 0.0;
            for (int j = 0; j < static_cast<int>(st.w.size()); ++j) {
                const double p = st.w[j] * gauss_pdf(tau[i], st.mu[j], st.sigma[j]);
                resp[i * k + j] = p;
                dens += p;
            }
            if (dens <= 1e-300) {
                const double u = 1.0 / static_cast<double>(st.w.size());
                for (int j = 0; j < static_cast<int>(st.w.size()); ++j) resp[i * k + j] = u;
                dens = 1e-300;
            } else {
                for (int j = 0; j < static_cast<int>(st.w.size()); ++j) resp[i * k + j] /= dens;
            }
            ll += c[i] * std::log(dens);
        }
        const bool done = std::abs(ll - st.loglik) <= tol * (std::abs(ll) + 1e-300);
        st.loglik = ll;
        if (done) {
            st.converged = true;
            break;
        }

        // M step
        const int kc = static_cast<int>(st.w.size());
        std::vector<double> wj(kc, 0.0), mj(kc, 0.0), vj(kc, 0.0);
        for (std::size_t i = 0; i < n; ++i)
            for (int j = 0; j < kc; ++j) wj[j] += c[i] * resp[i * k + j];
        for (std::size_t i = 0; i < n; ++i)
            for (int j = 0; j < kc; ++j) mj[j] += c[i] * resp[i * k + j] * tau[i];
        for (int j = 0; j < kc; ++j)
            if (wj[j] > 0.0) mj[j] /= wj[j];
        for (std::size_t i = 0; i < n; ++i)
            for (int j = 0; j < kc; ++j) {
                const double d = tau[i] - mj[j];
                vj[j] += c[i] * resp[i * k + j] * d * d;
            }
        // Drop collapsed components.
        std::vector<double> nw, nm, ns;
        for (int j = 0; j < kc; ++j) {
            if (wj[j] < 1e-12 * total) continue;
            nw.push_back(wj[j] / total);
            nm.push_back(mj[j]);
            ns.push_back(std::max(sigma_floor, std::sqrt(vj[j] / wj[j])));
        }
        if (nw.empty()) break;
        double wtot = 0.0;
        for (double v : nw) wtot += v;
        for (double& v : nw) v /= wtot;
        st.w = std::move(nw);
        st.mu = std::move(nm);
        st.sigma = std::move(ns);
    }
    return st;
}

} // namespace

DipSpectrum DipSpectrum::from_signal(const Signal& s) {
    s.validate();
    DipSpectrum out;
    out.tau = s.tau;
    out.y.resize(s.p_x.size());
    for (std::size_t i = 0; i < s.p_x.size(); ++i) out.y[i] = 1.0 - s.p_x[i];
    return out;
}

std::vector<Fragment> split_fragments(const DipSpectrum& spectrum, double split_floor) {
    const auto& y = spectrum.y;
    const std::size_t n = y.size();
    if (n == 0) throw std::invalid_argument("split_fragments: empty spectrum");

    auto local_min_below = [&](std::size_t i) {
        if (!(y[i] <= split_floor)) return false;
        const bool left_ok = i == 0 || y[i] <= y[i - 1];
        const bool right_ok = i + 1 >= n || y[i] <= y[i + 1];
        return left_ok && right_ok;
    };

    std::vector<Fragment> frags;
    std::size_t i = 0;
    std::size_t prev_end = 0;
    while (i < n) {
        if (!(y[i] > split_floor)) {
            ++i;
            continue;
        }
        std::size_t core_begin = i;
        while (i < n && y[i] > split_floor) ++i;
        const std::size_t core_end = i; // exclusive

        std::size_t begin = core_begin;
        while (begin > prev_end && !local_min_below(begin)) --begin;
        std::size_t last = core_end - 1;
        while (last + 1 < n && !local_min_below(last)) ++last;
        frags.push_back({begin, last + 1});
        prev_end = last + 1;
        i = prev_end;
    }

    // Merge undersized fragments into a neighbor (previous preferred).
    for (std::size_t f = 0; f < frags.size();) {
        if (frags[f].size() >= 3 || frags.size() == 1) {
            ++f;
            continue;
        }
        if (f > 0) {
            frags[f - 1].end = frags[f].end;
            frags.erase(frags.begin() + static_cast<long>(f));
        } else {
            frags[f + 1].begin = frags[f].begin;
            frags.erase(frags.begin());
        }
    }
    return frags;
}

FragmentFit em_decompose(std::span<const double> tau, std::span<const double> y,
                         int max_components, std::size_t fragment_index, int max_iter,
                         double tol) {
    if (tau.size() != y.size()) throw std::invalid_argument("em_decompose: length mismatch");
    if (tau.size() < 3) throw std::invalid_argument("em_decompose: fragment needs >= 3 samples");
    const std::size_t n = tau.size();
    const double h = tau[1] - tau[0];

    std::vector<double> c(n);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        c[i] = std::max(y[i], 0.0);
        total += c[i];
    }
    FragmentFit fit;
    if (!(total > 0.0)) return fit; // all-zero fragment

    const double sigma_floor = 0.5 * h;
    const int k_cap = std::min<int>(max_components, static_cast<int>(n) / 3);

    double best_bic = std::numeric_limits<double>::infinity();
    MixtureState best;
    for (int k = 1; k <= std::max(1, k_cap); ++k) {
        SplitMix64 rng(0x6e76737065630000ull ^ (fragment_index * 1000003ull + static_cast<std::uint64_t>(k)));
        const MixtureState st = run_em(tau, c, total, k, rng, sigma_floor, max_iter, tol);
        const int params = 3 * static_cast<int>(st.w.size()) - 1;
        // The y values are dimensionless dip depths, not counts; the
        // effective number of observations is the integrated dip mass per
        // grid step, and the weighted log-likelihood is put on that scale.
        const double n_eff = std::max(total / h, 1.0 + 1e-9);
        const double bic = params * std::log(n_eff) - 2.0 * st.loglik / h;
        if (bic < best_bic) {
            best_bic = bic;
            best = st;
        }
    }

    fit.bic = best_bic;
    fit.converged = best.converged;
    for (std::size_t j = 0; j < best.w.size(); ++j) {
        GaussianComponent g;
        g.mu = best.mu[j];
        g.sigma = best.sigma[j];
        g.amplitude = total * h * best.w[j] / (best.sigma[j] * kSqrtTwoPi);
        fit.components.push_back(g);
    }
    std::sort(fit.components.begin(), fit.components.end(),
              [](const GaussianComponent& a, const GaussianComponent& b) { return a.mu < b.mu; });

    const auto recon = reconstruct(fit.components, tau);
    double se = 0.0;
    for (std::size_t i = 0; i < n; ++i) se += (recon[i] - c[i]) * (recon[i] - c[i]);
    fit.residual_rmse = std::sqrt(se / static_cast<double>(n));
    return fit;
}

std::vector<GaussianComponent> prune(std::vector<GaussianComponent> components, double threshold) {
    std::erase_if(components,
                  [&](const GaussianComponent& g) { return g.amplitude < threshold; });
    return components;
}

std::vector<double> reconstruct(std::span<const GaussianComponent> components,
                                std::span<const double> tau) {
    std::vector<double> out(tau.size(), 0.0);
    for (const auto& g : components) {
        const double inv2s2 = 1.0 / (2.0 * g.sigma * g.sigma);
        for (std::size_t i = 0; i < tau.size(); ++i) {
            const double d = tau[i] - g.mu;
            out[i] += g.amplitude * std::exp(-d * d * inv2s2);
        }
    }
    return out;
}

Decomposition decompose(const DipSpectrum& spectrum, const DecomposeOptions& opt) {
    Decomposition out;
    out.fragments = split_fragments(spectrum, opt.split_floor);
    out.fits.reserve(out.fragments.size());
    for (std::size_t f = 0; f < out.fragments.size(); ++f) {
        const auto& fr = out.fragments[f];
        auto fit = em_decompose(std::span(spectrum.tau).subspan(fr.begin, fr.size()),
                                std::span(spectrum.y).subspan(fr.begin, fr.size()),
                                opt.max_components, f, opt.max_iter, opt.tol);
        for (const auto& g : fit.components) out.components.push_back(g);
        out.fits.push_back(std::move(fit));
    }
    std::sort(out.components.begin(), out.components.end(),
              [](const GaussianComponent& a, const GaussianComponent& b) { return a.mu < b.mu; });
    return out;
}

} // namespace nvspec
