#include "nvspec/fit.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <set>

namespace nvspec {

namespace {

constexpr double kBigObjective = 1e30;

std::vector<double> natural_spline_second_derivs(const std::vector<double>& x,
                                                 const std::vector<double>& y) {
    const std::size_t n = x.size();
    std::vector<double> y2(n, 0.0), u(n, 0.0);
    if (n < 3) return y2;
    for (std::size_t i = 1; i + 1 < n; ++i) {
        const double sig = (x[i] - x[i - 1]) / (x[i + 1] - x[i - 1]);
        const double p = sig * y2[i - 1] + 2.0;
        y2[i] = (sig - 1.0) / p;
        u[i] = (y[i + 1] - y[i]) / (x[i + 1] - x[i]) - (y[i] - y[i - 1]) / (x[i] - x[i - 1]);
        u[i] = (6.0 * u[i] / (x[i + 1] - x[i - 1]) - sig * u[i - 1]) / p;
    }
    for (std::size_t i = n - 1; i-- > 0;) y2[i] = y2[i] * y2[i + 1] + u[i];
    return y2;
}

} // namespace

BathModel BathModel::unity() { return BathModel{}; }

BathModel BathModel::fit(const Signal& signal,
                         std::span<const std::pair<double, double>> mask_windows, int bins) {
    signal.validate();
    const std::size_t n = signal.tau.size();
    const double lo = signal.tau.front(), hi = signal.tau.back();
    const double width = (hi - lo) / std::max(bins, 1);

    std::vector<std::pair<double, double>> sorted_mask(mask_windows.begin(), mask_windows.end());
    std::sort(sorted_mask.begin(), sorted_mask.end());
    auto masked = [&](double t) {
        auto it = std::upper_bound(sorted_mask.begin(), sorted_mask.end(),
                                   std::make_pair(t, std::numeric_limits<double>::infinity()));
        return it != sorted_mask.begin() && std::prev(it)->second >= t;
    };

    std::vector<std::vector<double>> values(bins);
    for (std::size_t i = 0; i < n; ++i) {
        if (masked(signal.tau[i])) continue;
        auto b = static_cast<std::size_t>(std::min<double>(bins - 1, (signal.tau[i] - lo) / width));
        values[b].push_back(2.0 * signal.p_x[i] - 1.0); // M = 2 p_x - 1
    }

    // Upper-quantile statistic per bin: dips and their ripples only depress
    // the coherence, so the smooth background tracks the upper envelope.
    BathModel out;
    for (int b = 0; b < bins; ++b) {
        auto& v = values[b];
        if (v.empty()) continue;
        const auto q = static_cast<std::ptrdiff_t>(0.9 * static_cast<double>(v.size() - 1));
        std::nth_element(v.begin(), v.begin() + q, v.end());
        out.knots_x_.push_back(lo + (b + 0.5) * width);
        out.knots_y_.push_back(v[static_cast<std::size_t>(q)]);
    }
    if (out.knots_x_.size() < 2) {
        // Not enough unmasked data for a spline: flat background.
        const double v = out.knots_y_.empty() ? 1.0 : out.knots_y_.front();
        out.knots_x_ = {lo, hi};
        out.knots_y_ = {v, v};
    }
    out.second_deriv_ = natural_spline_second_derivs(out.knots_x_, out.knots_y_);
    return out;
}

double BathModel::m(double tau) const {
    if (knots_x_.empty()) return 1.0;
    if (tau <= knots_x_.front()) return std::clamp(knots_y_.front(), -1.0, 1.0);
    if (tau >= knots_x_.back()) return std::clamp(knots_y_.back(), -1.0, 1.0);
    const auto hi_it = std::upper_bound(knots_x_.begin(), knots_x_.end(), tau);
    const std::size_t hi = static_cast<std::size_t>(hi_it - knots_x_.begin());
    const std::size_t lo = hi - 1;
    const double h = knots_x_[hi] - knots_x_[lo];
    const double a = (knots_x_[hi] - tau) / h;
    const double b = (tau - knots_x_[lo]) / h;
    const double v = a * knots_y_[lo] + b * knots_y_[hi] +
                     ((a * a * a - a) * second_deriv_[lo] + (b * b * b - b) * second_deriv_[hi]) *
                         (h * h) / 6.0;
    return std::clamp(v, -1.0, 1.0);
}

bool in_confidence_region(const SpinParams& p) {
    const double abs_a = std::abs(p.a_hz);
    return abs_a > 5e3 && abs_a < 70e3 && p.b_hz > 15e3 && p.b_hz < 80e3;
}

SpinParams initial_estimate(const LineCandidate& line,
                            std::span<const GaussianComponent> components,
                            const FieldConfig& field) {
    if (line.members.empty())
        throw std::invalid_argument("initial_estimate: line has no member dips");
    std::vector<double> sigmas;
    sigmas.reserve(line.members.size());
    for (std::size_t id : line.members) {
        if (id >= components.size())
            throw std::out_of_range("initial_estimate: member source_id out of range");
        sigmas.push_back(components[id].sigma);
    }
    std::sort(sigmas.begin(), sigmas.end());
    const std::size_t n = sigmas.size();
    const double median = n % 2 == 1 ? sigmas[n / 2] : 0.5 * (sigmas[n / 2 - 1] + sigmas[n / 2]);
    return params_from_slope_sigma(line.slope, median, field);
}

std::vector<std::size_t> filter_support(const Signal& signal, std::span<const SpinParams> spins,
                                        const FieldConfig& field) {
    const double lo = signal.tau.front(), hi = signal.tau.back();
    const double h = signal.step();
    std::vector<char> in(signal.tau.size(), 0);
    for (const auto& spin : spins) {
        if (!(spin.b_hz > 0.0)) continue;
        const double sigma = sigma_from_params(spin, field);
        for (int k = 1;; ++k) {
            const double tk = dip_position(spin, field, k);
            if (tk - sigma > hi) break;
            if (tk + sigma < lo) continue;
            const auto first = static_cast<std::size_t>(
                std::max(0.0, std::ceil((tk - sigma - lo) / h)));
            const auto last = static_cast<std::size_t>(
                std::min<double>(static_cast<double>(in.size()) - 1.0,
                                 std::floor((tk + sigma - lo) / h)));
            for (std::size_t i = first; i <= last && i < in.size(); ++i) in[i] = 1;
        }
    }
    std::vector<std::size_t> support;
    for (std::size_t i = 0; i < in.size(); ++i)
        if (in[i]) support.push_back(i);
    return support;
}

double filtered_rmse(const Signal& signal, std::span<const SpinParams> spins,
                     const BathModel& bath, const FieldConfig& field, int n_pulses,
                     std::span<const std::size_t> support) {
    if (support.empty())
        throw std::domain_error("filtered_rmse: no filter window overlaps the tau grid");
    double se = 0.0;
    for (std::size_t i : support) {
        const double t = signal.tau[i];
        double m = bath.m(t);
        for (const auto& s : spins) m *= coherence_single(s, field, n_pulses, t).m;
        const double p = 0.5 * (1.0 + m);
        se += (p - signal.p_x[i]) * (p - signal.p_x[i]);
    }
    return std::sqrt(se / static_cast<double>(support.size()));
}

namespace {

// Self-consistent refinement objective: windows derived from the evaluated
// parameters themselves.
double self_objective(const Signal& signal, const SpinParams& p,
                      std::span<const SpinParams> others, const BathModel& bath,
                      const FieldConfig& field, int n_pulses) {
    const auto support = filter_support(signal, std::span(&p, 1), field);
    if (support.empty()) return kBigObjective;
    std::vector<SpinParams> all(others.begin(), others.end());
    all.push_back(p);
    return filtered_rmse(signal, all, bath, field, n_pulses, support);
}

struct SimplexResult {
    std::array<double, 2> x;
    double f;
    bool converged;
    int evals;
};

SimplexResult nelder_mead_2d(const std::function<double(const std::array<double, 2>&)>& f,
                             std::array<double, 2> x0, std::array<double, 2> step, double tol,
                             int budget) {
    std::array<std::array<double, 2>, 3> v{x0,
                                           {x0[0] + step[0], x0[1]},
                                           {x0[0], x0[1] + step[1]}};
    std::array<double, 3> fv;
    int evals = 0;
    for (int i = 0; i < 3; ++i) fv[i] = (++evals, f(v[i]));

    auto order = [&] {
        std::array<int, 3> idx{0, 1, 2};
        std::sort(idx.begin(), idx.end(), [&](int a, int b) { return fv[a] < fv[b]; });
        std::array<std::array<double, 2>, 3> nv{v[idx[0]], v[idx[1]], v[idx[2]]};
        std::array<double, 3> nf{fv[idx[0]], fv[idx[1]], fv[idx[2]]};
        v = nv;
        fv = nf;
    };

    bool converged = false;
    while (evals < budget) {
        order();
        const double size = std::max({std::abs(v[1][0] - v[0][0]), std::abs(v[1][1] - v[0][1]),
                                      std::abs(v[2][0] - v[0][0]), std::abs(v[2][1] - v[0][1])});
        if (size < tol) {
            converged = true;
            break;
        }
        const std::array<double, 2> centroid{0.5 * (v[0][0] + v[1][0]), 0.5 * (v[0][1] + v[1][1])};
        auto at = [&](double coef) {
            return std::array<double, 2>{centroid[0] + coef * (centroid[0] - v[2][0]),
                                         centroid[1] + coef * (centroid[1] - v[2][1])};
        };
        const auto xr = at(1.0);
        const double fr = (++evals, f(xr));
        if (fr < fv[0]) {
            const auto xe = at(2.0);
            const double fe = (++evals, f(xe));
            if (fe < fr) {
                v[2] = xe;
                fv[2] = fe;
            } else {
                v[2] = xr;
                fv[2] = fr;
            }
        } else if (fr < fv[1]) {
            v[2] = xr;
            fv[2] = fr;
        } else {
            const auto xc = at(fr < fv[2] ? 0.5 : -0.5);
            const double fc = (++evals, f(xc));
            if (fc < std::min(fr, fv[2])) {
                v[2] = xc;
                fv[2] = fc;
            } else {
                for (int i = 1; i < 3; ++i) {
                    v[i] = {0.5 * (v[i][0] + v[0][0]), 0.5 * (v[i][1] + v[0][1])};
                    fv[i] = (++evals, f(v[i]));
                }
            }
        }
    }
    order();
    return {v[0], fv[0], converged, evals};
}

} // namespace

SpinEstimate refine(const Signal& signal, const SpinParams& initial,
                    std::span<const SpinParams> other_fixed, const BathModel& bath,
                    const FieldConfig& field, int n_pulses, const FitOptions& opt) {
    SpinEstimate est;
    est.initial = initial;
    est.params = initial;

    // The closed-form width estimate degrades badly when dips overlap, so
    // each start is also tried at half and double the initial B.
    auto run_from = [&](SpinParams current, bool& converged) {
        int evals_left = opt.eval_budget;
        for (int outer = 0; outer < opt.outer_iterations && evals_left > 0; ++outer) {
            const auto support = filter_support(signal, std::span(&current, 1), field);
            if (support.empty()) break;

        // Precompute the fixed part of the model on this support.
        std::vector<double> fixed(support.size());
        for (std::size_t j = 0; j < support.size(); ++j) {
            const double t = signal.tau[support[j]];
            double m = bath.m(t);
            for (const auto& s : other_fixed) m *= coherence_single(s, field, n_pulses, t).m;
            fixed[j] = m;
        }

        auto objective = [&](const std::array<double, 2>& x) {
            const SpinParams p{x[0] * 1e3, x[1] * 1e3};
            if (std::abs(p.a_hz) > opt.a_bound_hz || p.b_hz <= 0.0 || p.b_hz > opt.b_bound_hz)
                return kBigObjective;
            double se = 0.0;
            for (std::size_t j = 0; j < support.size(); ++j) {
                const double t = signal.tau[support[j]];
                const double m = fixed[j] * coherence_single(p, field, n_pulses, t).m;
                const double d = 0.5 * (1.0 + m) - signal.p_x[support[j]];
                se += d * d;
            }
            return std::sqrt(se / static_cast<double>(support.size()));
        };

        const std::array<double, 2> start{current.a_hz / 1e3, current.b_hz / 1e3};
        const std::array<double, 2> step{std::max(0.05 * std::abs(start[0]), 1.0),
                                         std::max(0.05 * start[1], 1.0)};
        const auto res =
            nelder_mead_2d(objective, start, step, opt.tol_hz / 1e3, evals_left);
        evals_left -= res.evals;
        converged = res.converged;
        current = {res.x[0] * 1e3, res.x[1] * 1e3};
        }
        return current;
    };

    // Keep whichever iterate is best under its own windows, including the
    // untouched initial guess.
    SpinParams best = initial;
    double j_best = self_objective(signal, initial, other_fixed, bath, field, n_pulses);
    bool best_converged = false;
    // Beyond the B rescaling starts, one start undoes the biases of a
    // split dip: when B is large relative to the Larmor term the dip forms
    // two sub-lobes, so the fitted Gaussian width (hence B) comes out at a
    // fraction of the true value and the through-origin line slope (hence
    // A) at roughly half.
    const std::array<std::pair<double, double>, 4> start_scales{
        {{1.0, 1.0}, {1.0, 0.5}, {1.0, 2.0}, {2.0, 4.0}}};
    for (const auto& [sa, sb] : start_scales) {
        SpinParams start{std::clamp(initial.a_hz * sa, -opt.a_bound_hz, opt.a_bound_hz),
                         std::clamp(initial.b_hz * sb, 1.0, opt.b_bound_hz)};
        bool converged = false;
        const SpinParams got = run_from(start, converged);
        const double j = self_objective(signal, got, other_fixed, bath, field, n_pulses);
        if (j < j_best) {
            best = got;
            j_best = j;
            best_converged = converged;
        }
    }
    est.params = best;
    est.filtered_rmse = j_best;
    est.converged = best_converged;
    est.in_confidence_region = in_confidence_region(est.params);
    return est;
}

Configuration beam_select(std::span<const SpinEstimate> candidates, const Signal& signal,
                          const BathModel& bath, const FieldConfig& field, int n_pulses,
                          std::size_t beam_width) {
    if (candidates.empty()) throw std::invalid_argument("beam_select: no candidates");
    if (beam_width == 0) throw std::invalid_argument("beam_select: beam width must be positive");
    if (candidates.size() > 63) throw std::invalid_argument("beam_select: too many candidates");

    // No two selected spins may share a line: keep the first estimate per line.
    std::vector<std::size_t> usable;
    std::set<std::size_t> seen_lines;
    for (std::size_t i = 0; i < candidates.size(); ++i)
        if (seen_lines.insert(candidates[i].line_id).second) usable.push_back(i);

    // Most-supported candidates are decided first.
    std::stable_sort(usable.begin(), usable.end(), [&](std::size_t a, std::size_t b) {
        return candidates[a].member_dip_count > candidates[b].member_dip_count;
    });

    // Fixed scoring support: union of every candidate's windows, so that
    // configurations of different sizes are comparable.
    std::vector<SpinParams> all_params;
    for (std::size_t i : usable) all_params.push_back(candidates[i].params);
    const auto support = filter_support(signal, all_params, field);
    if (support.empty())
        throw std::domain_error("beam_select: no candidate window overlaps the tau grid");

    const std::size_t ns = support.size();
    std::vector<double> bath_m(ns), data(ns);
    for (std::size_t j = 0; j < ns; ++j) {
        bath_m[j] = bath.m(signal.tau[support[j]]);
        data[j] = signal.p_x[support[j]];
    }
    std::vector<std::vector<double>> spin_m(usable.size(), std::vector<double>(ns));
    for (std::size_t c = 0; c < usable.size(); ++c)
        for (std::size_t j = 0; j < ns; ++j)
            spin_m[c][j] =
                coherence_single(candidates[usable[c]].params, field, n_pulses, signal.tau[support[j]]).m;

    auto rmse_of = [&](const std::vector<double>& prod) {
        double se = 0.0;
        for (std::size_t j = 0; j < ns; ++j) {
            const double d = 0.5 * (1.0 + prod[j]) - data[j];
            se += d * d;
        }
        return std::sqrt(se / static_cast<double>(ns));
    };

    struct Node {
        std::uint64_t mask;
        std::vector<double> prod;
        double rmse;
    };
    std::vector<Node> beam;
    beam.push_back({0, bath_m, rmse_of(bath_m)});

    for (std::size_t depth = 0; depth < usable.size(); ++depth) {
        std::vector<Node> next;
        next.reserve(beam.size() * 2);
        for (const auto& node : beam) {
            next.push_back(node); // exclude
            Node inc;
            inc.mask = node.mask | (std::uint64_t{1} << depth);
            inc.prod.resize(ns);
            for (std::size_t j = 0; j < ns; ++j) inc.prod[j] = node.prod[j] * spin_m[depth][j];
            inc.rmse = rmse_of(inc.prod);
            next.push_back(std::move(inc));
        }
        std::sort(next.begin(), next.end(), [](const Node& a, const Node& b) {
            if (a.rmse != b.rmse) return a.rmse < b.rmse;
            return a.mask < b.mask;
        });
        if (next.size() > beam_width) next.resize(beam_width);
        beam = std::move(next);
    }

    const Node& best = beam.front();
    Configuration out;
    out.total_filtered_rmse = best.rmse;
    for (std::size_t d = 0; d < usable.size(); ++d) {
        if (best.mask & (std::uint64_t{1} << d)) {
            out.selected.push_back(usable[d]);
        } else {
            std::vector<double> prod(ns);
            for (std::size_t j = 0; j < ns; ++j) prod[j] = best.prod[j] * spin_m[d][j];
            out.excluded_marginals.emplace_back(usable[d], rmse_of(prod) - best.rmse);
        }
    }
    std::sort(out.selected.begin(), out.selected.end());
    return out;
}

double error_metric(const SpinParams& orig, const SpinParams& obtained) {
    const double norm = std::hypot(orig.a_hz, orig.b_hz);
    if (!(norm > 0.0)) throw std::domain_error("error_metric: reference pair is zero");
    return std::hypot(orig.a_hz - obtained.a_hz, orig.b_hz - obtained.b_hz) / norm;
}

namespace {

// Min-cost assignment on an n x m matrix (n <= m), O(n^2 m).
std::vector<int> assignment(const std::vector<std::vector<double>>& cost) {
    const int n = static_cast<int>(cost.size());
    const int m = n == 0 ? 0 : static_cast<int>(cost[0].size());
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
    std::vector<int> p(m + 1, 0), way(m + 1, 0);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::vector<double> minv(m + 1, inf);
        std::vector<char> used(m + 1, 0);
        do {
            used[j0] = 1;
            const int i0 = p[j0];
            double delta = inf;
            int j1 = -1;
            for (int j = 1; j <= m; ++j) {
                if (used[j]) continue;
                const double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= m; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const int j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0);
    }
    std::vector<int> row_to_col(n, -1);
    for (int j = 1; j <= m; ++j)
        if (p[j] > 0) row_to_col[p[j] - 1] = j - 1;
    return row_to_col;
}

} // namespace

SpinMatch match_spins(std::span<const SpinParams> truth, std::span<const SpinParams> estimates) {
    SpinMatch out;
    const std::size_t n = truth.size(), m = estimates.size();
    out.matched.assign(n, SpinMatch::npos);
    out.errors.assign(n, 1.0);
    if (n == 0) return out;

    // Columns: real estimates, then one private miss column per truth.
    std::vector<std::vector<double>> cost(n, std::vector<double>(m + n, 2.0));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < m; ++j) cost[i][j] = error_metric(truth[i], estimates[j]);
        cost[i][m + i] = 1.0; // miss
    }
    const auto row_to_col = assignment(cost);
    for (std::size_t i = 0; i < n; ++i) {
        const int c = row_to_col[i];
        if (c >= 0 && c < static_cast<int>(m)) {
            out.matched[i] = static_cast<std::size_t>(c);
            out.errors[i] = cost[i][c];
        }
        out.total_error += out.errors[i];
    }
    return out;
}

} // namespace nvspec
