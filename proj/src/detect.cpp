#include "nvspec/detect.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <queue>
#include <set>

namespace nvspec {

FanDiagram fan_diagram(std::span<const GaussianComponent> components, const FanOptions& opt,
                       double tau_lo, double tau_hi) {
    if (!(opt.period > 0.0)) throw std::invalid_argument("fan_diagram: period must be positive");
    if (opt.k_max < 1) throw std::invalid_argument("fan_diagram: k_max must be >= 1");
    if (opt.m_layers < 1) throw std::invalid_argument("fan_diagram: m_layers must be >= 1");

    FanDiagram out;
    for (std::size_t c = 0; c < components.size(); ++c) {
        const double mu = components[c].mu;
        if (mu < tau_lo || mu > tau_hi) {
            out.skipped.push_back(c);
            continue;
        }
        const int k = static_cast<int>(std::llround(mu / opt.period + 0.5));
        if (k < 1 || k > opt.k_max) {
            out.skipped.push_back(c);
            continue;
        }
        const double dt = mu - (k - 0.5) * opt.period;
        auto push = [&](int kk, double dtt, int m) {
            if (kk < 1 || kk > opt.k_max) return;
            out.points.push_back({kk, dtt, components[c].amplitude, components[c].sigma, m, c});
        };
        push(k, dt, 0);
        for (int m = 1; m < opt.m_layers; ++m) {
            push(k + m, dt - m * opt.period, m);
            push(k - m, dt + m * opt.period, -m);
        }
    }
    return out;
}

namespace {

// Per-k sorted view for nearest-dip queries.
struct KIndex {
    // delta_tau, point index; sorted by delta_tau
    std::map<int, std::vector<std::pair<double, std::size_t>>> by_k;

    explicit KIndex(std::span<const DipPoint> points) {
        for (std::size_t i = 0; i < points.size(); ++i)
            by_k[points[i].k].emplace_back(points[i].delta_tau, i);
        for (auto& [k, v] : by_k) std::sort(v.begin(), v.end());
    }

    // nearest point at period k, or npos
    std::pair<double, std::size_t> nearest(int k, double x) const {
        auto it = by_k.find(k);
        if (it == by_k.end() || it->second.empty())
            return {std::numeric_limits<double>::infinity(), static_cast<std::size_t>(-1)};
        const auto& v = it->second;
        auto lo = std::lower_bound(v.begin(), v.end(), std::make_pair(x, std::size_t{0}));
        std::pair<double, std::size_t> best{std::numeric_limits<double>::infinity(),
                                            static_cast<std::size_t>(-1)};
        if (lo != v.end() && std::abs(lo->first - x) < best.first)
            best = {std::abs(lo->first - x), lo->second};
        if (lo != v.begin()) {
            auto prev = std::prev(lo);
            if (std::abs(prev->first - x) < best.first) best = {std::abs(prev->first - x), prev->second};
        }
        return best;
    }
};

LineScore score_with_index(double slope, std::span<const DipPoint> points, const KIndex& index,
                           double d_max, int k_max) {
    LineScore out;
    double acc = 0.0;
    std::set<std::size_t> members;
    for (int k = 1; k <= k_max; ++k) {
        const double line = slope * (k - 0.5);
        const auto [dist, idx] = index.nearest(k, line);
        const double d = std::min(dist, d_max);
        acc += d * d;
        if (dist < d_max && idx != static_cast<std::size_t>(-1))
            members.insert(points[idx].source_id);
    }
    out.mean_sq_distance = acc / static_cast<double>(k_max);
    out.matched.assign(members.begin(), members.end());
    return out;
}

} // namespace

LineScore score_line(double slope, std::span<const DipPoint> points, double d_max, int k_max) {
    if (!(d_max > 0.0)) throw std::invalid_argument("score_line: d_max must be positive");
    if (k_max < 1) throw std::invalid_argument("score_line: k_max must be >= 1");
    return score_with_index(slope, points, KIndex(points), d_max, k_max);
}

std::vector<LineCandidate> greedy_extract(std::vector<DipPoint> points, double d_max, int k_max,
                                          int min_members) {
    // One candidate per original dip. Scores are monotone nondecreasing as
    // points are removed, so a lazy priority queue reproduces the exact
    // greedy selection without rescoring every candidate per iteration.
    struct Seed {
        double slope;
        double abs_slope;
        int k;
        double delta_tau;
        std::size_t source_id;
    };
    std::vector<Seed> seeds;
    for (const auto& p : points)
        if (p.clone_offset == 0)
            seeds.push_back({p.delta_tau / (p.k - 0.5), std::abs(p.delta_tau / (p.k - 0.5)), p.k,
                             p.delta_tau, p.source_id});

    struct Entry {
        double msd;
        double abs_slope;
        int seed_k;
        std::size_t seed_idx;

        bool operator>(const Entry& o) const {
            if (msd != o.msd) return msd > o.msd;
            if (abs_slope != o.abs_slope) return abs_slope > o.abs_slope;
            return seed_k > o.seed_k;
        }
    };
    std::priority_queue<Entry, std::vector<Entry>, std::greater<>> queue;

    std::set<std::size_t> removed;
    auto alive = [&](std::size_t source_id) { return removed.count(source_id) == 0; };

    KIndex index(points);
    std::vector<LineScore> scores(seeds.size());
    std::uint64_t index_epoch = 0;
    std::vector<std::uint64_t> score_epoch(seeds.size(), 0);
    for (std::size_t i = 0; i < seeds.size(); ++i) {
        scores[i] = score_with_index(seeds[i].slope, points, index, d_max, k_max);
        queue.push({scores[i].mean_sq_distance, seeds[i].abs_slope, seeds[i].k, i});
    }

    std::vector<LineCandidate> out;
    while (!queue.empty()) {
        const Entry top = queue.top();
        queue.pop();
        const auto i = top.seed_idx;
        if (!alive(seeds[i].source_id)) continue;
        if (score_epoch[i] != index_epoch) {
            scores[i] = score_with_index(seeds[i].slope, points, index, d_max, k_max);
            score_epoch[i] = index_epoch;
            queue.push({scores[i].mean_sq_distance, seeds[i].abs_slope, seeds[i].k, i});
            continue;
        }

        if (static_cast<int>(scores[i].matched.size()) >= min_members) {
            LineCandidate line;
            line.slope = seeds[i].slope;
            line.members = scores[i].matched;
            line.mean_sq_distance = scores[i].mean_sq_distance;
            line.seed_k = seeds[i].k;
            line.seed_delta_tau = seeds[i].delta_tau;
            out.push_back(line);
            removed.insert(line.members.begin(), line.members.end());
        } else {
            // Unsupported seed: discard it (and its clones) without emitting.
            removed.insert(seeds[i].source_id);
        }
        std::erase_if(points, [&](const DipPoint& p) { return !alive(p.source_id); });
        index = KIndex(points);
        ++index_epoch;
    }
    return out;
}

} // namespace nvspec
