#include "evf/sampling.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <tuple>

#include "evf/rng.hpp"

namespace evf {

const char* sampling_name(SamplingStrategy s) {
    switch (s) {
        case SamplingStrategy::random: return "random";
        case SamplingStrategy::most_recent: return "recent";
        case SamplingStrategy::fps: return "fps";
    }
    return "unknown";
}

SamplingStrategy sampling_from_name(const std::string& name) {
    if (name == "random") return SamplingStrategy::random;
    if (name == "recent" || name == "most_recent") return SamplingStrategy::most_recent;
    if (name == "fps") return SamplingStrategy::fps;
    throw Error(Errc::schema_error, "unknown sampling strategy '" + name + "'");
}

namespace {

std::vector<size_t> time_sorted_indices(const NormalizedPointSet& points) {
    std::vector<size_t> idx(points.count());
    std::iota(idx.begin(), idx.end(), size_t(0));
    // Stable, so equal timestamps keep original order (later index stays later).
    std::stable_sort(idx.begin(), idx.end(),
                     [&](size_t a, size_t b) { return points.points[a].t < points.points[b].t; });
    return idx;
}

NormalizedPointSet gather(const NormalizedPointSet& points, const std::vector<size_t>& idx) {
    NormalizedPointSet out;
    out.points.reserve(idx.size());
    for (size_t i : idx) out.points.push_back(points.points[i]);
    return out;
}

inline double dist2(const Point4& a, const Point4& b, double lambda) {
    const double dx = a.x - b.x;
    const double dy = a.y - b.y;
    const double dt = lambda * (a.t - b.t);
    return dx * dx + dy * dy + dt * dt;
}

inline std::tuple<double, double, double, double> value_key(const Point4& p) {
    return {p.x, p.y, p.t, p.p};
}

} // namespace

NormalizedPointSet sample_random(const NormalizedPointSet& points, size_t n, uint64_t seed) {
    const size_t m = points.count();
    if (m == 0) throw Error(Errc::empty_input, "sample_random on an empty point set");
    if (m < n) return pad_to_n(points, n);

    // Partial Fisher-Yates: the first n slots are a uniform sample without
    // replacement; re-sorting restores original temporal order.
    std::vector<size_t> idx(m);
    std::iota(idx.begin(), idx.end(), size_t(0));
    Rng rng(seed);
    for (size_t i = 0; i < n; ++i)
        std::swap(idx[i], idx[i + size_t(rng.below(m - i))]);
    idx.resize(n);
    std::sort(idx.begin(), idx.end());
    return gather(points, idx);
}

NormalizedPointSet sample_most_recent(const NormalizedPointSet& points, size_t n) {
    const size_t m = points.count();
    if (m == 0) throw Error(Errc::empty_input, "sample_most_recent on an empty point set");
    if (m < n) return pad_to_n(points, n);
    auto idx = time_sorted_indices(points);
    idx.erase(idx.begin(), idx.end() - std::ptrdiff_t(n));
    return gather(points, idx);
}

std::vector<size_t> fps_select_indices(const NormalizedPointSet& points, size_t n, uint64_t seed,
                                       FpsStart start, double lambda) {
    const size_t m = points.count();
    if (m == 0) throw Error(Errc::empty_input, "fps on an empty point set");
    if (n > m) throw std::invalid_argument("fps_select_indices: n exceeds point count");
    const auto& pts = points.points;

    // seeded_index breaks distance ties by lowest index (the sampling
    // contract); seeded_location compares point values first so the result is
    // stable under input permutation (the encoder contract).
    const bool value_ties = start == FpsStart::seeded_location;
    auto prefer = [&](size_t cand, size_t best) {
        if (!value_ties) return false; // iteration order already favors the lowest index
        return value_key(pts[cand]) < value_key(pts[best]);
    };

    size_t first = 0;
    Rng rng(seed);
    if (start == FpsStart::seeded_index) {
        first = size_t(rng.below(m));
    } else {
        Point4 probe;
        probe.x = rng.range(-1.0, 1.0);
        probe.y = rng.range(-1.0, 1.0);
        probe.t = rng.unit();
        probe.p = 0.0;
        double best_d = std::numeric_limits<double>::infinity();
        for (size_t i = 0; i < m; ++i) {
            const double d = dist2(pts[i], probe, lambda);
            if (d < best_d || (d == best_d && prefer(i, first))) {
                best_d = d;
                first = i;
            }
        }
    }

    std::vector<size_t> selected;
    selected.reserve(n);
    std::vector<char> taken(m, 0);
    std::vector<double> mind(m);
    selected.push_back(first);
    taken[first] = 1;
    for (size_t i = 0; i < m; ++i) mind[i] = dist2(pts[i], pts[first], lambda);

    while (selected.size() < n) {
        size_t best = SIZE_MAX;
        double best_d = -1.0;
        for (size_t i = 0; i < m; ++i) {
            if (taken[i]) continue;
            if (best == SIZE_MAX || mind[i] > best_d ||
                (mind[i] == best_d && prefer(i, best))) {
                best = i;
                best_d = mind[i];
            }
        }
        selected.push_back(best);
        taken[best] = 1;
        for (size_t i = 0; i < m; ++i) {
            if (taken[i]) continue;
            const double d = dist2(pts[i], pts[best], lambda);
            if (d < mind[i]) mind[i] = d;
        }
    }
    return selected;
}

NormalizedPointSet sample_fps(const NormalizedPointSet& points, size_t n, uint64_t seed,
                              double lambda) {
    const size_t m = points.count();
    if (m == 0) throw Error(Errc::empty_input, "sample_fps on an empty point set");
    if (m < n) return pad_to_n(points, n);
    return gather(points, fps_select_indices(points, n, seed, FpsStart::seeded_index, lambda));
}

NormalizedPointSet pad_to_n(const NormalizedPointSet& points, size_t n) {
    const size_t m = points.count();
    if (m == 0) throw Error(Errc::empty_input, "pad_to_n on an empty point set");
    if (m >= n) throw std::invalid_argument("pad_to_n: point count must be below n");
    const auto sorted = time_sorted_indices(points);
    NormalizedPointSet out;
    out.points.reserve(n);
    for (size_t i = 0; i < n; ++i) out.points.push_back(points.points[sorted[i % m]]);
    return out;
}

NormalizedPointSet apply_sampling(const SamplingSpec& spec, const NormalizedPointSet& points) {
    switch (spec.strategy) {
        case SamplingStrategy::random: return sample_random(points, spec.target_n, spec.seed);
        case SamplingStrategy::most_recent: return sample_most_recent(points, spec.target_n);
        case SamplingStrategy::fps: return sample_fps(points, spec.target_n, spec.seed);
    }
    throw std::invalid_argument("apply_sampling: unknown strategy");
}

} // namespace evf
