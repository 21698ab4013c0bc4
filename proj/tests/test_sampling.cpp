#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <set>

#include "evf/rng.hpp"
#include "evf/sampling.hpp"

using namespace evf;

namespace {

NormalizedPointSet random_points(Rng& rng, size_t n) {
    NormalizedPointSet ps;
    ps.points.resize(n);
    for (auto& p : ps.points) {
        p.x = rng.range(-1.0, 1.0);
        p.y = rng.range(-1.0, 1.0);
        p.t = rng.unit();
        p.p = rng.coin() ? 1.0 : -1.0;
    }
    return ps;
}

double d2(const Point4& a, const Point4& b, double lambda) {
    const double dx = a.x - b.x, dy = a.y - b.y, dt = lambda * (a.t - b.t);
    return dx * dx + dy * dy + dt * dt;
}

/// Plain quadratic farthest-point greedy, written independently of the
/// library implementation: recompute every candidate's distance to the whole
/// selected set at each step. Start point replicates the uniform-index rule.
std::vector<size_t> brute_fps(const NormalizedPointSet& ps, size_t n, uint64_t seed,
                              double lambda) {
    const size_t m = ps.count();
    std::vector<size_t> picked;
    std::vector<bool> in(m, false);
    Rng rng(seed);
    size_t cur = size_t(rng.below(uint64_t(m)));
    picked.push_back(cur);
    in[cur] = true;
    while (picked.size() < n) {
        double best = -1.0;
        size_t arg = m;
        for (size_t i = 0; i < m; ++i) {
            if (in[i]) continue;
            double nearest = std::numeric_limits<double>::infinity();
            for (size_t s : picked) nearest = std::min(nearest, d2(ps.points[i], ps.points[s], lambda));
            if (nearest > best) {
                best = nearest;
                arg = i;
            }
        }
        picked.push_back(arg);
        in[arg] = true;
    }
    return picked;
}

std::vector<size_t> time_order(const NormalizedPointSet& ps) {
    std::vector<size_t> idx(ps.count());
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::stable_sort(idx.begin(), idx.end(),
                     [&](size_t a, size_t b) { return ps.points[a].t < ps.points[b].t; });
    return idx;
}

} // namespace

TEST_CASE("fps matches the brute-force oracle on random instances") {
    Rng meta(42);
    for (int inst = 0; inst < 60; ++inst) {
        const uint64_t seed = meta.below(1u << 30);
        const size_t m = 2 + size_t(meta.below(63));
        const size_t n = 1 + size_t(meta.below(uint64_t(m)));
        Rng rng(seed);
        const NormalizedPointSet ps = random_points(rng, m);
        const auto got = fps_select_indices(ps, n, seed);
        const auto want = brute_fps(ps, n, seed, 1.0);
        REQUIRE(got.size() == n);
        CHECK_MESSAGE(got == want, "seed=", seed, " m=", m, " n=", n);
    }
}

TEST_CASE("fps selects distinct indices and is deterministic") {
    Rng rng(7);
    const NormalizedPointSet ps = random_points(rng, 120);
    const auto a = fps_select_indices(ps, 40, 99);
    const auto b = fps_select_indices(ps, 40, 99);
    CHECK(a == b);
    std::set<size_t> uniq(a.begin(), a.end());
    CHECK(uniq.size() == a.size());
    const auto c = fps_select_indices(ps, 40, 100);
    CHECK(a != c);
}

TEST_CASE("fps n=m returns every index") {
    Rng rng(3);
    const NormalizedPointSet ps = random_points(rng, 17);
    auto idx = fps_select_indices(ps, 17, 5);
    std::sort(idx.begin(), idx.end());
    for (size_t i = 0; i < 17; ++i) CHECK(idx[i] == i);
}

TEST_CASE("fps input validation") {
    NormalizedPointSet empty;
    CHECK_THROWS_AS(fps_select_indices(empty, 1, 0), Error);
    Rng rng(4);
    const NormalizedPointSet ps = random_points(rng, 5);
    CHECK_THROWS_AS(fps_select_indices(ps, 6, 0), std::invalid_argument);
}

TEST_CASE("seeded_location start is stable under permutation") {
    Rng rng(15);
    const NormalizedPointSet ps = random_points(rng, 64);
    const auto base = fps_select_indices(ps, 16, 77, FpsStart::seeded_location);

    std::vector<size_t> perm(ps.count());
    for (size_t i = 0; i < perm.size(); ++i) perm[i] = i;
    Rng prng(5);
    for (size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[prng.below(i)]);

    NormalizedPointSet shuffled;
    shuffled.points.resize(ps.count());
    for (size_t i = 0; i < perm.size(); ++i) shuffled.points[perm[i]] = ps.points[i];
    const auto moved = fps_select_indices(shuffled, 16, 77, FpsStart::seeded_location);

    // The same geometric points must be selected, independent of input order.
    std::multiset<std::tuple<double, double, double, double>> a, b;
    for (size_t i : base)
        a.insert({ps.points[i].x, ps.points[i].y, ps.points[i].t, ps.points[i].p});
    for (size_t i : moved)
        b.insert({shuffled.points[i].x, shuffled.points[i].y, shuffled.points[i].t,
                  shuffled.points[i].p});
    CHECK(a == b);
}

TEST_CASE("most-recent equals the time-sorted suffix") {
    Rng meta(88);
    for (int inst = 0; inst < 200; ++inst) {
        const size_t m = 1 + size_t(meta.below(200));
        const size_t n = 1 + size_t(meta.below(uint64_t(m)));
        Rng rng(meta.below(1u << 20));
        const NormalizedPointSet ps = random_points(rng, m);
        const NormalizedPointSet got = sample_most_recent(ps, n);
        const auto order = time_order(ps);
        REQUIRE(got.count() == n);
        for (size_t i = 0; i < n; ++i) {
            const Point4& want = ps.points[order[m - n + i]];
            CHECK(got.points[i] == want);
        }
    }
}

TEST_CASE("random sampling is without replacement and order preserving") {
    Rng rng(5);
    NormalizedPointSet ps = random_points(rng, 100);
    // Make points identifiable by their t only.
    for (size_t i = 0; i < ps.count(); ++i) ps.points[i].t = double(i);

    const NormalizedPointSet got = sample_random(ps, 30, 9);
    REQUIRE(got.count() == 30);
    std::set<double> seen;
    double prev = -1.0;
    for (const auto& p : got.points) {
        CHECK(seen.insert(p.t).second); // no repeats
        CHECK(p.t > prev);              // original relative order
        prev = p.t;
    }
}

TEST_CASE("random sampling inclusion frequency is uniform") {
    // 100 points, keep 50: every index should appear with frequency 1/2.
    Rng rng(10);
    const NormalizedPointSet ps = random_points(rng, 100);
    std::vector<size_t> hits(100, 0);
    const int trials = 2000;
    for (int trial = 0; trial < trials; ++trial) {
        const NormalizedPointSet got = sample_random(ps, 50, uint64_t(trial));
        for (const auto& p : got.points) {
            // Identify the source index by exact coordinate match.
            for (size_t i = 0; i < ps.count(); ++i)
                if (ps.points[i] == p) {
                    hits[i] += 1;
                    break;
                }
        }
    }
    for (size_t i = 0; i < hits.size(); ++i) {
        const double f = double(hits[i]) / trials;
        CHECK(f > 0.44);
        CHECK(f < 0.56);
    }
}

TEST_CASE("pad_to_n repeats the time-sorted sequence cyclically") {
    Rng rng(6);
    NormalizedPointSet ps = random_points(rng, 5);
    const NormalizedPointSet got = pad_to_n(ps, 12);
    REQUIRE(got.count() == 12);
    const auto order = time_order(ps);
    for (size_t i = 0; i < 12; ++i) CHECK(got.points[i] == ps.points[order[i % 5]]);

    NormalizedPointSet empty;
    CHECK_THROWS_AS(pad_to_n(empty, 4), Error);
    CHECK_THROWS_AS(pad_to_n(ps, 5), std::invalid_argument); // count >= n
}

TEST_CASE("all strategies pad when the chunk is smaller than n") {
    Rng rng(14);
    const NormalizedPointSet ps = random_points(rng, 10);
    for (auto strat :
         {SamplingStrategy::random, SamplingStrategy::most_recent, SamplingStrategy::fps}) {
        SamplingSpec spec;
        spec.strategy = strat;
        spec.target_n = 32;
        spec.seed = 3;
        const NormalizedPointSet got = apply_sampling(spec, ps);
        CHECK(got.count() == 32);
        // Padded output is the cyclic repetition regardless of strategy.
        const NormalizedPointSet want = pad_to_n(ps, 32);
        bool same = true;
        for (size_t i = 0; i < 32; ++i) same = same && got.points[i] == want.points[i];
        CHECK(same);
    }
}

TEST_CASE("apply_sampling dispatches by strategy") {
    Rng rng(21);
    const NormalizedPointSet ps = random_points(rng, 300);
    SamplingSpec spec;
    spec.target_n = 64;
    spec.seed = 17;

    spec.strategy = SamplingStrategy::most_recent;
    const auto recent = apply_sampling(spec, ps);
    const auto order = time_order(ps);
    for (size_t i = 0; i < 64; ++i) CHECK(recent.points[i] == ps.points[order[300 - 64 + i]]);

    spec.strategy = SamplingStrategy::random;
    const auto rnd = apply_sampling(spec, ps);
    bool differs = false;
    for (size_t i = 0; i < 64; ++i) differs = differs || !(rnd.points[i] == recent.points[i]);
    CHECK(differs);

    spec.strategy = SamplingStrategy::fps;
    const auto fps = apply_sampling(spec, ps);
    const auto idx = fps_select_indices(ps, 64, 17);
    for (size_t i = 0; i < 64; ++i) CHECK(fps.points[i] == ps.points[idx[i]]);
}

TEST_CASE("sampling names round trip") {
    for (auto s :
         {SamplingStrategy::random, SamplingStrategy::most_recent, SamplingStrategy::fps})
        CHECK(sampling_from_name(sampling_name(s)) == s);
    CHECK(sampling_from_name("most_recent") == SamplingStrategy::most_recent);
    CHECK_THROWS_AS(sampling_from_name("nearest"), Error);
}
