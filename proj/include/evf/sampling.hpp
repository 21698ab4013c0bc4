#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "evf/trackstore.hpp"

namespace evf {

enum class SamplingStrategy : uint8_t { random = 0, most_recent = 1, fps = 2 };

const char* sampling_name(SamplingStrategy s);
SamplingStrategy sampling_from_name(const std::string& name);

struct SamplingSpec {
    SamplingStrategy strategy = SamplingStrategy::most_recent;
    size_t target_n = 1024;
    uint64_t seed = 0;
};

/// Uniform sample without replacement of size n, original temporal order
/// preserved. Falls back to pad_to_n when the set has fewer than n points.
NormalizedPointSet sample_random(const NormalizedPointSet& points, size_t n, uint64_t seed);

/// The n points with the largest t (ties: later original index wins), i.e.
/// the suffix of the time-sorted sequence. Pads when the set is small.
NormalizedPointSet sample_most_recent(const NormalizedPointSet& points, size_t n);

/// How farthest-point selection picks its first point.
///  seeded_index:    a uniformly drawn point index (the sampling default).
///  seeded_location: the point nearest to a seeded random location in the
///                    normalized volume; stable under input permutation, used
///                    by the hierarchical encoder.
enum class FpsStart : uint8_t { seeded_index = 0, seeded_location = 1 };

/// Greedy farthest-point selection indices over (x, y, lambda*t); polarity is
/// a feature, not a location, and is excluded from the metric. Each step
/// maximizes the minimum distance to the selected set. Distance ties follow
/// the start mode: seeded_index picks the lowest index, seeded_location picks
/// the lexicographically smallest point (then lowest index) so the selection
/// is stable under input permutation.
std::vector<size_t> fps_select_indices(const NormalizedPointSet& points, size_t n, uint64_t seed,
                                       FpsStart start = FpsStart::seeded_index,
                                       double lambda = 1.0);

NormalizedPointSet sample_fps(const NormalizedPointSet& points, size_t n, uint64_t seed,
                              double lambda = 1.0);

/// Deterministic cyclic repetition of the time-sorted sequence until length n.
/// Requires 1 <= count < n. Duplicates are neutral under max pooling.
NormalizedPointSet pad_to_n(const NormalizedPointSet& points, size_t n);

NormalizedPointSet apply_sampling(const SamplingSpec& spec, const NormalizedPointSet& points);

} // namespace evf
