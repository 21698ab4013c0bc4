#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "evf/events.hpp"
#include "evf/nn.hpp"
#include "evf/rng.hpp"
#include "evf/sampling.hpp"
#include "evf/trackstore.hpp"

namespace evf {

enum class EncoderVariant : uint8_t { flat = 0, hierarchical = 1 };

const char* encoder_name(EncoderVariant v);
EncoderVariant encoder_from_name(const std::string& name);

/// One set-abstraction level: FPS centroids, ball-query grouping, shared MLP,
/// per-group max pool. mlp lists the hidden/output widths after the input
/// (previous feature width + 3 relative coordinates).
struct SaLevelConfig {
    size_t centroids = 0;
    size_t group_size = 0;
    double radius = 0.0;
    std::vector<size_t> mlp;
};

struct EncoderConfig {
    EncoderVariant variant = EncoderVariant::flat;
    std::vector<size_t> flat_mlp = {64, 128, 256};
    std::vector<SaLevelConfig> sa_levels = {
        {128, 32, 0.25, {64, 64, 128}},
        {32, 16, 0.5, {128, 128, 256}},
    };
    std::vector<size_t> head_hidden = {128, 64, 32};

    size_t feature_dim() const;
    void validate() const;
};

std::string encoder_config_to_json(const EncoderConfig& cfg);
EncoderConfig encoder_config_from_json(const std::string& text);

/// Precomputed centroid/group indices for the hierarchical encoder. A pure
/// function of (points, config, seed), so it can be cached per chunk and
/// reused across epochs. member_idx holds centroids x group_size indices into
/// the previous level's rows, group-major, centroid first, then neighbors
/// nearest-first, padded by repeating the centroid.
struct GroupingLevel {
    std::vector<size_t> centroid_idx;
    std::vector<size_t> member_idx;
    size_t group_size = 0;
};

struct GroupingPlan {
    std::vector<GroupingLevel> levels;
};

GroupingPlan build_grouping(const NormalizedPointSet& points, const EncoderConfig& cfg,
                            uint64_t seed);

/// Declares every tensor of the model in a fixed order: encoder stack first,
/// then the classification head. Values start at zero.
template <typename T>
void create_params(nn::ParamStore<T>& store, const EncoderConfig& cfg) {
    cfg.validate();
    auto layer = [&](const std::string& prefix, size_t in, size_t out) {
        store.create(prefix + ".w", {in, out});
        store.create(prefix + ".b", {out});
    };
    if (cfg.variant == EncoderVariant::flat) {
        size_t in = 4;
        for (size_t i = 0; i < cfg.flat_mlp.size(); ++i) {
            layer("flat." + std::to_string(i), in, cfg.flat_mlp[i]);
            in = cfg.flat_mlp[i];
        }
    } else {
        size_t feat = 4;
        for (size_t l = 0; l < cfg.sa_levels.size(); ++l) {
            size_t in = feat + 3;
            for (size_t i = 0; i < cfg.sa_levels[l].mlp.size(); ++i) {
                layer("sa" + std::to_string(l) + "." + std::to_string(i), in,
                      cfg.sa_levels[l].mlp[i]);
                in = cfg.sa_levels[l].mlp[i];
            }
            feat = cfg.sa_levels[l].mlp.back();
        }
    }
    size_t in = cfg.feature_dim();
    for (size_t i = 0; i < cfg.head_hidden.size(); ++i) {
        layer("head." + std::to_string(i), in, cfg.head_hidden[i]);
        in = cfg.head_hidden[i];
    }
    layer("head.out", in, kNumClasses);
}

/// He-uniform weight fill, zero biases; deterministic in (config, seed).
template <typename T>
void init_params(nn::ParamStore<T>& store, uint64_t seed) {
    size_t index = 0;
    for (const auto& name : store.names) {
        const auto& p = store.by_name.at(name);
        if (name.ends_with(".w")) {
            Rng rng(mix_seed(seed, "init", index));
            const double limit = std::sqrt(6.0 / double(p->shape[0]));
            for (auto& v : p->value) v = T(rng.range(-limit, limit));
        }
        index += 1;
    }
}

/// Points as an N x 4 constant tensor in (x, y, t, p) column order.
template <typename T>
nn::TensorPtr<T> points_tensor(const NormalizedPointSet& ps) {
    auto x = nn::make_tensor<T>({ps.count(), size_t(4)});
    for (size_t i = 0; i < ps.count(); ++i) {
        const auto& p = ps.points[i];
        x->value[i * 4 + 0] = T(p.x);
        x->value[i * 4 + 1] = T(p.y);
        x->value[i * 4 + 2] = T(p.t);
        x->value[i * 4 + 3] = T(p.p);
    }
    return x;
}

namespace detail {

template <typename T>
nn::TensorPtr<T> mlp_chain(nn::Tape<T>& tape, const nn::ParamStore<T>& params,
                           const std::string& prefix, size_t depth, nn::TensorPtr<T> h) {
    for (size_t i = 0; i < depth; ++i) {
        const std::string base = prefix + std::to_string(i);
        h = nn::relu(tape, nn::linear(tape, h, params.get(base + ".w"), params.get(base + ".b")));
    }
    return h;
}

} // namespace detail

/// Shared per-point MLP then a column-wise max pool: a permutation-invariant
/// global feature.
template <typename T>
nn::TensorPtr<T> encode_flat(nn::Tape<T>& tape, const nn::ParamStore<T>& params,
                             const EncoderConfig& cfg, const nn::TensorPtr<T>& pts) {
    if (pts->rows() == 0) throw Error(Errc::empty_input, "encode_flat: no points");
    if (pts->cols() != 4) throw Error(Errc::shape_mismatch, "encode_flat: points must be N x 4");
    auto h = detail::mlp_chain(tape, params, "flat.", cfg.flat_mlp.size(), pts);
    return nn::max_pool_points(tape, h).feature;
}

/// Set-abstraction stack per the grouping plan, then a global max pool. The
/// plan must have been built from the same point order as pts.
template <typename T>
nn::TensorPtr<T> encode_hierarchical(nn::Tape<T>& tape, const nn::ParamStore<T>& params,
                                     const EncoderConfig& cfg, const nn::TensorPtr<T>& pts,
                                     const GroupingPlan& plan) {
    const size_t n = pts->rows();
    if (n < 2) throw Error(Errc::too_few_points, "encode_hierarchical: needs at least 2 points");
    if (pts->cols() != 4)
        throw Error(Errc::shape_mismatch, "encode_hierarchical: points must be N x 4");
    if (plan.levels.size() != cfg.sa_levels.size())
        throw Error(Errc::shape_mismatch, "grouping plan does not match the encoder config");

    std::vector<std::array<T, 3>> coords(n);
    for (size_t i = 0; i < n; ++i)
        coords[i] = {pts->value[i * 4], pts->value[i * 4 + 1], pts->value[i * 4 + 2]};
    auto features = pts;

    for (size_t l = 0; l < plan.levels.size(); ++l) {
        const auto& lvl = plan.levels[l];
        const size_t m = lvl.centroid_idx.size();
        const size_t g = lvl.group_size;
        if (lvl.member_idx.size() != m * g)
            throw Error(Errc::shape_mismatch, "grouping plan level has a malformed member list");

        auto grouped = nn::gather_rows(tape, features, lvl.member_idx);
        auto rel = nn::make_tensor<T>({m * g, size_t(3)});
        for (size_t gi = 0; gi < m; ++gi) {
            const auto& c = coords[lvl.centroid_idx[gi]];
            for (size_t k = 0; k < g; ++k) {
                const auto& q = coords[lvl.member_idx[gi * g + k]];
                T* row = rel->value.data() + (gi * g + k) * 3;
                row[0] = q[0] - c[0];
                row[1] = q[1] - c[1];
                row[2] = q[2] - c[2];
            }
        }
        auto h = nn::concat_cols(tape, grouped, rel);
        h = detail::mlp_chain(tape, params, "sa" + std::to_string(l) + ".",
                              cfg.sa_levels[l].mlp.size(), h);
        std::vector<size_t> seg(m * g);
        for (size_t r = 0; r < m * g; ++r) seg[r] = r / g;
        features = nn::segment_max(tape, h, seg, m);

        std::vector<std::array<T, 3>> next(m);
        for (size_t gi = 0; gi < m; ++gi) next[gi] = coords[lvl.centroid_idx[gi]];
        coords = std::move(next);
    }
    return nn::max_pool_points(tape, features).feature;
}

/// Three hidden ReLU layers then a linear map to the 4 class logits, shape
/// (1 x 4), index order background/bird/insect/drone.
template <typename T>
nn::TensorPtr<T> classify(nn::Tape<T>& tape, const nn::ParamStore<T>& params,
                          const EncoderConfig& cfg, const nn::TensorPtr<T>& feature) {
    if (feature->cols() != cfg.feature_dim())
        throw Error(Errc::shape_mismatch, "classify: feature width does not match the config");
    auto h = detail::mlp_chain(tape, params, "head.", cfg.head_hidden.size(), feature);
    return nn::linear(tape, h, params.get("head.out.w"), params.get("head.out.b"));
}

/// Full forward pass to logits. plan is required for the hierarchical
/// variant and ignored by the flat one.
template <typename T>
nn::TensorPtr<T> forward_logits(nn::Tape<T>& tape, const nn::ParamStore<T>& params,
                                const EncoderConfig& cfg, const nn::TensorPtr<T>& pts,
                                const GroupingPlan* plan) {
    nn::TensorPtr<T> feature;
    if (cfg.variant == EncoderVariant::flat) {
        feature = encode_flat(tape, params, cfg, pts);
    } else {
        if (!plan)
            throw std::invalid_argument("forward_logits: hierarchical encoder needs a plan");
        feature = encode_hierarchical(tape, params, cfg, pts, *plan);
    }
    return classify(tape, params, cfg, feature);
}

} // namespace evf
