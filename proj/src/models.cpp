#include "evf/models.hpp"

#include <algorithm>

#include "json.hpp"

namespace evf {

using nlohmann::json;

const char* encoder_name(EncoderVariant v) {
    switch (v) {
        case EncoderVariant::flat: return "flat";
        case EncoderVariant::hierarchical: return "hierarchical";
    }
    return "unknown";
}

EncoderVariant encoder_from_name(const std::string& name) {
    if (name == "flat") return EncoderVariant::flat;
    if (name == "hierarchical") return EncoderVariant::hierarchical;
    throw Error(Errc::schema_error, "unknown encoder variant '" + name + "'");
}

size_t EncoderConfig::feature_dim() const {
    if (variant == EncoderVariant::flat) return flat_mlp.empty() ? 0 : flat_mlp.back();
    return sa_levels.empty() || sa_levels.back().mlp.empty() ? 0 : sa_levels.back().mlp.back();
}

void EncoderConfig::validate() const {
    auto positive = [](const std::vector<size_t>& widths, const char* what) {
        if (widths.empty()) throw Error(Errc::schema_error, std::string(what) + " is empty");
        for (size_t w : widths)
            if (w == 0) throw Error(Errc::schema_error, std::string(what) + " has a zero width");
    };
    if (variant == EncoderVariant::flat) {
        positive(flat_mlp, "flat_mlp");
    } else {
        if (sa_levels.empty()) throw Error(Errc::schema_error, "sa_levels is empty");
        for (const auto& lvl : sa_levels) {
            if (lvl.centroids == 0 || lvl.group_size == 0)
                throw Error(Errc::schema_error, "set-abstraction level needs centroids > 0 and "
                                                "group_size > 0");
            if (!(lvl.radius > 0.0))
                throw Error(Errc::schema_error, "set-abstraction radius must be positive");
            positive(lvl.mlp, "set-abstraction mlp");
        }
    }
    for (size_t w : head_hidden)
        if (w == 0) throw Error(Errc::schema_error, "head_hidden has a zero width");
}

namespace {

void check_keys(const json& obj, std::initializer_list<const char*> allowed, const char* what) {
    for (const auto& [key, value] : obj.items()) {
        (void)value;
        if (std::find_if(allowed.begin(), allowed.end(),
                         [&](const char* a) { return key == a; }) == allowed.end())
            throw Error(Errc::schema_error,
                        std::string("unknown key '") + key + "' in " + what);
    }
}

std::vector<size_t> widths_from(const json& arr, const char* what) {
    if (!arr.is_array()) throw Error(Errc::schema_error, std::string(what) + " must be an array");
    std::vector<size_t> out;
    for (const auto& v : arr) {
        if (!v.is_number_unsigned())
            throw Error(Errc::schema_error, std::string(what) + " must hold unsigned integers");
        out.push_back(v.get<size_t>());
    }
    return out;
}

} // namespace

std::string encoder_config_to_json(const EncoderConfig& cfg) {
    json sa = json::array();
    for (const auto& lvl : cfg.sa_levels)
        sa.push_back({{"centroids", lvl.centroids},
                      {"group_size", lvl.group_size},
                      {"radius", lvl.radius},
                      {"mlp", lvl.mlp}});
    json j = {{"variant", encoder_name(cfg.variant)},
              {"flat_mlp", cfg.flat_mlp},
              {"sa_levels", sa},
              {"head_hidden", cfg.head_hidden}};
    return j.dump();
}

EncoderConfig encoder_config_from_json(const std::string& text) {
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded() || !j.is_object())
        throw Error(Errc::schema_error, "encoder config is not a JSON object");
    check_keys(j, {"variant", "flat_mlp", "sa_levels", "head_hidden"}, "encoder config");
    EncoderConfig cfg;
    if (j.contains("variant")) {
        if (!j["variant"].is_string())
            throw Error(Errc::schema_error, "encoder variant must be a string");
        cfg.variant = encoder_from_name(j["variant"].get<std::string>());
    }
    if (j.contains("flat_mlp")) cfg.flat_mlp = widths_from(j["flat_mlp"], "flat_mlp");
    if (j.contains("head_hidden")) cfg.head_hidden = widths_from(j["head_hidden"], "head_hidden");
    if (j.contains("sa_levels")) {
        if (!j["sa_levels"].is_array())
            throw Error(Errc::schema_error, "sa_levels must be an array");
        cfg.sa_levels.clear();
        for (const auto& it : j["sa_levels"]) {
            if (!it.is_object())
                throw Error(Errc::schema_error, "sa_levels entries must be objects");
            check_keys(it, {"centroids", "group_size", "radius", "mlp"}, "sa_levels entry");
            SaLevelConfig lvl;
            if (!it.contains("centroids") || !it.contains("group_size") ||
                !it.contains("radius") || !it.contains("mlp"))
                throw Error(Errc::schema_error,
                            "sa_levels entries need centroids, group_size, radius, mlp");
            if (!it["centroids"].is_number_unsigned() || !it["group_size"].is_number_unsigned())
                throw Error(Errc::schema_error, "centroids and group_size must be unsigned");
            if (!it["radius"].is_number())
                throw Error(Errc::schema_error, "radius must be a number");
            lvl.centroids = it["centroids"].get<size_t>();
            lvl.group_size = it["group_size"].get<size_t>();
            lvl.radius = it["radius"].get<double>();
            lvl.mlp = widths_from(it["mlp"], "sa mlp");
            cfg.sa_levels.push_back(std::move(lvl));
        }
    }
    cfg.validate();
    return cfg;
}

GroupingPlan build_grouping(const NormalizedPointSet& points, const EncoderConfig& cfg,
                            uint64_t seed) {
    cfg.validate();
    if (cfg.variant != EncoderVariant::hierarchical)
        throw std::invalid_argument("build_grouping: config is not hierarchical");
    if (points.count() < 2)
        throw Error(Errc::too_few_points, "build_grouping: needs at least 2 points");

    GroupingPlan plan;
    NormalizedPointSet level = points;
    for (size_t l = 0; l < cfg.sa_levels.size(); ++l) {
        const auto& sc = cfg.sa_levels[l];
        const size_t n = level.count();
        const size_t m = std::min(sc.centroids, n);
        GroupingLevel out;
        out.group_size = sc.group_size;
        out.centroid_idx =
            fps_select_indices(level, m, mix_seed(seed, "sa", l), FpsStart::seeded_location);

        const double r2 = sc.radius * sc.radius;
        out.member_idx.reserve(m * sc.group_size);
        std::vector<std::pair<double, size_t>> near;
        for (size_t gi = 0; gi < m; ++gi) {
            const size_t ci = out.centroid_idx[gi];
            const auto& c = level.points[ci];
            near.clear();
            for (size_t i = 0; i < n; ++i) {
                if (i == ci) continue;
                const auto& q = level.points[i];
                const double dx = q.x - c.x, dy = q.y - c.y, dt = q.t - c.t;
                const double d2 = dx * dx + dy * dy + dt * dt;
                if (d2 <= r2) near.emplace_back(d2, i);
            }
            std::sort(near.begin(), near.end());
            out.member_idx.push_back(ci);
            for (size_t k = 0; k + 1 < sc.group_size && k < near.size(); ++k)
                out.member_idx.push_back(near[k].second);
            while (out.member_idx.size() % sc.group_size != 0) out.member_idx.push_back(ci);
        }

        NormalizedPointSet next;
        next.points.reserve(m);
        for (size_t ci : out.centroid_idx) next.points.push_back(level.points[ci]);
        level = std::move(next);
        plan.levels.push_back(std::move(out));
    }
    return plan;
}

} // namespace evf
