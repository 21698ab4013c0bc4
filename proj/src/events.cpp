#include "evf/events.hpp"

#include <unordered_map>

namespace evf {

const char* errc_name(Errc code) {
    switch (code) {
        case Errc::bad_magic: return "bad_magic";
        case Errc::truncated: return "truncated";
        case Errc::out_of_bounds: return "out_of_bounds";
        case Errc::unordered: return "unordered";
        case Errc::schema_error: return "schema_error";
        case Errc::inconsistent_track: return "inconsistent_track";
        case Errc::geometry_mismatch: return "geometry_mismatch";
        case Errc::bad_delta: return "bad_delta";
        case Errc::exhausted_retries: return "exhausted_retries";
        case Errc::empty_chunk: return "empty_chunk";
        case Errc::empty_input: return "empty_input";
        case Errc::shape_mismatch: return "shape_mismatch";
        case Errc::label_out_of_range: return "label_out_of_range";
        case Errc::missing_gradient: return "missing_gradient";
        case Errc::too_few_points: return "too_few_points";
        case Errc::checkpoint_mismatch: return "checkpoint_mismatch";
        case Errc::manifest_error: return "manifest_error";
        case Errc::diverged_loss: return "diverged_loss";
        case Errc::io_error: return "io_error";
    }
    return "unknown";
}

const char* class_name(ClassLabel c) {
    switch (c) {
        case ClassLabel::background: return "background";
        case ClassLabel::bird: return "bird";
        case ClassLabel::insect: return "insect";
        case ClassLabel::drone: return "drone";
    }
    return "unknown";
}

ClassLabel class_from_name(const std::string& name) {
    if (name == "background") return ClassLabel::background;
    if (name == "bird") return ClassLabel::bird;
    if (name == "insect") return ClassLabel::insect;
    if (name == "drone") return ClassLabel::drone;
    throw Error(Errc::schema_error, "unknown class '" + name + "'");
}

void EventStream::validate() const {
    uint64_t prev_t = 0;
    for (size_t i = 0; i < events.size(); ++i) {
        const Event& e = events[i];
        if (e.x >= width || e.y >= height)
            throw Error(Errc::out_of_bounds,
                        "event " + std::to_string(i) + " at (" + std::to_string(e.x) + "," +
                            std::to_string(e.y) + ") outside " + std::to_string(width) + "x" +
                            std::to_string(height));
        if (i > 0 && e.t < prev_t)
            throw Error(Errc::unordered, "timestamp decreases at event " + std::to_string(i));
        prev_t = e.t;
    }
}

void validate_box(const BoxRecord& box) {
    if (box.t_end < box.t_start || box.t_end - box.t_start != kFrameUs)
        throw Error(Errc::schema_error, "box window must span exactly " +
                                            std::to_string(kFrameUs) + "us");
    if (box.x_min >= box.x_max) throw Error(Errc::schema_error, "x_min must be < x_max");
    if (box.y_min >= box.y_max) throw Error(Errc::schema_error, "y_min must be < y_max");
}

std::vector<std::vector<size_t>> AnnotationSet::group_by_track() const {
    std::vector<std::vector<size_t>> groups;
    std::unordered_map<uint64_t, size_t> slot;
    for (size_t i = 0; i < records.size(); ++i) {
        auto [it, fresh] = slot.try_emplace(records[i].track_id, groups.size());
        if (fresh) groups.emplace_back();
        groups[it->second].push_back(i);
    }
    return groups;
}

void AnnotationSet::validate_groups() const {
    for (const auto& group : group_by_track()) {
        const BoxRecord& first = records[group.front()];
        for (size_t k = 1; k < group.size(); ++k) {
            const BoxRecord& prev = records[group[k - 1]];
            const BoxRecord& cur = records[group[k]];
            const std::string id = "track " + std::to_string(first.track_id);
            if (cur.class_label != first.class_label)
                throw Error(Errc::inconsistent_track, id + " mixes class labels");
            if (cur.frame_index != prev.frame_index + 1)
                throw Error(Errc::inconsistent_track,
                            id + " has a frame gap after frame " +
                                std::to_string(prev.frame_index));
            if (cur.t_start != prev.t_end)
                throw Error(Errc::inconsistent_track,
                            id + " has non-contiguous windows at frame " +
                                std::to_string(cur.frame_index));
        }
    }
}

} // namespace evf
