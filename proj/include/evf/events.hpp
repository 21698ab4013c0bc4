#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "evf/error.hpp"

namespace evf {

inline constexpr uint16_t kDefaultWidth = 1280;
inline constexpr uint16_t kDefaultHeight = 720;

/// One annotation frame in microseconds.
inline constexpr uint64_t kFrameUs = 33000;

enum class Polarity : uint8_t { negative = 0, positive = 1 };

/// Class indices are fixed project-wide: logits, confusion matrices and
/// reports all use this order.
enum class ClassLabel : uint8_t { background = 0, bird = 1, insect = 2, drone = 3 };

inline constexpr size_t kNumClasses = 4;

const char* class_name(ClassLabel c);
ClassLabel class_from_name(const std::string& name); // throws schema_error

/// One asynchronous brightness-change record. Timestamps are microseconds
/// relative to the start of the stream.
struct Event {
    uint64_t t = 0;
    uint16_t x = 0;
    uint16_t y = 0;
    Polarity p = Polarity::negative;

    friend bool operator==(const Event&, const Event&) = default;
};

/// Events ordered by t (non-strictly; ties keep file order).
struct EventStream {
    uint16_t width = kDefaultWidth;
    uint16_t height = kDefaultHeight;
    std::vector<Event> events;

    /// Throws out_of_bounds / unordered when the invariants fail.
    void validate() const;

    friend bool operator==(const EventStream&, const EventStream&) = default;
};

/// A 33ms-granularity bounding box annotation. Spatial bounds are inclusive
/// (an event at x_max is inside); the time window [t_start, t_end) is
/// half-open, matching every other time window in the library.
struct BoxRecord {
    uint64_t track_id = 0;
    ClassLabel class_label = ClassLabel::background;
    uint64_t frame_index = 0;
    uint64_t t_start = 0;
    uint64_t t_end = 0;
    uint16_t x_min = 0, y_min = 0;
    uint16_t x_max = 0, y_max = 0;

    bool contains(const Event& e) const {
        return e.t >= t_start && e.t < t_end && e.x >= x_min && e.x <= x_max &&
               e.y >= y_min && e.y <= y_max;
    }
    bool contains_xy(uint16_t x, uint16_t y) const {
        return x >= x_min && x <= x_max && y >= y_min && y <= y_max;
    }

    friend bool operator==(const BoxRecord&, const BoxRecord&) = default;
};

/// Throws schema_error if the record is malformed (used by the codec with a
/// line number prefix).
void validate_box(const BoxRecord& box);

/// All annotation records of a recording. Grouping invariants (one label per
/// track, contiguous frames) are enforced when the set is built by the codec.
struct AnnotationSet {
    std::vector<BoxRecord> records;

    bool empty() const { return records.empty(); }

    /// Per-track record indices, tracks ordered by first appearance,
    /// records within a track in frame order.
    std::vector<std::vector<size_t>> group_by_track() const;

    /// Throws inconsistent_track on mixed labels, frame gaps or
    /// non-contiguous time windows within one track_id.
    void validate_groups() const;
};

} // namespace evf
