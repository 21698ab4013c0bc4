#pragma once

#include <cstdint>
#include <vector>

#include "evf/events.hpp"

namespace evf {

/// A labeled sequence of boxes sharing one identity, plus the events those
/// boxes enclose. Only tracks spanning at least 3 annotation frames are valid.
struct Track {
    uint64_t track_id = 0;
    ClassLabel class_label = ClassLabel::background;
    std::vector<BoxRecord> boxes;  // frame order
    std::vector<Event> events;     // time order, each inside its frame's box

    size_t frame_count() const { return boxes.size(); }
    size_t event_count() const { return events.size(); }
};

inline constexpr size_t kMinTrackFrames = 3;
inline constexpr size_t kDefaultMinChunkEvents = 8;

/// The events of one track within one fixed-duration window.
struct Chunk {
    uint64_t track_id = 0;
    ClassLabel class_label = ClassLabel::background;
    uint64_t t0 = 0;
    uint64_t dt = kFrameUs;
    BoxRecord box; // the enclosing annotation frame's box
    std::vector<Event> events;
};

struct Point4 {
    double x = 0, y = 0, t = 0, p = 0;

    friend bool operator==(const Point4&, const Point4&) = default;
};

/// Chunk events mapped to the unit frame: x,y in [-1,1] relative to the box
/// center and half-extent, t in [0,1) within the window, p in {-1,+1}.
struct NormalizedPointSet {
    std::vector<Point4> points;

    size_t count() const { return points.size(); }
    bool empty() const { return points.empty(); }
};

struct RejectedTrack {
    uint64_t track_id = 0;
    size_t frame_count = 0;
};

struct AssemblyResult {
    std::vector<Track> tracks;
    std::vector<RejectedTrack> rejected; // tracks shorter than kMinTrackFrames
};

/// Build one Track per track_id, cropping the stream per box. Tracks shorter
/// than 3 frames are rejected and reported, not returned.
/// Throws geometry_mismatch when a box exceeds the stream geometry.
AssemblyResult assemble_tracks(const EventStream& stream, const AnnotationSet& ann);

struct ChunkingResult {
    std::vector<Chunk> chunks;
    size_t dropped = 0; // chunks below the min_events floor
};

/// Slice a track into chunks aligned to its annotation frames. dt must be
/// kFrameUs or a divisor of it (several chunks per frame); throws bad_delta
/// otherwise. Chunks with fewer than min_events events are dropped and counted.
ChunkingResult chunk_track(const Track& track, uint64_t dt_us,
                           size_t min_events = kDefaultMinChunkEvents);

struct NegativeSamplingOptions {
    uint64_t dt_us = kFrameUs;
    size_t max_attempts_per_patch = 1000;
    // Patch extent range when there are no annotated boxes to mimic.
    uint16_t fallback_min_extent = 16;
    uint16_t fallback_max_extent = 96;
};

/// Draw `count` background chunks: random boxes (sizes drawn from the
/// annotated-box size distribution) over random 33ms windows, each with zero
/// spatio-temporal intersection with every annotation. Deterministic given
/// seed. Throws exhausted_retries when the scene is too crowded and
/// invalid_argument when the stream is shorter than one window.
std::vector<Chunk> sample_negatives(const EventStream& stream, const AnnotationSet& ann,
                                    size_t count, uint64_t seed,
                                    const NegativeSamplingOptions& opts = {});

/// Throws empty_chunk on a chunk with no events.
NormalizedPointSet normalize_chunk(const Chunk& chunk);

/// Inverse of normalize_chunk for one point (exact up to rounding).
Point4 denormalize_point(const Chunk& chunk, const Point4& np);

// ---- Chunk store files -----------------------------------------------------
//
// A sliced recording is stored as a JSON-lines index plus one file of cropped
// events in the EVF1 header/record layout. Records are grouped per chunk (each
// index entry points at a contiguous run via a byte offset), so timestamps are
// monotone within a run but reset between runs; read_chunk_store is the
// matching reader and validates per run.

struct ChunkIndexEntry {
    uint64_t chunk_id = 0;
    uint64_t track_id = 0;
    ClassLabel class_label = ClassLabel::background;
    uint64_t t0_us = 0;
    BoxRecord box;
    uint64_t evf_offset = 0;  // byte offset of the first record in the events file
    uint64_t event_count = 0;
};

struct ChunkStore {
    uint16_t width = kDefaultWidth;
    uint16_t height = kDefaultHeight;
    uint64_t dt_us = kFrameUs;
    std::vector<Chunk> chunks;
};

void write_chunk_store(const std::string& index_path, const std::string& events_path,
                       const ChunkStore& store);
ChunkStore read_chunk_store(const std::string& index_path, const std::string& events_path);

} // namespace evf
