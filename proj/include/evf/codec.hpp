#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "evf/events.hpp"

namespace evf {

// EVF1 layout:
//   magic "EVF1" | width u16 LE | height u16 LE | count u64 LE
//   count x record { t u64 LE, x u16 LE, y u16 LE, p u8 (0=neg, 1=pos) }
inline constexpr size_t kEvfHeaderBytes = 16;
inline constexpr size_t kEvfRecordBytes = 13;

/// Byte-for-byte deterministic EVF1 encoding of a valid stream.
std::vector<uint8_t> encode_events(const EventStream& stream);

/// Strict EVF1 decode. Rejects rather than repairs: throws Error with
/// bad_magic, truncated, out_of_bounds or unordered.
EventStream decode_events(std::span<const uint8_t> bytes);

/// Annotation files are JSON lines, one BoxRecord per line. read validates
/// schema per line (schema_error carries the 1-based line number) and track
/// grouping (inconsistent_track). write emits the canonical form: records
/// sorted by (track_id, frame_index), keys alphabetical, one object per line.
AnnotationSet read_annotations(const std::string& text);
std::string write_annotations(const AnnotationSet& set);

/// Accumulation frame: cell (y, x) counts events with t in [t0, t1) at that
/// pixel. Debug visualization and annotation-frame rendering.
struct Frame {
    uint16_t width = 0;
    uint16_t height = 0;
    std::vector<uint32_t> counts; // row-major, height x width

    uint32_t& at(uint16_t x, uint16_t y) { return counts[size_t(y) * width + x]; }
    uint32_t at(uint16_t x, uint16_t y) const { return counts[size_t(y) * width + x]; }
};

Frame render_frame(const EventStream& stream, uint64_t t0, uint64_t t1);

/// Binary PGM (P5). Sample size is 1 byte when the peak count fits, else
/// 2 bytes big-endian; counts above 65535 saturate.
std::string write_pgm(const Frame& frame);

// File helpers shared by the tools and tests.
std::vector<uint8_t> read_binary_file(const std::string& path);
void write_binary_file(const std::string& path, std::span<const uint8_t> bytes);
std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

} // namespace evf
