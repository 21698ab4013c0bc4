#include "evf/trackstore.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <json.hpp>

#include "evf/codec.hpp"
#include "evf/rng.hpp"

namespace evf {

namespace {

/// Events of `stream` inside box space and [t0, t1), in time order.
std::vector<Event> crop_events(const EventStream& stream, const BoxRecord& box, uint64_t t0,
                               uint64_t t1) {
    auto lo = std::lower_bound(stream.events.begin(), stream.events.end(), t0,
                               [](const Event& e, uint64_t t) { return e.t < t; });
    auto hi = std::lower_bound(lo, stream.events.end(), t1,
                               [](const Event& e, uint64_t t) { return e.t < t; });
    std::vector<Event> out;
    for (auto it = lo; it != hi; ++it)
        if (box.contains_xy(it->x, it->y)) out.push_back(*it);
    return out;
}

} // namespace

AssemblyResult assemble_tracks(const EventStream& stream, const AnnotationSet& ann) {
    for (const BoxRecord& box : ann.records)
        if (box.x_max >= stream.width || box.y_max >= stream.height)
            throw Error(Errc::geometry_mismatch,
                        "track " + std::to_string(box.track_id) + " frame " +
                            std::to_string(box.frame_index) + " exceeds " +
                            std::to_string(stream.width) + "x" + std::to_string(stream.height));

    AssemblyResult result;
    for (const auto& group : ann.group_by_track()) {
        if (group.size() < kMinTrackFrames) {
            result.rejected.push_back({ann.records[group.front()].track_id, group.size()});
            continue;
        }
        Track track;
        track.track_id = ann.records[group.front()].track_id;
        track.class_label = ann.records[group.front()].class_label;
        track.boxes.reserve(group.size());
        for (size_t idx : group) {
            const BoxRecord& box = ann.records[idx];
            track.boxes.push_back(box);
            auto cropped = crop_events(stream, box, box.t_start, box.t_end);
            track.events.insert(track.events.end(), cropped.begin(), cropped.end());
        }
        result.tracks.push_back(std::move(track));
    }
    return result;
}

ChunkingResult chunk_track(const Track& track, uint64_t dt_us, size_t min_events) {
    if (dt_us == 0 || dt_us > kFrameUs || kFrameUs % dt_us != 0)
        throw Error(Errc::bad_delta, "dt must divide the " + std::to_string(kFrameUs) +
                                         "us annotation frame, got " + std::to_string(dt_us));

    ChunkingResult result;
    auto next = track.events.begin();
    for (const BoxRecord& box : track.boxes) {
        for (uint64_t t0 = box.t_start; t0 < box.t_end; t0 += dt_us) {
            Chunk chunk;
            chunk.track_id = track.track_id;
            chunk.class_label = track.class_label;
            chunk.t0 = t0;
            chunk.dt = dt_us;
            chunk.box = box;
            // Track events are time-ordered, so each window is the next run.
            while (next != track.events.end() && next->t < t0 + dt_us) {
                chunk.events.push_back(*next);
                ++next;
            }
            if (chunk.events.size() < min_events)
                ++result.dropped;
            else
                result.chunks.push_back(std::move(chunk));
        }
    }
    return result;
}

std::vector<Chunk> sample_negatives(const EventStream& stream, const AnnotationSet& ann,
                                    size_t count, uint64_t seed,
                                    const NegativeSamplingOptions& opts) {
    const uint64_t duration = stream.events.empty() ? 0 : stream.events.back().t;
    if (duration < opts.dt_us)
        throw std::invalid_argument("sample_negatives: stream shorter than one window");

    // Empirical (w, h) extent pairs of the annotated boxes; uniform fallback
    // range when the scene has no annotations.
    std::vector<std::pair<uint16_t, uint16_t>> extents;
    extents.reserve(ann.records.size());
    for (const BoxRecord& b : ann.records)
        extents.emplace_back(uint16_t(b.x_max - b.x_min), uint16_t(b.y_max - b.y_min));

    uint64_t next_track_id = 1;
    for (const BoxRecord& b : ann.records) next_track_id = std::max(next_track_id, b.track_id + 1);

    Rng rng(seed);
    std::vector<Chunk> out;
    out.reserve(count);
    for (size_t i = 0; i < count; ++i) {
        bool placed = false;
        for (size_t attempt = 0; attempt < opts.max_attempts_per_patch; ++attempt) {
            uint16_t w, h;
            if (!extents.empty()) {
                const auto& e = extents[size_t(rng.below(extents.size()))];
                w = e.first;
                h = e.second;
            } else {
                w = uint16_t(rng.range_u64(opts.fallback_min_extent, opts.fallback_max_extent));
                h = uint16_t(rng.range_u64(opts.fallback_min_extent, opts.fallback_max_extent));
            }
            if (w + 1 >= stream.width || h + 1 >= stream.height) continue;

            BoxRecord box;
            box.x_min = uint16_t(rng.below(uint64_t(stream.width) - w - 1));
            box.y_min = uint16_t(rng.below(uint64_t(stream.height) - h - 1));
            box.x_max = uint16_t(box.x_min + w);
            box.y_max = uint16_t(box.y_min + h);
            const uint64_t t0 = rng.below(duration - opts.dt_us + 1);
            box.t_start = t0;
            box.t_end = t0 + kFrameUs;
            box.class_label = ClassLabel::background;
            box.track_id = next_track_id + i;

            bool clear = true;
            for (const BoxRecord& a : ann.records) {
                const bool spatial = a.x_min <= box.x_max && box.x_min <= a.x_max &&
                                     a.y_min <= box.y_max && box.y_min <= a.y_max;
                const bool temporal = a.t_start < t0 + opts.dt_us && t0 < a.t_end;
                if (spatial && temporal) {
                    clear = false;
                    break;
                }
            }
            if (!clear) continue;

            Chunk chunk;
            chunk.track_id = box.track_id;
            chunk.class_label = ClassLabel::background;
            chunk.t0 = t0;
            chunk.dt = opts.dt_us;
            chunk.box = box;
            chunk.events = crop_events(stream, box, t0, t0 + opts.dt_us);
            out.push_back(std::move(chunk));
            placed = true;
            break;
        }
        if (!placed)
            throw Error(Errc::exhausted_retries,
                        "no clear patch after " + std::to_string(opts.max_attempts_per_patch) +
                            " attempts (patch " + std::to_string(i) + ")");
    }
    return out;
}

NormalizedPointSet normalize_chunk(const Chunk& chunk) {
    if (chunk.events.empty()) throw Error(Errc::empty_chunk, "cannot normalize an empty chunk");
    const double cx = 0.5 * (double(chunk.box.x_min) + double(chunk.box.x_max));
    const double cy = 0.5 * (double(chunk.box.y_min) + double(chunk.box.y_max));
    const double hw = 0.5 * double(chunk.box.x_max - chunk.box.x_min);
    const double hh = 0.5 * double(chunk.box.y_max - chunk.box.y_min);
    NormalizedPointSet out;
    out.points.reserve(chunk.events.size());
    for (const Event& e : chunk.events) {
        Point4 p;
        p.x = (double(e.x) - cx) / hw;
        p.y = (double(e.y) - cy) / hh;
        p.t = double(e.t - chunk.t0) / double(chunk.dt);
        p.p = e.p == Polarity::positive ? 1.0 : -1.0;
        out.points.push_back(p);
    }
    return out;
}

Point4 denormalize_point(const Chunk& chunk, const Point4& np) {
    const double cx = 0.5 * (double(chunk.box.x_min) + double(chunk.box.x_max));
    const double cy = 0.5 * (double(chunk.box.y_min) + double(chunk.box.y_max));
    const double hw = 0.5 * double(chunk.box.x_max - chunk.box.x_min);
    const double hh = 0.5 * double(chunk.box.y_max - chunk.box.y_min);
    Point4 out;
    out.x = cx + np.x * hw;
    out.y = cy + np.y * hh;
    out.t = double(chunk.t0) + np.t * double(chunk.dt);
    out.p = np.p;
    return out;
}

namespace {

using nlohmann::json;

json box_json(const BoxRecord& b) {
    return json{{"x_min", b.x_min}, {"y_min", b.y_min}, {"x_max", b.x_max}, {"y_max", b.y_max}};
}

} // namespace

void write_chunk_store(const std::string& index_path, const std::string& events_path,
                       const ChunkStore& store) {
    EventStream shell;
    shell.width = store.width;
    shell.height = store.height;

    std::string index;
    std::vector<uint8_t> blob;
    blob.reserve(kEvfHeaderBytes);
    uint64_t total_events = 0;
    for (const Chunk& c : store.chunks) total_events += c.events.size();

    // EVF1 header, then per-chunk record runs.
    blob.insert(blob.end(), {'E', 'V', 'F', '1'});
    auto put16 = [&](uint16_t v) {
        blob.push_back(uint8_t(v & 0xff));
        blob.push_back(uint8_t(v >> 8));
    };
    put16(store.width);
    put16(store.height);
    for (int i = 0; i < 8; ++i) blob.push_back(uint8_t((total_events >> (8 * i)) & 0xff));

    uint64_t chunk_id = 0;
    for (const Chunk& c : store.chunks) {
        json entry{{"chunk_id", chunk_id++},
                   {"track_id", c.track_id},
                   {"class", class_name(c.class_label)},
                   {"t0_us", c.t0},
                   {"box", box_json(c.box)},
                   {"evf_offset", blob.size()},
                   {"event_count", c.events.size()}};
        index += entry.dump();
        index += '\n';
        for (const Event& e : c.events) {
            for (int i = 0; i < 8; ++i) blob.push_back(uint8_t((e.t >> (8 * i)) & 0xff));
            put16(e.x);
            put16(e.y);
            blob.push_back(uint8_t(e.p));
        }
    }
    write_text_file(index_path, index);
    write_binary_file(events_path, blob);

    json meta{{"format", "evchunks1"},
              {"dt_us", store.dt_us},
              {"width", store.width},
              {"height", store.height},
              {"chunks", store.chunks.size()},
              {"events", total_events}};
    write_text_file(index_path + ".meta.json", meta.dump(2) + "\n");
}

ChunkStore read_chunk_store(const std::string& index_path, const std::string& events_path) {
    ChunkStore store;
    const json meta = json::parse(read_text_file(index_path + ".meta.json"));
    if (meta.value("format", "") != "evchunks1")
        throw Error(Errc::schema_error, "not a chunk store: " + index_path);
    store.dt_us = meta.at("dt_us").get<uint64_t>();
    store.width = meta.at("width").get<uint16_t>();
    store.height = meta.at("height").get<uint16_t>();

    const auto blob = read_binary_file(events_path);
    if (blob.size() < kEvfHeaderBytes || blob[0] != 'E' || blob[1] != 'V' || blob[2] != 'F' ||
        blob[3] != '1')
        throw Error(Errc::bad_magic, "chunk store events file lacks EVF1 header");

    const std::string text = read_text_file(index_path);
    std::istringstream in(text);
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json obj = json::parse(line, nullptr, false);
        if (obj.is_discarded())
            throw Error(Errc::schema_error, "line " + std::to_string(line_no) + ": invalid JSON");
        Chunk c;
        c.track_id = obj.at("track_id").get<uint64_t>();
        c.class_label = class_from_name(obj.at("class").get<std::string>());
        c.t0 = obj.at("t0_us").get<uint64_t>();
        c.dt = store.dt_us;
        const json& bj = obj.at("box");
        c.box.x_min = bj.at("x_min").get<uint16_t>();
        c.box.y_min = bj.at("y_min").get<uint16_t>();
        c.box.x_max = bj.at("x_max").get<uint16_t>();
        c.box.y_max = bj.at("y_max").get<uint16_t>();
        c.box.track_id = c.track_id;
        c.box.class_label = c.class_label;
        c.box.t_start = c.t0;
        c.box.t_end = c.t0 + kFrameUs;
        const uint64_t offset = obj.at("evf_offset").get<uint64_t>();
        const uint64_t n = obj.at("event_count").get<uint64_t>();
        if (offset < kEvfHeaderBytes || offset + n * kEvfRecordBytes > blob.size())
            throw Error(Errc::truncated, "chunk run at line " + std::to_string(line_no) +
                                             " exceeds the events file");
        const uint8_t* p = blob.data() + offset;
        uint64_t prev_t = 0;
        for (uint64_t i = 0; i < n; ++i, p += kEvfRecordBytes) {
            Event e;
            e.t = 0;
            for (int k = 7; k >= 0; --k) e.t = (e.t << 8) | p[k];
            e.x = uint16_t(p[8] | (uint16_t(p[9]) << 8));
            e.y = uint16_t(p[10] | (uint16_t(p[11]) << 8));
            if (p[12] > 1)
                throw Error(Errc::out_of_bounds, "polarity byte in chunk run");
            e.p = Polarity(p[12]);
            if (i > 0 && e.t < prev_t)
                throw Error(Errc::unordered, "timestamp decreases inside a chunk run");
            prev_t = e.t;
            c.events.push_back(e);
        }
        store.chunks.push_back(std::move(c));
    }
    return store;
}

} // namespace evf
