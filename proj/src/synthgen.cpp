#include "evf/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>

#include "json.hpp"

#include "evf/codec.hpp"
#include "evf/rng.hpp"

namespace evf {

using nlohmann::json;

namespace {

// Recording layout: a 5x4 grid of cells, one track per cell, so tracks never
// overlap spatially. Recordings span a fixed 70 annotation frames (2.31 s)
// and every track is offset by a whole number of frames within that span.
constexpr size_t kGridCols = 5;
constexpr size_t kGridRows = 4;
constexpr size_t kCellsPerRecording = kGridCols * kGridRows;
constexpr uint16_t kCellMargin = 16;
constexpr uint64_t kRecordingFrames = 70;
constexpr double kTau = 6.283185307179586;

uint64_t fnv1a64(const std::string& text) {
    uint64_t h = 1469598103934665603ull;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

std::string hex64(uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

double class_extent_max(const SynthConfig& c, ClassLabel cls) {
    switch (cls) {
        case ClassLabel::background: return c.background_extent_max;
        case ClassLabel::bird: return c.bird_extent_max;
        case ClassLabel::insect: return c.insect_extent_max;
        case ClassLabel::drone: return c.drone_extent_max;
    }
    return 0.0;
}

struct Band {
    double lox, hix, loy, hiy;
};

uint16_t clamp_px(double v, uint16_t lo, uint16_t hi) {
    const long r = std::lround(v);
    if (r < long(lo)) return lo;
    if (r > long(hi)) return hi;
    return uint16_t(r);
}

} // namespace

void SynthConfig::validate() const {
    auto ordered = [](double lo, double hi, const char* what) {
        if (!(lo > 0.0) || !(hi >= lo))
            throw Error(Errc::schema_error, std::string(what) + " range is not positive/ordered");
    };
    ordered(insect_extent_min, insect_extent_max, "insect extent");
    ordered(insect_wingbeat_min_hz, insect_wingbeat_max_hz, "insect wingbeat");
    ordered(bird_extent_min, bird_extent_max, "bird extent");
    ordered(bird_flap_min_hz, bird_flap_max_hz, "bird flap");
    ordered(drone_extent_min, drone_extent_max, "drone extent");
    ordered(background_extent_min, background_extent_max, "background extent");
    if (!(insect_rate_per_px > 0.0) || !(bird_rate_per_px > 0.0) ||
        !(drone_rate_per_px > 0.0) || !(background_rate_per_px > 0.0))
        throw Error(Errc::schema_error, "emission rates must be positive");
    if (noise_rate < 0.0) throw Error(Errc::schema_error, "noise_rate must be non-negative");
    if (tracks_per_class == 0) throw Error(Errc::schema_error, "tracks_per_class must be >= 1");
    if (duration_min_us < 3 * kFrameUs)
        throw Error(Errc::schema_error, "duration_min_us is below 3 annotation frames");
    if (duration_max_us < duration_min_us)
        throw Error(Errc::schema_error, "duration_max_us is below duration_min_us");
    if (duration_max_us > kRecordingFrames * kFrameUs)
        throw Error(Errc::schema_error, "duration_max_us exceeds the recording span");
    if (!(train_frac > 0.0) || !(val_frac > 0.0) || !(train_frac + val_frac < 1.0))
        throw Error(Errc::schema_error, "split fractions must be positive with a test remainder");
    const double cw = double(width) / kGridCols - 2.0 * kCellMargin;
    const double ch = double(height) / kGridRows - 2.0 * kCellMargin;
    const double cap = std::min(cw, ch);
    for (ClassLabel cls : {ClassLabel::background, ClassLabel::bird, ClassLabel::insect,
                           ClassLabel::drone}) {
        if (class_extent_max(*this, cls) + 10.0 > cap)
            throw Error(Errc::schema_error,
                        std::string(class_name(cls)) +
                            " extent does not fit a recording grid cell at this geometry");
    }
}

TrackSample gen_track_in_region(ClassLabel cls, const SynthConfig& cfg, uint64_t seed,
                                const Region& region) {
    cfg.validate();
    if (region.w < 4 || region.h < 4)
        throw std::invalid_argument("gen_track_in_region: region too small");
    if (size_t(region.x0) + region.w > cfg.width || size_t(region.y0) + region.h > cfg.height)
        throw std::invalid_argument("gen_track_in_region: region exceeds the sensor");

    Rng rng(seed);
    const uint64_t min_frames = std::max<uint64_t>(3, (cfg.duration_min_us + kFrameUs - 1) / kFrameUs);
    const uint64_t max_frames = std::max(min_frames, cfg.duration_max_us / kFrameUs);
    const uint64_t n_frames = rng.range_u64(min_frames, max_frames);
    const uint64_t dur = n_frames * kFrameUs;
    const double dur_s = double(dur) * 1e-6;

    double extent = 0.0, rate_per_px = 0.0, osc_hz = 0.0;
    double osc_phase = 0.0;
    switch (cls) {
        case ClassLabel::insect:
            extent = rng.range(cfg.insect_extent_min, cfg.insect_extent_max);
            rate_per_px = cfg.insect_rate_per_px;
            osc_hz = rng.range(cfg.insect_wingbeat_min_hz, cfg.insect_wingbeat_max_hz);
            osc_phase = rng.range(0.0, kTau);
            break;
        case ClassLabel::bird:
            extent = rng.range(cfg.bird_extent_min, cfg.bird_extent_max);
            rate_per_px = cfg.bird_rate_per_px;
            osc_hz = rng.range(cfg.bird_flap_min_hz, cfg.bird_flap_max_hz);
            osc_phase = rng.range(0.0, kTau);
            break;
        case ClassLabel::drone:
            extent = rng.range(cfg.drone_extent_min, cfg.drone_extent_max);
            rate_per_px = cfg.drone_rate_per_px;
            break;
        case ClassLabel::background:
            extent = rng.range(cfg.background_extent_min, cfg.background_extent_max);
            rate_per_px = cfg.background_rate_per_px;
            break;
    }
    const double base_rate = rate_per_px * extent;

    const double inset = extent / 2.0 + 4.0;
    Band band{region.x0 + inset, region.x0 + region.w - 1 - inset,
              region.y0 + inset, region.y0 + region.h - 1 - inset};
    if (band.hix <= band.lox || band.hiy <= band.loy)
        throw std::invalid_argument("gen_track_in_region: extent does not fit the region");
    auto draw_in = [&](double lo, double hi) { return rng.range(lo, hi); };

    // Motion setup. Paths are closed forms of t except the insect walk,
    // which steps once per millisecond tick.
    double sx = draw_in(band.lox, band.hix), sy = draw_in(band.loy, band.hiy);
    double ex = sx, ey = sy;
    if (cls == ClassLabel::bird) {
        ex = draw_in(band.lox, band.hix);
        ey = draw_in(band.loy, band.hiy);
        const double dist = std::hypot(ex - sx, ey - sy);
        const double max_dist = 120.0 * dur_s;
        if (dist > max_dist && dist > 0.0) {
            ex = sx + (ex - sx) * max_dist / dist;
            ey = sy + (ey - sy) * max_dist / dist;
        }
    } else if (cls == ClassLabel::drone) {
        const double reach = std::min(12.0 * dur_s, 0.25 * (band.hix - band.lox));
        ex = std::clamp(sx + rng.range(-reach, reach), band.lox, band.hix);
        ey = std::clamp(sy + rng.range(-reach, reach), band.loy, band.hiy);
    }
    double wx = sx, wy = sy; // insect walk state
    double vx = 0.0, vy = 0.0;
    double walk_speed = 0.0;
    if (cls == ClassLabel::insect) {
        const double theta = rng.range(0.0, kTau);
        vx = std::cos(theta);
        vy = std::sin(theta);
        walk_speed = rng.range(25.0, 75.0);
    }

    const uint16_t qx_lo = region.x0, qx_hi = uint16_t(region.x0 + region.w - 1);
    const uint16_t qy_lo = region.y0, qy_hi = uint16_t(region.y0 + region.h - 1);

    std::vector<Event> events;
    events.reserve(size_t(base_rate * dur_s * 1.2) + 16);
    std::vector<std::pair<double, double>> frame_center(n_frames, {sx, sy});

    const uint64_t ticks = dur / 1000;
    for (uint64_t tick = 0; tick < ticks; ++tick) {
        const double t_s = double(tick) * 1e-3;
        double cx, cy;
        switch (cls) {
            case ClassLabel::insect: {
                const double churn = 6.0 * rng.normal() * std::sqrt(1e-3);
                const double c = std::cos(churn), s = std::sin(churn);
                const double nvx = vx * c - vy * s, nvy = vx * s + vy * c;
                vx = nvx;
                vy = nvy;
                wx += walk_speed * 1e-3 * vx;
                wy += walk_speed * 1e-3 * vy;
                if (wx < band.lox) { wx = 2 * band.lox - wx; vx = -vx; }
                if (wx > band.hix) { wx = 2 * band.hix - wx; vx = -vx; }
                if (wy < band.loy) { wy = 2 * band.loy - wy; vy = -vy; }
                if (wy > band.hiy) { wy = 2 * band.hiy - wy; vy = -vy; }
                cx = wx;
                cy = wy;
                break;
            }
            case ClassLabel::bird: {
                const double a = dur_s > 0.0 ? t_s / dur_s : 0.0;
                cx = sx + (ex - sx) * a;
                cy = sy + (ey - sy) * a + 0.12 * extent * std::sin(osc_phase + kTau * osc_hz * t_s);
                break;
            }
            case ClassLabel::drone: {
                const double a = dur_s > 0.0 ? t_s / dur_s : 0.0;
                cx = sx + (ex - sx) * a + 1.5 * std::sin(kTau * 1.3 * t_s);
                cy = sy + (ey - sy) * a + 1.5 * std::cos(kTau * 1.1 * t_s);
                break;
            }
            case ClassLabel::background:
            default:
                cx = sx;
                cy = sy;
                break;
        }
        const uint64_t frame = tick / 33;
        if (tick % 33 == 16 && frame < n_frames) frame_center[frame] = {cx, cy};

        double rate = base_rate;
        if (cls == ClassLabel::insect) rate *= 1.0 + 0.9 * std::sin(osc_phase + kTau * osc_hz * t_s);
        else if (cls == ClassLabel::bird) rate *= 1.0 + 0.5 * std::sin(osc_phase + kTau * osc_hz * t_s);
        if (rate < 0.0) rate = 0.0;

        const uint64_t k = rng.poisson(rate * 1e-3);
        for (uint64_t i = 0; i < k; ++i) {
            const uint64_t t_e = tick * 1000 + rng.below(1000);
            const double te_s = double(t_e) * 1e-6;
            double dx = 0.0, dy = 0.0;
            switch (cls) {
                case ClassLabel::insect: {
                    const double spread = 0.25 + 0.75 * std::abs(std::sin(osc_phase + kTau * osc_hz * te_s));
                    dx = (rng.unit() - 0.5) * extent * spread;
                    dy = (rng.unit() - 0.5) * extent * spread * 0.6;
                    break;
                }
                case ClassLabel::bird: {
                    dx = (rng.unit() - 0.5) * extent;
                    dy = (rng.unit() - 0.5) * extent *
                         (0.25 + 0.45 * std::abs(std::sin(osc_phase + kTau * osc_hz * te_s)));
                    break;
                }
                case ClassLabel::drone: {
                    if (rng.unit() < 0.8) {
                        const uint64_t q = rng.below(4);
                        const double px = (q & 1) ? 0.35 * extent : -0.35 * extent;
                        const double py = (q & 2) ? 0.35 * extent : -0.35 * extent;
                        const double r = 0.12 * extent * std::sqrt(rng.unit());
                        const double ang = rng.range(0.0, kTau);
                        dx = px + r * std::cos(ang);
                        dy = py + r * std::sin(ang);
                    } else {
                        dx = (rng.unit() - 0.5) * 0.5 * extent;
                        dy = (rng.unit() - 0.5) * 0.5 * extent;
                    }
                    break;
                }
                case ClassLabel::background:
                default:
                    dx = (rng.unit() - 0.5) * extent;
                    dy = (rng.unit() - 0.5) * extent;
                    break;
            }
            Event ev;
            ev.t = t_e;
            ev.x = clamp_px(cx + dx, qx_lo, qx_hi);
            ev.y = clamp_px(cy + dy, qy_lo, qy_hi);
            ev.p = rng.coin() ? Polarity::positive : Polarity::negative;
            events.push_back(ev);
        }
    }
    std::stable_sort(events.begin(), events.end(),
                     [](const Event& a, const Event& b) { return a.t < b.t; });

    // Per-frame floor: every annotation frame carries at least 4 events.
    std::vector<Event> fillers;
    {
        size_t lo = 0;
        for (uint64_t f = 0; f < n_frames; ++f) {
            const uint64_t t1 = (f + 1) * kFrameUs;
            size_t hi = lo;
            while (hi < events.size() && events[hi].t < t1) ++hi;
            for (size_t c = hi - lo; c < 4; ++c) {
                Event ev;
                ev.t = f * kFrameUs + 6000 * (c + 1);
                ev.x = clamp_px(frame_center[f].first, qx_lo, qx_hi);
                ev.y = clamp_px(frame_center[f].second, qy_lo, qy_hi);
                ev.p = (c % 2 == 0) ? Polarity::positive : Polarity::negative;
                fillers.push_back(ev);
            }
            lo = hi;
        }
    }
    if (!fillers.empty()) {
        events.insert(events.end(), fillers.begin(), fillers.end());
        std::stable_sort(events.begin(), events.end(),
                         [](const Event& a, const Event& b) { return a.t < b.t; });
    }

    // Tight per-frame boxes, widened by one pixel on degenerate axes so the
    // strict min < max invariant holds.
    TrackSample out;
    out.events = std::move(events);
    out.boxes.reserve(n_frames);
    size_t lo = 0;
    for (uint64_t f = 0; f < n_frames; ++f) {
        const uint64_t t1 = (f + 1) * kFrameUs;
        size_t hi = lo;
        uint16_t x0 = UINT16_MAX, x1 = 0, y0 = UINT16_MAX, y1 = 0;
        while (hi < out.events.size() && out.events[hi].t < t1) {
            const Event& ev = out.events[hi];
            x0 = std::min(x0, ev.x);
            x1 = std::max(x1, ev.x);
            y0 = std::min(y0, ev.y);
            y1 = std::max(y1, ev.y);
            ++hi;
        }
        if (x0 == x1) { if (x1 < qx_hi) x1 += 1; else x0 -= 1; }
        if (y0 == y1) { if (y1 < qy_hi) y1 += 1; else y0 -= 1; }
        BoxRecord box;
        box.track_id = 0;
        box.class_label = cls;
        box.frame_index = f;
        box.t_start = f * kFrameUs;
        box.t_end = t1;
        box.x_min = x0;
        box.x_max = x1;
        box.y_min = y0;
        box.y_max = y1;
        out.boxes.push_back(box);
        lo = hi;
    }
    return out;
}

TrackSample gen_track(ClassLabel cls, const SynthConfig& cfg, uint64_t seed) {
    Region region;
    region.x0 = kCellMargin;
    region.y0 = kCellMargin;
    region.w = uint16_t(cfg.width - 2 * kCellMargin);
    region.h = uint16_t(cfg.height - 2 * kCellMargin);
    return gen_track_in_region(cls, cfg, seed, region);
}

Region cell_region(const SynthConfig& cfg, size_t cell) {
    const uint16_t cw = uint16_t(cfg.width / kGridCols);
    const uint16_t ch = uint16_t(cfg.height / kGridRows);
    const size_t col = cell % kGridCols;
    const size_t row = cell / kGridCols;
    Region r;
    r.x0 = uint16_t(col * cw + kCellMargin);
    r.y0 = uint16_t(row * ch + kCellMargin);
    r.w = uint16_t(cw - 2 * kCellMargin);
    r.h = uint16_t(ch - 2 * kCellMargin);
    return r;
}

namespace {

std::string rec_name(size_t i, const char* ext) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "rec_%03zu.%s", i, ext);
    return buf;
}

} // namespace

DatasetManifest gen_dataset(const SynthConfig& cfg, const std::string& out_dir) {
    cfg.validate();
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw Error(Errc::io_error, "cannot create '" + out_dir + "': " + ec.message());

    DatasetManifest manifest;
    manifest.config = cfg;
    manifest.config_hash = hex64(fnv1a64(synth_config_to_json(cfg)));
    manifest.base_dir = out_dir;

    const size_t total = 4 * cfg.tracks_per_class;
    const size_t n_recordings = (total + kCellsPerRecording - 1) / kCellsPerRecording;
    const uint64_t rec_dur = kRecordingFrames * kFrameUs;
    manifest.tracks.resize(total);

    for (size_t rec = 0; rec < n_recordings; ++rec) {
        const size_t first = rec * kCellsPerRecording;
        const size_t last = std::min(total, first + kCellsPerRecording);

        std::vector<size_t> cells(kCellsPerRecording);
        for (size_t i = 0; i < cells.size(); ++i) cells[i] = i;
        Rng cell_rng(mix_seed(cfg.seed, "cells", rec));
        for (size_t i = cells.size(); i > 1; --i)
            std::swap(cells[i - 1], cells[cell_rng.below(i)]);

        std::vector<Event> events;
        AnnotationSet ann;
        for (size_t tid = first; tid < last; ++tid) {
            const auto cls = ClassLabel(tid % 4);
            const uint64_t tseed = mix_seed(cfg.seed, "track", tid);
            const size_t cell = cells[tid - first];
            TrackSample sample = gen_track_in_region(cls, cfg, tseed, cell_region(cfg, cell));
            const uint64_t n_frames = sample.boxes.size();
            Rng off_rng(mix_seed(cfg.seed, "offset", tid));
            const uint64_t offset = off_rng.below(kRecordingFrames - n_frames + 1) * kFrameUs;

            for (Event ev : sample.events) {
                ev.t += offset;
                events.push_back(ev);
            }
            for (BoxRecord box : sample.boxes) {
                box.track_id = tid;
                box.t_start += offset;
                box.t_end += offset;
                ann.records.push_back(box);
            }
            auto& mt = manifest.tracks[tid];
            mt.track_id = tid;
            mt.cls = cls;
            mt.recording = rec;
            mt.cell = cell;
            mt.seed = tseed;
            mt.offset_us = offset;
            mt.n_frames = n_frames;
        }

        const uint64_t noise_seed = mix_seed(cfg.seed, "noise", rec);
        Rng noise_rng(noise_seed);
        const double mean = cfg.noise_rate * double(cfg.width) * double(cfg.height) *
                            double(rec_dur) * 1e-6;
        const uint64_t n_noise = noise_rng.poisson(mean);
        events.reserve(events.size() + n_noise);
        for (uint64_t i = 0; i < n_noise; ++i) {
            Event ev;
            ev.t = noise_rng.below(rec_dur);
            ev.x = uint16_t(noise_rng.below(cfg.width));
            ev.y = uint16_t(noise_rng.below(cfg.height));
            ev.p = noise_rng.coin() ? Polarity::positive : Polarity::negative;
            events.push_back(ev);
        }
        std::stable_sort(events.begin(), events.end(),
                         [](const Event& a, const Event& b) { return a.t < b.t; });

        EventStream stream;
        stream.width = cfg.width;
        stream.height = cfg.height;
        stream.events = std::move(events);

        ManifestRecording mr;
        mr.evf_file = rec_name(rec, "evf");
        mr.ann_file = rec_name(rec, "jsonl");
        mr.noise_seed = noise_seed;
        mr.duration_us = rec_dur;
        write_binary_file(out_dir + "/" + mr.evf_file, encode_events(stream));
        write_text_file(out_dir + "/" + mr.ann_file, write_annotations(ann));
        manifest.recordings.push_back(std::move(mr));
    }

    // Stratified split by track identity: shuffle each class independently,
    // then cut at the configured fractions.
    for (size_t c = 0; c < 4; ++c) {
        std::vector<size_t> ids;
        for (size_t tid = c; tid < total; tid += 4) ids.push_back(tid);
        Rng split_rng(mix_seed(cfg.seed, "split", c));
        for (size_t i = ids.size(); i > 1; --i)
            std::swap(ids[i - 1], ids[split_rng.below(i)]);
        const size_t n = ids.size();
        size_t n_train = std::max<size_t>(1, size_t(cfg.train_frac * double(n)));
        n_train = std::min(n_train, n);
        size_t n_val = std::min(size_t(cfg.val_frac * double(n)), n - n_train);
        for (size_t i = 0; i < n; ++i)
            manifest.tracks[ids[i]].split =
                i < n_train ? "train" : (i < n_train + n_val ? "val" : "test");
    }

    write_text_file(out_dir + "/manifest.json", manifest_to_json(manifest));
    return manifest;
}

std::string manifest_to_json(const DatasetManifest& manifest) {
    json recs = json::array();
    for (const auto& r : manifest.recordings)
        recs.push_back({{"evf", r.evf_file},
                        {"annotations", r.ann_file},
                        {"noise_seed", r.noise_seed},
                        {"duration_us", r.duration_us}});
    json tracks = json::array();
    for (const auto& t : manifest.tracks)
        tracks.push_back({{"track_id", t.track_id},
                          {"class", class_name(t.cls)},
                          {"recording", t.recording},
                          {"cell", t.cell},
                          {"seed", t.seed},
                          {"offset_us", t.offset_us},
                          {"n_frames", t.n_frames},
                          {"split", t.split}});
    json j = {{"format", "evsynth1"},
              {"config", json::parse(synth_config_to_json(manifest.config))},
              {"config_hash", manifest.config_hash},
              {"recordings", recs},
              {"tracks", tracks}};
    return j.dump(2) + "\n";
}

namespace {

const json& require(const json& j, const char* key, const char* what) {
    auto it = j.find(key);
    if (it == j.end())
        throw Error(Errc::manifest_error, std::string(what) + " is missing key '" + key + "'");
    return *it;
}

uint64_t require_u64(const json& j, const char* key, const char* what) {
    const json& v = require(j, key, what);
    if (!v.is_number_unsigned())
        throw Error(Errc::manifest_error,
                    std::string(what) + " key '" + key + "' must be an unsigned integer");
    return v.get<uint64_t>();
}

std::string require_str(const json& j, const char* key, const char* what) {
    const json& v = require(j, key, what);
    if (!v.is_string())
        throw Error(Errc::manifest_error,
                    std::string(what) + " key '" + key + "' must be a string");
    return v.get<std::string>();
}

} // namespace

DatasetManifest read_manifest(const std::string& path) {
    const std::string text = read_text_file(path);
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded() || !j.is_object())
        throw Error(Errc::manifest_error, "'" + path + "' is not a JSON object");
    if (require_str(j, "format", "manifest") != "evsynth1")
        throw Error(Errc::manifest_error, "unsupported manifest format");

    DatasetManifest m;
    m.config = synth_config_from_json(require(j, "config", "manifest").dump());
    m.config_hash = require_str(j, "config_hash", "manifest");
    const json& recs = require(j, "recordings", "manifest");
    if (!recs.is_array()) throw Error(Errc::manifest_error, "recordings must be an array");
    for (const auto& r : recs) {
        ManifestRecording mr;
        mr.evf_file = require_str(r, "evf", "recording entry");
        mr.ann_file = require_str(r, "annotations", "recording entry");
        mr.noise_seed = require_u64(r, "noise_seed", "recording entry");
        mr.duration_us = require_u64(r, "duration_us", "recording entry");
        m.recordings.push_back(std::move(mr));
    }
    const json& tracks = require(j, "tracks", "manifest");
    if (!tracks.is_array()) throw Error(Errc::manifest_error, "tracks must be an array");
    for (const auto& t : tracks) {
        ManifestTrack mt;
        mt.track_id = require_u64(t, "track_id", "track entry");
        mt.cls = class_from_name(require_str(t, "class", "track entry"));
        mt.recording = require_u64(t, "recording", "track entry");
        mt.cell = require_u64(t, "cell", "track entry");
        mt.seed = require_u64(t, "seed", "track entry");
        mt.offset_us = require_u64(t, "offset_us", "track entry");
        mt.n_frames = require_u64(t, "n_frames", "track entry");
        mt.split = require_str(t, "split", "track entry");
        if (mt.split != "train" && mt.split != "val" && mt.split != "test")
            throw Error(Errc::manifest_error, "unknown split '" + mt.split + "'");
        if (mt.recording >= m.recordings.size())
            throw Error(Errc::manifest_error, "track references a missing recording");
        m.tracks.push_back(std::move(mt));
    }
    m.base_dir = std::filesystem::path(path).parent_path().string();
    if (m.base_dir.empty()) m.base_dir = ".";
    return m;
}

std::string synth_config_to_json(const SynthConfig& cfg) {
    json j = {{"width", cfg.width},
              {"height", cfg.height},
              {"tracks_per_class", cfg.tracks_per_class},
              {"duration_min_us", cfg.duration_min_us},
              {"duration_max_us", cfg.duration_max_us},
              {"noise_rate", cfg.noise_rate},
              {"seed", cfg.seed},
              {"train_frac", cfg.train_frac},
              {"val_frac", cfg.val_frac},
              {"insect_extent_min", cfg.insect_extent_min},
              {"insect_extent_max", cfg.insect_extent_max},
              {"insect_wingbeat_min_hz", cfg.insect_wingbeat_min_hz},
              {"insect_wingbeat_max_hz", cfg.insect_wingbeat_max_hz},
              {"insect_rate_per_px", cfg.insect_rate_per_px},
              {"bird_extent_min", cfg.bird_extent_min},
              {"bird_extent_max", cfg.bird_extent_max},
              {"bird_flap_min_hz", cfg.bird_flap_min_hz},
              {"bird_flap_max_hz", cfg.bird_flap_max_hz},
              {"bird_rate_per_px", cfg.bird_rate_per_px},
              {"drone_extent_min", cfg.drone_extent_min},
              {"drone_extent_max", cfg.drone_extent_max},
              {"drone_rate_per_px", cfg.drone_rate_per_px},
              {"background_extent_min", cfg.background_extent_min},
              {"background_extent_max", cfg.background_extent_max},
              {"background_rate_per_px", cfg.background_rate_per_px}};
    return j.dump();
}

SynthConfig synth_config_from_json(const std::string& text) {
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded() || !j.is_object())
        throw Error(Errc::schema_error, "synth config is not a JSON object");
    SynthConfig cfg;
    auto u16 = [&](const char* key, uint16_t& out) {
        if (!j.contains(key)) return;
        if (!j[key].is_number_unsigned() || j[key].get<uint64_t>() > UINT16_MAX)
            throw Error(Errc::schema_error, std::string("bad value for '") + key + "'");
        out = uint16_t(j[key].get<uint64_t>());
    };
    auto u64 = [&](const char* key, auto& out) {
        if (!j.contains(key)) return;
        if (!j[key].is_number_unsigned())
            throw Error(Errc::schema_error, std::string("bad value for '") + key + "'");
        out = j[key].get<uint64_t>();
    };
    auto num = [&](const char* key, double& out) {
        if (!j.contains(key)) return;
        if (!j[key].is_number())
            throw Error(Errc::schema_error, std::string("bad value for '") + key + "'");
        out = j[key].get<double>();
    };
    static const char* known[] = {
        "width", "height", "tracks_per_class", "duration_min_us", "duration_max_us",
        "noise_rate", "seed", "train_frac", "val_frac",
        "insect_extent_min", "insect_extent_max", "insect_wingbeat_min_hz",
        "insect_wingbeat_max_hz", "insect_rate_per_px",
        "bird_extent_min", "bird_extent_max", "bird_flap_min_hz", "bird_flap_max_hz",
        "bird_rate_per_px",
        "drone_extent_min", "drone_extent_max", "drone_rate_per_px",
        "background_extent_min", "background_extent_max", "background_rate_per_px"};
    for (const auto& [key, value] : j.items()) {
        (void)value;
        if (std::find_if(std::begin(known), std::end(known),
                         [&](const char* k) { return key == k; }) == std::end(known))
            throw Error(Errc::schema_error, "unknown key '" + key + "' in synth config");
    }
    u16("width", cfg.width);
    u16("height", cfg.height);
    u64("tracks_per_class", cfg.tracks_per_class);
    u64("duration_min_us", cfg.duration_min_us);
    u64("duration_max_us", cfg.duration_max_us);
    num("noise_rate", cfg.noise_rate);
    u64("seed", cfg.seed);
    num("train_frac", cfg.train_frac);
    num("val_frac", cfg.val_frac);
    num("insect_extent_min", cfg.insect_extent_min);
    num("insect_extent_max", cfg.insect_extent_max);
    num("insect_wingbeat_min_hz", cfg.insect_wingbeat_min_hz);
    num("insect_wingbeat_max_hz", cfg.insect_wingbeat_max_hz);
    num("insect_rate_per_px", cfg.insect_rate_per_px);
    num("bird_extent_min", cfg.bird_extent_min);
    num("bird_extent_max", cfg.bird_extent_max);
    num("bird_flap_min_hz", cfg.bird_flap_min_hz);
    num("bird_flap_max_hz", cfg.bird_flap_max_hz);
    num("bird_rate_per_px", cfg.bird_rate_per_px);
    num("drone_extent_min", cfg.drone_extent_min);
    num("drone_extent_max", cfg.drone_extent_max);
    num("drone_rate_per_px", cfg.drone_rate_per_px);
    num("background_extent_min", cfg.background_extent_min);
    num("background_extent_max", cfg.background_extent_max);
    num("background_rate_per_px", cfg.background_rate_per_px);
    cfg.validate();
    return cfg;
}

} // namespace evf
