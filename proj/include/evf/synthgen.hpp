#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "evf/events.hpp"

namespace evf {

/// Everything the generator needs: geometry, volume, noise, and the
/// per-class motion/emission parameters. A dataset is a pure function of
/// this struct.
struct SynthConfig {
    uint16_t width = kDefaultWidth;
    uint16_t height = kDefaultHeight;
    size_t tracks_per_class = 100;
    uint64_t duration_min_us = 99'000;
    uint64_t duration_max_us = 2'000'000;
    double noise_rate = 0.1; // events per pixel per second, scene-wide
    uint64_t seed = 42;
    double train_frac = 0.70;
    double val_frac = 0.15;

    // extents are object sizes in pixels; rates are events per second per
    // pixel of extent, tuned so a typical 33 ms chunk exceeds the usual
    // sampling targets and so drones sustain >= 3x the bird rate at equal
    // extent
    double insect_extent_min = 3.0, insect_extent_max = 10.0;
    double insect_wingbeat_min_hz = 100.0, insect_wingbeat_max_hz = 400.0;
    double insect_rate_per_px = 4000.0;
    double bird_extent_min = 10.0, bird_extent_max = 60.0;
    double bird_flap_min_hz = 2.0, bird_flap_max_hz = 10.0;
    double bird_rate_per_px = 800.0;
    double drone_extent_min = 20.0, drone_extent_max = 80.0;
    double drone_rate_per_px = 3200.0;
    double background_extent_min = 16.0, background_extent_max = 96.0;
    double background_rate_per_px = 600.0;

    void validate() const;
};

std::string synth_config_to_json(const SynthConfig& cfg);
SynthConfig synth_config_from_json(const std::string& text);

/// Pixel rectangle a generated track is confined to.
struct Region {
    uint16_t x0 = 0, y0 = 0;
    uint16_t w = 0, h = 0;
};

/// One generated track, times relative to the track's own start. Boxes are
/// the tight per-frame bounds of the events; every frame holds at least 4
/// events and at least 3 frames exist.
struct TrackSample {
    std::vector<Event> events;
    std::vector<BoxRecord> boxes;
};

TrackSample gen_track_in_region(ClassLabel cls, const SynthConfig& cfg, uint64_t seed,
                                const Region& region);

/// Same generator confined to the whole sensor minus a small margin.
TrackSample gen_track(ClassLabel cls, const SynthConfig& cfg, uint64_t seed);

/// The grid cell a dataset track was confined to, from its manifest cell
/// index. Together with the per-track seed this re-derives the track.
Region cell_region(const SynthConfig& cfg, size_t cell);

struct ManifestTrack {
    uint64_t track_id = 0;
    ClassLabel cls = ClassLabel::background;
    size_t recording = 0;
    size_t cell = 0;
    uint64_t seed = 0;
    uint64_t offset_us = 0;
    size_t n_frames = 0;
    std::string split; // "train" | "val" | "test"
};

struct ManifestRecording {
    std::string evf_file;
    std::string ann_file;
    uint64_t noise_seed = 0;
    uint64_t duration_us = 0;
};

struct DatasetManifest {
    SynthConfig config;
    std::string config_hash; // FNV-1a over the canonical config JSON, hex
    std::vector<ManifestRecording> recordings;
    std::vector<ManifestTrack> tracks;
    std::string base_dir; // directory of the manifest file, not serialized
};

/// Generates recordings (EVF1 + JSON-lines annotations), packs tracks into a
/// grid of cells so they never overlap spatially, overlays scene-wide noise,
/// assigns stratified per-track splits, and writes manifest.json into
/// out_dir. Byte-deterministic in the config.
DatasetManifest gen_dataset(const SynthConfig& cfg, const std::string& out_dir);

std::string manifest_to_json(const DatasetManifest& manifest);
DatasetManifest read_manifest(const std::string& path);

} // namespace evf
