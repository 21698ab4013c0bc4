#pragma once

#include <filesystem>
#include <string>
#include <unistd.h>

#include "evf/events.hpp"
#include "evf/rng.hpp"
#include "evf/synthgen.hpp"

namespace evf::test {

/// Random sorted stream with the given event count.
inline EventStream random_stream(Rng& rng, size_t count, uint16_t width = 64,
                                 uint16_t height = 48) {
    EventStream s;
    s.width = width;
    s.height = height;
    s.events.resize(count);
    uint64_t t = 0;
    for (auto& ev : s.events) {
        t += rng.below(200);
        ev.t = t;
        ev.x = uint16_t(rng.below(width));
        ev.y = uint16_t(rng.below(height));
        ev.p = rng.coin() ? Polarity::positive : Polarity::negative;
    }
    return s;
}

/// Fresh unique directory under the system temp root, removed by the caller
/// or left for inspection; unique per call within a process.
inline std::string temp_dir(const std::string& tag) {
    static uint64_t counter = 0;
    const auto dir = std::filesystem::temp_directory_path() /
                     ("evf_" + tag + "_" + std::to_string(::getpid()) + "_" +
                      std::to_string(counter++));
    std::filesystem::create_directories(dir);
    return dir.string();
}

/// Small sensor + short tracks so dataset-level tests stay fast. Extents are
/// shrunk to fit the smaller grid cells.
inline SynthConfig small_synth_config(size_t tracks_per_class = 5, uint64_t seed = 7) {
    SynthConfig cfg;
    cfg.width = 640;
    cfg.height = 360;
    cfg.tracks_per_class = tracks_per_class;
    cfg.duration_min_us = 99'000;
    cfg.duration_max_us = 400'000;
    cfg.noise_rate = 0.02;
    cfg.seed = seed;
    cfg.insect_extent_min = 3.0;
    cfg.insect_extent_max = 8.0;
    cfg.bird_extent_min = 8.0;
    cfg.bird_extent_max = 20.0;
    cfg.drone_extent_min = 12.0;
    cfg.drone_extent_max = 30.0;
    cfg.background_extent_min = 12.0;
    cfg.background_extent_max = 40.0;
    return cfg;
}

} // namespace evf::test
