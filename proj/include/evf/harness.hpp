#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "evf/models.hpp"
#include "evf/nn.hpp"
#include "evf/sampling.hpp"
#include "evf/synthgen.hpp"
#include "evf/trackstore.hpp"

namespace evf {

enum class Precision : uint8_t { f32 = 0, f64 = 1 };

const char* precision_name(Precision p);
Precision precision_from_name(const std::string& name);

struct TrainConfig {
    EncoderConfig encoder;
    SamplingSpec sampling;
    uint64_t dt_us = kFrameUs;
    size_t min_chunk_events = kDefaultMinChunkEvents;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    size_t batch_size = 32;
    size_t epochs = 10;
    bool class_weighting = false;
    Precision precision = Precision::f64;
    uint64_t seed = 0;

    void validate() const;
};

std::string train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const std::string& text);

/// One evaluation result. confusion and per_class_recall are at the
/// protocol's granularity (chunks or tracks); rows are truth, columns are
/// prediction, index order background/bird/insect/drone. Both accuracies are
/// always filled since one inference pass produces both.
struct EvalReport {
    std::string protocol; // "chunk" | "track"
    double chunk_accuracy = 0.0;
    double track_accuracy = 0.0;
    std::array<double, kNumClasses> per_class_recall{};
    std::array<std::array<uint64_t, kNumClasses>, kNumClasses> confusion{};
    uint64_t total = 0;
    uint64_t dropped_chunks = 0;
    uint64_t tie_count = 0;
};

std::string eval_report_to_json(const EvalReport& report);
EvalReport eval_report_from_json(const std::string& text);

/// Rendered summary table (accuracies + per-class recall).
std::string report_render(const EvalReport& report);
/// Confusion matrix as CSV with a header row/column of class names.
std::string confusion_csv(const EvalReport& report);
std::array<std::array<uint64_t, kNumClasses>, kNumClasses> parse_confusion_csv(
    const std::string& text);

/// A chunk ready for the model: sampled, normalized, cached as float32.
/// chunk_ordinal is the chunk's index within its track, the stable half of
/// every derived per-chunk seed.
struct PreparedChunk {
    uint64_t track_id = 0;
    size_t chunk_ordinal = 0;
    ClassLabel label = ClassLabel::background;
    std::vector<float> pts; // target_n x 4 row-major
};

struct PreparedSet {
    std::vector<PreparedChunk> chunks;
    std::vector<std::pair<uint64_t, ClassLabel>> tracks; // every track of the split
    std::vector<std::vector<size_t>> track_chunks;       // chunk indices per track
    uint64_t dropped_chunks = 0;
};

/// Loads the manifest's recordings, assembles and chunks the split's tracks,
/// and samples every chunk to the config's target size.
PreparedSet prepare_split(const DatasetManifest& manifest, const TrainConfig& cfg,
                          const std::string& split);

struct TrainResult {
    nn::Checkpoint checkpoint; // best validation epoch
    std::vector<double> train_accuracy;
    std::vector<double> val_accuracy;
    std::vector<double> train_loss;
    size_t best_epoch = 0;
};

/// Deterministic training run: fixed per-epoch permutations, sequential
/// per-chunk gradient accumulation, Adam updates, best-val checkpointing.
TrainResult train(const DatasetManifest& manifest, const TrainConfig& cfg);

/// Parses the TrainConfig embedded in a checkpoint's metadata.
TrainConfig checkpoint_train_config(const nn::Checkpoint& ckpt);

struct ChunkPrediction {
    uint64_t track_id = 0;
    ClassLabel truth = ClassLabel::background;
    size_t predicted = 0;
    std::array<double, kNumClasses> probs{};
};

/// Majority vote over one track's chunk predictions: the modal predicted
/// class; ties broken by the highest summed softmax probability among the
/// tied classes, then the lowest class index. An empty vector votes the
/// lowest class. Returns the winner and whether a tie occurred.
std::pair<size_t, bool> vote_track(const std::vector<ChunkPrediction>& chunks);

/// Everything one inference pass over a split yields; both eval protocols
/// are pure folds over `predictions`.
struct EvalOutcome {
    EvalReport chunk_report;
    EvalReport track_report;
    std::vector<ChunkPrediction> predictions;
};

EvalOutcome evaluate(const nn::Checkpoint& ckpt, const DatasetManifest& manifest,
                     const std::string& split, const TrainConfig& cfg);
EvalReport eval_chunks(const nn::Checkpoint& ckpt, const DatasetManifest& manifest,
                       const std::string& split, const TrainConfig& cfg);
EvalReport eval_tracks(const nn::Checkpoint& ckpt, const DatasetManifest& manifest,
                       const std::string& split, const TrainConfig& cfg);

/// Per-track predictions for one stream + annotation pair, one JSON object
/// per line: {track_id, class, confidence, chunk_probs}.
std::string predict_jsonl(const nn::Checkpoint& ckpt, const TrainConfig& cfg,
                          const EventStream& stream, const AnnotationSet& ann);

} // namespace evf
