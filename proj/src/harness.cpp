#include "evf/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <sstream>
#include <unordered_map>

#include "evf/codec.hpp"

#include "json.hpp"

namespace evf {

using nlohmann::json;

const char* precision_name(Precision p) {
    return p == Precision::f32 ? "f32" : "f64";
}

Precision precision_from_name(const std::string& name) {
    if (name == "f32") return Precision::f32;
    if (name == "f64") return Precision::f64;
    throw Error(Errc::schema_error, "unknown precision '" + name + "'");
}

void TrainConfig::validate() const {
    encoder.validate();
    if (sampling.target_n == 0)
        throw Error(Errc::schema_error, "train config: target_n must be positive");
    if (dt_us == 0) throw Error(Errc::schema_error, "train config: dt_us must be positive");
    if (!(lr > 0.0)) throw Error(Errc::schema_error, "train config: lr must be positive");
    if (!(beta1 >= 0.0 && beta1 < 1.0))
        throw Error(Errc::schema_error, "train config: beta1 must lie in [0, 1)");
    if (!(beta2 >= 0.0 && beta2 < 1.0))
        throw Error(Errc::schema_error, "train config: beta2 must lie in [0, 1)");
    if (!(eps > 0.0)) throw Error(Errc::schema_error, "train config: eps must be positive");
    if (batch_size == 0)
        throw Error(Errc::schema_error, "train config: batch_size must be positive");
    if (epochs == 0) throw Error(Errc::schema_error, "train config: epochs must be positive");
}

std::string train_config_to_json(const TrainConfig& cfg) {
    json j;
    j["encoder"] = json::parse(encoder_config_to_json(cfg.encoder));
    j["sampling"] = {{"strategy", sampling_name(cfg.sampling.strategy)},
                     {"target_n", cfg.sampling.target_n},
                     {"seed", cfg.sampling.seed}};
    j["dt_us"] = cfg.dt_us;
    j["min_chunk_events"] = cfg.min_chunk_events;
    j["lr"] = cfg.lr;
    j["beta1"] = cfg.beta1;
    j["beta2"] = cfg.beta2;
    j["eps"] = cfg.eps;
    j["batch_size"] = cfg.batch_size;
    j["epochs"] = cfg.epochs;
    j["class_weighting"] = cfg.class_weighting;
    j["precision"] = precision_name(cfg.precision);
    j["seed"] = cfg.seed;
    return j.dump(2) + "\n";
}

namespace {

void check_keys(const json& j, const char* what, std::initializer_list<const char*> known) {
    for (const auto& [key, value] : j.items()) {
        (void)value;
        if (std::find_if(known.begin(), known.end(),
                         [&](const char* k) { return key == k; }) == known.end())
            throw Error(Errc::schema_error,
                        std::string(what) + ": unknown key '" + key + "'");
    }
}

uint64_t require_u64(const json& j, const char* what, const char* key) {
    if (!j.contains(key) || !j.at(key).is_number_unsigned())
        throw Error(Errc::schema_error,
                    std::string(what) + ": '" + key + "' must be an unsigned integer");
    return j.at(key).get<uint64_t>();
}

double require_num(const json& j, const char* what, const char* key) {
    if (!j.contains(key) || !j.at(key).is_number())
        throw Error(Errc::schema_error, std::string(what) + ": '" + key + "' must be a number");
    return j.at(key).get<double>();
}

std::string require_str(const json& j, const char* what, const char* key) {
    if (!j.contains(key) || !j.at(key).is_string())
        throw Error(Errc::schema_error, std::string(what) + ": '" + key + "' must be a string");
    return j.at(key).get<std::string>();
}

bool require_bool(const json& j, const char* what, const char* key) {
    if (!j.contains(key) || !j.at(key).is_boolean())
        throw Error(Errc::schema_error, std::string(what) + ": '" + key + "' must be a boolean");
    return j.at(key).get<bool>();
}

} // namespace

TrainConfig train_config_from_json(const std::string& text) {
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded() || !j.is_object())
        throw Error(Errc::schema_error, "train config: not a JSON object");
    check_keys(j, "train config",
               {"encoder", "sampling", "dt_us", "min_chunk_events", "lr", "beta1", "beta2",
                "eps", "batch_size", "epochs", "class_weighting", "precision", "seed"});
    TrainConfig cfg;
    if (!j.contains("encoder") || !j.at("encoder").is_object())
        throw Error(Errc::schema_error, "train config: 'encoder' must be an object");
    cfg.encoder = encoder_config_from_json(j.at("encoder").dump());
    if (!j.contains("sampling") || !j.at("sampling").is_object())
        throw Error(Errc::schema_error, "train config: 'sampling' must be an object");
    const json& s = j.at("sampling");
    check_keys(s, "train config sampling", {"strategy", "target_n", "seed"});
    cfg.sampling.strategy = sampling_from_name(require_str(s, "train config sampling", "strategy"));
    cfg.sampling.target_n = size_t(require_u64(s, "train config sampling", "target_n"));
    cfg.sampling.seed = require_u64(s, "train config sampling", "seed");
    cfg.dt_us = require_u64(j, "train config", "dt_us");
    cfg.min_chunk_events = size_t(require_u64(j, "train config", "min_chunk_events"));
    cfg.lr = require_num(j, "train config", "lr");
    cfg.beta1 = require_num(j, "train config", "beta1");
    cfg.beta2 = require_num(j, "train config", "beta2");
    cfg.eps = require_num(j, "train config", "eps");
    cfg.batch_size = size_t(require_u64(j, "train config", "batch_size"));
    cfg.epochs = size_t(require_u64(j, "train config", "epochs"));
    cfg.class_weighting = require_bool(j, "train config", "class_weighting");
    cfg.precision = precision_from_name(require_str(j, "train config", "precision"));
    cfg.seed = require_u64(j, "train config", "seed");
    cfg.validate();
    return cfg;
}

// ---- Split preparation ------------------------------------------------------

namespace {

uint64_t chunk_sampling_seed(const TrainConfig& cfg, uint64_t track_id, size_t ordinal) {
    return mix_seed(mix_seed(cfg.sampling.seed, "sample", track_id), uint64_t(ordinal));
}

uint64_t chunk_grouping_seed(const TrainConfig& cfg, uint64_t track_id, size_t ordinal) {
    return mix_seed(mix_seed(cfg.seed, "group", track_id), uint64_t(ordinal));
}

} // namespace

PreparedSet prepare_split(const DatasetManifest& manifest, const TrainConfig& cfg,
                          const std::string& split) {
    cfg.validate();
    if (split != "train" && split != "val" && split != "test")
        throw Error(Errc::manifest_error, "unknown split '" + split + "'");

    // Manifest order within each recording; recordings visited in file order
    // so every recording is decoded exactly once.
    std::vector<std::vector<const ManifestTrack*>> per_rec(manifest.recordings.size());
    for (const auto& mt : manifest.tracks) {
        if (mt.split != split) continue;
        if (mt.recording >= manifest.recordings.size())
            throw Error(Errc::manifest_error, "track " + std::to_string(mt.track_id) +
                                                  " references a missing recording");
        per_rec[mt.recording].push_back(&mt);
    }

    PreparedSet out;
    const std::filesystem::path base(manifest.base_dir);
    for (size_t rec = 0; rec < manifest.recordings.size(); ++rec) {
        if (per_rec[rec].empty()) continue;
        const auto& mr = manifest.recordings[rec];
        const EventStream stream = decode_events(read_binary_file((base / mr.evf_file).string()));
        const AnnotationSet ann = read_annotations(read_text_file((base / mr.ann_file).string()));
        const AssemblyResult assembled = assemble_tracks(stream, ann);

        std::unordered_map<uint64_t, const Track*> by_id;
        for (const auto& t : assembled.tracks) by_id[t.track_id] = &t;

        for (const ManifestTrack* mt : per_rec[rec]) {
            auto it = by_id.find(mt->track_id);
            if (it == by_id.end())
                throw Error(Errc::manifest_error, "track " + std::to_string(mt->track_id) +
                                                      " missing from " + mr.ann_file);
            const Track& track = *it->second;
            if (track.class_label != mt->cls)
                throw Error(Errc::manifest_error, "track " + std::to_string(mt->track_id) +
                                                      " class disagrees with the manifest");
            const ChunkingResult sliced =
                chunk_track(track, cfg.dt_us, cfg.min_chunk_events);
            out.dropped_chunks += sliced.dropped;
            out.tracks.emplace_back(track.track_id, track.class_label);
            out.track_chunks.emplace_back();
            for (size_t c = 0; c < sliced.chunks.size(); ++c) {
                SamplingSpec spec = cfg.sampling;
                spec.seed = chunk_sampling_seed(cfg, track.track_id, c);
                const NormalizedPointSet sampled =
                    apply_sampling(spec, normalize_chunk(sliced.chunks[c]));
                PreparedChunk pc;
                pc.track_id = track.track_id;
                pc.chunk_ordinal = c;
                pc.label = track.class_label;
                pc.pts.reserve(sampled.count() * 4);
                for (const auto& p : sampled.points) {
                    pc.pts.push_back(float(p.x));
                    pc.pts.push_back(float(p.y));
                    pc.pts.push_back(float(p.t));
                    pc.pts.push_back(float(p.p));
                }
                out.track_chunks.back().push_back(out.chunks.size());
                out.chunks.push_back(std::move(pc));
            }
        }
    }
    return out;
}

// ---- Forward pass -----------------------------------------------------------

namespace {

template <typename T>
nn::TensorPtr<T> tensor_from_cache(const PreparedChunk& pc) {
    const size_t n = pc.pts.size() / 4;
    auto x = nn::make_tensor<T>({n, size_t(4)});
    for (size_t i = 0; i < pc.pts.size(); ++i) x->value[i] = T(pc.pts[i]);
    return x;
}

NormalizedPointSet nps_from_cache(const PreparedChunk& pc) {
    NormalizedPointSet ps;
    ps.points.resize(pc.pts.size() / 4);
    for (size_t i = 0; i < ps.points.size(); ++i) {
        ps.points[i] = {double(pc.pts[i * 4 + 0]), double(pc.pts[i * 4 + 1]),
                        double(pc.pts[i * 4 + 2]), double(pc.pts[i * 4 + 3])};
    }
    return ps;
}

/// Grouping plans are a pure function of the cached points, so they are
/// rebuilt per forward pass instead of being held for the whole dataset.
template <typename T>
nn::TensorPtr<T> forward_chunk(nn::Tape<T>& tape, const nn::ParamStore<T>& params,
                               const TrainConfig& cfg, const PreparedChunk& pc) {
    auto pts = tensor_from_cache<T>(pc);
    if (cfg.encoder.variant == EncoderVariant::flat)
        return forward_logits<T>(tape, params, cfg.encoder, pts, nullptr);
    const GroupingPlan plan =
        build_grouping(nps_from_cache(pc), cfg.encoder,
                       chunk_grouping_seed(cfg, pc.track_id, pc.chunk_ordinal));
    return forward_logits<T>(tape, params, cfg.encoder, pts, &plan);
}

template <typename T>
size_t argmax_row(const nn::TensorPtr<T>& logits) {
    size_t best = 0;
    for (size_t j = 1; j < logits->size(); ++j)
        if (logits->value[j] > logits->value[best]) best = j;
    return best;
}

template <typename T>
std::array<double, kNumClasses> softmax_probs(const nn::TensorPtr<T>& logits) {
    std::array<double, kNumClasses> p{};
    double mx = double(logits->value[0]);
    for (size_t j = 1; j < kNumClasses; ++j) mx = std::max(mx, double(logits->value[j]));
    double sum = 0.0;
    for (size_t j = 0; j < kNumClasses; ++j) {
        p[j] = std::exp(double(logits->value[j]) - mx);
        sum += p[j];
    }
    for (auto& v : p) v /= sum;
    return p;
}

std::vector<double> class_weights_for(const PreparedSet& set, bool enabled) {
    std::vector<double> w(kNumClasses, 1.0);
    if (!enabled) return w;
    std::array<uint64_t, kNumClasses> count{};
    for (const auto& pc : set.chunks) count[size_t(pc.label)] += 1;
    for (size_t c = 0; c < kNumClasses; ++c)
        w[c] = count[c] == 0
                   ? 0.0
                   : double(set.chunks.size()) / (double(kNumClasses) * double(count[c]));
    return w;
}

std::string checkpoint_meta(const TrainConfig& cfg, uint64_t adam_step, size_t best_epoch,
                            double val_accuracy) {
    json j;
    j["format"] = "evfly-ckpt-1";
    j["train_config"] = json::parse(train_config_to_json(cfg));
    j["adam_step"] = adam_step;
    j["best_epoch"] = best_epoch;
    j["val_accuracy"] = val_accuracy;
    return j.dump();
}

// ---- Training ---------------------------------------------------------------

template <typename T>
double split_accuracy(const nn::ParamStore<T>& params, const TrainConfig& cfg,
                      const PreparedSet& set) {
    if (set.chunks.empty()) return 0.0;
    nn::Tape<T> tape;
    tape.set_recording(false);
    uint64_t hits = 0;
    for (const auto& pc : set.chunks) {
        auto logits = forward_chunk<T>(tape, params, cfg, pc);
        if (argmax_row(logits) == size_t(pc.label)) hits += 1;
    }
    return double(hits) / double(set.chunks.size());
}

template <typename T>
TrainResult train_impl(const DatasetManifest& manifest, const TrainConfig& cfg) {
    const PreparedSet train_set = prepare_split(manifest, cfg, "train");
    const PreparedSet val_set = prepare_split(manifest, cfg, "val");
    if (train_set.chunks.empty())
        throw Error(Errc::empty_input, "train: the train split has no usable chunks");

    nn::ParamStore<T> params;
    create_params<T>(params, cfg.encoder);
    init_params<T>(params, cfg.seed);
    nn::AdamState<T> adam;

    const std::vector<double> weights = class_weights_for(train_set, cfg.class_weighting);

    TrainResult result;
    double best_val = -1.0;
    std::vector<size_t> order(train_set.chunks.size());
    for (size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (size_t i = 0; i < order.size(); ++i) order[i] = i;
        Rng perm_rng(mix_seed(cfg.seed, "epoch", uint64_t(epoch)));
        for (size_t i = 0; i + 1 < order.size(); ++i)
            std::swap(order[i], order[i + size_t(perm_rng.below(uint64_t(order.size() - i)))]);

        uint64_t hits = 0;
        double epoch_loss = 0.0;
        size_t batches = 0;
        for (size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const size_t stop = std::min(order.size(), start + cfg.batch_size);
            double wsum = 0.0;
            for (size_t k = start; k < stop; ++k)
                wsum += weights[size_t(train_set.chunks[order[k]].label)];
            if (wsum == 0.0) continue;

            params.zero_grad();
            double batch_loss = 0.0;
            for (size_t k = start; k < stop; ++k) {
                const PreparedChunk& pc = train_set.chunks[order[k]];
                nn::Tape<T> tape;
                auto logits = forward_chunk<T>(tape, params, cfg, pc);
                if (argmax_row(logits) == size_t(pc.label)) hits += 1;
                auto nll = nn::cross_entropy<T>(tape, logits, {size_t(pc.label)});
                if (!std::isfinite(double(nll->value[0])))
                    throw Error(Errc::diverged_loss,
                                "train: non-finite loss at epoch " + std::to_string(epoch) +
                                    ", batch " + std::to_string(batches));
                auto loss =
                    nn::scale<T>(tape, nll, T(weights[size_t(pc.label)] / wsum));
                batch_loss += double(loss->value[0]);
                tape.backward(loss);
            }
            nn::adam_step<T>(params, adam, T(cfg.lr), T(cfg.beta1), T(cfg.beta2), T(cfg.eps));
            epoch_loss += batch_loss;
            batches += 1;
        }

        result.train_accuracy.push_back(double(hits) / double(train_set.chunks.size()));
        result.train_loss.push_back(batches ? epoch_loss / double(batches) : 0.0);
        const double val_acc = val_set.chunks.empty()
                                   ? result.train_accuracy.back()
                                   : split_accuracy<T>(params, cfg, val_set);
        result.val_accuracy.push_back(val_acc);

        if (val_acc > best_val) {
            best_val = val_acc;
            result.best_epoch = epoch;
            result.checkpoint = nn::Checkpoint{};
            result.checkpoint.meta_json = checkpoint_meta(cfg, adam.step, epoch, val_acc);
            nn::store_state<T>(result.checkpoint, params, adam);
        }
    }
    return result;
}

} // namespace

TrainResult train(const DatasetManifest& manifest, const TrainConfig& cfg) {
    cfg.validate();
    return cfg.precision == Precision::f32 ? train_impl<float>(manifest, cfg)
                                           : train_impl<double>(manifest, cfg);
}

TrainConfig checkpoint_train_config(const nn::Checkpoint& ckpt) {
    json j = json::parse(ckpt.meta_json, nullptr, false);
    if (j.is_discarded() || !j.is_object())
        throw Error(Errc::checkpoint_mismatch, "checkpoint metadata is not a JSON object");
    if (!j.contains("format") || j.at("format") != "evfly-ckpt-1")
        throw Error(Errc::checkpoint_mismatch, "checkpoint metadata has an unknown format");
    if (!j.contains("train_config") || !j.at("train_config").is_object())
        throw Error(Errc::checkpoint_mismatch, "checkpoint metadata lacks a train config");
    try {
        return train_config_from_json(j.at("train_config").dump());
    } catch (const Error& e) {
        throw Error(Errc::checkpoint_mismatch,
                    std::string("checkpoint train config is invalid: ") + e.what());
    }
}

// ---- Evaluation -------------------------------------------------------------

namespace {

std::pair<size_t, bool> vote_ptrs(const std::vector<const ChunkPrediction*>& chunks) {
    std::array<uint64_t, kNumClasses> count{};
    std::array<double, kNumClasses> sums{};
    for (const auto* cp : chunks) {
        count[cp->predicted] += 1;
        for (size_t c = 0; c < kNumClasses; ++c) sums[c] += cp->probs[c];
    }
    uint64_t top = 0;
    for (auto c : count) top = std::max(top, c);
    size_t winner = kNumClasses;
    bool tie = false;
    for (size_t c = 0; c < kNumClasses; ++c) {
        if (count[c] != top) continue;
        if (winner == kNumClasses) {
            winner = c;
        } else {
            tie = true;
            if (sums[c] > sums[winner]) winner = c;
        }
    }
    return {winner, tie};
}

void finish_report(EvalReport& r) {
    uint64_t trace = 0, total = 0;
    for (size_t c = 0; c < kNumClasses; ++c) {
        uint64_t row = 0;
        for (size_t k = 0; k < kNumClasses; ++k) row += r.confusion[c][k];
        trace += r.confusion[c][c];
        total += row;
        r.per_class_recall[c] = row ? double(r.confusion[c][c]) / double(row) : 0.0;
    }
    r.total = total;
}

template <typename T>
EvalOutcome evaluate_impl(const nn::Checkpoint& ckpt, const DatasetManifest& manifest,
                          const std::string& split, const TrainConfig& cfg) {
    nn::ParamStore<T> params;
    create_params<T>(params, cfg.encoder);
    nn::load_state<T>(ckpt, params, nullptr);

    const PreparedSet set = prepare_split(manifest, cfg, split);

    EvalOutcome out;
    out.predictions.reserve(set.chunks.size());
    nn::Tape<T> tape;
    tape.set_recording(false);
    for (const auto& pc : set.chunks) {
        auto logits = forward_chunk<T>(tape, params, cfg, pc);
        ChunkPrediction cp;
        cp.track_id = pc.track_id;
        cp.truth = pc.label;
        cp.predicted = argmax_row(logits);
        cp.probs = softmax_probs(logits);
        out.predictions.push_back(cp);
    }

    EvalReport& cr = out.chunk_report;
    cr.protocol = "chunk";
    cr.dropped_chunks = set.dropped_chunks;
    for (const auto& cp : out.predictions) cr.confusion[size_t(cp.truth)][cp.predicted] += 1;
    finish_report(cr);
    const double chunk_acc = cr.total ? double([&] {
        uint64_t t = 0;
        for (size_t c = 0; c < kNumClasses; ++c) t += cr.confusion[c][c];
        return t;
    }()) / double(cr.total)
                                      : 0.0;

    EvalReport& tr = out.track_report;
    tr.protocol = "track";
    tr.dropped_chunks = set.dropped_chunks;
    for (size_t t = 0; t < set.tracks.size(); ++t) {
        std::vector<const ChunkPrediction*> chunks;
        chunks.reserve(set.track_chunks[t].size());
        for (size_t idx : set.track_chunks[t]) chunks.push_back(&out.predictions[idx]);
        const auto [winner, tie] = vote_ptrs(chunks);
        if (tie) tr.tie_count += 1;
        tr.confusion[size_t(set.tracks[t].second)][winner] += 1;
    }
    finish_report(tr);
    const double track_acc = tr.total ? double([&] {
        uint64_t t = 0;
        for (size_t c = 0; c < kNumClasses; ++c) t += tr.confusion[c][c];
        return t;
    }()) / double(tr.total)
                                      : 0.0;

    cr.chunk_accuracy = tr.chunk_accuracy = chunk_acc;
    cr.track_accuracy = tr.track_accuracy = track_acc;
    return out;
}

} // namespace

std::pair<size_t, bool> vote_track(const std::vector<ChunkPrediction>& chunks) {
    std::vector<const ChunkPrediction*> ptrs;
    ptrs.reserve(chunks.size());
    for (const auto& c : chunks) ptrs.push_back(&c);
    return vote_ptrs(ptrs);
}

EvalOutcome evaluate(const nn::Checkpoint& ckpt, const DatasetManifest& manifest,
                     const std::string& split, const TrainConfig& cfg) {
    cfg.validate();
    return cfg.precision == Precision::f32 ? evaluate_impl<float>(ckpt, manifest, split, cfg)
                                           : evaluate_impl<double>(ckpt, manifest, split, cfg);
}

EvalReport eval_chunks(const nn::Checkpoint& ckpt, const DatasetManifest& manifest,
                       const std::string& split, const TrainConfig& cfg) {
    return evaluate(ckpt, manifest, split, cfg).chunk_report;
}

EvalReport eval_tracks(const nn::Checkpoint& ckpt, const DatasetManifest& manifest,
                       const std::string& split, const TrainConfig& cfg) {
    return evaluate(ckpt, manifest, split, cfg).track_report;
}

// ---- Prediction -------------------------------------------------------------

namespace {

template <typename T>
std::string predict_impl(const nn::Checkpoint& ckpt, const TrainConfig& cfg,
                         const EventStream& stream, const AnnotationSet& ann) {
    nn::ParamStore<T> params;
    create_params<T>(params, cfg.encoder);
    nn::load_state<T>(ckpt, params, nullptr);

    const AssemblyResult assembled = assemble_tracks(stream, ann);
    nn::Tape<T> tape;
    tape.set_recording(false);

    std::string out;
    for (const Track& track : assembled.tracks) {
        const ChunkingResult sliced = chunk_track(track, cfg.dt_us, cfg.min_chunk_events);
        std::vector<ChunkPrediction> preds;
        json chunk_probs = json::array();
        for (size_t c = 0; c < sliced.chunks.size(); ++c) {
            SamplingSpec spec = cfg.sampling;
            spec.seed = chunk_sampling_seed(cfg, track.track_id, c);
            PreparedChunk pc;
            pc.track_id = track.track_id;
            pc.chunk_ordinal = c;
            pc.label = track.class_label;
            const NormalizedPointSet sampled =
                apply_sampling(spec, normalize_chunk(sliced.chunks[c]));
            pc.pts.reserve(sampled.count() * 4);
            for (const auto& p : sampled.points) {
                pc.pts.push_back(float(p.x));
                pc.pts.push_back(float(p.y));
                pc.pts.push_back(float(p.t));
                pc.pts.push_back(float(p.p));
            }
            auto logits = forward_chunk<T>(tape, params, cfg, pc);
            ChunkPrediction cp;
            cp.predicted = argmax_row(logits);
            cp.probs = softmax_probs(logits);
            preds.push_back(cp);
            chunk_probs.push_back(cp.probs);
        }
        std::vector<const ChunkPrediction*> ptrs;
        for (const auto& p : preds) ptrs.push_back(&p);
        const auto [winner, tie] = vote_ptrs(ptrs);
        (void)tie;
        double confidence = 1.0 / double(kNumClasses);
        if (!preds.empty()) {
            double sum = 0.0;
            for (const auto& p : preds) sum += p.probs[winner];
            confidence = sum / double(preds.size());
        }
        json line;
        line["track_id"] = track.track_id;
        line["class"] = class_name(ClassLabel(winner));
        line["confidence"] = confidence;
        line["chunk_probs"] = chunk_probs;
        out += line.dump();
        out += '\n';
    }
    return out;
}

} // namespace

std::string predict_jsonl(const nn::Checkpoint& ckpt, const TrainConfig& cfg,
                          const EventStream& stream, const AnnotationSet& ann) {
    cfg.validate();
    return cfg.precision == Precision::f32 ? predict_impl<float>(ckpt, cfg, stream, ann)
                                           : predict_impl<double>(ckpt, cfg, stream, ann);
}

// ---- Report serialization ---------------------------------------------------

std::string eval_report_to_json(const EvalReport& report) {
    json j;
    j["protocol"] = report.protocol;
    j["chunk_accuracy"] = report.chunk_accuracy;
    j["track_accuracy"] = report.track_accuracy;
    j["per_class_recall"] = report.per_class_recall;
    json conf = json::array();
    for (const auto& row : report.confusion) conf.push_back(row);
    j["confusion"] = conf;
    j["total"] = report.total;
    j["dropped_chunks"] = report.dropped_chunks;
    j["tie_count"] = report.tie_count;
    return j.dump(2) + "\n";
}

EvalReport eval_report_from_json(const std::string& text) {
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded() || !j.is_object())
        throw Error(Errc::schema_error, "eval report: not a JSON object");
    check_keys(j, "eval report",
               {"protocol", "chunk_accuracy", "track_accuracy", "per_class_recall", "confusion",
                "total", "dropped_chunks", "tie_count"});
    EvalReport r;
    r.protocol = require_str(j, "eval report", "protocol");
    if (r.protocol != "chunk" && r.protocol != "track")
        throw Error(Errc::schema_error, "eval report: unknown protocol '" + r.protocol + "'");
    r.chunk_accuracy = require_num(j, "eval report", "chunk_accuracy");
    r.track_accuracy = require_num(j, "eval report", "track_accuracy");
    if (!j.contains("per_class_recall") || !j.at("per_class_recall").is_array() ||
        j.at("per_class_recall").size() != kNumClasses)
        throw Error(Errc::schema_error, "eval report: 'per_class_recall' must have 4 entries");
    for (size_t c = 0; c < kNumClasses; ++c) {
        if (!j.at("per_class_recall")[c].is_number())
            throw Error(Errc::schema_error, "eval report: recall entries must be numbers");
        r.per_class_recall[c] = j.at("per_class_recall")[c].get<double>();
    }
    if (!j.contains("confusion") || !j.at("confusion").is_array() ||
        j.at("confusion").size() != kNumClasses)
        throw Error(Errc::schema_error, "eval report: 'confusion' must have 4 rows");
    for (size_t c = 0; c < kNumClasses; ++c) {
        const json& row = j.at("confusion")[c];
        if (!row.is_array() || row.size() != kNumClasses)
            throw Error(Errc::schema_error, "eval report: confusion rows must have 4 entries");
        for (size_t k = 0; k < kNumClasses; ++k) {
            if (!row[k].is_number_unsigned())
                throw Error(Errc::schema_error,
                            "eval report: confusion entries must be unsigned integers");
            r.confusion[c][k] = row[k].get<uint64_t>();
        }
    }
    r.total = require_u64(j, "eval report", "total");
    r.dropped_chunks = require_u64(j, "eval report", "dropped_chunks");
    r.tie_count = require_u64(j, "eval report", "tie_count");
    return r;
}

std::string report_render(const EvalReport& report) {
    std::ostringstream os;
    char buf[128];
    os << "protocol        : " << report.protocol << "\n";
    std::snprintf(buf, sizeof buf, "chunk accuracy  : %.6f\n", report.chunk_accuracy);
    os << buf;
    std::snprintf(buf, sizeof buf, "track accuracy  : %.6f\n", report.track_accuracy);
    os << buf;
    os << "total           : " << report.total << "\n";
    os << "dropped chunks  : " << report.dropped_chunks << "\n";
    os << "vote ties       : " << report.tie_count << "\n";
    for (size_t c = 0; c < kNumClasses; ++c) {
        std::snprintf(buf, sizeof buf, "recall %-10s: %.6f\n", class_name(ClassLabel(c)),
                      report.per_class_recall[c]);
        os << buf;
    }
    os << "confusion (rows = truth):\n";
    std::snprintf(buf, sizeof buf, "%12s", "");
    os << buf;
    for (size_t k = 0; k < kNumClasses; ++k) {
        std::snprintf(buf, sizeof buf, " %10s", class_name(ClassLabel(k)));
        os << buf;
    }
    os << "\n";
    for (size_t c = 0; c < kNumClasses; ++c) {
        std::snprintf(buf, sizeof buf, "%12s", class_name(ClassLabel(c)));
        os << buf;
        for (size_t k = 0; k < kNumClasses; ++k) {
            std::snprintf(buf, sizeof buf, " %10llu",
                          (unsigned long long)report.confusion[c][k]);
            os << buf;
        }
        os << "\n";
    }
    return os.str();
}

std::string confusion_csv(const EvalReport& report) {
    std::string out = "class";
    for (size_t k = 0; k < kNumClasses; ++k) {
        out += ',';
        out += class_name(ClassLabel(k));
    }
    out += '\n';
    for (size_t c = 0; c < kNumClasses; ++c) {
        out += class_name(ClassLabel(c));
        for (size_t k = 0; k < kNumClasses; ++k) {
            out += ',';
            out += std::to_string(report.confusion[c][k]);
        }
        out += '\n';
    }
    return out;
}

std::array<std::array<uint64_t, kNumClasses>, kNumClasses> parse_confusion_csv(
    const std::string& text) {
    std::istringstream is(text);
    std::string line;
    auto split_line = [](const std::string& l) {
        std::vector<std::string> cells;
        std::string cell;
        std::istringstream ls(l);
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        return cells;
    };
    if (!std::getline(is, line))
        throw Error(Errc::schema_error, "confusion csv: missing header");
    auto header = split_line(line);
    if (header.size() != kNumClasses + 1 || header[0] != "class")
        throw Error(Errc::schema_error, "confusion csv: malformed header");
    for (size_t k = 0; k < kNumClasses; ++k)
        if (header[k + 1] != class_name(ClassLabel(k)))
            throw Error(Errc::schema_error, "confusion csv: unexpected column order");

    std::array<std::array<uint64_t, kNumClasses>, kNumClasses> m{};
    for (size_t c = 0; c < kNumClasses; ++c) {
        if (!std::getline(is, line))
            throw Error(Errc::schema_error, "confusion csv: missing row");
        auto cells = split_line(line);
        if (cells.size() != kNumClasses + 1 || cells[0] != class_name(ClassLabel(c)))
            throw Error(Errc::schema_error, "confusion csv: malformed row");
        for (size_t k = 0; k < kNumClasses; ++k) {
            const std::string& s = cells[k + 1];
            if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos)
                throw Error(Errc::schema_error, "confusion csv: counts must be unsigned integers");
            m[c][k] = std::stoull(s);
        }
    }
    if (std::getline(is, line) && !line.empty())
        throw Error(Errc::schema_error, "confusion csv: trailing content");
    return m;
}

} // namespace evf
