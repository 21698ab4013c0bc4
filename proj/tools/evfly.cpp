#include <cstdint>
#include <iostream>
#include <span>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "evf/codec.hpp"
#include "evf/harness.hpp"
#include "evf/synthgen.hpp"

namespace {

using namespace evf;

// Flags override the config file only when actually passed on the command
// line; CLI11's count() distinguishes "absent" from "explicit default".

struct SynthArgs {
    std::string out;
    std::string config_path;
    uint64_t seed = 0;
    uint64_t tracks_per_class = 0;
    double noise_rate = 0.0;
    uint64_t width = 0, height = 0;
};

int run_synth(const CLI::App& cmd, const SynthArgs& a) {
    SynthConfig cfg;
    if (!a.config_path.empty()) cfg = synth_config_from_json(read_text_file(a.config_path));
    if (cmd.count("--seed")) cfg.seed = a.seed;
    if (cmd.count("--tracks-per-class")) cfg.tracks_per_class = size_t(a.tracks_per_class);
    if (cmd.count("--noise-rate")) cfg.noise_rate = a.noise_rate;
    if (cmd.count("--width")) cfg.width = uint16_t(a.width);
    if (cmd.count("--height")) cfg.height = uint16_t(a.height);

    const DatasetManifest manifest = gen_dataset(cfg, a.out);
    std::cout << "wrote " << manifest.recordings.size() << " recordings, "
              << manifest.tracks.size() << " tracks to " << a.out << "\n";
    std::cout << "config hash " << manifest.config_hash << "\n";
    return 0;
}

struct SliceArgs {
    std::string events, annotations, index, chunks;
    uint64_t dt_us = kFrameUs;
    uint64_t min_events = kDefaultMinChunkEvents;
    std::string negatives; // "", "auto", or a count
    uint64_t seed = 0;
};

int run_slice(const CLI::App&, const SliceArgs& a) {
    const EventStream stream = decode_events(read_binary_file(a.events));
    const AnnotationSet ann = read_annotations(read_text_file(a.annotations));
    const AssemblyResult assembled = assemble_tracks(stream, ann);

    ChunkStore store;
    store.width = stream.width;
    store.height = stream.height;
    store.dt_us = a.dt_us;
    size_t dropped = 0;
    for (const Track& track : assembled.tracks) {
        ChunkingResult sliced = chunk_track(track, a.dt_us, size_t(a.min_events));
        dropped += sliced.dropped;
        for (auto& c : sliced.chunks) store.chunks.push_back(std::move(c));
    }
    const size_t positives = store.chunks.size();

    size_t n_negatives = 0;
    if (a.negatives == "auto") {
        n_negatives = positives;
    } else if (!a.negatives.empty()) {
        n_negatives = size_t(std::stoull(a.negatives));
    }
    if (n_negatives > 0) {
        NegativeSamplingOptions opts;
        opts.dt_us = a.dt_us;
        for (auto& c : sample_negatives(stream, ann, n_negatives, a.seed, opts))
            store.chunks.push_back(std::move(c));
    }

    write_chunk_store(a.index, a.chunks, store);
    std::cout << "tracks " << assembled.tracks.size() << " (rejected "
              << assembled.rejected.size() << "), chunks " << positives << " (+"
              << n_negatives << " negatives, dropped " << dropped << ")\n";
    return 0;
}

struct TrainEvalArgs {
    std::string manifest, out, config_path, checkpoint;
    std::string encoder, sampling, precision, split = "test", protocol, report, csv;
    uint64_t points = 0, seed = 0, dt_us = 0, min_chunk_events = 0;
    uint64_t batch_size = 0, epochs = 0;
    double lr = 0.0;
    bool class_weighting = false;
};

/// True when the subcommand has this option and the user passed it. eval and
/// predict share the override table but register only a subset of the flags.
bool flag_given(const CLI::App& cmd, const std::string& name) {
    const CLI::Option* opt = cmd.get_option_no_throw(name);
    return opt != nullptr && opt->count() > 0;
}

void apply_overrides(const CLI::App& cmd, const TrainEvalArgs& a, TrainConfig& cfg) {
    if (flag_given(cmd, "--encoder")) cfg.encoder.variant = encoder_from_name(a.encoder);
    if (flag_given(cmd, "--sampling")) cfg.sampling.strategy = sampling_from_name(a.sampling);
    if (flag_given(cmd, "--points")) cfg.sampling.target_n = size_t(a.points);
    if (flag_given(cmd, "--seed")) {
        cfg.seed = a.seed;
        cfg.sampling.seed = a.seed;
    }
    if (flag_given(cmd, "--dt-us")) cfg.dt_us = a.dt_us;
    if (flag_given(cmd, "--min-chunk-events")) cfg.min_chunk_events = size_t(a.min_chunk_events);
    if (flag_given(cmd, "--lr")) cfg.lr = a.lr;
    if (flag_given(cmd, "--batch-size")) cfg.batch_size = size_t(a.batch_size);
    if (flag_given(cmd, "--epochs")) cfg.epochs = size_t(a.epochs);
    if (flag_given(cmd, "--class-weighting")) cfg.class_weighting = a.class_weighting;
    if (flag_given(cmd, "--precision")) cfg.precision = precision_from_name(a.precision);
}

int run_train(const CLI::App& cmd, const TrainEvalArgs& a) {
    TrainConfig cfg;
    if (!a.config_path.empty()) cfg = train_config_from_json(read_text_file(a.config_path));
    apply_overrides(cmd, a, cfg);
    cfg.validate();

    const DatasetManifest manifest = read_manifest(a.manifest);
    const TrainResult result = train(manifest, cfg);
    for (size_t e = 0; e < result.train_accuracy.size(); ++e) {
        std::cout << "epoch " << e << ": loss " << result.train_loss[e] << ", train acc "
                  << result.train_accuracy[e] << ", val acc " << result.val_accuracy[e]
                  << (e == result.best_epoch ? " *" : "") << "\n";
    }
    const auto bytes = nn::encode_checkpoint(result.checkpoint);
    write_binary_file(a.out, bytes);
    std::cout << "saved epoch " << result.best_epoch << " checkpoint to " << a.out << " ("
              << bytes.size() << " bytes)\n";
    return 0;
}

int run_eval(const CLI::App& cmd, const TrainEvalArgs& a) {
    const nn::Checkpoint ckpt = nn::decode_checkpoint(read_binary_file(a.checkpoint));
    TrainConfig cfg = checkpoint_train_config(ckpt);
    apply_overrides(cmd, a, cfg);
    cfg.validate();

    const DatasetManifest manifest = read_manifest(a.manifest);
    const EvalOutcome outcome = evaluate(ckpt, manifest, a.split, cfg);
    const EvalReport& report =
        a.protocol == "track" ? outcome.track_report : outcome.chunk_report;
    std::cout << report_render(report);
    if (!a.report.empty()) write_text_file(a.report, eval_report_to_json(report));
    if (!a.csv.empty()) write_text_file(a.csv, confusion_csv(report));
    return 0;
}

struct PredictArgs {
    std::string checkpoint, events, annotations, out;
    std::string sampling;
    uint64_t points = 0, seed = 0;
};

int run_predict(const CLI::App& cmd, const PredictArgs& a) {
    const nn::Checkpoint ckpt = nn::decode_checkpoint(read_binary_file(a.checkpoint));
    TrainConfig cfg = checkpoint_train_config(ckpt);
    if (cmd.count("--sampling")) cfg.sampling.strategy = sampling_from_name(a.sampling);
    if (cmd.count("--points")) cfg.sampling.target_n = size_t(a.points);
    if (cmd.count("--seed")) {
        cfg.seed = a.seed;
        cfg.sampling.seed = a.seed;
    }
    cfg.validate();

    const EventStream stream = decode_events(read_binary_file(a.events));
    const AnnotationSet ann = read_annotations(read_text_file(a.annotations));
    const std::string lines = predict_jsonl(ckpt, cfg, stream, ann);
    if (a.out.empty())
        std::cout << lines;
    else
        write_text_file(a.out, lines);
    return 0;
}

struct RenderArgs {
    std::string events, report, out;
    uint64_t t0 = 0, t1 = 0;
};

int run_render(const CLI::App& cmd, const RenderArgs& a) {
    if (a.events.empty() == a.report.empty()) {
        std::cerr << "render: exactly one of --events or --report is required\n";
        return 1;
    }
    if (!a.report.empty()) {
        const EvalReport report = eval_report_from_json(read_text_file(a.report));
        write_text_file(a.out, confusion_csv(report));
        std::cout << "wrote confusion csv to " << a.out << "\n";
        return 0;
    }
    const EventStream stream = decode_events(read_binary_file(a.events));
    uint64_t t1 = a.t1;
    if (!cmd.count("--t1")) t1 = stream.events.empty() ? 0 : stream.events.back().t + 1;
    const Frame frame = render_frame(stream, a.t0, t1);
    const std::string pgm = write_pgm(frame);
    write_binary_file(a.out, std::span(reinterpret_cast<const uint8_t*>(pgm.data()),
                                       pgm.size()));
    std::cout << "wrote " << frame.width << "x" << frame.height << " frame to " << a.out
              << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"flying-object classification over event streams"};
    app.require_subcommand(1);

    SynthArgs sa;
    CLI::App* synth = app.add_subcommand("synth", "generate a synthetic dataset");
    synth->add_option("--out", sa.out, "output directory")->required();
    synth->add_option("--config", sa.config_path, "synth config JSON");
    synth->add_option("--seed", sa.seed, "dataset seed");
    synth->add_option("--tracks-per-class", sa.tracks_per_class, "tracks per class");
    synth->add_option("--noise-rate", sa.noise_rate, "noise events per pixel per second");
    synth->add_option("--width", sa.width, "sensor width");
    synth->add_option("--height", sa.height, "sensor height");

    SliceArgs la;
    CLI::App* slice = app.add_subcommand("slice", "slice a recording into labeled chunks");
    slice->add_option("--events", la.events, "EVF1 event file")->required();
    slice->add_option("--annotations", la.annotations, "JSON-lines annotation file")->required();
    slice->add_option("--index", la.index, "output chunk index (JSON lines)")->required();
    slice->add_option("--chunks", la.chunks, "output chunk events file")->required();
    slice->add_option("--dt-us", la.dt_us, "chunk duration in microseconds");
    slice->add_option("--min-events", la.min_events, "minimum events per chunk");
    slice->add_option("--negatives", la.negatives, "background chunk count, or 'auto' for 1:1");
    slice->add_option("--seed", la.seed, "negative sampling seed");

    auto add_train_eval_flags = [](CLI::App* cmd, TrainEvalArgs& a, bool training) {
        cmd->add_option("--config", a.config_path, "train config JSON");
        cmd->add_option("--encoder", a.encoder, "flat | hierarchical");
        cmd->add_option("--sampling", a.sampling, "random | recent | fps");
        cmd->add_option("--points", a.points, "points per chunk after sampling");
        cmd->add_option("--seed", a.seed, "run seed (weights + sampling)");
        cmd->add_option("--dt-us", a.dt_us, "chunk duration in microseconds");
        cmd->add_option("--min-chunk-events", a.min_chunk_events, "minimum events per chunk");
        if (training) {
            cmd->add_option("--lr", a.lr, "learning rate");
            cmd->add_option("--batch-size", a.batch_size, "chunks per optimizer step");
            cmd->add_option("--epochs", a.epochs, "training epochs");
            cmd->add_flag("--class-weighting", a.class_weighting,
                          "weight the loss by inverse class frequency");
            cmd->add_option("--precision", a.precision, "f32 | f64");
        }
    };

    TrainEvalArgs ta;
    CLI::App* train_cmd = app.add_subcommand("train", "train a classifier on a dataset");
    train_cmd->add_option("--manifest", ta.manifest, "dataset manifest.json")->required();
    train_cmd->add_option("--out", ta.out, "output checkpoint file")->required();
    add_train_eval_flags(train_cmd, ta, true);

    TrainEvalArgs ea;
    CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a split");
    eval_cmd->add_option("--manifest", ea.manifest, "dataset manifest.json")->required();
    eval_cmd->add_option("--checkpoint", ea.checkpoint, "checkpoint file")->required();
    eval_cmd->add_option("--split", ea.split, "train | val | test (default test)");
    eval_cmd->add_option("--protocol", ea.protocol, "chunk | track")
        ->required()
        ->check(CLI::IsMember({"chunk", "track"}));
    eval_cmd->add_option("--report", ea.report, "write the report as JSON here");
    eval_cmd->add_option("--csv", ea.csv, "write the confusion matrix as CSV here");
    add_train_eval_flags(eval_cmd, ea, false);

    PredictArgs pa;
    CLI::App* predict_cmd = app.add_subcommand("predict", "per-track predictions for one recording");
    predict_cmd->add_option("--checkpoint", pa.checkpoint, "checkpoint file")->required();
    predict_cmd->add_option("--events", pa.events, "EVF1 event file")->required();
    predict_cmd->add_option("--annotations", pa.annotations, "JSON-lines annotation file")
        ->required();
    predict_cmd->add_option("--out", pa.out, "output JSON-lines file (default stdout)");
    predict_cmd->add_option("--sampling", pa.sampling, "random | recent | fps");
    predict_cmd->add_option("--points", pa.points, "points per chunk after sampling");
    predict_cmd->add_option("--seed", pa.seed, "sampling seed");

    RenderArgs ra;
    CLI::App* render_cmd =
        app.add_subcommand("render", "accumulation frame PGM or confusion CSV");
    render_cmd->add_option("--events", ra.events, "EVF1 event file to accumulate");
    render_cmd->add_option("--report", ra.report, "eval report JSON to export as CSV");
    render_cmd->add_option("--out", ra.out, "output file")->required();
    render_cmd->add_option("--t0", ra.t0, "window start in microseconds");
    render_cmd->add_option("--t1", ra.t1, "window end in microseconds (exclusive)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (synth->parsed()) return run_synth(*synth, sa);
        if (slice->parsed()) return run_slice(*slice, la);
        if (train_cmd->parsed()) return run_train(*train_cmd, ta);
        if (eval_cmd->parsed()) return run_eval(*eval_cmd, ea);
        if (predict_cmd->parsed()) return run_predict(*predict_cmd, pa);
        if (render_cmd->parsed()) return run_render(*render_cmd, ra);
    } catch (const evf::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.code() == Errc::diverged_loss ? 3 : 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
