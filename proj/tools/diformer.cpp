// diformer — end-to-end speaker diarization: set prediction of binary masks,
// vocal-activity indicators and speaker embeddings from a transformer
// encoder-decoder, with Hungarian-matched multitask training on synthetic
// scenes, windowed inference with greedy identity stitching, and DER scoring.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>

#include "diformer/config.hpp"
#include "diformer/dataset.hpp"
#include "diformer/der.hpp"
#include "diformer/trainer.hpp"
#include "diformer/viz.hpp"
#include "diformer/weights.hpp"

namespace fs = std::filesystem;
using namespace diformer;

namespace {

struct GlobalArgs {
    std::string config_path;
    std::string out_dir = ".";
    int64_t seed = -1;
};

RunConfig resolve_config(const GlobalArgs &g) {
    RunConfig cfg = g.config_path.empty() ? RunConfig::desk_profile()
                                          : RunConfig::from_file(g.config_path);
    if (g.seed >= 0) cfg.seed = static_cast<uint64_t>(g.seed);
    return cfg;
}

void echo_config(const RunConfig &cfg, const std::string &out_dir) {
    fs::create_directories(out_dir);
    std::ofstream os(fs::path(out_dir) / "config_resolved.txt");
    os << cfg.to_flat();
}

int cmd_synth_data(const GlobalArgs &g, bool force) {
    RunConfig cfg = resolve_config(g);
    auto records = synthesize_dataset(cfg, g.out_dir, force);
    echo_config(cfg, g.out_dir);
    std::cout << "wrote " << records.size() << " scenes to " << g.out_dir << "\n";
    return 0;
}

int cmd_pretrain(const GlobalArgs &g) {
    RunConfig cfg = resolve_config(g);
    fs::create_directories(g.out_dir);
    SpeakerEncoder encoder(cfg.encoder_config(), hash_mix(cfg.seed, 0xe2c0de));
    PretrainResult res = pretrain_encoder(encoder, cfg, &std::cerr);
    const std::string path = (fs::path(g.out_dir) / "encoder.bin").string();
    encoder.save(path);
    echo_config(cfg, g.out_dir);
    std::cout << "encoder saved to " << path << " (held-out accuracy "
              << res.held_out_accuracy * 100.0 << "%)\n";
    return 0;
}

int cmd_train(const GlobalArgs &g, const std::string &data_dir, const std::string &encoder_path,
              const std::string &resume_path) {
    RunConfig cfg = resolve_config(g);
    fs::create_directories(g.out_dir);

    std::unique_ptr<DiarizationModel> model;
    Adam opt(AdamConfig{.lr = cfg.lr});
    int start_step = 0;
    if (!resume_path.empty()) {
        auto loaded = DiarizationModel::load_checkpoint(resume_path);
        model = std::move(loaded.model);
        cfg = RunConfig::from_json(loaded.run_config);
        if (g.seed >= 0) cfg.seed = static_cast<uint64_t>(g.seed);
        if (loaded.has_adam_state) {
            DiarizationModel::load_adam_state(resume_path, model->params());
            WeightsArchive a = WeightsArchive::load(resume_path);
            opt.set_steps_done(a.config.value("adam_steps", 0));
        }
        start_step = static_cast<int>(opt.steps_done());
        std::cerr << "resumed from " << resume_path << " at step " << start_step << "\n";
    } else {
        if (encoder_path.empty()) {
            std::cerr << "error: --encoder is required (run pretrain-encoder first)\n";
            return 2;
        }
        EncoderConfig expect = cfg.encoder_config();
        auto encoder = std::shared_ptr<SpeakerEncoder>(SpeakerEncoder::load(encoder_path, &expect));
        encoder->freeze();
        model = std::make_unique<DiarizationModel>(encoder, cfg.model_config(),
                                                   hash_mix(cfg.seed, 0x0d31));
    }

    auto records = read_manifest((fs::path(data_dir) / "manifest.txt").string());
    FeatureCache cache((fs::path(data_dir) / ".feature_cache").string());
    int skipped = 0;
    auto scenes = load_training_scenes(records, *model, cache, &skipped, &std::cerr);
    if (skipped > 0) std::cerr << "skipped " << skipped << " scene(s) with too many speakers\n";

    std::ofstream metrics(fs::path(g.out_dir) / "metrics.jsonl",
                          start_step > 0 ? std::ios::app : std::ios::trunc);
    echo_config(cfg, g.out_dir);
    TrainStats stats =
        train_diarizer(*model, opt, scenes, cfg, start_step, cfg.total_steps, &metrics, g.out_dir);
    std::cout << "trained " << stats.steps_done << " step(s); final loss " << stats.last.total
              << "; checkpoint in " << g.out_dir << "\n";
    return 0;
}

int cmd_infer(const GlobalArgs &g, const std::string &audio_path, const std::string &ckpt_path) {
    if (!fs::exists(ckpt_path)) {
        std::cerr << "error: checkpoint not found: " << ckpt_path << "\n";
        return 2;
    }
    auto loaded = DiarizationModel::load_checkpoint(ckpt_path);
    RunConfig cfg = RunConfig::from_json(loaded.run_config);
    Waveform audio = read_wav(audio_path);
    auto segments = infer_diarization(*loaded.model, audio, cfg);
    echo_config(cfg, g.out_dir);
    const std::string file_id = path_stem(audio_path);
    std::vector<RttmSegment> rows;
    for (const auto &s : segments) rows.push_back(to_rttm(s, file_id));
    const std::string out = (fs::path(g.out_dir) / (file_id + ".rttm")).string();
    write_rttm_file(out, rows);
    std::cout << out << "\n";
    return 0;
}

int cmd_eval(const std::string &ref_path, const std::string &hyp_path, double collar,
             bool ignore_overlap) {
    auto ref = read_rttm_file(ref_path);
    auto hyp = read_rttm_file(hyp_path);

    std::map<std::string, std::vector<RttmSegment>> ref_by_file, hyp_by_file;
    for (const auto &s : ref) ref_by_file[s.file_id].push_back(s);
    for (const auto &s : hyp) hyp_by_file[s.file_id].push_back(s);
    for (const auto &[id, _] : hyp_by_file) {
        if (!ref_by_file.count(id)) {
            std::string known;
            for (const auto &[rid, __] : ref_by_file) known += " " + rid;
            std::cerr << "error: hypothesis file id '" << id
                      << "' is missing from the reference; reference ids:" << known << "\n";
            return 2;
        }
    }

    DerOptions opt{collar, ignore_overlap};
    double missed = 0, fa = 0, conf = 0, scored = 0;
    bool all_valid = true;
    std::fprintf(stderr, "%-16s %10s %10s %10s %10s %8s\n", "file", "missed", "falarm", "confusion",
                 "scored", "DER%");
    for (const auto &[id, rsegs] : ref_by_file) {
        const auto hit = hyp_by_file.find(id);
        DerReport rep = compute_der(rsegs, hit == hyp_by_file.end() ? std::vector<RttmSegment>{}
                                                                    : hit->second,
                                    opt);
        nlohmann::json j = rep.to_json();
        j["file"] = id;
        std::cout << j.dump() << "\n";
        if (!rep.valid) {
            all_valid = false;
            std::fprintf(stderr, "%-16s %s\n", id.c_str(), rep.error.c_str());
            continue;
        }
        std::fprintf(stderr, "%-16s %10.3f %10.3f %10.3f %10.3f %8.2f\n", id.c_str(), rep.missed,
                     rep.false_alarm, rep.confusion, rep.scored_speech, rep.der);
        missed += rep.missed;
        fa += rep.false_alarm;
        conf += rep.confusion;
        scored += rep.scored_speech;
    }
    nlohmann::json agg;
    agg["file"] = "ALL";
    agg["valid"] = all_valid && scored > 0;
    agg["missed_sec"] = missed;
    agg["false_alarm_sec"] = fa;
    agg["confusion_sec"] = conf;
    agg["scored_speech_sec"] = scored;
    agg["der_pct"] = scored > 0 ? 100.0 * (missed + fa + conf) / scored : 0.0;
    std::cout << agg.dump() << "\n";
    if (scored > 0)
        std::fprintf(stderr, "%-16s %10.3f %10.3f %10.3f %10.3f %8.2f\n", "ALL", missed, fa, conf,
                     scored, 100.0 * (missed + fa + conf) / scored);
    return 0;
}

int cmd_plot(const GlobalArgs &g, const std::string &audio_path, const std::string &ckpt_path,
             const std::string &rttm_path, const std::string &ref_path) {
    fs::create_directories(g.out_dir);
    if (!rttm_path.empty()) {
        auto rows = read_rttm_file(rttm_path);
        std::vector<SpeechSegment> segs;
        double total = 1.0;
        for (const auto &r : rows) {
            segs.push_back({r.speaker, r.onset, r.duration});
            total = std::max(total, r.onset + r.duration);
        }
        const std::string out = (fs::path(g.out_dir) / "timeline.png").string();
        plot_timeline(out, segs, total);
        std::cout << out << "\n";
        return 0;
    }
    if (audio_path.empty() || ckpt_path.empty()) {
        std::cerr << "error: plot needs either --rttm, or --audio with --checkpoint\n";
        return 2;
    }
    auto loaded = DiarizationModel::load_checkpoint(ckpt_path);
    RunConfig cfg = RunConfig::from_json(loaded.run_config);
    echo_config(cfg, g.out_dir);
    Waveform audio = read_wav(audio_path);
    Waveform normed = normalize_waveform(audio.samples);

    // mask heatmap for the first window
    const int64_t win = std::llround(cfg.window_sec * kSampleRate);
    Waveform head;
    head.samples.assign(win, 0.0);
    std::copy(normed.samples.begin(),
              normed.samples.begin() + std::min<int64_t>(win, normed.samples.size()),
              head.samples.begin());
    PredictionSet ps = loaded.model->predict(compute_logmel(head));
    const std::string heat = (fs::path(g.out_dir) / "mask_heatmap.png").string();
    plot_mask_heatmap(heat, ps.masks, ps.n, ps.t_m);

    auto segments = infer_diarization(*loaded.model, audio, cfg);
    std::vector<SpeechSegment> ref;
    if (!ref_path.empty()) {
        for (const auto &r : read_rttm_file(ref_path)) ref.push_back({r.speaker, r.onset, r.duration});
    }
    const std::string tl = (fs::path(g.out_dir) / "timeline.png").string();
    plot_timeline(tl, segments, audio.duration_sec(), ref);
    std::cout << heat << "\n" << tl << "\n";
    return 0;
}

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"diformer: set-prediction speaker diarization"};
    app.require_subcommand(1);

    GlobalArgs g;
    app.add_option("--config", g.config_path, "flat key=value config file");
    app.add_option("--seed", g.seed, "override the config seed");
    app.add_option("--out", g.out_dir, "output directory");

    auto *synth = app.add_subcommand("synth-data", "generate synthetic scenes + RTTM + manifest");
    bool force = false;
    synth->add_flag("--force", force, "overwrite a non-empty output directory");

    auto *pre = app.add_subcommand("pretrain-encoder", "pretrain the speaker encoder on synthetic voices");

    auto *train = app.add_subcommand("train", "train the diarizer");
    std::string data_dir, encoder_path, resume_path;
    train->add_option("--data", data_dir, "dataset directory (from synth-data)")->required();
    train->add_option("--encoder", encoder_path, "pretrained encoder archive");
    train->add_option("--resume", resume_path, "checkpoint to resume from");

    auto *infer = app.add_subcommand("infer", "diarize a wav into RTTM");
    std::string audio_path, ckpt_path;
    infer->add_option("--audio", audio_path, "input wav (mono 16 kHz)")->required();
    infer->add_option("--checkpoint", ckpt_path, "trained checkpoint")->required();

    auto *eval = app.add_subcommand("eval", "score hypothesis RTTM against a reference");
    std::string ref_path, hyp_path;
    double collar = 0.0;
    bool ignore_overlap = false;
    eval->add_option("--ref", ref_path, "reference RTTM")->required();
    eval->add_option("--hyp", hyp_path, "hypothesis RTTM")->required();
    eval->add_option("--collar", collar, "no-score collar around reference boundaries (s)");
    eval->add_flag("--ignore-overlap", ignore_overlap, "exclude overlapped reference speech");

    auto *plot = app.add_subcommand("plot", "emit mask heatmap / timeline images");
    std::string plot_audio, plot_ckpt, plot_rttm, plot_ref;
    plot->add_option("--audio", plot_audio, "input wav");
    plot->add_option("--checkpoint", plot_ckpt, "trained checkpoint");
    plot->add_option("--rttm", plot_rttm, "plot a timeline directly from RTTM");
    plot->add_option("--ref", plot_ref, "reference RTTM for side-by-side comparison");

    CLI11_PARSE(app, argc, argv);

    try {
        if (synth->parsed()) return cmd_synth_data(g, force);
        if (pre->parsed()) return cmd_pretrain(g);
        if (train->parsed()) return cmd_train(g, data_dir, encoder_path, resume_path);
        if (infer->parsed()) return cmd_infer(g, audio_path, ckpt_path);
        if (eval->parsed()) return cmd_eval(ref_path, hyp_path, collar, ignore_overlap);
        if (plot->parsed()) return cmd_plot(g, plot_audio, plot_ckpt, plot_rttm, plot_ref);
    } catch (const std::exception &e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
