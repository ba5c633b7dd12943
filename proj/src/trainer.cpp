#include "diformer/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "diformer/der.hpp"

namespace diformer {

PretrainResult pretrain_encoder(SpeakerEncoder &encoder, const RunConfig &cfg, std::ostream *log) {
    const int n_speakers = cfg.pretrain_speakers;
    if (n_speakers < 2)
        throw InvalidCorpus("pretrain: need at least 2 speakers, got " +
                            std::to_string(n_speakers));
    const int clips = cfg.pretrain_clips;
    const int held_out = std::min(2, clips - 1);
    const int train_clips = clips - held_out;

    std::vector<std::string> ids;
    for (int s = 0; s < n_speakers; ++s) {
        char buf[48];
        std::snprintf(buf, sizeof(buf), "voice_%016llx",
                      static_cast<unsigned long long>(hash_mix(cfg.seed, 0x70ull + s)));
        ids.push_back(buf);
    }

    // Precompute features for every clip.
    struct Clip {
        int speaker;
        LogMelSpectrogram spec;
    };
    std::vector<Clip> train_set, eval_set;
    for (int s = 0; s < n_speakers; ++s) {
        for (int c = 0; c < clips; ++c) {
            Waveform w = render_clip(ids[s], cfg.pretrain_clip_sec, hash_mix(cfg.seed, s * 1000 + c));
            Clip clip{s, compute_logmel(normalize_waveform(w.samples))};
            (c < train_clips ? train_set : eval_set).push_back(std::move(clip));
        }
    }

    ParamStore head;
    Param &fc_w = head.add("cls.w", Shape::mat(n_speakers, encoder.config().embed_dim));
    Param &fc_b = head.add("cls.b", Shape::vec(n_speakers));
    Rng init_rng(hash_mix(cfg.seed, 0xc125));
    init_fan_in(fc_w, init_rng, encoder.config().embed_dim);
    init_fan_in(fc_b, init_rng, encoder.config().embed_dim);

    Adam opt_enc(AdamConfig{.lr = cfg.pretrain_lr});
    Adam opt_head(AdamConfig{.lr = cfg.pretrain_lr});

    PretrainResult res;
    std::vector<int> order(train_set.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    Rng shuffle_rng(hash_mix(cfg.seed, 0x0de2));

    for (int epoch = 0; epoch < cfg.pretrain_epochs; ++epoch) {
        for (size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[shuffle_rng.uniform_index(i)]);
        double epoch_loss = 0.0;
        for (int idx : order) {
            const Clip &clip = train_set[idx];
            Tape tape(true);
            Rng drng(hash_mix(cfg.seed, 0xd007 + res.steps));
            tape.set_rng(&drng);
            Tensor emb = encoder.forward_utterance(tape, clip.spec); // (1, D)
            Tensor logits = linear(emb, tape.leaf(fc_w), tape.leaf(fc_b));
            Tensor logp = log_softmax_rows(logits);
            Tensor picked = slice_cols(logp, clip.speaker, clip.speaker + 1);
            Tensor loss = neg(sum_all(picked));
            epoch_loss += loss.item();
            tape.backward(loss);
            opt_enc.step(encoder.params());
            opt_head.step(head);
            ++res.steps;
        }
        if (log)
            (*log) << "pretrain epoch " << epoch << " mean_ce "
                   << epoch_loss / static_cast<double>(order.size()) << "\n";
    }

    // Held-out accuracy with the (about to be discarded) classifier head.
    int correct = 0;
    for (const Clip &clip : eval_set) {
        Tape tape(false);
        Tensor emb = encoder.forward_utterance(tape, clip.spec);
        Tensor logits = linear(emb, tape.leaf(fc_w), tape.leaf(fc_b));
        const auto &v = logits.value();
        int arg = 0;
        for (int s = 1; s < n_speakers; ++s)
            if (v[s] > v[arg]) arg = s;
        if (arg == clip.speaker) ++correct;
    }
    res.held_out_accuracy =
        eval_set.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(eval_set.size());
    if (log) (*log) << "pretrain held-out accuracy " << res.held_out_accuracy << "\n";
    return res;
}

std::vector<TrainingScene> load_training_scenes(const std::vector<SceneRecord> &records,
                                                DiarizationModel &model, FeatureCache &cache,
                                                int *skipped, std::ostream *log) {
    if (!model.encoder().frozen())
        throw Error("load_training_scenes: encoder must be frozen before building groundtruth");
    std::vector<TrainingScene> scenes;
    int skip_count = 0;
    for (const auto &rec : records) {
        TrainingScene ts;
        ts.file_id = path_stem(rec.wav_path);
        ts.features = cache.get(rec.wav_path);
        const int t_m = ((ts.features.frames + 7) / 8) * 8 / 4;

        std::vector<RttmSegment> rows = read_rttm_file(rec.rttm_path);
        std::vector<SpeechSegment> segments;
        for (const auto &r : rows) segments.push_back({r.speaker, r.onset, r.duration});

        MaskBuild mb = build_masks(segments, t_m);
        if (mb.m > model.config().n_queries) {
            ++skip_count;
            if (log)
                (*log) << "warning: scene " << ts.file_id << " has " << mb.m
                       << " speakers > " << model.config().n_queries << " slots; skipped\n";
            continue;
        }
        Waveform audio = read_wav(rec.wav_path);
        Waveform normed = normalize_waveform(audio.samples);
        GtEmbeddings ge = build_gt_embeddings(normed, segments, model.encoder());
        if (ge.fallbacks > 0 && log)
            (*log) << "warning: scene " << ts.file_id << " used the full-active-region fallback for "
                   << ge.fallbacks << " fully-overlapped speaker(s)\n";
        // build_masks and build_gt_embeddings both order speakers by first
        // appearance, so the rows line up.
        ts.gt = GroundTruthSet::pad(model.config().n_queries, t_m, model.config().speaker_dim,
                                    mb.masks, ge.embeddings, mb.m);
        scenes.push_back(std::move(ts));
    }
    if (skipped) *skipped = skip_count;
    return scenes;
}

TrainStats train_diarizer(DiarizationModel &model, Adam &opt,
                          const std::vector<TrainingScene> &scenes, const RunConfig &cfg,
                          int start_step, int end_step, std::ostream *metrics,
                          const std::string &checkpoint_dir) {
    if (scenes.empty()) throw Error("train: no usable scenes");
    TrainStats stats;
    const LossWeights weights = cfg.loss_weights();
    const int third = std::max(1, cfg.total_steps / 3);

    for (int step = start_step; step < end_step; ++step) {
        // step decay ×0.1 at each third of the schedule
        const double lr_scale = std::pow(0.1, std::min(2, step / third));
        model.params().zero_grads();
        LossBreakdown bd_accum;
        for (int b = 0; b < cfg.batch_size; ++b) {
            const size_t pick =
                hash_mix(hash_mix(cfg.seed, 0x7247ull), static_cast<uint64_t>(step) * 131 + b) %
                scenes.size();
            const TrainingScene &scene = scenes[pick];

            Tape tape(true);
            Rng drng(hash_mix(cfg.seed, 0xd20 + static_cast<uint64_t>(step) * 257 + b));
            tape.set_rng(&drng);
            ForwardResult fr = model.forward(tape, scene.features);
            PredictionSet pred = DiarizationModel::extract_prediction(fr);
            Assignment sigma = match(pred, scene.gt, weights);

            GraphLossInputs in{fr.heads.vad_logits, fr.heads.mask_logits, fr.heads.embeddings};
            LossBreakdown bd;
            Tensor loss = loss_graph(tape, in, scene.gt, sigma, weights, &bd);
            tape.backward(loss);
            bd_accum.total += bd.total;
            bd_accum.vad += bd.vad;
            bd_accum.mask += bd.mask;
            bd_accum.embed += bd.embed;
        }
        opt.step(model.params(), lr_scale);
        stats.last = bd_accum;
        ++stats.steps_done;

        if (metrics) {
            (*metrics) << "{\"step\":" << step << ",\"loss\":" << bd_accum.total
                       << ",\"vad\":" << bd_accum.vad << ",\"mask\":" << bd_accum.mask
                       << ",\"embed\":" << bd_accum.embed << ",\"lr\":" << cfg.lr * lr_scale
                       << "}\n";
        }
        if (!checkpoint_dir.empty() && cfg.checkpoint_every > 0 &&
            ((step + 1) % cfg.checkpoint_every == 0 || step + 1 == end_step)) {
            const std::string path =
                (std::filesystem::path(checkpoint_dir) / "checkpoint.bin").string();
            model.save_checkpoint(path, cfg.to_json(), &opt);
        }
    }
    return stats;
}

std::vector<SpeechSegment> infer_diarization(DiarizationModel &model, const Waveform &audio,
                                             const RunConfig &cfg) {
    Waveform normed = normalize_waveform(audio.samples);
    StitchConfig sc;
    sc.threshold = cfg.stitch_threshold;
    sc.vad_threshold = cfg.vad_threshold;
    sc.mask_threshold = cfg.mask_threshold;
    auto infer = [&](const LogMelSpectrogram &spec) { return model.predict(spec); };
    std::vector<WindowPrediction> preds = run_windows(normed, infer, cfg.window_sec, sc);
    return stitch(preds, sc);
}

} // namespace diformer
