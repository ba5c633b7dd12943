#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "diformer/config.hpp"
#include "diformer/dataset.hpp"
#include "diformer/model.hpp"
#include "diformer/stitching.hpp"

namespace diformer {

// ─── Encoder pretraining ────────────────────────────────────────────────────

struct PretrainResult {
    double held_out_accuracy = 0.0;
    int steps = 0;
};

// Cross-entropy speaker classification on synthetic voices; the classifier
// head is discarded afterwards. The last two clips of every speaker are held
// out for the accuracy estimate. Throws InvalidCorpus for fewer than two
// speakers. The encoder is left unfrozen; callers freeze() before diarization.
PretrainResult pretrain_encoder(SpeakerEncoder &encoder, const RunConfig &cfg,
                                std::ostream *log = nullptr);

// ─── Diarization training ───────────────────────────────────────────────────

// A scene with everything the loss needs, loaded once.
struct TrainingScene {
    std::string file_id;
    LogMelSpectrogram features;
    GroundTruthSet gt;
};

// Builds groundtruth (masks at t_m resolution + frozen-encoder embeddings)
// for every manifest entry. Scenes with more speakers than model slots are
// skipped with a warning (counted in `skipped`).
std::vector<TrainingScene> load_training_scenes(const std::vector<SceneRecord> &records,
                                                DiarizationModel &model, FeatureCache &cache,
                                                int *skipped, std::ostream *log = nullptr);

struct TrainStats {
    int steps_done = 0;
    int skipped_scenes = 0;
    LossBreakdown last;
};

// Single-writer training loop: one scene per step (scenes picked by a
// counter-based hash of seed and step, so resume replays the same order),
// Hungarian matching, Eq-style multitask loss, Adam with step decay ×0.1 at
// each third of total_steps. Metrics go to `metrics` as JSON lines.
TrainStats train_diarizer(DiarizationModel &model, Adam &opt,
                          const std::vector<TrainingScene> &scenes, const RunConfig &cfg,
                          int start_step, int end_step, std::ostream *metrics,
                          const std::string &checkpoint_dir = "");

// ─── Inference ──────────────────────────────────────────────────────────────

// normalize → windowed eval forwards → greedy stitching.
std::vector<SpeechSegment> infer_diarization(DiarizationModel &model, const Waveform &audio,
                                             const RunConfig &cfg);

} // namespace diformer
