#pragma once

#include <functional>
#include <string>
#include <vector>

#include "diformer/audio.hpp"
#include "diformer/features.hpp"
#include "diformer/matching.hpp"
#include "diformer/supervision.hpp"

namespace diformer {

// One VAD-gated slot from a window: a binarized mask over the window's frames
// plus the predicted unit speaker embedding.
struct ActiveSlot {
    std::vector<uint8_t> mask;
    std::vector<double> embedding;
};

struct WindowPrediction {
    double window_start = 0.0; // seconds
    std::vector<ActiveSlot> slots;
};

struct StitchConfig {
    double threshold = 0.4;      // cosine similarity for identity reuse
    double vad_threshold = 0.5;  // class-1 probability gate
    double mask_threshold = 0.5; // mask binarization
    // Registry representatives track the running mean of assigned embeddings
    // (re-normalized); disable to keep the first embedding frozen.
    bool update_representatives = true;
};

using WindowInferFn = std::function<PredictionSet(const LogMelSpectrogram &)>;

// Splits audio into consecutive windows (hop == window; the last window is
// zero-padded), runs `infer` on each, binarizes masks, gates by VAD and
// forces frames beyond the real audio inactive. Slots whose binarized mask is
// empty are dropped — they carry no speech. Throws InvalidAudio for input
// shorter than one mask frame.
std::vector<WindowPrediction> run_windows(const Waveform &audio, const WindowInferFn &infer,
                                          double window_sec, const StitchConfig &cfg = {});

// First-seen global speaker identities with unit-norm representatives.
struct SpeakerRegistry {
    struct Entry {
        std::string id;
        std::vector<double> representative; // unit norm
        std::vector<double> sum;            // running sum backing the mean
        int count = 0;
    };
    std::vector<Entry> entries;

    // Returns the matched registry index or -1; `best` receives the cosine.
    // Entries flagged in `excluded` are skipped (identities already claimed
    // by another slot of the same window).
    int best_match(const std::vector<double> &embedding, double *best,
                   const std::vector<char> *excluded = nullptr) const;
    int add(const std::vector<double> &embedding);
    void update(int idx, const std::vector<double> &embedding);
};

// Greedy sequential clustering across windows, in temporal order: each active
// slot joins the most similar known identity when the cosine reaches the
// threshold, otherwise founds a new one. Slots of the same window are
// distinct speakers by construction and never share an identity. Online by
// construction — the decision for window k sees only windows ≤ k. Contiguous
// same-speaker segments across window boundaries are merged in the output.
std::vector<SpeechSegment> stitch(const std::vector<WindowPrediction> &preds,
                                  const StitchConfig &cfg = {});

// Maximal runs of 1s become segments at 40 ms frame granularity.
std::vector<SpeechSegment> masks_to_segments(const std::vector<uint8_t> &mask,
                                             double window_start, const std::string &speaker,
                                             double frame_sec = 0.04);

} // namespace diformer
