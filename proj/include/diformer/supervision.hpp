#pragma once

#include <string>
#include <vector>

#include "diformer/audio.hpp"
#include "diformer/encoder.hpp"

namespace diformer {

inline constexpr int kFrameStride = 640; // audio samples per mask frame (40 ms)

struct SpeechSegment {
    std::string speaker_id;
    double onset = 0.0;    // seconds
    double duration = 0.0; // seconds, > 0
    double offset() const { return onset + duration; }
};

struct SceneSpec {
    int num_speakers = 2;
    double total_duration = 4.0; // seconds
    double overlap_ratio = 0.1;  // overlapped / total speech time, in [0,1)
    double turn_min = 0.8;       // turn duration bounds, seconds
    double turn_max = 2.0;
    double pause_mean = 0.25; // exponential pause mean, seconds
    uint64_t seed = 0;
};

struct Scene {
    Waveform audio;
    std::vector<SpeechSegment> segments;
    std::vector<std::string> speakers; // first-appearance order
};

// Deterministic parametric voice: fundamental frequency, three formant
// resonators and a slow amplitude modulation, all derived from the speaker id.
struct VoiceProfile {
    double f0, formant[3], bandwidth[3];
    double am_rate, am_depth;
    double vib_rate, vib_depth;
    double breath;
    static VoiceProfile from_id(const std::string &speaker_id);
};

// Renders `duration` seconds of one voice. The clip seed varies prosody
// (phases, slight f0 drift) while the identity stays fixed by speaker_id.
std::vector<double> render_voice(const std::string &speaker_id, double duration,
                                 uint64_t clip_seed);

// Single-voice clip for encoder pretraining.
Waveform render_clip(const std::string &speaker_id, double duration, uint64_t clip_seed);

// Procedural multi-speaker scene. Deterministic per spec.seed; the measured
// overlap fraction lands within ±0.05 of spec.overlap_ratio. Throws
// InvalidSpec for contradictory requests (e.g. overlap with one speaker).
Scene generate_scene(const SceneSpec &spec);

// Fraction of speech time where two or more speakers are active.
double measured_overlap_ratio(const std::vector<SpeechSegment> &segments);

struct MaskBuild {
    int m = 0;
    int t_m = 0;
    std::vector<double> masks;         // m × t_m binary, speakers in first-appearance order
    std::vector<std::string> speakers; // row order
};

// Frame f of speaker s is 1 iff s is active anywhere inside
// [f·640, (f+1)·640) samples. Overlapping speakers all get 1.
MaskBuild build_masks(const std::vector<SpeechSegment> &segments, int t_m,
                      int frame_stride = kFrameStride);

struct GtEmbeddings {
    std::vector<double> embeddings; // m × D, rows follow `speakers`
    std::vector<std::string> speakers;
    int fallbacks = 0; // speakers with no clean region (full-overlap fallback)
};

// For each speaker: zero every sample where any other speaker is active and
// run the frozen encoder on the result. A speaker with no clean samples falls
// back to their full active region (counted in `fallbacks`).
GtEmbeddings build_gt_embeddings(const Waveform &audio,
                                 const std::vector<SpeechSegment> &segments,
                                 SpeakerEncoder &encoder);

} // namespace diformer
