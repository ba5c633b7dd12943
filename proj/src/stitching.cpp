#include "diformer/stitching.hpp"

#include <algorithm>
#include <cmath>

namespace diformer {

std::vector<WindowPrediction> run_windows(const Waveform &audio, const WindowInferFn &infer,
                                          double window_sec, const StitchConfig &cfg) {
    const int64_t n = static_cast<int64_t>(audio.samples.size());
    if (n < kFrameStride)
        throw InvalidAudio("run_windows: audio shorter than one frame (" + std::to_string(n) +
                           " samples)");
    const int64_t win = std::llround(window_sec * kSampleRate);
    if (win <= 0 || win % kFrameStride != 0)
        throw InvalidInput("run_windows: window must be a positive multiple of 40 ms");
    const int64_t num_windows = (n + win - 1) / win;

    std::vector<WindowPrediction> out;
    out.reserve(num_windows);
    for (int64_t wdx = 0; wdx < num_windows; ++wdx) {
        const int64_t begin = wdx * win;
        const int64_t valid = std::min(win, n - begin);
        Waveform chunk;
        chunk.samples.assign(win, 0.0);
        std::copy(audio.samples.begin() + begin, audio.samples.begin() + begin + valid,
                  chunk.samples.begin());
        PredictionSet ps = infer(compute_logmel(chunk));

        WindowPrediction wp;
        wp.window_start = static_cast<double>(begin) / kSampleRate;
        for (int i = 0; i < ps.n; ++i) {
            if (ps.vad_speech_prob(i) <= cfg.vad_threshold) continue;
            ActiveSlot slot;
            slot.mask.assign(ps.t_m, 0);
            bool any = false;
            for (int f = 0; f < ps.t_m; ++f) {
                if (static_cast<int64_t>(f) * kFrameStride >= valid) break; // padded region
                if (ps.masks[static_cast<size_t>(i) * ps.t_m + f] > cfg.mask_threshold) {
                    slot.mask[f] = 1;
                    any = true;
                }
            }
            if (!any) continue;
            slot.embedding.assign(
                ps.embeddings.begin() + static_cast<int64_t>(i) * ps.d_speaker,
                ps.embeddings.begin() + static_cast<int64_t>(i + 1) * ps.d_speaker);
            wp.slots.push_back(std::move(slot));
        }
        out.push_back(std::move(wp));
    }
    return out;
}

int SpeakerRegistry::best_match(const std::vector<double> &embedding, double *best,
                                const std::vector<char> *excluded) const {
    int arg = -1;
    double top = -2.0;
    for (size_t i = 0; i < entries.size(); ++i) {
        if (excluded && (*excluded)[i]) continue;
        double dot = 0.0;
        for (size_t k = 0; k < embedding.size(); ++k)
            dot += embedding[k] * entries[i].representative[k];
        if (dot > top) {
            top = dot;
            arg = static_cast<int>(i);
        }
    }
    if (best) *best = top;
    return arg;
}

int SpeakerRegistry::add(const std::vector<double> &embedding) {
    Entry e;
    e.id = "spk" + std::to_string(entries.size());
    e.sum = embedding;
    e.representative = embedding;
    e.count = 1;
    entries.push_back(std::move(e));
    return static_cast<int>(entries.size()) - 1;
}

void SpeakerRegistry::update(int idx, const std::vector<double> &embedding) {
    Entry &e = entries[idx];
    for (size_t k = 0; k < embedding.size(); ++k) e.sum[k] += embedding[k];
    ++e.count;
    double norm = 0.0;
    for (double v : e.sum) norm += v * v;
    norm = std::sqrt(norm) + 1e-12;
    for (size_t k = 0; k < e.sum.size(); ++k) e.representative[k] = e.sum[k] / norm;
}

std::vector<SpeechSegment> masks_to_segments(const std::vector<uint8_t> &mask,
                                             double window_start, const std::string &speaker,
                                             double frame_sec) {
    std::vector<SpeechSegment> segs;
    const int n = static_cast<int>(mask.size());
    int run = -1;
    for (int f = 0; f <= n; ++f) {
        const bool on = f < n && mask[f] != 0;
        if (on && run < 0) run = f;
        if (!on && run >= 0) {
            segs.push_back({speaker, window_start + run * frame_sec, (f - run) * frame_sec});
            run = -1;
        }
    }
    return segs;
}

std::vector<SpeechSegment> stitch(const std::vector<WindowPrediction> &preds,
                                  const StitchConfig &cfg) {
    SpeakerRegistry registry;
    std::vector<SpeechSegment> segments;
    for (const auto &wp : preds) {
        // Slots within one window are distinct speakers by construction (the
        // model predicts a set), so each registry identity can be claimed at
        // most once per window.
        std::vector<char> used(registry.entries.size(), 0);
        for (const auto &slot : wp.slots) {
            double best = -2.0;
            int idx = registry.best_match(slot.embedding, &best, &used);
            if (idx < 0 || best < cfg.threshold) {
                idx = registry.add(slot.embedding);
            } else if (cfg.update_representatives) {
                registry.update(idx, slot.embedding);
            }
            if (idx >= static_cast<int>(used.size())) used.resize(idx + 1, 0);
            used[idx] = 1;
            auto segs = masks_to_segments(slot.mask, wp.window_start, registry.entries[idx].id);
            segments.insert(segments.end(), segs.begin(), segs.end());
        }
    }
    // merge contiguous same-speaker runs across window boundaries
    std::stable_sort(segments.begin(), segments.end(), [](const auto &a, const auto &b) {
        if (a.speaker_id != b.speaker_id) return a.speaker_id < b.speaker_id;
        return a.onset < b.onset;
    });
    std::vector<SpeechSegment> merged;
    for (const auto &s : segments) {
        if (!merged.empty() && merged.back().speaker_id == s.speaker_id &&
            s.onset <= merged.back().offset() + 1e-9) {
            merged.back().duration =
                std::max(merged.back().offset(), s.offset()) - merged.back().onset;
        } else {
            merged.push_back(s);
        }
    }
    std::stable_sort(merged.begin(), merged.end(),
                     [](const auto &a, const auto &b) { return a.onset < b.onset; });
    return merged;
}

} // namespace diformer
