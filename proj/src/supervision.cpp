#include "diformer/supervision.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "diformer/features.hpp"

namespace diformer {

VoiceProfile VoiceProfile::from_id(const std::string &speaker_id) {
    Rng rng(hash_string(speaker_id));
    VoiceProfile v;
    v.f0 = 85.0 * std::pow(2.0, rng.uniform() * 1.9); // 85–317 Hz, log-uniform
    v.formant[0] = rng.uniform(280.0, 900.0);
    v.formant[1] = v.formant[0] + rng.uniform(350.0, 1400.0);
    v.formant[2] = v.formant[1] + rng.uniform(400.0, 1400.0);
    for (int i = 0; i < 3; ++i) v.bandwidth[i] = rng.uniform(50.0, 110.0);
    v.am_rate = rng.uniform(2.5, 6.0);
    v.am_depth = rng.uniform(0.25, 0.45);
    v.vib_rate = rng.uniform(4.0, 7.0);
    v.vib_depth = rng.uniform(0.005, 0.02);
    v.breath = rng.uniform(0.01, 0.05);
    return v;
}

std::vector<double> render_voice(const std::string &speaker_id, double duration,
                                 uint64_t clip_seed) {
    const VoiceProfile v = VoiceProfile::from_id(speaker_id);
    Rng rng(hash_mix(hash_string(speaker_id), clip_seed));
    const int n = static_cast<int>(std::llround(duration * kSampleRate));
    std::vector<double> out(n, 0.0);
    if (n == 0) return out;

    const double f0 = v.f0 * (1.0 + 0.04 * (rng.uniform() - 0.5));
    const double vib_phase = rng.uniform(0.0, 2.0 * M_PI);
    const double am_phase = rng.uniform(0.0, 2.0 * M_PI);

    // sawtooth source with vibrato plus a little aspiration noise
    double phase = rng.uniform();
    for (int i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / kSampleRate;
        const double f = f0 * (1.0 + v.vib_depth * std::sin(2.0 * M_PI * v.vib_rate * t + vib_phase));
        phase += f / kSampleRate;
        phase -= std::floor(phase);
        out[i] = 2.0 * phase - 1.0 + v.breath * rng.gaussian();
    }
    // cascade of three two-pole resonators
    for (int k = 0; k < 3; ++k) {
        const double r = std::exp(-M_PI * v.bandwidth[k] / kSampleRate);
        const double theta = 2.0 * M_PI * v.formant[k] / kSampleRate;
        const double a1 = 2.0 * r * std::cos(theta), a2 = -r * r;
        const double g = 1.0 - r;
        double y1 = 0.0, y2 = 0.0;
        for (int i = 0; i < n; ++i) {
            const double y = g * out[i] + a1 * y1 + a2 * y2;
            y2 = y1;
            y1 = y;
            out[i] = y;
        }
    }
    // amplitude modulation (syllable-like envelope) and edge fades
    const int fade = std::min(n / 2, kSampleRate / 125); // 8 ms
    for (int i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / kSampleRate;
        double env = (1.0 - v.am_depth) +
                     v.am_depth * 0.5 * (1.0 + std::sin(2.0 * M_PI * v.am_rate * t + am_phase));
        if (i < fade) env *= 0.5 * (1.0 - std::cos(M_PI * i / fade));
        if (i >= n - fade) env *= 0.5 * (1.0 - std::cos(M_PI * (n - 1 - i) / fade));
        out[i] *= env;
    }
    double peak = 0.0;
    for (double s : out) peak = std::max(peak, std::fabs(s));
    if (peak > 0.0)
        for (auto &s : out) s /= peak;
    return out;
}

Waveform render_clip(const std::string &speaker_id, double duration, uint64_t clip_seed) {
    Waveform w;
    w.samples = render_voice(speaker_id, duration, clip_seed);
    for (auto &s : w.samples) s *= 0.7;
    return w;
}

double measured_overlap_ratio(const std::vector<SpeechSegment> &segments) {
    if (segments.empty()) return 0.0;
    std::vector<std::pair<double, int>> events;
    for (const auto &s : segments) {
        events.push_back({s.onset, +1});
        events.push_back({s.offset(), -1});
    }
    std::sort(events.begin(), events.end());
    double speech = 0.0, overlap = 0.0, prev = events.front().first;
    int active = 0;
    for (const auto &[t, d] : events) {
        if (active >= 1) speech += t - prev;
        if (active >= 2) overlap += t - prev;
        active += d;
        prev = t;
    }
    return speech > 0.0 ? overlap / speech : 0.0;
}

Scene generate_scene(const SceneSpec &spec) {
    if (spec.num_speakers < 1) throw InvalidSpec("generate_scene: need at least one speaker");
    if (spec.total_duration <= 0.0) throw InvalidSpec("generate_scene: non-positive duration");
    if (spec.overlap_ratio < 0.0 || spec.overlap_ratio >= 1.0)
        throw InvalidSpec("generate_scene: overlap_ratio must be in [0,1)");
    if (spec.num_speakers == 1 && spec.overlap_ratio > 0.0)
        throw InvalidSpec("generate_scene: a single speaker cannot overlap with themselves");

    Rng rng(hash_mix(spec.seed, 0x5ce9eull));
    std::vector<std::string> ids;
    for (int k = 0; k < spec.num_speakers; ++k) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "spk%016llx",
                      static_cast<unsigned long long>(hash_mix(spec.seed, 0x900d + k)));
        ids.push_back(buf);
    }

    Scene scene;
    scene.audio.samples.assign(
        static_cast<size_t>(std::llround(spec.total_duration * kSampleRate)), 0.0);

    // first cycle visits every speaker once (shuffled), then free choice
    std::vector<int> order(spec.num_speakers);
    for (int i = 0; i < spec.num_speakers; ++i) order[i] = i;
    for (int i = spec.num_speakers - 1; i > 0; --i)
        std::swap(order[i], order[rng.uniform_index(i + 1)]);

    int prev_speaker = -1;
    double prev_end = 0.0, prev_onset = 0.0;
    int turn = 0;
    while (true) {
        int k;
        if (turn < spec.num_speakers) {
            k = order[turn];
        } else {
            do {
                k = static_cast<int>(rng.uniform_index(spec.num_speakers));
            } while (spec.num_speakers > 1 && k == prev_speaker);
        }
        const double dur = rng.uniform(spec.turn_min, spec.turn_max);
        double onset;
        if (scene.segments.empty()) {
            onset = rng.uniform(0.0, std::min(0.2, spec.total_duration * 0.05));
        } else {
            // steer the measured ratio toward the target
            const double u = [&] {
                double speech = 0.0, over = 0.0;
                std::vector<std::pair<double, int>> ev;
                for (const auto &s : scene.segments) {
                    ev.push_back({s.onset, +1});
                    ev.push_back({s.offset(), -1});
                }
                std::sort(ev.begin(), ev.end());
                double prev_t = ev.front().first;
                int act = 0;
                for (const auto &[t, d] : ev) {
                    if (act >= 1) speech += t - prev_t;
                    if (act >= 2) over += t - prev_t;
                    act += d;
                    prev_t = t;
                }
                return speech > 0 ? over / speech : 0.0;
            }();
            if (spec.overlap_ratio > 0.0 && u < spec.overlap_ratio && k != prev_speaker) {
                // choose o so that (O + o)/(U + dur − o) ≈ target
                double speech_now = 0.0;
                for (const auto &s : scene.segments) speech_now += s.duration; // upper bound on U
                const double want =
                    (spec.overlap_ratio * (speech_now + dur)) / (1.0 + spec.overlap_ratio);
                const double cap = 0.7 * std::min(dur, prev_end - prev_onset);
                const double o = std::max(0.0, std::min(want, cap));
                onset = std::max(0.0, prev_end - o);
            } else {
                double pause = rng.exponential(spec.pause_mean);
                pause = std::min(std::max(pause, 0.05), 1.0);
                onset = prev_end + pause;
            }
        }
        if (onset >= spec.total_duration - 0.15) break;
        const double d2 = std::min(dur, spec.total_duration - onset);
        if (d2 < 0.15) break;
        scene.segments.push_back({ids[k], onset, d2});
        prev_speaker = k;
        prev_onset = onset;
        prev_end = onset + d2;
        ++turn;
        if (turn > 1000) break;
    }
    if (scene.segments.empty()) {
        // degenerate durations still produce one usable turn
        const double d = std::min(spec.turn_min, spec.total_duration);
        scene.segments.push_back({ids[order[0]], 0.0, d});
    }

    // render each turn into the scene buffer
    for (size_t i = 0; i < scene.segments.size(); ++i) {
        const auto &seg = scene.segments[i];
        Rng srng(hash_mix(spec.seed, 0xc11b + i));
        const double amp = 0.25 + 0.15 * srng.uniform();
        std::vector<double> clip =
            render_voice(seg.speaker_id, seg.duration, hash_mix(spec.seed, 0x711b + i));
        const int64_t base = std::llround(seg.onset * kSampleRate);
        for (size_t s = 0; s < clip.size(); ++s) {
            const int64_t idx = base + static_cast<int64_t>(s);
            if (idx >= 0 && idx < static_cast<int64_t>(scene.audio.samples.size()))
                scene.audio.samples[idx] += amp * clip[s];
        }
    }
    double peak = 0.0;
    for (double s : scene.audio.samples) peak = std::max(peak, std::fabs(s));
    if (peak > 0.97)
        for (auto &s : scene.audio.samples) s *= 0.97 / peak;

    for (const auto &seg : scene.segments) {
        if (std::find(scene.speakers.begin(), scene.speakers.end(), seg.speaker_id) ==
            scene.speakers.end())
            scene.speakers.push_back(seg.speaker_id);
    }
    return scene;
}

MaskBuild build_masks(const std::vector<SpeechSegment> &segments, int t_m, int frame_stride) {
    MaskBuild mb;
    mb.t_m = t_m;
    for (const auto &seg : segments) {
        if (std::find(mb.speakers.begin(), mb.speakers.end(), seg.speaker_id) ==
            mb.speakers.end())
            mb.speakers.push_back(seg.speaker_id);
    }
    mb.m = static_cast<int>(mb.speakers.size());
    mb.masks.assign(static_cast<size_t>(mb.m) * t_m, 0.0);
    for (const auto &seg : segments) {
        const int row = static_cast<int>(std::find(mb.speakers.begin(), mb.speakers.end(),
                                                   seg.speaker_id) -
                                         mb.speakers.begin());
        // integer sample arithmetic avoids boundary jitter
        const int64_t on = std::llround(seg.onset * kSampleRate);
        const int64_t off = std::llround(seg.offset() * kSampleRate);
        for (int f = 0; f < t_m; ++f) {
            const int64_t f0 = static_cast<int64_t>(f) * frame_stride;
            const int64_t f1 = f0 + frame_stride;
            if (on < f1 && off > f0) mb.masks[static_cast<size_t>(row) * t_m + f] = 1.0;
        }
    }
    return mb;
}

GtEmbeddings build_gt_embeddings(const Waveform &audio, const std::vector<SpeechSegment> &segments,
                                 SpeakerEncoder &encoder) {
    GtEmbeddings out;
    for (const auto &seg : segments) {
        if (std::find(out.speakers.begin(), out.speakers.end(), seg.speaker_id) ==
            out.speakers.end())
            out.speakers.push_back(seg.speaker_id);
    }
    const int64_t n = static_cast<int64_t>(audio.samples.size());
    const int d = encoder.config().embed_dim;
    out.embeddings.reserve(out.speakers.size() * d);

    for (const auto &spk : out.speakers) {
        std::vector<char> self_active(n, 0), other_active(n, 0);
        for (const auto &seg : segments) {
            const int64_t on = std::max<int64_t>(0, std::llround(seg.onset * kSampleRate));
            const int64_t off = std::min<int64_t>(n, std::llround(seg.offset() * kSampleRate));
            auto &mask = seg.speaker_id == spk ? self_active : other_active;
            for (int64_t i = on; i < off; ++i) mask[i] = 1;
        }
        bool has_clean = false;
        for (int64_t i = 0; i < n && !has_clean; ++i)
            if (self_active[i] && !other_active[i]) has_clean = true;

        Waveform purified;
        purified.samples.assign(n, 0.0);
        if (has_clean) {
            // keep everything that is free of other speakers
            for (int64_t i = 0; i < n; ++i)
                if (!other_active[i]) purified.samples[i] = audio.samples[i];
        } else {
            // fully overlapped: fall back to the speaker's own active region
            ++out.fallbacks;
            for (int64_t i = 0; i < n; ++i)
                if (self_active[i]) purified.samples[i] = audio.samples[i];
        }
        Waveform normed = normalize_waveform(purified.samples);
        LogMelSpectrogram spec = compute_logmel(normed);
        std::vector<double> e = encoder.encode_utterance(spec);
        out.embeddings.insert(out.embeddings.end(), e.begin(), e.end());
    }
    return out;
}

} // namespace diformer
