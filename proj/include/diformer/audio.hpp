#pragma once

#include <string>
#include <vector>

#include "diformer/common.hpp"

namespace diformer {

inline constexpr int kSampleRate = 16000;

struct Waveform {
    std::vector<double> samples; // amplitudes in [-1, 1]
    int sample_rate = kSampleRate;

    double duration_sec() const {
        return static_cast<double>(samples.size()) / sample_rate;
    }
};

// Peak normalization: divides by max|x| when the peak exceeds 1 or when any
// scaling is needed to bring the signal into [-1, 1]; an all-zero signal is
// passed through unscaled. Throws InvalidAudio on empty or non-finite input.
Waveform normalize_waveform(const std::vector<double> &raw);

// Mono PCM WAV reader. Accepts 16-bit integer or 32-bit float data at 16 kHz;
// anything else is rejected with a message telling the user to convert
// (the pipeline never resamples).
Waveform read_wav(const std::string &path);

// 16-bit PCM mono writer at 16 kHz. Values are clipped to [-1, 1].
void write_wav(const std::string &path, const Waveform &w);

} // namespace diformer
