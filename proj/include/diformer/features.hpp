#pragma once

#include <vector>

#include "diformer/audio.hpp"
#include "diformer/common.hpp"

namespace diformer {

// Spectrogram extraction constants. The downsample factor from audio samples
// to spectrogram frames is hop_length = 160, so frames == samples / 160.
struct MelParams {
    int sample_rate = 16000;
    int n_fft = 512;
    int win_length = 400; // 25 ms
    int hop_length = 160; // 10 ms
    int n_mels = 80;
    double amin = 1e-5;  // power floor before the log
    double top_db = 75.0; // dynamic range clamp below the maximum
    double fmin = 0.0;
    double fmax = 8000.0;
};

struct LogMelSpectrogram {
    std::vector<double> values; // frames × n_mels, frame-major
    int frames = 0;
    int n_mels = 80;
    double frame_hop = 0.010;
    double frame_win = 0.025;

    double at(int frame, int mel) const { return values[static_cast<size_t>(frame) * n_mels + mel]; }
};

// Log-mel spectrogram in dB: 10·log10(max(power, amin)), clamped to
// [max − top_db, max]. The waveform is reflection-padded to a multiple of
// hop_length and framed centered, so frames == padded_samples / 160 exactly.
LogMelSpectrogram compute_logmel(const Waveform &w, const MelParams &params = {});

// HTK triangular mel filterbank, n_mels × (n_fft/2 + 1), row-major.
std::vector<double> mel_filterbank(const MelParams &params);

// In-place radix-2 FFT helper (n must be a power of two). `data` holds n
// interleaved complex values (re, im).
void fft_inplace(std::vector<double> &data, int n);

} // namespace diformer
