#include "diformer/features.hpp"

#include <algorithm>
#include <cmath>

namespace diformer {

namespace {

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

// Reflect index into [0, n) without repeating the edge sample.
int64_t reflect_index(int64_t i, int64_t n) {
    while (i < 0 || i >= n) {
        if (i < 0) i = -i;
        if (i >= n) i = 2 * n - 2 - i;
    }
    return i;
}

} // namespace

void fft_inplace(std::vector<double> &data, int n) {
    // bit-reversal permutation
    for (int i = 1, j = 0; i < n; ++i) {
        int bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) {
            std::swap(data[2 * i], data[2 * j]);
            std::swap(data[2 * i + 1], data[2 * j + 1]);
        }
    }
    for (int len = 2; len <= n; len <<= 1) {
        const double ang = -2.0 * M_PI / len;
        const double wr = std::cos(ang), wi = std::sin(ang);
        for (int i = 0; i < n; i += len) {
            double cr = 1.0, ci = 0.0;
            for (int k = 0; k < len / 2; ++k) {
                const int a = i + k, b = i + k + len / 2;
                const double ur = data[2 * a], ui = data[2 * a + 1];
                const double vr = data[2 * b] * cr - data[2 * b + 1] * ci;
                const double vi = data[2 * b] * ci + data[2 * b + 1] * cr;
                data[2 * a] = ur + vr;
                data[2 * a + 1] = ui + vi;
                data[2 * b] = ur - vr;
                data[2 * b + 1] = ui - vi;
                const double ncr = cr * wr - ci * wi;
                ci = cr * wi + ci * wr;
                cr = ncr;
            }
        }
    }
}

std::vector<double> mel_filterbank(const MelParams &p) {
    const int bins = p.n_fft / 2 + 1;
    std::vector<double> fb(static_cast<size_t>(p.n_mels) * bins, 0.0);
    const double mel_lo = hz_to_mel(p.fmin);
    const double mel_hi = hz_to_mel(p.fmax);
    std::vector<double> edges(p.n_mels + 2);
    for (int m = 0; m < p.n_mels + 2; ++m)
        edges[m] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * m / (p.n_mels + 1));
    for (int m = 0; m < p.n_mels; ++m) {
        const double lo = edges[m], center = edges[m + 1], hi = edges[m + 2];
        for (int k = 0; k < bins; ++k) {
            const double f = static_cast<double>(k) * p.sample_rate / p.n_fft;
            double w = 0.0;
            if (f >= lo && f <= center && center > lo) w = (f - lo) / (center - lo);
            else if (f > center && f <= hi && hi > center) w = (hi - f) / (hi - center);
            fb[static_cast<size_t>(m) * bins + k] = w;
        }
    }
    return fb;
}

LogMelSpectrogram compute_logmel(const Waveform &w, const MelParams &p) {
    if (w.sample_rate != p.sample_rate)
        throw InvalidAudio("compute_logmel: sample rate " + std::to_string(w.sample_rate) +
                           " != " + std::to_string(p.sample_rate));
    const int64_t n0 = static_cast<int64_t>(w.samples.size());
    if (n0 < p.win_length)
        throw InvalidAudio("compute_logmel: input shorter than one window (" +
                           std::to_string(n0) + " < " + std::to_string(p.win_length) + " samples)");
    for (double v : w.samples)
        if (!std::isfinite(v)) throw InvalidAudio("compute_logmel: non-finite sample");

    // Pad to a multiple of the hop with reflection so frames == samples/160.
    const int64_t n = ((n0 + p.hop_length - 1) / p.hop_length) * p.hop_length;
    const int frames = static_cast<int>(n / p.hop_length);

    // Hann window (periodic), zero-padded to n_fft and centered.
    std::vector<double> window(p.n_fft, 0.0);
    const int w_off = (p.n_fft - p.win_length) / 2;
    for (int i = 0; i < p.win_length; ++i)
        window[w_off + i] = 0.5 * (1.0 - std::cos(2.0 * M_PI * i / p.win_length));

    const int bins = p.n_fft / 2 + 1;
    const std::vector<double> fb = mel_filterbank(p);

    LogMelSpectrogram out;
    out.frames = frames;
    out.n_mels = p.n_mels;
    out.frame_hop = static_cast<double>(p.hop_length) / p.sample_rate;
    out.frame_win = static_cast<double>(p.win_length) / p.sample_rate;
    out.values.assign(static_cast<size_t>(frames) * p.n_mels, 0.0);

    // Materialize the hop-padded signal; centered framing reflects at its edges.
    std::vector<double> ext(n);
    for (int64_t i = 0; i < n; ++i)
        ext[i] = i < n0 ? w.samples[i] : w.samples[reflect_index(i, n0)];
    auto sample_at = [&](int64_t i) -> double { return ext[reflect_index(i, n)]; };

    const int half = p.n_fft / 2;
    std::vector<double> fft_buf;
    std::vector<double> power(bins);
    for (int f = 0; f < frames; ++f) {
        const int64_t center = static_cast<int64_t>(f) * p.hop_length;
        fft_buf.assign(static_cast<size_t>(p.n_fft) * 2, 0.0);
        for (int i = 0; i < p.n_fft; ++i) {
            const int64_t src = center - half + i;
            fft_buf[2 * i] = sample_at(src) * window[i];
        }
        fft_inplace(fft_buf, p.n_fft);
        for (int k = 0; k < bins; ++k) {
            const double re = fft_buf[2 * k], im = fft_buf[2 * k + 1];
            power[k] = re * re + im * im;
        }
        for (int m = 0; m < p.n_mels; ++m) {
            const double *row = fb.data() + static_cast<size_t>(m) * bins;
            double e = 0.0;
            for (int k = 0; k < bins; ++k) e += row[k] * power[k];
            out.values[static_cast<size_t>(f) * p.n_mels + m] =
                10.0 * std::log10(std::max(e, p.amin));
        }
    }

    // clamp dynamic range to top_db below the maximum
    const double mx = *std::max_element(out.values.begin(), out.values.end());
    const double floor_db = mx - p.top_db;
    for (auto &v : out.values) v = std::max(v, floor_db);
    return out;
}

} // namespace diformer
