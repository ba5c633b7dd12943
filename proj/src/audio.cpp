#include "diformer/audio.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

namespace diformer {

Waveform normalize_waveform(const std::vector<double> &raw) {
    if (raw.empty()) throw InvalidAudio("normalize_waveform: empty input");
    double peak = 0.0;
    for (double v : raw) {
        if (!std::isfinite(v)) throw InvalidAudio("normalize_waveform: non-finite sample");
        peak = std::max(peak, std::fabs(v));
    }
    Waveform w;
    w.samples = raw;
    // Peak division whenever the signal is non-silent, so any prior scaling
    // is absorbed and downstream features are loudness-invariant.
    if (peak > 0.0) {
        for (auto &v : w.samples) v /= peak;
    }
    return w;
}

namespace {

uint32_t read_u32(std::istream &is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char *>(b), 4);
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

uint16_t read_u16(std::istream &is) {
    unsigned char b[2];
    is.read(reinterpret_cast<char *>(b), 2);
    return static_cast<uint16_t>(b[0] | (b[1] << 8));
}

void write_u32(std::ostream &os, uint32_t v) {
    char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                 static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
    os.write(b, 4);
}

void write_u16(std::ostream &os, uint16_t v) {
    char b[2] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff)};
    os.write(b, 2);
}

} // namespace

Waveform read_wav(const std::string &path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("read_wav: cannot open " + path);

    char tag[4];
    is.read(tag, 4);
    if (!is || std::memcmp(tag, "RIFF", 4) != 0) throw InvalidAudio(path + ": not a RIFF file");
    read_u32(is); // file size
    is.read(tag, 4);
    if (!is || std::memcmp(tag, "WAVE", 4) != 0) throw InvalidAudio(path + ": not a WAVE file");

    uint16_t format = 0, channels = 0, bits = 0;
    uint32_t rate = 0;
    bool got_fmt = false;
    std::vector<char> data;

    while (is.read(tag, 4)) {
        const uint32_t size = read_u32(is);
        if (std::memcmp(tag, "fmt ", 4) == 0) {
            if (size < 16) throw InvalidAudio(path + ": fmt chunk too small");
            format = read_u16(is);
            channels = read_u16(is);
            rate = read_u32(is);
            read_u32(is); // byte rate
            read_u16(is); // block align
            bits = read_u16(is);
            if (size > 16) is.seekg(size - 16, std::ios::cur);
            got_fmt = true;
        } else if (std::memcmp(tag, "data", 4) == 0) {
            data.resize(size);
            is.read(data.data(), size);
            break;
        } else {
            is.seekg(size + (size & 1), std::ios::cur);
        }
    }
    if (!got_fmt || data.empty()) throw InvalidAudio(path + ": missing fmt or data chunk");
    if (channels != 1) throw InvalidAudio(path + ": expected mono, got " + std::to_string(channels) + " channels");
    if (rate != kSampleRate)
        throw InvalidAudio(path + ": sample rate " + std::to_string(rate) +
                           " is unsupported; resample to 16000 Hz first");

    Waveform w;
    if (format == 1 && bits == 16) {
        const size_t n = data.size() / 2;
        w.samples.resize(n);
        for (size_t i = 0; i < n; ++i) {
            int16_t s;
            std::memcpy(&s, data.data() + 2 * i, 2);
            w.samples[i] = static_cast<double>(s) / 32768.0;
        }
    } else if (format == 3 && bits == 32) {
        const size_t n = data.size() / 4;
        w.samples.resize(n);
        for (size_t i = 0; i < n; ++i) {
            float f;
            std::memcpy(&f, data.data() + 4 * i, 4);
            w.samples[i] = f;
        }
    } else {
        throw InvalidAudio(path + ": only 16-bit PCM or 32-bit float WAV is supported");
    }
    if (w.samples.empty()) throw InvalidAudio(path + ": no samples");
    return w;
}

void write_wav(const std::string &path, const Waveform &w) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("write_wav: cannot open " + path);
    const uint32_t n = static_cast<uint32_t>(w.samples.size());
    const uint32_t data_bytes = n * 2;
    os.write("RIFF", 4);
    write_u32(os, 36 + data_bytes);
    os.write("WAVE", 4);
    os.write("fmt ", 4);
    write_u32(os, 16);
    write_u16(os, 1); // PCM
    write_u16(os, 1); // mono
    write_u32(os, kSampleRate);
    write_u32(os, kSampleRate * 2);
    write_u16(os, 2);
    write_u16(os, 16);
    os.write("data", 4);
    write_u32(os, data_bytes);
    for (double v : w.samples) {
        const double clipped = std::max(-1.0, std::min(1.0, v));
        const int32_t s = static_cast<int32_t>(std::lrint(clipped * 32767.0));
        write_u16(os, static_cast<uint16_t>(static_cast<int16_t>(s)));
    }
    if (!os) throw IoError("write_wav: write failed for " + path);
}

} // namespace diformer
