#include "diformer/dataset.hpp"

#include <cstdio>
#include <cstring>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "diformer/der.hpp"

namespace fs = std::filesystem;

namespace diformer {

void write_manifest(const std::string &path, const std::vector<SceneRecord> &records) {
    std::ofstream os(path);
    if (!os) throw IoError("manifest: cannot open " + path + " for writing");
    for (const auto &r : records) {
        char line[1024];
        std::snprintf(line, sizeof(line), "%s\t%s\t%.3f\n", r.wav_path.c_str(),
                      r.rttm_path.c_str(), r.duration);
        os << line;
    }
}

std::vector<SceneRecord> read_manifest(const std::string &path) {
    std::ifstream is(path);
    if (!is) throw IoError("manifest: cannot open " + path);
    std::vector<SceneRecord> out;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ls(line);
        SceneRecord r;
        if (!(ls >> r.wav_path >> r.rttm_path >> r.duration))
            throw ParseError("manifest line " + std::to_string(lineno) + ": expected wav, rttm, duration");
        out.push_back(std::move(r));
    }
    return out;
}

std::vector<SceneRecord> synthesize_dataset(const RunConfig &cfg, const std::string &out_dir,
                                            bool force) {
    fs::path dir(out_dir);
    if (fs::exists(dir) && !fs::is_empty(dir)) {
        if (!force)
            throw Error("synth-data: output directory " + out_dir +
                        " is not empty; pass --force to regenerate");
        fs::remove_all(dir);
    }
    fs::create_directories(dir);

    Rng rng(hash_mix(cfg.seed, 0xda7aull));
    std::vector<SceneRecord> records;
    for (int i = 0; i < cfg.scene_count; ++i) {
        SceneSpec spec;
        spec.seed = hash_mix(cfg.seed, 0x5ce0 + i);
        const int span = cfg.scene_speakers_max - cfg.scene_speakers_min + 1;
        spec.num_speakers =
            cfg.scene_speakers_min + static_cast<int>(hash_mix(spec.seed, 1) % span);
        spec.total_duration = cfg.window_sec;
        spec.overlap_ratio = spec.num_speakers > 1 ? cfg.scene_overlap : 0.0;
        spec.turn_min = cfg.scene_turn_min;
        spec.turn_max = cfg.scene_turn_max;
        spec.pause_mean = cfg.scene_pause_mean;
        Scene scene = generate_scene(spec);

        char name[64];
        std::snprintf(name, sizeof(name), "scene_%04d", i);
        SceneRecord rec;
        rec.wav_path = (dir / (std::string(name) + ".wav")).string();
        rec.rttm_path = (dir / (std::string(name) + ".rttm")).string();
        rec.duration = spec.total_duration;
        write_wav(rec.wav_path, scene.audio);
        std::vector<RttmSegment> rows;
        for (const auto &seg : scene.segments) rows.push_back(to_rttm(seg, name));
        write_rttm_file(rec.rttm_path, rows);
        records.push_back(std::move(rec));
    }
    write_manifest((dir / "manifest.txt").string(), records);
    return records;
}

FeatureCache::FeatureCache(const std::string &default_dir) {
    const char *env = std::getenv("DIFORMER_CACHE");
    dir_ = env && *env ? env : default_dir;
    if (!dir_.empty()) fs::create_directories(dir_);
}

LogMelSpectrogram FeatureCache::get(const std::string &wav_path) {
    const MelParams params;
    std::string cache_file;
    if (!dir_.empty()) {
        uint64_t key = hash_string(wav_path);
        std::error_code ec;
        const auto size = fs::file_size(wav_path, ec);
        if (!ec) key = hash_mix(key, size);
        key = hash_mix(key, static_cast<uint64_t>(params.n_fft * 1000003 + params.n_mels));
        char name[64];
        std::snprintf(name, sizeof(name), "%016llx.fea", static_cast<unsigned long long>(key));
        cache_file = (fs::path(dir_) / name).string();
        std::ifstream is(cache_file, std::ios::binary);
        if (is) {
            char magic[4];
            uint32_t frames = 0, mels = 0;
            is.read(magic, 4);
            is.read(reinterpret_cast<char *>(&frames), 4);
            is.read(reinterpret_cast<char *>(&mels), 4);
            if (is && std::memcmp(magic, "DIFC", 4) == 0) {
                LogMelSpectrogram spec;
                spec.frames = static_cast<int>(frames);
                spec.n_mels = static_cast<int>(mels);
                spec.values.resize(static_cast<size_t>(frames) * mels);
                is.read(reinterpret_cast<char *>(spec.values.data()),
                        static_cast<std::streamsize>(spec.values.size() * sizeof(double)));
                if (is) return spec;
            }
        }
    }
    Waveform w = read_wav(wav_path);
    Waveform normed = normalize_waveform(w.samples);
    LogMelSpectrogram spec = compute_logmel(normed, params);
    if (!cache_file.empty()) {
        std::ofstream os(cache_file, std::ios::binary);
        if (os) {
            const uint32_t frames = static_cast<uint32_t>(spec.frames);
            const uint32_t mels = static_cast<uint32_t>(spec.n_mels);
            os.write("DIFC", 4);
            os.write(reinterpret_cast<const char *>(&frames), 4);
            os.write(reinterpret_cast<const char *>(&mels), 4);
            os.write(reinterpret_cast<const char *>(spec.values.data()),
                     static_cast<std::streamsize>(spec.values.size() * sizeof(double)));
        }
    }
    return spec;
}

std::string path_stem(const std::string &path) { return fs::path(path).stem().string(); }

} // namespace diformer
