#pragma once

#include <string>
#include <vector>

#include "diformer/config.hpp"
#include "diformer/features.hpp"
#include "diformer/supervision.hpp"

namespace diformer {

struct SceneRecord {
    std::string wav_path;
    std::string rttm_path;
    double duration = 0.0;
};

// Manifest: one tab-separated line per scene (wav path, rttm path, duration).
void write_manifest(const std::string &path, const std::vector<SceneRecord> &records);
std::vector<SceneRecord> read_manifest(const std::string &path);

// Writes scene WAV + RTTM pairs plus the manifest into out_dir. Refuses to
// touch a non-empty directory unless `force`. Returns the records written.
std::vector<SceneRecord> synthesize_dataset(const RunConfig &cfg, const std::string &out_dir,
                                            bool force);

// On-disk log-mel cache keyed by wav path, size and extraction parameters.
// The directory defaults to <dataset>/.feature_cache; the DIFORMER_CACHE
// environment variable overrides it.
class FeatureCache {
public:
    explicit FeatureCache(const std::string &default_dir);
    // Reads the wav, normalizes and extracts features, caching the result.
    LogMelSpectrogram get(const std::string &wav_path);
    const std::string &dir() const { return dir_; }

private:
    std::string dir_;
};

std::string path_stem(const std::string &path);

} // namespace diformer
