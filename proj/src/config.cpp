#include "diformer/config.hpp"

#include <fstream>
#include <sstream>

namespace diformer {

RunConfig RunConfig::desk_profile() { return RunConfig{}; }

RunConfig RunConfig::reference_profile() {
    RunConfig c;
    c.profile = "reference";
    c.n_queries = 22;
    c.model_dim = 512;
    c.speaker_dim = 256;
    c.num_heads = 8;
    c.encoder_base = 64;
    c.window_sec = 12.0;
    return c;
}

namespace {

bool parse_bool(const std::string &v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ParseError("config: bad boolean '" + v + "'");
}

std::string trim(const std::string &s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    size_t b = s.find_last_not_of(" \t\r\n");
    return a == std::string::npos ? "" : s.substr(a, b - a + 1);
}

} // namespace

void RunConfig::set(const std::string &key, const std::string &value) {
    try {
        if (key == "profile") {
            if (value == "desk") *this = desk_profile();
            else if (value == "reference") *this = reference_profile();
            else throw ParseError("config: unknown profile '" + value + "'");
        } else if (key == "n_queries") n_queries = std::stoi(value);
        else if (key == "model_dim") model_dim = std::stoi(value);
        else if (key == "speaker_dim") speaker_dim = std::stoi(value);
        else if (key == "num_heads") num_heads = std::stoi(value);
        else if (key == "num_layers") num_layers = std::stoi(value);
        else if (key == "encoder_base") encoder_base = std::stoi(value);
        else if (key == "window_sec") window_sec = std::stod(value);
        else if (key == "use_bilstm_t") use_bilstm_t = parse_bool(value);
        else if (key == "alpha") alpha = std::stod(value);
        else if (key == "beta") beta = std::stod(value);
        else if (key == "use_dice") use_dice = parse_bool(value);
        else if (key == "lr") lr = std::stod(value);
        else if (key == "total_steps") total_steps = std::stoi(value);
        else if (key == "batch_size") batch_size = std::stoi(value);
        else if (key == "checkpoint_every") checkpoint_every = std::stoi(value);
        else if (key == "seed") seed = std::stoull(value);
        else if (key == "scene_count") scene_count = std::stoi(value);
        else if (key == "scene_speakers_min") scene_speakers_min = std::stoi(value);
        else if (key == "scene_speakers_max") scene_speakers_max = std::stoi(value);
        else if (key == "scene_overlap") scene_overlap = std::stod(value);
        else if (key == "scene_turn_min") scene_turn_min = std::stod(value);
        else if (key == "scene_turn_max") scene_turn_max = std::stod(value);
        else if (key == "scene_pause_mean") scene_pause_mean = std::stod(value);
        else if (key == "pretrain_speakers") pretrain_speakers = std::stoi(value);
        else if (key == "pretrain_clips") pretrain_clips = std::stoi(value);
        else if (key == "pretrain_epochs") pretrain_epochs = std::stoi(value);
        else if (key == "pretrain_clip_sec") pretrain_clip_sec = std::stod(value);
        else if (key == "pretrain_lr") pretrain_lr = std::stod(value);
        else if (key == "stitch_threshold") stitch_threshold = std::stod(value);
        else if (key == "vad_threshold") vad_threshold = std::stod(value);
        else if (key == "mask_threshold") mask_threshold = std::stod(value);
        else throw ParseError("config: unknown key '" + key + "'");
    } catch (const std::invalid_argument &) {
        throw ParseError("config: bad value '" + value + "' for key '" + key + "'");
    } catch (const std::out_of_range &) {
        throw ParseError("config: value out of range for key '" + key + "'");
    }
}

RunConfig RunConfig::from_file(const std::string &path) {
    std::ifstream is(path);
    if (!is) throw IoError("config: cannot open " + path);
    RunConfig cfg;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ParseError("config line " + std::to_string(lineno) + ": expected key = value");
        cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return cfg;
}

std::string RunConfig::to_flat() const {
    std::ostringstream os;
    os << "profile = " << profile << "\n";
    os << "n_queries = " << n_queries << "\n";
    os << "model_dim = " << model_dim << "\n";
    os << "speaker_dim = " << speaker_dim << "\n";
    os << "num_heads = " << num_heads << "\n";
    os << "num_layers = " << num_layers << "\n";
    os << "encoder_base = " << encoder_base << "\n";
    os << "window_sec = " << window_sec << "\n";
    os << "use_bilstm_t = " << (use_bilstm_t ? "true" : "false") << "\n";
    os << "alpha = " << alpha << "\n";
    os << "beta = " << beta << "\n";
    os << "use_dice = " << (use_dice ? "true" : "false") << "\n";
    os << "lr = " << lr << "\n";
    os << "total_steps = " << total_steps << "\n";
    os << "batch_size = " << batch_size << "\n";
    os << "checkpoint_every = " << checkpoint_every << "\n";
    os << "seed = " << seed << "\n";
    os << "scene_count = " << scene_count << "\n";
    os << "scene_speakers_min = " << scene_speakers_min << "\n";
    os << "scene_speakers_max = " << scene_speakers_max << "\n";
    os << "scene_overlap = " << scene_overlap << "\n";
    os << "scene_turn_min = " << scene_turn_min << "\n";
    os << "scene_turn_max = " << scene_turn_max << "\n";
    os << "scene_pause_mean = " << scene_pause_mean << "\n";
    os << "pretrain_speakers = " << pretrain_speakers << "\n";
    os << "pretrain_clips = " << pretrain_clips << "\n";
    os << "pretrain_epochs = " << pretrain_epochs << "\n";
    os << "pretrain_clip_sec = " << pretrain_clip_sec << "\n";
    os << "pretrain_lr = " << pretrain_lr << "\n";
    os << "stitch_threshold = " << stitch_threshold << "\n";
    os << "vad_threshold = " << vad_threshold << "\n";
    os << "mask_threshold = " << mask_threshold << "\n";
    return os.str();
}

nlohmann::json RunConfig::to_json() const {
    nlohmann::json j;
    std::istringstream is(to_flat());
    std::string line;
    while (std::getline(is, line)) {
        const size_t eq = line.find('=');
        j[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    return j;
}

RunConfig RunConfig::from_json(const nlohmann::json &j) {
    RunConfig cfg;
    if (j.contains("profile")) cfg.set("profile", j["profile"].get<std::string>());
    for (const auto &[k, v] : j.items()) {
        if (k == "profile") continue;
        cfg.set(k, v.get<std::string>());
    }
    return cfg;
}

EncoderConfig RunConfig::encoder_config() const {
    EncoderConfig ec;
    ec.base_channels = encoder_base;
    ec.embed_dim = speaker_dim;
    return ec;
}

ModelConfig RunConfig::model_config() const {
    ModelConfig mc;
    mc.n_queries = n_queries;
    mc.model_dim = model_dim;
    mc.speaker_dim = speaker_dim;
    mc.num_heads = num_heads;
    mc.num_layers = num_layers;
    mc.use_bilstm_t = use_bilstm_t;
    return mc;
}

LossWeights RunConfig::loss_weights() const {
    LossWeights w;
    w.alpha = alpha;
    w.beta = beta;
    w.use_dice = use_dice;
    return w;
}

} // namespace diformer
