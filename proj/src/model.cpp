#include "diformer/model.hpp"

#include "diformer/weights.hpp"

namespace diformer {

nlohmann::json ModelConfig::to_json() const {
    return {{"n_queries", n_queries},   {"model_dim", model_dim},
            {"speaker_dim", speaker_dim}, {"num_heads", num_heads},
            {"num_layers", num_layers},   {"head_dropout", head_dropout},
            {"use_bilstm_t", use_bilstm_t}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json &j) {
    ModelConfig c;
    c.n_queries = j.at("n_queries").get<int>();
    c.model_dim = j.at("model_dim").get<int>();
    c.speaker_dim = j.at("speaker_dim").get<int>();
    c.num_heads = j.at("num_heads").get<int>();
    c.num_layers = j.at("num_layers").get<int>();
    c.head_dropout = j.value("head_dropout", 0.1);
    c.use_bilstm_t = j.value("use_bilstm_t", true);
    return c;
}

DiarizationModel::DiarizationModel(std::shared_ptr<SpeakerEncoder> encoder, ModelConfig cfg,
                                   uint64_t seed)
    : cfg_(cfg), encoder_(std::move(encoder)) {
    const EncoderConfig &ec = encoder_->config();
    if (cfg_.speaker_dim != ec.embed_dim)
        throw Error("model: speaker_dim " + std::to_string(cfg_.speaker_dim) +
                    " must equal the encoder embedding dim " + std::to_string(ec.embed_dim) +
                    " (groundtruth embeddings come from the encoder)");
    const int c_width = ec.tap_high_channels() * (ec.n_mels / 4);

    fpn_ = std::make_unique<FpnFusion>(params_, ec.tap_high_channels(), ec.tap_low_channels(),
                                       hash_mix(seed, 1));
    TransformerConfig tc;
    tc.input_dim = c_width;
    tc.model_dim = cfg_.model_dim;
    tc.num_heads = cfg_.num_heads;
    tc.num_layers = cfg_.num_layers;
    tc.num_queries = cfg_.n_queries;
    transformer_ = std::make_unique<TransformerCore>(params_, tc, hash_mix(seed, 2));

    HeadsConfig hc;
    hc.model_dim = cfg_.model_dim;
    hc.speaker_dim = cfg_.speaker_dim;
    hc.temporal_in = c_width;
    hc.dropout = cfg_.head_dropout;
    hc.use_bilstm_t = cfg_.use_bilstm_t;
    heads_ = std::make_unique<PredictionHeads>(params_, hc, hash_mix(seed, 3));
}

ForwardResult DiarizationModel::forward(Tape &tape, const LogMelSpectrogram &spec,
                                        AttentionTrace *trace) {
    ForwardResult fr;
    MultiScaleFeatures ms = encoder_->forward_multiscale(tape, spec);
    fr.temporal = fpn_->forward(tape, ms);
    fr.t_m = fr.temporal.shape().rows();
    fr.memory = transformer_->encode(tape, fr.temporal, trace);
    fr.slots = transformer_->decode(tape, transformer_->queries_leaf(tape), fr.memory, trace);
    fr.heads = heads_->forward(tape, fr.slots, fr.temporal);
    return fr;
}

PredictionSet DiarizationModel::extract_prediction(const ForwardResult &fr) {
    PredictionSet ps;
    ps.n = fr.heads.vad_probs.shape().rows();
    ps.t_m = fr.heads.masks.shape().cols();
    ps.d_speaker = fr.heads.embeddings.shape().cols();
    ps.vad = fr.heads.vad_probs.value();
    ps.masks = fr.heads.masks.value();
    ps.embeddings = fr.heads.embeddings.value();
    return ps;
}

PredictionSet DiarizationModel::predict(const LogMelSpectrogram &spec) {
    Tape tape(false);
    ForwardResult fr = forward(tape, spec);
    return extract_prediction(fr);
}

void DiarizationModel::save_checkpoint(const std::string &path, const nlohmann::json &run_config,
                                       const Adam *opt_state) const {
    WeightsArchive a;
    a.config = {{"kind", "diformer_checkpoint"},
                {"encoder", encoder_->config().to_json()},
                {"model", cfg_.to_json()},
                {"run", run_config}};
    if (opt_state) a.config["adam_steps"] = opt_state->steps_done();
    a.add_store("encoder.", encoder_->params());
    a.add_store("model.", params_);
    if (opt_state) a.add_adam_state("opt.model.", params_);
    a.save(path);
}

DiarizationModel::Loaded DiarizationModel::load_checkpoint(const std::string &path) {
    WeightsArchive a = WeightsArchive::load(path);
    if (a.config.value("kind", "") != "diformer_checkpoint")
        throw Error("checkpoint: " + path + " is not a diarizer checkpoint");
    EncoderConfig ec = EncoderConfig::from_json(a.config.at("encoder"));
    ModelConfig mc = ModelConfig::from_json(a.config.at("model"));
    auto enc = std::make_shared<SpeakerEncoder>(ec, 0);
    a.load_store("encoder.", enc->params());
    enc->freeze();
    Loaded out;
    out.model = std::make_unique<DiarizationModel>(enc, mc, 0);
    a.load_store("model.", out.model->params());
    out.run_config = a.config.value("run", nlohmann::json::object());
    for (const auto &t : a.tensors()) {
        if (t.name.rfind("opt.model.", 0) == 0) {
            out.has_adam_state = true;
            break;
        }
    }
    return out;
}

void DiarizationModel::load_adam_state(const std::string &path, ParamStore &params) {
    WeightsArchive a = WeightsArchive::load(path);
    a.load_adam_state("opt.model.", params);
}

} // namespace diformer
