// Acceptance suite: runs every release criterion at its pinned tolerance and
// prints one PASS/FAIL line per criterion. Exits nonzero if any fail.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <vector>

#include "diformer/config.hpp"
#include "diformer/dataset.hpp"
#include "diformer/der.hpp"
#include "diformer/trainer.hpp"
#include "test_support.hpp"

namespace fs = std::filesystem;
using namespace diformer;

namespace {

struct Result {
    int id = 0;
    bool pass = false;
    std::string detail;
};

double now_sec() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

std::vector<double> random_unit(Rng &rng, int d) {
    std::vector<double> v(d);
    double norm = 0.0;
    for (auto &x : v) {
        x = rng.gaussian();
        norm += x * x;
    }
    norm = std::sqrt(norm);
    for (auto &x : v) x /= norm;
    return v;
}

PredictionSet random_prediction(Rng &rng, int n, int t_m, int d) {
    PredictionSet p;
    p.n = n;
    p.t_m = t_m;
    p.d_speaker = d;
    p.vad.resize(2 * n);
    for (int i = 0; i < n; ++i) {
        const double a = rng.uniform(0.05, 0.95);
        p.vad[2 * i] = 1.0 - a;
        p.vad[2 * i + 1] = a;
    }
    p.masks.resize(static_cast<size_t>(n) * t_m);
    for (auto &m : p.masks) m = rng.uniform(0.02, 0.98);
    for (int i = 0; i < n; ++i) {
        auto e = random_unit(rng, d);
        p.embeddings.insert(p.embeddings.end(), e.begin(), e.end());
    }
    return p;
}

GroundTruthSet random_gt(Rng &rng, int n, int m, int t_m, int d) {
    std::vector<double> masks(static_cast<size_t>(m) * t_m);
    for (auto &v : masks) v = rng.uniform() < 0.4 ? 1.0 : 0.0;
    std::vector<double> embeds;
    for (int j = 0; j < m; ++j) {
        auto e = random_unit(rng, d);
        embeds.insert(embeds.end(), e.begin(), e.end());
    }
    return GroundTruthSet::pad(n, t_m, d, masks, embeds, m);
}

// ─── Criterion 1: Hungarian vs exhaustive oracle ────────────────────────────

Result criterion_1() {
    Result r{1};
    const double t0 = now_sec();
    Rng rng(0x5eed01);
    int exact = 0;
    const int trials = 500;
    for (int t = 0; t < trials; ++t) {
        const int n = 2 + static_cast<int>(rng.uniform_index(6)); // 2..7
        std::vector<double> cost(static_cast<size_t>(n) * n);
        for (auto &c : cost) c = rng.uniform(-5.0, 5.0);
        Assignment a = hungarian(cost, n);
        if (assignment_cost(cost, n, a) == testsup::brute_force_assignment(cost, n)) ++exact;
    }
    const double elapsed = now_sec() - t0;
    r.pass = exact == trials && elapsed < 10.0;
    std::ostringstream os;
    os << exact << "/" << trials << " totals exactly equal the exhaustive minimum, "
       << std::fixed << elapsed << " s";
    r.detail = os.str();
    return r;
}

// ─── Criterion 2: loss permutation invariance ───────────────────────────────

Result criterion_2() {
    Result r{2};
    Rng rng(0x5eed02);
    const int n = 8, t_m = 20, d = 8;
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        PredictionSet p = random_prediction(rng, n, t_m, d);
        GroundTruthSet gt = random_gt(rng, n, 1 + static_cast<int>(rng.uniform_index(n)), t_m, d);
        const double base = compute_loss(p, gt, match(p, gt)).total;

        std::vector<int> perm(n);
        for (int i = 0; i < n; ++i) perm[i] = i;
        for (int i = n - 1; i > 0; --i) std::swap(perm[i], perm[rng.uniform_index(i + 1)]);
        PredictionSet q = p;
        for (int i = 0; i < n; ++i) {
            for (int c = 0; c < 2; ++c) q.vad[2 * perm[i] + c] = p.vad[2 * i + c];
            for (int f = 0; f < t_m; ++f) q.masks[perm[i] * t_m + f] = p.masks[i * t_m + f];
            for (int k = 0; k < d; ++k) q.embeddings[perm[i] * d + k] = p.embeddings[i * d + k];
        }
        const double permuted = compute_loss(q, gt, match(q, gt)).total;
        worst = std::max(worst, std::fabs(permuted - base));
    }
    r.pass = worst < 1e-6;
    std::ostringstream os;
    os << "worst |Δloss| over 100 slot permutations: " << std::scientific << worst;
    r.detail = os.str();
    return r;
}

// ─── Criterion 3: gradient checks ───────────────────────────────────────────

Result criterion_3() {
    Result r{3};
    Rng rng(0x5eed03);
    const int n = 3, t_m = 5;

    // (a) compute_loss with sigma fixed, wrt vad logits / mask logits / embeddings
    GroundTruthSet gt = random_gt(rng, n, 2, t_m, 4);
    Assignment sigma;
    sigma.sigma = {2, 0, 1};
    std::vector<double> vad_logits(n * 2), mask_logits(n * t_m), embeds;
    for (auto &v : vad_logits) v = rng.gaussian();
    for (auto &v : mask_logits) v = rng.gaussian();
    for (int i = 0; i < n; ++i) {
        auto e = random_unit(rng, 4);
        embeds.insert(embeds.end(), e.begin(), e.end());
    }
    auto loss_eval = [&](const std::vector<double> &vl, const std::vector<double> &ml,
                         const std::vector<double> &em, std::vector<double> *gv,
                         std::vector<double> *gm, std::vector<double> *ge) {
        Tape tape(false);
        ParamStore ps;
        Param &pv = ps.add("v", Shape::mat(n, 2));
        pv.value = vl;
        Param &pm = ps.add("m", Shape::mat(n, t_m));
        pm.value = ml;
        Param &pe = ps.add("e", Shape::mat(n, 4));
        pe.value = em;
        GraphLossInputs in{tape.leaf(pv), tape.leaf(pm), tape.leaf(pe)};
        Tensor loss = loss_graph(tape, in, gt, sigma, LossWeights{});
        if (gv) {
            tape.backward(loss);
            *gv = pv.grad;
            *gm = pm.grad;
            *ge = pe.grad;
        }
        return loss.item();
    };
    std::vector<double> gv, gm, ge;
    loss_eval(vad_logits, mask_logits, embeds, &gv, &gm, &ge);
    double worst = 0.0;
    worst = std::max(worst,
                     testsup::max_rel_grad_error(
                         vad_logits,
                         [&](const std::vector<double> &x) {
                             return loss_eval(x, mask_logits, embeds, nullptr, nullptr, nullptr);
                         },
                         gv));
    worst = std::max(worst,
                     testsup::max_rel_grad_error(
                         mask_logits,
                         [&](const std::vector<double> &x) {
                             return loss_eval(vad_logits, x, embeds, nullptr, nullptr, nullptr);
                         },
                         gm));
    worst = std::max(worst,
                     testsup::max_rel_grad_error(
                         embeds,
                         [&](const std::vector<double> &x) {
                             return loss_eval(vad_logits, mask_logits, x, nullptr, nullptr, nullptr);
                         },
                         ge));

    // (b) full forward pass on the tiny config (N=3, d=8, t_m=5)
    EncoderConfig ec;
    ec.base_channels = 2;
    ec.embed_dim = 4;
    auto enc = std::make_shared<SpeakerEncoder>(ec, 31);
    enc->freeze();
    ModelConfig mc;
    mc.n_queries = 3;
    mc.model_dim = 8;
    mc.speaker_dim = 4;
    mc.num_heads = 2;
    mc.num_layers = 3;
    DiarizationModel model(enc, mc, 32);

    LogMelSpectrogram spec;
    spec.frames = 20; // t_m = 5
    spec.n_mels = 80;
    spec.values.resize(20 * 80);
    for (auto &v : spec.values) v = rng.uniform(-40.0, 10.0);
    GroundTruthSet gt2 = random_gt(rng, 3, 2, 5, 4);

    Assignment sigma2;
    {
        Tape tape(false);
        ForwardResult fr = model.forward(tape, spec);
        sigma2 = match(DiarizationModel::extract_prediction(fr), gt2);
    }
    auto fwd_loss = [&](bool backward) {
        Tape tape(false); // eval mode: deterministic (no dropout)
        ForwardResult fr = model.forward(tape, spec);
        GraphLossInputs in{fr.heads.vad_logits, fr.heads.mask_logits, fr.heads.embeddings};
        Tensor loss = loss_graph(tape, in, gt2, sigma2, LossWeights{});
        if (backward) tape.backward(loss);
        return loss.item();
    };
    model.params().zero_grads();
    fwd_loss(true);
    std::vector<std::pair<Param *, std::vector<double>>> grads;
    for (auto &p : model.params().all()) {
        if (!p->trainable) continue;
        grads.push_back({p.get(), p->grad});
    }
    int64_t checked = 0;
    double worst_fwd = 0.0;
    for (auto &[p, g] : grads) {
        for (int64_t i = 0; i < p->numel(); ++i) {
            const double orig = p->value[i];
            const double h = 1e-5 * (1.0 + std::fabs(orig));
            p->value[i] = orig + h;
            const double fp = fwd_loss(false);
            p->value[i] = orig - h;
            const double fm = fwd_loss(false);
            p->value[i] = orig;
            const double fd = (fp - fm) / (2.0 * h);
            ++checked;
            if (std::fabs(g[i]) <= 1e-6 && std::fabs(fd) <= 1e-6) continue;
            const double rel =
                std::fabs(g[i] - fd) / std::max(std::max(std::fabs(g[i]), std::fabs(fd)), 1e-6);
            worst_fwd = std::max(worst_fwd, rel);
        }
    }
    r.pass = worst < 1e-3 && worst_fwd < 1e-3;
    std::ostringstream os;
    os << "loss-grad rel err " << std::scientific << worst << ", full-forward rel err "
       << worst_fwd << " over " << checked << " parameters";
    r.detail = os.str();
    return r;
}

// ─── Criterion 4: shape contract ────────────────────────────────────────────

Result criterion_4() {
    Result r{4};
    std::ostringstream os;
    bool ok = true;
    {
        RunConfig desk = RunConfig::desk_profile();
        auto enc = std::make_shared<SpeakerEncoder>(desk.encoder_config(), 41);
        enc->freeze();
        DiarizationModel model(enc, desk.model_config(), 42);
        Rng rng(43);
        std::vector<double> x(4 * 16000);
        for (auto &v : x) v = rng.uniform(-0.5, 0.5);
        PredictionSet ps = model.predict(compute_logmel(normalize_waveform(x)));
        ok = ok && ps.n == 8 && ps.t_m == 100;
        os << "desk masks " << ps.n << "x" << ps.t_m;
    }
    {
        RunConfig ref_cfg = RunConfig::reference_profile();
        auto enc = std::make_shared<SpeakerEncoder>(ref_cfg.encoder_config(), 44);
        enc->freeze();
        DiarizationModel model(enc, ref_cfg.model_config(), 45);
        const int fpn_width = enc->config().tap_high_channels() * (enc->config().n_mels / 4);
        Rng rng(46);
        std::vector<double> x(12 * 16000);
        for (auto &v : x) v = rng.uniform(-0.5, 0.5);
        LogMelSpectrogram spec = compute_logmel(normalize_waveform(x));
        Tape tape(false);
        ForwardResult fr = model.forward(tape, spec);
        PredictionSet ps = DiarizationModel::extract_prediction(fr);
        const int fused_width = fr.temporal.shape().cols();
        ok = ok && ps.n == 22 && ps.t_m == 300 && fused_width == 2560 && fpn_width == 2560;
        os << "; reference masks " << ps.n << "x" << ps.t_m << ", FPN width " << fused_width;
    }
    r.pass = ok;
    r.detail = os.str();
    return r;
}

// ─── Criterion 6: DER interval engine vs 1 ms oracle ────────────────────────

Result criterion_6() {
    Result r{6};
    Rng rng(0x5eed06);
    double worst = 0.0;
    int compared = 0;
    bool validity_agreement = true;
    for (int cases = 0; cases < 50; ++cases) {
        std::vector<RttmSegment> ref, hyp;
        const int nr = 1 + static_cast<int>(rng.uniform_index(5));
        const int nh = 1 + static_cast<int>(rng.uniform_index(5));
        for (int i = 0; i < nr; ++i)
            ref.push_back({"f", 0.01 * std::floor(rng.uniform(0, 1000)),
                           0.01 * std::floor(rng.uniform(20, 400)),
                           "r" + std::to_string(rng.uniform_index(3))});
        for (int i = 0; i < nh; ++i)
            hyp.push_back({"f", 0.01 * std::floor(rng.uniform(0, 1000)),
                           0.01 * std::floor(rng.uniform(20, 400)),
                           "h" + std::to_string(rng.uniform_index(3))});
        for (double collar : {0.0, 0.25}) {
            for (bool ignore : {false, true}) {
                DerReport rep = compute_der(ref, hyp, {collar, ignore});
                auto oracle = testsup::frame_der_oracle(ref, hyp, collar, ignore);
                if (rep.valid != oracle.valid) validity_agreement = false;
                if (!rep.valid || !oracle.valid) continue;
                worst = std::max(worst, std::fabs(rep.der - oracle.der));
                ++compared;
            }
        }
    }
    r.pass = worst < 0.05 && validity_agreement && compared >= 150;
    std::ostringstream os;
    os << "worst |ΔDER| " << std::fixed << worst << " pp over 50 cases x 4 flag combos ("
       << compared << " scored comparisons, validity always agreed: "
       << (validity_agreement ? "yes" : "no") << ")";
    r.detail = os.str();
    return r;
}

// ─── Criterion 7: stitching with oracle embeddings ──────────────────────────

Result criterion_7() {
    Result r{7};
    SceneSpec spec;
    spec.seed = 0x5eed07;
    spec.num_speakers = 3;
    spec.total_duration = 60.0;
    spec.overlap_ratio = 0.15;
    spec.turn_min = 1.2;
    spec.turn_max = 2.5;
    spec.pause_mean = 0.5;
    Scene scene = generate_scene(spec);

    const int d = 8;
    std::vector<std::string> speakers = scene.speakers;

    const double window = 12.0;
    const int frames_per_window = static_cast<int>(window * 16000) / kFrameStride;
    std::vector<WindowPrediction> preds;
    for (int w = 0; w < 5; ++w) {
        WindowPrediction wp;
        wp.window_start = w * window;
        for (size_t s = 0; s < speakers.size(); ++s) {
            ActiveSlot slot;
            slot.mask.assign(frames_per_window, 0);
            bool any = false;
            for (int f = 0; f < frames_per_window; ++f) {
                const int64_t f0 = (static_cast<int64_t>(w) * frames_per_window + f) * kFrameStride;
                const int64_t f1 = f0 + kFrameStride;
                for (const auto &seg : scene.segments) {
                    if (seg.speaker_id != speakers[s]) continue;
                    const int64_t on = std::llround(seg.onset * 16000.0);
                    const int64_t off = std::llround(seg.offset() * 16000.0);
                    if (on < f1 && off > f0) {
                        slot.mask[f] = 1;
                        any = true;
                    }
                }
            }
            if (!any) continue;
            std::vector<double> e(d, 0.0); // oracle embedding: one axis per speaker
            e[s] = 1.0;
            slot.embedding = e;
            wp.slots.push_back(std::move(slot));
        }
        preds.push_back(std::move(wp));
    }

    auto stitched = stitch(preds, StitchConfig{});
    std::set<std::string> ids;
    for (const auto &s : stitched) ids.insert(s.speaker_id);

    // every true turn must round-trip to a stitched segment of a consistent
    // global id with both boundaries within one frame
    double worst_boundary = 0.0;
    std::map<std::string, std::string> true_to_global;
    bool consistent = true;
    for (const auto &seg : scene.segments) {
        double best = 1e9;
        const SpeechSegment *hit = nullptr;
        for (const auto &st : stitched) {
            const double diff =
                std::max(std::fabs(st.onset - seg.onset), std::fabs(st.offset() - seg.offset()));
            if (diff < best) {
                best = diff;
                hit = &st;
            }
        }
        worst_boundary = std::max(worst_boundary, best);
        if (hit) {
            auto it = true_to_global.find(seg.speaker_id);
            if (it == true_to_global.end()) true_to_global[seg.speaker_id] = hit->speaker_id;
            else if (it->second != hit->speaker_id) consistent = false;
        }
    }
    r.pass = ids.size() == 3 && worst_boundary <= 0.04 + 1e-9 && consistent;
    std::ostringstream os;
    os << ids.size() << " global ids over " << scene.segments.size()
       << " turns, worst boundary drift " << std::fixed << worst_boundary
       << " s, id mapping consistent: " << (consistent ? "yes" : "no");
    r.detail = os.str();
    return r;
}

// ─── Criterion 8: BiLSTM-T smoothing ablation ───────────────────────────────

Result criterion_8() {
    Result r{8};
    const int n = 4, t_m = 50, c = 16, d = 32;
    std::vector<double> diffs;
    for (uint64_t seed = 0; seed < 100; ++seed) {
        Rng rng(0x5eed08 + seed * 977);
        std::vector<double> slots_data(n * d), temp_data(static_cast<size_t>(t_m) * c);
        for (auto &v : slots_data) v = rng.gaussian();
        for (auto &v : temp_data) v = rng.gaussian(); // white noise in time
        double tv[2] = {0.0, 0.0};
        for (int variant = 0; variant < 2; ++variant) {
            ParamStore ps;
            HeadsConfig cfg;
            cfg.model_dim = d;
            cfg.speaker_dim = 8;
            cfg.temporal_in = c;
            cfg.use_bilstm_t = variant == 0;
            PredictionHeads heads(ps, cfg, 1000 + seed);
            Tape tape(false);
            Tensor slots = tape.constant(slots_data, Shape::mat(n, d));
            Tensor temporal = tape.constant(temp_data, Shape::mat(t_m, c));
            const auto masks = heads.forward(tape, slots, temporal).masks.value();
            double total = 0.0;
            for (int i = 0; i < n; ++i)
                for (int f = 0; f + 1 < t_m; ++f)
                    total += std::fabs(masks[i * t_m + f + 1] - masks[i * t_m + f]);
            tv[variant] = total / (n * (t_m - 1));
        }
        diffs.push_back(tv[1] - tv[0]); // ablated − enabled; positive ⇒ LSTM smooths
    }
    double mean = 0.0;
    for (double v : diffs) mean += v;
    mean /= static_cast<double>(diffs.size());
    double var = 0.0;
    for (double v : diffs) var += (v - mean) * (v - mean);
    var /= static_cast<double>(diffs.size() - 1);
    const double t_stat = mean / std::sqrt(var / static_cast<double>(diffs.size()));
    // one-sided p < 0.01 at df = 99 → t > 2.3646
    r.pass = mean > 0.0 && t_stat > 2.3646;
    std::ostringstream os;
    os << "mean smoothing gain " << std::scientific << mean << ", paired t = " << std::fixed
       << t_stat << " (need > 2.3646)";
    r.detail = os.str();
    return r;
}

// ─── Criteria 9, 5, 10: pretraining, overfit run, frozen-encoder law ────────

struct HeavyResults {
    Result c9, c5, c10;
};

HeavyResults heavy_criteria(const std::string &workdir) {
    HeavyResults out;
    out.c9.id = 9;
    out.c5.id = 5;
    out.c10.id = 10;

    RunConfig cfg = RunConfig::desk_profile();
    cfg.seed = 0x5eed09;
    cfg.pretrain_speakers = 64;
    cfg.pretrain_clips = 12; // last two per speaker held out
    cfg.pretrain_epochs = 8;
    cfg.pretrain_clip_sec = 1.5;
    cfg.scene_count = 20;
    cfg.scene_speakers_min = 2;
    cfg.scene_speakers_max = 2;
    cfg.lr = 5e-4;
    cfg.total_steps = 1500;
    cfg.checkpoint_every = 0;

    // criterion 9: encoder separability after in-repo pretraining
    auto enc = std::make_shared<SpeakerEncoder>(cfg.encoder_config(), 0xacce55);
    PretrainResult pres = pretrain_encoder(*enc, cfg, &std::cerr);
    enc->freeze();
    {
        std::vector<std::vector<std::vector<double>>> held(64);
        for (int s = 0; s < 64; ++s) {
            char buf[48];
            std::snprintf(buf, sizeof(buf), "voice_%016llx",
                          static_cast<unsigned long long>(hash_mix(cfg.seed, 0x70ull + s)));
            for (int c = 10; c < 12; ++c) { // the held-out clips
                Waveform w =
                    render_clip(buf, cfg.pretrain_clip_sec, hash_mix(cfg.seed, s * 1000 + c));
                held[s].push_back(
                    enc->encode_utterance(compute_logmel(normalize_waveform(w.samples))));
            }
        }
        auto cosine = [](const std::vector<double> &a, const std::vector<double> &b) {
            double dot = 0.0;
            for (size_t i = 0; i < a.size(); ++i) dot += a[i] * b[i];
            return dot;
        };
        std::vector<double> same, diff;
        Rng rng(0x9e9e);
        for (int s = 0; s < 64; ++s) same.push_back(cosine(held[s][0], held[s][1]));
        for (int s = 0; s < 64; ++s) {
            int o = static_cast<int>(rng.uniform_index(64));
            while (o == s) o = static_cast<int>(rng.uniform_index(64));
            diff.push_back(cosine(held[s][0], held[o][rng.uniform_index(2)]));
            diff.push_back(cosine(held[s][1], held[o][rng.uniform_index(2)]));
        }
        auto median = [](std::vector<double> v) {
            std::sort(v.begin(), v.end());
            return v[v.size() / 2];
        };
        const double med_same = median(same), med_diff = median(diff);
        out.c9.pass = med_same > 0.4 && med_diff < 0.4;
        std::ostringstream os;
        os << "held-out cosine medians: same " << std::fixed << med_same << ", different "
           << med_diff << " (threshold 0.4); classifier accuracy "
           << pres.held_out_accuracy * 100.0 << "%";
        out.c9.detail = os.str();
    }

    // criterion 5: overfit 20 two-speaker scenes, ≤ 3000 steps
    const double t0 = now_sec();
    const uint64_t enc_checksum_before = enc->params().checksum();
    fs::remove_all(workdir);
    auto records = synthesize_dataset(cfg, workdir, true);
    DiarizationModel model(enc, cfg.model_config(), 0xd1a);
    FeatureCache cache(workdir + "/.feature_cache");
    int skipped = 0;
    auto scenes = load_training_scenes(records, model, cache, &skipped, &std::cerr);
    Adam opt(AdamConfig{.lr = cfg.lr});
    train_diarizer(model, opt, scenes, cfg, 0, cfg.total_steps, nullptr);

    {
        double miss = 0, fa = 0, conf = 0, scored = 0;
        int slots_exact = 0;
        for (const auto &rec : records) {
            Waveform audio = read_wav(rec.wav_path);
            auto segs = infer_diarization(model, audio, cfg);
            std::vector<RttmSegment> hyp;
            for (const auto &s : segs) hyp.push_back(to_rttm(s, "f"));
            auto ref = read_rttm_file(rec.rttm_path);
            for (auto &s : ref) s.file_id = "f";
            DerReport rep = compute_der(ref, hyp, {0.0, false}); // with overlap, collar 0
            if (rep.valid) {
                miss += rep.missed;
                fa += rep.false_alarm;
                conf += rep.confusion;
                scored += rep.scored_speech;
            }
            PredictionSet ps = model.predict(compute_logmel(normalize_waveform(audio.samples)));
            int active = 0;
            for (int i = 0; i < ps.n; ++i)
                if (ps.vad_speech_prob(i) > 0.5) ++active;
            if (active == 2) ++slots_exact;
        }
        const double der = 100.0 * (miss + fa + conf) / scored;
        const double minutes = (now_sec() - t0) / 60.0;

        // trained-model behavioral check: silence produces no speech
        Waveform silent;
        silent.samples.assign(4 * 16000, 0.0);
        const bool silent_empty = infer_diarization(model, silent, cfg).empty();

        out.c5.pass = der < 10.0 && slots_exact >= 18 && minutes < 20.0 && silent_empty;
        std::ostringstream os;
        os << "train-set DER " << std::fixed << der << "% (miss " << miss << " fa " << fa
           << " conf " << conf << " / " << scored << " s scored), slot count exact on "
           << slots_exact << "/20 scenes, silent input empty: " << (silent_empty ? "yes" : "no")
           << ", " << minutes << " min";
        out.c5.detail = os.str();
    }

    // criterion 10: frozen-encoder law across the whole training run
    const uint64_t enc_checksum_after = enc->params().checksum();
    out.c10.pass = enc_checksum_before == enc_checksum_after;
    {
        std::ostringstream os;
        os << "encoder parameter checksum " << std::hex << enc_checksum_before << " -> "
           << enc_checksum_after;
        out.c10.detail = os.str();
    }
    return out;
}

} // namespace

int main() {
    std::vector<Result> results;
    auto run = [&](const char *label, auto &&fn) {
        std::fprintf(stderr, "[acceptance] running %s...\n", label);
        const double t0 = now_sec();
        results.push_back(fn());
        std::fprintf(stderr, "[acceptance] %s done in %.1f s\n", label, now_sec() - t0);
    };

    run("criterion 1 (matching oracle)", criterion_1);
    run("criterion 2 (permutation invariance)", criterion_2);
    run("criterion 3 (gradient checks)", criterion_3);
    run("criterion 4 (shape contract)", criterion_4);
    run("criterion 6 (DER oracle equivalence)", criterion_6);
    run("criterion 7 (stitching correctness)", criterion_7);
    run("criterion 8 (BiLSTM-T ablation)", criterion_8);

    std::fprintf(stderr, "[acceptance] running criteria 9, 5, 10 (pretrain + overfit)...\n");
    const double t0 = now_sec();
    HeavyResults heavy = heavy_criteria("/tmp/diformer_acceptance_data");
    std::fprintf(stderr, "[acceptance] criteria 9, 5, 10 done in %.1f s\n", now_sec() - t0);
    results.push_back(heavy.c5);
    results.push_back(heavy.c9);
    results.push_back(heavy.c10);

    std::sort(results.begin(), results.end(),
              [](const Result &a, const Result &b) { return a.id < b.id; });
    int passed = 0;
    for (const auto &r : results) {
        std::printf("criterion %2d %s  %s\n", r.id, r.pass ? "PASS" : "FAIL", r.detail.c_str());
        if (r.pass) ++passed;
    }
    std::printf("ACCEPTANCE: %d/%d criteria passed\n", passed, static_cast<int>(results.size()));
    return passed == static_cast<int>(results.size()) ? 0 : 1;
}
