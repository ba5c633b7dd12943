#include <doctest.h>

#include <cmath>
#include <set>

#include "diformer/der.hpp"
#include "diformer/stitching.hpp"
#include "test_support.hpp"

using namespace diformer;

namespace {

// Stub inference: every slot active with a fixed mask pattern.
PredictionSet all_active_prediction(int n, int t_m, int d) {
    PredictionSet ps;
    ps.n = n;
    ps.t_m = t_m;
    ps.d_speaker = d;
    ps.vad.assign(2 * n, 0.0);
    for (int i = 0; i < n; ++i) {
        ps.vad[2 * i] = 0.1;
        ps.vad[2 * i + 1] = 0.9;
    }
    ps.masks.assign(static_cast<size_t>(n) * t_m, 0.9);
    ps.embeddings.assign(static_cast<size_t>(n) * d, 0.0);
    for (int i = 0; i < n; ++i) ps.embeddings[i * d + i % d] = 1.0;
    return ps;
}

std::vector<double> unit_vec(int d, int axis) {
    std::vector<double> v(d, 0.0);
    v[axis] = 1.0;
    return v;
}

std::vector<double> mixed_unit(int d, int a, int b, double wa) {
    std::vector<double> v(d, 0.0);
    v[a] = wa;
    v[b] = std::sqrt(1.0 - wa * wa);
    return v;
}

} // namespace

TEST_CASE("run_windows: window count and padded-region gating") {
    Waveform audio;
    audio.samples.assign(36 * 16000, 0.1);
    auto infer = [](const LogMelSpectrogram &spec) {
        return all_active_prediction(2, ((spec.frames + 7) / 8) * 8 / 4, 4);
    };
    auto preds = run_windows(audio, infer, 12.0);
    REQUIRE(preds.size() == 3);
    CHECK(preds[0].window_start == 0.0);
    CHECK(preds[2].window_start == 24.0);

    // 30 s: the last window carries 6 s of real audio and 6 s of padding
    Waveform shorter;
    shorter.samples.assign(30 * 16000, 0.1);
    auto preds2 = run_windows(shorter, infer, 12.0);
    REQUIRE(preds2.size() == 3);
    const auto &last = preds2.back().slots;
    REQUIRE(!last.empty());
    const int t_m = static_cast<int>(last[0].mask.size());
    CHECK(t_m == 300);
    for (const auto &slot : last) {
        for (int f = 0; f < t_m; ++f) {
            const bool in_padding = f >= 150; // frames past 6 s of real audio
            if (in_padding) CHECK(slot.mask[f] == 0);
            else CHECK(slot.mask[f] == 1);
        }
    }

    Waveform tiny;
    tiny.samples.assign(100, 0.0);
    CHECK_THROWS_AS(run_windows(tiny, infer, 12.0), InvalidAudio);
}

TEST_CASE("stitch: similar embeddings share an identity, dissimilar ones do not") {
    const int d = 8;
    WindowPrediction w1, w2;
    w1.window_start = 0.0;
    w2.window_start = 12.0;
    ActiveSlot s1{std::vector<uint8_t>(10, 1), unit_vec(d, 0)};
    // cosine 0.9 with s1
    ActiveSlot s2{std::vector<uint8_t>(10, 1), mixed_unit(d, 0, 1, 0.9)};
    w1.slots.push_back(s1);
    w2.slots.push_back(s2);
    auto merged = stitch({w1, w2});
    std::set<std::string> ids;
    for (const auto &s : merged) ids.insert(s.speaker_id);
    CHECK(ids.size() == 1);

    // cosine 0.1 → two identities
    ActiveSlot s3{std::vector<uint8_t>(10, 1), mixed_unit(d, 0, 1, 0.1)};
    WindowPrediction w3;
    w3.window_start = 12.0;
    w3.slots.push_back(s3);
    auto split = stitch({w1, w3});
    ids.clear();
    for (const auto &s : split) ids.insert(s.speaker_id);
    CHECK(ids.size() == 2);
}

TEST_CASE("stitch: K windows of one speaker collapse to one identity") {
    const int d = 8;
    Rng rng(91);
    std::vector<WindowPrediction> preds;
    for (int k = 0; k < 6; ++k) {
        WindowPrediction wp;
        wp.window_start = 12.0 * k;
        // small perturbations of the same voice, cosine ≈ 0.99
        std::vector<double> e = unit_vec(d, 0);
        for (int i = 0; i < d; ++i) e[i] += 0.05 * rng.gaussian();
        double norm = 0.0;
        for (double v : e) norm += v * v;
        for (auto &v : e) v /= std::sqrt(norm);
        wp.slots.push_back({std::vector<uint8_t>(10, 1), e});
        preds.push_back(wp);
    }
    auto merged = stitch(preds);
    std::set<std::string> ids;
    for (const auto &s : merged) ids.insert(s.speaker_id);
    CHECK(ids.size() == 1);
    // deterministic on identical input
    auto again = stitch(preds);
    REQUIRE(again.size() == merged.size());
    for (size_t i = 0; i < merged.size(); ++i) {
        CHECK(again[i].speaker_id == merged[i].speaker_id);
        CHECK(again[i].onset == merged[i].onset);
    }
}

TEST_CASE("masks_to_segments: run extraction") {
    auto segs = masks_to_segments({0, 1, 1, 1, 0}, 0.0, "a");
    REQUIRE(segs.size() == 1);
    CHECK(segs[0].onset == doctest::Approx(0.04));
    CHECK(segs[0].duration == doctest::Approx(0.12));

    CHECK(masks_to_segments({0, 0, 0}, 0.0, "a").empty());

    auto alt = masks_to_segments({1, 0, 1, 0}, 0.0, "a");
    REQUIRE(alt.size() == 2);
    CHECK(alt[0].duration == doctest::Approx(0.04));
    CHECK(alt[1].onset == doctest::Approx(0.08));
}

TEST_CASE("masks_to_segments round-trips through build_masks exactly") {
    Rng rng(93);
    for (int trial = 0; trial < 20; ++trial) {
        const int t_m = 30;
        std::vector<uint8_t> mask(t_m);
        for (auto &m : mask) m = rng.uniform() < 0.5 ? 1 : 0;
        auto segs = masks_to_segments(mask, 0.0, "x");
        MaskBuild mb = build_masks(segs, t_m);
        if (segs.empty()) {
            CHECK(mb.m == 0);
            continue;
        }
        REQUIRE(mb.m == 1);
        for (int f = 0; f < t_m; ++f) CHECK(static_cast<uint8_t>(mb.masks[f]) == mask[f]);
    }
}

TEST_CASE("rttm: parse, format, error reporting") {
    auto segs = parse_rttm("SPEAKER rec1 1 0.50 2.00 <NA> <NA> spkA <NA> <NA>\n"
                           ";; a comment line\n"
                           "SPKR-INFO rec1 1 <NA> <NA> <NA> unknown spkA <NA>\n"
                           "SPEAKER  rec1   1  3.00   1.25 <NA> <NA> spkB <NA> <NA>\n");
    REQUIRE(segs.size() == 2);
    CHECK(segs[0].file_id == "rec1");
    CHECK(segs[0].onset == doctest::Approx(0.5));
    CHECK(segs[0].duration == doctest::Approx(2.0));
    CHECK(segs[0].speaker == "spkA");

    CHECK(parse_rttm("").empty());
    CHECK_THROWS_AS(parse_rttm("SPEAKER rec1 1 0.5 -1.0 <NA> <NA> a <NA> <NA>\n"), ParseError);
    try {
        parse_rttm("SPEAKER ok 1 0.0 1.0 <NA> <NA> a <NA> <NA>\n"
                   "SPEAKER bad 1 zero 1.0 <NA> <NA> a <NA> <NA>\n");
        CHECK(false);
    } catch (const ParseError &e) {
        CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }

    // round trip through the exact field order
    const std::string text = format_rttm(segs);
    auto back = parse_rttm(text);
    REQUIRE(back.size() == segs.size());
    CHECK(back[1].onset == doctest::Approx(3.0));
}

TEST_CASE("compute_der: identity scores zero") {
    std::vector<RttmSegment> ref = {{"f", 0.0, 2.0, "a"}, {"f", 3.0, 1.0, "b"}};
    DerReport rep = compute_der(ref, ref);
    REQUIRE(rep.valid);
    CHECK(rep.der == doctest::Approx(0.0));
    CHECK(rep.scored_speech == doctest::Approx(3.0));
}

TEST_CASE("compute_der: 8 of 10 seconds covered gives 20% missed") {
    std::vector<RttmSegment> ref = {{"f", 0.0, 10.0, "a"}};
    std::vector<RttmSegment> hyp = {{"f", 1.0, 8.0, "x"}};
    DerReport rep = compute_der(ref, hyp);
    REQUIRE(rep.valid);
    CHECK(rep.missed == doctest::Approx(2.0).epsilon(1e-9));
    CHECK(rep.der == doctest::Approx(20.0).epsilon(1e-9));
    // cross-checked against the frame-sampling oracle
    auto oracle = testsup::frame_der_oracle(ref, hyp, 0.0, false);
    CHECK(std::fabs(rep.der - oracle.der) < 0.05);
}

TEST_CASE("compute_der: ignore_overlap can empty the scored timeline") {
    std::vector<RttmSegment> ref = {{"f", 0.0, 10.0, "a"}, {"f", 0.0, 10.0, "b"}};
    std::vector<RttmSegment> hyp = {{"f", 0.0, 10.0, "x"}};
    DerOptions opt;
    opt.ignore_overlap = true;
    DerReport rep = compute_der(ref, hyp, opt);
    CHECK_FALSE(rep.valid);
    CHECK(!rep.error.empty());

    DerReport empty_ref = compute_der({}, hyp);
    CHECK_FALSE(empty_ref.valid);
}

TEST_CASE("optimal_mapping: diagonal dominance and the permutation oracle") {
    std::vector<std::vector<double>> diag = {{5, 1, 0}, {0, 6, 1}, {1, 0, 7}};
    auto pairs = optimal_mapping(diag);
    REQUIRE(pairs.size() == 3);
    for (const auto &[r, h] : pairs) CHECK(r == h);

    Rng rng(95);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<std::vector<double>> m(5, std::vector<double>(5));
        for (auto &row : m)
            for (auto &v : row) v = rng.uniform(0.0, 3.0);
        auto got = optimal_mapping(m);
        double got_total = 0.0;
        for (const auto &[r, h] : got) got_total += m[r][h];
        // brute force over all 120 permutations
        std::vector<int> perm = {0, 1, 2, 3, 4};
        double best = -1.0;
        do {
            double s = 0.0;
            for (int r = 0; r < 5; ++r) s += m[r][perm[r]];
            best = std::max(best, s);
        } while (std::next_permutation(perm.begin(), perm.end()));
        CHECK(got_total == doctest::Approx(best).epsilon(1e-9));
    }
}

TEST_CASE("compute_der: extra hypothesis speakers surface as false alarm") {
    std::vector<RttmSegment> ref = {{"f", 0.0, 4.0, "a"}};
    std::vector<RttmSegment> hyp = {{"f", 0.0, 4.0, "x"}, {"f", 1.0, 2.0, "y"}};
    DerReport rep = compute_der(ref, hyp);
    REQUIRE(rep.valid);
    CHECK(rep.false_alarm == doctest::Approx(2.0).epsilon(1e-9));
    CHECK(rep.missed == doctest::Approx(0.0));
}

TEST_CASE("compute_der: label swap symmetry") {
    std::vector<RttmSegment> ref = {{"f", 0.0, 3.0, "a"}, {"f", 2.0, 3.0, "b"}};
    std::vector<RttmSegment> hyp = {{"f", 0.1, 2.8, "u"}, {"f", 2.2, 2.5, "v"}};
    DerReport base = compute_der(ref, hyp);
    // swap labels consistently on both sides
    std::vector<RttmSegment> ref2 = ref, hyp2 = hyp;
    for (auto &s : ref2) s.speaker = s.speaker == "a" ? "b" : "a";
    for (auto &s : hyp2) s.speaker = s.speaker == "u" ? "v" : "u";
    DerReport swapped = compute_der(ref2, hyp2);
    CHECK(base.der == doctest::Approx(swapped.der).epsilon(1e-12));
}

TEST_CASE("compute_der: deleting a correct hypothesis segment never helps") {
    Rng rng(97);
    for (int trial = 0; trial < 15; ++trial) {
        std::vector<RttmSegment> ref, hyp;
        const int n = 2 + static_cast<int>(rng.uniform_index(3));
        for (int i = 0; i < n; ++i) {
            const double onset = 0.01 * std::floor(rng.uniform(0.0, 500.0));
            const double dur = 0.01 * std::floor(rng.uniform(20.0, 200.0));
            const std::string spk = "s" + std::to_string(rng.uniform_index(2));
            ref.push_back({"f", onset, dur, spk});
            hyp.push_back({"f", onset, dur, spk}); // correct copy
        }
        DerReport all = compute_der(ref, hyp);
        std::vector<RttmSegment> fewer(hyp.begin(), hyp.end() - 1);
        DerReport dropped = compute_der(ref, fewer);
        if (all.valid && dropped.valid) CHECK(dropped.der >= all.der - 1e-9);
    }
}

TEST_CASE("compute_der: interval engine matches the 1 ms oracle on random cases") {
    Rng rng(99);
    for (int trial = 0; trial < 10; ++trial) {
        std::vector<RttmSegment> ref, hyp;
        const int nr = 1 + static_cast<int>(rng.uniform_index(5));
        const int nh = 1 + static_cast<int>(rng.uniform_index(5));
        for (int i = 0; i < nr; ++i) {
            ref.push_back({"f", 0.01 * std::floor(rng.uniform(0, 800)),
                           0.01 * std::floor(rng.uniform(20, 300)),
                           "r" + std::to_string(rng.uniform_index(3))});
        }
        for (int i = 0; i < nh; ++i) {
            hyp.push_back({"f", 0.01 * std::floor(rng.uniform(0, 800)),
                           0.01 * std::floor(rng.uniform(20, 300)),
                           "h" + std::to_string(rng.uniform_index(3))});
        }
        for (double collar : {0.0, 0.25}) {
            for (bool ignore : {false, true}) {
                DerReport rep = compute_der(ref, hyp, {collar, ignore});
                auto oracle = testsup::frame_der_oracle(ref, hyp, collar, ignore);
                CHECK(rep.valid == oracle.valid);
                if (rep.valid && oracle.valid) CHECK(std::fabs(rep.der - oracle.der) < 0.05);
            }
        }
    }
}
