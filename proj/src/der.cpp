#include "diformer/der.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "diformer/matching.hpp"

namespace diformer {

std::vector<RttmSegment> parse_rttm(const std::string &text) {
    std::vector<RttmSegment> out;
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        std::istringstream ls(line);
        std::vector<std::string> tok;
        std::string t;
        while (ls >> t) tok.push_back(t);
        if (tok.empty() || tok[0] != "SPEAKER") continue;
        if (tok.size() < 8)
            throw ParseError("rttm line " + std::to_string(lineno) + ": expected 8+ fields, got " +
                             std::to_string(tok.size()));
        RttmSegment seg;
        seg.file_id = tok[1];
        try {
            size_t pos = 0;
            seg.onset = std::stod(tok[3], &pos);
            if (pos != tok[3].size()) throw std::invalid_argument(tok[3]);
            seg.duration = std::stod(tok[4], &pos);
            if (pos != tok[4].size()) throw std::invalid_argument(tok[4]);
        } catch (const std::exception &) {
            throw ParseError("rttm line " + std::to_string(lineno) + ": malformed numeric field");
        }
        if (!(seg.duration > 0.0))
            throw ParseError("rttm line " + std::to_string(lineno) + ": non-positive duration");
        if (seg.onset < 0.0)
            throw ParseError("rttm line " + std::to_string(lineno) + ": negative onset");
        seg.speaker = tok[7];
        out.push_back(std::move(seg));
    }
    return out;
}

std::vector<RttmSegment> read_rttm_file(const std::string &path) {
    std::ifstream is(path);
    if (!is) throw IoError("rttm: cannot open " + path);
    std::ostringstream buf;
    buf << is.rdbuf();
    return parse_rttm(buf.str());
}

std::string format_rttm(const std::vector<RttmSegment> &segments) {
    std::string out;
    char line[256];
    for (const auto &s : segments) {
        std::snprintf(line, sizeof(line), "SPEAKER %s 1 %.3f %.3f <NA> <NA> %s <NA> <NA>\n",
                      s.file_id.c_str(), s.onset, s.duration, s.speaker.c_str());
        out += line;
    }
    return out;
}

void write_rttm_file(const std::string &path, const std::vector<RttmSegment> &segments) {
    std::ofstream os(path);
    if (!os) throw IoError("rttm: cannot open " + path + " for writing");
    os << format_rttm(segments);
}

RttmSegment to_rttm(const SpeechSegment &seg, const std::string &file_id) {
    return {file_id, seg.onset, seg.duration, seg.speaker_id};
}

nlohmann::json DerReport::to_json() const {
    return {{"valid", valid},           {"error", error},
            {"missed_sec", missed},     {"false_alarm_sec", false_alarm},
            {"confusion_sec", confusion}, {"scored_speech_sec", scored_speech},
            {"der_pct", der}};
}

std::vector<std::pair<int, int>> optimal_mapping(const std::vector<std::vector<double>> &overlap) {
    const int r = static_cast<int>(overlap.size());
    const int h = r > 0 ? static_cast<int>(overlap[0].size()) : 0;
    const int k = std::max(r, h);
    if (k == 0) return {};
    // pad to square and minimize the negated overlap
    std::vector<double> cost(static_cast<size_t>(k) * k, 0.0);
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < h; ++j) cost[static_cast<size_t>(i) * k + j] = -overlap[i][j];
    Assignment a = hungarian(cost, k);
    std::vector<std::pair<int, int>> pairs;
    for (int j = 0; j < k; ++j) {
        const int i = a.sigma[j];
        if (i < r && j < h && overlap[i][j] > 0.0) pairs.push_back({i, j});
    }
    return pairs;
}

namespace {

using Micros = int64_t;

Micros to_micros(double sec) { return std::llround(sec * 1e6); }

// merged per-speaker activity intervals
std::vector<std::pair<Micros, Micros>> merge_intervals(std::vector<std::pair<Micros, Micros>> v) {
    std::sort(v.begin(), v.end());
    std::vector<std::pair<Micros, Micros>> out;
    for (const auto &iv : v) {
        if (!out.empty() && iv.first <= out.back().second)
            out.back().second = std::max(out.back().second, iv.second);
        else
            out.push_back(iv);
    }
    return out;
}

bool active_at(const std::vector<std::pair<Micros, Micros>> &ivs, Micros a, Micros b) {
    // interval [a,b) fully homogeneous by construction; test the midpoint via
    // binary search over merged intervals
    for (const auto &iv : ivs) {
        if (iv.first <= a && b <= iv.second) return true;
        if (iv.first >= b) break;
    }
    return false;
}

} // namespace

DerReport compute_der(const std::vector<RttmSegment> &ref, const std::vector<RttmSegment> &hyp,
                      const DerOptions &opt) {
    DerReport rep;
    if (ref.empty()) {
        rep.error = "empty reference: DER is undefined";
        return rep;
    }

    std::map<std::string, int> ref_ids, hyp_ids;
    for (const auto &s : ref) ref_ids.emplace(s.speaker, static_cast<int>(ref_ids.size()));
    for (const auto &s : hyp) hyp_ids.emplace(s.speaker, static_cast<int>(hyp_ids.size()));
    const int nr = static_cast<int>(ref_ids.size());
    const int nh = static_cast<int>(hyp_ids.size());

    std::vector<std::vector<std::pair<Micros, Micros>>> ref_iv(nr), hyp_iv(nh);
    for (const auto &s : ref)
        ref_iv[ref_ids[s.speaker]].push_back({to_micros(s.onset), to_micros(s.onset + s.duration)});
    for (const auto &s : hyp)
        hyp_iv[hyp_ids[s.speaker]].push_back({to_micros(s.onset), to_micros(s.onset + s.duration)});
    for (auto &v : ref_iv) v = merge_intervals(std::move(v));
    for (auto &v : hyp_iv) v = merge_intervals(std::move(v));

    // exclusions: collar around every raw reference boundary
    std::vector<std::pair<Micros, Micros>> excluded;
    if (opt.collar > 0.0) {
        const Micros c = to_micros(opt.collar);
        for (const auto &s : ref) {
            excluded.push_back({to_micros(s.onset) - c, to_micros(s.onset) + c});
            excluded.push_back(
                {to_micros(s.onset + s.duration) - c, to_micros(s.onset + s.duration) + c});
        }
    }
    if (opt.ignore_overlap) {
        // regions where ≥ 2 reference speakers are active
        std::vector<std::pair<Micros, int>> events;
        for (const auto &v : ref_iv)
            for (const auto &iv : v) {
                events.push_back({iv.first, +1});
                events.push_back({iv.second, -1});
            }
        std::sort(events.begin(), events.end());
        int active = 0;
        Micros start = 0;
        size_t i = 0;
        while (i < events.size()) {
            const Micros t = events[i].first;
            int delta = 0;
            for (; i < events.size() && events[i].first == t; ++i) delta += events[i].second;
            const int next = active + delta;
            if (active >= 2 && next < 2) excluded.push_back({start, t});
            if (active < 2 && next >= 2) start = t;
            active = next;
        }
    }
    excluded = merge_intervals(std::move(excluded));

    // elementary boundaries
    std::vector<Micros> bounds;
    for (const auto &v : ref_iv)
        for (const auto &iv : v) {
            bounds.push_back(iv.first);
            bounds.push_back(iv.second);
        }
    for (const auto &v : hyp_iv)
        for (const auto &iv : v) {
            bounds.push_back(iv.first);
            bounds.push_back(iv.second);
        }
    for (const auto &iv : excluded) {
        bounds.push_back(iv.first);
        bounds.push_back(iv.second);
    }
    std::sort(bounds.begin(), bounds.end());
    bounds.erase(std::unique(bounds.begin(), bounds.end()), bounds.end());

    // speaker-attribution overlap on the scored timeline, for the mapping
    std::vector<std::vector<double>> overlap(nr, std::vector<double>(nh, 0.0));
    auto for_each_scored = [&](auto &&fn) {
        for (size_t b = 0; b + 1 < bounds.size(); ++b) {
            const Micros a = bounds[b], z = bounds[b + 1];
            if (z <= a) continue;
            if (active_at(excluded, a, z)) continue;
            fn(a, z);
        }
    };
    for_each_scored([&](Micros a, Micros z) {
        for (int i = 0; i < nr; ++i) {
            if (!active_at(ref_iv[i], a, z)) continue;
            for (int j = 0; j < nh; ++j)
                if (active_at(hyp_iv[j], a, z)) overlap[i][j] += static_cast<double>(z - a);
        }
    });
    std::vector<int> map_ref_to_hyp(nr, -1);
    for (const auto &[i, j] : optimal_mapping(overlap)) map_ref_to_hyp[i] = j;

    double missed = 0.0, fa = 0.0, conf = 0.0, scored = 0.0;
    for_each_scored([&](Micros a, Micros z) {
        const double len = static_cast<double>(z - a);
        int n_ref = 0, n_hyp = 0, n_correct = 0;
        for (int i = 0; i < nr; ++i) {
            if (!active_at(ref_iv[i], a, z)) continue;
            ++n_ref;
            const int j = map_ref_to_hyp[i];
            if (j >= 0 && active_at(hyp_iv[j], a, z)) ++n_correct;
        }
        for (int j = 0; j < nh; ++j)
            if (active_at(hyp_iv[j], a, z)) ++n_hyp;
        scored += len * n_ref;
        missed += len * std::max(0, n_ref - n_hyp);
        fa += len * std::max(0, n_hyp - n_ref);
        conf += len * (std::min(n_ref, n_hyp) - n_correct);
    });

    if (scored <= 0.0) {
        rep.error = "scored speech is empty (exclusions removed the whole timeline)";
        return rep;
    }
    rep.valid = true;
    rep.missed = missed / 1e6;
    rep.false_alarm = fa / 1e6;
    rep.confusion = conf / 1e6;
    rep.scored_speech = scored / 1e6;
    rep.der = 100.0 * (missed + fa + conf) / scored;
    return rep;
}

} // namespace diformer
