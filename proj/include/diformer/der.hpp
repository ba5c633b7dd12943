#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "diformer/common.hpp"
#include "diformer/supervision.hpp"

namespace diformer {

struct RttmSegment {
    std::string file_id;
    double onset = 0.0;    // seconds
    double duration = 0.0; // > 0
    std::string speaker;
};

// "SPEAKER <file> 1 <onset> <dur> <NA> <NA> <speaker> <NA> <NA>".
// Whitespace-tolerant; non-SPEAKER lines are skipped. Malformed numeric
// fields or non-positive durations throw ParseError with the line number.
std::vector<RttmSegment> parse_rttm(const std::string &text);
std::vector<RttmSegment> read_rttm_file(const std::string &path);
std::string format_rttm(const std::vector<RttmSegment> &segments);
void write_rttm_file(const std::string &path, const std::vector<RttmSegment> &segments);

RttmSegment to_rttm(const SpeechSegment &seg, const std::string &file_id);

struct DerOptions {
    double collar = 0.0;        // seconds excluded around every ref boundary
    bool ignore_overlap = false; // drop intervals with >1 ref speaker
};

struct DerReport {
    bool valid = false;
    std::string error;
    double missed = 0.0;        // seconds
    double false_alarm = 0.0;   // seconds
    double confusion = 0.0;     // seconds
    double scored_speech = 0.0; // seconds (Σ interval length × ref speakers)
    double der = 0.0;           // percent

    nlohmann::json to_json() const;
};

// Interval-exact DER for one file: the timeline is split at every ref/hyp/
// exclusion boundary (integer microseconds, so no accumulation error), collar
// regions around reference boundaries are excluded, overlapped reference
// regions are excluded under ignore_overlap, and the ref→hyp speaker mapping
// maximizes total attributed time via the assignment solver.
DerReport compute_der(const std::vector<RttmSegment> &ref, const std::vector<RttmSegment> &hyp,
                      const DerOptions &opt = {});

// One-to-one partial mapping maximizing total overlap; pairs with zero
// overlap are dropped. Returns (ref index, hyp index) pairs.
std::vector<std::pair<int, int>> optimal_mapping(const std::vector<std::vector<double>> &overlap);

} // namespace diformer
