#pragma once

#include <vector>

#include "diformer/tensor.hpp"

namespace diformer {

// Model output for one window, as plain values.
struct PredictionSet {
    int n = 0;         // slots
    int t_m = 0;       // mask frames
    int d_speaker = 0; // embedding width
    std::vector<double> vad;        // n × 2 probability rows
    std::vector<double> masks;      // n × t_m, values in (0,1)
    std::vector<double> embeddings; // n × d_speaker, unit rows

    double vad_speech_prob(int slot) const { return vad[2 * slot + 1]; }
};

// Groundtruth set padded to n slots: the first m rows are real speakers
// (vad == 1); padded rows have vad == 0 and their masks/embeddings are
// ignored by every consumer.
struct GroundTruthSet {
    int m = 0;
    int n = 0;
    int t_m = 0;
    int d_speaker = 0;
    std::vector<int> vad;           // length n
    std::vector<double> masks;      // n × t_m binary
    std::vector<double> embeddings; // n × d_speaker

    // Throws Error when m > n (the trainer logs and skips such scenes).
    static GroundTruthSet pad(int n, int t_m, int d_speaker,
                              const std::vector<double> &masks_m,
                              const std::vector<double> &embeddings_m, int m);
};

struct Assignment {
    std::vector<int> sigma; // sigma[j] = prediction slot matched to gt row j
};

struct LossWeights {
    double alpha = 1.0; // mask term
    double beta = 0.1;  // embedding term
    bool use_dice = false;
    double mask_prob_eps = 1e-12; // clamp for log() on probabilities
};

struct LossBreakdown {
    double total = 0.0;
    double vad = 0.0;   // Σ cross-entropy
    double mask = 0.0;  // Σ L_mask over real rows (unweighted)
    double embed = 0.0; // Σ ⟨e_pred, e_gt⟩ over real rows (unweighted)
};

// Per-frame binary cross-entropy averaged over t_m, from probabilities;
// adds the dice complement when enabled.
double mask_loss(const double *pred_row, const double *gt_row, int t_m, const LossWeights &w);

// cost(i,j) = −p_i(v_j) + 1[v_j = 1]·(α·L_mask(m_i, m_j) − β·⟨e_i, e_j⟩),
// row-major n × n.
std::vector<double> build_cost_matrix(const PredictionSet &pred, const GroundTruthSet &gt,
                                      const LossWeights &w = {});

// Minimum-total-cost assignment; ties resolved to the lexicographically
// smallest sigma. Throws InvalidCost on non-finite entries.
Assignment hungarian(const std::vector<double> &cost, int n);

// Σ_j cost[sigma[j]][j], accumulated in ascending j (the same order the
// exhaustive oracle uses).
double assignment_cost(const std::vector<double> &cost, int n, const Assignment &a);

// Convenience: cost matrix + hungarian.
Assignment match(const PredictionSet &pred, const GroundTruthSet &gt, const LossWeights &w = {});

// L = Σ_j [ CE(vad_σ(j), v_j) + α·1[v_j=1]·L_mask(m_σ(j), m_j)
//           − β·1[v_j=1]·⟨e_σ(j), e_j⟩ ]
LossBreakdown compute_loss(const PredictionSet &pred, const GroundTruthSet &gt,
                           const Assignment &a, const LossWeights &w = {});

// Differentiable version operating on graph nodes (logits for VAD and masks,
// unit embeddings). Returns the scalar loss node and fills `breakdown`.
struct GraphLossInputs {
    Tensor vad_logits;  // n × 2
    Tensor mask_logits; // n × t_m
    Tensor embeddings;  // n × d_speaker, unit rows
};
Tensor loss_graph(Tape &tape, const GraphLossInputs &in, const GroundTruthSet &gt,
                  const Assignment &a, const LossWeights &w, LossBreakdown *breakdown = nullptr);

} // namespace diformer
