#include "diformer/matching.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace diformer {

GroundTruthSet GroundTruthSet::pad(int n, int t_m, int d_speaker,
                                   const std::vector<double> &masks_m,
                                   const std::vector<double> &embeddings_m, int m) {
    if (m > n)
        throw Error("groundtruth has " + std::to_string(m) + " speakers but the model has only " +
                    std::to_string(n) + " slots");
    GroundTruthSet gt;
    gt.m = m;
    gt.n = n;
    gt.t_m = t_m;
    gt.d_speaker = d_speaker;
    gt.vad.assign(n, 0);
    gt.masks.assign(static_cast<size_t>(n) * t_m, 0.0);
    gt.embeddings.assign(static_cast<size_t>(n) * d_speaker, 0.0);
    for (int j = 0; j < m; ++j) {
        gt.vad[j] = 1;
        std::copy(masks_m.begin() + static_cast<int64_t>(j) * t_m,
                  masks_m.begin() + static_cast<int64_t>(j + 1) * t_m,
                  gt.masks.begin() + static_cast<int64_t>(j) * t_m);
        std::copy(embeddings_m.begin() + static_cast<int64_t>(j) * d_speaker,
                  embeddings_m.begin() + static_cast<int64_t>(j + 1) * d_speaker,
                  gt.embeddings.begin() + static_cast<int64_t>(j) * d_speaker);
    }
    return gt;
}

double mask_loss(const double *pred_row, const double *gt_row, int t_m, const LossWeights &w) {
    double bce = 0.0;
    for (int f = 0; f < t_m; ++f) {
        const double p = std::min(1.0 - w.mask_prob_eps, std::max(w.mask_prob_eps, pred_row[f]));
        const double y = gt_row[f];
        bce -= y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
    }
    double loss = bce / t_m;
    if (w.use_dice) {
        double inter = 0.0, psum = 0.0, ysum = 0.0;
        for (int f = 0; f < t_m; ++f) {
            inter += pred_row[f] * gt_row[f];
            psum += pred_row[f];
            ysum += gt_row[f];
        }
        loss += 1.0 - (2.0 * inter + 1.0) / (psum + ysum + 1.0);
    }
    return loss;
}

std::vector<double> build_cost_matrix(const PredictionSet &pred, const GroundTruthSet &gt,
                                      const LossWeights &w) {
    const int n = pred.n;
    if (gt.n != n) throw Error("cost matrix: groundtruth must be padded to n slots");
    std::vector<double> cost(static_cast<size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            double c = -pred.vad[2 * i + gt.vad[j]];
            if (gt.vad[j] == 1) {
                c += w.alpha * mask_loss(pred.masks.data() + static_cast<int64_t>(i) * pred.t_m,
                                         gt.masks.data() + static_cast<int64_t>(j) * gt.t_m,
                                         pred.t_m, w);
                double dot = 0.0;
                for (int k = 0; k < pred.d_speaker; ++k)
                    dot += pred.embeddings[static_cast<int64_t>(i) * pred.d_speaker + k] *
                           gt.embeddings[static_cast<int64_t>(j) * gt.d_speaker + k];
                c -= w.beta * dot;
            }
            cost[static_cast<size_t>(i) * n + j] = c;
        }
    }
    return cost;
}

double assignment_cost(const std::vector<double> &cost, int n, const Assignment &a) {
    double total = 0.0;
    for (int j = 0; j < n; ++j) total += cost[static_cast<size_t>(a.sigma[j]) * n + j];
    return total;
}

namespace {

// Exact assignment over pred subsets: suffix[j][S] is the minimum cost of
// assigning gt columns j..n−1 to the prediction set S (|S| == n−j). Forward
// extraction then picks the smallest feasible prediction index per column,
// which yields the lexicographically smallest optimal sigma.
Assignment solve_subset_dp(const std::vector<double> &cost, int n) {
    const int full = (1 << n) - 1;
    std::vector<std::vector<double>> suffix(n + 1);
    suffix[n].assign(1 << n, std::numeric_limits<double>::infinity());
    suffix[n][0] = 0.0;
    for (int j = n - 1; j >= 0; --j) {
        suffix[j].assign(1 << n, std::numeric_limits<double>::infinity());
        const int want = n - j;
        for (int s = 0; s <= full; ++s) {
            if (__builtin_popcount(static_cast<unsigned>(s)) != want) continue;
            double best = std::numeric_limits<double>::infinity();
            for (int i = 0; i < n; ++i) {
                if (!(s & (1 << i))) continue;
                const double v = cost[static_cast<size_t>(i) * n + j] + suffix[j + 1][s ^ (1 << i)];
                if (v < best) best = v;
            }
            suffix[j][s] = best;
        }
    }
    Assignment a;
    a.sigma.assign(n, -1);
    int s = full;
    for (int j = 0; j < n; ++j) {
        for (int i = 0; i < n; ++i) {
            if (!(s & (1 << i))) continue;
            const double v = cost[static_cast<size_t>(i) * n + j] + suffix[j + 1][s ^ (1 << i)];
            if (v == suffix[j][s]) { // exact: suffix[j][s] was produced by one of these sums
                a.sigma[j] = i;
                s ^= (1 << i);
                break;
            }
        }
    }
    return a;
}

// Jonker-Volgenant style shortest augmenting path, O(n³). rows/cols index
// subsets of the original matrix so the lexicographic refinement can solve
// reduced problems without copying.
double jv_min_cost(const std::vector<double> &cost, int n, const std::vector<int> &rows,
                   const std::vector<int> &cols, std::vector<int> *row_of_col = nullptr) {
    const int m = static_cast<int>(cols.size());
    const int r = static_cast<int>(rows.size());
    std::vector<double> u(m + 1, 0.0), v(r + 1, 0.0);
    std::vector<int> p(r + 1, 0), way(r + 1, 0);
    for (int i = 1; i <= m; ++i) {
        p[0] = i;
        int j0 = 0;
        std::vector<double> minv(r + 1, std::numeric_limits<double>::infinity());
        std::vector<char> used(r + 1, 0);
        do {
            used[j0] = 1;
            const int i0 = p[j0];
            double delta = std::numeric_limits<double>::infinity();
            int j1 = 0;
            for (int j = 1; j <= r; ++j) {
                if (used[j]) continue;
                const double cij =
                    cost[static_cast<size_t>(rows[j - 1]) * n + cols[i0 - 1]] - u[i0] - v[j];
                if (cij < minv[j]) {
                    minv[j] = cij;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= r; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const int j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    double total = 0.0;
    std::vector<int> assign(m, -1);
    for (int j = 1; j <= r; ++j) {
        if (p[j] > 0) {
            assign[p[j] - 1] = rows[j - 1];
            total += cost[static_cast<size_t>(rows[j - 1]) * n + cols[p[j] - 1]];
        }
    }
    if (row_of_col) *row_of_col = assign;
    return total;
}

// JV plus a per-column refinement pass that rebinds each column to the
// smallest prediction index consistent with an optimal total.
Assignment solve_jv_lexicographic(const std::vector<double> &cost, int n) {
    Assignment a;
    a.sigma.assign(n, -1);
    std::vector<int> remaining_preds(n);
    for (int i = 0; i < n; ++i) remaining_preds[i] = i;
    for (int j = 0; j < n; ++j) {
        std::vector<int> cols;
        for (int c = j; c < n; ++c) cols.push_back(c);
        const double base = jv_min_cost(cost, n, remaining_preds, cols);
        const double tol = 1e-9 * (1.0 + std::fabs(base));
        std::vector<int> tail_cols(cols.begin() + 1, cols.end());
        for (size_t idx = 0; idx < remaining_preds.size(); ++idx) {
            const int i = remaining_preds[idx];
            std::vector<int> rest = remaining_preds;
            rest.erase(rest.begin() + static_cast<int64_t>(idx));
            const double cand = cost[static_cast<size_t>(i) * n + j] +
                                (tail_cols.empty() ? 0.0 : jv_min_cost(cost, n, rest, tail_cols));
            if (cand <= base + tol) {
                a.sigma[j] = i;
                remaining_preds = rest;
                break;
            }
        }
    }
    return a;
}

} // namespace

Assignment hungarian(const std::vector<double> &cost, int n) {
    if (static_cast<int64_t>(cost.size()) != static_cast<int64_t>(n) * n)
        throw Error("hungarian: cost matrix size mismatch");
    for (double c : cost)
        if (!std::isfinite(c)) throw InvalidCost("hungarian: non-finite cost entry");
    if (n == 0) return {};
    if (n <= 12) return solve_subset_dp(cost, n);
    return solve_jv_lexicographic(cost, n);
}

Assignment match(const PredictionSet &pred, const GroundTruthSet &gt, const LossWeights &w) {
    return hungarian(build_cost_matrix(pred, gt, w), pred.n);
}

LossBreakdown compute_loss(const PredictionSet &pred, const GroundTruthSet &gt,
                           const Assignment &a, const LossWeights &w) {
    LossBreakdown b;
    const double eps = w.mask_prob_eps;
    for (int j = 0; j < gt.n; ++j) {
        const int i = a.sigma[j];
        const double p = std::max(eps, pred.vad[2 * i + gt.vad[j]]);
        b.vad += -std::log(p);
        if (gt.vad[j] == 1) {
            b.mask += mask_loss(pred.masks.data() + static_cast<int64_t>(i) * pred.t_m,
                                gt.masks.data() + static_cast<int64_t>(j) * gt.t_m, pred.t_m, w);
            double dot = 0.0;
            for (int k = 0; k < pred.d_speaker; ++k)
                dot += pred.embeddings[static_cast<int64_t>(i) * pred.d_speaker + k] *
                       gt.embeddings[static_cast<int64_t>(j) * gt.d_speaker + k];
            b.embed += dot;
        }
    }
    b.total = b.vad + w.alpha * b.mask - w.beta * b.embed;
    return b;
}

Tensor loss_graph(Tape &tape, const GraphLossInputs &in, const GroundTruthSet &gt,
                  const Assignment &a, const LossWeights &w, LossBreakdown *breakdown) {
    const int t_m = in.mask_logits.shape().cols();
    const int d_spk = in.embeddings.shape().cols();
    Tensor log_probs = log_softmax_rows(in.vad_logits);
    Tensor vad_sum, mask_sum, embed_sum;
    for (int j = 0; j < gt.n; ++j) {
        const int i = a.sigma[j];
        Tensor lp_row = slice_rows(log_probs, i, i + 1);
        Tensor picked = slice_cols(lp_row, gt.vad[j], gt.vad[j] + 1);
        Tensor ce = neg(sum_all(picked));
        vad_sum = vad_sum.valid() ? add(vad_sum, ce) : ce;
        if (gt.vad[j] != 1) continue;

        Tensor logits_row = slice_rows(in.mask_logits, i, i + 1);
        Tensor target_row = tape.constant(
            std::vector<double>(gt.masks.begin() + static_cast<int64_t>(j) * t_m,
                                gt.masks.begin() + static_cast<int64_t>(j + 1) * t_m),
            Shape::mat(1, t_m));
        Tensor lm = mean_all(bce_with_logits(logits_row, target_row));
        if (w.use_dice) {
            Tensor probs = sigmoid(logits_row);
            Tensor inter = sum_all(mul(probs, target_row));
            Tensor denom = add(sum_all(probs), sum_all(target_row));
            Tensor dice = sub(tape.constant_scalar(1.0),
                              mul(add_scalar(scale(inter, 2.0), 1.0),
                                  reciprocal(add_scalar(denom, 1.0))));
            lm = add(lm, dice);
        }
        mask_sum = mask_sum.valid() ? add(mask_sum, lm) : lm;

        Tensor e_row = slice_rows(in.embeddings, i, i + 1);
        Tensor gt_row = tape.constant(
            std::vector<double>(gt.embeddings.begin() + static_cast<int64_t>(j) * d_spk,
                                gt.embeddings.begin() + static_cast<int64_t>(j + 1) * d_spk),
            Shape::mat(1, d_spk));
        Tensor dot = sum_all(mul(e_row, gt_row));
        embed_sum = embed_sum.valid() ? add(embed_sum, dot) : dot;
    }
    if (!vad_sum.valid()) vad_sum = tape.constant_scalar(0.0);
    Tensor total = vad_sum;
    if (mask_sum.valid()) total = add(total, scale(mask_sum, w.alpha));
    if (embed_sum.valid()) total = add(total, scale(embed_sum, -w.beta));
    if (breakdown) {
        breakdown->vad = vad_sum.item();
        breakdown->mask = mask_sum.valid() ? mask_sum.item() : 0.0;
        breakdown->embed = embed_sum.valid() ? embed_sum.item() : 0.0;
        breakdown->total = total.item();
    }
    return total;
}

} // namespace diformer
