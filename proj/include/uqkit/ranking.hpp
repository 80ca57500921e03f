#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "matrix.hpp"

namespace uqkit {

// AUROC by the rank statistic (Mann-Whitney); tied scores get the average
// rank, so each tied positive/negative pair counts one half.
inline double auroc(const Vec& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size()) throw std::invalid_argument("auroc: size mismatch");
    size_t n = scores.size();
    size_t n_pos = 0;
    for (int l : labels) {
        if (l) ++n_pos;
        if (l != 0 && l != 1) throw std::invalid_argument("auroc: labels must be 0/1");
    }
    size_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0) throw std::invalid_argument("auroc: need both classes");
    for (double s : scores)
        if (!std::isfinite(s)) throw std::invalid_argument("auroc: scores must be finite");

    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return scores[a] < scores[b]; });

    double rank_sum_pos = 0.0;
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j < n && scores[order[j]] == scores[order[i]]) ++j;
        double avg_rank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));  // 1-based
        for (size_t k = i; k < j; ++k)
            if (labels[order[k]]) rank_sum_pos += avg_rank;
        i = j;
    }
    return (rank_sum_pos - 0.5 * n_pos * (n_pos + 1)) / (static_cast<double>(n_pos) * n_neg);
}

// Step-interpolated area under the precision-recall curve: walking thresholds
// down through distinct score values, each recall increment pays the
// precision at that threshold.
inline double aupr(const Vec& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size()) throw std::invalid_argument("aupr: size mismatch");
    size_t n = scores.size();
    size_t n_pos = 0;
    for (int l : labels)
        if (l) ++n_pos;
    if (n_pos == 0 || n_pos == n) throw std::invalid_argument("aupr: need both classes");

    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return scores[a] > scores[b]; });

    double area = 0.0;
    size_t tp = 0, fp = 0;
    size_t i = 0;
    double prev_recall = 0.0;
    while (i < n) {
        size_t j = i;
        while (j < n && scores[order[j]] == scores[order[i]]) ++j;
        for (size_t k = i; k < j; ++k) {
            if (labels[order[k]]) ++tp;
            else ++fp;
        }
        double recall = static_cast<double>(tp) / n_pos;
        double precision = static_cast<double>(tp) / (tp + fp);
        area += (recall - prev_recall) * precision;
        prev_recall = recall;
        i = j;
    }
    return area;
}

struct RankingScores {
    Vec scores;
    std::vector<int> labels;
};

struct RankingMetrics {
    double auroc = 0.0;
    double aupr = 0.0;
};

inline RankingMetrics ranking_metrics(const RankingScores& rs) {
    return RankingMetrics{auroc(rs.scores, rs.labels), aupr(rs.scores, rs.labels)};
}

}  // namespace uqkit
