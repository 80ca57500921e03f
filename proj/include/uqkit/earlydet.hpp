#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <stdexcept>
#include <vector>

#include "matrix.hpp"
#include "net.hpp"
#include "opinion.hpp"
#include "uncertainty.hpp"

namespace uqkit {

enum class DetectorHead { Wbc, Umss, Prob };  // Prob = expected-probability baseline

struct DetectorConfig {
    DetectorHead head = DetectorHead::Wbc;
    int window = 5;                  // m most recent segments
    double rho = 0.9;                // recency decay for WBC fusion
    double vacuity_threshold = 0.9;  // V in the WBC rule
    double umss_threshold = 0.95;    // calibrated null quantile
    double q = 0.05;                 // calibration confidence
    int min_delay = 0;
    double prior_weight = 2.0;
    double base_rate = 0.5;

    void validate() const {
        if (window < 1) throw std::invalid_argument("DetectorConfig: window must be >= 1");
        if (vacuity_threshold <= 0.0 || vacuity_threshold >= 1.0)
            throw std::invalid_argument("DetectorConfig: vacuity threshold must lie in (0,1)");
        if (q <= 0.0 || q >= 1.0) throw std::invalid_argument("DetectorConfig: q must lie in (0,1)");
        if (rho <= 0.0 || rho > 1.0) throw std::invalid_argument("DetectorConfig: rho must lie in (0,1]");
    }
};

// Sliding window of the last m per-timestep Beta opinions for one class.
// Until m segments have arrived the window is the full available prefix.
struct OpinionWindow {
    int m = 5;
    std::deque<BetaParams> buf;

    explicit OpinionWindow(int window = 5) : m(window) {
        if (window < 1) throw std::invalid_argument("OpinionWindow: window must be >= 1");
    }
    void push(const BetaParams& bp) {
        buf.push_back(bp);
        if (static_cast<int>(buf.size()) > m) buf.pop_front();
    }
    int size() const { return static_cast<int>(buf.size()); }

    BinomialOpinion fuse(double rho, double W, double base_rate) const {
        if (buf.empty()) throw std::invalid_argument("OpinionWindow: fuse on empty window");
        std::vector<BinomialOpinion> ops;
        ops.reserve(buf.size());
        for (const BetaParams& bp : buf) ops.push_back(beta_to_binomial(bp, W, base_rate));
        return fuse_window(ops, recency_weights(static_cast<int>(ops.size()), rho));
    }

    Vec vacuities(double W) const {
        Vec u(buf.size());
        for (size_t i = 0; i < buf.size(); ++i) u[i] = vacuity(buf[i], W);
        return u;
    }
};

inline double umss_statistic(const Vec& window_vacuities) {
    if (window_vacuities.empty()) throw std::invalid_argument("umss_statistic: empty window");
    return sum(window_vacuities) / window_vacuities.size();
}

// Empirical upper (1-q) quantile of the null statistics.
inline double calibrate_umss_threshold(Vec null_stats, double q) {
    if (null_stats.size() < 100)
        throw std::runtime_error("calibrate_umss_threshold: need at least 100 null windows");
    if (q <= 0.0 || q >= 1.0) throw std::invalid_argument("calibrate_umss_threshold: q must lie in (0,1)");
    std::sort(null_stats.begin(), null_stats.end());
    size_t n = null_stats.size();
    size_t idx = static_cast<size_t>(std::ceil((1.0 - q) * n));
    if (idx == 0) idx = 1;
    if (idx > n) idx = n;
    return null_stats[idx - 1];
}

// Per-class binary decisions for one timestep. WBC fires when fused belief
// beats disbelief with vacuity under control; UMSS fires on a high windowed
// mean vacuity; the Prob baseline thresholds the instantaneous expected
// probability (no window, no fusion).
inline std::vector<int> decide_events(DetectorHead head, const std::vector<BinomialOpinion>& fused,
                                      const Vec& stats, const DetectorConfig& cfg) {
    size_t K = head == DetectorHead::Wbc ? fused.size() : stats.size();
    std::vector<int> decisions(K, 0);
    for (size_t k = 0; k < K; ++k) {
        switch (head) {
            case DetectorHead::Wbc:
                decisions[k] = fused[k].b > fused[k].d && fused[k].u < cfg.vacuity_threshold ? 1 : 0;
                break;
            case DetectorHead::Umss:
                decisions[k] = stats[k] > cfg.umss_threshold ? 1 : 0;
                break;
            case DetectorHead::Prob:
                decisions[k] = stats[k] > 0.5 ? 1 : 0;
                break;
        }
    }
    return decisions;
}

struct ClassOutcome {
    int stream = 0;
    int cls = 0;
    int detect_t = -1;  // -1 = never fired
    int onset = -1;     // -1 = no event on this class
    bool tp = false, fp = false, fn = false;
    int delay = 0;  // defined only for tp
};

struct DetectionMetrics {
    std::vector<ClassOutcome> outcomes;
    int tp = 0, fp = 0, fn = 0;
    double precision = 0.0, recall = 0.0, f1 = 0.0;
    double mean_delay = 0.0;
};

inline DetectionMetrics summarize_outcomes(std::vector<ClassOutcome> outcomes) {
    DetectionMetrics m;
    double delay_sum = 0.0;
    for (const ClassOutcome& o : outcomes) {
        if (o.tp) {
            m.tp++;
            delay_sum += o.delay;
        }
        if (o.fp) m.fp++;
        if (o.fn) m.fn++;
    }
    m.precision = m.tp + m.fp > 0 ? static_cast<double>(m.tp) / (m.tp + m.fp) : 0.0;
    m.recall = m.tp + m.fn > 0 ? static_cast<double>(m.tp) / (m.tp + m.fn) : 0.0;
    m.f1 = m.precision + m.recall > 0.0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
    m.mean_delay = m.tp > 0 ? delay_sum / m.tp : 0.0;
    m.outcomes = std::move(outcomes);
    return m;
}

// One outcome per class: the first firing decides everything. A first firing
// inside the ongoing event region is a true positive with delay clamped at
// zero; a firing outside it is a false positive; an event with no firing at
// all is a false negative.
inline std::vector<ClassOutcome> detection_outcomes(const Mat& decisions, const Mat& labels,
                                                    int min_delay = 0, int stream_id = 0) {
    if (decisions.rows != labels.rows || decisions.cols != labels.cols)
        throw std::invalid_argument("detection_outcomes: shape mismatch");
    std::vector<ClassOutcome> out;
    for (int k = 0; k < decisions.cols; ++k) {
        ClassOutcome o;
        o.stream = stream_id;
        o.cls = k;
        for (int t = 0; t < decisions.rows; ++t)
            if (decisions(t, k) != 0.0) {
                o.detect_t = t;
                break;
            }
        for (int t = 0; t < labels.rows; ++t)
            if (labels(t, k) != 0.0) {
                o.onset = t;
                break;
            }
        if (o.detect_t >= 0) {
            bool inside = labels(o.detect_t, k) != 0.0;
            int raw_delay = o.onset >= 0 ? o.detect_t - o.onset : 0;
            if (inside && raw_delay >= min_delay) {
                o.tp = true;
                o.delay = std::max(0, raw_delay);
            } else {
                o.fp = true;
            }
        } else if (o.onset >= 0) {
            o.fn = true;
        }
        if (o.tp || o.fp || o.fn) out.push_back(o);
    }
    return out;
}

inline DetectionMetrics detection_metrics(const Mat& decisions, const Mat& labels, int min_delay = 0) {
    return summarize_outcomes(detection_outcomes(decisions, labels, min_delay));
}

// Full per-timestep trace of one stream through the chosen detector head.
struct DetectionTrace {
    Mat decisions;  // T x K, 0/1
    Mat b, d, u;    // fused opinion per timestep and class
    Mat stat;       // decision statistic (windowed vacuity mean or E[p])
};

// Per-timestep Beta parameters from a trained temporal evidence net whose
// output row is [e+_1..e+_K, e-_1..e-_K].
inline void beta_from_evidence_row(const Vec& row, int K, std::vector<BetaParams>& out) {
    out.resize(K);
    for (int k = 0; k < K; ++k) out[k] = BetaParams{row[k] + 1.0, row[K + k] + 1.0};
}

inline DetectionTrace run_early_detection(const Net& net, const Mat& stream, const DetectorConfig& cfg) {
    cfg.validate();
    if (net.output_dim() % 2 != 0)
        throw std::invalid_argument("run_early_detection: net must emit paired evidence");
    const int K = net.output_dim() / 2;
    Cache c = forward_stream(net, stream);
    const int T = stream.rows;

    DetectionTrace tr;
    tr.decisions = Mat(T, K);
    tr.b = Mat(T, K);
    tr.d = Mat(T, K);
    tr.u = Mat(T, K);
    tr.stat = Mat(T, K);

    std::vector<OpinionWindow> windows(K, OpinionWindow(cfg.window));
    std::vector<BetaParams> bp;
    for (int t = 0; t < T; ++t) {
        beta_from_evidence_row(c.out.row(t), K, bp);
        std::vector<BinomialOpinion> fused(K);
        Vec stats(K);
        for (int k = 0; k < K; ++k) {
            windows[k].push(bp[k]);
            fused[k] = windows[k].fuse(cfg.rho, cfg.prior_weight, cfg.base_rate);
            switch (cfg.head) {
                case DetectorHead::Umss:
                    stats[k] = umss_statistic(windows[k].vacuities(cfg.prior_weight));
                    break;
                case DetectorHead::Prob:
                    stats[k] = bp[k].alpha / (bp[k].alpha + bp[k].beta);
                    break;
                case DetectorHead::Wbc:
                    stats[k] = projected_probability(fused[k]);
                    break;
            }
            tr.b(t, k) = fused[k].b;
            tr.d(t, k) = fused[k].d;
            tr.u(t, k) = fused[k].u;
            tr.stat(t, k) = stats[k];
        }
        std::vector<int> dec = decide_events(cfg.head, fused, stats, cfg);
        for (int k = 0; k < K; ++k) tr.decisions(t, k) = dec[k];
    }
    return tr;
}

// Calibration statistic of one event-free stream: the per-class windowed
// vacuity mean at the final timestep (one draw per stream and class, so the
// firing rate of fresh null streams matches q by construction).
inline Vec umss_final_statistics(const Net& net, const Mat& stream, const DetectorConfig& cfg) {
    if (net.output_dim() % 2 != 0)
        throw std::invalid_argument("umss_final_statistics: net must emit paired evidence");
    const int K = net.output_dim() / 2;
    Cache c = forward_stream(net, stream);
    std::vector<OpinionWindow> windows(K, OpinionWindow(cfg.window));
    std::vector<BetaParams> bp;
    for (int t = 0; t < stream.rows; ++t) {
        beta_from_evidence_row(c.out.row(t), K, bp);
        for (int k = 0; k < K; ++k) windows[k].push(bp[k]);
    }
    Vec stats(K);
    for (int k = 0; k < K; ++k) stats[k] = umss_statistic(windows[k].vacuities(cfg.prior_weight));
    return stats;
}

}  // namespace uqkit
