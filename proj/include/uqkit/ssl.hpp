#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "losses.hpp"
#include "matrix.hpp"

namespace uqkit {

enum class UnlabeledMode { PseudoLabel, PiConsistency };

struct SslLoss {
    double total = 0.0;
    Vec values;    // per example
    Mat d_probs1;  // gradient wrt the (first) probability matrix
    Mat d_probs2;  // pi mode only
};

// Pseudo-label: cross-entropy against the argmax prediction when the max
// probability clears the threshold, zero otherwise. The target is detached.
inline SslLoss pseudo_label_loss(const Mat& probs, double threshold) {
    if (probs.rows == 0 || probs.cols < 2) throw std::invalid_argument("pseudo_label_loss: bad shape");
    SslLoss out;
    out.values.assign(probs.rows, 0.0);
    out.d_probs1 = Mat(probs.rows, probs.cols);
    for (int i = 0; i < probs.rows; ++i) {
        Vec p = probs.row(i);
        int k = argmax(p);
        if (p[k] >= threshold) {
            double pc = std::max(p[k], kProbClamp);
            out.values[i] = -std::log(pc);
            out.d_probs1(i, k) = -1.0 / pc;
            out.total += out.values[i];
        }
    }
    return out;
}

// Pi-model consistency: squared distance between two stochastic passes.
inline SslLoss pi_consistency_loss(const Mat& probs1, const Mat& probs2) {
    if (probs1.rows != probs2.rows || probs1.cols != probs2.cols || probs1.rows == 0)
        throw std::invalid_argument("pi_consistency_loss: shape mismatch");
    SslLoss out;
    out.values.assign(probs1.rows, 0.0);
    out.d_probs1 = Mat(probs1.rows, probs1.cols);
    out.d_probs2 = Mat(probs1.rows, probs1.cols);
    for (int i = 0; i < probs1.rows; ++i)
        for (int k = 0; k < probs1.cols; ++k) {
            double diff = probs1(i, k) - probs2(i, k);
            out.values[i] += diff * diff;
            out.d_probs1(i, k) = 2.0 * diff;
            out.d_probs2(i, k) = -2.0 * diff;
        }
    for (double v : out.values) out.total += v;
    return out;
}

inline SslLoss ssl_unlabeled_loss(UnlabeledMode mode, const Mat& probs1, const Mat& probs2,
                                  double threshold) {
    return mode == UnlabeledMode::PseudoLabel ? pseudo_label_loss(probs1, threshold)
                                              : pi_consistency_loss(probs1, probs2);
}

}  // namespace uqkit
