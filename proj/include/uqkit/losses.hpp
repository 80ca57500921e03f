#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "matrix.hpp"
#include "opinion.hpp"
#include "special.hpp"

namespace uqkit {

constexpr double kProbClamp = 1e-12;

struct LossValueGrad {
    double value = 0.0;
    Vec grad;
};

// Squared-loss Bayes risk under Dir(alpha):
//   sum_k (y_k - E[p_k])^2 + Var[p_k],  E[p_k] = alpha_k / S,
//   Var[p_k] = E[p_k](1 - E[p_k]) / (S + 1).
inline LossValueGrad enn_squared_loss(const Vec& y, const Vec& alpha) {
    if (y.size() != alpha.size() || y.empty())
        throw std::invalid_argument("enn_squared_loss: dimension mismatch");
    int K = static_cast<int>(alpha.size());
    int ones = 0;
    for (double v : y) {
        if (v == 1.0) ++ones;
        else if (v != 0.0)
            throw std::invalid_argument("enn_squared_loss: labels must be one-hot");
    }
    if (ones != 1) throw std::invalid_argument("enn_squared_loss: labels must be one-hot");
    double S = 0.0;
    for (double a : alpha) {
        if (!(a > 0.0)) throw std::invalid_argument("enn_squared_loss: alpha must be positive");
        S += a;
    }
    double value = 0.0, q = 0.0, cm = 0.0;
    Vec c(K);
    for (int k = 0; k < K; ++k) {
        double m = alpha[k] / S;
        double r = y[k] - m;
        value += r * r + m * (1.0 - m) / (S + 1.0);
        q += m * (1.0 - m);
        c[k] = -2.0 * r + (1.0 - 2.0 * m) / (S + 1.0);
        cm += c[k] * m;
    }
    LossValueGrad out;
    out.value = value;
    out.grad.resize(K);
    for (int k = 0; k < K; ++k) out.grad[k] = (c[k] - cm) / S - q / ((S + 1.0) * (S + 1.0));
    return out;
}

// Cross-entropy Bayes risk under Dir(alpha): sum_k y_k (psi(S) - psi(alpha_k)).
inline LossValueGrad enn_cross_entropy_loss(const Vec& y, const Vec& alpha) {
    if (y.size() != alpha.size() || y.empty())
        throw std::invalid_argument("enn_cross_entropy_loss: dimension mismatch");
    int K = static_cast<int>(alpha.size());
    double S = 0.0, ysum = 0.0;
    for (int k = 0; k < K; ++k) {
        if (!(alpha[k] > 0.0))
            throw std::invalid_argument("enn_cross_entropy_loss: alpha must be positive");
        S += alpha[k];
        ysum += y[k];
    }
    double psi_s = digamma(S);
    LossValueGrad out;
    out.grad.assign(K, 0.0);
    double tri_s = trigamma(S);
    for (int k = 0; k < K; ++k) {
        out.value += y[k] * (psi_s - digamma(alpha[k]));
        out.grad[k] = ysum * tri_s - y[k] * trigamma(alpha[k]);
    }
    return out;
}

// KL(Dir(a) || Dir(b)) in closed form; gradient is with respect to a.
inline LossValueGrad dirichlet_kl(const Vec& a, const Vec& b) {
    if (a.size() != b.size() || a.empty())
        throw std::invalid_argument("dirichlet_kl: dimension mismatch");
    int K = static_cast<int>(a.size());
    double Sa = 0.0, Sb = 0.0;
    for (int k = 0; k < K; ++k) {
        if (!(a[k] > 0.0) || !(b[k] > 0.0))
            throw std::invalid_argument("dirichlet_kl: parameters must be positive");
        Sa += a[k];
        Sb += b[k];
    }
    double psi_sa = digamma(Sa);
    double value = log_gamma(Sa) - log_gamma(Sb);
    double diff_sum = 0.0;
    for (int k = 0; k < K; ++k) {
        value += log_gamma(b[k]) - log_gamma(a[k]);
        value += (a[k] - b[k]) * (digamma(a[k]) - psi_sa);
        diff_sum += a[k] - b[k];
    }
    LossValueGrad out;
    out.value = value;
    out.grad.resize(K);
    double tri_sa = trigamma(Sa);
    for (int k = 0; k < K; ++k) out.grad[k] = (a[k] - b[k]) * trigamma(a[k]) - diff_sum * tri_sa;
    return out;
}

// KL(Cat(p) || Cat(q)) with probabilities clamped at 1e-12 before the logs.
inline LossValueGrad categorical_kl(const Vec& p, const Vec& q) {
    if (p.size() != q.size() || p.empty())
        throw std::invalid_argument("categorical_kl: dimension mismatch");
    LossValueGrad out;
    out.grad.assign(p.size(), 0.0);
    for (size_t k = 0; k < p.size(); ++k) {
        double pc = std::max(p[k], kProbClamp);
        double qc = std::max(q[k], kProbClamp);
        out.value += pc * std::log(pc / qc);
        out.grad[k] = p[k] > kProbClamp ? std::log(pc / qc) + 1.0 : 0.0;
    }
    return out;
}

inline double bce_loss(double y, double p) {
    double pc = std::min(std::max(p, kProbClamp), 1.0 - kProbClamp);
    return -y * std::log(pc) - (1.0 - y) * std::log(1.0 - pc);
}

// Per-timestep Beta evidential loss summed over a stream:
//   sum_t sum_k y [psi(a+b) - psi(a)] + (1-y) [psi(a+b) - psi(b)].
struct MtennGrad {
    double value = 0.0;
    Mat d_alpha;  // T x K
    Mat d_beta;   // T x K
};

inline MtennGrad mtenn_loss(const Mat& y, const Mat& alpha, const Mat& beta) {
    if (y.rows != alpha.rows || y.cols != alpha.cols || alpha.rows != beta.rows ||
        alpha.cols != beta.cols || y.rows == 0)
        throw std::invalid_argument("mtenn_loss: shape mismatch");
    MtennGrad out;
    out.d_alpha = Mat(y.rows, y.cols);
    out.d_beta = Mat(y.rows, y.cols);
    for (int t = 0; t < y.rows; ++t)
        for (int k = 0; k < y.cols; ++k) {
            double a = alpha(t, k), b = beta(t, k), lab = y(t, k);
            if (!(a > 0.0) || !(b > 0.0))
                throw std::invalid_argument("mtenn_loss: parameters must be positive");
            double s = a + b;
            double psi_s = digamma(s), tri_s = trigamma(s);
            out.value += lab * (psi_s - digamma(a)) + (1.0 - lab) * (psi_s - digamma(b));
            out.d_alpha(t, k) = tri_s - lab * trigamma(a);
            out.d_beta(t, k) = tri_s - (1.0 - lab) * trigamma(b);
        }
    return out;
}

// lambda2 warm-up schedule min(1, t/200); fixed value when disabled.
struct LossConfig {
    double lambda1 = 0.001;
    double lambda2 = 1.0;
    bool lambda2_schedule = true;
    int lambda2_rampup = 200;

    double lambda2_at(int t) const {
        if (!lambda2_schedule) return lambda2;
        return std::min(1.0, static_cast<double>(t) / lambda2_rampup) * lambda2;
    }
};

// Joint graph objective:
//   sum_{i in L} ENN(y_i, alpha_i)
//   + lambda1 * sum_i KL(Dir(alpha_i) || Dir(alpha_hat_i))
//   + lambda2 * sum_i KL(Cat(model_p_i) || Cat(teacher_p_i)).
// Gradients are returned for alpha and for the model probabilities; the
// caller owns the chain rule from probabilities back to its parameters.
struct JointLossGrad {
    double value = 0.0;
    double term_enn = 0.0;      // labeled Bayes risk
    double term_prior = 0.0;    // lambda1 * Dirichlet KL to the kernel prior
    double term_teacher = 0.0;  // lambda2 * categorical KL to the teacher
    Mat d_alpha;
    Mat d_model_probs;
};

inline JointLossGrad joint_loss(const std::vector<int>& labeled, const Mat& y_onehot,
                                const Mat& alpha, const Mat& gkde_alpha, const Mat& model_probs,
                                const Mat& teacher_probs, double lambda1, double lambda2) {
    JointLossGrad out;
    out.d_alpha = Mat(alpha.rows, alpha.cols);
    out.d_model_probs = Mat(alpha.rows, alpha.cols);
    for (size_t li = 0; li < labeled.size(); ++li) {
        int i = labeled[li];
        if (i < 0 || i >= alpha.rows) throw std::invalid_argument("joint_loss: bad labeled index");
        LossValueGrad g = enn_squared_loss(y_onehot.row(static_cast<int>(li)), alpha.row(i));
        out.term_enn += g.value;
        for (int k = 0; k < alpha.cols; ++k) out.d_alpha(i, k) += g.grad[k];
    }
    if (lambda1 != 0.0) {
        if (gkde_alpha.rows != alpha.rows || gkde_alpha.cols != alpha.cols)
            throw std::invalid_argument("joint_loss: prior shape mismatch");
        for (int i = 0; i < alpha.rows; ++i) {
            LossValueGrad g = dirichlet_kl(alpha.row(i), gkde_alpha.row(i));
            out.term_prior += lambda1 * g.value;
            for (int k = 0; k < alpha.cols; ++k) out.d_alpha(i, k) += lambda1 * g.grad[k];
        }
    }
    if (lambda2 != 0.0) {
        if (model_probs.rows != alpha.rows || teacher_probs.rows != alpha.rows)
            throw std::invalid_argument("joint_loss: probability shape mismatch");
        for (int i = 0; i < alpha.rows; ++i) {
            LossValueGrad g = categorical_kl(model_probs.row(i), teacher_probs.row(i));
            out.term_teacher += lambda2 * g.value;
            for (int k = 0; k < alpha.cols; ++k) out.d_model_probs(i, k) += lambda2 * g.grad[k];
        }
    }
    out.value = out.term_enn + out.term_prior + out.term_teacher;
    return out;
}

}  // namespace uqkit
