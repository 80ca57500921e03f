#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "matrix.hpp"
#include "opinion.hpp"
#include "rng.hpp"
#include "special.hpp"

namespace uqkit {

// Entropy with logarithms base K so every measure lives on [0, 1].
inline double entropy_base_k(const Vec& p) {
    if (p.size() < 2) throw std::invalid_argument("entropy_base_k: need at least two outcomes");
    double h = 0.0;
    for (double v : p) {
        if (v < -kOpinionTol) throw std::invalid_argument("entropy_base_k: negative probability");
        if (v > 0.0) h -= v * std::log(v);
    }
    return h / std::log(static_cast<double>(p.size()));
}

// vacuity u_v = K / S
inline double vacuity(const DirichletParams& d) {
    d.validate();
    return static_cast<double>(d.dim()) / d.strength();
}

inline double vacuity(const BetaParams& bp, double W = 2.0) {
    bp.validate();
    return W / bp.strength();
}

// Dissonance of a multinomial opinion: relative-mass-balance weighted spread
// of the belief masses. Components with zero belief are skipped (their
// balances are taken as zero).
inline double dissonance(const MultinomialOpinion& op) {
    op.validate();
    int K = op.dim();
    double total = 0.0;
    for (int i = 0; i < K; ++i) {
        double bi = op.belief[i];
        if (bi <= 0.0) continue;
        double num = 0.0, den = 0.0;
        for (int j = 0; j < K; ++j) {
            if (j == i) continue;
            double bj = op.belief[j];
            if (bj <= 0.0) continue;
            double bal = 1.0 - std::fabs(bj - bi) / (bj + bi);
            num += bj * bal;
            den += bj;
        }
        if (den > 0.0) total += bi * num / den;
    }
    return total;
}

// Opinion induced by a Dirichlet under the uniform convention (W = K,
// a_k = 1/K): b_k = (alpha_k - 1) / S. Belief is floored at zero so the
// measure stays defined for alpha slightly below the prior.
inline MultinomialOpinion opinion_from_dirichlet(const DirichletParams& d) {
    d.validate();
    int K = d.dim();
    double S = d.strength();
    MultinomialOpinion op;
    op.belief.resize(K);
    op.base_rate.assign(K, 1.0 / K);
    double mass = 0.0;
    for (int k = 0; k < K; ++k) {
        op.belief[k] = std::max(0.0, d.alpha[k] - 1.0) / S;
        mass += op.belief[k];
    }
    op.uncertainty = 1.0 - mass;
    return op;
}

inline double dissonance(const DirichletParams& d) { return dissonance(opinion_from_dirichlet(d)); }

inline Vec dirichlet_mean(const DirichletParams& d) {
    double S = d.strength();
    Vec m(d.alpha.size());
    for (size_t k = 0; k < m.size(); ++k) m[k] = d.alpha[k] / S;
    return m;
}

// total predictive entropy H_K(E[p])
inline double entropy_uncertainty(const DirichletParams& d) {
    d.validate();
    return entropy_base_k(dirichlet_mean(d));
}

// Aleatoric part: expected entropy of p ~ Dir(alpha), closed form
//   (1/ln K) sum_k (alpha_k / S) (psi(S + 1) - psi(alpha_k + 1))
inline double aleatoric_uncertainty(const DirichletParams& d) {
    d.validate();
    double S = d.strength();
    double psi_s1 = digamma(S + 1.0);
    double acc = 0.0;
    for (double ak : d.alpha) acc += (ak / S) * (psi_s1 - digamma(ak + 1.0));
    return acc / std::log(static_cast<double>(d.dim()));
}

// Epistemic part: mutual information = total entropy - aleatoric.
inline double epistemic_uncertainty(const DirichletParams& d) {
    return entropy_uncertainty(d) - aleatoric_uncertainty(d);
}

// E[KL(Cat(p) || Cat(p'))] over independent p, p' ~ Dir(alpha) equals (K-1)/S.
inline double expected_pairwise_kl(const DirichletParams& d) {
    d.validate();
    return (d.dim() - 1.0) / d.strength();
}

inline Mat sample_dirichlet(const DirichletParams& d, int n, Rng& rng) {
    d.validate();
    if (n <= 0) throw std::invalid_argument("sample_dirichlet: n must be positive");
    Mat s(n, d.dim());
    for (int i = 0; i < n; ++i) s.set_row(i, rng.dirichlet(d.alpha));
    return s;
}

struct UncertaintyProfile {
    double vacuity = 0.0;
    double dissonance = 0.0;
    double entropy = 0.0;
    double aleatoric = 0.0;
    double epistemic = 0.0;
    double expected_pairwise_kl = 0.0;
    // Monte-Carlo cross-check of the aleatoric closed form (0 samples: unset)
    int mc_samples = 0;
    double aleatoric_mc = 0.0;
    double aleatoric_mc_se = 0.0;
};

inline UncertaintyProfile uncertainty_profile(const DirichletParams& d, int mc_samples = 0,
                                              uint64_t seed = 0) {
    d.validate();
    UncertaintyProfile pr;
    pr.vacuity = vacuity(d);
    pr.dissonance = dissonance(d);
    pr.entropy = entropy_uncertainty(d);
    pr.aleatoric = aleatoric_uncertainty(d);
    pr.epistemic = pr.entropy - pr.aleatoric;
    pr.expected_pairwise_kl = expected_pairwise_kl(d);
    if (mc_samples > 0) {
        Rng rng(seed);
        double s1 = 0.0, s2 = 0.0;
        for (int i = 0; i < mc_samples; ++i) {
            double h = entropy_base_k(rng.dirichlet(d.alpha));
            s1 += h;
            s2 += h * h;
        }
        double mean = s1 / mc_samples;
        double var = std::max(0.0, s2 / mc_samples - mean * mean);
        pr.mc_samples = mc_samples;
        pr.aleatoric_mc = mean;
        pr.aleatoric_mc_se = std::sqrt(var / mc_samples);
    }
    return pr;
}

// Sample-based decomposition used with dropout predictions: rows of `probs`
// are per-sample categorical distributions for one item.
struct McDecomposition {
    double entropy = 0.0;    // H_K(mean p)
    double aleatoric = 0.0;  // mean_m H_K(p_m)
    double epistemic = 0.0;  // difference
};

inline McDecomposition mc_decomposition(const Mat& probs) {
    if (probs.rows <= 0 || probs.cols < 2)
        throw std::invalid_argument("mc_decomposition: need samples over >= 2 classes");
    Vec mean(probs.cols, 0.0);
    double expected_h = 0.0;
    for (int m = 0; m < probs.rows; ++m) {
        Vec p = probs.row(m);
        expected_h += entropy_base_k(p);
        axpy(mean, 1.0, p);
    }
    scale(mean, 1.0 / probs.rows);
    expected_h /= probs.rows;
    McDecomposition out;
    out.entropy = entropy_base_k(mean);
    out.aleatoric = expected_h;
    out.epistemic = out.entropy - out.aleatoric;
    return out;
}

}  // namespace uqkit
