#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "matrix.hpp"

namespace uqkit {

constexpr double kOpinionTol = 1e-9;

// Multinomial opinion (b, u, a): belief masses plus uncertainty mass summing
// to one, with a prior base-rate distribution over the K singletons.
struct MultinomialOpinion {
    Vec belief;
    double uncertainty = 1.0;
    Vec base_rate;

    int dim() const { return static_cast<int>(belief.size()); }

    void validate() const {
        if (belief.empty() || belief.size() != base_rate.size())
            throw std::invalid_argument("MultinomialOpinion: inconsistent dimensions");
        double mass = uncertainty;
        double rate = 0.0;
        for (size_t k = 0; k < belief.size(); ++k) {
            if (belief[k] < -kOpinionTol || base_rate[k] < 0.0)
                throw std::invalid_argument("MultinomialOpinion: negative mass");
            mass += belief[k];
            rate += base_rate[k];
        }
        if (uncertainty < -kOpinionTol || std::fabs(mass - 1.0) > kOpinionTol ||
            std::fabs(rate - 1.0) > kOpinionTol)
            throw std::invalid_argument("MultinomialOpinion: masses must sum to one");
    }
};

// Binomial opinion (b, d, u, a) on a single event.
struct BinomialOpinion {
    double b = 0.0;
    double d = 0.0;
    double u = 1.0;
    double a = 0.5;

    void validate() const {
        if (b < -kOpinionTol || d < -kOpinionTol || u < -kOpinionTol || a < 0.0 || a > 1.0)
            throw std::invalid_argument("BinomialOpinion: out-of-range component");
        if (std::fabs(b + d + u - 1.0) > kOpinionTol)
            throw std::invalid_argument("BinomialOpinion: b + d + u must equal one");
    }
};

struct DirichletParams {
    Vec alpha;

    int dim() const { return static_cast<int>(alpha.size()); }
    double strength() const { return sum(alpha); }

    void validate() const {
        if (alpha.empty()) throw std::invalid_argument("DirichletParams: empty alpha");
        for (double a : alpha)
            if (!(a > 0.0)) throw std::invalid_argument("DirichletParams: alpha must be positive");
    }
};

struct BetaParams {
    double alpha = 1.0;
    double beta = 1.0;

    double strength() const { return alpha + beta; }

    void validate() const {
        if (!(alpha > 0.0) || !(beta > 0.0))
            throw std::invalid_argument("BetaParams: parameters must be positive");
    }
};

// Evidence over K singletons with prior weight W spread by the base rates.
// Defaults follow the uniform convention a_k = 1/K, W = K, so a_k * W = 1.
struct EvidenceVector {
    Vec e;
    double W = 0.0;
    Vec a;

    EvidenceVector() = default;
    EvidenceVector(Vec evidence, double prior_weight)
        : e(std::move(evidence)), W(prior_weight), a(e.size(), 1.0 / static_cast<double>(e.size())) {}
    EvidenceVector(Vec evidence, double prior_weight, Vec base_rate)
        : e(std::move(evidence)), W(prior_weight), a(std::move(base_rate)) {}

    int dim() const { return static_cast<int>(e.size()); }

    void validate() const {
        if (e.empty() || e.size() != a.size())
            throw std::invalid_argument("EvidenceVector: inconsistent dimensions");
        if (!(W > 0.0)) throw std::invalid_argument("EvidenceVector: prior weight must be positive");
        double rate = 0.0;
        for (size_t k = 0; k < e.size(); ++k) {
            if (e[k] < 0.0) throw std::invalid_argument("EvidenceVector: negative evidence");
            rate += a[k];
        }
        if (std::fabs(rate - 1.0) > kOpinionTol)
            throw std::invalid_argument("EvidenceVector: base rates must sum to one");
    }
};

// b_k = e_k / (W + sum e), u = W / (W + sum e)
inline MultinomialOpinion opinion_from_evidence(const EvidenceVector& ev) {
    ev.validate();
    double S = ev.W + sum(ev.e);
    MultinomialOpinion op;
    op.belief.resize(ev.e.size());
    for (size_t k = 0; k < ev.e.size(); ++k) op.belief[k] = ev.e[k] / S;
    op.uncertainty = ev.W / S;
    op.base_rate = ev.a;
    return op;
}

// alpha_k = e_k + a_k * W
inline DirichletParams dirichlet_from_evidence(const EvidenceVector& ev) {
    ev.validate();
    DirichletParams d;
    d.alpha.resize(ev.e.size());
    for (size_t k = 0; k < ev.e.size(); ++k) d.alpha[k] = ev.e[k] + ev.a[k] * ev.W;
    return d;
}

inline EvidenceVector evidence_from_opinion(const MultinomialOpinion& op, double W) {
    op.validate();
    if (!(op.uncertainty > 0.0))
        throw std::invalid_argument("evidence_from_opinion: dogmatic opinion has unbounded evidence");
    double S = W / op.uncertainty;
    EvidenceVector ev;
    ev.W = W;
    ev.a = op.base_rate;
    ev.e.resize(op.belief.size());
    for (size_t k = 0; k < op.belief.size(); ++k) ev.e[k] = op.belief[k] * S;
    return ev;
}

inline EvidenceVector evidence_from_dirichlet(const DirichletParams& d, double W, const Vec& base_rate) {
    d.validate();
    EvidenceVector ev;
    ev.W = W;
    ev.a = base_rate;
    ev.e.resize(d.alpha.size());
    for (size_t k = 0; k < d.alpha.size(); ++k) {
        ev.e[k] = d.alpha[k] - base_rate[k] * W;
        if (ev.e[k] < 0.0) {
            if (ev.e[k] < -kOpinionTol)
                throw std::invalid_argument("evidence_from_dirichlet: alpha below prior");
            ev.e[k] = 0.0;
        }
    }
    return ev;
}

// uniform-prior convenience: W = K, a_k = 1/K
inline EvidenceVector evidence_from_dirichlet(const DirichletParams& d) {
    int K = d.dim();
    return evidence_from_dirichlet(d, static_cast<double>(K), Vec(K, 1.0 / K));
}

inline DirichletParams dirichlet_from_opinion(const MultinomialOpinion& op, double W) {
    return dirichlet_from_evidence(evidence_from_opinion(op, W));
}

// P(y = k) = b_k + a_k * u
inline Vec projected_probability(const MultinomialOpinion& op) {
    Vec p(op.belief.size());
    for (size_t k = 0; k < p.size(); ++k) p[k] = op.belief[k] + op.base_rate[k] * op.uncertainty;
    return p;
}

inline double projected_probability(const BinomialOpinion& op) { return op.b + op.a * op.u; }

// Beta (alpha, beta) -> (b, d, u) with prior weight W split by the base rate.
inline BinomialOpinion beta_to_binomial(const BetaParams& bp, double W = 2.0, double base_rate = 0.5) {
    bp.validate();
    if (!(W > 0.0) || base_rate < 0.0 || base_rate > 1.0)
        throw std::invalid_argument("beta_to_binomial: bad prior");
    double ep = bp.alpha - base_rate * W;
    double en = bp.beta - (1.0 - base_rate) * W;
    if (ep < -kOpinionTol || en < -kOpinionTol)
        throw std::invalid_argument("beta_to_binomial: parameters below prior");
    double S = bp.alpha + bp.beta;
    BinomialOpinion op;
    op.b = std::max(0.0, ep) / S;
    op.d = std::max(0.0, en) / S;
    op.u = W / S;
    op.a = base_rate;
    return op;
}

inline BetaParams binomial_to_beta(const BinomialOpinion& op, double W = 2.0) {
    op.validate();
    if (!(op.u > 0.0))
        throw std::invalid_argument("binomial_to_beta: dogmatic opinion has unbounded evidence");
    double S = W / op.u;
    return BetaParams{op.b * S + op.a * W, op.d * S + (1.0 - op.a) * W};
}

// Comultiplication (union) of two binomial opinions.
inline BinomialOpinion comultiply(const BinomialOpinion& x, const BinomialOpinion& y) {
    x.validate();
    y.validate();
    double denom = x.a + y.a - x.a * y.a;
    if (!(denom > 0.0))
        throw std::invalid_argument("comultiply: base rates give a vanishing union prior");
    BinomialOpinion r;
    r.b = x.b + y.b - x.b * y.b;
    r.d = x.d * y.d + (x.a * (1.0 - y.a) * x.d * y.u + (1.0 - x.a) * y.a * x.u * y.d) / denom;
    r.u = x.u * y.u + (y.a * x.d * y.u + x.a * x.u * y.d) / denom;
    r.a = denom;
    return r;
}

// Weight discount c * omega realized as Beta-evidence scaling: both evidence
// parameters are multiplied by c and the opinion re-derived. A dogmatic
// opinion (u = 0) carries unbounded evidence and is returned unchanged.
inline BinomialOpinion scale_binomial(const BinomialOpinion& op, double c, double W = 2.0) {
    op.validate();
    if (!(c > 0.0) || c > 1.0 + kOpinionTol)
        throw std::invalid_argument("scale_binomial: weight must lie in (0, 1]");
    if (op.u <= 0.0) return op;
    double S = W / op.u;
    double ep = c * op.b * S;
    double en = c * op.d * S;
    double Sc = ep + en + W;
    BinomialOpinion r;
    r.b = ep / Sc;
    r.d = en / Sc;
    r.u = W / Sc;
    r.a = op.a;
    return r;
}

// Weighted binomial comultiplication over a window, oldest first:
// fold of comultiply over the weight-discounted opinions.
inline BinomialOpinion fuse_window(const std::vector<BinomialOpinion>& window, const Vec& weights) {
    if (window.empty()) throw std::invalid_argument("fuse_window: empty window");
    if (window.size() != weights.size())
        throw std::invalid_argument("fuse_window: weight count mismatch");
    BinomialOpinion acc = scale_binomial(window[0], weights[0]);
    for (size_t i = 1; i < window.size(); ++i)
        acc = comultiply(acc, scale_binomial(window[i], weights[i]));
    return acc;
}

// default recency weights c_i = rho^{m-1-i} (newest entry gets weight one)
inline Vec recency_weights(int m, double rho) {
    if (m <= 0) throw std::invalid_argument("recency_weights: empty window");
    if (!(rho > 0.0) || rho > 1.0) throw std::invalid_argument("recency_weights: rho in (0,1]");
    Vec c(m);
    for (int i = 0; i < m; ++i) c[i] = std::pow(rho, m - 1 - i);
    return c;
}

}  // namespace uqkit
