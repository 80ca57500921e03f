#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "dual.hpp"
#include "matrix.hpp"
#include "net.hpp"
#include "rng.hpp"
#include "ssl.hpp"

namespace uqkit {

// Bi-level objective seen through an abstract inner problem:
//   L_T(theta, w) = L_labeled(theta) + sum_j w_{c(j)} r_j(theta)
//   L_V(theta)    = validation loss.
// The interface exposes exactly the contractions the two weight-gradient
// routes need; the network adapter and the synthetic test problems both
// implement it.
struct InnerProblem {
    virtual ~InnerProblem() = default;
    virtual int dim() const = 0;
    virtual int weight_count() const = 0;
    virtual Vec train_grad(const Vec& theta, const Vec& w) const = 0;
    // exact Hessian-vector product of L_T at theta
    virtual Vec train_hvp(const Vec& theta, const Vec& w, const Vec& v) const = 0;
    // [ g . grad_theta r_j ] accumulated per weight index
    virtual Vec mixed_vjp(const Vec& theta, const Vec& g) const = 0;
    virtual Vec val_grad(const Vec& theta) const = 0;
    // Hook for problems whose training loss depends on w through more than
    // the loss scaling (weighted normalization statistics): accumulates
    // coeff * d<g, grad_theta L_T>/d(features) so the caller can push it
    // through the trunk. The base problem has no such route.
    virtual void accumulate_feature_adjoint(const Vec& /*theta*/, const Vec& /*w*/,
                                            const Vec& /*g*/, double /*coeff*/) const {}
};

enum class WeightMethod { Meta, Ift };
enum class RegMode { None, Uncertainty, L1 };

struct BilevelConfig {
    WeightMethod method = WeightMethod::Meta;
    int inner_steps = 3;            // J, unrolled (J <= 10)
    double inner_lr = 0.1;          // alpha
    int neumann_terms = 5;          // P
    double w_lr = 1.0;              // beta, used by the caller's update
    double w_step_cap = 0.0;        // per-coordinate cap on |w_lr * grad| (0 = off)
    int update_period = 5;          // L
    int clusters = 20;              // CRW cluster count (0 = per-example weights)
    bool last_layer_only = true;
    RegMode reg = RegMode::None;
    double reg_lambda = 0.0;
    Vec reg_vacuity;                // u_j for the uncertainty regularizer
};

inline void add_regularizer_grad(const BilevelConfig& cfg, const Vec& w, Vec& grad) {
    switch (cfg.reg) {
        case RegMode::None: return;
        case RegMode::Uncertainty: {
            if (cfg.reg_vacuity.size() != w.size())
                throw std::invalid_argument("add_regularizer_grad: vacuity size mismatch");
            // d/dw [lambda * u (1-w)^2] = -2 lambda u (1-w)
            for (size_t j = 0; j < w.size(); ++j)
                grad[j] += -2.0 * cfg.reg_lambda * cfg.reg_vacuity[j] * (1.0 - w[j]);
            return;
        }
        case RegMode::L1:
            for (size_t j = 0; j < w.size(); ++j) grad[j] += cfg.reg_lambda;
            return;
    }
}

struct WeightGradResult {
    Vec grad;         // d L_V / d w
    Vec theta_inner;  // parameters after the J probe steps
};

// Meta route: differentiate L_V(theta^J(w)) through the unrolled inner SGD
// steps by a reverse sweep. Each step needs one mixed contraction and (for
// all but the earliest step) one Hessian-vector product.
inline WeightGradResult weight_grad_meta(const InnerProblem& prob, const Vec& theta0, const Vec& w,
                                         const BilevelConfig& cfg) {
    if (cfg.inner_steps < 1 || cfg.inner_steps > 10)
        throw std::invalid_argument("weight_grad_meta: inner_steps must lie in [1, 10]");
    if (!cfg.last_layer_only && cfg.inner_steps > 1)
        throw std::invalid_argument("weight_grad_meta: full-network HVPs are not supported");
    std::vector<Vec> thetas;
    thetas.push_back(theta0);
    for (int j = 0; j < cfg.inner_steps; ++j) {
        Vec g = prob.train_grad(thetas.back(), w);
        Vec next = thetas.back();
        axpy(next, -cfg.inner_lr, g);
        thetas.push_back(std::move(next));
    }
    Vec gbar = prob.val_grad(thetas.back());
    WeightGradResult out;
    out.grad.assign(w.size(), 0.0);
    add_regularizer_grad(cfg, w, out.grad);
    for (int j = cfg.inner_steps; j >= 1; --j) {
        Vec mixed = prob.mixed_vjp(thetas[j - 1], gbar);
        axpy(out.grad, -cfg.inner_lr, mixed);
        prob.accumulate_feature_adjoint(thetas[j - 1], w, gbar, -cfg.inner_lr);
        if (j > 1) {
            Vec hv = prob.train_hvp(thetas[j - 1], w, gbar);
            axpy(gbar, -cfg.inner_lr, hv);
        }
    }
    out.theta_inner = thetas.back();
    return out;
}

// IFT route: grad_w L_V = dL_V/dw - dL_V/dtheta [sum_{p=0}^P (I - H)^p] H_mix,
// with the Neumann sum realized by Hessian-vector products at the probe
// optimum and the mixed second derivative taken at the pre-probe parameters.
inline WeightGradResult weight_grad_ift(const InnerProblem& prob, const Vec& theta0, const Vec& w,
                                        const BilevelConfig& cfg) {
    if (cfg.inner_steps < 1 || cfg.inner_steps > 10)
        throw std::invalid_argument("weight_grad_ift: inner_steps must lie in [1, 10]");
    if (cfg.neumann_terms < 0) throw std::invalid_argument("weight_grad_ift: negative P");
    if (!cfg.last_layer_only && cfg.neumann_terms > 0)
        throw std::invalid_argument("weight_grad_ift: full-network HVPs are not supported");
    Vec theta_star = theta0;
    for (int j = 0; j < cfg.inner_steps; ++j) {
        Vec g = prob.train_grad(theta_star, w);
        axpy(theta_star, -cfg.inner_lr, g);
    }
    Vec cur = prob.val_grad(theta_star);
    Vec acc = cur;
    for (int p = 1; p <= cfg.neumann_terms; ++p) {
        Vec hv = prob.train_hvp(theta_star, w, cur);
        axpy(cur, -1.0, hv);
        axpy(acc, 1.0, cur);
    }
    Vec mixed = prob.mixed_vjp(theta0, acc);
    prob.accumulate_feature_adjoint(theta0, w, acc, -1.0);
    WeightGradResult out;
    out.grad.assign(w.size(), 0.0);
    add_regularizer_grad(cfg, w, out.grad);
    axpy(out.grad, -1.0, mixed);
    out.theta_inner = std::move(theta_star);
    return out;
}

inline void clamp01(Vec& w) {
    for (double& v : w) v = std::min(1.0, std::max(0.0, v));
}

// ---- cluster reweighting (CRW): plain k-means with k-means++ seeding ----

struct KmeansResult {
    std::vector<int> assign;
    Mat centers;
};

inline KmeansResult crw_cluster(const Mat& x, int k, Rng& rng, int max_iter = 100) {
    if (k <= 0 || x.rows < k) throw std::invalid_argument("crw_cluster: need rows >= k > 0");
    auto dist2 = [&](int i, const Vec& c) {
        double s = 0.0;
        for (int j = 0; j < x.cols; ++j) {
            double d = x(i, j) - c[j];
            s += d * d;
        }
        return s;
    };
    // k-means++ seeding
    Mat centers(k, x.cols);
    centers.set_row(0, x.row(rng.uniform_int(x.rows)));
    Vec best(x.rows);
    for (int c = 1; c < k; ++c) {
        double total = 0.0;
        for (int i = 0; i < x.rows; ++i) {
            double b = dist2(i, centers.row(0));
            for (int c2 = 1; c2 < c; ++c2) b = std::min(b, dist2(i, centers.row(c2)));
            best[i] = b;
            total += b;
        }
        int pick = 0;
        if (total > 0.0) {
            double target = rng.uniform() * total, acc = 0.0;
            for (int i = 0; i < x.rows; ++i) {
                acc += best[i];
                if (acc >= target) {
                    pick = i;
                    break;
                }
            }
        } else {
            pick = rng.uniform_int(x.rows);
        }
        centers.set_row(c, x.row(pick));
    }
    KmeansResult r;
    r.assign.assign(x.rows, 0);
    for (int it = 0; it < max_iter; ++it) {
        bool changed = false;
        for (int i = 0; i < x.rows; ++i) {
            int bestc = 0;
            double bestd = dist2(i, centers.row(0));
            for (int c = 1; c < k; ++c) {
                double d = dist2(i, centers.row(c));
                if (d < bestd) {  // strict: ties keep the lowest index
                    bestd = d;
                    bestc = c;
                }
            }
            if (bestc != r.assign[i]) {
                r.assign[i] = bestc;
                changed = true;
            }
        }
        Mat sums(k, x.cols);
        std::vector<int> counts(k, 0);
        for (int i = 0; i < x.rows; ++i) {
            counts[r.assign[i]]++;
            for (int j = 0; j < x.cols; ++j) sums(r.assign[i], j) += x(i, j);
        }
        for (int c = 0; c < k; ++c)
            if (counts[c] > 0)
                for (int j = 0; j < x.cols; ++j) centers(c, j) = sums(c, j) / counts[c];
        if (!changed) break;
    }
    r.centers = std::move(centers);
    return r;
}

// ---- last-layer adapter ----

enum class SupLoss { SoftmaxCe, EnnSquared };

namespace headspace {

template <class S>
void logits(const S* W, const S* b, int h, int K, const double* f, S* z) {
    for (int k = 0; k < K; ++k) z[k] = b[k];
    for (int i = 0; i < h; ++i) {
        double fi = f[i];
        if (fi == 0.0) continue;
        const S* row = W + static_cast<size_t>(i) * K;
        for (int k = 0; k < K; ++k) z[k] += S(fi) * row[k];
    }
}

template <class S>
void softmax_inplace(S* z, int K) {
    S zmax = z[0];
    for (int k = 1; k < K; ++k) zmax = max(zmax, z[k]);
    S s(0.0);
    for (int k = 0; k < K; ++k) {
        z[k] = exp(z[k] - zmax);
        s += z[k];
    }
    for (int k = 0; k < K; ++k) z[k] /= s;
}

// dz for cross-entropy against a fixed one-hot target: p - y
template <class S>
void ce_dz(const S* p, int target, int K, S* dz) {
    for (int k = 0; k < K; ++k) dz[k] = p[k] - S(k == target ? 1.0 : 0.0);
}

// dz for the squared-loss Bayes risk through evidence activation `act`
template <class S>
void enn_dz(const S* z, const double* y, int K, Activation act, S* dz) {
    std::vector<S> alpha(K), c(K);
    S total(0.0);
    for (int k = 0; k < K; ++k) {
        S e = act == Activation::Relu ? max(z[k], S(0.0)) : log(S(1.0) + exp(z[k]));
        alpha[k] = e + S(1.0);
        total += alpha[k];
    }
    S q(0.0), cm(0.0);
    for (int k = 0; k < K; ++k) {
        S m = alpha[k] / total;
        S r = S(y[k]) - m;
        q += m * (S(1.0) - m);
        c[k] = S(-2.0) * r + (S(1.0) - S(2.0) * m) / (total + S(1.0));
        cm += c[k] * m;
    }
    S sp1 = total + S(1.0);
    for (int k = 0; k < K; ++k) {
        S dalpha = (c[k] - cm) / total - q / (sp1 * sp1);
        S deriv = act == Activation::Relu ? S(value_of(z[k]) > 0.0 ? 1.0 : 0.0)
                                          : S(1.0) / (S(1.0) + exp(-z[k]));
        dz[k] = dalpha * deriv;
    }
}

// dz1/dz2 for the pi-consistency loss sum_k (p1_k - p2_k)^2
template <class S>
void pi_dz(const S* p1, const S* p2, int K, S* dz1, S* dz2) {
    S ip1(0.0), ip2(0.0);
    for (int k = 0; k < K; ++k) {
        S diff = p1[k] - p2[k];
        ip1 += diff * p1[k];
        ip2 += diff * p2[k];
    }
    for (int k = 0; k < K; ++k) {
        S diff = p1[k] - p2[k];
        dz1[k] = S(2.0) * p1[k] * (diff - ip1);
        dz2[k] = S(-2.0) * p2[k] * (diff - ip2);
    }
}

}  // namespace headspace

// Inner problem over the final dense layer only: the trunk features are
// constants, theta packs the head weight matrix (row-major) plus bias.
// Hessian-vector products run the same gradient code on dual numbers
// (forward-over-reverse).
struct HeadProblem : InnerProblem {
    int h = 0, K = 0;
    SupLoss sup = SupLoss::SoftmaxCe;
    Activation evidence_act = Activation::Relu;
    UnlabeledMode unl_mode = UnlabeledMode::PseudoLabel;

    Mat f_lab;
    std::vector<int> y_lab;  // class indices
    Mat f_val;
    std::vector<int> y_val;
    Mat f_unl;                    // first view
    Mat f_unl2;                   // second view (pi mode)
    std::vector<int> pl_target;   // frozen pseudo targets, -1 below threshold
    std::vector<int> weight_idx;  // per unlabeled example
    int n_weights = 0;
    double sup_scale = 1.0;  // loss normalizers (1/|set| keeps step sizes comparable)
    double unl_scale = 1.0;
    double val_scale = 1.0;
    bool want_feat_adjoint = false;  // collect the normalization-statistics route
    mutable Mat feat_adjoint;        // (labeled rows, then unlabeled) x h

    int dim() const override { return h * K + K; }
    int weight_count() const override { return n_weights; }

    template <class S>
    void accumulate(const Vec& theta, const Vec* w, const Vec* tangent, S* grad) const {
        std::vector<S> params(dim());
        for (int i = 0; i < dim(); ++i)
            params[i] = make_param<S>(theta[i], tangent ? (*tangent)[i] : 0.0);
        const S* W = params.data();
        const S* b = params.data() + h * K;
        S* gW = grad;
        S* gb = grad + h * K;
        std::vector<S> z(K), dz(K), z2(K), dz2(K);
        for (int i = 0; i < f_lab.rows; ++i) {
            const double* f = &f_lab.a[static_cast<size_t>(i) * h];
            headspace::logits(W, b, h, K, f, z.data());
            supervised_dz(z.data(), y_lab[i], dz.data());
            scatter(f, dz.data(), S(sup_scale), gW, gb);
        }
        for (int i = 0; i < f_unl.rows; ++i) {
            S wi = S(unl_scale * (w ? (*w)[weight_idx[i]] : 1.0));
            const double* f = &f_unl.a[static_cast<size_t>(i) * h];
            if (unl_mode == UnlabeledMode::PseudoLabel) {
                if (pl_target[i] < 0) continue;
                headspace::logits(W, b, h, K, f, z.data());
                headspace::softmax_inplace(z.data(), K);
                headspace::ce_dz(z.data(), pl_target[i], K, dz.data());
                scatter(f, dz.data(), wi, gW, gb);
            } else {
                const double* f2 = &f_unl2.a[static_cast<size_t>(i) * h];
                headspace::logits(W, b, h, K, f, z.data());
                headspace::softmax_inplace(z.data(), K);
                headspace::logits(W, b, h, K, f2, z2.data());
                headspace::softmax_inplace(z2.data(), K);
                headspace::pi_dz(z.data(), z2.data(), K, dz.data(), dz2.data());
                scatter(f, dz.data(), wi, gW, gb);
                scatter(f2, dz2.data(), wi, gW, gb);
            }
        }
    }

    Vec train_grad(const Vec& theta, const Vec& w) const override {
        Vec grad(dim(), 0.0);
        accumulate<double>(theta, &w, nullptr, grad.data());
        return grad;
    }

    Vec train_hvp(const Vec& theta, const Vec& w, const Vec& v) const override {
        std::vector<Dual> grad(dim());
        accumulate<Dual>(theta, &w, &v, grad.data());
        Vec out(dim());
        for (int i = 0; i < dim(); ++i) out[i] = grad[i].t;
        return out;
    }

    Vec mixed_vjp(const Vec& theta, const Vec& g) const override {
        Vec out(n_weights, 0.0);
        const double* W = theta.data();
        const double* b = theta.data() + h * K;
        const double* gW = g.data();
        const double* gb = g.data() + h * K;
        std::vector<double> z(K), dz(K), z2(K), dz2(K);
        for (int i = 0; i < f_unl.rows; ++i) {
            const double* f = &f_unl.a[static_cast<size_t>(i) * h];
            double acc = 0.0;
            if (unl_mode == UnlabeledMode::PseudoLabel) {
                if (pl_target[i] < 0) continue;
                headspace::logits(W, b, h, K, f, z.data());
                headspace::softmax_inplace(z.data(), K);
                headspace::ce_dz(z.data(), pl_target[i], K, dz.data());
                acc = project(f, dz.data(), gW, gb);
            } else {
                const double* f2 = &f_unl2.a[static_cast<size_t>(i) * h];
                headspace::logits(W, b, h, K, f, z.data());
                headspace::softmax_inplace(z.data(), K);
                headspace::logits(W, b, h, K, f2, z2.data());
                headspace::softmax_inplace(z2.data(), K);
                headspace::pi_dz(z.data(), z2.data(), K, dz.data(), dz2.data());
                acc = project(f, dz.data(), gW, gb) + project(f2, dz2.data(), gW, gb);
            }
            out[weight_idx[i]] += unl_scale * acc;
        }
        return out;
    }

    // Per-row d<g, grad_theta L_T>/d(feature), scaled by the row's loss
    // coefficient, for callers that differentiate the trunk features in w
    // (weighted batch statistics). For a cross-entropy row with softmax p,
    // target y and adjoint g = (GW, gb):
    //   u = GW (p - e_y) + W (p.v - (p'v) p),  v = GW'f + gb.
    // Pi-consistency views and evidence-loss supervised rows do not feed
    // this route; the robust loop only requests it for pseudo-label runs.
    void accumulate_feature_adjoint(const Vec& theta, const Vec& w, const Vec& g,
                                    double coeff) const override {
        if (!want_feat_adjoint) return;
        if (feat_adjoint.empty()) feat_adjoint = Mat(f_lab.rows + f_unl.rows, h);
        const double* W = theta.data();
        const double* b = theta.data() + h * K;
        const double* gW = g.data();
        const double* gb = g.data() + h * K;
        std::vector<double> p(K), v(K), tv(K);
        auto add_row = [&](int out_row, const double* f, int target, double s) {
            headspace::logits(W, b, h, K, f, p.data());
            headspace::softmax_inplace(p.data(), K);
            double pv = 0.0;
            for (int k = 0; k < K; ++k) {
                double acc = gb[k];
                for (int i = 0; i < h; ++i) acc += gW[static_cast<size_t>(i) * K + k] * f[i];
                v[k] = acc;
                pv += p[k] * acc;
            }
            for (int k = 0; k < K; ++k) tv[k] = p[k] * (v[k] - pv);
            for (int i = 0; i < h; ++i) {
                const size_t base = static_cast<size_t>(i) * K;
                double u = 0.0;
                for (int k = 0; k < K; ++k)
                    u += gW[base + k] * (p[k] - (k == target ? 1.0 : 0.0)) + W[base + k] * tv[k];
                feat_adjoint(out_row, i) += coeff * s * u;
            }
        };
        if (sup == SupLoss::SoftmaxCe)
            for (int i = 0; i < f_lab.rows; ++i)
                add_row(i, &f_lab.a[static_cast<size_t>(i) * h], y_lab[i], sup_scale);
        if (unl_mode == UnlabeledMode::PseudoLabel)
            for (int i = 0; i < f_unl.rows; ++i) {
                if (pl_target[i] < 0) continue;
                add_row(f_lab.rows + i, &f_unl.a[static_cast<size_t>(i) * h], pl_target[i],
                        unl_scale * w[weight_idx[i]]);
            }
    }

    Vec val_grad(const Vec& theta) const override {
        Vec grad(dim(), 0.0);
        std::vector<double> params = theta;
        const double* W = params.data();
        const double* b = params.data() + h * K;
        double* gW = grad.data();
        double* gb = grad.data() + h * K;
        std::vector<double> z(K), dz(K);
        for (int i = 0; i < f_val.rows; ++i) {
            const double* f = &f_val.a[static_cast<size_t>(i) * h];
            headspace::logits(W, b, h, K, f, z.data());
            supervised_dz(z.data(), y_val[i], dz.data());
            for (int hh = 0; hh < h; ++hh)
                for (int k = 0; k < K; ++k) gW[hh * K + k] += val_scale * f[hh] * dz[k];
            for (int k = 0; k < K; ++k) gb[k] += val_scale * dz[k];
        }
        return grad;
    }

    // d L_V / d(feature) per validation row, for callers whose validation
    // features themselves respond to w (shared weighted statistics)
    Mat val_feature_grad(const Vec& theta) const {
        Mat out(f_val.rows, h);
        const double* W = theta.data();
        const double* b = theta.data() + h * K;
        std::vector<double> z(K), dz(K);
        for (int i = 0; i < f_val.rows; ++i) {
            const double* f = &f_val.a[static_cast<size_t>(i) * h];
            headspace::logits(W, b, h, K, f, z.data());
            supervised_dz(z.data(), y_val[i], dz.data());
            for (int hh = 0; hh < h; ++hh) {
                double s = 0.0;
                for (int k = 0; k < K; ++k) s += W[static_cast<size_t>(hh) * K + k] * dz[k];
                out(i, hh) = val_scale * s;
            }
        }
        return out;
    }

  private:
    template <class S>
    static S make_param(double v, double t) {
        if constexpr (std::is_same_v<S, Dual>) return Dual(v, t);
        else return v;
    }

    // supervised dz (labeled and validation sets share the loss kind)
    template <class S>
    void supervised_dz(S* z, int target, S* dz) const {
        if (sup == SupLoss::SoftmaxCe) {
            headspace::softmax_inplace(z, K);
            headspace::ce_dz(z, target, K, dz);
        } else {
            std::vector<double> y(K, 0.0);
            y[target] = 1.0;
            headspace::enn_dz(z, y.data(), K, evidence_act, dz);
        }
    }

    template <class S>
    void scatter(const double* f, const S* dz, S weight, S* gW, S* gb) const {
        for (int i = 0; i < h; ++i) {
            double fi = f[i];
            if (fi == 0.0) continue;
            S* row = gW + static_cast<size_t>(i) * K;
            for (int k = 0; k < K; ++k) row[k] += weight * S(fi) * dz[k];
        }
        for (int k = 0; k < K; ++k) gb[k] += weight * dz[k];
    }

    double project(const double* f, const double* dz, const double* gW, const double* gb) const {
        double acc = 0.0;
        for (int i = 0; i < h; ++i) {
            double fi = f[i];
            if (fi == 0.0) continue;
            const double* row = gW + static_cast<size_t>(i) * K;
            for (int k = 0; k < K; ++k) acc += fi * row[k] * dz[k];
        }
        for (int k = 0; k < K; ++k) acc += gb[k] * dz[k];
        return acc;
    }
};

// pack/unpack the net's head layer into the HeadProblem parameter space
inline Vec pack_head(const Net& net) {
    const DenseLayer& l = net.layers.back();
    Vec theta;
    theta.reserve(l.w.a.size() + l.b.size());
    for (double v : l.w.a) theta.push_back(v);
    for (double v : l.b) theta.push_back(v);
    return theta;
}

inline void unpack_head(Net& net, const Vec& theta) {
    DenseLayer& l = net.layers.back();
    if (theta.size() != l.w.a.size() + l.b.size())
        throw std::invalid_argument("unpack_head: size mismatch");
    size_t idx = 0;
    for (double& v : l.w.a) v = theta[idx++];
    for (double& v : l.b) v = theta[idx++];
}

}  // namespace uqkit
