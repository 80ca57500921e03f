#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "bilevel.hpp"
#include "losses.hpp"
#include "net.hpp"
#include "rng.hpp"
#include "ssl.hpp"
#include "uncertainty.hpp"

namespace uqkit {

struct RsslData {
    Mat x_lab;
    std::vector<int> y_lab;
    Mat x_unl;
    std::vector<char> unl_is_ood;  // diagnostics only, never shown to the learner
    Mat x_val;
    std::vector<int> y_val;
    Mat x_test;
    std::vector<int> y_test;
};

struct RsslConfig {
    BilevelConfig bilevel;
    bool reweight = true;  // false = plain SSL with standard BN (all weights 1)
    UnlabeledMode unl_mode = UnlabeledMode::PseudoLabel;
    double pl_threshold = 0.8;
    double unl_coef = 1.0;  // weight of the unlabeled term against the labeled CE
    SupLoss sup = SupLoss::SoftmaxCe;
    std::vector<int> hidden = {16, 16};
    double dropout = 0.0;
    int iters = 600;
    double lr = 0.1;
    double momentum = 0.0;
    int log_every = 20;
    uint64_t seed = 1;
};

struct RsslLogRow {
    int epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double test_acc = 0.0;
    double mean_w_id = 0.0;
    double mean_w_ood = 0.0;
    double grad_norm_w = 0.0;
};

struct RsslResult {
    Net net;
    Vec w;                        // one entry per cluster (or per example)
    std::vector<int> cluster_of;  // unlabeled example -> weight index
    std::vector<RsslLogRow> log;
    // squared norm of the w gradient projected onto the box: coordinates the
    // gradient presses against their bound contribute zero
    Vec grad_norm_history;
    std::vector<int> grad_norm_step;
    // test accuracy and validation loss at the best-validation checkpoint,
    // i.e. the model is monitored on the validation set throughout and the
    // test score is read off where the validation loss was lowest
    double final_test_acc = 0.0;
    double final_val_loss = 0.0;
};

namespace detail {

inline int infer_num_classes(const RsslData& d) {
    int k = 0;
    for (int y : d.y_lab) k = std::max(k, y + 1);
    for (int y : d.y_val) k = std::max(k, y + 1);
    for (int y : d.y_test) k = std::max(k, y + 1);
    if (k < 2) throw std::invalid_argument("run_robust_ssl: need at least two classes");
    return k;
}

inline double eval_ce(const Net& net, const Mat& x, const std::vector<int>& y) {
    Cache c = forward(net, x, Mat(), ForwardOptions::eval());
    double loss = 0.0;
    for (int i = 0; i < x.rows; ++i) {
        double p = std::max(c.out(i, y[i]), kProbClamp);
        loss -= std::log(p);
    }
    return loss / x.rows;
}

inline double eval_accuracy(const Net& net, const Mat& x, const std::vector<int>& y) {
    Cache c = forward(net, x, Mat(), ForwardOptions::eval());
    int hit = 0;
    for (int i = 0; i < x.rows; ++i)
        if (argmax(c.out.row(i)) == y[i]) ++hit;
    return static_cast<double>(hit) / x.rows;
}

inline std::vector<int> frozen_pseudo_targets(const Mat& probs, double threshold) {
    std::vector<int> t(probs.rows, -1);
    for (int i = 0; i < probs.rows; ++i) {
        Vec p = probs.row(i);
        int k = argmax(p);
        if (p[k] >= threshold) t[i] = k;
    }
    return t;
}

}  // namespace detail

// Algorithm: alternate theta steps on the weighted SSL loss (weighted batch
// norm everywhere the net normalizes) with a w hypergradient step every
// update_period iterations, w clamped to [0,1] after each update. The probe
// steps inside the hypergradient act on a copy of the head; the live
// parameters only move through the regular reweighted step.
inline RsslResult run_robust_ssl(const RsslData& data, const RsslConfig& cfg) {
    if (data.x_lab.rows == 0 || data.x_val.rows == 0)
        throw std::invalid_argument("run_robust_ssl: labeled and validation sets must be nonempty");
    const int n_lab = data.x_lab.rows;
    const int n_unl = data.x_unl.rows;
    const int dim = data.x_lab.cols;
    const int K = detail::infer_num_classes(data);

    Rng rng(cfg.seed);
    NetOptions nopts;
    nopts.head = HeadKind::Softmax;
    nopts.hidden_act = Activation::Relu;
    nopts.dropout = cfg.dropout;
    nopts.with_bn = true;
    nopts.aux_evidence_head = cfg.bilevel.reg == RegMode::Uncertainty;
    Net net = make_feedforward(Arch::Mlp, dim, cfg.hidden, K, nopts, rng);

    RsslResult res;
    res.cluster_of.resize(n_unl);
    int n_weights;
    if (cfg.bilevel.clusters <= 0 || cfg.bilevel.clusters >= n_unl) {
        std::iota(res.cluster_of.begin(), res.cluster_of.end(), 0);
        n_weights = n_unl;
    } else {
        KmeansResult km = crw_cluster(data.x_unl, cfg.bilevel.clusters, rng);
        res.cluster_of = km.assign;
        n_weights = cfg.bilevel.clusters;
    }
    Vec w(n_weights, 1.0);
    std::vector<int> cluster_size(n_weights, 0);
    for (int j = 0; j < n_unl; ++j) cluster_size[res.cluster_of[j]]++;

    Mat x_all(n_lab + n_unl, dim);
    for (int i = 0; i < n_lab; ++i) x_all.set_row(i, data.x_lab.row(i));
    for (int j = 0; j < n_unl; ++j) x_all.set_row(n_lab + j, data.x_unl.row(j));

    Sgd sgd;
    sgd.lr = cfg.lr;
    sgd.momentum = cfg.momentum;
    Mat no_adj;
    Vec bn_w(n_lab + n_unl, 1.0);
    double last_grad_norm = 0.0;
    double best_val = std::numeric_limits<double>::infinity();
    double best_acc = 0.0;

    auto effective_w = [&](int j) { return cfg.reweight ? w[res.cluster_of[j]] : 1.0; };

    for (int t = 1; t <= cfg.iters; ++t) {
        for (int j = 0; j < n_unl; ++j) bn_w[n_lab + j] = effective_w(j);

        // pseudo targets are frozen before the step (the teacher is the
        // current net in eval mode)
        std::vector<int> pl;
        if (n_unl > 0 && cfg.unl_mode == UnlabeledMode::PseudoLabel) {
            Cache ec = forward(net, data.x_unl, no_adj, ForwardOptions::eval());
            pl = detail::frozen_pseudo_targets(ec.out, cfg.pl_threshold);
        }

        ForwardOptions fo = ForwardOptions::training(&rng, &bn_w);
        if (cfg.dropout <= 0.0) fo.dropout_active = false;
        Cache c = forward(net, x_all, no_adj, fo);

        double loss = 0.0;
        Mat d_out(c.out.rows, K);
        for (int i = 0; i < n_lab; ++i) {
            double p = std::max(c.out(i, data.y_lab[i]), kProbClamp);
            loss += -std::log(p) / n_lab;
            d_out(i, data.y_lab[i]) -= 1.0 / (p * n_lab);
        }
        Cache c2;
        Mat d_out2;
        if (n_unl > 0 && cfg.unl_mode == UnlabeledMode::PseudoLabel) {
            for (int j = 0; j < n_unl; ++j) {
                if (pl[j] < 0) continue;
                int r = n_lab + j;
                double scale = cfg.unl_coef * effective_w(j) / n_unl;
                double p = std::max(c.out(r, pl[j]), kProbClamp);
                loss += -std::log(p) * scale;
                d_out(r, pl[j]) -= scale / p;
            }
        } else if (n_unl > 0) {
            // pi consistency: a second stochastic view of the unlabeled batch
            ForwardOptions fo2 = ForwardOptions::training(&rng, nullptr);
            Vec w_only(bn_w.begin() + n_lab, bn_w.end());
            fo2.bn_weights = &w_only;
            if (cfg.dropout <= 0.0) fo2.dropout_active = false;
            c2 = forward(net, data.x_unl, no_adj, fo2);
            d_out2 = Mat(n_unl, K);
            for (int j = 0; j < n_unl; ++j) {
                int r = n_lab + j;
                double scale = cfg.unl_coef * effective_w(j) / n_unl;
                for (int k = 0; k < K; ++k) {
                    double diff = c.out(r, k) - c2.out(j, k);
                    loss += diff * diff * scale;
                    d_out(r, k) += 2.0 * diff * scale;
                    d_out2(j, k) -= 2.0 * diff * scale;
                }
            }
        }
        if (!std::isfinite(loss)) throw std::runtime_error("run_robust_ssl: training diverged");

        Gradients g = backward(net, c, no_adj, d_out);
        if (!d_out2.empty()) {
            Gradients g2 = backward(net, c2, no_adj, d_out2);
            for (size_t l = 0; l < g.layers.size(); ++l) {
                axpy(g.layers[l].w, 1.0, g2.layers[l].w);
                axpy(g.layers[l].b, 1.0, g2.layers[l].b);
            }
            for (size_t l = 0; l < g.bn_gamma.size(); ++l) {
                axpy(g.bn_gamma[l], 1.0, g2.bn_gamma[l]);
                axpy(g.bn_beta[l], 1.0, g2.bn_beta[l]);
            }
        }
        if (net.has_aux) {
            // the evidence probe trains on labeled rows only; its gradient
            // stops at the trunk
            Mat aux_alpha = forward_aux_alpha(net, c);
            Mat d_alpha(aux_alpha.rows, aux_alpha.cols);
            for (int i = 0; i < n_lab; ++i) {
                Vec y(K, 0.0);
                y[data.y_lab[i]] = 1.0;
                LossValueGrad lv = enn_squared_loss(y, aux_alpha.row(i));
                for (int k = 0; k < K; ++k) d_alpha(i, k) = lv.grad[k] / n_lab;
            }
            accumulate_aux_gradients(net, c, aux_alpha, d_alpha, g);
        }
        sgd.step(net, g);
        update_bn_running_stats(net, c);

        if (cfg.reweight && n_unl > 0 && t % cfg.bilevel.update_period == 0) {
            Cache eu = forward(net, data.x_unl, no_adj, ForwardOptions::eval());
            const int n_val = data.x_val.rows;
            HeadProblem prob;
            prob.h = cfg.hidden.back();
            prob.K = K;
            prob.sup = cfg.sup;
            prob.evidence_act = net.evidence_act;
            prob.unl_mode = cfg.unl_mode;
            prob.y_lab = data.y_lab;
            prob.y_val = data.y_val;
            prob.weight_idx = res.cluster_of;
            prob.n_weights = n_weights;
            prob.sup_scale = 1.0 / n_lab;
            prob.unl_scale = cfg.unl_coef / n_unl;
            prob.val_scale = 1.0 / n_val;
            Cache pc;  // probe forward behind the feature matrices
            Vec bn_probe;
            if (cfg.unl_mode == UnlabeledMode::PseudoLabel) {
                // One probe forward over labeled + unlabeled + validation rows
                // sharing the weighted statistics the reweighted step actually
                // trains with. Validation rows carry zero weight: they leave
                // the statistics untouched but are normalized by them, so the
                // w gradient flows through the statistics both via the inner
                // step and via the validation features directly. Pseudo
                // targets stay frozen from the eval teacher.
                Mat x_probe(n_lab + n_unl + n_val, dim);
                for (int i = 0; i < n_lab; ++i) x_probe.set_row(i, data.x_lab.row(i));
                for (int j = 0; j < n_unl; ++j) x_probe.set_row(n_lab + j, data.x_unl.row(j));
                for (int i = 0; i < n_val; ++i) x_probe.set_row(n_lab + n_unl + i, data.x_val.row(i));
                bn_probe.assign(n_lab + n_unl + n_val, 0.0);
                for (int i = 0; i < n_lab + n_unl; ++i) bn_probe[i] = bn_w[i];
                ForwardOptions po;
                po.train_bn = true;
                po.bn_weights = &bn_probe;
                pc = forward(net, x_probe, no_adj, po);
                const Mat& feats = head_input(pc);
                prob.f_lab = Mat(n_lab, prob.h);
                prob.f_unl = Mat(n_unl, prob.h);
                prob.f_val = Mat(n_val, prob.h);
                for (int i = 0; i < n_lab; ++i) prob.f_lab.set_row(i, feats.row(i));
                for (int j = 0; j < n_unl; ++j) prob.f_unl.set_row(j, feats.row(n_lab + j));
                for (int i = 0; i < n_val; ++i) prob.f_val.set_row(i, feats.row(n_lab + n_unl + i));
                prob.pl_target = detail::frozen_pseudo_targets(eu.out, cfg.pl_threshold);
                prob.want_feat_adjoint = cfg.sup == SupLoss::SoftmaxCe;
            } else {
                Cache el = forward(net, data.x_lab, no_adj, ForwardOptions::eval());
                Cache ev = forward(net, data.x_val, no_adj, ForwardOptions::eval());
                prob.f_lab = head_input(el);
                prob.f_val = head_input(ev);
                // two stochastic views with frozen (eval) normalization
                ForwardOptions v1 = ForwardOptions::eval();
                v1.dropout_active = net.dropout > 0.0;
                Rng view_rng = rng.fork(t);
                v1.rng = &view_rng;
                Cache cu1 = forward(net, data.x_unl, no_adj, v1);
                Cache cu2 = forward(net, data.x_unl, no_adj, v1);
                prob.f_unl = head_input(cu1);
                prob.f_unl2 = head_input(cu2);
            }
            BilevelConfig bc = cfg.bilevel;
            if (bc.reg == RegMode::Uncertainty) {
                Mat aux_alpha = forward_aux_alpha(net, eu);
                bc.reg_vacuity.assign(n_weights, 0.0);
                for (int j = 0; j < n_unl; ++j)
                    bc.reg_vacuity[res.cluster_of[j]] +=
                        vacuity(DirichletParams{aux_alpha.row(j)}) / cluster_size[res.cluster_of[j]];
            }
            Vec theta0 = pack_head(net);
            WeightGradResult wg = bc.method == WeightMethod::Meta
                                      ? weight_grad_meta(prob, theta0, w, bc)
                                      : weight_grad_ift(prob, theta0, w, bc);
            if (!prob.feat_adjoint.empty()) {
                // statistics route: the inner-step adjoint plus the direct
                // response of the validation features, pushed through the
                // trunk in one pass; only the unlabeled rows' normalization
                // weights are tied to the optimization variables
                Mat up(n_lab + n_unl + n_val, prob.h);
                for (int i = 0; i < n_lab + n_unl; ++i) up.set_row(i, prob.feat_adjoint.row(i));
                Mat vup = prob.val_feature_grad(wg.theta_inner);
                for (int i = 0; i < n_val; ++i) up.set_row(n_lab + n_unl + i, vup.row(i));
                Vec dwr = wbn_weight_grad(net, pc, bn_probe, up);
                for (int j = 0; j < n_unl; ++j) wg.grad[res.cluster_of[j]] += dwr[n_lab + j];
            }
            // stationarity is measured with the clamp taken into account: a
            // coordinate pinned to its bound by the gradient contributes zero
            double pg = 0.0;
            for (size_t k = 0; k < w.size(); ++k) {
                double gk = wg.grad[k];
                if (w[k] <= 0.0 && gk > 0.0) continue;
                if (w[k] >= 1.0 && gk < 0.0) continue;
                pg += gk * gk;
            }
            last_grad_norm = pg;
            res.grad_norm_history.push_back(last_grad_norm);
            res.grad_norm_step.push_back(t);
            for (size_t k = 0; k < w.size(); ++k) {
                double step = bc.w_lr * wg.grad[k];
                if (bc.w_step_cap > 0.0)
                    step = std::clamp(step, -bc.w_step_cap, bc.w_step_cap);
                w[k] -= step;
            }
            clamp01(w);
        }

        double vloss = detail::eval_ce(net, data.x_val, data.y_val);
        if (vloss < best_val) {
            best_val = vloss;
            best_acc = data.x_test.rows ? detail::eval_accuracy(net, data.x_test, data.y_test) : 0.0;
        }

        if (t % cfg.log_every == 0 || t == cfg.iters) {
            RsslLogRow row;
            row.epoch = t;
            row.train_loss = loss;
            row.val_loss = vloss;
            row.test_acc = data.x_test.rows ? detail::eval_accuracy(net, data.x_test, data.y_test) : 0.0;
            double sid = 0.0, sood = 0.0;
            int nid = 0, nood = 0;
            for (int j = 0; j < n_unl; ++j) {
                bool ood = j < static_cast<int>(data.unl_is_ood.size()) && data.unl_is_ood[j];
                (ood ? sood : sid) += effective_w(j);
                (ood ? nood : nid)++;
            }
            row.mean_w_id = nid ? sid / nid : 0.0;
            row.mean_w_ood = nood ? sood / nood : 0.0;
            row.grad_norm_w = last_grad_norm;
            res.log.push_back(row);
        }
    }

    res.w = w;
    res.final_val_loss = best_val;
    res.final_test_acc = best_acc;
    res.net = std::move(net);
    return res;
}

}  // namespace uqkit
