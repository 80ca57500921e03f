#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "gkde.hpp"
#include "graph.hpp"
#include "losses.hpp"
#include "net.hpp"
#include "uncertainty.hpp"

namespace uqkit {

struct TrainConfig {
    std::vector<int> hidden = {16};
    int iters = 300;
    double lr = 0.5;
    double momentum = 0.0;
    double dropout = 0.1;
    int mc_samples = 100;
    int patience = 0;  // 0 disables early stopping
    double gkde_sigma = 1.0;
    LossConfig loss;
    // relu heads can be born dead at small widths (nonnegative hidden
    // activations make every head-column sign a single draw); softplus keeps
    // the evidence gradient alive
    Activation evidence_act = Activation::Relu;
    uint64_t seed = 1;
};

inline Mat one_hot_rows(const std::vector<int>& ids, const std::vector<int>& labels, int K) {
    Mat y(static_cast<int>(ids.size()), K);
    for (size_t li = 0; li < ids.size(); ++li) {
        int lab = labels[ids[li]];
        if (lab < 0 || lab >= K) throw std::invalid_argument("one_hot_rows: unlabeled node in id set");
        y(static_cast<int>(li), lab) = 1.0;
    }
    return y;
}

// Softmax GCN trained with cross entropy on the masked nodes; used both as a
// baseline classifier and as the frozen distillation teacher.
inline Net train_teacher(const Graph& g, const std::vector<int>& train_ids, const TrainConfig& cfg) {
    if (train_ids.empty()) throw std::invalid_argument("train_teacher: empty training set");
    Rng rng(cfg.seed);
    NetOptions opts;
    opts.head = HeadKind::Softmax;
    opts.dropout = cfg.dropout;
    Net net = make_feedforward(Arch::Gcn, g.feature_dim(), cfg.hidden, g.num_classes, opts, rng);
    Mat a_hat = normalized_adjacency(g);
    Sgd sgd;
    sgd.lr = cfg.lr;
    sgd.momentum = cfg.momentum;
    const double inv_n = 1.0 / train_ids.size();
    for (int t = 1; t <= cfg.iters; ++t) {
        Cache c = forward(net, g.features, a_hat, ForwardOptions::training(&rng));
        double loss = 0.0;
        Mat d_out(c.out.rows, c.out.cols);
        for (int i : train_ids) {
            double p = std::max(c.out(i, g.labels[i]), kProbClamp);
            loss -= std::log(p) * inv_n;
            d_out(i, g.labels[i]) -= inv_n / p;
        }
        if (!std::isfinite(loss)) throw std::runtime_error("train_teacher: training diverged");
        sgd.step(net, backward(net, c, a_hat, d_out));
    }
    return net;
}

struct SgnnResult {
    Net net;
    Mat alpha;       // deterministic evaluation alpha, N x K
    Mat mean_probs;  // MC-dropout averaged probabilities
    Vec vacuity, dissonance, entropy, aleatoric, epistemic;  // per node
    Vec loss_history;
    Vec term_enn, term_prior, term_teacher;  // per-iteration loss breakdown
};

// Evidence GCN against the kernel prior with teacher distillation: the joint
// objective is the ENN Bayes risk on labeled nodes, a Dirichlet KL to the
// graph prior, and a categorical KL to the frozen teacher with the warm-up
// schedule. During training the model probability is the current stochastic
// sample's alpha / S; at evaluation the dropout posterior is averaged over
// mc_samples passes and the entropy decomposition uses those samples.
inline SgnnResult train_sgnn(const Graph& g, const std::vector<int>& train_ids,
                             const TrainConfig& cfg, const Net* teacher = nullptr) {
    if (train_ids.empty()) throw std::invalid_argument("train_sgnn: empty training set");
    Rng rng(cfg.seed);
    NetOptions opts;
    opts.head = HeadKind::Evidence;
    opts.evidence_act = cfg.evidence_act;
    opts.dropout = cfg.dropout;
    Net net = make_feedforward(Arch::Gcn, g.feature_dim(), cfg.hidden, g.num_classes, opts, rng);
    Mat a_hat = normalized_adjacency(g);
    const int N = g.num_nodes();
    const int K = g.num_classes;

    Mat gkde_alpha = gkde_prior(g, train_ids, cfg.gkde_sigma);
    Mat teacher_probs(N, K);
    Net own_teacher;
    if (cfg.loss.lambda2 != 0.0) {
        if (teacher == nullptr) {
            TrainConfig tcfg = cfg;
            tcfg.seed = cfg.seed + 1;
            own_teacher = train_teacher(g, train_ids, tcfg);
            teacher = &own_teacher;
        }
        teacher_probs = forward(*teacher, g.features, a_hat, ForwardOptions::eval()).out;
    }
    Mat y_onehot = one_hot_rows(train_ids, g.labels, K);

    Sgd sgd;
    sgd.lr = cfg.lr;
    sgd.momentum = cfg.momentum;
    SgnnResult res;
    double best = HUGE_VAL;
    int since_best = 0;
    for (int t = 1; t <= cfg.iters; ++t) {
        Cache c = forward(net, g.features, a_hat, ForwardOptions::training(&rng));
        Mat alpha = alpha_from_cache(c);
        for (double v : alpha.a)
            if (!std::isfinite(v)) throw std::runtime_error("train_sgnn: training diverged");
        Mat probs(N, K);
        Vec strength(N);
        for (int i = 0; i < N; ++i) {
            double s = 0.0;
            for (int k = 0; k < K; ++k) s += alpha(i, k);
            strength[i] = s;
            for (int k = 0; k < K; ++k) probs(i, k) = alpha(i, k) / s;
        }
        JointLossGrad jl = joint_loss(train_ids, y_onehot, alpha, gkde_alpha, probs, teacher_probs,
                                      cfg.loss.lambda1, cfg.loss.lambda2_at(t));
        if (!std::isfinite(jl.value)) throw std::runtime_error("train_sgnn: training diverged");
        res.loss_history.push_back(jl.value);
        res.term_enn.push_back(jl.term_enn);
        res.term_prior.push_back(jl.term_prior);
        res.term_teacher.push_back(jl.term_teacher);
        // chain the probability gradient back to alpha: dp_k/da_j = (delta - p_k)/S
        Mat d_alpha = jl.d_alpha;
        for (int i = 0; i < N; ++i) {
            double inner = 0.0;
            for (int k = 0; k < K; ++k) inner += jl.d_model_probs(i, k) * probs(i, k);
            for (int j = 0; j < K; ++j)
                d_alpha(i, j) += (jl.d_model_probs(i, j) - inner) / strength[i];
        }
        sgd.step(net, backward(net, c, a_hat, d_alpha));
        if (cfg.patience > 0) {
            if (jl.value < best - 1e-12) {
                best = jl.value;
                since_best = 0;
            } else if (++since_best >= cfg.patience) {
                break;
            }
        }
    }

    Cache ec = forward(net, g.features, a_hat, ForwardOptions::eval());
    res.alpha = alpha_from_cache(ec);
    res.vacuity.resize(N);
    res.dissonance.resize(N);
    for (int i = 0; i < N; ++i) {
        DirichletParams d{res.alpha.row(i)};
        res.vacuity[i] = vacuity(d);
        res.dissonance[i] = dissonance(d);
    }
    McDropoutResult mc = mc_dropout_predict(net, g.features, a_hat, cfg.mc_samples, cfg.seed + 7);
    res.mean_probs = mc.mean_probs;
    res.entropy.resize(N);
    res.aleatoric.resize(N);
    res.epistemic.resize(N);
    Mat samples(static_cast<int>(mc.sample_probs.size()), K);
    for (int i = 0; i < N; ++i) {
        for (size_t m = 0; m < mc.sample_probs.size(); ++m)
            samples.set_row(static_cast<int>(m), mc.sample_probs[m].row(i));
        McDecomposition dec = mc_decomposition(samples);
        res.entropy[i] = dec.entropy;
        res.aleatoric[i] = dec.aleatoric;
        res.epistemic[i] = dec.epistemic;
    }
    res.net = std::move(net);
    return res;
}

struct MtennConfig {
    int hidden = 16;
    int iters = 200;
    double lr = 0.05;
    double momentum = 0.0;
    Activation evidence_act = Activation::Relu;
    uint64_t seed = 1;
};

struct MtennResult {
    Net net;
    Vec loss_history;
};

// Temporal evidence net: the Elman cell feeds a per-timestep head whose 2K
// outputs are positive/negative evidence per class, trained full-batch on the
// per-timestep Beta evidential loss.
inline MtennResult train_mtenn(const std::vector<Mat>& features, const std::vector<Mat>& labels,
                               const MtennConfig& cfg) {
    if (features.empty() || features.size() != labels.size())
        throw std::invalid_argument("train_mtenn: need matching feature/label streams");
    const int K = labels[0].cols;
    const int dim = features[0].cols;
    Rng rng(cfg.seed);
    NetOptions opts;
    opts.head = HeadKind::Evidence;
    opts.evidence_act = cfg.evidence_act;
    Net net = make_elman(dim, cfg.hidden, 2 * K, opts, rng);
    Sgd sgd;
    sgd.lr = cfg.lr;
    sgd.momentum = cfg.momentum;

    double inv_total = 0.0;
    for (const Mat& f : features) inv_total += f.rows;
    inv_total = 1.0 / inv_total;

    MtennResult res;
    for (int t = 1; t <= cfg.iters; ++t) {
        Gradients total = zero_gradients(net);
        double loss = 0.0;
        for (size_t s = 0; s < features.size(); ++s) {
            if (labels[s].cols != K || labels[s].rows != features[s].rows)
                throw std::invalid_argument("train_mtenn: label shape mismatch");
            Cache c = forward_stream(net, features[s]);
            const int T = features[s].rows;
            Mat alpha(T, K), beta(T, K);
            for (int tt = 0; tt < T; ++tt)
                for (int k = 0; k < K; ++k) {
                    alpha(tt, k) = c.out(tt, k) + 1.0;
                    beta(tt, k) = c.out(tt, K + k) + 1.0;
                }
            for (double v : c.out.a)
                if (!std::isfinite(v)) throw std::runtime_error("train_mtenn: training diverged");
            MtennGrad mg = mtenn_loss(labels[s], alpha, beta);
            loss += mg.value * inv_total;
            Mat d_out(T, 2 * K);
            for (int tt = 0; tt < T; ++tt)
                for (int k = 0; k < K; ++k) {
                    d_out(tt, k) = mg.d_alpha(tt, k) * inv_total;
                    d_out(tt, K + k) = mg.d_beta(tt, k) * inv_total;
                }
            Gradients g = backward_stream(net, c, d_out);
            for (size_t l = 0; l < total.layers.size(); ++l) {
                axpy(total.layers[l].w, 1.0, g.layers[l].w);
                axpy(total.layers[l].b, 1.0, g.layers[l].b);
            }
        }
        if (!std::isfinite(loss)) throw std::runtime_error("train_mtenn: training diverged");
        res.loss_history.push_back(loss);
        sgd.step(net, total);
    }
    res.net = std::move(net);
    return res;
}

}  // namespace uqkit
