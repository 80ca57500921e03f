#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "batchnorm.hpp"
#include "matrix.hpp"
#include "rng.hpp"

namespace uqkit {

enum class Arch { Mlp, Gcn, Recurrent };
enum class HeadKind { Evidence, Softmax };
enum class Activation { Relu, Softplus, Tanh };

inline std::string arch_name(Arch a) {
    switch (a) {
        case Arch::Mlp: return "mlp";
        case Arch::Gcn: return "gcn";
        case Arch::Recurrent: return "recurrent";
    }
    return "?";
}

inline double apply_act(Activation act, double z) {
    switch (act) {
        case Activation::Relu: return z > 0.0 ? z : 0.0;
        case Activation::Softplus: return z > 30.0 ? z : std::log1p(std::exp(z));
        case Activation::Tanh: return std::tanh(z);
    }
    return z;
}

// derivative recovered from the activation value (h = act(z))
inline double act_deriv_from_output(Activation act, double h) {
    switch (act) {
        case Activation::Relu: return h > 0.0 ? 1.0 : 0.0;
        case Activation::Softplus: return 1.0 - std::exp(-h);
        case Activation::Tanh: return 1.0 - h * h;
    }
    return 1.0;
}

struct DenseLayer {
    Mat w;  // in x out
    Vec b;
};

// Minimal reference network. For mlp/gcn the layer list is trunk + head; a
// gcn layer propagates through the normalized adjacency: z = A_hat (h w) + b.
// For recurrent (Elman) the three layers are input->hidden, hidden->hidden
// and the per-timestep head, with layers[0].b as the cell bias.
struct Net {
    Arch arch = Arch::Mlp;
    HeadKind head = HeadKind::Evidence;
    Activation hidden_act = Activation::Relu;
    Activation evidence_act = Activation::Relu;
    double dropout = 0.0;
    bool with_bn = false;
    std::vector<DenseLayer> layers;
    std::vector<BnLayer> bn;   // one per hidden layer when with_bn
    DenseLayer aux_head;       // optional evidence probe for softmax nets
    bool has_aux = false;

    int input_dim() const { return layers.front().w.rows; }
    int output_dim() const { return layers.back().w.cols; }
    int hidden_count() const {
        return arch == Arch::Recurrent ? 1 : static_cast<int>(layers.size()) - 1;
    }
};

struct Gradients {
    std::vector<DenseLayer> layers;
    std::vector<Vec> bn_gamma, bn_beta;
    DenseLayer aux_head;
};

inline Gradients zero_gradients(const Net& net) {
    Gradients g;
    g.layers.resize(net.layers.size());
    for (size_t i = 0; i < net.layers.size(); ++i) {
        g.layers[i].w = Mat(net.layers[i].w.rows, net.layers[i].w.cols);
        g.layers[i].b.assign(net.layers[i].b.size(), 0.0);
    }
    g.bn_gamma.resize(net.bn.size());
    g.bn_beta.resize(net.bn.size());
    for (size_t i = 0; i < net.bn.size(); ++i) {
        g.bn_gamma[i].assign(net.bn[i].dim(), 0.0);
        g.bn_beta[i].assign(net.bn[i].dim(), 0.0);
    }
    if (net.has_aux) {
        g.aux_head.w = Mat(net.aux_head.w.rows, net.aux_head.w.cols);
        g.aux_head.b.assign(net.aux_head.b.size(), 0.0);
    }
    return g;
}

inline DenseLayer glorot_dense(int fan_in, int fan_out, Rng& rng) {
    DenseLayer l;
    l.w = Mat(fan_in, fan_out);
    double lim = std::sqrt(6.0 / (fan_in + fan_out));
    for (double& v : l.w.a) v = rng.uniform(-lim, lim);
    l.b.assign(fan_out, 0.0);
    return l;
}

struct NetOptions {
    HeadKind head = HeadKind::Evidence;
    Activation hidden_act = Activation::Relu;
    Activation evidence_act = Activation::Relu;
    double dropout = 0.0;
    bool with_bn = false;
    bool aux_evidence_head = false;
};

inline Net make_feedforward(Arch arch, int input, const std::vector<int>& hidden, int output,
                            const NetOptions& opts, Rng& rng) {
    if (arch == Arch::Recurrent) throw std::invalid_argument("make_feedforward: use make_elman");
    Net net;
    net.arch = arch;
    net.head = opts.head;
    net.hidden_act = opts.hidden_act;
    net.evidence_act = opts.evidence_act;
    net.dropout = opts.dropout;
    net.with_bn = opts.with_bn;
    int in = input;
    for (int h : hidden) {
        net.layers.push_back(glorot_dense(in, h, rng));
        if (opts.with_bn) net.bn.push_back(BnLayer(h));
        in = h;
    }
    net.layers.push_back(glorot_dense(in, output, rng));
    if (opts.aux_evidence_head) {
        net.has_aux = true;
        net.aux_head = glorot_dense(in, output, rng);
    }
    return net;
}

inline Net make_elman(int input, int hidden, int output, const NetOptions& opts, Rng& rng) {
    Net net;
    net.arch = Arch::Recurrent;
    net.head = opts.head;
    net.hidden_act = Activation::Tanh;
    net.evidence_act = opts.evidence_act;
    net.layers.push_back(glorot_dense(input, hidden, rng));
    net.layers.push_back(glorot_dense(hidden, hidden, rng));
    net.layers[1].b.assign(hidden, 0.0);  // cell bias lives on layers[0]
    net.layers.push_back(glorot_dense(hidden, output, rng));
    return net;
}

struct ForwardOptions {
    bool train_bn = false;            // batch statistics vs running statistics
    bool dropout_active = false;      // sample dropout masks (needs rng)
    const Vec* bn_weights = nullptr;  // per-row WBN weights; all-ones when null
    Rng* rng = nullptr;

    static ForwardOptions training(Rng* r, const Vec* weights = nullptr) {
        ForwardOptions o;
        o.train_bn = true;
        o.dropout_active = true;
        o.rng = r;
        o.bn_weights = weights;
        return o;
    }
    static ForwardOptions eval() { return ForwardOptions{}; }
};

struct Cache {
    Mat input;
    std::vector<Mat> h;        // post-activation, pre-dropout
    std::vector<Mat> h_drop;   // after dropout (== h when no dropout)
    std::vector<Mat> mask;     // dropout masks including 1/(1-p) scale
    std::vector<BnCache> bn;
    Mat head_z;  // head pre-activation
    Mat out;     // evidence (>= 0) or probabilities
    // recurrent extras
    Mat states;  // T x hidden (post-tanh)
};

// fold the batch statistics of a training-mode cache into the running stats
inline void update_bn_running_stats(Net& net, const Cache& c) {
    for (size_t l = 0; l < net.bn.size(); ++l)
        if (c.bn[l].training) update_running_stats(net.bn[l], c.bn[l]);
}

inline Vec softmax_row(const Vec& z) {
    double zmax = z[0];
    for (double v : z) zmax = std::max(zmax, v);
    Vec p(z.size());
    double s = 0.0;
    for (size_t k = 0; k < z.size(); ++k) {
        p[k] = std::exp(z[k] - zmax);
        s += p[k];
    }
    for (double& v : p) v /= s;
    return p;
}

// Forward pass for mlp/gcn. `a_hat` is required for gcn (normalized
// adjacency over the same node set as `x`) and ignored for mlp.
inline Cache forward(const Net& net, const Mat& x, const Mat& a_hat, const ForwardOptions& opts) {
    if (net.arch == Arch::Recurrent) throw std::invalid_argument("forward: recurrent nets use forward_stream");
    if (x.cols != net.input_dim()) throw std::invalid_argument("forward: input dim mismatch");
    if (net.arch == Arch::Gcn && (a_hat.rows != x.rows || a_hat.cols != x.rows))
        throw std::invalid_argument("forward: adjacency shape mismatch");
    bool use_dropout = opts.dropout_active && net.dropout > 0.0;
    if (use_dropout && opts.rng == nullptr)
        throw std::invalid_argument("forward: dropout requires an rng");

    Cache c;
    c.input = x;
    int n_hidden = net.hidden_count();
    c.h.resize(n_hidden);
    c.h_drop.resize(n_hidden);
    c.mask.resize(n_hidden);
    c.bn.resize(net.bn.size());

    const Mat* cur = &c.input;
    Vec ones;
    for (int l = 0; l < n_hidden; ++l) {
        Mat z = matmul(*cur, net.layers[l].w);
        if (net.arch == Arch::Gcn) z = matmul(a_hat, z);
        add_row_broadcast(z, net.layers[l].b);
        if (net.with_bn) {
            if (opts.train_bn) {
                if (ones.empty()) ones.assign(x.rows, 1.0);
                const Vec& w = opts.bn_weights ? *opts.bn_weights : ones;
                z = weighted_batch_norm(z, w, net.bn[l], &c.bn[l]);
            } else {
                z = batch_norm_eval(z, net.bn[l], &c.bn[l]);
            }
        }
        Mat h(z.rows, z.cols);
        for (size_t i = 0; i < z.a.size(); ++i) h.a[i] = apply_act(net.hidden_act, z.a[i]);
        c.h[l] = h;
        if (use_dropout) {
            c.mask[l] = Mat(h.rows, h.cols);
            double keep = 1.0 - net.dropout;
            for (size_t i = 0; i < h.a.size(); ++i)
                c.mask[l].a[i] = opts.rng->bernoulli(keep) ? 1.0 / keep : 0.0;
            Mat hd = h;
            for (size_t i = 0; i < hd.a.size(); ++i) hd.a[i] *= c.mask[l].a[i];
            c.h_drop[l] = hd;
        } else {
            c.h_drop[l] = h;
        }
        cur = &c.h_drop[l];
    }

    const DenseLayer& headl = net.layers.back();
    Mat z = matmul(*cur, headl.w);
    if (net.arch == Arch::Gcn) z = matmul(a_hat, z);
    add_row_broadcast(z, headl.b);
    c.head_z = z;
    c.out = Mat(z.rows, z.cols);
    if (net.head == HeadKind::Evidence) {
        for (size_t i = 0; i < z.a.size(); ++i) c.out.a[i] = apply_act(net.evidence_act, z.a[i]);
    } else {
        for (int i = 0; i < z.rows; ++i) c.out.set_row(i, softmax_row(z.row(i)));
    }
    return c;
}

// alpha = evidence + 1
inline Mat alpha_from_cache(const Cache& c) {
    Mat a = c.out;
    for (double& v : a.a) v += 1.0;
    return a;
}

inline const Mat& head_input(const Cache& c) { return c.h_drop.empty() ? c.input : c.h_drop.back(); }

// Backprop for mlp/gcn. `d_out` is the loss gradient with respect to the
// network output (evidence or probabilities, matching the head kind).
inline Gradients backward(const Net& net, const Cache& c, const Mat& a_hat, const Mat& d_out) {
    if (net.arch == Arch::Recurrent) throw std::invalid_argument("backward: recurrent nets use backward_stream");
    Gradients g = zero_gradients(net);
    int n_hidden = net.hidden_count();

    // through the head nonlinearity
    Mat dz(c.head_z.rows, c.head_z.cols);
    if (net.head == HeadKind::Evidence) {
        for (size_t i = 0; i < dz.a.size(); ++i)
            dz.a[i] = d_out.a[i] * act_deriv_from_output(net.evidence_act, c.out.a[i]);
    } else {
        for (int i = 0; i < dz.rows; ++i) {
            Vec p = c.out.row(i);
            Vec go = d_out.row(i);
            double inner = dot(go, p);
            for (int k = 0; k < dz.cols; ++k) dz(i, k) = p[k] * (go[k] - inner);
        }
    }

    // head linear layer
    {
        Mat dm = net.arch == Arch::Gcn ? matmul_tn(a_hat, dz) : dz;  // A_hat is symmetric
        const Mat& hin = head_input(c);
        g.layers.back().w = matmul_tn(hin, dm);
        for (int i = 0; i < dz.rows; ++i)
            for (int k = 0; k < dz.cols; ++k) g.layers.back().b[k] += dz(i, k);
        dz = matmul_nt(dm, net.layers.back().w);
    }

    for (int l = n_hidden - 1; l >= 0; --l) {
        // dz currently holds the gradient wrt h_drop[l]
        if (!c.mask.empty() && !c.mask[l].empty())
            for (size_t i = 0; i < dz.a.size(); ++i) dz.a[i] *= c.mask[l].a[i];
        for (size_t i = 0; i < dz.a.size(); ++i)
            dz.a[i] *= act_deriv_from_output(net.hidden_act, c.h[l].a[i]);
        if (net.with_bn) {
            BnBackward bg = weighted_batch_norm_backward(dz, c.bn[l], net.bn[l]);
            g.bn_gamma[l] = bg.d_gamma;
            g.bn_beta[l] = bg.d_beta;
            dz = bg.d_input;
        }
        Mat dm = net.arch == Arch::Gcn ? matmul_tn(a_hat, dz) : dz;
        const Mat& hin = l == 0 ? c.input : c.h_drop[l - 1];
        g.layers[l].w = matmul_tn(hin, dm);
        for (int i = 0; i < dz.rows; ++i)
            for (int k = 0; k < dz.cols; ++k) g.layers[l].b[k] += dz(i, k);
        if (l > 0) dz = matmul_nt(dm, net.layers[l].w);
    }
    return g;
}

// Gradient of a scalar with respect to the per-row batch-norm weights, given
// its gradient with respect to the final hidden features. The trunk weights
// are treated as constants; what varies with w are the weighted statistics
// mu^w and (s^w)^2 of every normalization stage. For a stage with upstream
// gradient G (wrt the BN output), per-dimension sums A_j = sum_i G_ij gamma_j
// and B_j = sum_i G_ij gamma_j xhat_ij give
//   dL/dw_r = -(1/sum w) sum_j [ A_j xhat_rj + (B_j/2)(xhat_rj^2 - 1 + eps inv_j^2) ].
inline Vec wbn_weight_grad(const Net& net, const Cache& c, const Vec& bn_w, Mat d_feat) {
    if (net.arch != Arch::Mlp) throw std::invalid_argument("wbn_weight_grad: mlp only");
    if (!net.with_bn) throw std::invalid_argument("wbn_weight_grad: net has no normalization");
    const int n = c.input.rows;
    if (static_cast<int>(bn_w.size()) != n || d_feat.rows != n)
        throw std::invalid_argument("wbn_weight_grad: row count mismatch");
    double wsum = 0.0;
    for (double v : bn_w) wsum += v;
    if (!(wsum > 0.0)) throw std::invalid_argument("wbn_weight_grad: all weights zero");

    Vec dw(n, 0.0);
    for (int l = net.hidden_count() - 1; l >= 0; --l) {
        if (!c.mask.empty() && !c.mask[l].empty())
            for (size_t i = 0; i < d_feat.a.size(); ++i) d_feat.a[i] *= c.mask[l].a[i];
        for (size_t i = 0; i < d_feat.a.size(); ++i)
            d_feat.a[i] *= act_deriv_from_output(net.hidden_act, c.h[l].a[i]);
        const BnCache& bc = c.bn[l];
        if (!bc.training) throw std::invalid_argument("wbn_weight_grad: needs a training-mode cache");
        const BnLayer& layer = net.bn[l];
        const int d = layer.dim();
        for (int j = 0; j < d; ++j) {
            double aj = 0.0, bj = 0.0;
            for (int i = 0; i < n; ++i) {
                double dxh = d_feat(i, j) * layer.gamma[j];
                aj += dxh;
                bj += dxh * bc.xhat(i, j);
            }
            double eps_inv2 = layer.eps * bc.inv_std[j] * bc.inv_std[j];
            for (int r = 0; r < n; ++r) {
                double xh = bc.xhat(r, j);
                dw[r] -= (aj * xh + 0.5 * bj * (xh * xh - 1.0 + eps_inv2)) / wsum;
            }
        }
        BnBackward bg = weighted_batch_norm_backward(d_feat, bc, layer);
        d_feat = std::move(bg.d_input);
        if (l > 0) d_feat = matmul_nt(d_feat, net.layers[l].w);
    }
    return dw;
}

// Elman forward over one stream (rows of x are timesteps).
inline Cache forward_stream(const Net& net, const Mat& x) {
    if (net.arch != Arch::Recurrent) throw std::invalid_argument("forward_stream: not a recurrent net");
    if (x.cols != net.input_dim()) throw std::invalid_argument("forward_stream: input dim mismatch");
    int T = x.rows;
    int hdim = net.layers[0].w.cols;
    Cache c;
    c.input = x;
    c.states = Mat(T, hdim);
    Vec h(hdim, 0.0);
    for (int t = 0; t < T; ++t) {
        Vec z = net.layers[0].b;
        for (int j = 0; j < hdim; ++j) {
            double s = z[j];
            for (int i = 0; i < x.cols; ++i) s += x(t, i) * net.layers[0].w(i, j);
            for (int i = 0; i < hdim; ++i) s += h[i] * net.layers[1].w(i, j);
            c.states(t, j) = std::tanh(s);
        }
        h = c.states.row(t);
    }
    const DenseLayer& headl = net.layers[2];
    Mat z = matmul(c.states, headl.w);
    add_row_broadcast(z, headl.b);
    c.head_z = z;
    c.out = Mat(z.rows, z.cols);
    if (net.head == HeadKind::Evidence) {
        for (size_t i = 0; i < z.a.size(); ++i) c.out.a[i] = apply_act(net.evidence_act, z.a[i]);
    } else {
        for (int i = 0; i < z.rows; ++i) c.out.set_row(i, softmax_row(z.row(i)));
    }
    return c;
}

// Backprop through time for the Elman net.
inline Gradients backward_stream(const Net& net, const Cache& c, const Mat& d_out) {
    if (net.arch != Arch::Recurrent) throw std::invalid_argument("backward_stream: not a recurrent net");
    Gradients g = zero_gradients(net);
    int T = c.input.rows;
    int hdim = net.layers[0].w.cols;

    Mat dz(T, d_out.cols);
    if (net.head == HeadKind::Evidence) {
        for (size_t i = 0; i < dz.a.size(); ++i)
            dz.a[i] = d_out.a[i] * act_deriv_from_output(net.evidence_act, c.out.a[i]);
    } else {
        for (int i = 0; i < dz.rows; ++i) {
            Vec p = c.out.row(i);
            Vec go = d_out.row(i);
            double inner = dot(go, p);
            for (int k = 0; k < dz.cols; ++k) dz(i, k) = p[k] * (go[k] - inner);
        }
    }
    g.layers[2].w = matmul_tn(c.states, dz);
    for (int t = 0; t < T; ++t)
        for (int k = 0; k < dz.cols; ++k) g.layers[2].b[k] += dz(t, k);

    Vec dh_next(hdim, 0.0);
    for (int t = T - 1; t >= 0; --t) {
        Vec dh(hdim, 0.0);
        for (int j = 0; j < hdim; ++j) {
            double s = dh_next[j];
            for (int k = 0; k < dz.cols; ++k) s += dz(t, k) * net.layers[2].w(j, k);
            dh[j] = s * (1.0 - c.states(t, j) * c.states(t, j));  // through tanh
        }
        for (int i = 0; i < c.input.cols; ++i)
            for (int j = 0; j < hdim; ++j) g.layers[0].w(i, j) += c.input(t, i) * dh[j];
        for (int j = 0; j < hdim; ++j) g.layers[0].b[j] += dh[j];
        if (t > 0) {
            for (int i = 0; i < hdim; ++i)
                for (int j = 0; j < hdim; ++j) g.layers[1].w(i, j) += c.states(t - 1, i) * dh[j];
        }
        dh_next.assign(hdim, 0.0);
        if (t > 0)
            for (int i = 0; i < hdim; ++i)
                for (int j = 0; j < hdim; ++j) dh_next[i] += dh[j] * net.layers[1].w(i, j);
    }
    return g;
}

// auxiliary evidence probe: a linear head on the penultimate features whose
// gradient never reaches the trunk
inline Mat forward_aux_alpha(const Net& net, const Cache& c) {
    if (!net.has_aux) throw std::invalid_argument("forward_aux_alpha: net has no aux head");
    Mat z = matmul(head_input(c), net.aux_head.w);
    add_row_broadcast(z, net.aux_head.b);
    for (double& v : z.a) v = apply_act(net.evidence_act, v) + 1.0;
    return z;
}

inline void accumulate_aux_gradients(const Net& net, const Cache& c, const Mat& aux_alpha,
                                     const Mat& d_alpha, Gradients& g) {
    Mat dz(d_alpha.rows, d_alpha.cols);
    for (size_t i = 0; i < dz.a.size(); ++i)
        dz.a[i] = d_alpha.a[i] * act_deriv_from_output(net.evidence_act, aux_alpha.a[i] - 1.0);
    Mat dw = matmul_tn(head_input(c), dz);
    axpy(g.aux_head.w, 1.0, dw);
    for (int i = 0; i < dz.rows; ++i)
        for (int k = 0; k < dz.cols; ++k) g.aux_head.b[k] += dz(i, k);
}

// ---- parameter packing (SGD, finite-difference checks) ----

inline void for_each_param(Net& net, const std::function<void(double&)>& f) {
    for (auto& l : net.layers) {
        for (double& v : l.w.a) f(v);
        for (double& v : l.b) f(v);
    }
    for (auto& b : net.bn) {
        for (double& v : b.gamma) f(v);
        for (double& v : b.beta) f(v);
    }
    if (net.has_aux) {
        for (double& v : net.aux_head.w.a) f(v);
        for (double& v : net.aux_head.b) f(v);
    }
}

inline Vec pack_parameters(const Net& net) {
    Vec out;
    for_each_param(const_cast<Net&>(net), [&](double& v) { out.push_back(v); });
    return out;
}

inline void unpack_parameters(Net& net, const Vec& params) {
    size_t idx = 0;
    for_each_param(net, [&](double& v) { v = params.at(idx++); });
    if (idx != params.size()) throw std::invalid_argument("unpack_parameters: size mismatch");
}

inline Vec pack_gradients(const Net& net, const Gradients& g) {
    Vec out;
    for (size_t i = 0; i < net.layers.size(); ++i) {
        for (double v : g.layers[i].w.a) out.push_back(v);
        for (double v : g.layers[i].b) out.push_back(v);
    }
    for (size_t i = 0; i < net.bn.size(); ++i) {
        for (double v : g.bn_gamma[i]) out.push_back(v);
        for (double v : g.bn_beta[i]) out.push_back(v);
    }
    if (net.has_aux) {
        for (double v : g.aux_head.w.a) out.push_back(v);
        for (double v : g.aux_head.b) out.push_back(v);
    }
    return out;
}

// plain SGD with optional momentum (deliberately no adaptive optimizer)
struct Sgd {
    double lr = 0.1;
    double momentum = 0.0;
    Vec velocity;

    void step(Net& net, const Gradients& g) {
        Vec params = pack_parameters(net);
        Vec grads = pack_gradients(net, g);
        if (momentum > 0.0) {
            if (velocity.size() != grads.size()) velocity.assign(grads.size(), 0.0);
            for (size_t i = 0; i < grads.size(); ++i) {
                velocity[i] = momentum * velocity[i] + grads[i];
                params[i] -= lr * velocity[i];
            }
        } else {
            for (size_t i = 0; i < grads.size(); ++i) params[i] -= lr * grads[i];
        }
        unpack_parameters(net, params);
    }
};

// MC-dropout inference: per-sample expected probabilities and their mean.
struct McDropoutResult {
    Mat mean_probs;                  // n x K, arithmetic mean over samples
    std::vector<Mat> sample_probs;   // per sample, n x K
};

inline McDropoutResult mc_dropout_predict(const Net& net, const Mat& x, const Mat& a_hat,
                                          int samples, uint64_t seed) {
    if (samples <= 0) throw std::invalid_argument("mc_dropout_predict: samples must be positive");
    Rng rng(seed);
    McDropoutResult r;
    r.mean_probs = Mat(x.rows, net.output_dim());
    for (int m = 0; m < samples; ++m) {
        ForwardOptions opts;            // eval-mode BN ...
        opts.dropout_active = true;     // ... but dropout stays on for sampling
        opts.rng = &rng;
        Cache c = forward(net, x, a_hat, opts);
        Mat probs(x.rows, net.output_dim());
        if (net.head == HeadKind::Evidence) {
            Mat alpha = alpha_from_cache(c);
            for (int i = 0; i < alpha.rows; ++i) {
                double s = 0.0;
                for (int k = 0; k < alpha.cols; ++k) s += alpha(i, k);
                for (int k = 0; k < alpha.cols; ++k) probs(i, k) = alpha(i, k) / s;
            }
        } else {
            probs = c.out;
        }
        axpy(r.mean_probs, 1.0, probs);
        r.sample_probs.push_back(std::move(probs));
    }
    scale(r.mean_probs, 1.0 / samples);
    return r;
}

}  // namespace uqkit
