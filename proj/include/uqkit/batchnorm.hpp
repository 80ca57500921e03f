#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "matrix.hpp"

namespace uqkit {

// Weighted batch normalization. Statistics are computed from the weighted
// batch; every row (including zero-weight ones) is normalized with them:
//   mu^w    = sum_i w_i x_i / sum_i w_i
//   (s^w)^2 = sum_i w_i (x_i - mu^w)^2 / sum_i w_i
//   y_i     = gamma (x_i - mu^w) / sqrt((s^w)^2 + eps) + beta.
// With all weights one this is exactly standard batch normalization.

struct BnLayer {
    Vec gamma, beta;
    Vec run_mean, run_var;
    double eps = 1e-5;
    double momentum = 0.1;

    explicit BnLayer(int dim = 0)
        : gamma(dim, 1.0), beta(dim, 0.0), run_mean(dim, 0.0), run_var(dim, 1.0) {}
    int dim() const { return static_cast<int>(gamma.size()); }
};

struct BnCache {
    Mat xhat;      // normalized inputs
    Vec mean;      // statistics actually used
    Vec inv_std;
    Vec wnorm;     // a_i = w_i / sum w (empty in eval mode)
    bool training = true;
};

struct BnBackward {
    Mat d_input;
    Vec d_gamma, d_beta;
};

inline Mat weighted_batch_norm(const Mat& x, const Vec& w, const BnLayer& layer, BnCache* cache) {
    if (x.rows == 0 || x.cols != layer.dim())
        throw std::invalid_argument("weighted_batch_norm: shape mismatch");
    if (static_cast<int>(w.size()) != x.rows)
        throw std::invalid_argument("weighted_batch_norm: weight count mismatch");
    double wsum = 0.0;
    for (double wi : w) {
        if (wi < 0.0) throw std::invalid_argument("weighted_batch_norm: negative weight");
        wsum += wi;
    }
    if (!(wsum > 0.0)) throw std::invalid_argument("weighted_batch_norm: all weights zero");

    int d = x.cols;
    Vec mean(d, 0.0), var(d, 0.0), wnorm(x.rows);
    for (int i = 0; i < x.rows; ++i) wnorm[i] = w[i] / wsum;
    for (int i = 0; i < x.rows; ++i)
        for (int j = 0; j < d; ++j) mean[j] += wnorm[i] * x(i, j);
    for (int i = 0; i < x.rows; ++i)
        for (int j = 0; j < d; ++j) {
            double c = x(i, j) - mean[j];
            var[j] += wnorm[i] * c * c;
        }

    Mat y(x.rows, d);
    Vec inv_std(d);
    for (int j = 0; j < d; ++j) inv_std[j] = 1.0 / std::sqrt(var[j] + layer.eps);
    if (cache) {
        cache->xhat = Mat(x.rows, d);
        cache->mean = mean;
        cache->inv_std = inv_std;
        cache->wnorm = wnorm;
        cache->training = true;
    }
    for (int i = 0; i < x.rows; ++i)
        for (int j = 0; j < d; ++j) {
            double xh = (x(i, j) - mean[j]) * inv_std[j];
            if (cache) cache->xhat(i, j) = xh;
            y(i, j) = layer.gamma[j] * xh + layer.beta[j];
        }
    return y;
}

struct WbnResult {
    Mat output;
    Vec mean;
    Vec var;
};

// standalone operator returning the batch statistics alongside the output
inline WbnResult weighted_batch_norm_stats(const Mat& x, const Vec& w, const Vec& gamma,
                                           const Vec& beta, double eps) {
    BnLayer layer(x.cols);
    layer.gamma = gamma;
    layer.beta = beta;
    layer.eps = eps;
    BnCache cache;
    WbnResult r;
    r.output = weighted_batch_norm(x, w, layer, &cache);
    r.mean = cache.mean;
    r.var.resize(x.cols);
    for (int j = 0; j < x.cols; ++j)
        r.var[j] = 1.0 / (cache.inv_std[j] * cache.inv_std[j]) - eps;
    return r;
}

inline void update_running_stats(BnLayer& layer, const BnCache& cache) {
    for (int j = 0; j < layer.dim(); ++j) {
        double var = 1.0 / (cache.inv_std[j] * cache.inv_std[j]) - layer.eps;
        layer.run_mean[j] = (1.0 - layer.momentum) * layer.run_mean[j] + layer.momentum * cache.mean[j];
        layer.run_var[j] = (1.0 - layer.momentum) * layer.run_var[j] + layer.momentum * var;
    }
}

// eval-mode transform with the running statistics
inline Mat batch_norm_eval(const Mat& x, const BnLayer& layer, BnCache* cache = nullptr) {
    if (x.cols != layer.dim()) throw std::invalid_argument("batch_norm_eval: shape mismatch");
    Mat y(x.rows, x.cols);
    Vec inv_std(x.cols);
    for (int j = 0; j < x.cols; ++j) inv_std[j] = 1.0 / std::sqrt(layer.run_var[j] + layer.eps);
    if (cache) {
        cache->xhat = Mat(x.rows, x.cols);
        cache->mean = layer.run_mean;
        cache->inv_std = inv_std;
        cache->wnorm.clear();
        cache->training = false;
    }
    for (int i = 0; i < x.rows; ++i)
        for (int j = 0; j < x.cols; ++j) {
            double xh = (x(i, j) - layer.run_mean[j]) * inv_std[j];
            if (cache) cache->xhat(i, j) = xh;
            y(i, j) = layer.gamma[j] * xh + layer.beta[j];
        }
    return y;
}

inline BnBackward weighted_batch_norm_backward(const Mat& d_out, const BnCache& cache,
                                               const BnLayer& layer) {
    int m = d_out.rows, d = d_out.cols;
    if (cache.xhat.rows != m || cache.xhat.cols != d)
        throw std::invalid_argument("weighted_batch_norm_backward: shape mismatch");
    BnBackward g;
    g.d_input = Mat(m, d);
    g.d_gamma.assign(d, 0.0);
    g.d_beta.assign(d, 0.0);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < d; ++j) {
            g.d_gamma[j] += d_out(i, j) * cache.xhat(i, j);
            g.d_beta[j] += d_out(i, j);
        }
    if (!cache.training) {
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < d; ++j)
                g.d_input(i, j) = d_out(i, j) * layer.gamma[j] * cache.inv_std[j];
        return g;
    }
    // training mode: statistics depend on the (weighted) batch
    for (int j = 0; j < d; ++j) {
        double dvar = 0.0, dmean = 0.0;
        for (int i = 0; i < m; ++i) {
            double dxh = d_out(i, j) * layer.gamma[j];
            dvar += dxh * cache.xhat(i, j);
            dmean += dxh;
        }
        // dvar currently holds sum dxh * xhat; convert to dL/dvar * 2/inv parts below
        double inv = cache.inv_std[j];
        for (int i = 0; i < m; ++i) {
            double dxh = d_out(i, j) * layer.gamma[j];
            double ai = cache.wnorm[i];
            g.d_input(i, j) =
                inv * (dxh - ai * dmean - ai * cache.xhat(i, j) * dvar);
        }
    }
    return g;
}

}  // namespace uqkit
