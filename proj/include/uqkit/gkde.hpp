#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "graph.hpp"
#include "matrix.hpp"

namespace uqkit {

// Gaussian kernel over hop distance; unreachable nodes contribute nothing.
inline double gkde_kernel(int hops, double sigma) {
    if (hops < 0) return 0.0;
    double d = static_cast<double>(hops);
    return std::exp(-d * d / (2.0 * sigma * sigma)) / (sigma * std::sqrt(2.0 * M_PI));
}

// Graph kernel density estimate of class evidence:
//   e_hat_{j,k} = sum_{l in train, y_l = k} g(d(j, l)),  alpha_hat = e_hat + 1.
// Returns an N x K matrix of alpha_hat.
inline Mat gkde_prior(const Graph& g, const std::vector<int>& train_ids, double sigma = 1.0) {
    g.validate();
    if (!(sigma > 0.0)) throw std::invalid_argument("gkde_prior: sigma must be positive");
    if (train_ids.empty()) throw std::invalid_argument("gkde_prior: empty training set");
    for (int l : train_ids) {
        if (l < 0 || l >= g.num_nodes()) throw std::invalid_argument("gkde_prior: bad train id");
        if (g.labels[l] < 0) throw std::invalid_argument("gkde_prior: unlabeled train node");
    }
    auto dist = bfs_distances(g, train_ids);
    Mat alpha_hat(g.num_nodes(), g.num_classes, 1.0);
    for (size_t s = 0; s < train_ids.size(); ++s) {
        int k = g.labels[train_ids[s]];
        for (int j = 0; j < g.num_nodes(); ++j)
            alpha_hat(j, k) += gkde_kernel(dist[s][j], sigma);
    }
    return alpha_hat;
}

}  // namespace uqkit
