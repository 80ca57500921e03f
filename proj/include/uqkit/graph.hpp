#pragma once

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <queue>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "matrix.hpp"

namespace uqkit {

// Undirected attributed graph. Edges are stored once (u < v), without
// self-loops; self-loops exist only inside the normalized adjacency.
struct Graph {
    int num_classes = 0;
    Mat features;             // N x d
    std::vector<int> labels;  // -1 marks an unlabeled node
    std::vector<std::pair<int, int>> edges;

    int num_nodes() const { return features.rows; }
    int feature_dim() const { return features.cols; }

    void validate() const {
        if (num_classes <= 0) throw std::invalid_argument("Graph: num_classes must be positive");
        if (static_cast<int>(labels.size()) != num_nodes())
            throw std::invalid_argument("Graph: label count mismatch");
        for (int y : labels)
            if (y < -1 || y >= num_classes) throw std::invalid_argument("Graph: label out of range");
        for (auto [u, v] : edges) {
            if (u < 0 || v < 0 || u >= num_nodes() || v >= num_nodes())
                throw std::invalid_argument("Graph: edge endpoint out of range");
            if (u == v) throw std::invalid_argument("Graph: self-loops are not stored");
        }
    }

    std::vector<std::vector<int>> adjacency_lists() const {
        std::vector<std::vector<int>> adj(num_nodes());
        for (auto [u, v] : edges) {
            adj[u].push_back(v);
            adj[v].push_back(u);
        }
        return adj;
    }
};

// BFS hop distances from each source; -1 where unreachable.
inline std::vector<std::vector<int>> bfs_distances(const Graph& g, const std::vector<int>& sources) {
    auto adj = g.adjacency_lists();
    std::vector<std::vector<int>> dist(sources.size());
    for (size_t s = 0; s < sources.size(); ++s) {
        int src = sources[s];
        if (src < 0 || src >= g.num_nodes())
            throw std::invalid_argument("bfs_distances: source out of range");
        std::vector<int>& d = dist[s];
        d.assign(g.num_nodes(), -1);
        std::queue<int> q;
        d[src] = 0;
        q.push(src);
        while (!q.empty()) {
            int u = q.front();
            q.pop();
            for (int v : adj[u])
                if (d[v] < 0) {
                    d[v] = d[u] + 1;
                    q.push(v);
                }
        }
    }
    return dist;
}

// A_hat = D^{-1/2} (A + I) D^{-1/2}, degrees taken from A + I.
inline Mat normalized_adjacency(const Graph& g) {
    int n = g.num_nodes();
    Mat A(n, n);
    for (int i = 0; i < n; ++i) A(i, i) = 1.0;
    for (auto [u, v] : g.edges) {
        A(u, v) = 1.0;
        A(v, u) = 1.0;
    }
    Vec dinv(n);
    for (int i = 0; i < n; ++i) {
        double deg = 0.0;
        for (int j = 0; j < n; ++j) deg += A(i, j);
        dinv[i] = 1.0 / std::sqrt(deg);
    }
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) A(i, j) *= dinv[i] * dinv[j];
    return A;
}

// Text format: header "N K d", then N lines "label f_1 ... f_d", then "E"
// and E lines "u v". Floats are written with 17 significant digits so a
// write/read cycle is bit exact.
inline void write_graph(const Graph& g, const std::string& path) {
    g.validate();
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_graph: cannot open " + path);
    out << g.num_nodes() << " " << g.num_classes << " " << g.feature_dim() << "\n";
    char buf[64];
    for (int i = 0; i < g.num_nodes(); ++i) {
        out << g.labels[i];
        for (int j = 0; j < g.feature_dim(); ++j) {
            std::snprintf(buf, sizeof(buf), "%.17g", g.features(i, j));
            out << " " << buf;
        }
        out << "\n";
    }
    out << g.edges.size() << "\n";
    for (auto [u, v] : g.edges) out << u << " " << v << "\n";
}

inline Graph read_graph(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("read_graph: cannot open " + path);
    int n = 0, k = 0, d = 0;
    if (!(in >> n >> k >> d) || n <= 0 || k <= 0 || d < 0)
        throw std::runtime_error("read_graph: bad header");
    Graph g;
    g.num_classes = k;
    g.features = Mat(n, d);
    g.labels.resize(n);
    for (int i = 0; i < n; ++i) {
        if (!(in >> g.labels[i])) throw std::runtime_error("read_graph: truncated node line");
        for (int j = 0; j < d; ++j)
            if (!(in >> g.features(i, j))) throw std::runtime_error("read_graph: truncated features");
    }
    size_t e = 0;
    if (!(in >> e)) throw std::runtime_error("read_graph: missing edge count");
    std::set<std::pair<int, int>> seen;
    for (size_t i = 0; i < e; ++i) {
        int u = 0, v = 0;
        if (!(in >> u >> v)) throw std::runtime_error("read_graph: truncated edge list");
        if (u > v) std::swap(u, v);
        if (seen.insert({u, v}).second) g.edges.push_back({u, v});
    }
    g.validate();
    return g;
}

// train mask: one node id per line
inline std::vector<int> read_node_ids(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("read_node_ids: cannot open " + path);
    std::vector<int> ids;
    int id;
    while (in >> id) ids.push_back(id);
    return ids;
}

inline void write_node_ids(const std::vector<int>& ids, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_node_ids: cannot open " + path);
    for (int id : ids) out << id << "\n";
}

}  // namespace uqkit
