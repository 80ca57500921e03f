#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "graph.hpp"
#include "matrix.hpp"
#include "rng.hpp"
#include "robust_ssl.hpp"

namespace uqkit {

enum class OodKind { Faraway, Boundary, Mixed };

struct TwoMoonsConfig {
    int n_unlabeled = 300;
    double noise = 0.1;
    OodKind ood_kind = OodKind::Faraway;
    double ood_ratio = 0.5;
    int labeled_per_class = 6;
    int n_val = 100;
    int n_test = 400;
    double faraway_scale = 10.0;  // displacement in units of the rms data radius
    uint64_t seed = 1;
};

namespace detail {

inline Vec moon_point(int cls, double t, double noise, Rng& rng) {
    double x, y;
    if (cls == 0) {
        x = std::cos(t);
        y = std::sin(t);
    } else {
        x = 1.0 - std::cos(t);
        y = 0.5 - std::sin(t);
    }
    return {x + rng.normal(0.0, noise), y + rng.normal(0.0, noise)};
}

inline void fill_moons(Mat& x, std::vector<int>& y, int n, double noise, Rng& rng) {
    x = Mat(n, 2);
    y.resize(n);
    for (int i = 0; i < n; ++i) {
        int cls = i % 2;
        Vec p = moon_point(cls, rng.uniform(0.0, M_PI), noise, rng);
        x.set_row(i, p);
        y[i] = cls;
    }
}

}  // namespace detail

// Interleaved two-moons samples with three OOD contamination patterns in the
// unlabeled pool: faraway points flung out at a multiple of the data radius,
// boundary points at midpoints of opposite-class pairs, or an even mix.
inline RsslData gen_two_moons(const TwoMoonsConfig& cfg) {
    if (cfg.ood_ratio < 0.0 || cfg.ood_ratio >= 1.0)
        throw std::invalid_argument("gen_two_moons: ood_ratio must lie in [0,1)");
    if (cfg.labeled_per_class < 1) throw std::invalid_argument("gen_two_moons: need labeled examples");
    Rng rng(cfg.seed);
    RsslData d;

    detail::fill_moons(d.x_lab, d.y_lab, 2 * cfg.labeled_per_class, cfg.noise, rng);
    detail::fill_moons(d.x_val, d.y_val, cfg.n_val, cfg.noise, rng);
    detail::fill_moons(d.x_test, d.y_test, cfg.n_test, cfg.noise, rng);

    int n_ood = static_cast<int>(std::lround(cfg.ood_ratio * cfg.n_unlabeled));
    int n_id = cfg.n_unlabeled - n_ood;
    Mat id_pool;
    std::vector<int> id_y;
    detail::fill_moons(id_pool, id_y, std::max(n_id, 2), cfg.noise, rng);

    // centroid and rms radius of the clean cloud set the faraway scale
    Vec centroid(2, 0.0);
    for (int i = 0; i < id_pool.rows; ++i)
        for (int c = 0; c < 2; ++c) centroid[c] += id_pool(i, c) / id_pool.rows;
    double rms = 0.0;
    for (int i = 0; i < id_pool.rows; ++i) {
        double dx = id_pool(i, 0) - centroid[0], dy = id_pool(i, 1) - centroid[1];
        rms += (dx * dx + dy * dy) / id_pool.rows;
    }
    rms = std::sqrt(rms);

    d.x_unl = Mat(cfg.n_unlabeled, 2);
    d.unl_is_ood.assign(cfg.n_unlabeled, 0);
    for (int i = 0; i < n_id; ++i) d.x_unl.set_row(i, id_pool.row(i));
    for (int j = 0; j < n_ood; ++j) {
        OodKind kind = cfg.ood_kind;
        if (kind == OodKind::Mixed) kind = j % 2 == 0 ? OodKind::Faraway : OodKind::Boundary;
        Vec p(2);
        if (kind == OodKind::Faraway) {
            double ang = rng.uniform(0.0, 2.0 * M_PI);
            p[0] = centroid[0] + cfg.faraway_scale * rms * std::cos(ang);
            p[1] = centroid[1] + cfg.faraway_scale * rms * std::sin(ang);
        } else {
            // midpoint of a random opposite-class pair sits on the margin
            Vec a = detail::moon_point(0, rng.uniform(0.0, M_PI), cfg.noise, rng);
            Vec b = detail::moon_point(1, rng.uniform(0.0, M_PI), cfg.noise, rng);
            p[0] = 0.5 * (a[0] + b[0]);
            p[1] = 0.5 * (a[1] + b[1]);
        }
        d.x_unl.set_row(n_id + j, p);
        d.unl_is_ood[n_id + j] = 1;
    }
    return d;
}

struct SbmConfig {
    int num_classes = 4;
    int nodes_per_class = 30;
    double p_in = 0.25;
    double p_out = 0.02;
    int feature_dim = 8;
    int train_per_class = 20;
    int ood_classes = 1;  // highest class indices are held out of training
    double mean_scale = 1.0;
    uint64_t seed = 1;
};

struct SbmData {
    Graph g;
    std::vector<int> train_ids;
    std::vector<char> node_is_ood;  // member of a held-out class
};

// Stochastic block model with class-conditional Gaussian features. The last
// `ood_classes` classes never appear in the training mask, so a model trained
// on the rest sees them as out of distribution.
inline SbmData gen_sbm_graph(const SbmConfig& cfg) {
    if (cfg.p_in <= cfg.p_out) throw std::invalid_argument("gen_sbm_graph: need p_in > p_out");
    if (cfg.ood_classes < 0 || cfg.ood_classes >= cfg.num_classes)
        throw std::invalid_argument("gen_sbm_graph: ood_classes must leave at least one ID class");
    if (cfg.train_per_class > cfg.nodes_per_class)
        throw std::invalid_argument("gen_sbm_graph: train_per_class exceeds class size");
    Rng rng(cfg.seed);
    const int n = cfg.num_classes * cfg.nodes_per_class;

    SbmData d;
    d.g.num_classes = cfg.num_classes;
    d.g.features = Mat(n, cfg.feature_dim);
    d.g.labels.resize(n);
    d.node_is_ood.assign(n, 0);

    Mat means(cfg.num_classes, cfg.feature_dim);
    for (double& v : means.a) v = rng.normal(0.0, cfg.mean_scale);

    for (int i = 0; i < n; ++i) {
        int cls = i / cfg.nodes_per_class;
        d.g.labels[i] = cls;
        if (cls >= cfg.num_classes - cfg.ood_classes) d.node_is_ood[i] = 1;
        for (int f = 0; f < cfg.feature_dim; ++f) d.g.features(i, f) = means(cls, f) + rng.normal();
    }
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            double p = d.g.labels[i] == d.g.labels[j] ? cfg.p_in : cfg.p_out;
            if (rng.uniform() < p) d.g.edges.push_back({i, j});
        }

    for (int cls = 0; cls < cfg.num_classes - cfg.ood_classes; ++cls) {
        std::vector<int> perm = rng.permutation(cfg.nodes_per_class);
        for (int t = 0; t < cfg.train_per_class; ++t)
            d.train_ids.push_back(cls * cfg.nodes_per_class + perm[t]);
    }
    d.g.validate();
    return d;
}

struct EventSpec {
    int cls = 0;
    int onset = 0;
    int offset = 0;  // exclusive
};

struct EventStreamConfig {
    int T = 60;
    int num_classes = 2;
    std::vector<EventSpec> events;
    double noise = 0.3;
    int feature_dim = 8;
    double signal_strength = 2.0;
    uint64_t seed = 1;
    uint64_t pattern_seed = 9001;  // shared across streams so nets can learn the classes
};

struct EventStream {
    Mat features;  // T x feature_dim
    Mat labels;    // T x K, 0/1, possibly multi-label
};

// Gaussian background plus a per-class signature that ramps up linearly over
// each event span; labels are 1 exactly on [onset, offset).
inline EventStream gen_event_stream(const EventStreamConfig& cfg) {
    for (const EventSpec& e : cfg.events) {
        if (e.cls < 0 || e.cls >= cfg.num_classes)
            throw std::invalid_argument("gen_event_stream: class out of range");
        if (e.onset < 0 || e.onset >= e.offset || e.offset > cfg.T)
            throw std::invalid_argument("gen_event_stream: event span must satisfy 0 <= onset < offset <= T");
    }
    Rng rng(cfg.seed);
    EventStream s;
    s.features = Mat(cfg.T, cfg.feature_dim);
    s.labels = Mat(cfg.T, cfg.num_classes);
    for (double& v : s.features.a) v = rng.normal(0.0, cfg.noise);

    for (const EventSpec& e : cfg.events) {
        Rng pat(cfg.pattern_seed + static_cast<uint64_t>(e.cls));
        Vec pattern(cfg.feature_dim);
        for (double& v : pattern) v = pat.normal();
        int span = e.offset - e.onset;
        for (int t = e.onset; t < e.offset; ++t) {
            double ramp = static_cast<double>(t - e.onset + 1) / span;
            for (int f = 0; f < cfg.feature_dim; ++f)
                s.features(t, f) += cfg.signal_strength * ramp * pattern[f];
            s.labels(t, e.cls) = 1.0;
        }
    }
    return s;
}

}  // namespace uqkit
