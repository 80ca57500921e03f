#pragma once

#include <cmath>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "batchnorm.hpp"
#include "bilevel.hpp"
#include "experiments.hpp"

namespace uqkit {

struct CheckResult {
    std::string name;
    bool pass = false;
    std::string detail;
};

namespace checks {

inline double rel_err(double analytic, double numeric, double floor = 1e-2) {
    return std::fabs(analytic - numeric) / std::max(floor, std::fabs(numeric));
}

// Bounds of the five-way uncertainty decomposition on random Dirichlets:
// vacuity plus dissonance stays below one, and vacuity dominates the
// expected pairwise divergence which in turn dominates the mutual
// information.
inline CheckResult uncertainty_bounds() {
    CheckResult r{"uncertainty-bounds"};
    Rng rng(42);
    double worst_sum = -1.0, worst_epis = -1.0;
    bool ok = true;
    for (int i = 0; i < 10000; ++i) {
        int K = 2 + i % 5;
        Vec alpha(K);
        for (double& a : alpha) a = 1.0 + 49.0 * rng.uniform();
        DirichletParams d{alpha};
        double S = d.strength();
        double u_v = vacuity(d);
        double u_diss = dissonance(d);
        double u_epis = epistemic_uncertainty(d);
        double pairwise = (K - 1.0) / S;
        worst_sum = std::max(worst_sum, u_v + u_diss);
        worst_epis = std::max(worst_epis, u_epis - pairwise);
        if (u_v + u_diss > 1.0 + 1e-9) ok = false;
        if (!(u_v > pairwise - 1e-9)) ok = false;
        if (u_epis > pairwise + 1e-9) ok = false;
    }
    r.pass = ok;
    r.detail = "max(u_v+u_diss)=" + fmt_g17(worst_sum) +
               " max(u_epis-(K-1)/S)=" + fmt_g17(worst_epis);
    return r;
}

// Exact values for the no-evidence Dirichlet [1,1,1]: total and vacuity
// uncertainty are one, dissonance is zero, the aleatoric closed form matches
// (5/6)/ln 3 and a million-sample Monte Carlo estimate.
inline CheckResult ood_exactness() {
    CheckResult r{"ood-exactness"};
    DirichletParams d{{1.0, 1.0, 1.0}};
    UncertaintyProfile p = uncertainty_profile(d, 1000000, 7);
    double alea_exact = (5.0 / 6.0) / std::log(3.0);
    bool ok = std::fabs(p.vacuity - 1.0) <= 1e-12 && std::fabs(p.entropy - 1.0) <= 1e-12 &&
              std::fabs(p.dissonance) <= 1e-12 && std::fabs(p.aleatoric - alea_exact) <= 1e-9;
    ok = ok && std::fabs(p.aleatoric_mc - p.aleatoric) <= 3.0 * p.aleatoric_mc_se;
    // full ordering 1 = u_v = u_en > u_alea > u_epis > u_diss = 0
    ok = ok && std::fabs(p.vacuity - p.entropy) <= 1e-12 && p.entropy > p.aleatoric &&
         p.aleatoric > p.epistemic && p.epistemic > p.dissonance;
    r.pass = ok;
    r.detail = "u_alea=" + fmt_g17(p.aleatoric) + " mc=" + fmt_g17(p.aleatoric_mc) +
               " se=" + fmt_g17(p.aleatoric_mc_se) + " u_epis=" + fmt_g17(p.epistemic);
    return r;
}

// Exact values for the heavily conflicting Dirichlet [100,100,100]:
// vacuity 0.01 and dissonance 0.99, with the entropy-family ordering
// u_en > u_alea > u_diss > u_v > u_epis.
inline CheckResult cp_exactness() {
    CheckResult r{"cp-exactness"};
    DirichletParams d{{100.0, 100.0, 100.0}};
    UncertaintyProfile p = uncertainty_profile(d);
    bool ok = std::fabs(p.vacuity - 0.01) <= 1e-12 && std::fabs(p.dissonance - 0.99) <= 1e-12;
    ok = ok && p.aleatoric >= 0.99 && p.epistemic <= 0.01;
    ok = ok && p.entropy > p.aleatoric && p.aleatoric > p.dissonance && p.dissonance > p.vacuity &&
         p.vacuity > p.epistemic;
    r.pass = ok;
    r.detail = "u_v=" + fmt_g17(p.vacuity) + " u_diss=" + fmt_g17(p.dissonance) +
               " u_alea=" + fmt_g17(p.aleatoric) + " u_epis=" + fmt_g17(p.epistemic);
    return r;
}

// Closed-form Dirichlet KL against a Monte-Carlo oracle on random pairs,
// plus the hand-computed pin KL(Dir[2,2] || Dir[1,1]) = ln 6 - 5/3.
inline CheckResult dirichlet_kl_closed_form() {
    CheckResult r{"dirichlet-kl-closed-form"};
    double pin = dirichlet_kl({2.0, 2.0}, {1.0, 1.0}).value;
    double pin_exact = std::log(6.0) - 5.0 / 3.0;
    bool ok = std::fabs(pin - pin_exact) <= 1e-9;
    Rng rng(11);
    double worst_z = 0.0;
    const int n = 1000000;
    for (int pair = 0; pair < 20; ++pair) {
        int K = 2 + pair % 3;
        Vec a(K), b(K);
        for (double& v : a) v = 0.5 + 4.5 * rng.uniform();
        for (double& v : b) v = 0.5 + 4.5 * rng.uniform();
        double closed = dirichlet_kl(a, b).value;
        double cst = log_gamma(sum(a)) - log_gamma(sum(b));
        for (int k = 0; k < K; ++k) cst += log_gamma(b[k]) - log_gamma(a[k]);
        double s1 = 0.0, s2 = 0.0;
        for (int i = 0; i < n; ++i) {
            Vec x = rng.dirichlet(a);
            double t = 0.0;
            for (int k = 0; k < K; ++k) t += (a[k] - b[k]) * std::log(std::max(x[k], 1e-300));
            s1 += t;
            s2 += t * t;
        }
        double mean = s1 / n;
        double se = std::sqrt(std::max(0.0, s2 / n - mean * mean) / n);
        double z = std::fabs(closed - (cst + mean)) / std::max(se, 1e-300);
        worst_z = std::max(worst_z, z);
        if (z > 3.0) ok = false;
    }
    r.pass = ok;
    r.detail = "pin_err=" + fmt_g17(std::fabs(pin - pin_exact)) + " worst_z=" + fmt_g17(worst_z);
    return r;
}

namespace detail {

// central finite differences of a scalar function over a parameter vector
inline Vec fd_gradient(const std::function<double(const Vec&)>& f, Vec theta, double h = 1e-5) {
    Vec g(theta.size());
    for (size_t i = 0; i < theta.size(); ++i) {
        double keep = theta[i];
        theta[i] = keep + h;
        double hi = f(theta);
        theta[i] = keep - h;
        double lo = f(theta);
        theta[i] = keep;
        g[i] = (hi - lo) / (2.0 * h);
    }
    return g;
}

inline double max_rel_err(const Vec& analytic, const Vec& numeric) {
    double worst = 0.0;
    for (size_t i = 0; i < analytic.size(); ++i)
        worst = std::max(worst, rel_err(analytic[i], numeric[i]));
    return worst;
}

}  // namespace detail

// Analytic gradients of every loss against central finite differences,
// both directly and through the reference networks.
inline CheckResult gradient_checks() {
    CheckResult r{"gradient-checks"};
    Rng rng(19);
    double worst = 0.0;

    for (int rep = 0; rep < 10; ++rep) {
        const int K = 4;
        Vec y(K, 0.0);
        y[rng.uniform_int(K)] = 1.0;
        Vec alpha(K);
        for (double& v : alpha) v = 0.5 + 7.5 * rng.uniform();
        Vec g_sq = enn_squared_loss(y, alpha).grad;
        Vec n_sq = detail::fd_gradient([&](const Vec& a) { return enn_squared_loss(y, a).value; },
                                       alpha);
        worst = std::max(worst, detail::max_rel_err(g_sq, n_sq));
        Vec g_ce = enn_cross_entropy_loss(y, alpha).grad;
        Vec n_ce = detail::fd_gradient(
            [&](const Vec& a) { return enn_cross_entropy_loss(y, a).value; }, alpha);
        worst = std::max(worst, detail::max_rel_err(g_ce, n_ce));
    }

    for (int rep = 0; rep < 10; ++rep) {
        const int K = 3;
        Vec a(K), b(K);
        for (double& v : a) v = 0.8 + 5.2 * rng.uniform();
        for (double& v : b) v = 0.8 + 5.2 * rng.uniform();
        Vec g = dirichlet_kl(a, b).grad;
        Vec n = detail::fd_gradient([&](const Vec& aa) { return dirichlet_kl(aa, b).value; }, a);
        worst = std::max(worst, detail::max_rel_err(g, n));
    }

    for (int rep = 0; rep < 10; ++rep) {
        const int T = 3, K = 2;
        Mat y(T, K), al(T, K), be(T, K);
        for (int t = 0; t < T; ++t)
            for (int k = 0; k < K; ++k) {
                y(t, k) = rng.uniform() < 0.5 ? 0.0 : 1.0;
                al(t, k) = 0.6 + 6.4 * rng.uniform();
                be(t, k) = 0.6 + 6.4 * rng.uniform();
            }
        MtennGrad mg = mtenn_loss(y, al, be);
        Vec packed;
        for (double v : al.a) packed.push_back(v);
        for (double v : be.a) packed.push_back(v);
        auto eval = [&](const Vec& p) {
            Mat a2 = al, b2 = be;
            std::copy(p.begin(), p.begin() + a2.a.size(), a2.a.begin());
            std::copy(p.begin() + a2.a.size(), p.end(), b2.a.begin());
            return mtenn_loss(y, a2, b2).value;
        };
        Vec numeric = detail::fd_gradient(eval, packed);
        Vec analytic;
        for (double v : mg.d_alpha.a) analytic.push_back(v);
        for (double v : mg.d_beta.a) analytic.push_back(v);
        worst = std::max(worst, detail::max_rel_err(analytic, numeric));
    }

    // joint objective through the graph network (smooth activations so the
    // finite differences are clean)
    {
        SbmConfig sc;
        sc.num_classes = 3;
        sc.nodes_per_class = 7;
        sc.p_in = 0.4;
        sc.p_out = 0.1;
        sc.feature_dim = 5;
        sc.train_per_class = 3;
        sc.ood_classes = 0;
        sc.seed = 3;
        SbmData data = gen_sbm_graph(sc);
        const Graph& g = data.g;
        const int N = g.num_nodes(), K = g.num_classes;
        Mat a_hat = normalized_adjacency(g);
        NetOptions opts;
        opts.head = HeadKind::Evidence;
        opts.hidden_act = Activation::Tanh;
        opts.evidence_act = Activation::Softplus;
        Rng nrng(5);
        Net net = make_feedforward(Arch::Gcn, g.feature_dim(), {6}, K, opts, nrng);
        Mat gkde_alpha = gkde_prior(g, data.train_ids, 1.0);
        Mat teacher(N, K);
        for (int i = 0; i < N; ++i) {
            Vec logits(K);
            for (double& v : logits) v = nrng.normal();
            softmax_row(logits);
            teacher.set_row(i, logits);
        }
        Mat y_onehot = one_hot_rows(data.train_ids, g.labels, K);
        const double l1 = 0.1, l2 = 0.7;
        auto eval_loss = [&](const Vec& theta) {
            Net tmp = net;
            unpack_parameters(tmp, theta);
            Cache c = forward(tmp, g.features, a_hat, ForwardOptions::eval());
            Mat alpha = alpha_from_cache(c);
            Mat probs(N, K);
            for (int i = 0; i < N; ++i) {
                double S = 0.0;
                for (int k = 0; k < K; ++k) S += alpha(i, k);
                for (int k = 0; k < K; ++k) probs(i, k) = alpha(i, k) / S;
            }
            return joint_loss(data.train_ids, y_onehot, alpha, gkde_alpha, probs, teacher, l1, l2)
                .value;
        };
        Vec theta = pack_parameters(net);
        Cache c = forward(net, g.features, a_hat, ForwardOptions::eval());
        Mat alpha = alpha_from_cache(c);
        Mat probs(N, K);
        Vec strength(N);
        for (int i = 0; i < N; ++i) {
            double S = 0.0;
            for (int k = 0; k < K; ++k) S += alpha(i, k);
            strength[i] = S;
            for (int k = 0; k < K; ++k) probs(i, k) = alpha(i, k) / S;
        }
        JointLossGrad jl =
            joint_loss(data.train_ids, y_onehot, alpha, gkde_alpha, probs, teacher, l1, l2);
        Mat d_alpha = jl.d_alpha;
        for (int i = 0; i < N; ++i) {
            double inner = 0.0;
            for (int k = 0; k < K; ++k) inner += jl.d_model_probs(i, k) * probs(i, k);
            for (int j = 0; j < K; ++j)
                d_alpha(i, j) += (jl.d_model_probs(i, j) - inner) / strength[i];
        }
        Vec analytic = pack_gradients(net, backward(net, c, a_hat, d_alpha));
        Vec numeric = detail::fd_gradient(eval_loss, theta);
        worst = std::max(worst, detail::max_rel_err(analytic, numeric));
    }

    // temporal evidence loss through the recurrent net
    {
        Rng nrng(23);
        NetOptions opts;
        opts.head = HeadKind::Evidence;
        opts.evidence_act = Activation::Softplus;
        Net net = make_elman(3, 5, 2, opts, nrng);
        const int T = 6, K = 1;
        Mat x(T, 3), y(T, K);
        for (double& v : x.a) v = nrng.normal();
        for (int t = 0; t < T; ++t) y(t, 0) = nrng.uniform() < 0.5 ? 0.0 : 1.0;
        auto split_loss = [&](const Cache& c, MtennGrad* mg) {
            Mat al(T, K), be(T, K);
            for (int t = 0; t < T; ++t)
                for (int k = 0; k < K; ++k) {
                    al(t, k) = c.out(t, k) + 1.0;
                    be(t, k) = c.out(t, K + k) + 1.0;
                }
            MtennGrad m = mtenn_loss(y, al, be);
            if (mg) *mg = m;
            return m.value;
        };
        auto eval_loss = [&](const Vec& theta) {
            Net tmp = net;
            unpack_parameters(tmp, theta);
            Cache c = forward_stream(tmp, x);
            return split_loss(c, nullptr);
        };
        Cache c = forward_stream(net, x);
        MtennGrad mg;
        split_loss(c, &mg);
        Mat d_out(T, 2 * K);
        for (int t = 0; t < T; ++t)
            for (int k = 0; k < K; ++k) {
                d_out(t, k) = mg.d_alpha(t, k);
                d_out(t, K + k) = mg.d_beta(t, k);
            }
        Vec analytic = pack_gradients(net, backward_stream(net, c, d_out));
        Vec numeric = detail::fd_gradient(eval_loss, pack_parameters(net));
        worst = std::max(worst, detail::max_rel_err(analytic, numeric));
    }

    r.pass = worst < 1e-4;
    r.detail = "max_rel_err=" + fmt_g17(worst);
    return r;
}

// With one unrolled step at unit step size, the reverse-sweep hypergradient
// and the zero-term Neumann implicit hypergradient are the same formula;
// both routes must agree elementwise on random head problems.
inline CheckResult hypergradient_route_equivalence() {
    CheckResult r{"hypergradient-route-equivalence"};
    Rng rng(31);
    double worst = 0.0;
    for (int rep = 0; rep < 20; ++rep) {
        HeadProblem prob;
        prob.h = 2 + rep % 3;
        prob.K = 2 + rep % 2;
        prob.sup = rep % 4 < 2 ? SupLoss::SoftmaxCe : SupLoss::EnnSquared;
        prob.evidence_act = Activation::Softplus;
        prob.unl_mode = rep % 2 ? UnlabeledMode::PiConsistency : UnlabeledMode::PseudoLabel;
        const int n_lab = 4, n_val = 4, n_unl = 6;
        prob.n_weights = 3;
        auto fill = [&](Mat& m, int rows) {
            m = Mat(rows, prob.h);
            for (double& v : m.a) v = rng.normal();
        };
        fill(prob.f_lab, n_lab);
        fill(prob.f_val, n_val);
        fill(prob.f_unl, n_unl);
        if (prob.unl_mode == UnlabeledMode::PiConsistency) fill(prob.f_unl2, n_unl);
        for (int i = 0; i < n_lab; ++i) prob.y_lab.push_back(rng.uniform_int(prob.K));
        for (int i = 0; i < n_val; ++i) prob.y_val.push_back(rng.uniform_int(prob.K));
        for (int j = 0; j < n_unl; ++j) {
            prob.weight_idx.push_back(j % prob.n_weights);
            prob.pl_target.push_back(j % 4 == 3 ? -1 : rng.uniform_int(prob.K));
        }
        prob.sup_scale = 1.0 / n_lab;
        prob.val_scale = 1.0 / n_val;
        prob.unl_scale = 1.0 / n_unl;
        Vec theta0(prob.dim());
        for (double& v : theta0) v = 0.5 * rng.normal();
        Vec w(prob.n_weights);
        for (double& v : w) v = rng.uniform();
        BilevelConfig cfg;
        cfg.inner_steps = 1;
        cfg.inner_lr = 1.0;
        cfg.neumann_terms = 0;
        Vec gm = weight_grad_meta(prob, theta0, w, cfg).grad;
        Vec gi = weight_grad_ift(prob, theta0, w, cfg).grad;
        for (size_t i = 0; i < gm.size(); ++i) worst = std::max(worst, std::fabs(gm[i] - gi[i]));
    }
    r.pass = worst < 1e-8;
    r.detail = "max_abs_diff=" + fmt_g17(worst);
    return r;
}

// Zero-one weighting in the weighted batch-normalizing transform must
// reproduce plain batch normalization computed on the kept rows alone, even
// when the dropped rows sit thousands of units away.
inline CheckResult weighted_bn_identity() {
    CheckResult r{"weighted-bn-identity"};
    Rng rng(57);
    double worst = 0.0;
    for (int rep = 0; rep < 100; ++rep) {
        int n_id = 2 + rng.uniform_int(19);
        int n_ood = 1 + rng.uniform_int(19);
        int dim = 1 + rng.uniform_int(8);
        double mu = -5.0 + 10.0 * rng.uniform();
        double sigma = 0.1 + 2.9 * rng.uniform();
        double offset = std::pow(10.0, 3.0 * rng.uniform());  // up to 1e3
        Mat id(n_id, dim), full(n_id + n_ood, dim);
        Vec w(n_id + n_ood, 0.0);
        // keep ID rows in their relative order inside the mixed batch
        std::vector<int> slots = rng.permutation(n_id + n_ood);
        std::vector<int> id_slots(slots.begin(), slots.begin() + n_id);
        std::sort(id_slots.begin(), id_slots.end());
        std::vector<char> is_id(n_id + n_ood, 0);
        for (int s : id_slots) is_id[s] = 1;
        int next_id = 0;
        for (int i = 0; i < n_id + n_ood; ++i) {
            if (is_id[i]) {
                for (int j = 0; j < dim; ++j) {
                    double v = mu + sigma * rng.normal();
                    full(i, j) = v;
                    id(next_id, j) = v;
                }
                w[i] = 1.0;
                ++next_id;
            } else {
                for (int j = 0; j < dim; ++j)
                    full(i, j) = mu + sigma * rng.normal() + (rng.uniform() < 0.5 ? -offset : offset);
            }
        }
        BnLayer layer(dim);
        for (int j = 0; j < dim; ++j) {
            layer.gamma[j] = 0.5 + 1.5 * rng.uniform();
            layer.beta[j] = -1.0 + 2.0 * rng.uniform();
        }
        BnCache c_full, c_id;
        Mat y_full = weighted_batch_norm(full, w, layer, &c_full);
        Mat y_id = weighted_batch_norm(id, Vec(n_id, 1.0), layer, &c_id);
        for (int i = 0; i < n_id; ++i)
            for (int j = 0; j < dim; ++j)
                worst = std::max(worst, std::fabs(y_full(id_slots[i], j) - y_id(i, j)));
    }
    r.pass = worst <= 1e-12;
    r.detail = "max_abs_diff=" + fmt_g17(worst);
    return r;
}

// Two-moons semi-supervised comparison: plain pseudo-labeling collapses
// under 50% OOD contamination while the reweighted run recovers, for both
// faraway and boundary contamination; the outer gradient norm must also
// show the expected decreasing trend.
inline CheckResult two_moons_reweighting() {
    CheckResult r{"two-moons-reweighting"};
    TwoMoonsCompareParams pf = two_moons_defaults(OodKind::Faraway);
    pf.n_seeds = 10;
    pf.base_seed = 1;
    TwoMoonsOutcome far = run_two_moons_comparison(pf);

    TwoMoonsCompareParams pb = two_moons_defaults(OodKind::Boundary);
    pb.n_seeds = 10;
    pb.base_seed = 1;
    pb.run_baseline = false;
    TwoMoonsOutcome bnd = run_two_moons_comparison(pb);

    int trend_ok = 0, trend_n = 0;
    for (const TwoMoonsRun& run : far.runs) {
        if (!run.robust) continue;
        const Vec& h = run.result.grad_norm_history;
        if (h.empty()) continue;
        ++trend_n;
        double lo = h[0];
        size_t upto = std::min<size_t>(h.size(), 500);
        for (size_t i = 0; i < upto; ++i) lo = std::min(lo, h[i]);
        if (lo <= h[0] / 10.0) ++trend_ok;
    }
    bool grad_trend = trend_n > 0 && trend_ok == trend_n;
    r.pass = far.mean_baseline <= 0.70 && far.mean_robust >= 0.95 && bnd.mean_robust >= 0.95 &&
             grad_trend;
    r.detail = "baseline=" + fmt_g17(far.mean_baseline) + " robust=" + fmt_g17(far.mean_robust) +
               " boundary_robust=" + fmt_g17(bnd.mean_robust) + " grad_trend=" +
               std::to_string(trend_ok) + "/" + std::to_string(trend_n);
    return r;
}

// Kernel-prior vacuity monotonicity: a node whose shortest-path distance
// vector to the labeled set dominates another's can never have lower prior
// vacuity. Checked exhaustively over all dominated pairs of random graphs.
inline CheckResult kernel_prior_monotonicity() {
    CheckResult r{"kernel-prior-monotonicity"};
    int violations = 0;
    long long pairs = 0;
    for (int rep = 0; rep < 100; ++rep) {
        SbmConfig sc;
        sc.num_classes = 3;
        sc.nodes_per_class = 12 + rep % 8;
        sc.p_in = 0.3;
        sc.p_out = 0.05;
        sc.feature_dim = 3;
        sc.train_per_class = 3 + rep % 3;
        sc.ood_classes = 0;
        sc.seed = 900 + rep;
        SbmData data = gen_sbm_graph(sc);
        auto dist = bfs_distances(data.g, data.train_ids);
        Mat alpha_hat = gkde_prior(data.g, data.train_ids, 1.0);
        const int N = data.g.num_nodes();
        const int L = static_cast<int>(data.train_ids.size());
        Vec vac(N);
        for (int i = 0; i < N; ++i) vac[i] = vacuity(DirichletParams{alpha_hat.row(i)});
        auto dd = [&](int l, int i) {
            int v = dist[l][i];
            return v < 0 ? 1 << 29 : v;  // unreachable nodes sit at infinite distance
        };
        for (int i = 0; i < N; ++i)
            for (int j = 0; j < N; ++j) {
                if (i == j) continue;
                bool dominates = true;
                for (int l = 0; l < L && dominates; ++l)
                    if (dd(l, i) < dd(l, j)) dominates = false;
                if (!dominates) continue;
                ++pairs;
                if (vac[i] < vac[j] - 1e-12) ++violations;
            }
    }
    r.pass = violations == 0 && pairs > 0;
    r.detail = "violations=" + std::to_string(violations) + " dominated_pairs=" +
               std::to_string(pairs);
    return r;
}

// As the Beta evidence grows at a fixed mean, the temporal evidential loss
// converges monotonically to the maximum-likelihood cross entropy.
inline CheckResult beta_loss_ml_limit() {
    CheckResult r{"beta-loss-ml-limit"};
    Rng rng(71);
    const double cs[5] = {1.0, 10.0, 100.0, 1000.0, 2000.0};
    bool ok = true;
    double worst_final = 0.0;
    for (int rep = 0; rep < 100; ++rep) {
        double p = 0.25 + 0.5 * rng.uniform();
        double y = rng.uniform() < 0.5 ? 0.0 : 1.0;
        double ml = bce_loss(y, p);
        double prev = HUGE_VAL;
        for (double c : cs) {
            Mat ym(1, 1), al(1, 1), be(1, 1);
            ym(0, 0) = y;
            al(0, 0) = c * p;
            be(0, 0) = c * (1.0 - p);
            double gap = std::fabs(mtenn_loss(ym, al, be).value - ml);
            if (gap > prev + 1e-12) ok = false;
            prev = gap;
        }
        worst_final = std::max(worst_final, prev);
        if (prev >= 1e-3) ok = false;
    }
    r.pass = ok;
    r.detail = "worst_gap_at_c2000=" + fmt_g17(worst_final);
    return r;
}

// At a single class and a single timestep, the temporal evidential loss and
// the binary evidential cross entropy are the same number, computed through
// two independent code paths.
inline CheckResult beta_loss_binary_reduction() {
    CheckResult r{"beta-loss-binary-reduction"};
    Rng rng(83);
    double worst = 0.0;
    for (int rep = 0; rep < 1000; ++rep) {
        double a = 0.51 + 9.49 * rng.uniform();
        double b = 0.51 + 9.49 * rng.uniform();
        double y = rng.uniform() < 0.5 ? 0.0 : 1.0;
        Mat ym(1, 1), al(1, 1), be(1, 1);
        ym(0, 0) = y;
        al(0, 0) = a;
        be(0, 0) = b;
        double mt = mtenn_loss(ym, al, be).value;
        double enn = enn_cross_entropy_loss({y, 1.0 - y}, {a, b}).value;
        worst = std::max(worst, std::fabs(mt - enn));
    }
    r.pass = worst <= 1e-12;
    r.detail = "max_abs_diff=" + fmt_g17(worst);
    return r;
}

// The binomial union operator must return a valid opinion and be
// commutative on random inputs.
inline CheckResult comultiplication_properties() {
    CheckResult r{"comultiplication-properties"};
    Rng rng(97);
    double worst_sum = 0.0, worst_swap = 0.0, worst_neg = 0.0;
    for (int rep = 0; rep < 10000; ++rep) {
        Vec t1 = rng.dirichlet({1.0, 1.0, 1.0});
        Vec t2 = rng.dirichlet({1.0, 1.0, 1.0});
        BinomialOpinion o1{t1[0], t1[1], t1[2], 0.05 + 0.9 * rng.uniform()};
        BinomialOpinion o2{t2[0], t2[1], t2[2], 0.05 + 0.9 * rng.uniform()};
        BinomialOpinion c12 = comultiply(o1, o2);
        BinomialOpinion c21 = comultiply(o2, o1);
        worst_sum = std::max(worst_sum, std::fabs(c12.b + c12.d + c12.u - 1.0));
        worst_neg = std::max({worst_neg, -c12.b, -c12.d, -c12.u});
        worst_swap = std::max({worst_swap, std::fabs(c12.b - c21.b), std::fabs(c12.d - c21.d),
                               std::fabs(c12.u - c21.u), std::fabs(c12.a - c21.a)});
    }
    r.pass = worst_sum <= 1e-9 && worst_swap <= 1e-12 && worst_neg <= 1e-12;
    r.detail = "max_sum_err=" + fmt_g17(worst_sum) + " max_swap_diff=" + fmt_g17(worst_swap);
    return r;
}

// Synthetic graph trend: vacuity should lead dissonance for OOD detection
// and dissonance should lead vacuity for misclassification detection, as
// mean AUROC over ten seeds.
inline CheckResult graph_uncertainty_trends() {
    CheckResult r{"graph-uncertainty-trends"};
    GraphUncertaintyParams po = graph_uncertainty_defaults(false);
    po.base_seed = 1;
    GraphUncertaintyOutcome ood = run_graph_uncertainty(po);
    GraphUncertaintyParams pm = graph_uncertainty_defaults(true);
    pm.base_seed = 1;
    GraphUncertaintyOutcome mis = run_graph_uncertainty(pm);
    bool valid = ood.mean_auroc[0] >= 0.0 && ood.mean_auroc[1] >= 0.0 && mis.mean_auroc[0] >= 0.0 &&
                 mis.mean_auroc[1] >= 0.0;
    r.pass = valid && ood.mean_auroc[0] >= ood.mean_auroc[1] && mis.mean_auroc[1] >= mis.mean_auroc[0];
    r.detail = "ood_vac=" + fmt_g17(ood.mean_auroc[0]) + " ood_diss=" + fmt_g17(ood.mean_auroc[1]) +
               " mis_vac=" + fmt_g17(mis.mean_auroc[0]) + " mis_diss=" + fmt_g17(mis.mean_auroc[1]);
    return r;
}

namespace detail {

inline const EarlyDetectOutcome& shared_early_outcome() {
    static EarlyDetectOutcome out = [] {
        EarlyDetectParams p = early_detect_defaults();
        p.base_seed = 1;
        return run_early_detect(p);
    }();
    return out;
}

}  // namespace detail

// Monte-Carlo calibrated scan threshold: the single-shot false-alarm rate on
// fresh event-free streams must sit within two points of the nominal five
// percent.
inline CheckResult umss_calibration() {
    CheckResult r{"umss-calibration"};
    const EarlyDetectOutcome& out = detail::shared_early_outcome();
    r.pass = std::fabs(out.false_alarm_rate - 0.05) <= 0.02;
    r.detail = "false_alarm_rate=" + fmt_g17(out.false_alarm_rate) + " threshold=" +
               fmt_g17(out.cal_threshold);
    return r;
}

// Running-detector benchmark: fused-opinion detection must beat the
// instantaneous probability baseline on F1, and the vacuity scan must fire
// no later on average than the fused rule.
inline CheckResult early_detection_benchmark() {
    CheckResult r{"early-detection-benchmark"};
    const EarlyDetectOutcome& out = detail::shared_early_outcome();
    bool sane = out.wbc.tp > 0 && out.umss.tp > 0;
    r.pass = sane && out.wbc.f1 >= out.prob.f1 && out.umss.mean_delay <= out.wbc.mean_delay;
    r.detail = "wbc_f1=" + fmt_g17(out.wbc.f1) + " prob_f1=" + fmt_g17(out.prob.f1) +
               " umss_delay=" + fmt_g17(out.umss.mean_delay) + " wbc_delay=" +
               fmt_g17(out.wbc.mean_delay);
    return r;
}

}  // namespace checks

inline const std::vector<std::string>& verify_check_names() {
    static const std::vector<std::string> names = {
        "uncertainty-bounds",
        "ood-exactness",
        "cp-exactness",
        "dirichlet-kl-closed-form",
        "gradient-checks",
        "hypergradient-route-equivalence",
        "weighted-bn-identity",
        "two-moons-reweighting",
        "kernel-prior-monotonicity",
        "beta-loss-ml-limit",
        "beta-loss-binary-reduction",
        "comultiplication-properties",
        "graph-uncertainty-trends",
        "umss-calibration",
        "early-detection-benchmark",
        "determinism",
    };
    return names;
}

inline std::vector<std::string> verify_quick_names() {
    return {"uncertainty-bounds",       "ood-exactness",
            "cp-exactness",             "dirichlet-kl-closed-form",
            "gradient-checks",          "hypergradient-route-equivalence",
            "weighted-bn-identity",     "kernel-prior-monotonicity",
            "beta-loss-ml-limit",       "beta-loss-binary-reduction",
            "comultiplication-properties"};
}

inline int run_verify_task(KvConfig cfg, const std::string& out_dir, std::ostream& log);

namespace checks {

// Byte-identical outputs for every experiment task and for the verify task
// itself when run twice with the same seed.
inline CheckResult determinism(const std::string& scratch) {
    namespace fs = std::filesystem;
    CheckResult r{"determinism"};
    fs::remove_all(scratch);
    fs::create_directories(scratch);
    std::vector<std::string> mismatched;

    auto same_outputs = [&](const std::string& a, const std::string& b) {
        for (const char* f : {"/metrics.csv", "/summary.json", "/config.echo"})
            if (read_text_file(a + f) != read_text_file(b + f)) return false;
        return true;
    };

    struct Spec {
        std::string task;
        std::vector<std::pair<std::string, std::string>> keys;
    };
    const std::vector<Spec> specs = {
        {"uq-profile", {{"alpha", "2,3,4"}, {"mc", "5000"}}},
        {"graph-ood",
         {{"n_seeds", "2"},
          {"train_iters", "40"},
          {"train_mc_samples", "20"},
          {"sbm_nodes_per_class", "15"},
          {"sbm_train_per_class", "8"}}},
        {"robust-ssl",
         {{"n_seeds", "1"},
          {"iters", "80"},
          {"n_unlabeled", "80"},
          {"n_val", "40"},
          {"n_test", "60"},
          {"log_every", "20"}}},
        {"early-detect",
         {{"n_train_streams", "6"},
          {"mtenn_iters", "30"},
          {"n_null_cal", "60"},
          {"n_null_test", "40"},
          {"n_bench", "8"},
          {"stream_len", "40"},
          {"null_len", "30"}}},
    };
    for (const Spec& s : specs) {
        KvConfig cfg;
        for (const auto& [k, v] : s.keys) cfg.set(k, v);
        std::string a = scratch + "/" + s.task + "-a";
        std::string b = scratch + "/" + s.task + "-b";
        run_experiment(s.task, cfg, a);
        run_experiment(s.task, cfg, b);
        if (!same_outputs(a, b)) mismatched.push_back(s.task);
    }

    // the verify task itself, on a restricted subset so the check does not
    // recurse into itself
    {
        KvConfig vc;
        vc.set("checks", "ood-exactness,comultiplication-properties");
        std::ostringstream sink;
        run_verify_task(vc, scratch + "/verify-a", sink);
        run_verify_task(vc, scratch + "/verify-b", sink);
        if (!same_outputs(scratch + "/verify-a", scratch + "/verify-b"))
            mismatched.push_back("verify");
    }

    r.pass = mismatched.empty();
    std::string bad;
    for (const std::string& m : mismatched) bad += (bad.empty() ? "" : ",") + m;
    r.detail = r.pass ? "all tasks byte-identical across repeated runs" : "mismatch in: " + bad;
    return r;
}

}  // namespace checks

inline CheckResult run_check(const std::string& name, const std::string& scratch) {
    if (name == "uncertainty-bounds") return checks::uncertainty_bounds();
    if (name == "ood-exactness") return checks::ood_exactness();
    if (name == "cp-exactness") return checks::cp_exactness();
    if (name == "dirichlet-kl-closed-form") return checks::dirichlet_kl_closed_form();
    if (name == "gradient-checks") return checks::gradient_checks();
    if (name == "hypergradient-route-equivalence") return checks::hypergradient_route_equivalence();
    if (name == "weighted-bn-identity") return checks::weighted_bn_identity();
    if (name == "two-moons-reweighting") return checks::two_moons_reweighting();
    if (name == "kernel-prior-monotonicity") return checks::kernel_prior_monotonicity();
    if (name == "beta-loss-ml-limit") return checks::beta_loss_ml_limit();
    if (name == "beta-loss-binary-reduction") return checks::beta_loss_binary_reduction();
    if (name == "comultiplication-properties") return checks::comultiplication_properties();
    if (name == "graph-uncertainty-trends") return checks::graph_uncertainty_trends();
    if (name == "umss-calibration") return checks::umss_calibration();
    if (name == "early-detection-benchmark") return checks::early_detection_benchmark();
    if (name == "determinism") return checks::determinism(scratch);
    throw std::runtime_error("unknown check: " + name);
}

inline int run_verify_task(KvConfig cfg, const std::string& out_dir, std::ostream& log) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    cfg.set("task", "verify");
    std::string which = cfg.get_str("checks", "full");
    cfg.set("checks", which);

    std::vector<std::string> selected;
    if (which == "full" || which == "all") {
        selected = verify_check_names();
    } else if (which == "quick") {
        selected = verify_quick_names();
    } else {
        std::istringstream in(which);
        std::string tok;
        while (std::getline(in, tok, ',')) {
            tok = trim(tok);
            if (tok.empty()) continue;
            bool known = false;
            for (const std::string& n : verify_check_names()) known = known || n == tok;
            if (!known) throw std::runtime_error("unknown check: " + tok);
            selected.push_back(tok);
        }
        if (selected.empty()) throw std::runtime_error("verify: empty check selection");
    }

    CsvBuilder csv;
    csv.field(std::string("check"));
    csv.field(std::string("pass"));
    csv.endrow();
    nlohmann::json jchecks;
    bool all_pass = true;
    for (const std::string& name : selected) {
        CheckResult r = run_check(name, out_dir + "/determinism-scratch");
        log << (r.pass ? "[PASS] " : "[FAIL] ") << r.name << ": " << r.detail << "\n";
        csv.field(r.name);
        csv.field(r.pass ? 1 : 0);
        csv.endrow();
        jchecks[r.name] = {{"pass", r.pass}, {"detail", r.detail}};
        all_pass = all_pass && r.pass;
    }
    nlohmann::json summary;
    summary["task"] = "verify";
    summary["checks"] = jchecks;
    summary["all_pass"] = all_pass;
    write_text_file(out_dir + "/metrics.csv", csv.str());
    write_text_file(out_dir + "/summary.json", summary.dump(2) + "\n");
    write_text_file(out_dir + "/config.echo", cfg.echo());
    return all_pass ? 0 : 1;
}

}  // namespace uqkit
