#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>

#include "uqkit/checkpoint.hpp"
#include "uqkit/datagen.hpp"
#include "uqkit/earlydet.hpp"
#include "uqkit/losses.hpp"
#include "uqkit/net.hpp"
#include "uqkit/trainers.hpp"
#include "uqkit/uncertainty.hpp"

using namespace uqkit;

namespace {

// central finite difference of a scalar function over packed parameters
template <class F>
Vec fd_packed(Net& net, F loss_of_net, double h = 1e-5) {
    Vec theta = pack_parameters(net);
    Vec g(theta.size());
    for (size_t i = 0; i < theta.size(); ++i) {
        Vec tp = theta, tm = theta;
        tp[i] += h;
        tm[i] -= h;
        unpack_parameters(net, tp);
        double up = loss_of_net(net);
        unpack_parameters(net, tm);
        double dn = loss_of_net(net);
        g[i] = (up - dn) / (2.0 * h);
    }
    unpack_parameters(net, theta);
    return g;
}

double max_rel_err(const Vec& got, const Vec& want) {
    double worst = 0.0;
    for (size_t i = 0; i < got.size(); ++i)
        worst = std::max(worst,
                         std::fabs(got[i] - want[i]) / std::max(1e-2, std::fabs(want[i])));
    return worst;
}

}  // namespace

TEST_CASE("zero net emits zero evidence and full vacuity", "[net]") {
    Rng rng(1);
    NetOptions opts;
    opts.head = HeadKind::Evidence;
    Net net = make_feedforward(Arch::Mlp, 4, {5}, 3, opts, rng);
    for_each_param(net, [](double& v) { v = 0.0; });

    Mat x(2, 4);
    x(0, 0) = 1.0;
    x(1, 2) = -2.0;
    Cache c = forward(net, x, Mat(), ForwardOptions::eval());
    for (double v : c.out.a) REQUIRE(v == 0.0);
    Mat alpha = alpha_from_cache(c);
    for (double v : alpha.a) REQUIRE(v == 1.0);
    REQUIRE(vacuity(DirichletParams{alpha.row(0)}) == 1.0);
}

TEST_CASE("gcn forward equals the hand-composed propagation", "[net]") {
    // 2 nodes joined by an edge, identity features, single gcn layer
    Graph g;
    g.num_classes = 2;
    g.features = Mat(2, 2);
    g.features(0, 0) = 1.0;
    g.features(1, 1) = 1.0;
    g.labels = {0, 1};
    g.edges = {{0, 1}};
    Mat a_hat = normalized_adjacency(g);

    Rng rng(3);
    NetOptions opts;
    opts.head = HeadKind::Evidence;
    Net net = make_feedforward(Arch::Gcn, 2, {}, 2, opts, rng);
    // positive weights keep the relu in its identity region
    net.layers[0].w(0, 0) = 0.3;
    net.layers[0].w(0, 1) = 0.7;
    net.layers[0].w(1, 0) = 1.1;
    net.layers[0].w(1, 1) = 0.2;
    net.layers[0].b = {0.05, 0.1};

    Cache c = forward(net, g.features, a_hat, ForwardOptions::eval());

    // hand-composed A_hat * (X * W) + b
    for (int i = 0; i < 2; ++i)
        for (int k = 0; k < 2; ++k) {
            double z = net.layers[0].b[k];
            for (int j = 0; j < 2; ++j) {
                double xw = 0.0;
                for (int f = 0; f < 2; ++f) xw += g.features(j, f) * net.layers[0].w(f, k);
                z += a_hat(i, j) * xw;
            }
            REQUIRE(c.out(i, k) == Catch::Approx(z).margin(1e-12));
        }
}

TEST_CASE("recurrent forward emits per-timestep evidence pairs", "[net]") {
    Rng rng(5);
    NetOptions opts;
    opts.head = HeadKind::Evidence;
    Net net = make_elman(4, 6, 4, opts, rng);  // 2 classes -> 4 outputs
    Mat x(3, 4);
    for (double& v : x.a) v = rng.normal(0.0, 1.0);
    Cache c = forward_stream(net, x);
    REQUIRE(c.out.rows == 3);
    REQUIRE(c.out.cols == 4);
    for (double v : c.out.a) REQUIRE(v >= 0.0);
    std::vector<BetaParams> bp;
    beta_from_evidence_row(c.out.row(0), 2, bp);
    REQUIRE(bp.size() == 2);
    REQUIRE(bp[0].alpha >= 1.0);
    REQUIRE(bp[0].beta >= 1.0);
}

TEST_CASE("evidence stays nonnegative over random nets", "[net]") {
    Rng rng(7);
    for (int rep = 0; rep < 20; ++rep) {
        NetOptions opts;
        opts.head = HeadKind::Evidence;
        opts.evidence_act = rep % 2 == 0 ? Activation::Relu : Activation::Softplus;
        Net net = make_feedforward(Arch::Mlp, 3, {4}, 3, opts, rng);
        Mat x(5, 3);
        for (double& v : x.a) v = rng.normal(0.0, 2.0);
        Cache c = forward(net, x, Mat(), ForwardOptions::eval());
        for (double v : c.out.a) REQUIRE(v >= 0.0);
    }
}

TEST_CASE("linear-region backward equals the normal-equation gradient", "[net]") {
    Rng rng(11);
    NetOptions opts;
    opts.head = HeadKind::Evidence;
    Net net = make_feedforward(Arch::Mlp, 3, {}, 2, opts, rng);
    for (double& v : net.layers[0].w.a) v = std::fabs(v) + 0.1;
    net.layers[0].b = {1.0, 1.5};

    Mat x(4, 3);
    for (double& v : x.a) v = rng.uniform(0.0, 1.0);  // nonnegative inputs keep z > 0
    Mat y(4, 2);
    for (double& v : y.a) v = rng.uniform(0.0, 1.0);

    Cache c = forward(net, x, Mat(), ForwardOptions::eval());
    for (double v : c.head_z.a) REQUIRE(v > 0.0);  // relu is the identity here

    // squared loss 0.5 ||out - y||^2
    Mat d_out(4, 2);
    for (size_t i = 0; i < d_out.a.size(); ++i) d_out.a[i] = c.out.a[i] - y.a[i];
    Gradients grad = backward(net, c, Mat(), d_out);

    // closed form: grad_W = X^T (out - y), grad_b = column sums
    for (int i = 0; i < 3; ++i)
        for (int k = 0; k < 2; ++k) {
            double expect = 0.0;
            for (int r = 0; r < 4; ++r) expect += x(r, i) * d_out(r, k);
            REQUIRE(grad.layers[0].w(i, k) == Catch::Approx(expect).margin(1e-12));
        }
    for (int k = 0; k < 2; ++k) {
        double expect = 0.0;
        for (int r = 0; r < 4; ++r) expect += d_out(r, k);
        REQUIRE(grad.layers[0].b[k] == Catch::Approx(expect).margin(1e-12));
    }

    SECTION("zero loss gives zero gradient") {
        Mat zero(4, 2);
        Gradients g0 = backward(net, c, Mat(), zero);
        for (double v : pack_gradients(net, g0)) REQUIRE(v == 0.0);
    }
}

TEST_CASE("mlp gradients match finite differences through smooth heads", "[net]") {
    Rng rng(13);
    NetOptions opts;
    opts.head = HeadKind::Evidence;
    opts.hidden_act = Activation::Tanh;
    opts.evidence_act = Activation::Softplus;
    Net net = make_feedforward(Arch::Mlp, 3, {5}, 2, opts, rng);

    Mat x(6, 3);
    for (double& v : x.a) v = rng.normal(0.0, 1.0);
    Mat y(6, 2);
    for (int i = 0; i < 6; ++i) y(i, i % 2) = 1.0;

    auto loss_of = [&](const Net& n) {
        Cache c = forward(n, x, Mat(), ForwardOptions::eval());
        Mat alpha = alpha_from_cache(c);
        double total = 0.0;
        for (int i = 0; i < 6; ++i) total += enn_squared_loss(y.row(i), alpha.row(i)).value;
        return total;
    };

    Cache c = forward(net, x, Mat(), ForwardOptions::eval());
    Mat alpha = alpha_from_cache(c);
    Mat d_out(6, 2);
    for (int i = 0; i < 6; ++i) {
        LossValueGrad g = enn_squared_loss(y.row(i), alpha.row(i));
        for (int k = 0; k < 2; ++k) d_out(i, k) = g.grad[k];
    }
    Gradients grad = backward(net, c, Mat(), d_out);
    Vec analytic = pack_gradients(net, grad);
    Vec numeric = fd_packed(net, loss_of);
    REQUIRE(max_rel_err(analytic, numeric) < 1e-4);
}

TEST_CASE("recurrent gradients match finite differences", "[net]") {
    Rng rng(17);
    NetOptions opts;
    opts.head = HeadKind::Evidence;
    opts.evidence_act = Activation::Softplus;
    Net net = make_elman(3, 4, 2, opts, rng);

    Mat x(5, 3);
    for (double& v : x.a) v = rng.normal(0.0, 1.0);
    Mat y(5, 1);
    for (int t = 0; t < 5; ++t) y(t, 0) = t % 2;

    auto loss_of = [&](const Net& n) {
        Cache c = forward_stream(n, x);
        Mat a(5, 1), b(5, 1);
        for (int t = 0; t < 5; ++t) {
            a(t, 0) = c.out(t, 0) + 1.0;
            b(t, 0) = c.out(t, 1) + 1.0;
        }
        return mtenn_loss(y, a, b).value;
    };

    Cache c = forward_stream(net, x);
    Mat a(5, 1), b(5, 1);
    for (int t = 0; t < 5; ++t) {
        a(t, 0) = c.out(t, 0) + 1.0;
        b(t, 0) = c.out(t, 1) + 1.0;
    }
    MtennGrad mg = mtenn_loss(y, a, b);
    Mat d_out(5, 2);
    for (int t = 0; t < 5; ++t) {
        d_out(t, 0) = mg.d_alpha(t, 0);
        d_out(t, 1) = mg.d_beta(t, 0);
    }
    Gradients grad = backward_stream(net, c, d_out);
    Vec analytic = pack_gradients(net, grad);
    Vec numeric = fd_packed(net, loss_of);
    REQUIRE(max_rel_err(analytic, numeric) < 1e-4);
}

TEST_CASE("mc dropout prediction", "[net]") {
    Rng rng(19);
    NetOptions opts;
    opts.head = HeadKind::Evidence;
    opts.dropout = 0.4;
    Net net = make_feedforward(Arch::Mlp, 3, {6}, 3, opts, rng);
    Mat x(4, 3);
    for (double& v : x.a) v = rng.normal(0.0, 1.0);

    SECTION("zero rate collapses the samples") {
        Net det = net;
        det.dropout = 0.0;
        McDropoutResult r = mc_dropout_predict(det, x, Mat(), 5, 42);
        for (int m = 1; m < 5; ++m)
            for (size_t i = 0; i < r.sample_probs[0].a.size(); ++i)
                REQUIRE(r.sample_probs[m].a[i] == r.sample_probs[0].a[i]);
    }
    SECTION("mean is the arithmetic mean of the samples") {
        McDropoutResult r = mc_dropout_predict(net, x, Mat(), 7, 42);
        for (int i = 0; i < x.rows; ++i)
            for (int k = 0; k < 3; ++k) {
                double m = 0.0;
                for (int s = 0; s < 7; ++s) m += r.sample_probs[s](i, k);
                REQUIRE(r.mean_probs(i, k) == Catch::Approx(m / 7.0).margin(1e-12));
            }
    }
    SECTION("seed determinism") {
        McDropoutResult r1 = mc_dropout_predict(net, x, Mat(), 9, 1234);
        McDropoutResult r2 = mc_dropout_predict(net, x, Mat(), 9, 1234);
        for (size_t i = 0; i < r1.mean_probs.a.size(); ++i)
            REQUIRE(r1.mean_probs.a[i] == r2.mean_probs.a[i]);
    }
    SECTION("rows are probability vectors") {
        McDropoutResult r = mc_dropout_predict(net, x, Mat(), 3, 5);
        for (int i = 0; i < x.rows; ++i)
            REQUIRE(sum(r.mean_probs.row(i)) == Catch::Approx(1.0).margin(1e-9));
    }
}

TEST_CASE("sgnn training on a toy graph", "[net][slow]") {
    SbmConfig sbm;
    sbm.num_classes = 2;
    sbm.nodes_per_class = 20;
    sbm.p_in = 0.3;
    sbm.p_out = 0.04;
    sbm.feature_dim = 6;
    sbm.train_per_class = 5;
    sbm.ood_classes = 0;
    sbm.seed = 11;
    SbmData data = gen_sbm_graph(sbm);
    REQUIRE(data.g.num_nodes() == 40);

    TrainConfig cfg;
    cfg.hidden = {8};
    cfg.iters = 120;
    cfg.lr = 0.2;
    cfg.dropout = 0.1;
    cfg.mc_samples = 20;
    cfg.loss.lambda1 = 0.01;
    cfg.loss.lambda2 = 1.0;
    cfg.evidence_act = Activation::Softplus;  // relu heads can be born dead at this width
    cfg.seed = 21;
    SgnnResult res = train_sgnn(data.g, data.train_ids, cfg);

    // accuracy on non-train nodes must beat the majority-class baseline
    std::vector<char> is_train(40, 0);
    for (int id : data.train_ids) is_train[id] = 1;
    int hit = 0, total = 0;
    for (int i = 0; i < 40; ++i) {
        if (is_train[i]) continue;
        ++total;
        if (argmax(res.mean_probs.row(i)) == data.g.labels[i]) ++hit;
    }
    REQUIRE(static_cast<double>(hit) / total > 0.5);

    SECTION("training is seed deterministic") {
        SgnnResult res2 = train_sgnn(data.g, data.train_ids, cfg);
        Vec p1 = pack_parameters(res.net);
        Vec p2 = pack_parameters(res2.net);
        REQUIRE(p1.size() == p2.size());
        for (size_t i = 0; i < p1.size(); ++i) REQUIRE(p1[i] == p2[i]);
    }
}

TEST_CASE("held-out classes read as vacuous", "[net][slow]") {
    SbmConfig sbm;
    sbm.num_classes = 3;
    sbm.nodes_per_class = 18;
    sbm.p_in = 0.3;
    sbm.p_out = 0.03;
    sbm.feature_dim = 8;
    sbm.train_per_class = 6;
    sbm.ood_classes = 1;
    sbm.seed = 13;
    SbmData data = gen_sbm_graph(sbm);

    TrainConfig cfg;
    cfg.hidden = {16};
    cfg.iters = 200;
    cfg.lr = 0.2;
    cfg.dropout = 0.1;
    cfg.mc_samples = 50;
    cfg.loss.lambda1 = 0.1;
    cfg.loss.lambda2 = 1.0;
    cfg.evidence_act = Activation::Softplus;
    cfg.seed = 23;
    SgnnResult res = train_sgnn(data.g, data.train_ids, cfg);

    double vac_ood = 0.0, vac_id = 0.0;
    int n_ood = 0, n_id = 0;
    std::vector<char> is_train(data.g.num_nodes(), 0);
    for (int id : data.train_ids) is_train[id] = 1;
    for (int i = 0; i < data.g.num_nodes(); ++i) {
        if (is_train[i]) continue;
        if (data.node_is_ood[i]) {
            vac_ood += res.vacuity[i];
            ++n_ood;
        } else {
            vac_id += res.vacuity[i];
            ++n_id;
        }
    }
    REQUIRE(n_ood > 0);
    REQUIRE(n_id > 0);
    REQUIRE(vac_ood / n_ood > vac_id / n_id);
}

TEST_CASE("plain evidential training is the degenerate joint loss", "[net]") {
    SbmConfig sbm;
    sbm.num_classes = 2;
    sbm.nodes_per_class = 12;
    sbm.seed = 17;
    sbm.ood_classes = 0;
    sbm.train_per_class = 4;
    SbmData data = gen_sbm_graph(sbm);

    TrainConfig cfg;
    cfg.hidden = {6};
    cfg.iters = 30;
    cfg.lr = 0.1;
    cfg.dropout = 0.0;
    cfg.mc_samples = 5;
    cfg.loss.lambda1 = 0.0;
    cfg.loss.lambda2 = 0.0;
    cfg.seed = 29;
    SgnnResult res = train_sgnn(data.g, data.train_ids, cfg);
    for (int t = 0; t < cfg.iters; ++t) {
        REQUIRE(res.term_prior[t] == 0.0);
        REQUIRE(res.term_teacher[t] == 0.0);
        REQUIRE(res.loss_history[t] == res.term_enn[t]);
    }
}

TEST_CASE("sgnn diverges loudly", "[net]") {
    SbmConfig sbm;
    sbm.num_classes = 2;
    sbm.nodes_per_class = 10;
    sbm.ood_classes = 0;
    sbm.train_per_class = 4;
    sbm.seed = 19;
    SbmData data = gen_sbm_graph(sbm);
    TrainConfig cfg;
    cfg.hidden = {6};
    cfg.iters = 400;
    cfg.lr = 1e308;  // first update overflows the weights
    cfg.dropout = 0.0;
    cfg.mc_samples = 2;
    cfg.evidence_act = Activation::Softplus;
    cfg.seed = 31;
    REQUIRE_THROWS_AS(train_sgnn(data.g, data.train_ids, cfg), std::runtime_error);
}

TEST_CASE("mtenn training fits a constant-label stream", "[net][slow]") {
    // single class, label 1 on the back half of every stream
    Rng rng(37);
    std::vector<Mat> xs, ys;
    for (int s = 0; s < 8; ++s) {
        Mat x(20, 3), y(20, 1);
        for (int t = 0; t < 20; ++t) {
            for (int f = 0; f < 3; ++f) x(t, f) = rng.normal(t >= 10 ? 2.0 : -2.0, 0.3);
            y(t, 0) = t >= 10 ? 1.0 : 0.0;
        }
        xs.push_back(x);
        ys.push_back(y);
    }
    MtennConfig cfg;
    cfg.hidden = 8;
    cfg.iters = 150;
    cfg.lr = 0.05;
    cfg.seed = 41;
    MtennResult res = train_mtenn(xs, ys, cfg);

    Cache c = forward_stream(res.net, xs[0]);
    std::vector<BetaParams> bp;
    for (int t = 12; t < 20; ++t) {
        beta_from_evidence_row(c.out.row(t), 1, bp);
        double mean = bp[0].alpha / (bp[0].alpha + bp[0].beta);
        REQUIRE(mean > 0.9);
    }

    SECTION("loss decreases over a trailing window") {
        int n = static_cast<int>(res.loss_history.size());
        double head = 0.0, tail = 0.0;
        for (int i = 0; i < 10; ++i) {
            head += res.loss_history[i];
            tail += res.loss_history[n - 1 - i];
        }
        REQUIRE(tail < head);
    }
    SECTION("determinism") {
        MtennResult res2 = train_mtenn(xs, ys, cfg);
        Vec p1 = pack_parameters(res.net);
        Vec p2 = pack_parameters(res2.net);
        for (size_t i = 0; i < p1.size(); ++i) REQUIRE(p1[i] == p2[i]);
    }
}

TEST_CASE("untrained temporal net is vacuous everywhere", "[net]") {
    Rng rng(43);
    NetOptions opts;
    opts.head = HeadKind::Evidence;
    Net net = make_elman(3, 5, 2, opts, rng);
    for_each_param(net, [](double& v) { v = 0.0; });
    Mat x(6, 3);
    for (double& v : x.a) v = rng.normal(0.0, 1.0);
    Cache c = forward_stream(net, x);
    std::vector<BetaParams> bp;
    for (int t = 0; t < 6; ++t) {
        beta_from_evidence_row(c.out.row(t), 1, bp);
        REQUIRE(vacuity(bp[0]) == 1.0);
    }
}

TEST_CASE("checkpoint round trip", "[net]") {
    namespace fs = std::filesystem;
    fs::path dir = fs::temp_directory_path() / "uqkit-ckpt-test";
    fs::create_directories(dir);

    Rng rng(47);
    NetOptions opts;
    opts.head = HeadKind::Evidence;
    opts.evidence_act = Activation::Softplus;
    opts.dropout = 0.25;
    Net net = make_feedforward(Arch::Gcn, 5, {7, 4}, 3, opts, rng);
    std::string path = (dir / "net.json").string();
    save_checkpoint(net, path);
    Net back = load_checkpoint(path);

    REQUIRE(back.arch == net.arch);
    REQUIRE(back.head == net.head);
    REQUIRE(back.evidence_act == net.evidence_act);
    REQUIRE(back.dropout == net.dropout);
    Vec p1 = pack_parameters(net);
    Vec p2 = pack_parameters(back);
    REQUIRE(p1.size() == p2.size());
    for (size_t i = 0; i < p1.size(); ++i) REQUIRE(p1[i] == p2[i]);

    SECTION("recurrent nets round trip too") {
        Net el = make_elman(3, 4, 2, opts, rng);
        std::string p = (dir / "elman.json").string();
        save_checkpoint(el, p);
        Net eb = load_checkpoint(p);
        REQUIRE(eb.arch == Arch::Recurrent);
        Vec a = pack_parameters(el);
        Vec b = pack_parameters(eb);
        for (size_t i = 0; i < a.size(); ++i) REQUIRE(a[i] == b[i]);
    }
    fs::remove_all(dir);
}
