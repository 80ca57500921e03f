#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "uqkit/datagen.hpp"
#include "uqkit/earlydet.hpp"
#include "uqkit/serialize.hpp"
#include "uqkit/trainers.hpp"

using namespace uqkit;

namespace {

// positive-evidence amplification at the Beta level: e+ -> c*e+, e- fixed
BetaParams amplify(const BetaParams& bp, double c) {
    return BetaParams{1.0 + c * (bp.alpha - 1.0), bp.beta};
}

BinomialOpinion fuse_beta_window(const std::vector<BetaParams>& window, double rho, double W,
                                 double base_rate) {
    std::vector<BinomialOpinion> ops;
    for (const BetaParams& bp : window) ops.push_back(beta_to_binomial(bp, W, base_rate));
    return fuse_window(ops, recency_weights(static_cast<int>(ops.size()), rho));
}

MtennResult train_demo_net() {
    std::vector<Mat> feats, labs;
    for (int s = 0; s < 8; ++s) {
        EventStreamConfig cfg;
        cfg.T = 60;
        cfg.num_classes = 2;
        cfg.events = {EventSpec{s % 2, 20, 40}};
        cfg.seed = 100 + s;
        EventStream es = gen_event_stream(cfg);
        feats.push_back(es.features);
        labs.push_back(es.labels);
    }
    MtennConfig tc;
    tc.hidden = 8;
    tc.iters = 250;
    tc.lr = 0.05;
    tc.seed = 41;
    return train_mtenn(feats, labs, tc);
}

}  // namespace

TEST_CASE("windowed vacuity statistic", "[earlydet]") {
    REQUIRE(umss_statistic({0.2, 0.4, 0.6}) == Catch::Approx(0.4).margin(1e-12));
    REQUIRE(umss_statistic({0.7, 0.7, 0.7, 0.7, 0.7}) == Catch::Approx(0.7).margin(1e-12));
    REQUIRE(umss_statistic({0.3}) == 0.3);
    REQUIRE_THROWS_AS(umss_statistic({}), std::invalid_argument);
}

TEST_CASE("threshold calibration takes the empirical null quantile", "[earlydet]") {
    SECTION("order statistic lands exactly on the grid") {
        Rng rng(4);
        std::vector<int> order = rng.permutation(200);
        Vec stats(200);
        for (int i = 0; i < 200; ++i) stats[i] = (order[i] + 1) / 200.0;
        REQUIRE(calibrate_umss_threshold(stats, 0.05) == 0.95);
        REQUIRE(calibrate_umss_threshold(stats, 0.5) == 0.5);
    }
    SECTION("uniform null lands near the nominal quantile") {
        Rng rng(12);
        Vec stats(1000);
        for (double& v : stats) v = rng.uniform();
        double thr = calibrate_umss_threshold(stats, 0.05);
        REQUIRE(thr > 0.92);
        REQUIRE(thr < 0.98);
    }
    SECTION("degenerate null collapses to the common value") {
        Vec stats(150, 0.42);
        REQUIRE(calibrate_umss_threshold(stats, 0.05) == 0.42);
    }
    SECTION("guards") {
        Vec few(99, 0.1);
        REQUIRE_THROWS_AS(calibrate_umss_threshold(few, 0.05), std::runtime_error);
        Vec ok(150, 0.1);
        REQUIRE_THROWS_AS(calibrate_umss_threshold(ok, 0.0), std::invalid_argument);
        REQUIRE_THROWS_AS(calibrate_umss_threshold(ok, 1.0), std::invalid_argument);
    }
}

TEST_CASE("decision rules on hand-built inputs", "[earlydet]") {
    DetectorConfig cfg;
    SECTION("belief-vs-disbelief rule") {
        cfg.vacuity_threshold = 0.5;
        std::vector<BinomialOpinion> fused = {
            BinomialOpinion{0.7, 0.2, 0.1, 0.5},   // fires: b > d, u < V
            BinomialOpinion{0.4, 0.5, 0.1, 0.5},   // silent: b <= d
        };
        std::vector<int> dec = decide_events(DetectorHead::Wbc, fused, {}, cfg);
        REQUIRE(dec == std::vector<int>{1, 0});

        cfg.vacuity_threshold = 0.3;
        fused = {BinomialOpinion{0.5, 0.1, 0.4, 0.5}};  // silent: u >= V
        dec = decide_events(DetectorHead::Wbc, fused, {}, cfg);
        REQUIRE(dec == std::vector<int>{0});
    }
    SECTION("statistic thresholds") {
        cfg.umss_threshold = 0.95;
        std::vector<int> dec = decide_events(DetectorHead::Umss, {}, {0.96, 0.90}, cfg);
        REQUIRE(dec == std::vector<int>{1, 0});
        dec = decide_events(DetectorHead::Prob, {}, {0.6, 0.4}, cfg);
        REQUIRE(dec == std::vector<int>{1, 0});
    }
}

TEST_CASE("opinion window keeps the m most recent segments", "[earlydet]") {
    OpinionWindow w(3);
    for (int i = 1; i <= 5; ++i) w.push(BetaParams{static_cast<double>(i), 1.0});
    REQUIRE(w.size() == 3);
    Vec u = w.vacuities(2.0);
    // strengths 4,5,6 for the retained segments 3,4,5
    REQUIRE(u[0] == Catch::Approx(2.0 / 4.0).margin(1e-15));
    REQUIRE(u[1] == Catch::Approx(2.0 / 5.0).margin(1e-15));
    REQUIRE(u[2] == Catch::Approx(2.0 / 6.0).margin(1e-15));

    SECTION("fuse matches the explicit fold") {
        OpinionWindow w2(4);
        std::vector<BetaParams> raw = {BetaParams{2.0, 1.5}, BetaParams{4.0, 1.0}};
        for (const BetaParams& bp : raw) w2.push(bp);
        BinomialOpinion got = w2.fuse(0.9, 2.0, 0.5);
        BinomialOpinion want = fuse_beta_window(raw, 0.9, 2.0, 0.5);
        REQUIRE(got.b == Catch::Approx(want.b).margin(1e-15));
        REQUIRE(got.d == Catch::Approx(want.d).margin(1e-15));
        REQUIRE(got.u == Catch::Approx(want.u).margin(1e-15));
    }
    SECTION("guards") {
        REQUIRE_THROWS_AS(OpinionWindow(0), std::invalid_argument);
        OpinionWindow empty(2);
        REQUIRE_THROWS_AS(empty.fuse(0.9, 2.0, 0.5), std::invalid_argument);
    }
}

TEST_CASE("first-firing outcome semantics", "[earlydet]") {
    Mat labels(8, 1);
    for (int t = 3; t < 7; ++t) labels(t, 0) = 1.0;

    SECTION("firing inside the event is a hit with its delay") {
        Mat dec(8, 1);
        dec(5, 0) = 1.0;
        auto out = detection_outcomes(dec, labels);
        REQUIRE(out.size() == 1);
        REQUIRE(out[0].tp);
        REQUIRE(out[0].delay == 2);
        REQUIRE(out[0].detect_t == 5);
        REQUIRE(out[0].onset == 3);
    }
    SECTION("firing at onset has zero delay") {
        Mat dec(8, 1);
        dec(3, 0) = 1.0;
        auto out = detection_outcomes(dec, labels);
        REQUIRE(out[0].tp);
        REQUIRE(out[0].delay == 0);
    }
    SECTION("firing before onset is a false alarm") {
        Mat dec(8, 1);
        dec(2, 0) = 1.0;
        auto out = detection_outcomes(dec, labels);
        REQUIRE(out.size() == 1);
        REQUIRE(out[0].fp);
        REQUIRE_FALSE(out[0].tp);
    }
    SECTION("silence on an event is a miss") {
        Mat dec(8, 1);
        auto out = detection_outcomes(dec, labels);
        REQUIRE(out.size() == 1);
        REQUIRE(out[0].fn);
    }
    SECTION("minimum delay requirement reclassifies eager hits") {
        Mat dec(8, 1);
        dec(3, 0) = 1.0;
        auto out = detection_outcomes(dec, labels, 1);
        REQUIRE(out[0].fp);
    }
    SECTION("quiet class with no event produces nothing") {
        Mat dec(8, 1);
        Mat quiet(8, 1);
        REQUIRE(detection_outcomes(dec, quiet).empty());
    }
    SECTION("firing without any event is a false alarm") {
        Mat dec(8, 1);
        dec(4, 0) = 1.0;
        Mat quiet(8, 1);
        auto out = detection_outcomes(dec, quiet);
        REQUIRE(out.size() == 1);
        REQUIRE(out[0].fp);
        REQUIRE(out[0].onset == -1);
    }
    SECTION("aggregate metrics") {
        Mat dec2(8, 2), lab2(8, 2);
        for (int t = 3; t < 7; ++t) {
            lab2(t, 0) = 1.0;
            lab2(t, 1) = 1.0;
        }
        dec2(5, 0) = 1.0;  // hit with delay 2; class 1 never fires
        DetectionMetrics m = detection_metrics(dec2, lab2);
        REQUIRE(m.tp == 1);
        REQUIRE(m.fn == 1);
        REQUIRE(m.fp == 0);
        REQUIRE(m.precision == 1.0);
        REQUIRE(m.recall == 0.5);
        REQUIRE(m.f1 == Catch::Approx(2.0 / 3.0).margin(1e-12));
        REQUIRE(m.mean_delay == 2.0);
    }
    SECTION("shape mismatch is rejected") {
        Mat dec(7, 1);
        REQUIRE_THROWS_AS(detection_outcomes(dec, labels), std::invalid_argument);
    }
}

TEST_CASE("positive-evidence amplification never silences a firing window", "[earlydet]") {
    Rng rng(77);
    DetectorConfig cfg;
    cfg.vacuity_threshold = 0.9;
    int fired = 0;
    for (int rep = 0; rep < 300; ++rep) {
        int m = 1 + static_cast<int>(rng.uniform() * 5.0);
        std::vector<BetaParams> window(m);
        for (BetaParams& bp : window) {
            bp.alpha = 1.0 + 5.0 * rng.uniform();
            bp.beta = 1.0 + 5.0 * rng.uniform();
        }
        BinomialOpinion base = fuse_beta_window(window, 0.9, cfg.prior_weight, cfg.base_rate);
        int dec = decide_events(DetectorHead::Wbc, {base}, {}, cfg)[0];
        fired += dec;
        for (double c : {1.5, 4.0, 20.0}) {
            std::vector<BetaParams> boosted(m);
            for (int i = 0; i < m; ++i) boosted[i] = amplify(window[i], c);
            BinomialOpinion up = fuse_beta_window(boosted, 0.9, cfg.prior_weight, cfg.base_rate);
            REQUIRE(up.b >= base.b - 1e-12);
            REQUIRE(up.d <= base.d + 1e-12);
            REQUIRE(up.u <= base.u + 1e-12);
            int dec_up = decide_events(DetectorHead::Wbc, {up}, {}, cfg)[0];
            REQUIRE(dec_up >= dec);
        }
    }
    REQUIRE(fired > 0);  // the invariant was exercised on live firings, not vacuously
}

TEST_CASE("detector configuration guards", "[earlydet]") {
    DetectorConfig cfg;
    cfg.validate();
    DetectorConfig bad = cfg;
    bad.window = 0;
    REQUIRE_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = cfg;
    bad.rho = 0.0;
    REQUIRE_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = cfg;
    bad.rho = 1.2;
    REQUIRE_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = cfg;
    bad.vacuity_threshold = 1.0;
    REQUIRE_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = cfg;
    bad.q = 0.0;
    REQUIRE_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("event stream generator", "[earlydet]") {
    EventStreamConfig cfg;
    cfg.T = 60;
    cfg.num_classes = 2;
    cfg.events = {EventSpec{0, 20, 40}};
    cfg.seed = 5;
    EventStream es = gen_event_stream(cfg);
    REQUIRE(es.features.rows == 60);
    REQUIRE(es.features.cols == cfg.feature_dim);
    REQUIRE(es.labels.rows == 60);
    REQUIRE(es.labels.cols == 2);
    double col0 = 0.0, col1 = 0.0;
    for (int t = 0; t < 60; ++t) {
        col0 += es.labels(t, 0);
        col1 += es.labels(t, 1);
    }
    REQUIRE(col0 == 20.0);
    REQUIRE(col1 == 0.0);

    SECTION("no events means all-zero labels") {
        EventStreamConfig quiet = cfg;
        quiet.events.clear();
        EventStream qs = gen_event_stream(quiet);
        for (double v : qs.labels.a) REQUIRE(v == 0.0);
    }
    SECTION("overlapping events give multi-label rows") {
        EventStreamConfig multi = cfg;
        multi.events = {EventSpec{0, 10, 30}, EventSpec{1, 25, 45}};
        EventStream ms = gen_event_stream(multi);
        REQUIRE(ms.labels(27, 0) == 1.0);
        REQUIRE(ms.labels(27, 1) == 1.0);
    }
    SECTION("signal rides on top of the same background and ramps up") {
        EventStreamConfig quiet = cfg;
        quiet.events.clear();
        EventStream qs = gen_event_stream(quiet);
        // same seed: rows outside the event are bitwise identical
        for (int t = 0; t < 20; ++t)
            for (int f = 0; f < cfg.feature_dim; ++f)
                REQUIRE(es.features(t, f) == qs.features(t, f));
        for (int t = 40; t < 60; ++t)
            for (int f = 0; f < cfg.feature_dim; ++f)
                REQUIRE(es.features(t, f) == qs.features(t, f));
        double first = 0.0, last = 0.0;
        for (int f = 0; f < cfg.feature_dim; ++f) {
            first += std::pow(es.features(20, f) - qs.features(20, f), 2);
            last += std::pow(es.features(39, f) - qs.features(39, f), 2);
        }
        REQUIRE(first > 0.0);
        REQUIRE(last > first);  // linear ramp peaks at the event end
    }
    SECTION("same seed reproduces the stream bitwise") {
        EventStream es2 = gen_event_stream(cfg);
        for (size_t i = 0; i < es.features.a.size(); ++i)
            REQUIRE(es.features.a[i] == es2.features.a[i]);
    }
    SECTION("bad specs are rejected") {
        EventStreamConfig bad = cfg;
        bad.events = {EventSpec{5, 0, 10}};
        REQUIRE_THROWS_AS(gen_event_stream(bad), std::invalid_argument);
        bad.events = {EventSpec{0, 10, 10}};
        REQUIRE_THROWS_AS(gen_event_stream(bad), std::invalid_argument);
        bad.events = {EventSpec{0, 10, 61}};
        REQUIRE_THROWS_AS(gen_event_stream(bad), std::invalid_argument);
    }
}

TEST_CASE("trained detector walks a stream end to end", "[earlydet][slow]") {
    MtennResult trained = train_demo_net();

    EventStreamConfig scfg;
    scfg.T = 60;
    scfg.num_classes = 2;
    scfg.events = {EventSpec{0, 20, 40}};
    scfg.seed = 900;
    EventStream es = gen_event_stream(scfg);

    DetectorConfig cfg;
    cfg.head = DetectorHead::Wbc;
    DetectionTrace tr = run_early_detection(trained.net, es.features, cfg);

    REQUIRE(tr.decisions.rows == 60);
    REQUIRE(tr.decisions.cols == 2);
    for (int t = 0; t < 60; ++t)
        for (int k = 0; k < 2; ++k) {
            REQUIRE(tr.b(t, k) + tr.d(t, k) + tr.u(t, k) == Catch::Approx(1.0).margin(1e-9));
            REQUIRE(tr.b(t, k) >= -1e-12);
            REQUIRE(tr.d(t, k) >= -1e-12);
            REQUIRE(tr.u(t, k) >= -1e-12);
            double dec = tr.decisions(t, k);
            REQUIRE((dec == 0.0 || dec == 1.0));
            // the published decision is exactly the rule applied to the trace
            int want = tr.b(t, k) > tr.d(t, k) && tr.u(t, k) < cfg.vacuity_threshold ? 1 : 0;
            REQUIRE(static_cast<int>(dec) == want);
        }

    DetectionMetrics m = detection_metrics(tr.decisions, es.labels);
    bool class0_hit = false;
    for (const ClassOutcome& o : m.outcomes)
        if (o.cls == 0 && o.tp) class0_hit = true;
    REQUIRE(class0_hit);

    SECTION("repeat run is identical") {
        DetectionTrace tr2 = run_early_detection(trained.net, es.features, cfg);
        for (size_t i = 0; i < tr.decisions.a.size(); ++i)
            REQUIRE(tr.decisions.a[i] == tr2.decisions.a[i]);
        for (size_t i = 0; i < tr.b.a.size(); ++i) REQUIRE(tr.b.a[i] == tr2.b.a[i]);
    }
    SECTION("statistic trace matches the firing rule for the other heads") {
        DetectorConfig ucfg = cfg;
        ucfg.head = DetectorHead::Umss;
        ucfg.umss_threshold = 0.4;
        DetectionTrace ut = run_early_detection(trained.net, es.features, ucfg);
        for (int t = 0; t < 60; ++t)
            for (int k = 0; k < 2; ++k) {
                REQUIRE(ut.stat(t, k) >= 0.0);
                REQUIRE(ut.stat(t, k) <= 1.0);
                int want = ut.stat(t, k) > ucfg.umss_threshold ? 1 : 0;
                REQUIRE(static_cast<int>(ut.decisions(t, k)) == want);
            }

        DetectorConfig pcfg = cfg;
        pcfg.head = DetectorHead::Prob;
        DetectionTrace pt = run_early_detection(trained.net, es.features, pcfg);
        for (int t = 0; t < 60; ++t)
            for (int k = 0; k < 2; ++k) {
                REQUIRE(pt.stat(t, k) > 0.0);
                REQUIRE(pt.stat(t, k) < 1.0);
                int want = pt.stat(t, k) > 0.5 ? 1 : 0;
                REQUIRE(static_cast<int>(pt.decisions(t, k)) == want);
            }
    }
    SECTION("final statistics agree with the statistic trace") {
        EventStreamConfig qcfg = scfg;
        qcfg.events.clear();
        qcfg.seed = 901;
        EventStream quiet = gen_event_stream(qcfg);
        DetectorConfig ucfg = cfg;
        ucfg.head = DetectorHead::Umss;
        Vec fin = umss_final_statistics(trained.net, quiet.features, ucfg);
        DetectionTrace ut = run_early_detection(trained.net, quiet.features, ucfg);
        REQUIRE(fin.size() == 2);
        for (int k = 0; k < 2; ++k) {
            REQUIRE(fin[k] >= 0.0);
            REQUIRE(fin[k] <= 1.0);
            REQUIRE(fin[k] == ut.stat(59, k));
        }
    }
}

TEST_CASE("evidence rows map onto per-class Beta segments", "[earlydet]") {
    std::vector<BetaParams> bp;
    beta_from_evidence_row({2.0, 3.0, 0.5, 0.25}, 2, bp);
    REQUIRE(bp.size() == 2);
    REQUIRE(bp[0].alpha == 3.0);
    REQUIRE(bp[0].beta == 1.5);
    REQUIRE(bp[1].alpha == 4.0);
    REQUIRE(bp[1].beta == 1.25);
}

TEST_CASE("stream serialization round trips", "[earlydet]") {
    EventStreamConfig cfg;
    cfg.T = 12;
    cfg.feature_dim = 3;
    cfg.events = {EventSpec{1, 4, 9}};
    cfg.seed = 77;
    EventStream es = gen_event_stream(cfg);

    std::stringstream ss;
    write_stream_jsonl(ss, es.features, es.labels);
    StreamData back = read_stream_jsonl(ss);
    REQUIRE(back.features.rows == es.features.rows);
    REQUIRE(back.features.cols == es.features.cols);
    for (size_t i = 0; i < es.features.a.size(); ++i)
        REQUIRE(back.features.a[i] == es.features.a[i]);
    for (size_t i = 0; i < es.labels.a.size(); ++i) REQUIRE(back.labels.a[i] == es.labels.a[i]);

    SECTION("through a file") {
        std::string path = "stream_roundtrip_test.jsonl";
        {
            std::ofstream out(path);
            write_stream_jsonl(out, es.features, es.labels);
        }
        StreamData fromfile = read_stream_file(path);
        for (size_t i = 0; i < es.features.a.size(); ++i)
            REQUIRE(fromfile.features.a[i] == es.features.a[i]);
        std::remove(path.c_str());
    }
    SECTION("guards") {
        Mat short_labels(11, 2);
        std::stringstream sink;
        REQUIRE_THROWS_AS(write_stream_jsonl(sink, es.features, short_labels),
                          std::invalid_argument);
        std::stringstream empty;
        REQUIRE_THROWS_AS(read_stream_jsonl(empty), std::runtime_error);
        REQUIRE_THROWS_AS(read_stream_file("no_such_stream.jsonl"), std::runtime_error);
    }
}
