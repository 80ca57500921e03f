#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <set>
#include <sstream>

#include <json.hpp>

#include "uqkit/config.hpp"
#include "uqkit/datagen.hpp"
#include "uqkit/experiments.hpp"
#include "uqkit/ranking.hpp"

using namespace uqkit;

namespace {

// every positive/negative pair scored directly; ties pay one half
double auroc_pairwise(const Vec& scores, const std::vector<int>& labels) {
    double wins = 0.0;
    long pairs = 0;
    for (size_t i = 0; i < scores.size(); ++i) {
        if (!labels[i]) continue;
        for (size_t j = 0; j < scores.size(); ++j) {
            if (labels[j]) continue;
            ++pairs;
            if (scores[i] > scores[j]) wins += 1.0;
            else if (scores[i] == scores[j]) wins += 0.5;
        }
    }
    return wins / pairs;
}

}  // namespace

TEST_CASE("auroc rank statistic", "[harness]") {
    SECTION("perfect separation") {
        REQUIRE(auroc({0.9, 0.8, 0.2, 0.1}, {1, 1, 0, 0}) == 1.0);
        REQUIRE(auroc({0.1, 0.2, 0.8, 0.9}, {1, 1, 0, 0}) == 0.0);
    }
    SECTION("uninformative scores") {
        REQUIRE(auroc({0.5, 0.5, 0.5, 0.5}, {1, 1, 0, 0}) == 0.5);
    }
    SECTION("hand-counted pair wins") {
        REQUIRE(auroc({0.9, 0.8, 0.7, 0.85}, {1, 1, 0, 0}) == 0.75);
    }
    SECTION("agrees exactly with the pairwise count under heavy ties") {
        Rng rng(55);
        for (int rep = 0; rep < 30; ++rep) {
            int n = 20 + rng.uniform_int(180);
            Vec scores(n);
            std::vector<int> labels(n);
            for (int i = 0; i < n; ++i) {
                scores[i] = rng.uniform_int(10) / 10.0;  // coarse grid forces ties
                labels[i] = rng.bernoulli(0.4) ? 1 : 0;
            }
            labels[0] = 1;
            labels[1] = 0;
            REQUIRE(auroc(scores, labels) == auroc_pairwise(scores, labels));
        }
    }
    SECTION("guards") {
        REQUIRE_THROWS_AS(auroc({0.1, 0.2}, {1, 1}), std::invalid_argument);
        REQUIRE_THROWS_AS(auroc({0.1, 0.2}, {0, 0}), std::invalid_argument);
        REQUIRE_THROWS_AS(auroc({0.1, 0.2}, {1, 2}), std::invalid_argument);
        REQUIRE_THROWS_AS(auroc({0.1, 0.2, 0.3}, {1, 0}), std::invalid_argument);
        double nan = std::nan("");
        REQUIRE_THROWS_AS(auroc({0.1, nan}, {1, 0}), std::invalid_argument);
    }
}

TEST_CASE("aupr step interpolation", "[harness]") {
    SECTION("perfect separation saturates") {
        REQUIRE(aupr({0.9, 0.8, 0.2, 0.1}, {1, 1, 0, 0}) == 1.0);
    }
    SECTION("hand-walked curve") {
        REQUIRE(aupr({0.9, 0.8, 0.7, 0.85}, {1, 1, 0, 0}) ==
                Catch::Approx(5.0 / 6.0).margin(1e-12));
    }
    SECTION("guards") {
        REQUIRE_THROWS_AS(aupr({0.1, 0.2}, {1, 1}), std::invalid_argument);
        REQUIRE_THROWS_AS(aupr({0.1}, {1, 0}), std::invalid_argument);
    }
    SECTION("wrapper bundles both areas") {
        RankingScores rs{{0.9, 0.8, 0.7, 0.85}, {1, 1, 0, 0}};
        RankingMetrics m = ranking_metrics(rs);
        REQUIRE(m.auroc == 0.75);
        REQUIRE(m.aupr == Catch::Approx(5.0 / 6.0).margin(1e-12));
    }
}

TEST_CASE("block-model graph generator", "[harness]") {
    SbmConfig cfg;
    cfg.num_classes = 4;
    cfg.nodes_per_class = 30;
    cfg.train_per_class = 20;
    cfg.ood_classes = 1;
    cfg.seed = 19;
    SbmData d = gen_sbm_graph(cfg);

    REQUIRE(d.g.features.rows == 120);
    REQUIRE(static_cast<int>(d.g.labels.size()) == 120);
    REQUIRE(d.train_ids.size() == 60u);

    std::set<int> unique_train(d.train_ids.begin(), d.train_ids.end());
    REQUIRE(unique_train.size() == d.train_ids.size());
    for (int id : d.train_ids) {
        REQUIRE(d.g.labels[id] < 3);  // held-out class never trains
        REQUIRE_FALSE(d.node_is_ood[id]);
    }
    for (int i = 0; i < 120; ++i) REQUIRE(static_cast<bool>(d.node_is_ood[i]) == (i >= 90));

    SECTION("zero cross-class rate keeps every edge inside its block") {
        SbmConfig pure = cfg;
        pure.p_out = 0.0;
        SbmData dp = gen_sbm_graph(pure);
        REQUIRE(!dp.g.edges.empty());
        for (auto [u, v] : dp.g.edges) REQUIRE(dp.g.labels[u] == dp.g.labels[v]);
    }
    SECTION("seed determinism") {
        SbmData d2 = gen_sbm_graph(cfg);
        REQUIRE(d.g.edges == d2.g.edges);
        REQUIRE(d.train_ids == d2.train_ids);
        for (size_t i = 0; i < d.g.features.a.size(); ++i)
            REQUIRE(d.g.features.a[i] == d2.g.features.a[i]);

        SbmConfig other = cfg;
        other.seed = 20;
        SbmData d3 = gen_sbm_graph(other);
        bool differs = d.g.edges != d3.g.edges;
        for (size_t i = 0; i < d.g.features.a.size() && !differs; ++i)
            differs = d.g.features.a[i] != d3.g.features.a[i];
        REQUIRE(differs);
    }
    SECTION("guards") {
        SbmConfig bad = cfg;
        bad.p_out = 0.3;
        REQUIRE_THROWS_AS(gen_sbm_graph(bad), std::invalid_argument);
        bad = cfg;
        bad.ood_classes = 4;
        REQUIRE_THROWS_AS(gen_sbm_graph(bad), std::invalid_argument);
        bad = cfg;
        bad.train_per_class = 31;
        REQUIRE_THROWS_AS(gen_sbm_graph(bad), std::invalid_argument);
    }
}

TEST_CASE("key-value config parsing", "[harness]") {
    std::stringstream ss(
        "# leading comment\n"
        "lr = 0.5\n"
        "name = two-moons   # trailing comment\n"
        "iters=200\n"
        "\n"
        "   spaced_key   =   spaced value  \n");
    KvConfig cfg = KvConfig::parse(ss);
    REQUIRE(cfg.has("lr"));
    REQUIRE_FALSE(cfg.has("missing"));
    REQUIRE(cfg.get_double("lr", 0.0) == 0.5);
    REQUIRE(cfg.get_str("name", "") == "two-moons");
    REQUIRE(cfg.get_int("iters", 0) == 200);
    REQUIRE(cfg.get_str("spaced_key", "") == "spaced value");
    REQUIRE(cfg.get_double("missing", 1.25) == 1.25);

    SECTION("malformed input") {
        std::stringstream bad1("just words\n");
        REQUIRE_THROWS_AS(KvConfig::parse(bad1), std::runtime_error);
        std::stringstream bad2("= 5\n");
        REQUIRE_THROWS_AS(KvConfig::parse(bad2), std::runtime_error);
        std::stringstream bad3("lr = abc\n");
        KvConfig c3 = KvConfig::parse(bad3);
        REQUIRE_THROWS_AS(c3.get_double("lr", 0.0), std::runtime_error);
        REQUIRE_THROWS_AS(c3.get_int("lr", 0), std::runtime_error);
    }
    SECTION("file round trip") {
        std::string path = "kvconfig_test.cfg";
        write_text_file(path, "a = 1\nb = hello\n");
        KvConfig fromfile = KvConfig::parse_file(path);
        REQUIRE(fromfile.get_int("a", 0) == 1);
        REQUIRE(fromfile.get_str("b", "") == "hello");
        std::remove(path.c_str());
        REQUIRE_THROWS_AS(KvConfig::parse_file("no_such.cfg"), std::runtime_error);
    }
    SECTION("echo reparses to the same map") {
        cfg.set("extra", "42");
        std::stringstream echoed(cfg.echo());
        KvConfig back = KvConfig::parse(echoed);
        REQUIRE(back.values == cfg.values);
    }
}

TEST_CASE("shortest round-trip float formatting", "[harness]") {
    for (double v : {1.0 / 3.0, 0.1, 2.0, -1.75, 1e-300, 6.02214076e23, 0.0}) {
        double back = std::stod(fmt_g17(v));
        REQUIRE(back == v);
    }
}

TEST_CASE("experiment runner writes deterministic artifacts", "[harness]") {
    namespace fs = std::filesystem;
    std::stringstream ss("alpha = 1,1,1\nmc = 0\nseed = 5\n");
    KvConfig cfg = KvConfig::parse(ss);

    std::string dir_a = "exp_out_a";
    std::string dir_b = "exp_out_b";
    REQUIRE(run_experiment("uq-profile", cfg, dir_a) == 0);
    REQUIRE(run_experiment("uq-profile", cfg, dir_b) == 0);

    for (const char* name : {"metrics.csv", "summary.json", "config.echo"}) {
        std::string a = read_text_file(dir_a + "/" + std::string(name));
        std::string b = read_text_file(dir_b + "/" + std::string(name));
        REQUIRE(!a.empty());
        REQUIRE(a == b);
    }

    std::string metrics = read_text_file(dir_a + "/metrics.csv");
    REQUIRE(metrics.find("vacuity") != std::string::npos);
    nlohmann::json summary = nlohmann::json::parse(read_text_file(dir_a + "/summary.json"));
    REQUIRE(summary.at("task") == "uq-profile");
    REQUIRE(summary.at("profile").at("vacuity").get<double>() == 1.0);
    REQUIRE(summary.at("profile").at("dissonance").get<double>() == 0.0);

    fs::remove_all(dir_a);
    fs::remove_all(dir_b);

    SECTION("unknown tasks are refused") {
        REQUIRE_THROWS_AS(run_experiment("no-such-task", cfg, "exp_out_c"), std::runtime_error);
        fs::remove_all("exp_out_c");
    }
}
