#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "uqkit/rng.hpp"
#include "uqkit/uncertainty.hpp"

using namespace uqkit;

namespace {

// harmonic-sum oracle: psi(n) - psi(m) = sum_{k=m}^{n-1} 1/k for integers
double harmonic_gap(int m, int n) {
    double s = 0.0;
    for (int k = m; k < n; ++k) s += 1.0 / k;
    return s;
}

// closed-form oracle for integer alpha = [1,...,1] (K ones):
// (1/ln K) * sum_{k=2}^{K} 1/k
double aleatoric_all_ones_oracle(int K) {
    double s = 0.0;
    for (int k = 2; k <= K; ++k) s += 1.0 / k;
    return s / std::log(static_cast<double>(K));
}

}  // namespace

TEST_CASE("vacuity values", "[uncertainty]") {
    REQUIRE(vacuity(DirichletParams{Vec{1.0, 1.0, 1.0}}) == 1.0);
    REQUIRE(vacuity(DirichletParams{Vec{3.0, 5.0, 7.0}}) == Catch::Approx(0.2).margin(1e-15));
    // K/S = 3/300 evaluates to exactly 0.01 in double arithmetic
    REQUIRE(vacuity(DirichletParams{Vec{100.0, 100.0, 100.0}}) == 0.01);
    REQUIRE(vacuity(BetaParams{1.0, 1.0}) == 1.0);
    REQUIRE(vacuity(BetaParams{3.0, 2.0}) == Catch::Approx(0.4).margin(1e-15));
}

TEST_CASE("dissonance values", "[uncertainty]") {
    SECTION("vacuous opinion has zero dissonance") {
        MultinomialOpinion op;
        op.belief = {0.0, 0.0, 0.0};
        op.uncertainty = 1.0;
        op.base_rate = Vec(3, 1.0 / 3.0);
        REQUIRE(dissonance(op) == 0.0);
    }
    SECTION("uniform dogmatic opinion has dissonance one") {
        MultinomialOpinion op;
        op.belief = Vec(4, 0.25);
        op.uncertainty = 0.0;
        op.base_rate = Vec(4, 0.25);
        REQUIRE(dissonance(op) == Catch::Approx(1.0).margin(1e-12));
    }
    SECTION("two-class hand value") {
        MultinomialOpinion op;
        op.belief = {0.6, 0.2};
        op.uncertainty = 0.2;
        op.base_rate = {0.5, 0.5};
        // balance = 1 - 0.4/0.8 = 0.5; each term b_i * 0.5, total 0.4
        REQUIRE(dissonance(op) == Catch::Approx(0.4).margin(1e-12));
    }
    SECTION("single-belief concentration has zero dissonance") {
        MultinomialOpinion op;
        op.belief = {0.8, 0.0, 0.0};
        op.uncertainty = 0.2;
        op.base_rate = Vec(3, 1.0 / 3.0);
        REQUIRE(dissonance(op) == 0.0);
    }
}

TEST_CASE("aleatoric closed form", "[uncertainty]") {
    SECTION("flat Beta") {
        double oracle = 0.5 / std::log(2.0);
        REQUIRE(aleatoric_uncertainty(DirichletParams{Vec{1.0, 1.0}}) ==
                Catch::Approx(oracle).margin(1e-12));
        REQUIRE(oracle == Catch::Approx(0.72135).margin(5e-6));
    }
    SECTION("flat three-class Dirichlet") {
        double oracle = aleatoric_all_ones_oracle(3);  // (1/2 + 1/3)/ln 3
        REQUIRE(aleatoric_uncertainty(DirichletParams{Vec{1.0, 1.0, 1.0}}) ==
                Catch::Approx(oracle).margin(1e-12));
        REQUIRE(oracle == Catch::Approx(0.7585).margin(5e-5));
    }
    SECTION("alpha [2,2]") {
        // (psi(5) - psi(3)) / ln 2 with the digamma gap as a harmonic sum
        double oracle = harmonic_gap(3, 5) / std::log(2.0);
        REQUIRE(aleatoric_uncertainty(DirichletParams{Vec{2.0, 2.0}}) ==
                Catch::Approx(oracle).margin(1e-12));
        REQUIRE(oracle == Catch::Approx(0.84157).margin(5e-6));
    }
}

TEST_CASE("epistemic decomposition", "[uncertainty]") {
    SECTION("flat Beta") {
        double expect = 1.0 - 0.5 / std::log(2.0);
        REQUIRE(epistemic_uncertainty(DirichletParams{Vec{1.0, 1.0}}) ==
                Catch::Approx(expect).margin(1e-12));
        REQUIRE(expect == Catch::Approx(0.27865).margin(5e-6));
    }
    SECTION("concentrated Beta vanishes") {
        REQUIRE(epistemic_uncertainty(DirichletParams{Vec{1000.0, 1000.0}}) < 0.001);
        REQUIRE(epistemic_uncertainty(DirichletParams{Vec{1000.0, 1000.0}}) >= -1e-9);
    }
    SECTION("flat three-class Dirichlet") {
        double expect = 1.0 - aleatoric_all_ones_oracle(3);
        REQUIRE(epistemic_uncertainty(DirichletParams{Vec{1.0, 1.0, 1.0}}) ==
                Catch::Approx(expect).margin(1e-12));
    }
}

TEST_CASE("entropy of the uniform distribution is one in base K", "[uncertainty]") {
    REQUIRE(entropy_base_k(Vec{0.5, 0.5}) == 1.0);
    for (int k = 3; k <= 6; ++k) {
        Vec p(k, 1.0 / k);
        REQUIRE(entropy_base_k(p) == Catch::Approx(1.0).margin(1e-12));
    }
}

TEST_CASE("expected pairwise kl", "[uncertainty]") {
    REQUIRE(expected_pairwise_kl(DirichletParams{Vec{3.0, 5.0, 7.0}}) ==
            Catch::Approx(2.0 / 15.0).margin(1e-15));
    REQUIRE(expected_pairwise_kl(DirichletParams{Vec{1.0, 1.0}}) ==
            Catch::Approx(0.5).margin(1e-15));
}

TEST_CASE("dirichlet sampling", "[uncertainty]") {
    SECTION("samples sum to one and are seed-deterministic") {
        DirichletParams d{Vec{2.0, 3.0, 0.7}};
        Rng r1(5), r2(5);
        Mat s1 = sample_dirichlet(d, 50, r1);
        Mat s2 = sample_dirichlet(d, 50, r2);
        for (int i = 0; i < s1.rows; ++i) {
            REQUIRE(sum(s1.row(i)) == Catch::Approx(1.0).margin(1e-12));
            for (int k = 0; k < s1.cols; ++k) REQUIRE(s1(i, k) == s2(i, k));
        }
    }
    SECTION("mc entropy matches the closed form for the flat Beta") {
        double oracle = 0.5 / std::log(2.0);
        DirichletParams d{Vec{1.0, 1.0}};
        Rng rng(99);
        const int n = 1000000;
        Mat s = sample_dirichlet(d, n, rng);
        double s1 = 0.0, s2 = 0.0;
        for (int i = 0; i < n; ++i) {
            double h = entropy_base_k(s.row(i));
            s1 += h;
            s2 += h * h;
        }
        double mean = s1 / n;
        double se = std::sqrt((s2 / n - mean * mean) / n);
        REQUIRE(std::fabs(mean - oracle) < 3.0 * se);
    }
    SECTION("near-dogmatic parameters concentrate") {
        DirichletParams d{Vec{1e6, 1.0}};
        Rng rng(7);
        Mat s = sample_dirichlet(d, 200, rng);
        double mean_p1 = 0.0;
        for (int i = 0; i < s.rows; ++i) mean_p1 += s(i, 0);
        mean_p1 /= s.rows;
        REQUIRE(mean_p1 > 0.999);
    }
}

TEST_CASE("profile ordering for the flat three-class case", "[uncertainty]") {
    UncertaintyProfile pr = uncertainty_profile(DirichletParams{Vec{1.0, 1.0, 1.0}}, 20000, 3);
    REQUIRE(pr.vacuity == 1.0);
    REQUIRE(pr.entropy == Catch::Approx(1.0).margin(1e-12));
    REQUIRE(pr.dissonance == 0.0);
    REQUIRE(pr.aleatoric == Catch::Approx(aleatoric_all_ones_oracle(3)).margin(1e-12));
    REQUIRE(pr.vacuity > pr.aleatoric);
    REQUIRE(pr.aleatoric > pr.epistemic);
    REQUIRE(pr.epistemic > pr.dissonance);
    REQUIRE(std::fabs(pr.aleatoric_mc - pr.aleatoric) < 3.0 * pr.aleatoric_mc_se);
    REQUIRE(pr.epistemic == Catch::Approx(pr.entropy - pr.aleatoric).margin(1e-12));
}

TEST_CASE("profile ordering for the concentrated three-class case", "[uncertainty]") {
    UncertaintyProfile pr = uncertainty_profile(DirichletParams{Vec{100.0, 100.0, 100.0}});
    REQUIRE(pr.vacuity == 0.01);
    REQUIRE(pr.dissonance == Catch::Approx(0.99).margin(1e-12));
    REQUIRE(pr.aleatoric >= 0.99);
    REQUIRE(pr.epistemic <= 0.01);
    REQUIRE(pr.entropy > pr.aleatoric);
    REQUIRE(pr.aleatoric > pr.dissonance);
    REQUIRE(pr.dissonance > pr.vacuity);
    REQUIRE(pr.vacuity > pr.epistemic);
}

TEST_CASE("uncertainty bound suite holds over random parameters", "[uncertainty]") {
    Rng rng(4242);
    for (int rep = 0; rep < 2000; ++rep) {
        int k = 2 + rng.uniform_int(5);
        Vec alpha(k);
        for (double& a : alpha) a = rng.uniform(1.0, 50.0);
        DirichletParams d{alpha};
        UncertaintyProfile pr = uncertainty_profile(d);
        double S = d.strength();
        REQUIRE(pr.vacuity + pr.dissonance <= 1.0 + 1e-9);
        REQUIRE(pr.vacuity > (k - 1.0) / S - 1e-9);
        REQUIRE(pr.expected_pairwise_kl == Catch::Approx((k - 1.0) / S).margin(1e-12));
        REQUIRE(pr.expected_pairwise_kl >= pr.epistemic - 1e-9);
        REQUIRE(pr.epistemic >= -1e-9);
        REQUIRE(pr.aleatoric >= 0.0);
        REQUIRE(pr.aleatoric <= 1.0 + 1e-12);
    }
}

TEST_CASE("argmax of the mean is invariant to evidence scaling", "[uncertainty]") {
    Rng rng(88);
    for (int rep = 0; rep < 500; ++rep) {
        int k = 2 + rng.uniform_int(4);
        Vec e(k);
        for (double& v : e) v = rng.uniform(0.0, 20.0);
        double c = rng.uniform(0.1, 9.0);
        Vec alpha(k), alpha_scaled(k);
        for (int i = 0; i < k; ++i) {
            alpha[i] = e[i] + 1.0;
            alpha_scaled[i] = c * e[i] + 1.0;
        }
        Vec m1 = dirichlet_mean(DirichletParams{alpha});
        Vec m2 = dirichlet_mean(DirichletParams{alpha_scaled});
        REQUIRE(argmax(m1) == argmax(m2));
    }
}

TEST_CASE("sample decomposition identity", "[uncertainty]") {
    Rng rng(55);
    Mat probs(40, 3);
    for (int i = 0; i < probs.rows; ++i) {
        Vec p = rng.dirichlet(Vec{2.0, 1.0, 1.5});
        for (int k = 0; k < 3; ++k) probs(i, k) = p[k];
    }
    McDecomposition mc = mc_decomposition(probs);
    REQUIRE(mc.epistemic == Catch::Approx(mc.entropy - mc.aleatoric).margin(1e-12));
    REQUIRE(mc.epistemic >= -1e-9);

    // a single sample carries no disagreement
    Mat one(1, 3);
    one(0, 0) = 0.2;
    one(0, 1) = 0.5;
    one(0, 2) = 0.3;
    McDecomposition single = mc_decomposition(one);
    REQUIRE(std::fabs(single.epistemic) < 1e-12);
}
