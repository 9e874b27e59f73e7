#include <doctest.h>

#include <cmath>

#include "attriweight/oracle.hpp"
#include "attriweight/prng.hpp"

using namespace attriweight;

namespace {

Eigen::VectorXd vec(std::initializer_list<double> v) {
    Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
    int i = 0;
    for (double x : v) out[i++] = x;
    return out;
}

WeightVector weights(std::initializer_list<double> v) {
    WeightVector w;
    w.values = vec(v);
    for (int i = 0; i < w.values.size(); ++i) w.group_names.push_back("g" + std::to_string(i));
    return w;
}

// Uniform point on the simplex via normalized exponentials.
Eigen::VectorXd random_simplex(Prng& rng, int m) {
    Eigen::VectorXd w(m);
    for (int i = 0; i < m; ++i) w[i] = -std::log(1.0 - rng.uniform());
    return w / w.sum();
}

}  // namespace

TEST_CASE("snr closed form") {
    CHECK(snr(weights({1.0}), vec({2.0}), vec({0.5})) == doctest::Approx(16.0));
    CHECK(snr(weights({0.5, 0.5}), vec({1.0, 1.0}), vec({1.0, 1.0})) == doctest::Approx(2.0));

    // Scale invariance in w (degree-0 homogeneity).
    Prng rng(1);
    for (int t = 0; t < 20; ++t) {
        const auto alphas = vec({1.5, 0.7, 0.1});
        const auto sigmas = vec({0.5, 1.0, 2.0});
        WeightVector w = weights({0.2, 0.5, 0.3});
        const double base = snr(w, alphas, sigmas);
        w.values *= 0.1 + 5.0 * rng.uniform();
        CHECK(snr(w, alphas, sigmas) == doctest::Approx(base).epsilon(1e-12));
    }
}

TEST_CASE("optimal weights hand case, verified by grid search") {
    const auto alphas = vec({1.0, 1.0});
    const auto sigmas = vec({1.0, 2.0});  // sigma^2 = (1, 4)
    const auto w = optimal_weights(alphas, sigmas);
    CHECK(w.values[0] == doctest::Approx(0.8).epsilon(1e-12));
    CHECK(w.values[1] == doctest::Approx(0.2).epsilon(1e-12));

    // Grid over the 2-simplex at resolution 1e-3 never beats the formula.
    const double best_snr = snr(w, alphas, sigmas);
    double grid_best = 0.0, grid_arg = -1.0;
    for (int i = 0; i <= 1000; ++i) {
        const double a = static_cast<double>(i) / 1000.0;
        WeightVector cand = weights({a, 1.0 - a});
        if (a == 0.0 && sigmas[1] == 0.0) continue;
        const double s = snr(cand, alphas, sigmas);
        if (s > grid_best) {
            grid_best = s;
            grid_arg = a;
        }
    }
    CHECK(grid_best <= best_snr + 1e-9);
    CHECK(grid_arg == doctest::Approx(0.8).epsilon(1e-3));

    CHECK(optimal_weights(vec({1.0, 0.0}), vec({1.0, 3.0})).values[1] == 0.0);
    const auto sym = optimal_weights(vec({2.0, 2.0, 2.0}), vec({0.7, 0.7, 0.7}));
    CHECK((sym.values.array() - 1.0 / 3.0).abs().maxCoeff() < 1e-12);
    CHECK_THROWS_AS(optimal_weights(vec({0.0, 0.0}), vec({1.0, 1.0})),
                    std::invalid_argument);
}

TEST_CASE("optimal weights: M=3 simplex grid at 1e-2 agrees") {
    const auto alphas = vec({2.0, 1.0, 0.5});
    const auto sigmas = vec({1.0, 0.5, 2.0});
    const auto w = optimal_weights(alphas, sigmas);
    const double best = snr(w, alphas, sigmas);
    double grid_best = 0.0;
    Eigen::VectorXd grid_arg(3);
    for (int i = 0; i <= 100; ++i) {
        for (int j = 0; j <= 100 - i; ++j) {
            WeightVector cand = weights({i / 100.0, j / 100.0, (100 - i - j) / 100.0});
            if ((cand.values.array() == 0.0).all()) continue;
            const double s = snr(cand, alphas, sigmas);
            if (s > grid_best) {
                grid_best = s;
                grid_arg = cand.values;
            }
        }
    }
    CHECK(grid_best <= best + 1e-9);
    CHECK((grid_arg - w.values).lpNorm<Eigen::Infinity>() < 0.02);
}

TEST_CASE("optimal weights homogeneity") {
    const auto alphas = vec({1.2, 0.4, 0.9});
    const auto sigmas = vec({0.8, 1.3, 0.6});
    const auto base = optimal_weights(alphas, sigmas);

    const auto scaled_alpha = optimal_weights((3.7 * alphas).eval(), sigmas);
    CHECK((scaled_alpha.values - base.values).lpNorm<Eigen::Infinity>() < 1e-12);

    // sigma -> c*sigma with alpha -> c^2*alpha leaves the ratio fixed.
    const double c = 2.5;
    const auto joint = optimal_weights((c * c * alphas).eval(), (c * sigmas).eval());
    CHECK((joint.values - base.values).lpNorm<Eigen::Infinity>() < 1e-12);
}

TEST_CASE("closed-form optimum dominates random simplex points") {
    Prng rng(404);
    for (int inst = 0; inst < 50; ++inst) {
        const int m = 2 + static_cast<int>(rng.uniform_below(7));
        Eigen::VectorXd alphas(m), sigmas(m);
        for (int j = 0; j < m; ++j) {
            alphas[j] = rng.uniform() < 0.2 ? 0.0 : 3.0 * rng.uniform();
            sigmas[j] = 0.2 + 2.0 * rng.uniform();
        }
        if ((alphas.array() == 0.0).all()) alphas[0] = 1.0;
        const auto opt = optimal_weights(alphas, sigmas);
        const double best = snr(opt, alphas, sigmas);
        for (int t = 0; t < 1000; ++t) {
            WeightVector w;
            w.values = random_simplex(rng, m);
            CHECK(snr(w, alphas, sigmas) <= best + 1e-9);
        }
    }
}

TEST_CASE("instance generation matches its declared statistics") {
    const auto alphas = vec({1.0, 0.0});
    const auto sigmas = vec({0.5, 1.5});
    const auto inst = generate_instance(alphas, sigmas, 5000, 0.5, 61);

    // Column residuals have the declared stds.
    for (int j = 0; j < 2; ++j) {
        const Eigen::ArrayXd resid =
            inst.contributions.contributions.col(j).array() -
            alphas[j] * inst.influence.array();
        const double sd = std::sqrt((resid - resid.mean()).square().sum() / 5000.0);
        CHECK(sd == doctest::Approx(sigmas[j]).epsilon(0.15));
    }

    // Zero-alpha column is uncorrelated with the influence.
    const Eigen::ArrayXd col2 = inst.contributions.contributions.col(1).array();
    const Eigen::ArrayXd infl = inst.influence.array();
    const double corr =
        ((col2 - col2.mean()) * (infl - infl.mean())).sum() /
        std::sqrt((col2 - col2.mean()).square().sum() * (infl - infl.mean()).square().sum());
    CHECK(std::abs(corr) < 0.1);

    // Noiseless limit: the signal column tracks the influence.
    const auto clean = generate_instance(vec({1.0, 1.0}), vec({1e-9, 1e-9}), 2000, 0.5, 62);
    const Eigen::ArrayXd c0 = clean.contributions.contributions.col(0).array();
    const Eigen::ArrayXd ci = clean.influence.array();
    const double c_corr =
        ((c0 - c0.mean()) * (ci - ci.mean())).sum() /
        std::sqrt((c0 - c0.mean()).square().sum() * (ci - ci.mean()).square().sum());
    CHECK(c_corr > 0.9999);
}

TEST_CASE("sparsity counts nonzero influence rows exactly") {
    const auto inst = generate_instance(vec({1.0}), vec({1.0}), 10000, 0.01, 5);
    std::int64_t nonzero = 0;
    for (Eigen::Index i = 0; i < inst.influence.size(); ++i)
        if (inst.influence[i] != 0.0) ++nonzero;
    CHECK(nonzero == 100);

    CHECK_THROWS_AS(generate_instance(vec({1.0}), vec({1.0}), 100, 0.0, 5),
                    std::invalid_argument);
    CHECK_THROWS_AS(generate_instance(vec({1.0}), vec({0.0}), 100, 0.5, 5),
                    std::invalid_argument);
}

TEST_CASE("recovery on a symmetric instance stays uniform") {
    const auto alphas = vec({1.0, 1.0, 1.0, 1.0});
    const auto sigmas = vec({1.0, 1.0, 1.0, 1.0});
    const auto queries = generate_query_set(alphas, sigmas, 2000, 0.02, 8, 71);

    WeightLearnConfig cfg;
    cfg.k = 10;
    cfg.lr = 0.01;
    cfg.epochs = 10;
    const auto rep = verify_recovery(queries, cfg);
    const auto uniform = WeightVector::uniform(rep.learned.group_names);
    CHECK(weight_cosine(rep.learned, uniform) >= 0.99);
    CHECK(rep.snr_ratio > 0.0);
    CHECK(rep.snr_ratio <= 1.0 + 1e-12);
}

TEST_CASE("recovery concentrates in the noiseless single-signal limit") {
    // Group 1 measures the influence noiselessly while the others are pure
    // noise, so the optimum is exactly e1. (Shrinking every sigma jointly
    // instead would make the loss flat: the noise groups would stop
    // costing anything and nothing would push the weights anywhere.)
    const auto alphas = vec({1.0, 0.0, 0.0, 0.0});
    const auto sigmas = vec({1e-6, 1.0, 1.0, 1.0});
    const auto queries = generate_query_set(alphas, sigmas, 2000, 0.05, 20, 72);

    WeightLearnConfig cfg;
    cfg.k = 10;
    cfg.lr = 0.05;
    cfg.epochs = 300;
    const auto rep = verify_recovery(queries, cfg);
    CHECK(rep.learned.values[0] >= 0.95);
    CHECK(rep.cosine_to_optimal >= 0.95);
}
