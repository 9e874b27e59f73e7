#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "attriweight/attribution.hpp"
#include "attriweight/dataset.hpp"
#include "attriweight/errors.hpp"
#include "attriweight/eval.hpp"
#include "attriweight/prng.hpp"

using namespace attriweight;

namespace {

// Store with explicit rows and a given group layout.
GradientFeatureStore make_store(const Eigen::MatrixXd& rows,
                                const std::vector<std::pair<std::string, int>>& layout) {
    GradientFeatureStore s;
    s.group_layout = layout;
    s.example_ids.resize(static_cast<std::size_t>(rows.rows()));
    for (std::int64_t i = 0; i < rows.rows(); ++i) s.example_ids[static_cast<std::size_t>(i)] = i;
    s.data.resize(static_cast<std::size_t>(rows.size()));
    for (std::int64_t r = 0; r < rows.rows(); ++r)
        for (int c = 0; c < rows.cols(); ++c)
            s.data[static_cast<std::size_t>(r * rows.cols() + c)] =
                static_cast<float>(rows(r, c));
    return s;
}

GradientFeatureStore random_store(std::int64_t n, const std::vector<int>& group_dims,
                                  std::uint64_t seed) {
    int d = 0;
    std::vector<std::pair<std::string, int>> layout;
    for (std::size_t j = 0; j < group_dims.size(); ++j) {
        layout.emplace_back("g" + std::to_string(j), group_dims[j]);
        d += group_dims[j];
    }
    Prng rng(seed);
    Eigen::MatrixXd rows(n, d);
    for (std::int64_t r = 0; r < n; ++r)
        for (int c = 0; c < d; ++c) rows(r, c) = rng.normal();
    return make_store(rows, layout);
}

const std::vector<std::pair<std::string, int>> kTwoSingleton = {{"g0", 1}, {"g1", 1}};

}  // namespace

TEST_CASE("tracin hand case: g = (1,0),(0,1),(1,1), query (2,1)") {
    Eigen::MatrixXd rows(3, 2);
    rows << 1, 0, 0, 1, 1, 1;
    const auto store = make_store(rows, kTwoSingleton);
    Eigen::VectorXd q(2);
    q << 2, 1;
    const auto res = tracin_score(q, store);
    CHECK(res.scores[0] == doctest::Approx(2.0));
    CHECK(res.scores[1] == doctest::Approx(1.0));
    CHECK(res.scores[2] == doctest::Approx(3.0));

    const auto zero = tracin_score(Eigen::VectorXd::Zero(2), store);
    CHECK(zero.scores.lpNorm<Eigen::Infinity>() == 0.0);

    // Query equal to a training row scores its own squared norm there.
    const auto self = tracin_score(store.row_f64(2), store);
    CHECK(self.scores[2] == doctest::Approx(2.0));
    CHECK(self.scores[2] >= 0.0);
}

TEST_CASE("trak kernel: zero features give I/lambda; sweep extremes stay SPD") {
    const auto zero_store = make_store(Eigen::MatrixXd::Zero(4, 3),
                                       {{"g0", 2}, {"g1", 1}});
    const auto k = build_trak_kernel(zero_store, 2.0);
    CHECK((k.matrix - 0.5 * Eigen::MatrixXd::Identity(3, 3)).lpNorm<Eigen::Infinity>() < 1e-14);

    const auto store = random_store(40, {6, 10}, 3);
    for (const double lambda : {5e-3, 50.0}) {
        const auto kernel = build_trak_kernel(store, lambda);
        CHECK((kernel.matrix - kernel.matrix.transpose()).lpNorm<Eigen::Infinity>() < 1e-12);
        Eigen::LLT<Eigen::MatrixXd> llt(kernel.matrix);
        CHECK(llt.info() == Eigen::Success);
    }
    CHECK_THROWS_AS(build_trak_kernel(store, 0.0), std::invalid_argument);
}

TEST_CASE("trak kernel inverts the regularized gram matrix") {
    const auto store = random_store(30, {8, 8}, 5);  // D = 16
    const double lambda = 0.5;
    const auto kernel = build_trak_kernel(store, lambda);

    Eigen::MatrixXd phi(store.rows(), store.feature_dim());
    for (std::int64_t r = 0; r < store.rows(); ++r) phi.row(r) = store.row_f64(r).transpose();
    Eigen::MatrixXd gram = phi.transpose() * phi;
    gram.diagonal().array() += lambda;
    const Eigen::MatrixXd residual =
        gram * kernel.matrix - Eigen::MatrixXd::Identity(16, 16);
    CHECK(residual.lpNorm<Eigen::Infinity>() < 1e-8);
}

TEST_CASE("training side precompute: identity passthrough and 1/lambda scaling") {
    const auto store = random_store(10, {4, 4}, 7);
    Kernel id;
    const auto t_id = precompute_training_side(store, id);
    for (std::int64_t r = 0; r < store.rows(); ++r)
        CHECK(t_id.row(r) == store.row_f64(r).transpose());

    const auto zero_store = make_store(Eigen::MatrixXd::Zero(4, 3), {{"g0", 3}});
    // With zero training features the kernel is I/lambda, so any matrix fed
    // through it just scales.
    const auto kernel = build_trak_kernel(zero_store, 4.0);
    Eigen::MatrixXd data(4, 3);
    data << 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12;
    const auto scaled = data * kernel.matrix;
    CHECK((scaled - data / 4.0).lpNorm<Eigen::Infinity>() < 1e-12);
}

TEST_CASE("group contributions decompose the score") {
    Eigen::MatrixXd rows(3, 2);
    rows << 1, 0, 0, 1, 1, 1;
    const auto store = make_store(rows, kTwoSingleton);
    Eigen::VectorXd q(2);
    q << 2, 1;
    Kernel id;
    const auto t = precompute_training_side(store, id);
    const auto c = group_contributions(q, t, store);

    CHECK(c.contributions(0, 0) == doctest::Approx(2.0));
    CHECK(c.contributions(0, 1) == doctest::Approx(0.0));
    CHECK(c.contributions(1, 0) == doctest::Approx(0.0));
    CHECK(c.contributions(1, 1) == doctest::Approx(1.0));
    CHECK(c.contributions(2, 0) == doctest::Approx(2.0));
    CHECK(c.contributions(2, 1) == doctest::Approx(1.0));

    // Row sums reproduce the unweighted scores.
    const auto direct = tracin_score(q, store);
    CHECK((c.row_sums() - direct.scores).lpNorm<Eigen::Infinity>() <
          1e-10 * direct.scores.lpNorm<Eigen::Infinity>());

    // M = 1: the single column is the full score vector.
    const auto single_store = make_store(rows, {{"all", 2}});
    const auto c1 = group_contributions(q, precompute_training_side(single_store, id),
                                        single_store);
    CHECK((c1.contributions.col(0) - direct.scores).lpNorm<Eigen::Infinity>() < 1e-12);
}

TEST_CASE("weighted score hand case and ranking invariance under uniform weights") {
    GroupContributionMatrix c;
    c.contributions.resize(3, 2);
    c.contributions << 2, 0, 0, 1, 2, 1;
    c.training_ids = {0, 1, 2};
    c.group_names = {"g0", "g1"};

    WeightVector w;
    w.group_names = c.group_names;
    w.values.resize(2);
    w.values << 0.75, 0.25;
    const auto res = weighted_score(c, w);
    CHECK(res.scores[0] == doctest::Approx(1.5));
    CHECK(res.scores[1] == doctest::Approx(0.25));
    CHECK(res.scores[2] == doctest::Approx(1.75));

    // One-hot weights pick out a column.
    w.values << 0.0, 1.0;
    CHECK((weighted_score(c, w).scores - c.contributions.col(1)).lpNorm<Eigen::Infinity>() ==
          0.0);
}

TEST_CASE("uniform weights reproduce the unweighted ranking exactly") {
    const auto store = random_store(200, {4, 4, 4, 4, 4, 4, 4, 4}, 11);  // M = 8
    Kernel id;
    const auto t = precompute_training_side(store, id);
    Prng rng(12);
    for (int trial = 0; trial < 5; ++trial) {
        Eigen::VectorXd q(store.feature_dim());
        for (int i = 0; i < q.size(); ++i) q[i] = rng.normal();
        const auto c = group_contributions(q, t, store);

        AttributionResult unweighted;
        unweighted.training_ids = c.training_ids;
        unweighted.scores = c.row_sums();
        const auto uniform = WeightVector::uniform(c.group_names);
        const auto weighted = weighted_score(c, uniform);
        CHECK(ranking(weighted) == ranking(unweighted));
    }
}

TEST_CASE("two-path equivalence: weighted contributions equal direct Diag(w) K scoring") {
    const auto store = random_store(50, {5, 7, 3}, 21);
    const auto kernel = build_trak_kernel(store, 0.7);
    const auto t = precompute_training_side(store, kernel);

    Prng rng(22);
    Eigen::VectorXd q(store.feature_dim());
    for (int i = 0; i < q.size(); ++i) q[i] = rng.normal();
    WeightVector w;
    w.group_names = {"g0", "g1", "g2"};
    w.values.resize(3);
    w.values << 0.6, 0.3, 0.1;

    const auto via_contribs = weighted_score(group_contributions(q, t, store), w);

    // Direct evaluation: scale the query blocks by w, then q^T K g_n.
    Eigen::VectorXd wq = q;
    wq.segment(0, 5) *= w.values[0];
    wq.segment(5, 7) *= w.values[1];
    wq.segment(12, 3) *= w.values[2];
    for (std::int64_t n = 0; n < store.rows(); ++n) {
        const double direct = wq.dot(kernel.matrix * store.row_f64(n));
        CHECK(via_contribs.scores[n] ==
              doctest::Approx(direct).epsilon(1e-10));
    }
}

TEST_CASE("large-lambda TRAK ranking collapses to TracIn") {
    const auto store = random_store(200, {6, 6}, 31);
    Eigen::MatrixXd phi(store.rows(), store.feature_dim());
    for (std::int64_t r = 0; r < store.rows(); ++r) phi.row(r) = store.row_f64(r).transpose();
    const double lambda = 1e6 * (phi.transpose() * phi).trace();
    const auto kernel = build_trak_kernel(store, lambda);
    const auto t = precompute_training_side(store, kernel);

    Prng rng(32);
    Eigen::VectorXd q(store.feature_dim());
    for (int i = 0; i < q.size(); ++i) q[i] = rng.normal();

    const auto trak_scores = group_contributions(q, t, store).row_sums();
    const auto tracin = tracin_score(q, store);
    CHECK(spearman(trak_scores, tracin.scores) == doctest::Approx(1.0));
}

TEST_CASE("self influence: identity kernel diagonal and uniform normalization") {
    const auto store = random_store(40, {3, 5}, 41);
    Kernel id;
    Eigen::VectorXd raw;
    const auto norm = self_influence(store, id, std::nullopt, 10, &raw);

    for (std::int64_t i = 0; i < store.rows(); ++i) {
        const double expected = store.row_f64(i).squaredNorm() / 2.0;  // M = 2
        CHECK(raw[i] == doctest::Approx(expected).epsilon(1e-10));
        CHECK(raw[i] >= 0.0);
    }

    // All rows identical, t = N: every normalized value is 1/N.
    Eigen::MatrixXd same(8, 2);
    for (int r = 0; r < 8; ++r) same.row(r) << 1.0, 2.0;
    const auto same_store = make_store(same, kTwoSingleton);
    const auto n = self_influence(same_store, id, std::nullopt, 8);
    for (int i = 0; i < 8; ++i) CHECK(n[i] == doctest::Approx(1.0 / 8.0));
}

TEST_CASE("score noise injection: identity at s=0, deterministic, correct scale") {
    GroupContributionMatrix c;
    const std::int64_t n = 4000;
    c.contributions.resize(n, 3);  // 12000 entries >= 1e4
    Prng rng(51);
    for (std::int64_t i = 0; i < n; ++i) {
        c.contributions(i, 0) = 2.0 * rng.normal();
        c.contributions(i, 1) = 0.5 * rng.normal() + 1.0;
        c.contributions(i, 2) = 5.0 * rng.normal();
    }
    c.training_ids.resize(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) c.training_ids[static_cast<std::size_t>(i)] = i;
    c.group_names = {"a", "b", "c"};

    const auto untouched = inject_score_noise(c, 0.0, 9);
    CHECK(untouched.contributions == c.contributions);

    const auto noisy1 = inject_score_noise(c, 1.0, 9);
    const auto noisy2 = inject_score_noise(c, 1.0, 9);
    CHECK(noisy1.contributions == noisy2.contributions);

    for (int j = 0; j < 3; ++j) {
        const Eigen::ArrayXd col = c.contributions.col(j).array();
        const double sigma = std::sqrt((col - col.mean()).square().sum() / n);
        const Eigen::ArrayXd diff =
            (noisy1.contributions.col(j) - c.contributions.col(j)).array();
        const double noise_std = std::sqrt((diff - diff.mean()).square().sum() / n);
        CHECK(noise_std == doctest::Approx(sigma).epsilon(0.10));
    }
}

TEST_CASE("layout mismatches are rejected") {
    const auto store = random_store(10, {4, 4}, 61);
    Eigen::VectorXd bad_q(5);
    bad_q.setZero();
    CHECK_THROWS_AS(tracin_score(bad_q, store), std::invalid_argument);

    Kernel id;
    const auto t = precompute_training_side(store, id);
    CHECK_THROWS_AS(group_contributions(bad_q, t, store), std::invalid_argument);

    GroupContributionMatrix c;
    c.contributions = Eigen::MatrixXd::Zero(10, 2);
    c.training_ids.resize(10);
    c.group_names = {"g0", "g1"};
    WeightVector w3;
    w3.values = Eigen::VectorXd::Ones(3) / 3.0;
    w3.group_names = {"a", "b", "c"};
    CHECK_THROWS_AS(weighted_score(c, w3), std::invalid_argument);
}
