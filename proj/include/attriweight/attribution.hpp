#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "attriweight/features.hpp"
#include "attriweight/weight_vector.hpp"

namespace attriweight {

enum class KernelKind { Identity, TrakInverse };

/// Similarity metric between gradient features. TrakInverse holds the
/// explicit inverse of (Phi^T Phi + lambda I).
struct Kernel {
    KernelKind kind = KernelKind::Identity;
    double lambda = 0.0;
    Eigen::MatrixXd matrix;  // D x D, present iff TrakInverse
};

/// Per-query score over all training examples, aligned to training_ids.
struct AttributionResult {
    std::string query_id;
    std::vector<std::int64_t> training_ids;
    Eigen::VectorXd scores;
    std::string method_tag;
};

/// C[n, j] = training example n's group-j contribution to one query's
/// score; weighted scores are C * w.
struct GroupContributionMatrix {
    Eigen::MatrixXd contributions;  // N x M
    std::vector<std::int64_t> training_ids;
    std::vector<std::string> group_names;
    std::optional<std::int64_t> positive_id;  // attached pseudo-positive (SupervisedAug)

    std::int64_t rows() const { return contributions.rows(); }
    int num_groups() const { return static_cast<int>(contributions.cols()); }
    /// Unweighted score vector: row sums of C.
    Eigen::VectorXd row_sums() const { return contributions.rowwise().sum(); }
};

/// Plain gradient dot products against every training row.
AttributionResult tracin_score(const Eigen::VectorXd& query_feat,
                               const GradientFeatureStore& train_store,
                               const std::string& query_id = "");

/// Inverse of (Phi^T Phi + lambda I) via Cholesky; throws NumericalError
/// if the factorization fails.
Kernel build_trak_kernel(const GradientFeatureStore& train_store, double lambda);

/// Row n = K * g(x^n); with the Identity kernel this is the (upcast)
/// feature matrix itself. Reused across all queries.
Eigen::MatrixXd precompute_training_side(const GradientFeatureStore& train_store,
                                         const Kernel& kernel);

GroupContributionMatrix group_contributions(const Eigen::VectorXd& query_feat,
                                            const Eigen::MatrixXd& training_side,
                                            const GradientFeatureStore& train_store);

AttributionResult weighted_score(const GroupContributionMatrix& contribs,
                                 const WeightVector& w,
                                 const std::string& query_id = "");

/// Normalized self-influence: raw tau(x_i, x_i; w) divided by the sum of
/// the top-t entries of that example's own score row. Entries whose top-t
/// sum is below 1e-12 in magnitude come back as 0. `raw_out`, when given,
/// receives the unnormalized diagonal.
Eigen::VectorXd self_influence(const GradientFeatureStore& train_store, const Kernel& kernel,
                               const std::optional<WeightVector>& w, int normalize_top_t,
                               Eigen::VectorXd* raw_out = nullptr);

/// Adds per-column Gaussian noise of std (scale_multiplier * column std).
GroupContributionMatrix inject_score_noise(const GroupContributionMatrix& contribs,
                                           double scale_multiplier, std::uint64_t seed);

/// Training ids ordered by descending score, ties by ascending id.
std::vector<std::int64_t> ranking(const AttributionResult& result);

/// CSV export: "train_id,score" sorted by id.
void save_scores_csv(const AttributionResult& result, const std::string& path);
/// CSV export: "rank,train_id,score" in ranking order.
void save_ranking_csv(const AttributionResult& result, const std::string& path);

}  // namespace attriweight
