#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "attriweight/attribution.hpp"
#include "attriweight/weight_vector.hpp"
#include "attriweight/weighting.hpp"

namespace attriweight {

/// Synthetic signal-plus-noise contributions a_j = alpha_j * I + eps_j with
/// known optimal weights, the strongest ground truth for the weight learner.
struct SnrInstance {
    Eigen::VectorXd alphas;       // group signal sensitivities, >= 0
    Eigen::VectorXd sigmas;       // noise stds, > 0
    Eigen::VectorXd influence;    // true influence per example
    GroupContributionMatrix contributions;
    std::uint64_t seed = 0;
};

/// influence[n] is standard normal for a round(sparsity*N) subset of rows
/// and 0 elsewhere; noise is independent per entry with std sigma_j.
SnrInstance generate_instance(const Eigen::VectorXd& alphas, const Eigen::VectorXd& sigmas,
                              std::int64_t n_examples, double sparsity, std::uint64_t seed);

/// SNR_w = (sum_j w_j alpha_j)^2 / (sum_j w_j^2 sigma_j^2), Var(I) = 1.
double snr(const WeightVector& w, const Eigen::VectorXd& alphas,
           const Eigen::VectorXd& sigmas);

/// w*_j proportional to alpha_j / sigma_j^2, normalized to sum 1.
WeightVector optimal_weights(const Eigen::VectorXd& alphas, const Eigen::VectorXd& sigmas);

struct RecoveryReport {
    WeightVector learned;
    double cosine_to_optimal = 0.0;
    double snr_ratio = 0.0;  // snr(learned) / snr(optimal), in (0, 1]
};

/// Runs learn_weights on the instances' contribution matrices (one per
/// query) and compares against the closed-form optimum.
RecoveryReport verify_recovery(std::span<const SnrInstance> instances,
                               const WeightLearnConfig& cfg);
RecoveryReport verify_recovery(const SnrInstance& instance, const WeightLearnConfig& cfg);

/// Fresh queries sharing (alphas, sigmas, sparsity); query q draws its own
/// influence vector and noise from streams derived from (seed, q).
std::vector<SnrInstance> generate_query_set(const Eigen::VectorXd& alphas,
                                            const Eigen::VectorXd& sigmas,
                                            std::int64_t n_examples, double sparsity,
                                            int n_queries, std::uint64_t seed);

/// Instance dump: CSV "n,influence,a_1..a_M".
void save_instance_csv(const SnrInstance& instance, const std::string& path);

}  // namespace attriweight
