#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "attriweight/attribution.hpp"
#include "attriweight/dataset.hpp"
#include "attriweight/weight_vector.hpp"

namespace attriweight {

enum class LossVariant { TopK, SupervisedAug, BottomK, TopKMinusBottomK, NoNorm };

struct WeightLearnConfig {
    int k = 10;               // pseudo-positive count
    double lambda_reg = 0.0;  // decoupled weight decay on the raw logits
    double lr = 0.01;
    int epochs = 10;
    LossVariant variant = LossVariant::TopK;
    std::uint64_t seed = 0;
};

/// Pre-softmax logits.
struct RawWeights {
    Eigen::VectorXd raw;
};

WeightVector softmax_weights(const Eigen::VectorXd& raw,
                             const std::vector<std::string>& names);

/// Self-supervised top-k loss: -(mean of the k largest weighted scores) /
/// ||S||_2 with S = C w. Ties in the top-k selection break by ascending
/// training id; if ||S||_2 < 1e-12 the loss is defined as 0 and flagged
/// through `degenerate`.
double ssl_loss(const GroupContributionMatrix& contribs, const WeightVector& w, int k,
                bool* degenerate = nullptr);

/// Analytic gradient of ssl_loss composed with softmax, w.r.t. the raw
/// logits. The top-k index set is held fixed at the current iterate.
Eigen::VectorXd ssl_loss_gradient(const GroupContributionMatrix& contribs,
                                  const RawWeights& raw, int k);

/// The ablation losses of the study: SupervisedAug needs contribs with an
/// attached positive id; BottomK flips to the k smallest scores; the gap
/// variant subtracts them; NoNorm drops the l2 denominator.
double variant_loss(const GroupContributionMatrix& contribs, const WeightVector& w,
                    const WeightLearnConfig& cfg);

/// Algorithm: for each epoch, one adaptive-moment step per query (top-k
/// re-selected from the current weights each step), decoupled weight decay
/// lambda_reg on the raw logits, zero initialization. Returns softmax(raw).
WeightVector learn_weights(std::span<const GroupContributionMatrix> contribs,
                           const WeightLearnConfig& cfg);

/// Feature-space jitter of a stored example, with the source attached as
/// the pseudo-positive.
struct AugmentedQuery {
    Eigen::VectorXd features;
    std::int64_t positive_id = -1;
};
AugmentedQuery make_augmented_query(const LabeledDataset& ds, std::int64_t id,
                                    double noise_std, std::uint64_t seed);

struct SweepCell {
    int k = 0;
    double lambda_reg = 0.0;
    std::optional<WeightVector> weights;   // absent if the cell failed
    double selector_value = 0.0;
    std::string error;
};

struct SweepResult {
    std::vector<SweepCell> cells;
    int best_cell = -1;

    const WeightVector& best_weights() const;
    int best_k() const { return cells[static_cast<std::size_t>(best_cell)].k; }
    double best_lambda() const { return cells[static_cast<std::size_t>(best_cell)].lambda_reg; }
};

/// Trains one weight vector per (k, lambda') grid point and keeps the one
/// the selector scores highest. Per-cell failures are recorded, not fatal.
/// Cells are independent and run on `jobs` threads; results are
/// position-stable, so the outcome does not depend on scheduling.
SweepResult sweep(std::span<const GroupContributionMatrix> contribs,
                  const std::vector<int>& k_grid, const std::vector<double>& lambda_grid,
                  const WeightLearnConfig& base_cfg,
                  const std::function<double(const WeightVector&)>& selector, int jobs = 1);

double weight_cosine(const WeightVector& a, const WeightVector& b);

/// Text format: '# cfg ...' comment line, then one 'group_name<TAB>weight'
/// line per group; round-trips weights to 1e-12 (17 significant digits).
void save_weights(const WeightVector& w, const std::string& path,
                  const std::string& config_comment = "");
WeightVector load_weights(const std::string& path);

}  // namespace attriweight
