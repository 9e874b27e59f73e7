#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "attriweight/attribution.hpp"
#include "attriweight/dataset.hpp"
#include "attriweight/model.hpp"

namespace attriweight {

/// Retrained-subset outputs used as the correlation target of the LDS.
struct LdsGroundTruth {
    std::vector<std::vector<std::int64_t>> subsets;  // each sorted, size round(alpha*N)
    Eigen::MatrixXd outputs;                         // queries x subsets, f(x_q; theta_m)
    std::vector<std::int64_t> query_ids;
    double alpha = 0.5;
    std::uint64_t seed = 0;
};

struct EvalReport {
    std::string metric_name;
    Eigen::VectorXd per_query;
    double mean = 0.0;
    double ci95_halfwidth = 0.0;
    bool degenerate = false;  // any per-query value came from a constant vector
};

EvalReport make_report(const std::string& name, const Eigen::VectorXd& per_query,
                       bool degenerate = false);

/// Spearman rank correlation with average ranks on ties. A constant input
/// vector makes the correlation undefined; it is reported as 0 and flagged
/// through `degenerate` when provided.
double spearman(const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                bool* degenerate = nullptr);

/// Average ranks (1-based) with ties sharing their mean rank.
Eigen::VectorXd average_ranks(const Eigen::VectorXd& v);

/// Draws m_subsets seeded subsets of size round(alpha*|train_ids|), retrains
/// one model per subset, and records model_output for every query. Subset
/// retraining is spread over `jobs` threads; results are position-stable.
LdsGroundTruth build_lds_ground_truth(const LabeledDataset& ds,
                                      const std::vector<std::int64_t>& train_ids,
                                      const ArchSpec& arch, const TrainConfig& cfg,
                                      double alpha, int m_subsets,
                                      const std::vector<std::int64_t>& query_ids,
                                      std::uint64_t seed, int jobs = 1);

/// Per query: Spearman between the retrained outputs and the attribution
/// sums over each subset; reported as mean with a 95% CI half-width.
EvalReport lds(const LdsGroundTruth& gt, const std::vector<AttributionResult>& attributions);

/// AUC via the Mann-Whitney rank formula with tie correction. Scores are
/// aligned to `ids`; positives are the record's corrupted ids.
double mislabel_auc(const Eigen::VectorXd& scores, const std::vector<std::int64_t>& ids,
                    const CorruptionRecord& record);

/// One extra training step on each query's top-k proponents; the value is
/// the change in the query's log-probability.
EvalReport tail_patch(const ModelCheckpoint& ckpt, const LabeledDataset& ds,
                      const std::vector<std::int64_t>& query_ids,
                      const std::vector<AttributionResult>& attributions,
                      int top_k, double lr);

/// Fraction of the top-k attributed examples inside the ground-truth set.
double recall_at_k(const AttributionResult& attribution,
                   const std::vector<std::int64_t>& ground_truth_ids, int k);

/// Entry j = mean LDS over queries using column j of C alone.
Eigen::VectorXd per_group_lds(const LdsGroundTruth& gt,
                              const std::vector<GroupContributionMatrix>& contribs);

void save_report_json(const EvalReport& report, const std::string& path);
void save_report_csv(const EvalReport& report, const std::string& path);

}  // namespace attriweight
