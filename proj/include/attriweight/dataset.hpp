#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace attriweight {

/// In-memory dataset: one feature row, label, and stable id per example.
/// Ids are contiguous from 0 and index directly into rows.
struct LabeledDataset {
    Eigen::MatrixXd features;                   // N x d
    std::vector<int> labels;                    // length N, in [0, num_classes)
    std::optional<Eigen::MatrixXi> factor_labels;  // N x F latent factor indices
    std::vector<std::int64_t> ids;              // 0..N-1

    std::int64_t size() const { return static_cast<std::int64_t>(labels.size()); }
    int dim() const { return static_cast<int>(features.cols()); }
    int num_classes() const;
};

/// Three disjoint data roles: model training, weight learning, evaluation.
struct DataSplit {
    std::vector<std::int64_t> train_ids;
    std::vector<std::int64_t> weight_ids;
    std::vector<std::int64_t> eval_ids;
};

struct CorruptionRecord {
    std::vector<std::int64_t> corrupted_ids;           // sorted
    std::map<std::int64_t, int> original_labels;
    double corruption_fraction = 0.0;
};

/// Isotropic Gaussian blobs, one per class. Class means are seeded random
/// unit vectors scaled by `separation`; per-coordinate noise is standard
/// normal. Bit-identical for a fixed seed.
LabeledDataset generate_gaussian_classes(int num_classes, int per_class, int dim,
                                         double separation, std::uint64_t seed);

/// Two-factor dataset. The first dim_a coordinates carry factor a's class
/// mean, the next dim_b carry factor b's; label = a * factors_b + b and
/// factor_labels stores (a, b) per row. Means are unit vectors scaled by
/// kFactorMeanScale; noise std is kFactorNoiseStd per coordinate.
LabeledDataset generate_factor_dataset(int factors_a, int factors_b, int per_cell,
                                       int dim_a, int dim_b, std::uint64_t seed);

inline constexpr double kFactorMeanScale = 3.0;
inline constexpr double kFactorNoiseStd = 0.5;

/// The per-category mean sub-vectors used by generate_factor_dataset,
/// regenerable from the same arguments (rows: categories of that factor).
std::pair<Eigen::MatrixXd, Eigen::MatrixXd>
factor_means(int factors_a, int factors_b, int dim_a, int dim_b, std::uint64_t seed);

/// Relabels round(fraction * |ids|) examples among `ids` with a uniformly
/// chosen different label. Returns the modified copy plus the record.
std::pair<LabeledDataset, CorruptionRecord>
corrupt_labels_subset(const LabeledDataset& ds, const std::vector<std::int64_t>& ids,
                      double fraction, std::uint64_t seed);

/// corrupt_labels over the whole dataset.
std::pair<LabeledDataset, CorruptionRecord>
corrupt_labels(const LabeledDataset& ds, double fraction, std::uint64_t seed);

/// Seeded disjoint train / weight-learning / eval id sets.
DataSplit make_splits(const LabeledDataset& ds, std::int64_t n_train,
                      std::int64_t n_weight, std::int64_t n_eval, std::uint64_t seed);

/// CSV with header id,label,f0..f{d-1}[,fa0..]; 17-significant-digit
/// decimals so features round-trip to the exact double.
void save_csv(const LabeledDataset& ds, const std::string& path);
LabeledDataset load_csv(const std::string& path);

}  // namespace attriweight
