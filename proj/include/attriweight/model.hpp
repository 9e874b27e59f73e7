#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "attriweight/dataset.hpp"

namespace attriweight {

enum class Architecture : std::uint8_t { LogisticRegression = 0, Mlp1 = 1 };

/// Architecture hyperparameters. `hidden_splits` splits the hidden weight
/// matrix into that many column blocks (one parameter group per block of
/// input coordinates). `distractor_dim` > 0 appends a frozen parameter
/// group whose per-example gradients are synthetic noise rather than loss
/// derivatives; its scale is carried by the frozen parameter values
/// themselves so it survives checkpoint round-trips.
struct ArchSpec {
    Architecture kind = Architecture::LogisticRegression;
    int input_dim = 0;
    int num_classes = 2;
    int hidden_dim = 0;       // Mlp1 only
    int hidden_splits = 1;    // Mlp1 only, column blocks of the hidden weights
    int distractor_dim = 0;   // Mlp1 only
    double distractor_scale = 1.0;
};

struct ParameterGrouping {
    std::vector<std::pair<std::string, int>> groups;  // (name, dim), fixed order
    int total_dim = 0;

    int index_of(const std::string& name) const;
    int offset_of(int group_index) const;
};

ParameterGrouping make_grouping(const ArchSpec& arch);

struct TrainConfig {
    int epochs = 1;
    double lr = 0.1;
    int batch_size = 32;
    double weight_decay = 0.0;
    std::uint64_t seed = 0;
};

struct ModelCheckpoint {
    ArchSpec arch;
    ParameterGrouping grouping;
    Eigen::VectorXd flat_params;
    std::string train_config_hash;
};

/// Minibatch SGD on cross-entropy over the given ids; deterministic in
/// cfg.seed (init and shuffling come from fixed derived streams). Returns
/// the final checkpoint only. Distractor parameters, when present, are
/// frozen at their random initialization.
ModelCheckpoint train(const LabeledDataset& ds, const std::vector<std::int64_t>& ids,
                      const ArchSpec& arch, const TrainConfig& cfg);

/// Same procedure as train restricted to the subset.
ModelCheckpoint retrain_on_subset(const LabeledDataset& ds,
                                  const std::vector<std::int64_t>& subset_ids,
                                  const ArchSpec& arch, const TrainConfig& cfg);

/// Flat cross-entropy gradient at (x, y), partitioned by the grouping. For
/// a distractor group the block is the frozen head's synthetic noise read,
/// seeded by a hash of x, not a derivative of the loss.
Eigen::VectorXd per_example_gradient(const ModelCheckpoint& ckpt,
                                     const Eigen::VectorXd& x, int y);

/// Cross-entropy of the example.
double loss(const ModelCheckpoint& ckpt, const Eigen::VectorXd& x, int y);

/// The model output correlated by the LDS protocol: the negative loss, so
/// higher is better.
double model_output(const ModelCheckpoint& ckpt, const Eigen::VectorXd& x, int y);

/// Class-probability vector (softmax of logits).
Eigen::VectorXd predict_proba(const ModelCheckpoint& ckpt, const Eigen::VectorXd& x);

/// Argmax class, ties broken by lowest index.
int predict(const ModelCheckpoint& ckpt, const Eigen::VectorXd& x);

double accuracy(const ModelCheckpoint& ckpt, const LabeledDataset& ds,
                const std::vector<std::int64_t>& ids);

/// One plain gradient step on the mean per-example gradient of the batch.
ModelCheckpoint sgd_step(const ModelCheckpoint& ckpt,
                         const std::vector<std::pair<Eigen::VectorXd, int>>& batch,
                         double lr);

/// Binary checkpoint: magic "ATWC", version u32, arch tag u8, group table
/// (count u32, then per group: name length u16, UTF-8 name, dim u32),
/// flat params as little-endian f64.
void save_checkpoint(const ModelCheckpoint& ckpt, const std::string& path);
ModelCheckpoint load_checkpoint(const std::string& path);

}  // namespace attriweight
