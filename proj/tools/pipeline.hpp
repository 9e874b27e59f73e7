#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "attriweight/attribution.hpp"
#include "attriweight/dataset.hpp"
#include "attriweight/eval.hpp"
#include "attriweight/features.hpp"
#include "attriweight/model.hpp"
#include "attriweight/weighting.hpp"
#include "config.hpp"

namespace attriweight::cli {

/// A prerequisite artifact is absent; `tag` becomes the machine-parsable
/// stderr line (e.g. "missing:feature_store").
struct MissingArtifact : std::runtime_error {
    std::string tag;
    explicit MissingArtifact(const std::string& t, const std::string& what)
        : std::runtime_error(what), tag(t) {}
};

/// Resolves artifact locations under the configured outdir and loads them
/// with missing-prerequisite errors.
class Pipeline {
public:
    explicit Pipeline(const RunConfig& cfg);

    const RunConfig& cfg() const { return cfg_; }
    std::uint64_t seed() const { return seed_; }
    int jobs() const { return jobs_; }
    std::filesystem::path outdir() const { return outdir_; }
    std::filesystem::path command_dir(const std::string& command) const;

    // Artifact paths.
    std::filesystem::path dataset_path() const { return outdir_ / "gen-data" / "dataset.csv"; }
    std::filesystem::path splits_path() const { return outdir_ / "gen-data" / "splits.json"; }
    std::filesystem::path corruption_path() const {
        return outdir_ / "gen-data" / "corruption.csv";
    }
    std::filesystem::path checkpoint_path() const { return outdir_ / "train" / "model.ckpt"; }
    std::filesystem::path store_path(const std::string& role) const {
        return outdir_ / "extract" / (role + ".gfst");
    }
    std::filesystem::path weights_path() const;
    std::filesystem::path ground_truth_path() const {
        return outdir_ / "eval-lds" / "ground_truth.json";
    }

    // Loaders; throw MissingArtifact when the file is absent.
    LabeledDataset load_dataset() const;
    DataSplit load_splits() const;
    CorruptionRecord load_corruption() const;
    ModelCheckpoint load_ckpt() const;
    GradientFeatureStore load_store(const std::string& role) const;
    WeightVector load_weight_vector() const;
    LdsGroundTruth load_ground_truth() const;

    // Config-derived builders.
    ArchSpec arch_from_config(int input_dim, int num_classes) const;
    TrainConfig train_config() const;
    ProjectionSpec projection_for(const ParameterGrouping& grouping) const;
    WeightLearnConfig weight_learn_config() const;
    Kernel kernel_for(const GradientFeatureStore& train_store) const;

    /// One contribution matrix per row of `query_store`.
    std::vector<GroupContributionMatrix>
    contributions_for(const GradientFeatureStore& query_store,
                      const GradientFeatureStore& train_store,
                      const Eigen::MatrixXd& training_side) const;

    /// Writes manifest.json (command, seed, input hashes, outputs, config)
    /// and resolved_config.ini into the command directory.
    void write_run_metadata(const std::string& command,
                            const std::vector<std::filesystem::path>& inputs,
                            const std::vector<std::string>& outputs) const;

private:
    RunConfig cfg_;
    std::filesystem::path outdir_;
    std::uint64_t seed_;
    int jobs_;
};

void save_splits_json(const DataSplit& splits, const std::string& path);
DataSplit load_splits_json(const std::string& path);

void save_corruption_csv(const CorruptionRecord& rec, const std::string& path);
CorruptionRecord load_corruption_csv(const std::string& path);

void save_ground_truth_json(const LdsGroundTruth& gt, const std::string& path);
LdsGroundTruth load_ground_truth_json(const std::string& path);

}  // namespace attriweight::cli
