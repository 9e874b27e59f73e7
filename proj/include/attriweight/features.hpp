#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "attriweight/dataset.hpp"
#include "attriweight/model.hpp"

namespace attriweight {

enum class ProjectionKind { Identity, Rademacher };

/// Block-diagonal projection: one independent block per parameter group,
/// so per-group weighting of projected features stays well-defined.
/// Rademacher blocks (entries +-1/sqrt(k)) are regenerated on demand from
/// (seed, group index); they are never stored.
struct ProjectionSpec {
    ProjectionKind kind = ProjectionKind::Identity;
    std::uint64_t seed = 0;
    struct Group {
        std::string name;
        int input_dim = 0;
        int output_dim = 0;
    };
    std::vector<Group> groups;

    int output_dim() const;
};

/// Identity projection matching the grouping (output = raw gradients).
ProjectionSpec identity_projection(const ParameterGrouping& grouping);

/// Rademacher projection with the same output dim for every group.
ProjectionSpec build_projection(const ParameterGrouping& grouping,
                                int target_dim_per_group, std::uint64_t seed);

/// Applies the projection to a flat gradient, block by block.
Eigen::VectorXd project_gradient(const ProjectionSpec& proj, const Eigen::VectorXd& grad);

/// Row-major N x D matrix of projected per-example gradients plus layout
/// metadata. Features are computed in f64 and narrowed once to f32, so a
/// store is byte-identical whether freshly extracted or loaded from disk.
struct GradientFeatureStore {
    std::vector<std::int64_t> example_ids;               // ascending
    std::vector<std::pair<std::string, int>> group_layout;  // (name, projected dim)
    std::vector<float> data;                             // N x D row-major

    struct Meta {
        std::string checkpoint_hash;
        std::uint64_t projection_seed = 0;
        std::string creation_params;
    } meta;

    std::int64_t rows() const { return static_cast<std::int64_t>(example_ids.size()); }
    int feature_dim() const;
    int group_offset(int group_index) const;
    const float* row(std::int64_t n) const { return data.data() + n * feature_dim(); }
    Eigen::VectorXd row_f64(std::int64_t n) const;
    /// Row index of an example id; throws if absent.
    std::int64_t row_of(std::int64_t example_id) const;
};

/// One row per id, ascending id order; each group block is that group's
/// projection applied to the group's gradient slice.
GradientFeatureStore extract_features(const ModelCheckpoint& ckpt, const LabeledDataset& ds,
                                      const std::vector<std::int64_t>& ids,
                                      const ProjectionSpec& proj);

/// Store file: magic "GFST", version u32, N u64, M u32, per-group
/// (name len u16, name, dim u32), example_ids u64[N], payload f32
/// little-endian row-major, trailing CRC32 of the payload.
void save_store(const GradientFeatureStore& store, const std::string& path);
GradientFeatureStore load_store(const std::string& path);

}  // namespace attriweight
