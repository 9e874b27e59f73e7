#include "attriweight/attribution.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "attriweight/errors.hpp"
#include "attriweight/prng.hpp"

namespace attriweight {

namespace {

Eigen::MatrixXd store_as_f64(const GradientFeatureStore& store) {
    const std::int64_t n = store.rows();
    const int d = store.feature_dim();
    Eigen::MatrixXd phi(n, d);
    for (std::int64_t r = 0; r < n; ++r) {
        const float* row = store.row(r);
        for (int c = 0; c < d; ++c) phi(r, c) = static_cast<double>(row[c]);
    }
    return phi;
}

}  // namespace

AttributionResult tracin_score(const Eigen::VectorXd& query_feat,
                               const GradientFeatureStore& train_store,
                               const std::string& query_id) {
    if (query_feat.size() != train_store.feature_dim())
        throw std::invalid_argument("tracin_score: query feature layout mismatch");
    AttributionResult res;
    res.query_id = query_id;
    res.training_ids = train_store.example_ids;
    res.method_tag = "tracin";
    res.scores.resize(train_store.rows());
    for (std::int64_t n = 0; n < train_store.rows(); ++n) {
        const float* row = train_store.row(n);
        double acc = 0.0;
        for (int d = 0; d < query_feat.size(); ++d)
            acc += query_feat[d] * static_cast<double>(row[d]);
        res.scores[n] = acc;
    }
    return res;
}

Kernel build_trak_kernel(const GradientFeatureStore& train_store, double lambda) {
    if (!(lambda > 0.0))
        throw std::invalid_argument("build_trak_kernel: lambda must be > 0");
    const Eigen::MatrixXd phi = store_as_f64(train_store);
    const int d = train_store.feature_dim();
    Eigen::MatrixXd gram = phi.transpose() * phi;
    gram.diagonal().array() += lambda;

    Eigen::LLT<Eigen::MatrixXd> llt(gram);
    if (llt.info() != Eigen::Success)
        throw NumericalError("build_trak_kernel: Cholesky failed; lambda too small "
                             "for the conditioning of Phi^T Phi");
    Kernel k;
    k.kind = KernelKind::TrakInverse;
    k.lambda = lambda;
    k.matrix = llt.solve(Eigen::MatrixXd::Identity(d, d));
    // The solve of a symmetric system can drift off symmetry at roundoff level.
    k.matrix = 0.5 * (k.matrix + k.matrix.transpose()).eval();
    return k;
}

Eigen::MatrixXd precompute_training_side(const GradientFeatureStore& train_store,
                                         const Kernel& kernel) {
    Eigen::MatrixXd phi = store_as_f64(train_store);
    if (kernel.kind == KernelKind::Identity) return phi;
    if (kernel.matrix.rows() != train_store.feature_dim())
        throw std::invalid_argument("precompute_training_side: kernel dimension mismatch");
    return phi * kernel.matrix;  // row n = (K g_n)^T since K is symmetric
}

GroupContributionMatrix group_contributions(const Eigen::VectorXd& query_feat,
                                            const Eigen::MatrixXd& training_side,
                                            const GradientFeatureStore& train_store) {
    if (query_feat.size() != train_store.feature_dim() ||
        training_side.cols() != train_store.feature_dim() ||
        training_side.rows() != train_store.rows())
        throw std::invalid_argument("group_contributions: layout mismatch");

    GroupContributionMatrix c;
    c.training_ids = train_store.example_ids;
    const int m = static_cast<int>(train_store.group_layout.size());
    c.contributions.resize(training_side.rows(), m);
    int off = 0;
    for (int j = 0; j < m; ++j) {
        const int dim = train_store.group_layout[static_cast<std::size_t>(j)].second;
        c.group_names.push_back(train_store.group_layout[static_cast<std::size_t>(j)].first);
        c.contributions.col(j) =
            training_side.middleCols(off, dim) * query_feat.segment(off, dim);
        off += dim;
    }
    return c;
}

AttributionResult weighted_score(const GroupContributionMatrix& contribs,
                                 const WeightVector& w, const std::string& query_id) {
    if (w.size() != contribs.num_groups())
        throw std::invalid_argument("weighted_score: weight dimension mismatch");
    AttributionResult res;
    res.query_id = query_id;
    res.training_ids = contribs.training_ids;
    res.method_tag = "weighted";
    res.scores = contribs.contributions * w.values;
    return res;
}

Eigen::VectorXd self_influence(const GradientFeatureStore& train_store, const Kernel& kernel,
                               const std::optional<WeightVector>& w, int normalize_top_t,
                               Eigen::VectorXd* raw_out) {
    if (normalize_top_t < 1)
        throw std::invalid_argument("self_influence: normalize_top_t must be >= 1");
    const std::int64_t n = train_store.rows();
    const int m = static_cast<int>(train_store.group_layout.size());
    Eigen::VectorXd weights = w ? w->values
                                : Eigen::VectorXd::Constant(m, 1.0 / static_cast<double>(m));
    if (weights.size() != m)
        throw std::invalid_argument("self_influence: weight dimension mismatch");

    // Query-side features with each group block scaled by its weight.
    Eigen::MatrixXd q = store_as_f64(train_store);
    int off = 0;
    for (int j = 0; j < m; ++j) {
        const int dim = train_store.group_layout[static_cast<std::size_t>(j)].second;
        q.middleCols(off, dim) *= weights[j];
        off += dim;
    }
    const Eigen::MatrixXd t = precompute_training_side(train_store, kernel);
    const Eigen::MatrixXd scores = q * t.transpose();  // scores(i, n) = tau(x_i, x^n; w)

    const int top_t = static_cast<int>(std::min<std::int64_t>(normalize_top_t, n));
    Eigen::VectorXd out(n);
    if (raw_out) *raw_out = scores.diagonal();
    std::vector<double> row(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) {
        for (std::int64_t c = 0; c < n; ++c) row[static_cast<std::size_t>(c)] = scores(i, c);
        std::nth_element(row.begin(), row.begin() + (top_t - 1), row.end(),
                         std::greater<double>());
        double denom = 0.0;
        for (int c = 0; c < top_t; ++c) denom += row[static_cast<std::size_t>(c)];
        out[i] = std::abs(denom) < 1e-12 ? 0.0 : scores(i, i) / denom;
    }
    return out;
}

GroupContributionMatrix inject_score_noise(const GroupContributionMatrix& contribs,
                                           double scale_multiplier, std::uint64_t seed) {
    if (scale_multiplier < 0.0)
        throw std::invalid_argument("inject_score_noise: scale must be >= 0");
    if (scale_multiplier == 0.0) return contribs;

    GroupContributionMatrix out = contribs;
    const std::int64_t n = contribs.rows();
    Prng rng(seed);
    for (int j = 0; j < contribs.num_groups(); ++j) {
        const double mean = contribs.contributions.col(j).mean();
        const double var =
            (contribs.contributions.col(j).array() - mean).square().sum() /
            static_cast<double>(n);
        const double noise_std = scale_multiplier * std::sqrt(var);
        for (std::int64_t i = 0; i < n; ++i)
            out.contributions(i, j) += noise_std * rng.normal();
    }
    return out;
}

std::vector<std::int64_t> ranking(const AttributionResult& result) {
    std::vector<std::int64_t> idx(static_cast<std::size_t>(result.scores.size()));
    std::iota(idx.begin(), idx.end(), std::int64_t{0});
    std::sort(idx.begin(), idx.end(), [&result](std::int64_t a, std::int64_t b) {
        if (result.scores[a] != result.scores[b]) return result.scores[a] > result.scores[b];
        return result.training_ids[static_cast<std::size_t>(a)] <
               result.training_ids[static_cast<std::size_t>(b)];
    });
    std::vector<std::int64_t> ids;
    ids.reserve(idx.size());
    for (std::int64_t i : idx) ids.push_back(result.training_ids[static_cast<std::size_t>(i)]);
    return ids;
}

void save_scores_csv(const AttributionResult& result, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("save_scores_csv: cannot open " + path);
    out << "train_id,score\n";
    char buf[64];
    for (std::int64_t n = 0; n < result.scores.size(); ++n) {
        std::snprintf(buf, sizeof buf, "%.17g", result.scores[n]);
        out << result.training_ids[static_cast<std::size_t>(n)] << ',' << buf << "\n";
    }
}

void save_ranking_csv(const AttributionResult& result, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("save_ranking_csv: cannot open " + path);
    out << "rank,train_id,score\n";
    const auto order = ranking(result);
    char buf[64];
    for (std::size_t r = 0; r < order.size(); ++r) {
        const auto it = std::lower_bound(result.training_ids.begin(),
                                         result.training_ids.end(), order[r]);
        const auto row = static_cast<std::int64_t>(it - result.training_ids.begin());
        std::snprintf(buf, sizeof buf, "%.17g", result.scores[row]);
        out << (r + 1) << ',' << order[r] << ',' << buf << "\n";
    }
}

}  // namespace attriweight
