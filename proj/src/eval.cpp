#include "attriweight/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <thread>

#include <nlohmann/json.hpp>

#include "attriweight/errors.hpp"
#include "attriweight/prng.hpp"

namespace attriweight {

namespace {

double pearson(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    const double ma = a.mean(), mb = b.mean();
    const Eigen::ArrayXd da = a.array() - ma, db = b.array() - mb;
    const double denom = std::sqrt(da.square().sum() * db.square().sum());
    if (denom == 0.0) return 0.0;
    return (da * db).sum() / denom;
}

}  // namespace

Eigen::VectorXd average_ranks(const Eigen::VectorXd& v) {
    const auto n = static_cast<std::size_t>(v.size());
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::sort(idx.begin(), idx.end(),
              [&v](std::size_t a, std::size_t b) { return v[static_cast<Eigen::Index>(a)] <
                                                          v[static_cast<Eigen::Index>(b)]; });
    Eigen::VectorXd ranks(v.size());
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && v[static_cast<Eigen::Index>(idx[j + 1])] ==
                                v[static_cast<Eigen::Index>(idx[i])])
            ++j;
        const double avg = 0.5 * static_cast<double>(i + j) + 1.0;  // mean of ranks i+1..j+1
        for (std::size_t t = i; t <= j; ++t)
            ranks[static_cast<Eigen::Index>(idx[t])] = avg;
        i = j + 1;
    }
    return ranks;
}

double spearman(const Eigen::VectorXd& a, const Eigen::VectorXd& b, bool* degenerate) {
    if (a.size() != b.size() || a.size() < 2)
        throw std::invalid_argument("spearman: need equal lengths >= 2");
    const bool const_a = (a.array() == a[0]).all();
    const bool const_b = (b.array() == b[0]).all();
    if (const_a || const_b) {
        if (degenerate) *degenerate = true;
        return 0.0;
    }
    if (degenerate) *degenerate = false;
    return pearson(average_ranks(a), average_ranks(b));
}

EvalReport make_report(const std::string& name, const Eigen::VectorXd& per_query,
                       bool degenerate) {
    EvalReport r;
    r.metric_name = name;
    r.per_query = per_query;
    r.degenerate = degenerate;
    const auto n = static_cast<double>(per_query.size());
    r.mean = per_query.size() > 0 ? per_query.mean() : 0.0;
    if (per_query.size() > 1) {
        const double var = (per_query.array() - r.mean).square().sum() / (n - 1.0);
        r.ci95_halfwidth = 1.96 * std::sqrt(var / n);
    }
    return r;
}

LdsGroundTruth build_lds_ground_truth(const LabeledDataset& ds,
                                      const std::vector<std::int64_t>& train_ids,
                                      const ArchSpec& arch, const TrainConfig& cfg,
                                      double alpha, int m_subsets,
                                      const std::vector<std::int64_t>& query_ids,
                                      std::uint64_t seed, int jobs) {
    if (!(alpha > 0.0 && alpha < 1.0))
        throw std::invalid_argument("build_lds_ground_truth: alpha must be in (0, 1)");
    if (m_subsets < 2)
        throw std::invalid_argument("build_lds_ground_truth: need at least 2 subsets");

    const auto subset_size = static_cast<std::int64_t>(
        std::llround(alpha * static_cast<double>(train_ids.size())));
    if (subset_size < 1)
        throw std::invalid_argument("build_lds_ground_truth: subset size rounds to 0");

    LdsGroundTruth gt;
    gt.alpha = alpha;
    gt.seed = seed;
    gt.query_ids = query_ids;
    gt.subsets.resize(static_cast<std::size_t>(m_subsets));
    gt.outputs.resize(static_cast<Eigen::Index>(query_ids.size()), m_subsets);

    for (int m = 0; m < m_subsets; ++m) {
        std::vector<std::int64_t> pool(train_ids);
        Prng rng(Prng::derive(seed, static_cast<std::uint64_t>(m)));
        rng.shuffle(pool);
        pool.resize(static_cast<std::size_t>(subset_size));
        std::sort(pool.begin(), pool.end());
        gt.subsets[static_cast<std::size_t>(m)] = std::move(pool);
    }

    const int workers = std::max(1, jobs);
    std::vector<std::thread> threads;
    std::vector<std::string> failures(static_cast<std::size_t>(m_subsets));
    auto run_range = [&](int begin, int step) {
        for (int m = begin; m < m_subsets; m += step) {
            try {
                TrainConfig sub_cfg = cfg;
                sub_cfg.seed = Prng::derive(seed, 0x100000ull + static_cast<std::uint64_t>(m));
                const ModelCheckpoint ckpt =
                    retrain_on_subset(ds, gt.subsets[static_cast<std::size_t>(m)], arch, sub_cfg);
                for (std::size_t q = 0; q < query_ids.size(); ++q) {
                    const auto id = query_ids[q];
                    gt.outputs(static_cast<Eigen::Index>(q), m) = model_output(
                        ckpt, ds.features.row(id).transpose(),
                        ds.labels[static_cast<std::size_t>(id)]);
                }
            } catch (const std::exception& e) {
                failures[static_cast<std::size_t>(m)] = e.what();
            }
        }
    };
    if (workers == 1) {
        run_range(0, 1);
    } else {
        threads.reserve(static_cast<std::size_t>(workers));
        for (int w = 0; w < workers; ++w) threads.emplace_back(run_range, w, workers);
        for (auto& t : threads) t.join();
    }
    for (int m = 0; m < m_subsets; ++m)
        if (!failures[static_cast<std::size_t>(m)].empty())
            throw std::runtime_error("build_lds_ground_truth: subset " + std::to_string(m) +
                                     " failed: " + failures[static_cast<std::size_t>(m)]);
    return gt;
}

EvalReport lds(const LdsGroundTruth& gt, const std::vector<AttributionResult>& attributions) {
    if (attributions.size() != gt.query_ids.size())
        throw std::invalid_argument("lds: one attribution per ground-truth query required");

    const int m_subsets = static_cast<int>(gt.subsets.size());
    Eigen::VectorXd values(static_cast<Eigen::Index>(attributions.size()));
    bool any_degenerate = false;
    for (std::size_t q = 0; q < attributions.size(); ++q) {
        const auto& att = attributions[q];
        Eigen::VectorXd predicted(m_subsets);
        for (int m = 0; m < m_subsets; ++m) {
            double sum = 0.0;
            for (std::int64_t id : gt.subsets[static_cast<std::size_t>(m)]) {
                const auto it = std::lower_bound(att.training_ids.begin(),
                                                 att.training_ids.end(), id);
                if (it == att.training_ids.end() || *it != id)
                    throw std::invalid_argument("lds: attribution not aligned to subset ids");
                sum += att.scores[it - att.training_ids.begin()];
            }
            predicted[m] = sum;
        }
        bool degen = false;
        values[static_cast<Eigen::Index>(q)] =
            spearman(gt.outputs.row(static_cast<Eigen::Index>(q)).transpose(), predicted,
                     &degen);
        any_degenerate = any_degenerate || degen;
    }
    return make_report("lds", values, any_degenerate);
}

double mislabel_auc(const Eigen::VectorXd& scores, const std::vector<std::int64_t>& ids,
                    const CorruptionRecord& record) {
    if (scores.size() != static_cast<Eigen::Index>(ids.size()))
        throw std::invalid_argument("mislabel_auc: scores/ids length mismatch");
    std::int64_t n_pos = 0;
    std::vector<bool> positive(ids.size(), false);
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (std::binary_search(record.corrupted_ids.begin(), record.corrupted_ids.end(),
                               ids[i])) {
            positive[i] = true;
            ++n_pos;
        }
    }
    const std::int64_t n_neg = static_cast<std::int64_t>(ids.size()) - n_pos;
    if (n_pos == 0 || n_neg == 0)
        throw std::invalid_argument("mislabel_auc: need at least one positive and one negative");

    const Eigen::VectorXd ranks = average_ranks(scores);
    double rank_sum = 0.0;
    for (std::size_t i = 0; i < ids.size(); ++i)
        if (positive[i]) rank_sum += ranks[static_cast<Eigen::Index>(i)];
    const double u = rank_sum - 0.5 * static_cast<double>(n_pos) *
                                     (static_cast<double>(n_pos) + 1.0);
    return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

EvalReport tail_patch(const ModelCheckpoint& ckpt, const LabeledDataset& ds,
                      const std::vector<std::int64_t>& query_ids,
                      const std::vector<AttributionResult>& attributions,
                      int top_k, double lr) {
    if (top_k < 1) throw std::invalid_argument("tail_patch: top_k must be >= 1");
    if (query_ids.size() != attributions.size())
        throw std::invalid_argument("tail_patch: one attribution per query required");

    Eigen::VectorXd deltas(static_cast<Eigen::Index>(query_ids.size()));
    for (std::size_t q = 0; q < query_ids.size(); ++q) {
        const auto order = ranking(attributions[q]);
        std::vector<std::pair<Eigen::VectorXd, int>> batch;
        const std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(top_k),
                                                       order.size());
        batch.reserve(take);
        for (std::size_t r = 0; r < take; ++r) {
            const auto id = order[r];
            batch.emplace_back(ds.features.row(id).transpose(),
                               ds.labels[static_cast<std::size_t>(id)]);
        }
        const ModelCheckpoint patched = sgd_step(ckpt, batch, lr);
        const auto qid = query_ids[q];
        const Eigen::VectorXd x = ds.features.row(qid).transpose();
        const int y = ds.labels[static_cast<std::size_t>(qid)];
        // log p = -loss, so the improvement is loss_before - loss_after.
        deltas[static_cast<Eigen::Index>(q)] = loss(ckpt, x, y) - loss(patched, x, y);
    }
    return make_report("tail_patch", deltas);
}

double recall_at_k(const AttributionResult& attribution,
                   const std::vector<std::int64_t>& ground_truth_ids, int k) {
    if (k < 1) throw std::invalid_argument("recall_at_k: k must be >= 1");
    std::vector<std::int64_t> gt(ground_truth_ids);
    std::sort(gt.begin(), gt.end());
    const auto order = ranking(attribution);
    const std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(k), order.size());
    std::int64_t hits = 0;
    for (std::size_t r = 0; r < take; ++r)
        if (std::binary_search(gt.begin(), gt.end(), order[r])) ++hits;
    return static_cast<double>(hits) / static_cast<double>(k);
}

Eigen::VectorXd per_group_lds(const LdsGroundTruth& gt,
                              const std::vector<GroupContributionMatrix>& contribs) {
    if (contribs.size() != gt.query_ids.size())
        throw std::invalid_argument("per_group_lds: one contribution matrix per query");
    const int m_groups = contribs.empty() ? 0 : contribs[0].num_groups();
    Eigen::VectorXd out(m_groups);
    for (int j = 0; j < m_groups; ++j) {
        std::vector<AttributionResult> single;
        single.reserve(contribs.size());
        for (const auto& c : contribs) {
            AttributionResult r;
            r.training_ids = c.training_ids;
            r.scores = c.contributions.col(j);
            r.method_tag = "group:" + c.group_names[static_cast<std::size_t>(j)];
            single.push_back(std::move(r));
        }
        out[j] = lds(gt, single).mean;
    }
    return out;
}

void save_report_json(const EvalReport& report, const std::string& path) {
    nlohmann::json j;
    j["metric"] = report.metric_name;
    j["n_queries"] = report.per_query.size();
    j["mean"] = report.mean;
    j["ci95"] = report.ci95_halfwidth;
    j["degenerate"] = report.degenerate;
    j["per_query"] = std::vector<double>(report.per_query.data(),
                                         report.per_query.data() + report.per_query.size());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("save_report_json: cannot open " + path);
    out << j.dump(2) << "\n";
}

void save_report_csv(const EvalReport& report, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("save_report_csv: cannot open " + path);
    out << "query_index," << report.metric_name << "\n";
    char buf[64];
    for (Eigen::Index i = 0; i < report.per_query.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.17g", report.per_query[i]);
        out << i << ',' << buf << "\n";
    }
}

}  // namespace attriweight
