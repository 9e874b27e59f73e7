#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <nlohmann/json.hpp>

#include "attriweight/errors.hpp"
#include "attriweight/oracle.hpp"
#include "attriweight/prng.hpp"
#include "pipeline.hpp"

namespace attriweight::cli {
namespace {

constexpr std::uint64_t kDatasetStream = 0x64617461ull;
constexpr std::uint64_t kSplitStream = 0x73706c74ull;
constexpr std::uint64_t kCorruptStream = 0x63727074ull;
constexpr std::uint64_t kLdsStream = 0x6c647367ull;
constexpr std::uint64_t kAugStream = 0x61756771ull;
constexpr std::uint64_t kTailRandomStream = 0x74706174ull;
constexpr std::uint64_t kRecallStream = 0x7263616cull;
constexpr std::uint64_t kNoiseStream = 0x6e6f6973ull;
constexpr std::uint64_t kOracleStream = 0x6f72636cull;

void write_json(const nlohmann::json& j, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path.string());
    out << j.dump(2) << "\n";
}

nlohmann::json report_json(const EvalReport& rep) {
    nlohmann::json j;
    j["metric"] = rep.metric_name;
    j["n_queries"] = rep.per_query.size();
    j["mean"] = rep.mean;
    j["ci95"] = rep.ci95_halfwidth;
    j["degenerate"] = rep.degenerate;
    j["per_query"] = std::vector<double>(rep.per_query.data(),
                                         rep.per_query.data() + rep.per_query.size());
    return j;
}

nlohmann::json weights_json(const WeightVector& w) {
    nlohmann::json j = nlohmann::json::object();
    for (int i = 0; i < w.size(); ++i) j[w.group_names[static_cast<std::size_t>(i)]] = w.values[i];
    return j;
}

std::string weights_comment(const Pipeline& p) {
    const auto& c = p.cfg();
    return "k=" + c.get_string("weighting", "k") +
           " lambda_reg=" + c.get_string("weighting", "lambda_reg") +
           " lr=" + c.get_string("weighting", "lr") +
           " epochs=" + c.get_string("weighting", "epochs") +
           " loss_variant=" + c.get_string("weighting", "loss_variant") +
           " seed=" + c.get_string("global", "seed");
}

// Unweighted scores are the row sums of the contribution matrix, so the
// weighted and unweighted paths share one decomposition.
std::vector<AttributionResult>
unweighted_results(const std::vector<GroupContributionMatrix>& contribs,
                   const std::string& tag) {
    std::vector<AttributionResult> out;
    out.reserve(contribs.size());
    for (const auto& c : contribs) {
        AttributionResult r;
        r.training_ids = c.training_ids;
        r.scores = c.row_sums();
        r.method_tag = tag;
        out.push_back(std::move(r));
    }
    return out;
}

std::vector<AttributionResult>
weighted_results(const std::vector<GroupContributionMatrix>& contribs, const WeightVector& w,
                 const std::string& tag) {
    std::vector<AttributionResult> out;
    out.reserve(contribs.size());
    for (const auto& c : contribs) {
        auto r = weighted_score(c, w);
        r.method_tag = tag;
        out.push_back(std::move(r));
    }
    return out;
}

// Builds (or loads, when already present) the shared LDS ground truth.
LdsGroundTruth ensure_ground_truth(Pipeline& p, const LabeledDataset& ds,
                                   const DataSplit& splits) {
    if (std::filesystem::exists(p.ground_truth_path()))
        return p.load_ground_truth();
    const auto arch = p.arch_from_config(ds.dim(), ds.num_classes());
    const auto gt = build_lds_ground_truth(
        ds, splits.train_ids, arch, p.train_config(), p.cfg().get_real("eval", "alpha"),
        static_cast<int>(p.cfg().get_int("eval", "m_subsets")), splits.eval_ids,
        Prng::derive(p.seed(), kLdsStream), p.jobs());
    p.command_dir("eval-lds");
    save_ground_truth_json(gt, p.ground_truth_path().string());
    return gt;
}

int run_gen_data(Pipeline& p) {
    const auto& cfg = p.cfg();
    const auto kind = cfg.get_string("dataset", "kind");
    LabeledDataset ds;
    if (kind == "gaussian") {
        ds = generate_gaussian_classes(
            static_cast<int>(cfg.get_int("dataset", "num_classes")),
            static_cast<int>(cfg.get_int("dataset", "per_class")),
            static_cast<int>(cfg.get_int("dataset", "dim")),
            cfg.get_real("dataset", "separation"), Prng::derive(p.seed(), kDatasetStream));
    } else if (kind == "factor") {
        ds = generate_factor_dataset(
            static_cast<int>(cfg.get_int("dataset", "factors_a")),
            static_cast<int>(cfg.get_int("dataset", "factors_b")),
            static_cast<int>(cfg.get_int("dataset", "per_cell")),
            static_cast<int>(cfg.get_int("dataset", "dim_a")),
            static_cast<int>(cfg.get_int("dataset", "dim_b")),
            Prng::derive(p.seed(), kDatasetStream));
    } else {
        throw ConfigError("dataset.kind must be gaussian or factor, got '" + kind + "'");
    }

    const auto splits =
        make_splits(ds, cfg.get_int("dataset", "n_train"), cfg.get_int("dataset", "n_weight"),
                    cfg.get_int("dataset", "n_eval"), Prng::derive(p.seed(), kSplitStream));

    p.command_dir("gen-data");
    std::vector<std::string> outputs = {"dataset.csv", "splits.json"};
    const double corrupt = cfg.get_real("dataset", "corrupt_fraction");
    if (corrupt > 0.0) {
        auto [corrupted, record] = corrupt_labels_subset(ds, splits.train_ids, corrupt,
                                                         Prng::derive(p.seed(), kCorruptStream));
        ds = std::move(corrupted);
        save_corruption_csv(record, p.corruption_path().string());
        outputs.push_back("corruption.csv");
    }

    save_csv(ds, p.dataset_path().string());
    save_splits_json(splits, p.splits_path().string());
    p.write_run_metadata("gen-data", {}, outputs);
    std::printf("gen-data: N=%lld d=%d classes=%d train/weight/eval = %zu/%zu/%zu\n",
                static_cast<long long>(ds.size()), ds.dim(), ds.num_classes(),
                splits.train_ids.size(), splits.weight_ids.size(), splits.eval_ids.size());
    return 0;
}

int run_train(Pipeline& p) {
    const auto ds = p.load_dataset();
    const auto splits = p.load_splits();
    const auto arch = p.arch_from_config(ds.dim(), ds.num_classes());
    const auto ckpt = train(ds, splits.train_ids, arch, p.train_config());

    p.command_dir("train");
    save_checkpoint(ckpt, p.checkpoint_path().string());
    p.write_run_metadata("train", {p.dataset_path(), p.splits_path()}, {"model.ckpt"});
    std::printf("train: %d params in %zu groups, train accuracy %.4f\n",
                ckpt.grouping.total_dim, ckpt.grouping.groups.size(),
                accuracy(ckpt, ds, splits.train_ids));
    return 0;
}

int run_extract(Pipeline& p) {
    const auto ds = p.load_dataset();
    const auto splits = p.load_splits();
    const auto ckpt = p.load_ckpt();
    const auto proj = p.projection_for(ckpt.grouping);

    p.command_dir("extract");
    std::vector<std::string> outputs;
    const std::pair<const char*, const std::vector<std::int64_t>*> roles[] = {
        {"train", &splits.train_ids}, {"weight", &splits.weight_ids}, {"eval", &splits.eval_ids}};
    for (const auto& [role, ids] : roles) {
        if (ids->empty()) continue;
        const auto store = extract_features(ckpt, ds, *ids, proj);
        save_store(store, p.store_path(role).string());
        outputs.push_back(std::string(role) + ".gfst");
        std::printf("extract: %s -> %lld rows x %d dims\n", role,
                    static_cast<long long>(store.rows()), store.feature_dim());
    }
    p.write_run_metadata("extract", {p.dataset_path(), p.splits_path(), p.checkpoint_path()},
                         outputs);
    return 0;
}

int run_attribute(Pipeline& p) {
    const auto train_store = p.load_store("train");
    const auto eval_store = p.load_store("eval");
    const auto kernel = p.kernel_for(train_store);
    const auto training_side = precompute_training_side(train_store, kernel);
    const auto contribs = p.contributions_for(eval_store, train_store, training_side);
    const auto method = p.cfg().get_string("attribution", "method");

    const auto dir = p.command_dir("attribute");
    std::vector<std::string> outputs;
    auto dump = [&](const std::vector<AttributionResult>& results, const std::string& prefix) {
        for (std::size_t q = 0; q < results.size(); ++q) {
            const auto qid = eval_store.example_ids[q];
            auto res = results[q];
            res.query_id = std::to_string(qid);
            const auto scores_name = prefix + "_q" + std::to_string(qid) + ".csv";
            const auto ranking_name = prefix + "_ranking_q" + std::to_string(qid) + ".csv";
            save_scores_csv(res, (dir / scores_name).string());
            save_ranking_csv(res, (dir / ranking_name).string());
            outputs.push_back(scores_name);
            outputs.push_back(ranking_name);
        }
    };
    dump(unweighted_results(contribs, method), method + "_scores");

    std::vector<std::filesystem::path> inputs = {p.store_path("train"), p.store_path("eval")};
    if (std::filesystem::exists(p.weights_path())) {
        const auto w = p.load_weight_vector();
        dump(weighted_results(contribs, w, method + "+w"), method + "_weighted");
        inputs.push_back(p.weights_path());
    }
    p.write_run_metadata("attribute", inputs, outputs);
    std::printf("attribute: %zu queries scored with %s\n", contribs.size(), method.c_str());
    return 0;
}

// Contribution matrices for the weight-learning queries; the supervised
// variant swaps in jittered copies of weight-split examples with the source
// attached as the positive.
std::vector<GroupContributionMatrix>
weight_learning_contributions(Pipeline& p, const GradientFeatureStore& train_store,
                              const Eigen::MatrixXd& training_side,
                              const WeightLearnConfig& wl_cfg) {
    if (wl_cfg.variant != LossVariant::SupervisedAug)
        return p.contributions_for(p.load_store("weight"), train_store, training_side);

    const auto ds = p.load_dataset();
    const auto splits = p.load_splits();
    const auto ckpt = p.load_ckpt();
    const auto proj = p.projection_for(ckpt.grouping);
    const double noise_std = p.cfg().get_real("weighting", "aug_noise_std");

    std::vector<GroupContributionMatrix> contribs;
    contribs.reserve(splits.weight_ids.size());
    for (std::size_t i = 0; i < splits.weight_ids.size(); ++i) {
        const auto id = splits.weight_ids[i];
        // The positive must live in the train store for the loss to find it;
        // augment train examples indexed by the weight stream instead of the
        // weight split itself.
        const auto source = train_store.example_ids[
            Prng::derive(Prng::derive(p.seed(), kAugStream), i) %
            train_store.example_ids.size()];
        (void)id;
        const auto aug = make_augmented_query(ds, source, noise_std,
                                              Prng::derive(p.seed(), kAugStream + i));
        const auto grad = per_example_gradient(ckpt, aug.features,
                                               ds.labels[static_cast<std::size_t>(source)]);
        auto c = group_contributions(project_gradient(proj, grad), training_side, train_store);
        c.positive_id = aug.positive_id;
        contribs.push_back(std::move(c));
    }
    return contribs;
}

int run_learn_weights(Pipeline& p) {
    const auto train_store = p.load_store("train");
    const auto kernel = p.kernel_for(train_store);
    const auto training_side = precompute_training_side(train_store, kernel);
    const auto wl_cfg = p.weight_learn_config();
    const auto contribs = weight_learning_contributions(p, train_store, training_side, wl_cfg);
    const auto w = learn_weights(contribs, wl_cfg);

    p.command_dir("learn-weights");
    const auto out_path = p.weights_path();
    std::filesystem::create_directories(out_path.parent_path());
    save_weights(w, out_path.string(), weights_comment(p));
    p.write_run_metadata("learn-weights", {p.store_path("train"), p.store_path("weight")},
                         {out_path.string()});
    std::printf("learn-weights: %zu queries -> %d groups, max weight %.4f\n", contribs.size(),
                w.size(), w.values.maxCoeff());
    return 0;
}

int run_sweep(Pipeline& p) {
    const auto ds = p.load_dataset();
    const auto splits = p.load_splits();
    const auto gt = p.load_ground_truth();
    const auto train_store = p.load_store("train");
    const auto eval_store = p.load_store("eval");
    const auto kernel = p.kernel_for(train_store);
    const auto training_side = precompute_training_side(train_store, kernel);
    const auto wl_cfg = p.weight_learn_config();
    const auto contribs = weight_learning_contributions(p, train_store, training_side, wl_cfg);
    const auto eval_contribs = p.contributions_for(eval_store, train_store, training_side);

    const auto selector = [&](const WeightVector& w) {
        return lds(gt, weighted_results(eval_contribs, w, "sweep")).mean;
    };
    const auto result = sweep(contribs, p.cfg().get_int_list("weighting", "k_grid"),
                              p.cfg().get_real_list("weighting", "lambda_grid"), wl_cfg,
                              selector);

    const auto dir = p.command_dir("sweep");
    {
        std::ofstream out(dir / "sweep_results.csv", std::ios::binary);
        out << "k,lambda_reg,selector_value,error\n";
        char buf[64];
        for (const auto& cell : result.cells) {
            std::snprintf(buf, sizeof buf, "%.17g", cell.selector_value);
            out << cell.k << ',' << cell.lambda_reg << ','
                << (cell.weights ? buf : "") << ',' << cell.error << "\n";
        }
    }
    save_weights(result.best_weights(), (dir / "best_weights.tsv").string(),
                 "sweep best k=" + std::to_string(result.best_k()) +
                     " lambda_reg=" + std::to_string(result.best_lambda()));
    nlohmann::json summary;
    summary["best_k"] = result.best_k();
    summary["best_lambda_reg"] = result.best_lambda();
    summary["best_selector_value"] =
        result.cells[static_cast<std::size_t>(result.best_cell)].selector_value;
    write_json(summary, dir / "sweep_summary.json");

    p.write_run_metadata("sweep",
                         {p.store_path("train"), p.store_path("weight"), p.store_path("eval"),
                          p.ground_truth_path()},
                         {"sweep_results.csv", "best_weights.tsv", "sweep_summary.json"});
    std::printf("sweep: best k=%d lambda'=%.3f selector=%.4f over %zu cells\n", result.best_k(),
                result.best_lambda(),
                result.cells[static_cast<std::size_t>(result.best_cell)].selector_value,
                result.cells.size());
    return 0;
}

int run_eval_lds(Pipeline& p) {
    const auto ds = p.load_dataset();
    const auto splits = p.load_splits();
    const auto train_store = p.load_store("train");
    const auto eval_store = p.load_store("eval");
    const auto gt = ensure_ground_truth(p, ds, splits);

    const auto kernel = p.kernel_for(train_store);
    const auto training_side = precompute_training_side(train_store, kernel);
    const auto contribs = p.contributions_for(eval_store, train_store, training_side);
    const auto method = p.cfg().get_string("attribution", "method");

    const auto dir = p.command_dir("eval-lds");
    const auto stem_u = "lds_" + method + "_unweighted";
    const auto stem_w = "lds_" + method + "_weighted";
    std::vector<std::string> outputs = {"ground_truth.json", stem_u + ".json", stem_u + ".csv",
                                        "summary_" + method + ".json"};
    const auto unweighted = lds(gt, unweighted_results(contribs, method));
    save_report_json(unweighted, (dir / (stem_u + ".json")).string());
    save_report_csv(unweighted, (dir / (stem_u + ".csv")).string());

    nlohmann::json summary;
    summary["method"] = method;
    summary["lds_unweighted_mean"] = unweighted.mean;
    summary["lds_unweighted_ci95"] = unweighted.ci95_halfwidth;
    std::printf("eval-lds: %s unweighted LDS = %.2f%% (+/- %.2f)\n", method.c_str(),
                100.0 * unweighted.mean, 100.0 * unweighted.ci95_halfwidth);

    std::vector<std::filesystem::path> inputs = {p.dataset_path(), p.splits_path(),
                                                 p.store_path("train"), p.store_path("eval")};
    if (std::filesystem::exists(p.weights_path())) {
        const auto w = p.load_weight_vector();
        const auto weighted = lds(gt, weighted_results(contribs, w, method + "+w"));
        save_report_json(weighted, (dir / (stem_w + ".json")).string());
        save_report_csv(weighted, (dir / (stem_w + ".csv")).string());
        outputs.push_back(stem_w + ".json");
        outputs.push_back(stem_w + ".csv");
        summary["lds_weighted_mean"] = weighted.mean;
        summary["lds_weighted_ci95"] = weighted.ci95_halfwidth;
        inputs.push_back(p.weights_path());
        std::printf("eval-lds: %s weighted LDS = %.2f%% (+/- %.2f)\n", method.c_str(),
                    100.0 * weighted.mean, 100.0 * weighted.ci95_halfwidth);
    }
    write_json(summary, dir / ("summary_" + method + ".json"));
    p.write_run_metadata("eval-lds", inputs, outputs);
    return 0;
}

int run_eval_mislabel(Pipeline& p) {
    const auto record = p.load_corruption();
    const auto train_store = p.load_store("train");
    const auto kernel = p.kernel_for(train_store);
    const int top_t = static_cast<int>(p.cfg().get_int("attribution", "self_influence_top_t"));

    const auto unweighted = self_influence(train_store, kernel, std::nullopt, top_t);
    const double auc_unweighted = mislabel_auc(unweighted, train_store.example_ids, record);

    nlohmann::json summary;
    summary["method"] = p.cfg().get_string("attribution", "method");
    summary["normalize_top_t"] = top_t;
    summary["auc_unweighted"] = auc_unweighted;
    std::printf("eval-mislabel: unweighted AUC = %.4f\n", auc_unweighted);

    std::vector<std::filesystem::path> inputs = {p.corruption_path(), p.store_path("train")};
    if (std::filesystem::exists(p.weights_path())) {
        const auto w = p.load_weight_vector();
        const auto weighted = self_influence(train_store, kernel, w, top_t);
        const double auc_weighted = mislabel_auc(weighted, train_store.example_ids, record);
        summary["auc_weighted"] = auc_weighted;
        summary["margin"] = auc_weighted - auc_unweighted;
        inputs.push_back(p.weights_path());
        std::printf("eval-mislabel: weighted AUC = %.4f (margin %+.4f)\n", auc_weighted,
                    auc_weighted - auc_unweighted);
    }
    const auto dir = p.command_dir("eval-mislabel");
    const auto report_name = "mislabel_report_" + summary["method"].get<std::string>() + ".json";
    write_json(summary, dir / report_name);
    p.write_run_metadata("eval-mislabel", inputs, {report_name});
    return 0;
}

int run_eval_tailpatch(Pipeline& p) {
    const auto ds = p.load_dataset();
    const auto splits = p.load_splits();
    const auto ckpt = p.load_ckpt();
    const auto train_store = p.load_store("train");
    const auto eval_store = p.load_store("eval");
    const auto kernel = p.kernel_for(train_store);
    const auto training_side = precompute_training_side(train_store, kernel);
    const auto contribs = p.contributions_for(eval_store, train_store, training_side);

    const int top_k = static_cast<int>(p.cfg().get_int("eval", "tailpatch_top_k"));
    double lr = p.cfg().get_real("eval", "tailpatch_lr");
    if (lr <= 0.0) lr = p.cfg().get_real("model", "lr");
    const auto method = p.cfg().get_string("attribution", "method");

    nlohmann::json summary;
    summary["method"] = method;
    summary["top_k"] = top_k;
    summary["lr"] = lr;

    const auto unweighted =
        tail_patch(ckpt, ds, splits.eval_ids, unweighted_results(contribs, method), top_k, lr);
    summary["unweighted"] = report_json(unweighted);
    std::printf("eval-tailpatch: unweighted delta = %+.5f (+/- %.5f)\n", unweighted.mean,
                unweighted.ci95_halfwidth);

    // Random-proponent baseline: seeded random scores per query.
    std::vector<AttributionResult> random_atts;
    for (std::size_t q = 0; q < contribs.size(); ++q) {
        AttributionResult r;
        r.training_ids = contribs[q].training_ids;
        r.scores.resize(static_cast<Eigen::Index>(r.training_ids.size()));
        Prng rng(Prng::derive(Prng::derive(p.seed(), kTailRandomStream), q));
        for (Eigen::Index i = 0; i < r.scores.size(); ++i) r.scores[i] = rng.normal();
        r.method_tag = "random";
        random_atts.push_back(std::move(r));
    }
    const auto random_rep = tail_patch(ckpt, ds, splits.eval_ids, random_atts, top_k, lr);
    summary["random"] = report_json(random_rep);
    std::printf("eval-tailpatch: random delta = %+.5f (+/- %.5f)\n", random_rep.mean,
                random_rep.ci95_halfwidth);

    std::vector<std::filesystem::path> inputs = {p.dataset_path(), p.splits_path(),
                                                 p.checkpoint_path(), p.store_path("train"),
                                                 p.store_path("eval")};
    if (std::filesystem::exists(p.weights_path())) {
        const auto w = p.load_weight_vector();
        const auto weighted = tail_patch(ckpt, ds, splits.eval_ids,
                                         weighted_results(contribs, w, method + "+w"), top_k, lr);
        summary["weighted"] = report_json(weighted);
        inputs.push_back(p.weights_path());
        std::printf("eval-tailpatch: weighted delta = %+.5f (+/- %.5f)\n", weighted.mean,
                    weighted.ci95_halfwidth);
    }
    const auto dir = p.command_dir("eval-tailpatch");
    const auto report_name = "tailpatch_report_" + method + ".json";
    write_json(summary, dir / report_name);
    p.write_run_metadata("eval-tailpatch", inputs, {report_name});
    return 0;
}

// Synthetic factor-emphasis query: the target factor's category mean plus
// noise in its coordinates, pure noise elsewhere; labeled by the model.
LabeledDataset make_emphasis_queries(const Pipeline& p, const ModelCheckpoint& ckpt,
                                     const std::vector<int>& categories, int count,
                                     std::uint64_t stream, std::vector<int>* category_out) {
    const auto& cfg = p.cfg();
    const int fa = static_cast<int>(cfg.get_int("dataset", "factors_a"));
    const int fb = static_cast<int>(cfg.get_int("dataset", "factors_b"));
    const int dim_a = static_cast<int>(cfg.get_int("dataset", "dim_a"));
    const int dim_b = static_cast<int>(cfg.get_int("dataset", "dim_b"));
    const auto [ma, mb] = factor_means(fa, fb, dim_a, dim_b,
                                       Prng::derive(p.seed(), kDatasetStream));

    LabeledDataset queries;
    queries.features.resize(count, dim_a + dim_b);
    queries.labels.resize(static_cast<std::size_t>(count));
    queries.ids.resize(static_cast<std::size_t>(count));
    Prng rng(Prng::derive(p.seed(), stream));
    for (int q = 0; q < count; ++q) {
        const int cat = categories[static_cast<std::size_t>(q) % categories.size()];
        for (int k = 0; k < dim_a; ++k)
            queries.features(q, k) = ma(cat, k) + kFactorNoiseStd * rng.normal();
        for (int k = 0; k < dim_b; ++k)
            queries.features(q, dim_a + k) = kFactorNoiseStd * rng.normal();
        queries.ids[static_cast<std::size_t>(q)] = q;
        queries.labels[static_cast<std::size_t>(q)] =
            predict(ckpt, queries.features.row(q).transpose());
        if (category_out) category_out->push_back(cat);
    }
    return queries;
}

int run_eval_recall(Pipeline& p) {
    const auto& cfg = p.cfg();
    if (cfg.get_string("dataset", "kind") != "factor")
        throw ConfigError("eval-recall requires dataset.kind = factor");
    const auto ds = p.load_dataset();
    const auto ckpt = p.load_ckpt();
    const auto train_store = p.load_store("train");
    const auto kernel = p.kernel_for(train_store);
    const auto training_side = precompute_training_side(train_store, kernel);
    const auto proj = p.projection_for(ckpt.grouping);
    const int fa = static_cast<int>(cfg.get_int("dataset", "factors_a"));
    const int recall_k = static_cast<int>(cfg.get_int("eval", "recall_k"));
    const int per_split = static_cast<int>(cfg.get_int("eval", "recall_queries_per_split"));

    std::vector<int> train_cats, valid_cats;
    for (int a = 0; a < fa; ++a) (a < (fa + 1) / 2 ? train_cats : valid_cats).push_back(a);

    // Learn factor-emphasizing weights from train-split categories only.
    const int n_weight_queries = static_cast<int>(cfg.get_int("eval", "recall_weight_queries"));
    const auto weight_queries =
        make_emphasis_queries(p, ckpt, train_cats, n_weight_queries, kRecallStream, nullptr);
    const auto weight_store =
        extract_features(ckpt, weight_queries, weight_queries.ids, proj);
    const auto weight_contribs = p.contributions_for(weight_store, train_store, training_side);
    const auto w = learn_weights(weight_contribs, p.weight_learn_config());

    // Ground truth: train-store examples sharing the query's a-category.
    std::vector<std::vector<std::int64_t>> members(static_cast<std::size_t>(fa));
    for (const auto id : train_store.example_ids)
        members[static_cast<std::size_t>((*ds.factor_labels)(id, 0))].push_back(id);

    nlohmann::json summary;
    summary["recall_k"] = recall_k;
    summary["weights"] = weights_json(w);
    const char* split_names[2] = {"train_split", "validation_split"};
    const std::vector<int>* split_cats[2] = {&train_cats, &valid_cats};
    for (int s = 0; s < 2; ++s) {
        std::vector<int> cats;
        const auto queries = make_emphasis_queries(p, ckpt, *split_cats[s], per_split,
                                                   kRecallStream + 1 + static_cast<std::uint64_t>(s),
                                                   &cats);
        const auto store = extract_features(ckpt, queries, queries.ids, proj);
        const auto contribs = p.contributions_for(store, train_store, training_side);
        double unweighted_sum = 0.0, weighted_sum = 0.0;
        for (std::size_t q = 0; q < contribs.size(); ++q) {
            const auto& gt_ids = members[static_cast<std::size_t>(cats[q])];
            AttributionResult plain;
            plain.training_ids = contribs[q].training_ids;
            plain.scores = contribs[q].row_sums();
            unweighted_sum += recall_at_k(plain, gt_ids, recall_k);
            weighted_sum += recall_at_k(weighted_score(contribs[q], w), gt_ids, recall_k);
        }
        nlohmann::json split;
        split["unweighted"] = unweighted_sum / static_cast<double>(contribs.size());
        split["weighted"] = weighted_sum / static_cast<double>(contribs.size());
        split["margin"] = (weighted_sum - unweighted_sum) / static_cast<double>(contribs.size());
        summary[split_names[s]] = split;
        std::printf("eval-recall %s: unweighted %.4f -> weighted %.4f\n", split_names[s],
                    unweighted_sum / contribs.size(), weighted_sum / contribs.size());
    }

    const auto dir = p.command_dir("eval-recall");
    write_json(summary, dir / "recall_report.json");
    p.write_run_metadata("eval-recall",
                         {p.dataset_path(), p.checkpoint_path(), p.store_path("train")},
                         {"recall_report.json"});
    return 0;
}

int run_per_group_lds(Pipeline& p) {
    const auto gt = p.load_ground_truth();
    const auto train_store = p.load_store("train");
    const auto eval_store = p.load_store("eval");
    const auto kernel = p.kernel_for(train_store);
    const auto training_side = precompute_training_side(train_store, kernel);
    const auto contribs = p.contributions_for(eval_store, train_store, training_side);

    const auto values = per_group_lds(gt, contribs);
    const auto method = p.cfg().get_string("attribution", "method");
    const auto csv_name = "per_group_lds_" + method + ".csv";
    const auto dir = p.command_dir("per-group-lds");
    {
        std::ofstream out(dir / csv_name, std::ios::binary);
        out << "group,lds\n";
        char buf[64];
        for (int j = 0; j < values.size(); ++j) {
            std::snprintf(buf, sizeof buf, "%.17g", values[j]);
            out << train_store.group_layout[static_cast<std::size_t>(j)].first << ',' << buf
                << "\n";
        }
    }
    p.write_run_metadata("per-group-lds",
                         {p.ground_truth_path(), p.store_path("train"), p.store_path("eval")},
                         {csv_name});
    for (int j = 0; j < values.size(); ++j)
        std::printf("per-group-lds: %-14s %.2f%%\n",
                    train_store.group_layout[static_cast<std::size_t>(j)].first.c_str(),
                    100.0 * values[j]);
    return 0;
}

int run_oracle_check(Pipeline& p) {
    const auto& cfg = p.cfg();
    const auto alpha_list = cfg.get_real_list("oracle", "alphas");
    const auto sigma_list = cfg.get_real_list("oracle", "sigmas");
    if (alpha_list.size() != sigma_list.size())
        throw ConfigError("oracle.alphas and oracle.sigmas must have equal length");
    Eigen::VectorXd alphas = Eigen::Map<const Eigen::VectorXd>(
        alpha_list.data(), static_cast<Eigen::Index>(alpha_list.size()));
    Eigen::VectorXd sigmas = Eigen::Map<const Eigen::VectorXd>(
        sigma_list.data(), static_cast<Eigen::Index>(sigma_list.size()));

    const auto queries = generate_query_set(
        alphas, sigmas, cfg.get_int("oracle", "n_examples"), cfg.get_real("oracle", "sparsity"),
        static_cast<int>(cfg.get_int("oracle", "n_queries")), Prng::derive(p.seed(), kOracleStream));
    const auto report = verify_recovery(queries, p.weight_learn_config());
    const auto optimal = optimal_weights(alphas, sigmas);

    const auto dir = p.command_dir("oracle-check");
    nlohmann::json j;
    j["cosine_to_optimal"] = report.cosine_to_optimal;
    j["snr_ratio"] = report.snr_ratio;
    j["learned"] = weights_json(report.learned);
    j["optimal"] = weights_json(optimal);
    write_json(j, dir / "oracle_report.json");
    save_instance_csv(queries[0], (dir / "instance.csv").string());
    p.write_run_metadata("oracle-check", {}, {"oracle_report.json", "instance.csv"});
    std::printf("oracle-check: cosine=%.4f snr_ratio=%.4f\n", report.cosine_to_optimal,
                report.snr_ratio);
    return 0;
}

int run_noise_sweep(Pipeline& p) {
    const auto gt = p.load_ground_truth();
    const auto train_store = p.load_store("train");
    const auto weight_store = p.load_store("weight");
    const auto eval_store = p.load_store("eval");
    const auto kernel = p.kernel_for(train_store);
    const auto training_side = precompute_training_side(train_store, kernel);
    const auto weight_contribs = p.contributions_for(weight_store, train_store, training_side);
    const auto eval_contribs = p.contributions_for(eval_store, train_store, training_side);
    const auto wl_cfg = p.weight_learn_config();
    const auto method = p.cfg().get_string("attribution", "method");

    const double unweighted_lds = lds(gt, unweighted_results(eval_contribs, method)).mean;
    const auto grid = p.cfg().get_real_list("eval", "noise_grid");

    const auto dir = p.command_dir("noise-sweep");
    const auto csv_name = "noise_sweep_" + method + ".csv";
    std::ofstream out(dir / csv_name, std::ios::binary);
    out << "noise_scale,lds_weighted,lds_weighted_ci95,lds_unweighted\n";
    char buf[3][64];
    for (std::size_t s_idx = 0; s_idx < grid.size(); ++s_idx) {
        const double s = grid[s_idx];
        // Learning sees noisy contributions; evaluation stays clean.
        std::vector<GroupContributionMatrix> noisy;
        noisy.reserve(weight_contribs.size());
        for (std::size_t q = 0; q < weight_contribs.size(); ++q)
            noisy.push_back(inject_score_noise(
                weight_contribs[q], s,
                Prng::derive(Prng::derive(p.seed(), kNoiseStream + s_idx), q)));
        const auto w = learn_weights(noisy, wl_cfg);
        const auto rep = lds(gt, weighted_results(eval_contribs, w, method + "+w"));
        std::snprintf(buf[0], sizeof buf[0], "%.17g", rep.mean);
        std::snprintf(buf[1], sizeof buf[1], "%.17g", rep.ci95_halfwidth);
        std::snprintf(buf[2], sizeof buf[2], "%.17g", unweighted_lds);
        out << s << ',' << buf[0] << ',' << buf[1] << ',' << buf[2] << "\n";
        std::printf("noise-sweep s=%-5g weighted LDS = %.2f%% (unweighted %.2f%%)\n", s,
                    100.0 * rep.mean, 100.0 * unweighted_lds);
    }
    out.close();
    p.write_run_metadata("noise-sweep",
                         {p.ground_truth_path(), p.store_path("train"), p.store_path("weight"),
                          p.store_path("eval")},
                         {csv_name});
    return 0;
}

int run_weight_cosine(Pipeline& p) {
    const auto path_b = p.cfg().get_string("weighting", "weights_file_b");
    if (path_b.empty())
        throw ConfigError("weight-cosine needs weighting.weights_file_b");
    const auto a = p.load_weight_vector();
    if (!std::filesystem::exists(path_b))
        throw MissingArtifact("missing:weights", "no weights file " + path_b);
    const auto b = load_weights(path_b);
    const double cos = weight_cosine(a, b);

    const auto dir = p.command_dir("weight-cosine");
    nlohmann::json j;
    j["weights_a"] = p.weights_path().string();
    j["weights_b"] = path_b;
    j["cosine"] = cos;
    write_json(j, dir / "cosine.json");
    p.write_run_metadata("weight-cosine", {p.weights_path(), path_b}, {"cosine.json"});
    std::printf("weight-cosine: %.6f\n", cos);
    return 0;
}

}  // namespace
}  // namespace attriweight::cli

int main(int argc, char** argv) {
    using namespace attriweight;
    using namespace attriweight::cli;

    CLI::App app{"attriweight: parameter-group-weighted gradient data attribution"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path;
    std::vector<std::string> overrides;
    std::int64_t seed_override = -1;
    int jobs_override = 0;
    app.add_option("--config", config_path, "INI config file (defaults apply when omitted)");
    app.add_option("--set", overrides, "override a key: --set section.key=value");
    app.add_option("--seed", seed_override, "override global.seed");
    app.add_option("--jobs", jobs_override, "override global.jobs");

    const std::pair<const char*, int (*)(Pipeline&)> commands[] = {
        {"gen-data", run_gen_data},
        {"train", run_train},
        {"extract", run_extract},
        {"attribute", run_attribute},
        {"learn-weights", run_learn_weights},
        {"sweep", run_sweep},
        {"eval-lds", run_eval_lds},
        {"eval-mislabel", run_eval_mislabel},
        {"eval-tailpatch", run_eval_tailpatch},
        {"eval-recall", run_eval_recall},
        {"per-group-lds", run_per_group_lds},
        {"oracle-check", run_oracle_check},
        {"noise-sweep", run_noise_sweep},
        {"weight-cosine", run_weight_cosine},
    };
    const char* descriptions[] = {
        "generate the synthetic dataset, splits, and optional label corruption",
        "train the model on the train split",
        "extract projected per-example gradient features per split",
        "score evaluation queries against the training set",
        "learn per-group weights from the weight-learning queries",
        "grid-search k and lambda' with an LDS selector",
        "linear datamodeling score, unweighted and weighted",
        "mislabeled-data detection AUC from normalized self-influence",
        "tail-patch deltas for attribution, weighted, and random baselines",
        "fine-grained recall@k on the two-factor dataset",
        "LDS of each parameter group in isolation",
        "closed-form SNR oracle recovery check",
        "weight learning under injected score noise",
        "cosine between two learned weight vectors",
    };

    std::map<std::string, int (*)(Pipeline&)> dispatch;
    int idx = 0;
    for (const auto& [name, fn] : commands) {
        auto* sub = app.add_subcommand(name, descriptions[idx++]);
        sub->footer(RunConfig::describe_keys());
        dispatch[name] = fn;
    }

    CLI11_PARSE(app, argc, argv);

    try {
        RunConfig cfg = config_path.empty() ? RunConfig() : RunConfig::from_file(config_path);
        for (const auto& kv : overrides) {
            const auto eq = kv.find('=');
            if (eq == std::string::npos)
                throw ConfigError("--set needs section.key=value, got '" + kv + "'");
            cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
        }
        if (seed_override >= 0) cfg.set("global.seed", std::to_string(seed_override));
        if (jobs_override > 0) cfg.set("global.jobs", std::to_string(jobs_override));

        Pipeline pipeline(cfg);
        const auto name = app.get_subcommands().front()->get_name();
        return dispatch.at(name)(pipeline);
    } catch (const ConfigError& e) {
        std::cerr << "error:config:" << e.what() << "\n";
        return 1;
    } catch (const MissingArtifact& e) {
        std::cerr << e.tag << "\n";
        return 2;
    } catch (const NumericalError& e) {
        std::cerr << "error:numerical:" << e.what() << "\n";
        return 3;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error:config:" << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error:internal:" << e.what() << "\n";
        return 3;
    }
}
