#include "pipeline.hpp"

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "attriweight/errors.hpp"
#include "attriweight/prng.hpp"

namespace attriweight::cli {

namespace {

nlohmann::json read_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    nlohmann::json j;
    in >> j;
    return j;
}

std::string file_hash_hex(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return "absent";
    std::uint64_t h = 0xcbf29ce484222325ull;
    char buf[65536];
    while (in.read(buf, sizeof buf) || in.gcount() > 0)
        h = fnv1a(buf, static_cast<std::size_t>(in.gcount()), h);
    char hex[17];
    std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(h));
    return hex;
}

}  // namespace

Pipeline::Pipeline(const RunConfig& cfg)
    : cfg_(cfg),
      outdir_(cfg.get_string("global", "outdir")),
      seed_(static_cast<std::uint64_t>(cfg.get_int("global", "seed"))),
      jobs_(static_cast<int>(cfg.get_int("global", "jobs"))) {
    if (jobs_ < 1) throw ConfigError("global.jobs must be >= 1");
}

std::filesystem::path Pipeline::command_dir(const std::string& command) const {
    const auto dir = outdir_ / command;
    std::filesystem::create_directories(dir);
    return dir;
}

std::filesystem::path Pipeline::weights_path() const {
    const auto explicit_path = cfg_.get_string("weighting", "weights_file");
    if (!explicit_path.empty()) return explicit_path;
    return outdir_ / "learn-weights" / "weights.tsv";
}

LabeledDataset Pipeline::load_dataset() const {
    if (!std::filesystem::exists(dataset_path()))
        throw MissingArtifact("missing:dataset", "run gen-data first: no " +
                                                     dataset_path().string());
    return load_csv(dataset_path().string());
}

DataSplit Pipeline::load_splits() const {
    if (!std::filesystem::exists(splits_path()))
        throw MissingArtifact("missing:splits", "run gen-data first: no " +
                                                    splits_path().string());
    return load_splits_json(splits_path().string());
}

CorruptionRecord Pipeline::load_corruption() const {
    if (!std::filesystem::exists(corruption_path()))
        throw MissingArtifact("missing:corruption_record",
                              "gen-data ran without dataset.corrupt_fraction > 0: no " +
                                  corruption_path().string());
    return load_corruption_csv(corruption_path().string());
}

ModelCheckpoint Pipeline::load_ckpt() const {
    if (!std::filesystem::exists(checkpoint_path()))
        throw MissingArtifact("missing:checkpoint", "run train first: no " +
                                                        checkpoint_path().string());
    return load_checkpoint(checkpoint_path().string());
}

GradientFeatureStore Pipeline::load_store(const std::string& role) const {
    if (!std::filesystem::exists(store_path(role)))
        throw MissingArtifact("missing:feature_store", "run extract first: no " +
                                                           store_path(role).string());
    return attriweight::load_store(store_path(role).string());
}

WeightVector Pipeline::load_weight_vector() const {
    if (!std::filesystem::exists(weights_path()))
        throw MissingArtifact("missing:weights", "run learn-weights first (or set "
                                                 "weighting.weights_file): no " +
                                                     weights_path().string());
    return load_weights(weights_path().string());
}

LdsGroundTruth Pipeline::load_ground_truth() const {
    if (!std::filesystem::exists(ground_truth_path()))
        throw MissingArtifact("missing:lds_ground_truth", "run eval-lds first: no " +
                                                              ground_truth_path().string());
    return load_ground_truth_json(ground_truth_path().string());
}

ArchSpec Pipeline::arch_from_config(int input_dim, int num_classes) const {
    ArchSpec arch;
    const auto name = cfg_.get_string("model", "arch");
    if (name == "logreg") {
        arch.kind = Architecture::LogisticRegression;
    } else if (name == "mlp1") {
        arch.kind = Architecture::Mlp1;
        arch.hidden_dim = static_cast<int>(cfg_.get_int("model", "hidden_dim"));
        arch.hidden_splits = static_cast<int>(cfg_.get_int("model", "hidden_splits"));
        arch.distractor_dim = static_cast<int>(cfg_.get_int("model", "distractor_dim"));
        arch.distractor_scale = cfg_.get_real("model", "distractor_scale");
    } else {
        throw ConfigError("model.arch must be logreg or mlp1, got '" + name + "'");
    }
    arch.input_dim = input_dim;
    arch.num_classes = num_classes;
    return arch;
}

TrainConfig Pipeline::train_config() const {
    TrainConfig cfg;
    cfg.epochs = static_cast<int>(cfg_.get_int("model", "epochs"));
    cfg.lr = cfg_.get_real("model", "lr");
    cfg.batch_size = static_cast<int>(cfg_.get_int("model", "batch_size"));
    cfg.weight_decay = cfg_.get_real("model", "weight_decay");
    cfg.seed = Prng::derive(seed_, 0x7261696eull);  // training stream
    return cfg;
}

ProjectionSpec Pipeline::projection_for(const ParameterGrouping& grouping) const {
    const auto kind = cfg_.get_string("projection", "kind");
    if (kind == "identity") return identity_projection(grouping);
    if (kind == "rademacher")
        return build_projection(grouping,
                                static_cast<int>(cfg_.get_int("projection",
                                                              "target_dim_per_group")),
                                Prng::derive(seed_, 0x70726f6aull));
    throw ConfigError("projection.kind must be identity or rademacher, got '" + kind + "'");
}

WeightLearnConfig Pipeline::weight_learn_config() const {
    WeightLearnConfig cfg;
    cfg.k = static_cast<int>(cfg_.get_int("weighting", "k"));
    cfg.lambda_reg = cfg_.get_real("weighting", "lambda_reg");
    cfg.lr = cfg_.get_real("weighting", "lr");
    cfg.epochs = static_cast<int>(cfg_.get_int("weighting", "epochs"));
    cfg.seed = Prng::derive(seed_, 0x776c6372ull);
    const auto variant = cfg_.get_string("weighting", "loss_variant");
    if (variant == "topk") cfg.variant = LossVariant::TopK;
    else if (variant == "supervised") cfg.variant = LossVariant::SupervisedAug;
    else if (variant == "bottomk") cfg.variant = LossVariant::BottomK;
    else if (variant == "gap") cfg.variant = LossVariant::TopKMinusBottomK;
    else if (variant == "nonorm") cfg.variant = LossVariant::NoNorm;
    else
        throw ConfigError("weighting.loss_variant must be one of topk, supervised, bottomk, "
                          "gap, nonorm; got '" + variant + "'");
    return cfg;
}

Kernel Pipeline::kernel_for(const GradientFeatureStore& train_store) const {
    const auto method = cfg_.get_string("attribution", "method");
    if (method == "tracin") return Kernel{};
    if (method == "trak")
        return build_trak_kernel(train_store, cfg_.get_real("attribution", "lambda"));
    throw ConfigError("attribution.method must be tracin or trak, got '" + method + "'");
}

std::vector<GroupContributionMatrix>
Pipeline::contributions_for(const GradientFeatureStore& query_store,
                            const GradientFeatureStore& train_store,
                            const Eigen::MatrixXd& training_side) const {
    std::vector<GroupContributionMatrix> out;
    out.reserve(static_cast<std::size_t>(query_store.rows()));
    for (std::int64_t q = 0; q < query_store.rows(); ++q)
        out.push_back(group_contributions(query_store.row_f64(q), training_side, train_store));
    return out;
}

void Pipeline::write_run_metadata(const std::string& command,
                                  const std::vector<std::filesystem::path>& inputs,
                                  const std::vector<std::string>& outputs) const {
    const auto dir = command_dir(command);
    {
        std::ofstream out(dir / "resolved_config.ini", std::ios::binary);
        out << cfg_.to_ini();
    }
    nlohmann::json manifest;
    manifest["command"] = command;
    manifest["version"] = "1.0.0";
    manifest["seed"] = seed_;
    nlohmann::json in_hashes = nlohmann::json::object();
    for (const auto& path : inputs) in_hashes[path.string()] = file_hash_hex(path);
    manifest["inputs"] = in_hashes;
    std::vector<std::string> sorted_outputs(outputs);
    std::sort(sorted_outputs.begin(), sorted_outputs.end());
    manifest["outputs"] = sorted_outputs;
    manifest["config"] = cfg_.flat();
    std::ofstream out(dir / "manifest.json", std::ios::binary);
    out << manifest.dump(2) << "\n";
}

void save_splits_json(const DataSplit& splits, const std::string& path) {
    nlohmann::json j;
    j["train"] = splits.train_ids;
    j["weight"] = splits.weight_ids;
    j["eval"] = splits.eval_ids;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path);
    out << j.dump(2) << "\n";
}

DataSplit load_splits_json(const std::string& path) {
    const auto j = read_json(path);
    DataSplit s;
    s.train_ids = j.at("train").get<std::vector<std::int64_t>>();
    s.weight_ids = j.at("weight").get<std::vector<std::int64_t>>();
    s.eval_ids = j.at("eval").get<std::vector<std::int64_t>>();
    return s;
}

void save_corruption_csv(const CorruptionRecord& rec, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path);
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", rec.corruption_fraction);
    out << "# fraction=" << buf << "\n";
    out << "id,original_label\n";
    for (const auto id : rec.corrupted_ids)
        out << id << ',' << rec.original_labels.at(id) << "\n";
}

CorruptionRecord load_corruption_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    CorruptionRecord rec;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (line[0] == '#') {
            const auto eq = line.find('=');
            if (eq != std::string::npos) rec.corruption_fraction = std::stod(line.substr(eq + 1));
            continue;
        }
        if (line.rfind("id,", 0) == 0) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos) throw ParseError("corruption csv: malformed line");
        const auto id = std::stoll(line.substr(0, comma));
        rec.corrupted_ids.push_back(id);
        rec.original_labels[id] = std::stoi(line.substr(comma + 1));
    }
    return rec;
}

void save_ground_truth_json(const LdsGroundTruth& gt, const std::string& path) {
    nlohmann::json j;
    j["alpha"] = gt.alpha;
    j["seed"] = gt.seed;
    j["query_ids"] = gt.query_ids;
    j["subsets"] = gt.subsets;
    std::vector<std::vector<double>> rows;
    for (Eigen::Index q = 0; q < gt.outputs.rows(); ++q) {
        std::vector<double> row(static_cast<std::size_t>(gt.outputs.cols()));
        for (Eigen::Index m = 0; m < gt.outputs.cols(); ++m)
            row[static_cast<std::size_t>(m)] = gt.outputs(q, m);
        rows.push_back(std::move(row));
    }
    j["outputs"] = rows;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path);
    out << j.dump(2) << "\n";
}

LdsGroundTruth load_ground_truth_json(const std::string& path) {
    const auto j = read_json(path);
    LdsGroundTruth gt;
    gt.alpha = j.at("alpha").get<double>();
    gt.seed = j.at("seed").get<std::uint64_t>();
    gt.query_ids = j.at("query_ids").get<std::vector<std::int64_t>>();
    gt.subsets = j.at("subsets").get<std::vector<std::vector<std::int64_t>>>();
    const auto rows = j.at("outputs").get<std::vector<std::vector<double>>>();
    gt.outputs.resize(static_cast<Eigen::Index>(rows.size()),
                      rows.empty() ? 0 : static_cast<Eigen::Index>(rows[0].size()));
    for (std::size_t q = 0; q < rows.size(); ++q)
        for (std::size_t m = 0; m < rows[q].size(); ++m)
            gt.outputs(static_cast<Eigen::Index>(q), static_cast<Eigen::Index>(m)) = rows[q][m];
    return gt;
}

}  // namespace attriweight::cli
