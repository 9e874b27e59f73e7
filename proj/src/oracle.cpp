#include "attriweight/oracle.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "attriweight/errors.hpp"
#include "attriweight/prng.hpp"

namespace attriweight {

SnrInstance generate_instance(const Eigen::VectorXd& alphas, const Eigen::VectorXd& sigmas,
                              std::int64_t n_examples, double sparsity, std::uint64_t seed) {
    if (alphas.size() != sigmas.size() || alphas.size() < 1)
        throw std::invalid_argument("generate_instance: alpha/sigma dims must match");
    if (!(sparsity > 0.0 && sparsity <= 1.0))
        throw std::invalid_argument("generate_instance: sparsity must be in (0, 1]");
    if ((sigmas.array() <= 0.0).any())
        throw std::invalid_argument("generate_instance: sigmas must be > 0");
    if ((alphas.array() < 0.0).any())
        throw std::invalid_argument("generate_instance: alphas must be >= 0");
    if (n_examples < 1)
        throw std::invalid_argument("generate_instance: need at least one example");

    const int m = static_cast<int>(alphas.size());
    SnrInstance inst;
    inst.alphas = alphas;
    inst.sigmas = sigmas;
    inst.seed = seed;
    inst.influence = Eigen::VectorXd::Zero(n_examples);

    // Exactly round(sparsity * N) rows carry influence.
    const auto n_active = static_cast<std::int64_t>(
        std::llround(sparsity * static_cast<double>(n_examples)));
    std::vector<std::int64_t> rows(static_cast<std::size_t>(n_examples));
    std::iota(rows.begin(), rows.end(), std::int64_t{0});
    Prng pick_rng(Prng::derive(seed, 0));
    pick_rng.shuffle(rows);
    Prng influence_rng(Prng::derive(seed, 1));
    for (std::int64_t i = 0; i < n_active; ++i)
        inst.influence[rows[static_cast<std::size_t>(i)]] = influence_rng.normal();

    Prng noise_rng(Prng::derive(seed, 2));
    inst.contributions.contributions.resize(n_examples, m);
    for (std::int64_t n = 0; n < n_examples; ++n)
        for (int j = 0; j < m; ++j)
            inst.contributions.contributions(n, j) =
                alphas[j] * inst.influence[n] + sigmas[j] * noise_rng.normal();

    inst.contributions.training_ids.resize(static_cast<std::size_t>(n_examples));
    std::iota(inst.contributions.training_ids.begin(), inst.contributions.training_ids.end(),
              std::int64_t{0});
    for (int j = 0; j < m; ++j)
        inst.contributions.group_names.push_back("g" + std::to_string(j));
    return inst;
}

std::vector<SnrInstance> generate_query_set(const Eigen::VectorXd& alphas,
                                            const Eigen::VectorXd& sigmas,
                                            std::int64_t n_examples, double sparsity,
                                            int n_queries, std::uint64_t seed) {
    if (n_queries < 1)
        throw std::invalid_argument("generate_query_set: need at least one query");
    std::vector<SnrInstance> out;
    out.reserve(static_cast<std::size_t>(n_queries));
    for (int q = 0; q < n_queries; ++q)
        out.push_back(generate_instance(alphas, sigmas, n_examples, sparsity,
                                        Prng::derive(seed, static_cast<std::uint64_t>(q))));
    return out;
}

double snr(const WeightVector& w, const Eigen::VectorXd& alphas,
           const Eigen::VectorXd& sigmas) {
    if (w.size() != alphas.size() || alphas.size() != sigmas.size())
        throw std::invalid_argument("snr: dimension mismatch");
    const double signal = w.values.dot(alphas);
    const double noise = (w.values.array().square() * sigmas.array().square()).sum();
    if (noise <= 0.0)
        throw std::invalid_argument("snr: noise variance is zero for these weights");
    return signal * signal / noise;
}

WeightVector optimal_weights(const Eigen::VectorXd& alphas, const Eigen::VectorXd& sigmas) {
    if (alphas.size() != sigmas.size())
        throw std::invalid_argument("optimal_weights: dimension mismatch");
    if ((sigmas.array() <= 0.0).any())
        throw std::invalid_argument("optimal_weights: sigmas must be > 0");
    Eigen::VectorXd raw = alphas.array() / sigmas.array().square();
    const double total = raw.sum();
    if (total <= 0.0)
        throw std::invalid_argument("optimal_weights: at least one alpha must be > 0");
    WeightVector w;
    w.values = raw / total;
    for (int j = 0; j < alphas.size(); ++j) w.group_names.push_back("g" + std::to_string(j));
    return w;
}

RecoveryReport verify_recovery(std::span<const SnrInstance> instances,
                               const WeightLearnConfig& cfg) {
    if (instances.empty())
        throw std::invalid_argument("verify_recovery: need at least one instance");
    std::vector<GroupContributionMatrix> contribs;
    contribs.reserve(instances.size());
    for (const auto& inst : instances) contribs.push_back(inst.contributions);

    RecoveryReport rep;
    rep.learned = learn_weights(contribs, cfg);
    const WeightVector opt = optimal_weights(instances[0].alphas, instances[0].sigmas);
    rep.cosine_to_optimal = weight_cosine(rep.learned, opt);
    rep.snr_ratio = snr(rep.learned, instances[0].alphas, instances[0].sigmas) /
                    snr(opt, instances[0].alphas, instances[0].sigmas);
    return rep;
}

RecoveryReport verify_recovery(const SnrInstance& instance, const WeightLearnConfig& cfg) {
    return verify_recovery(std::span<const SnrInstance>(&instance, 1), cfg);
}

void save_instance_csv(const SnrInstance& instance, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("save_instance_csv: cannot open " + path);
    out << "n,influence";
    for (int j = 0; j < instance.alphas.size(); ++j) out << ",a_" << (j + 1);
    out << "\n";
    char buf[64];
    for (std::int64_t n = 0; n < instance.influence.size(); ++n) {
        out << n;
        std::snprintf(buf, sizeof buf, "%.17g", instance.influence[n]);
        out << ',' << buf;
        for (int j = 0; j < instance.alphas.size(); ++j) {
            std::snprintf(buf, sizeof buf, "%.17g", instance.contributions.contributions(n, j));
            out << ',' << buf;
        }
        out << "\n";
    }
}

}  // namespace attriweight
