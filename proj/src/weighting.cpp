#include "attriweight/weighting.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <thread>
#include <stdexcept>

#include "attriweight/errors.hpp"
#include "attriweight/prng.hpp"

namespace attriweight {

namespace {

constexpr double kNormGuard = 1e-12;
constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;

// Indices of the k largest (descending=true) or smallest entries of s,
// ties broken by ascending training id.
std::vector<std::int64_t> select_k(const Eigen::VectorXd& s,
                                   const std::vector<std::int64_t>& ids, int k,
                                   bool descending) {
    std::vector<std::int64_t> idx(static_cast<std::size_t>(s.size()));
    std::iota(idx.begin(), idx.end(), std::int64_t{0});
    const auto cmp = [&](std::int64_t a, std::int64_t b) {
        if (s[a] != s[b]) return descending ? s[a] > s[b] : s[a] < s[b];
        return ids[static_cast<std::size_t>(a)] < ids[static_cast<std::size_t>(b)];
    };
    std::partial_sort(idx.begin(), idx.begin() + k, idx.end(), cmp);
    idx.resize(static_cast<std::size_t>(k));
    return idx;
}

// Every variant is a^T S (optionally / ||S||) for a selection-dependent
// combination vector a; this evaluates loss and gradient in one pass.
struct LossEval {
    double loss = 0.0;
    Eigen::VectorXd grad_w;  // d loss / d w
    bool degenerate = false;
};

LossEval eval_variant(const GroupContributionMatrix& c, const Eigen::VectorXd& w,
                      const WeightLearnConfig& cfg, bool want_grad) {
    const std::int64_t n = c.rows();
    const int m = c.num_groups();
    if (w.size() != m)
        throw std::invalid_argument("weighting: weight dimension mismatch");
    if (cfg.k < 1 || cfg.k > n)
        throw std::invalid_argument("weighting: k must be in [1, N]");

    const Eigen::VectorXd s = c.contributions * w;
    LossEval out;
    out.grad_w = Eigen::VectorXd::Zero(m);

    Eigen::VectorXd a = Eigen::VectorXd::Zero(n);
    const double inv_k = 1.0 / static_cast<double>(cfg.k);
    switch (cfg.variant) {
        case LossVariant::TopK:
        case LossVariant::NoNorm:
            for (std::int64_t i : select_k(s, c.training_ids, cfg.k, true)) a[i] = -inv_k;
            break;
        case LossVariant::BottomK:
            for (std::int64_t i : select_k(s, c.training_ids, cfg.k, false)) a[i] = inv_k;
            break;
        case LossVariant::TopKMinusBottomK:
            for (std::int64_t i : select_k(s, c.training_ids, cfg.k, true)) a[i] -= inv_k;
            for (std::int64_t i : select_k(s, c.training_ids, cfg.k, false)) a[i] += inv_k;
            break;
        case LossVariant::SupervisedAug: {
            if (!c.positive_id)
                throw std::invalid_argument("weighting: SupervisedAug needs a positive id "
                                            "attached to the contribution matrix");
            const auto it = std::lower_bound(c.training_ids.begin(), c.training_ids.end(),
                                             *c.positive_id);
            if (it == c.training_ids.end() || *it != *c.positive_id)
                throw std::invalid_argument("weighting: positive id not among training ids");
            a[it - c.training_ids.begin()] = -1.0;
            break;
        }
    }

    const double num = a.dot(s);
    if (cfg.variant == LossVariant::NoNorm) {
        out.loss = num;
        if (want_grad) out.grad_w = c.contributions.transpose() * a;
        return out;
    }

    const double den = s.norm();
    if (den < kNormGuard) {
        out.degenerate = true;
        return out;  // loss 0, gradient 0
    }
    out.loss = num / den;
    if (want_grad)
        out.grad_w = (c.contributions.transpose() * a) / den -
                     (num / (den * den * den)) * (c.contributions.transpose() * s);
    return out;
}

Eigen::VectorXd softmax_raw(const Eigen::VectorXd& raw) {
    Eigen::VectorXd p = (raw.array() - raw.maxCoeff()).exp();
    return p / p.sum();
}

// Chain rule through softmax: d/d raw_m = w_m (g_m - sum_j g_j w_j).
Eigen::VectorXd softmax_chain(const Eigen::VectorXd& grad_w, const Eigen::VectorXd& w) {
    const double dot = grad_w.dot(w);
    return (w.array() * (grad_w.array() - dot)).matrix();
}

}  // namespace

WeightVector softmax_weights(const Eigen::VectorXd& raw,
                             const std::vector<std::string>& names) {
    WeightVector w;
    w.values = softmax_raw(raw);
    w.group_names = names;
    return w;
}

double ssl_loss(const GroupContributionMatrix& contribs, const WeightVector& w, int k,
                bool* degenerate) {
    WeightLearnConfig cfg;
    cfg.k = k;
    cfg.variant = LossVariant::TopK;
    const LossEval e = eval_variant(contribs, w.values, cfg, false);
    if (degenerate) *degenerate = e.degenerate;
    return e.loss;
}

Eigen::VectorXd ssl_loss_gradient(const GroupContributionMatrix& contribs,
                                  const RawWeights& raw, int k) {
    WeightLearnConfig cfg;
    cfg.k = k;
    cfg.variant = LossVariant::TopK;
    const Eigen::VectorXd w = softmax_raw(raw.raw);
    const LossEval e = eval_variant(contribs, w, cfg, true);
    return softmax_chain(e.grad_w, w);
}

double variant_loss(const GroupContributionMatrix& contribs, const WeightVector& w,
                    const WeightLearnConfig& cfg) {
    return eval_variant(contribs, w.values, cfg, false).loss;
}

WeightVector learn_weights(std::span<const GroupContributionMatrix> contribs,
                           const WeightLearnConfig& cfg) {
    if (contribs.empty())
        throw std::invalid_argument("learn_weights: need at least one query");
    if (cfg.epochs < 1 || !(cfg.lr > 0.0) || cfg.k < 1 || cfg.lambda_reg < 0.0)
        throw std::invalid_argument("learn_weights: invalid config");
    const int m = contribs[0].num_groups();
    for (const auto& c : contribs) {
        if (c.num_groups() != m)
            throw std::invalid_argument("learn_weights: inconsistent group counts");
        if (cfg.k > c.rows())
            throw std::invalid_argument("learn_weights: k exceeds training-set size");
    }

    // Zero init: uniform softmax, so symmetric inputs stay symmetric.
    Eigen::VectorXd raw = Eigen::VectorXd::Zero(m);
    Eigen::VectorXd m1 = Eigen::VectorXd::Zero(m);
    Eigen::VectorXd m2 = Eigen::VectorXd::Zero(m);
    std::int64_t t = 0;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (const auto& c : contribs) {
            const Eigen::VectorXd w = softmax_raw(raw);
            const LossEval e = eval_variant(c, w, cfg, true);
            if (e.degenerate) continue;  // an all-zero query gives no update
            const Eigen::VectorXd g = softmax_chain(e.grad_w, w);
            ++t;
            m1 = kAdamBeta1 * m1 + (1.0 - kAdamBeta1) * g;
            m2 = kAdamBeta2 * m2 + (1.0 - kAdamBeta2) * g.cwiseProduct(g);
            const double bc1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(t));
            const double bc2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(t));
            const Eigen::VectorXd step =
                (m1 / bc1).array() / ((m2 / bc2).array().sqrt() + kAdamEps);
            raw -= cfg.lr * step + cfg.lr * cfg.lambda_reg * raw;
        }
    }
    return softmax_weights(raw, contribs[0].group_names);
}

AugmentedQuery make_augmented_query(const LabeledDataset& ds, std::int64_t id,
                                    double noise_std, std::uint64_t seed) {
    if (noise_std < 0.0)
        throw std::invalid_argument("make_augmented_query: noise_std must be >= 0");
    if (id < 0 || id >= ds.size())
        throw std::invalid_argument("make_augmented_query: id not found");
    AugmentedQuery q;
    q.positive_id = id;
    q.features = ds.features.row(id).transpose();
    if (noise_std > 0.0) {
        Prng rng(seed);
        for (Eigen::Index i = 0; i < q.features.size(); ++i)
            q.features[i] += noise_std * rng.normal();
    }
    return q;
}

const WeightVector& SweepResult::best_weights() const {
    if (best_cell < 0)
        throw std::runtime_error("sweep: no cell trained successfully");
    return *cells[static_cast<std::size_t>(best_cell)].weights;
}

SweepResult sweep(std::span<const GroupContributionMatrix> contribs,
                  const std::vector<int>& k_grid, const std::vector<double>& lambda_grid,
                  const WeightLearnConfig& base_cfg,
                  const std::function<double(const WeightVector&)>& selector, int jobs) {
    if (k_grid.empty() || lambda_grid.empty())
        throw std::invalid_argument("sweep: grids must be non-empty");
    SweepResult res;
    res.cells.resize(k_grid.size() * lambda_grid.size());
    auto run_cell = [&](std::size_t idx) {
        SweepCell& cell = res.cells[idx];
        cell.k = k_grid[idx / lambda_grid.size()];
        cell.lambda_reg = lambda_grid[idx % lambda_grid.size()];
        try {
            WeightLearnConfig cfg = base_cfg;
            cfg.k = cell.k;
            cfg.lambda_reg = cell.lambda_reg;
            WeightVector w = learn_weights(contribs, cfg);
            cell.selector_value = selector(w);
            cell.weights = std::move(w);
        } catch (const std::exception& e) {
            cell.error = e.what();
        }
    };
    const int workers = std::max(1, jobs);
    if (workers == 1) {
        for (std::size_t i = 0; i < res.cells.size(); ++i) run_cell(i);
    } else {
        std::vector<std::thread> threads;
        threads.reserve(static_cast<std::size_t>(workers));
        for (int w = 0; w < workers; ++w)
            threads.emplace_back([&, w] {
                for (std::size_t i = static_cast<std::size_t>(w); i < res.cells.size();
                     i += static_cast<std::size_t>(workers))
                    run_cell(i);
            });
        for (auto& t : threads) t.join();
    }
    // Winner by selector value; grid order breaks ties.
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < res.cells.size(); ++i) {
        if (res.cells[i].weights && res.cells[i].selector_value > best) {
            best = res.cells[i].selector_value;
            res.best_cell = static_cast<int>(i);
        }
    }
    return res;
}

double weight_cosine(const WeightVector& a, const WeightVector& b) {
    if (a.size() != b.size())
        throw std::invalid_argument("weight_cosine: dimension mismatch");
    const double na = a.values.norm(), nb = b.values.norm();
    if (na == 0.0 || nb == 0.0)
        throw std::invalid_argument("weight_cosine: zero-norm weight vector");
    return a.values.dot(b.values) / (na * nb);
}

void save_weights(const WeightVector& w, const std::string& path,
                  const std::string& config_comment) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("save_weights: cannot open " + path);
    out << "# " << (config_comment.empty() ? "attriweight weights" : config_comment) << "\n";
    char buf[64];
    for (int j = 0; j < w.size(); ++j) {
        std::snprintf(buf, sizeof buf, "%.17g", w.values[j]);
        out << w.group_names[static_cast<std::size_t>(j)] << '\t' << buf << "\n";
    }
    if (!out) throw IoError("save_weights: write failed for " + path);
}

WeightVector load_weights(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("load_weights: cannot open " + path);
    std::vector<std::string> names;
    std::vector<double> vals;
    std::string line;
    std::int64_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        while (!line.empty() && (line.back() == '\r' || line.back() == '\n'))
            line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos)
            throw ParseError("load_weights: missing tab on line " + std::to_string(line_no));
        try {
            names.push_back(line.substr(0, tab));
            vals.push_back(std::stod(line.substr(tab + 1)));
        } catch (const std::exception&) {
            throw ParseError("load_weights: malformed line " + std::to_string(line_no));
        }
    }
    if (names.empty()) throw ParseError("load_weights: no weight rows in " + path);
    WeightVector w;
    w.group_names = std::move(names);
    w.values = Eigen::Map<Eigen::VectorXd>(vals.data(), static_cast<Eigen::Index>(vals.size()));
    return w;
}

}  // namespace attriweight
