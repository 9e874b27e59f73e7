#include "attriweight/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "attriweight/errors.hpp"
#include "attriweight/prng.hpp"

namespace attriweight {

namespace {

Eigen::VectorXd random_unit_vector(Prng& rng, int dim) {
    Eigen::VectorXd v(dim);
    for (int i = 0; i < dim; ++i) v[i] = rng.normal();
    const double n = v.norm();
    if (n < 1e-300) return Eigen::VectorXd::Unit(dim, 0);
    return v / n;
}

std::vector<std::int64_t> iota_ids(std::int64_t n) {
    std::vector<std::int64_t> ids(static_cast<std::size_t>(n));
    std::iota(ids.begin(), ids.end(), std::int64_t{0});
    return ids;
}

}  // namespace

int LabeledDataset::num_classes() const {
    int m = 0;
    for (int y : labels) m = std::max(m, y + 1);
    return m;
}

LabeledDataset generate_gaussian_classes(int num_classes, int per_class, int dim,
                                         double separation, std::uint64_t seed) {
    if (num_classes < 2 || per_class < 1 || dim < 2 || separation <= 0.0)
        throw std::invalid_argument("generate_gaussian_classes: need num_classes >= 2, "
                                    "per_class >= 1, dim >= 2, separation > 0");

    Prng rng(seed);
    std::vector<Eigen::VectorXd> means;
    means.reserve(static_cast<std::size_t>(num_classes));
    for (int c = 0; c < num_classes; ++c)
        means.push_back(random_unit_vector(rng, dim) * separation);

    const std::int64_t n = static_cast<std::int64_t>(num_classes) * per_class;
    LabeledDataset ds;
    ds.features.resize(n, dim);
    ds.labels.resize(static_cast<std::size_t>(n));
    ds.ids = iota_ids(n);
    std::int64_t row = 0;
    for (int c = 0; c < num_classes; ++c) {
        for (int j = 0; j < per_class; ++j, ++row) {
            for (int k = 0; k < dim; ++k)
                ds.features(row, k) = means[static_cast<std::size_t>(c)][k] + rng.normal();
            ds.labels[static_cast<std::size_t>(row)] = c;
        }
    }
    return ds;
}

std::pair<Eigen::MatrixXd, Eigen::MatrixXd>
factor_means(int factors_a, int factors_b, int dim_a, int dim_b, std::uint64_t seed) {
    Prng rng(Prng::derive(seed, 0));
    Eigen::MatrixXd ma(factors_a, dim_a);
    for (int a = 0; a < factors_a; ++a)
        ma.row(a) = (random_unit_vector(rng, dim_a) * kFactorMeanScale).transpose();
    Eigen::MatrixXd mb(factors_b, dim_b);
    for (int b = 0; b < factors_b; ++b)
        mb.row(b) = (random_unit_vector(rng, dim_b) * kFactorMeanScale).transpose();
    return {ma, mb};
}

LabeledDataset generate_factor_dataset(int factors_a, int factors_b, int per_cell,
                                       int dim_a, int dim_b, std::uint64_t seed) {
    if (factors_a < 2 || factors_b < 2 || per_cell < 1 || dim_a < 1 || dim_b < 1)
        throw std::invalid_argument("generate_factor_dataset: need factors >= 2, "
                                    "per_cell >= 1, positive dims");

    const auto [ma, mb] = factor_means(factors_a, factors_b, dim_a, dim_b, seed);
    Prng rng(Prng::derive(seed, 1));

    const int dim = dim_a + dim_b;
    const std::int64_t n = static_cast<std::int64_t>(factors_a) * factors_b * per_cell;
    LabeledDataset ds;
    ds.features.resize(n, dim);
    ds.labels.resize(static_cast<std::size_t>(n));
    ds.factor_labels = Eigen::MatrixXi(n, 2);
    ds.ids = iota_ids(n);

    std::int64_t row = 0;
    for (int a = 0; a < factors_a; ++a) {
        for (int b = 0; b < factors_b; ++b) {
            for (int j = 0; j < per_cell; ++j, ++row) {
                for (int k = 0; k < dim_a; ++k)
                    ds.features(row, k) = ma(a, k) + kFactorNoiseStd * rng.normal();
                for (int k = 0; k < dim_b; ++k)
                    ds.features(row, dim_a + k) = mb(b, k) + kFactorNoiseStd * rng.normal();
                ds.labels[static_cast<std::size_t>(row)] = a * factors_b + b;
                (*ds.factor_labels)(row, 0) = a;
                (*ds.factor_labels)(row, 1) = b;
            }
        }
    }
    return ds;
}

std::pair<LabeledDataset, CorruptionRecord>
corrupt_labels_subset(const LabeledDataset& ds, const std::vector<std::int64_t>& ids,
                      double fraction, std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction < 1.0))
        throw std::invalid_argument("corrupt_labels: fraction must be in (0, 1)");
    const int classes = ds.num_classes();
    if (classes < 2)
        throw std::invalid_argument("corrupt_labels: need at least 2 classes");

    const auto n_corrupt = static_cast<std::int64_t>(
        std::llround(fraction * static_cast<double>(ids.size())));

    std::vector<std::int64_t> pool = ids;
    std::sort(pool.begin(), pool.end());
    Prng rng(seed);
    rng.shuffle(pool);
    pool.resize(static_cast<std::size_t>(n_corrupt));
    std::sort(pool.begin(), pool.end());

    LabeledDataset out = ds;
    CorruptionRecord rec;
    rec.corruption_fraction = fraction;
    rec.corrupted_ids = pool;
    for (std::int64_t id : pool) {
        const int old_label = ds.labels[static_cast<std::size_t>(id)];
        // Uniform over the other classes.
        int pick = static_cast<int>(rng.uniform_below(static_cast<std::uint64_t>(classes - 1)));
        if (pick >= old_label) ++pick;
        out.labels[static_cast<std::size_t>(id)] = pick;
        rec.original_labels[id] = old_label;
    }
    return {out, rec};
}

std::pair<LabeledDataset, CorruptionRecord>
corrupt_labels(const LabeledDataset& ds, double fraction, std::uint64_t seed) {
    return corrupt_labels_subset(ds, ds.ids, fraction, seed);
}

DataSplit make_splits(const LabeledDataset& ds, std::int64_t n_train,
                      std::int64_t n_weight, std::int64_t n_eval, std::uint64_t seed) {
    if (n_train < 0 || n_weight < 0 || n_eval < 0 ||
        n_train + n_weight + n_eval > ds.size())
        throw std::invalid_argument("make_splits: requested sizes exceed dataset");

    std::vector<std::int64_t> pool = ds.ids;
    Prng rng(seed);
    rng.shuffle(pool);

    DataSplit s;
    auto take = [&pool](std::int64_t offset, std::int64_t count) {
        std::vector<std::int64_t> out(pool.begin() + offset, pool.begin() + offset + count);
        std::sort(out.begin(), out.end());
        return out;
    };
    s.train_ids = take(0, n_train);
    s.weight_ids = take(n_train, n_weight);
    s.eval_ids = take(n_train + n_weight, n_eval);
    return s;
}

void save_csv(const LabeledDataset& ds, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("save_csv: cannot open " + path);

    const int d = ds.dim();
    const int f = ds.factor_labels ? static_cast<int>(ds.factor_labels->cols()) : 0;
    out << "id,label";
    for (int k = 0; k < d; ++k) out << ",f" << k;
    for (int k = 0; k < f; ++k) out << ",fa" << k;
    out << "\n";

    char buf[64];
    for (std::int64_t i = 0; i < ds.size(); ++i) {
        out << ds.ids[static_cast<std::size_t>(i)] << ','
            << ds.labels[static_cast<std::size_t>(i)];
        for (int k = 0; k < d; ++k) {
            std::snprintf(buf, sizeof buf, "%.17g", ds.features(i, k));
            out << ',' << buf;
        }
        for (int k = 0; k < f; ++k) out << ',' << (*ds.factor_labels)(i, k);
        out << "\n";
    }
    if (!out) throw IoError("save_csv: write failed for " + path);
}

LabeledDataset load_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("load_csv: cannot open " + path);

    std::string header;
    if (!std::getline(in, header) || header.empty())
        throw ParseError("load_csv: no header in " + path);
    while (!header.empty() && (header.back() == '\r' || header.back() == '\n'))
        header.pop_back();

    std::vector<std::string> cols;
    {
        std::stringstream ss(header);
        std::string tok;
        while (std::getline(ss, tok, ',')) cols.push_back(tok);
    }
    if (cols.size() < 3 || cols[0] != "id" || cols[1] != "label")
        throw ParseError("load_csv: bad header in " + path);
    int d = 0, f = 0;
    for (std::size_t i = 2; i < cols.size(); ++i) {
        if (cols[i] == "f" + std::to_string(d)) ++d;
        else if (cols[i] == "fa" + std::to_string(f)) ++f;
        else throw ParseError("load_csv: unexpected column '" + cols[i] + "'");
    }
    if (d == 0) throw ParseError("load_csv: no feature columns in " + path);

    std::vector<std::int64_t> ids;
    std::vector<int> labels;
    std::vector<double> feats;
    std::vector<int> facs;
    std::string line;
    std::int64_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        while (!line.empty() && (line.back() == '\r' || line.back() == '\n'))
            line.pop_back();
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string tok;
        std::vector<std::string> parts;
        while (std::getline(ss, tok, ',')) parts.push_back(tok);
        if (parts.size() != cols.size())
            throw ParseError("load_csv: row " + std::to_string(line_no) +
                             " has " + std::to_string(parts.size()) +
                             " fields, expected " + std::to_string(cols.size()));
        try {
            std::size_t pos = 0;
            ids.push_back(std::stoll(parts[0], &pos));
            labels.push_back(std::stoi(parts[1]));
            for (int k = 0; k < d; ++k)
                feats.push_back(std::stod(parts[static_cast<std::size_t>(2 + k)]));
            for (int k = 0; k < f; ++k)
                facs.push_back(std::stoi(parts[static_cast<std::size_t>(2 + d + k)]));
        } catch (const std::exception&) {
            throw ParseError("load_csv: malformed row " + std::to_string(line_no) +
                             " in " + path);
        }
    }

    const auto n = static_cast<std::int64_t>(ids.size());
    LabeledDataset ds;
    ds.ids = std::move(ids);
    ds.labels = std::move(labels);
    ds.features.resize(n, d);
    for (std::int64_t i = 0; i < n; ++i)
        for (int k = 0; k < d; ++k)
            ds.features(i, k) = feats[static_cast<std::size_t>(i * d + k)];
    if (f > 0) {
        ds.factor_labels = Eigen::MatrixXi(n, f);
        for (std::int64_t i = 0; i < n; ++i)
            for (int k = 0; k < f; ++k)
                (*ds.factor_labels)(i, k) = facs[static_cast<std::size_t>(i * f + k)];
    }
    return ds;
}

}  // namespace attriweight
