#include "attriweight/model.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "attriweight/errors.hpp"
#include "attriweight/prng.hpp"

namespace attriweight {

namespace {

// Stream tag for the distractor group's per-example noise.
constexpr std::uint64_t kDistractorTag = 0x64697374726163ull;

struct Mlp1Dims {
    int d = 0, h = 0, k = 0;
    std::vector<int> widths;   // column-block widths, sum = d
    int distractor = 0;
};

Mlp1Dims mlp1_dims(const ArchSpec& a) {
    Mlp1Dims m;
    m.d = a.input_dim;
    m.h = a.hidden_dim;
    m.k = a.num_classes;
    m.distractor = a.distractor_dim;
    const int s = a.hidden_splits;
    const int base = m.d / s, rem = m.d % s;
    for (int i = 0; i < s; ++i) m.widths.push_back(base + (i < rem ? 1 : 0));
    return m;
}

double logsumexp(const Eigen::VectorXd& z) {
    const double m = z.maxCoeff();
    return m + std::log((z.array() - m).exp().sum());
}

Eigen::VectorXd softmax(const Eigen::VectorXd& z) {
    Eigen::VectorXd p = (z.array() - z.maxCoeff()).exp();
    return p / p.sum();
}

// Reads the hidden weight matrix out of the column-block layout.
Eigen::MatrixXd gather_hidden_weights(const ModelCheckpoint& ckpt, const Mlp1Dims& m) {
    Eigen::MatrixXd w1(m.h, m.d);
    int offset = 0, col = 0;
    for (int width : m.widths) {
        for (int r = 0; r < m.h; ++r)
            for (int c = 0; c < width; ++c)
                w1(r, col + c) = ckpt.flat_params[offset + r * width + c];
        offset += m.h * width;
        col += width;
    }
    return w1;
}

void scatter_hidden_weights(const Eigen::MatrixXd& dw1, const Mlp1Dims& m,
                            Eigen::VectorXd& flat) {
    int offset = 0, col = 0;
    for (int width : m.widths) {
        for (int r = 0; r < m.h; ++r)
            for (int c = 0; c < width; ++c)
                flat[offset + r * width + c] = dw1(r, col + c);
        offset += m.h * width;
        col += width;
    }
}

Eigen::VectorXd logits_of(const ModelCheckpoint& ckpt, const Eigen::VectorXd& x) {
    const ArchSpec& a = ckpt.arch;
    if (x.size() != a.input_dim)
        throw std::invalid_argument("model: feature dimension mismatch");
    if (a.kind == Architecture::LogisticRegression) {
        const int k = a.num_classes, d = a.input_dim;
        Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
            w(ckpt.flat_params.data(), k, d);
        Eigen::Map<const Eigen::VectorXd> b(ckpt.flat_params.data() + k * d, k);
        return w * x + b;
    }
    const Mlp1Dims m = mlp1_dims(a);
    const Eigen::MatrixXd w1 = gather_hidden_weights(ckpt, m);
    const int hw = m.h * m.d;
    Eigen::Map<const Eigen::VectorXd> b1(ckpt.flat_params.data() + hw, m.h);
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
        w2(ckpt.flat_params.data() + hw + m.h, m.k, m.h);
    Eigen::Map<const Eigen::VectorXd> b2(ckpt.flat_params.data() + hw + m.h + m.k * m.h, m.k);
    const Eigen::VectorXd hvec = ((w1 * x + b1).array().tanh()).matrix();
    return w2 * hvec + b2;
}

// Cross-entropy gradient over the trainable parameters; the distractor
// block (if any) is left untouched in `out`.
void backward_real(const ModelCheckpoint& ckpt, const Eigen::VectorXd& x, int y,
                   Eigen::VectorXd& out) {
    const ArchSpec& a = ckpt.arch;
    if (y < 0 || y >= a.num_classes)
        throw std::invalid_argument("model: label out of range");
    if (a.kind == Architecture::LogisticRegression) {
        const int k = a.num_classes, d = a.input_dim;
        Eigen::VectorXd dz = softmax(logits_of(ckpt, x));
        dz[y] -= 1.0;
        for (int r = 0; r < k; ++r)
            for (int c = 0; c < d; ++c)
                out[r * d + c] = dz[r] * x[c];
        for (int r = 0; r < k; ++r) out[k * d + r] = dz[r];
        return;
    }
    const Mlp1Dims m = mlp1_dims(a);
    const Eigen::MatrixXd w1 = gather_hidden_weights(ckpt, m);
    const int hw = m.h * m.d;
    Eigen::Map<const Eigen::VectorXd> b1(ckpt.flat_params.data() + hw, m.h);
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
        w2(ckpt.flat_params.data() + hw + m.h, m.k, m.h);
    Eigen::Map<const Eigen::VectorXd> b2(ckpt.flat_params.data() + hw + m.h + m.k * m.h, m.k);

    const Eigen::VectorXd hvec = ((w1 * x + b1).array().tanh()).matrix();
    Eigen::VectorXd dz = softmax(w2 * hvec + b2);
    dz[y] -= 1.0;
    const Eigen::VectorXd dh = w2.transpose() * dz;
    const Eigen::VectorXd da = (dh.array() * (1.0 - hvec.array().square())).matrix();

    scatter_hidden_weights(da * x.transpose(), m, out);
    int off = hw;
    for (int r = 0; r < m.h; ++r) out[off + r] = da[r];
    off += m.h;
    for (int r = 0; r < m.k; ++r)
        for (int c = 0; c < m.h; ++c)
            out[off + r * m.h + c] = dz[r] * hvec[c];
    off += m.k * m.h;
    for (int r = 0; r < m.k; ++r) out[off + r] = dz[r];
}

void fill_distractor_noise(const ModelCheckpoint& ckpt, const Eigen::VectorXd& x,
                           Eigen::VectorXd& out) {
    const int p = ckpt.arch.distractor_dim;
    if (p <= 0) return;
    const int off = ckpt.grouping.total_dim - p;
    // Scale rides on the frozen head parameters, so it survives file IO.
    const double scale = std::sqrt(
        ckpt.flat_params.segment(off, p).squaredNorm() / static_cast<double>(p));
    const std::uint64_t h = fnv1a(x.data(), static_cast<std::size_t>(x.size()) * sizeof(double));
    Prng rng(Prng::derive(kDistractorTag, h));
    for (int i = 0; i < p; ++i) out[off + i] = scale * rng.normal();
}

std::string hash_config(const ArchSpec& a, const TrainConfig& c) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "arch=%d,d=%d,k=%d,h=%d,s=%d,dd=%d,dsc=%.17g|"
                  "e=%d,lr=%.17g,b=%d,wd=%.17g,seed=%llu",
                  static_cast<int>(a.kind), a.input_dim, a.num_classes, a.hidden_dim,
                  a.hidden_splits, a.distractor_dim, a.distractor_scale,
                  c.epochs, c.lr, c.batch_size, c.weight_decay,
                  static_cast<unsigned long long>(c.seed));
    char hex[17];
    std::snprintf(hex, sizeof hex, "%016llx",
                  static_cast<unsigned long long>(fnv1a(buf, std::strlen(buf))));
    return std::string(hex);
}

}  // namespace

int ParameterGrouping::index_of(const std::string& name) const {
    for (std::size_t i = 0; i < groups.size(); ++i)
        if (groups[i].first == name) return static_cast<int>(i);
    return -1;
}

int ParameterGrouping::offset_of(int group_index) const {
    int off = 0;
    for (int i = 0; i < group_index; ++i) off += groups[static_cast<std::size_t>(i)].second;
    return off;
}

ParameterGrouping make_grouping(const ArchSpec& a) {
    if (a.input_dim < 1 || a.num_classes < 2)
        throw std::invalid_argument("make_grouping: need input_dim >= 1, num_classes >= 2");
    ParameterGrouping g;
    if (a.kind == Architecture::LogisticRegression) {
        g.groups.emplace_back("weights", a.num_classes * a.input_dim);
        g.groups.emplace_back("bias", a.num_classes);
    } else {
        if (a.hidden_dim < 1)
            throw std::invalid_argument("make_grouping: Mlp1 needs hidden_dim >= 1");
        if (a.hidden_splits < 1 || a.hidden_splits > a.input_dim)
            throw std::invalid_argument("make_grouping: hidden_splits out of range");
        const Mlp1Dims m = mlp1_dims(a);
        if (m.widths.size() == 1) {
            g.groups.emplace_back("hidden_w", m.h * m.d);
        } else {
            for (std::size_t i = 0; i < m.widths.size(); ++i)
                g.groups.emplace_back("hidden_w." + std::to_string(i), m.h * m.widths[i]);
        }
        g.groups.emplace_back("hidden_b", m.h);
        g.groups.emplace_back("output_w", m.k * m.h);
        g.groups.emplace_back("output_b", m.k);
        if (a.distractor_dim > 0)
            g.groups.emplace_back("distractor", a.distractor_dim);
    }
    for (const auto& [name, dim] : g.groups) g.total_dim += dim;
    return g;
}

ModelCheckpoint train(const LabeledDataset& ds, const std::vector<std::int64_t>& ids,
                      const ArchSpec& arch, const TrainConfig& cfg) {
    if (ids.empty()) throw std::invalid_argument("train: empty id set");
    if (cfg.epochs < 1) throw std::invalid_argument("train: epochs must be >= 1");
    if (cfg.batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
    if (!(cfg.lr > 0.0)) throw std::invalid_argument("train: lr must be > 0");
    for (std::int64_t id : ids) {
        if (id < 0 || id >= ds.size())
            throw std::invalid_argument("train: id out of range");
        if (ds.labels[static_cast<std::size_t>(id)] >= arch.num_classes)
            throw std::invalid_argument("train: label exceeds arch class count");
    }

    ModelCheckpoint ckpt;
    ckpt.arch = arch;
    ckpt.grouping = make_grouping(arch);
    ckpt.flat_params = Eigen::VectorXd::Zero(ckpt.grouping.total_dim);
    ckpt.train_config_hash = hash_config(arch, cfg);

    Prng init_rng(Prng::derive(cfg.seed, 0));
    if (arch.kind == Architecture::Mlp1) {
        const Mlp1Dims m = mlp1_dims(arch);
        const int hw = m.h * m.d;
        const double s1 = 1.0 / std::sqrt(static_cast<double>(m.d));
        const double s2 = 1.0 / std::sqrt(static_cast<double>(m.h));
        Eigen::MatrixXd w1(m.h, m.d);
        for (int r = 0; r < m.h; ++r)
            for (int c = 0; c < m.d; ++c) w1(r, c) = s1 * init_rng.normal();
        scatter_hidden_weights(w1, m, ckpt.flat_params);
        for (int i = 0; i < m.k * m.h; ++i)
            ckpt.flat_params[hw + m.h + i] = s2 * init_rng.normal();
        if (m.distractor > 0) {
            const int off = ckpt.grouping.total_dim - m.distractor;
            for (int i = 0; i < m.distractor; ++i)
                ckpt.flat_params[off + i] = arch.distractor_scale * init_rng.normal();
        }
    }
    // Logistic regression starts at zero; the objective is convex.

    const int trainable = ckpt.grouping.total_dim - arch.distractor_dim;
    std::vector<std::int64_t> order(ids);
    std::sort(order.begin(), order.end());

    Prng shuffle_rng(Prng::derive(cfg.seed, 1));
    Eigen::VectorXd grad(ckpt.grouping.total_dim);
    Eigen::VectorXd batch_grad(trainable);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            batch_grad.setZero();
            for (std::size_t i = start; i < end; ++i) {
                const auto id = static_cast<std::size_t>(order[i]);
                backward_real(ckpt, ds.features.row(static_cast<Eigen::Index>(id)).transpose(),
                              ds.labels[id], grad);
                batch_grad += grad.head(trainable);
            }
            batch_grad /= static_cast<double>(end - start);
            if (cfg.weight_decay != 0.0)
                batch_grad += cfg.weight_decay * ckpt.flat_params.head(trainable);
            ckpt.flat_params.head(trainable) -= cfg.lr * batch_grad;
        }
    }
    return ckpt;
}

ModelCheckpoint retrain_on_subset(const LabeledDataset& ds,
                                  const std::vector<std::int64_t>& subset_ids,
                                  const ArchSpec& arch, const TrainConfig& cfg) {
    if (subset_ids.empty()) throw std::invalid_argument("retrain_on_subset: empty subset");
    return train(ds, subset_ids, arch, cfg);
}

Eigen::VectorXd per_example_gradient(const ModelCheckpoint& ckpt,
                                     const Eigen::VectorXd& x, int y) {
    Eigen::VectorXd g = Eigen::VectorXd::Zero(ckpt.grouping.total_dim);
    backward_real(ckpt, x, y, g);
    fill_distractor_noise(ckpt, x, g);
    return g;
}

double loss(const ModelCheckpoint& ckpt, const Eigen::VectorXd& x, int y) {
    if (y < 0 || y >= ckpt.arch.num_classes)
        throw std::invalid_argument("loss: label out of range");
    const Eigen::VectorXd z = logits_of(ckpt, x);
    return logsumexp(z) - z[y];
}

double model_output(const ModelCheckpoint& ckpt, const Eigen::VectorXd& x, int y) {
    return -loss(ckpt, x, y);
}

Eigen::VectorXd predict_proba(const ModelCheckpoint& ckpt, const Eigen::VectorXd& x) {
    return softmax(logits_of(ckpt, x));
}

int predict(const ModelCheckpoint& ckpt, const Eigen::VectorXd& x) {
    const Eigen::VectorXd z = logits_of(ckpt, x);
    int best = 0;
    for (int i = 1; i < z.size(); ++i)
        if (z[i] > z[best]) best = i;
    return best;
}

double accuracy(const ModelCheckpoint& ckpt, const LabeledDataset& ds,
                const std::vector<std::int64_t>& ids) {
    if (ids.empty()) return 0.0;
    std::int64_t hits = 0;
    for (std::int64_t id : ids)
        if (predict(ckpt, ds.features.row(id).transpose()) ==
            ds.labels[static_cast<std::size_t>(id)])
            ++hits;
    return static_cast<double>(hits) / static_cast<double>(ids.size());
}

ModelCheckpoint sgd_step(const ModelCheckpoint& ckpt,
                         const std::vector<std::pair<Eigen::VectorXd, int>>& batch,
                         double lr) {
    if (batch.empty()) throw std::invalid_argument("sgd_step: empty batch");
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(ckpt.grouping.total_dim);
    for (const auto& [x, y] : batch) mean += per_example_gradient(ckpt, x, y);
    mean /= static_cast<double>(batch.size());
    ModelCheckpoint out = ckpt;
    out.flat_params -= lr * mean;
    return out;
}

namespace {

template <typename T>
void write_raw(std::ofstream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_raw(std::ifstream& in, const std::string& path) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw FormatError("checkpoint: truncated file " + path);
    return v;
}

}  // namespace

void save_checkpoint(const ModelCheckpoint& ckpt, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("save_checkpoint: cannot open " + path);
    out.write("ATWC", 4);
    write_raw(out, std::uint32_t{1});
    write_raw(out, static_cast<std::uint8_t>(ckpt.arch.kind));
    write_raw(out, static_cast<std::uint32_t>(ckpt.grouping.groups.size()));
    for (const auto& [name, dim] : ckpt.grouping.groups) {
        write_raw(out, static_cast<std::uint16_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_raw(out, static_cast<std::uint32_t>(dim));
    }
    out.write(reinterpret_cast<const char*>(ckpt.flat_params.data()),
              static_cast<std::streamsize>(sizeof(double) * ckpt.flat_params.size()));
    if (!out) throw IoError("save_checkpoint: write failed for " + path);
}

ModelCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("load_checkpoint: cannot open " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "ATWC", 4) != 0)
        throw FormatError("checkpoint: bad magic in " + path);
    const auto version = read_raw<std::uint32_t>(in, path);
    if (version != 1)
        throw FormatError("checkpoint: unsupported version in " + path);
    const auto tag = read_raw<std::uint8_t>(in, path);
    if (tag > 1) throw FormatError("checkpoint: unknown architecture tag in " + path);

    ModelCheckpoint ckpt;
    ckpt.arch.kind = static_cast<Architecture>(tag);
    const auto count = read_raw<std::uint32_t>(in, path);
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto len = read_raw<std::uint16_t>(in, path);
        std::string name(len, '\0');
        in.read(name.data(), len);
        if (!in) throw FormatError("checkpoint: truncated file " + path);
        const auto dim = read_raw<std::uint32_t>(in, path);
        ckpt.grouping.groups.emplace_back(name, static_cast<int>(dim));
        ckpt.grouping.total_dim += static_cast<int>(dim);
    }
    ckpt.flat_params.resize(ckpt.grouping.total_dim);
    in.read(reinterpret_cast<char*>(ckpt.flat_params.data()),
            static_cast<std::streamsize>(sizeof(double) * ckpt.flat_params.size()));
    if (!in) throw FormatError("checkpoint: truncated file " + path);

    // Rebuild the architecture from the group table.
    ArchSpec& a = ckpt.arch;
    const auto& g = ckpt.grouping;
    if (a.kind == Architecture::LogisticRegression) {
        const int bi = g.index_of("bias"), wi = g.index_of("weights");
        if (bi < 0 || wi < 0)
            throw FormatError("checkpoint: grouping does not match architecture");
        a.num_classes = g.groups[static_cast<std::size_t>(bi)].second;
        a.input_dim = g.groups[static_cast<std::size_t>(wi)].second / a.num_classes;
    } else {
        const int hb = g.index_of("hidden_b"), ob = g.index_of("output_b");
        if (hb < 0 || ob < 0)
            throw FormatError("checkpoint: grouping does not match architecture");
        a.hidden_dim = g.groups[static_cast<std::size_t>(hb)].second;
        a.num_classes = g.groups[static_cast<std::size_t>(ob)].second;
        int hidden_total = 0, splits = 0;
        for (const auto& [name, dim] : g.groups)
            if (name.rfind("hidden_w", 0) == 0) { hidden_total += dim; ++splits; }
        a.hidden_splits = splits;
        a.input_dim = hidden_total / a.hidden_dim;
        const int di = g.index_of("distractor");
        if (di >= 0) {
            a.distractor_dim = g.groups[static_cast<std::size_t>(di)].second;
            const int off = g.offset_of(di);
            a.distractor_scale = std::sqrt(
                ckpt.flat_params.segment(off, a.distractor_dim).squaredNorm() /
                static_cast<double>(a.distractor_dim));
        }
    }
    if (make_grouping(a).total_dim != g.total_dim)
        throw FormatError("checkpoint: inconsistent group table in " + path);
    return ckpt;
}

}  // namespace attriweight
