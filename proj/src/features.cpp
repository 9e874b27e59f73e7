#include "attriweight/features.hpp"

#include <zlib.h>

#include <algorithm>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "attriweight/errors.hpp"
#include "attriweight/prng.hpp"

namespace attriweight {

int ProjectionSpec::output_dim() const {
    int d = 0;
    for (const auto& g : groups) d += g.output_dim;
    return d;
}

ProjectionSpec identity_projection(const ParameterGrouping& grouping) {
    ProjectionSpec p;
    p.kind = ProjectionKind::Identity;
    for (const auto& [name, dim] : grouping.groups)
        p.groups.push_back({name, dim, dim});
    return p;
}

ProjectionSpec build_projection(const ParameterGrouping& grouping,
                                int target_dim_per_group, std::uint64_t seed) {
    if (target_dim_per_group < 1)
        throw std::invalid_argument("build_projection: target dim must be >= 1");
    ProjectionSpec p;
    p.kind = ProjectionKind::Rademacher;
    p.seed = seed;
    for (const auto& [name, dim] : grouping.groups) {
        if (target_dim_per_group > dim)
            throw std::invalid_argument("build_projection: target dim " +
                                        std::to_string(target_dim_per_group) +
                                        " exceeds group '" + name + "' dim " +
                                        std::to_string(dim));
        p.groups.push_back({name, dim, target_dim_per_group});
    }
    return p;
}

Eigen::VectorXd project_gradient(const ProjectionSpec& proj, const Eigen::VectorXd& grad) {
    int input_total = 0;
    for (const auto& g : proj.groups) input_total += g.input_dim;
    if (grad.size() != input_total)
        throw std::invalid_argument("project_gradient: gradient dimension mismatch");

    Eigen::VectorXd out(proj.output_dim());
    if (proj.kind == ProjectionKind::Identity) {
        out = grad;
        return out;
    }
    int in_off = 0, out_off = 0;
    for (std::size_t j = 0; j < proj.groups.size(); ++j) {
        const auto& g = proj.groups[j];
        // Signs stream row-major over the (output_dim x input_dim) block.
        Prng rng(Prng::derive(proj.seed, j));
        const double scale = 1.0 / std::sqrt(static_cast<double>(g.output_dim));
        for (int r = 0; r < g.output_dim; ++r) {
            double acc = 0.0;
            for (int c = 0; c < g.input_dim; ++c)
                acc += rng.sign() * grad[in_off + c];
            out[out_off + r] = scale * acc;
        }
        in_off += g.input_dim;
        out_off += g.output_dim;
    }
    return out;
}

int GradientFeatureStore::feature_dim() const {
    int d = 0;
    for (const auto& [name, dim] : group_layout) d += dim;
    return d;
}

int GradientFeatureStore::group_offset(int group_index) const {
    int off = 0;
    for (int i = 0; i < group_index; ++i)
        off += group_layout[static_cast<std::size_t>(i)].second;
    return off;
}

Eigen::VectorXd GradientFeatureStore::row_f64(std::int64_t n) const {
    const int d = feature_dim();
    Eigen::VectorXd v(d);
    const float* r = row(n);
    for (int i = 0; i < d; ++i) v[i] = static_cast<double>(r[i]);
    return v;
}

std::int64_t GradientFeatureStore::row_of(std::int64_t example_id) const {
    const auto it = std::lower_bound(example_ids.begin(), example_ids.end(), example_id);
    if (it == example_ids.end() || *it != example_id)
        throw std::invalid_argument("feature store: id " + std::to_string(example_id) +
                                    " not found");
    return static_cast<std::int64_t>(it - example_ids.begin());
}

GradientFeatureStore extract_features(const ModelCheckpoint& ckpt, const LabeledDataset& ds,
                                      const std::vector<std::int64_t>& ids,
                                      const ProjectionSpec& proj) {
    if (proj.groups.size() != ckpt.grouping.groups.size())
        throw std::invalid_argument("extract_features: projection grouping mismatch");
    for (std::size_t i = 0; i < proj.groups.size(); ++i)
        if (proj.groups[i].name != ckpt.grouping.groups[i].first ||
            proj.groups[i].input_dim != ckpt.grouping.groups[i].second)
            throw std::invalid_argument("extract_features: projection grouping mismatch");

    std::vector<std::int64_t> sorted(ids);
    std::sort(sorted.begin(), sorted.end());
    for (std::int64_t id : sorted)
        if (id < 0 || id >= ds.size())
            throw std::invalid_argument("extract_features: id " + std::to_string(id) +
                                        " not found in dataset");

    GradientFeatureStore store;
    store.example_ids = sorted;
    for (const auto& g : proj.groups) store.group_layout.emplace_back(g.name, g.output_dim);
    const int d = store.feature_dim();
    store.data.resize(static_cast<std::size_t>(sorted.size()) * static_cast<std::size_t>(d));
    store.meta.checkpoint_hash = ckpt.train_config_hash;
    store.meta.projection_seed = proj.seed;

    for (std::size_t n = 0; n < sorted.size(); ++n) {
        const auto id = sorted[n];
        const Eigen::VectorXd grad = per_example_gradient(
            ckpt, ds.features.row(id).transpose(), ds.labels[static_cast<std::size_t>(id)]);
        const Eigen::VectorXd feat = project_gradient(proj, grad);
        float* out = store.data.data() + n * static_cast<std::size_t>(d);
        for (int i = 0; i < d; ++i) out[i] = static_cast<float>(feat[i]);
    }
    return store;
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
    if (!in) throw FormatError("feature store: truncated file " + path);
    return v;
}

std::uint32_t payload_crc(const std::vector<float>& data) {
    return static_cast<std::uint32_t>(
        crc32(0L, reinterpret_cast<const Bytef*>(data.data()),
              static_cast<uInt>(data.size() * sizeof(float))));
}

}  // namespace

void save_store(const GradientFeatureStore& store, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("save_store: cannot open " + path);
    out.write("GFST", 4);
    write_raw(out, std::uint32_t{1});
    write_raw(out, static_cast<std::uint64_t>(store.rows()));
    write_raw(out, static_cast<std::uint32_t>(store.group_layout.size()));
    for (const auto& [name, dim] : store.group_layout) {
        write_raw(out, static_cast<std::uint16_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_raw(out, static_cast<std::uint32_t>(dim));
    }
    for (std::int64_t id : store.example_ids)
        write_raw(out, static_cast<std::uint64_t>(id));
    out.write(reinterpret_cast<const char*>(store.data.data()),
              static_cast<std::streamsize>(store.data.size() * sizeof(float)));
    write_raw(out, payload_crc(store.data));
    if (!out) throw IoError("save_store: write failed for " + path);
}

GradientFeatureStore load_store(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("load_store: cannot open " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "GFST", 4) != 0)
        throw FormatError("feature store: bad magic in " + path);
    const auto version = read_raw<std::uint32_t>(in, path);
    if (version != 1)
        throw FormatError("feature store: unsupported version in " + path);

    GradientFeatureStore store;
    const auto n = read_raw<std::uint64_t>(in, path);
    const auto m = read_raw<std::uint32_t>(in, path);
    for (std::uint32_t i = 0; i < m; ++i) {
        const auto len = read_raw<std::uint16_t>(in, path);
        std::string name(len, '\0');
        in.read(name.data(), len);
        if (!in) throw FormatError("feature store: truncated file " + path);
        const auto dim = read_raw<std::uint32_t>(in, path);
        store.group_layout.emplace_back(name, static_cast<int>(dim));
    }
    store.example_ids.resize(n);
    for (std::uint64_t i = 0; i < n; ++i)
        store.example_ids[i] = static_cast<std::int64_t>(read_raw<std::uint64_t>(in, path));

    store.data.resize(n * static_cast<std::uint64_t>(store.feature_dim()));
    in.read(reinterpret_cast<char*>(store.data.data()),
            static_cast<std::streamsize>(store.data.size() * sizeof(float)));
    if (!in) throw FormatError("feature store: truncated file " + path);
    const auto stored_crc = read_raw<std::uint32_t>(in, path);
    if (stored_crc != payload_crc(store.data))
        throw ChecksumError("feature store: payload checksum mismatch in " + path);
    return store;
}

}  // namespace attriweight
