#include "config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace attriweight::cli {

namespace {

struct KeyInfo {
    const char* section;
    const char* key;
    const char* type;  // int | real | string | list
    const char* def;
    const char* help;
};

// The complete key schema. --set flags and config-file keys are the same
// namespace; anything not listed here is rejected.
const KeyInfo kSchema[] = {
    {"global", "seed", "int", "42", "master seed for every derived stream"},
    {"global", "outdir", "string", "out", "artifact root directory"},
    {"global", "jobs", "int", "1", "threads for subset retraining and sweeps"},

    {"dataset", "kind", "string", "gaussian", "gaussian | factor"},
    {"dataset", "num_classes", "int", "5", "gaussian: number of classes"},
    {"dataset", "per_class", "int", "280", "gaussian: examples per class"},
    {"dataset", "dim", "int", "20", "gaussian: feature dimension"},
    {"dataset", "separation", "real", "3.0", "gaussian: class mean distance"},
    {"dataset", "factors_a", "int", "10", "factor: categories of factor a"},
    {"dataset", "factors_b", "int", "10", "factor: categories of factor b"},
    {"dataset", "per_cell", "int", "10", "factor: examples per (a, b) cell"},
    {"dataset", "dim_a", "int", "8", "factor: coordinates carrying factor a"},
    {"dataset", "dim_b", "int", "8", "factor: coordinates carrying factor b"},
    {"dataset", "corrupt_fraction", "real", "0.0",
     "fraction of train labels to flip (0 disables)"},
    {"dataset", "n_train", "int", "1000", "train split size"},
    {"dataset", "n_weight", "int", "200", "weight-learning split size"},
    {"dataset", "n_eval", "int", "100", "evaluation split size"},

    {"model", "arch", "string", "mlp1", "logreg | mlp1"},
    {"model", "hidden_dim", "int", "16", "mlp1 hidden width"},
    {"model", "hidden_splits", "int", "4", "column blocks of the hidden weights"},
    {"model", "distractor_dim", "int", "64", "frozen noise group size (0 disables)"},
    {"model", "distractor_scale", "real", "1.0", "distractor parameter scale"},
    {"model", "epochs", "int", "40", "training epochs"},
    {"model", "lr", "real", "0.05", "training learning rate"},
    {"model", "batch_size", "int", "32", "minibatch size"},
    {"model", "weight_decay", "real", "0.0", "l2 weight decay"},

    {"projection", "kind", "string", "identity", "identity | rademacher"},
    {"projection", "target_dim_per_group", "int", "16", "rademacher output dim per group"},

    {"attribution", "method", "string", "tracin", "tracin | trak"},
    {"attribution", "lambda", "real", "0.5", "trak kernel regularization"},
    {"attribution", "self_influence_top_t", "int", "10",
     "top-t row sum used to normalize self-influence"},

    {"weighting", "k", "int", "10", "pseudo-positive count"},
    {"weighting", "lambda_reg", "real", "0.0", "weight decay on raw logits"},
    {"weighting", "lr", "real", "0.01", "weight-learning rate"},
    {"weighting", "epochs", "int", "10", "weight-learning epochs"},
    {"weighting", "loss_variant", "string", "topk",
     "topk | supervised | bottomk | gap | nonorm"},
    {"weighting", "weights_file", "string", "", "weights path (default: learn-weights output)"},
    {"weighting", "weights_file_b", "string", "", "second weights path for weight-cosine"},
    {"weighting", "aug_noise_std", "real", "0.05", "supervised-variant query jitter"},
    {"weighting", "k_grid", "list", "1,5,10,20,50,100,200,500,1000,5000", "sweep k values"},
    {"weighting", "lambda_grid", "list", "0.0,0.02,0.1,0.2,0.3,0.4,0.5,0.8,1.0,1.5",
     "sweep weight-decay values"},

    {"eval", "m_subsets", "int", "64", "LDS retraining subsets"},
    {"eval", "alpha", "real", "0.5", "LDS subset fraction"},
    {"eval", "tailpatch_top_k", "int", "10", "proponents per tail-patch step"},
    {"eval", "tailpatch_lr", "real", "-1.0", "tail-patch step size (-1: model lr)"},
    {"eval", "recall_k", "int", "10", "recall cutoff"},
    {"eval", "recall_queries_per_split", "int", "100", "recall eval queries per split"},
    {"eval", "recall_weight_queries", "int", "200",
     "factor-emphasis queries for fine-grained weight learning"},
    {"eval", "noise_grid", "list", "0,0.1,0.3,1,3,10,30", "noise-sweep scale multipliers"},

    {"oracle", "alphas", "list", "4,2,1,1,0.5,0.25,0,0", "group signal sensitivities"},
    {"oracle", "sigmas", "list", "1,1,1,1,1,1,1,1", "group noise stds"},
    {"oracle", "n_examples", "int", "5000", "rows per oracle instance"},
    {"oracle", "sparsity", "real", "0.02", "fraction of rows with influence"},
    {"oracle", "n_queries", "int", "20", "oracle weight-learning queries"},
};

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r\n");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r\n");
    return s.substr(begin, end - begin + 1);
}

const KeyInfo* find_key(const std::string& section, const std::string& key) {
    for (const auto& info : kSchema)
        if (section == info.section && key == info.key) return &info;
    return nullptr;
}

}  // namespace

RunConfig::RunConfig() {
    for (const auto& info : kSchema) values_[info.section][info.key] = info.def;
}

RunConfig RunConfig::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    RunConfig cfg;
    std::string line, section;
    std::int64_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#' || t[0] == ';') continue;
        if (t.front() == '[') {
            if (t.back() != ']')
                throw ConfigError("config line " + std::to_string(line_no) +
                                  ": malformed section header");
            section = trim(t.substr(1, t.size() - 2));
            if (!cfg.values_.count(section))
                throw ConfigError("config line " + std::to_string(line_no) +
                                  ": unknown section [" + section + "]");
            continue;
        }
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
        if (section.empty())
            throw ConfigError("config line " + std::to_string(line_no) +
                              ": key outside any [section]");
        cfg.set_checked(section, trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
    }
    return cfg;
}

void RunConfig::set(const std::string& dotted_key, const std::string& value) {
    const auto dot = dotted_key.find('.');
    if (dot == std::string::npos)
        throw ConfigError("override '" + dotted_key + "' must be section.key");
    set_checked(dotted_key.substr(0, dot), dotted_key.substr(dot + 1), value);
}

void RunConfig::set_checked(const std::string& section, const std::string& key,
                            const std::string& value) {
    const KeyInfo* info = find_key(section, key);
    if (!info) throw ConfigError("unknown config key '" + section + "." + key + "'");
    // Validate typed values eagerly so errors surface at load time.
    if (std::string(info->type) == "int") {
        try {
            std::size_t pos = 0;
            (void)std::stoll(value, &pos);
            if (pos != value.size()) throw std::invalid_argument("");
        } catch (const std::exception&) {
            throw ConfigError("config key " + section + "." + key + " expects an integer, got '" +
                              value + "'");
        }
    } else if (std::string(info->type) == "real") {
        try {
            std::size_t pos = 0;
            (void)std::stod(value, &pos);
            if (pos != value.size()) throw std::invalid_argument("");
        } catch (const std::exception&) {
            throw ConfigError("config key " + section + "." + key + " expects a number, got '" +
                              value + "'");
        }
    }
    values_[section][key] = value;
}

const std::string& RunConfig::raw(const std::string& section, const std::string& key) const {
    const auto sec = values_.find(section);
    if (sec == values_.end()) throw ConfigError("unknown section " + section);
    const auto it = sec->second.find(key);
    if (it == sec->second.end()) throw ConfigError("unknown key " + section + "." + key);
    return it->second;
}

std::int64_t RunConfig::get_int(const std::string& section, const std::string& key) const {
    return std::stoll(raw(section, key));
}

double RunConfig::get_real(const std::string& section, const std::string& key) const {
    return std::stod(raw(section, key));
}

std::string RunConfig::get_string(const std::string& section, const std::string& key) const {
    return raw(section, key);
}

std::vector<double> RunConfig::get_real_list(const std::string& section,
                                             const std::string& key) const {
    std::vector<double> out;
    std::stringstream ss(raw(section, key));
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        tok = trim(tok);
        if (tok.empty()) continue;
        try {
            out.push_back(std::stod(tok));
        } catch (const std::exception&) {
            throw ConfigError("config key " + section + "." + key +
                              " has a non-numeric list entry '" + tok + "'");
        }
    }
    if (out.empty()) throw ConfigError("config key " + section + "." + key + " is an empty list");
    return out;
}

std::vector<int> RunConfig::get_int_list(const std::string& section,
                                         const std::string& key) const {
    std::vector<int> out;
    for (double v : get_real_list(section, key)) out.push_back(static_cast<int>(v));
    return out;
}

std::string RunConfig::to_ini() const {
    std::string out;
    for (const auto& [section, keys] : values_) {
        out += "[" + section + "]\n";
        for (const auto& [key, value] : keys) out += key + " = " + value + "\n";
        out += "\n";
    }
    return out;
}

std::map<std::string, std::string> RunConfig::flat() const {
    std::map<std::string, std::string> out;
    for (const auto& [section, keys] : values_)
        for (const auto& [key, value] : keys) out[section + "." + key] = value;
    return out;
}

std::string RunConfig::describe_keys() {
    std::string out = "Config keys (set in the INI file or via --set section.key=value):\n";
    for (const auto& info : kSchema) {
        out += "  ";
        out += info.section;
        out += ".";
        out += info.key;
        out += " (";
        out += info.type;
        out += ", default=";
        out += (info.def[0] ? info.def : "\"\"");
        out += ")  ";
        out += info.help;
        out += "\n";
    }
    return out;
}

}  // namespace attriweight::cli
