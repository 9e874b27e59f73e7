#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace attriweight {

/// Non-negative per-group weights summing to 1 (the softmax image).
struct WeightVector {
    Eigen::VectorXd values;
    std::vector<std::string> group_names;

    int size() const { return static_cast<int>(values.size()); }

    static WeightVector uniform(const std::vector<std::string>& names) {
        WeightVector w;
        w.group_names = names;
        w.values = Eigen::VectorXd::Constant(static_cast<int>(names.size()),
                                             1.0 / static_cast<double>(names.size()));
        return w;
    }
};

}  // namespace attriweight
