#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <span>
#include <vector>

namespace marginlab {

// Row-per-sample convention: an N x K matrix holds N embeddings of dimension K.
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

// Class labels are 0-based internally.
using Labels = std::vector<int>;

inline double squared_distance(const Matrix& points, Eigen::Index i, Eigen::Index j) {
    return (points.row(i) - points.row(j)).squaredNorm();
}

// Indices of the rows carrying label `y`, in increasing order.
inline std::vector<Eigen::Index> members_of(const Labels& labels, int y) {
    std::vector<Eigen::Index> out;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] == y) out.push_back(static_cast<Eigen::Index>(i));
    }
    return out;
}

inline int num_classes_in(const Labels& labels) {
    int top = -1;
    for (int y : labels) top = y > top ? y : top;
    return top + 1;
}

}  // namespace marginlab
