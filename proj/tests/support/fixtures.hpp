#pragma once

// The three-tile, two-cell instance used throughout the tests: cell a
// covers tiles 0 and 1 with strengths 1 and 1, cell b covers tiles 1 and 2
// with strengths 3 and 1, so the assignment matrix is
//   [1  0.25  0]
//   [0  0.75  1]
// and the observed counts are c = [40, 70] with total 110.

#include <vector>

#include "celldense/grid.hpp"

namespace fixtures {

inline celldense::FootprintSet toy_footprints() {
    celldense::FootprintSet fps;
    fps.grid = celldense::Grid(3, 1);
    fps.cells = {
        {"a", {{0, 1.0}, {1, 1.0}}},
        {"b", {{1, 3.0}, {2, 1.0}}},
    };
    return fps;
}

inline celldense::AssignmentMatrix toy_matrix() {
    return celldense::build_assignment_matrix(toy_footprints());
}

inline celldense::CountVector toy_counts() { return celldense::CountVector({40.0, 70.0}); }

// Dense copy of a sparse assignment matrix, row-major vectors.
inline std::vector<std::vector<double>> dense(const celldense::AssignmentMatrix& P) {
    std::vector<std::vector<double>> d(P.rows(), std::vector<double>(P.cols(), 0.0));
    for (int j = 0; j < P.cols(); ++j)
        for (const auto& e : P.column(j)) d[e.index][j] = e.value;
    return d;
}

}  // namespace fixtures
