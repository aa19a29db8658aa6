#include "celldense/grid.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace celldense {

std::vector<int> FootprintSet::coverage_count() const {
    std::vector<int> k(grid.tiles(), 0);
    for (const auto& cell : cells)
        for (const auto& [tile, s] : cell.weights) ++k[tile];
    return k;
}

std::vector<int> FootprintSet::uncovered_tiles() const {
    auto k = coverage_count();
    std::vector<int> out;
    for (int j = 0; j < static_cast<int>(k.size()); ++j)
        if (k[j] == 0) out.push_back(j);
    return out;
}

bool FootprintSet::is_binary() const {
    for (const auto& cell : cells)
        for (const auto& [tile, s] : cell.weights)
            if (s != 1.0) return false;
    return true;
}

CountVector::CountVector(std::vector<double> counts) : counts_(std::move(counts)) {
    for (double c : counts_)
        if (!(c >= 0.0) || !std::isfinite(c)) throw Error("counts must be finite and nonnegative");
    total_ = std::accumulate(counts_.begin(), counts_.end(), 0.0);
}

PriorVector::PriorVector(std::vector<double> weights) : alpha_(std::move(weights)) {
    if (alpha_.empty()) throw ZeroPrior("prior must have at least one tile");
    double sum = 0.0;
    for (double w : alpha_) {
        if (!(w > 0.0) || !std::isfinite(w)) throw ZeroPrior("prior weights must be positive");
        sum += w;
    }
    for (double& w : alpha_) w /= sum;
}

std::vector<double> PriorVector::rescaled(double total) const {
    std::vector<double> out(alpha_);
    for (double& w : out) w *= total;
    return out;
}

AssignmentMatrix::AssignmentMatrix(int rows, int cols,
                                   std::vector<std::tuple<int, int, double>> triplets,
                                   std::vector<std::string> cell_ids)
    : rows_(rows), cols_(cols), cell_ids_(std::move(cell_ids)) {
    if (rows <= 0 || cols <= 0) throw Error("assignment matrix must have positive dimensions");
    if (!cell_ids_.empty() && static_cast<int>(cell_ids_.size()) != rows)
        throw DimensionMismatch("one cell id per row expected");

    for (const auto& [i, j, p] : triplets) {
        if (i < 0 || i >= rows || j < 0 || j >= cols)
            throw DimensionMismatch("assignment entry out of range");
        if (!(p > 0.0) || !std::isfinite(p))
            throw Error("assignment probabilities must be positive and finite");
    }

    // Column-major order once; the row view is derived from the same list.
    std::sort(triplets.begin(), triplets.end(), [](const auto& a, const auto& b) {
        return std::tie(std::get<1>(a), std::get<0>(a)) < std::tie(std::get<1>(b), std::get<0>(b));
    });
    for (std::size_t t = 1; t < triplets.size(); ++t)
        if (std::get<0>(triplets[t]) == std::get<0>(triplets[t - 1]) &&
            std::get<1>(triplets[t]) == std::get<1>(triplets[t - 1]))
            throw Error("duplicate assignment entry");

    col_start_.assign(cols + 1, 0);
    col_entries_.reserve(triplets.size());
    for (const auto& [i, j, p] : triplets) {
        ++col_start_[j + 1];
        col_entries_.push_back({i, p});
    }
    for (int j = 0; j < cols; ++j) col_start_[j + 1] += col_start_[j];

    for (int j = 0; j < cols; ++j) {
        double sum = 0.0;
        for (const auto& e : column(j)) sum += e.value;
        if (std::abs(sum - 1.0) > 1e-12)
            throw Error("column " + std::to_string(j) + " sums to " + std::to_string(sum) +
                        ", expected 1");
    }

    row_start_.assign(rows + 1, 0);
    for (const auto& [i, j, p] : triplets) ++row_start_[i + 1];
    for (int i = 0; i < rows; ++i) row_start_[i + 1] += row_start_[i];
    row_entries_.resize(triplets.size());
    std::vector<int> cursor(row_start_.begin(), row_start_.end() - 1);
    for (const auto& [i, j, p] : triplets) row_entries_[cursor[i]++] = {j, p};
}

std::vector<double> AssignmentMatrix::apply(std::span<const double> x) const {
    if (static_cast<int>(x.size()) != cols_) throw DimensionMismatch("P x needs cols() entries");
    std::vector<double> y(rows_, 0.0);
    for (int i = 0; i < rows_; ++i) {
        double acc = 0.0;
        for (const auto& e : row(i)) acc += e.value * x[e.index];
        y[i] = acc;
    }
    return y;
}

std::vector<double> AssignmentMatrix::apply_transpose(std::span<const double> x) const {
    if (static_cast<int>(x.size()) != rows_) throw DimensionMismatch("P' x needs rows() entries");
    std::vector<double> y(cols_, 0.0);
    for (int j = 0; j < cols_; ++j) {
        double acc = 0.0;
        for (const auto& e : column(j)) acc += e.value * x[e.index];
        y[j] = acc;
    }
    return y;
}

AssignmentMatrix build_assignment_matrix(const FootprintSet& footprints) {
    const int rows = static_cast<int>(footprints.cells.size());
    const int cols = footprints.grid.tiles();
    if (rows == 0) throw Error("no cells to build an assignment matrix from");

    std::vector<double> column_sum(cols, 0.0);
    for (const auto& cell : footprints.cells)
        for (const auto& [tile, s] : cell.weights) {
            if (tile < 0 || tile >= cols) throw DimensionMismatch("footprint tile out of range");
            if (!(s > 0.0) || !std::isfinite(s))
                throw Error("footprint strengths must be positive and finite");
            column_sum[tile] += s;
        }
    for (int j = 0; j < cols; ++j)
        if (column_sum[j] == 0.0) throw UncoveredTile(j);

    std::vector<std::tuple<int, int, double>> triplets;
    std::vector<std::string> ids;
    ids.reserve(rows);
    for (int i = 0; i < rows; ++i) {
        ids.push_back(footprints.cells[i].cell_id);
        for (const auto& [tile, s] : footprints.cells[i].weights)
            triplets.emplace_back(i, tile, s / column_sum[tile]);
    }
    return AssignmentMatrix(rows, cols, std::move(triplets), std::move(ids));
}

Consolidation consolidate(const AssignmentMatrix& matrix, const PriorVector& prior, double tol) {
    const int cols = matrix.cols();
    if (prior.size() != cols) throw DimensionMismatch("prior size must match matrix columns");

    // Tiles merge only when both the matrix column and the prior entry
    // agree within tol. Group by sorting: identical keys land adjacent
    // because the comparison is lexicographic on the sparse entries.
    // Near-equal keys sort adjacent too whenever they belong to a common
    // exact group, which is the case this is built for; the binary and
    // tessellated matrices produced upstream have bit-identical columns.
    std::vector<int> order(cols);
    for (int j = 0; j < cols; ++j) order[j] = j;

    auto column_less = [&](int a, int b) {
        auto ca = matrix.column(a);
        auto cb = matrix.column(b);
        const std::size_t n = std::min(ca.size(), cb.size());
        for (std::size_t t = 0; t < n; ++t) {
            if (ca[t].index != cb[t].index) return ca[t].index < cb[t].index;
            if (std::abs(ca[t].value - cb[t].value) > tol) return ca[t].value < cb[t].value;
        }
        if (ca.size() != cb.size()) return ca.size() < cb.size();
        return prior[a] < prior[b] - tol;
    };
    auto column_equal = [&](int a, int b) {
        if (std::abs(prior[a] - prior[b]) > tol) return false;
        auto ca = matrix.column(a);
        auto cb = matrix.column(b);
        if (ca.size() != cb.size()) return false;
        for (std::size_t t = 0; t < ca.size(); ++t) {
            if (ca[t].index != cb[t].index) return false;
            if (std::abs(ca[t].value - cb[t].value) > tol) return false;
        }
        return true;
    };
    std::stable_sort(order.begin(), order.end(), column_less);

    // Walk the sorted columns, closing a group whenever the column changes.
    // Sections are then renumbered by their first tile so the output order
    // does not depend on the sort.
    std::vector<int> group_of(cols, -1);
    int groups = 0;
    for (int t = 0; t < cols; ++t) {
        if (t == 0 || !column_equal(order[t], order[t - 1])) ++groups;
        group_of[order[t]] = groups - 1;
    }

    std::vector<int> first_tile(groups, cols);
    for (int j = 0; j < cols; ++j)
        first_tile[group_of[j]] = std::min(first_tile[group_of[j]], j);
    std::vector<int> rank(groups);
    for (int g = 0; g < groups; ++g) rank[g] = g;
    std::sort(rank.begin(), rank.end(), [&](int a, int b) { return first_tile[a] < first_tile[b]; });
    std::vector<int> renumber(groups);
    for (int s = 0; s < groups; ++s) renumber[rank[s]] = s;

    std::vector<int> section_map(cols);
    std::vector<int> section_size(groups, 0);
    std::vector<double> section_weight(groups, 0.0);
    std::vector<int> representative(groups, -1);
    for (int j = 0; j < cols; ++j) {
        const int s = renumber[group_of[j]];
        section_map[j] = s;
        ++section_size[s];
        section_weight[s] += prior[j];
        if (representative[s] < 0 || j < representative[s]) representative[s] = j;
    }

    std::vector<std::tuple<int, int, double>> triplets;
    for (int s = 0; s < groups; ++s)
        for (const auto& e : matrix.column(representative[s]))
            triplets.emplace_back(e.index, s, e.value);
    return Consolidation{
        AssignmentMatrix(matrix.rows(), groups, std::move(triplets), matrix.cell_ids()),
        PriorVector(std::move(section_weight)), std::move(section_map), std::move(section_size)};
}

DensityEstimate make_density_estimate(std::vector<double> values, std::string estimator) {
    DensityEstimate est;
    est.mass = std::accumulate(values.begin(), values.end(), 0.0);
    est.values = std::move(values);
    est.estimator = std::move(estimator);
    return est;
}

std::vector<double> expected_counts(const AssignmentMatrix& matrix, std::span<const double> u) {
    return matrix.apply(u);
}

std::vector<double> disaggregate(std::span<const double> section_values,
                                 const std::vector<int>& section_map,
                                 const std::vector<int>& section_size) {
    if (section_values.size() != section_size.size())
        throw DimensionMismatch("one value per section expected");
    std::vector<double> tiles(section_map.size(), 0.0);
    for (std::size_t j = 0; j < section_map.size(); ++j) {
        const int s = section_map[j];
        if (s < 0 || s >= static_cast<int>(section_size.size()))
            throw DimensionMismatch("section map entry out of range");
        tiles[j] = section_values[s] / section_size[s];
    }
    return tiles;
}

}  // namespace celldense
