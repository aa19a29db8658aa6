#pragma once

#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "celldense/errors.hpp"

namespace celldense {

// Regular square grid of tiles, indexed row-major: tile j sits at column
// (j % width), row (j / width). Coordinates are in tile units; tile (0,0)
// spans [0,1)x[0,1) when tile_size is 1.
struct Grid {
    int width = 0;
    int height = 0;
    double tile_size = 1.0;

    Grid() = default;
    Grid(int w, int h, double size = 1.0) : width(w), height(h), tile_size(size) {
        if (w <= 0 || h <= 0 || !(size > 0.0))
            throw Error("grid dimensions and tile size must be positive");
    }

    int tiles() const { return width * height; }
    int index(int x, int y) const { return y * width + x; }
    int tile_x(int j) const { return j % width; }
    int tile_y(int j) const { return j / width; }
    double center_x(int j) const { return (tile_x(j) + 0.5) * tile_size; }
    double center_y(int j) const { return (tile_y(j) + 0.5) * tile_size; }
    bool contains(int x, int y) const { return x >= 0 && x < width && y >= 0 && y < height; }
};

// Coverage strengths s_ij > 0 of one cell over the tiles it reaches,
// sorted by tile index with no duplicates.
struct Footprint {
    std::string cell_id;
    std::vector<std::pair<int, double>> weights;
};

// All cells of one radio network over a common grid.
struct FootprintSet {
    Grid grid;
    std::vector<Footprint> cells;

    // Number of cells covering each tile.
    std::vector<int> coverage_count() const;
    std::vector<int> uncovered_tiles() const;
    // True when every strength is exactly 1 (pure coverage indicator).
    bool is_binary() const;
};

// Observed device count per cell. Entries are validated nonnegative and the
// total is fixed at construction.
class CountVector {
public:
    CountVector() = default;
    explicit CountVector(std::vector<double> counts);

    int size() const { return static_cast<int>(counts_.size()); }
    double operator[](int i) const { return counts_[i]; }
    const std::vector<double>& values() const { return counts_; }
    double total() const { return total_; }

private:
    std::vector<double> counts_;
    double total_ = 0.0;
};

// Prior tile weights alpha_j > 0, normalized to sum exactly to the value
// accumulated once at construction (kept as-is; callers rescale by the
// device total when they need masses).
class PriorVector {
public:
    explicit PriorVector(std::vector<double> weights);
    static PriorVector flat(int n) { return PriorVector(std::vector<double>(n, 1.0)); }

    int size() const { return static_cast<int>(alpha_.size()); }
    double operator[](int j) const { return alpha_[j]; }
    const std::vector<double>& values() const { return alpha_; }
    // Weights scaled to the given total mass (a_j = total * alpha_j).
    std::vector<double> rescaled(double total) const;

private:
    std::vector<double> alpha_;  // strictly positive, sums to 1
};

// Column-stochastic assignment probabilities p_ij = Prob{cell i | tile j},
// stored sparse in both orientations so estimators can sweep whichever way
// is natural. Immutable after construction, hence safe to share across
// threads.
class AssignmentMatrix {
public:
    struct Entry {
        int index;     // row id in a column view, column id in a row view
        double value;  // p_ij > 0
    };

    AssignmentMatrix() = default;
    // Triplets are (cell, tile, p). Duplicate (cell, tile) pairs are
    // rejected, every p must be positive and finite, and each column must
    // sum to 1 within 1e-12.
    AssignmentMatrix(int rows, int cols, std::vector<std::tuple<int, int, double>> triplets,
                     std::vector<std::string> cell_ids = {});

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    std::span<const Entry> column(int j) const {
        return {col_entries_.data() + col_start_[j],
                static_cast<std::size_t>(col_start_[j + 1] - col_start_[j])};
    }
    std::span<const Entry> row(int i) const {
        return {row_entries_.data() + row_start_[i],
                static_cast<std::size_t>(row_start_[i + 1] - row_start_[i])};
    }
    std::size_t nonzeros() const { return col_entries_.size(); }
    const std::vector<std::string>& cell_ids() const { return cell_ids_; }

    // y = P x (x has cols() entries, result rows()).
    std::vector<double> apply(std::span<const double> x) const;
    // y = P' x (x has rows() entries, result cols()).
    std::vector<double> apply_transpose(std::span<const double> x) const;

private:
    int rows_ = 0;
    int cols_ = 0;
    std::vector<int> col_start_;
    std::vector<Entry> col_entries_;
    std::vector<int> row_start_;
    std::vector<Entry> row_entries_;
    std::vector<std::string> cell_ids_;
};

// Normalize footprints into assignment probabilities: p_ij = s_ij / sum_n
// s_nj. Throws UncoveredTile for any tile with no covering cell.
AssignmentMatrix build_assignment_matrix(const FootprintSet& footprints);

// Tiles j and j' are indistinguishable to every estimator here when their
// matrix columns agree entrywise (within tol) and so do their priors after
// normalizing to per-tile shares. Consolidation merges each such group
// into one section whose prior is the group sum, shrinking the system the
// estimators run on without changing what they can express.
struct Consolidation {
    AssignmentMatrix matrix;        // one column per section
    PriorVector section_prior;      // summed tile priors
    std::vector<int> section_map;   // tile -> section
    std::vector<int> section_size;  // tiles per section
};

Consolidation consolidate(const AssignmentMatrix& matrix, const PriorVector& prior,
                          double tol = 1e-12);

// One density estimate over tiles (or sections), plus the diagnostics the
// estimators attach. mass always equals the sum of values.
struct DensityEstimate {
    std::vector<double> values;
    std::string estimator;
    int iterations = 0;
    bool converged = true;
    double ml_residual = std::numeric_limits<double>::quiet_NaN();
    double constraint_residual = std::numeric_limits<double>::quiet_NaN();
    int clip_count = 0;
    double mass = 0.0;
};

DensityEstimate make_density_estimate(std::vector<double> values, std::string estimator);

// Expected per-cell counts E[c] = P u for a density u.
std::vector<double> expected_counts(const AssignmentMatrix& matrix, std::span<const double> u);

// Spread per-section masses uniformly over each section's tiles. The
// result has one value per tile and the same total mass.
std::vector<double> disaggregate(std::span<const double> section_values,
                                 const std::vector<int>& section_map,
                                 const std::vector<int>& section_size);

}  // namespace celldense
