#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "celldense/grid.hpp"

namespace celldense {

// A validated, mass-balanced transport instance between two nonnegative
// maps on a shared grid. Imbalance up to 1e-6 of the larger mass is fixed
// by rescaling the smaller map (recorded here); anything larger throws.
struct KwdProblem {
    std::vector<double> source;
    std::vector<double> target;
    Grid grid;
    double mass = 0.0;
    bool rescaled = false;
    double rescale_factor = 1.0;

    KwdProblem(std::span<const double> u, std::span<const double> v, const Grid& grid);
};

// Exact Kantorovich-Wasserstein distance: min-cost transport between the
// two maps with Euclidean tile-center ground distance, normalized by the
// total mass. Common mass is netted out first; the remaining supports form
// a bipartite transport problem. Guarded to instances whose supports
// together hold at most 2000 nonzero tiles.
double kwd_exact(std::span<const double> u, std::span<const double> v, const Grid& grid);
double kwd_exact(const KwdProblem& problem);

// Lattice approximation: a min-cost flow over the whole grid whose arcs
// join tiles at offsets (dx, dy) with max(|dx|,|dy|) <= L and
// gcd(|dx|,|dy|) = 1, each costing its Euclidean length. Upper-bounds the
// exact distance and tightens as L grows.
double kwd_approx(std::span<const double> u, std::span<const double> v, const Grid& grid, int L);
double kwd_approx(const KwdProblem& problem, int L);

struct KwdRow {
    std::string name;
    double kwd = 0.0;
};

struct KwdReport {
    std::vector<KwdRow> rows;  // ascending by distance
    int lattice_l = 4;
    double reference_mass = 0.0;
    std::vector<std::string> log;  // rescaling and other notes

    std::string table() const;  // aligned plain-text rendering
};

// Distance of every named map to the reference map, via the lattice solver.
// Adds a uniform "flat" row when asked for and none is supplied.
KwdReport compare_report(std::span<const double> reference,
                         const std::vector<std::pair<std::string, std::vector<double>>>& estimates,
                         const Grid& grid, int L, bool include_flat = true);

}  // namespace celldense
