#pragma once

#include <cstdint>
#include <vector>

#include "celldense/errors.hpp"

namespace celldense {

// Uncapacitated min-cost flow on a directed graph with integer supplies and
// nonnegative integer arc costs, solved by the network simplex method
// (block-search pricing, strongly feasible bases so no pivot can cycle).
// Supplies must balance to zero. Intended for transportation problems where
// every real directed cycle has positive cost; a negative-cost directed
// cycle reachable by the pivoting would be unbounded and throws.
class NetworkSimplex {
public:
    explicit NetworkSimplex(int node_count);

    // Positive supply produces flow, negative consumes.
    void set_supply(int node, long long supply);
    void add_arc(int src, int dst, long long cost);

    // Optimal total cost as an exact integer carried in a long double (the
    // 64-bit significand covers every total the supplies above can form).
    // Throws Error when supplies do not balance or no feasible flow exists.
    long double solve();

    // Diagnostics, valid after solve().
    long long pivots() const { return pivots_; }

private:
    struct Arc {
        int src;
        int dst;
        long long cost;
        long long flow = 0;
        bool in_tree = false;
    };

    int n_;
    std::vector<long long> supply_;
    std::vector<Arc> arcs_;
    long long pivots_ = 0;

    // Spanning-tree state (indices into arcs_; the artificial root is node n_).
    std::vector<int> parent_;
    std::vector<int> parent_arc_;
    std::vector<int> depth_;
    std::vector<long long> pi_;
    std::vector<std::vector<int>> children_;
    std::vector<int> pos_in_parent_;

    void attach_child(int child, int parent);
    void detach_child(int child);
    long long reduced_cost(const Arc& a) const {
        return a.cost - pi_[a.src] + pi_[a.dst];
    }
};

}  // namespace celldense
