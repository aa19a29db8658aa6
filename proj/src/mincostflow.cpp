#include "celldense/mincostflow.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace celldense {

NetworkSimplex::NetworkSimplex(int node_count) : n_(node_count), supply_(node_count, 0) {
    if (node_count < 0) throw Error("node count must be nonnegative");
}

void NetworkSimplex::set_supply(int node, long long supply) {
    if (node < 0 || node >= n_) throw Error("supply node out of range");
    supply_[node] = supply;
}

void NetworkSimplex::add_arc(int src, int dst, long long cost) {
    if (src < 0 || src >= n_ || dst < 0 || dst >= n_) throw Error("arc endpoint out of range");
    if (src == dst) throw Error("self-loop arcs are not allowed");
    if (cost < 0) throw Error("arc costs must be nonnegative");
    arcs_.push_back({src, dst, cost});
}

void NetworkSimplex::attach_child(int child, int parent) {
    pos_in_parent_[child] = static_cast<int>(children_[parent].size());
    children_[parent].push_back(child);
}

void NetworkSimplex::detach_child(int child) {
    const int p = parent_[child];
    auto& sibs = children_[p];
    const int pos = pos_in_parent_[child];
    sibs[pos] = sibs.back();
    pos_in_parent_[sibs[pos]] = pos;
    sibs.pop_back();
}

long double NetworkSimplex::solve() {
    long long balance = 0;
    for (long long b : supply_) balance += b;
    if (balance != 0) throw Error("supplies must balance to zero");

    const int root = n_;
    const std::size_t m_real = arcs_.size();

    long long max_cost = 0;
    for (std::size_t a = 0; a < m_real; ++a) {
        arcs_[a].flow = 0;
        arcs_[a].in_tree = false;
        max_cost = std::max(max_cost, arcs_[a].cost);
    }
    // Artificial arcs must be costlier than any real path so they drain
    // whenever the real graph can carry the flow at all. Potentials stay
    // within 2*big and reduced costs within 4*big + cost, so the cap keeps
    // every intermediate inside long long.
    const __int128 big_wide = (static_cast<__int128>(n_) + 1) * (max_cost + 1);
    if (big_wide > (static_cast<__int128>(1) << 59))
        throw Error("arc costs too large for the internal fixed-point scale");
    const long long big = static_cast<long long>(big_wide);

    parent_.assign(n_ + 1, -1);
    parent_arc_.assign(n_ + 1, -1);
    depth_.assign(n_ + 1, 0);
    pi_.assign(n_ + 1, 0);
    children_.assign(n_ + 1, {});
    pos_in_parent_.assign(n_ + 1, -1);
    pivots_ = 0;

    for (int v = 0; v < n_; ++v) {
        const int a = static_cast<int>(arcs_.size());
        if (supply_[v] >= 0) {
            arcs_.push_back({v, root, big, supply_[v], true});
            pi_[v] = big;
        } else {
            arcs_.push_back({root, v, big, -supply_[v], true});
            pi_[v] = -big;
        }
        parent_[v] = root;
        parent_arc_[v] = a;
        depth_[v] = 1;
        attach_child(v, root);
    }

    // Pricing scans real arcs only; a drained artificial arc never pays its
    // way back into the basis.
    const std::size_t block =
        std::max<std::size_t>(64, static_cast<std::size_t>(std::sqrt(static_cast<double>(
                                      std::max<std::size_t>(m_real, 1)))));

    std::size_t scan = 0;
    std::vector<int> detached;  // reused buffer for the moved subtree
    std::vector<int> chain, chain_arcs;

    while (m_real > 0) {
        // Entering arc: best reduced cost within the first block that has
        // any negative candidate, continuing round-robin across calls.
        int enter = -1;
        long long best = 0;
        std::size_t seen = 0;
        std::size_t countdown = block;
        for (std::size_t k = 0; k < m_real; ++k) {
            const std::size_t a = (scan + k) % m_real;
            const Arc& arc = arcs_[a];
            if (!arc.in_tree) {
                const long long rc = reduced_cost(arc);
                if (rc < best) {
                    best = rc;
                    enter = static_cast<int>(a);
                }
            }
            ++seen;
            if (--countdown == 0) {
                if (enter >= 0) break;
                countdown = block;
            }
        }
        if (enter < 0) break;  // no improving arc anywhere: optimal
        scan = (scan + seen) % m_real;

        Arc& ea = arcs_[enter];
        const int s = ea.src;
        const int t = ea.dst;
        const long long rce = reduced_cost(ea);

        int u = s, v = t;
        while (u != v) {
            if (depth_[u] >= depth_[v])
                u = parent_[u];
            else
                v = parent_[v];
        }
        const int join = u;

        // Leaving arc: minimum flow among cycle arcs that would lose flow.
        // Ties prefer the target side (strict < on the source walk, <= on
        // the target walk); with the all-nonnegative supplies this is the
        // strongly feasible rule, which rules out cycling.
        long long delta = 0;
        int out_node = -1;
        bool src_side = false;
        bool have = false;
        for (int x = s; x != join; x = parent_[x]) {
            const Arc& a = arcs_[parent_arc_[x]];
            if (a.src == x && (!have || a.flow < delta)) {
                delta = a.flow;
                out_node = x;
                src_side = true;
                have = true;
            }
        }
        for (int x = t; x != join; x = parent_[x]) {
            const Arc& a = arcs_[parent_arc_[x]];
            if (a.dst == x && (!have || a.flow <= delta)) {
                delta = a.flow;
                out_node = x;
                src_side = false;
                have = true;
            }
        }
        if (!have)
            throw Error("negative-cost directed cycle: the flow problem is unbounded");

        ea.flow += delta;
        for (int x = s; x != join; x = parent_[x]) {
            Arc& a = arcs_[parent_arc_[x]];
            a.flow += (a.src == x) ? -delta : delta;
        }
        for (int x = t; x != join; x = parent_[x]) {
            Arc& a = arcs_[parent_arc_[x]];
            a.flow += (a.dst == x) ? -delta : delta;
        }

        const int leave = parent_arc_[out_node];
        arcs_[leave].in_tree = false;
        ea.in_tree = true;

        // The subtree under out_node is cut loose; exactly one endpoint of
        // the entering arc lives inside it and becomes its new root.
        const int w = src_side ? s : t;
        const int wp = src_side ? t : s;

        detached.clear();
        detached.push_back(out_node);
        for (std::size_t h = 0; h < detached.size(); ++h)
            for (int ch : children_[detached[h]]) detached.push_back(ch);

        chain.clear();
        chain_arcs.clear();
        for (int x = w;; x = parent_[x]) {
            chain.push_back(x);
            chain_arcs.push_back(parent_arc_[x]);
            if (x == out_node) break;
        }

        detach_child(out_node);
        for (std::size_t k = 0; k + 1 < chain.size(); ++k) detach_child(chain[k]);

        attach_child(w, wp);
        parent_[w] = wp;
        parent_arc_[w] = enter;
        for (std::size_t k = 0; k + 1 < chain.size(); ++k) {
            attach_child(chain[k + 1], chain[k]);
            parent_[chain[k + 1]] = chain[k];
            parent_arc_[chain[k + 1]] = chain_arcs[k];
        }

        // Potentials across the moved subtree shift by one constant; depths
        // need a fresh walk from the new root.
        const long long shift = src_side ? rce : -rce;
        for (int x : detached) pi_[x] += shift;
        depth_[w] = depth_[wp] + 1;
        detached.clear();
        detached.push_back(w);
        for (std::size_t h = 0; h < detached.size(); ++h)
            for (int ch : children_[detached[h]]) {
                depth_[ch] = depth_[detached[h]] + 1;
                detached.push_back(ch);
            }

        ++pivots_;
    }

    bool infeasible = false;
    for (std::size_t a = m_real; a < arcs_.size(); ++a)
        if (arcs_[a].flow > 0) infeasible = true;
    arcs_.resize(m_real);  // keep the instance re-solvable
    if (infeasible) throw Error("no feasible flow: the graph cannot route the given supplies");

    __int128 total = 0;
    for (std::size_t a = 0; a < m_real; ++a)
        total += static_cast<__int128>(arcs_[a].flow) * arcs_[a].cost;
    return static_cast<long double>(total);
}

}  // namespace celldense
