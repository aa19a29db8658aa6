#include "celldense/kwd.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <numeric>

#include "celldense/mincostflow.hpp"

namespace celldense {

namespace {

// Fixed-point scale shared by supplies and costs; the solver then works in
// exact integers and cannot cycle on float noise.
constexpr double kScale = 1e6;

// Integer net supplies (source minus target), rebalanced after rounding by
// nudging the largest entry so they sum to zero exactly.
std::vector<long long> net_supplies(const KwdProblem& p) {
    const std::size_t n = p.source.size();
    std::vector<long long> s(n, 0);
    long long sum = 0;
    for (std::size_t j = 0; j < n; ++j) {
        s[j] = std::llround((p.source[j] - p.target[j]) * kScale);
        sum += s[j];
    }
    if (sum != 0) {
        std::size_t adjust = 0;
        for (std::size_t j = 1; j < n; ++j)
            if (std::llabs(s[j]) > std::llabs(s[adjust])) adjust = j;
        s[adjust] -= sum;
    }
    return s;
}

}  // namespace

KwdProblem::KwdProblem(std::span<const double> u, std::span<const double> v, const Grid& g)
    : grid(g) {
    if (static_cast<int>(u.size()) != g.tiles() || static_cast<int>(v.size()) != g.tiles())
        throw DimensionMismatch("maps must have one value per grid tile");
    for (double x : u)
        if (!(x >= 0.0) || !std::isfinite(x)) throw Error("maps must be finite and nonnegative");
    for (double x : v)
        if (!(x >= 0.0) || !std::isfinite(x)) throw Error("maps must be finite and nonnegative");

    source.assign(u.begin(), u.end());
    target.assign(v.begin(), v.end());
    const double cu = std::accumulate(source.begin(), source.end(), 0.0);
    const double cv = std::accumulate(target.begin(), target.end(), 0.0);
    const double big = std::max(cu, cv);
    if (std::abs(cu - cv) > 1e-6 * big)
        throw MassImbalance("map masses differ by more than one part in a million");

    if (cu != cv && big > 0.0) {
        rescaled = true;
        if (cu < cv) {
            rescale_factor = cv / cu;
            for (double& x : source) x *= rescale_factor;
            mass = cv;
        } else {
            rescale_factor = cu / cv;
            for (double& x : target) x *= rescale_factor;
            mass = cu;
        }
    } else {
        mass = big;
    }
}

double kwd_exact(const KwdProblem& p) {
    if (p.mass <= 0.0) return 0.0;

    int support = 0;
    for (double x : p.source)
        if (x != 0.0) ++support;
    for (double x : p.target)
        if (x != 0.0) ++support;
    if (support > 2000)
        throw TooLarge("exact KWD guard: supports hold more than 2000 nonzero tiles");

    std::vector<long long> s = net_supplies(p);
    std::vector<int> nodes;  // tiles with nonzero net supply
    for (std::size_t j = 0; j < s.size(); ++j)
        if (s[j] != 0) nodes.push_back(static_cast<int>(j));
    if (nodes.empty()) return 0.0;

    NetworkSimplex solver(static_cast<int>(nodes.size()));
    for (std::size_t k = 0; k < nodes.size(); ++k) solver.set_supply(static_cast<int>(k), s[nodes[k]]);
    for (std::size_t a = 0; a < nodes.size(); ++a) {
        if (s[nodes[a]] <= 0) continue;
        const double ax = p.grid.center_x(nodes[a]);
        const double ay = p.grid.center_y(nodes[a]);
        for (std::size_t b = 0; b < nodes.size(); ++b) {
            if (s[nodes[b]] >= 0) continue;
            const double d = std::hypot(ax - p.grid.center_x(nodes[b]),
                                        ay - p.grid.center_y(nodes[b]));
            solver.add_arc(static_cast<int>(a), static_cast<int>(b), std::llround(d * kScale));
        }
    }
    const long double total = solver.solve();
    return static_cast<double>(total / (kScale * kScale) / p.mass);
}

double kwd_exact(std::span<const double> u, std::span<const double> v, const Grid& grid) {
    return kwd_exact(KwdProblem(u, v, grid));
}

double kwd_approx(const KwdProblem& p, int L) {
    if (L < 1) throw ConfigError("lattice parameter L must be at least 1");
    if (p.mass <= 0.0) return 0.0;

    std::vector<long long> s = net_supplies(p);
    bool any = false;
    for (long long x : s)
        if (x != 0) any = true;
    if (!any) return 0.0;

    std::vector<std::pair<int, int>> dirs;
    for (int dy = -L; dy <= L; ++dy)
        for (int dx = -L; dx <= L; ++dx) {
            if (dx == 0 && dy == 0) continue;
            if (std::gcd(std::abs(dx), std::abs(dy)) != 1) continue;
            dirs.emplace_back(dx, dy);
        }

    const Grid& g = p.grid;
    NetworkSimplex solver(g.tiles());
    for (int j = 0; j < g.tiles(); ++j) solver.set_supply(j, s[j]);
    for (int y = 0; y < g.height; ++y)
        for (int x = 0; x < g.width; ++x) {
            const int j = g.index(x, y);
            for (const auto& [dx, dy] : dirs) {
                if (!g.contains(x + dx, y + dy)) continue;
                const double d = std::hypot(dx, dy) * g.tile_size;
                solver.add_arc(j, g.index(x + dx, y + dy), std::llround(d * kScale));
            }
        }
    const long double total = solver.solve();
    return static_cast<double>(total / (kScale * kScale) / p.mass);
}

double kwd_approx(std::span<const double> u, std::span<const double> v, const Grid& grid, int L) {
    return kwd_approx(KwdProblem(u, v, grid), L);
}

std::string KwdReport::table() const {
    std::size_t width = 4;
    for (const auto& row : rows) width = std::max(width, row.name.size());
    std::string out;
    for (const auto& row : rows) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%-*s  %10.4f\n", static_cast<int>(width),
                      row.name.c_str(), row.kwd);
        out += buf;
    }
    return out;
}

KwdReport compare_report(std::span<const double> reference,
                         const std::vector<std::pair<std::string, std::vector<double>>>& estimates,
                         const Grid& grid, int L, bool include_flat) {
    KwdReport report;
    report.lattice_l = L;
    report.reference_mass = 0.0;
    for (double x : reference) report.reference_mass += x;

    std::vector<std::pair<std::string, std::vector<double>>> all(estimates.begin(),
                                                                 estimates.end());
    const bool have_flat = std::any_of(all.begin(), all.end(),
                                       [](const auto& e) { return e.first == "flat"; });
    if (include_flat && !have_flat) {
        std::vector<double> flat(grid.tiles(), report.reference_mass / grid.tiles());
        all.emplace_back("flat", std::move(flat));
    }

    for (const auto& [name, map] : all) {
        KwdProblem problem(reference, map, grid);
        // Roundoff-sized corrections are routine; only a real drift is news.
        if (problem.rescaled && std::abs(problem.rescale_factor - 1.0) > 1e-12) {
            char buf[128];
            std::snprintf(buf, sizeof buf, "%s: smaller map rescaled by %.9g to match mass",
                          name.c_str(), problem.rescale_factor);
            report.log.emplace_back(buf);
        }
        report.rows.push_back({name, kwd_approx(problem, L)});
    }
    std::stable_sort(report.rows.begin(), report.rows.end(),
                     [](const KwdRow& a, const KwdRow& b) { return a.kwd < b.kwd; });
    return report;
}

}  // namespace celldense
