#include "celldense/estimators.hpp"

#include <algorithm>
#include <istream>
#include <ostream>
#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <cmath>
#include <limits>
#include <numeric>

namespace celldense {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_dims(const AssignmentMatrix& P, int count_size, int tile_size) {
    if (P.rows() != count_size) throw DimensionMismatch("count vector size must match matrix rows");
    if (tile_size >= 0 && P.cols() != tile_size)
        throw DimensionMismatch("tile vector size must match matrix columns");
}

// t_i = c_i / (p_i'u), defined as 0 when c_i = 0. Throws when a positive
// count sits on a zero denominator.
std::vector<double> count_ratios(const AssignmentMatrix& P, const CountVector& c,
                                 std::span<const double> u) {
    std::vector<double> denom = P.apply(u);
    std::vector<double> t(denom.size(), 0.0);
    for (int i = 0; i < P.rows(); ++i) {
        if (c[i] == 0.0) continue;
        if (denom[i] <= 0.0)
            throw DegenerateDenominator("cell " + std::to_string(i) +
                                        " has positive count but zero expected count");
        t[i] = c[i] / denom[i];
    }
    return t;
}

// Residual of the stationarity multipliers m at u, one-sided on tiles the
// caller flags as boundary.
double residual_from_multipliers(std::span<const double> m, std::span<const double> u,
                                 double boundary_below) {
    double r = 0.0;
    for (std::size_t j = 0; j < m.size(); ++j) {
        const double excess = m[j] - 1.0;
        if (u[j] > boundary_below)
            r = std::max(r, std::abs(excess));
        else
            r = std::max(r, std::max(excess, 0.0));
    }
    return r;
}

}  // namespace

DensityEstimate sb_estimate(const AssignmentMatrix& P, const CountVector& c,
                            const PriorVector& alpha) {
    check_dims(P, c.size(), alpha.size());
    std::vector<double> denom = P.apply(alpha.values());
    std::vector<double> ratio(denom.size(), 0.0);
    for (int i = 0; i < P.rows(); ++i) {
        if (c[i] == 0.0) continue;
        if (denom[i] <= 0.0)
            throw ZeroDenominator("cell " + std::to_string(i) +
                                  " has positive count but zero prior coverage");
        ratio[i] = c[i] / denom[i];
    }
    std::vector<double> u = P.apply_transpose(ratio);
    for (int j = 0; j < P.cols(); ++j) u[j] *= alpha[j];

    DensityEstimate est = make_density_estimate(std::move(u), "sb");
    est.iterations = 1;
    est.ml_residual = ml_optimality_residual(P, c, est.values);
    std::vector<double> pu = P.apply(est.values);
    double cr = 0.0;
    for (int i = 0; i < P.rows(); ++i) cr = std::max(cr, std::abs(pu[i] - c[i]));
    est.constraint_residual = cr;
    return est;
}

namespace {

DensityEstimate em_core(const AssignmentMatrix& P, const CountVector& c, std::vector<double> u,
                        const EmConfig& cfg, const char* name) {
    if (cfg.max_iters < 1 || !(cfg.tol > 0.0) || !(cfg.tol_ml > 0.0))
        throw ConfigError("EM needs max_iters >= 1 and positive tolerances");
    check_dims(P, c.size(), static_cast<int>(u.size()));
    for (double v : u)
        if (!(v >= 0.0)) throw Error("EM start must be nonnegative");

    const double C = c.total();
    const double tiny = C * 1e-14;  // below this a tile counts as boundary

    DensityEstimate est;
    est.estimator = name;
    est.converged = false;

    std::vector<double> m(P.cols());
    for (int it = 0; it <= cfg.max_iters; ++it) {
        std::vector<double> t = count_ratios(P, c, u);
        std::fill(m.begin(), m.end(), 0.0);
        for (int j = 0; j < P.cols(); ++j) {
            double acc = 0.0;
            for (const auto& e : P.column(j)) acc += e.value * t[e.index];
            m[j] = acc;
        }
        if (residual_from_multipliers(m, u, tiny) <= cfg.tol_ml) {
            est.converged = true;
            break;
        }
        if (it == cfg.max_iters) break;  // next update would be wasted

        double rel = 0.0;
        for (int j = 0; j < P.cols(); ++j) {
            const double next = u[j] * m[j];
            rel = std::max(rel, std::abs(next - u[j]) / std::max(u[j], tiny));
            u[j] = next;
        }
        ++est.iterations;
        if (rel <= cfg.tol) {
            est.converged = true;
            break;
        }
    }

    // Dying tiles decay geometrically without ever reaching zero; flush
    // them so the returned point is exactly boundary there, then restore
    // the conserved mass.
    double kept = 0.0;
    for (double& v : u) {
        if (v <= tiny) v = 0.0;
        kept += v;
    }
    if (kept > 0.0 && C > 0.0) {
        const double scale = C / kept;
        for (double& v : u) v *= scale;
    }

    est.values = std::move(u);
    est.mass = std::accumulate(est.values.begin(), est.values.end(), 0.0);
    est.ml_residual = ml_optimality_residual(P, c, est.values);
    std::vector<double> pu = P.apply(est.values);
    double cr = 0.0;
    for (int i = 0; i < P.rows(); ++i) cr = std::max(cr, std::abs(pu[i] - c[i]));
    est.constraint_residual = cr;
    return est;
}

}  // namespace

DensityEstimate em_estimate(const AssignmentMatrix& P, const CountVector& c,
                            const PriorVector& a0, const EmConfig& cfg) {
    check_dims(P, c.size(), a0.size());
    return em_core(P, c, a0.rescaled(c.total()), cfg, "em");
}

DensityEstimate em_iterate(const AssignmentMatrix& P, const CountVector& c,
                           std::vector<double> start, const EmConfig& cfg) {
    return em_core(P, c, std::move(start), cfg, "em");
}

double ml_optimality_residual(const AssignmentMatrix& P, const CountVector& c,
                              std::span<const double> u) {
    check_dims(P, c.size(), static_cast<int>(u.size()));
    for (double v : u)
        if (!(v >= 0.0)) throw Error("ml_optimality_residual needs u >= 0");
    std::vector<double> t = count_ratios(P, c, u);
    std::vector<double> m(P.cols(), 0.0);
    for (int j = 0; j < P.cols(); ++j) {
        double acc = 0.0;
        for (const auto& e : P.column(j)) acc += e.value * t[e.index];
        m[j] = acc;
    }
    return residual_from_multipliers(m, u, 0.0);
}

double loglikelihood(const AssignmentMatrix& P, const CountVector& c, std::span<const double> u) {
    check_dims(P, c.size(), static_cast<int>(u.size()));
    std::vector<double> pu = P.apply(u);
    double ll = 0.0;
    for (int i = 0; i < P.rows(); ++i) {
        if (c[i] == 0.0) continue;
        if (pu[i] <= 0.0) return -kInf;
        ll += c[i] * std::log(pu[i]);
    }
    return ll;
}

std::vector<double> loglik_gradient(const AssignmentMatrix& P, const CountVector& c,
                                    std::span<const double> u) {
    check_dims(P, c.size(), static_cast<int>(u.size()));
    std::vector<double> t = count_ratios(P, c, u);
    return P.apply_transpose(t);
}

double loglik_hessian_quadform(const AssignmentMatrix& P, const CountVector& c,
                               std::span<const double> u, std::span<const double> x) {
    check_dims(P, c.size(), static_cast<int>(u.size()));
    if (x.size() != u.size()) throw DimensionMismatch("x must have one entry per tile");
    std::vector<double> pu = P.apply(u);
    std::vector<double> px = P.apply(x);
    double q = 0.0;
    for (int i = 0; i < P.rows(); ++i) {
        if (c[i] == 0.0) continue;
        if (pu[i] <= 0.0)
            throw DegenerateDenominator("cell " + std::to_string(i) +
                                        " has positive count but zero expected count");
        const double r = px[i] / pu[i];
        q -= c[i] * r * r;
    }
    return q;
}

bool mlbs_membership(const AssignmentMatrix& P, const CountVector& c, std::span<const double> u,
                     double tol) {
    check_dims(P, c.size(), static_cast<int>(u.size()));
    for (double v : u)
        if (v < -tol) return false;
    std::vector<double> pu = P.apply(u);
    const double bound = tol * std::max(1.0, c.total());
    for (int i = 0; i < P.rows(); ++i)
        if (std::abs(pu[i] - c[i]) > bound) return false;
    return true;
}

std::vector<double> project_simplex(std::vector<double> v, double total) {
    if (!(total >= 0.0)) throw Error("simplex total must be nonnegative");
    if (v.empty()) return v;
    // Sort-based projection: find the largest k whose top-k average shift
    // theta keeps all top-k entries positive, then shift and clip.
    std::vector<double> sorted(v);
    std::sort(sorted.begin(), sorted.end(), std::greater<>());
    double cumsum = 0.0;
    double theta = (std::reduce(v.begin(), v.end()) - total) / static_cast<double>(v.size());
    for (std::size_t k = 0; k < sorted.size(); ++k) {
        cumsum += sorted[k];
        const double cand = (cumsum - total) / static_cast<double>(k + 1);
        if (k + 1 == sorted.size() || sorted[k + 1] <= cand) {
            theta = cand;
            break;
        }
    }
    for (double& x : v) x = std::max(x - theta, 0.0);
    return v;
}

namespace {

// Projected gradient ascent over {u >= 0, ||u||_1 = C} for a concave
// objective given by value/gradient callbacks. Stops when the unit-step
// projected gradient is small.
template <typename Value, typename Gradient>
DensityEstimate ascend_simplex(const AssignmentMatrix& P, const CountVector& c,
                               std::vector<double> u, Value value, Gradient gradient,
                               const MapConfig& cfg, const char* name) {
    if (cfg.max_iters < 1 || !(cfg.tol > 0.0) || !(cfg.initial_step > 0.0))
        throw ConfigError("MAP needs max_iters >= 1 and positive tolerances");
    const double C = c.total();

    DensityEstimate est;
    est.estimator = name;
    est.converged = false;

    double f = value(u);
    double step = cfg.initial_step;
    for (int it = 0; it < cfg.max_iters; ++it) {
        std::vector<double> g = gradient(u);

        std::vector<double> probe(u.size());
        for (std::size_t j = 0; j < u.size(); ++j) probe[j] = u[j] + g[j];
        probe = project_simplex(std::move(probe), C);
        double pg = 0.0;
        for (std::size_t j = 0; j < u.size(); ++j) pg = std::max(pg, std::abs(probe[j] - u[j]));
        if (pg <= cfg.tol) {
            est.converged = true;
            break;
        }

        bool accepted = false;
        for (int bt = 0; bt < cfg.max_backtracks; ++bt) {
            std::vector<double> trial(u.size());
            for (std::size_t j = 0; j < u.size(); ++j) trial[j] = u[j] + step * g[j];
            trial = project_simplex(std::move(trial), C);
            double along = 0.0;
            for (std::size_t j = 0; j < u.size(); ++j) along += g[j] * (trial[j] - u[j]);
            const double ft = value(trial);
            if (std::isfinite(ft) && ft >= f + cfg.armijo * along && along >= 0.0) {
                u = std::move(trial);
                f = ft;
                accepted = true;
                step *= 2.0;  // warm-start the next search from a bolder step
                break;
            }
            step *= cfg.backtrack;
        }
        ++est.iterations;
        if (!accepted) {
            // The line search exhausted its budget: either we are at the
            // optimum up to floating-point resolution or the step has
            // underflowed. Check the stopping rule once more and stop.
            std::vector<double> g2 = gradient(u);
            std::vector<double> probe2(u.size());
            for (std::size_t j = 0; j < u.size(); ++j) probe2[j] = u[j] + g2[j];
            probe2 = project_simplex(std::move(probe2), C);
            double pg2 = 0.0;
            for (std::size_t j = 0; j < u.size(); ++j)
                pg2 = std::max(pg2, std::abs(probe2[j] - u[j]));
            est.converged = pg2 <= cfg.tol;
            break;
        }
    }

    est.values = std::move(u);
    est.mass = std::accumulate(est.values.begin(), est.values.end(), 0.0);
    est.ml_residual = ml_optimality_residual(P, c, est.values);
    std::vector<double> pu = P.apply(est.values);
    double cr = 0.0;
    for (int i = 0; i < P.rows(); ++i) cr = std::max(cr, std::abs(pu[i] - c[i]));
    est.constraint_residual = cr;
    return est;
}

}  // namespace

DensityEstimate map_estimate(const AssignmentMatrix& P, const CountVector& c,
                             const PriorVector& alpha, const MapConfig& cfg) {
    check_dims(P, c.size(), alpha.size());
    const double C = c.total();
    std::vector<double> log_alpha(alpha.size());
    for (int j = 0; j < alpha.size(); ++j) log_alpha[j] = std::log(alpha[j]);

    auto value = [&](const std::vector<double>& u) {
        double f = loglikelihood(P, c, u);
        if (!std::isfinite(f)) return f;
        for (std::size_t j = 0; j < u.size(); ++j)
            f += u[j] * log_alpha[j] - boost::math::lgamma(u[j] + 1.0);
        return f;
    };
    auto gradient = [&](const std::vector<double>& u) {
        std::vector<double> g = loglik_gradient(P, c, u);
        for (std::size_t j = 0; j < u.size(); ++j)
            g[j] += log_alpha[j] - boost::math::digamma(u[j] + 1.0);
        return g;
    };
    return ascend_simplex(P, c, alpha.rescaled(C), value, gradient, cfg, "map");
}

DensityEstimate approx_map_estimate(const AssignmentMatrix& P, const CountVector& c,
                                    const PriorVector& alpha, const MapConfig& cfg) {
    check_dims(P, c.size(), alpha.size());
    const double C = c.total();
    std::vector<double> a = alpha.rescaled(C);

    auto value = [&](const std::vector<double>& u) {
        double f = loglikelihood(P, c, u);
        if (!std::isfinite(f)) return f;
        for (std::size_t j = 0; j < u.size(); ++j) {
            const double d = u[j] - a[j];
            f -= 0.5 * d * d / a[j];
        }
        return f;
    };
    auto gradient = [&](const std::vector<double>& u) {
        std::vector<double> g = loglik_gradient(P, c, u);
        for (std::size_t j = 0; j < u.size(); ++j) g[j] -= (u[j] - a[j]) / a[j];
        return g;
    };
    return ascend_simplex(P, c, a, value, gradient, cfg, "amap");
}

namespace {

std::uint64_t fnv_mix(std::uint64_t h, const void* data, std::size_t len) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t k = 0; k < len; ++k) {
        h ^= p[k];
        h *= 0x100000001b3ull;
    }
    return h;
}

}  // namespace

std::uint64_t df_fingerprint(const AssignmentMatrix& P, const PriorVector& alpha) {
    if (alpha.size() != P.cols()) throw DimensionMismatch("prior size must match matrix columns");
    const int I = P.rows();
    const int J = P.cols();
    std::uint64_t h = 0xcbf29ce484222325ull;
    h = fnv_mix(h, &I, sizeof I);
    h = fnv_mix(h, &J, sizeof J);
    for (int j = 0; j < J; ++j) {
        for (const auto& e : P.column(j)) {
            h = fnv_mix(h, &j, sizeof j);
            h = fnv_mix(h, &e.index, sizeof e.index);
            h = fnv_mix(h, &e.value, sizeof e.value);
        }
        const double aj = alpha[j];
        h = fnv_mix(h, &aj, sizeof aj);
    }
    return h;
}

DfOperator df_precompute(const AssignmentMatrix& P, const PriorVector& alpha) {
    if (alpha.size() != P.cols()) throw DimensionMismatch("prior size must match matrix columns");
    const int I = P.rows();
    const int J = P.cols();

    // Merge rows that coincide entrywise within 1e-12; identical cells make
    // the Gram matrix singular and carry no extra information. Merged rows
    // are summed so the matrix stays column-stochastic overall.
    constexpr double row_tol = 1e-12;
    auto row_equal = [&](int a, int b) {
        auto ra = P.row(a);
        auto rb = P.row(b);
        if (ra.size() != rb.size()) return false;
        for (std::size_t t = 0; t < ra.size(); ++t) {
            if (ra[t].index != rb[t].index) return false;
            if (std::abs(ra[t].value - rb[t].value) > row_tol) return false;
        }
        return true;
    };

    std::vector<int> row_group(I, -1);
    std::vector<int> representative;
    for (int i = 0; i < I; ++i) {
        if (P.row(i).empty()) continue;  // an all-zero row cannot be inverted through
        for (std::size_t gidx = 0; gidx < representative.size(); ++gidx) {
            if (row_equal(i, representative[gidx])) {
                row_group[i] = static_cast<int>(gidx);
                break;
            }
        }
        if (row_group[i] < 0) {
            row_group[i] = static_cast<int>(representative.size());
            representative.push_back(i);
        }
    }
    const int Im = static_cast<int>(representative.size());
    if (Im == 0) throw SingularGram("all rows of the assignment matrix are zero");

    DfOperator op;
    op.row_group_ = row_group;
    op.Pm_ = Eigen::MatrixXd::Zero(Im, J);
    for (int i = 0; i < I; ++i) {
        if (row_group[i] < 0) continue;
        for (const auto& e : P.row(i)) op.Pm_(row_group[i], e.index) += e.value;
    }
    op.alpha_ = Eigen::Map<const Eigen::VectorXd>(alpha.values().data(), J);

    const Eigen::MatrixXd PA = op.Pm_ * op.alpha_.asDiagonal();  // Im x J
    const Eigen::MatrixXd gram = PA * op.Pm_.transpose();        // Im x Im
    Eigen::LLT<Eigen::MatrixXd> llt(gram);
    if (llt.info() != Eigen::Success)
        throw SingularGram("P A P' is not positive definite; cells are linearly dependent");
    op.F_ = llt.solve(PA).transpose();  // J x Im

    // Right-inverse check: P F = I is exact algebra; failing it flags a
    // numerically unusable factorization even when LLT formally succeeded.
    const double pf_err = (op.Pm_ * op.F_ - Eigen::MatrixXd::Identity(Im, Im)).cwiseAbs().maxCoeff();
    op.g_unit_ = op.F_ * (op.Pm_ * op.alpha_) - op.alpha_;
    const double id_err = (op.F_ * (op.Pm_ * op.alpha_) - op.g_unit_ - op.alpha_).cwiseAbs().maxCoeff();
    if (!(pf_err <= 1e-8) || !(id_err <= 1e-8))
        throw SingularGram("P A P' is too ill-conditioned to invert reliably");

    op.fingerprint_ = df_fingerprint(P, alpha);
    return op;
}

namespace {

constexpr char kDfOperatorMagic[8] = {'D', 'F', 'O', 'P', '0', '1', '\n', '\0'};

template <typename T>
void write_raw(std::ostream& out, const T* data, std::size_t n) {
    out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * sizeof(T)));
}

template <typename T>
void read_raw(std::istream& in, T* data, std::size_t n) {
    in.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(n * sizeof(T)));
    if (!in) throw IoError("truncated DF operator snapshot");
}

}  // namespace

void DfOperator::save(std::ostream& out) const {
    write_raw(out, kDfOperatorMagic, sizeof kDfOperatorMagic);
    const std::int64_t dims[3] = {Pm_.rows(), Pm_.cols(),
                                  static_cast<std::int64_t>(row_group_.size())};
    write_raw(out, &fingerprint_, 1);
    write_raw(out, dims, 3);
    write_raw(out, row_group_.data(), row_group_.size());
    write_raw(out, F_.data(), static_cast<std::size_t>(F_.size()));
    write_raw(out, Pm_.data(), static_cast<std::size_t>(Pm_.size()));
    write_raw(out, alpha_.data(), static_cast<std::size_t>(alpha_.size()));
    write_raw(out, g_unit_.data(), static_cast<std::size_t>(g_unit_.size()));
    if (!out) throw IoError("DF operator snapshot write failed");
}

DfOperator DfOperator::load(std::istream& in) {
    char magic[sizeof kDfOperatorMagic];
    read_raw(in, magic, sizeof magic);
    if (!std::equal(std::begin(magic), std::end(magic), std::begin(kDfOperatorMagic)))
        throw IoError("not a DF operator snapshot");
    DfOperator op;
    std::int64_t dims[3];
    read_raw(in, &op.fingerprint_, 1);
    read_raw(in, dims, 3);
    if (dims[0] < 1 || dims[1] < 1 || dims[2] < dims[0])
        throw IoError("corrupt DF operator snapshot dimensions");
    op.row_group_.resize(static_cast<std::size_t>(dims[2]));
    read_raw(in, op.row_group_.data(), op.row_group_.size());
    op.F_.resize(dims[1], dims[0]);
    op.Pm_.resize(dims[0], dims[1]);
    op.alpha_.resize(dims[1]);
    op.g_unit_.resize(dims[1]);
    read_raw(in, op.F_.data(), static_cast<std::size_t>(op.F_.size()));
    read_raw(in, op.Pm_.data(), static_cast<std::size_t>(op.Pm_.size()));
    read_raw(in, op.alpha_.data(), static_cast<std::size_t>(op.alpha_.size()));
    read_raw(in, op.g_unit_.data(), static_cast<std::size_t>(op.g_unit_.size()));
    return op;
}

DensityEstimate df_estimate(const DfOperator& op, const CountVector& c, bool refine) {
    if (c.size() != op.original_cells())
        throw DimensionMismatch("count vector size must match the operator's cell count");
    const int Im = op.cells();
    const int J = op.tiles();
    const double C = c.total();

    Eigen::VectorXd cm = Eigen::VectorXd::Zero(Im);
    for (int i = 0; i < c.size(); ++i)
        if (op.row_group_[i] >= 0) cm[op.row_group_[i]] += c[i];

    Eigen::VectorXd x = op.F_ * cm - C * op.g_unit_;

    DensityEstimate est;
    est.estimator = "df";
    std::vector<double> u(J);
    int clipped = 0;
    for (int j = 0; j < J; ++j) {
        if (x[j] < 0.0) {
            u[j] = 0.0;
            ++clipped;
        } else {
            u[j] = x[j];
        }
    }
    est.clip_count = clipped;

    if (refine && clipped > 0) {
        // Active-set iteration: fix clipped tiles at zero and re-project the
        // prior onto the count constraints restricted to the free tiles.
        const Eigen::VectorXd a = C * op.alpha_;
        std::vector<bool> active(J, false);
        for (int j = 0; j < J; ++j) active[j] = x[j] < 0.0;

        for (int pass = 0; pass < J; ++pass) {
            std::vector<int> free_tiles;
            for (int j = 0; j < J; ++j)
                if (!active[j]) free_tiles.push_back(j);
            if (free_tiles.empty()) throw SingularGram("DF refinement clipped every tile");
            const int Jf = static_cast<int>(free_tiles.size());

            Eigen::MatrixXd Pf(Im, Jf);
            Eigen::VectorXd af(Jf);
            for (int k = 0; k < Jf; ++k) {
                Pf.col(k) = op.Pm_.col(free_tiles[k]);
                af[k] = a[free_tiles[k]];
            }
            const Eigen::MatrixXd PAf = Pf * af.asDiagonal();
            // Clipping can zero out a cell's whole support (its restricted row
            // vanishes) or make two rows coincide, so the restricted Gram is
            // solved rank-revealing: consistent degenerate rows are harmless
            // and genuine inconsistency shows up in constraint_residual.
            Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(PAf * Pf.transpose());
            const Eigen::VectorXd lambda = cod.solve(cm - Pf * af);
            const Eigen::VectorXd uf = af + af.asDiagonal() * (Pf.transpose() * lambda);

            bool new_active = false;
            for (int k = 0; k < Jf; ++k) {
                if (uf[k] < 0.0) {
                    active[free_tiles[k]] = true;
                    new_active = true;
                }
            }
            ++est.iterations;
            if (!new_active) {
                std::fill(u.begin(), u.end(), 0.0);
                for (int k = 0; k < Jf; ++k) u[free_tiles[k]] = uf[k];
                break;
            }
        }
        est.clip_count = static_cast<int>(std::count(active.begin(), active.end(), true));
    }

    est.values = std::move(u);
    est.mass = std::accumulate(est.values.begin(), est.values.end(), 0.0);

    Eigen::VectorXd pu = op.Pm_ * Eigen::Map<const Eigen::VectorXd>(est.values.data(), J);
    est.constraint_residual = (pu - cm).cwiseAbs().maxCoeff();

    // Optimality residual against the merged system (what the operator was
    // built on). Guard the degenerate-denominator case: a clipped solution
    // can zero out a covered cell's expectation.
    try {
        std::vector<std::tuple<int, int, double>> trip;
        for (int i = 0; i < Im; ++i)
            for (int j = 0; j < J; ++j)
                if (op.Pm_(i, j) > 0.0) trip.emplace_back(i, j, op.Pm_(i, j));
        AssignmentMatrix Pm(Im, J, std::move(trip));
        std::vector<double> cmv(cm.data(), cm.data() + Im);
        est.ml_residual = ml_optimality_residual(Pm, CountVector(cmv), est.values);
    } catch (const Error&) {
        est.ml_residual = std::numeric_limits<double>::quiet_NaN();
    }
    return est;
}

}  // namespace celldense
