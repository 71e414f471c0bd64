#ifndef CIRBUBBLE_HJB_HPP
#define CIRBUBBLE_HJB_HPP

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "cirbubble/model.hpp"
#include "cirbubble/specfun.hpp"

namespace cirbubble {

/// Uniform grid on [0, d_max] with n nodes.
struct hjb_grid {
    double d_max = 0.0;
    int n = 0;

    double h() const { return d_max / (n - 1); }
    double node(int i) const { return d_max * i / (n - 1); }
};

/// d_max large enough that the far field is deep in the group-2 affine
/// regime: max(10 max(theta), 2 d_bar+, 2 d_tilde+).
inline double default_d_max(const model_params& p) {
    validate_params(p);
    double m = 10.0 * std::max(p.theta1, p.theta2);
    const auto th = thresholds(p);
    if (th.d_bar) m = std::max(m, 2.0 * std::max(*th.d_bar, 0.0));
    if (th.d_tilde) m = std::max(m, 2.0 * std::max(*th.d_tilde, 0.0));
    return m;
}

struct solve_report {
    hjb_grid grid;
    std::vector<double> values;
    std::vector<int> policy;       // group whose operator attains the max, per node
    int iterations = 0;
    double final_residual = 0.0;   // sup-norm Bellman residual of the discrete system
    bool converged = false;
};

/// Extra bookkeeping from the resale iteration.
struct resale_diagnostics {
    int stages = 0;
    double worst_decrease = 0.0;        // most negative pointwise increment seen (<= 0)
    std::vector<double> increments;     // sup-norm increment per stage
};

namespace hjb_detail {

inline void validate_grid(const model_params& p, const hjb_grid& g) {
    if (g.n < 3) throw std::invalid_argument("hjb_grid: require n >= 3");
    double need = std::max(p.theta1, p.theta2);
    const auto th = thresholds(p);
    if (th.d_bar) need = std::max(need, *th.d_bar);
    if (th.d_tilde) need = std::max(need, *th.d_tilde);
    if (!(std::isfinite(g.d_max) && g.d_max > need))
        throw std::invalid_argument(
            "hjb_grid: d_max must exceed max(theta1, theta2, d_bar+, d_tilde+)");
}

/// Logarithmic slope u'(d_max)/u(d_max) of the decaying group-2 tail mode;
/// closes the far boundary as phi'(d_max) = 1/(lambda+kappa2) +
/// rate * (phi(d_max) - I(d_max)).  Exact for the closed form and for the
/// affine no-bubble solutions, and nonpositive, so it tightens the diagonal.
inline double robin_rate(const model_params& p, double d_max) {
    const double s2 = p.sigma2 * p.sigma2;
    const double a2 = p.lambda / p.kappa2;
    const double b2 = 2.0 * p.kappa2 * p.theta2 / s2;
    const double x2 = 2.0 * p.kappa2 * d_max / s2;
    const double uratio = tricomi_u({a2 + 1.0, b2 + 1.0, x2}) / tricomi_u({a2, b2, x2});
    return -(2.0 * p.kappa2 / s2) * a2 * uratio;
}

struct row {
    double low = 0.0, diag = 0.0, up = 0.0, rhs = 0.0;
};

/// Boundary data shared by every row build of one solve.
struct closure {
    double rate = 0.0;     // robin_rate at d_max
    double slope = 0.0;    // 1/(lambda+kappa2)
    double i_max = 0.0;    // intrinsic value at d_max
};

/// One row of the discrete (lambda - L_g) operator.  Drift is centered
/// wherever the diffusion weight dominates (second order) and upwinded
/// otherwise, keeping the off-diagonals nonpositive either way.  d = 0
/// degenerates to a two-point drift row; d = d_max eliminates the ghost
/// node through the Robin closure.
inline row stationary_row(const model_params& p, const hjb_grid& g, int group, int i,
                          const closure& bc) {
    const double kappa = group == 1 ? p.kappa1 : p.kappa2;
    const double theta = group == 1 ? p.theta1 : p.theta2;
    const double sigma = group == 1 ? p.sigma1 : p.sigma2;
    const double h = g.h();
    const double d = g.node(i);
    const double mu = kappa * (theta - d);
    if (i == 0) return {0.0, p.lambda + mu / h, -mu / h, 0.0};
    const double s = 0.5 * sigma * sigma * d / (h * h);
    if (i == g.n - 1) {
        const double w = mu + 2.0 * s * h;
        return {-2.0 * s, p.lambda + 2.0 * s - w * bc.rate, 0.0,
                d + w * (bc.slope - bc.rate * bc.i_max)};
    }
    if (s >= std::fabs(mu) / (2.0 * h))
        return {-(s - mu / (2.0 * h)), p.lambda + 2.0 * s, -(s + mu / (2.0 * h)), d};
    const double mup = std::max(mu, 0.0);
    const double mum = std::max(-mu, 0.0);
    return {-(s + mum / h), p.lambda + std::fabs(mu) / h + 2.0 * s, -(s + mup / h), d};
}

inline void check_monotone(const row& r) {
    if (!(r.low <= 0.0 && r.up <= 0.0 && r.diag > 0.0 && r.diag + r.low + r.up > 0.0))
        throw std::runtime_error("hjb: discrete scheme lost monotonicity; refine the grid");
}

/// Thomas elimination; rows must form a (weakly diagonally dominant) M-matrix.
inline void solve_tridiagonal(const std::vector<row>& rows, std::vector<double>& x,
                              std::vector<double>& scratch) {
    const int n = static_cast<int>(rows.size());
    scratch.resize(n);
    x.resize(n);
    double diag = rows[0].diag;
    x[0] = rows[0].rhs / diag;
    for (int i = 1; i < n; ++i) {
        scratch[i] = rows[i - 1].up / diag;
        diag = rows[i].diag - rows[i].low * scratch[i];
        x[i] = (rows[i].rhs - rows[i].low * x[i - 1]) / diag;
    }
    for (int i = n - 2; i >= 0; --i) x[i] -= scratch[i + 1] * x[i + 1];
}

inline double row_residual(const row& r, const std::vector<double>& v, int i) {
    const int n = static_cast<int>(v.size());
    double acc = r.diag * v[i] - r.rhs;
    if (i > 0) acc += r.low * v[i - 1];
    if (i < n - 1) acc += r.up * v[i + 1];
    return acc;
}

/// One implicit-Euler step of the optimal stopping problem
///     min((V - v_old)/dt + A V - rhs, V - obstacle) = 0,
/// the stopping decision solved jointly with the step by Howard iteration
/// over {hold, stop} per node (stop rows are identity rows pinned to the
/// obstacle; improvement takes the smaller of the two residuals).
/// Splitting the step from the projection instead leaves an O(dt) defect
/// pinned at the stop/hold interface, which the resale iteration cannot
/// shed.
inline void stopping_step(const std::vector<row>& stat, double dt,
                          const std::vector<double>& obstacle, std::vector<double>& v,
                          std::vector<row>& rows, std::vector<char>& stop,
                          std::vector<double>& scratch) {
    const int n = static_cast<int>(stat.size());
    const std::vector<double> v_old = v;
    const auto hold_row = [&](int i) {
        return row{dt * stat[i].low, 1.0 + dt * stat[i].diag, dt * stat[i].up,
                   v_old[i] + dt * stat[i].rhs};
    };
    // the stop front can creep one node per pass from a cold start, so the
    // cap must scale with the grid; callers warm-start the stop set
    const int cap = 2 * n + 100;
    for (int pass = 0; pass < cap; ++pass) {
        for (int i = 0; i < n; ++i)
            rows[i] = stop[i] ? row{0.0, 1.0, 0.0, obstacle[i]} : hold_row(i);
        solve_tridiagonal(rows, v, scratch);
        bool stable = true;
        for (int i = 0; i < n; ++i) {
            // residuals in value units; keep the current policy on roundoff ties
            const double f_hold =
                row_residual(hold_row(i), v, i) / (1.0 + dt * stat[i].diag);
            const double f_stop = v[i] - obstacle[i];
            const double tie = 1e-12 * (1.0 + std::fabs(v[i]));
            char next = stop[i];
            if (f_stop < f_hold - tie)
                next = 1;
            else if (f_hold < f_stop - tie)
                next = 0;
            stable = stable && next == stop[i];
            stop[i] = next;
        }
        if (stable) return;
    }
    throw std::runtime_error("hjb: stopping-step policy iteration failed to settle");
}

}  // namespace hjb_detail

/// Policy iteration for the discretized max{L1 phi, L2 phi} - lambda phi + d = 0.
/// Alternates exact tridiagonal solves under the current policy with a
/// pointwise argmax update; stops when the policy is stable and the Bellman
/// residual is below tol.  A capped iteration count returns converged=false
/// with the last residual rather than throwing.
inline solve_report solve_hjb(const model_params& p, const hjb_grid& grid, double tol = 1e-8) {
    validate_params(p);
    hjb_detail::validate_grid(p, grid);
    if (!(std::isfinite(tol) && tol > 0.0))
        throw std::invalid_argument("solve_hjb: require tol > 0");

    const hjb_detail::closure bc{hjb_detail::robin_rate(p, grid.d_max),
                                 1.0 / (p.lambda + p.kappa2),
                                 intrinsic_value(p, grid.d_max)};
    const int n = grid.n;
    constexpr int cap = 200;

    solve_report rep;
    rep.grid = grid;
    rep.policy.resize(n);
    for (int i = 0; i < n; ++i) {
        const double d = grid.node(i);
        rep.policy[i] = p.kappa1 * (p.theta1 - d) >= p.kappa2 * (p.theta2 - d) ? 1 : 2;
    }

    std::vector<hjb_detail::row> rows(n);
    std::vector<double> scratch;
    std::vector<int> next(n);
    for (int iter = 1; iter <= cap; ++iter) {
        for (int i = 0; i < n; ++i) {
            rows[i] = hjb_detail::stationary_row(p, grid, rep.policy[i], i, bc);
            hjb_detail::check_monotone(rows[i]);
        }
        hjb_detail::solve_tridiagonal(rows, rep.values, scratch);

        double residual = 0.0;
        bool stable = true;
        for (int i = 0; i < n; ++i) {
            const auto r1 = hjb_detail::stationary_row(p, grid, 1, i, bc);
            const auto r2 = hjb_detail::stationary_row(p, grid, 2, i, bc);
            const double e1 = hjb_detail::row_residual(r1, rep.values, i);
            const double e2 = hjb_detail::row_residual(r2, rep.values, i);
            next[i] = e1 <= e2 ? 1 : 2;
            residual = std::max(residual, std::fabs(std::min(e1, e2)));
            stable = stable && next[i] == rep.policy[i];
        }
        rep.iterations = iter;
        rep.final_residual = residual;
        if (stable && residual <= tol) {
            rep.converged = true;
            return rep;
        }
        rep.policy = next;
    }
    return rep;  // converged stays false
}

/// Resale-operator iteration: P_0 = I; each stage values, per group, the
/// option to collect dividends and sell at the previous price, by implicit
/// backward induction with the stopping decision applied every step; the
/// stage result is the groupwise maximum.  Iterates are nondecreasing by
/// construction (stopping immediately recovers the previous price); the
/// fixed point coincides with the solve_hjb grid solution since both use
/// the same stationary rows.
inline solve_report resale_fixed_point(const model_params& p, const hjb_grid& grid,
                                       double horizon, int steps, int k_max, double tol = 1e-8,
                                       resale_diagnostics* diag = nullptr) {
    validate_params(p);
    hjb_detail::validate_grid(p, grid);
    if (!(std::isfinite(horizon) && horizon > 0.0))
        throw std::invalid_argument("resale_fixed_point: require horizon > 0");
    if (steps < 1 || k_max < 1)
        throw std::invalid_argument("resale_fixed_point: require steps >= 1 and k_max >= 1");
    if (!(std::isfinite(tol) && tol > 0.0))
        throw std::invalid_argument("resale_fixed_point: require tol > 0");

    const hjb_detail::closure bc{hjb_detail::robin_rate(p, grid.d_max),
                                 1.0 / (p.lambda + p.kappa2),
                                 intrinsic_value(p, grid.d_max)};
    const int n = grid.n;
    const double dt = horizon / steps;

    std::vector<double> price(n);
    for (int i = 0; i < n; ++i) price[i] = intrinsic_value(p, grid.node(i));

    // stationary rows per group, and their implicit-Euler counterparts
    std::vector<hjb_detail::row> stat[2], step_rows(n);
    for (int g = 0; g < 2; ++g) {
        stat[g].resize(n);
        for (int i = 0; i < n; ++i) {
            stat[g][i] = hjb_detail::stationary_row(p, grid, g + 1, i, bc);
            hjb_detail::check_monotone(stat[g][i]);
        }
    }

    solve_report rep;
    rep.grid = grid;
    rep.policy.assign(n, 1);
    if (diag) *diag = resale_diagnostics{};

    std::vector<double> w[2], v, scratch;
    std::vector<char> stop[2] = {std::vector<char>(n, 0), std::vector<char>(n, 0)};
    double increment = 0.0;
    for (int k = 1; k <= k_max; ++k) {
        for (int g = 0; g < 2; ++g) {
            v = price;
            for (int t = 0; t < steps; ++t)
                hjb_detail::stopping_step(stat[g], dt, price, v, step_rows, stop[g], scratch);
            w[g] = v;
        }
        increment = 0.0;
        double decrease = 0.0;
        for (int i = 0; i < n; ++i) {
            const double next = std::max(w[0][i], w[1][i]);
            increment = std::max(increment, next - price[i]);
            decrease = std::min(decrease, next - price[i]);
            price[i] = next;
        }
        if (diag) {
            diag->stages = k;
            diag->worst_decrease = std::min(diag->worst_decrease, decrease);
            diag->increments.push_back(increment);
        }
        if (decrease < -1e-9)
            throw std::runtime_error("resale_fixed_point: iterate decreased beyond tolerance");
        rep.iterations = k;
        if (increment < tol) {
            rep.converged = true;
            break;
        }
    }
    rep.values = std::move(price);
    rep.final_residual = increment;
    for (int i = 0; i < n; ++i) {
        const double e1 = hjb_detail::row_residual(stat[0][i], rep.values, i);
        const double e2 = hjb_detail::row_residual(stat[1][i], rep.values, i);
        rep.policy[i] = e1 <= e2 ? 1 : 2;
    }
    return rep;
}

/// Central-difference residual of the supersolution inequality at an
/// interior node: -max_g{L_g v} + lambda v - d, nonnegative (up to
/// discretization) for equilibrium price candidates.
inline double supersolution_residual(const std::vector<double>& values, const model_params& p,
                                     const hjb_grid& grid, int node) {
    validate_params(p);
    hjb_detail::validate_grid(p, grid);
    if (values.size() != static_cast<std::size_t>(grid.n))
        throw std::invalid_argument("supersolution_residual: values/grid size mismatch");
    if (node <= 0 || node >= grid.n - 1)
        throw std::domain_error("supersolution_residual: node must be interior");
    const double h = grid.h();
    const double d = grid.node(node);
    const double v = values[node];
    const double first = (values[node + 1] - values[node - 1]) / (2.0 * h);
    const double second = (values[node + 1] - 2.0 * v + values[node - 1]) / (h * h);
    const double l1 =
        p.kappa1 * (p.theta1 - d) * first + 0.5 * p.sigma1 * p.sigma1 * d * second;
    const double l2 =
        p.kappa2 * (p.theta2 - d) * first + 0.5 * p.sigma2 * p.sigma2 * d * second;
    return -std::max(l1, l2) + p.lambda * v - d;
}

}  // namespace cirbubble

#endif  // CIRBUBBLE_HJB_HPP
