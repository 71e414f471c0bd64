#ifndef CIRBUBBLE_CLOSED_FORM_HPP
#define CIRBUBBLE_CLOSED_FORM_HPP

#include <cmath>
#include <stdexcept>
#include <vector>

#include "cirbubble/model.hpp"
#include "cirbubble/specfun.hpp"

namespace cirbubble {

/// Constants of the equal-volatility closed form.
///
/// The price is pieced together from the two homogeneous solutions
///   m(d) = M(a1, b1, x1(d)) (growing, used below d_tilde) and
///   u(d) = U(a2, b2, x2(d)) (decaying, used above d_tilde),
/// with a_i = lambda/kappa_i, b_i = 2 kappa_i theta_i / sigma^2,
/// x_i(d) = 2 kappa_i d / sigma^2.  Lowercase m1/u2 store the function
/// values at d_tilde; uppercase M1/U2 store the index-shifted values
/// M(a1+1,b1+1,x1), U(a2+1,b2+1,x2) entering the derivatives.
struct paste_constants {
    double E = 0.0;
    double F = 0.0;
    double A = 0.0;
    double m1 = 0.0, u2 = 0.0, M1 = 0.0, U2 = 0.0;
    double a1 = 0.0, b1 = 0.0, x1 = 0.0;
    double a2 = 0.0, b2 = 0.0, x2 = 0.0;
};

/// Sampled price data along a dividend grid.
/// Invariants: grid strictly increasing and nonnegative; bubble =
/// price - intrinsic elementwise; price >= intrinsic pointwise.
struct price_curve {
    std::vector<double> grid;
    std::vector<double> intrinsic;
    std::vector<double> price;
    std::vector<double> bubble;
    std::vector<double> relative;
};

namespace closed_form_detail {

inline void require_equal_sigma(const model_params& p, const char* who) {
    if (p.sigma1 != p.sigma2)
        throw std::domain_error(std::string(who) +
                                ": closed form requires sigma1 == sigma2; use the hjb solver");
}

inline void require_bubble_regime(const model_params& p, const char* who) {
    if (p.kappa1 == p.kappa2)
        throw std::domain_error(std::string(who) + ": kappa1 == kappa2 has no bubble regime");
    if (!(p.kappa1 * p.theta1 > p.kappa2 * p.theta2))
        throw std::domain_error(std::string(who) +
                                ": kappa1*theta1 <= kappa2*theta2, no bubble exists");
}

inline void check_d(double d, const char* who) {
    if (!(std::isfinite(d) && d >= 0.0))
        throw std::invalid_argument(std::string(who) + ": require d >= 0");
}

}  // namespace closed_form_detail

/// Solves the C^1 pasting of the two branches at d_tilde.  With
///   dv = (slope2 - slope1)(d_tilde - d_bar),  ds = slope2 - slope1,
///   slope_i = 1/(lambda + kappa_i),
/// the system  E m(d_tilde) - F u(d_tilde) = dv,
///             E m'(d_tilde) - F u'(d_tilde) = ds
/// has determinant lambda * A with A = 2 m1 U2 / sigma^2 + M1 u2 / (kappa1 theta1),
/// giving
///   E = [u2 (kappa1-kappa2) - 2 U2 kappa1 kappa2 (theta1-theta2)/sigma^2] / W,
///   F = [M1 kappa2 (theta1-theta2)/theta1 + m1 (kappa1-kappa2)] / W,
///   W = lambda (lambda+kappa1)(lambda+kappa2) A.
inline paste_constants compute_paste_constants(const model_params& p) {
    validate_params(p);
    closed_form_detail::require_equal_sigma(p, "compute_paste_constants");
    closed_form_detail::require_bubble_regime(p, "compute_paste_constants");
    const double s2 = p.sigma1 * p.sigma1;
    const double dt = *thresholds(p).d_tilde;

    paste_constants c;
    c.a1 = p.lambda / p.kappa1;
    c.b1 = 2.0 * p.kappa1 * p.theta1 / s2;
    c.x1 = 2.0 * p.kappa1 * dt / s2;
    c.a2 = p.lambda / p.kappa2;
    c.b2 = 2.0 * p.kappa2 * p.theta2 / s2;
    c.x2 = 2.0 * p.kappa2 * dt / s2;

    c.m1 = kummer_m({c.a1, c.b1, c.x1});
    c.M1 = kummer_m({c.a1 + 1.0, c.b1 + 1.0, c.x1});
    c.u2 = tricomi_u({c.a2, c.b2, c.x2});
    c.U2 = tricomi_u({c.a2 + 1.0, c.b2 + 1.0, c.x2});

    c.A = 2.0 * c.m1 * c.U2 / s2 + c.M1 * c.u2 / (p.kappa1 * p.theta1);
    const double W = p.lambda * (p.lambda + p.kappa1) * (p.lambda + p.kappa2) * c.A;
    const double dk = p.kappa1 - p.kappa2;
    c.E = (c.u2 * dk - 2.0 * c.U2 * p.kappa1 * p.kappa2 * (p.theta1 - p.theta2) / s2) / W;
    c.F = (c.M1 * p.kappa2 * (p.theta1 - p.theta2) / p.theta1 + c.m1 * dk) / W;
    return c;
}

namespace closed_form_detail {

inline void require_e_nonneg(const paste_constants& c, const char* who) {
    if (c.E < 0.0)
        throw std::domain_error(std::string(who) +
                                ": E < 0, the closed form is not an equilibrium price here; "
                                "use the hjb solver");
}

inline double d_tilde_of(const model_params& p, const paste_constants& c) {
    return c.x1 * p.sigma1 * p.sigma1 / (2.0 * p.kappa1);
}

}  // namespace closed_form_detail

/// Minimal equilibrium price (sigma1 == sigma2, E >= 0):
///   d <= d_tilde: d/(lambda+kappa1) + theta1 kappa1/(lambda(lambda+kappa1)) + E m(d)
///   d >  d_tilde: d/(lambda+kappa2) + theta2 kappa2/(lambda(lambda+kappa2)) + F u(d)
inline double phi(const model_params& p, const paste_constants& c, double d) {
    closed_form_detail::check_d(d, "phi");
    closed_form_detail::require_e_nonneg(c, "phi");
    const double s2 = p.sigma1 * p.sigma1;
    if (d <= closed_form_detail::d_tilde_of(p, c)) {
        const double m = kummer_m({c.a1, c.b1, 2.0 * p.kappa1 * d / s2});
        return d / (p.lambda + p.kappa1) +
               p.theta1 * p.kappa1 / (p.lambda * (p.lambda + p.kappa1)) + c.E * m;
    }
    const double u = tricomi_u({c.a2, c.b2, 2.0 * p.kappa2 * d / s2});
    return d / (p.lambda + p.kappa2) + p.theta2 * p.kappa2 / (p.lambda * (p.lambda + p.kappa2)) +
           c.F * u;
}

/// Analytic first derivative of phi.
inline double phi_prime(const model_params& p, const paste_constants& c, double d) {
    closed_form_detail::check_d(d, "phi_prime");
    closed_form_detail::require_e_nonneg(c, "phi_prime");
    const double s2 = p.sigma1 * p.sigma1;
    if (d <= closed_form_detail::d_tilde_of(p, c)) {
        const double M = kummer_m({c.a1 + 1.0, c.b1 + 1.0, 2.0 * p.kappa1 * d / s2});
        return 1.0 / (p.lambda + p.kappa1) + c.E * p.lambda / (p.kappa1 * p.theta1) * M;
    }
    const double U = tricomi_u({c.a2 + 1.0, c.b2 + 1.0, 2.0 * p.kappa2 * d / s2});
    return 1.0 / (p.lambda + p.kappa2) - c.F * 2.0 * p.lambda / s2 * U;
}

/// Analytic second derivative of phi.
inline double phi_second(const model_params& p, const paste_constants& c, double d) {
    closed_form_detail::check_d(d, "phi_second");
    closed_form_detail::require_e_nonneg(c, "phi_second");
    const double s2 = p.sigma1 * p.sigma1;
    if (d <= closed_form_detail::d_tilde_of(p, c)) {
        const double g = 2.0 * p.kappa1 / s2;
        const double M = kummer_m({c.a1 + 2.0, c.b1 + 2.0, g * d});
        return c.E * g * g * (c.a1 / c.b1) * ((c.a1 + 1.0) / (c.b1 + 1.0)) * M;
    }
    const double g = 2.0 * p.kappa2 / s2;
    const double U = tricomi_u({c.a2 + 2.0, c.b2 + 2.0, g * d});
    return c.F * g * g * c.a2 * (c.a2 + 1.0) * U;
}

/// Bubble size by the piecewise case formulas (split at d_bar and d_tilde,
/// ordered by the sign of theta1 - theta2).  Identical to
/// phi - intrinsic_value; kept as the independent expression it reduces to.
inline double bubble_size(const model_params& p, const paste_constants& c, double d) {
    closed_form_detail::check_d(d, "bubble_size");
    closed_form_detail::require_e_nonneg(c, "bubble_size");
    const auto th = thresholds(p);
    const double d_bar = *th.d_bar;
    const double d_til = *th.d_tilde;
    const double s2 = p.sigma1 * p.sigma1;
    const double slope_gap =
        (p.kappa1 - p.kappa2) / ((p.lambda + p.kappa1) * (p.lambda + p.kappa2));
    auto m = [&] { return kummer_m({c.a1, c.b1, 2.0 * p.kappa1 * d / s2}); };
    auto u = [&] { return tricomi_u({c.a2, c.b2, 2.0 * p.kappa2 * d / s2}); };
    if (p.theta1 <= p.theta2) {
        // d_bar <= d_tilde; d_bar may be negative, which skips the first case.
        if (d <= d_bar) return c.E * m();
        if (d <= d_til) return c.E * m() - slope_gap * (d - d_bar);
        return c.F * u();
    }
    // theta1 > theta2: d_tilde <= d_bar.
    if (d <= d_til) return c.E * m();
    if (d <= d_bar) return c.F * u() + slope_gap * (d - d_bar);
    return c.F * u();
}

/// R(d) = phi(d)/I(d) - 1.
inline double relative_bubble(const model_params& p, const paste_constants& c, double d) {
    return phi(p, c, d) / intrinsic_value(p, d) - 1.0;
}

/// Equilibrium holder: group 1 below d_tilde (higher drift), group 2 above.
/// The boundary point is assigned to group 1.
inline int owner(const model_params& p, double d) {
    validate_params(p);
    closed_form_detail::check_d(d, "owner");
    if (p.kappa1 == p.kappa2)
        throw std::domain_error("owner: no trading boundary when kappa1 == kappa2");
    return d <= *thresholds(p).d_tilde ? 1 : 2;
}

/// Sign test for E without forming E itself:
///   (kappa1-kappa2) u2 >= (2 kappa1 kappa2 (theta1-theta2)/sigma^2) U2.
/// `ratio` (= U2/u2) against `bound` (= 1/(x2-b2)) is the diagnostic the
/// sign question reduces to when theta1 > theta2.
struct e_sign_report {
    bool nonneg = false;
    double lhs = 0.0;
    double rhs = 0.0;
    double ratio = 0.0;
    double bound = 0.0;
};

inline e_sign_report check_e_nonneg(const model_params& p) {
    validate_params(p);
    closed_form_detail::require_equal_sigma(p, "check_e_nonneg");
    closed_form_detail::require_bubble_regime(p, "check_e_nonneg");
    const auto c = compute_paste_constants(p);
    e_sign_report r;
    r.lhs = (p.kappa1 - p.kappa2) * c.u2;
    r.rhs = 2.0 * p.kappa1 * p.kappa2 * (p.theta1 - p.theta2) / (p.sigma1 * p.sigma1) * c.U2;
    r.nonneg = r.lhs >= r.rhs;
    r.ratio = c.U2 / c.u2;
    r.bound = 1.0 / (c.x2 - c.b2);
    return r;
}

/// Raw-argument form of the ratio bound U(a+1,b+1,x)/U(a,b,x) <= 1/(x-b).
struct uratio_report {
    double lhs = 0.0;  // U(a+1,b+1,x)/U(a,b,x)
    double rhs = 0.0;  // 1/(x-b)
    bool holds = false;
};

inline uratio_report uratio_check(const hypergeom_args& s) {
    if (!(s.x > s.b))
        throw std::invalid_argument("uratio_check: bound requires x > b");
    uratio_report r;
    r.lhs = tricomi_u({s.a + 1.0, s.b + 1.0, s.x}) / tricomi_u(s);
    r.rhs = 1.0 / (s.x - s.b);
    r.holds = r.lhs <= r.rhs;
    return r;
}

/// Residual of max{L1 f, L2 f} - lambda f + d at d, with
/// L_i f = kappa_i (theta_i - d) f' + (sigma_i^2 d / 2) f''.
/// The caller supplies value/first/second evaluators.
template <class V, class D1, class D2>
double verify_ode_residual(const model_params& p, V&& value, D1&& first, D2&& second, double d) {
    validate_params(p);
    closed_form_detail::check_d(d, "verify_ode_residual");
    const double f = value(d);
    const double f1 = first(d);
    const double f2 = second(d);
    const double l1 = p.kappa1 * (p.theta1 - d) * f1 + 0.5 * p.sigma1 * p.sigma1 * d * f2;
    const double l2 = p.kappa2 * (p.theta2 - d) * f1 + 0.5 * p.sigma2 * p.sigma2 * d * f2;
    return std::max(l1, l2) - p.lambda * f + d;
}

/// verify_ode_residual specialized to the closed form (analytic derivatives).
inline double phi_ode_residual(const model_params& p, const paste_constants& c, double d) {
    return verify_ode_residual(
        p, [&](double x) { return phi(p, c, x); }, [&](double x) { return phi_prime(p, c, x); },
        [&](double x) { return phi_second(p, c, x); }, d);
}

/// Certified lower bound max(branch formula, I) that stays valid when E < 0,
/// where phi itself refuses to price.
inline double price_lower_bound(const model_params& p, const paste_constants& c, double d) {
    closed_form_detail::check_d(d, "price_lower_bound");
    const double s2 = p.sigma1 * p.sigma1;
    double branch;
    if (d <= closed_form_detail::d_tilde_of(p, c)) {
        branch = d / (p.lambda + p.kappa1) +
                 p.theta1 * p.kappa1 / (p.lambda * (p.lambda + p.kappa1)) +
                 c.E * kummer_m({c.a1, c.b1, 2.0 * p.kappa1 * d / s2});
    } else {
        branch = d / (p.lambda + p.kappa2) +
                 p.theta2 * p.kappa2 / (p.lambda * (p.lambda + p.kappa2)) +
                 c.F * tricomi_u({c.a2, c.b2, 2.0 * p.kappa2 * d / s2});
    }
    return std::max(branch, intrinsic_value(p, d));
}

/// Samples the closed form along `grid` (strictly increasing, entries >= 0).
inline price_curve compute_price_curve(const model_params& p, const paste_constants& c,
                                       const std::vector<double>& grid) {
    if (grid.empty()) throw std::invalid_argument("compute_price_curve: empty grid");
    price_curve out;
    out.grid = grid;
    out.intrinsic.reserve(grid.size());
    out.price.reserve(grid.size());
    out.bubble.reserve(grid.size());
    out.relative.reserve(grid.size());
    double prev = -1.0;
    for (double d : grid) {
        closed_form_detail::check_d(d, "compute_price_curve");
        if (d <= prev)
            throw std::invalid_argument("compute_price_curve: grid must be strictly increasing");
        prev = d;
        const double i = intrinsic_value(p, d);
        const double v = phi(p, c, d);
        out.intrinsic.push_back(i);
        out.price.push_back(v);
        out.bubble.push_back(v - i);
        out.relative.push_back(v / i - 1.0);
    }
    return out;
}

}  // namespace cirbubble

#endif  // CIRBUBBLE_CLOSED_FORM_HPP
