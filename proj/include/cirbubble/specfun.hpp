#ifndef CIRBUBBLE_SPECFUN_HPP
#define CIRBUBBLE_SPECFUN_HPP

#include <cmath>
#include <sstream>
#include <stdexcept>
#include <string>

namespace cirbubble {

/// Argument triple for the confluent hypergeometric kernels M(a,b,x) and
/// U(a,b,x).  The admissible range mirrors what the pricing model produces:
///   a > 0   (a = lambda/kappa_i),
///   b >= 1  (b = 2*kappa_i*theta_i/sigma^2, the Feller ratio),
///   x >= 0  (x = 2*kappa_i*D/sigma^2).
struct hypergeom_args {
    double a = 0.0;
    double b = 0.0;
    double x = 0.0;
};

namespace specfun_detail {

inline std::string args_str(const hypergeom_args& s) {
    std::ostringstream os;
    os << "(a=" << s.a << ", b=" << s.b << ", x=" << s.x << ")";
    return os.str();
}

inline void validate(const hypergeom_args& s, const char* who) {
    if (!(std::isfinite(s.a) && std::isfinite(s.b) && std::isfinite(s.x)))
        throw std::invalid_argument(std::string(who) + ": non-finite argument " + args_str(s));
    if (!(s.a > 0.0))
        throw std::invalid_argument(std::string(who) + ": require a > 0, got " + args_str(s));
    if (!(s.b >= 1.0))
        throw std::invalid_argument(std::string(who) + ": require b >= 1, got " + args_str(s));
    if (!(s.x >= 0.0))
        throw std::invalid_argument(std::string(who) + ": require x >= 0, got " + args_str(s));
}

}  // namespace specfun_detail

/// Kummer function M(a,b,x) = sum_{n>=0} (a)_n x^n / ((b)_n n!).
///
/// All terms are nonnegative on the admissible range, so the sum is evaluated
/// directly; truncation stops once a term falls below 1e-16 of the running
/// sum.  Result is >= 1 for x >= 0.
inline double kummer_m(const hypergeom_args& s) {
    specfun_detail::validate(s, "kummer_m");
    constexpr int cap = 10000;
    double term = 1.0;
    double sum = 1.0;
    for (int n = 0; n < cap; ++n) {
        term *= (s.a + n) * s.x / ((s.b + n) * (n + 1));
        sum += term;
        if (!std::isfinite(sum))
            throw std::runtime_error("kummer_m: series overflow at " + specfun_detail::args_str(s));
        if (term < 1e-16 * sum) return sum;
    }
    throw std::runtime_error("kummer_m: series did not converge at " + specfun_detail::args_str(s));
}

/// Tricomi function U(a,b,x), from the Laplace-type integral
///   U(a,b,x) = x^{-a}/Gamma(a) * int_0^inf e^{-u} u^{a-1} (1+u/x)^{b-a-1} du,
/// evaluated by double-exponential quadrature after u = exp(w - e^{-w}).
/// The transformed integrand decays double-exponentially on both ends, so the
/// trapezoid sum converges geometrically under step halving.  The integrand is
/// assembled in log space to stay finite for large b and x.
inline double tricomi_u(const hypergeom_args& s) {
    specfun_detail::validate(s, "tricomi_u");
    if (!(s.x > 0.0))
        throw std::invalid_argument("tricomi_u: divergent at x = 0 for b >= 1, got " +
                                    specfun_detail::args_str(s));
    const double lg = std::lgamma(s.a);
    const double lx = std::log(s.x);
    auto node = [&](double w) -> double {
        const double emw = std::exp(-w);
        const double t = w - emw;  // ln u
        const double u = std::exp(t);
        const double e = -u + s.a * t + (s.b - s.a - 1.0) * std::log1p(u / s.x) +
                         std::log1p(emw) - s.a * lx - lg;
        return e < -745.0 ? 0.0 : std::exp(e);
    };
    constexpr double W = 7.0;
    double h = 0.5;
    double sum = 0.0;
    for (int k = 0; k <= static_cast<int>(2 * W / h); ++k) sum += node(-W + k * h);
    double val = h * sum;
    for (int level = 0; level < 9; ++level) {
        double odd = 0.0;
        const int m = static_cast<int>(2 * W / h);
        for (int k = 0; k < m; ++k) odd += node(-W + (k + 0.5) * h);
        h *= 0.5;
        const double next = 0.5 * val + h * odd;
        const bool done = std::fabs(next - val) <= 1e-13 * std::fabs(next);
        val = next;
        if (done && level >= 1) {
            // Window check: the truncated ends must carry no mass, otherwise
            // the value would be silently biased low.
            if (node(-W) + node(W) > 1e-13 * sum)
                throw std::runtime_error("tricomi_u: integration window too small at " +
                                         specfun_detail::args_str(s));
            if (!(val > 0.0))
                throw std::runtime_error("tricomi_u: underflow at " + specfun_detail::args_str(s));
            return val;
        }
    }
    throw std::runtime_error("tricomi_u: quadrature did not converge at " +
                             specfun_detail::args_str(s));
}

/// dM/dx = (a/b) M(a+1,b+1,x); strictly positive.
inline double kummer_m_prime(const hypergeom_args& s) {
    specfun_detail::validate(s, "kummer_m_prime");
    return s.a / s.b * kummer_m({s.a + 1.0, s.b + 1.0, s.x});
}

/// dU/dx = -a U(a+1,b+1,x); strictly negative.
inline double tricomi_u_prime(const hypergeom_args& s) {
    specfun_detail::validate(s, "tricomi_u_prime");
    return -s.a * tricomi_u({s.a + 1.0, s.b + 1.0, s.x});
}

/// Continued-fraction evaluation of M(a,b,x)/M(a+1,b+1,x):
///   ratio = ((b - x) + K_{m>=1}[ (a+m) x / (b+m-x) ]) / b.
/// All partial numerators are nonnegative, so for b >= x the ratio is bounded
/// below by (b-x)/b.
///
/// The tail K is evaluated backward, t_m = a_m / (b_m + t_{m+1}) from t = 0 at
/// m = depth.  Forward (Lentz-style) evaluation is unusable here once x >> b:
/// the approximants hold a spurious plateau until m ~ e*x before moving to the
/// limit (truncation error ~ x^m / (b+m)!), and in double precision the
/// rounding noise accumulated on the plateau freezes the iteration there.
/// `depth` must place the truncation past the plateau, hence the x-dependent
/// floor below.  The passage back through m < x - b amplifies rounding noise
/// by ~e^x * x^(-b-1/2) whichever direction it is taken, so the tail is
/// accumulated in long double and cross-checked against a double pass; if the
/// two disagree materially the extended mantissa is near exhaustion too and
/// the evaluation refuses rather than return quietly degraded digits.
inline double m_ratio_cf(const hypergeom_args& s, int depth = 800) {
    specfun_detail::validate(s, "m_ratio_cf");
    if (depth < 1) throw std::invalid_argument("m_ratio_cf: depth must be >= 1");
    const double needed = std::exp(1.0) * s.x + 90.0;
    if (depth < needed)
        throw std::runtime_error("m_ratio_cf: depth " + std::to_string(depth) +
                                 " below the " + std::to_string(static_cast<int>(needed) + 1) +
                                 " required at " + specfun_detail::args_str(s));
    const auto approximant = [&s](int n, auto unit) {
        using real = decltype(unit);
        real t = 0;
        for (int m = n; m >= 1; --m) {
            real den = (static_cast<real>(s.b) + m - static_cast<real>(s.x)) + t;
            if (den == real(0)) den = static_cast<real>(1e-30);
            t = (static_cast<real>(s.a) + m) * static_cast<real>(s.x) / den;
        }
        return static_cast<double>((static_cast<real>(s.b) - static_cast<real>(s.x) + t) /
                                   static_cast<real>(s.b));
    };
    const double full = approximant(depth, 1.0L);
    const double shorter = approximant(depth - 50, 1.0L);
    if (!(std::fabs(full - shorter) <= 1e-13 * std::fabs(full)))
        throw std::runtime_error("m_ratio_cf: no convergence after " + std::to_string(depth) +
                                 " terms at " + specfun_detail::args_str(s));
    // Both M series have positive terms, so the true ratio is positive; a
    // non-positive value means the iteration collapsed onto the recurrence's
    // second solution, whose surface ratio is ~ (b - x)/b.
    if (!(full > 0.0))
        throw std::runtime_error("m_ratio_cf: cancellation past x = b exhausts extended "
                                 "precision at " + specfun_detail::args_str(s));
    const double narrow = approximant(depth, 1.0);
    if (!(std::fabs(full - narrow) <= 1e-5 * std::fabs(full)))
        throw std::runtime_error("m_ratio_cf: cancellation past x = b exhausts double "
                                 "precision at " + specfun_detail::args_str(s));
    return full;
}

}  // namespace cirbubble

#endif  // CIRBUBBLE_SPECFUN_HPP
