#ifndef CIRBUBBLE_MODEL_HPP
#define CIRBUBBLE_MODEL_HPP

#include <algorithm>
#include <cmath>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>

namespace cirbubble {

/// Parameters of the two-group market.  Group i believes the dividend rate
/// follows dD = kappa_i (theta_i - D) dt + sigma_i sqrt(D) dB; lambda is the
/// common discount rate.  The normalized ordering kappa1 >= kappa2 (theta1 >=
/// theta2 on ties) is assumed by every downstream routine.
struct model_params {
    double kappa1 = 0.0;
    double kappa2 = 0.0;
    double theta1 = 0.0;
    double theta2 = 0.0;
    double sigma1 = 0.0;
    double sigma2 = 0.0;
    double lambda = 0.0;
};

struct normalize_result {
    model_params params;
    bool swapped = false;  // true when groups were exchanged to restore ordering
};

/// Trading thresholds.  Both are quotients by kappa1 - kappa2 and are left
/// empty in the kappa1 == kappa2 regime rather than set to a sentinel.
/// d_bar may be negative; d_tilde > 0 whenever a bubble exists.
struct model_thresholds {
    std::optional<double> d_bar;
    std::optional<double> d_tilde;
};

namespace model_detail {

inline void check_positive(double v, const char* name) {
    if (!(std::isfinite(v) && v > 0.0))
        throw std::invalid_argument(std::string("model_params: ") + name +
                                    " must be positive and finite");
}

inline void check_feller(double kappa, double theta, double sigma, int group) {
    const double ratio = 2.0 * kappa * theta / (sigma * sigma);
    if (!(ratio >= 1.0)) {
        std::ostringstream os;
        os << "model_params: Feller condition fails for group " << group
           << " (2*kappa*theta/sigma^2 = " << ratio << " < 1)";
        throw std::invalid_argument(os.str());
    }
}

inline void check_scalars(const model_params& p) {
    check_positive(p.kappa1, "kappa1");
    check_positive(p.kappa2, "kappa2");
    check_positive(p.theta1, "theta1");
    check_positive(p.theta2, "theta2");
    check_positive(p.sigma1, "sigma1");
    check_positive(p.sigma2, "sigma2");
    check_positive(p.lambda, "lambda");
    check_feller(p.kappa1, p.theta1, p.sigma1, 1);
    check_feller(p.kappa2, p.theta2, p.sigma2, 2);
}

}  // namespace model_detail

/// Full validation: scalar ranges, Feller for both groups, and the
/// normalization ordering.  Call normalize_params first for raw input.
inline void validate_params(const model_params& p) {
    model_detail::check_scalars(p);
    if (p.kappa1 < p.kappa2 || (p.kappa1 == p.kappa2 && p.theta1 < p.theta2))
        throw std::invalid_argument(
            "model_params: groups not normalized (want kappa1 >= kappa2, theta1 >= theta2 on "
            "ties); run normalize_params");
}

/// Reorders the two groups so kappa1 >= kappa2, breaking kappa ties by
/// theta1 >= theta2.  Group labels elsewhere always refer to the normalized
/// ordering.
inline normalize_result normalize_params(const model_params& raw) {
    model_detail::check_scalars(raw);
    normalize_result out{raw, false};
    if (raw.kappa1 < raw.kappa2 || (raw.kappa1 == raw.kappa2 && raw.theta1 < raw.theta2)) {
        out.params.kappa1 = raw.kappa2;
        out.params.kappa2 = raw.kappa1;
        out.params.theta1 = raw.theta2;
        out.params.theta2 = raw.theta1;
        out.params.sigma1 = raw.sigma2;
        out.params.sigma2 = raw.sigma1;
        out.swapped = true;
    }
    return out;
}

/// Buy-and-hold value for group i: theta_i/lambda + (d - theta_i)/(lambda + kappa_i).
inline double group_value(const model_params& p, int group, double d) {
    const double kappa = group == 1 ? p.kappa1 : p.kappa2;
    const double theta = group == 1 ? p.theta1 : p.theta2;
    return theta / p.lambda + (d - theta) / (p.lambda + kappa);
}

/// Intrinsic value I(d) = max_i { theta_i/lambda + (d - theta_i)/(lambda + kappa_i) }.
/// Evaluating both branches keeps the formula valid when d_bar < 0.
inline double intrinsic_value(const model_params& p, double d) {
    validate_params(p);
    if (!(std::isfinite(d) && d >= 0.0))
        throw std::invalid_argument("intrinsic_value: require d >= 0");
    return std::max(group_value(p, 1, d), group_value(p, 2, d));
}

/// d_bar: crossing point of the two intrinsic branches.
/// d_tilde: crossing point of the two drifts kappa_i (theta_i - d).
/// Related by d_bar = d_tilde + kappa1 kappa2 (theta1 - theta2) / (lambda (kappa1 - kappa2)).
inline model_thresholds thresholds(const model_params& p) {
    validate_params(p);
    model_thresholds out;
    if (p.kappa1 == p.kappa2) return out;
    const double dk = p.kappa1 - p.kappa2;
    out.d_tilde = (p.kappa1 * p.theta1 - p.kappa2 * p.theta2) / dk;
    out.d_bar = (p.kappa1 * p.kappa2 * (p.theta1 - p.theta2) +
                 p.lambda * (p.kappa1 * p.theta1 - p.kappa2 * p.theta2)) /
                (p.lambda * dk);
    return out;
}

/// A bubble exists iff kappa1 > kappa2 and kappa1*theta1 > kappa2*theta2.
/// The volatilities play no role.
inline bool bubble_exists(const model_params& p) {
    validate_params(p);
    return p.kappa1 > p.kappa2 && p.kappa1 * p.theta1 > p.kappa2 * p.theta2;
}

namespace model_detail {

inline void check_group(int group) {
    if (group != 1 && group != 2)
        throw std::invalid_argument("group must be 1 or 2");
}

}  // namespace model_detail

/// E^{Q_i}[D_t | D_0 = d0] = d0 e^{-kappa_i t} + theta_i (1 - e^{-kappa_i t}).
inline double conditional_mean(const model_params& p, int group, double d0, double t) {
    validate_params(p);
    model_detail::check_group(group);
    if (!(std::isfinite(d0) && d0 >= 0.0) || !(std::isfinite(t) && t >= 0.0))
        throw std::invalid_argument("conditional_mean: require d0 >= 0 and t >= 0");
    const double kappa = group == 1 ? p.kappa1 : p.kappa2;
    const double theta = group == 1 ? p.theta1 : p.theta2;
    const double decay = std::exp(-kappa * t);
    return d0 * decay + theta * (1.0 - decay);
}

/// Var^{Q_i}[D_t | D_0 = d0]; secondary diagnostic for the simulators.
inline double conditional_variance(const model_params& p, int group, double d0, double t) {
    validate_params(p);
    model_detail::check_group(group);
    if (!(std::isfinite(d0) && d0 >= 0.0) || !(std::isfinite(t) && t >= 0.0))
        throw std::invalid_argument("conditional_variance: require d0 >= 0 and t >= 0");
    const double kappa = group == 1 ? p.kappa1 : p.kappa2;
    const double theta = group == 1 ? p.theta1 : p.theta2;
    const double sigma = group == 1 ? p.sigma1 : p.sigma2;
    const double decay = std::exp(-kappa * t);
    const double s2k = sigma * sigma / kappa;
    return d0 * s2k * (decay - decay * decay) + 0.5 * theta * s2k * (1.0 - decay) * (1.0 - decay);
}

/// Finite-horizon indifference level
///   dstar(t) = theta1 - [kappa2 (kappa1 + lambda)(theta2 - theta1) /
///              (lambda (kappa1 - kappa2))] * (1 - e^{-lambda t}) / (1 - e^{-(lambda+kappa1) t});
/// tends to d_tilde as t -> 0+.
inline double dstar(const model_params& p, double t) {
    validate_params(p);
    if (p.kappa1 == p.kappa2)
        throw std::domain_error("dstar: undefined when kappa1 == kappa2");
    if (!(std::isfinite(t) && t > 0.0)) throw std::invalid_argument("dstar: require t > 0");
    const double bracket = p.kappa2 * (p.kappa1 + p.lambda) * (p.theta2 - p.theta1) /
                           (p.lambda * (p.kappa1 - p.kappa2));
    const double ratio = (1.0 - std::exp(-p.lambda * t)) /
                         (1.0 - std::exp(-(p.lambda + p.kappa1) * t));
    return p.theta1 - bracket * ratio;
}

}  // namespace cirbubble

#endif  // CIRBUBBLE_MODEL_HPP
