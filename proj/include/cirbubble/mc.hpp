#ifndef CIRBUBBLE_MC_HPP
#define CIRBUBBLE_MC_HPP

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

#include "cirbubble/model.hpp"

namespace cirbubble {

enum class mc_scheme {
    exact,  // noncentral chi-square transition, no discretization bias
    euler,  // full-truncation Euler, cross-check only (may touch zero)
};

struct sim_config {
    int group = 1;
    double d0 = 0.0;
    double horizon = 0.0;
    double dt = 0.0;
    long long paths = 0;
    std::uint64_t seed = 0;
    mc_scheme scheme = mc_scheme::exact;
};

struct mc_estimate {
    double mean = 0.0;
    double std_error = 0.0;
    long long paths = 0;
};

/// Trajectories on the uniform time grid 0, dt, ..., m*dt with m*dt >= horizon.
struct path_ensemble {
    std::vector<double> times;
    long long paths = 0;
    std::vector<double> data;  // row-major: path * times.size() + step

    double at(long long path, std::size_t step) const {
        return data[static_cast<std::size_t>(path) * times.size() + step];
    }
};

namespace mc_detail {

inline void validate_config(const model_params& p, const sim_config& cfg) {
    validate_params(p);
    if (cfg.group != 1 && cfg.group != 2)
        throw std::invalid_argument("sim_config: group must be 1 or 2");
    if (!(std::isfinite(cfg.d0) && cfg.d0 >= 0.0))
        throw std::invalid_argument("sim_config: require d0 >= 0");
    if (!(std::isfinite(cfg.dt) && cfg.dt > 0.0))
        throw std::invalid_argument("sim_config: require dt > 0");
    if (!(std::isfinite(cfg.horizon) && cfg.horizon >= cfg.dt))
        throw std::invalid_argument("sim_config: require horizon >= dt");
    if (cfg.paths < 1) throw std::invalid_argument("sim_config: require paths >= 1");
}

inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

/// Substream seed for one path: independent of how paths are scheduled.
inline std::uint64_t path_seed(std::uint64_t seed, long long path) {
    return mix64(seed ^ (0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(path + 1)));
}

/// mt19937_64 engine (output sequence pinned by the standard) with in-repo
/// normal and gamma transforms, so ensembles are bit-identical across
/// standard-library implementations.
class sampler {
  public:
    explicit sampler(std::uint64_t seed) : eng_(seed) {}

    double uniform() {  // strictly inside (0,1)
        return (static_cast<double>(eng_() >> 11) + 0.5) * 0x1.0p-53;
    }

    double normal() {  // Marsaglia polar, pairs cached
        if (has_cache_) {
            has_cache_ = false;
            return cache_;
        }
        double x, y, s;
        do {
            x = 2.0 * uniform() - 1.0;
            y = 2.0 * uniform() - 1.0;
            s = x * x + y * y;
        } while (s >= 1.0 || s == 0.0);
        const double f = std::sqrt(-2.0 * std::log(s) / s);
        cache_ = y * f;
        has_cache_ = true;
        return x * f;
    }

    double gamma(double alpha) {  // Marsaglia-Tsang
        if (alpha < 1.0)
            return gamma(alpha + 1.0) * std::pow(uniform(), 1.0 / alpha);
        const double d = alpha - 1.0 / 3.0;
        const double c = 1.0 / (3.0 * std::sqrt(d));
        for (;;) {
            double x, v;
            do {
                x = normal();
                v = 1.0 + c * x;
            } while (v <= 0.0);
            v = v * v * v;
            const double u = uniform();
            const double x2 = x * x;
            if (u < 1.0 - 0.0331 * x2 * x2) return d * v;
            if (std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) return d * v;
        }
    }

  private:
    std::mt19937_64 eng_;
    double cache_ = 0.0;
    bool has_cache_ = false;
};

/// One-group CIR transition over a fixed time step.
class cir_stepper {
  public:
    cir_stepper(const model_params& p, int group, double dt, mc_scheme scheme)
        : kappa_(group == 1 ? p.kappa1 : p.kappa2),
          theta_(group == 1 ? p.theta1 : p.theta2),
          sigma_(group == 1 ? p.sigma1 : p.sigma2),
          dt_(dt),
          scheme_(scheme) {
        emk_ = std::exp(-kappa_ * dt_);
        cfac_ = sigma_ * sigma_ * (1.0 - emk_) / (4.0 * kappa_);
        shape_ = 2.0 * kappa_ * theta_ / (sigma_ * sigma_) - 0.5;  // >= 1/2 under Feller
        sq_dt_ = std::sqrt(dt_);
    }

    double operator()(double d, sampler& rng) const {
        if (scheme_ == mc_scheme::euler) {
            const double dp = std::max(d, 0.0);
            return d + kappa_ * (theta_ - dp) * dt_ +
                   sigma_ * std::sqrt(dp) * sq_dt_ * rng.normal();
        }
        // D' = cfac * chi2_nc(4*kappa*theta/sigma^2, d*emk/cfac), decomposed as
        // one squared shifted normal plus a gamma carrying the remaining dof
        const double xi = d * emk_ / cfac_;
        const double z = rng.normal() + std::sqrt(xi);
        return cfac_ * (z * z + 2.0 * rng.gamma(shape_));
    }

  private:
    double kappa_, theta_, sigma_, dt_;
    mc_scheme scheme_;
    double emk_ = 0.0, cfac_ = 0.0, shape_ = 0.0, sq_dt_ = 0.0;
};

struct kahan_sum {
    double s = 0.0, c = 0.0;
    void add(double x) {
        const double y = x - c;
        const double t = s + y;
        c = (t - s) - y;
        s = t;
    }
};

struct accumulator {
    kahan_sum sum, sumsq;
    long long n = 0;
    void add(double x) {
        sum.add(x);
        sumsq.add(x * x);
        ++n;
    }
    mc_estimate finish() const {
        mc_estimate e;
        e.paths = n;
        e.mean = sum.s / static_cast<double>(n);
        if (n > 1) {
            const double var =
                std::max(0.0, (sumsq.s - static_cast<double>(n) * e.mean * e.mean) /
                                  static_cast<double>(n - 1));
            e.std_error = std::sqrt(var / static_cast<double>(n));
        }
        return e;
    }
};

inline long long step_count(const sim_config& cfg) {
    return static_cast<long long>(std::ceil(cfg.horizon / cfg.dt - 1e-9));
}

}  // namespace mc_detail

inline path_ensemble simulate_paths(const model_params& p, const sim_config& cfg) {
    mc_detail::validate_config(p, cfg);
    const long long m = mc_detail::step_count(cfg);
    if (cfg.paths * (m + 1) > 50'000'000)
        throw std::invalid_argument("simulate_paths: ensemble too large to materialize");
    path_ensemble e;
    e.paths = cfg.paths;
    e.times.resize(static_cast<std::size_t>(m + 1));
    for (long long j = 0; j <= m; ++j) e.times[static_cast<std::size_t>(j)] = cfg.dt * j;
    e.data.resize(static_cast<std::size_t>(cfg.paths * (m + 1)));
    const mc_detail::cir_stepper step(p, cfg.group, cfg.dt, cfg.scheme);
    for (long long path = 0; path < cfg.paths; ++path) {
        mc_detail::sampler rng(mc_detail::path_seed(cfg.seed, path));
        double d = cfg.d0;
        auto* row = &e.data[static_cast<std::size_t>(path * (m + 1))];
        row[0] = d;
        for (long long j = 1; j <= m; ++j) {
            d = step(d, rng);
            row[j] = d;
        }
    }
    return e;
}

/// Discounted-dividend value under one group's belief: trapezoidal
/// integration of e^{-lambda t} D_t to the horizon plus the analytic
/// perpetuity tail from the conditional mean at the endpoint.
inline mc_estimate mc_intrinsic(const model_params& p, int group, double d0,
                                sim_config cfg) {
    cfg.group = group;
    cfg.d0 = d0;
    mc_detail::validate_config(p, cfg);
    if (cfg.horizon < 12.0 / p.lambda - 1e-9)
        throw std::invalid_argument("mc_intrinsic: require horizon >= 12/lambda");
    const long long m = mc_detail::step_count(cfg);
    const mc_detail::cir_stepper step(p, cfg.group, cfg.dt, cfg.scheme);
    const double edl = std::exp(-p.lambda * cfg.dt);
    mc_detail::accumulator acc;
    for (long long path = 0; path < cfg.paths; ++path) {
        mc_detail::sampler rng(mc_detail::path_seed(cfg.seed, path));
        double d = d0;
        double disc = 1.0;
        mc_detail::kahan_sum integral;
        integral.add(0.5 * cfg.dt * d);
        for (long long j = 1; j <= m; ++j) {
            d = step(d, rng);
            disc *= edl;
            integral.add((j == m ? 0.5 : 1.0) * cfg.dt * disc * d);
        }
        acc.add(integral.s + disc * group_value(p, cfg.group, d));
    }
    return acc.finish();
}

/// Value of holding until the first grid time at which the path reaches
/// `barrier` from d0's side (capped at the horizon), then collecting
/// `continuation` there, discounted; dividends accrue until the stop.
template <class Continuation>
inline mc_estimate mc_stopping_value(const model_params& p, int holder_group, double d0,
                                     double barrier, Continuation&& continuation,
                                     sim_config cfg) {
    cfg.group = holder_group;
    cfg.d0 = d0;
    mc_detail::validate_config(p, cfg);
    if (!thresholds(p).d_tilde)
        throw std::domain_error("mc_stopping_value: requires kappa1 > kappa2");
    if (std::isnan(barrier))
        throw std::invalid_argument("mc_stopping_value: barrier must not be NaN");
    const bool upward = d0 < barrier;
    const auto crossed = [&](double d) { return upward ? d >= barrier : d <= barrier; };
    const long long m = mc_detail::step_count(cfg);
    const mc_detail::cir_stepper step(p, cfg.group, cfg.dt, cfg.scheme);
    const double edl = std::exp(-p.lambda * cfg.dt);
    mc_detail::accumulator acc;
    for (long long path = 0; path < cfg.paths; ++path) {
        mc_detail::sampler rng(mc_detail::path_seed(cfg.seed, path));
        double d = d0;
        if (crossed(d)) {
            acc.add(continuation(d));
            continue;
        }
        double disc = 1.0;
        mc_detail::kahan_sum value;
        double prev = d;
        for (long long j = 1; j <= m; ++j) {
            d = step(d, rng);
            const double disc_next = disc * edl;
            value.add(0.5 * cfg.dt * (disc * prev + disc_next * d));
            disc = disc_next;
            prev = d;
            if (crossed(d) || j == m) {
                value.add(disc * continuation(d));
                break;
            }
        }
        acc.add(value.s);
    }
    return acc.finish();
}

/// Ensemble mean of D_t from one exact transition step (the one-step law is
/// the exact conditional distribution, so no grid is needed).
inline mc_estimate conditional_mean_check(const model_params& p, int group, double d0,
                                          double t, sim_config cfg) {
    cfg.group = group;
    cfg.d0 = d0;
    if (!(std::isfinite(t) && t >= 0.0))
        throw std::invalid_argument("conditional_mean_check: require t >= 0");
    cfg.dt = t > 0.0 ? t : 1.0;  // single transition; grid fields are unused
    cfg.horizon = cfg.dt;
    mc_detail::validate_config(p, cfg);
    if (t == 0.0) return {d0, 0.0, cfg.paths};
    const mc_detail::cir_stepper step(p, cfg.group, t, mc_scheme::exact);
    mc_detail::accumulator acc;
    for (long long path = 0; path < cfg.paths; ++path) {
        mc_detail::sampler rng(mc_detail::path_seed(cfg.seed, path));
        acc.add(step(d0, rng));
    }
    return acc.finish();
}

}  // namespace cirbubble

#endif  // CIRBUBBLE_MC_HPP
