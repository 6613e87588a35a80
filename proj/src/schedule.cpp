#include "uwdiff/schedule.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "uwdiff/error.hpp"

namespace uwdiff {

namespace {

void check_t(int t, int T, int lo) {
    if (t < lo || t > T)
        throw Error("timestep " + std::to_string(t) + " outside [" + std::to_string(lo) +
                    "," + std::to_string(T) + "]");
}

}  // namespace

double NoiseSchedule::beta(int t) const {
    check_t(t, T, 1);
    return betas[static_cast<size_t>(t - 1)];
}

double NoiseSchedule::alpha(int t) const {
    check_t(t, T, 1);
    return alphas[static_cast<size_t>(t - 1)];
}

double NoiseSchedule::alpha_bar(int t) const {
    check_t(t, T, 0);
    if (t == 0) return 1.0;
    return alpha_bars[static_cast<size_t>(t - 1)];
}

NoiseSchedule linear_schedule(int T, double beta_start, double beta_end) {
    if (T < 1) throw ConfigError("linear_schedule: T must be >= 1");
    if (!(0.0 < beta_start && beta_start <= beta_end && beta_end < 1.0))
        throw ConfigError("linear_schedule: need 0 < beta_start <= beta_end < 1");

    NoiseSchedule s;
    s.T = T;
    s.betas.resize(static_cast<size_t>(T));
    s.alphas.resize(static_cast<size_t>(T));
    s.alpha_bars.resize(static_cast<size_t>(T));
    double prod = 1.0;
    for (int t = 1; t <= T; ++t) {
        const double frac = T == 1 ? 0.0 : static_cast<double>(t - 1) / (T - 1);
        const double beta = beta_start + (beta_end - beta_start) * frac;
        s.betas[static_cast<size_t>(t - 1)] = beta;
        s.alphas[static_cast<size_t>(t - 1)] = 1.0 - beta;
        prod *= 1.0 - beta;
        s.alpha_bars[static_cast<size_t>(t - 1)] = prod;
    }
    return s;
}

NoiseSchedule cosine_schedule(int T, double s_offset) {
    if (T < 1) throw ConfigError("cosine_schedule: T must be >= 1");
    if (s_offset <= 0.0) throw ConfigError("cosine_schedule: s must be > 0");

    auto f = [&](double t) {
        const double u = (t / T + s_offset) / (1.0 + s_offset) * (std::numbers::pi / 2.0);
        const double c = std::cos(u);
        return c * c;
    };
    const double f0 = f(0.0);

    NoiseSchedule s;
    s.T = T;
    s.betas.resize(static_cast<size_t>(T));
    s.alphas.resize(static_cast<size_t>(T));
    s.alpha_bars.resize(static_cast<size_t>(T));
    double ab_prev = 1.0;
    double prod = 1.0;
    for (int t = 1; t <= T; ++t) {
        const double ab = f(static_cast<double>(t)) / f0;
        double beta = 1.0 - ab / ab_prev;
        beta = std::min(beta, 0.999);
        ab_prev = ab;
        s.betas[static_cast<size_t>(t - 1)] = beta;
        s.alphas[static_cast<size_t>(t - 1)] = 1.0 - beta;
        prod *= 1.0 - beta;
        s.alpha_bars[static_cast<size_t>(t - 1)] = prod;
    }
    return s;
}

DiffusionCoeffs coeffs(const NoiseSchedule& sched, int t) {
    check_t(t, sched.T, 1);
    const double ab = sched.alpha_bar(t);
    return {std::sqrt(ab), std::sqrt(1.0 - ab)};
}

}  // namespace uwdiff
