#pragma once

#include <vector>

namespace uwdiff {

// Variance schedule over timesteps 1..T, precomputed in double at
// construction. alpha_bar(0) == 1 by convention.
struct NoiseSchedule {
    int T = 0;
    std::vector<double> betas;       // betas[t-1], t = 1..T
    std::vector<double> alphas;      // 1 - beta
    std::vector<double> alpha_bars;  // cumulative product of alphas

    double beta(int t) const;       // t in 1..T
    double alpha(int t) const;      // t in 1..T
    double alpha_bar(int t) const;  // t in 0..T
};

NoiseSchedule linear_schedule(int T, double beta_start = 1e-4, double beta_end = 0.02);

// Cosine schedule: alpha_bar(t) = f(t)/f(0), f(t) = cos^2(((t/T+s)/(1+s)) * pi/2),
// betas derived from consecutive ratios and clipped to <= 0.999; alpha_bars
// are re-accumulated from the clipped betas.
NoiseSchedule cosine_schedule(int T, double s = 0.008);

struct DiffusionCoeffs {
    double sqrt_ab;
    double sqrt_one_minus_ab;
};

// (sqrt(alpha_bar_t), sqrt(1 - alpha_bar_t)) for t in 1..T.
DiffusionCoeffs coeffs(const NoiseSchedule& sched, int t);

}  // namespace uwdiff
