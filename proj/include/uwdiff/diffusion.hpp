#pragma once

#include <utility>

#include "uwdiff/schedule.hpp"
#include "uwdiff/tensor.hpp"

namespace uwdiff {

// Forward-process algebra in the (x0, eps, v) parameterization. Noise is
// always injected by the caller, never drawn here. Coefficients come from
// the schedule in double and are applied per element.

// x_t = sqrt(ab)*x0 + sqrt(1-ab)*eps
template <typename T>
Tensor<T> q_sample(const Tensor<T>& x0, int t, const Tensor<T>& eps,
                   const NoiseSchedule& sched);

// v = sqrt(ab)*eps - sqrt(1-ab)*x0
template <typename T>
Tensor<T> velocity(const Tensor<T>& x0, const Tensor<T>& eps, int t,
                   const NoiseSchedule& sched);

// Inverse of (q_sample, velocity):
//   x0  = sqrt(ab)*x_t - sqrt(1-ab)*v
//   eps = sqrt(1-ab)*x_t + sqrt(ab)*v
template <typename T>
std::pair<Tensor<T>, Tensor<T>> recover(const Tensor<T>& x_t, const Tensor<T>& v, int t,
                                        const NoiseSchedule& sched);

// Mean squared error over all elements, accumulated in double.
template <typename T>
double v_loss(const Tensor<T>& pred, const Tensor<T>& target);

extern template Tensor<float> q_sample(const Tensor<float>&, int, const Tensor<float>&,
                                       const NoiseSchedule&);
extern template Tensor<double> q_sample(const Tensor<double>&, int, const Tensor<double>&,
                                        const NoiseSchedule&);
extern template Tensor<float> velocity(const Tensor<float>&, const Tensor<float>&, int,
                                       const NoiseSchedule&);
extern template Tensor<double> velocity(const Tensor<double>&, const Tensor<double>&, int,
                                        const NoiseSchedule&);
extern template std::pair<Tensor<float>, Tensor<float>> recover(const Tensor<float>&,
                                                                const Tensor<float>&, int,
                                                                const NoiseSchedule&);
extern template std::pair<Tensor<double>, Tensor<double>> recover(const Tensor<double>&,
                                                                  const Tensor<double>&, int,
                                                                  const NoiseSchedule&);
extern template double v_loss(const Tensor<float>&, const Tensor<float>&);
extern template double v_loss(const Tensor<double>&, const Tensor<double>&);

}  // namespace uwdiff
