#include "uwdiff/diffusion.hpp"

namespace uwdiff {

template <typename T>
Tensor<T> q_sample(const Tensor<T>& x0, int t, const Tensor<T>& eps,
                   const NoiseSchedule& sched) {
    check_same_shape(x0, eps, "q_sample");
    const auto c = coeffs(sched, t);
    const T a = static_cast<T>(c.sqrt_ab);
    const T b = static_cast<T>(c.sqrt_one_minus_ab);
    Tensor<T> out(x0.shape());
    for (size_t i = 0; i < out.numel(); ++i) out[i] = a * x0[i] + b * eps[i];
    return out;
}

template <typename T>
Tensor<T> velocity(const Tensor<T>& x0, const Tensor<T>& eps, int t,
                   const NoiseSchedule& sched) {
    check_same_shape(x0, eps, "velocity");
    const auto c = coeffs(sched, t);
    const T a = static_cast<T>(c.sqrt_ab);
    const T b = static_cast<T>(c.sqrt_one_minus_ab);
    Tensor<T> out(x0.shape());
    for (size_t i = 0; i < out.numel(); ++i) out[i] = a * eps[i] - b * x0[i];
    return out;
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> recover(const Tensor<T>& x_t, const Tensor<T>& v, int t,
                                        const NoiseSchedule& sched) {
    check_same_shape(x_t, v, "recover");
    const auto c = coeffs(sched, t);
    const T a = static_cast<T>(c.sqrt_ab);
    const T b = static_cast<T>(c.sqrt_one_minus_ab);
    Tensor<T> x0(x_t.shape());
    Tensor<T> eps(x_t.shape());
    for (size_t i = 0; i < x0.numel(); ++i) {
        x0[i] = a * x_t[i] - b * v[i];
        eps[i] = b * x_t[i] + a * v[i];
    }
    return {std::move(x0), std::move(eps)};
}

template <typename T>
double v_loss(const Tensor<T>& pred, const Tensor<T>& target) {
    check_same_shape(pred, target, "v_loss");
    double acc = 0.0;
    for (size_t i = 0; i < pred.numel(); ++i) {
        const double d = static_cast<double>(pred[i]) - static_cast<double>(target[i]);
        acc += d * d;
    }
    return acc / static_cast<double>(pred.numel());
}

template Tensor<float> q_sample(const Tensor<float>&, int, const Tensor<float>&,
                                const NoiseSchedule&);
template Tensor<double> q_sample(const Tensor<double>&, int, const Tensor<double>&,
                                 const NoiseSchedule&);
template Tensor<float> velocity(const Tensor<float>&, const Tensor<float>&, int,
                                const NoiseSchedule&);
template Tensor<double> velocity(const Tensor<double>&, const Tensor<double>&, int,
                                 const NoiseSchedule&);
template std::pair<Tensor<float>, Tensor<float>> recover(const Tensor<float>&,
                                                         const Tensor<float>&, int,
                                                         const NoiseSchedule&);
template std::pair<Tensor<double>, Tensor<double>> recover(const Tensor<double>&,
                                                           const Tensor<double>&, int,
                                                           const NoiseSchedule&);
template double v_loss(const Tensor<float>&, const Tensor<float>&);
template double v_loss(const Tensor<double>&, const Tensor<double>&);

}  // namespace uwdiff
