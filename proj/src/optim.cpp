#include "uwdiff/optim.hpp"

#include <cmath>

#include "uwdiff/corruption.hpp"  // require_keys_subset
#include "uwdiff/error.hpp"

namespace uwdiff {

using nlohmann::json;

void LrSchedule::validate() const {
    if (!(peak_lr > 0.0)) throw ConfigError("lr: peak_lr must be positive");
    if (warmup_steps < 0) throw ConfigError("lr: warmup_steps must be >= 0");
    if (total_steps <= 0) throw ConfigError("lr: total_steps must be positive");
    if (warmup_steps > total_steps)
        throw ConfigError("lr: warmup_steps exceeds total_steps");
    if (!(flat_fraction >= 0.0 && flat_fraction <= 1.0))
        throw ConfigError("lr: flat_fraction must lie in [0, 1]");
}

double LrSchedule::lr_at(int step) const {
    validate();
    if (step < 0 || step > total_steps)
        throw Error("lr: step " + std::to_string(step) + " outside [0, " +
                    std::to_string(total_steps) + "]");
    if (warmup_steps > 0 && step < warmup_steps)
        return peak_lr * static_cast<double>(step) / warmup_steps;
    // Flat until this step, cosine from here down to zero at total_steps.
    const int flat_end = static_cast<int>(std::llround(flat_fraction * total_steps));
    if (step <= flat_end) return peak_lr;
    if (flat_end >= total_steps) return peak_lr;
    const double u = static_cast<double>(step - flat_end) / (total_steps - flat_end);
    if (step == total_steps) return 0.0;
    return peak_lr * 0.5 * (1.0 + std::cos(u * 3.14159265358979323846));
}

json LrSchedule::to_json() const {
    return json{{"peak_lr", peak_lr},
                {"warmup_steps", warmup_steps},
                {"flat_fraction", flat_fraction},
                {"total_steps", total_steps}};
}

LrSchedule LrSchedule::from_json(const json& j) {
    require_keys_subset(j, {"peak_lr", "warmup_steps", "flat_fraction", "total_steps"},
                        "lr");
    LrSchedule s;
    if (j.contains("peak_lr")) s.peak_lr = j.at("peak_lr").get<double>();
    if (j.contains("warmup_steps")) s.warmup_steps = j.at("warmup_steps").get<int>();
    if (j.contains("flat_fraction")) s.flat_fraction = j.at("flat_fraction").get<double>();
    if (j.contains("total_steps")) s.total_steps = j.at("total_steps").get<int>();
    return s;
}

json AdamWConfig::to_json() const {
    return json{{"beta1", beta1},
                {"beta2", beta2},
                {"eps", eps},
                {"weight_decay", weight_decay}};
}

AdamWConfig AdamWConfig::from_json(const json& j) {
    require_keys_subset(j, {"beta1", "beta2", "eps", "weight_decay"}, "adamw");
    AdamWConfig c;
    if (j.contains("beta1")) c.beta1 = j.at("beta1").get<double>();
    if (j.contains("beta2")) c.beta2 = j.at("beta2").get<double>();
    if (j.contains("eps")) c.eps = j.at("eps").get<double>();
    if (j.contains("weight_decay")) c.weight_decay = j.at("weight_decay").get<double>();
    if (!(c.beta1 >= 0.0 && c.beta1 < 1.0) || !(c.beta2 >= 0.0 && c.beta2 < 1.0))
        throw ConfigError("adamw: betas must lie in [0, 1)");
    if (!(c.eps > 0.0)) throw ConfigError("adamw: eps must be positive");
    if (c.weight_decay < 0.0) throw ConfigError("adamw: weight_decay must be >= 0");
    return c;
}

template <typename T>
void AdamW<T>::step(const std::vector<nn::ParamRef<T>>& params, double lr) {
    if (slots_.empty()) {
        slots_.resize(params.size());
        for (size_t i = 0; i < params.size(); ++i) {
            slots_[i].m = Tensor<T>(params[i].v->shape());
            slots_[i].v = Tensor<T>(params[i].v->shape());
        }
    }
    if (slots_.size() != params.size())
        throw Error("adamw: parameter count changed between steps");
    ++t_;
    const double b1 = cfg_.beta1, b2 = cfg_.beta2;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    for (size_t i = 0; i < params.size(); ++i) {
        Tensor<T>& p = *params[i].v;
        const Tensor<T>& g = *params[i].g;
        Tensor<T>& m = slots_[i].m;
        Tensor<T>& v = slots_[i].v;
        if (m.numel() != p.numel())
            throw Error("adamw: state shape mismatch for " + *params[i].name);
        for (size_t e = 0; e < p.numel(); ++e) {
            const double ge = static_cast<double>(g[e]);
            const double me = b1 * static_cast<double>(m[e]) + (1.0 - b1) * ge;
            const double ve = b2 * static_cast<double>(v[e]) + (1.0 - b2) * ge * ge;
            m[e] = static_cast<T>(me);
            v[e] = static_cast<T>(ve);
            const double mhat = me / bc1;
            const double vhat = ve / bc2;
            const double pe = static_cast<double>(p[e]);
            // Decay is decoupled from the adaptive term.
            p[e] = static_cast<T>(
                pe - lr * (mhat / (std::sqrt(vhat) + cfg_.eps) + cfg_.weight_decay * pe));
        }
    }
}

template class AdamW<float>;
template class AdamW<double>;

}  // namespace uwdiff
