#pragma once

#include <cstdint>
#include <vector>

#include "json.hpp"
#include "uwdiff/tensor.hpp"
#include "uwdiff/unet.hpp"

namespace uwdiff {

// Linear warmup to peak, flat phase, cosine decay to exactly zero.
struct LrSchedule {
    double peak_lr = 1e-2;
    int warmup_steps = 0;
    double flat_fraction = 0.5;
    int total_steps = 0;

    void validate() const;
    double lr_at(int step) const;  // step in [0, total_steps]

    nlohmann::json to_json() const;
    static LrSchedule from_json(const nlohmann::json& j);
};

struct AdamWConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;

    nlohmann::json to_json() const;
    static AdamWConfig from_json(const nlohmann::json& j);
};

// Decoupled-weight-decay Adam. Moment slots are keyed by parameter order,
// which is fixed by the network's registration order.
template <typename T>
class AdamW {
public:
    explicit AdamW(AdamWConfig cfg = {}) : cfg_(cfg) {}

    void step(const std::vector<nn::ParamRef<T>>& params, double lr);

    int64_t steps_taken() const { return t_; }
    void set_steps_taken(int64_t t) { t_ = t; }

    struct Slot {
        Tensor<T> m, v;
    };
    std::vector<Slot>& slots() { return slots_; }
    const AdamWConfig& cfg() const { return cfg_; }

private:
    AdamWConfig cfg_;
    int64_t t_ = 0;
    std::vector<Slot> slots_;
};

extern template class AdamW<float>;
extern template class AdamW<double>;

}  // namespace uwdiff
