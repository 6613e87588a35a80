#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "uwdiff/codec.hpp"
#include "uwdiff/corruption.hpp"
#include "uwdiff/image.hpp"
#include "uwdiff/rng.hpp"
#include "uwdiff/schedule.hpp"
#include "uwdiff/tensor.hpp"
#include "uwdiff/unet.hpp"

namespace uwdiff {

struct SampleConfig {
    int steps = 1000;  // <= T; strided uniformly when smaller
    double guidance_scale = 2.0;
    enum class Strategy { raw, full_corrupt, mild_corrupt };
    Strategy strategy = Strategy::full_corrupt;
    double mild_severity = 0.3;
    enum class VarianceMode { beta, beta_tilde };
    VarianceMode variance_mode = VarianceMode::beta_tilde;
    uint64_t seed = 0;

    void validate() const;
    nlohmann::json to_json() const;
    static SampleConfig from_json(const nlohmann::json& j);
};

const char* strategy_name(SampleConfig::Strategy s);
SampleConfig::Strategy strategy_from_name(const std::string& s);

// Velocity predictor interface; tests plug in closed-form oracles.
class VelocityModel {
public:
    virtual ~VelocityModel() = default;
    // cond_null requests the learned unconditional prediction.
    virtual Tensor<float> predict(const Tensor<float>& x_t, const Tensor<float>& cond,
                                  bool cond_null, int t) = 0;
};

class UNetVelocity : public VelocityModel {
public:
    explicit UNetVelocity(UNet<float>& net) : net_(&net) {}
    Tensor<float> predict(const Tensor<float>& x_t, const Tensor<float>& cond,
                          bool cond_null, int t) override;

private:
    UNet<float>* net_;
};

Tensor<float> cfg_combine(const Tensor<float>& v_cond, const Tensor<float>& v_uncond,
                          double w);

struct StepCounters {
    long ddpm_steps = 0;
    long forward_evals = 0;
};

// Uniformly strided descending boundaries b_0 = T > b_1 > ... > b_steps = 0;
// step i moves from b_i to b_{i+1}.
std::vector<int> sample_timesteps(int T, int steps);

// One ancestral step t -> t_prev. The predicted x0 is clamped to the codec's
// latent range before the posterior mean is formed.
Tensor<float> ddpm_step(VelocityModel& model, const Tensor<float>& x_t,
                        const Tensor<float>& cond, int t, int t_prev,
                        const NoiseSchedule& sched, const SampleConfig& cfg,
                        const LatentBounds& bounds, SeededRng& rng,
                        StepCounters* counters = nullptr);

// Full reverse chain from pure noise.
Tensor<float> sample_chain(VelocityModel& model, const Tensor<float>& cond,
                           const NoiseSchedule& sched, const SampleConfig& cfg,
                           const LatentBounds& bounds, SeededRng& rng,
                           StepCounters* counters = nullptr);

struct EnhanceResult {
    Image output;
    Image condition;  // image the condition latent was encoded from
};

EnhanceResult enhance(const Image& img, VelocityModel& model, const NoiseSchedule& sched,
                      const SampleConfig& cfg, const CorruptionConfig& corruption_cfg,
                      const CodecConfig& codec);

struct InpaintRequest {
    Image image;
    Image mask;  // single channel, >= 0.5 marks missing pixels
    CorruptionConfig::Fill fill = CorruptionConfig::Fill::midgray;
};

struct InpaintResult {
    Image output;
    Image condition;
    double known_region_psnr = 0.0;  // output vs input over unmasked pixels
};

InpaintResult inpaint(const InpaintRequest& req, VelocityModel& model,
                      const NoiseSchedule& sched, const SampleConfig& cfg,
                      const CodecConfig& codec);

// PSNR over the pixels selected by the mask (known = mask < 0.5).
double masked_psnr(const Image& a, const Image& b, const Image& mask, bool known_region);

}  // namespace uwdiff
