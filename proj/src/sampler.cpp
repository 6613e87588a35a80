#include "uwdiff/sampler.hpp"

#include <cmath>

#include "uwdiff/diffusion.hpp"
#include "uwdiff/error.hpp"

namespace uwdiff {

using json = nlohmann::json;

void SampleConfig::validate() const {
    if (steps < 1) throw ConfigError("sample: steps must be >= 1");
    if (!(guidance_scale >= 0.0)) throw ConfigError("sample: guidance_scale must be >= 0");
    if (!(mild_severity >= 0.0 && mild_severity <= 1.0))
        throw ConfigError("sample: mild_severity must lie in [0,1]");
}

const char* strategy_name(SampleConfig::Strategy s) {
    switch (s) {
        case SampleConfig::Strategy::raw: return "raw";
        case SampleConfig::Strategy::full_corrupt: return "full";
        default: return "mild";
    }
}

SampleConfig::Strategy strategy_from_name(const std::string& s) {
    if (s == "raw") return SampleConfig::Strategy::raw;
    if (s == "full" || s == "full_corrupt") return SampleConfig::Strategy::full_corrupt;
    if (s == "mild" || s == "mild_corrupt") return SampleConfig::Strategy::mild_corrupt;
    throw ConfigError("sample: unknown strategy \"" + s + "\"");
}

json SampleConfig::to_json() const {
    return json{{"steps", steps},
                {"guidance_scale", guidance_scale},
                {"strategy", strategy_name(strategy)},
                {"mild_severity", mild_severity},
                {"variance_mode", variance_mode == VarianceMode::beta ? "beta" : "beta_tilde"},
                {"seed", seed}};
}

SampleConfig SampleConfig::from_json(const json& j) {
    require_keys_subset(j,
                        {"steps", "guidance_scale", "strategy", "mild_severity",
                         "variance_mode", "seed"},
                        "sample");
    SampleConfig c;
    if (j.contains("steps")) c.steps = j.at("steps").get<int>();
    if (j.contains("guidance_scale")) c.guidance_scale = j.at("guidance_scale").get<double>();
    if (j.contains("strategy")) c.strategy = strategy_from_name(j.at("strategy").get<std::string>());
    if (j.contains("mild_severity")) c.mild_severity = j.at("mild_severity").get<double>();
    if (j.contains("variance_mode")) {
        const std::string v = j.at("variance_mode").get<std::string>();
        if (v == "beta")
            c.variance_mode = VarianceMode::beta;
        else if (v == "beta_tilde")
            c.variance_mode = VarianceMode::beta_tilde;
        else
            throw ConfigError("sample: unknown variance_mode \"" + v + "\"");
    }
    if (j.contains("seed")) c.seed = j.at("seed").get<uint64_t>();
    c.validate();
    return c;
}

Tensor<float> UNetVelocity::predict(const Tensor<float>& x_t, const Tensor<float>& cond,
                                    bool cond_null, int t) {
    const auto& s = x_t.shape();
    if (s.size() != 3) throw ShapeError("predict: latent must be {C,H,W}");
    Tensor<float> xb({1, s[0], s[1], s[2]});
    Tensor<float> cb({1, s[0], s[1], s[2]});
    std::copy(x_t.data(), x_t.data() + x_t.numel(), xb.data());
    std::copy(cond.data(), cond.data() + cond.numel(), cb.data());
    const Tensor<float> vb = net_->forward(xb, cb, {cond_null ? uint8_t{1} : uint8_t{0}},
                                           {t}, /*train=*/false);
    Tensor<float> v(s);
    std::copy(vb.data(), vb.data() + v.numel(), v.data());
    return v;
}

Tensor<float> cfg_combine(const Tensor<float>& v_cond, const Tensor<float>& v_uncond,
                          double w) {
    check_same_shape(v_cond, v_uncond, "cfg_combine");
    Tensor<float> out(v_cond.shape());
    for (size_t i = 0; i < out.numel(); ++i)
        out[i] = static_cast<float>(v_uncond[i] + w * (static_cast<double>(v_cond[i]) -
                                                       static_cast<double>(v_uncond[i])));
    return out;
}

std::vector<int> sample_timesteps(int T, int steps) {
    if (steps < 1) throw ConfigError("sample: steps must be >= 1");
    if (steps > T) throw ConfigError("sample: steps exceeds schedule length");
    std::vector<int> b(static_cast<size_t>(steps) + 1);
    for (int i = 0; i <= steps; ++i)
        b[static_cast<size_t>(i)] = static_cast<int>(
            std::llround(static_cast<double>(T) * (steps - i) / steps));
    // T >= steps makes consecutive boundaries differ by at least one.
    return b;
}

Tensor<float> ddpm_step(VelocityModel& model, const Tensor<float>& x_t,
                        const Tensor<float>& cond, int t, int t_prev,
                        const NoiseSchedule& sched, const SampleConfig& cfg,
                        const LatentBounds& bounds, SeededRng& rng,
                        StepCounters* counters) {
    if (t < 1 || t > sched.T) throw Error("ddpm_step: t outside [1,T]");
    if (t_prev < 0 || t_prev >= t) throw Error("ddpm_step: t_prev must lie in [0,t)");
    const auto& s = x_t.shape();
    if (s.size() != 3) throw ShapeError("ddpm_step: latent must be {C,H,W}");
    if (bounds.lo.size() != static_cast<size_t>(s[0]))
        throw ShapeError("ddpm_step: bounds channel mismatch");

    Tensor<float> vhat;
    if (cfg.guidance_scale == 1.0) {
        vhat = model.predict(x_t, cond, false, t);
        if (counters) counters->forward_evals += 1;
    } else {
        const Tensor<float> vc = model.predict(x_t, cond, false, t);
        const Tensor<float> vu = model.predict(x_t, cond, true, t);
        vhat = cfg_combine(vc, vu, cfg.guidance_scale);
        if (counters) counters->forward_evals += 2;
    }
    check_same_shape(x_t, vhat, "ddpm_step");

    const double ab_t = sched.alpha_bar(t);
    const double ab_p = sched.alpha_bar(t_prev);
    const double sq_ab = std::sqrt(ab_t);
    const double sq_1mab = std::sqrt(1.0 - ab_t);
    const double alpha_eff = ab_t / ab_p;
    const double beta_eff = 1.0 - alpha_eff;
    const double denom = 1.0 - ab_t;
    const double c0 = std::sqrt(ab_p) * beta_eff / denom;
    const double ct = std::sqrt(alpha_eff) * (1.0 - ab_p) / denom;
    double var = 0.0;
    if (t_prev > 0) {
        var = (cfg.variance_mode == SampleConfig::VarianceMode::beta)
                  ? beta_eff
                  : (1.0 - ab_p) / denom * beta_eff;
    }
    const double sigma = std::sqrt(var);

    const size_t plane = static_cast<size_t>(s[1]) * static_cast<size_t>(s[2]);
    Tensor<float> out(s);
    for (int c = 0; c < s[0]; ++c) {
        const double lo = bounds.lo[static_cast<size_t>(c)];
        const double hi = bounds.hi[static_cast<size_t>(c)];
        for (size_t i = static_cast<size_t>(c) * plane; i < (static_cast<size_t>(c) + 1) * plane; ++i) {
            const double xt = x_t[i];
            double x0 = sq_ab * xt - sq_1mab * static_cast<double>(vhat[i]);
            if (x0 < lo) x0 = lo;
            if (x0 > hi) x0 = hi;
            double v = c0 * x0 + ct * xt;
            if (t_prev > 0) v += sigma * rng.normal();
            if (!std::isfinite(v))
                throw NumericError("ddpm_step: non-finite value at t=" + std::to_string(t));
            out[i] = static_cast<float>(v);
        }
    }
    if (counters) counters->ddpm_steps += 1;
    return out;
}

Tensor<float> sample_chain(VelocityModel& model, const Tensor<float>& cond,
                           const NoiseSchedule& sched, const SampleConfig& cfg,
                           const LatentBounds& bounds, SeededRng& rng,
                           StepCounters* counters) {
    cfg.validate();
    const std::vector<int> b = sample_timesteps(sched.T, cfg.steps);
    Tensor<float> x(cond.shape());
    for (size_t i = 0; i < x.numel(); ++i) x[i] = static_cast<float>(rng.normal());
    for (size_t i = 0; i + 1 < b.size(); ++i)
        x = ddpm_step(model, x, cond, b[i], b[i + 1], sched, cfg, bounds, rng, counters);
    return x;
}

EnhanceResult enhance(const Image& img, VelocityModel& model, const NoiseSchedule& sched,
                      const SampleConfig& cfg, const CorruptionConfig& corruption_cfg,
                      const CodecConfig& codec) {
    cfg.validate();
    EnhanceResult res;
    switch (cfg.strategy) {
        case SampleConfig::Strategy::raw:
            res.condition = img;
            break;
        case SampleConfig::Strategy::full_corrupt: {
            CorruptionConfig c = corruption_cfg;
            c.severity = 1.0;
            res.condition = corrupt(img, c, derive_seed(cfg.seed, kStreamSample, 1));
            break;
        }
        case SampleConfig::Strategy::mild_corrupt: {
            CorruptionConfig c = corruption_cfg;
            c.severity = cfg.mild_severity;
            res.condition = corrupt(img, c, derive_seed(cfg.seed, kStreamSample, 1));
            break;
        }
    }
    const Tensor<float> cond = encode(res.condition, codec);
    const LatentBounds bounds = latent_bounds(codec, img.channels);
    SeededRng rng(derive_seed(cfg.seed, kStreamSample, 0));
    const Tensor<float> out = sample_chain(model, cond, sched, cfg, bounds, rng);
    res.output = decode(out, codec);
    return res;
}

double masked_psnr(const Image& a, const Image& b, const Image& mask, bool known_region) {
    if (!a.same_shape(b)) throw ShapeError("masked_psnr: image shape mismatch");
    if (mask.height != a.height || mask.width != a.width || mask.channels != 1)
        throw ShapeError("masked_psnr: mask must be 1-channel at image size");
    double acc = 0.0;
    size_t n = 0;
    for (int y = 0; y < a.height; ++y)
        for (int x = 0; x < a.width; ++x) {
            const bool missing = mask.at(y, x, 0) >= 0.5f;
            if (missing == known_region) continue;
            for (int c = 0; c < a.channels; ++c) {
                const double d = static_cast<double>(a.at(y, x, c)) - b.at(y, x, c);
                acc += d * d;
                ++n;
            }
        }
    if (n == 0) return 99.0;
    const double mse = acc / static_cast<double>(n);
    if (mse <= 0.0) return 99.0;
    return std::min(99.0, 10.0 * std::log10(1.0 / mse));
}

InpaintResult inpaint(const InpaintRequest& req, VelocityModel& model,
                      const NoiseSchedule& sched, const SampleConfig& cfg,
                      const CodecConfig& codec) {
    cfg.validate();
    const Image& img = req.image;
    if (req.mask.height != img.height || req.mask.width != img.width ||
        req.mask.channels != 1)
        throw ShapeError("inpaint: mask must be 1-channel at image size");

    const float fill = req.fill == CorruptionConfig::Fill::midgray ? 0.5f : 0.0f;
    InpaintResult res;
    res.condition = img;
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            if (req.mask.at(y, x, 0) >= 0.5f)
                for (int c = 0; c < img.channels; ++c) res.condition.at(y, x, c) = fill;

    const Tensor<float> cond = encode(res.condition, codec);
    const LatentBounds bounds = latent_bounds(codec, img.channels);
    SeededRng rng(derive_seed(cfg.seed, kStreamSample, 0));
    const Tensor<float> out = sample_chain(model, cond, sched, cfg, bounds, rng);
    res.output = decode(out, codec);
    res.known_region_psnr = masked_psnr(res.output, img, req.mask, /*known_region=*/true);
    return res;
}

}  // namespace uwdiff
