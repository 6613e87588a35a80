#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "uwdiff/codec.hpp"
#include "uwdiff/corruption.hpp"
#include "uwdiff/diffusion.hpp"
#include "uwdiff/error.hpp"
#include "uwdiff/image.hpp"
#include "uwdiff/rng.hpp"
#include "uwdiff/sampler.hpp"
#include "uwdiff/schedule.hpp"
#include "uwdiff/toygen.hpp"
#include "uwdiff/unet.hpp"

using namespace uwdiff;

namespace {

// Perfect denoiser: v such that recover(x_t, v) returns exactly `target`.
// When `uncond_target` is set, the unconditional branch steers elsewhere so
// guidance has an observable effect.
class OracleVelocity : public VelocityModel {
 public:
  Tensor<float> target;
  Tensor<float> uncond_target;
  bool has_uncond = false;
  const NoiseSchedule* sched = nullptr;

  Tensor<float> predict(const Tensor<float>& x_t, const Tensor<float>&, bool cond_null,
                        int t) override {
    const Tensor<float>& tgt = (cond_null && has_uncond) ? uncond_target : target;
    const double ab = sched->alpha_bar(t);
    const double sa = std::sqrt(ab), sb = std::sqrt(1.0 - ab);
    Tensor<float> v(x_t.shape());
    for (size_t i = 0; i < v.numel(); ++i)
      v[i] = static_cast<float>((sa * static_cast<double>(x_t[i]) - tgt[i]) / sb);
    return v;
  }
};

class NanVelocity : public VelocityModel {
 public:
  Tensor<float> predict(const Tensor<float>& x_t, const Tensor<float>&, bool,
                        int) override {
    Tensor<float> v(x_t.shape());
    v.fill(std::numeric_limits<float>::quiet_NaN());
    return v;
  }
};

Tensor<float> random_latent(std::vector<int> shape, SeededRng& rng, double lo, double hi) {
  Tensor<float> t(std::move(shape));
  for (size_t i = 0; i < t.numel(); ++i) t[i] = static_cast<float>(rng.uniform(lo, hi));
  return t;
}

LatentBounds unit_bounds(int channels) {
  LatentBounds b;
  b.lo.assign(static_cast<size_t>(channels), -1.0f);
  b.hi.assign(static_cast<size_t>(channels), 1.0f);
  return b;
}

UNetConfig small_unet_cfg() {
  UNetConfig c;
  c.latent_channels = 12;
  c.latent_height = 8;
  c.latent_width = 12;
  c.base_channels = 8;
  c.deep_channels = 16;
  c.num_encoder_blocks = 2;
  c.decoder_res_per_block = 1;
  c.time_embed_dim = 16;
  c.sinusoidal_dim = 8;
  c.groups_per_norm = 4;
  c.attn_head_dim = 8;
  c.t_max = 10;
  return c;
}

}  // namespace

TEST_CASE("cfg_combine endpoints and arithmetic") {
  Tensor<float> vc({1, 2, 2}), vu({1, 2, 2});
  vc.fill(1.0f);
  vu.fill(0.0f);
  Tensor<float> w0 = cfg_combine(vc, vu, 0.0);
  Tensor<float> w1 = cfg_combine(vc, vu, 1.0);
  Tensor<float> w2 = cfg_combine(vc, vu, 2.0);
  for (size_t i = 0; i < w0.numel(); ++i) {
    CHECK(w0[i] == 0.0f);
    CHECK(w1[i] == 1.0f);
    CHECK(w2[i] == 2.0f);
  }
  Tensor<float> bad({1, 2, 3});
  bad.fill(0.0f);
  CHECK_THROWS_AS(cfg_combine(vc, bad, 1.0), ShapeError);
}

TEST_CASE("sample_timesteps boundaries") {
  std::vector<int> full = sample_timesteps(1000, 1000);
  REQUIRE(full.size() == 1001);
  CHECK(full.front() == 1000);
  CHECK(full.back() == 0);
  for (size_t i = 1; i < full.size(); ++i) CHECK(full[i] == full[i - 1] - 1);

  CHECK(sample_timesteps(1000, 4) == std::vector<int>{1000, 750, 500, 250, 0});
  CHECK(sample_timesteps(10, 3) == std::vector<int>{10, 7, 3, 0});
  CHECK(sample_timesteps(5, 1) == std::vector<int>{5, 0});

  // Strictly decreasing for every valid pair.
  for (int T : {7, 50, 100})
    for (int steps : {1, 2, 3, T - 1, T}) {
      auto b = sample_timesteps(T, steps);
      for (size_t i = 1; i < b.size(); ++i) CHECK(b[i] < b[i - 1]);
    }

  CHECK_THROWS_AS(sample_timesteps(10, 0), ConfigError);
  CHECK_THROWS_AS(sample_timesteps(10, 11), ConfigError);
}

TEST_CASE("final ddpm step returns the oracle x0 with no noise") {
  NoiseSchedule sched = cosine_schedule(100);
  SeededRng rng(1);
  Tensor<float> x0 = random_latent({3, 4, 5}, rng, -0.9, 0.9);
  Tensor<float> eps({3, 4, 5});
  for (size_t i = 0; i < eps.numel(); ++i) eps[i] = static_cast<float>(rng.normal());
  Tensor<float> x1 = q_sample(x0, 1, eps, sched);

  OracleVelocity model;
  model.target = x0;
  model.sched = &sched;
  SampleConfig cfg;
  cfg.steps = 100;
  Tensor<float> cond({3, 4, 5});
  cond.fill(0.0f);

  SeededRng noise_rng(7);
  const uint64_t state_before = noise_rng.state();
  Tensor<float> out =
      ddpm_step(model, x1, cond, 1, 0, sched, cfg, unit_bounds(3), noise_rng);
  // Terminal step consumes no noise.
  CHECK(noise_rng.state() == state_before);
  for (size_t i = 0; i < out.numel(); ++i)
    CHECK(std::abs(out[i] - x0[i]) < 1e-5);
}

TEST_CASE("intermediate step matches the posterior mean formula") {
  NoiseSchedule sched = cosine_schedule(100);
  SeededRng rng(2);
  Tensor<float> x0 = random_latent({2, 3, 3}, rng, -0.9, 0.9);
  Tensor<float> eps({2, 3, 3});
  for (size_t i = 0; i < eps.numel(); ++i) eps[i] = static_cast<float>(rng.normal());
  const int t = 60, t_prev = 59;
  Tensor<float> xt = q_sample(x0, t, eps, sched);

  OracleVelocity model;
  model.target = x0;
  model.sched = &sched;
  SampleConfig cfg;
  cfg.guidance_scale = 1.0;
  Tensor<float> cond({2, 3, 3});
  cond.fill(0.0f);

  // Replicate the noise draw with a twin generator.
  SeededRng noise_a(9), noise_b(9);
  Tensor<float> out =
      ddpm_step(model, xt, cond, t, t_prev, sched, cfg, unit_bounds(2), noise_a);

  const double ab_t = sched.alpha_bar(t), ab_p = sched.alpha_bar(t_prev);
  const double alpha_eff = ab_t / ab_p, beta_eff = 1.0 - alpha_eff;
  const double c0 = std::sqrt(ab_p) * beta_eff / (1.0 - ab_t);
  const double ct = std::sqrt(alpha_eff) * (1.0 - ab_p) / (1.0 - ab_t);
  const double var = (1.0 - ab_p) / (1.0 - ab_t) * beta_eff;  // beta_tilde default
  const double sigma = std::sqrt(var);
  for (size_t i = 0; i < out.numel(); ++i) {
    const double want = c0 * x0[i] + ct * xt[i] + sigma * noise_b.normal();
    CHECK(std::abs(out[i] - want) < 1e-5);
  }
}

TEST_CASE("beta variance mode uses beta_eff directly") {
  NoiseSchedule sched = cosine_schedule(100);
  SeededRng rng(3);
  Tensor<float> x0 = random_latent({1, 2, 2}, rng, -0.5, 0.5);
  Tensor<float> xt = q_sample(x0, 50, x0, sched);  // any valid latent
  OracleVelocity model;
  model.target = x0;
  model.sched = &sched;
  SampleConfig cfg;
  cfg.guidance_scale = 1.0;
  cfg.variance_mode = SampleConfig::VarianceMode::beta;
  Tensor<float> cond({1, 2, 2});
  cond.fill(0.0f);

  SeededRng na(4), nb(4);
  Tensor<float> out = ddpm_step(model, xt, cond, 50, 49, sched, cfg, unit_bounds(1), na);
  const double ab_t = sched.alpha_bar(50), ab_p = sched.alpha_bar(49);
  const double beta_eff = 1.0 - ab_t / ab_p;
  const double c0 = std::sqrt(ab_p) * beta_eff / (1.0 - ab_t);
  const double ct = std::sqrt(ab_t / ab_p) * (1.0 - ab_p) / (1.0 - ab_t);
  for (size_t i = 0; i < out.numel(); ++i) {
    const double x0c = std::clamp(
        std::sqrt(ab_t) * static_cast<double>(xt[i]) -
            std::sqrt(1.0 - ab_t) *
                ((std::sqrt(ab_t) * xt[i] - x0[i]) / std::sqrt(1.0 - ab_t)),
        -1.0, 1.0);
    const double want = c0 * x0c + ct * xt[i] + std::sqrt(beta_eff) * nb.normal();
    CHECK(std::abs(out[i] - want) < 1e-4);
  }
}

TEST_CASE("predicted x0 is clamped to the latent bounds") {
  NoiseSchedule sched = cosine_schedule(100);
  // Oracle whose target sits far outside the bounds.
  OracleVelocity model;
  model.sched = &sched;
  model.target = Tensor<float>({1, 2, 2});
  model.target.fill(50.0f);
  SampleConfig cfg;
  cfg.guidance_scale = 1.0;
  Tensor<float> xt({1, 2, 2}), cond({1, 2, 2});
  xt.fill(0.0f);
  cond.fill(0.0f);
  SeededRng rng(5);
  Tensor<float> out = ddpm_step(model, xt, cond, 1, 0, sched, cfg, unit_bounds(1), rng);
  // Terminal step returns the clamped x0 itself.
  for (size_t i = 0; i < out.numel(); ++i) CHECK(out[i] == 1.0f);
}

TEST_CASE("full oracle chain reconstructs x0 and counts forwards") {
  NoiseSchedule sched = cosine_schedule(200);
  SeededRng rng(6);
  Tensor<float> x0 = random_latent({3, 6, 4}, rng, -0.9, 0.9);
  OracleVelocity model;
  model.target = x0;
  model.sched = &sched;
  Tensor<float> cond({3, 6, 4});
  cond.fill(0.0f);

  SUBCASE("guidance 1: one forward per step") {
    SampleConfig cfg;
    cfg.steps = 200;
    cfg.guidance_scale = 1.0;
    StepCounters counters;
    SeededRng chain_rng(11);
    Tensor<float> out =
        sample_chain(model, cond, sched, cfg, unit_bounds(3), chain_rng, &counters);
    CHECK(counters.ddpm_steps == 200);
    CHECK(counters.forward_evals == 200);
    double worst = 0.0;
    for (size_t i = 0; i < out.numel(); ++i)
      worst = std::max(worst, std::abs(static_cast<double>(out[i]) - x0[i]));
    CHECK(worst < 1e-3);
  }

  SUBCASE("guidance 2 and guidance 0 run two forwards per step") {
    SampleConfig cfg;
    cfg.steps = 50;
    cfg.guidance_scale = 2.0;
    StepCounters counters;
    SeededRng chain_rng(12);
    (void)sample_chain(model, cond, sched, cfg, unit_bounds(3), chain_rng, &counters);
    CHECK(counters.ddpm_steps == 50);
    CHECK(counters.forward_evals == 100);

    cfg.guidance_scale = 0.0;
    StepCounters c2;
    SeededRng chain_rng2(12);
    (void)sample_chain(model, cond, sched, cfg, unit_bounds(3), chain_rng2, &c2);
    CHECK(c2.forward_evals == 100);
  }

  SUBCASE("strided chain still lands on the target") {
    SampleConfig cfg;
    cfg.steps = 40;  // stride 5 over T=200
    cfg.guidance_scale = 1.0;
    SeededRng chain_rng(13);
    Tensor<float> out = sample_chain(model, cond, sched, cfg, unit_bounds(3), chain_rng);
    double worst = 0.0;
    for (size_t i = 0; i < out.numel(); ++i)
      worst = std::max(worst, std::abs(static_cast<double>(out[i]) - x0[i]));
    CHECK(worst < 1e-3);
  }
}

TEST_CASE("output is continuous in the guidance weight") {
  NoiseSchedule sched = cosine_schedule(100);
  SeededRng rng(14);
  Tensor<float> x0 = random_latent({2, 4, 4}, rng, -0.8, 0.8);
  OracleVelocity model;
  model.sched = &sched;
  model.target = x0;
  model.has_uncond = true;
  model.uncond_target = Tensor<float>(x0.shape());
  for (size_t i = 0; i < x0.numel(); ++i) model.uncond_target[i] = 0.5f * x0[i];
  Tensor<float> cond({2, 4, 4});
  cond.fill(0.0f);

  auto run = [&](double w) {
    SampleConfig cfg;
    cfg.steps = 100;
    cfg.guidance_scale = w;
    SeededRng chain_rng(15);
    return sample_chain(model, cond, sched, cfg, unit_bounds(2), chain_rng);
  };
  Tensor<float> a = run(2.0);
  Tensor<float> b = run(2.0 + 1e-6);
  double diff = 0.0;
  for (size_t i = 0; i < a.numel(); ++i)
    diff = std::max(diff, std::abs(static_cast<double>(a[i]) - b[i]));
  CHECK(diff < 1e-3);

  // And the weight genuinely matters at macro scale.
  Tensor<float> c = run(0.0);
  double big = 0.0;
  for (size_t i = 0; i < a.numel(); ++i)
    big = std::max(big, std::abs(static_cast<double>(a[i]) - c[i]));
  CHECK(big > 1e-3);
}

TEST_CASE("non-finite predictions abort with the step index") {
  NoiseSchedule sched = cosine_schedule(10);
  NanVelocity model;
  SampleConfig cfg;
  cfg.steps = 10;
  Tensor<float> xt({1, 2, 2}), cond({1, 2, 2});
  xt.fill(0.0f);
  cond.fill(0.0f);
  SeededRng rng(1);
  try {
    (void)ddpm_step(model, xt, cond, 5, 4, sched, cfg, unit_bounds(1), rng);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("t=5") != std::string::npos);
  }
}

TEST_CASE("ddpm_step argument validation") {
  NoiseSchedule sched = cosine_schedule(10);
  OracleVelocity model;
  model.sched = &sched;
  model.target = Tensor<float>({1, 2, 2});
  model.target.fill(0.0f);
  SampleConfig cfg;
  Tensor<float> xt({1, 2, 2}), cond({1, 2, 2});
  xt.fill(0.0f);
  cond.fill(0.0f);
  SeededRng rng(1);
  CHECK_THROWS_AS(ddpm_step(model, xt, cond, 0, 0, sched, cfg, unit_bounds(1), rng), Error);
  CHECK_THROWS_AS(ddpm_step(model, xt, cond, 11, 5, sched, cfg, unit_bounds(1), rng), Error);
  CHECK_THROWS_AS(ddpm_step(model, xt, cond, 5, 5, sched, cfg, unit_bounds(1), rng), Error);
  CHECK_THROWS_AS(ddpm_step(model, xt, cond, 5, 4, sched, cfg, unit_bounds(2), rng),
                  ShapeError);
}

TEST_CASE("enhance: strategies, determinism, seed sensitivity") {
  UNetConfig ucfg = small_unet_cfg();
  UNet<float> net(ucfg, 77);
  SeededRng prng(78);
  for (auto& ref : net.params())
    for (size_t e = 0; e < ref.v->numel(); ++e)
      (*ref.v)[e] += static_cast<float>(0.01 * prng.normal());
  UNetVelocity model(net);

  NoiseSchedule sched = cosine_schedule(10);
  CodecConfig codec;  // factor 2: 16x24 image -> 12ch 8x12 latent
  CorruptionConfig ccfg;
  Image img = toy_scene(16, 24, 31);

  SampleConfig cfg;
  cfg.steps = 10;
  cfg.seed = 5;

  SUBCASE("raw strategy conditions on the input unchanged") {
    cfg.strategy = SampleConfig::Strategy::raw;
    EnhanceResult r = enhance(img, model, sched, cfg, ccfg, codec);
    CHECK(r.condition.data == img.data);
    CHECK(r.output.height == 16);
    CHECK(r.output.width == 24);
  }

  SUBCASE("same seed reproduces, different seed varies") {
    EnhanceResult a = enhance(img, model, sched, cfg, ccfg, codec);
    EnhanceResult b = enhance(img, model, sched, cfg, ccfg, codec);
    CHECK(a.output.data == b.output.data);
    CHECK(a.condition.data == b.condition.data);

    SampleConfig cfg2 = cfg;
    cfg2.seed = 6;
    EnhanceResult c = enhance(img, model, sched, cfg2, ccfg, codec);
    CHECK(a.output.data != c.output.data);
  }

  SUBCASE("full and mild corruption build different conditions") {
    cfg.strategy = SampleConfig::Strategy::full_corrupt;
    EnhanceResult full = enhance(img, model, sched, cfg, ccfg, codec);
    cfg.strategy = SampleConfig::Strategy::mild_corrupt;
    EnhanceResult mild = enhance(img, model, sched, cfg, ccfg, codec);
    CHECK(full.condition.data != img.data);
    CHECK(mild.condition.data != img.data);
    CHECK(full.condition.data != mild.condition.data);

    // Each strategy corrupts with its own severity but a shared derived seed.
    const uint64_t cseed = derive_seed(cfg.seed, kStreamSample, 1);
    CorruptionConfig at_full = ccfg;
    at_full.severity = 1.0;
    CHECK(full.condition.data == corrupt(img, at_full, cseed).data);
    CorruptionConfig at_mild = ccfg;
    at_mild.severity = cfg.mild_severity;
    CHECK(mild.condition.data == corrupt(img, at_mild, cseed).data);
  }
}

TEST_CASE("inpaint: empty mask equals enhance-raw, filled mask reports known psnr") {
  UNetConfig ucfg = small_unet_cfg();
  UNet<float> net(ucfg, 81);
  SeededRng prng(82);
  for (auto& ref : net.params())
    for (size_t e = 0; e < ref.v->numel(); ++e)
      (*ref.v)[e] += static_cast<float>(0.01 * prng.normal());
  UNetVelocity model(net);

  NoiseSchedule sched = cosine_schedule(10);
  CodecConfig codec;
  Image img = toy_scene(16, 24, 47);

  SampleConfig cfg;
  cfg.steps = 10;
  cfg.seed = 9;

  SUBCASE("all-zero mask reproduces the raw-strategy chain bit-exactly") {
    InpaintRequest req;
    req.image = img;
    req.mask = Image(16, 24, 1, 0.0f);
    InpaintResult r = inpaint(req, model, sched, cfg, codec);

    SampleConfig raw_cfg = cfg;
    raw_cfg.strategy = SampleConfig::Strategy::raw;
    EnhanceResult e = enhance(img, model, sched, raw_cfg, CorruptionConfig{}, codec);
    CHECK(r.output.data == e.output.data);
    CHECK(r.condition.data == img.data);
  }

  SUBCASE("mask fills the condition and the known-psnr is reported") {
    InpaintRequest req;
    req.image = img;
    req.mask = Image(16, 24, 1, 0.0f);
    for (int y = 0; y < 16; ++y)
      for (int x = 0; x < 8; ++x) req.mask.at(y, x, 0) = 1.0f;
    InpaintResult r = inpaint(req, model, sched, cfg, codec);
    for (int y = 0; y < 16; ++y) {
      for (int x = 0; x < 8; ++x)
        for (int c = 0; c < 3; ++c) CHECK(r.condition.at(y, x, c) == 0.5f);
      for (int x = 8; x < 24; ++x)
        for (int c = 0; c < 3; ++c) CHECK(r.condition.at(y, x, c) == img.at(y, x, c));
    }
    CHECK(r.known_region_psnr > 0.0);
    CHECK(r.known_region_psnr == masked_psnr(r.output, img, req.mask, true));

    InpaintRequest black = req;
    black.fill = CorruptionConfig::Fill::black;
    InpaintResult rb = inpaint(black, model, sched, cfg, codec);
    CHECK(rb.condition.at(0, 0, 0) == 0.0f);
  }
}

TEST_CASE("masked_psnr selects the right pixels") {
  Image a(4, 4, 3, 0.0f);
  Image b(4, 4, 3, 0.0f);
  Image mask(4, 4, 1, 0.0f);
  // Left half missing; make it differ by exactly 0.1.
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 2; ++x) {
      mask.at(y, x, 0) = 1.0f;
      for (int c = 0; c < 3; ++c) b.at(y, x, c) = 0.1f;
    }
  // Missing region: MSE = 0.01 -> PSNR = 20 dB.
  CHECK(masked_psnr(a, b, mask, false) == doctest::Approx(20.0).epsilon(1e-3));
  // Known region identical: capped at 99.
  CHECK(masked_psnr(a, b, mask, true) == 99.0);
  // Empty selection: all-zero mask, missing region has no pixels.
  Image none(4, 4, 1, 0.0f);
  CHECK(masked_psnr(a, b, none, false) == 99.0);
  Image badmask(4, 5, 1, 0.0f);
  CHECK_THROWS_AS(masked_psnr(a, b, badmask, false), ShapeError);
}

TEST_CASE("sample config JSON and validation") {
  SampleConfig cfg;
  cfg.steps = 250;
  cfg.guidance_scale = 3.5;
  cfg.strategy = SampleConfig::Strategy::mild_corrupt;
  cfg.mild_severity = 0.4;
  cfg.variance_mode = SampleConfig::VarianceMode::beta;
  cfg.seed = 12345;
  SampleConfig back = SampleConfig::from_json(cfg.to_json());
  CHECK(back.steps == 250);
  CHECK(back.guidance_scale == 3.5);
  CHECK(back.strategy == SampleConfig::Strategy::mild_corrupt);
  CHECK(back.mild_severity == 0.4);
  CHECK(back.variance_mode == SampleConfig::VarianceMode::beta);
  CHECK(back.seed == 12345);

  CHECK(strategy_from_name("raw") == SampleConfig::Strategy::raw);
  CHECK(strategy_from_name("full") == SampleConfig::Strategy::full_corrupt);
  CHECK(strategy_from_name("mild") == SampleConfig::Strategy::mild_corrupt);
  CHECK(strategy_from_name("full_corrupt") == SampleConfig::Strategy::full_corrupt);
  CHECK_THROWS_AS(strategy_from_name("bogus"), ConfigError);

  SampleConfig bad;
  bad.steps = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = SampleConfig{};
  bad.guidance_scale = -1.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = SampleConfig{};
  bad.mild_severity = 1.5;
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  nlohmann::json j = cfg.to_json();
  j["warp"] = 1;
  CHECK_THROWS_AS(SampleConfig::from_json(j), ConfigError);
}
