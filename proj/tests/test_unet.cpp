#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdint>
#include <vector>

#include "uwdiff/diffusion.hpp"
#include "uwdiff/error.hpp"
#include "uwdiff/optim.hpp"
#include "uwdiff/rng.hpp"
#include "uwdiff/tensor.hpp"
#include "uwdiff/unet.hpp"

using namespace uwdiff;

namespace {

// Small enough for finite differences, still exercising every layer kind:
// two levels, attention at the bottom, decoder skips.
UNetConfig tiny_cfg() {
  UNetConfig c;
  c.latent_channels = 2;
  c.latent_height = 8;
  c.latent_width = 8;
  c.base_channels = 8;
  c.deep_channels = 16;
  c.num_encoder_blocks = 2;
  c.decoder_res_per_block = 1;
  c.time_embed_dim = 16;
  c.sinusoidal_dim = 8;
  c.groups_per_norm = 4;
  c.attn_head_dim = 8;
  c.t_max = 50;
  return c;
}

template <typename T>
Tensor<T> random_tensor(std::vector<int> shape, SeededRng& rng, double scale = 1.0) {
  Tensor<T> t(std::move(shape));
  for (size_t i = 0; i < t.numel(); ++i)
    t[i] = static_cast<T>(rng.uniform(-scale, scale));
  return t;
}

template <typename T>
double loss_of(UNet<T>& net, const Tensor<T>& x_t, const Tensor<T>& cond,
               const std::vector<uint8_t>& null_mask, const std::vector<int>& ts,
               const Tensor<T>& target, bool train) {
  Tensor<T> pred = net.forward(x_t, cond, null_mask, ts, train);
  return v_loss(pred, target);
}

}  // namespace

TEST_CASE("analytic parameter inventory matches the instantiated network") {
  UNetConfig cfg = tiny_cfg();
  UNet<float> net(cfg, 7);
  auto refs = net.params();
  auto shapes = unet_param_shapes(cfg);
  REQUIRE(refs.size() == shapes.size());
  size_t total = 0;
  for (size_t i = 0; i < refs.size(); ++i) {
    CHECK(*refs[i].name == shapes[i].first);
    CHECK(refs[i].v->shape() == shapes[i].second);
    total += refs[i].v->numel();
  }
  CHECK(net.param_count() == total);
  CHECK(unet_param_count(cfg) == total);
}

TEST_CASE("default configuration lands in the expected parameter range") {
  UNetConfig cfg;  // latent 4ch, base 128, deep 256, two blocks each way
  const size_t n = unet_param_count(cfg);
  CHECK(n >= 9000000u);
  CHECK(n <= 13000000u);
}

TEST_CASE("compact configuration stays under 200k parameters") {
  UNetConfig cfg;
  cfg.latent_channels = 12;
  cfg.latent_height = 32;
  cfg.latent_width = 48;
  cfg.base_channels = 16;
  cfg.deep_channels = 32;
  cfg.time_embed_dim = 64;
  cfg.sinusoidal_dim = 16;
  cfg.groups_per_norm = 8;
  cfg.decoder_res_per_block = 1;
  cfg.attn_head_dim = 16;
  CHECK(unet_param_count(cfg) < 200000u);
}

TEST_CASE("initialization is deterministic under the seed") {
  UNetConfig cfg = tiny_cfg();
  UNet<float> a(cfg, 99), b(cfg, 99), c(cfg, 100);
  auto pa = a.params(), pb = b.params(), pc = c.params();
  bool all_equal = true, any_diff = false;
  for (size_t i = 0; i < pa.size(); ++i) {
    for (size_t e = 0; e < pa[i].v->numel(); ++e) {
      if ((*pa[i].v)[e] != (*pb[i].v)[e]) all_equal = false;
      if ((*pa[i].v)[e] != (*pc[i].v)[e]) any_diff = true;
    }
  }
  CHECK(all_equal);
  CHECK(any_diff);
}

TEST_CASE("zero-initialized head makes the initial output exactly zero") {
  UNetConfig cfg = tiny_cfg();
  UNet<float> net(cfg, 3);
  SeededRng rng(8);
  Tensor<float> x = random_tensor<float>({1, 2, 8, 8}, rng);
  Tensor<float> cond = random_tensor<float>({1, 2, 8, 8}, rng);
  Tensor<float> out = net.forward(x, cond, {0}, {10});
  for (size_t i = 0; i < out.numel(); ++i) CHECK(out[i] == 0.0f);
}

TEST_CASE("forward is pure: same inputs give bit-identical outputs") {
  UNetConfig cfg = tiny_cfg();
  UNet<float> net(cfg, 4);
  // Move the head off zero so outputs are nontrivial.
  SeededRng prng(5);
  for (auto& ref : net.params())
    if (ref.v->numel() < 64 || *ref.name == "head.conv.w")
      for (size_t e = 0; e < ref.v->numel(); ++e)
        (*ref.v)[e] += static_cast<float>(0.01 * prng.normal());

  SeededRng rng(6);
  Tensor<float> x = random_tensor<float>({2, 2, 8, 8}, rng);
  Tensor<float> cond = random_tensor<float>({2, 2, 8, 8}, rng);
  std::vector<int> ts{3, 40};
  Tensor<float> o1 = net.forward(x, cond, {0, 1}, ts);
  Tensor<float> o2 = net.forward(x, cond, {0, 1}, ts);
  REQUIRE(o1.numel() == o2.numel());
  for (size_t i = 0; i < o1.numel(); ++i) CHECK(o1[i] == o2[i]);
  CHECK(o1.shape() == x.shape());
}

TEST_CASE("output resolution tracks the input for other divisible sizes") {
  UNetConfig cfg = tiny_cfg();
  cfg.latent_height = 16;
  cfg.latent_width = 24;
  UNet<float> net(cfg, 2);
  SeededRng rng(9);
  Tensor<float> x = random_tensor<float>({1, 2, 16, 24}, rng);
  Tensor<float> cond = random_tensor<float>({1, 2, 16, 24}, rng);
  Tensor<float> out = net.forward(x, cond, {0}, {1});
  CHECK(out.shape() == std::vector<int>{1, 2, 16, 24});
}

TEST_CASE("batch rows are independent: duplicating a sample duplicates its output") {
  UNetConfig cfg = tiny_cfg();
  UNet<float> net(cfg, 11);
  SeededRng prng(12);
  for (auto& ref : net.params())
    for (size_t e = 0; e < ref.v->numel(); ++e)
      (*ref.v)[e] += static_cast<float>(0.01 * prng.normal());

  SeededRng rng(13);
  Tensor<float> x1 = random_tensor<float>({1, 2, 8, 8}, rng);
  Tensor<float> c1 = random_tensor<float>({1, 2, 8, 8}, rng);
  Tensor<float> x2({2, 2, 8, 8}), c2({2, 2, 8, 8});
  for (size_t i = 0; i < x1.numel(); ++i) {
    x2[i] = x1[i];
    x2[x1.numel() + i] = x1[i];
    c2[i] = c1[i];
    c2[c1.numel() + i] = c1[i];
  }
  Tensor<float> o1 = net.forward(x1, c1, {0}, {7});
  Tensor<float> o2 = net.forward(x2, c2, {0, 0}, {7, 7});
  for (size_t i = 0; i < o1.numel(); ++i) {
    CHECK(o2[i] == doctest::Approx(o1[i]).epsilon(1e-5));
    CHECK(o2[o1.numel() + i] == doctest::Approx(o1[i]).epsilon(1e-5));
  }
}

TEST_CASE("null token replaces the condition and routes gradient only when used") {
  UNetConfig cfg = tiny_cfg();
  UNet<double> net(cfg, 21);
  SeededRng prng(22);
  for (auto& ref : net.params())
    for (size_t e = 0; e < ref.v->numel(); ++e) (*ref.v)[e] += 0.01 * prng.normal();

  SeededRng rng(23);
  Tensor<double> x = random_tensor<double>({1, 2, 8, 8}, rng);
  Tensor<double> cond = random_tensor<double>({1, 2, 8, 8}, rng);
  Tensor<double> target = random_tensor<double>({1, 2, 8, 8}, rng);

  // Dropping the condition changes the output (null token differs from cond).
  Tensor<double> with_cond = net.forward(x, cond, {0}, {5});
  Tensor<double> dropped = net.forward(x, cond, {1}, {5});
  double diff = 0.0;
  for (size_t i = 0; i < with_cond.numel(); ++i)
    diff = std::max(diff, std::abs(with_cond[i] - dropped[i]));
  CHECK(diff > 1e-9);

  auto null_grad_norm = [&](uint8_t drop) {
    net.zero_grad();
    Tensor<double> pred = net.forward(x, cond, {drop}, {5}, true);
    Tensor<double> dout(pred.shape());
    const double inv = 2.0 / static_cast<double>(pred.numel());
    for (size_t i = 0; i < pred.numel(); ++i) dout[i] = inv * (pred[i] - target[i]);
    net.backward(dout);
    double norm = 0.0;
    for (auto& ref : net.params())
      if (*ref.name == "null_token")
        for (size_t e = 0; e < ref.g->numel(); ++e) norm += std::abs((*ref.g)[e]);
    return norm;
  };
  CHECK(null_grad_norm(0) == 0.0);
  CHECK(null_grad_norm(1) > 0.0);
}

TEST_CASE("gradients match central finite differences in double") {
  UNetConfig cfg = tiny_cfg();
  UNet<double> net(cfg, 31);
  // Perturb all params (head included) so no gradient path is trivially zero.
  SeededRng prng(32);
  for (auto& ref : net.params())
    for (size_t e = 0; e < ref.v->numel(); ++e) (*ref.v)[e] += 0.02 * prng.normal();

  SeededRng rng(33);
  Tensor<double> x = random_tensor<double>({2, 2, 8, 8}, rng);
  Tensor<double> cond = random_tensor<double>({2, 2, 8, 8}, rng);
  Tensor<double> target = random_tensor<double>({2, 2, 8, 8}, rng);
  std::vector<uint8_t> null_mask{0, 1};  // one conditioned, one dropped
  std::vector<int> ts{12, 44};

  net.zero_grad();
  Tensor<double> pred = net.forward(x, cond, null_mask, ts, true);
  Tensor<double> dout(pred.shape());
  const double inv = 2.0 / static_cast<double>(pred.numel());
  for (size_t i = 0; i < pred.numel(); ++i) dout[i] = inv * (pred[i] - target[i]);
  net.backward(dout);

  auto params = net.params();
  SeededRng pick(34);
  const double h = 1e-4;
  double worst_rel = 0.0;
  for (auto& ref : params) {
    // Sample a handful of entries per tensor; exhaustive FD is wasteful.
    const size_t n = ref.v->numel();
    const size_t samples = std::min<size_t>(4, n);
    for (size_t s = 0; s < samples; ++s) {
      const size_t e = static_cast<size_t>(pick.uniform_int(0, static_cast<int64_t>(n) - 1));
      const double saved = (*ref.v)[e];
      (*ref.v)[e] = saved + h;
      const double lp = loss_of(net, x, cond, null_mask, ts, target, false);
      (*ref.v)[e] = saved - h;
      const double lm = loss_of(net, x, cond, null_mask, ts, target, false);
      (*ref.v)[e] = saved;
      const double fd = (lp - lm) / (2.0 * h);
      const double an = (*ref.g)[e];
      const double denom = std::max({std::abs(fd), std::abs(an), 1e-6});
      const double rel = std::abs(fd - an) / denom;
      if (rel > worst_rel) worst_rel = rel;
      CHECK(rel < 1e-3);
    }
  }
  MESSAGE("worst relative gradient error: ", worst_rel);
}

TEST_CASE("duplicated sample leaves the mean loss unchanged") {
  UNetConfig cfg = tiny_cfg();
  UNet<double> net(cfg, 41);
  SeededRng prng(42);
  for (auto& ref : net.params())
    for (size_t e = 0; e < ref.v->numel(); ++e) (*ref.v)[e] += 0.01 * prng.normal();

  SeededRng rng(43);
  Tensor<double> x1 = random_tensor<double>({1, 2, 8, 8}, rng);
  Tensor<double> c1 = random_tensor<double>({1, 2, 8, 8}, rng);
  Tensor<double> t1 = random_tensor<double>({1, 2, 8, 8}, rng);
  Tensor<double> x2({2, 2, 8, 8}), c2({2, 2, 8, 8}), t2({2, 2, 8, 8});
  for (size_t i = 0; i < x1.numel(); ++i) {
    x2[i] = x2[x1.numel() + i] = x1[i];
    c2[i] = c2[c1.numel() + i] = c1[i];
    t2[i] = t2[t1.numel() + i] = t1[i];
  }
  const double l1 = v_loss(net.forward(x1, c1, {0}, {9}), t1);
  const double l2 = v_loss(net.forward(x2, c2, {0, 0}, {9, 9}), t2);
  CHECK(l2 == doctest::Approx(l1).epsilon(1e-9));
}

TEST_CASE("timestep embedding feeds through: different t gives different output") {
  UNetConfig cfg = tiny_cfg();
  UNet<float> net(cfg, 51);
  SeededRng prng(52);
  for (auto& ref : net.params())
    for (size_t e = 0; e < ref.v->numel(); ++e)
      (*ref.v)[e] += static_cast<float>(0.01 * prng.normal());

  SeededRng rng(53);
  Tensor<float> x = random_tensor<float>({1, 2, 8, 8}, rng);
  Tensor<float> cond = random_tensor<float>({1, 2, 8, 8}, rng);
  Tensor<float> o1 = net.forward(x, cond, {0}, {1});
  Tensor<float> o2 = net.forward(x, cond, {0}, {50});
  double diff = 0.0;
  for (size_t i = 0; i < o1.numel(); ++i)
    diff = std::max(diff, std::abs(static_cast<double>(o1[i]) - o2[i]));
  CHECK(diff > 1e-9);
}

TEST_CASE("forward validates shapes and timestep range") {
  UNetConfig cfg = tiny_cfg();
  UNet<float> net(cfg, 61);
  Tensor<float> x({1, 2, 8, 8}), cond({1, 2, 8, 8}), bad({1, 2, 8, 4});
  x.fill(0.1f);
  cond.fill(0.1f);
  bad.fill(0.1f);
  CHECK_THROWS_AS(net.forward(x, bad, {0}, {5}), ShapeError);
  CHECK_THROWS_AS(net.forward(x, cond, {0}, {0}), Error);
  CHECK_THROWS_AS(net.forward(x, cond, {0}, {51}), Error);
  CHECK_THROWS_AS(net.forward(x, cond, {0, 0}, {5}), ShapeError);
}

TEST_CASE("config validation catches inconsistent settings") {
  UNetConfig cfg = tiny_cfg();
  cfg.latent_height = 10;  // not divisible by 4
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = tiny_cfg();
  cfg.attn_head_dim = 5;  // does not divide the deepest width
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = tiny_cfg();
  cfg.deep_channels = 4;  // below base
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = tiny_cfg();
  cfg.sinusoidal_dim = 7;  // odd
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  CHECK_NOTHROW(tiny_cfg().validate());
}

TEST_CASE("200 steps on a fixed batch cut the loss by at least half") {
  UNetConfig cfg = tiny_cfg();
  UNet<float> net(cfg, 71);
  SeededRng rng(72);
  const int B = 8;
  Tensor<float> x = random_tensor<float>({B, 2, 8, 8}, rng);
  Tensor<float> cond = random_tensor<float>({B, 2, 8, 8}, rng);
  Tensor<float> target = random_tensor<float>({B, 2, 8, 8}, rng, 0.5);
  std::vector<uint8_t> null_mask(B, 0);
  null_mask[3] = 1;
  std::vector<int> ts;
  for (int i = 0; i < B; ++i) ts.push_back(1 + (i * 7) % 50);

  // AdamW with zero decay; the optimizer's arithmetic has its own tests.
  AdamWConfig ocfg;
  ocfg.weight_decay = 0.0;
  AdamW<float> opt(ocfg);
  double early_avg = 0.0;
  double last = 0.0;
  for (int step = 0; step < 200; ++step) {
    net.zero_grad();
    Tensor<float> pred = net.forward(x, cond, null_mask, ts, true);
    last = v_loss(pred, target);
    if (step < 5) early_avg += last / 5.0;
    Tensor<float> dout(pred.shape());
    const double inv = 2.0 / static_cast<double>(pred.numel());
    for (size_t i = 0; i < pred.numel(); ++i)
      dout[i] = static_cast<float>(inv * (pred[i] - target[i]));
    net.backward(dout);
    opt.step(net.params(), 1e-2);
  }
  CHECK(last <= 0.5 * early_avg);
}
