#include "uwdiff/unet.hpp"

#include <algorithm>

#include "uwdiff/corruption.hpp"  // require_keys_subset

namespace uwdiff {

int UNetConfig::width_at(int level) const {
    long w = base_channels;
    for (int i = 0; i < level; ++i) w = std::min(w * 2, static_cast<long>(deep_channels));
    return static_cast<int>(w);
}

void UNetConfig::validate() const {
    if (latent_channels < 1 || base_channels < 1 || deep_channels < 1 ||
        num_encoder_blocks < 1 || decoder_res_per_block < 1 || time_embed_dim < 1 ||
        groups_per_norm < 1 || attn_head_dim < 1 || t_max < 1)
        throw ConfigError("unet: all counts must be >= 1");
    if (deep_channels < base_channels)
        throw ConfigError("unet: deep_channels must be >= base_channels");
    if (sinusoidal_dim < 2 || sinusoidal_dim % 2 != 0)
        throw ConfigError("unet: sinusoidal_dim must be even and >= 2");
    const int w_deep = width_at(num_encoder_blocks - 1);
    if (w_deep % attn_head_dim != 0)
        throw ConfigError("unet: attn_head_dim must divide the deepest width");
    const int down = 1 << num_encoder_blocks;
    if (latent_height % down != 0 || latent_width % down != 0)
        throw ConfigError("unet: latent size must be divisible by 2^num_encoder_blocks");
}

nlohmann::json UNetConfig::to_json() const {
    return {{"latent_channels", latent_channels},
            {"latent_height", latent_height},
            {"latent_width", latent_width},
            {"base_channels", base_channels},
            {"deep_channels", deep_channels},
            {"num_encoder_blocks", num_encoder_blocks},
            {"decoder_res_per_block", decoder_res_per_block},
            {"time_embed_dim", time_embed_dim},
            {"sinusoidal_dim", sinusoidal_dim},
            {"groups_per_norm", groups_per_norm},
            {"attn_head_dim", attn_head_dim},
            {"t_max", t_max}};
}

UNetConfig UNetConfig::from_json(const nlohmann::json& j) {
    UNetConfig c;
    require_keys_subset(j,
                        {"latent_channels", "latent_height", "latent_width", "base_channels",
                         "deep_channels", "num_encoder_blocks", "decoder_res_per_block",
                         "time_embed_dim", "sinusoidal_dim", "groups_per_norm",
                         "attn_head_dim", "t_max"},
                        "unet");
    auto get = [&](const char* k, int& dst) {
        if (j.contains(k)) dst = j[k].get<int>();
    };
    get("latent_channels", c.latent_channels);
    get("latent_height", c.latent_height);
    get("latent_width", c.latent_width);
    get("base_channels", c.base_channels);
    get("deep_channels", c.deep_channels);
    get("num_encoder_blocks", c.num_encoder_blocks);
    get("decoder_res_per_block", c.decoder_res_per_block);
    get("time_embed_dim", c.time_embed_dim);
    get("sinusoidal_dim", c.sinusoidal_dim);
    get("groups_per_norm", c.groups_per_norm);
    get("attn_head_dim", c.attn_head_dim);
    get("t_max", c.t_max);
    c.validate();
    return c;
}

namespace {

using ShapeList = std::vector<std::pair<std::string, std::vector<int>>>;

void conv_shapes(ShapeList& out, const std::string& name, int in, int c_out, int k) {
    out.push_back({name + ".w", {c_out, in, k, k}});
    out.push_back({name + ".b", {c_out}});
}

void linear_shapes(ShapeList& out, const std::string& name, int in, int c_out) {
    out.push_back({name + ".w", {c_out, in}});
    out.push_back({name + ".b", {c_out}});
}

void norm_shapes(ShapeList& out, const std::string& name, int ch) {
    out.push_back({name + ".g", {ch}});
    out.push_back({name + ".b", {ch}});
}

void resblock_shapes(ShapeList& out, const std::string& name, int in, int c_out,
                     int temb_dim) {
    norm_shapes(out, name + ".norm1", in);
    conv_shapes(out, name + ".conv1", in, c_out, 3);
    linear_shapes(out, name + ".temb", temb_dim, c_out);
    norm_shapes(out, name + ".norm2", c_out);
    conv_shapes(out, name + ".conv2", c_out, c_out, 3);
    if (in != c_out) conv_shapes(out, name + ".skip", in, c_out, 1);
}

}  // namespace

ShapeList unet_param_shapes(const UNetConfig& cfg) {
    cfg.validate();
    const int E = cfg.num_encoder_blocks;
    const int in_ch = 2 * cfg.latent_channels;
    ShapeList out;

    conv_shapes(out, "stem", in_ch, cfg.width_at(0), 3);
    linear_shapes(out, "temb.fc1", cfg.sinusoidal_dim, cfg.time_embed_dim);
    linear_shapes(out, "temb.fc2", cfg.time_embed_dim, cfg.time_embed_dim);
    for (int i = 0; i < E; ++i) {
        const int in_w = cfg.width_at(std::max(i - 1, 0));
        const int w = cfg.width_at(i);
        resblock_shapes(out, "enc" + std::to_string(i) + ".res", in_w, w,
                        cfg.time_embed_dim);
        conv_shapes(out, "enc" + std::to_string(i) + ".down", w, w, 3);
    }
    const int wd = cfg.width_at(E - 1);
    resblock_shapes(out, "mid.res0", wd, wd, cfg.time_embed_dim);
    norm_shapes(out, "mid.attn.norm", wd);
    conv_shapes(out, "mid.attn.qkv", wd, 3 * wd, 1);
    conv_shapes(out, "mid.attn.proj", wd, wd, 1);
    resblock_shapes(out, "mid.res1", wd, wd, cfg.time_embed_dim);
    for (int i = E - 1; i >= 0; --i) {
        const int w = cfg.width_at(i);
        const int in_w = (i == E - 1) ? wd : cfg.width_at(i + 1);
        const std::string name = "dec" + std::to_string(i);
        conv_shapes(out, name + ".up", in_w, w, 3);
        resblock_shapes(out, name + ".res0", 2 * w, w, cfg.time_embed_dim);
        for (int r = 1; r < cfg.decoder_res_per_block; ++r)
            resblock_shapes(out, name + ".res" + std::to_string(r), w, w,
                            cfg.time_embed_dim);
    }
    norm_shapes(out, "head.norm", cfg.width_at(0));
    conv_shapes(out, "head.conv", cfg.width_at(0), cfg.latent_channels, 3);
    out.push_back({"null_token",
                   {cfg.latent_channels, cfg.latent_height, cfg.latent_width}});
    return out;
}

size_t unet_param_count(const UNetConfig& cfg) {
    size_t n = 0;
    for (const auto& [name, shape] : unet_param_shapes(cfg)) {
        size_t s = 1;
        for (int d : shape) s *= static_cast<size_t>(d);
        n += s;
    }
    return n;
}

template <typename T>
UNet<T>::UNet(UNetConfig cfg, uint64_t init_seed) : cfg_(std::move(cfg)) {
    cfg_.validate();
    const int E = cfg_.num_encoder_blocks;
    const int G = cfg_.groups_per_norm;
    const int in_ch = 2 * cfg_.latent_channels;
    widths_.resize(static_cast<size_t>(E));
    for (int i = 0; i < E; ++i) widths_[static_cast<size_t>(i)] = cfg_.width_at(i);
    const int wd = widths_.back();

    stem_.setup("stem", in_ch, widths_[0], 3, 1, 1);
    fc1_.setup("temb.fc1", cfg_.sinusoidal_dim, cfg_.time_embed_dim);
    fc2_.setup("temb.fc2", cfg_.time_embed_dim, cfg_.time_embed_dim);
    enc_res_.resize(static_cast<size_t>(E));
    down_.resize(static_cast<size_t>(E));
    for (int i = 0; i < E; ++i) {
        const int in_w = widths_[static_cast<size_t>(std::max(i - 1, 0))];
        const int w = widths_[static_cast<size_t>(i)];
        enc_res_[static_cast<size_t>(i)].setup("enc" + std::to_string(i) + ".res", in_w, w,
                                               G, cfg_.time_embed_dim);
        down_[static_cast<size_t>(i)].setup("enc" + std::to_string(i) + ".down", w, w, 3, 2,
                                            1);
    }
    mid1_.setup("mid.res0", wd, wd, G, cfg_.time_embed_dim);
    attn_.setup("mid.attn", wd, G, cfg_.attn_head_dim);
    mid2_.setup("mid.res1", wd, wd, G, cfg_.time_embed_dim);
    dec_.resize(static_cast<size_t>(E));
    for (int i = E - 1; i >= 0; --i) {
        const int w = widths_[static_cast<size_t>(i)];
        const int in_w = (i == E - 1) ? wd : widths_[static_cast<size_t>(i + 1)];
        const std::string name = "dec" + std::to_string(i);
        auto& lvl = dec_[static_cast<size_t>(i)];
        lvl.up_conv.setup(name + ".up", in_w, w, 3, 1, 1);
        lvl.res.resize(static_cast<size_t>(cfg_.decoder_res_per_block));
        lvl.res[0].setup(name + ".res0", 2 * w, w, G, cfg_.time_embed_dim);
        for (int r = 1; r < cfg_.decoder_res_per_block; ++r)
            lvl.res[static_cast<size_t>(r)].setup(name + ".res" + std::to_string(r), w, w, G,
                                                  cfg_.time_embed_dim);
    }
    head_norm_.setup("head.norm", widths_[0], G);
    head_conv_.setup("head.conv", widths_[0], cfg_.latent_channels, 3, 1, 1);
    null_token_.setup("null_token",
                      {cfg_.latent_channels, cfg_.latent_height, cfg_.latent_width});

    SeededRng rng(derive_seed(init_seed, kStreamInit, 0));
    stem_.init(rng);
    fc1_.init(rng);
    fc2_.init(rng);
    for (int i = 0; i < E; ++i) {
        enc_res_[static_cast<size_t>(i)].init(rng);
        down_[static_cast<size_t>(i)].init(rng);
    }
    mid1_.init(rng);
    attn_.init(rng);
    mid2_.init(rng);
    for (int i = E - 1; i >= 0; --i) {
        dec_[static_cast<size_t>(i)].up_conv.init(rng);
        for (auto& r : dec_[static_cast<size_t>(i)].res) r.init(rng);
    }
    head_conv_.init(rng, /*zero=*/true);
}

template <typename T>
Tensor<T> UNet<T>::time_features(const std::vector<int>& ts) const {
    const int N = static_cast<int>(ts.size());
    const int half = cfg_.sinusoidal_dim / 2;
    Tensor<T> f({N, cfg_.sinusoidal_dim});
    for (int n = 0; n < N; ++n) {
        const double tau = static_cast<double>(ts[static_cast<size_t>(n)]) / cfg_.t_max;
        for (int i = 0; i < half; ++i) {
            const double omega =
                half > 1 ? std::pow(10000.0, static_cast<double>(i) / (half - 1)) : 1.0;
            const double arg = tau * omega;
            f[static_cast<size_t>(n) * cfg_.sinusoidal_dim + i] =
                static_cast<T>(std::sin(arg));
            f[static_cast<size_t>(n) * cfg_.sinusoidal_dim + half + i] =
                static_cast<T>(std::cos(arg));
        }
    }
    return f;
}

template <typename T>
Tensor<T> UNet<T>::forward(const Tensor<T>& x_t, const Tensor<T>& cond,
                           const std::vector<uint8_t>& cond_null,
                           const std::vector<int>& ts, bool train) {
    if (x_t.rank() != 4 || x_t.dim(1) != cfg_.latent_channels)
        throw ShapeError("unet: x_t must be (N," + std::to_string(cfg_.latent_channels) +
                         ",H,W), got " + shape_str(x_t.shape()));
    check_same_shape(x_t, cond, "unet cond");
    const int N = x_t.dim(0), H = x_t.dim(2), W = x_t.dim(3);
    if (static_cast<int>(ts.size()) != N || static_cast<int>(cond_null.size()) != N)
        throw ShapeError("unet: ts/cond_null length must equal batch size");
    const int down = 1 << cfg_.num_encoder_blocks;
    if (H % down != 0 || W % down != 0)
        throw ShapeError("unet: spatial size not divisible by " + std::to_string(down));
    for (int t : ts)
        if (t < 1 || t > cfg_.t_max)
            throw Error("unet: timestep " + std::to_string(t) + " outside [1," +
                        std::to_string(cfg_.t_max) + "]");

    // Substitute the null token where requested.
    Tensor<T> cond_eff = cond;
    const size_t csize = static_cast<size_t>(cfg_.latent_channels) * H * W;
    for (int n = 0; n < N; ++n) {
        if (!cond_null[static_cast<size_t>(n)]) continue;
        if (H != cfg_.latent_height || W != cfg_.latent_width)
            throw ShapeError("unet: null token shape does not match input latent size");
        std::copy(null_token_.v.data(), null_token_.v.data() + csize,
                  cond_eff.data() + static_cast<size_t>(n) * csize);
    }
    if (train) null_mask_cache_ = cond_null;

    Tensor<T> in = nn::concat_ch(x_t, cond_eff);
    Tensor<T> temb_act = temb_act2_.forward(
        fc2_.forward(temb_act1_.forward(fc1_.forward(time_features(ts), train), train),
                     train),
        train);

    Tensor<T> h = stem_.forward(in, train);
    std::vector<Tensor<T>> skips;
    skips.reserve(static_cast<size_t>(cfg_.num_encoder_blocks));
    for (int i = 0; i < cfg_.num_encoder_blocks; ++i) {
        h = enc_res_[static_cast<size_t>(i)].forward(h, temb_act, train);
        skips.push_back(h);
        h = down_[static_cast<size_t>(i)].forward(h, train);
    }
    h = mid1_.forward(h, temb_act, train);
    h = attn_.forward(h, train);
    h = mid2_.forward(h, temb_act, train);
    for (int i = cfg_.num_encoder_blocks - 1; i >= 0; --i) {
        auto& lvl = dec_[static_cast<size_t>(i)];
        h = lvl.up_conv.forward(lvl.up.forward(h), train);
        h = nn::concat_ch(h, skips[static_cast<size_t>(i)]);
        for (auto& r : lvl.res) h = r.forward(h, temb_act, train);
    }
    return head_conv_.forward(head_act_.forward(head_norm_.forward(h, train), train),
                              train);
}

template <typename T>
void UNet<T>::backward(const Tensor<T>& dout) {
    const int E = cfg_.num_encoder_blocks;
    Tensor<T> d = head_norm_.backward(head_act_.backward(head_conv_.backward(dout)));
    const int N = d.dim(0);
    Tensor<T> dtemb_act({N, cfg_.time_embed_dim});

    std::vector<Tensor<T>> dskips(static_cast<size_t>(E));
    for (int i = 0; i < E; ++i) {
        auto& lvl = dec_[static_cast<size_t>(i)];
        for (int r = static_cast<int>(lvl.res.size()) - 1; r >= 0; --r)
            d = lvl.res[static_cast<size_t>(r)].backward(d, dtemb_act);
        Tensor<T> d_up, d_skip;
        nn::split_ch(d, widths_[static_cast<size_t>(i)], d_up, d_skip);
        dskips[static_cast<size_t>(i)] = std::move(d_skip);
        d = lvl.up.backward(lvl.up_conv.backward(d_up));
    }
    d = mid2_.backward(d, dtemb_act);
    d = attn_.backward(d);
    d = mid1_.backward(d, dtemb_act);
    for (int i = E - 1; i >= 0; --i) {
        d = down_[static_cast<size_t>(i)].backward(d);
        kernels::Kern<T>::vadd(d.data(), dskips[static_cast<size_t>(i)].data(), d.data(),
                               d.numel());
        d = enc_res_[static_cast<size_t>(i)].backward(d, dtemb_act);
    }
    d = stem_.backward(d);

    fc1_.backward(temb_act1_.backward(fc2_.backward(temb_act2_.backward(dtemb_act))));

    // Route the condition-slice gradient of null samples into the token.
    Tensor<T> dx_t, dcond;
    nn::split_ch(d, cfg_.latent_channels, dx_t, dcond);
    const size_t csize = null_token_.v.numel();
    for (int n = 0; n < N; ++n) {
        if (!null_mask_cache_[static_cast<size_t>(n)]) continue;
        kernels::Kern<T>::vadd(null_token_.g.data(),
                               dcond.data() + static_cast<size_t>(n) * csize,
                               null_token_.g.data(), csize);
    }
}

template <typename T>
void UNet<T>::zero_grad() {
    for (auto& p : params()) p.g->fill(T{0});
}

template <typename T>
std::vector<nn::ParamRef<T>> UNet<T>::params() {
    std::vector<nn::ParamRef<T>> out;
    stem_.collect(out);
    fc1_.collect(out);
    fc2_.collect(out);
    for (int i = 0; i < cfg_.num_encoder_blocks; ++i) {
        enc_res_[static_cast<size_t>(i)].collect(out);
        down_[static_cast<size_t>(i)].collect(out);
    }
    mid1_.collect(out);
    attn_.collect(out);
    mid2_.collect(out);
    for (int i = cfg_.num_encoder_blocks - 1; i >= 0; --i) {
        dec_[static_cast<size_t>(i)].up_conv.collect(out);
        for (auto& r : dec_[static_cast<size_t>(i)].res) r.collect(out);
    }
    head_norm_.collect(out);
    head_conv_.collect(out);
    out.push_back({&null_token_.name, &null_token_.v, &null_token_.g});
    return out;
}

template <typename T>
size_t UNet<T>::param_count() const {
    size_t n = 0;
    for (auto& p : const_cast<UNet<T>*>(this)->params()) n += p.v->numel();
    return n;
}

template class UNet<float>;
template class UNet<double>;

}  // namespace uwdiff
