#include "uwdiff/codec.hpp"

#include <algorithm>
#include <cmath>

#include "uwdiff/corruption.hpp"  // require_keys_subset
#include "uwdiff/error.hpp"

namespace uwdiff {

namespace {

bool is_pow2(int v) { return v >= 1 && (v & (v - 1)) == 0; }

Tensor<float> space_to_depth_fwd(const Tensor<float>& in, int f) {
    const int C = in.dim(0), H = in.dim(1), W = in.dim(2);
    Tensor<float> out({C * f * f, H / f, W / f});
    for (int c = 0; c < C; ++c)
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) {
                const int oc = c * f * f + (y % f) * f + (x % f);
                out.at3(oc, y / f, x / f) = in.at3(c, y, x);
            }
    return out;
}

Tensor<float> space_to_depth_inv(const Tensor<float>& in, int f) {
    const int Cf = in.dim(0), h = in.dim(1), w = in.dim(2);
    const int C = Cf / (f * f);
    Tensor<float> out({C, h * f, w * f});
    for (int c = 0; c < C; ++c)
        for (int y = 0; y < h * f; ++y)
            for (int x = 0; x < w * f; ++x) {
                const int ic = c * f * f + (y % f) * f + (x % f);
                out.at3(c, y, x) = in.at3(ic, y / f, x / f);
            }
    return out;
}

// One level of the orthonormal 2-D Haar transform applied to every channel:
// (C,H,W) -> (4C, H/2, W/2), bands ordered LL, LH, HL, HH.
Tensor<float> haar_level_fwd(const Tensor<float>& in) {
    const int C = in.dim(0), H = in.dim(1), W = in.dim(2);
    Tensor<float> out({4 * C, H / 2, W / 2});
    for (int c = 0; c < C; ++c)
        for (int y = 0; y < H / 2; ++y)
            for (int x = 0; x < W / 2; ++x) {
                const float a = in.at3(c, 2 * y, 2 * x);
                const float b = in.at3(c, 2 * y, 2 * x + 1);
                const float d = in.at3(c, 2 * y + 1, 2 * x);
                const float e = in.at3(c, 2 * y + 1, 2 * x + 1);
                out.at3(4 * c + 0, y, x) = 0.5f * (a + b + d + e);
                out.at3(4 * c + 1, y, x) = 0.5f * (a - b + d - e);
                out.at3(4 * c + 2, y, x) = 0.5f * (a + b - d - e);
                out.at3(4 * c + 3, y, x) = 0.5f * (a - b - d + e);
            }
    return out;
}

Tensor<float> haar_level_inv(const Tensor<float>& in) {
    const int C4 = in.dim(0), h = in.dim(1), w = in.dim(2);
    const int C = C4 / 4;
    Tensor<float> out({C, h * 2, w * 2});
    for (int c = 0; c < C; ++c)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const float ll = in.at3(4 * c + 0, y, x);
                const float lh = in.at3(4 * c + 1, y, x);
                const float hl = in.at3(4 * c + 2, y, x);
                const float hh = in.at3(4 * c + 3, y, x);
                out.at3(c, 2 * y, 2 * x) = 0.5f * (ll + lh + hl + hh);
                out.at3(c, 2 * y, 2 * x + 1) = 0.5f * (ll - lh + hl - hh);
                out.at3(c, 2 * y + 1, 2 * x) = 0.5f * (ll + lh - hl - hh);
                out.at3(c, 2 * y + 1, 2 * x + 1) = 0.5f * (ll - lh - hl + hh);
            }
    return out;
}

}  // namespace

void CodecConfig::validate() const {
    if (factor < 1) throw ConfigError("codec.factor must be >= 1");
    if (mode == Mode::haar && !is_pow2(factor))
        throw ConfigError("codec.factor must be a power of two in haar mode");
    if (scale <= 0.0) throw ConfigError("codec.scale must be > 0");
}

Tensor<float> encode(const Image& img, const CodecConfig& cfg) {
    cfg.validate();
    if (img.height % cfg.factor != 0 || img.width % cfg.factor != 0)
        throw ShapeError("encode: image " + std::to_string(img.height) + "x" +
                         std::to_string(img.width) + " not divisible by factor " +
                         std::to_string(cfg.factor));

    Tensor<float> t = to_chw(img);
    if (cfg.mode == CodecConfig::Mode::space_to_depth) {
        if (cfg.factor > 1) t = space_to_depth_fwd(t, cfg.factor);
    } else {
        for (int f = cfg.factor; f > 1; f /= 2) t = haar_level_fwd(t);
    }
    const float shift = static_cast<float>(cfg.shift);
    const float scale = static_cast<float>(cfg.scale);
    for (size_t i = 0; i < t.numel(); ++i) t[i] = (t[i] - shift) * scale;
    return t;
}

Image decode(const Tensor<float>& latent, const CodecConfig& cfg, bool clamp) {
    cfg.validate();
    if (latent.rank() != 3) throw ShapeError("decode: latent must be rank 3");
    const int f2 = cfg.factor * cfg.factor;
    if (latent.dim(0) % f2 != 0)
        throw ShapeError("decode: latent channels " + std::to_string(latent.dim(0)) +
                         " not divisible by factor^2");

    Tensor<float> t = latent;
    const float shift = static_cast<float>(cfg.shift);
    const float scale = static_cast<float>(cfg.scale);
    for (size_t i = 0; i < t.numel(); ++i) t[i] = t[i] / scale + shift;

    if (cfg.mode == CodecConfig::Mode::space_to_depth) {
        if (cfg.factor > 1) t = space_to_depth_inv(t, cfg.factor);
    } else {
        for (int f = cfg.factor; f > 1; f /= 2) t = haar_level_inv(t);
    }
    return from_chw(t, clamp);
}

LatentBounds latent_bounds(const CodecConfig& cfg, int image_channels) {
    cfg.validate();
    const int f = cfg.factor;
    const int lc = cfg.latent_channels(image_channels);

    Image zero(f, f, image_channels, 0.0f);
    const Tensor<float> base = encode(zero, cfg);

    LatentBounds b;
    b.lo.assign(static_cast<size_t>(lc), 0.0f);
    b.hi.assign(static_cast<size_t>(lc), 0.0f);
    for (int c = 0; c < lc; ++c) {
        b.lo[static_cast<size_t>(c)] = base[static_cast<size_t>(c)];
        b.hi[static_cast<size_t>(c)] = base[static_cast<size_t>(c)];
    }

    // The transform is affine and channel-separable, so probing each block
    // position with a unit pixel yields every weight; positive weights push
    // the max up, negative ones push the min down.
    for (int dy = 0; dy < f; ++dy) {
        for (int dx = 0; dx < f; ++dx) {
            Image probe(f, f, image_channels, 0.0f);
            for (int c = 0; c < image_channels; ++c) probe.at(dy, dx, c) = 1.0f;
            const Tensor<float> enc = encode(probe, cfg);
            for (int c = 0; c < lc; ++c) {
                const float w = enc[static_cast<size_t>(c)] - base[static_cast<size_t>(c)];
                if (w > 0.0f) b.hi[static_cast<size_t>(c)] += w;
                else b.lo[static_cast<size_t>(c)] += w;
            }
        }
    }
    return b;
}

nlohmann::json CodecConfig::to_json() const {
    return {{"factor", factor},
            {"mode", mode == Mode::space_to_depth ? "space_to_depth" : "haar"},
            {"shift", shift},
            {"scale", scale}};
}

CodecConfig CodecConfig::from_json(const nlohmann::json& j) {
    CodecConfig c;
    require_keys_subset(j, {"factor", "mode", "shift", "scale"}, "codec");
    if (j.contains("factor")) c.factor = j["factor"].get<int>();
    if (j.contains("mode")) {
        const std::string m = j["mode"].get<std::string>();
        if (m == "space_to_depth") c.mode = Mode::space_to_depth;
        else if (m == "haar") c.mode = Mode::haar;
        else throw ConfigError("codec.mode must be \"space_to_depth\" or \"haar\"");
    }
    if (j.contains("shift")) c.shift = j["shift"].get<double>();
    if (j.contains("scale")) c.scale = j["scale"].get<double>();
    c.validate();
    return c;
}

}  // namespace uwdiff
