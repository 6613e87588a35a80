#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "uwdiff/error.hpp"
#include "uwdiff/kernels.hpp"
#include "uwdiff/rng.hpp"
#include "uwdiff/tensor.hpp"

namespace uwdiff {

// Channel plan: width doubles from base_channels at every downsample, capped
// at deep_channels. The decoder mirrors the encoder; skip connections are
// concatenated. decoder_res_per_block counts residual blocks per decoder
// level (the first one consumes the skip).
struct UNetConfig {
    int latent_channels = 4;
    int latent_height = 64;
    int latent_width = 96;
    int base_channels = 128;
    int deep_channels = 256;
    int num_encoder_blocks = 2;
    int decoder_res_per_block = 2;
    int time_embed_dim = 512;
    int sinusoidal_dim = 128;
    int groups_per_norm = 32;
    int attn_head_dim = 64;
    int t_max = 1000;

    int width_at(int level) const;
    void validate() const;

    nlohmann::json to_json() const;
    static UNetConfig from_json(const nlohmann::json& j);
};

// (name, shape) for every learnable tensor, in registration order. Pure
// arithmetic on the config; the network constructor must match it exactly.
std::vector<std::pair<std::string, std::vector<int>>> unet_param_shapes(const UNetConfig& cfg);
size_t unet_param_count(const UNetConfig& cfg);

namespace nn {

template <typename T>
struct PTensor {
    std::string name;
    Tensor<T> v;
    Tensor<T> g;

    void setup(std::string n, std::vector<int> shape) {
        name = std::move(n);
        v = Tensor<T>(shape);
        g = Tensor<T>(std::move(shape));
    }
    void init_normal(SeededRng& rng, double stddev) {
        for (size_t i = 0; i < v.numel(); ++i) v[i] = static_cast<T>(rng.normal() * stddev);
    }
};

template <typename T>
struct ParamRef {
    const std::string* name;
    Tensor<T>* v;
    Tensor<T>* g;
};

template <typename T>
void im2col(const T* x, int C, int H, int W, int k, int stride, int pad, int OH, int OW,
            T* col) {
    for (int c = 0; c < C; ++c) {
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                T* crow = col + ((static_cast<size_t>(c) * k + ky) * k + kx) *
                                    (static_cast<size_t>(OH) * OW);
                for (int oy = 0; oy < OH; ++oy) {
                    const int iy = oy * stride + ky - pad;
                    for (int ox = 0; ox < OW; ++ox) {
                        const int ix = ox * stride + kx - pad;
                        crow[static_cast<size_t>(oy) * OW + ox] =
                            (iy >= 0 && iy < H && ix >= 0 && ix < W)
                                ? x[(static_cast<size_t>(c) * H + iy) * W + ix]
                                : T{0};
                    }
                }
            }
        }
    }
}

template <typename T>
void col2im_add(const T* col, int C, int H, int W, int k, int stride, int pad, int OH,
                int OW, T* dx) {
    for (int c = 0; c < C; ++c) {
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                const T* crow = col + ((static_cast<size_t>(c) * k + ky) * k + kx) *
                                          (static_cast<size_t>(OH) * OW);
                for (int oy = 0; oy < OH; ++oy) {
                    const int iy = oy * stride + ky - pad;
                    if (iy < 0 || iy >= H) continue;
                    for (int ox = 0; ox < OW; ++ox) {
                        const int ix = ox * stride + kx - pad;
                        if (ix < 0 || ix >= W) continue;
                        dx[(static_cast<size_t>(c) * H + iy) * W + ix] +=
                            crow[static_cast<size_t>(oy) * OW + ox];
                    }
                }
            }
        }
    }
}

template <typename T>
struct Conv2d {
    int in_ch = 0, out_ch = 0, k = 3, stride = 1, pad = 1;
    PTensor<T> w, b;
    Tensor<T> x_cache;

    void setup(const std::string& name, int in, int out, int kk, int s, int p) {
        in_ch = in;
        out_ch = out;
        k = kk;
        stride = s;
        pad = p;
        w.setup(name + ".w", {out, in, k, k});
        b.setup(name + ".b", {out});
    }
    void init(SeededRng& rng, bool zero = false) {
        if (!zero) w.init_normal(rng, std::sqrt(2.0 / (in_ch * k * k)));
    }
    int out_size(int s) const { return (s + 2 * pad - k) / stride + 1; }

    Tensor<T> forward(const Tensor<T>& x, bool train) {
        const int N = x.dim(0), H = x.dim(2), W = x.dim(3);
        if (x.dim(1) != in_ch)
            throw ShapeError(w.name + ": expected " + std::to_string(in_ch) +
                             " input channels, got " + std::to_string(x.dim(1)));
        const int OH = out_size(H), OW = out_size(W);
        if (train) x_cache = x;
        Tensor<T> y({N, out_ch, OH, OW});
        const int K = in_ch * k * k;
        const size_t plane = static_cast<size_t>(OH) * OW;
        std::vector<T> col(static_cast<size_t>(K) * plane);
        for (int n = 0; n < N; ++n) {
            im2col(x.data() + static_cast<size_t>(n) * in_ch * H * W, in_ch, H, W, k,
                   stride, pad, OH, OW, col.data());
            T* yn = y.data() + static_cast<size_t>(n) * out_ch * plane;
            kernels::Kern<T>::gemm_nn(w.v.data(), col.data(), yn, out_ch,
                                      static_cast<int>(plane), K, false);
            for (int c = 0; c < out_ch; ++c)
                kernels::Kern<T>::adds(b.v[static_cast<size_t>(c)], yn + c * plane, plane);
        }
        return y;
    }

    Tensor<T> backward(const Tensor<T>& dy) {
        const Tensor<T>& x = x_cache;
        const int N = x.dim(0), H = x.dim(2), W = x.dim(3);
        const int OH = dy.dim(2), OW = dy.dim(3);
        const int K = in_ch * k * k;
        const size_t plane = static_cast<size_t>(OH) * OW;
        Tensor<T> dx(x.shape());
        std::vector<T> col(static_cast<size_t>(K) * plane);
        std::vector<T> dcol(static_cast<size_t>(K) * plane);
        for (int n = 0; n < N; ++n) {
            const T* dyn = dy.data() + static_cast<size_t>(n) * out_ch * plane;
            im2col(x.data() + static_cast<size_t>(n) * in_ch * H * W, in_ch, H, W, k,
                   stride, pad, OH, OW, col.data());
            kernels::Kern<T>::gemm_nt(dyn, col.data(), w.g.data(), out_ch, K,
                                      static_cast<int>(plane), true);
            for (int c = 0; c < out_ch; ++c)
                b.g[static_cast<size_t>(c)] += kernels::Kern<T>::sum(dyn + c * plane, plane);
            kernels::Kern<T>::gemm_tn(w.v.data(), dyn, dcol.data(), K,
                                      static_cast<int>(plane), out_ch, false);
            col2im_add(dcol.data(), in_ch, H, W, k, stride, pad, OH, OW,
                       dx.data() + static_cast<size_t>(n) * in_ch * H * W);
        }
        return dx;
    }

    void collect(std::vector<ParamRef<T>>& out) {
        out.push_back({&w.name, &w.v, &w.g});
        out.push_back({&b.name, &b.v, &b.g});
    }
};

template <typename T>
struct Linear {
    int in_dim = 0, out_dim = 0;
    PTensor<T> w, b;  // w: {out, in}
    Tensor<T> x_cache;

    void setup(const std::string& name, int in, int out) {
        in_dim = in;
        out_dim = out;
        w.setup(name + ".w", {out, in});
        b.setup(name + ".b", {out});
    }
    void init(SeededRng& rng) { w.init_normal(rng, std::sqrt(2.0 / in_dim)); }

    Tensor<T> forward(const Tensor<T>& x, bool train) {
        const int N = x.dim(0);
        if (x.dim(1) != in_dim) throw ShapeError(w.name + ": input dim mismatch");
        if (train) x_cache = x;
        Tensor<T> y({N, out_dim});
        kernels::Kern<T>::gemm_nt(x.data(), w.v.data(), y.data(), N, out_dim, in_dim, false);
        for (int n = 0; n < N; ++n)
            kernels::Kern<T>::vadd(y.data() + static_cast<size_t>(n) * out_dim, b.v.data(),
                                   y.data() + static_cast<size_t>(n) * out_dim,
                                   static_cast<size_t>(out_dim));
        return y;
    }

    Tensor<T> backward(const Tensor<T>& dy) {
        const int N = dy.dim(0);
        kernels::Kern<T>::gemm_tn(dy.data(), x_cache.data(), w.g.data(), out_dim, in_dim, N,
                                  true);
        for (int n = 0; n < N; ++n)
            kernels::Kern<T>::vadd(b.g.data(), dy.data() + static_cast<size_t>(n) * out_dim,
                                   b.g.data(), static_cast<size_t>(out_dim));
        Tensor<T> dx({N, in_dim});
        kernels::Kern<T>::gemm_nn(dy.data(), w.v.data(), dx.data(), N, in_dim, out_dim,
                                  false);
        return dx;
    }

    void collect(std::vector<ParamRef<T>>& out) {
        out.push_back({&w.name, &w.v, &w.g});
        out.push_back({&b.name, &b.v, &b.g});
    }
};

template <typename T>
struct GroupNorm {
    int ch = 0, groups = 0;
    PTensor<T> gamma, beta;
    Tensor<T> xhat_cache;
    std::vector<double> inv_std_cache;
    static constexpr double kEps = 1e-5;

    void setup(const std::string& name, int channels, int g) {
        ch = channels;
        groups = g;
        if (ch % groups != 0)
            throw ConfigError(name + ": groups " + std::to_string(g) +
                              " do not divide channels " + std::to_string(channels));
        gamma.setup(name + ".g", {channels});
        beta.setup(name + ".b", {channels});
        gamma.v.fill(T{1});
    }

    Tensor<T> forward(const Tensor<T>& x, bool train) {
        const int N = x.dim(0), H = x.dim(2), W = x.dim(3);
        const int cpg = ch / groups;
        const size_t plane = static_cast<size_t>(H) * W;
        const size_t gsize = static_cast<size_t>(cpg) * plane;
        Tensor<T> xhat(x.shape());
        Tensor<T> y(x.shape());
        inv_std_cache.assign(static_cast<size_t>(N) * groups, 0.0);
        for (int n = 0; n < N; ++n) {
            for (int g = 0; g < groups; ++g) {
                const T* xg = x.data() + (static_cast<size_t>(n) * ch + g * cpg) * plane;
                double mean = 0.0;
                for (size_t i = 0; i < gsize; ++i) mean += static_cast<double>(xg[i]);
                mean /= static_cast<double>(gsize);
                double var = 0.0;
                for (size_t i = 0; i < gsize; ++i) {
                    const double d = static_cast<double>(xg[i]) - mean;
                    var += d * d;
                }
                var /= static_cast<double>(gsize);
                const double is = 1.0 / std::sqrt(var + kEps);
                inv_std_cache[static_cast<size_t>(n) * groups + g] = is;
                T* xh = xhat.data() + (static_cast<size_t>(n) * ch + g * cpg) * plane;
                T* yg = y.data() + (static_cast<size_t>(n) * ch + g * cpg) * plane;
                for (int c = 0; c < cpg; ++c) {
                    const T gm = gamma.v[static_cast<size_t>(g * cpg + c)];
                    const T bt = beta.v[static_cast<size_t>(g * cpg + c)];
                    for (size_t i = 0; i < plane; ++i) {
                        const T h = static_cast<T>((static_cast<double>(xg[c * plane + i]) - mean) * is);
                        xh[c * plane + i] = h;
                        yg[c * plane + i] = gm * h + bt;
                    }
                }
            }
        }
        if (train) xhat_cache = std::move(xhat);
        return y;
    }

    Tensor<T> backward(const Tensor<T>& dy) {
        const Tensor<T>& xh = xhat_cache;
        const int N = dy.dim(0), H = dy.dim(2), W = dy.dim(3);
        const int cpg = ch / groups;
        const size_t plane = static_cast<size_t>(H) * W;
        const double m = static_cast<double>(cpg) * plane;
        Tensor<T> dx(dy.shape());
        for (int n = 0; n < N; ++n) {
            for (int g = 0; g < groups; ++g) {
                const size_t off = (static_cast<size_t>(n) * ch + g * cpg) * plane;
                const T* dyg = dy.data() + off;
                const T* xhg = xh.data() + off;
                double sum1 = 0.0, sum2 = 0.0;
                for (int c = 0; c < cpg; ++c) {
                    const double gm = static_cast<double>(gamma.v[static_cast<size_t>(g * cpg + c)]);
                    double dgam = 0.0, dbet = 0.0;
                    for (size_t i = 0; i < plane; ++i) {
                        const double d = static_cast<double>(dyg[c * plane + i]);
                        const double h = static_cast<double>(xhg[c * plane + i]);
                        dgam += d * h;
                        dbet += d;
                        sum1 += d * gm;
                        sum2 += d * gm * h;
                    }
                    gamma.g[static_cast<size_t>(g * cpg + c)] += static_cast<T>(dgam);
                    beta.g[static_cast<size_t>(g * cpg + c)] += static_cast<T>(dbet);
                }
                const double is = inv_std_cache[static_cast<size_t>(n) * groups + g];
                T* dxg = dx.data() + off;
                for (int c = 0; c < cpg; ++c) {
                    const double gm = static_cast<double>(gamma.v[static_cast<size_t>(g * cpg + c)]);
                    for (size_t i = 0; i < plane; ++i) {
                        const double d = static_cast<double>(dyg[c * plane + i]) * gm;
                        const double h = static_cast<double>(xhg[c * plane + i]);
                        dxg[c * plane + i] =
                            static_cast<T>(is * (d - (sum1 + h * sum2) / m));
                    }
                }
            }
        }
        return dx;
    }

    void collect(std::vector<ParamRef<T>>& out) {
        out.push_back({&gamma.name, &gamma.v, &gamma.g});
        out.push_back({&beta.name, &beta.v, &beta.g});
    }
};

template <typename T>
struct SiLU {
    Tensor<T> x_cache;

    Tensor<T> forward(const Tensor<T>& x, bool train) {
        if (train) x_cache = x;
        Tensor<T> y(x.shape());
        kernels::Kern<T>::silu(x.data(), y.data(), x.numel());
        return y;
    }
    Tensor<T> backward(const Tensor<T>& dy) {
        Tensor<T> dx(dy.shape());
        kernels::Kern<T>::silu_grad(x_cache.data(), dy.data(), dx.data(), dy.numel());
        return dx;
    }
};

template <typename T>
struct Upsample2x {
    Tensor<T> forward(const Tensor<T>& x) {
        const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
        Tensor<T> y({N, C, 2 * H, 2 * W});
        for (int n = 0; n < N; ++n)
            for (int c = 0; c < C; ++c)
                for (int h = 0; h < 2 * H; ++h)
                    for (int w = 0; w < 2 * W; ++w)
                        y.at4(n, c, h, w) = x.at4(n, c, h / 2, w / 2);
        return y;
    }
    Tensor<T> backward(const Tensor<T>& dy) {
        const int N = dy.dim(0), C = dy.dim(1), H = dy.dim(2) / 2, W = dy.dim(3) / 2;
        Tensor<T> dx({N, C, H, W});
        for (int n = 0; n < N; ++n)
            for (int c = 0; c < C; ++c)
                for (int h = 0; h < 2 * H; ++h)
                    for (int w = 0; w < 2 * W; ++w)
                        dx.at4(n, c, h / 2, w / 2) += dy.at4(n, c, h, w);
        return dx;
    }
};

// norm -> silu -> conv -> (+ time proj) -> norm -> silu -> conv, with an
// identity or 1x1-conv residual path.
template <typename T>
struct ResBlock {
    int in_ch = 0, out_ch = 0;
    GroupNorm<T> norm1, norm2;
    SiLU<T> act1, act2;
    Conv2d<T> conv1, conv2;
    Linear<T> temb_proj;
    bool has_skip = false;
    Conv2d<T> skip;

    void setup(const std::string& name, int in, int out, int groups, int temb_dim) {
        in_ch = in;
        out_ch = out;
        norm1.setup(name + ".norm1", in, groups);
        conv1.setup(name + ".conv1", in, out, 3, 1, 1);
        temb_proj.setup(name + ".temb", temb_dim, out);
        norm2.setup(name + ".norm2", out, groups);
        conv2.setup(name + ".conv2", out, out, 3, 1, 1);
        has_skip = in != out;
        if (has_skip) skip.setup(name + ".skip", in, out, 1, 1, 0);
    }
    void init(SeededRng& rng) {
        conv1.init(rng);
        temb_proj.init(rng);
        conv2.init(rng);
        if (has_skip) skip.init(rng);
    }

    Tensor<T> forward(const Tensor<T>& x, const Tensor<T>& temb_act, bool train) {
        Tensor<T> h = conv1.forward(act1.forward(norm1.forward(x, train), train), train);
        const Tensor<T> tp = temb_proj.forward(temb_act, train);  // (N, out_ch)
        const int N = h.dim(0);
        const size_t plane = static_cast<size_t>(h.dim(2)) * h.dim(3);
        for (int n = 0; n < N; ++n)
            for (int c = 0; c < out_ch; ++c)
                kernels::Kern<T>::adds(tp[static_cast<size_t>(n) * out_ch + c],
                                       h.data() + (static_cast<size_t>(n) * out_ch + c) * plane,
                                       plane);
        Tensor<T> h2 = conv2.forward(act2.forward(norm2.forward(h, train), train), train);
        if (has_skip) {
            const Tensor<T> sk = skip.forward(x, train);
            kernels::Kern<T>::vadd(h2.data(), sk.data(), h2.data(), h2.numel());
        } else {
            kernels::Kern<T>::vadd(h2.data(), x.data(), h2.data(), h2.numel());
        }
        return h2;
    }

    // Returns dx; adds the time-path gradient into dtemb_act.
    Tensor<T> backward(const Tensor<T>& dy, Tensor<T>& dtemb_act) {
        Tensor<T> dh = norm2.backward(act2.backward(conv2.backward(dy)));
        const int N = dh.dim(0);
        const size_t plane = static_cast<size_t>(dh.dim(2)) * dh.dim(3);
        Tensor<T> dtp({N, out_ch});
        for (int n = 0; n < N; ++n)
            for (int c = 0; c < out_ch; ++c)
                dtp[static_cast<size_t>(n) * out_ch + c] = kernels::Kern<T>::sum(
                    dh.data() + (static_cast<size_t>(n) * out_ch + c) * plane, plane);
        const Tensor<T> dta = temb_proj.backward(dtp);
        kernels::Kern<T>::vadd(dtemb_act.data(), dta.data(), dtemb_act.data(),
                               dtemb_act.numel());
        Tensor<T> dx = norm1.backward(act1.backward(conv1.backward(dh)));
        if (has_skip) {
            const Tensor<T> dsk = skip.backward(dy);
            kernels::Kern<T>::vadd(dx.data(), dsk.data(), dx.data(), dx.numel());
        } else {
            kernels::Kern<T>::vadd(dx.data(), dy.data(), dx.data(), dx.numel());
        }
        return dx;
    }

    void collect(std::vector<ParamRef<T>>& out) {
        norm1.collect(out);
        conv1.collect(out);
        temb_proj.collect(out);
        norm2.collect(out);
        conv2.collect(out);
        if (has_skip) skip.collect(out);
    }
};

// Pre-norm multi-head self-attention over the spatial grid, residual output.
template <typename T>
struct SelfAttention {
    int ch = 0, heads = 0, head_dim = 0;
    GroupNorm<T> norm;
    Conv2d<T> qkv, proj;
    Tensor<T> qkv_cache;
    Tensor<T> probs_cache;  // (N*heads, L, L)

    void setup(const std::string& name, int channels, int groups, int hdim) {
        ch = channels;
        head_dim = hdim;
        if (ch % hdim != 0)
            throw ConfigError(name + ": head dim " + std::to_string(hdim) +
                              " does not divide channels " + std::to_string(channels));
        heads = ch / hdim;
        norm.setup(name + ".norm", ch, groups);
        qkv.setup(name + ".qkv", ch, 3 * ch, 1, 1, 0);
        proj.setup(name + ".proj", ch, ch, 1, 1, 0);
    }
    void init(SeededRng& rng) {
        qkv.init(rng);
        proj.init(rng);
    }

    Tensor<T> forward(const Tensor<T>& x, bool train) {
        const int N = x.dim(0), H = x.dim(2), W = x.dim(3);
        const int L = H * W;
        const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(head_dim)));
        Tensor<T> q3 = qkv.forward(norm.forward(x, train), train);  // (N, 3C, H, W)
        Tensor<T> attn_out({N, ch, H, W});
        Tensor<T> probs({N * heads, L, L});
        std::vector<T> scores(static_cast<size_t>(L) * L);
        for (int n = 0; n < N; ++n) {
            for (int hh = 0; hh < heads; ++hh) {
                const size_t base = static_cast<size_t>(n) * 3 * ch * L;
                const T* Q = q3.data() + base + static_cast<size_t>(hh) * head_dim * L;
                const T* K = Q + static_cast<size_t>(ch) * L;
                const T* V = K + static_cast<size_t>(ch) * L;
                kernels::Kern<T>::gemm_tn(Q, K, scores.data(), L, L, head_dim, false);
                T* P = probs.data() + (static_cast<size_t>(n) * heads + hh) *
                                          static_cast<size_t>(L) * L;
                for (int l = 0; l < L; ++l) {
                    T* row = scores.data() + static_cast<size_t>(l) * L;
                    kernels::Kern<T>::scale(scale, row, static_cast<size_t>(L));
                    const T mx = kernels::Kern<T>::maxv(row, static_cast<size_t>(L));
                    kernels::Kern<T>::adds(-mx, row, static_cast<size_t>(L));
                    T* prow = P + static_cast<size_t>(l) * L;
                    kernels::Kern<T>::vexp(row, prow, static_cast<size_t>(L));
                    const T s = kernels::Kern<T>::sum(prow, static_cast<size_t>(L));
                    kernels::Kern<T>::scale(T{1} / s, prow, static_cast<size_t>(L));
                }
                T* O = attn_out.data() + (static_cast<size_t>(n) * ch + hh * head_dim) * L;
                kernels::Kern<T>::gemm_nt(V, P, O, head_dim, L, L, false);
            }
        }
        if (train) {
            qkv_cache = std::move(q3);
            probs_cache = std::move(probs);
        }
        Tensor<T> y = proj.forward(attn_out, train);
        kernels::Kern<T>::vadd(y.data(), x.data(), y.data(), y.numel());
        return y;
    }

    Tensor<T> backward(const Tensor<T>& dy) {
        Tensor<T> dattn = proj.backward(dy);  // (N, C, H, W)
        const int N = dattn.dim(0), H = dattn.dim(2), W = dattn.dim(3);
        const int L = H * W;
        const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(head_dim)));
        Tensor<T> dqkv({N, 3 * ch, H, W});
        std::vector<T> dP(static_cast<size_t>(L) * L);
        for (int n = 0; n < N; ++n) {
            for (int hh = 0; hh < heads; ++hh) {
                const size_t base = static_cast<size_t>(n) * 3 * ch * L;
                const T* Q = qkv_cache.data() + base + static_cast<size_t>(hh) * head_dim * L;
                const T* K = Q + static_cast<size_t>(ch) * L;
                const T* V = K + static_cast<size_t>(ch) * L;
                T* dQ = dqkv.data() + base + static_cast<size_t>(hh) * head_dim * L;
                T* dK = dQ + static_cast<size_t>(ch) * L;
                T* dV = dK + static_cast<size_t>(ch) * L;
                const T* P = probs_cache.data() + (static_cast<size_t>(n) * heads + hh) *
                                                      static_cast<size_t>(L) * L;
                const T* dO = dattn.data() + (static_cast<size_t>(n) * ch + hh * head_dim) * L;

                kernels::Kern<T>::gemm_nn(dO, P, dV, head_dim, L, L, false);
                kernels::Kern<T>::gemm_tn(dO, V, dP.data(), L, L, head_dim, false);
                // softmax backward per row, folding in the score scale
                for (int l = 0; l < L; ++l) {
                    T* drow = dP.data() + static_cast<size_t>(l) * L;
                    const T* prow = P + static_cast<size_t>(l) * L;
                    const T s = kernels::Kern<T>::dot(drow, prow, static_cast<size_t>(L));
                    for (int m = 0; m < L; ++m)
                        drow[m] = scale * prow[m] * (drow[m] - s);
                }
                kernels::Kern<T>::gemm_nt(K, dP.data(), dQ, head_dim, L, L, false);
                kernels::Kern<T>::gemm_nn(Q, dP.data(), dK, head_dim, L, L, false);
            }
        }
        Tensor<T> dx = norm.backward(qkv.backward(dqkv));
        kernels::Kern<T>::vadd(dx.data(), dy.data(), dx.data(), dx.numel());
        return dx;
    }

    void collect(std::vector<ParamRef<T>>& out) {
        norm.collect(out);
        qkv.collect(out);
        proj.collect(out);
    }
};

template <typename T>
Tensor<T> concat_ch(const Tensor<T>& a, const Tensor<T>& b) {
    const int N = a.dim(0), H = a.dim(2), W = a.dim(3);
    if (b.dim(0) != N || b.dim(2) != H || b.dim(3) != W)
        throw ShapeError("concat_ch: spatial/batch mismatch");
    Tensor<T> y({N, a.dim(1) + b.dim(1), H, W});
    const size_t plane = static_cast<size_t>(H) * W;
    const size_t ca = static_cast<size_t>(a.dim(1)) * plane;
    const size_t cb = static_cast<size_t>(b.dim(1)) * plane;
    for (int n = 0; n < N; ++n) {
        std::copy(a.data() + n * ca, a.data() + (n + 1) * ca, y.data() + n * (ca + cb));
        std::copy(b.data() + n * cb, b.data() + (n + 1) * cb,
                  y.data() + n * (ca + cb) + ca);
    }
    return y;
}

template <typename T>
void split_ch(const Tensor<T>& d, int ch_a, Tensor<T>& da, Tensor<T>& db) {
    const int N = d.dim(0), H = d.dim(2), W = d.dim(3);
    const int ch_b = d.dim(1) - ch_a;
    da = Tensor<T>({N, ch_a, H, W});
    db = Tensor<T>({N, ch_b, H, W});
    const size_t plane = static_cast<size_t>(H) * W;
    const size_t ca = static_cast<size_t>(ch_a) * plane;
    const size_t cb = static_cast<size_t>(ch_b) * plane;
    for (int n = 0; n < N; ++n) {
        std::copy(d.data() + n * (ca + cb), d.data() + n * (ca + cb) + ca,
                  da.data() + n * ca);
        std::copy(d.data() + n * (ca + cb) + ca, d.data() + (n + 1) * (ca + cb),
                  db.data() + n * cb);
    }
}

}  // namespace nn

// Conditional U-Net predicting the velocity target. The condition latent is
// concatenated channel-wise with x_t; samples flagged null use the learnable
// null token instead and route their condition gradient into it.
template <typename T>
class UNet {
public:
    explicit UNet(UNetConfig cfg, uint64_t init_seed = 0);

    // x_t, cond: (N, latent_channels, H, W); ts: one timestep per sample.
    // cond_null[n] != 0 substitutes the null token for sample n.
    Tensor<T> forward(const Tensor<T>& x_t, const Tensor<T>& cond,
                      const std::vector<uint8_t>& cond_null, const std::vector<int>& ts,
                      bool train = false);
    // dout has the forward output's shape; accumulates into parameter grads.
    void backward(const Tensor<T>& dout);
    void zero_grad();

    std::vector<nn::ParamRef<T>> params();
    size_t param_count() const;
    const UNetConfig& cfg() const { return cfg_; }
    Tensor<T>& null_token() { return null_token_.v; }

private:
    UNetConfig cfg_;
    std::vector<int> widths_;

    nn::Conv2d<T> stem_;
    nn::Linear<T> fc1_, fc2_;
    nn::SiLU<T> temb_act1_, temb_act2_;
    std::vector<nn::ResBlock<T>> enc_res_;
    std::vector<nn::Conv2d<T>> down_;
    nn::ResBlock<T> mid1_, mid2_;
    nn::SelfAttention<T> attn_;
    struct DecLevel {
        nn::Upsample2x<T> up;
        nn::Conv2d<T> up_conv;
        std::vector<nn::ResBlock<T>> res;
    };
    std::vector<DecLevel> dec_;  // index = level, traversed deep to shallow
    nn::GroupNorm<T> head_norm_;
    nn::SiLU<T> head_act_;
    nn::Conv2d<T> head_conv_;
    nn::PTensor<T> null_token_;

    std::vector<uint8_t> null_mask_cache_;

    Tensor<T> time_features(const std::vector<int>& ts) const;
};

extern template class UNet<float>;
extern template class UNet<double>;

}  // namespace uwdiff
