#include "uwdiff/image.hpp"

#include <algorithm>
#include <cmath>

#include "uwdiff/error.hpp"

namespace uwdiff {

void clamp01(Image& img) {
    for (float& v : img.data) v = std::clamp(v, 0.0f, 1.0f);
}

Image crop_resize(const Image& img, int out_h, int out_w) {
    if (img.height < 8 || img.width < 8)
        throw ShapeError("crop_resize: input smaller than 8x8");
    if (out_h < 8 || out_w < 8)
        throw ShapeError("crop_resize: target smaller than 8x8");
    if (img.height == out_h && img.width == out_w) return img;

    // Largest centered window with the target aspect.
    int crop_h = img.height;
    int crop_w = img.width;
    const double in_aspect = static_cast<double>(img.width) / img.height;
    const double out_aspect = static_cast<double>(out_w) / out_h;
    if (in_aspect > out_aspect) {
        crop_w = static_cast<int>(std::lround(img.height * out_aspect));
    } else if (in_aspect < out_aspect) {
        crop_h = static_cast<int>(std::lround(img.width / out_aspect));
    }
    crop_w = std::clamp(crop_w, 1, img.width);
    crop_h = std::clamp(crop_h, 1, img.height);
    const int x0 = (img.width - crop_w) / 2;
    const int y0 = (img.height - crop_h) / 2;

    Image out(out_h, out_w, img.channels);
    const double sy = static_cast<double>(crop_h) / out_h;
    const double sx = static_cast<double>(crop_w) / out_w;
    for (int y = 0; y < out_h; ++y) {
        const double fy = (y + 0.5) * sy - 0.5;
        const double fy_cl = std::clamp(fy, 0.0, static_cast<double>(crop_h - 1));
        const int iy0 = static_cast<int>(fy_cl);
        const int iy1 = std::min(iy0 + 1, crop_h - 1);
        const double wy = fy_cl - iy0;
        for (int x = 0; x < out_w; ++x) {
            const double fx = (x + 0.5) * sx - 0.5;
            const double fx_cl = std::clamp(fx, 0.0, static_cast<double>(crop_w - 1));
            const int ix0 = static_cast<int>(fx_cl);
            const int ix1 = std::min(ix0 + 1, crop_w - 1);
            const double wx = fx_cl - ix0;
            for (int c = 0; c < img.channels; ++c) {
                const double v00 = img.at(y0 + iy0, x0 + ix0, c);
                const double v01 = img.at(y0 + iy0, x0 + ix1, c);
                const double v10 = img.at(y0 + iy1, x0 + ix0, c);
                const double v11 = img.at(y0 + iy1, x0 + ix1, c);
                const double v = (1.0 - wy) * ((1.0 - wx) * v00 + wx * v01) +
                                 wy * ((1.0 - wx) * v10 + wx * v11);
                out.at(y, x, c) = static_cast<float>(std::clamp(v, 0.0, 1.0));
            }
        }
    }
    return out;
}

double psnr(const Image& a, const Image& b) {
    if (!a.same_shape(b)) throw ShapeError("psnr: shape mismatch");
    double se = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i) {
        const double d = static_cast<double>(a.data[i]) - b.data[i];
        se += d * d;
    }
    const double mse = se / static_cast<double>(a.data.size());
    if (mse <= 0.0) return 99.0;
    return std::min(99.0, 10.0 * std::log10(1.0 / mse));
}

double channel_mean(const Image& img, int c) {
    double s = 0.0;
    const size_t px = static_cast<size_t>(img.height) * img.width;
    for (size_t i = 0; i < px; ++i) s += img.data[i * img.channels + c];
    return s / static_cast<double>(px);
}

double image_mean(const Image& img) {
    double s = 0.0;
    for (float v : img.data) s += v;
    return s / static_cast<double>(img.data.size());
}

double sharpness_score(const Image& img) {
    std::vector<double> luma(static_cast<size_t>(img.height) * img.width);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            double v;
            if (img.channels == 3) {
                v = 0.299 * img.at(y, x, 0) + 0.587 * img.at(y, x, 1) + 0.114 * img.at(y, x, 2);
            } else {
                v = img.at(y, x, 0);
            }
            luma[static_cast<size_t>(y) * img.width + x] = v;
        }
    }
    if (img.height < 3 || img.width < 3) return 0.0;
    double s = 0.0, s2 = 0.0;
    size_t n = 0;
    for (int y = 1; y + 1 < img.height; ++y) {
        for (int x = 1; x + 1 < img.width; ++x) {
            const size_t i = static_cast<size_t>(y) * img.width + x;
            const double lap = luma[i - img.width] + luma[i + img.width] +
                               luma[i - 1] + luma[i + 1] - 4.0 * luma[i];
            s += lap;
            s2 += lap * lap;
            ++n;
        }
    }
    const double mean = s / static_cast<double>(n);
    return s2 / static_cast<double>(n) - mean * mean;
}

Image gaussian_blur(const Image& img, double sigma, int size_cap) {
    if (sigma <= 0.0) return img;
    const int size = std::min(2 * static_cast<int>(std::ceil(3.0 * sigma)) + 1, size_cap);
    if (size <= 1) return img;
    const int half = size / 2;

    std::vector<double> w(static_cast<size_t>(size));
    double wsum = 0.0;
    for (int i = 0; i < size; ++i) {
        const double d = i - half;
        w[static_cast<size_t>(i)] = std::exp(-d * d / (2.0 * sigma * sigma));
        wsum += w[static_cast<size_t>(i)];
    }
    for (double& v : w) v /= wsum;

    auto reflect = [](int i, int n) {
        while (i < 0 || i >= n) {
            if (i < 0) i = -1 - i;
            if (i >= n) i = 2 * n - 1 - i;
        }
        return i;
    };

    const int H = img.height, W = img.width, C = img.channels;
    std::vector<double> tmp(img.data.size());
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            for (int c = 0; c < C; ++c) {
                double acc = 0.0;
                for (int k = 0; k < size; ++k) {
                    const int xs = reflect(x + k - half, W);
                    acc += w[static_cast<size_t>(k)] * img.at(y, xs, c);
                }
                tmp[(static_cast<size_t>(y) * W + x) * C + c] = acc;
            }
        }
    }
    Image out(H, W, C);
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            for (int c = 0; c < C; ++c) {
                double acc = 0.0;
                for (int k = 0; k < size; ++k) {
                    const int ys = reflect(y + k - half, H);
                    acc += w[static_cast<size_t>(k)] *
                           tmp[(static_cast<size_t>(ys) * W + x) * C + c];
                }
                out.at(y, x, c) = static_cast<float>(std::clamp(acc, 0.0, 1.0));
            }
        }
    }
    return out;
}

Tensor<float> to_chw(const Image& img) {
    Tensor<float> t({img.channels, img.height, img.width});
    for (int c = 0; c < img.channels; ++c)
        for (int y = 0; y < img.height; ++y)
            for (int x = 0; x < img.width; ++x) t.at3(c, y, x) = img.at(y, x, c);
    return t;
}

Image from_chw(const Tensor<float>& t, bool clamp) {
    if (t.rank() != 3) throw ShapeError("from_chw: expected rank-3 tensor, got " + shape_str(t.shape()));
    Image img(t.dim(1), t.dim(2), t.dim(0));
    for (int c = 0; c < img.channels; ++c)
        for (int y = 0; y < img.height; ++y)
            for (int x = 0; x < img.width; ++x) {
                float v = t.at3(c, y, x);
                if (clamp) v = std::clamp(v, 0.0f, 1.0f);
                img.at(y, x, c) = v;
            }
    return img;
}

}  // namespace uwdiff
