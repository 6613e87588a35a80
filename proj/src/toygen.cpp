#include "uwdiff/toygen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>

#include "uwdiff/error.hpp"
#include "uwdiff/png_io.hpp"
#include "uwdiff/rng.hpp"

namespace uwdiff {

namespace {

void add_clamped(Image& img, int y, int x, int c, double v) {
    float& p = img.at(y, x, c);
    p = static_cast<float>(std::clamp(static_cast<double>(p) + v, 0.0, 1.0));
}

}  // namespace

Image toy_scene(int height, int width, uint64_t seed) {
    if (height < 8 || width < 8) throw ShapeError("toy_scene: minimum size is 8x8");
    SeededRng rng(seed);
    const int H = height, W = width;
    Image img(H, W, 3);

    // Water column: light blue-green at the top fading into darker water.
    const double top_r = rng.uniform(0.05, 0.20);
    const double top_g = rng.uniform(0.35, 0.60);
    const double top_b = rng.uniform(0.45, 0.75);
    const double depth_keep = rng.uniform(0.25, 0.50);
    const double tilt = rng.uniform(-0.04, 0.04);
    for (int y = 0; y < H; ++y) {
        const double f = 1.0 - (1.0 - depth_keep) * (static_cast<double>(y) / (H - 1));
        for (int x = 0; x < W; ++x) {
            const double side = tilt * (static_cast<double>(x) / (W - 1) - 0.5);
            img.at(y, x, 0) = static_cast<float>(std::clamp(top_r * f + side, 0.0, 1.0));
            img.at(y, x, 1) = static_cast<float>(std::clamp(top_g * f + side, 0.0, 1.0));
            img.at(y, x, 2) = static_cast<float>(std::clamp(top_b * f + side, 0.0, 1.0));
        }
    }

    // Light shafts: slanted Gaussian bands fading with depth.
    const int n_shafts = static_cast<int>(rng.uniform_int(1, 4));
    for (int s = 0; s < n_shafts; ++s) {
        const double x0 = rng.uniform(0.0, W);
        const double slope = rng.uniform(-0.5, 0.5);
        const double sigma = rng.uniform(0.02, 0.08) * W;
        const double inten = rng.uniform(0.05, 0.22);
        for (int y = 0; y < H; ++y) {
            const double fade = std::pow(1.0 - static_cast<double>(y) / H, 1.5);
            const double cx = x0 + slope * y;
            for (int x = 0; x < W; ++x) {
                const double d = x - cx;
                const double a = inten * std::exp(-d * d / (2.0 * sigma * sigma)) * fade;
                if (a < 1e-4) continue;
                add_clamped(img, y, x, 0, a);
                add_clamped(img, y, x, 1, a * 0.98);
                add_clamped(img, y, x, 2, a * 0.90);
            }
        }
    }

    // Warm elliptical blobs standing in for fish and rocks.
    const int n_blobs = static_cast<int>(rng.uniform_int(3, 8));
    for (int b = 0; b < n_blobs; ++b) {
        const double cx = rng.uniform(0.10 * W, 0.90 * W);
        const double cy = rng.uniform(0.30 * H, 0.95 * H);
        const double ax = rng.uniform(0.04, 0.14) * W;
        const double ay = ax * rng.uniform(0.40, 0.90);
        const double theta = rng.uniform(0.0, 3.14159265358979323846);
        const double cr = rng.uniform(0.45, 0.85);
        const double cg = rng.uniform(0.25, 0.60);
        const double cb = rng.uniform(0.08, 0.35);
        const double ct = std::cos(theta), st = std::sin(theta);
        for (int y = 0; y < H; ++y) {
            for (int x = 0; x < W; ++x) {
                const double dx = x - cx, dy = y - cy;
                const double u = (dx * ct + dy * st) / ax;
                const double v = (-dx * st + dy * ct) / ay;
                const double r = std::sqrt(u * u + v * v);
                if (r >= 1.0) continue;
                const double alpha = std::clamp(4.0 * (1.0 - r), 0.0, 1.0) * 0.9;
                img.at(y, x, 0) = static_cast<float>(img.at(y, x, 0) * (1 - alpha) + cr * alpha);
                img.at(y, x, 1) = static_cast<float>(img.at(y, x, 1) * (1 - alpha) + cg * alpha);
                img.at(y, x, 2) = static_cast<float>(img.at(y, x, 2) * (1 - alpha) + cb * alpha);
            }
        }
    }

    // Drifting particles: small bright splats.
    const int n_part = static_cast<int>(rng.uniform_int(15, 50));
    for (int p = 0; p < n_part; ++p) {
        const double cx = rng.uniform(0.0, W - 1);
        const double cy = rng.uniform(0.0, H - 1);
        const double rad = rng.uniform(0.6, 1.8);
        const double bright = rng.uniform(0.10, 0.45);
        const int reach = static_cast<int>(std::ceil(3.0 * rad));
        const int ylo = std::max(0, static_cast<int>(cy) - reach);
        const int yhi = std::min(H - 1, static_cast<int>(cy) + reach);
        const int xlo = std::max(0, static_cast<int>(cx) - reach);
        const int xhi = std::min(W - 1, static_cast<int>(cx) + reach);
        for (int y = ylo; y <= yhi; ++y)
            for (int x = xlo; x <= xhi; ++x) {
                const double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
                const double a = bright * std::exp(-d2 / (2.0 * rad * rad));
                if (a < 1e-4) continue;
                add_clamped(img, y, x, 0, a * 0.9);
                add_clamped(img, y, x, 1, a);
                add_clamped(img, y, x, 2, a);
            }
    }

    // Per-image defocus; zero sigma leaves some images pin-sharp.
    const double sigma = rng.uniform(0.0, 1.5);
    return gaussian_blur(img, sigma);
}

ToyDataset generate_toy_dataset(const std::string& dir, int count, int height, int width,
                                uint64_t seed) {
    if (count < 1) throw ConfigError("toygen: count must be >= 1");
    std::filesystem::create_directories(dir);
    ToyDataset out;
    out.ids.reserve(static_cast<size_t>(count));
    out.paths.reserve(static_cast<size_t>(count));
    for (int i = 0; i < count; ++i) {
        char buf[16];
        std::snprintf(buf, sizeof(buf), "%05d", i);
        const std::string id(buf);
        const std::string rel = id + ".png";
        const Image img = toy_scene(height, width,
                                    derive_seed(seed, kStreamToygen, static_cast<uint64_t>(i)));
        write_png((std::filesystem::path(dir) / rel).string(), img);
        out.ids.push_back(id);
        out.paths.push_back(rel);
    }
    return out;
}

}  // namespace uwdiff
