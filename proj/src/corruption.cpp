#include "uwdiff/corruption.hpp"

#include <algorithm>
#include <cmath>

#include "uwdiff/error.hpp"

namespace uwdiff {

namespace {

using json = nlohmann::json;

void check_interval(const Interval& iv, const char* name) {
    if (!(iv.lo <= iv.hi)) throw ConfigError(std::string(name) + ": empty interval");
}

void check_int_interval(const IntInterval& iv, const char* name) {
    if (iv.lo > iv.hi) throw ConfigError(std::string(name) + ": empty interval");
}

double draw(SeededRng& rng, const Interval& iv) { return rng.uniform(iv.lo, iv.hi); }

float clamp01f(double v) { return static_cast<float>(std::clamp(v, 0.0, 1.0)); }

}  // namespace

void CorruptionConfig::validate() const {
    if (severity < 0.0 || severity > 1.0) throw ConfigError("severity must be in [0,1]");
    check_int_interval(bubbles.count, "bubbles.count");
    if (bubbles.count.lo < 0) throw ConfigError("bubbles.count must be non-negative");
    check_interval(bubbles.radius, "bubbles.radius");
    check_interval(bubbles.brightness, "bubbles.brightness");
    if (bubbles.softness <= 0.0) throw ConfigError("bubbles.softness must be > 0");
    check_interval(haze.gray_level, "haze.gray_level");
    check_interval(haze.opacity, "haze.opacity");
    check_interval(blur.kernel_sigma, "blur.kernel_sigma");
    if (blur.kernel_sigma.lo < 0.0) throw ConfigError("blur.kernel_sigma must be >= 0");
    if (blur.kernel_size_cap < 1 || blur.kernel_size_cap % 2 == 0)
        throw ConfigError("blur.kernel_size_cap must be a positive odd integer");
    check_interval(color.gain, "color.gain");
    if (color.gain.lo <= 0.0) throw ConfigError("color.gain must be > 0");
    check_interval(color.bias, "color.bias");
    if (color.red_attenuation_bias < 0.0)
        throw ConfigError("color.red_attenuation_bias must be >= 0");
    check_interval(extras.vignette_strength, "extras.vignette_strength");
    check_interval(extras.noise_sigma, "extras.noise_sigma");
    if (extras.noise_sigma.lo < 0.0) throw ConfigError("extras.noise_sigma must be >= 0");
    check_interval(extras.gamma, "extras.gamma");
    if (extras.gamma.lo <= 0.0) throw ConfigError("extras.gamma must be > 0");
    check_int_interval(occlusion.count, "occlusion.count");
    check_interval(occlusion.area_fraction, "occlusion.area_fraction");
    if (occlusion.area_fraction.lo <= 0.0 || occlusion.area_fraction.hi >= 1.0)
        throw ConfigError("occlusion.area_fraction must lie in (0,1)");
}

Image shift_colors(const Image& img, const CorruptionConfig& cfg, SeededRng& rng) {
    if (img.channels != 3) throw ShapeError("shift_colors: needs 3 channels");
    const double s = cfg.severity;

    double g[3] = {draw(rng, cfg.color.gain), draw(rng, cfg.color.gain),
                   draw(rng, cfg.color.gain)};
    std::sort(g, g + 3);  // ascending: red gets the smallest, blue the largest
    double gain[3] = {g[0], g[1], g[2]};
    double bias[3] = {draw(rng, cfg.color.bias), draw(rng, cfg.color.bias),
                      draw(rng, cfg.color.bias)};
    for (int c = 0; c < 3; ++c) {
        gain[c] = 1.0 + s * (gain[c] - 1.0);
        bias[c] = s * bias[c];
    }
    gain[0] -= cfg.color.red_attenuation_bias * s;

    if (gain[0] == 1.0 && gain[1] == 1.0 && gain[2] == 1.0 && bias[0] == 0.0 &&
        bias[1] == 0.0 && bias[2] == 0.0)
        return img;

    Image out(img.height, img.width, 3);
    const size_t px = static_cast<size_t>(img.height) * img.width;
    for (size_t i = 0; i < px; ++i)
        for (int c = 0; c < 3; ++c)
            out.data[i * 3 + c] = clamp01f(gain[c] * img.data[i * 3 + c] + bias[c]);
    return out;
}

Image apply_haze(const Image& img, const CorruptionConfig& cfg, SeededRng& rng) {
    const double gray = draw(rng, cfg.haze.gray_level);
    const double opacity = cfg.severity * draw(rng, cfg.haze.opacity);
    if (opacity == 0.0) return img;

    Image out(img.height, img.width, img.channels);
    for (size_t i = 0; i < img.data.size(); ++i)
        out.data[i] = clamp01f((1.0 - opacity) * img.data[i] + opacity * gray);
    return out;
}

Image add_bubbles(const Image& img, const CorruptionConfig& cfg, SeededRng& rng) {
    const double s = cfg.severity;
    const int lo = static_cast<int>(std::lround(cfg.bubbles.count.lo * s));
    const int hi = static_cast<int>(std::lround(cfg.bubbles.count.hi * s));
    const int n = static_cast<int>(rng.uniform_int(lo, hi));
    if (n == 0) return img;

    Image out = img;
    for (int b = 0; b < n; ++b) {
        const double cx = rng.uniform(0.0, static_cast<double>(img.width));
        const double cy = rng.uniform(0.0, static_cast<double>(img.height));
        const double radius = draw(rng, cfg.bubbles.radius);
        // Severity scales the count above and the brightness here; a mild
        // pass gets fewer and fainter bubbles, not fewer full-strength ones.
        const double bright = draw(rng, cfg.bubbles.brightness) * s;
        const double sigma = cfg.bubbles.softness * radius;
        // Hard cutoff past 6 sigma keeps distant pixels bit-identical.
        const double reach = radius + 6.0 * sigma;

        const int x_lo = std::max(0, static_cast<int>(std::floor(cx - reach)));
        const int x_hi = std::min(img.width - 1, static_cast<int>(std::ceil(cx + reach)));
        const int y_lo = std::max(0, static_cast<int>(std::floor(cy - reach)));
        const int y_hi = std::min(img.height - 1, static_cast<int>(std::ceil(cy + reach)));
        for (int y = y_lo; y <= y_hi; ++y) {
            for (int x = x_lo; x <= x_hi; ++x) {
                const double r = std::hypot(x + 0.5 - cx, y + 0.5 - cy);
                if (r > reach) continue;
                double a = bright;
                if (r > radius) {
                    const double d = r - radius;
                    a *= std::exp(-d * d / (2.0 * sigma * sigma));
                }
                for (int c = 0; c < img.channels; ++c) {
                    const size_t idx =
                        (static_cast<size_t>(y) * img.width + x) * img.channels + c;
                    out.data[idx] = clamp01f(out.data[idx] + a);
                }
            }
        }
    }
    return out;
}

Image apply_blur(const Image& img, const CorruptionConfig& cfg, SeededRng& rng) {
    // The draw happens before the identity test so the stream advances the
    // same way at every severity.
    const double sigma = cfg.severity * draw(rng, cfg.blur.kernel_sigma);
    if (sigma <= 0.0) return img;
    return gaussian_blur(img, sigma, cfg.blur.kernel_size_cap);
}

Image apply_extras(const Image& img, const CorruptionConfig& cfg, SeededRng& rng) {
    const double s = cfg.severity;
    const double vig = s * draw(rng, cfg.extras.vignette_strength);
    const double noise_sigma = s * draw(rng, cfg.extras.noise_sigma);
    const double gamma = 1.0 + s * (draw(rng, cfg.extras.gamma) - 1.0);
    if (vig == 0.0 && noise_sigma == 0.0 && gamma == 1.0) return img;

    const double cy = (img.height - 1) / 2.0;
    const double cx = (img.width - 1) / 2.0;
    const double r_max2 = cx * cx + cy * cy;

    Image out(img.height, img.width, img.channels);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            const double r2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
            const double mult = 1.0 - vig * (r_max2 > 0.0 ? r2 / r_max2 : 0.0);
            for (int c = 0; c < img.channels; ++c) {
                double v = img.at(y, x, c) * mult;
                if (noise_sigma > 0.0) v += noise_sigma * rng.normal();
                v = std::clamp(v, 0.0, 1.0);
                if (gamma != 1.0) v = std::pow(v, gamma);
                out.at(y, x, c) = clamp01f(v);
            }
        }
    }
    return out;
}

Image apply_occlusion(const Image& img, const CorruptionConfig& cfg, SeededRng& rng) {
    const int n = static_cast<int>(rng.uniform_int(cfg.occlusion.count.lo, cfg.occlusion.count.hi));
    if (n == 0 || cfg.severity == 0.0) return img;
    const float fill = cfg.occlusion.fill == CorruptionConfig::Fill::midgray ? 0.5f : 0.0f;

    Image out = img;
    for (int i = 0; i < n; ++i) {
        const double frac = cfg.severity * draw(rng, cfg.occlusion.area_fraction);
        const double area = frac * img.height * img.width;
        const double aspect = rng.uniform(0.5, 2.0);
        int rw = std::max(1, static_cast<int>(std::lround(std::sqrt(area * aspect))));
        int rh = std::max(1, static_cast<int>(std::lround(area / rw)));
        rw = std::min(rw, img.width);
        rh = std::min(rh, img.height);
        const int x0 = static_cast<int>(rng.uniform_int(0, img.width - rw));
        const int y0 = static_cast<int>(rng.uniform_int(0, img.height - rh));
        for (int y = y0; y < y0 + rh; ++y)
            for (int x = x0; x < x0 + rw; ++x)
                for (int c = 0; c < img.channels; ++c) out.at(y, x, c) = fill;
    }
    return out;
}

Image corrupt(const Image& img, const CorruptionConfig& cfg, uint64_t seed) {
    cfg.validate();
    if (cfg.severity == 0.0) return img;

    const SeededRng root(seed);
    Image out = img;
    {
        SeededRng r = root.substream(0);
        out = shift_colors(out, cfg, r);
    }
    {
        SeededRng r = root.substream(1);
        out = apply_haze(out, cfg, r);
    }
    {
        SeededRng r = root.substream(2);
        out = add_bubbles(out, cfg, r);
    }
    {
        SeededRng r = root.substream(3);
        out = apply_blur(out, cfg, r);
    }
    {
        SeededRng r = root.substream(4);
        out = apply_extras(out, cfg, r);
    }
    if (cfg.occlusion.enabled) {
        SeededRng r = root.substream(5);
        out = apply_occlusion(out, cfg, r);
    }
    return out;
}

// ---- JSON ----

void require_keys_subset(const json& j, std::initializer_list<const char*> allowed,
                         const char* where) {
    if (!j.is_object()) throw ConfigError(std::string(where) + ": expected a JSON object");
    for (const auto& item : j.items()) {
        bool ok = false;
        for (const char* k : allowed)
            if (item.key() == k) {
                ok = true;
                break;
            }
        if (!ok)
            throw ConfigError(std::string(where) + ": unknown key \"" + item.key() + "\"");
    }
}

Interval interval_from_json(const json& j, const char* where) {
    if (!j.is_array() || j.size() != 2)
        throw ConfigError(std::string(where) + ": expected [lo, hi]");
    Interval iv{j[0].get<double>(), j[1].get<double>()};
    if (!(iv.lo <= iv.hi)) throw ConfigError(std::string(where) + ": lo > hi");
    return iv;
}

IntInterval int_interval_from_json(const json& j, const char* where) {
    if (!j.is_array() || j.size() != 2)
        throw ConfigError(std::string(where) + ": expected [lo, hi]");
    IntInterval iv{j[0].get<int>(), j[1].get<int>()};
    if (iv.lo > iv.hi) throw ConfigError(std::string(where) + ": lo > hi");
    return iv;
}

json CorruptionConfig::to_json() const {
    json j;
    j["severity"] = severity;
    j["bubbles"] = {{"count", {bubbles.count.lo, bubbles.count.hi}},
                    {"radius", {bubbles.radius.lo, bubbles.radius.hi}},
                    {"brightness", {bubbles.brightness.lo, bubbles.brightness.hi}},
                    {"softness", bubbles.softness}};
    j["haze"] = {{"gray_level", {haze.gray_level.lo, haze.gray_level.hi}},
                 {"opacity", {haze.opacity.lo, haze.opacity.hi}}};
    j["blur"] = {{"kernel_sigma", {blur.kernel_sigma.lo, blur.kernel_sigma.hi}},
                 {"kernel_size_cap", blur.kernel_size_cap}};
    j["color"] = {{"gain", {color.gain.lo, color.gain.hi}},
                  {"bias", {color.bias.lo, color.bias.hi}},
                  {"red_attenuation_bias", color.red_attenuation_bias}};
    j["extras"] = {{"vignette_strength", {extras.vignette_strength.lo, extras.vignette_strength.hi}},
                   {"noise_sigma", {extras.noise_sigma.lo, extras.noise_sigma.hi}},
                   {"gamma", {extras.gamma.lo, extras.gamma.hi}}};
    j["occlusion"] = {{"enabled", occlusion.enabled},
                      {"count", {occlusion.count.lo, occlusion.count.hi}},
                      {"area_fraction", {occlusion.area_fraction.lo, occlusion.area_fraction.hi}},
                      {"fill", occlusion.fill == Fill::midgray ? "midgray" : "black"}};
    return j;
}

CorruptionConfig CorruptionConfig::from_json(const json& j) {
    CorruptionConfig c;
    require_keys_subset(
        j, {"severity", "bubbles", "haze", "blur", "color", "extras", "occlusion"},
        "corruption");
    if (j.contains("severity")) c.severity = j["severity"].get<double>();
    if (j.contains("bubbles")) {
        const auto& b = j["bubbles"];
        require_keys_subset(b, {"count", "radius", "brightness", "softness"},
                            "corruption.bubbles");
        if (b.contains("count")) c.bubbles.count = int_interval_from_json(b["count"], "bubbles.count");
        if (b.contains("radius")) c.bubbles.radius = interval_from_json(b["radius"], "bubbles.radius");
        if (b.contains("brightness"))
            c.bubbles.brightness = interval_from_json(b["brightness"], "bubbles.brightness");
        if (b.contains("softness")) c.bubbles.softness = b["softness"].get<double>();
    }
    if (j.contains("haze")) {
        const auto& h = j["haze"];
        require_keys_subset(h, {"gray_level", "opacity"}, "corruption.haze");
        if (h.contains("gray_level"))
            c.haze.gray_level = interval_from_json(h["gray_level"], "haze.gray_level");
        if (h.contains("opacity")) c.haze.opacity = interval_from_json(h["opacity"], "haze.opacity");
    }
    if (j.contains("blur")) {
        const auto& b = j["blur"];
        require_keys_subset(b, {"kernel_sigma", "kernel_size_cap"}, "corruption.blur");
        if (b.contains("kernel_sigma"))
            c.blur.kernel_sigma = interval_from_json(b["kernel_sigma"], "blur.kernel_sigma");
        if (b.contains("kernel_size_cap")) c.blur.kernel_size_cap = b["kernel_size_cap"].get<int>();
    }
    if (j.contains("color")) {
        const auto& col = j["color"];
        require_keys_subset(col, {"gain", "bias", "red_attenuation_bias"}, "corruption.color");
        if (col.contains("gain")) c.color.gain = interval_from_json(col["gain"], "color.gain");
        if (col.contains("bias")) c.color.bias = interval_from_json(col["bias"], "color.bias");
        if (col.contains("red_attenuation_bias"))
            c.color.red_attenuation_bias = col["red_attenuation_bias"].get<double>();
    }
    if (j.contains("extras")) {
        const auto& e = j["extras"];
        require_keys_subset(e, {"vignette_strength", "noise_sigma", "gamma"}, "corruption.extras");
        if (e.contains("vignette_strength"))
            c.extras.vignette_strength =
                interval_from_json(e["vignette_strength"], "extras.vignette_strength");
        if (e.contains("noise_sigma"))
            c.extras.noise_sigma = interval_from_json(e["noise_sigma"], "extras.noise_sigma");
        if (e.contains("gamma")) c.extras.gamma = interval_from_json(e["gamma"], "extras.gamma");
    }
    if (j.contains("occlusion")) {
        const auto& o = j["occlusion"];
        require_keys_subset(o, {"enabled", "count", "area_fraction", "fill"},
                            "corruption.occlusion");
        if (o.contains("enabled")) c.occlusion.enabled = o["enabled"].get<bool>();
        if (o.contains("count"))
            c.occlusion.count = int_interval_from_json(o["count"], "occlusion.count");
        if (o.contains("area_fraction"))
            c.occlusion.area_fraction =
                interval_from_json(o["area_fraction"], "occlusion.area_fraction");
        if (o.contains("fill")) {
            const std::string f = o["fill"].get<std::string>();
            if (f == "midgray") c.occlusion.fill = Fill::midgray;
            else if (f == "black") c.occlusion.fill = Fill::black;
            else throw ConfigError("occlusion.fill must be \"midgray\" or \"black\"");
        }
    }
    c.validate();
    return c;
}

}  // namespace uwdiff
