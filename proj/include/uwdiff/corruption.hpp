#pragma once

#include <cstdint>

#include "json.hpp"
#include "uwdiff/image.hpp"
#include "uwdiff/rng.hpp"

namespace uwdiff {

struct Interval {
    double lo = 0.0;
    double hi = 0.0;
};

struct IntInterval {
    int lo = 0;
    int hi = 0;
};

// Synthetic underwater degradation settings. `severity` scales every stage
// magnitude; 0 makes the whole pipeline a bit-exact identity, 1 is the
// training default, 0.3 is the conventional "mild" setting used for
// out-of-distribution conditioning.
struct CorruptionConfig {
    double severity = 1.0;

    struct Bubbles {
        IntInterval count{5, 40};
        Interval radius{2.0, 24.0};      // pixels
        Interval brightness{0.55, 1.0};
        double softness = 0.5;           // falloff width as a fraction of radius
    } bubbles;

    struct Haze {
        Interval gray_level{0.45, 0.75};
        Interval opacity{0.15, 0.5};
    } haze;

    struct Blur {
        Interval kernel_sigma{0.5, 3.0};
        int kernel_size_cap = 21;        // odd
    } blur;

    // Gains are drawn per channel and assigned largest-to-smallest as
    // (blue, green, red), matching wavelength-dependent absorption; red is
    // additionally attenuated.
    struct Color {
        Interval gain{0.75, 1.25};
        Interval bias{-0.05, 0.05};
        double red_attenuation_bias = 0.25;
    } color;

    struct Extras {
        Interval vignette_strength{0.0, 0.4};
        Interval noise_sigma{0.0, 0.02};
        Interval gamma{0.8, 1.3};
    } extras;

    enum class Fill { midgray, black };

    struct Occlusion {
        bool enabled = false;
        IntInterval count{1, 3};
        Interval area_fraction{0.05, 0.30};
        Fill fill = Fill::midgray;
    } occlusion;

    void validate() const;

    nlohmann::json to_json() const;
    static CorruptionConfig from_json(const nlohmann::json& j);
};

// Individual stages. Each draws its parameters from `rng`, scales them by
// cfg.severity and returns the input unchanged when the effective
// magnitudes are exactly the identity.
Image shift_colors(const Image& img, const CorruptionConfig& cfg, SeededRng& rng);
Image apply_haze(const Image& img, const CorruptionConfig& cfg, SeededRng& rng);
Image add_bubbles(const Image& img, const CorruptionConfig& cfg, SeededRng& rng);
Image apply_blur(const Image& img, const CorruptionConfig& cfg, SeededRng& rng);
Image apply_extras(const Image& img, const CorruptionConfig& cfg, SeededRng& rng);
Image apply_occlusion(const Image& img, const CorruptionConfig& cfg, SeededRng& rng);

// Full pipeline: colors, haze, bubbles, blur, extras, then occlusion when
// enabled. Fully determined by (img, cfg, seed); each stage runs on its own
// substream so stages stay independent.
Image corrupt(const Image& img, const CorruptionConfig& cfg, uint64_t seed);

// Strict JSON helpers shared by all config parsers: reject unknown keys.
void require_keys_subset(const nlohmann::json& j,
                         std::initializer_list<const char*> allowed,
                         const char* where);
Interval interval_from_json(const nlohmann::json& j, const char* where);
IntInterval int_interval_from_json(const nlohmann::json& j, const char* where);

}  // namespace uwdiff
