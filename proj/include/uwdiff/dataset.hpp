#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"
#include "uwdiff/codec.hpp"
#include "uwdiff/corruption.hpp"
#include "uwdiff/image.hpp"
#include "uwdiff/rng.hpp"
#include "uwdiff/schedule.hpp"
#include "uwdiff/tensor.hpp"

namespace uwdiff {

enum class Split { train, eval };

const char* split_name(Split s);
Split split_from_name(const std::string& s);

struct ManifestEntry {
    std::string id;
    std::string clean_path;  // relative paths resolve against the store dir
    uint64_t corrupted_seed = 0;
    double quality_rank = 0.0;  // percentile in (0,1], 1 = best
    Split split = Split::train;
};

struct RefreshLogEntry {
    int epoch = 0;
    std::vector<std::string> ids;
};

// JSON-lines file: one object per entry, refresh log lines appended after.
struct PairManifest {
    std::vector<ManifestEntry> entries;
    std::vector<RefreshLogEntry> refresh_epoch_log;

    void validate() const;  // unique ids, ranks in (0,1]
    void save(const std::string& path) const;
    static PairManifest load(const std::string& path);
};

// Split assignment is a seeded permutation; quality ranks are the sharpness
// percentile within each split, so the top tier is well defined per split.
PairManifest make_manifest(const std::vector<std::string>& ids,
                           const std::vector<std::string>& clean_paths,
                           const std::vector<double>& sharpness, double eval_fraction,
                           uint64_t seed);

struct AugmentConfig {
    double flip_p = 0.5;
    Interval brightness{-0.05, 0.05};  // additive
    Interval saturation{0.9, 1.1};     // scale about luma
    Interval contrast{0.9, 1.1};       // scale about 0.5
    Interval sharpness{0.0, 0.3};      // unsharp-mask amount

    static AugmentConfig identity();
    void validate() const;
    nlohmann::json to_json() const;
    static AugmentConfig from_json(const nlohmann::json& j);
};

struct AugmentParams {
    bool flip = false;
    double brightness = 0.0;
    double saturation = 1.0;
    double contrast = 1.0;
    double sharpness = 0.0;
};

AugmentParams draw_augment(const AugmentConfig& cfg, SeededRng& rng);
Image apply_augment(const Image& img, const AugmentParams& p);
Image augment(const Image& img, const AugmentConfig& cfg, SeededRng& rng);

struct SamplingPolicy {
    double top_fraction = 0.10;
    // Timesteps in (restricted_t_lo, restricted_t_hi] accept any training
    // image; all other timesteps accept only the top quality tier.
    int restricted_t_lo = 500;
    int restricted_t_hi = 1000;
    double condition_drop_p = 0.25;

    void validate() const;
    bool unrestricted_at(int t) const {
        return t > restricted_t_lo && t <= restricted_t_hi;
    }
    // Tier membership: strictly above the (1 - top_fraction) percentile, so a
    // fraction f of ranks (pos+1)/n lands inside.
    bool in_top_tier(double rank) const { return rank > 1.0 - top_fraction; }

    nlohmann::json to_json() const;
    static SamplingPolicy from_json(const nlohmann::json& j);
};

// Directory of corrupted PNGs plus the manifest and the corruption config
// used to (re)generate them.
class PairStore {
public:
    static PairStore build(PairManifest manifest, const CorruptionConfig& cfg,
                           const std::string& dir, uint64_t epoch0_seed);
    static PairStore open(const std::string& dir);

    // Re-corrupts ceil(fraction * n_train) distinct train entries with fresh
    // seeds drawn from rng; logs the selection and rewrites the manifest.
    // Returns the refreshed ids in manifest order.
    std::vector<std::string> refresh(double fraction, int epoch, SeededRng& rng);

    const PairManifest& manifest() const { return manifest_; }
    const CorruptionConfig& corruption() const { return corr_cfg_; }
    const std::string& dir() const { return dir_; }
    size_t size() const { return manifest_.entries.size(); }

    const Image& clean(size_t i) const;
    const Image& corrupted(size_t i) const;
    std::string clean_abs_path(size_t i) const;
    std::string corrupted_path(size_t i) const;

    std::vector<size_t> indices(Split s) const;

private:
    PairStore() = default;
    void write_corrupted(size_t i);

    std::string dir_;
    PairManifest manifest_;
    CorruptionConfig corr_cfg_;
    mutable std::vector<std::unique_ptr<Image>> clean_cache_;
    mutable std::vector<std::unique_ptr<Image>> corr_cache_;
};

struct DrawPlan {
    size_t entry = 0;
    int t = 1;
    bool drop_cond = false;
};

// Timestep first, then a uniform draw over the images eligible at that
// timestep. Eval entries are never eligible.
std::vector<DrawPlan> draw_plan(const PairManifest& manifest, const SamplingPolicy& policy,
                                int batch, int T, SeededRng& rng);

struct BatchItem {
    Tensor<float> x0;    // clean latent {C,H,W}
    Tensor<float> cond;  // corrupted latent {C,H,W}
    Tensor<float> eps;   // fresh standard normal, same shape
    int t = 1;
    bool cond_null = false;
    size_t entry = 0;
};

std::vector<BatchItem> sample_batch(const PairStore& store, const SamplingPolicy& policy,
                                    int batch, const NoiseSchedule& sched,
                                    const CodecConfig& codec, const AugmentConfig& aug,
                                    SeededRng& rng);

}  // namespace uwdiff
