#include "uwdiff/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>

#include "uwdiff/error.hpp"
#include "uwdiff/png_io.hpp"

namespace uwdiff {

namespace fs = std::filesystem;
using json = nlohmann::json;

const char* split_name(Split s) { return s == Split::train ? "train" : "eval"; }

Split split_from_name(const std::string& s) {
    if (s == "train") return Split::train;
    if (s == "eval") return Split::eval;
    throw ConfigError("manifest: unknown split \"" + s + "\"");
}

void PairManifest::validate() const {
    std::set<std::string> seen;
    for (const auto& e : entries) {
        if (e.id.empty()) throw ConfigError("manifest: empty id");
        if (!seen.insert(e.id).second)
            throw ConfigError("manifest: duplicate id \"" + e.id + "\"");
        if (!(e.quality_rank > 0.0 && e.quality_rank <= 1.0))
            throw ConfigError("manifest: quality_rank outside (0,1] for \"" + e.id + "\"");
    }
}

void PairManifest::save(const std::string& path) const {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("cannot write " + path);
    for (const auto& e : entries) {
        json j{{"id", e.id},
               {"clean_path", e.clean_path},
               {"corrupted_seed", e.corrupted_seed},
               {"quality_rank", e.quality_rank},
               {"split", split_name(e.split)}};
        f << j.dump() << "\n";
    }
    for (const auto& r : refresh_epoch_log) {
        json j{{"refresh_epoch", r.epoch}, {"ids", r.ids}};
        f << j.dump() << "\n";
    }
    if (!f) throw IoError("short write to " + path);
}

PairManifest PairManifest::load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot read " + path);
    PairManifest m;
    std::string line;
    size_t lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw ConfigError("manifest line " + std::to_string(lineno) + ": " + e.what());
        }
        if (j.contains("refresh_epoch")) {
            require_keys_subset(j, {"refresh_epoch", "ids"}, "manifest refresh line");
            RefreshLogEntry r;
            r.epoch = j.at("refresh_epoch").get<int>();
            r.ids = j.at("ids").get<std::vector<std::string>>();
            m.refresh_epoch_log.push_back(std::move(r));
        } else {
            require_keys_subset(
                j, {"id", "clean_path", "corrupted_seed", "quality_rank", "split"},
                "manifest entry");
            ManifestEntry e;
            e.id = j.at("id").get<std::string>();
            e.clean_path = j.at("clean_path").get<std::string>();
            e.corrupted_seed = j.at("corrupted_seed").get<uint64_t>();
            e.quality_rank = j.at("quality_rank").get<double>();
            e.split = split_from_name(j.at("split").get<std::string>());
            m.entries.push_back(std::move(e));
        }
    }
    m.validate();
    return m;
}

PairManifest make_manifest(const std::vector<std::string>& ids,
                           const std::vector<std::string>& clean_paths,
                           const std::vector<double>& sharpness, double eval_fraction,
                           uint64_t seed) {
    const size_t n = ids.size();
    if (clean_paths.size() != n || sharpness.size() != n)
        throw ConfigError("make_manifest: mismatched column lengths");
    if (n == 0) throw ConfigError("make_manifest: no entries");
    if (!(eval_fraction >= 0.0 && eval_fraction < 1.0))
        throw ConfigError("make_manifest: eval_fraction must lie in [0,1)");

    PairManifest m;
    m.entries.resize(n);
    for (size_t i = 0; i < n; ++i) {
        m.entries[i].id = ids[i];
        m.entries[i].clean_path = clean_paths[i];
        m.entries[i].split = Split::train;
    }
    const size_t n_eval = static_cast<size_t>(std::llround(eval_fraction * static_cast<double>(n)));
    SeededRng rng(seed);
    const std::vector<size_t> perm = rng.permutation(n);
    for (size_t k = 0; k < n_eval; ++k) m.entries[perm[k]].split = Split::eval;

    // Percentile rank within each split; ties broken by position so the
    // assignment is deterministic.
    for (Split s : {Split::train, Split::eval}) {
        std::vector<size_t> idx;
        for (size_t i = 0; i < n; ++i)
            if (m.entries[i].split == s) idx.push_back(i);
        std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) {
            if (sharpness[a] != sharpness[b]) return sharpness[a] < sharpness[b];
            return a < b;
        });
        for (size_t pos = 0; pos < idx.size(); ++pos)
            m.entries[idx[pos]].quality_rank =
                static_cast<double>(pos + 1) / static_cast<double>(idx.size());
    }
    m.validate();
    return m;
}

// ---- augmentation ----

AugmentConfig AugmentConfig::identity() {
    AugmentConfig c;
    c.flip_p = 0.0;
    c.brightness = {0.0, 0.0};
    c.saturation = {1.0, 1.0};
    c.contrast = {1.0, 1.0};
    c.sharpness = {0.0, 0.0};
    return c;
}

void AugmentConfig::validate() const {
    if (!(flip_p >= 0.0 && flip_p <= 1.0))
        throw ConfigError("augment: flip_p must lie in [0,1]");
    for (const auto* iv : {&brightness, &saturation, &contrast, &sharpness})
        if (!(iv->lo <= iv->hi)) throw ConfigError("augment: empty jitter interval");
    if (saturation.lo < 0.0) throw ConfigError("augment: saturation must be >= 0");
    if (contrast.lo < 0.0) throw ConfigError("augment: contrast must be >= 0");
}

json AugmentConfig::to_json() const {
    auto iv = [](const Interval& i) { return json::array({i.lo, i.hi}); };
    return json{{"flip_p", flip_p},
                {"brightness", iv(brightness)},
                {"saturation", iv(saturation)},
                {"contrast", iv(contrast)},
                {"sharpness", iv(sharpness)}};
}

AugmentConfig AugmentConfig::from_json(const json& j) {
    require_keys_subset(j, {"flip_p", "brightness", "saturation", "contrast", "sharpness"},
                        "augment");
    AugmentConfig c;
    if (j.contains("flip_p")) c.flip_p = j.at("flip_p").get<double>();
    if (j.contains("brightness")) c.brightness = interval_from_json(j.at("brightness"), "augment.brightness");
    if (j.contains("saturation")) c.saturation = interval_from_json(j.at("saturation"), "augment.saturation");
    if (j.contains("contrast")) c.contrast = interval_from_json(j.at("contrast"), "augment.contrast");
    if (j.contains("sharpness")) c.sharpness = interval_from_json(j.at("sharpness"), "augment.sharpness");
    c.validate();
    return c;
}

AugmentParams draw_augment(const AugmentConfig& cfg, SeededRng& rng) {
    cfg.validate();
    AugmentParams p;
    p.flip = rng.bernoulli(cfg.flip_p);
    p.brightness = rng.uniform(cfg.brightness.lo, cfg.brightness.hi);
    p.saturation = rng.uniform(cfg.saturation.lo, cfg.saturation.hi);
    p.contrast = rng.uniform(cfg.contrast.lo, cfg.contrast.hi);
    p.sharpness = rng.uniform(cfg.sharpness.lo, cfg.sharpness.hi);
    return p;
}

Image apply_augment(const Image& img, const AugmentParams& p) {
    Image out = img;
    if (p.flip) {
        for (int y = 0; y < img.height; ++y)
            for (int x = 0; x < img.width; ++x)
                for (int c = 0; c < img.channels; ++c)
                    out.at(y, x, c) = img.at(y, img.width - 1 - x, c);
    }
    const bool photometric = p.brightness != 0.0 || p.saturation != 1.0 ||
                             p.contrast != 1.0 || p.sharpness != 0.0;
    if (!photometric) return out;

    if (p.brightness != 0.0)
        for (float& v : out.data)
            v = static_cast<float>(v + p.brightness);
    if (p.saturation != 1.0 && out.channels == 3) {
        for (int y = 0; y < out.height; ++y)
            for (int x = 0; x < out.width; ++x) {
                const double gray = 0.299 * out.at(y, x, 0) + 0.587 * out.at(y, x, 1) +
                                    0.114 * out.at(y, x, 2);
                for (int c = 0; c < 3; ++c)
                    out.at(y, x, c) =
                        static_cast<float>(gray + p.saturation * (out.at(y, x, c) - gray));
            }
    }
    if (p.contrast != 1.0)
        for (float& v : out.data)
            v = static_cast<float>(0.5 + p.contrast * (v - 0.5));
    if (p.sharpness != 0.0) {
        const Image blur = gaussian_blur(out, 1.0);
        for (size_t i = 0; i < out.data.size(); ++i)
            out.data[i] = static_cast<float>(out.data[i] +
                                             p.sharpness * (out.data[i] - blur.data[i]));
    }
    clamp01(out);
    return out;
}

Image augment(const Image& img, const AugmentConfig& cfg, SeededRng& rng) {
    return apply_augment(img, draw_augment(cfg, rng));
}

// ---- sampling policy ----

void SamplingPolicy::validate() const {
    if (!(top_fraction > 0.0 && top_fraction <= 1.0))
        throw ConfigError("policy: top_fraction must lie in (0,1]");
    if (restricted_t_lo < 0 || restricted_t_hi <= restricted_t_lo)
        throw ConfigError("policy: restricted range must satisfy 0 <= lo < hi");
    if (!(condition_drop_p >= 0.0 && condition_drop_p <= 1.0))
        throw ConfigError("policy: condition_drop_p must lie in [0,1]");
}

json SamplingPolicy::to_json() const {
    return json{{"top_fraction", top_fraction},
                {"restricted_t_lo", restricted_t_lo},
                {"restricted_t_hi", restricted_t_hi},
                {"condition_drop_p", condition_drop_p}};
}

SamplingPolicy SamplingPolicy::from_json(const json& j) {
    require_keys_subset(
        j, {"top_fraction", "restricted_t_lo", "restricted_t_hi", "condition_drop_p"},
        "policy");
    SamplingPolicy p;
    if (j.contains("top_fraction")) p.top_fraction = j.at("top_fraction").get<double>();
    if (j.contains("restricted_t_lo")) p.restricted_t_lo = j.at("restricted_t_lo").get<int>();
    if (j.contains("restricted_t_hi")) p.restricted_t_hi = j.at("restricted_t_hi").get<int>();
    if (j.contains("condition_drop_p"))
        p.condition_drop_p = j.at("condition_drop_p").get<double>();
    p.validate();
    return p;
}

// ---- pair store ----

PairStore PairStore::build(PairManifest manifest, const CorruptionConfig& cfg,
                           const std::string& dir, uint64_t epoch0_seed) {
    manifest.validate();
    cfg.validate();
    if (manifest.entries.empty()) throw ConfigError("pair store: empty manifest");

    PairStore store;
    store.dir_ = dir;
    store.manifest_ = std::move(manifest);
    store.corr_cfg_ = cfg;
    store.clean_cache_.resize(store.manifest_.entries.size());
    store.corr_cache_.resize(store.manifest_.entries.size());

    fs::create_directories(fs::path(dir) / "corrupted");

    std::string unreadable;
    for (size_t i = 0; i < store.manifest_.entries.size(); ++i) {
        try {
            (void)store.clean(i);
        } catch (const Error& e) {
            if (!unreadable.empty()) unreadable += ", ";
            unreadable += store.manifest_.entries[i].id;
        }
    }
    if (!unreadable.empty())
        throw IoError("pair store: unreadable clean files: " + unreadable);

    for (size_t i = 0; i < store.manifest_.entries.size(); ++i) {
        store.manifest_.entries[i].corrupted_seed = derive_seed(epoch0_seed, kStreamCorrupt, i);
        store.write_corrupted(i);
    }
    store.manifest_.save((fs::path(dir) / "manifest.jsonl").string());
    {
        std::ofstream f((fs::path(dir) / "corruption.json").string(), std::ios::trunc);
        if (!f) throw IoError("cannot write corruption.json");
        f << cfg.to_json().dump(2) << "\n";
    }
    return store;
}

PairStore PairStore::open(const std::string& dir) {
    PairStore store;
    store.dir_ = dir;
    store.manifest_ = PairManifest::load((fs::path(dir) / "manifest.jsonl").string());
    const std::string corr_path = (fs::path(dir) / "corruption.json").string();
    std::ifstream f(corr_path);
    if (!f) throw IoError("cannot read " + corr_path);
    json j;
    try {
        f >> j;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("corruption.json: ") + e.what());
    }
    store.corr_cfg_ = CorruptionConfig::from_json(j);
    store.clean_cache_.resize(store.manifest_.entries.size());
    store.corr_cache_.resize(store.manifest_.entries.size());
    return store;
}

std::string PairStore::clean_abs_path(size_t i) const {
    const fs::path p(manifest_.entries[i].clean_path);
    if (p.is_absolute()) return p.string();
    return (fs::path(dir_) / p).string();
}

std::string PairStore::corrupted_path(size_t i) const {
    return (fs::path(dir_) / "corrupted" / (manifest_.entries[i].id + ".png")).string();
}

const Image& PairStore::clean(size_t i) const {
    if (!clean_cache_[i])
        clean_cache_[i] = std::make_unique<Image>(read_png(clean_abs_path(i)));
    return *clean_cache_[i];
}

const Image& PairStore::corrupted(size_t i) const {
    if (!corr_cache_[i])
        corr_cache_[i] = std::make_unique<Image>(read_png(corrupted_path(i)));
    return *corr_cache_[i];
}

void PairStore::write_corrupted(size_t i) {
    Image img = corrupt(clean(i), corr_cfg_, manifest_.entries[i].corrupted_seed);
    write_png(corrupted_path(i), img);
    // The PNG on disk is canonical: dropping the float-precision copy keeps a
    // freshly built store bit-identical to one reopened from disk.
    corr_cache_[i].reset();
}

std::vector<size_t> PairStore::indices(Split s) const {
    std::vector<size_t> out;
    for (size_t i = 0; i < manifest_.entries.size(); ++i)
        if (manifest_.entries[i].split == s) out.push_back(i);
    return out;
}

std::vector<std::string> PairStore::refresh(double fraction, int epoch, SeededRng& rng) {
    if (!(fraction > 0.0 && fraction <= 1.0))
        throw ConfigError("refresh: fraction must lie in (0,1]");
    const std::vector<size_t> train = indices(Split::train);
    if (train.empty()) throw ConfigError("refresh: no train entries");
    const size_t k = static_cast<size_t>(
        std::ceil(fraction * static_cast<double>(train.size())));

    std::vector<size_t> picked_pos = rng.sample_without_replacement(train.size(), k);
    std::vector<size_t> picked;
    picked.reserve(k);
    for (size_t p : picked_pos) picked.push_back(train[p]);
    std::sort(picked.begin(), picked.end());

    std::vector<std::string> ids;
    ids.reserve(k);
    for (size_t i : picked) {
        manifest_.entries[i].corrupted_seed = rng.next_u64();
        write_corrupted(i);
        ids.push_back(manifest_.entries[i].id);
    }
    manifest_.refresh_epoch_log.push_back({epoch, ids});
    manifest_.save((fs::path(dir_) / "manifest.jsonl").string());
    return ids;
}

// ---- batch sampling ----

std::vector<DrawPlan> draw_plan(const PairManifest& manifest, const SamplingPolicy& policy,
                                int batch, int T, SeededRng& rng) {
    policy.validate();
    if (batch < 1) throw ConfigError("sample_batch: batch must be >= 1");
    if (manifest.entries.empty()) throw ConfigError("sample_batch: empty store");
    if (policy.restricted_t_hi > T)
        throw ConfigError("policy: restricted range extends past T");

    std::vector<size_t> train_all, train_top;
    for (size_t i = 0; i < manifest.entries.size(); ++i) {
        const auto& e = manifest.entries[i];
        if (e.split != Split::train) continue;
        train_all.push_back(i);
        if (policy.in_top_tier(e.quality_rank)) train_top.push_back(i);
    }
    if (train_all.empty()) throw ConfigError("sample_batch: no train entries");
    if (train_top.empty()) throw ConfigError("sample_batch: empty quality tier");

    std::vector<DrawPlan> plan(static_cast<size_t>(batch));
    for (auto& d : plan) {
        d.t = static_cast<int>(rng.uniform_int(1, T));
        const auto& pool = policy.unrestricted_at(d.t) ? train_all : train_top;
        d.entry = pool[static_cast<size_t>(
            rng.uniform_int(0, static_cast<int64_t>(pool.size()) - 1))];
        d.drop_cond = rng.bernoulli(policy.condition_drop_p);
    }
    return plan;
}

std::vector<BatchItem> sample_batch(const PairStore& store, const SamplingPolicy& policy,
                                    int batch, const NoiseSchedule& sched,
                                    const CodecConfig& codec, const AugmentConfig& aug,
                                    SeededRng& rng) {
    const std::vector<DrawPlan> plan = draw_plan(store.manifest(), policy, batch, sched.T, rng);
    std::vector<BatchItem> items;
    items.reserve(plan.size());
    for (const auto& d : plan) {
        BatchItem it;
        it.t = d.t;
        it.cond_null = d.drop_cond;
        it.entry = d.entry;
        const AugmentParams p = draw_augment(aug, rng);
        it.x0 = encode(apply_augment(store.clean(d.entry), p), codec);
        it.cond = encode(apply_augment(store.corrupted(d.entry), p), codec);
        it.eps = Tensor<float>(it.x0.shape());
        for (size_t e = 0; e < it.eps.numel(); ++e)
            it.eps[e] = static_cast<float>(rng.normal());
        items.push_back(std::move(it));
    }
    return items;
}

}  // namespace uwdiff
