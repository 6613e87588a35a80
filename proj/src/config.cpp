#include "uwdiff/config.hpp"

#include <fstream>

#include "uwdiff/error.hpp"

namespace uwdiff {

using json = nlohmann::json;

void ExperimentConfig::validate() const {
    if (epochs < 1) throw ConfigError("config: epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("config: batch_size must be >= 1");
    if (timesteps < 1) throw ConfigError("config: timesteps must be >= 1");
    if (image_height < 8 || image_width < 8)
        throw ConfigError("config: image size must be at least 8x8");
    if (schedule_kind != "cosine" && schedule_kind != "linear")
        throw ConfigError("config: schedule must be \"cosine\" or \"linear\"");
    if (!(eval_fraction >= 0.0 && eval_fraction < 1.0))
        throw ConfigError("config: eval_fraction must lie in [0,1)");
    if (refresh_period < 1) throw ConfigError("config: refresh_period must be >= 1");
    if (!(refresh_fraction > 0.0 && refresh_fraction <= 1.0))
        throw ConfigError("config: refresh_fraction must lie in (0,1]");
    if (checkpoint_every < 0) throw ConfigError("config: checkpoint_every must be >= 0");

    corruption.validate();
    codec.validate();
    unet.validate();
    policy.validate();
    sample.validate();
    augment.validate();
    if (lr.total_steps != 0) lr.validate();

    // The modules must agree on geometry and time.
    if (unet.latent_channels != codec.latent_channels(3))
        throw ConfigError("config: unet.latent_channels does not match the codec");
    if (unet.latent_height * codec.factor != image_height ||
        unet.latent_width * codec.factor != image_width)
        throw ConfigError("config: latent size does not match image size / codec factor");
    if (unet.t_max != timesteps)
        throw ConfigError("config: unet.t_max must equal timesteps");
    if (policy.restricted_t_hi > timesteps)
        throw ConfigError("config: policy range extends past timesteps");
    if (sample.steps > timesteps)
        throw ConfigError("config: sample.steps exceeds timesteps");
}

NoiseSchedule ExperimentConfig::make_schedule() const {
    if (schedule_kind == "linear") return linear_schedule(timesteps, beta_start, beta_end);
    return cosine_schedule(timesteps, cosine_s);
}

json ExperimentConfig::to_json() const {
    return json{{"seed", seed},
                {"data_dir", data_dir},
                {"raw_dir", raw_dir},
                {"epochs", epochs},
                {"batch_size", batch_size},
                {"image_height", image_height},
                {"image_width", image_width},
                {"schedule", schedule_kind},
                {"timesteps", timesteps},
                {"beta_start", beta_start},
                {"beta_end", beta_end},
                {"cosine_s", cosine_s},
                {"eval_fraction", eval_fraction},
                {"refresh_period", refresh_period},
                {"refresh_fraction", refresh_fraction},
                {"refresh_enabled", refresh_enabled},
                {"checkpoint_every", checkpoint_every},
                {"adamw", adamw.to_json()},
                {"lr", lr.to_json()},
                {"corruption", corruption.to_json()},
                {"codec", codec.to_json()},
                {"unet", unet.to_json()},
                {"policy", policy.to_json()},
                {"sample", sample.to_json()},
                {"augment", augment.to_json()}};
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
    require_keys_subset(j,
                        {"seed",           "data_dir",        "raw_dir",
                         "epochs",         "batch_size",      "image_height",
                         "image_width",    "schedule",        "timesteps",
                         "beta_start",     "beta_end",        "cosine_s",
                         "eval_fraction",  "refresh_period",  "refresh_fraction",
                         "refresh_enabled", "checkpoint_every", "adamw",
                         "lr",             "corruption",      "codec",
                         "unet",           "policy",          "sample",
                         "augment"},
                        "config");
    ExperimentConfig c;
    if (j.contains("seed")) c.seed = j.at("seed").get<uint64_t>();
    if (j.contains("data_dir")) c.data_dir = j.at("data_dir").get<std::string>();
    if (j.contains("raw_dir")) c.raw_dir = j.at("raw_dir").get<std::string>();
    if (j.contains("epochs")) c.epochs = j.at("epochs").get<int>();
    if (j.contains("batch_size")) c.batch_size = j.at("batch_size").get<int>();
    if (j.contains("image_height")) c.image_height = j.at("image_height").get<int>();
    if (j.contains("image_width")) c.image_width = j.at("image_width").get<int>();
    if (j.contains("schedule")) c.schedule_kind = j.at("schedule").get<std::string>();
    if (j.contains("timesteps")) c.timesteps = j.at("timesteps").get<int>();
    if (j.contains("beta_start")) c.beta_start = j.at("beta_start").get<double>();
    if (j.contains("beta_end")) c.beta_end = j.at("beta_end").get<double>();
    if (j.contains("cosine_s")) c.cosine_s = j.at("cosine_s").get<double>();
    if (j.contains("eval_fraction")) c.eval_fraction = j.at("eval_fraction").get<double>();
    if (j.contains("refresh_period")) c.refresh_period = j.at("refresh_period").get<int>();
    if (j.contains("refresh_fraction"))
        c.refresh_fraction = j.at("refresh_fraction").get<double>();
    if (j.contains("refresh_enabled"))
        c.refresh_enabled = j.at("refresh_enabled").get<bool>();
    if (j.contains("checkpoint_every"))
        c.checkpoint_every = j.at("checkpoint_every").get<int>();
    if (j.contains("adamw")) c.adamw = AdamWConfig::from_json(j.at("adamw"));
    if (j.contains("lr")) c.lr = LrSchedule::from_json(j.at("lr"));
    if (j.contains("corruption")) c.corruption = CorruptionConfig::from_json(j.at("corruption"));
    if (j.contains("codec")) c.codec = CodecConfig::from_json(j.at("codec"));
    if (j.contains("unet")) c.unet = UNetConfig::from_json(j.at("unet"));
    if (j.contains("policy")) c.policy = SamplingPolicy::from_json(j.at("policy"));
    if (j.contains("sample")) c.sample = SampleConfig::from_json(j.at("sample"));
    if (j.contains("augment")) c.augment = AugmentConfig::from_json(j.at("augment"));
    c.validate();
    return c;
}

ExperimentConfig ExperimentConfig::load_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot read config " + path);
    json j;
    try {
        f >> j;
    } catch (const json::exception& e) {
        throw ConfigError("config " + path + ": " + e.what());
    }
    return from_json(j);
}

void ExperimentConfig::save_file(const std::string& path) const {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("cannot write config " + path);
    f << to_json().dump(2) << "\n";
}

}  // namespace uwdiff
