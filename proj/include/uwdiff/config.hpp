#pragma once

#include <cstdint>
#include <string>

#include "json.hpp"
#include "uwdiff/codec.hpp"
#include "uwdiff/corruption.hpp"
#include "uwdiff/dataset.hpp"
#include "uwdiff/optim.hpp"
#include "uwdiff/sampler.hpp"
#include "uwdiff/schedule.hpp"
#include "uwdiff/unet.hpp"

namespace uwdiff {

// One JSON document describing a full run. A checkpoint plus its config
// reproduces the run; unknown keys are rejected everywhere.
struct ExperimentConfig {
    uint64_t seed = 0;
    std::string data_dir;  // pair store directory
    std::string raw_dir;   // clean source images for make-pairs

    int epochs = 15000;
    int batch_size = 64;
    int image_height = 512;
    int image_width = 768;

    std::string schedule_kind = "cosine";  // "linear" or "cosine"
    int timesteps = 1000;
    double beta_start = 1e-4;
    double beta_end = 0.02;
    double cosine_s = 0.008;

    double eval_fraction = 0.1;
    int refresh_period = 10;       // epochs
    double refresh_fraction = 0.1;
    bool refresh_enabled = true;
    int checkpoint_every = 0;  // steps; 0 = final checkpoint only

    AdamWConfig adamw;
    LrSchedule lr;  // total_steps 0 = derive from epochs at train time
    CorruptionConfig corruption;
    CodecConfig codec;
    UNetConfig unet;
    SamplingPolicy policy;
    SampleConfig sample;
    AugmentConfig augment;

    void validate() const;
    NoiseSchedule make_schedule() const;

    nlohmann::json to_json() const;
    static ExperimentConfig from_json(const nlohmann::json& j);
    static ExperimentConfig load_file(const std::string& path);
    void save_file(const std::string& path) const;
};

}  // namespace uwdiff
