#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "uwdiff/checkpoint.hpp"
#include "uwdiff/config.hpp"
#include "uwdiff/dataset.hpp"
#include "uwdiff/optim.hpp"
#include "uwdiff/unet.hpp"

namespace uwdiff {

struct TrainOptions {
    std::string out_dir;
    int64_t max_steps = -1;    // stop after this many total steps when >= 0
    std::string resume_from;   // checkpoint path; empty starts fresh
    bool quiet = true;
};

struct TrainReport {
    int64_t steps_done = 0;       // total optimizer steps (including resumed)
    int epochs_completed = 0;
    std::vector<double> losses;   // losses of the steps executed by this call
    std::string final_checkpoint;
    std::string loss_csv;
};

// Runs the training loop: per step, a seeded batch (augment, pair, encode,
// noise), one forward/backward, AdamW. All randomness is derived from
// (config seed, purpose, step/epoch counters), so a resumed run replays the
// interrupted one bit-exactly.
TrainReport train(const ExperimentConfig& cfg, PairStore& store, const TrainOptions& opt);

// Network restored from a checkpoint, for eval/enhance/inpaint.
struct LoadedModel {
    ExperimentConfig cfg;
    std::unique_ptr<UNet<float>> net;
    int64_t step = 0;
};

LoadedModel load_model(const std::string& checkpoint_path);

// Steps per nominal epoch: ceil(n_train / batch_size).
int64_t steps_per_epoch(size_t n_train, int batch_size);

}  // namespace uwdiff
