#include "uwdiff/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "uwdiff/diffusion.hpp"
#include "uwdiff/error.hpp"

namespace uwdiff {

namespace fs = std::filesystem;
using json = nlohmann::json;

int64_t steps_per_epoch(size_t n_train, int batch_size) {
    if (n_train == 0) throw ConfigError("train: no train entries");
    return static_cast<int64_t>((n_train + static_cast<size_t>(batch_size) - 1) /
                                static_cast<size_t>(batch_size));
}

namespace {

Checkpoint make_train_checkpoint(const ExperimentConfig& cfg, UNet<float>& net,
                                 AdamW<float>& opt, int64_t step, int64_t spe) {
    Checkpoint ck;
    ck.meta = json{{"config", cfg.to_json()},
                   {"step", step},
                   {"epochs_completed", step / spe},
                   {"adam_steps", opt.steps_taken()}};
    const auto params = net.params();
    for (const auto& p : params) ck.tensors.emplace_back(*p.name, *p.v);
    auto& slots = opt.slots();
    if (!slots.empty()) {
        for (size_t i = 0; i < params.size(); ++i) {
            ck.tensors.emplace_back("adam.m." + *params[i].name, slots[i].m);
            ck.tensors.emplace_back("adam.v." + *params[i].name, slots[i].v);
        }
    }
    return ck;
}

void restore_params(UNet<float>& net, const Checkpoint& ck) {
    for (const auto& p : net.params()) {
        const Tensor<float>* t = ck.find(*p.name);
        if (!t) throw DecodeError("checkpoint: missing tensor " + *p.name);
        if (!t->same_shape(*p.v))
            throw DecodeError("checkpoint: shape mismatch for " + *p.name);
        *p.v = *t;
    }
}

void restore_adam(AdamW<float>& opt, UNet<float>& net, const Checkpoint& ck) {
    const auto params = net.params();
    auto& slots = opt.slots();
    slots.resize(params.size());
    for (size_t i = 0; i < params.size(); ++i) {
        const Tensor<float>* m = ck.find("adam.m." + *params[i].name);
        const Tensor<float>* v = ck.find("adam.v." + *params[i].name);
        if (!m || !v)
            throw DecodeError("checkpoint: missing optimizer state for " + *params[i].name);
        slots[i].m = *m;
        slots[i].v = *v;
    }
    opt.set_steps_taken(ck.meta.at("adam_steps").get<int64_t>());
}

// Keeps the header and rows with step < start_step so a resumed run appends
// exactly where the checkpointed one left off.
void trim_loss_csv(const std::string& path, int64_t start_step) {
    if (!fs::exists(path)) return;
    std::ifstream in(path);
    std::vector<std::string> keep;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (first) {
            keep.push_back(line);
            first = false;
            continue;
        }
        if (line.empty()) continue;
        const int64_t step = std::strtoll(line.c_str(), nullptr, 10);
        if (step < start_step) keep.push_back(line);
    }
    in.close();
    std::ofstream out(path, std::ios::trunc);
    for (const auto& l : keep) out << l << "\n";
}

}  // namespace

TrainReport train(const ExperimentConfig& cfg_in, PairStore& store, const TrainOptions& opt) {
    ExperimentConfig cfg = cfg_in;
    cfg.validate();
    if (opt.out_dir.empty()) throw ConfigError("train: out_dir required");
    fs::create_directories(opt.out_dir);

    const std::vector<size_t> train_idx = store.indices(Split::train);
    const int64_t spe = steps_per_epoch(train_idx.size(), cfg.batch_size);
    const int64_t planned_total = spe * cfg.epochs;
    if (cfg.lr.total_steps == 0) cfg.lr.total_steps = static_cast<int>(planned_total);
    cfg.lr.validate();

    const NoiseSchedule sched = cfg.make_schedule();
    UNet<float> net(cfg.unet, cfg.seed);
    AdamW<float> adamw(cfg.adamw);
    int64_t step = 0;

    if (!opt.resume_from.empty()) {
        const Checkpoint ck = load_checkpoint(opt.resume_from);
        const ExperimentConfig ck_cfg = ExperimentConfig::from_json(ck.meta.at("config"));
        ExperimentConfig want = cfg_in;
        if (ck_cfg.to_json() != want.to_json())
            throw ConfigError("train: checkpoint config does not match this config");
        restore_params(net, ck);
        restore_adam(adamw, net, ck);
        step = ck.meta.at("step").get<int64_t>();
    }

    const std::string csv_path = (fs::path(opt.out_dir) / "loss.csv").string();
    trim_loss_csv(csv_path, step);
    std::ofstream csv;
    if (step == 0 || !fs::exists(csv_path)) {
        csv.open(csv_path, std::ios::trunc);
        csv << "step,epoch,loss,lr\n";
    } else {
        csv.open(csv_path, std::ios::app);
    }
    if (!csv) throw IoError("cannot write " + csv_path);

    const int64_t stop = (opt.max_steps >= 0 && opt.max_steps < planned_total)
                             ? opt.max_steps
                             : planned_total;

    TrainReport report;
    const auto params = net.params();
    const size_t out_numel = static_cast<size_t>(cfg.batch_size) *
                             Tensor<float>::numel_of({cfg.unet.latent_channels,
                                                      cfg.unet.latent_height,
                                                      cfg.unet.latent_width});

    while (step < stop) {
        const int64_t epoch = step / spe + 1;  // 1-based
        if (step % spe == 0 && cfg.refresh_enabled && epoch % cfg.refresh_period == 0) {
            SeededRng rng(derive_seed(cfg.seed, kStreamRefresh, static_cast<uint64_t>(epoch)));
            store.refresh(cfg.refresh_fraction, static_cast<int>(epoch), rng);
        }

        SeededRng rng(derive_seed(cfg.seed, kStreamBatch, static_cast<uint64_t>(step)));
        const std::vector<BatchItem> items = sample_batch(
            store, cfg.policy, cfg.batch_size, sched, cfg.codec, cfg.augment, rng);

        const int C = cfg.unet.latent_channels, H = cfg.unet.latent_height,
                  W = cfg.unet.latent_width;
        const int N = cfg.batch_size;
        Tensor<float> x_t({N, C, H, W}), cond({N, C, H, W}), target({N, C, H, W});
        std::vector<uint8_t> nulls(static_cast<size_t>(N));
        std::vector<int> ts(static_cast<size_t>(N));
        const size_t stride = static_cast<size_t>(C) * H * W;
        for (int n = 0; n < N; ++n) {
            const BatchItem& it = items[static_cast<size_t>(n)];
            const Tensor<float> xt = q_sample(it.x0, it.t, it.eps, sched);
            const Tensor<float> v = velocity(it.x0, it.eps, it.t, sched);
            std::copy(xt.data(), xt.data() + stride, x_t.data() + n * stride);
            std::copy(it.cond.data(), it.cond.data() + stride, cond.data() + n * stride);
            std::copy(v.data(), v.data() + stride, target.data() + n * stride);
            nulls[static_cast<size_t>(n)] = it.cond_null ? 1 : 0;
            ts[static_cast<size_t>(n)] = it.t;
        }

        const Tensor<float> vhat = net.forward(x_t, cond, nulls, ts, /*train=*/true);
        const double loss = v_loss(vhat, target);
        if (!std::isfinite(loss)) {
            const std::string path = (fs::path(opt.out_dir) / "last_good.ckpt").string();
            save_checkpoint(path, make_train_checkpoint(cfg_in, net, adamw, step, spe));
            throw NumericError("train: non-finite loss at step " + std::to_string(step) +
                               "; last good state saved to " + path);
        }

        Tensor<float> dout({N, C, H, W});
        const float scale = 2.0f / static_cast<float>(out_numel);
        for (size_t i = 0; i < dout.numel(); ++i)
            dout[i] = scale * (vhat[i] - target[i]);
        net.zero_grad();
        net.backward(dout);
        for (const auto& p : params)
            for (size_t e = 0; e < p.g->numel(); ++e)
                if (!std::isfinite((*p.g)[e])) {
                    const std::string path =
                        (fs::path(opt.out_dir) / "last_good.ckpt").string();
                    save_checkpoint(path,
                                    make_train_checkpoint(cfg_in, net, adamw, step, spe));
                    throw NumericError("train: non-finite gradient in " + *p.name +
                                       " at step " + std::to_string(step));
                }

        const double lr = cfg.lr.lr_at(static_cast<int>(step));
        adamw.step(params, lr);

        char row[128];
        std::snprintf(row, sizeof(row), "%lld,%lld,%.9e,%.9e",
                      static_cast<long long>(step), static_cast<long long>(epoch), loss, lr);
        csv << row << "\n";
        csv.flush();
        report.losses.push_back(loss);
        ++step;

        if (cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0) {
            const std::string path =
                (fs::path(opt.out_dir) / ("ckpt_" + std::to_string(step) + ".ckpt")).string();
            save_checkpoint(path, make_train_checkpoint(cfg_in, net, adamw, step, spe));
        }
        if (!opt.quiet && step % 10 == 0)
            std::fprintf(stderr, "step %lld/%lld loss %.6f\n",
                         static_cast<long long>(step), static_cast<long long>(stop), loss);
    }

    report.steps_done = step;
    report.epochs_completed = static_cast<int>(step / spe);
    report.final_checkpoint = (fs::path(opt.out_dir) / "final.ckpt").string();
    report.loss_csv = csv_path;
    save_checkpoint(report.final_checkpoint,
                    make_train_checkpoint(cfg_in, net, adamw, step, spe));
    return report;
}

LoadedModel load_model(const std::string& checkpoint_path) {
    const Checkpoint ck = load_checkpoint(checkpoint_path);
    LoadedModel m;
    m.cfg = ExperimentConfig::from_json(ck.meta.at("config"));
    m.net = std::make_unique<UNet<float>>(m.cfg.unet, m.cfg.seed);
    restore_params(*m.net, ck);
    m.step = ck.meta.at("step").get<int64_t>();
    return m;
}

}  // namespace uwdiff
