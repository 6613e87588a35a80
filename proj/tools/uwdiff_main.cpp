#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "uwdiff/checkpoint.hpp"
#include "uwdiff/codec.hpp"
#include "uwdiff/config.hpp"
#include "uwdiff/corruption.hpp"
#include "uwdiff/dataset.hpp"
#include "uwdiff/diffusion.hpp"
#include "uwdiff/error.hpp"
#include "uwdiff/image.hpp"
#include "uwdiff/png_io.hpp"
#include "uwdiff/report.hpp"
#include "uwdiff/sampler.hpp"
#include "uwdiff/schedule.hpp"
#include "uwdiff/toygen.hpp"
#include "uwdiff/trainer.hpp"
#include "uwdiff/unet.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace uwdiff;

namespace {

std::vector<std::string> list_pngs(const std::string& dir) {
    if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir);
    std::vector<std::string> out;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        std::string ext = entry.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(),
                       [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
        if (ext == ".png") out.push_back(entry.path().string());
    }
    std::sort(out.begin(), out.end());
    return out;
}

void write_sidecar(const std::string& path, const json& j) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("cannot write " + path);
    f << j.dump(2) << "\n";
}

CorruptionConfig load_corruption_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot read config " + path);
    json j;
    try {
        f >> j;
    } catch (const json::exception& e) {
        throw ConfigError("config " + path + ": " + e.what());
    }
    return CorruptionConfig::from_json(j);
}

// ---- subcommand bodies ----

int cmd_toygen(const std::string& out_dir, int count, int height, int width,
               uint64_t seed) {
    const ToyDataset ds = generate_toy_dataset(out_dir, count, height, width, seed);
    write_sidecar((fs::path(out_dir) / "sidecar.json").string(),
                  json{{"command", "toygen"},
                       {"out", out_dir},
                       {"count", count},
                       {"height", height},
                       {"width", width},
                       {"seed", seed}});
    std::printf("wrote %zu images to %s\n", ds.ids.size(), out_dir.c_str());
    return 0;
}

int cmd_corrupt(const std::string& in_dir, const std::string& out_dir,
                const std::string& config_path, double severity, uint64_t seed) {
    CorruptionConfig cfg;
    if (!config_path.empty()) cfg = load_corruption_config(config_path);
    if (severity >= 0.0) cfg.severity = severity;
    cfg.validate();

    const std::vector<std::string> files = list_pngs(in_dir);
    if (files.empty()) throw ConfigError("no input images");

    std::vector<std::string> ids, paths;
    std::vector<double> sharp;
    for (const auto& f : files) {
        ids.push_back(fs::path(f).stem().string());
        paths.push_back(fs::absolute(f).string());
        sharp.push_back(sharpness_score(read_png(f)));
    }
    PairManifest manifest = make_manifest(ids, paths, sharp, /*eval_fraction=*/0.0, seed);
    PairStore::build(std::move(manifest), cfg, out_dir, seed);
    write_sidecar((fs::path(out_dir) / "sidecar.json").string(),
                  json{{"command", "corrupt"},
                       {"in", in_dir},
                       {"out", out_dir},
                       {"corruption", cfg.to_json()},
                       {"seed", seed}});
    std::printf("corrupted %zu images into %s\n", files.size(), out_dir.c_str());
    return 0;
}

int cmd_make_pairs(const std::string& config_path) {
    const ExperimentConfig cfg = ExperimentConfig::load_file(config_path);
    if (cfg.raw_dir.empty()) throw ConfigError("config: raw_dir required for make-pairs");
    if (cfg.data_dir.empty()) throw ConfigError("config: data_dir required for make-pairs");

    const std::vector<std::string> files = list_pngs(cfg.raw_dir);
    if (files.empty()) throw ConfigError("no input images");

    fs::create_directories(fs::path(cfg.data_dir) / "clean");
    std::vector<std::string> ids, rel_paths;
    std::vector<double> sharp;
    for (const auto& f : files) {
        const std::string id = fs::path(f).stem().string();
        const Image resized = crop_resize(read_png(f), cfg.image_height, cfg.image_width);
        const std::string rel = (fs::path("clean") / (id + ".png")).string();
        write_png((fs::path(cfg.data_dir) / rel).string(), resized);
        ids.push_back(id);
        rel_paths.push_back(rel);
        sharp.push_back(sharpness_score(resized));
    }
    PairManifest manifest = make_manifest(ids, rel_paths, sharp, cfg.eval_fraction,
                                          derive_seed(cfg.seed, kStreamInit, 1));
    const PairStore store =
        PairStore::build(std::move(manifest), cfg.corruption, cfg.data_dir, cfg.seed);
    write_sidecar((fs::path(cfg.data_dir) / "sidecar.json").string(),
                  json{{"command", "make-pairs"}, {"config", cfg.to_json()}});
    std::printf("pair store at %s: %zu entries (%zu eval)\n", cfg.data_dir.c_str(),
                store.size(), store.indices(Split::eval).size());
    return 0;
}

int cmd_train(const std::string& config_path, const std::string& out_dir, int64_t steps,
              const std::string& resume, bool verbose) {
    const ExperimentConfig cfg = ExperimentConfig::load_file(config_path);
    PairStore store = PairStore::open(cfg.data_dir);
    TrainOptions opt;
    opt.out_dir = out_dir;
    opt.max_steps = steps;
    opt.resume_from = resume;
    opt.quiet = !verbose;
    fs::create_directories(out_dir);
    write_sidecar((fs::path(out_dir) / "sidecar.json").string(),
                  json{{"command", "train"},
                       {"config", cfg.to_json()},
                       {"out", out_dir},
                       {"steps", steps},
                       {"resume", resume}});
    const TrainReport rep = train(cfg, store, opt);
    std::printf("trained %lld steps (%d epochs); final checkpoint %s\n",
                static_cast<long long>(rep.steps_done), rep.epochs_completed,
                rep.final_checkpoint.c_str());
    return 0;
}

int cmd_eval(const std::string& config_path, const std::string& ckpt_path,
             const std::string& out_dir, int limit, int steps_override,
             double guidance_override, int grid_rows) {
    const ExperimentConfig cfg = ExperimentConfig::load_file(config_path);
    LoadedModel model = load_model(ckpt_path);
    if (model.cfg.to_json() != cfg.to_json())
        throw ConfigError("eval: checkpoint config does not match --config");

    PairStore store = PairStore::open(cfg.data_dir);
    const std::vector<size_t> eval_idx = store.indices(Split::eval);
    if (eval_idx.empty()) throw ConfigError("eval split empty");

    SampleConfig sc = cfg.sample;
    if (steps_override > 0) sc.steps = steps_override;
    if (guidance_override >= 0.0) sc.guidance_scale = guidance_override;
    sc.validate();

    const NoiseSchedule sched = cfg.make_schedule();
    UNetVelocity vel(*model.net);
    fs::create_directories(out_dir);

    const size_t n = std::min(static_cast<size_t>(limit), eval_idx.size());
    std::vector<EvalRow> rows;
    std::vector<Image> grid_lines;
    for (size_t k = 0; k < n; ++k) {
        const size_t i = eval_idx[k];
        const Image& gt = store.clean(i);
        SampleConfig per = sc;
        per.seed = derive_seed(sc.seed, kStreamSample, static_cast<uint64_t>(k));
        const EnhanceResult res = enhance(gt, vel, sched, per, cfg.corruption, cfg.codec);
        rows.push_back(eval_metrics(store.manifest().entries[i].id, res.condition,
                                    res.output, gt));
        if (static_cast<int>(grid_lines.size()) < grid_rows)
            grid_lines.push_back(hstack({res.condition, res.output, gt}));
        std::printf("eval %s: psnr cond %.3f -> out %.3f\n",
                    store.manifest().entries[i].id.c_str(), rows.back().psnr_cond,
                    rows.back().psnr_out);
    }
    const std::string csv_path = (fs::path(out_dir) / "metrics.csv").string();
    write_eval_csv(csv_path, rows);
    if (!grid_lines.empty())
        write_png((fs::path(out_dir) / "eval_grid.png").string(), vstack(grid_lines));
    write_sidecar((fs::path(out_dir) / "sidecar.json").string(),
                  json{{"command", "eval"},
                       {"config", cfg.to_json()},
                       {"checkpoint", ckpt_path},
                       {"limit", limit},
                       {"steps", sc.steps},
                       {"guidance", sc.guidance_scale}});
    const EvalRow agg = aggregate_rows(rows);
    std::printf("evaluated %zu images: mean psnr cond %.3f -> out %.3f (%s)\n", n,
                agg.psnr_cond, agg.psnr_out, csv_path.c_str());
    return 0;
}

int cmd_enhance(const std::string& config_path, const std::string& ckpt_path,
                const std::string& in_path, const std::string& out_path,
                const std::string& strategy, double guidance, int steps, int64_t seed) {
    const ExperimentConfig cfg = ExperimentConfig::load_file(config_path);
    LoadedModel model = load_model(ckpt_path);
    if (model.cfg.to_json() != cfg.to_json())
        throw ConfigError("enhance: checkpoint config does not match --config");

    SampleConfig sc = cfg.sample;
    if (!strategy.empty()) sc.strategy = strategy_from_name(strategy);
    if (guidance >= 0.0) sc.guidance_scale = guidance;
    if (steps > 0) sc.steps = steps;
    if (seed >= 0) sc.seed = static_cast<uint64_t>(seed);
    sc.validate();

    const Image input = crop_resize(read_png(in_path), cfg.image_height, cfg.image_width);
    const NoiseSchedule sched = cfg.make_schedule();
    UNetVelocity vel(*model.net);
    const EnhanceResult res = enhance(input, vel, sched, sc, cfg.corruption, cfg.codec);
    write_png(out_path, res.output);
    write_sidecar(out_path + ".json", json{{"command", "enhance"},
                                           {"config", cfg.to_json()},
                                           {"checkpoint", ckpt_path},
                                           {"in", in_path},
                                           {"out", out_path},
                                           {"sample", sc.to_json()}});
    std::printf("enhanced %s -> %s (strategy %s, w=%.2f, %d steps)\n", in_path.c_str(),
                out_path.c_str(), strategy_name(sc.strategy), sc.guidance_scale, sc.steps);
    return 0;
}

int cmd_inpaint(const std::string& config_path, const std::string& ckpt_path,
                const std::string& in_path, const std::string& mask_path,
                const std::string& out_path, const std::string& fill, double guidance,
                int steps, int64_t seed) {
    const ExperimentConfig cfg = ExperimentConfig::load_file(config_path);
    LoadedModel model = load_model(ckpt_path);
    if (model.cfg.to_json() != cfg.to_json())
        throw ConfigError("inpaint: checkpoint config does not match --config");

    SampleConfig sc = cfg.sample;
    if (guidance >= 0.0) sc.guidance_scale = guidance;
    if (steps > 0) sc.steps = steps;
    if (seed >= 0) sc.seed = static_cast<uint64_t>(seed);
    sc.validate();

    InpaintRequest req;
    req.image = crop_resize(read_png(in_path), cfg.image_height, cfg.image_width);
    Image mask = read_png(mask_path);
    if (mask.channels == 3) {
        Image gray(mask.height, mask.width, 1);
        for (int y = 0; y < mask.height; ++y)
            for (int x = 0; x < mask.width; ++x) gray.at(y, x, 0) = mask.at(y, x, 0);
        mask = std::move(gray);
    }
    mask = crop_resize(mask, cfg.image_height, cfg.image_width);
    for (float& v : mask.data) v = v >= 0.5f ? 1.0f : 0.0f;
    req.mask = std::move(mask);
    if (fill == "midgray")
        req.fill = CorruptionConfig::Fill::midgray;
    else if (fill == "black")
        req.fill = CorruptionConfig::Fill::black;
    else
        throw ConfigError("inpaint: fill must be midgray or black");

    bool all_masked = true;
    for (float v : req.mask.data)
        if (v < 0.5f) {
            all_masked = false;
            break;
        }
    if (all_masked)
        std::fprintf(stderr,
                     "warning: mask covers the entire image; output is pure generation\n");

    const NoiseSchedule sched = cfg.make_schedule();
    UNetVelocity vel(*model.net);
    const InpaintResult res = inpaint(req, vel, sched, sc, cfg.codec);
    write_png(out_path, res.output);
    write_sidecar(out_path + ".json", json{{"command", "inpaint"},
                                           {"config", cfg.to_json()},
                                           {"checkpoint", ckpt_path},
                                           {"in", in_path},
                                           {"mask", mask_path},
                                           {"out", out_path},
                                           {"fill", fill},
                                           {"sample", sc.to_json()},
                                           {"known_region_psnr", res.known_region_psnr}});
    std::printf("inpainted %s -> %s (known-region psnr %.3f)\n", in_path.c_str(),
                out_path.c_str(), res.known_region_psnr);
    return 0;
}

int cmd_schedule_plot(int T, const std::string& out_prefix, const std::string& image_path,
                      uint64_t seed) {
    if (T < 2) throw ConfigError("schedule-plot: T must be >= 2");
    const std::string csv_path = out_prefix + ".csv";
    const std::string png_path = out_prefix + ".png";
    write_schedule_csv(csv_path, T);
    const Image demo = image_path.empty() ? toy_scene(64, 96, seed) : read_png(image_path);
    write_png(png_path, schedule_strip(demo, T, seed));
    write_sidecar(out_prefix + ".json", json{{"command", "schedule-plot"},
                                             {"T", T},
                                             {"image", image_path},
                                             {"seed", seed}});
    std::printf("wrote %s and %s\n", csv_path.c_str(), png_path.c_str());
    return 0;
}

int cmd_refresh(const std::string& store_dir, double fraction, int epoch, uint64_t seed) {
    PairStore store = PairStore::open(store_dir);
    SeededRng rng(derive_seed(seed, kStreamRefresh, static_cast<uint64_t>(epoch)));
    const std::vector<std::string> ids = store.refresh(fraction, epoch, rng);
    std::printf("refreshed %zu entries in %s\n", ids.size(), store_dir.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"underwater image corruption and diffusion restoration"};
    app.require_subcommand(1);

    // toygen
    auto* toygen = app.add_subcommand("toygen", "generate a procedural toy dataset");
    std::string tg_out;
    int tg_count = 560, tg_h = 64, tg_w = 96;
    uint64_t tg_seed = 0;
    toygen->add_option("--out", tg_out, "output directory")->required();
    toygen->add_option("--count", tg_count, "number of images");
    toygen->add_option("--height", tg_h, "image height");
    toygen->add_option("--width", tg_w, "image width");
    toygen->add_option("--seed", tg_seed, "root seed");

    // corrupt
    auto* corrupt_cmd = app.add_subcommand("corrupt", "corrupt a directory of images");
    std::string co_in, co_out, co_cfg;
    double co_sev = -1.0;
    uint64_t co_seed = 0;
    corrupt_cmd->add_option("--in", co_in, "input directory")->required();
    corrupt_cmd->add_option("--out", co_out, "output store directory")->required();
    corrupt_cmd->add_option("--config", co_cfg, "corruption config JSON");
    corrupt_cmd->add_option("--severity", co_sev, "severity override in [0,1]");
    corrupt_cmd->add_option("--seed", co_seed, "root seed");

    // make-pairs
    auto* mp = app.add_subcommand("make-pairs", "build a training pair store");
    std::string mp_cfg;
    mp->add_option("--config", mp_cfg, "experiment config JSON")->required();

    // train
    auto* tr = app.add_subcommand("train", "train the denoiser");
    std::string tr_cfg, tr_out, tr_resume;
    int64_t tr_steps = -1;
    bool tr_verbose = false;
    tr->add_option("--config", tr_cfg, "experiment config JSON")->required();
    tr->add_option("--out", tr_out, "run output directory")->required();
    tr->add_option("--steps", tr_steps, "stop after this many total steps");
    tr->add_option("--resume", tr_resume, "checkpoint to resume from");
    tr->add_flag("--verbose", tr_verbose, "log progress to stderr");

    // eval
    auto* ev = app.add_subcommand("eval", "evaluate on the held-out split");
    std::string ev_cfg, ev_ckpt, ev_out;
    int ev_limit = 50, ev_steps = -1, ev_grid_rows = 8;
    double ev_guidance = -1.0;
    ev->add_option("--config", ev_cfg, "experiment config JSON")->required();
    ev->add_option("--checkpoint", ev_ckpt, "checkpoint path")->required();
    ev->add_option("--out", ev_out, "output directory")->required();
    ev->add_option("--limit", ev_limit, "max eval images");
    ev->add_option("--steps", ev_steps, "sampling steps override");
    ev->add_option("--guidance", ev_guidance, "guidance scale override");
    ev->add_option("--grid-rows", ev_grid_rows, "rows in the comparison grid");

    // enhance
    auto* en = app.add_subcommand("enhance", "enhance one image");
    std::string en_cfg, en_ckpt, en_in, en_out, en_strategy;
    double en_guidance = -1.0;
    int en_steps = -1;
    int64_t en_seed = -1;
    en->add_option("--config", en_cfg, "experiment config JSON")->required();
    en->add_option("--checkpoint", en_ckpt, "checkpoint path")->required();
    en->add_option("--in", en_in, "input image")->required();
    en->add_option("--out", en_out, "output image")->required();
    en->add_option("--strategy", en_strategy, "raw | full | mild");
    en->add_option("--guidance", en_guidance, "guidance scale");
    en->add_option("--steps", en_steps, "sampling steps");
    en->add_option("--seed", en_seed, "sampling seed");

    // inpaint
    auto* in = app.add_subcommand("inpaint", "restore masked regions");
    std::string in_cfg, in_ckpt, in_in, in_mask, in_out, in_fill = "midgray";
    double in_guidance = -1.0;
    int in_steps = -1;
    int64_t in_seed = -1;
    in->add_option("--config", in_cfg, "experiment config JSON")->required();
    in->add_option("--checkpoint", in_ckpt, "checkpoint path")->required();
    in->add_option("--in", in_in, "input image")->required();
    in->add_option("--mask", in_mask, "mask image (white = missing)")->required();
    in->add_option("--out", in_out, "output image")->required();
    in->add_option("--fill", in_fill, "midgray | black");
    in->add_option("--guidance", in_guidance, "guidance scale");
    in->add_option("--steps", in_steps, "sampling steps");
    in->add_option("--seed", in_seed, "sampling seed");

    // schedule-plot
    auto* sp = app.add_subcommand("schedule-plot", "alpha-bar curves and noised strips");
    std::string sp_out, sp_image;
    int sp_T = 1000;
    uint64_t sp_seed = 0;
    sp->add_option("--T", sp_T, "schedule length");
    sp->add_option("--out", sp_out, "output path prefix")->required();
    sp->add_option("--image", sp_image, "demo image (default: generated scene)");
    sp->add_option("--seed", sp_seed, "noise seed");

    // refresh
    auto* rf = app.add_subcommand("refresh", "re-corrupt a fraction of a pair store");
    std::string rf_store;
    double rf_fraction = 0.1;
    int rf_epoch = 0;
    uint64_t rf_seed = 0;
    rf->add_option("--store", rf_store, "pair store directory")->required();
    rf->add_option("--fraction", rf_fraction, "fraction to refresh");
    rf->add_option("--epoch", rf_epoch, "epoch label for the log")->required();
    rf->add_option("--seed", rf_seed, "root seed");

    try {
        app.parse(argc, argv);
        if (toygen->parsed()) return cmd_toygen(tg_out, tg_count, tg_h, tg_w, tg_seed);
        if (corrupt_cmd->parsed()) return cmd_corrupt(co_in, co_out, co_cfg, co_sev, co_seed);
        if (mp->parsed()) return cmd_make_pairs(mp_cfg);
        if (tr->parsed()) return cmd_train(tr_cfg, tr_out, tr_steps, tr_resume, tr_verbose);
        if (ev->parsed())
            return cmd_eval(ev_cfg, ev_ckpt, ev_out, ev_limit, ev_steps, ev_guidance,
                            ev_grid_rows);
        if (en->parsed())
            return cmd_enhance(en_cfg, en_ckpt, en_in, en_out, en_strategy, en_guidance,
                               en_steps, en_seed);
        if (in->parsed())
            return cmd_inpaint(in_cfg, in_ckpt, in_in, in_mask, in_out, in_fill,
                               in_guidance, in_steps, in_seed);
        if (sp->parsed()) return cmd_schedule_plot(sp_T, sp_out, sp_image, sp_seed);
        if (rf->parsed()) return cmd_refresh(rf_store, rf_fraction, rf_epoch, rf_seed);
        return 1;
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const DecodeError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const IoError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "internal error: %s\n", e.what());
        return 1;
    }
}
