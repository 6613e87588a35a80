#include "uwdiff/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "uwdiff/error.hpp"
#include "uwdiff/rng.hpp"
#include "uwdiff/schedule.hpp"

namespace uwdiff {

Image hstack(const std::vector<Image>& imgs) {
    if (imgs.empty()) throw ShapeError("hstack: no images");
    int width = 0;
    for (const auto& im : imgs) {
        if (im.height != imgs[0].height || im.channels != imgs[0].channels)
            throw ShapeError("hstack: height/channel mismatch");
        width += im.width;
    }
    Image out(imgs[0].height, width, imgs[0].channels);
    int x0 = 0;
    for (const auto& im : imgs) {
        for (int y = 0; y < im.height; ++y)
            for (int x = 0; x < im.width; ++x)
                for (int c = 0; c < im.channels; ++c)
                    out.at(y, x0 + x, c) = im.at(y, x, c);
        x0 += im.width;
    }
    return out;
}

Image vstack(const std::vector<Image>& imgs) {
    if (imgs.empty()) throw ShapeError("vstack: no images");
    int height = 0;
    for (const auto& im : imgs) {
        if (im.width != imgs[0].width || im.channels != imgs[0].channels)
            throw ShapeError("vstack: width/channel mismatch");
        height += im.height;
    }
    Image out(height, imgs[0].width, imgs[0].channels);
    int y0 = 0;
    for (const auto& im : imgs) {
        for (int y = 0; y < im.height; ++y)
            for (int x = 0; x < im.width; ++x)
                for (int c = 0; c < im.channels; ++c)
                    out.at(y0 + y, x, c) = im.at(y, x, c);
        y0 += im.height;
    }
    return out;
}

EvalRow eval_metrics(const std::string& id, const Image& condition, const Image& output,
                     const Image& ground_truth) {
    if (!condition.same_shape(ground_truth) || !output.same_shape(ground_truth))
        throw ShapeError("eval_metrics: shape mismatch");
    if (ground_truth.channels != 3) throw ShapeError("eval_metrics: needs RGB images");
    EvalRow r;
    r.id = id;
    r.psnr_cond = psnr(condition, ground_truth);
    r.psnr_out = psnr(output, ground_truth);
    for (int c = 0; c < 3; ++c) {
        const double gt = channel_mean(ground_truth, c);
        r.dmean_cond[static_cast<size_t>(c)] = channel_mean(condition, c) - gt;
        r.dmean_out[static_cast<size_t>(c)] = channel_mean(output, c) - gt;
    }
    return r;
}

EvalRow aggregate_rows(const std::vector<EvalRow>& rows) {
    if (rows.empty()) throw ConfigError("aggregate_rows: no rows");
    EvalRow agg;
    agg.id = "mean";
    const double n = static_cast<double>(rows.size());
    for (const auto& r : rows) {
        agg.psnr_cond += r.psnr_cond / n;
        agg.psnr_out += r.psnr_out / n;
        for (size_t c = 0; c < 3; ++c) {
            agg.dmean_cond[c] += r.dmean_cond[c] / n;
            agg.dmean_out[c] += r.dmean_out[c] / n;
        }
    }
    return agg;
}

void write_eval_csv(const std::string& path, const std::vector<EvalRow>& rows) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("cannot write " + path);
    f << "id,psnr_condition,psnr_output,dmean_r_condition,dmean_g_condition,"
         "dmean_b_condition,dmean_r_output,dmean_g_output,dmean_b_output\n";
    auto emit = [&f](const EvalRow& r) {
        char buf[512];
        std::snprintf(buf, sizeof(buf),
                      "%s,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g", r.id.c_str(),
                      r.psnr_cond, r.psnr_out, r.dmean_cond[0], r.dmean_cond[1],
                      r.dmean_cond[2], r.dmean_out[0], r.dmean_out[1], r.dmean_out[2]);
        f << buf << "\n";
    };
    for (const auto& r : rows) emit(r);
    emit(aggregate_rows(rows));
}

void write_schedule_csv(const std::string& path, int T) {
    if (T < 2) throw ConfigError("schedule csv: T must be >= 2");
    const NoiseSchedule lin = linear_schedule(T);
    const NoiseSchedule cos = cosine_schedule(T);
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("cannot write " + path);
    f << "t,alpha_bar_linear,alpha_bar_cosine\n";
    for (int t = 0; t <= T; ++t) {
        char buf[96];
        std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g", t, lin.alpha_bar(t),
                      cos.alpha_bar(t));
        f << buf << "\n";
    }
}

Image schedule_strip(const Image& demo, int T, uint64_t seed) {
    if (T < 2) throw ConfigError("schedule strip: T must be >= 2");
    const NoiseSchedule lin = linear_schedule(T);
    const NoiseSchedule cos = cosine_schedule(T);
    const int ts[5] = {0, T / 4, T / 2, 3 * T / 4, T};

    // One noise field per column, shared by both schedule rows.
    SeededRng rng(seed);
    std::vector<std::vector<float>> eps(5);
    for (int k = 1; k < 5; ++k) {
        eps[static_cast<size_t>(k)].resize(demo.data.size());
        for (auto& e : eps[static_cast<size_t>(k)]) e = static_cast<float>(rng.normal());
    }

    auto panel = [&](const NoiseSchedule& sched, int k) {
        const int t = ts[k];
        if (t == 0) return demo;
        const double sq_ab = std::sqrt(sched.alpha_bar(t));
        const double sq_1mab = std::sqrt(1.0 - sched.alpha_bar(t));
        Image out(demo.height, demo.width, demo.channels);
        for (size_t i = 0; i < demo.data.size(); ++i) {
            const double x0 = 2.0 * demo.data[i] - 1.0;  // display range [-1,1]
            const double xt = sq_ab * x0 + sq_1mab * eps[static_cast<size_t>(k)][i];
            out.data[i] = static_cast<float>(std::clamp((xt + 1.0) / 2.0, 0.0, 1.0));
        }
        return out;
    };

    std::vector<Image> rows;
    for (const NoiseSchedule* sched : {&lin, &cos}) {
        std::vector<Image> panels;
        for (int k = 0; k < 5; ++k) panels.push_back(panel(*sched, k));
        rows.push_back(hstack(panels));
    }
    return vstack(rows);
}

}  // namespace uwdiff
