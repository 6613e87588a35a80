#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "uwdiff/image.hpp"

namespace uwdiff {

Image hstack(const std::vector<Image>& imgs);
Image vstack(const std::vector<Image>& imgs);

// Per-image eval metrics: PSNR and signed per-channel mean shift against the
// ground truth, for both the condition and the enhanced output.
struct EvalRow {
    std::string id;
    double psnr_cond = 0.0;
    double psnr_out = 0.0;
    std::array<double, 3> dmean_cond{};
    std::array<double, 3> dmean_out{};
};

EvalRow eval_metrics(const std::string& id, const Image& condition, const Image& output,
                     const Image& ground_truth);

// Column means over the rows, id "mean".
EvalRow aggregate_rows(const std::vector<EvalRow>& rows);

// CSV with one row per image plus the aggregate row; values printed with
// enough digits to round-trip exactly.
void write_eval_csv(const std::string& path, const std::vector<EvalRow>& rows);

// (t, alpha_bar_linear, alpha_bar_cosine) for t = 0..T; T+1 rows.
void write_schedule_csv(const std::string& path, int T);

// Two rows (linear, cosine) of five panels at t in {0, T/4, T/2, 3T/4, T}.
// The same noise field is reused across the two rows of a column so the
// schedules are directly comparable.
Image schedule_strip(const Image& demo, int T, uint64_t seed);

}  // namespace uwdiff
