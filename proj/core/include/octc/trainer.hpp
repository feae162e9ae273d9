#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "octc/checkpoint.hpp"
#include "octc/config.hpp"
#include "octc/data.hpp"
#include "octc/model.hpp"

namespace octc {

struct StepLog {
    int step = 0;
    std::optional<double> base, zero_forcing, mask_match, transformation;
    double total = 0.0;
    std::string tc_transform;  // which transform the step drew, when TC is active
};

struct EvalReport {
    double epe = 0.0, fl = 0.0;
    double epe_k1 = 0.0, fl_k1 = 0.0;
    double epe_k2 = 0.0, fl_k2 = 0.0;
    bool has_k2 = false;
    double occ_accuracy = 0.0;  // thresholded mask prediction vs ground truth
    double zf_epe = 0.0;        // endpoint error of forward(I, I_occ) vs zero
    bool has_occ = false;
    int pairs = 0;

    std::string to_text() const;
    static std::string csv_header();
    std::string csv_row(int step) const;
};

struct EvalPair {
    Image a, b;
    FlowField gt;
    int k = 1;
};

/// Held-out benchmark: labeled pairs for k in {1,2} (k=2 ground truth from
/// flow composition, never used in training) plus seeded occlusion pairs for
/// mask accuracy. Depends only on (eval_seed, data settings).
struct EvalData {
    std::vector<EvalPair> pairs;
    std::vector<TrainSample> occlusion_pairs;
};

EvalData build_eval_data(const RunConfig& cfg, uint64_t eval_seed = 424242);

using FlowPredictor = std::function<FlowField(const Image&, const Image&)>;

/// Flow metrics of an arbitrary predictor on the benchmark pairs.
EvalReport evaluate_predictor(const FlowPredictor& predictor, const EvalData& data);

/// Full report for a model, including mask accuracy and zero-forcing EPE on
/// the occlusion pairs.
EvalReport evaluate_model(const FlowModel& model, const EvalData& data);

struct TrainResult {
    std::string checkpoint_path;
    std::vector<StepLog> steps;
    std::vector<std::pair<int, EvalReport>> evals;  // (step, report), step 0 included
    int64_t parameter_count = 0;
};

/// Runs the configured training loop: fixed-step gradient descent with global
/// gradient-norm clipping at 1.0, per-step component logging to
/// <out>/train.csv, periodic held-out evaluation to <out>/eval.csv, and a
/// final checkpoint at <out>/checkpoint.bin. Throws on non-finite loss with
/// the step index and component breakdown.
TrainResult train(const RunConfig& cfg);

/// Loads a checkpoint (rejecting config-hash mismatches) and evaluates it on
/// the configured benchmark.
EvalReport evaluate(const RunConfig& cfg, const std::string& checkpoint_path);

}  // namespace octc
