#include "octc/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "octc/losses.hpp"

namespace octc {

namespace {

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

}  // namespace

std::string EvalReport::to_text() const {
    std::ostringstream os;
    os << "pairs=" << pairs << "\n";
    os << "epe=" << fmt(epe) << " fl=" << fmt(fl) << "\n";
    os << "epe_k1=" << fmt(epe_k1) << " fl_k1=" << fmt(fl_k1) << "\n";
    if (has_k2) os << "epe_k2=" << fmt(epe_k2) << " fl_k2=" << fmt(fl_k2) << "\n";
    if (has_occ)
        os << "occ_accuracy=" << fmt(occ_accuracy) << " zf_epe=" << fmt(zf_epe) << "\n";
    return os.str();
}

std::string EvalReport::csv_header() {
    return "step,epe,fl,epe_k1,fl_k1,epe_k2,fl_k2,occ_accuracy,zf_epe";
}

std::string EvalReport::csv_row(int step) const {
    std::ostringstream os;
    os << step << "," << fmt(epe) << "," << fmt(fl) << "," << fmt(epe_k1) << "," << fmt(fl_k1)
       << "," << (has_k2 ? fmt(epe_k2) : "") << "," << (has_k2 ? fmt(fl_k2) : "") << ","
       << (has_occ ? fmt(occ_accuracy) : "") << "," << (has_occ ? fmt(zf_epe) : "");
    return os.str();
}

EvalData build_eval_data(const RunConfig& cfg, uint64_t eval_seed) {
    Rng rng(eval_seed ^ 0x6576616cull);
    EvalData data;
    Rng mask_rng = rng.fork(17);
    for (int i = 0; i < cfg.eval_sequences; ++i) {
        SyntheticScene scene =
            SyntheticScene::random(cfg.image_width, cfg.image_height, cfg.frames_per_sequence,
                                   cfg.sprites_per_scene, cfg.max_speed, rng);
        RenderedSequence seq = render_scene(scene);
        int frames = static_cast<int>(seq.frames.size());
        for (int t = 0; t + 1 < frames; ++t)
            data.pairs.push_back({seq.frames[t], seq.frames[t + 1], seq.flows[t], 1});
        for (int t = 0; t + 2 < frames; ++t)
            data.pairs.push_back({seq.frames[t], seq.frames[t + 2],
                                  compose_flow(seq.flows[t], seq.flows[t + 1]), 2});
        data.occlusion_pairs.push_back(
            make_occlusion_pair(seq.frames[0], cfg.cowmask, mask_rng));
    }
    return data;
}

namespace {

struct MetricAccum {
    double epe_sum = 0.0;
    int64_t outliers = 0;
    int64_t pixels = 0;

    void add(const FlowField& pred, const FlowField& gt) {
        for (int y = 0; y < gt.height; ++y)
            for (int x = 0; x < gt.width; ++x) {
                double du = static_cast<double>(pred.u(x, y)) - gt.u(x, y);
                double dv = static_cast<double>(pred.v(x, y)) - gt.v(x, y);
                double err = std::sqrt(du * du + dv * dv);
                double mag = std::sqrt(static_cast<double>(gt.u(x, y)) * gt.u(x, y) +
                                       static_cast<double>(gt.v(x, y)) * gt.v(x, y));
                epe_sum += err;
                if (err > 3.0 && err > 0.05 * mag) ++outliers;
                ++pixels;
            }
    }
    double epe() const { return pixels ? epe_sum / static_cast<double>(pixels) : 0.0; }
    double fl() const {
        return pixels ? static_cast<double>(outliers) / static_cast<double>(pixels) : 0.0;
    }
};

EvalReport flow_metrics(const FlowPredictor& predictor, const EvalData& data) {
    MetricAccum all, k1, k2;
    for (const auto& p : data.pairs) {
        FlowField pred = predictor(p.a, p.b);
        all.add(pred, p.gt);
        (p.k == 1 ? k1 : k2).add(pred, p.gt);
    }
    EvalReport r;
    r.pairs = static_cast<int>(data.pairs.size());
    r.epe = all.epe();
    r.fl = all.fl();
    r.epe_k1 = k1.epe();
    r.fl_k1 = k1.fl();
    if (k2.pixels > 0) {
        r.has_k2 = true;
        r.epe_k2 = k2.epe();
        r.fl_k2 = k2.fl();
    }
    return r;
}

}  // namespace

EvalReport evaluate_predictor(const FlowPredictor& predictor, const EvalData& data) {
    return flow_metrics(predictor, data);
}

EvalReport evaluate_model(const FlowModel& model, const EvalData& data) {
    EvalReport r = flow_metrics(
        [&](const Image& a, const Image& b) { return model.forward(a, b).final_flow(); }, data);

    if (!data.occlusion_pairs.empty()) {
        r.has_occ = true;
        int64_t correct = 0, total = 0;
        double zf_sum = 0.0;
        for (const auto& s : data.occlusion_pairs) {
            ModelOutput out = model.forward(s.a, s.b);
            Tensor prob_t = out.occ_prob(out.occ_logits.size() - 1);
            const auto& prob = prob_t.data();
            const OcclusionMask& gt = *s.gt_occlusion;
            for (size_t i = 0; i < prob.size(); ++i) {
                bool pred_visible = prob[i] > 0.5f;
                correct += (pred_visible == (gt.data[i] != 0));
                ++total;
            }
            zf_sum += epe(out.final_flow(), *s.gt_flow);
        }
        r.occ_accuracy = static_cast<double>(correct) / static_cast<double>(total);
        r.zf_epe = zf_sum / static_cast<double>(data.occlusion_pairs.size());
    }
    return r;
}

namespace {

struct LossParts {
    std::optional<Tensor> base, zf, mm, tr;
    std::string tc_transform;
};

void accumulate(std::optional<Tensor>& slot, const Tensor& t) {
    slot = slot ? *slot + t : t;
}

LossParts sample_losses(const FlowModel& model, const TrainSample& sample, const RunConfig& cfg,
                        Rng& cow_rng, Rng& trans_rng) {
    ActiveLosses act = active_losses(cfg.strategy);
    LossParts parts;

    if (sample.zero_forcing) {
        // Occlusion pair: the zero-flow target is the zero-forcing loss, not
        // a supervised term.
        ModelOutput out = model.forward(sample.a, sample.b);
        parts.zf = zero_forcing_loss(out.flows, cfg.loss);
        if (act.mask_match) {
            std::vector<Tensor> probs;
            for (size_t i = 0; i < out.occ_logits.size(); ++i) probs.push_back(out.occ_prob(i));
            parts.mm = mask_match_loss(probs, *sample.gt_occlusion, cfg.loss);
        }
        return parts;
    }

    std::optional<ModelOutput> orig_out;
    auto need_orig = [&]() -> ModelOutput& {
        if (!orig_out) orig_out = model.forward(sample.a, sample.b);
        return *orig_out;
    };

    if (sample.labeled) parts.base = sequence_loss(need_orig().flows, *sample.gt_flow,
                                                   nullptr, cfg.loss);

    if (act.zero_forcing) {
        TrainSample occ = make_occlusion_pair(sample.a, cfg.cowmask, cow_rng);
        ModelOutput out = model.forward(occ.a, occ.b);
        accumulate(parts.zf, zero_forcing_loss(out.flows, cfg.loss));
        if (act.mask_match) {
            std::vector<Tensor> probs;
            for (size_t i = 0; i < out.occ_logits.size(); ++i) probs.push_back(out.occ_prob(i));
            accumulate(parts.mm, mask_match_loss(probs, *occ.gt_occlusion, cfg.loss));
        }
        if (cfg.loss.zero_star) {
            ModelOutput same = model.forward(sample.a, sample.a);
            accumulate(parts.zf, zero_forcing_loss(same.flows, cfg.loss));
        }
    }

    if (act.transformation) {
        TransformKind kind =
            cfg.transforms[static_cast<size_t>(trans_rng.uniform_int(
                0, static_cast<int>(cfg.transforms.size()) - 1))];
        GeoTransform t(kind, sample.a.width, sample.a.height);
        ModelOutput& orig = need_orig();
        ModelOutput trans = model.forward(transform_image(sample.a, t),
                                          transform_image(sample.b, t));
        auto [tr_loss, gates] =
            transformation_consistency_loss(orig.flows, trans.flows, t, cfg.loss);
        (void)gates;
        parts.tr = tr_loss;
        parts.tc_transform = transform_kind_name(kind);
    }
    return parts;
}

void sgd_step(const FlowModel& model, double lr) {
    const auto& params = model.parameters();
    double norm_sq = 0.0;
    for (const auto& p : params) {
        if (!p.has_grad()) continue;
        for (float g : p.grad()) norm_sq += static_cast<double>(g) * g;
    }
    double norm = std::sqrt(norm_sq);
    double scale = norm > 1.0 ? 1.0 / norm : 1.0;  // clip at global norm 1.0
    for (const auto& p : params) {
        if (!p.has_grad()) continue;
        std::vector<float> d = p.data();
        const auto& g = p.grad();
        for (size_t i = 0; i < d.size(); ++i)
            d[i] = static_cast<float>(d[i] - lr * scale * g[i]);
        p.set_data(std::move(d));
    }
    model.zero_grad();
}

std::string train_csv_header(const ActiveLosses& act) {
    std::string h = "step";
    if (act.base) h += ",l_base";
    if (act.zero_forcing) h += ",l_zf";
    if (act.mask_match) h += ",l_mm";
    if (act.transformation) h += ",l_tr,tc_transform";
    h += ",total";
    return h;
}

std::string train_csv_row(const StepLog& log, const ActiveLosses& act) {
    std::ostringstream os;
    os << log.step;
    auto cell = [&](const std::optional<double>& v) {
        os << ",";
        if (v) os << fmt(*v);
    };
    if (act.base) cell(log.base);
    if (act.zero_forcing) cell(log.zero_forcing);
    if (act.mask_match) cell(log.mask_match);
    if (act.transformation) {
        cell(log.transformation);
        os << "," << log.tc_transform;
    }
    os << "," << fmt(log.total);
    return os.str();
}

}  // namespace

TrainResult train(const RunConfig& cfg) {
    cfg.validate();
    std::filesystem::create_directories(cfg.out_dir);

    Rng scene_rng(cfg.seed ^ 0x7363656e65ull);
    std::vector<RenderedSequence> train_seqs;
    train_seqs.reserve(static_cast<size_t>(cfg.train_sequences));
    for (int i = 0; i < cfg.train_sequences; ++i)
        train_seqs.push_back(render_scene(
            SyntheticScene::random(cfg.image_width, cfg.image_height, cfg.frames_per_sequence,
                                   cfg.sprites_per_scene, cfg.max_speed, scene_rng)));

    FrameHopSampler sampler(&train_seqs, cfg.k_set, cfg.seed);
    Rng cow_rng(cfg.seed ^ 0x636f77ull);
    Rng trans_rng(cfg.seed ^ 0x7472616e73ull);
    Rng pick_rng(cfg.seed ^ 0x7069636bull);

    FlowModel model(cfg.model);
    EvalData eval_data = build_eval_data(cfg);

    TrainResult result;
    result.parameter_count = model.parameter_count();

    std::ofstream train_csv(cfg.out_dir + "/train.csv");
    std::ofstream eval_csv(cfg.out_dir + "/eval.csv");
    ActiveLosses act = active_losses(cfg.strategy);
    train_csv << train_csv_header(act) << "\n";
    eval_csv << EvalReport::csv_header() << "\n";

    auto run_eval = [&](int step) {
        EvalReport r = evaluate_model(model, eval_data);
        eval_csv << r.csv_row(step) << "\n";
        eval_csv.flush();
        result.evals.emplace_back(step, r);
    };
    run_eval(0);

    for (int step = 1; step <= cfg.steps; ++step) {
        StepLog log;
        log.step = step;
        {
            std::optional<Tensor> total;
            for (int b = 0; b < cfg.batch_size; ++b) {
                TrainSample sample;
                if (cfg.zf_only) {
                    const auto& seq = train_seqs[static_cast<size_t>(
                        pick_rng.uniform_int(0, cfg.train_sequences - 1))];
                    const Image& frame = seq.frames[static_cast<size_t>(
                        pick_rng.uniform_int(0, static_cast<int>(seq.frames.size()) - 1))];
                    sample = make_occlusion_pair(frame, cfg.cowmask, cow_rng);
                } else {
                    sample = sampler.next();
                }
                LossParts parts = sample_losses(model, sample, cfg, cow_rng, trans_rng);
                Tensor sample_total =
                    total_loss(parts.base, parts.zf, parts.mm, parts.tr, cfg.loss);
                accumulate(total, sample_total);

                auto track = [](std::optional<double>& slot, const std::optional<Tensor>& t) {
                    if (t) slot = slot.value_or(0.0) + t->item();
                };
                track(log.base, parts.base);
                track(log.zero_forcing, parts.zf);
                track(log.mask_match, parts.mm);
                track(log.transformation, parts.tr);
                if (!parts.tc_transform.empty()) log.tc_transform = parts.tc_transform;
            }
            Tensor batch_total = *total * (1.0f / static_cast<float>(cfg.batch_size));
            log.total = batch_total.item();

            if (!std::isfinite(log.total)) {
                std::ostringstream os;
                os << "non-finite loss at step " << step << ":";
                auto part = [&](const char* name, const std::optional<double>& v) {
                    if (v) os << " " << name << "=" << *v;
                };
                part("l_base", log.base);
                part("l_zf", log.zero_forcing);
                part("l_mm", log.mask_match);
                part("l_tr", log.transformation);
                throw std::runtime_error(os.str());
            }
            batch_total.backward();
        }  // graph released before the in-place parameter update
        sgd_step(model, cfg.learning_rate);

        train_csv << train_csv_row(log, act) << "\n";
        result.steps.push_back(std::move(log));
        if (step % cfg.eval_every == 0 || step == cfg.steps) run_eval(step);
    }

    result.checkpoint_path = cfg.out_dir + "/checkpoint.bin";
    save_checkpoint(result.checkpoint_path, model, cfg.hash(),
                    static_cast<uint64_t>(cfg.steps));
    cfg.save(cfg.out_dir + "/config.txt");
    return result;
}

EvalReport evaluate(const RunConfig& cfg, const std::string& checkpoint_path) {
    cfg.validate();
    FlowModel model(cfg.model);
    CheckpointMeta meta = load_checkpoint(checkpoint_path, model);
    if (meta.run_hash != cfg.hash())
        throw std::runtime_error("checkpoint run-config hash mismatch (checkpoint " +
                                 std::to_string(meta.run_hash) + ", current " +
                                 std::to_string(cfg.hash()) + ")");
    return evaluate_model(model, build_eval_data(cfg));
}

}  // namespace octc
