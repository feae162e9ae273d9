// Command-line front end: train / eval / viz / cdf.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "octc/cdf.hpp"
#include "octc/checkpoint.hpp"
#include "octc/config.hpp"
#include "octc/io.hpp"
#include "octc/trainer.hpp"
#include "octc/visual.hpp"

namespace {

struct CommonFlags {
    std::string config_path;
    std::optional<std::string> strategy;
    std::optional<uint64_t> seed;
    std::optional<std::string> out;
    std::optional<int> steps;
    std::optional<std::string> k_set;
    std::optional<std::string> transforms;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
    cmd->add_option("--config", flags.config_path, "config file (key=value lines)");
    cmd->add_option("--strategy", [&flags](const std::vector<std::string>& v) {
        flags.strategy = v[0];
        return true;
    }, "baseline|oc|tc|octc")->type_name("NAME");
    cmd->add_option("--seed", [&flags](const std::vector<std::string>& v) {
        flags.seed = std::stoull(v[0]);
        return true;
    }, "seed for data sampling and weight init")->type_name("U64");
    cmd->add_option("--out", [&flags](const std::vector<std::string>& v) {
        flags.out = v[0];
        return true;
    }, "output directory")->type_name("DIR");
    cmd->add_option("--steps", [&flags](const std::vector<std::string>& v) {
        flags.steps = std::stoi(v[0]);
        return true;
    }, "training steps")->type_name("N");
    cmd->add_option("--k-set", [&flags](const std::vector<std::string>& v) {
        flags.k_set = v[0];
        return true;
    }, "frame gaps, e.g. 1,2")->type_name("LIST");
    cmd->add_option("--transforms", [&flags](const std::vector<std::string>& v) {
        flags.transforms = v[0];
        return true;
    }, "hflip,vflip,rot or explicit rotations")->type_name("LIST");
}

octc::RunConfig resolve_config(const CommonFlags& flags) {
    octc::RunConfig cfg;
    if (!flags.config_path.empty()) {
        cfg = octc::RunConfig::load(flags.config_path);
    } else if (flags.strategy) {
        cfg = octc::make_preset(octc::strategy_from_string(*flags.strategy),
                                flags.seed.value_or(0));
    }
    if (flags.strategy) cfg.strategy = octc::strategy_from_string(*flags.strategy);
    if (flags.seed) {
        cfg.seed = *flags.seed;
        cfg.model.seed = *flags.seed;
    }
    if (flags.out) cfg.out_dir = *flags.out;
    if (flags.steps) cfg.steps = *flags.steps;
    if (flags.k_set) cfg.k_set = octc::parse_k_set(*flags.k_set);
    if (flags.transforms) cfg.transforms = octc::parse_transform_list(*flags.transforms);
    cfg.validate();
    return cfg;
}

int cmd_train(const CommonFlags& flags) {
    octc::RunConfig cfg = resolve_config(flags);
    std::cout << "strategy=" << octc::strategy_name(cfg.strategy) << " steps=" << cfg.steps
              << " seed=" << cfg.seed << " out=" << cfg.out_dir << "\n";
    octc::TrainResult result = octc::train(cfg);
    std::cout << "parameters: " << result.parameter_count << "\n";
    const auto& first = result.evals.front().second;
    const auto& last = result.evals.back().second;
    std::cout << "eval epe: " << first.epe << " (step 0) -> " << last.epe << " (step "
              << result.evals.back().first << ")\n";
    std::cout << "checkpoint: " << result.checkpoint_path << "\n";
    return 0;
}

int cmd_eval(const CommonFlags& flags, const std::string& checkpoint) {
    octc::RunConfig cfg = resolve_config(flags);
    octc::EvalReport report = octc::evaluate(cfg, checkpoint);
    std::string text = report.to_text();
    std::cout << text;
    std::filesystem::create_directories(cfg.out_dir);
    std::ofstream of(cfg.out_dir + "/report.txt");
    of << text;
    std::ofstream oc(cfg.out_dir + "/report.csv");
    oc << octc::EvalReport::csv_header() << "\n"
       << report.csv_row(static_cast<int>(octc::read_checkpoint_meta(checkpoint).steps)) << "\n";
    std::cout << "report written to " << cfg.out_dir << "/report.txt\n";
    return 0;
}

int cmd_viz(const std::string& flo_path, const std::string& checkpoint,
            const std::vector<std::string>& pair, const std::string& out_path,
            const CommonFlags& flags, bool occlusion) {
    namespace fs = std::filesystem;
    if (!flo_path.empty()) {
        octc::FlowField flow = octc::read_flo(flo_path);
        octc::write_png(out_path, octc::flow_to_color(flow));
        std::cout << "wrote " << out_path << "\n";
        return 0;
    }
    if (checkpoint.empty() || pair.size() != 2)
        throw CLI::ValidationError("viz needs either --flo or --checkpoint with --pair A B");
    octc::RunConfig cfg = resolve_config(flags);
    octc::FlowModel model(cfg.model);
    octc::load_checkpoint(checkpoint, model);
    octc::Image a = octc::read_ppm(pair[0]);
    octc::Image b = octc::read_ppm(pair[1]);
    octc::ModelOutput out = model.forward(a, b);
    octc::write_png(out_path, octc::flow_to_color(out.final_flow()));
    std::cout << "wrote " << out_path << "\n";
    if (occlusion) {
        octc::Tensor prob = out.occ_prob(out.occ_logits.size() - 1);
        std::string occ_path =
            (fs::path(out_path).parent_path() / fs::path(out_path).stem()).string() + "_occ.png";
        octc::write_png(occ_path, octc::gray_image(a.width, a.height, prob.data()));
        std::cout << "wrote " << occ_path << "\n";
    }
    return 0;
}

int cmd_cdf(const std::vector<std::string>& flo_paths, const std::string& out_dir) {
    std::vector<octc::FlowField> fields;
    fields.reserve(flo_paths.size());
    for (const auto& p : flo_paths) fields.push_back(octc::read_flo(p));
    octc::DisplacementCdf cdf = octc::displacement_cdf(fields);

    std::filesystem::create_directories(out_dir);
    std::ofstream csv(out_dir + "/cdf.csv");
    csv << octc::cdf_to_csv(cdf);
    octc::write_png(out_dir + "/cdf.png", octc::plot_cdf(cdf));

    std::cout << "fields: " << fields.size() << "\n";
    std::cout << "median_u=" << cdf.median_u << " median_v=" << cdf.median_v << "\n";
    std::cout << "excluded outliers: u=" << cdf.excluded_u << " v=" << cdf.excluded_v << "\n";
    if (cdf.v_axis_asymmetric())
        std::cout << "v-axis asymmetry detected (|median_v| > 0.5 px)\n";
    std::cout << "wrote " << out_dir << "/cdf.csv and " << out_dir << "/cdf.png\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"consistency-trained toy optical flow"};
    app.require_subcommand(1);

    CommonFlags train_flags, eval_flags, viz_flags;

    CLI::App* train = app.add_subcommand("train", "train a model on synthetic sequences");
    add_common(train, train_flags);

    CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint on the held-out split");
    add_common(eval, eval_flags);
    std::string eval_checkpoint;
    eval->add_option("--checkpoint", eval_checkpoint, "checkpoint file")->required();

    CLI::App* viz = app.add_subcommand("viz", "render a flow field as a color-wheel PNG");
    std::string viz_flo, viz_checkpoint, viz_out = "flow.png";
    std::vector<std::string> viz_pair;
    bool viz_occ = false;
    viz->add_option("--flo", viz_flo, ".flo file to render");
    viz->add_option("--checkpoint", viz_checkpoint, "checkpoint to run on --pair");
    viz->add_option("--pair", viz_pair, "two PPM frames")->expected(2);
    viz->add_option("--out", viz_out, "output PNG path");
    viz->add_flag("--occlusion", viz_occ, "also render the predicted mask");
    viz->add_option("--config", viz_flags.config_path,
                    "run config for checkpoint mode (model shape)");

    CLI::App* cdf = app.add_subcommand("cdf", "displacement CDFs of .flo files");
    std::vector<std::string> cdf_files;
    std::string cdf_out = "cdf_out";
    cdf->add_option("files", cdf_files, ".flo files")->required();
    cdf->add_option("--out", cdf_out, "output directory");

    CLI11_PARSE(app, argc, argv);

    try {
        if (train->parsed()) return cmd_train(train_flags);
        if (eval->parsed()) return cmd_eval(eval_flags, eval_checkpoint);
        if (viz->parsed()) return cmd_viz(viz_flo, viz_checkpoint, viz_pair, viz_out,
                                          viz_flags, viz_occ);
        if (cdf->parsed()) return cmd_cdf(cdf_files, cdf_out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
