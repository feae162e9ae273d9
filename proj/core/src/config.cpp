#include "octc/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "octc/rng.hpp"

namespace octc {

Strategy strategy_from_string(const std::string& s) {
    if (s == "baseline") return Strategy::baseline;
    if (s == "oc") return Strategy::oc;
    if (s == "tc") return Strategy::tc;
    if (s == "octc") return Strategy::octc;
    throw std::invalid_argument("unknown strategy '" + s + "' (baseline|oc|tc|octc)");
}

const char* strategy_name(Strategy s) {
    switch (s) {
        case Strategy::baseline: return "baseline";
        case Strategy::oc: return "oc";
        case Strategy::tc: return "tc";
        case Strategy::octc: return "octc";
    }
    return "?";
}

ActiveLosses active_losses(Strategy s) {
    ActiveLosses a;
    a.base = true;
    if (s == Strategy::oc || s == Strategy::octc) {
        a.zero_forcing = true;
        a.mask_match = true;
    }
    if (s == Strategy::tc || s == Strategy::octc) a.transformation = true;
    return a;
}

std::vector<TransformKind> parse_transform_list(const std::string& csv) {
    std::vector<TransformKind> out;
    std::istringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        if (item == "hflip") out.push_back(TransformKind::hflip);
        else if (item == "vflip") out.push_back(TransformKind::vflip);
        else if (item == "rot") {
            out.push_back(TransformKind::rot90cw);
            out.push_back(TransformKind::rot180);
            out.push_back(TransformKind::rot270cw);
        } else if (item == "rot90cw") out.push_back(TransformKind::rot90cw);
        else if (item == "rot180") out.push_back(TransformKind::rot180);
        else if (item == "rot270cw") out.push_back(TransformKind::rot270cw);
        else throw std::invalid_argument("unknown transform '" + item +
                                         "' (hflip|vflip|rot|rot90cw|rot180|rot270cw)");
    }
    return out;
}

std::vector<int> parse_k_set(const std::string& csv) {
    std::vector<int> out;
    std::istringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        out.push_back(std::stoi(item));
    }
    return out;
}

namespace {

std::string join_ints(const std::vector<int>& v) {
    std::ostringstream os;
    for (size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
    return os.str();
}

std::string join_transforms(const std::vector<TransformKind>& v) {
    std::ostringstream os;
    for (size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << transform_kind_name(v[i]);
    return os.str();
}

std::string fmt_double(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

}  // namespace

void RunConfig::validate() const {
    model.validate();
    loss.validate();
    cowmask.validate();
    if (steps < 0) throw std::invalid_argument("steps must be >= 0");
    if (learning_rate <= 0.0) throw std::invalid_argument("learning rate must be positive");
    if (batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
    if (eval_every < 1) throw std::invalid_argument("eval_every must be >= 1");
    if (k_set.empty()) throw std::invalid_argument("k_set must be nonempty");
    for (int k : k_set)
        if (k < 1 || k >= frames_per_sequence)
            throw std::invalid_argument("k=" + std::to_string(k) +
                                        " outside [1, frames_per_sequence)");
    if (train_sequences < 1 || eval_sequences < 1)
        throw std::invalid_argument("need at least one train and eval sequence");
    if (image_width % model.downsample != 0 || image_height % model.downsample != 0)
        throw std::invalid_argument("image extents must be divisible by the downsample factor");
    ActiveLosses act = active_losses(strategy);
    if (act.transformation && transforms.empty())
        throw std::invalid_argument("transformation consistency needs a nonempty transform set");
    if (zf_only && !act.zero_forcing)
        throw std::invalid_argument("zf_only requires a strategy with zero forcing (oc or octc)");
}

std::string RunConfig::canonical() const {
    std::ostringstream os;
    os << "batch_size=" << batch_size << "\n"
       << "cowmask_coverage_max=" << fmt_double(cowmask.coverage_max) << "\n"
       << "cowmask_coverage_min=" << fmt_double(cowmask.coverage_min) << "\n"
       << "cowmask_sigma_max=" << fmt_double(cowmask.sigma_max) << "\n"
       << "cowmask_sigma_min=" << fmt_double(cowmask.sigma_min) << "\n"
       << "downsample=" << model.downsample << "\n"
       << "epsilon=" << fmt_double(loss.epsilon) << "\n"
       << "eval_every=" << eval_every << "\n"
       << "eval_sequences=" << eval_sequences << "\n"
       << "feature_channels=" << model.feature_channels << "\n"
       << "frames_per_sequence=" << frames_per_sequence << "\n"
       << "gamma=" << fmt_double(loss.gamma) << "\n"
       << "hidden_channels=" << model.hidden_channels << "\n"
       << "image_height=" << image_height << "\n"
       << "image_width=" << image_width << "\n"
       << "in_channels=" << model.in_channels << "\n"
       << "iterations=" << model.iterations << "\n"
       << "k_set=" << join_ints(k_set) << "\n"
       << "lambda1=" << fmt_double(loss.lambda1) << "\n"
       << "lambda2=" << fmt_double(loss.lambda2) << "\n"
       << "learning_rate=" << fmt_double(learning_rate) << "\n"
       << "mask_match_bce=" << (loss.mask_match_bce ? 1 : 0) << "\n"
       << "max_speed=" << max_speed << "\n"
       << "model_seed=" << model.seed << "\n"
       << "out=" << out_dir << "\n"
       << "radius=" << model.radius << "\n"
       << "seed=" << seed << "\n"
       << "sprites_per_scene=" << sprites_per_scene << "\n"
       << "steps=" << steps << "\n"
       << "strategy=" << strategy_name(strategy) << "\n"
       << "train_sequences=" << train_sequences << "\n"
       << "transforms=" << join_transforms(transforms) << "\n"
       << "zero_star=" << (loss.zero_star ? 1 : 0) << "\n"
       << "zf_only=" << (zf_only ? 1 : 0) << "\n";
    return os.str();
}

uint64_t RunConfig::hash() const {
    // The output directory is not part of the run identity.
    std::istringstream is(canonical());
    std::string line;
    uint64_t h = 0xcbf29ce484222325ull;
    while (std::getline(is, line)) {
        if (line.rfind("out=", 0) == 0) continue;
        line += "\n";
        h = fnv1a64(line.data(), line.size(), h);
    }
    return h;
}

void RunConfig::apply_line(const std::string& line) {
    auto eq = line.find('=');
    if (eq == std::string::npos)
        throw std::invalid_argument("config line without '=': " + line);
    std::string key = line.substr(0, eq);
    std::string val = line.substr(eq + 1);

    auto as_int = [&] { return std::stoi(val); };
    auto as_u64 = [&] { return static_cast<uint64_t>(std::stoull(val)); };
    auto as_double = [&] { return std::stod(val); };
    auto as_bool = [&] { return val == "1" || val == "true"; };

    if (key == "batch_size") batch_size = as_int();
    else if (key == "cowmask_coverage_max") cowmask.coverage_max = as_double();
    else if (key == "cowmask_coverage_min") cowmask.coverage_min = as_double();
    else if (key == "cowmask_sigma_max") cowmask.sigma_max = as_double();
    else if (key == "cowmask_sigma_min") cowmask.sigma_min = as_double();
    else if (key == "downsample") model.downsample = as_int();
    else if (key == "epsilon") loss.epsilon = as_double();
    else if (key == "eval_every") eval_every = as_int();
    else if (key == "eval_sequences") eval_sequences = as_int();
    else if (key == "feature_channels") model.feature_channels = as_int();
    else if (key == "frames_per_sequence") frames_per_sequence = as_int();
    else if (key == "gamma") loss.gamma = as_double();
    else if (key == "hidden_channels") model.hidden_channels = as_int();
    else if (key == "image_height") image_height = as_int();
    else if (key == "image_width") image_width = as_int();
    else if (key == "in_channels") model.in_channels = as_int();
    else if (key == "iterations") { model.iterations = as_int(); loss.iterations = as_int(); }
    else if (key == "k_set") k_set = parse_k_set(val);
    else if (key == "lambda1") loss.lambda1 = as_double();
    else if (key == "lambda2") loss.lambda2 = as_double();
    else if (key == "learning_rate") learning_rate = as_double();
    else if (key == "mask_match_bce") loss.mask_match_bce = as_bool();
    else if (key == "max_speed") max_speed = as_int();
    else if (key == "model_seed") model.seed = as_u64();
    else if (key == "out") out_dir = val;
    else if (key == "radius") model.radius = as_int();
    else if (key == "seed") seed = as_u64();
    else if (key == "sprites_per_scene") sprites_per_scene = as_int();
    else if (key == "steps") steps = as_int();
    else if (key == "strategy") strategy = strategy_from_string(val);
    else if (key == "train_sequences") train_sequences = as_int();
    else if (key == "transforms") transforms = parse_transform_list(val);
    else if (key == "zero_star") loss.zero_star = as_bool();
    else if (key == "zf_only") zf_only = as_bool();
    else throw std::invalid_argument("unknown config key '" + key + "'");
}

void RunConfig::save(const std::string& path) const {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open config for writing: " + path);
    os << canonical();
    if (!os) throw std::runtime_error("config write failed: " + path);
}

RunConfig RunConfig::load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open config: " + path);
    RunConfig cfg;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') continue;
        cfg.apply_line(line);
    }
    return cfg;
}

RunConfig make_preset(Strategy s, uint64_t seed) {
    RunConfig cfg;
    cfg.strategy = s;
    cfg.seed = seed;
    cfg.model.seed = seed;
    ActiveLosses act = active_losses(s);
    cfg.k_set = act.transformation ? std::vector<int>{1, 2} : std::vector<int>{1};
    cfg.transforms = parse_transform_list("rot");
    return cfg;
}

}  // namespace octc
