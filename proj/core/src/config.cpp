#include "a2net/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

#include "a2net/errors.hpp"

namespace a2net {

namespace {

struct Field {
    const char* key;
    const char* doc;
    std::function<std::string(const ExperimentConfig&)> get;
    std::function<void(ExperimentConfig&, const std::string&)> set;
};

long parse_long(const std::string& key, const std::string& value) {
    long out = 0;
    const auto* begin = value.data();
    const auto* end = value.data() + value.size();
    const auto res = std::from_chars(begin, end, out);
    if (res.ec != std::errc{} || res.ptr != end) {
        throw UsageError("config key '" + key + "' needs an integer, got '" + value + "'");
    }
    return out;
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
    std::uint64_t out = 0;
    const auto* begin = value.data();
    const auto* end = value.data() + value.size();
    const auto res = std::from_chars(begin, end, out);
    if (res.ec != std::errc{} || res.ptr != end) {
        throw UsageError("config key '" + key + "' needs an unsigned integer, got '" + value +
                         "'");
    }
    return out;
}

double parse_double(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        const double out = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return out;
    } catch (const std::exception&) {
        throw UsageError("config key '" + key + "' needs a number, got '" + value + "'");
    }
}

std::string format_double(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

#define LONG_FIELD(name, expr, doc)                                              \
    Field{name, doc, [](const ExperimentConfig& c) { return std::to_string(c.expr); }, \
          [](ExperimentConfig& c, const std::string& v) { c.expr = parse_long(name, v); }}
#define DOUBLE_FIELD(name, expr, doc)                                           \
    Field{name, doc, [](const ExperimentConfig& c) { return format_double(c.expr); }, \
          [](ExperimentConfig& c, const std::string& v) { c.expr = parse_double(name, v); }}
#define STRING_FIELD(name, expr, doc)                            \
    Field{name, doc, [](const ExperimentConfig& c) { return c.expr; }, \
          [](ExperimentConfig& c, const std::string& v) { c.expr = v; }}

const std::vector<Field>& fields() {
    static const std::vector<Field> table = {
        LONG_FIELD("model.input_dim", model.input_dim, "feature dimension D"),
        LONG_FIELD("model.window_steps", model.window_steps,
                   "input temporal length T (feature steps per window)"),
        LONG_FIELD("model.levels", model.num_levels, "pyramid depth L, 3..6"),
        LONG_FIELD("model.classes", model.num_classes, "foreground classes C"),
        LONG_FIELD("model.base_channels", model.base_channels,
                   "conv1 width; deeper levels scale from it"),
        LONG_FIELD("model.head_channels", model.head_channels, "anchor-free trunk width"),
        DOUBLE_FIELD("model.anchor_scale", model.anchor_scale,
                     "default anchor width in units of the level stride"),
        DOUBLE_FIELD("model.alpha", model.coeffs.alpha, "anchor center offset gain"),
        DOUBLE_FIELD("model.beta", model.coeffs.beta, "anchor width log-ratio gain"),
        DOUBLE_FIELD("loss.gamma", weights.gamma, "anchor-based branch weight"),
        DOUBLE_FIELD("loss.gamma_af", weights.gamma_af, "anchor-free classification weight"),
        DOUBLE_FIELD("loss.gamma_ab1", weights.gamma_ab1, "overlap loss weight"),
        DOUBLE_FIELD("loss.gamma_ab2", weights.gamma_ab2, "anchor regression weight"),
        DOUBLE_FIELD("optim.lr", lr, "initial learning rate"),
        LONG_FIELD("optim.batch_size", batch_size, "windows per optimizer step"),
        LONG_FIELD("optim.epochs", epochs, "training epochs"),
        LONG_FIELD("optim.decay_epoch", decay_epoch,
                   "epoch at which the learning rate is multiplied by decay_factor"),
        LONG_FIELD("optim.decay_epoch2", decay_epoch2, "second decay epoch; 0 disables"),
        DOUBLE_FIELD("optim.decay_factor", decay_factor, "learning rate decay multiplier"),
        STRING_FIELD("data.train_manifest", train_manifest, "training dataset manifest path"),
        STRING_FIELD("data.eval_manifest", eval_manifest, "evaluation dataset manifest path"),
        STRING_FIELD("data.mode", data_mode,
                     "sliding (windows over long videos) or resize (one window per video)"),
        LONG_FIELD("data.window_frames", window_frames, "raw video frames per window"),
        LONG_FIELD("data.train_stride_frames", train_stride_frames,
                   "window stride in raw frames during training"),
        LONG_FIELD("data.eval_stride_frames", eval_stride_frames,
                   "window stride in raw frames during inference"),
        DOUBLE_FIELD("data.min_keep_fraction", min_keep_fraction,
                     "smallest surviving fraction of a clipped ground truth"),
        DOUBLE_FIELD("infer.score_floor", inference.score_floor,
                     "discard detections below this confidence"),
        DOUBLE_FIELD("infer.lambda", inference.lambda,
                     "anchor-based share in the confidence merge"),
        DOUBLE_FIELD("infer.nms_iou", inference.nms_iou, "suppression IoU threshold"),
        LONG_FIELD("infer.top_k", inference.top_k, "per-window detection cap"),
        STRING_FIELD("run.branch_mode", branch_mode, "joint, af_only, or ab_only"),
        Field{"run.seed", "master random seed",
              [](const ExperimentConfig& c) { return std::to_string(c.seed); },
              [](ExperimentConfig& c, const std::string& v) {
                  c.seed = parse_u64("run.seed", v);
              }},
        LONG_FIELD("run.checkpoint_every", checkpoint_every,
                   "epochs between snapshots; 0 keeps only the final checkpoint"),
        STRING_FIELD("run.dir", run_dir, "output directory for logs and checkpoints"),
    };
    return table;
}

#undef LONG_FIELD
#undef DOUBLE_FIELD
#undef STRING_FIELD

}  // namespace

ExperimentConfig default_config() {
    return ExperimentConfig{};
}

void ExperimentConfig::validate() const {
    const auto fail = [](const std::string& msg) { throw UsageError("config: " + msg); };
    if (lr <= 0.0) fail("optim.lr must be positive");
    if (batch_size < 1) fail("optim.batch_size must be at least 1");
    if (epochs < 1) fail("optim.epochs must be at least 1");
    if (decay_factor <= 0.0 || decay_factor > 1.0) {
        fail("optim.decay_factor must lie in (0, 1]");
    }
    if (weights.gamma < 0.0 || weights.gamma_af < 0.0 || weights.gamma_ab1 < 0.0 ||
        weights.gamma_ab2 < 0.0) {
        fail("loss weights must be non-negative");
    }
    if (data_mode != "sliding" && data_mode != "resize") {
        fail("data.mode must be sliding or resize, got '" + data_mode + "'");
    }
    if (window_frames < 1 || train_stride_frames < 1 || eval_stride_frames < 1) {
        fail("window and stride frame counts must be positive");
    }
    if (min_keep_fraction <= 0.0 || min_keep_fraction > 1.0) {
        fail("data.min_keep_fraction must lie in (0, 1]");
    }
    if (inference.lambda < 0.0 || inference.lambda > 1.0) {
        fail("infer.lambda must lie in [0, 1]");
    }
    if (!(inference.nms_iou > 0.0 && inference.nms_iou < 1.0)) {
        fail("infer.nms_iou must lie in (0, 1)");
    }
    if (inference.score_floor < 0.0 || inference.top_k < 1) {
        fail("infer.score_floor must be >= 0 and infer.top_k >= 1");
    }
    if (checkpoint_every < 0) fail("run.checkpoint_every must be >= 0");
    parse_branch_mode(branch_mode);
    try {
        model.validate();
        build_pyramid_spec(model.window_steps, model.num_levels, model.base_channels,
                           model.anchor_scale);
    } catch (const std::invalid_argument& e) {
        fail(e.what());
    }
    if (model.coeffs.alpha <= 0.0 || model.coeffs.beta <= 0.0) {
        fail("model.alpha and model.beta must be positive");
    }
}

void apply_override(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
    for (const Field& f : fields()) {
        if (key == f.key) {
            f.set(cfg, value);
            return;
        }
    }
    throw UsageError("unknown config key '" + key + "' (run with --schema to list keys)");
}

std::vector<ConfigEntry> apply_config_file(ExperimentConfig& cfg,
                                           const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open config file: " + path.string());
    }
    std::vector<ConfigEntry> applied;
    std::string line;
    long line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const auto strip = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            if (b == std::string::npos) return std::string{};
            const auto e = s.find_last_not_of(" \t\r");
            return s.substr(b, e - b + 1);
        };
        const std::string text = strip(line);
        if (text.empty()) continue;
        const auto eq = text.find('=');
        if (eq == std::string::npos) {
            throw UsageError(path.string() + ":" + std::to_string(line_no) +
                             ": expected key = value");
        }
        const std::string key = strip(text.substr(0, eq));
        const std::string value = strip(text.substr(eq + 1));
        apply_override(cfg, key, value);
        applied.push_back({key, value});
    }
    return applied;
}

std::vector<ConfigEntry> config_entries(const ExperimentConfig& cfg) {
    std::vector<ConfigEntry> out;
    out.reserve(fields().size());
    for (const Field& f : fields()) {
        out.push_back({f.key, f.get(cfg)});
    }
    return out;
}

std::string serialize_config(const ExperimentConfig& cfg) {
    std::ostringstream os;
    for (const auto& [key, value] : config_entries(cfg)) {
        os << key << " = " << value << "\n";
    }
    return os.str();
}

std::string config_schema() {
    const ExperimentConfig defaults{};
    std::ostringstream os;
    for (const Field& f : fields()) {
        os << f.key << " (default " << f.get(defaults) << ")\n    " << f.doc << "\n";
    }
    return os.str();
}

}  // namespace a2net
