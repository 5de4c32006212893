#include "a2net/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>

#include <nlohmann/json.hpp>

#include "a2net/errors.hpp"
#include "a2net/losses.hpp"
#include "a2net/rng.hpp"
#include "a2net/targets.hpp"

namespace a2net {

namespace {

using nlohmann::json;

// Seed salts separating the independent random streams of a run.
constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kShuffleStream = 2;
constexpr std::uint64_t kNegativeStream = 3;

long window_steps_from_frames(const ExperimentConfig& cfg, const VideoRecord& video,
                              long frames, const char* what) {
    const double steps = static_cast<double>(frames) / video.frames_per_feature;
    const double rounded = std::round(steps);
    if (std::abs(steps - rounded) > 1e-9 || rounded < 1.0) {
        throw DataError("video '" + video.video_id + "': " + what + " of " +
                        std::to_string(frames) + " frames is not a whole number of " +
                        "feature steps (frames_per_feature " +
                        std::to_string(video.frames_per_feature) + ")");
    }
    (void)cfg;
    return static_cast<long>(rounded);
}

std::vector<WindowSample> windows_for(const ExperimentConfig& cfg, const VideoRecord& video,
                                      bool training) {
    if (cfg.data_mode == "resize") {
        WindowSample w = make_resized_window(video, cfg.model.window_steps);
        if (training && w.gt.empty()) return {};
        return {std::move(w)};
    }
    const long window = window_steps_from_frames(cfg, video, cfg.window_frames, "window");
    if (window != cfg.model.window_steps) {
        throw DataError("video '" + video.video_id + "': window of " +
                        std::to_string(cfg.window_frames) + " frames spans " +
                        std::to_string(window) + " steps but the model expects " +
                        std::to_string(cfg.model.window_steps));
    }
    const long stride = window_steps_from_frames(
        cfg, video, training ? cfg.train_stride_frames : cfg.eval_stride_frames, "stride");
    return make_windows(video, window, stride, training, cfg.min_keep_fraction);
}

double lr_for_epoch(const ExperimentConfig& cfg, long epoch) {
    double lr = cfg.lr;
    if (epoch >= cfg.decay_epoch) lr *= cfg.decay_factor;
    if (cfg.decay_epoch2 > 0 && epoch >= cfg.decay_epoch2) lr *= cfg.decay_factor;
    return lr;
}

json model_to_json(const ModelConfig& m) {
    return json{{"input_dim", m.input_dim},
                {"window_steps", m.window_steps},
                {"levels", m.num_levels},
                {"classes", m.num_classes},
                {"base_channels", m.base_channels},
                {"head_channels", m.head_channels},
                {"anchor_scale", m.anchor_scale},
                {"alpha", m.coeffs.alpha},
                {"beta", m.coeffs.beta}};
}

ModelConfig model_from_json(const json& j) {
    ModelConfig m;
    m.input_dim = j.at("input_dim").get<long>();
    m.window_steps = j.at("window_steps").get<long>();
    m.num_levels = j.at("levels").get<long>();
    m.num_classes = j.at("classes").get<long>();
    m.base_channels = j.at("base_channels").get<long>();
    m.head_channels = j.at("head_channels").get<long>();
    m.anchor_scale = j.at("anchor_scale").get<double>();
    m.coeffs.alpha = j.at("alpha").get<double>();
    m.coeffs.beta = j.at("beta").get<double>();
    return m;
}

}  // namespace

std::vector<WindowSample> windows_for_training(const ExperimentConfig& cfg,
                                               const VideoRecord& video) {
    return windows_for(cfg, video, true);
}

std::vector<WindowSample> windows_for_inference(const ExperimentConfig& cfg,
                                                const VideoRecord& video) {
    return windows_for(cfg, video, false);
}

Checkpoint make_checkpoint(const Network& net, const Adam& adam, const ExperimentConfig& cfg,
                           long completed_epochs) {
    json meta;
    meta["model"] = model_to_json(net.config());
    meta["branch_mode"] = cfg.branch_mode;
    meta["completed_epochs"] = completed_epochs;
    meta["seed"] = cfg.seed;

    Checkpoint ckpt;
    ckpt.meta_json = meta.dump();
    ckpt.tensors = net.state();
    ckpt.tensors.emplace_back("adam.step_count",
                              Tensor::scalar(static_cast<double>(adam.step_count())));
    for (const auto& [name, t] : adam.first_moments()) {
        ckpt.tensors.emplace_back("adam.m." + name, t);
    }
    for (const auto& [name, t] : adam.second_moments()) {
        ckpt.tensors.emplace_back("adam.v." + name, t);
    }
    return ckpt;
}

CheckpointInfo parse_checkpoint_meta(const std::string& meta_json) {
    try {
        const json meta = json::parse(meta_json);
        CheckpointInfo info;
        info.model = model_from_json(meta.at("model"));
        info.branch_mode = meta.at("branch_mode").get<std::string>();
        info.completed_epochs = meta.at("completed_epochs").get<long>();
        info.seed = meta.at("seed").get<std::uint64_t>();
        return info;
    } catch (const json::exception& e) {
        throw DataError(std::string("checkpoint metadata unreadable: ") + e.what());
    }
}

void load_network(Network& net, const Checkpoint& ckpt) {
    net.load_state(ckpt.tensors);
}

void load_adam(Adam& adam, const Network& net, const Checkpoint& ckpt) {
    const Tensor* step = ckpt.find("adam.step_count");
    if (step == nullptr) {
        throw DataError("checkpoint holds no optimizer state");
    }
    std::map<std::string, Tensor> m, v;
    for (const auto& [name, node] : net.params()) {
        const Tensor* tm = ckpt.find("adam.m." + name);
        const Tensor* tv = ckpt.find("adam.v." + name);
        if (tm == nullptr || tv == nullptr) {
            throw DataError("checkpoint optimizer state is missing '" + name + "'");
        }
        m.emplace(name, *tm);
        v.emplace(name, *tv);
    }
    adam.restore(static_cast<long>(step->item()), std::move(m), std::move(v));
}

TrainResult run_training(const ExperimentConfig& cfg, const Dataset& data, std::ostream& info,
                         const std::filesystem::path& resume_from) {
    cfg.validate();
    if (cfg.run_dir.empty()) {
        throw UsageError("run.dir must be set for training");
    }
    if (data.num_classes != cfg.model.num_classes) {
        throw DataError("dataset declares " + std::to_string(data.num_classes) +
                        " classes but the model expects " +
                        std::to_string(cfg.model.num_classes));
    }
    const std::filesystem::path run_dir = cfg.run_dir;
    std::filesystem::create_directories(run_dir);

    // Window the whole corpus once; window order is reshuffled per epoch.
    std::vector<WindowSample> windows;
    for (const VideoRecord& video : data.videos) {
        if (video.features.dim(0) != cfg.model.input_dim) {
            throw DataError("video '" + video.video_id + "' has feature dimension " +
                            std::to_string(video.features.dim(0)) + " but the model expects " +
                            std::to_string(cfg.model.input_dim));
        }
        for (WindowSample& w : windows_for_training(cfg, video)) {
            windows.push_back(std::move(w));
        }
    }
    if (windows.empty()) {
        throw DataError("no training windows survive filtering");
    }

    Network net(cfg.model, mix_seed(cfg.seed, kInitStream));
    Adam adam(AdamConfig{cfg.lr, 0.9, 0.999, 1e-8});
    const BranchMode mode = cfg.mode();
    long start_epoch = 1;

    if (!resume_from.empty()) {
        const Checkpoint ckpt = load_checkpoint(resume_from);
        const CheckpointInfo meta = parse_checkpoint_meta(ckpt.meta_json);
        if (meta.branch_mode != cfg.branch_mode) {
            throw DataError("checkpoint was trained as " + meta.branch_mode +
                            " but config asks for " + cfg.branch_mode);
        }
        load_network(net, ckpt);
        load_adam(adam, net, ckpt);
        start_epoch = meta.completed_epochs + 1;
        info << "resuming after epoch " << meta.completed_epochs << "\n";
    }

    {
        std::ofstream cfg_out(run_dir / "config.resolved", std::ios::trunc);
        cfg_out << serialize_config(cfg);
    }
    std::ofstream log(run_dir / "train_log.jsonl",
                      resume_from.empty() ? std::ios::trunc : std::ios::app);
    if (!log) {
        throw DataError("cannot open training log in " + run_dir.string());
    }

    const PyramidSpec& spec = net.pyramid();
    TrainResult result;
    result.steps = (start_epoch - 1) *
                   ((static_cast<long>(windows.size()) + cfg.batch_size - 1) / cfg.batch_size);

    auto snapshot = [&](long completed, const std::filesystem::path& name) {
        save_checkpoint(run_dir / name, make_checkpoint(net, adam, cfg, completed));
    };

    for (long epoch = start_epoch; epoch <= cfg.epochs; ++epoch) {
        adam.set_lr(lr_for_epoch(cfg, epoch));

        std::vector<long> order(windows.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<long>(i);
        Rng shuffle_rng(mix_seed(mix_seed(cfg.seed, kShuffleStream), static_cast<std::uint64_t>(epoch)));
        shuffle_rng.shuffle(order);

        double epoch_loss = 0.0;
        long epoch_batches = 0;
        for (std::size_t pos = 0; pos < order.size(); pos += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t take =
                std::min(order.size() - pos, static_cast<std::size_t>(cfg.batch_size));
            const long b = static_cast<long>(take);

            Tensor batch({b, cfg.model.input_dim, cfg.model.window_steps});
            std::vector<AfTargets> af;
            std::vector<AbTargets> ab;
            af.reserve(take);
            ab.reserve(take);
            for (std::size_t k = 0; k < take; ++k) {
                const WindowSample& w = windows[static_cast<std::size_t>(order[pos + k])];
                std::copy(w.features.values().begin(), w.features.values().end(),
                          batch.data() + static_cast<long>(k) * cfg.model.input_dim *
                                             cfg.model.window_steps);
                if (mode != BranchMode::ab_only) {
                    af.push_back(encode_af(w.gt, spec));
                }
                if (mode != BranchMode::af_only) {
                    const std::uint64_t neg_seed =
                        mix_seed(mix_seed(mix_seed(cfg.seed, kNegativeStream),
                                          static_cast<std::uint64_t>(epoch)),
                                 static_cast<std::uint64_t>(order[pos + k]));
                    ab.push_back(encode_ab(w.gt, spec, cfg.model.coeffs, neg_seed));
                }
            }

            const ModelOutputs outputs = net.forward(batch);
            const LossNodes losses = build_losses(outputs, af, ab, spec, cfg.weights, mode);
            const double total = losses.total->value.item();
            if (!std::isfinite(total)) {
                throw NumericalError("training diverged: non-finite loss at epoch " +
                                     std::to_string(epoch) + ", step " +
                                     std::to_string(result.steps + 1));
            }

            net.zero_grads();
            backward(losses.total);
            adam.step(net.params());

            ++result.steps;
            ++epoch_batches;
            epoch_loss += total;
            log << "{\"step\":" << result.steps << ",\"epoch\":" << epoch << ",\"lr\":"
                << adam.lr() << ",\"loss\":" << losses.report().to_json() << "}\n";
        }
        log.flush();

        const double mean = epoch_loss / static_cast<double>(epoch_batches);
        result.epoch_mean_loss.push_back(mean);
        info << "epoch " << epoch << "/" << cfg.epochs << "  mean loss " << mean << "  lr "
             << adam.lr() << "\n";

        if (cfg.checkpoint_every > 0 && epoch % cfg.checkpoint_every == 0 &&
            epoch != cfg.epochs) {
            char name[48];
            std::snprintf(name, sizeof(name), "ckpt_epoch_%04ld.ckpt", epoch);
            snapshot(epoch, name);
        }
    }

    snapshot(cfg.epochs, "ckpt_final.ckpt");
    result.final_checkpoint = run_dir / "ckpt_final.ckpt";
    return result;
}

}  // namespace a2net
