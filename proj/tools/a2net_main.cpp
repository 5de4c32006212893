// Command line entry point: train / infer / fuse / eval / synth / report.
// Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.

#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "a2net/config.hpp"
#include "a2net/data.hpp"
#include "a2net/errors.hpp"
#include "a2net/runner.hpp"
#include "a2net/synthetic.hpp"
#include "a2net/trainer.hpp"

namespace {

using a2net::ExperimentConfig;

struct ConfigCli {
    std::string config_file;
    std::vector<std::string> overrides;
};

void add_config_options(CLI::App& cmd, ConfigCli& cli) {
    cmd.add_option("--config", cli.config_file, "key = value config file")
        ->check(CLI::ExistingFile);
    cmd.add_option("--set", cli.overrides,
                   "override one config key (key=value, repeatable; see --schema)");
}

/// Builds the run config from defaults, the optional file, and --set
/// overrides, echoing every applied entry.
ExperimentConfig resolve_config(const ConfigCli& cli) {
    ExperimentConfig cfg = a2net::default_config();
    if (!cli.config_file.empty()) {
        for (const a2net::ConfigEntry& e : a2net::apply_config_file(cfg, cli.config_file)) {
            std::cout << "config: " << e.key << " = " << e.value << "\n";
        }
    }
    for (const std::string& assignment : cli.overrides) {
        const auto eq = assignment.find('=');
        if (eq == std::string::npos || eq == 0) {
            throw a2net::UsageError("--set expects key=value, got \"" + assignment + "\"");
        }
        const std::string key = assignment.substr(0, eq);
        const std::string value = assignment.substr(eq + 1);
        a2net::apply_override(cfg, key, value);
        std::cout << "override: " << key << " = " << value << "\n";
    }
    return cfg;
}

int cmd_train(const ConfigCli& cli, const std::string& resume) {
    ExperimentConfig cfg = resolve_config(cli);
    cfg.validate();
    if (cfg.train_manifest.empty()) {
        throw a2net::UsageError("data.train_manifest must be set for training");
    }
    if (cfg.run_dir.empty()) {
        throw a2net::UsageError("run.dir must be set for training");
    }
    std::filesystem::create_directories(cfg.run_dir);
    a2net::write_input_hashes(std::filesystem::path(cfg.run_dir) / "inputs.sha256",
                              a2net::dataset_files(cfg.train_manifest));
    const a2net::Dataset data = a2net::load_dataset(cfg.train_manifest);
    const a2net::TrainResult result = a2net::run_training(cfg, data, std::cout, resume);
    std::cout << "final checkpoint: " << result.final_checkpoint.string() << "\n";
    return 0;
}

int cmd_infer(const ConfigCli& cli, const std::string& checkpoint, const std::string& manifest,
              const std::string& out) {
    ExperimentConfig cfg = resolve_config(cli);
    cfg.validate();
    const std::string manifest_path = manifest.empty() ? cfg.eval_manifest : manifest;
    if (manifest_path.empty()) {
        throw a2net::UsageError("pass --data or set data.eval_manifest");
    }
    const a2net::Dataset data = a2net::load_dataset(manifest_path);
    const auto dets = a2net::run_inference(cfg, checkpoint, data, std::cout);
    a2net::write_detections(out, dets);
    std::cout << dets.size() << " detections -> " << out << "\n";
    return 0;
}

int cmd_fuse(const ConfigCli& cli, const std::string& af_checkpoint,
             const std::string& ab_checkpoint, const std::string& manifest,
             const std::string& out) {
    ExperimentConfig cfg = resolve_config(cli);
    cfg.validate();
    const std::string manifest_path = manifest.empty() ? cfg.eval_manifest : manifest;
    if (manifest_path.empty()) {
        throw a2net::UsageError("pass --data or set data.eval_manifest");
    }
    const a2net::Dataset data = a2net::load_dataset(manifest_path);
    const auto dets = a2net::run_fusion(cfg, af_checkpoint, ab_checkpoint, data, std::cout);
    a2net::write_detections(out, dets);
    std::cout << dets.size() << " fused detections -> " << out << "\n";
    return 0;
}

int cmd_eval(const std::string& detections, const std::string& manifest,
             const std::string& thresholds, double bucket_iou, bool eleven_point,
             const std::string& out_json, const std::string& out_csv) {
    const auto dets = a2net::read_detections(detections);
    const a2net::Dataset data = a2net::load_dataset(manifest);
    const a2net::EvalReport report = a2net::run_evaluation(
        dets, data, a2net::parse_thresholds(thresholds), bucket_iou, eleven_point);
    std::cout << report.to_table();
    if (!out_json.empty()) {
        std::ofstream out(out_json, std::ios::trunc);
        if (!out) throw a2net::DataError("cannot write " + out_json);
        out << report.to_json() << "\n";
    }
    if (!out_csv.empty()) {
        std::ofstream out(out_csv, std::ios::trunc);
        if (!out) throw a2net::DataError("cannot write " + out_csv);
        out << report.to_csv();
    }
    if (!report.unknown_videos.empty()) {
        std::cerr << "detections reference unknown videos (excluded):";
        for (const std::string& id : report.unknown_videos) std::cerr << " " << id;
        std::cerr << "\n";
        return 2;
    }
    return 0;
}

int cmd_synth(const a2net::SynthSpec& spec, const std::string& mixture_text,
              const std::string& out_dir) {
    a2net::SynthSpec resolved = spec;
    if (!mixture_text.empty()) {
        std::stringstream ss(mixture_text);
        std::string piece;
        std::vector<double> parts;
        while (std::getline(ss, piece, ',')) {
            try {
                parts.push_back(std::stod(piece));
            } catch (const std::exception&) {
                throw a2net::UsageError("bad mixture component \"" + piece + "\"");
            }
        }
        if (parts.size() != resolved.mixture.size()) {
            throw a2net::UsageError("--mixture needs exactly 5 comma-separated weights");
        }
        std::copy(parts.begin(), parts.end(), resolved.mixture.begin());
    }
    resolved.validate();
    const a2net::SynthResult result = a2net::run_synth(resolved, out_dir);
    std::cout << "wrote " << result.dataset.videos.size() << " videos to " << out_dir << " ("
              << result.placed_actions << "/" << result.requested_actions
              << " actions placed)\n";
    return 0;
}

int cmd_report(const std::string& log, const std::string& out) {
    a2net::write_loss_curves(log, out);
    std::cout << "loss curves -> " << out << "\n";
    return 0;
}

int run_cli(int argc, char** argv) {
    CLI::App app{"A2Net temporal action localization"};
    app.require_subcommand(0, 1);
    bool schema = false;
    app.add_flag("--schema", schema, "print every config key with default and meaning");

    ConfigCli train_cli;
    std::string resume;
    CLI::App* train = app.add_subcommand("train", "train a model from a config");
    add_config_options(*train, train_cli);
    train->add_option("--resume", resume, "checkpoint to continue from")
        ->check(CLI::ExistingFile);

    ConfigCli infer_cli;
    std::string checkpoint, infer_data, infer_out = "detections.jsonl";
    CLI::App* infer = app.add_subcommand("infer", "run a checkpoint over a dataset");
    add_config_options(*infer, infer_cli);
    infer->add_option("--checkpoint", checkpoint, "trained model")
        ->required()
        ->check(CLI::ExistingFile);
    infer->add_option("--data", infer_data, "manifest to run on (default: data.eval_manifest)");
    infer->add_option("--out", infer_out, "detections JSONL path");

    ConfigCli fuse_cli;
    std::string af_ckpt, ab_ckpt, fuse_data, fuse_out = "detections.jsonl";
    CLI::App* fuse = app.add_subcommand("fuse", "pool two single-branch checkpoints");
    add_config_options(*fuse, fuse_cli);
    fuse->add_option("--af", af_ckpt, "af_only checkpoint")->required()->check(CLI::ExistingFile);
    fuse->add_option("--ab", ab_ckpt, "ab_only checkpoint")->required()->check(CLI::ExistingFile);
    fuse->add_option("--data", fuse_data, "manifest to run on (default: data.eval_manifest)");
    fuse->add_option("--out", fuse_out, "detections JSONL path");

    std::string eval_dets, eval_data, eval_thresholds = "thumos";
    std::string eval_json, eval_csv;
    double bucket_iou = 0.5;
    bool eleven_point = false;
    CLI::App* eval = app.add_subcommand("eval", "score detections against ground truth");
    eval->add_option("--detections", eval_dets, "detections JSONL")
        ->required()
        ->check(CLI::ExistingFile);
    eval->add_option("--data", eval_data, "ground-truth manifest")
        ->required()
        ->check(CLI::ExistingFile);
    eval->add_option("--thresholds", eval_thresholds,
                     "thumos | activitynet | comma-separated IoU list");
    eval->add_option("--bucket-iou", bucket_iou, "IoU threshold for the duration-bucket table");
    eval->add_flag("--eleven-point", eleven_point, "11-point interpolated AP");
    eval->add_option("--out-json", eval_json, "write the full report as JSON");
    eval->add_option("--out-csv", eval_csv, "write per-class AP rows as CSV");

    a2net::SynthSpec synth_spec;
    std::string mixture_text, synth_out;
    CLI::App* synth = app.add_subcommand("synth", "generate a synthetic corpus");
    synth->add_option("--out", synth_out, "output dataset directory")->required();
    synth->add_option("--videos", synth_spec.num_videos, "number of videos");
    synth->add_option("--classes", synth_spec.num_classes, "number of action classes");
    synth->add_option("--dim", synth_spec.feature_dim, "feature dimension");
    synth->add_option("--steps", synth_spec.video_steps, "feature steps per video");
    synth->add_option("--fps", synth_spec.fps, "video frame rate");
    synth->add_option("--frames-per-feature", synth_spec.frames_per_feature,
                      "video frames per feature step");
    synth->add_option("--actions", synth_spec.actions_per_video, "actions per video");
    synth->add_option("--mixture", mixture_text,
                      "duration mixture over ES,S,M,L,EL (five weights)");
    synth->add_option("--snr", synth_spec.snr, "template amplitude over unit noise");
    synth->add_option("--min-es", synth_spec.min_es_sec, "shortest action (seconds)");
    synth->add_option("--max-el", synth_spec.max_el_sec, "longest action (seconds)");
    synth->add_option("--gap", synth_spec.gap_sec, "minimum spacing between actions (seconds)");
    synth->add_option("--seed", synth_spec.seed, "corpus seed");

    std::string report_log, report_out = "loss_curves.csv";
    CLI::App* report = app.add_subcommand("report", "extract loss curves from a training log");
    report->add_option("--log", report_log, "train_log.jsonl from a run directory")
        ->required()
        ->check(CLI::ExistingFile);
    report->add_option("--out", report_out, "CSV output path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    if (schema) {
        std::cout << a2net::config_schema();
        return 0;
    }
    if (train->parsed()) return cmd_train(train_cli, resume);
    if (infer->parsed()) return cmd_infer(infer_cli, checkpoint, infer_data, infer_out);
    if (fuse->parsed()) return cmd_fuse(fuse_cli, af_ckpt, ab_ckpt, fuse_data, fuse_out);
    if (eval->parsed()) {
        return cmd_eval(eval_dets, eval_data, eval_thresholds, bucket_iou, eleven_point,
                        eval_json, eval_csv);
    }
    if (synth->parsed()) return cmd_synth(synth_spec, mixture_text, synth_out);
    if (report->parsed()) return cmd_report(report_log, report_out);
    std::cout << app.help();
    return 1;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run_cli(argc, argv);
    } catch (const a2net::UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const a2net::DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const a2net::NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    } catch (const std::invalid_argument& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
