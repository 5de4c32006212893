#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "a2net/checkpoint.hpp"
#include "a2net/errors.hpp"
#include "a2net/rng.hpp"
#include "a2net/runner.hpp"
#include "a2net/trainer.hpp"

namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const char* tag) {
        path = fs::temp_directory_path() / (std::string("a2net_runner_") + tag);
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

a2net::ExperimentConfig tiny_config(const fs::path& run_dir) {
    a2net::ExperimentConfig cfg = a2net::default_config();
    cfg.model.input_dim = 6;
    cfg.model.window_steps = 16;
    cfg.model.num_levels = 3;
    cfg.model.num_classes = 2;
    cfg.model.base_channels = 4;
    cfg.model.head_channels = 4;
    cfg.model.coeffs.alpha = 0.1;
    cfg.model.coeffs.beta = 0.1;
    cfg.lr = 1e-3;
    cfg.batch_size = 2;
    cfg.epochs = 1;
    cfg.decay_epoch = 100;
    cfg.decay_epoch2 = 0;
    cfg.window_frames = 64;  // 16 steps at 4 frames per step
    cfg.train_stride_frames = 32;
    cfg.eval_stride_frames = 32;  // 8 steps: windows at 0, 8, 16
    cfg.inference.score_floor = 0.01;
    cfg.inference.top_k = 50;
    cfg.seed = 21;
    cfg.run_dir = run_dir.string();
    return cfg;
}

a2net::Dataset tiny_dataset(std::uint64_t seed = 7) {
    a2net::Dataset ds;
    ds.num_classes = 2;
    a2net::Rng rng(seed);
    for (int i = 0; i < 3; ++i) {
        a2net::VideoRecord v;
        v.video_id = "vid" + std::to_string(i);
        v.fps = 16.0;
        v.frames_per_feature = 4.0;  // feature fps 4, video spans 8 s
        std::vector<double> feats(6 * 32);
        for (auto& x : feats) x = rng.gaussian();
        v.features = a2net::Tensor({6, 32}, std::move(feats));
        v.annotations = {{0.5, 2.5, 1, 1.0}, {4.0, 6.5, 2, 1.0}};
        ds.videos.push_back(std::move(v));
    }
    return ds;
}

/// One checkpoint per branch mode, trained once and shared by every case
/// in this file (inference never mutates them).
struct Checkpoints {
    TempDir dir{"fixture"};
    a2net::Dataset ds = tiny_dataset();
    fs::path joint, af, ab;

    Checkpoints() {
        joint = train("joint");
        af = train("af_only");
        ab = train("ab_only");
    }

    fs::path train(const std::string& mode) {
        a2net::ExperimentConfig cfg = tiny_config(dir.path / mode);
        cfg.branch_mode = mode;
        std::ostringstream sink;
        return a2net::run_training(cfg, ds, sink).final_checkpoint;
    }

    a2net::ExperimentConfig config(const std::string& mode) const {
        a2net::ExperimentConfig cfg = tiny_config(dir.path / mode);
        cfg.branch_mode = mode;
        return cfg;
    }
};

const Checkpoints& shared() {
    static Checkpoints fixture;
    return fixture;
}

bool same_detection(const a2net::VideoDetection& a, const a2net::VideoDetection& b) {
    return a.video_id == b.video_id && a.t_start_sec == b.t_start_sec &&
           a.t_end_sec == b.t_end_sec && a.label == b.label && a.score == b.score &&
           a.branch == b.branch;
}

bool same_detections(const std::vector<a2net::VideoDetection>& a,
                     const std::vector<a2net::VideoDetection>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (!same_detection(a[i], b[i])) return false;
    }
    return true;
}

void write_lines(const fs::path& p, const std::vector<std::string>& lines) {
    std::ofstream out(p, std::ios::binary);
    for (const auto& l : lines) out << l << "\n";
}

}  // namespace

TEST_CASE("detections round-trip through jsonl") {
    TempDir dir("jsonl");
    const fs::path file = dir.path / "dets.jsonl";
    std::vector<a2net::VideoDetection> dets{
        {"clip_a", 1.0 / 3.0, 0.1 + 0.2 + 2.0, 1, 2.0 / 7.0, a2net::Branch::af},
        {"clip_a", 0.25, 0.75, 2, 1e-12, a2net::Branch::ab},
        {"clip_b", 5.0, 6.5, 1, 0.5, a2net::Branch::ab},
    };
    a2net::write_detections(file, dets);
    CHECK(same_detections(a2net::read_detections(file), dets));

    SUBCASE("blank lines are skipped") {
        std::ifstream in(file, std::ios::binary);
        std::ostringstream buf;
        buf << in.rdbuf();
        std::string body = buf.str();
        body.insert(body.find('\n') + 1, " \t\n\n");
        std::ofstream(file, std::ios::binary) << body;
        CHECK(same_detections(a2net::read_detections(file), dets));
    }

    SUBCASE("an empty file is an empty list") {
        write_lines(file, {});
        CHECK(a2net::read_detections(file).empty());
    }
}

TEST_CASE("malformed detection rows name their line") {
    TempDir dir("badjsonl");
    const fs::path file = dir.path / "dets.jsonl";
    const std::string good =
        R"({"video_id":"v","t_start_sec":1.0,"t_end_sec":2.0,"label":1,"score":0.5,"branch":"af"})";

    SUBCASE("missing file") {
        CHECK_THROWS_WITH_AS(a2net::read_detections(dir.path / "absent.jsonl"),
                             doctest::Contains("cannot open"), a2net::DataError);
    }
    SUBCASE("broken json on line 2") {
        write_lines(file, {good, "not json"});
        CHECK_THROWS_WITH_AS(a2net::read_detections(file), doctest::Contains(":2"),
                             a2net::DataError);
    }
    SUBCASE("background label") {
        write_lines(
            file,
            {R"({"video_id":"v","t_start_sec":1.0,"t_end_sec":2.0,"label":0,"score":0.5,"branch":"af"})"});
        CHECK_THROWS_WITH_AS(a2net::read_detections(file),
                             doctest::Contains("label must be a positive class id"),
                             a2net::DataError);
    }
    SUBCASE("degenerate interval") {
        write_lines(
            file,
            {R"({"video_id":"v","t_start_sec":2.0,"t_end_sec":2.0,"label":1,"score":0.5,"branch":"af"})"});
        CHECK_THROWS_WITH_AS(a2net::read_detections(file),
                             doctest::Contains("t_end_sec must exceed t_start_sec"),
                             a2net::DataError);
    }
    SUBCASE("unknown branch") {
        write_lines(
            file,
            {R"({"video_id":"v","t_start_sec":1.0,"t_end_sec":2.0,"label":1,"score":0.5,"branch":"xy"})"});
        CHECK_THROWS_WITH_AS(a2net::read_detections(file), doctest::Contains("unknown branch"),
                             a2net::DataError);
    }
    SUBCASE("missing field") {
        write_lines(file,
                    {good, R"({"video_id":"v","t_start_sec":1.0,"t_end_sec":2.0,"label":1})"});
        CHECK_THROWS_WITH_AS(a2net::read_detections(file), doctest::Contains(":2"),
                             a2net::DataError);
    }
    SUBCASE("overflowing score") {
        write_lines(
            file,
            {R"({"video_id":"v","t_start_sec":1.0,"t_end_sec":2.0,"label":1,"score":1e999,"branch":"af"})"});
        CHECK_THROWS_WITH_AS(a2net::read_detections(file), doctest::Contains(":1"),
                             a2net::DataError);
    }
}

TEST_CASE("detections group by video in order") {
    std::vector<a2net::VideoDetection> dets{
        {"b", 1.0, 2.0, 1, 0.9, a2net::Branch::af},
        {"a", 3.0, 4.0, 2, 0.8, a2net::Branch::ab},
        {"b", 5.0, 6.0, 2, 0.7, a2net::Branch::ab},
    };
    auto by_video = a2net::detections_by_video(dets);
    REQUIRE(by_video.size() == 2);
    REQUIRE(by_video.at("a").size() == 1);
    REQUIRE(by_video.at("b").size() == 2);
    CHECK(by_video.at("a")[0].label == 2);
    CHECK(by_video.at("a")[0].branch == a2net::Branch::ab);
    CHECK(by_video.at("b")[0].start == 1.0);
    CHECK(by_video.at("b")[1].end == 6.0);
    CHECK(by_video.at("b")[1].score == 0.7);
}

TEST_CASE("threshold presets and explicit lists") {
    SUBCASE("presets") {
        auto thumos = a2net::parse_thresholds("thumos");
        REQUIRE(thumos.size() == 7);
        CHECK(thumos.front() == 0.1);
        CHECK(thumos.back() == 0.7);
        auto anet = a2net::parse_thresholds("activitynet");
        REQUIRE(anet.size() == 10);
        CHECK(anet.front() == 0.5);
        CHECK(anet.back() == 0.95);
    }
    SUBCASE("explicit list with spaces") {
        auto got = a2net::parse_thresholds(" 0.3 ,0.5, 0.75");
        REQUIRE(got.size() == 3);
        CHECK(got[0] == 0.3);
        CHECK(got[1] == 0.5);
        CHECK(got[2] == 0.75);
    }
    SUBCASE("rejections") {
        CHECK_THROWS_AS(a2net::parse_thresholds("xyz"), a2net::UsageError);
        CHECK_THROWS_AS(a2net::parse_thresholds("0"), a2net::UsageError);
        CHECK_THROWS_AS(a2net::parse_thresholds("-0.3"), a2net::UsageError);
        CHECK_THROWS_AS(a2net::parse_thresholds("1.5"), a2net::UsageError);
        CHECK_THROWS_AS(a2net::parse_thresholds("0.3;0.5"), a2net::UsageError);
        CHECK_THROWS_WITH_AS(a2net::parse_thresholds(""), doctest::Contains("empty"),
                             a2net::UsageError);
    }
}

TEST_CASE("inference maps windows onto the video timeline deterministically") {
    const Checkpoints& fx = shared();
    a2net::ExperimentConfig cfg = fx.config("joint");
    std::ostringstream info;
    auto dets = a2net::run_inference(cfg, fx.joint, fx.ds, info);

    REQUIRE(!dets.empty());
    for (const auto& d : dets) {
        CHECK(d.t_end_sec > d.t_start_sec);
        CHECK(d.t_start_sec >= 0.0);
        CHECK(d.t_end_sec <= 8.0);  // 32 steps at 4 feature fps
        CHECK(d.label >= 1);
        CHECK(d.label <= 2);
        CHECK(d.score >= cfg.inference.score_floor);
    }
    // Every dataset video is visited and reported.
    const std::string log = info.str();
    for (const auto& v : fx.ds.videos) {
        CHECK(log.find(v.video_id + ": 3 windows") != std::string::npos);
    }

    std::ostringstream again;
    CHECK(same_detections(a2net::run_inference(cfg, fx.joint, fx.ds, again), dets));
}

TEST_CASE("the per-window cap bounds detections") {
    const Checkpoints& fx = shared();
    a2net::ExperimentConfig cfg = fx.config("joint");
    std::ostringstream sink;
    auto uncapped = a2net::run_inference(cfg, fx.joint, fx.ds, sink);
    cfg.inference.top_k = 1;
    auto capped = a2net::run_inference(cfg, fx.joint, fx.ds, sink);
    CHECK(capped.size() <= uncapped.size());
    for (const auto& [video_id, dets] : a2net::detections_by_video(capped)) {
        CHECK(dets.size() <= 3);  // one survivor per window, three windows
    }
}

TEST_CASE("inference refuses mismatched checkpoints") {
    const Checkpoints& fx = shared();
    std::ostringstream sink;

    SUBCASE("missing file") {
        CHECK_THROWS_AS(a2net::run_inference(fx.config("joint"), fx.dir.path / "nope.ckpt",
                                             fx.ds, sink),
                        a2net::DataError);
    }
    SUBCASE("branch mode mismatch") {
        CHECK_THROWS_WITH_AS(a2net::run_inference(fx.config("joint"), fx.af, fx.ds, sink),
                             doctest::Contains("was trained as af_only but the config asks "
                                               "for joint"),
                             a2net::DataError);
    }
    SUBCASE("model shape mismatch") {
        a2net::ExperimentConfig cfg = fx.config("joint");
        cfg.model.base_channels = 8;
        CHECK_THROWS_WITH_AS(a2net::run_inference(cfg, fx.joint, fx.ds, sink),
                             doctest::Contains("model.base_channels"), a2net::DataError);
    }
}

TEST_CASE("fusion pools both branches") {
    const Checkpoints& fx = shared();
    a2net::ExperimentConfig cfg = fx.config("joint");
    std::ostringstream info;
    auto fused = a2net::run_fusion(cfg, fx.af, fx.ab, fx.ds, info);

    REQUIRE(!fused.empty());
    bool saw_af = false;
    bool saw_ab = false;
    for (const auto& d : fused) {
        saw_af = saw_af || d.branch == a2net::Branch::af;
        saw_ab = saw_ab || d.branch == a2net::Branch::ab;
    }
    CHECK(saw_af);
    CHECK(saw_ab);
    CHECK(info.str().find("fused detections") != std::string::npos);

    SUBCASE("checkpoint order is enforced") {
        std::ostringstream sink;
        CHECK_THROWS_WITH_AS(a2net::run_fusion(cfg, fx.ab, fx.af, fx.ds, sink),
                             doctest::Contains("fusion needs an af_only checkpoint first"),
                             a2net::DataError);
        CHECK_THROWS_WITH_AS(a2net::run_fusion(cfg, fx.af, fx.joint, fx.ds, sink),
                             doctest::Contains("fusion needs an ab_only checkpoint second"),
                             a2net::DataError);
    }

    SUBCASE("silencing the anchor branch reduces fusion to anchor-free inference") {
        // Push the anchor head's background bias sky-high so its class
        // probabilities vanish below the score floor.
        a2net::Checkpoint ckpt = a2net::load_checkpoint(fx.ab);
        long patched = 0;
        for (auto& [name, tensor] : ckpt.tensors) {
            // Parameters only; the checkpoint also carries adam.m/adam.v
            // copies of every name.
            if (name.rfind("adam.", 0) == std::string::npos &&
                name.find(".ab.pred.bias") != std::string::npos) {
                tensor.data()[0] += 1e4;
                ++patched;
            }
        }
        REQUIRE(patched == 3);
        TempDir dir("silenced");
        const fs::path silenced = dir.path / "ab_silenced.ckpt";
        a2net::save_checkpoint(silenced, ckpt);

        std::ostringstream sink;
        auto fused_silent = a2net::run_fusion(cfg, fx.af, silenced, fx.ds, sink);
        auto af_alone = a2net::run_inference(fx.config("af_only"), fx.af, fx.ds, sink);
        CHECK(same_detections(fused_silent, af_alone));
    }
}

TEST_CASE("evaluation counts every dataset video") {
    const Checkpoints& fx = shared();
    std::vector<a2net::VideoDetection> perfect;
    for (const auto& v : fx.ds.videos) {
        for (const auto& g : v.annotations) {
            perfect.push_back({v.video_id, g.start, g.end, g.label, 0.9, a2net::Branch::af});
        }
    }

    SUBCASE("perfect detections score 1") {
        auto report = a2net::run_evaluation(perfect, fx.ds, {0.5, 0.75});
        CHECK(report.average_map == doctest::Approx(1.0));
        CHECK(report.unknown_videos.empty());
    }
    SUBCASE("videos without detections still count toward recall") {
        std::vector<a2net::VideoDetection> only_first(perfect.begin(), perfect.begin() + 2);
        auto report = a2net::run_evaluation(only_first, fx.ds, {0.5});
        // One of three instances found per class.
        CHECK(report.average_map == doctest::Approx(1.0 / 3.0));
    }
    SUBCASE("detections on unknown videos are reported and excluded") {
        perfect.push_back({"ghost", 0.0, 1.0, 1, 0.99, a2net::Branch::af});
        auto report = a2net::run_evaluation(perfect, fx.ds, {0.5});
        REQUIRE(report.unknown_videos.size() == 1);
        CHECK(report.unknown_videos[0] == "ghost");
        CHECK(report.average_map == doctest::Approx(1.0));
    }
}

TEST_CASE("loss curves flatten the training log into csv") {
    const Checkpoints& fx = shared();
    TempDir dir("curves");
    const fs::path csv = dir.path / "curves.csv";
    a2net::write_loss_curves(fx.dir.path / "joint" / "train_log.jsonl", csv);

    std::ifstream in(csv);
    REQUIRE(in.good());
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) lines.push_back(line);
    REQUIRE(lines.size() == 6);  // header plus five steps
    CHECK(lines[0] == "step,epoch,lr,total,af_cls,af_reg,ab_cls,ab_overlap,ab_reg");
    std::stringstream first(lines[1]);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(first, cell, ',')) cells.push_back(cell);
    REQUIRE(cells.size() == 9);
    CHECK(cells[0] == "1");
    CHECK(cells[1] == "1");
    CHECK(std::stod(cells[2]) == 1e-3);
    CHECK(std::isfinite(std::stod(cells[3])));

    SUBCASE("corrupt rows name their line") {
        const fs::path bad = dir.path / "bad.jsonl";
        write_lines(bad, {R"({"step":1})"});
        CHECK_THROWS_WITH_AS(a2net::write_loss_curves(bad, dir.path / "out.csv"),
                             doctest::Contains(":1"), a2net::DataError);
    }
    SUBCASE("missing log") {
        CHECK_THROWS_WITH_AS(a2net::write_loss_curves(dir.path / "absent.jsonl", csv),
                             doctest::Contains("cannot open training log"), a2net::DataError);
    }
}

TEST_CASE("input hashes follow the checksum format") {
    TempDir dir("hashes");
    const fs::path abc = dir.path / "abc.txt";
    const fs::path empty = dir.path / "empty.bin";
    std::ofstream(abc, std::ios::binary) << "abc";
    std::ofstream(empty, std::ios::binary);

    const fs::path out = dir.path / "hashes.txt";
    a2net::write_input_hashes(out, {abc, empty});

    std::ifstream in(out);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) lines.push_back(line);
    REQUIRE(lines.size() == 2);
    CHECK(lines[0] == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad  " +
                          abc.string());
    CHECK(lines[1] == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855  " +
                          empty.string());

    CHECK_THROWS_AS(a2net::write_input_hashes(out, {dir.path / "absent"}), a2net::DataError);
}
