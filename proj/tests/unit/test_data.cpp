#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "a2net/data.hpp"
#include "a2net/errors.hpp"
#include "a2net/rng.hpp"

namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir(const char* tag) {
        path = fs::temp_directory_path() / (std::string("a2net_data_") + tag);
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

a2net::Tensor random_features(long d, long t, std::uint64_t seed) {
    a2net::Rng rng(seed);
    std::vector<double> v(static_cast<std::size_t>(d * t));
    for (auto& x : v) x = rng.gaussian();
    return a2net::Tensor({d, t}, std::move(v));
}

// A one-minute video at 4 feature steps per second: 240 steps.
a2net::VideoRecord sample_video(std::uint64_t seed = 3) {
    a2net::VideoRecord v;
    v.video_id = "clip";
    v.fps = 16.0;
    v.frames_per_feature = 4.0;  // feature fps 4
    v.features = random_features(5, 240, seed);
    v.annotations = {{2.0, 5.0, 1, 1.0}, {30.0, 42.0, 2, 1.0}};
    return v;
}

}  // namespace

TEST_CASE("feature files round-trip bit for bit") {
    TempDir dir("feat");
    const fs::path file = dir.path / "x.feat";
    a2net::Tensor original = random_features(7, 33, 99);
    // Values that stress the byte encoding.
    original.data()[0] = -0.0;
    original.data()[1] = std::numeric_limits<double>::denorm_min();
    original.data()[2] = 1e308;
    a2net::save_features(file, original);
    a2net::Tensor back = a2net::load_features(file);
    REQUIRE(back.dim(0) == 7);
    REQUIRE(back.dim(1) == 33);
    CHECK(std::memcmp(back.values().data(), original.values().data(),
                      sizeof(double) * static_cast<std::size_t>(back.numel())) == 0);
}

TEST_CASE("feature loading rejects damage") {
    TempDir dir("damage");
    const fs::path file = dir.path / "x.feat";
    a2net::save_features(file, random_features(3, 8, 1));

    SUBCASE("missing file") {
        CHECK_THROWS_AS(a2net::load_features(dir.path / "nope.feat"), a2net::DataError);
    }
    SUBCASE("wrong magic") {
        std::fstream f(file, std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(0);
        f.write("GARBAGE!", 8);
        f.close();
        CHECK_THROWS_AS(a2net::load_features(file), a2net::DataError);
    }
    SUBCASE("truncated payload") {
        const auto size = fs::file_size(file);
        fs::resize_file(file, size - 9);
        CHECK_THROWS_AS(a2net::load_features(file), a2net::DataError);
    }
    SUBCASE("rank other than two refused on save") {
        CHECK_THROWS_AS(a2net::save_features(file, a2net::Tensor({2, 2, 2})),
                        std::invalid_argument);
    }
}

TEST_CASE("datasets round-trip through a manifest directory") {
    TempDir dir("ds");
    a2net::Dataset ds;
    ds.num_classes = 2;
    ds.videos.push_back(sample_video(5));
    auto second = sample_video(6);
    second.video_id = "other";
    second.annotations = {};
    ds.videos.push_back(second);

    a2net::save_dataset(dir.path, ds);
    a2net::Dataset back = a2net::load_dataset(dir.path / "manifest.json");
    REQUIRE(back.videos.size() == 2);
    CHECK(back.num_classes == 2);
    CHECK(back.videos[0].video_id == "clip");
    CHECK(back.videos[1].video_id == "other");
    CHECK(back.videos[0].fps == 16.0);
    CHECK(back.videos[0].frames_per_feature == 4.0);
    REQUIRE(back.videos[0].annotations.size() == 2);
    CHECK(back.videos[0].annotations[1].start == 30.0);
    CHECK(back.videos[0].annotations[1].label == 2);
    CHECK(back.videos[0].features.values() == ds.videos[0].features.values());
    CHECK(back.videos[1].annotations.empty());

    SUBCASE("the file list covers the manifest and every feature binary") {
        auto files = a2net::dataset_files(dir.path / "manifest.json");
        REQUIRE(files.size() == 3);
        CHECK(files[0].filename() == "manifest.json");
        CHECK(files[1].filename() == "clip.feat");
        CHECK(files[2].filename() == "other.feat");
        for (const auto& f : files) CHECK(fs::exists(f));
    }
}

TEST_CASE("dataset validation names the offending record") {
    TempDir dir("bad");
    a2net::Dataset ds;
    ds.num_classes = 2;
    ds.videos.push_back(sample_video());

    SUBCASE("label outside the class range") {
        ds.videos[0].annotations[0].label = 9;
        CHECK_THROWS_WITH_AS(a2net::save_dataset(dir.path, ds),
                             doctest::Contains("clip"), a2net::DataError);
    }
    SUBCASE("annotation past the end of the video") {
        ds.videos[0].annotations[0].end = 1e6;
        CHECK_THROWS_WITH_AS(a2net::save_dataset(dir.path, ds),
                             doctest::Contains("clip"), a2net::DataError);
    }
    SUBCASE("inverted annotation") {
        ds.videos[0].annotations[0] = {5.0, 2.0, 1, 1.0};
        CHECK_THROWS_WITH_AS(a2net::save_dataset(dir.path, ds),
                             doctest::Contains("clip"), a2net::DataError);
    }
    SUBCASE("malformed manifest json") {
        std::ofstream(dir.path / "manifest.json") << "{ not json";
        CHECK_THROWS_AS(a2net::load_dataset(dir.path / "manifest.json"), a2net::DataError);
        CHECK_THROWS_AS(a2net::dataset_files(dir.path / "manifest.json"), a2net::DataError);
    }
    SUBCASE("manifest missing a field") {
        std::ofstream(dir.path / "manifest.json") << "{\"videos\": []}";
        CHECK_THROWS_AS(a2net::load_dataset(dir.path / "manifest.json"), a2net::DataError);
    }
    SUBCASE("missing manifest") {
        CHECK_THROWS_AS(a2net::load_dataset(dir.path / "absent.json"), a2net::DataError);
    }
}

TEST_CASE("sliding windows cover the video and remap ground truth") {
    a2net::VideoRecord v = sample_video();

    auto windows = a2net::make_windows(v, 128, 64, false);
    // 240 steps: offsets 0, 64, plus a tail window aligned to the end.
    REQUIRE(windows.size() == 3);
    CHECK(windows[0].offset_steps == 0.0);
    CHECK(windows[1].offset_steps == 64.0);
    CHECK(windows[2].offset_steps == 112.0);
    for (const auto& w : windows) {
        CHECK(w.features.dim(0) == 5);
        CHECK(w.features.dim(1) == 128);
        CHECK(w.scale == 1.0);
        CHECK(w.video_id == "clip");
    }

    // Annotation [2 s, 5 s] is [8, 20] in steps; fully inside window 0.
    REQUIRE(windows[0].gt.size() >= 1);
    CHECK(windows[0].gt[0].start == doctest::Approx(8.0));
    CHECK(windows[0].gt[0].end == doctest::Approx(20.0));
    CHECK(windows[0].gt[0].label == 1);
    // [30 s, 42 s] is [120, 168]: clipped to [120, 128] in window 0,
    // [56, 104] in window 1, [8, 56] in window 2.
    CHECK(windows[1].gt[0].start == doctest::Approx(56.0));
    CHECK(windows[1].gt[0].end == doctest::Approx(104.0));
    CHECK(windows[2].gt[0].start == doctest::Approx(8.0));
    CHECK(windows[2].gt[0].end == doctest::Approx(56.0));

    SUBCASE("window contents copy the underlying features") {
        const auto& w = windows[1];
        for (long c = 0; c < 5; ++c) {
            for (long j : {0L, 17L, 127L}) {
                CHECK(w.features.values()[static_cast<std::size_t>(c * 128 + j)] ==
                      v.features.values()[static_cast<std::size_t>(c * 240 + 64 + j)]);
            }
        }
    }
}

TEST_CASE("training windows drop clipped fragments and empty windows") {
    a2net::VideoRecord v = sample_video();

    auto eval_windows = a2net::make_windows(v, 128, 64, false);
    auto train_windows = a2net::make_windows(v, 128, 64, true);

    // Window 0 keeps only the untouched [8, 20] fragment: [120, 128] is 8
    // of 48 steps, well under the keep fraction.
    bool found_w0 = false;
    for (const auto& w : train_windows) {
        if (w.offset_steps == 0.0) {
            found_w0 = true;
            REQUIRE(w.gt.size() == 1);
            CHECK(w.gt[0].label == 1);
        }
        CHECK(!w.gt.empty());  // training mode never yields empty windows
    }
    CHECK(found_w0);
    CHECK(train_windows.size() <= eval_windows.size());

    SUBCASE("the keep fraction is honored at its boundary") {
        // Fragment retains exactly 75%: 36 of 48 steps, kept at the default.
        a2net::VideoRecord edge = v;
        edge.annotations = {{30.0, 42.0, 2, 1.0}};  // steps [120, 168]
        auto at_default = a2net::make_windows(edge, 128, 28, true);
        // Window at offset 28 covers [28, 156]: keeps [120, 156) = 36 steps.
        bool kept = false;
        for (const auto& w : at_default) {
            if (w.offset_steps == 28.0) kept = true;
        }
        CHECK(kept);
        auto stricter = a2net::make_windows(edge, 128, 28, true, 0.76);
        for (const auto& w : stricter) {
            CHECK(w.offset_steps != 28.0);
        }
    }
}

TEST_CASE("short videos produce one zero-padded window") {
    a2net::VideoRecord v;
    v.video_id = "short";
    v.fps = 16.0;
    v.frames_per_feature = 4.0;
    v.features = random_features(3, 20, 8);
    v.annotations = {{1.0, 4.0, 1, 1.0}};  // steps [4, 16]

    auto windows = a2net::make_windows(v, 128, 64, false);
    REQUIRE(windows.size() == 1);
    CHECK(windows[0].offset_steps == 0.0);
    CHECK(windows[0].features.dim(1) == 128);
    // Real content in the first 20 steps, zeros afterwards.
    CHECK(windows[0].features.values()[0] == v.features.values()[0]);
    for (long c = 0; c < 3; ++c) {
        for (long j = 20; j < 128; j += 13) {
            CHECK(windows[0].features.values()[static_cast<std::size_t>(c * 128 + j)] == 0.0);
        }
    }
    CHECK(windows[0].gt.size() == 1);
    CHECK(windows[0].gt[0].start == doctest::Approx(4.0));
    CHECK(windows[0].gt[0].end == doctest::Approx(16.0));

    CHECK_THROWS_AS(a2net::make_windows(v, 0, 64, false), std::invalid_argument);
    CHECK_THROWS_AS(a2net::make_windows(v, 128, 0, false), std::invalid_argument);
}

TEST_CASE("sequence resize interpolates linearly and keeps endpoints") {
    SUBCASE("identity when lengths agree") {
        a2net::Tensor x = random_features(4, 16, 12);
        a2net::Tensor y = a2net::resize_sequence(x, 16);
        CHECK(y.values() == x.values());
    }

    SUBCASE("a straight line stays straight") {
        std::vector<double> ramp(10);
        for (int i = 0; i < 10; ++i) ramp[static_cast<std::size_t>(i)] = 2.0 * i;
        a2net::Tensor x({1, 10}, ramp);
        a2net::Tensor y = a2net::resize_sequence(x, 19);
        CHECK(y.values().front() == doctest::Approx(0.0));
        CHECK(y.values().back() == doctest::Approx(18.0));
        for (long k = 0; k < 19; ++k) {
            const double u = static_cast<double>(k) * 9.0 / 18.0;
            CHECK(y.values()[static_cast<std::size_t>(k)] ==
                  doctest::Approx(2.0 * u).epsilon(1e-12));
        }
    }

    SUBCASE("downsampling a two-point hat picks midpoints") {
        a2net::Tensor x({1, 3}, std::vector<double>{0.0, 4.0, 0.0});
        a2net::Tensor y = a2net::resize_sequence(x, 2);
        // Targets land on the endpoints exactly.
        CHECK(y.values()[0] == 0.0);
        CHECK(y.values()[1] == 0.0);
    }

    SUBCASE("length one source broadcasts") {
        a2net::Tensor x({2, 1}, std::vector<double>{3.0, -1.0});
        a2net::Tensor y = a2net::resize_sequence(x, 4);
        for (int k = 0; k < 4; ++k) {
            CHECK(y.values()[static_cast<std::size_t>(k)] == 3.0);
            CHECK(y.values()[static_cast<std::size_t>(4 + k)] == -1.0);
        }
    }

    SUBCASE("bad inputs are rejected") {
        CHECK_THROWS_AS(a2net::resize_sequence(a2net::Tensor({2, 2, 2}), 4),
                        std::invalid_argument);
        CHECK_THROWS_AS(a2net::resize_sequence(random_features(2, 8, 1), 0),
                        std::invalid_argument);
    }
}

TEST_CASE("a resized window squeezes the whole video") {
    a2net::VideoRecord v = sample_video();
    auto w = a2net::make_resized_window(v, 120);
    CHECK(w.features.dim(1) == 120);
    CHECK(w.scale == doctest::Approx(2.0));  // 240 video steps into 120
    CHECK(w.offset_steps == 0.0);
    REQUIRE(w.gt.size() == 2);
    // [8, 20] video steps shrink to [4, 10]; [120, 168] to [60, 84].
    CHECK(w.gt[0].start == doctest::Approx(4.0));
    CHECK(w.gt[0].end == doctest::Approx(10.0));
    CHECK(w.gt[1].start == doctest::Approx(60.0));
    CHECK(w.gt[1].end == doctest::Approx(84.0));

    // Detections on the window timeline scale back with w.scale: a perfect
    // hit on gt[1] maps onto the original annotation in seconds.
    const double start_sec = v.steps_to_sec(w.gt[1].start * w.scale);
    const double end_sec = v.steps_to_sec(w.gt[1].end * w.scale);
    CHECK(start_sec == doctest::Approx(30.0));
    CHECK(end_sec == doctest::Approx(42.0));
}

TEST_CASE("timeline conversions are mutual inverses") {
    a2net::VideoRecord v = sample_video();
    CHECK(v.feature_fps() == doctest::Approx(4.0));
    CHECK(v.duration_sec() == doctest::Approx(60.0));
    for (double sec : {0.0, 1.7, 59.99}) {
        CHECK(v.steps_to_sec(v.sec_to_steps(sec)) == doctest::Approx(sec).epsilon(1e-12));
    }
}
