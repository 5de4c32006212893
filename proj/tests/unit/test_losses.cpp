#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "a2net/geometry.hpp"
#include "a2net/losses.hpp"
#include "a2net/rng.hpp"
#include "a2net/targets.hpp"

namespace {

constexpr long kClasses = 2;  // three logit channels with background

a2net::PyramidSpec tiny_spec() { return a2net::build_pyramid_spec(16, 3, 4, 2.0); }

// Head-shaped tensors filled from one seeded stream. af_reg values are kept
// positive and ab_overlap values inside (0, 1), matching what the real heads
// emit after their squashing maps.
a2net::ModelOutputs fake_outputs(const a2net::PyramidSpec& spec, long batch, a2net::Rng& rng) {
    a2net::ModelOutputs out;
    for (long li = 1; li <= spec.num_levels; ++li) {
        const long t = spec.level(li).length;
        auto draw = [&](long ch, double lo, double hi) {
            std::vector<double> v(static_cast<std::size_t>(batch * ch * t));
            for (auto& x : v) x = rng.uniform(lo, hi);
            return a2net::Tensor({batch, ch, t}, std::move(v));
        };
        a2net::LevelOutputs lo;
        lo.af_class = a2net::leaf(draw(kClasses + 1, -2.0, 2.0));
        lo.af_reg = a2net::leaf(draw(2, 0.1, 5.0));
        lo.ab_class = a2net::leaf(draw(kClasses + 1, -2.0, 2.0));
        lo.ab_overlap = a2net::leaf(draw(1, 0.05, 0.95));
        lo.ab_reg = a2net::leaf(draw(2, -1.5, 1.5));
        out.levels.push_back(lo);
    }
    return out;
}

a2net::ModelOutputs zero_outputs(const a2net::PyramidSpec& spec, long batch) {
    a2net::ModelOutputs out;
    for (long li = 1; li <= spec.num_levels; ++li) {
        const long t = spec.level(li).length;
        a2net::LevelOutputs lo;
        lo.af_class = a2net::leaf(a2net::Tensor({batch, kClasses + 1, t}));
        lo.af_reg = a2net::leaf(a2net::Tensor({batch, 2, t}));
        lo.ab_class = a2net::leaf(a2net::Tensor({batch, kClasses + 1, t}));
        lo.ab_overlap = a2net::leaf(a2net::Tensor({batch, 1, t}));
        lo.ab_reg = a2net::leaf(a2net::Tensor({batch, 2, t}));
        out.levels.push_back(lo);
    }
    return out;
}

a2net::AfTargets blank_af(const a2net::PyramidSpec& spec) {
    a2net::AfTargets t;
    for (long li = 1; li <= spec.num_levels; ++li) {
        const auto n = static_cast<std::size_t>(spec.level(li).length);
        a2net::AfLevelTargets lt;
        lt.class_target.assign(n, 0);
        lt.start_dist.assign(n, 0.0);
        lt.end_dist.assign(n, 0.0);
        t.levels.push_back(std::move(lt));
    }
    return t;
}

a2net::AbTargets blank_ab(const a2net::PyramidSpec& spec) {
    a2net::AbTargets t;
    for (long li = 1; li <= spec.num_levels; ++li) {
        const auto n = static_cast<std::size_t>(spec.level(li).length);
        a2net::AbLevelTargets lt;
        lt.class_target.assign(n, 0);
        lt.overlap_target.assign(n, 0.0);
        lt.reg_center.assign(n, 0.0);
        lt.reg_width.assign(n, 0.0);
        lt.pos_mask.assign(n, 0);
        lt.neg_mask.assign(n, 0);
        t.levels.push_back(std::move(lt));
    }
    return t;
}

double fetch(const a2net::Tensor& x, long b, long c, long j) {
    const long ch = x.dim(1), t = x.dim(2);
    return x.values()[static_cast<std::size_t>((b * ch + c) * t + j)];
}

double huber(double d) {
    const double a = std::fabs(d);
    return a < 1.0 ? 0.5 * a * a : a - 0.5;
}

double ce_oracle(const a2net::Tensor& logits, long b, long j, long label) {
    const long ch = logits.dim(1);
    double mx = fetch(logits, b, 0, j);
    for (long c = 1; c < ch; ++c) mx = std::max(mx, fetch(logits, b, c, j));
    double s = 0.0;
    for (long c = 0; c < ch; ++c) s += std::exp(fetch(logits, b, c, j) - mx);
    return std::log(s) + mx - fetch(logits, b, label, j);
}

struct Fixture {
    a2net::PyramidSpec spec = tiny_spec();
    long batch = 2;
    a2net::Rng rng{911};
    a2net::ModelOutputs outputs = fake_outputs(spec, batch, rng);
    std::vector<a2net::AfTargets> af;
    std::vector<a2net::AbTargets> ab;

    // Two ground truths per entry, one short enough for level 1 or 2 and one
    // spanning most of the window, so every loss term has survivors.
    Fixture() {
        for (long b = 0; b < batch; ++b) {
            std::vector<a2net::Segment> gt = {{2.0, 9.0, 1, 1.0}, {1.0, 15.0, 2, 1.0}};
            af.push_back(a2net::encode_af(gt, spec));
            ab.push_back(a2net::encode_ab(gt, spec, a2net::RegressionCoeffs{}, 400 + b));
        }
    }
};

}  // namespace

TEST_CASE("default loss weights match the published constants") {
    a2net::LossWeights w;
    CHECK(w.gamma == 1.0);
    CHECK(w.gamma_af == 30.0);
    CHECK(w.gamma_ab1 == 10.0);
    CHECK(w.gamma_ab2 == 10.0);
}

TEST_CASE("branch mode names round-trip and reject junk") {
    for (auto mode : {a2net::BranchMode::joint, a2net::BranchMode::af_only,
                      a2net::BranchMode::ab_only}) {
        CHECK(a2net::parse_branch_mode(a2net::branch_mode_name(mode)) == mode);
    }
    CHECK_THROWS_AS(a2net::parse_branch_mode("both"), std::invalid_argument);
}

TEST_CASE("uniform logits cost exactly log of the class count") {
    a2net::PyramidSpec spec = tiny_spec();
    const long batch = 2;
    a2net::ModelOutputs outputs = zero_outputs(spec, batch);
    std::vector<a2net::AfTargets> af(static_cast<std::size_t>(batch), blank_af(spec));
    std::vector<a2net::AbTargets> ab(static_cast<std::size_t>(batch), blank_ab(spec));
    // One positive and one negative anchor so the anchor classification term
    // is alive too.
    ab[0].levels[0].class_target[1] = 2;
    ab[0].levels[0].overlap_target[1] = 0.75;
    ab[0].levels[0].pos_mask[1] = 1;
    ab[0].levels[0].neg_mask[3] = 1;
    ab[0].num_positive = 1;
    ab[0].num_negative = 1;

    a2net::LossNodes nodes = a2net::build_losses(outputs, af, ab, spec, a2net::LossWeights{},
                                                 a2net::BranchMode::joint);
    const double chance = std::log(static_cast<double>(kClasses + 1));
    CHECK(nodes.af_cls->value.item() == doctest::Approx(chance).epsilon(1e-12));
    CHECK(nodes.ab_cls->value.item() == doctest::Approx(chance).epsilon(1e-12));
    // Zero raw overlap against a 0.75 target, squared.
    CHECK(nodes.ab_overlap->value.item() == doctest::Approx(0.75 * 0.75).epsilon(1e-12));
}

TEST_CASE("total combines the five terms with the configured weights") {
    Fixture f;
    a2net::LossWeights w;
    w.gamma = 0.7;
    w.gamma_af = 3.0;
    w.gamma_ab1 = 2.0;
    w.gamma_ab2 = 4.0;
    a2net::LossNodes nodes =
        a2net::build_losses(f.outputs, f.af, f.ab, f.spec, w, a2net::BranchMode::joint);
    a2net::LossReport r = nodes.report();
    const double expect =
        r.af_reg + w.gamma_af * r.af_cls +
        w.gamma * (r.ab_cls + w.gamma_ab1 * r.ab_overlap + w.gamma_ab2 * r.ab_reg);
    CHECK(r.total == doctest::Approx(expect).epsilon(1e-12));
    CHECK(r.total == doctest::Approx(nodes.total->value.item()).epsilon(1e-15));
    CHECK(r.num_locations == f.batch * f.spec.total_locations());
    CHECK(r.num_af_foreground > 0);
    CHECK(r.num_ab_positive > 0);
    // Negatives match positives one for one until the non-positive anchors
    // run out; this tiny pyramid runs out.
    CHECK(r.num_ab_negative > 0);
    CHECK(r.num_ab_negative <= r.num_ab_positive);
}

TEST_CASE("classification term equals the flat mean over every location") {
    Fixture f;
    a2net::LossNodes nodes = a2net::build_losses(f.outputs, f.af, f.ab, f.spec,
                                                 a2net::LossWeights{}, a2net::BranchMode::joint);

    double sum = 0.0;
    long count = 0;
    for (long li = 0; li < f.spec.num_levels; ++li) {
        const a2net::Tensor& logits = f.outputs.levels[static_cast<std::size_t>(li)].af_class->value;
        const long t = f.spec.level(li + 1).length;
        for (long b = 0; b < f.batch; ++b) {
            const auto& lt = f.af[static_cast<std::size_t>(b)].levels[static_cast<std::size_t>(li)];
            for (long j = 0; j < t; ++j) {
                sum += ce_oracle(logits, b, j, lt.class_target[static_cast<std::size_t>(j)]);
                ++count;
            }
        }
    }
    CHECK(count == f.batch * f.spec.total_locations());
    CHECK(nodes.af_cls->value.item() == doctest::Approx(sum / count).epsilon(1e-12));
}

TEST_CASE("regression terms equal per-point oracles") {
    Fixture f;
    a2net::LossNodes nodes = a2net::build_losses(f.outputs, f.af, f.ab, f.spec,
                                                 a2net::LossWeights{}, a2net::BranchMode::joint);

    double af_sum = 0.0;
    long af_count = 0;
    double ab_cls_sum = 0.0;
    long ab_cls_count = 0;
    double ov_sum = 0.0, ab_reg_sum = 0.0;
    long pos_count = 0;
    for (long li = 0; li < f.spec.num_levels; ++li) {
        const auto& lo = f.outputs.levels[static_cast<std::size_t>(li)];
        const long t = f.spec.level(li + 1).length;
        const long stride = f.spec.level(li + 1).stride;
        for (long b = 0; b < f.batch; ++b) {
            const auto& aft = f.af[static_cast<std::size_t>(b)].levels[static_cast<std::size_t>(li)];
            const auto& abt = f.ab[static_cast<std::size_t>(b)].levels[static_cast<std::size_t>(li)];
            for (long j = 0; j < t; ++j) {
                const auto sj = static_cast<std::size_t>(j);
                if (aft.class_target[sj] > 0) {
                    const double ps = fetch(lo.af_reg->value, b, 0, j) * stride;
                    const double pe = fetch(lo.af_reg->value, b, 1, j) * stride;
                    af_sum += huber(ps - aft.start_dist[sj]) + huber(pe - aft.end_dist[sj]);
                    ++af_count;
                }
                if (abt.pos_mask[sj]) {
                    ab_cls_sum += ce_oracle(lo.ab_class->value, b, j, abt.class_target[sj]);
                    ++ab_cls_count;
                    const double po = fetch(lo.ab_overlap->value, b, 0, j);
                    ov_sum += (po - abt.overlap_target[sj]) * (po - abt.overlap_target[sj]);
                    ab_reg_sum += huber(fetch(lo.ab_reg->value, b, 0, j) - abt.reg_center[sj]) +
                                  huber(fetch(lo.ab_reg->value, b, 1, j) - abt.reg_width[sj]);
                    ++pos_count;
                } else if (abt.neg_mask[sj]) {
                    ab_cls_sum += ce_oracle(lo.ab_class->value, b, j, 0);
                    ++ab_cls_count;
                }
            }
        }
    }
    REQUIRE(af_count > 0);
    REQUIRE(pos_count > 0);
    CHECK(nodes.num_af_foreground == af_count);
    CHECK(nodes.num_ab_positive == pos_count);
    CHECK(nodes.af_reg->value.item() == doctest::Approx(af_sum / af_count).epsilon(1e-12));
    CHECK(nodes.ab_cls->value.item() ==
          doctest::Approx(ab_cls_sum / ab_cls_count).epsilon(1e-12));
    CHECK(nodes.ab_overlap->value.item() == doctest::Approx(ov_sum / pos_count).epsilon(1e-12));
    CHECK(nodes.ab_reg->value.item() == doctest::Approx(ab_reg_sum / pos_count).epsilon(1e-12));
}

TEST_CASE("single branch modes pin the other branch to zero") {
    Fixture f;

    SUBCASE("anchor-free only") {
        a2net::LossNodes nodes = a2net::build_losses(f.outputs, f.af, {}, f.spec,
                                                     a2net::LossWeights{},
                                                     a2net::BranchMode::af_only);
        a2net::LossReport r = nodes.report();
        CHECK(r.ab_cls == 0.0);
        CHECK(r.ab_overlap == 0.0);
        CHECK(r.ab_reg == 0.0);
        CHECK(r.num_ab_positive == 0);
        CHECK(r.num_ab_negative == 0);
        CHECK(r.total == doctest::Approx(r.af_reg + 30.0 * r.af_cls).epsilon(1e-12));

        a2net::backward(nodes.total);
        const auto& l0 = f.outputs.levels[0];
        CHECK(l0.af_class->grad.numel() > 0);
        CHECK(l0.ab_class->grad.numel() == 0);
        CHECK(l0.ab_overlap->grad.numel() == 0);
    }

    SUBCASE("anchor-based only") {
        a2net::LossNodes nodes = a2net::build_losses(f.outputs, {}, f.ab, f.spec,
                                                     a2net::LossWeights{},
                                                     a2net::BranchMode::ab_only);
        a2net::LossReport r = nodes.report();
        CHECK(r.af_cls == 0.0);
        CHECK(r.af_reg == 0.0);
        CHECK(r.num_af_foreground == 0);
        CHECK(r.total ==
              doctest::Approx(r.ab_cls + 10.0 * r.ab_overlap + 10.0 * r.ab_reg).epsilon(1e-12));

        a2net::backward(nodes.total);
        const auto& l0 = f.outputs.levels[0];
        CHECK(l0.ab_class->grad.numel() > 0);
        CHECK(l0.af_class->grad.numel() == 0);
    }
}

TEST_CASE("empty targets leave the masked terms at exactly zero") {
    a2net::PyramidSpec spec = tiny_spec();
    const long batch = 2;
    a2net::Rng rng(5);
    a2net::ModelOutputs outputs = fake_outputs(spec, batch, rng);
    std::vector<a2net::AfTargets> af(static_cast<std::size_t>(batch), blank_af(spec));
    std::vector<a2net::AbTargets> ab(static_cast<std::size_t>(batch), blank_ab(spec));

    a2net::LossNodes nodes = a2net::build_losses(outputs, af, ab, spec, a2net::LossWeights{},
                                                 a2net::BranchMode::joint);
    a2net::LossReport r = nodes.report();
    CHECK(r.af_reg == 0.0);
    CHECK(r.ab_cls == 0.0);
    CHECK(r.ab_overlap == 0.0);
    CHECK(r.ab_reg == 0.0);
    CHECK(r.af_cls > 0.0);  // background is still supervised everywhere
    CHECK(r.num_af_foreground == 0);
    CHECK(r.num_ab_positive == 0);
    CHECK(r.num_ab_negative == 0);
    CHECK(r.total == doctest::Approx(30.0 * r.af_cls).epsilon(1e-12));
}

TEST_CASE("loss report serializes every field") {
    Fixture f;
    a2net::LossNodes nodes = a2net::build_losses(f.outputs, f.af, f.ab, f.spec,
                                                 a2net::LossWeights{}, a2net::BranchMode::joint);
    const std::string json = nodes.report().to_json();
    for (const char* key : {"\"total\":", "\"af_cls\":", "\"af_reg\":", "\"ab_cls\":",
                            "\"ab_overlap\":", "\"ab_reg\":", "\"num_locations\":",
                            "\"num_af_foreground\":", "\"num_ab_positive\":",
                            "\"num_ab_negative\":"}) {
        CHECK_MESSAGE(json.find(key) != std::string::npos, "missing ", key);
    }
}

TEST_CASE("shape disagreements are rejected") {
    Fixture f;

    SUBCASE("missing level") {
        a2net::ModelOutputs short_outputs = f.outputs;
        short_outputs.levels.pop_back();
        CHECK_THROWS_AS(a2net::build_losses(short_outputs, f.af, f.ab, f.spec,
                                            a2net::LossWeights{}, a2net::BranchMode::joint),
                        std::invalid_argument);
    }

    SUBCASE("batch size mismatch in targets") {
        std::vector<a2net::AfTargets> one(f.af.begin(), f.af.begin() + 1);
        CHECK_THROWS_AS(a2net::build_losses(f.outputs, one, f.ab, f.spec, a2net::LossWeights{},
                                            a2net::BranchMode::joint),
                        std::invalid_argument);
    }

    SUBCASE("level length mismatch in targets") {
        std::vector<a2net::AfTargets> bad = f.af;
        bad[0].levels[1].class_target.push_back(0);
        CHECK_THROWS_AS(a2net::build_losses(f.outputs, bad, f.ab, f.spec, a2net::LossWeights{},
                                            a2net::BranchMode::joint),
                        std::invalid_argument);
    }
}
