// Copyright Contributors to the splatlab project
// SPDX-License-Identifier: Apache-2.0
//
#include "splatlab/trainer.hpp"

#include "splatlab/ambiguity.hpp"
#include "splatlab/ply.hpp"

#include "test_support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

using namespace splatlab;

namespace {

constexpr std::uint64_t kBaselineChecksum = 0xbedec914ed4422d7;

struct SmallScene {
    SceneSpec spec;
    Dataset data;
};

const SmallScene &
small_scene() {
    static const SmallScene s = [] {
        SmallScene out;
        out.spec               = desk_scene();
        out.spec.width         = 24;
        out.spec.height        = 24;
        out.spec.cameras.count = 4;
        out.data               = generate_dataset(out.spec);
        return out;
    }();
    return s;
}

TrainConfig
small_config(const std::string &preset, int iterations = 60) {
    TrainConfig c       = desk_config(iterations);
    c.toggles           = preset_toggles(preset);
    c.init_points       = 150;
    c.max_primitives    = 400;
    c.densify_interval  = 10;
    c.seed              = 5;
    return c;
}

std::vector<std::string>
run_rows(const TrainConfig &config) {
    const SmallScene &s = small_scene();
    Trainer tr(config, make_train_data(s.spec, s.data), s.spec);
    std::vector<std::string> rows;
    while (tr.iteration() < config.iterations) rows.push_back(csv_row(tr.step()));
    return rows;
}

std::uint64_t
fnv1a(const std::vector<std::string> &rows) {
    std::uint64_t h = 1469598103934665603ull;
    for (const auto &r : rows) {
        for (unsigned char ch : r + "\n") {
            h ^= ch;
            h *= 1099511628211ull;
        }
    }
    return h;
}

std::string
slurp(const std::filesystem::path &p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace

TEST(TrainConfig, ValidationAndSchedule) {
    TrainConfig c;
    EXPECT_NO_THROW(validate(c));
    EXPECT_EQ(c.geo_start, 1000);
    EXPECT_EQ(c.amorphous_start, 7000);
    EXPECT_EQ(c.raycolor_stop, 15000);
    EXPECT_EQ(c.weights.tau, 0.1);
    EXPECT_EQ(c.weights.mu1, 0.1);
    EXPECT_EQ(c.weights.mu2, 1e-5);
    TrainConfig bad = c;
    bad.geo_start   = 40000;
    EXPECT_THROW(validate(bad), ContractViolation);
    bad               = c;
    bad.raycolor_stop = 40000;
    EXPECT_THROW(validate(bad), ContractViolation);
    bad             = c;
    bad.weights.mu1 = -1.0;
    EXPECT_THROW(validate(bad), ContractViolation);
    bad       = c;
    bad.eta_l = 0.5;
    EXPECT_THROW(validate(bad), ContractViolation);

    const TrainConfig d = desk_config(3000);
    EXPECT_EQ(d.geo_start, 100);
    EXPECT_EQ(d.amorphous_start, 700);
    EXPECT_EQ(d.raycolor_stop, 1500);
    EXPECT_NO_THROW(validate(d));
}

TEST(TrainConfig, JsonRoundTripAndUnknownKeys) {
    TrainConfig c       = desk_config(4000);
    c.toggles           = preset_toggles("F");
    c.seed              = 77;
    c.lr.sh_rest        = 1e-4;
    c.ray_reduction     = Reduction::Mean;
    const std::string j = config_to_json(c);
    EXPECT_EQ(config_to_json(config_from_json(j)), j);
    EXPECT_EQ(config_from_json(R"({"iterations": 30000})").iterations, 30000);
    EXPECT_THROW(config_from_json(R"({"iterationz": 10})"), ContractViolation);
    EXPECT_THROW(config_from_json(R"({"toggles": {"trunc": true}})"), ContractViolation);
    EXPECT_THROW(config_from_json(R"({"iterations": 100})"), ContractViolation); // thresholds beyond the run
    EXPECT_THROW(config_from_json("not json"), ContractViolation);
}

TEST(Presets, TableItems) {
    const auto a = preset_toggles("A");
    EXPECT_FALSE(a.priors || a.truncation || a.raycolor || a.sh_ambi || a.naive_normal);
    const auto b = preset_toggles("B");
    EXPECT_TRUE(b.priors);
    EXPECT_FALSE(b.truncation || b.raycolor || b.sh_ambi || b.naive_normal);
    const auto f = preset_toggles("F");
    EXPECT_TRUE(f.priors && f.truncation && f.raycolor && f.naive_normal);
    EXPECT_FALSE(f.sh_ambi);
    const auto g = preset_toggles("G");
    EXPECT_TRUE(g.priors && g.truncation && g.raycolor && g.sh_ambi);
    EXPECT_FALSE(g.naive_normal);
    EXPECT_TRUE(preset_toggles("E").sh_ambi);
    EXPECT_FALSE(preset_toggles("E").raycolor);
    EXPECT_TRUE(preset_toggles("D").raycolor);
    EXPECT_THROW(preset_toggles("H"), ContractViolation);

    Toggles t = preset_toggles("B");
    apply_toggle(t, "raycolor=on");
    apply_toggle(t, "priors=off");
    EXPECT_TRUE(t.raycolor);
    EXPECT_FALSE(t.priors);
    EXPECT_THROW(apply_toggle(t, "raycolor"), ContractViolation);
    EXPECT_THROW(apply_toggle(t, "raycolor=maybe"), ContractViolation);
    EXPECT_THROW(apply_toggle(t, "lights=on"), ContractViolation);
}

TEST(Gates, WindowsFollowTheSchedule) {
    TrainConfig c;
    c.toggles = preset_toggles("G");
    EXPECT_FALSE(active_terms(c, 500).geo);
    EXPECT_TRUE(active_terms(c, 500).ray_color);
    EXPECT_FALSE(active_terms(c, 500).amorphous);
    EXPECT_TRUE(active_terms(c, 1000).geo);
    EXPECT_FALSE(active_terms(c, 20000).ray_color);
    EXPECT_TRUE(active_terms(c, 20000).amorphous);
    for (int it = 1; it <= c.iterations; it += 7) {
        const ActiveTerms a = active_terms(c, it);
        EXPECT_EQ(a.geo, it >= 1000);
        EXPECT_EQ(a.ray_color, it < 15000);
        EXPECT_EQ(a.amorphous, it >= 7000);
    }
    c.toggles = preset_toggles("B");
    EXPECT_FALSE(active_terms(c, 14000).ray_color);
    EXPECT_FALSE(active_terms(c, 20000).amorphous);
    c.toggles = preset_toggles("F");
    EXPECT_TRUE(active_terms(c, 20000).amorphous);
}

TEST(Adam, ZeroGradientAndMomentDecay) {
    std::vector<double> p = {1.0, -2.0}, g = {0.0, 0.0}, m = {0.0, 0.0}, v = {0.0, 0.0};
    adam_update(p, g, m, v, 0.1, 1);
    EXPECT_EQ(p, (std::vector<double>{1.0, -2.0}));
    m = {1.0, -1.0};
    v = {4.0, 2.0};
    adam_update(p, g, m, v, 0.1, 2);
    EXPECT_EQ(m[0], 0.9);
    EXPECT_EQ(m[1], -0.9);
    EXPECT_EQ(v[0], 0.999 * 4.0);
    EXPECT_EQ(v[1], 0.999 * 2.0);
    EXPECT_THROW(adam_update(p, std::vector<double>{0.0}, m, v, 0.1, 1), ContractViolation);
}

TEST(Adam, ConstantGradientStepTendsToLrSign) {
    for (double g0 : {3.0, -0.02}) {
        std::vector<double> p = {0.0}, g = {g0}, m = {0.0}, v = {0.0};
        double prev = 0.0;
        for (long t = 1; t <= 1000; ++t) {
            prev = p[0];
            adam_update(p, g, m, v, 1e-3, t);
        }
        // Bias correction makes m_hat = g and v_hat = g^2 exactly, so each step is lr * g / (|g| + eps).
        EXPECT_NEAR(p[0] - prev, -1e-3 * (g0 > 0 ? 1.0 : -1.0), 1e-12);
        EXPECT_NEAR(p[0], -1.0 * (g0 > 0 ? 1.0 : -1.0), 1e-9);
    }
}

TEST(Adam, MatchesScalarReference) {
    Rng rng(7);
    const int n = 5;
    std::vector<double> p(n), m(n, 0.0), v(n, 0.0);
    for (double &x : p) x = rng.normal();
    std::vector<double> rp = p, rm = m, rv = v;
    for (long t = 1; t <= 100; ++t) {
        std::vector<double> g(n);
        for (double &x : g) x = rng.normal() * std::pow(10.0, rng.uniform(-3, 1));
        adam_update(p, g, m, v, 0.01, t);
        // Reference in the "effective step size" form.
        const double b1 = 0.9, b2 = 0.999, eps = 1e-15;
        const double lr_t = 0.01 * std::sqrt(1 - std::pow(b2, t)) / (1 - std::pow(b1, t));
        for (int i = 0; i < n; ++i) {
            rm[i] = b1 * rm[i] + (1 - b1) * g[i];
            rv[i] = b2 * rv[i] + (1 - b2) * g[i] * g[i];
            rp[i] -= lr_t * rm[i] / (std::sqrt(rv[i]) + eps * std::sqrt(1 - std::pow(b2, t)));
        }
    }
    for (int i = 0; i < n; ++i) {
        EXPECT_NEAR(p[i], rp[i], 1e-12);
        EXPECT_NEAR(m[i], rm[i], 1e-12);
        EXPECT_NEAR(v[i], rv[i], 1e-12);
    }
}

TEST(Densify, CloneOffsetPruneAndCap) {
    Rng rng(8);
    auto prims = fixtures::random_scene(rng, 4, 1);
    for (auto &p : prims) p.opacity_logit = logit(0.5);
    prims[2].opacity_logit = logit(0.001);
    const std::size_t k    = parameters_per_primitive(1);
    AdamState adam;
    adam.m.resize(4 * k);
    adam.v.resize(4 * k);
    for (std::size_t i = 0; i < adam.m.size(); ++i) {
        adam.m[i] = static_cast<double>(i);
        adam.v[i] = 0.5 * i;
    }
    TrainConfig cfg;
    cfg.max_primitives = 10;

    DensifyStats none{std::vector<double>(4, 0.0), std::vector<int>(4, 0)};
    auto copy  = prims;
    auto acopy = adam;
    const DensifyResult r0 = densify_prune(copy, acopy, none, cfg);
    EXPECT_EQ(r0.cloned, 0);
    EXPECT_EQ(r0.pruned, 1); // the alpha = 0.001 primitive
    ASSERT_EQ(copy.size(), 3u);
    EXPECT_EQ(copy[2].mu, prims[3].mu);
    EXPECT_EQ(acopy.m[2 * k], adam.m[3 * k]); // moments follow their primitive

    DensifyStats hot{{1.0, 0.0, 0.0, 5e-4}, {2, 0, 0, 1}}; // primitive 0: mean 0.5, primitive 3: 5e-4
    copy                 = prims;
    acopy                = adam;
    const DensifyResult r1 = densify_prune(copy, acopy, hot, cfg);
    EXPECT_EQ(r1.cloned, 2);
    ASSERT_EQ(copy.size(), 5u);
    int axis;
    prims[0].log_scale.maxCoeff(&axis);
    const Vec3 expect = prims[0].mu + 0.5 * std::exp(prims[0].log_scale(axis)) *
                                          quaternion_to_rotation(prims[0].rotation.normalized()).col(axis);
    EXPECT_LT((copy[3].mu - expect).norm(), 1e-15);
    EXPECT_EQ(acopy.m.size(), 5 * k);
    for (std::size_t j = 3 * k; j < 5 * k; ++j) EXPECT_EQ(acopy.m[j], 0.0);
    EXPECT_EQ(hot.grad_norm_sum, std::vector<double>(5, 0.0));

    cfg.max_primitives = 4;
    DensifyStats capped{{1.0, 1.0, 1.0, 1.0}, {1, 1, 1, 1}};
    copy                 = prims;
    acopy                = adam;
    const DensifyResult r2 = densify_prune(copy, acopy, capped, cfg);
    EXPECT_TRUE(r2.capped);
    EXPECT_EQ(r2.cloned, 0);
    EXPECT_LE(copy.size(), 4u);
}

TEST(NaiveNormal, IsTheUnroutedAmorphousLossWithAccMask) {
    Rng rng(9);
    const Camera cam = fixtures::random_camera(rng);
    auto prims       = fixtures::random_scene(rng, 8);
    for (auto &p : prims) p.opacity_logit += 2.0;
    std::vector<int> all(prims.size());
    std::iota(all.begin(), all.end(), 0);
    const RenderOutputs out = render(prims, cam, all);
    EXPECT_LT((Eigen::Map<const Eigen::VectorXd>(out.mask.data.data(), out.mask.data.size()) -
               Eigen::Map<const Eigen::VectorXd>(out.acc_alpha.data.data(), out.acc_alpha.data.size()))
                  .cwiseAbs()
                  .maxCoeff(),
              1e-12);
    const Image nd = depth_to_normal(out.depth, out.acc_alpha, cam);
    Image np(16, 16, 3);
    for (int i = 0; i < 256; ++i) np.set_rgb(i % 16, i / 16, -rng.unit_vector().cwiseAbs());
    EXPECT_NEAR(naive_normal_loss(out.acc_alpha, nd, np), amorphous_normal(out.mask, nd, np), 1e-12);
    EXPECT_EQ(naive_normal_loss(out.acc_alpha, nd, nd), 0.0);
}

// An optimizer step driven only by the routed amorphous gradient leaves every blocked parameter
// bit-identical.
TEST(Routing, AdamStepLeavesBlockedParametersUntouched) {
    Rng rng(10);
    const Camera cam = fixtures::random_camera(rng);
    auto prims       = fixtures::random_scene(rng, 8);
    for (auto &p : prims) p.opacity_logit += 2.0;
    Image np(16, 16, 3);
    for (int i = 0; i < 256; ++i) np.set_rgb(i % 16, i / 16, -rng.unit_vector().cwiseAbs());
    const std::vector<int> sel = {1, 4};
    ObjectiveOptions opt;
    opt.use_photo     = false;
    opt.use_amorphous = true;
    const ViewTargets tg{nullptr, nullptr, &np, 2.0};
    ViewEvaluation ev = evaluate_view(prims, cam, tg, sel, opt, true);
    ASSERT_GT(ev.terms.amorphous, 0.0);
    routing_mask(sel, prims.size()).apply(ev.amorphous);
    Eigen::VectorXd theta          = pack_parameters(prims);
    const Eigen::VectorXd before   = theta;
    const Eigen::VectorXd g        = pack_gradients(ev.amorphous);
    std::vector<double> m(theta.size(), 0.0), v(theta.size(), 0.0);
    adam_update(std::span<double>(theta.data(), theta.size()), std::span<const double>(g.data(), g.size()), m, v, 0.01, 1);
    const std::size_t k = parameters_per_primitive(3);
    int moved           = 0;
    for (std::size_t i = 0; i < prims.size(); ++i) {
        for (std::size_t j = 0; j < k; ++j) {
            const auto idx     = static_cast<Eigen::Index>(i * k + j);
            const ParamGroup gr = group_of_offset(j);
            const bool allowed = (i == 1 || i == 4) && gr != ParamGroup::Opacity && gr != ParamGroup::LogScale;
            if (!allowed) {
                EXPECT_EQ(theta(idx), before(idx));
            } else {
                moved += theta(idx) != before(idx);
            }
        }
    }
    EXPECT_GT(moved, 0);
}

TEST(Trainer, GatesInvariantsAndLogs) {
    const TrainConfig cfg = small_config("G", 60);
    const SmallScene &s   = small_scene();
    Trainer tr(cfg, make_train_data(s.spec, s.data), s.spec);
    EXPECT_EQ(tr.primitives().size(), 150u);
    std::vector<int> seen(s.data.cameras.size(), 0);
    while (tr.iteration() < cfg.iterations) {
        const StepLog l = tr.step();
        seen[l.view] += 1;
        if (l.iteration < cfg.geo_start) EXPECT_EQ(l.terms.geo, 0.0);
        if (l.iteration >= cfg.raycolor_stop) EXPECT_EQ(l.terms.ray_color, 0.0);
        if (l.iteration < cfg.amorphous_start) {
            EXPECT_EQ(l.terms.amorphous, 0.0);
            EXPECT_EQ(l.num_upper + l.num_lower, 0u);
        }
        EXPECT_NEAR(l.terms.total, total_loss(l.terms, cfg.weights), 1e-15);
        for (const auto &p : tr.primitives()) {
            EXPECT_NEAR(p.rotation.norm(), 1.0, 1e-12);
            EXPECT_GE(p.log_scale.minCoeff(), std::log(1e-7));
            EXPECT_LE(p.log_scale.maxCoeff(), std::log(tr.data().scene_extent));
            const double a = sigmoid(p.opacity_logit);
            EXPECT_TRUE(a > 0.0 && a < 1.0);
        }
        EXPECT_LE(tr.primitives().size(), static_cast<std::size_t>(cfg.max_primitives));
    }
    // Round-robin: every view visited 15 times in 60 iterations over 4 views.
    for (int c : seen) EXPECT_EQ(c, 15);
    EXPECT_NEAR(tr.position_lr(1), 1.6e-4, 1e-18);
    EXPECT_NEAR(tr.position_lr(cfg.iterations), 1.6e-6, 1e-18);
}

TEST(Trainer, DeterministicAcrossRunsAndThreads) {
    const TrainConfig cfg = small_config("G", 40);
    set_thread_count(1);
    const auto a = run_rows(cfg);
    set_thread_count(4);
    const auto b = run_rows(cfg);
    set_thread_count(0);
    const auto c = run_rows(cfg);
    EXPECT_EQ(a, b);
    EXPECT_EQ(a, c);
    TrainConfig other = cfg;
    other.seed        = 6;
    EXPECT_NE(run_rows(other), a);
}

TEST(Trainer, NaiveAndSelectiveArmsDiffer) {
    EXPECT_NE(run_rows(small_config("F", 60)), run_rows(small_config("G", 60)));
}

// All toggles off reduces to the photometric baseline. The checksum pins the loss trace of this
// build configuration so unintended changes to the baseline path are caught.
TEST(Trainer, BaselineChecksum) {
    TrainConfig cfg = small_config("A", 30);
    const auto rows = run_rows(cfg);
    for (const auto &r : rows) {
        std::stringstream ss(r);
        std::string it, view, photo, geo, ray, amorph;
        std::getline(ss, it, ',');
        std::getline(ss, view, ',');
        std::getline(ss, photo, ',');
        std::getline(ss, geo, ',');
        std::getline(ss, ray, ',');
        std::getline(ss, amorph, ',');
        EXPECT_EQ(geo, "0");
        EXPECT_EQ(ray, "0");
        EXPECT_EQ(amorph, "0");
    }
    EXPECT_EQ(fnv1a(rows), kBaselineChecksum) << std::hex << fnv1a(rows);
}

TEST(Trainer, CheckpointResumeIsExact) {
    const TrainConfig cfg = small_config("G", 40);
    const SmallScene &s   = small_scene();
    const auto dir        = std::filesystem::temp_directory_path() / "splatlab_resume_test";
    std::filesystem::create_directories(dir);
    Trainer full(cfg, make_train_data(s.spec, s.data), s.spec);
    std::vector<std::string> tail_full;
    while (full.iteration() < cfg.iterations) {
        const StepLog l = full.step();
        if (l.iteration == 25) full.save_checkpoint(dir / "mid.ply");
        if (l.iteration > 25) tail_full.push_back(csv_row(l));
    }
    Trainer resumed(cfg, make_train_data(s.spec, s.data), s.spec);
    resumed.load_checkpoint(dir / "mid.ply");
    EXPECT_EQ(resumed.iteration(), 25);
    std::vector<std::string> tail;
    while (resumed.iteration() < cfg.iterations) tail.push_back(csv_row(resumed.step()));
    EXPECT_EQ(tail, tail_full);
    EXPECT_THROW(resumed.load_checkpoint(dir / "missing.ply"), IoError);
    std::filesystem::remove_all(dir);
}

TEST(Trainer, RunTrainingWritesOutputsAndDiagnostics) {
    TrainConfig cfg     = small_config("E", 30);
    cfg.image_interval  = 10;
    cfg.checkpoint_interval = 10;
    const SmallScene &s = small_scene();
    const auto dir      = std::filesystem::temp_directory_path() / "splatlab_run_test";
    std::filesystem::remove_all(dir);
    Trainer tr(cfg, make_train_data(s.spec, s.data), s.spec);
    const auto logs = run_training(tr, {dir, {"preset E"}, nullptr});
    EXPECT_EQ(logs.size(), 30u);
    const std::string csv = slurp(dir / "loss.csv");
    EXPECT_EQ(csv.rfind("# preset E\n" + csv_header() + "\n", 0), 0u);
    for (const char *f : {"checkpoint_final.ply", "checkpoint_final.ply.adam", "checkpoint_000010.ply",
                          "images/iter_000010_view_00.ppm", "images/iter_000030_view_00.ppm"}) {
        EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
    }
    EXPECT_EQ(read_primitives_ply(dir / "checkpoint_final.ply").size(), tr.primitives().size());

    // A non-finite color makes the photometric term non-finite.
    auto bad = tr.primitives();
    bad[0].sh.dc.x() = std::numeric_limits<double>::quiet_NaN();
    Trainer broken(cfg, make_train_data(s.spec, s.data), bad);
    const auto dir2 = dir / "broken";
    try {
        run_training(broken, {dir2, {}, nullptr});
        ADD_FAILURE() << "expected NumericalError";
    } catch (const NumericalError &e) {
        EXPECT_NE(std::string(e.what()).find("photo"), std::string::npos) << e.what();
    }
    EXPECT_TRUE(std::filesystem::exists(dir2 / "diagnostic.txt"));
    std::filesystem::remove_all(dir);
}
