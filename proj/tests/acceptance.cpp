// End-to-end acceptance gate. Each criterion prints exactly one PASS/FAIL
// line; the process exits nonzero if any criterion fails. Pass criterion
// numbers as arguments to run a subset (default: all).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "gltd/augment.hpp"
#include "gltd/eval.hpp"
#include "gltd/geometry.hpp"
#include "gltd/image.hpp"
#include "gltd/losses.hpp"
#include "gltd/model.hpp"
#include "gltd/rng.hpp"
#include "gltd/synth.hpp"
#include "gltd/tape.hpp"
#include "gltd/tensor.hpp"
#include "gltd/trainer.hpp"

#include "oracles.hpp"

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v, int prec = 3) {
    std::ostringstream os;
    os.precision(prec);
    os << std::fixed << v;
    return os.str();
}

struct Result {
    bool pass = false;
    std::string detail;
};

fs::path work_root() {
    static const fs::path root = [] {
        const fs::path p = fs::temp_directory_path() / "gltd_acceptance";
        fs::remove_all(p);
        fs::create_directories(p);
        return p;
    }();
    return root;
}

gltd::Tensor softmax_tensor(const gltd::Tensor& logits) {
    gltd::Tensor out = logits;
    for (std::size_t r = 0; r < out.rows(); ++r) {
        double mx = -1e300;
        for (std::size_t c = 0; c < out.cols(); ++c) mx = std::max(mx, out.at(r, c));
        double z = 0.0;
        for (std::size_t c = 0; c < out.cols(); ++c) {
            out.at(r, c) = std::exp(out.at(r, c) - mx);
            z += out.at(r, c);
        }
        for (std::size_t c = 0; c < out.cols(); ++c) out.at(r, c) /= z;
    }
    return out;
}

// ---- criterion 1: matching functions agree with brute-force oracles -----------

Result criterion1() {
    const auto t0 = Clock::now();
    gltd::Rng root(20260816);
    const std::size_t n_pairs = 200;

    for (std::size_t i = 0; i < n_pairs; ++i) {
        gltd::Rng rng = root.child(i);
        const auto W = static_cast<std::size_t>(24 + rng.uniform_int(105));
        const auto H = static_cast<std::size_t>(24 + rng.uniform_int(105));
        const std::size_t r = rng.bernoulli(0.5) ? 4 : 8;

        const auto sample_rect = [&](gltd::GeoParams& g) {
            const double wd = static_cast<double>(W), hd = static_cast<double>(H);
            const double ext_x = rng.uniform(2.0, wd);
            const double ext_y = rng.uniform(2.0, hd);
            g.ul_x = rng.uniform(0.0, wd - ext_x);
            g.ul_y = rng.uniform(0.0, hd - ext_y);
            g.lr_x = g.ul_x + ext_x;
            g.lr_y = g.ul_y + ext_y;
            g.h = r * static_cast<std::size_t>(1 + rng.uniform_int(6));
            g.w = r * static_cast<std::size_t>(1 + rng.uniform_int(6));
            g.f = rng.bernoulli(0.5);
        };
        gltd::GeoParams ga, gb;
        sample_rect(ga);
        sample_rect(gb);

        const gltd::DownscaleSpec spec{r};
        const gltd::PosEncoding ea = gltd::token_centers(ga, spec);
        const gltd::PosEncoding eb = gltd::token_centers(gb, spec);
        const gltd::Matching mg = gltd::geometric_match(ea, eb);
        const oracles::BruteMatch bg =
            oracles::brute_geometric_match(ga, ga.h / r, ga.w / r, gb, gb.h / r, gb.w / r);
        if (mg.target != bg.target)
            return {false, "geometric indices diverge from oracle on pair " + std::to_string(i)};
        if (std::vector<bool>(mg.mask) != bg.mask)
            return {false, "geometric masks diverge from oracle on pair " + std::to_string(i)};
        for (std::size_t k = 0; k < mg.count(); ++k)
            if (std::abs(mg.distance[k] - bg.distance[k]) > 1e-9)
                return {false, "geometric distance drifts from oracle on pair " + std::to_string(i)};

        const std::size_t d = 16;
        gltd::Tensor za = gltd::Tensor::randn({ea.count(), d}, rng);
        gltd::Tensor zb = gltd::Tensor::randn({eb.count(), d}, rng);
        const gltd::Matching ms = gltd::similarity_match(za, zb);
        const oracles::BruteMatch bs = oracles::brute_similarity_match(za, zb);
        if (ms.target != bs.target)
            return {false, "similarity indices diverge from oracle on pair " + std::to_string(i)};
        for (bool m : ms.mask)
            if (!m) return {false, "similarity mask not all-true on pair " + std::to_string(i)};
        for (std::size_t k = 0; k < ms.count(); ++k)
            if (std::abs(ms.distance[k] - bs.distance[k]) > 1e-12)
                return {false, "similarity cosine drifts from oracle on pair " + std::to_string(i)};
    }

    const double dt = seconds_since(t0);
    if (dt >= 10.0) return {false, "exceeded the 10 s budget: " + fmt(dt) + " s"};
    return {true, std::to_string(n_pairs) + " random crop pairs match both brute-force oracles (" +
                      fmt(dt, 2) + " s)"};
}

// ---- criterion 2: threshold boundary semantics ---------------------------------

Result criterion2() {
    const auto t0 = Clock::now();
    const gltd::DownscaleSpec spec{8};

    // Disjoint rectangles, 48 px apart; threshold is half a token diagonal.
    gltd::GeoParams ga{8.0, 8.0, 40.0, 40.0, 32, 32, false};
    gltd::GeoParams gb{88.0, 88.0, 120.0, 120.0, 32, 32, false};
    const gltd::PosEncoding ea = gltd::token_centers(ga, spec);
    const gltd::PosEncoding eb = gltd::token_centers(gb, spec);
    for (const auto& m : {gltd::geometric_match(ea, eb), gltd::geometric_match(eb, ea)})
        for (bool on : m.mask)
            if (on) return {false, "disjoint crops produced an unmasked match"};

    // Masked-out pairs must contribute exactly zero loss.
    {
        gltd::Rng rng(7);
        const std::size_t I = 8, d = 4;
        gltd::Tape t;
        gltd::ForwardBundle bundle;
        bundle.multi_crop = true;
        bundle.n_local = 0;
        for (std::size_t vi = 0; vi < 2; ++vi) {
            gltd::ViewTerm term;
            term.view_id = vi;
            term.is_global = true;
            term.enc = vi == 0 ? ea : eb;
            const std::size_t K = term.enc.count();
            term.has_teacher = true;
            term.t_global_prob = softmax_tensor(gltd::Tensor::randn({1, I}, rng));
            term.t_dense_prob = softmax_tensor(gltd::Tensor::randn({K, I}, rng));
            term.t_dense_rep = gltd::Tensor::randn({K, d}, rng);
            term.s_global_prob = t.constant(softmax_tensor(gltd::Tensor::randn({1, I}, rng)));
            term.s_dense_prob = t.constant(softmax_tensor(gltd::Tensor::randn({K, I}, rng)));
            term.s_dense_rep = gltd::Tensor::randn({K, d}, rng);
            bundle.views.push_back(std::move(term));
        }
        const double local = t.value(gltd::local_loss_geo(t, bundle)).scalar_value();
        if (local != 0.0)
            return {false, "disjoint-crop local term is " + std::to_string(local) + ", not 0"};
    }

    // Identical crops: identity matching, exact zero distances, full mask.
    gltd::GeoParams gc{16.0, 12.0, 80.0, 76.0, 32, 32, true};
    const gltd::PosEncoding ec = gltd::token_centers(gc, spec);
    const gltd::Matching mid = gltd::geometric_match(ec, ec);
    for (std::size_t k = 0; k < mid.count(); ++k) {
        if (mid.target[k] != k) return {false, "identical crops did not match identically"};
        if (mid.distance[k] != 0.0) return {false, "identical crops gave a nonzero distance"};
        if (!mid.mask[k]) return {false, "identical crops left a token masked out"};
    }

    const double dt = seconds_since(t0);
    if (dt >= 1.0) return {false, "exceeded the 1 s budget: " + fmt(dt) + " s"};
    return {true, "disjoint crops: all-false masks, local term exactly 0; identical crops: "
                  "identity match, all distances exactly 0 (" + fmt(dt, 3) + " s)"};
}

// ---- criterion 3: ordered pair-term counting ------------------------------------

gltd::ForwardBundle make_prob_bundle(gltd::Tape& t, std::size_t n_views, bool multi_crop,
                                     std::size_t n_local, gltd::Rng& rng,
                                     std::vector<gltd::Tensor>* t_probs,
                                     std::vector<gltd::Tensor>* s_probs) {
    const std::size_t I = 8, d = 4;
    const gltd::GeoParams g{0.0, 0.0, 16.0, 16.0, 16, 16, false};
    const gltd::PosEncoding enc = gltd::token_centers(g, gltd::DownscaleSpec{16});

    gltd::ForwardBundle bundle;
    bundle.multi_crop = multi_crop;
    bundle.n_local = n_local;
    for (std::size_t vi = 0; vi < n_views; ++vi) {
        gltd::ViewTerm term;
        term.view_id = vi;
        term.is_global = !multi_crop || vi < 2;
        term.enc = enc;
        term.has_teacher = multi_crop ? vi < 2 : true;
        term.t_global_prob = softmax_tensor(gltd::Tensor::randn({1, I}, rng));
        term.t_dense_prob = softmax_tensor(gltd::Tensor::randn({1, I}, rng));
        term.t_dense_rep = gltd::Tensor::randn({1, d}, rng);
        const gltd::Tensor sp = softmax_tensor(gltd::Tensor::randn({1, I}, rng));
        term.s_global_prob = t.constant(sp);
        term.s_dense_prob = t.constant(softmax_tensor(gltd::Tensor::randn({1, I}, rng)));
        term.s_dense_rep = gltd::Tensor::randn({1, d}, rng);
        if (t_probs) t_probs->push_back(term.t_global_prob);
        if (s_probs) s_probs->push_back(sp);
        bundle.views.push_back(std::move(term));
    }
    return bundle;
}

Result criterion3() {
    gltd::Rng root(11);
    std::string summary;

    const auto check_count = [&](bool multi_crop, std::size_t n_views, std::size_t n_local,
                                 std::size_t want) -> Result {
        gltd::Rng rng = root.child(n_views * 16 + n_local);
        gltd::Tape t;
        std::vector<gltd::Tensor> tp, sp;
        const gltd::ForwardBundle bundle =
            make_prob_bundle(t, n_views, multi_crop, n_local, rng, &tp, &sp);
        std::size_t pairs = 0;
        const gltd::VarId loss = gltd::global_loss(t, bundle, &pairs);
        if (pairs != want)
            return {false, (multi_crop ? "multi-crop" : "all-pairs") + std::string(" bundle of ") +
                               std::to_string(n_views) + " views produced " +
                               std::to_string(pairs) + " terms, wanted " + std::to_string(want)};

        // Independent value check: mean of the brute pairwise cross-entropies.
        double brute = 0.0;
        for (std::size_t a = 0; a < n_views; ++a) {
            if (!bundle.views[a].has_teacher) continue;
            for (std::size_t b = 0; b < n_views; ++b) {
                if (a == b) continue;
                brute += oracles::brute_cross_entropy(
                    std::vector<double>(tp[a].data.begin(), tp[a].data.end()),
                    std::vector<double>(sp[b].data.begin(), sp[b].data.end()));
            }
        }
        brute /= static_cast<double>(want);
        const double got = t.value(loss).scalar_value();
        if (oracles::rel_err(got, brute) > 1e-12)
            return {false, "pair-averaged objective drifts from the brute sum"};
        return {true, ""};
    };

    for (const std::size_t n : {2u, 3u, 4u}) {
        const Result r = check_count(false, n, 0, n * (n - 1));
        if (!r.pass) return r;
        summary += std::to_string(n) + "->" + std::to_string(n * (n - 1)) + " ";
    }
    for (const std::size_t nl : {0u, 2u, 8u}) {
        const Result r = check_count(true, 2 + nl, nl, 2 * (nl + 1));
        if (!r.pass) return r;
        summary += "loc" + std::to_string(nl) + "->" + std::to_string(2 * (nl + 1)) + " ";
    }
    return {true, "ordered pair terms count exactly: " + summary};
}

// ---- criteria 4 and 5 share the training-style loss pipeline --------------------

struct TinyRig {
    gltd::BackboneConfig cfg;
    gltd::MultiCropConfig crops;
    gltd::Temps temps;
    gltd::ParamSet student;
    gltd::ParamSet teacher;
    gltd::Tensor center;
    gltd::ViewSet views;

    struct TeacherProducts {
        gltd::Tensor global_prob;
        gltd::Tensor dense_prob;
        gltd::Tensor dense_rep;
    };
    std::vector<TeacherProducts> teacher_views;  // first two views only
};

TinyRig make_tiny_rig() {
    TinyRig rig;
    rig.cfg.r = 8;
    rig.cfg.d = 12;
    rig.cfg.blocks = 1;
    rig.cfg.block_type = "attention";
    rig.cfg.mlp_hidden = 16;
    rig.cfg.head_hidden = 16;
    rig.cfg.bottleneck = 6;
    rig.cfg.prototypes = 16;

    rig.crops.global1.out_h = rig.crops.global1.out_w = 16;
    rig.crops.global2.out_h = rig.crops.global2.out_w = 16;
    rig.crops.local.out_h = rig.crops.local.out_w = 8;
    rig.crops.local.area_min = 0.05;
    rig.crops.local.area_max = 0.4;
    rig.crops.n_local = 2;
    rig.crops.down.r = 8;

    gltd::Rng rs(100), rt(200), rc(300), ri(400), rv(500);
    rig.student = gltd::init_params(rig.cfg, rs);
    rig.teacher = gltd::init_params(rig.cfg, rt);
    rig.center = gltd::Tensor::randn({1, rig.cfg.prototypes}, rc, 0.05);

    const gltd::Image img = gltd::synth_image(3, ri, 48);
    rig.views = gltd::make_views(img, rig.crops, rv);

    for (std::size_t vi = 0; vi < 2; ++vi) {
        gltd::Tape tt;
        gltd::BoundParams tp = gltd::bind_constants(tt, rig.teacher);
        const gltd::ForwardOut f = gltd::forward(tt, tp, rig.cfg, rig.views.views[vi].image);
        const gltd::VarId gl = gltd::head_logits(tt, tp, "head_g", f.zbar);
        const gltd::VarId dl = gltd::head_logits(tt, tp, "head_d", f.z);
        TinyRig::TeacherProducts prod;
        prod.global_prob =
            tt.value(gltd::head_probs(tt, gl, gltd::Role::Teacher, rig.temps, rig.center));
        prod.dense_prob =
            tt.value(gltd::head_probs(tt, dl, gltd::Role::Teacher, rig.temps, rig.center));
        prod.dense_rep = tt.value(f.z);
        rig.teacher_views.push_back(std::move(prod));
    }
    return rig;
}

// Student forward over every view with fixed teacher targets; mirrors one
// image's slice of a training step.
gltd::VarId rig_loss(gltd::Tape& t, const TinyRig& rig, const gltd::BoundParams& sp,
                     gltd::Setting setting) {
    gltd::ForwardBundle bundle;
    bundle.multi_crop = true;
    bundle.n_local = rig.crops.n_local;
    for (std::size_t vi = 0; vi < rig.views.views.size(); ++vi) {
        const gltd::View& view = rig.views.views[vi];
        gltd::ViewTerm term;
        term.view_id = vi;
        term.is_global = view.is_global;
        term.enc = gltd::token_centers(view.geo, rig.crops.down);
        const gltd::ForwardOut f = gltd::forward(t, sp, rig.cfg, view.image);
        term.s_global_prob =
            gltd::head(t, sp, "head_g", f.zbar, gltd::Role::Student, rig.temps, rig.center);
        term.s_dense_prob =
            gltd::head(t, sp, "head_d", f.z, gltd::Role::Student, rig.temps, rig.center);
        term.s_dense_rep = t.value(f.z);
        if (vi < 2) {
            term.has_teacher = true;
            term.t_global_prob = rig.teacher_views[vi].global_prob;
            term.t_dense_prob = rig.teacher_views[vi].dense_prob;
            term.t_dense_rep = rig.teacher_views[vi].dense_rep;
        }
        bundle.views.push_back(std::move(term));
    }
    return gltd::total_loss(t, bundle, setting).total;
}

Result criterion4() {
    const auto t0 = Clock::now();
    const TinyRig rig = make_tiny_rig();
    const std::size_t n_params = rig.student.scalar_count();
    if (n_params > 5000)
        return {false, "probe model has " + std::to_string(n_params) + " parameters (> 5000)"};

    gltd::Rng coord_rng(4242);
    std::string summary;
    double worst_overall = 0.0;
    for (const gltd::Setting setting :
         {gltd::Setting::Vanilla, gltd::Setting::Similarity, gltd::Setting::Geometric}) {
        const auto coords = oracles::random_coords(rig.student.values, 10, coord_rng);
        const double worst = oracles::max_fd_rel_err(
            rig.student.values,
            [&](gltd::Tape& t, const std::vector<gltd::VarId>& leaves) {
                gltd::BoundParams sp;
                sp.set = &rig.student;
                sp.vars = leaves;
                return rig_loss(t, rig, sp, setting);
            },
            coords);
        worst_overall = std::max(worst_overall, worst);
        summary += gltd::setting_name(setting) + "=" + fmt(worst * 1e6, 2) + "e-6 ";
        if (worst >= 1e-4)
            return {false, "finite differences disagree for the " + gltd::setting_name(setting) +
                               " objective: max rel err " + std::to_string(worst)};
    }
    const double dt = seconds_since(t0);
    if (dt >= 60.0) return {false, "exceeded the 60 s budget: " + fmt(dt) + " s"};
    return {true, std::to_string(n_params) + " params, 10 coords x 3 objectives, max rel err " +
                      summary + "(" + fmt(dt, 1) + " s)"};
}

Result criterion5() {
    // Dataflow probe: teacher parameters registered as gradient leaves next to
    // the student's; the objective must route no gradient into them.
    {
        const TinyRig rig = make_tiny_rig();
        const std::size_t P = rig.student.count();
        gltd::Tape t;
        gltd::BoundParams sp = gltd::bind_leaves(t, rig.student);
        for (std::size_t i = 0; i < rig.teacher.count(); ++i)
            t.leaf(rig.teacher.values[i], static_cast<int>(P + i));

        std::vector<gltd::Tensor> grads = gltd::zero_like(rig.student);
        for (const auto& v : rig.teacher.values) grads.push_back(gltd::Tensor::zeros(v.shape));
        t.backward(rig_loss(t, rig, sp, gltd::Setting::Geometric), grads);

        for (std::size_t i = P; i < grads.size(); ++i)
            for (double g : grads[i].data)
                if (g != 0.0) return {false, "gradient leaked into a teacher parameter"};
        double student_norm = 0.0;
        for (std::size_t i = 0; i < P; ++i)
            for (double g : grads[i].data) student_norm += g * g;
        if (!(student_norm > 0.0)) return {false, "student gradient vanished in the probe"};
    }

    // A real optimizer step must leave the teacher byte-identical when the
    // averaging update is withheld.
    {
        const fs::path dir = work_root() / "c5_ds";
        gltd::write_synth_dataset(dir.string(), 4, 2, 9, 64);
        const gltd::Dataset ds = gltd::Dataset::load(dir.string());

        gltd::KeyValues kv;
        kv["epochs"] = "1";
        kv["batch_size"] = "2";
        kv["warmup_epochs"] = "0";
        kv["patch_size"] = "8";
        kv["feature_dim"] = "12";
        kv["mlp_hidden"] = "16";
        kv["head_hidden"] = "16";
        kv["bottleneck"] = "6";
        kv["prototypes"] = "16";
        kv["global_size"] = "32";
        kv["local_size"] = "16";
        kv["n_local_crops"] = "2";
        gltd::TrainConfig cfg = gltd::train_config_from_kv(kv);

        gltd::Rng root(17);
        gltd::Rng init_rng = root.child_named("init", 0);
        gltd::ModelState state = gltd::init_model(cfg.backbone, init_rng);
        gltd::OptimizerState opt = gltd::OptimizerState::init(state.student);
        const gltd::ScheduleInfo sched = gltd::make_schedule(cfg, ds.size());
        const gltd::ParamSet teacher_before = state.teacher;

        gltd::Rng step_rng = root.child_named("step", 0);
        gltd::train_step(state, opt, ds, {0, 1}, cfg, sched, step_rng, /*apply_ema=*/false);

        for (std::size_t i = 0; i < state.teacher.count(); ++i)
            if (state.teacher.values[i].data != teacher_before.values[i].data)
                return {false, "train step moved a teacher parameter"};

        // Averaging identities at the endpoints.
        gltd::ModelState lam1 = state;
        const gltd::ParamSet t_snapshot = lam1.teacher;
        gltd::ema_update(lam1, 1.0);
        for (std::size_t i = 0; i < lam1.teacher.count(); ++i)
            if (lam1.teacher.values[i].data != t_snapshot.values[i].data)
                return {false, "coefficient-1 average moved the teacher"};
        gltd::ModelState lam0 = state;
        gltd::ema_update(lam0, 0.0);
        for (std::size_t i = 0; i < lam0.teacher.count(); ++i)
            if (lam0.teacher.values[i].data != lam0.student.values[i].data)
                return {false, "coefficient-0 average did not copy the student"};
    }
    return {true, "no gradient reaches teacher parameters; a step leaves them untouched; "
                  "averaging identities at 0 and 1 are exact"};
}

// ---- criterion 6: scaled behavioral check ----------------------------------------

gltd::TrainConfig run_config(const std::string& setting, std::uint64_t seed,
                             const std::string& dataset_dir, const fs::path& out_dir,
                             std::size_t epochs) {
    gltd::KeyValues kv;
    kv["setting"] = setting;
    kv["seed"] = std::to_string(seed);
    kv["epochs"] = std::to_string(epochs);
    kv["warmup_epochs"] = std::to_string(std::min<std::size_t>(3, epochs));
    kv["dataset_dir"] = dataset_dir;
    kv["out_dir"] = out_dir.string();
    return gltd::train_config_from_kv(kv);
}

Result criterion6() {
    const auto t0 = Clock::now();
    const fs::path ds_dir = work_root() / "c6_ds";
    gltd::write_synth_dataset(ds_dir.string(), 512, 8, 1234, 96);
    const gltd::Dataset ds = gltd::Dataset::load(ds_dir.string());
    const std::vector<gltd::Image> corr_images(ds.images.begin(), ds.images.begin() + 32);

    int knn_wins = 0, corr_wins = 0;
    std::string lines;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto ts = Clock::now();
        const gltd::TrainConfig geo_cfg =
            run_config("geometric", seed, ds_dir.string(), work_root() / ("c6_g" + std::to_string(seed)), 30);
        const gltd::TrainResult geo = gltd::train(geo_cfg, ds);

        const gltd::TrainConfig van_cfg =
            run_config("vanilla", seed, ds_dir.string(), work_root() / ("c6_v" + std::to_string(seed)), 30);
        const gltd::TrainResult van = gltd::train(van_cfg, ds);

        const std::size_t gs = geo_cfg.crops.global1.out_h;
        const gltd::EmbeddingBank trained =
            gltd::build_bank(geo.state.teacher, geo_cfg.backbone, ds, gs);
        const double knn_trained =
            gltd::knn_eval(trained, trained.anchors, ds.labels, 5, false, true);

        gltd::Rng root(seed);
        gltd::Rng init_rng = root.child_named("init", 0);
        const gltd::ModelState init = gltd::init_model(geo_cfg.backbone, init_rng);
        const gltd::EmbeddingBank frozen = gltd::build_bank(init.teacher, geo_cfg.backbone, ds, gs);
        const double knn_init = gltd::knn_eval(frozen, frozen.anchors, ds.labels, 5, false, true);

        const gltd::CorrespondenceReport corr_geo = gltd::correspondence_eval(
            geo.state.teacher, geo_cfg.backbone, geo_cfg.crops, corr_images, 424242);
        const gltd::CorrespondenceReport corr_van = gltd::correspondence_eval(
            van.state.teacher, van_cfg.backbone, van_cfg.crops, corr_images, 424242);

        const bool win_a = knn_trained >= knn_init + 0.10;
        const bool win_b = corr_geo.accuracy >= corr_van.accuracy;
        knn_wins += win_a ? 1 : 0;
        corr_wins += win_b ? 1 : 0;
        std::cout << "  [c6 seed " << seed << "] knn " << fmt(knn_trained) << " vs init "
                  << fmt(knn_init) << (win_a ? " (+)" : " (-)") << ", corr " << fmt(corr_geo.accuracy)
                  << " vs vanilla " << fmt(corr_van.accuracy) << (win_b ? " (+)" : " (-)") << "  ["
                  << fmt(seconds_since(ts), 0) << " s]" << std::endl;
        lines += "s" + std::to_string(seed) + (win_a ? "+" : "-") + (win_b ? "+" : "-") + " ";
    }

    const double dt = seconds_since(t0);
    const std::string detail = "knn margin 4/5 needed, got " + std::to_string(knn_wins) +
                               "/5; correspondence ordering got " + std::to_string(corr_wins) +
                               "/5 [" + lines + "] (" + fmt(dt / 60.0, 1) + " min)";
    if (knn_wins < 4 || corr_wins < 4) return {false, detail};
    return {true, detail};
}

// ---- criterion 7: matching-collapse diagnostic ------------------------------------

Result criterion7() {
    const auto t0 = Clock::now();
    const fs::path ds_dir = work_root() / "c7_ds";
    gltd::write_synth_dataset(ds_dir.string(), 32, 8, 77, 96);
    const gltd::Dataset ds = gltd::Dataset::load(ds_dir.string());

    int wins = 0;
    std::string lines;
    fs::path logged_metrics;
    std::size_t logged_steps = 0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const gltd::TrainConfig sim_cfg =
            run_config("similarity", seed, ds_dir.string(), work_root() / ("c7_s" + std::to_string(seed)), 30);
        const gltd::TrainResult sim = gltd::train(sim_cfg, ds);
        const gltd::TrainConfig geo_cfg =
            run_config("geometric", seed, ds_dir.string(), work_root() / ("c7_g" + std::to_string(seed)), 30);
        const gltd::TrainResult geo = gltd::train(geo_cfg, ds);

        // Collapse of the trained models' similarity matching, measured on a
        // shared set of evaluation pairs.
        const double cs = gltd::correspondence_eval(sim.state.teacher, sim_cfg.backbone,
                                                    sim_cfg.crops, ds.images, 424242)
                              .collapse_index_mean;
        const double cg = gltd::correspondence_eval(geo.state.teacher, geo_cfg.backbone,
                                                    geo_cfg.crops, ds.images, 424242)
                              .collapse_index_mean;
        const bool win = cs >= 3.0 * cg;
        wins += win ? 1 : 0;
        lines += "s" + std::to_string(seed) + ":" + fmt(cs, 2) + "/" + fmt(cg, 2) +
                 (win ? "+ " : "- ");
        if (seed == 0) {
            logged_metrics = fs::path(sim.metrics_path);
            logged_steps = sim.history.size();
        }
        std::cout << "  [c7 seed " << seed << "] similarity collapse " << fmt(cs) << ", geometric "
                  << fmt(cg) << (win ? " (>=3x)" : " (<3x)") << std::endl;
    }

    // Fallback observables, checked regardless of which mode decides the pass:
    // the diagnostic is logged every step, and a degenerate target set scores
    // exactly 1.
    std::ifstream in(logged_metrics);
    if (!in.good()) return {false, "metrics stream missing: " + logged_metrics.string()};
    std::size_t lines_with_field = 0;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto j = nlohmann::json::parse(line);
        if (!j.contains("collapse_index") || !j["collapse_index"].is_number())
            return {false, "a metrics line lacks the collapse diagnostic"};
        ++lines_with_field;
    }
    if (lines_with_field != logged_steps)
        return {false, "collapse diagnostic logged " + std::to_string(lines_with_field) +
                           " times for " + std::to_string(logged_steps) + " steps"};
    {
        gltd::Rng rng(5);
        gltd::Tensor z = gltd::Tensor::randn({6, 4}, rng);
        gltd::Tensor z_same({6, 4});
        for (std::size_t r = 0; r < 6; ++r)
            for (std::size_t c = 0; c < 4; ++c) z_same.at(r, c) = 1.0 + 0.5 * static_cast<double>(c);
        const double ci = gltd::collapse_index(gltd::similarity_match(z, z_same));
        if (ci != 1.0)
            return {false, "identical-target collapse index is " + std::to_string(ci) + ", not 1"};
    }

    const double dt = seconds_since(t0);
    if (dt >= 600.0) return {false, "exceeded the 10 min budget: " + fmt(dt) + " s"};
    const std::string detail = (wins >= 4 ? "similarity >= 3x geometric on " : "3x margin only ") +
                               std::to_string(wins) + "/5 seeds [" + lines +
                               "]; per-step logging and the degenerate-target unit case hold (" +
                               fmt(dt / 60.0, 1) + " min)";
    if (wins >= 4) return {true, detail};
    // Degraded mode: the diagnostic itself is verified even when the margin
    // does not materialize at this scale.
    return {true, "degraded mode: " + detail};
}

// ---- criterion 8: run-to-run determinism ------------------------------------------

std::string file_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

Result criterion8() {
    const fs::path ds_dir = work_root() / "c7_ds";
    if (!fs::exists(ds_dir / "labels.tsv")) gltd::write_synth_dataset(ds_dir.string(), 32, 8, 77, 96);
    const gltd::Dataset ds = gltd::Dataset::load(ds_dir.string());

    const gltd::TrainConfig cfg = run_config("geometric", 5, ds_dir.string(), work_root() / "c8_run", 2);
    const gltd::TrainResult a = gltd::train(cfg, ds);
    const std::string ckpt_a = file_bytes(a.checkpoint_path);
    const std::string metrics_a = file_bytes(a.metrics_path);
    const gltd::TrainResult b = gltd::train(cfg, ds);

    if (ckpt_a != file_bytes(b.checkpoint_path))
        return {false, "checkpoints differ between identical runs"};
    if (metrics_a != file_bytes(b.metrics_path))
        return {false, "metrics streams differ between identical runs"};
    if (ckpt_a.empty()) return {false, "checkpoint is empty"};
    return {true, "repeated runs of one configuration produce byte-identical checkpoints and metrics"};
}

// ---- criterion 9: quadratic matching cost ------------------------------------------

Result criterion9() {
    const std::size_t d = 32;
    gltd::Rng rng(33);
    const std::vector<std::size_t> ks = {16, 64, 256};
    const std::vector<std::size_t> reps = {16384, 1024, 64};

    std::vector<double> per_call(ks.size());
    std::string summary;
    for (std::size_t i = 0; i < ks.size(); ++i) {
        const std::size_t K = ks[i];
        const gltd::Tensor za = gltd::Tensor::randn({K, d}, rng);
        const gltd::Tensor zb = gltd::Tensor::randn({K, d}, rng);
        std::size_t acc = gltd::similarity_match(za, zb).target[0];  // warm
        double best = 1e300;
        for (int round = 0; round < 3; ++round) {
            const auto t0 = Clock::now();
            for (std::size_t r = 0; r < reps[i]; ++r)
                acc += gltd::similarity_match(za, zb).target[K - 1];
            best = std::min(best, seconds_since(t0));
        }
        volatile std::size_t sink = acc;
        (void)sink;
        per_call[i] = best / static_cast<double>(reps[i]);
        summary += "K=" + std::to_string(K) + ":" + fmt(per_call[i] * 1e6, 1) + "us ";
    }

    double lo = 1e300, hi = 0.0;
    for (std::size_t i = 0; i < ks.size(); ++i) {
        const double c = per_call[i] / (static_cast<double>(ks[i]) * static_cast<double>(ks[i]));
        lo = std::min(lo, c);
        hi = std::max(hi, c);
    }
    const double ratio = hi / lo;
    if (ratio > 9.0)
        return {false, "normalized cost spreads by " + fmt(ratio, 2) + "x (limit 9): " + summary};
    return {true, "time fits c*K^2 within " + fmt(std::sqrt(ratio), 2) + "x of a single constant (" +
                      summary + "spread " + fmt(ratio, 2) + "x <= 9)"};
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::pair<int, std::function<Result()>>> criteria = {
        {1, criterion1}, {2, criterion2}, {3, criterion3}, {4, criterion4}, {5, criterion5},
        {6, criterion6}, {7, criterion7}, {8, criterion8}, {9, criterion9},
    };
    std::vector<int> wanted;
    for (int i = 1; i < argc; ++i) wanted.push_back(std::atoi(argv[i]));

    bool all_pass = true;
    for (const auto& [num, fn] : criteria) {
        if (!wanted.empty() && std::find(wanted.begin(), wanted.end(), num) == wanted.end())
            continue;
        Result r;
        try {
            r = fn();
        } catch (const std::exception& e) {
            r = {false, std::string("exception: ") + e.what()};
        }
        std::cout << "criterion " << num << ": " << (r.pass ? "PASS" : "FAIL") << " - " << r.detail
                  << std::endl;
        all_pass = all_pass && r.pass;
    }
    return all_pass ? 0 : 1;
}
