#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "gltd/augment.hpp"
#include "gltd/common.hpp"
#include "gltd/config.hpp"
#include "gltd/losses.hpp"
#include "gltd/model.hpp"
#include "gltd/rng.hpp"

namespace gltd {

struct TrainConfig {
    Setting setting = Setting::Geometric;
    std::size_t epochs = 30;
    std::size_t batch_size = 16;
    double base_lr = 0.0005;  // peak = base_lr · batch/256
    double lr_floor = 1e-6;
    std::size_t warmup_epochs = 3;
    double weight_decay_start = 0.04;
    double weight_decay_end = 0.4;
    double lambda_ema = 0.996;  // EMA coefficient at step 0, cosine-ramped to lambda_end
    double lambda_end = 1.0;
    std::string ema_every = "step";  // step | epoch
    double center_momentum = 0.9;
    Temps temps;
    double local_weight = 1.0;
    double grad_clip = 3.0;  // global max-norm; 0 disables
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    std::uint64_t seed = 0;

    BackboneConfig backbone;
    MultiCropConfig crops;

    std::string dataset_dir;
    std::string out_dir;

    void validate() const {
        check_config(batch_size >= 1, "batch size must be at least 1");
        check_config(warmup_epochs <= epochs, "warmup epochs cannot exceed total epochs");
        check_config(ema_every == "step" || ema_every == "epoch",
                     "ema_every must be 'step' or 'epoch'");
        check_config(lambda_ema >= 0.0 && lambda_ema <= 1.0 && lambda_end >= 0.0 &&
                         lambda_end <= 1.0,
                     "EMA coefficients must lie in [0, 1]");
        check_config(center_momentum >= 0.0 && center_momentum <= 1.0,
                     "center momentum must lie in [0, 1]");
        check_config(temps.tau_s > 0.0 && temps.tau_t > 0.0, "temperatures must be positive");
        check_config(base_lr > 0.0 && lr_floor >= 0.0, "learning rates must be positive");
        backbone.validate();
        crops.validate();
        check_config(backbone.r == crops.down.r,
                     "backbone patch size must equal the crop downscale factor");
    }
};

namespace detail {

inline std::string fmt_double(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

}  // namespace detail

// Full config snapshot as strings; feeds the checkpoint manifest, the run
// manifest, and the config hash. Round-trips through train_config_from_kv.
inline KeyValues train_config_to_kv(const TrainConfig& c) {
    KeyValues kv;
    const auto d = [&](const std::string& k, double v) { kv[k] = detail::fmt_double(v); };
    const auto u = [&](const std::string& k, std::uint64_t v) { kv[k] = std::to_string(v); };
    kv["setting"] = setting_name(c.setting);
    u("epochs", c.epochs);
    u("batch_size", c.batch_size);
    d("base_lr", c.base_lr);
    d("lr_floor", c.lr_floor);
    u("warmup_epochs", c.warmup_epochs);
    d("weight_decay_start", c.weight_decay_start);
    d("weight_decay_end", c.weight_decay_end);
    d("lambda_ema", c.lambda_ema);
    d("lambda_end", c.lambda_end);
    kv["ema_every"] = c.ema_every;
    d("center_momentum", c.center_momentum);
    d("tau_s", c.temps.tau_s);
    d("tau_t", c.temps.tau_t);
    d("local_weight", c.local_weight);
    d("grad_clip", c.grad_clip);
    d("adam_beta1", c.adam_beta1);
    d("adam_beta2", c.adam_beta2);
    d("adam_eps", c.adam_eps);
    u("seed", c.seed);

    u("patch_size", c.backbone.r);
    u("feature_dim", c.backbone.d);
    u("blocks", c.backbone.blocks);
    kv["block_type"] = c.backbone.block_type;
    u("mlp_hidden", c.backbone.mlp_hidden);
    u("head_hidden", c.backbone.head_hidden);
    u("bottleneck", c.backbone.bottleneck);
    u("prototypes", c.backbone.prototypes);
    kv["positional"] = c.backbone.positional ? "true" : "false";

    u("n_local_crops", c.crops.n_local);
    u("global_size", c.crops.global1.out_h);
    u("local_size", c.crops.local.out_h);
    d("global_area_min", c.crops.global1.area_min);
    d("global_area_max", c.crops.global1.area_max);
    d("local_area_min", c.crops.local.area_min);
    d("local_area_max", c.crops.local.area_max);
    d("ratio_min", c.crops.global1.ratio_min);
    d("ratio_max", c.crops.global1.ratio_max);
    d("flip_prob", c.crops.global1.flip_prob);
    d("jitter_prob", c.crops.global1.jitter_prob);
    d("jitter_brightness", c.crops.global1.jitter_brightness);
    d("jitter_contrast", c.crops.global1.jitter_contrast);
    d("jitter_saturation", c.crops.global1.jitter_saturation);
    d("grayscale_prob", c.crops.global1.grayscale_prob);
    d("blur_prob_global1", c.crops.global1.blur_prob);
    d("blur_prob_global2", c.crops.global2.blur_prob);
    d("blur_prob_local", c.crops.local.blur_prob);
    d("blur_sigma_min", c.crops.global1.blur_sigma_min);
    d("blur_sigma_max", c.crops.global1.blur_sigma_max);
    d("solarize_prob", c.crops.global2.solarize_prob);
    d("solarize_threshold", c.crops.global2.solarize_threshold);

    kv["dataset_dir"] = c.dataset_dir;
    kv["out_dir"] = c.out_dir;
    return kv;
}

inline TrainConfig train_config_from_kv(const KeyValues& raw) {
    ConfigReader r(raw);
    TrainConfig c;
    c.setting = parse_setting(r.get_string("setting", setting_name(c.setting)));
    c.epochs = r.get_size("epochs", c.epochs);
    c.batch_size = r.get_size("batch_size", c.batch_size);
    c.base_lr = r.get_double("base_lr", c.base_lr);
    c.lr_floor = r.get_double("lr_floor", c.lr_floor);
    c.warmup_epochs = r.get_size("warmup_epochs", c.warmup_epochs);
    c.weight_decay_start = r.get_double("weight_decay_start", c.weight_decay_start);
    c.weight_decay_end = r.get_double("weight_decay_end", c.weight_decay_end);
    c.lambda_ema = r.get_double("lambda_ema", c.lambda_ema);
    c.lambda_end = r.get_double("lambda_end", c.lambda_end);
    c.ema_every = r.get_string("ema_every", c.ema_every);
    c.center_momentum = r.get_double("center_momentum", c.center_momentum);
    c.temps.tau_s = r.get_double("tau_s", c.temps.tau_s);
    c.temps.tau_t = r.get_double("tau_t", c.temps.tau_t);
    c.local_weight = r.get_double("local_weight", c.local_weight);
    c.grad_clip = r.get_double("grad_clip", c.grad_clip);
    c.adam_beta1 = r.get_double("adam_beta1", c.adam_beta1);
    c.adam_beta2 = r.get_double("adam_beta2", c.adam_beta2);
    c.adam_eps = r.get_double("adam_eps", c.adam_eps);
    c.seed = r.get_u64("seed", c.seed);

    c.backbone.r = r.get_size("patch_size", c.backbone.r);
    c.backbone.d = r.get_size("feature_dim", c.backbone.d);
    c.backbone.blocks = r.get_size("blocks", c.backbone.blocks);
    c.backbone.block_type = r.get_string("block_type", c.backbone.block_type);
    c.backbone.mlp_hidden = r.get_size("mlp_hidden", c.backbone.mlp_hidden);
    c.backbone.head_hidden = r.get_size("head_hidden", c.backbone.head_hidden);
    c.backbone.bottleneck = r.get_size("bottleneck", c.backbone.bottleneck);
    c.backbone.prototypes = r.get_size("prototypes", c.backbone.prototypes);
    c.backbone.positional = r.get_bool("positional", c.backbone.positional);

    c.crops.n_local = r.get_size("n_local_crops", c.crops.n_local);
    const std::size_t gs = r.get_size("global_size", c.crops.global1.out_h);
    const std::size_t ls = r.get_size("local_size", c.crops.local.out_h);
    c.crops.global1.out_h = c.crops.global1.out_w = gs;
    c.crops.global2.out_h = c.crops.global2.out_w = gs;
    c.crops.local.out_h = c.crops.local.out_w = ls;
    c.crops.down.r = c.backbone.r;

    // DINO-style family asymmetry: blur always on global 1, rare on global 2,
    // solarize only on global 2.
    c.crops.global1.blur_prob = 1.0;
    c.crops.global2.blur_prob = 0.1;
    c.crops.global2.solarize_prob = 0.2;
    c.crops.local.blur_prob = 0.5;
    c.crops.local.area_min = 0.05;
    c.crops.local.area_max = 0.4;

    const double gam_min = r.get_double("global_area_min", c.crops.global1.area_min);
    const double gam_max = r.get_double("global_area_max", c.crops.global1.area_max);
    c.crops.global1.area_min = c.crops.global2.area_min = gam_min;
    c.crops.global1.area_max = c.crops.global2.area_max = gam_max;
    c.crops.local.area_min = r.get_double("local_area_min", c.crops.local.area_min);
    c.crops.local.area_max = r.get_double("local_area_max", c.crops.local.area_max);

    const auto all_dists = {&c.crops.global1, &c.crops.global2, &c.crops.local};
    const double ratio_min = r.get_double("ratio_min", c.crops.global1.ratio_min);
    const double ratio_max = r.get_double("ratio_max", c.crops.global1.ratio_max);
    const double flip_prob = r.get_double("flip_prob", c.crops.global1.flip_prob);
    const double jitter_prob = r.get_double("jitter_prob", c.crops.global1.jitter_prob);
    const double jb = r.get_double("jitter_brightness", c.crops.global1.jitter_brightness);
    const double jc = r.get_double("jitter_contrast", c.crops.global1.jitter_contrast);
    const double js = r.get_double("jitter_saturation", c.crops.global1.jitter_saturation);
    const double gray = r.get_double("grayscale_prob", c.crops.global1.grayscale_prob);
    const double bs_min = r.get_double("blur_sigma_min", c.crops.global1.blur_sigma_min);
    const double bs_max = r.get_double("blur_sigma_max", c.crops.global1.blur_sigma_max);
    const double sol_thr = r.get_double("solarize_threshold", c.crops.global2.solarize_threshold);
    for (AugDistribution* d : all_dists) {
        d->ratio_min = ratio_min;
        d->ratio_max = ratio_max;
        d->flip_prob = flip_prob;
        d->jitter_prob = jitter_prob;
        d->jitter_brightness = jb;
        d->jitter_contrast = jc;
        d->jitter_saturation = js;
        d->grayscale_prob = gray;
        d->blur_sigma_min = bs_min;
        d->blur_sigma_max = bs_max;
        d->solarize_threshold = sol_thr;
    }
    c.crops.global1.blur_prob = r.get_double("blur_prob_global1", c.crops.global1.blur_prob);
    c.crops.global2.blur_prob = r.get_double("blur_prob_global2", c.crops.global2.blur_prob);
    c.crops.local.blur_prob = r.get_double("blur_prob_local", c.crops.local.blur_prob);
    c.crops.global2.solarize_prob = r.get_double("solarize_prob", c.crops.global2.solarize_prob);

    c.dataset_dir = r.get_string("dataset_dir", c.dataset_dir);
    c.out_dir = r.get_string("out_dir", c.out_dir);
    r.reject_unknown();
    c.validate();
    return c;
}

// ---- dataset -------------------------------------------------------------------

// labels.tsv lines of "filename<TAB>class"; images held in memory.
struct Dataset {
    std::vector<Image> images;
    std::vector<std::size_t> labels;
    std::size_t n_classes = 0;

    std::size_t size() const { return images.size(); }

    static Dataset load(const std::string& dir) {
        const std::string index = dir + "/labels.tsv";
        std::ifstream in(index);
        check_config(in.good(), "dataset index not found: " + index);
        Dataset ds;
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            const std::size_t tab = line.find('\t');
            check_config(tab != std::string::npos, "malformed dataset index line: " + line);
            const std::string file = line.substr(0, tab);
            const std::string label_text = detail::trim(line.substr(tab + 1));
            check_config(!label_text.empty() &&
                             label_text.find_first_not_of("0123456789") == std::string::npos,
                         "dataset label is not a nonnegative integer: " + line);
            const std::size_t label = std::stoul(label_text);
            ds.images.push_back(read_image_file(dir + "/" + file));
            ds.labels.push_back(label);
            ds.n_classes = std::max(ds.n_classes, label + 1);
        }
        check_config(!ds.images.empty(), "dataset is empty: " + dir);
        return ds;
    }
};

// ---- schedules -------------------------------------------------------------------

struct ScheduleInfo {
    std::size_t steps_per_epoch = 0;
    std::size_t total_steps = 0;
    std::size_t warmup_steps = 0;
    double peak_lr = 0.0;
};

inline ScheduleInfo make_schedule(const TrainConfig& c, std::size_t n_images) {
    check_config(n_images > 0, "cannot schedule over an empty dataset");
    ScheduleInfo s;
    s.steps_per_epoch = (n_images + c.batch_size - 1) / c.batch_size;
    s.total_steps = s.steps_per_epoch * c.epochs;
    s.warmup_steps = s.steps_per_epoch * c.warmup_epochs;
    s.peak_lr = c.base_lr * static_cast<double>(c.batch_size) / 256.0;
    return s;
}

namespace detail {

// t=0 → start, t=1 → end, half-cosine in between.
inline double cosine_interp(double start, double end, double t) {
    return end + (start - end) * 0.5 * (1.0 + std::cos(3.14159265358979323846 * t));
}

// Progress through the post-warmup (or whole) horizon, clamped to [0,1].
inline double progress(std::size_t step, std::size_t begin, std::size_t last) {
    if (last <= begin) return 1.0;
    const double t = static_cast<double>(step - begin) / static_cast<double>(last - begin);
    return t < 0.0 ? 0.0 : (t > 1.0 ? 1.0 : t);
}

}  // namespace detail

// Linear ramp 0 → peak over the warmup steps, then half-cosine decay to the
// floor, reaching it exactly at the final step.
inline double lr_at(std::size_t step, const TrainConfig& c, const ScheduleInfo& s) {
    check(step < s.total_steps, "lr_at: step beyond the training horizon");
    if (step < s.warmup_steps)
        return s.peak_lr * static_cast<double>(step) / static_cast<double>(s.warmup_steps);
    const double t = detail::progress(step, s.warmup_steps, s.total_steps - 1);
    return detail::cosine_interp(s.peak_lr, c.lr_floor, t);
}

inline double lambda_at(std::size_t step, const TrainConfig& c, const ScheduleInfo& s) {
    const double t = detail::progress(step, 0, s.total_steps == 0 ? 0 : s.total_steps - 1);
    return detail::cosine_interp(c.lambda_ema, c.lambda_end, t);
}

inline double weight_decay_at(std::size_t step, const TrainConfig& c, const ScheduleInfo& s) {
    const double t = detail::progress(step, 0, s.total_steps == 0 ? 0 : s.total_steps - 1);
    return detail::cosine_interp(c.weight_decay_start, c.weight_decay_end, t);
}

// ---- optimizer -------------------------------------------------------------------

struct OptimizerState {
    std::vector<Tensor> m;
    std::vector<Tensor> v;
    std::uint64_t step = 0;  // updates applied so far
    double current_lr = 0.0;
    std::vector<bool> decay_mask;  // weight decay applies to matrices only

    static OptimizerState init(const ParamSet& p) {
        OptimizerState o;
        o.m = zero_like(p);
        o.v = zero_like(p);
        o.decay_mask.reserve(p.count());
        for (const auto& name : p.names) {
            const bool is_matrix = name.size() >= 2 && (name.ends_with(".w") || name.ends_with(".proto"));
            o.decay_mask.push_back(is_matrix);
        }
        return o;
    }
};

// Decoupled weight decay: the decay term bypasses the moment estimates.
inline void adamw_update(ParamSet& params, OptimizerState& opt, const std::vector<Tensor>& grads,
                         double lr, double weight_decay, const TrainConfig& c) {
    check(grads.size() == params.count(), "adamw: gradient count mismatch");
    opt.step += 1;
    opt.current_lr = lr;
    const double b1 = c.adam_beta1, b2 = c.adam_beta2;
    const double bias1 = 1.0 - std::pow(b1, static_cast<double>(opt.step));
    const double bias2 = 1.0 - std::pow(b2, static_cast<double>(opt.step));
    for (std::size_t i = 0; i < params.count(); ++i) {
        Tensor& th = params.values[i];
        Tensor& m = opt.m[i];
        Tensor& v = opt.v[i];
        const Tensor& g = grads[i];
        const double wd = opt.decay_mask[i] ? weight_decay : 0.0;
        for (std::size_t j = 0; j < th.data.size(); ++j) {
            m.data[j] = b1 * m.data[j] + (1.0 - b1) * g.data[j];
            v.data[j] = b2 * v.data[j] + (1.0 - b2) * g.data[j] * g.data[j];
            const double mhat = m.data[j] / bias1;
            const double vhat = v.data[j] / bias2;
            th.data[j] -= lr * (mhat / (std::sqrt(vhat) + c.adam_eps) + wd * th.data[j]);
        }
        ensure_finite(th, "parameter " + params.names[i]);
    }
}

inline double grad_global_norm(const std::vector<Tensor>& grads) {
    double sq = 0.0;
    for (const auto& g : grads)
        for (double v : g.data) sq += v * v;
    return std::sqrt(sq);
}

inline void clip_grads(std::vector<Tensor>& grads, double max_norm, double norm) {
    if (max_norm <= 0.0 || norm <= max_norm) return;
    const double s = max_norm / norm;
    for (auto& g : grads)
        for (double& v : g.data) v *= s;
}

// ---- step metrics -------------------------------------------------------------------

struct StepMetrics {
    std::uint64_t step = 0;
    double lr = 0.0;
    double loss_total = 0.0;
    double loss_global = 0.0;
    double loss_local = 0.0;
    double mask_fill_rate = 0.0;
    double grad_norm = 0.0;
    double collapse_index = 0.0;

    std::string json_line() const {
        nlohmann::json j;
        j["step"] = step;
        j["lr"] = lr;
        j["loss_total"] = loss_total;
        j["loss_global"] = loss_global;
        j["loss_local"] = loss_local;
        j["mask_fill_rate"] = mask_fill_rate;
        j["grad_norm"] = grad_norm;
        j["collapse_index"] = collapse_index;
        return j.dump();
    }
};

// ---- training step -------------------------------------------------------------------

namespace detail {

// Teacher products for one view, computed on a throwaway tape with the
// parameters bound as constants: values leave, gradients cannot.
struct TeacherView {
    Tensor global_prob;
    Tensor dense_prob;
    Tensor dense_rep;
    Tensor global_logits;
    Tensor dense_logits;
};

inline TeacherView teacher_forward(const ModelState& state, const Temps& temps,
                                   const Image& view) {
    Tape tape;
    BoundParams p = bind_constants(tape, state.teacher);
    const ForwardOut f = forward(tape, p, state.cfg, view);
    TeacherView tv;
    tv.dense_rep = tape.value(f.z);
    const VarId gl = head_logits(tape, p, "head_g", f.zbar);
    const VarId dl = head_logits(tape, p, "head_d", f.z);
    tv.global_logits = tape.value(gl);
    tv.dense_logits = tape.value(dl);
    tv.global_prob = tape.value(head_probs(tape, gl, Role::Teacher, temps, state.center));
    tv.dense_prob = tape.value(head_probs(tape, dl, Role::Teacher, temps, state.center_d));
    return tv;
}

}  // namespace detail

// One optimizer step over a batch of images. Per image: sample views, teacher
// forward on its views (globals only under multi-crop), student forward on a
// fresh tape, loss, backward; gradients average over the batch. Then clip,
// AdamW on the student, center update from this batch's teacher logits, and
// the EMA move of the teacher (so the loss always uses the pre-step teacher).
inline StepMetrics train_step(ModelState& state, OptimizerState& opt, const Dataset& ds,
                              const std::vector<std::size_t>& batch_indices,
                              const TrainConfig& cfg, const ScheduleInfo& sched, Rng& step_rng,
                              bool apply_ema) {
    check(!batch_indices.empty(), "train_step: empty batch");
    const std::size_t B = batch_indices.size();

    std::vector<Tensor> grads = zero_like(state.student);
    std::vector<Tensor> teacher_global_logits;
    std::vector<Tensor> teacher_dense_logits;
    double loss_total = 0.0, loss_global = 0.0, loss_local = 0.0;
    double mask_fill = 0.0, collapse = 0.0;
    std::size_t mask_terms = 0, collapse_terms = 0;

    for (std::size_t bi = 0; bi < B; ++bi) {
        const Image& img = ds.images[batch_indices[bi]];
        Rng img_rng = step_rng.child(bi);
        const ViewSet vs = make_views(img, cfg.crops, img_rng);

        ForwardBundle bundle;
        bundle.multi_crop = true;
        bundle.n_local = cfg.crops.n_local;

        Tape tape;
        BoundParams sp = bind_leaves(tape, state.student);

        for (std::size_t vi = 0; vi < vs.views.size(); ++vi) {
            const View& view = vs.views[vi];
            ViewTerm term;
            term.view_id = vi;
            term.is_global = view.is_global;
            term.enc = token_centers(view.geo, cfg.crops.down);

            const ForwardOut f = forward(tape, sp, state.cfg, view.image);
            term.s_global_prob = head(tape, sp, "head_g", f.zbar, Role::Student, cfg.temps,
                                      state.center);
            term.s_dense_prob = head(tape, sp, "head_d", f.z, Role::Student, cfg.temps,
                                     state.center);
            term.s_dense_rep = tape.value(f.z);

            if (vi < 2) {
                detail::TeacherView tv = detail::teacher_forward(state, cfg.temps, view.image);
                term.has_teacher = true;
                term.t_global_prob = tv.global_prob;
                term.t_dense_prob = tv.dense_prob;
                term.t_dense_rep = tv.dense_rep;
                teacher_global_logits.push_back(tv.global_logits);
                teacher_dense_logits.push_back(tv.dense_logits);
            }
            bundle.views.push_back(std::move(term));
        }

        const LossTerms lt = total_loss(tape, bundle, cfg.setting, cfg.local_weight);
        loss_total += tape.value(lt.total).scalar_value() / static_cast<double>(B);
        loss_global += tape.value(lt.global_term).scalar_value() / static_cast<double>(B);
        if (lt.has_local)
            loss_local += tape.value(lt.local_term).scalar_value() / static_cast<double>(B);

        // Diagnostics: geometric mask fill (reusing the loss matchings when the
        // geometric setting computed them) and the similarity collapse index
        // between the two global views' pre-head tokens.
        if (cfg.setting == Setting::Geometric) {
            for (const Matching& m : lt.local_matchings.matching) {
                mask_fill += m.mask_fill_rate();
                ++mask_terms;
            }
        } else {
            for_each_pair(bundle, [&](const ViewTerm& a, const ViewTerm& b) {
                mask_fill += geometric_match(a.enc, b.enc).mask_fill_rate();
                ++mask_terms;
            });
        }
        for (std::size_t a = 0; a < 2; ++a) {
            const std::size_t b = 1 - a;
            const Matching m =
                similarity_match(bundle.views[a].t_dense_rep, bundle.views[b].s_dense_rep);
            collapse += collapse_index(m);
            ++collapse_terms;
        }

        const VarId batch_loss = scale(tape, lt.total, 1.0 / static_cast<double>(B));
        tape.backward(batch_loss, grads);
    }

    const std::size_t step = state.step;
    const double lr = lr_at(step, cfg, sched);
    const double wd = weight_decay_at(step, cfg, sched);

    StepMetrics m;
    m.step = step;
    m.lr = lr;
    m.loss_total = loss_total;
    m.loss_global = loss_global;
    m.loss_local = loss_local;
    m.mask_fill_rate = mask_terms ? mask_fill / static_cast<double>(mask_terms) : 0.0;
    m.collapse_index = collapse_terms ? collapse / static_cast<double>(collapse_terms) : 0.0;
    m.grad_norm = grad_global_norm(grads);
    clip_grads(grads, cfg.grad_clip, m.grad_norm);

    adamw_update(state.student, opt, grads, lr, wd, cfg);

    const auto stack_rows = [](const std::vector<Tensor>& parts) {
        check(!parts.empty(), "train_step: no teacher logits collected");
        std::size_t rows = 0;
        const std::size_t I = parts.front().cols();
        for (const auto& t : parts) rows += t.rows();
        Tensor out({rows, I});
        std::size_t r = 0;
        for (const auto& t : parts)
            for (std::size_t k = 0; k < t.rows(); ++k, ++r)
                for (std::size_t i = 0; i < I; ++i) out.at(r, i) = t.at(k, i);
        return out;
    };
    center_update(state.center, stack_rows(teacher_global_logits), cfg.center_momentum);
    center_update(state.center_d, stack_rows(teacher_dense_logits), cfg.center_momentum);

    if (apply_ema) ema_update(state, lambda_at(step, cfg, sched));
    state.step += 1;
    return m;
}

// ---- full loop -------------------------------------------------------------------

struct TrainResult {
    std::string checkpoint_path;
    std::string metrics_path;
    ModelState state;
    std::vector<StepMetrics> history;
};

// Epoch loop with per-epoch shuffling, per-epoch checkpointing, and a JSONL
// metrics stream. On a non-finite abort, a diagnostic dump lands next to the
// metrics before the error propagates.
inline TrainResult train(const TrainConfig& cfg, const Dataset& ds) {
    cfg.validate();
    check_config(!cfg.out_dir.empty(), "train: out_dir is required");
    std::filesystem::create_directories(cfg.out_dir);

    Rng root(cfg.seed);
    Rng init_rng = root.child_named("init", 0);
    ModelState state = init_model(cfg.backbone, init_rng);
    OptimizerState opt = OptimizerState::init(state.student);
    const ScheduleInfo sched = make_schedule(cfg, ds.size());
    const KeyValues kv = train_config_to_kv(cfg);

    TrainResult result;
    result.checkpoint_path = cfg.out_dir + "/checkpoint.gltc";
    result.metrics_path = cfg.out_dir + "/metrics.jsonl";

    std::ofstream metrics(result.metrics_path, std::ios::binary);
    check(metrics.good(), "train: cannot open metrics stream");

    std::vector<std::size_t> order(ds.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    try {
        for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
            Rng shuffle_rng = root.child_named("shuffle", epoch);
            for (std::size_t i = order.size(); i > 1; --i) {
                const std::size_t j = shuffle_rng.uniform_int(i);
                std::swap(order[i - 1], order[j]);
            }
            for (std::size_t ofs = 0; ofs < order.size(); ofs += cfg.batch_size) {
                const std::size_t end = std::min(order.size(), ofs + cfg.batch_size);
                const std::vector<std::size_t> batch(order.begin() + static_cast<long>(ofs),
                                                     order.begin() + static_cast<long>(end));
                Rng step_rng = root.child_named("step", state.step);
                const bool ema_now =
                    cfg.ema_every == "step" || end >= order.size();  // epoch mode: last step only
                const StepMetrics sm =
                    train_step(state, opt, ds, batch, cfg, sched, step_rng, ema_now);
                metrics << sm.json_line() << "\n";
                result.history.push_back(sm);
            }
            save_checkpoint(result.checkpoint_path, state, kv);
        }
    } catch (const Error& e) {
        metrics.flush();
        nlohmann::json dump;
        dump["error"] = e.what();
        dump["step"] = state.step;
        dump["setting"] = setting_name(cfg.setting);
        std::ofstream d(cfg.out_dir + "/abort_dump.json", std::ios::binary);
        d << dump.dump(2) << "\n";
        throw;
    }
    if (cfg.epochs == 0) save_checkpoint(result.checkpoint_path, state, kv);
    metrics.flush();
    result.state = std::move(state);
    return result;
}

}  // namespace gltd
