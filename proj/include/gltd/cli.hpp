#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "gltd/common.hpp"
#include "gltd/config.hpp"
#include "gltd/eval.hpp"
#include "gltd/model.hpp"
#include "gltd/synth.hpp"
#include "gltd/trainer.hpp"
#include "gltd/viz.hpp"

#ifndef GLTD_CODE_VERSION
#define GLTD_CODE_VERSION "unknown"
#endif

namespace gltd {

namespace detail {

inline void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    check(out.good(), "cannot open " + path + " for writing");
    out << content;
    check(out.good(), "write failed for " + path);
}

// Reads just the manifest of a checkpoint to recover its config snapshot.
inline KeyValues read_checkpoint_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    check_config(in.good(), "cannot open checkpoint: " + path);
    char magic[4];
    in.read(magic, 4);
    check_config(in.gcount() == 4 && std::string(magic, 4) == "GLTC",
                 "not a checkpoint file: " + path);
    std::uint32_t ver = 0;
    in.read(reinterpret_cast<char*>(&ver), sizeof ver);
    std::uint64_t mlen = 0;
    in.read(reinterpret_cast<char*>(&mlen), sizeof mlen);
    check_config(mlen > 0 && mlen < (1ULL << 30), "corrupt checkpoint manifest: " + path);
    std::string mjson(mlen, '\0');
    in.read(mjson.data(), static_cast<std::streamsize>(mlen));
    check_config(in.gcount() == static_cast<std::streamsize>(mlen),
                 "truncated checkpoint manifest: " + path);
    return nlohmann::json::parse(mjson).at("config").get<KeyValues>();
}

inline Image read_any_image(const std::string& path) {
    if (path.size() >= 4 && path.substr(path.size() - 4) == ".ppm") return read_ppm(path);
    return read_image_file(path);
}

struct TrainCli {
    std::string config_file;
    std::vector<std::string> overrides;
    std::string dataset;
    std::string out_dir;
    std::string setting;
    std::int64_t seed = -1;
    std::int64_t epochs = -1;
    std::int64_t batch = -1;
    bool dry_run = false;
};

inline int cmd_train(const TrainCli& a) {
    KeyValues kv;
    if (!a.config_file.empty()) kv = read_config_file(a.config_file);
    for (const auto& o : a.overrides) apply_override(kv, o);
    if (!a.dataset.empty()) kv["dataset_dir"] = a.dataset;
    if (!a.out_dir.empty()) kv["out_dir"] = a.out_dir;
    if (!a.setting.empty()) kv["setting"] = a.setting;
    if (a.seed >= 0) kv["seed"] = std::to_string(a.seed);
    if (a.epochs >= 0) kv["epochs"] = std::to_string(a.epochs);
    if (a.batch >= 0) kv["batch_size"] = std::to_string(a.batch);

    const TrainConfig cfg = train_config_from_kv(kv);
    check_config(!cfg.dataset_dir.empty(), "dataset_dir is required (flag --dataset or config)");
    const Dataset ds = Dataset::load(cfg.dataset_dir);
    const ScheduleInfo sched = make_schedule(cfg, ds.size());

    if (a.dry_run) {
        Rng rng(cfg.seed);
        const ParamSet probe = init_params(cfg.backbone, rng);
        nlohmann::json j;
        j["images"] = ds.size();
        j["classes"] = ds.n_classes;
        j["steps_per_epoch"] = sched.steps_per_epoch;
        j["total_steps"] = sched.total_steps;
        j["warmup_steps"] = sched.warmup_steps;
        j["peak_lr"] = sched.peak_lr;
        j["parameter_tensors"] = probe.count();
        j["parameter_scalars"] = probe.scalar_count();
        std::cout << j.dump(2) << "\n";
        return 0;
    }

    check_config(!cfg.out_dir.empty(), "out_dir is required (flag --out or config)");
    std::filesystem::create_directories(cfg.out_dir);
    nlohmann::json manifest;
    manifest["code_version"] = GLTD_CODE_VERSION;
    manifest["seed"] = cfg.seed;
    manifest["config"] = train_config_to_kv(cfg);
    manifest["outputs"] = {{"checkpoint", cfg.out_dir + "/checkpoint.gltc"},
                           {"metrics", cfg.out_dir + "/metrics.jsonl"}};
    write_text_file(cfg.out_dir + "/manifest.json", manifest.dump(2) + "\n");

    const TrainResult res = train(cfg, ds);
    nlohmann::json done;
    done["checkpoint"] = res.checkpoint_path;
    done["metrics"] = res.metrics_path;
    done["steps"] = res.history.size();
    if (!res.history.empty()) done["final_loss_total"] = res.history.back().loss_total;
    std::cout << done.dump(2) << "\n";
    return 0;
}

struct EvalCli {
    std::string checkpoint;
    std::string dataset;
    std::string which = "all";
    std::string out_file;
    std::uint64_t seed = 0;
    std::size_t k = 5;
    std::size_t eval_images = 32;
};

inline int cmd_eval(const EvalCli& a) {
    check_config(a.which == "all" || a.which == "knn" || a.which == "linear" ||
                     a.which == "correspondence",
                 "--which must be knn|linear|correspondence|all");
    KeyValues kv = read_checkpoint_config(a.checkpoint);
    kv["dataset_dir"] = a.dataset;
    kv.erase("out_dir");
    const TrainConfig cfg = train_config_from_kv(kv);
    const ModelState state = load_checkpoint(a.checkpoint, cfg.backbone);
    const Dataset ds = Dataset::load(a.dataset);

    // Evaluation reads the teacher: it is the EMA-smoothed model, and the one
    // the training diagnostics track.
    nlohmann::json report;
    if (a.which == "all" || a.which == "knn" || a.which == "linear") {
        check_config(a.k >= 1 && ds.size() >= a.k + 1,
                     "k-NN with self-exclusion needs at least k+1 dataset images");
        const EmbeddingBank bank =
            build_bank(state.teacher, cfg.backbone, ds, cfg.crops.global1.out_h);
        if (a.which != "linear")
            report["knn_top1"] = knn_eval(bank, bank.anchors, bank.labels, a.k,
                                          /*weighted=*/false, /*exclude_self=*/true);
        if (a.which != "knn") {
            std::vector<std::size_t> train_idx, test_idx;
            probe_split(ds.size(), train_idx, test_idx);
            report["linear_top1"] =
                linear_probe(bank.anchors, bank.labels, ds.n_classes, train_idx, test_idx);
        }
    }
    if (a.which == "all" || a.which == "correspondence") {
        std::vector<Image> subset;
        for (std::size_t i = 0; i < std::min(a.eval_images, ds.size()); ++i)
            subset.push_back(ds.images[i]);
        const CorrespondenceReport rep =
            correspondence_eval(state.teacher, cfg.backbone, cfg.crops, subset, a.seed);
        report["corr_accuracy"] = rep.accuracy;
        report["corr_distance_error_px"] = rep.distance_error_px;
        report["collapse_index_mean"] = rep.collapse_index_mean;
    }
    const std::string text = report.dump(2) + "\n";
    std::cout << text;
    if (!a.out_file.empty()) write_text_file(a.out_file, text);
    return 0;
}

struct VizCli {
    std::string checkpoint;
    std::string image;
    std::string out_file;
    std::string mode = "geometric";
    std::uint64_t seed = 0;
};

inline int cmd_viz(const VizCli& a) {
    check_config(a.mode == "geometric" || a.mode == "similarity",
                 "--mode must be geometric or similarity");
    KeyValues kv = read_checkpoint_config(a.checkpoint);
    kv.erase("dataset_dir");
    kv.erase("out_dir");
    const TrainConfig cfg = train_config_from_kv(kv);
    const ModelState state = load_checkpoint(a.checkpoint, cfg.backbone);
    const Image im = read_any_image(a.image);

    Rng rng = Rng(a.seed).child_named("viz", 0);
    const ViewSet vs = make_views(im, cfg.crops, rng);
    const View& va = vs.views[0];
    const View& vb = vs.views[1];
    const PosEncoding ea = token_centers(va.geo, cfg.crops.down);
    const PosEncoding eb = token_centers(vb.geo, cfg.crops.down);

    Matching m;
    std::string caption;
    if (a.mode == "geometric") {
        m = geometric_match(ea, eb);
        char cap[96];
        std::snprintf(cap, sizeof cap, "geometric matching, s=%.2f px, fill=%.2f",
                      m.threshold_s, m.mask_fill_rate());
        caption = cap;
    } else {
        Tape tape;
        BoundParams p = bind_constants(tape, state.teacher);
        const Tensor za = tape.value(forward(tape, p, cfg.backbone, va.image).z);
        const Tensor zb = tape.value(forward(tape, p, cfg.backbone, vb.image).z);
        m = similarity_match(za, zb);
        char cap[96];
        std::snprintf(cap, sizeof cap, "similarity matching, collapse=%.2f", collapse_index(m));
        caption = cap;
    }
    const std::string svg = render_matching_svg(va.image, ea.grid_h, ea.grid_w, vb.image,
                                                eb.grid_h, eb.grid_w, m, caption);
    write_text_file(a.out_file, svg);
    std::cout << "wrote " << a.out_file << "\n";
    return 0;
}

}  // namespace detail

// Full command surface; returns a process exit code (0 ok, 1 internal error,
// 2 usage/config error).
inline int run_cli(int argc, const char* const* argv) {
    CLI::App app{"global-local self-distillation trainer"};
    app.require_subcommand(1);

    auto* synth = app.add_subcommand("synth", "generate a labeled synthetic texture dataset");
    std::string synth_out;
    std::uint64_t synth_n = 512, synth_classes = 8, synth_seed = 0, synth_size = 96;
    synth->add_option("--out", synth_out, "output directory")->required();
    synth->add_option("--n", synth_n, "number of images");
    synth->add_option("--classes", synth_classes, "number of texture classes");
    synth->add_option("--seed", synth_seed, "generator seed");
    synth->add_option("--size", synth_size, "image side length");

    auto* train = app.add_subcommand("train", "run self-distillation training");
    detail::TrainCli ta;
    train->add_option("--config", ta.config_file, "key=value config file");
    train->add_option("--set", ta.overrides, "config override key=value (repeatable)");
    train->add_option("--dataset", ta.dataset, "dataset directory");
    train->add_option("--out", ta.out_dir, "output directory");
    train->add_option("--setting", ta.setting, "vanilla|similarity|geometric");
    train->add_option("--seed", ta.seed, "training seed");
    train->add_option("--epochs", ta.epochs, "epoch count");
    train->add_option("--batch", ta.batch, "batch size");
    train->add_flag("--dry-run", ta.dry_run, "validate config and print the derived schedule");

    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
    detail::EvalCli ea;
    eval->add_option("--checkpoint", ea.checkpoint, "checkpoint file")->required();
    eval->add_option("--dataset", ea.dataset, "dataset directory")->required();
    eval->add_option("--which", ea.which, "knn|linear|correspondence|all");
    eval->add_option("--out", ea.out_file, "also write the JSON report here");
    eval->add_option("--seed", ea.seed, "evaluation seed");
    eval->add_option("--k", ea.k, "neighbor count for the k-NN vote");
    eval->add_option("--eval-images", ea.eval_images, "image budget for correspondence eval");

    auto* viz = app.add_subcommand("viz", "render a matching overlay SVG");
    detail::VizCli va;
    viz->add_option("--checkpoint", va.checkpoint, "checkpoint file")->required();
    viz->add_option("--image", va.image, "input image (.gltd or .ppm)")->required();
    viz->add_option("--out", va.out_file, "output SVG path")->required();
    viz->add_option("--mode", va.mode, "geometric|similarity");
    viz->add_option("--seed", va.seed, "view-sampling seed");

    try {
        app.parse(argc, argv);
        if (synth->parsed()) {
            write_synth_dataset(synth_out, synth_n, synth_classes, synth_seed, synth_size);
            nlohmann::json j;
            j["out"] = synth_out;
            j["images"] = synth_n;
            j["classes"] = synth_classes;
            std::cout << j.dump(2) << "\n";
            return 0;
        }
        if (train->parsed()) return detail::cmd_train(ta);
        if (eval->parsed()) return detail::cmd_eval(ea);
        if (viz->parsed()) return detail::cmd_viz(va);
        return 2;
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace gltd
