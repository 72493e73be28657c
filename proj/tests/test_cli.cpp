#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <unistd.h>
#include <vector>

#include <json.hpp>

#include "gltd/cli.hpp"

namespace {

struct CliResult {
    int code = -1;
    std::string out;
    std::string err;
};

// Runs the command in-process with stdout/stderr captured.
CliResult run(const std::vector<std::string>& args) {
    std::vector<const char*> argv;
    argv.push_back("gltd");
    for (const auto& a : args) argv.push_back(a.c_str());

    std::ostringstream out, err;
    std::streambuf* ob = std::cout.rdbuf(out.rdbuf());
    std::streambuf* eb = std::cerr.rdbuf(err.rdbuf());
    CliResult r;
    try {
        r.code = gltd::run_cli(static_cast<int>(argv.size()), argv.data());
    } catch (...) {
        std::cout.rdbuf(ob);
        std::cerr.rdbuf(eb);
        throw;
    }
    std::cout.rdbuf(ob);
    std::cerr.rdbuf(eb);
    r.out = out.str();
    r.err = err.str();
    return r;
}

std::string work_dir(const std::string& tag) {
    const auto p = std::filesystem::temp_directory_path() /
                   ("gltd_cli_" + tag + "_" + std::to_string(::getpid()));
    std::filesystem::create_directories(p);
    return p.string();
}

// Shared tiny dataset + model overrides so commands finish in milliseconds.
const std::string& dataset_dir() {
    static const std::string dir = [] {
        const std::string d = work_dir("ds");
        const CliResult r = run({"synth", "--out", d, "--n", "4", "--classes", "2", "--seed",
                                 "5", "--size", "64"});
        REQUIRE(r.code == 0);
        return d;
    }();
    return dir;
}

std::vector<std::string> tiny_overrides() {
    return {"--set", "patch_size=8",   "--set", "feature_dim=12", "--set", "blocks=1",
            "--set", "mlp_hidden=16",  "--set", "head_hidden=16", "--set", "bottleneck=6",
            "--set", "prototypes=16",  "--set", "global_size=32", "--set", "local_size=16",
            "--set", "n_local_crops=2", "--set", "warmup_epochs=0"};
}

// Trains once and returns the output directory holding checkpoint.gltc.
const std::string& trained_dir() {
    static const std::string dir = [] {
        const std::string d = work_dir("train");
        std::vector<std::string> args = {"train",    "--dataset", dataset_dir(),
                                         "--out",    d,           "--epochs",
                                         "1",        "--batch",   "2",
                                         "--seed",   "3"};
        for (const auto& o : tiny_overrides()) args.push_back(o);
        const CliResult r = run(args);
        REQUIRE(r.code == 0);
        return d;
    }();
    return dir;
}

}  // namespace

TEST_CASE("synth writes a loadable dataset and reports it") {
    const std::string& dir = dataset_dir();
    CHECK(std::filesystem::exists(dir + "/labels.tsv"));
    CHECK(std::filesystem::exists(dir + "/img_00000.gltd"));
    const gltd::Dataset ds = gltd::Dataset::load(dir);
    CHECK(ds.size() == 4);
    CHECK(ds.n_classes == 2);
}

TEST_CASE("dry runs print the derived schedule without training") {
    std::vector<std::string> args = {"train",  "--dataset", dataset_dir(), "--epochs", "2",
                                     "--batch", "2",        "--dry-run"};
    for (const auto& o : tiny_overrides()) args.push_back(o);
    const CliResult r = run(args);
    REQUIRE(r.code == 0);
    const nlohmann::json j = nlohmann::json::parse(r.out);
    CHECK(j.at("images") == 4);
    CHECK(j.at("classes") == 2);
    CHECK(j.at("steps_per_epoch") == 2);
    CHECK(j.at("total_steps") == 4);
    CHECK(j.at("warmup_steps") == 0);
    CHECK(j.at("peak_lr").get<double>() > 0.0);
    CHECK(j.at("parameter_tensors").get<std::size_t>() > 0);
    CHECK(j.at("parameter_scalars").get<std::size_t>() > 100);
}

TEST_CASE("training writes manifest, checkpoint, and metrics") {
    const std::string& d = trained_dir();
    REQUIRE(std::filesystem::exists(d + "/manifest.json"));
    REQUIRE(std::filesystem::exists(d + "/checkpoint.gltc"));
    REQUIRE(std::filesystem::exists(d + "/metrics.jsonl"));

    std::ifstream mf(d + "/manifest.json");
    const nlohmann::json manifest = nlohmann::json::parse(mf);
    CHECK(manifest.at("seed") == 3);
    CHECK(manifest.at("config").at("setting") == "geometric");
    CHECK(manifest.at("config").at("batch_size") == "2");
    CHECK(manifest.at("outputs").at("checkpoint") == d + "/checkpoint.gltc");
    CHECK(manifest.contains("code_version"));

    std::ifstream metrics(d + "/metrics.jsonl");
    std::string line;
    std::size_t lines = 0;
    while (std::getline(metrics, line)) {
        const nlohmann::json j = nlohmann::json::parse(line);
        CHECK(j.at("step") == lines);
        CHECK(j.at("loss_total").get<double>() > 0.0);
        ++lines;
    }
    CHECK(lines == 2);
}

TEST_CASE("evaluation reports the requested metrics") {
    const std::string report_path = work_dir("eval") + "/report.json";
    const CliResult all = run({"eval", "--checkpoint", trained_dir() + "/checkpoint.gltc",
                               "--dataset", dataset_dir(), "--k", "2", "--out", report_path});
    REQUIRE(all.code == 0);
    const nlohmann::json j = nlohmann::json::parse(all.out);
    for (const char* key :
         {"knn_top1", "linear_top1", "corr_accuracy", "corr_distance_error_px",
          "collapse_index_mean"}) {
        INFO(key);
        REQUIRE(j.contains(key));
        const double v = j.at(key).get<double>();
        CHECK(v >= 0.0);
        if (std::string(key) != "corr_distance_error_px") CHECK(v <= 1.0);
    }

    std::ifstream rf(report_path);
    const std::string file_text((std::istreambuf_iterator<char>(rf)),
                                std::istreambuf_iterator<char>());
    CHECK(file_text == all.out);

    const CliResult knn = run({"eval", "--checkpoint", trained_dir() + "/checkpoint.gltc",
                               "--dataset", dataset_dir(), "--k", "2", "--which", "knn"});
    REQUIRE(knn.code == 0);
    const nlohmann::json jk = nlohmann::json::parse(knn.out);
    CHECK(jk.contains("knn_top1"));
    CHECK_FALSE(jk.contains("linear_top1"));
    CHECK_FALSE(jk.contains("corr_accuracy"));
}

TEST_CASE("matching overlays render for both modes and both image formats") {
    const std::string out = work_dir("viz");

    const CliResult geo = run({"viz", "--checkpoint", trained_dir() + "/checkpoint.gltc",
                               "--image", dataset_dir() + "/img_00000.gltd", "--out",
                               out + "/geo.svg"});
    REQUIRE(geo.code == 0);
    std::ifstream gf(out + "/geo.svg");
    std::string svg((std::istreambuf_iterator<char>(gf)), std::istreambuf_iterator<char>());
    CHECK(svg.rfind("<svg", 0) == 0);
    CHECK(svg.find("geometric matching") != std::string::npos);
    CHECK(svg.find("</svg>") != std::string::npos);

    const gltd::Image im = gltd::read_image_file(dataset_dir() + "/img_00000.gltd");
    const std::string ppm = out + "/sample.ppm";
    gltd::write_ppm(ppm, im);
    const CliResult sim = run({"viz", "--checkpoint", trained_dir() + "/checkpoint.gltc",
                               "--image", ppm, "--mode", "similarity", "--out",
                               out + "/sim.svg"});
    REQUIRE(sim.code == 0);
    std::ifstream sf(out + "/sim.svg");
    std::string ssvg((std::istreambuf_iterator<char>(sf)), std::istreambuf_iterator<char>());
    CHECK(ssvg.find("similarity matching") != std::string::npos);
}

TEST_CASE("usage problems exit with code 2") {
    CHECK(run({}).code == 2);                                  // no subcommand
    CHECK(run({"launch"}).code == 2);                          // unknown subcommand
    CHECK(run({"train", "--bogus-flag"}).code == 2);           // unknown flag
    CHECK(run({"eval", "--dataset", dataset_dir()}).code == 2);  // missing required option
    CHECK(run({"synth", "--out", work_dir("badclass"), "--classes", "99"}).code == 2);

    const CliResult no_ds = run({"train"});
    CHECK(no_ds.code == 2);
    CHECK(no_ds.err.find("config error") != std::string::npos);
    CHECK(no_ds.err.find("dataset_dir") != std::string::npos);

    // Contradictory schedule: warmup longer than the run itself.
    const CliResult warm = run({"train", "--dataset", dataset_dir(), "--epochs", "1"});
    CHECK(warm.code == 2);
    CHECK(warm.err.find("warmup") != std::string::npos);
}

TEST_CASE("bad config values exit with code 2") {
    std::vector<std::string> bad = {"train", "--dataset", dataset_dir(), "--epochs", "1",
                                    "--set", "not_a_key=1", "--dry-run"};
    CHECK(run(bad).code == 2);

    std::vector<std::string> bad_setting = {"train",     "--dataset", dataset_dir(),
                                            "--setting", "dense",     "--dry-run"};
    CHECK(run(bad_setting).code == 2);

    CHECK(run({"eval", "--checkpoint", "/nonexistent.gltc", "--dataset", dataset_dir()}).code ==
          2);
    CHECK(run({"eval", "--checkpoint", trained_dir() + "/checkpoint.gltc", "--dataset",
               dataset_dir(), "--which", "everything"})
              .code == 2);
    CHECK(run({"eval", "--checkpoint", trained_dir() + "/checkpoint.gltc", "--dataset",
               dataset_dir(), "--k", "50"})
              .code == 2);
    CHECK(run({"viz", "--checkpoint", trained_dir() + "/checkpoint.gltc", "--image",
               dataset_dir() + "/img_00000.gltd", "--out", "/tmp/x.svg", "--mode", "psychic"})
              .code == 2);

    // A checkpoint that is not a checkpoint.
    const std::string fake = work_dir("fake") + "/fake.gltc";
    { std::ofstream(fake) << "not a checkpoint"; }
    CHECK(run({"eval", "--checkpoint", fake, "--dataset", dataset_dir()}).code == 2);
}

TEST_CASE("help requests succeed") {
    CHECK(run({"--help"}).code == 0);
    const CliResult sub = run({"train", "--help"});
    CHECK(sub.code == 0);
    CHECK(sub.out.find("--dataset") != std::string::npos);
}
