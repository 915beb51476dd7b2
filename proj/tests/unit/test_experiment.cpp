#include <doctest.h>

#include <sstream>

#include "error.hpp"
#include "experiment.hpp"
#include "support.hpp"
#include "synth.hpp"

using namespace nearmiss;
namespace fs = std::filesystem;

namespace {

ExperimentConfig tiny_config(const fs::path& corpus, const fs::path& root, const std::string& name) {
    ExperimentConfig cfg;
    cfg.output_root = root;
    cfg.run_name = name;
    cfg.videos = corpus;
    cfg.annotations = corpus / "annotations.jsonl";
    cfg.baseline_annotations = corpus / "annotations_baseline.jsonl";
    cfg.baseline_overrides = corpus / "baseline_overrides.jsonl";
    cfg.height = 16;
    cfg.width = 16;
    cfg.cells = {1, 4, 7};
    cfg.train.epochs = 1;
    cfg.train.lr0 = 0.01;
    cfg.cst.steps = 2;
    cfg.timeline_phi = 7;
    cfg.timeline_stride = 8;
    return cfg;
}

fs::path make_corpus(const fs::path& dir) {
    SynthSpec spec;
    spec.n_videos = 8;
    spec.n_classes = 3;
    spec.height = 16;
    spec.width = 16;
    generate_synthetic_corpus(spec, 5, dir);
    return dir;
}

}  // namespace

TEST_SUITE("experiment") {

TEST_CASE("cell table follows the model numbering") {
    CHECK(experiment_cells({}).empty());
    const auto v = experiment_cells({6, 4, 5, 4});
    REQUIRE(v.size() == 3);
    CHECK(v[0].phi == 4);
    CHECK(v[0].clip_len == 16);
    CHECK(v[2].clip_len == 64);
    for (const auto& c : v) {
        CHECK_FALSE(c.baseline);
        CHECK(c.mode == DatasetMode::Originals);
    }
    for (const auto& c : experiment_cells({7, 8, 9})) CHECK(c.mode == DatasetMode::Augmented);
    for (const auto& c : experiment_cells({1, 2, 3})) CHECK(c.baseline);
    CHECK_THROWS_AS(experiment_cells({10}), Error);
}

TEST_CASE("config round-trips through json") {
    ExperimentConfig cfg;
    cfg.cells = {2, 8};
    cfg.seeds = {1, 2, 3};
    cfg.cst.latent_noise = 0.25;
    cfg.encoder_rule = EncoderRule::Crossed;
    const auto j = cfg.to_json();
    const auto back = ExperimentConfig::from_json(j);
    CHECK(back.to_json() == j);
    CHECK(back.cst.latent_noise == 0.25);
    CHECK(back.encoder_rule == EncoderRule::Crossed);
    CHECK_THROWS_AS(ExperimentConfig::from_json(nlohmann::json::parse(R"({"cells":[0]})")).validate(), Error);
}

TEST_CASE("dry-run description touches nothing") {
    testing::TempDir dir("exp");
    auto cfg = tiny_config(dir / "none", dir / "runs", "dry");
    cfg.cells = {1, 2, 3, 4, 5, 6, 7, 8, 9};
    const auto text = describe_matrix(cfg);
    for (int phi = 1; phi <= 9; ++phi) CHECK(text.find("phi" + std::to_string(phi)) != std::string::npos);
    CHECK_FALSE(fs::exists(dir / "runs"));
}

TEST_CASE("empty matrix yields empty tables") {
    testing::TempDir dir("exp");
    auto cfg = tiny_config(dir / "none", dir.path(), "empty");
    cfg.cells = {};
    std::ostringstream log;
    const auto res = run_experiment_matrix(cfg, log);
    CHECK(res.cells.empty());
    CHECK(testing::slurp(res.run_dir / "table3.csv") == "method,clip_len,phi,accuracy,seeds\n");
}

TEST_CASE("missing video directory skips every cell") {
    testing::TempDir dir("exp");
    const auto corpus = make_corpus(dir / "corpus");
    auto cfg = tiny_config(corpus, dir / "runs", "novid");
    cfg.videos = dir / "absent";
    std::ostringstream log;
    const auto res = run_experiment_matrix(cfg, log);
    REQUIRE(res.cells.size() == 3);
    for (const auto& c : res.cells) CHECK(c.status == "skipped");
    CHECK_FALSE(res.all_ok());
}

TEST_CASE("small matrix runs, resumes and repeats byte for byte") {
    testing::TempDir dir("exp");
    const auto corpus = make_corpus(dir / "corpus");
    std::ostringstream log;
    const auto a = run_experiment_matrix(tiny_config(corpus, dir / "runs", "a"), log);
    REQUIRE(a.cells.size() == 3);
    for (const auto& c : a.cells) CHECK_MESSAGE(c.ok(), c.message);
    CHECK(a.all_ok());
    // renderings follow their original into its partition
    CHECK(a.cells[2].n_test == 3 * a.cells[1].n_test);
    CHECK(a.cells[2].n_train == 3 * a.cells[1].n_train);
    for (const char* f : {"config.json", "results.csv", "table2.csv", "table3.csv", "phi4/seed0/model.ckpt",
                          "phi4/seed0/runlog.csv", "phi7/seed0/result.json", "cst/codec_seed0.ckpt"})
        CHECK_MESSAGE(fs::exists(a.run_dir / f), f);
    bool timeline = false;
    for (const auto& e : fs::directory_iterator(a.run_dir))
        timeline |= e.path().filename().string().rfind("timeline_", 0) == 0;
    CHECK(timeline);

    std::ostringstream relog;
    const auto again = run_experiment_matrix(tiny_config(corpus, dir / "runs", "a"), relog);
    CHECK(relog.str().find("already complete") != std::string::npos);
    CHECK(testing::slurp(again.run_dir / "results.csv") == testing::slurp(a.run_dir / "results.csv"));

    const auto b = run_experiment_matrix(tiny_config(corpus, dir / "runs", "b"), log);
    for (const char* f : {"results.csv", "table2.csv", "table3.csv", "phi4/seed0/model.ckpt", "phi7/seed0/model.ckpt",
                          "phi1/seed0/runlog.csv", "cst/codec_seed0.ckpt"})
        CHECK_MESSAGE(testing::slurp(a.run_dir / f) == testing::slurp(b.run_dir / f), f);
}

}  // TEST_SUITE
