#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "nearmiss/nearmiss.h"

using nlohmann::json;

namespace {

enum Exit { kOk = 0, kInvalid = 1, kUsage = 2, kRuntime = 3 };

int exit_for(nm_status s) {
    switch (s) {
        case NM_OK: return kOk;
        case NM_ERR_VALIDATION: return kInvalid;
        case NM_ERR_USAGE:
        case NM_ERR_NULL_ARG: return kUsage;
        default: return kRuntime;
    }
}

int report(nm_status s, const char* what) {
    if (s != NM_OK) std::cerr << "nearmiss " << what << ": " << nm_status_name(s) << ": " << nm_last_error() << "\n";
    return exit_for(s);
}

// takes ownership of a library string
std::string take(char* s) {
    if (!s) return {};
    std::string out(s);
    nm_string_free(s);
    return out;
}

const char* opt(const std::string& s) { return s.empty() ? nullptr : s.c_str(); }

json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw CLI::ValidationError("--config", "cannot open " + path);
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw CLI::ValidationError("--config", std::string("malformed JSON: ") + e.what());
    }
}

struct ValidateOpts {
    std::string annotations, overrides, report;
};
struct ClipOpts {
    std::string videos, annotations, out, overrides, split_mode = "grouped";
    int level = 1, height = 64, width = 64;
    std::uint64_t seed = 0;
    bool keep_all = false, no_normal = false;
};
struct SynthOpts {
    std::string out, config;
    int videos = 8, classes = 4, height = 64, width = 64;
    std::uint64_t seed = 0;
};
struct CstTrainOpts {
    std::string day, night, out, log, preset = "toy";
    int steps = 200, batch = 4;
    double lr = 1e-3;
    std::uint64_t seed = 0;
};
struct TranslateOpts {
    std::string model, in, out;
};
struct TrainOpts {
    std::string clips, train_dir, val_dir, out, config, pretrained, preset = "toy", dataset = "originals";
    int level = 1, clip_len = 16, epochs = 0, batch = 0;
    double lr = 0;
    std::uint64_t seed = 0;
};
struct EvalRunOpts {
    std::string model, clips, partition, out;
};
struct TimelineOpts {
    std::string model, video, annotations, out = ".";
    int stride = 1;
};
struct CrossvalOpts {
    std::string model, annotations, videos;
    int level = 1;
};
struct RunAllOpts {
    std::string config, output_root, run_name, split_mode, corpus, videos, annotations, baseline, overrides,
        baseline_overrides;
    std::vector<std::uint64_t> seeds;
    std::vector<int> cells;
    bool dry_run = false;
};

int cmd_validate(const ValidateOpts& o) {
    nm_annotations* a = nullptr;
    nm_status s = nm_annotations_load(o.annotations.c_str(), &a);
    if (s != NM_OK) return report(s, "validate");
    char* lines = nullptr;
    size_t bad = 0;
    s = nm_annotations_validate(a, opt(o.overrides), &lines, &bad);
    const size_t total = nm_annotations_count(a);
    nm_annotations_free(a);
    if (s != NM_OK) return report(s, "validate");
    const auto text = take(lines);
    if (!o.report.empty()) {
        std::ofstream(o.report) << text;
    } else {
        std::cout << text;
    }
    std::cerr << bad << " of " << total << " records have violations\n";
    return bad ? kInvalid : kOk;
}

int cmd_clip(const ClipOpts& o) {
    json opts = {{"level", o.level},       {"height", o.height},         {"width", o.width},
                 {"seed", o.seed},         {"split_mode", o.split_mode}, {"filter", !o.keep_all},
                 {"overrides", o.overrides}, {"include_normal", !o.no_normal}};
    char* summary = nullptr;
    const auto s =
        nm_clip_corpus(o.videos.c_str(), o.annotations.c_str(), o.out.c_str(), opts.dump().c_str(), &summary);
    if (s != NM_OK) return report(s, "clip");
    std::cout << take(summary) << "\n";
    return kOk;
}

int cmd_synth(const SynthOpts& o) {
    json spec = o.config.empty() ? json::object() : read_json_file(o.config);
    spec.emplace("n_videos", o.videos);
    spec.emplace("n_classes", o.classes);
    spec.emplace("height", o.height);
    spec.emplace("width", o.width);
    char* manifest = nullptr;
    const auto s = nm_synth_generate(spec.dump().c_str(), o.seed, o.out.c_str(), &manifest);
    if (s != NM_OK) return report(s, "synth");
    take(manifest);
    std::cerr << "wrote synthetic corpus to " << o.out << "\n";
    return kOk;
}

int cmd_cst_train(const CstTrainOpts& o) {
    json cfg = {{"preset", o.preset}, {"steps", o.steps}, {"batch", o.batch}, {"lr", o.lr}, {"seed", o.seed}};
    nm_codec* codec = nullptr;
    char* log = nullptr;
    auto s = nm_cst_train(o.day.c_str(), opt(o.night), cfg.dump().c_str(), &codec, &log);
    if (s != NM_OK) return report(s, "cst-train");
    const auto csv = take(log);
    if (!o.log.empty()) std::ofstream(o.log) << csv;
    s = nm_codec_save(codec, o.out.c_str());
    nm_codec_free(codec);
    return report(s, "cst-train");
}

int cmd_translate(const TranslateOpts& o) {
    nm_codec* codec = nullptr;
    auto s = nm_codec_load(o.model.c_str(), &codec);
    if (s != NM_OK) return report(s, "translate");
    size_t n = 0;
    s = nm_cst_translate(codec, o.in.c_str(), o.out.c_str(), &n);
    nm_codec_free(codec);
    if (s == NM_OK) std::cerr << "wrote " << n << " clips to " << o.out << "\n";
    return report(s, "translate");
}

int cmd_train(const TrainOpts& o) {
    json cfg = o.config.empty() ? json::object() : read_json_file(o.config);
    if (!o.clips.empty()) cfg["clips"] = o.clips;
    if (!o.train_dir.empty()) cfg["train_dir"] = o.train_dir;
    if (!o.val_dir.empty()) cfg["val_dir"] = o.val_dir;
    if (!o.pretrained.empty()) cfg["pretrained"] = o.pretrained;
    cfg["out_dir"] = o.out;
    auto& c = cfg["classifier"];
    if (!c.is_object()) c = json::object();
    int classes = 0;
    if (nm_taxonomy_size(o.level, &classes) != NM_OK) return report(NM_ERR_USAGE, "train");
    c.emplace("num_classes", classes);
    c.emplace("preset", o.preset);
    c.emplace("seed", o.seed);
    auto& t = cfg["train"];
    if (!t.is_object()) t = json::object();
    t["clip_len"] = o.clip_len;
    t["seed"] = o.seed;
    t.emplace("dataset_mode", o.dataset);
    if (o.epochs > 0) t["epochs"] = o.epochs;
    if (o.batch > 0) t["batch"] = o.batch;
    if (o.lr > 0) t["lr0"] = o.lr;
    char* result = nullptr;
    const auto s = nm_train(cfg.dump().c_str(), &result);
    if (s != NM_OK) return report(s, "train");
    std::cout << take(result) << "\n";
    return kOk;
}

int cmd_eval_run(const EvalRunOpts& o) {
    char* result = nullptr;
    const auto s = nm_eval_run(o.model.c_str(), o.clips.c_str(), opt(o.partition), opt(o.out), &result);
    if (s != NM_OK) return report(s, "eval run");
    std::cout << take(result) << "\n";
    return kOk;
}

int cmd_timeline(const TimelineOpts& o) {
    char* result = nullptr;
    const auto s = nm_eval_timeline(o.model.c_str(), o.video.c_str(), opt(o.annotations), o.stride, opt(o.out),
                                    &result);
    if (s != NM_OK) return report(s, "timeline");
    std::cout << take(result) << "\n";
    return kOk;
}

int cmd_crossval(const CrossvalOpts& o) {
    char* result = nullptr;
    const auto s = nm_eval_crossval(o.model.c_str(), o.annotations.c_str(), o.videos.c_str(), o.level, &result);
    if (s != NM_OK) return report(s, "eval crossval");
    std::cout << take(result) << "\n";
    return kOk;
}

int cmd_run_all(const RunAllOpts& o) {
    json cfg = o.config.empty() ? json::object() : read_json_file(o.config);
    if (!o.output_root.empty()) cfg["output_root"] = o.output_root;
    if (!o.run_name.empty()) cfg["run_name"] = o.run_name;
    if (!o.split_mode.empty()) cfg["split_mode"] = o.split_mode;
    if (!o.seeds.empty()) cfg["seeds"] = o.seeds;
    if (!o.cells.empty()) cfg["cells"] = o.cells;
    if (!o.corpus.empty()) {
        const auto root = std::filesystem::path(o.corpus);
        cfg["videos"] = root.string();
        cfg["annotations"] = (root / "annotations.jsonl").string();
        cfg["baseline_annotations"] = (root / "annotations_baseline.jsonl").string();
        cfg["baseline_overrides"] = (root / "baseline_overrides.jsonl").string();
    }
    if (!o.videos.empty()) cfg["videos"] = o.videos;
    if (!o.annotations.empty()) cfg["annotations"] = o.annotations;
    if (!o.baseline.empty()) cfg["baseline_annotations"] = o.baseline;
    if (!o.overrides.empty()) cfg["overrides"] = o.overrides;
    if (!o.baseline_overrides.empty()) cfg["baseline_overrides"] = o.baseline_overrides;
    const auto text = cfg.dump();
    if (o.dry_run) {
        char* out = nullptr;
        const auto s = nm_describe_matrix(text.c_str(), &out);
        if (s != NM_OK) return report(s, "run-all");
        std::cout << take(out);
        return kOk;
    }
    char* result = nullptr;
    int all_ok = 0;
    const auto s = nm_run_all(text.c_str(), &result, &all_ok);
    if (s != NM_OK) return report(s, "run-all");
    std::cout << take(result) << "\n";
    return all_ok ? kOk : kRuntime;
}

void add_cst_train(CLI::App& parent, const char* name, CstTrainOpts& o) {
    auto* c = parent.add_subcommand(name, "Train the day/night style translator");
    c->add_option("--day", o.day, "Clip set with day clips (or both domains)")->required();
    c->add_option("--night", o.night, "Clip set with night clips");
    c->add_option("-o,--out", o.out, "Codec checkpoint to write")->required();
    c->add_option("--log", o.log, "Per-step loss CSV");
    c->add_option("--preset", o.preset)->check(CLI::IsMember({"toy", "paper-ish"}));
    c->add_option("--steps", o.steps)->check(CLI::PositiveNumber);
    c->add_option("--batch", o.batch)->check(CLI::PositiveNumber);
    c->add_option("--lr", o.lr)->check(CLI::PositiveNumber);
    c->add_option("--seed", o.seed);
}

void add_translate(CLI::App& parent, const char* name, TranslateOpts& o) {
    auto* c = parent.add_subcommand(name, "Write originals plus day and night renderings of a clip set");
    c->add_option("-m,--model", o.model, "Codec checkpoint")->required();
    c->add_option("-i,--in", o.in, "Input clip set")->required();
    c->add_option("-o,--out", o.out, "Output clip set")->required();
}

void add_timeline(CLI::App& parent, const char* name, TimelineOpts& o) {
    auto* c = parent.add_subcommand(name, "Sliding-window predictions over one video");
    c->add_option("-m,--model", o.model, "Classifier checkpoint")->required();
    c->add_option("--video", o.video, "Frame directory or video file")->required();
    c->add_option("--annotations", o.annotations, "Annotations for the ground-truth overlay");
    c->add_option("--stride", o.stride)->check(CLI::PositiveNumber);
    c->add_option("-o,--out", o.out, "Output directory for CSV and PNG");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"nearmiss: incident classification on dashcam video"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(nm_version()));

    ValidateOpts vo;
    auto* validate = app.add_subcommand("validate", "Check annotation records");
    validate->add_option("annotations", vo.annotations, "Annotation JSONL")->required();
    validate->add_option("--overrides", vo.overrides, "Wrong-class marks");
    validate->add_option("--report", vo.report, "Write the report here instead of stdout");

    ClipOpts co;
    auto* clip = app.add_subcommand("clip", "Cut annotated videos into labelled clips with a split");
    clip->add_option("--videos", co.videos, "Video root")->required();
    clip->add_option("--annotations", co.annotations)->required();
    clip->add_option("-o,--out", co.out, "Clip set directory")->required();
    clip->add_option("--level", co.level)->check(CLI::Range(1, 3));
    clip->add_option("--height", co.height)->check(CLI::PositiveNumber);
    clip->add_option("--width", co.width)->check(CLI::PositiveNumber);
    clip->add_option("--seed", co.seed);
    clip->add_option("--split-mode", co.split_mode)->check(CLI::IsMember({"grouped", "independent"}));
    clip->add_option("--overrides", co.overrides);
    clip->add_flag("--keep-all", co.keep_all, "Keep records with violations");
    clip->add_flag("--no-normal", co.no_normal, "Skip the normal segments");

    SynthOpts so;
    auto* synth = app.add_subcommand("synth", "Render a synthetic annotated corpus");
    synth->add_option("-o,--out", so.out)->required();
    synth->add_option("--config", so.config, "Corpus spec JSON");
    synth->add_option("--videos", so.videos)->check(CLI::PositiveNumber);
    synth->add_option("--classes", so.classes)->check(CLI::Range(1, 15));
    synth->add_option("--height", so.height)->check(CLI::PositiveNumber);
    synth->add_option("--width", so.width)->check(CLI::PositiveNumber);
    synth->add_option("--seed", so.seed);

    CstTrainOpts cto;
    TranslateOpts tro;
    add_cst_train(app, "cst-train", cto);
    add_translate(app, "translate", tro);
    auto* cst = app.add_subcommand("cst", "Style translation");
    cst->require_subcommand(1);
    add_cst_train(*cst, "train", cto);
    add_translate(*cst, "translate", tro);

    TrainOpts to;
    auto* train = app.add_subcommand("train", "Train a clip classifier");
    train->add_option("--clips", to.clips, "Clip set with split.json");
    train->add_option("--train-dir", to.train_dir);
    train->add_option("--val-dir", to.val_dir);
    train->add_option("-o,--out", to.out, "Output directory")->required();
    train->add_option("--config", to.config, "JSON with classifier/train sections");
    train->add_option("--pretrained", to.pretrained, "Backbone checkpoint");
    train->add_option("--preset", to.preset)->check(CLI::IsMember({"toy", "paper-ish"}));
    train->add_option("--dataset", to.dataset)->check(CLI::IsMember({"originals", "augmented", "V", "X"}));
    train->add_option("--level", to.level)->check(CLI::Range(1, 3));
    train->add_option("--clip-len", to.clip_len)->check(CLI::IsMember({16, 32, 64}));
    train->add_option("--epochs", to.epochs)->check(CLI::PositiveNumber);
    train->add_option("--batch", to.batch)->check(CLI::PositiveNumber);
    train->add_option("--lr", to.lr)->check(CLI::PositiveNumber);
    train->add_option("--seed", to.seed);

    auto* eval = app.add_subcommand("eval", "Evaluate a trained classifier");
    eval->require_subcommand(1);
    EvalRunOpts eo;
    auto* eval_run = eval->add_subcommand("run", "Accuracy and confusion over a clip set");
    eval_run->add_option("-m,--model", eo.model)->required();
    eval_run->add_option("--clips", eo.clips)->required();
    eval_run->add_option("--partition", eo.partition)->check(CLI::IsMember({"train", "test", "validate"}));
    eval_run->add_option("-o,--out", eo.out, "Directory for confusion.csv and predictions.csv");
    TimelineOpts tlo;
    add_timeline(*eval, "timeline", tlo);
    add_timeline(app, "timeline", tlo);
    CrossvalOpts cvo;
    auto* crossval = eval->add_subcommand("crossval", "Accuracy on an external annotated set");
    crossval->add_option("-m,--model", cvo.model)->required();
    crossval->add_option("--annotations", cvo.annotations)->required();
    crossval->add_option("--videos", cvo.videos)->required();
    crossval->add_option("--level", cvo.level)->check(CLI::Range(1, 3));

    RunAllOpts ro;
    auto* run_all = app.add_subcommand("run-all", "Run the full experiment matrix");
    run_all->add_option("--config", ro.config, "Experiment JSON");
    run_all->add_flag("--dry-run", ro.dry_run, "Print the resolved matrix and exit");
    run_all->add_option("--output-root", ro.output_root, "Parent of the run directory");
    run_all->add_option("--run-name", ro.run_name, "Run directory name (default: timestamp)");
    run_all->add_option("--seed", ro.seeds, "Seed(s); repeat for several");
    run_all->add_option("--cells", ro.cells, "Model numbers 1-9 to run")->check(CLI::Range(1, 9));
    run_all->add_option("--split-mode", ro.split_mode)->check(CLI::IsMember({"grouped", "independent"}));
    run_all->add_option("--corpus", ro.corpus, "Synthetic corpus directory (sets videos and annotation files)");
    run_all->add_option("--videos", ro.videos, "Video root");
    run_all->add_option("--annotations", ro.annotations, "Re-annotated records");
    run_all->add_option("--baseline-annotations", ro.baseline, "Baseline records");
    run_all->add_option("--overrides", ro.overrides, "Wrong-class marks for the re-annotated set");
    run_all->add_option("--baseline-overrides", ro.baseline_overrides, "Wrong-class marks for the baseline set");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }

    try {
        if (*validate) return cmd_validate(vo);
        if (*clip) return cmd_clip(co);
        if (*synth) return cmd_synth(so);
        if (app.got_subcommand("cst-train") || (*cst && cst->got_subcommand("train"))) return cmd_cst_train(cto);
        if (app.got_subcommand("translate") || (*cst && cst->got_subcommand("translate"))) return cmd_translate(tro);
        if (*train) return cmd_train(to);
        if (*eval_run) return cmd_eval_run(eo);
        if (app.got_subcommand("timeline") || eval->got_subcommand("timeline")) return cmd_timeline(tlo);
        if (*crossval) return cmd_crossval(cvo);
        if (*run_all) return cmd_run_all(ro);
    } catch (const CLI::Error& e) {
        std::cerr << "nearmiss: " << e.what() << "\n";
        return kUsage;
    }
    return kUsage;
}
