#include "experiment.hpp"

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <map>
#include <set>

#include "dataset.hpp"
#include "error.hpp"
#include "taxonomy.hpp"

namespace nearmiss {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

std::vector<CellSpec> experiment_cells(const std::vector<int>& phis) {
    static constexpr int kLens[] = {16, 32, 64};
    std::vector<CellSpec> out;
    std::set<int> seen;
    for (int phi : phis) {
        if (phi < 1 || phi > 9) fail(ErrorKind::Usage, "model index phi" + std::to_string(phi) + " outside 1..9");
        if (!seen.insert(phi).second) continue;
        CellSpec c;
        c.phi = phi;
        c.baseline = phi <= 3;
        c.mode = phi >= 7 ? DatasetMode::Augmented : DatasetMode::Originals;
        c.clip_len = kLens[(phi - 1) % 3];
        out.push_back(c);
    }
    std::sort(out.begin(), out.end(), [](const CellSpec& a, const CellSpec& b) { return a.phi < b.phi; });
    return out;
}

fs::path default_output_root() {
    if (const char* env = std::getenv("NEARMISS_OUTPUT_ROOT"); env && *env) return env;
    return "runs";
}

void ExperimentConfig::validate() const {
    experiment_cells(cells);
    if (level < 1 || level > 3) fail(ErrorKind::Usage, "taxonomy level must be 1, 2 or 3");
    if (seeds.empty()) fail(ErrorKind::Usage, "at least one seed is required");
    if (height < 8 || width < 8 || height % 4 || width % 4)
        fail(ErrorKind::Usage, "input resolution must be a multiple of 4 and at least 8");
    if (fakes_for != "all" && fakes_for != "train") fail(ErrorKind::Usage, "fakes_for must be 'all' or 'train'");
    if (timeline_stride < 1) fail(ErrorKind::Usage, "timeline stride must be >= 1");
    train.validate();
    CstArch::preset_for(cst_preset, height, width).validate();
    ClassifierConfig cc;
    cc.preset = classifier_preset;
    cc.num_classes = taxonomy_size(level);
    cc.height = height;
    cc.width = width;
    cc.width_divisor = width_divisor;
    cc.validate();
}

ordered_json ExperimentConfig::to_json() const {
    ordered_json j;
    j["run_name"] = run_name;
    j["output_root"] = output_root.string();
    j["videos"] = videos.string();
    j["annotations"] = annotations.string();
    j["baseline_annotations"] = baseline_annotations.string();
    j["overrides"] = overrides.string();
    j["baseline_overrides"] = baseline_overrides.string();
    j["taxonomy_level"] = level;
    j["height"] = height;
    j["width"] = width;
    j["cells"] = cells;
    j["seeds"] = seeds;
    j["split_mode"] = to_string(split_mode);
    j["classifier"] = {{"preset", classifier_preset}, {"width_divisor", width_divisor}, {"pretrained", pretrained}};
    j["train"] = train.to_json();
    j["train"].erase("clip_len");
    j["train"].erase("seed");
    j["train"].erase("dataset_mode");
    j["cst"] = {{"preset", cst_preset},
                {"steps", cst.steps},
                {"lr", cst.lr},
                {"batch", cst.batch},
                {"snapshot_every", cst.snapshot_every},
                {"latent_noise", cst.latent_noise},
                {"weights", {{"recon", cst.weights.recon}, {"kl", cst.weights.kl}, {"adv", cst.weights.adv},
                             {"cyc", cst.weights.cyc}}},
                {"fakes_for", fakes_for},
                {"encoder", std::string(to_string(encoder_rule))}};
    j["timeline"] = {{"phi", timeline_phi}, {"stride", timeline_stride}};
    j["crossval"] = {{"annotations", crossval_annotations.string()},
                     {"videos", crossval_videos.string()},
                     {"phis", crossval_phis}};
    return j;
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
    ExperimentConfig c;
    try {
        c.run_name = j.value("run_name", c.run_name);
        c.output_root = j.value("output_root", std::string());
        c.videos = j.value("videos", std::string());
        c.annotations = j.value("annotations", std::string());
        c.baseline_annotations = j.value("baseline_annotations", std::string());
        c.overrides = j.value("overrides", std::string());
        c.baseline_overrides = j.value("baseline_overrides", std::string());
        c.level = j.value("taxonomy_level", c.level);
        c.height = j.value("height", c.height);
        c.width = j.value("width", c.width);
        c.cells = j.value("cells", c.cells);
        c.seeds = j.value("seeds", c.seeds);
        c.split_mode = split_mode_from_string(j.value("split_mode", std::string(to_string(c.split_mode))));
        if (j.contains("classifier")) {
            const auto& k = j["classifier"];
            c.classifier_preset = k.value("preset", c.classifier_preset);
            c.width_divisor = k.value("width_divisor", c.width_divisor);
            c.pretrained = k.value("pretrained", c.pretrained);
        }
        if (j.contains("train")) c.train = TrainConfig::from_json(j["train"]);
        if (j.contains("cst")) {
            const auto& k = j["cst"];
            c.cst_preset = k.value("preset", c.cst_preset);
            c.cst.steps = k.value("steps", c.cst.steps);
            c.cst.lr = k.value("lr", c.cst.lr);
            c.cst.batch = k.value("batch", c.cst.batch);
            c.cst.snapshot_every = k.value("snapshot_every", c.cst.snapshot_every);
            c.cst.latent_noise = k.value("latent_noise", c.cst.latent_noise);
            if (k.contains("weights")) {
                const auto& w = k["weights"];
                c.cst.weights.recon = w.value("recon", c.cst.weights.recon);
                c.cst.weights.kl = w.value("kl", c.cst.weights.kl);
                c.cst.weights.adv = w.value("adv", c.cst.weights.adv);
                c.cst.weights.cyc = w.value("cyc", c.cst.weights.cyc);
            }
            c.fakes_for = k.value("fakes_for", c.fakes_for);
            if (k.contains("encoder")) c.encoder_rule = encoder_rule_from_string(k["encoder"].get<std::string>());
        }
        if (j.contains("timeline")) {
            c.timeline_phi = j["timeline"].value("phi", c.timeline_phi);
            c.timeline_stride = j["timeline"].value("stride", c.timeline_stride);
        }
        if (j.contains("crossval")) {
            const auto& k = j["crossval"];
            c.crossval_annotations = k.value("annotations", std::string());
            c.crossval_videos = k.value("videos", std::string());
            c.crossval_phis = k.value("phis", c.crossval_phis);
        }
    } catch (const json::exception& e) {
        fail(ErrorKind::Usage, std::string("experiment config: ") + e.what());
    }
    return c;
}

bool ExperimentResult::all_ok() const {
    for (const auto& c : cells)
        if (!c.ok()) return false;
    return !cells.empty();
}

std::string describe_matrix(const ExperimentConfig& cfg) {
    std::string seeds;
    for (std::size_t i = 0; i < cfg.seeds.size(); ++i) seeds += (i ? "," : "") + std::to_string(cfg.seeds[i]);
    std::string out = "cell   dataset        mode  clip_len  seeds\n";
    for (const auto& c : experiment_cells(cfg.cells)) {
        char line[128];
        std::snprintf(line, sizeof line, "phi%-3d %-14s %-5s %-9d %s\n", c.phi, c.baseline ? "baseline" : "re-annotation",
                      c.mode == DatasetMode::Augmented ? "X" : "V", c.clip_len, seeds.c_str());
        out += line;
    }
    auto j = cfg.to_json();
    const auto root = cfg.output_root.empty() ? default_output_root() : cfg.output_root;
    j["output_root"] = root.string();
    out += "run directory: " + (root / (cfg.run_name.empty() ? "<timestamp>" : cfg.run_name)).string() + "\n";
    return out + "resolved config:\n" + j.dump(2) + "\n";
}

namespace {

ordered_json cell_to_json(const CellResult& c) {
    ordered_json j;
    j["phi"] = c.phi;
    j["seed"] = c.seed;
    j["dataset"] = c.dataset;
    j["mode"] = c.mode;
    j["clip_len"] = c.clip_len;
    j["status"] = c.status;
    j["message"] = c.message;
    j["test_accuracy"] = c.test_accuracy;
    j["test_accuracy_ovr"] = c.test_accuracy_ovr;
    j["val_accuracy"] = c.val_accuracy;
    j["best_epoch"] = c.best_epoch;
    j["n_train"] = c.n_train;
    j["n_test"] = c.n_test;
    j["n_validate"] = c.n_validate;
    j["classes"] = c.cm.classes;
    j["counts"] = c.cm.counts;
    return j;
}

CellResult cell_from_json(const json& j) {
    CellResult c;
    c.phi = j.at("phi");
    c.seed = j.at("seed");
    c.dataset = j.at("dataset");
    c.mode = j.at("mode");
    c.clip_len = j.at("clip_len");
    c.status = j.at("status");
    c.message = j.value("message", "");
    c.test_accuracy = j.at("test_accuracy");
    c.test_accuracy_ovr = j.at("test_accuracy_ovr");
    c.val_accuracy = j.at("val_accuracy");
    c.best_epoch = j.at("best_epoch");
    c.n_train = j.at("n_train");
    c.n_test = j.at("n_test");
    c.n_validate = j.at("n_validate");
    c.cm.classes = j.at("classes");
    c.cm.counts = j.at("counts").get<std::vector<long>>();
    for (long v : c.cm.counts) c.cm.total += v;
    return c;
}

std::string timestamp() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y%m%d-%H%M%S", &tm);
    return buf;
}

struct Corpus {
    std::vector<AnnotationRecord> records;
    std::vector<VideoClip> segments;
    std::string error;  // non-empty: cells using this corpus are skipped
};

Corpus load_corpus(const ExperimentConfig& cfg, bool baseline, const fs::path& run_dir, std::ostream& log) {
    Corpus c;
    const auto& path = baseline ? cfg.baseline_annotations : cfg.annotations;
    const char* name = baseline ? "baseline" : "re-annotation";
    if (path.empty() || !fs::exists(path)) {
        c.error = std::string(name) + " annotations not found: " + path.string();
        return c;
    }
    if (cfg.videos.empty() || !fs::is_directory(cfg.videos)) {
        c.error = "video directory not found: " + cfg.videos.string();
        return c;
    }
    c.records = parse_annotations(path.string());
    ClassOverrides ov;
    const auto& ov_path = baseline ? cfg.baseline_overrides : cfg.overrides;
    if (!ov_path.empty() && fs::exists(ov_path)) ov = load_overrides(ov_path.string());
    const auto reports = validate_all(c.records, &ov);
    write_text_file(run_dir / (baseline ? "validation_baseline.jsonl" : "validation_reannotation.jsonl"),
                    report_to_json_lines(reports));
    // the baseline set is used as delivered; only the re-annotation is filtered
    if (!baseline) {
        std::vector<AnnotationRecord> kept;
        for (std::size_t i = 0; i < c.records.size(); ++i)
            if (reports[i].clean()) kept.push_back(c.records[i]);
        log << "re-annotation: kept " << kept.size() << " of " << c.records.size() << " records after validation\n";
        c.records = std::move(kept);
    }
    SegmentOptions opt;
    opt.level = cfg.level;
    opt.height = cfg.height;
    opt.width = cfg.width;
    auto set = build_segments(c.records, cfg.videos, opt);
    for (const auto& s : set.skipped) log << name << ": skipped " << s << "\n";
    c.segments = std::move(set.segments);
    if (c.segments.empty()) c.error = std::string(name) + ": no usable video segments";
    return c;
}

std::vector<SplitItem> split_items(const std::vector<VideoClip>& clips) {
    std::vector<SplitItem> items;
    for (const auto& c : clips) items.push_back({c.clip_id, c.source_video_id, c.provenance});
    return items;
}

std::vector<VideoClip> pick(const std::vector<VideoClip>& clips, const std::vector<std::size_t>& idx) {
    std::vector<VideoClip> out;
    for (auto i : idx) out.push_back(clips[i]);
    return out;
}

DomainCodec codec_for_seed(const ExperimentConfig& cfg, const Corpus& re, std::uint64_t seed, const fs::path& run_dir,
                           std::ostream& log) {
    const auto path = run_dir / "cst" / ("codec_seed" + std::to_string(seed) + ".ckpt");
    if (fs::exists(path)) {
        log << "cst: reusing " << path.string() << "\n";
        return load_codec(path.string());
    }
    std::vector<VideoClip> day, night;
    for (const auto& s : re.segments) (s.domain == Domain::Day ? day : night).push_back(s);
    if (day.empty() || night.empty()) fail(ErrorKind::Domain, "style translation needs both day and night videos");
    auto cc = cfg.cst;
    cc.seed = mix_seed(seed, "cst");
    const auto arch = CstArch::preset_for(cfg.cst_preset, cfg.height, cfg.width);
    log << "cst: training " << cc.steps << " steps on " << day.size() << " day / " << night.size()
        << " night segments\n";
    auto res = train_cst(day, night, arch, cc);
    if (res.diverged) log << "cst: diverged, keeping last snapshot\n";
    std::string csv = "step,recon_s,recon_t,kl_s,kl_t,adv_s,adv_t,cyc_s,cyc_t,total\n";
    for (std::size_t i = 0; i < res.log.size(); ++i) {
        const auto& r = res.log[i];
        csv += std::to_string(i + 1);
        for (double v : {r.recon_s, r.recon_t, r.kl_s, r.kl_t, r.adv_s, r.adv_t, r.cyc_s, r.cyc_t, r.total})
            csv += "," + format_number(v);
        csv += "\n";
    }
    write_text_file(run_dir / "cst" / ("cst_log_seed" + std::to_string(seed) + ".csv"), csv);
    save_codec(path.string(), res.codec);
    return std::move(res.codec);
}

CellResult run_cell(const ExperimentConfig& cfg, const CellSpec& spec, std::uint64_t seed, const Corpus& corpus,
                    const std::vector<VideoClip>* augmented, const fs::path& cell_dir, std::ostream& log) {
    CellResult r;
    r.phi = spec.phi;
    r.seed = seed;
    r.dataset = spec.baseline ? "baseline" : "re-annotation";
    r.mode = spec.mode == DatasetMode::Augmented ? "X" : "V";
    r.clip_len = spec.clip_len;
    const int classes = taxonomy_size(cfg.level);

    // splits are drawn with the run seed so V and X cells see the same draw;
    // fakes follow their original unless the per-provenance protocol is asked for
    std::vector<VideoClip> train, test, val;
    const bool per_provenance = cfg.fakes_for == "all" && cfg.split_mode == SplitMode::Independent;
    if (spec.mode == DatasetMode::Augmented && !per_provenance) {
        const auto sp = split_dataset(split_items(corpus.segments), cfg.split_mode, seed);
        train = pick(corpus.segments, sp.train);
        test = pick(corpus.segments, sp.test);
        val = pick(corpus.segments, sp.validate);
        std::map<std::string, std::vector<VideoClip>*> home;
        for (auto i : sp.train) home[corpus.segments[i].clip_id] = &train;
        if (cfg.fakes_for != "train") {
            for (auto i : sp.test) home[corpus.segments[i].clip_id] = &test;
            for (auto i : sp.validate) home[corpus.segments[i].clip_id] = &val;
        }
        for (const auto& c : *augmented) {
            if (c.provenance == Provenance::Original) continue;
            const auto it = home.find(c.clip_id.substr(0, c.clip_id.rfind('#')));
            if (it != home.end()) it->second->push_back(c);
        }
    } else {
        const auto& all = spec.mode == DatasetMode::Augmented ? *augmented : corpus.segments;
        const auto sp = split_dataset(split_items(all), cfg.split_mode, seed);
        train = pick(all, sp.train);
        test = pick(all, sp.test);
        val = pick(all, sp.validate);
    }
    r.n_train = static_cast<int>(train.size());
    r.n_test = static_cast<int>(test.size());
    r.n_validate = static_cast<int>(val.size());
    if (train.empty() || test.empty()) {
        r.status = "skipped";
        r.message = "empty train or test partition";
        return r;
    }

    ClassifierConfig cc;
    cc.preset = cfg.classifier_preset;
    cc.num_classes = classes;
    cc.clip_len = spec.clip_len;
    cc.height = cfg.height;
    cc.width = cfg.width;
    cc.width_divisor = cfg.width_divisor;
    cc.seed = mix_seed(seed, "phi" + std::to_string(spec.phi));
    Classifier clf(cc);
    if (!cfg.pretrained.empty()) load_pretrained_backbone(clf, cfg.pretrained);

    TrainConfig tc = cfg.train;
    tc.clip_len = spec.clip_len;
    tc.seed = cc.seed;
    tc.dataset_mode = spec.mode;
    const std::string model_id = "phi" + std::to_string(spec.phi);
    log << model_id << " seed " << seed << ": " << train.size() << " train / " << test.size() << " test / "
        << val.size() << " validate clips\n";
    const auto tr = train_classifier(clf, train, val, tc, model_id);
    if (tr.diverged) log << model_id << ": " << tr.divergence << " (best checkpoint kept)\n";

    const auto windows = eval_windows(test, spec.clip_len);
    const auto preds = predict_batch(clf, windows);
    std::vector<int> truth, pred;
    for (std::size_t i = 0; i < windows.size(); ++i) {
        truth.push_back(windows[i].label);
        pred.push_back(preds[i].class_id);
    }
    r.cm = confusion(truth, pred, classes);
    r.test_accuracy = accuracy(r.cm, AccuracyMode::Top1);
    r.test_accuracy_ovr = accuracy(r.cm, AccuracyMode::OvrMacro);
    r.best_epoch = tr.best_epoch;
    r.val_accuracy = tr.best_score;
    if (tr.diverged) r.message = tr.divergence;

    std::vector<std::string> labels = default_taxonomy().at(cfg.level).labels;
    ordered_json extra = {{"phi", spec.phi}, {"epoch", tr.best_epoch}, {"dataset", r.dataset}, {"mode", r.mode},
                          {"run_seed", seed}, {"pretrained", !cfg.pretrained.empty()}};
    save_classifier((cell_dir / "model.ckpt").string(), clf, extra);
    write_text_file(cell_dir / "runlog.csv", runlog_csv(tr.log));
    std::string timing = "epoch,wall_seconds\n";
    for (const auto& e : tr.log.epochs) timing += std::to_string(e.epoch) + "," + format_number(e.wall_seconds) + "\n";
    write_text_file(cell_dir / "timing.csv", timing);
    ordered_json resolved = {{"phi", spec.phi}, {"dataset", r.dataset}, {"mode", r.mode}, {"seed", seed},
                             {"split_mode", to_string(cfg.split_mode)}, {"taxonomy_level", cfg.level},
                             {"classifier", cc.to_json()}, {"train", tc.to_json()}};
    ordered_json test_ids = ordered_json::array();
    for (const auto& c : test) test_ids.push_back(c.clip_id);
    resolved["test_clips"] = test_ids;
    write_text_file(cell_dir / "config.json", resolved.dump(2) + "\n");
    write_text_file(cell_dir / "confusion.csv", confusion_csv(r.cm, labels));
    return r;
}

void write_timeline(const ExperimentConfig& cfg, const std::vector<CellResult>& cells, const Corpus& re,
                    const fs::path& run_dir, std::ostream& log) {
    const CellResult* cell = nullptr;
    for (const auto& c : cells)
        if (c.phi == cfg.timeline_phi && c.ok()) {
            cell = &c;
            break;
        }
    if (!cell) {
        log << "timeline: phi" << cfg.timeline_phi << " has no trained model, skipped\n";
        return;
    }
    const auto cell_dir = run_dir / ("phi" + std::to_string(cell->phi)) / ("seed" + std::to_string(cell->seed));
    const auto clf = load_classifier((cell_dir / "model.ckpt").string());
    // prefer a video whose clips were held out
    std::set<std::string> held_out;
    {
        std::ifstream in(cell_dir / "config.json");
        json j;
        in >> j;
        for (const auto& id : j.value("test_clips", json::array())) {
            const auto s = id.get<std::string>();
            held_out.insert(s.substr(0, s.find(':')));
        }
    }
    const AnnotationRecord* rec = nullptr;
    for (const auto& r : re.records)
        if (held_out.count(r.video_id)) {
            rec = &r;
            break;
        }
    if (!rec && !re.records.empty()) rec = &re.records.front();
    if (!rec) return;
    const auto src = load_video(cfg.videos / rec->video_id, rec->fps);
    if (src.frame_count < clf.config().clip_len) {
        log << "timeline: " << rec->video_id << " shorter than the window, skipped\n";
        return;
    }
    auto rep = sliding_timeline(clf, src, clf.config().clip_len, cfg.timeline_stride);
    rep.truth = rec->window;
    rep.truth_label = map_class(rec->class16, cfg.level);
    write_text_file(run_dir / ("timeline_" + rec->video_id + ".csv"), timeline_csv(rep));
    write_timeline_png(run_dir / ("timeline_" + rec->video_id + ".png"), rep);
    log << "timeline: " << rec->video_id << " (" << rep.predicted.size() << " windows)\n";
}

}  // namespace

ExperimentResult run_experiment_matrix(const ExperimentConfig& cfg_in, std::ostream& log) {
    cfg_in.validate();
    ExperimentConfig cfg = cfg_in;
    if (cfg.output_root.empty()) cfg.output_root = default_output_root();
    if (cfg.run_name.empty()) cfg.run_name = timestamp();
    ExperimentResult result;
    result.run_dir = cfg.output_root / cfg.run_name;
    std::error_code ec;
    fs::create_directories(result.run_dir, ec);
    if (ec) fail(ErrorKind::Io, "cannot create " + result.run_dir.string() + ": " + ec.message());
    write_text_file(result.run_dir / "config.json", cfg.to_json().dump(2) + "\n");

    const auto cells = experiment_cells(cfg.cells);
    bool need_base = false, need_re = false, need_x = false;
    for (const auto& c : cells) {
        (c.baseline ? need_base : need_re) = true;
        if (c.mode == DatasetMode::Augmented) need_x = true;
    }
    Corpus base, re;
    if (need_base) base = load_corpus(cfg, true, result.run_dir, log);
    if (need_re || need_x) re = load_corpus(cfg, false, result.run_dir, log);

    std::map<std::string, double> cell_seconds;
    for (auto seed : cfg.seeds) {
        std::vector<VideoClip> augmented;
        std::string x_error;
        if (need_x && re.error.empty()) {
            try {
                augmented = synthesize_corpus(codec_for_seed(cfg, re, seed, result.run_dir, log), re.segments,
                                              cfg.encoder_rule);
            } catch (const Error& e) {
                x_error = std::string("style translation failed: ") + e.what();
                log << x_error << "\n";
            }
        }
        for (const auto& spec : cells) {
            const auto cell_dir =
                result.run_dir / ("phi" + std::to_string(spec.phi)) / ("seed" + std::to_string(seed));
            const auto done = cell_dir / "result.json";
            if (fs::exists(done)) {
                std::ifstream in(done);
                json j;
                in >> j;
                result.cells.push_back(cell_from_json(j));
                log << "phi" << spec.phi << " seed " << seed << ": already complete\n";
                continue;
            }
            const auto& corpus = spec.baseline ? base : re;
            CellResult r;
            r.phi = spec.phi;
            r.seed = seed;
            r.dataset = spec.baseline ? "baseline" : "re-annotation";
            r.mode = spec.mode == DatasetMode::Augmented ? "X" : "V";
            r.clip_len = spec.clip_len;
            const auto t0 = std::chrono::steady_clock::now();
            if (!corpus.error.empty()) {
                r.status = "skipped";
                r.message = corpus.error;
            } else if (spec.mode == DatasetMode::Augmented && !x_error.empty()) {
                r.status = "skipped";
                r.message = x_error;
            } else {
                try {
                    fs::create_directories(cell_dir);
                    r = run_cell(cfg, spec, seed, corpus, &augmented, cell_dir, log);
                } catch (const Error& e) {
                    r.status = "failed";
                    r.message = e.what();
                }
            }
            cell_seconds["phi" + std::to_string(spec.phi) + "/seed" + std::to_string(seed)] =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            log << "phi" << spec.phi << " seed " << seed << ": " << r.status;
            if (r.ok()) log << " test accuracy " << format_number(r.test_accuracy);
            if (!r.message.empty()) log << " (" << r.message << ")";
            log << "\n";
            if (r.ok()) write_text_file(done, cell_to_json(r).dump(2) + "\n");
            result.cells.push_back(std::move(r));
        }
    }

    std::stable_sort(result.cells.begin(), result.cells.end(), [](const CellResult& a, const CellResult& b) {
        return a.phi != b.phi ? a.phi < b.phi : a.seed < b.seed;
    });
    write_text_file(result.run_dir / "results.csv", results_csv(result.cells));
    write_text_file(result.run_dir / "table2.csv", table2_csv(result.cells));
    write_text_file(result.run_dir / "table3.csv", table3_csv(result.cells));
    std::string timing = "cell,wall_seconds\n";
    for (const auto& [k, v] : cell_seconds) timing += k + "," + format_number(v) + "\n";
    write_text_file(result.run_dir / "timing.csv", timing);

    const auto& labels = default_taxonomy().at(cfg.level).labels;
    for (const auto& spec : cells) {
        ConfusionMatrix sum;
        for (const auto& c : result.cells) {
            if (c.phi != spec.phi || !c.ok()) continue;
            if (sum.classes == 0) {
                sum = c.cm;
            } else {
                for (std::size_t i = 0; i < sum.counts.size(); ++i) sum.counts[i] += c.cm.counts[i];
                sum.total += c.cm.total;
            }
        }
        if (sum.classes > 0)
            write_text_file(result.run_dir / ("confusion_phi" + std::to_string(spec.phi) + ".csv"),
                            confusion_csv(sum, labels));
    }

    try {
        if (re.error.empty()) write_timeline(cfg, result.cells, re, result.run_dir, log);
    } catch (const Error& e) {
        log << "timeline failed: " << e.what() << "\n";
    }

    if (!cfg.crossval_annotations.empty()) {
        std::vector<CrossValRow> rows;
        try {
            const auto records = parse_annotations(cfg.crossval_annotations.string());
            for (int phi : cfg.crossval_phis)
                for (const auto& c : result.cells) {
                    if (c.phi != phi || !c.ok()) continue;
                    const auto clf = load_classifier(
                        (result.run_dir / ("phi" + std::to_string(phi)) / ("seed" + std::to_string(c.seed)) / "model.ckpt")
                            .string());
                    const auto rep = cross_validate_external(clf, records, cfg.crossval_videos, cfg.level);
                    rows.push_back({c.mode == "X" ? "CST+S3D" : "S3D", phi, rep.accuracy,
                                    static_cast<long>(rep.items.size())});
                    break;
                }
        } catch (const Error& e) {
            log << "cross-validation failed: " << e.what() << "\n";
        }
        write_text_file(result.run_dir / "table4.csv", table4_csv(rows));
    }
    return result;
}

}  // namespace nearmiss
