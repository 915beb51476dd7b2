#include "nearmiss/nearmiss.h"

#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <new>

#include <json.hpp>

#include "annotation.hpp"
#include "cst.hpp"
#include "dataset.hpp"
#include "error.hpp"
#include "evaluation.hpp"
#include "experiment.hpp"
#include "reports.hpp"
#include "s3d.hpp"
#include "split.hpp"
#include "synth.hpp"
#include "taxonomy.hpp"
#include "training.hpp"

struct nm_annotations {
    std::vector<nearmiss::AnnotationRecord> records;
};
struct nm_codec {
    nearmiss::DomainCodec codec;
};
struct nm_classifier {
    nearmiss::Classifier clf;
};

namespace {

using namespace nearmiss;
namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

thread_local std::string g_last_error;

nm_status status_for(ErrorKind k) {
    switch (k) {
        case ErrorKind::Parse: return NM_ERR_PARSE;
        case ErrorKind::Validation: return NM_ERR_VALIDATION;
        case ErrorKind::Domain: return NM_ERR_DOMAIN;
        case ErrorKind::Io: return NM_ERR_IO;
        case ErrorKind::Range: return NM_ERR_RANGE;
        case ErrorKind::Shape: return NM_ERR_SHAPE;
        case ErrorKind::Numeric: return NM_ERR_NUMERIC;
        case ErrorKind::Load: return NM_ERR_LOAD;
        case ErrorKind::Usage: return NM_ERR_USAGE;
        case ErrorKind::Runtime: return NM_ERR_RUNTIME;
    }
    return NM_ERR_RUNTIME;
}

template <class F>
nm_status guarded(F&& f) {
    try {
        f();
        g_last_error.clear();
        return NM_OK;
    } catch (const Error& e) {
        g_last_error = e.what();
        return status_for(e.kind());
    } catch (const json::exception& e) {
        g_last_error = std::string("malformed JSON: ") + e.what();
        return NM_ERR_PARSE;
    } catch (const fs::filesystem_error& e) {
        g_last_error = e.what();
        return NM_ERR_IO;
    } catch (const std::bad_alloc&) {
        g_last_error = "out of memory";
        return NM_ERR_RUNTIME;
    } catch (const std::exception& e) {
        g_last_error = e.what();
        return NM_ERR_RUNTIME;
    }
}

void require(const void* p, const char* name) {
    if (!p) fail(ErrorKind::Usage, std::string("null argument: ") + name);
}

nm_status null_arg(const char* name) {
    g_last_error = std::string("null argument: ") + name;
    return NM_ERR_NULL_ARG;
}

#define NM_REQUIRE(p)                     \
    do {                                  \
        if (!(p)) return null_arg(#p);    \
    } while (0)

char* dup_string(const std::string& s) {
    char* out = static_cast<char*>(std::malloc(s.size() + 1));
    if (!out) throw std::bad_alloc();
    std::memcpy(out, s.data(), s.size());
    out[s.size()] = '\0';
    return out;
}

void emit(char** out, const std::string& s) {
    if (out) *out = dup_string(s);
}

json parse_json(const char* text) {
    if (!text || !*text) return json::object();
    try {
        auto j = json::parse(text);
        if (!j.is_object()) fail(ErrorKind::Usage, "configuration must be a JSON object");
        return j;
    } catch (const json::parse_error& e) {
        fail(ErrorKind::Parse, std::string("configuration: ") + e.what());
    }
}

ordered_json confusion_json(const ConfusionMatrix& cm) {
    auto rows = ordered_json::array();
    for (int i = 0; i < cm.classes; ++i) {
        auto row = ordered_json::array();
        for (int j = 0; j < cm.classes; ++j) row.push_back(cm.at(i, j));
        rows.push_back(row);
    }
    return {{"classes", cm.classes}, {"total", cm.total}, {"counts", rows}};
}

int native_dim(const std::vector<VideoClip>& clips, bool height) {
    if (clips.empty()) fail(ErrorKind::Domain, "clip set is empty");
    return height ? clips.front().height : clips.front().width;
}

}  // namespace

extern "C" {

const char* nm_last_error(void) { return g_last_error.c_str(); }

const char* nm_status_name(nm_status s) {
    switch (s) {
        case NM_OK: return "ok";
        case NM_ERR_PARSE: return "parse error";
        case NM_ERR_VALIDATION: return "validation error";
        case NM_ERR_DOMAIN: return "domain error";
        case NM_ERR_IO: return "io error";
        case NM_ERR_RANGE: return "range error";
        case NM_ERR_SHAPE: return "shape error";
        case NM_ERR_NUMERIC: return "numeric error";
        case NM_ERR_LOAD: return "load error";
        case NM_ERR_USAGE: return "usage error";
        case NM_ERR_RUNTIME: return "runtime error";
        case NM_ERR_NULL_ARG: return "null argument";
    }
    return "unknown";
}

const char* nm_version(void) { return "0.1.0"; }

void nm_string_free(char* s) { std::free(s); }

nm_status nm_annotations_load(const char* path, nm_annotations** out) {
    NM_REQUIRE(path);
    NM_REQUIRE(out);
    *out = nullptr;
    return guarded([&] { *out = new nm_annotations{parse_annotations(path)}; });
}

nm_status nm_annotations_parse(const char* jsonl, nm_annotations** out) {
    NM_REQUIRE(jsonl);
    NM_REQUIRE(out);
    *out = nullptr;
    return guarded([&] { *out = new nm_annotations{parse_annotations_text(jsonl)}; });
}

void nm_annotations_free(nm_annotations* a) { delete a; }

size_t nm_annotations_count(const nm_annotations* a) { return a ? a->records.size() : 0; }

nm_status nm_annotations_to_jsonl(const nm_annotations* a, char** out) {
    NM_REQUIRE(a);
    NM_REQUIRE(out);
    return guarded([&] { emit(out, serialize_annotations(a->records)); });
}

nm_status nm_annotations_validate(const nm_annotations* a, const char* overrides_path, char** report_jsonl,
                                  size_t* violating_records) {
    NM_REQUIRE(a);
    return guarded([&] {
        ClassOverrides ov;
        if (overrides_path && *overrides_path) ov = load_overrides(overrides_path);
        const auto reports = validate_all(a->records, &ov);
        if (violating_records) {
            *violating_records = 0;
            for (const auto& r : reports)
                if (!r.clean()) ++*violating_records;
        }
        emit(report_jsonl, report_to_json_lines(reports));
    });
}

nm_status nm_annotations_filter(const nm_annotations* a, nm_annotations** out) {
    NM_REQUIRE(a);
    NM_REQUIRE(out);
    *out = nullptr;
    return guarded([&] { *out = new nm_annotations{filter_corpus(a->records)}; });
}

nm_status nm_taxonomy_size(int level, int* out) {
    NM_REQUIRE(out);
    return guarded([&] { *out = taxonomy_size(level); });
}

nm_status nm_map_class(int class16, int level, int* out) {
    NM_REQUIRE(out);
    return guarded([&] { *out = map_class(class16, level); });
}

nm_status nm_derive_normal_start(double t3, double* out) {
    NM_REQUIRE(out);
    return guarded([&] { *out = derive_normal_start(t3); });
}

nm_status nm_synth_generate(const char* spec_json, uint64_t seed, const char* out_dir, char** manifest_json) {
    NM_REQUIRE(out_dir);
    return guarded([&] {
        const auto spec = SynthSpec::from_json(parse_json(spec_json));
        const auto corpus = generate_synthetic_corpus(spec, seed, out_dir);
        emit(manifest_json, corpus.manifest().dump(2));
    });
}

nm_status nm_clip_corpus(const char* videos_dir, const char* annotations_path, const char* out_dir,
                         const char* options_json, char** summary_json) {
    NM_REQUIRE(videos_dir);
    NM_REQUIRE(annotations_path);
    NM_REQUIRE(out_dir);
    return guarded([&] {
        const auto opt = parse_json(options_json);
        auto records = parse_annotations(annotations_path);
        ordered_json summary;
        summary["records"] = records.size();
        if (opt.value("filter", true)) {
            ClassOverrides ov;
            const auto ov_path = opt.value("overrides", std::string());
            if (!ov_path.empty()) ov = load_overrides(ov_path);
            const auto reports = validate_all(records, &ov);
            std::vector<AnnotationRecord> kept;
            auto dropped = ordered_json::array();
            for (std::size_t i = 0; i < records.size(); ++i)
                if (reports[i].clean())
                    kept.push_back(records[i]);
                else
                    dropped.push_back(records[i].video_id);
            records = std::move(kept);
            summary["dropped"] = dropped;
        }
        SegmentOptions so;
        so.level = opt.value("level", 1);
        so.height = opt.value("height", 64);
        so.width = opt.value("width", 64);
        so.include_normal = opt.value("include_normal", true);
        taxonomy_size(so.level);
        const auto set = build_segments(records, videos_dir, so);
        save_clip_set(out_dir, set.segments);
        summary["clips"] = set.segments.size();
        summary["skipped"] = set.skipped;
        if (set.segments.size() >= 3) {
            std::vector<SplitItem> items;
            for (const auto& c : set.segments) items.push_back({c.clip_id, c.source_video_id, c.provenance});
            const auto mode = split_mode_from_string(opt.value("split_mode", std::string("grouped")));
            const auto split = split_dataset(items, mode, opt.value("seed", std::uint64_t{0}));
            save_split(out_dir, set.segments, split);
            summary["split"] = {{"mode", to_string(mode)},
                                {"train", split.train.size()},
                                {"test", split.test.size()},
                                {"validate", split.validate.size()}};
        }
        emit(summary_json, summary.dump(2));
    });
}

nm_status nm_incident_range(double t0, double t3, double fps, long frame_count, long* begin, long* end) {
    NM_REQUIRE(begin);
    NM_REQUIRE(end);
    return guarded([&] {
        if (!(fps > 0)) fail(ErrorKind::Domain, "fps must be positive");
        FrameSource src;
        src.video_id = "range";
        src.fps = fps;
        src.frame_count = frame_count;
        TemporalWindow w;
        w.t0 = t0;
        w.t3 = t3;
        const auto r = extract_incident_clip(src, w);
        *begin = r.begin;
        *end = r.end;
    });
}

nm_status nm_cst_train(const char* day_dir, const char* night_dir, const char* config_json, nm_codec** out,
                       char** log_csv) {
    NM_REQUIRE(day_dir);
    NM_REQUIRE(out);
    *out = nullptr;
    return guarded([&] {
        const auto cfg = parse_json(config_json);
        const int h = cfg.value("height", 0), w = cfg.value("width", 0);
        auto day = load_clip_set(day_dir, h, w);
        std::vector<VideoClip> night;
        if (night_dir && *night_dir) {
            night = load_clip_set(night_dir, h, w);
        } else {
            // one clip set holding both domains
            std::vector<VideoClip> all = std::move(day);
            day.clear();
            for (auto& c : all) (c.domain == Domain::Night ? night : day).push_back(std::move(c));
        }
        if (day.empty() || night.empty()) fail(ErrorKind::Domain, "both day and night clips are required");
        const auto arch = CstArch::preset_for(cfg.value("preset", std::string("toy")), day.front().height,
                                              day.front().width);
        CstTrainConfig tc;
        tc.steps = cfg.value("steps", tc.steps);
        tc.lr = cfg.value("lr", tc.lr);
        tc.batch = cfg.value("batch", tc.batch);
        tc.seed = cfg.value("seed", tc.seed);
        tc.snapshot_every = cfg.value("snapshot_every", tc.snapshot_every);
        tc.latent_noise = cfg.value("latent_noise", tc.latent_noise);
        if (cfg.contains("weights")) {
            const auto& wj = cfg["weights"];
            tc.weights.recon = wj.value("recon", tc.weights.recon);
            tc.weights.kl = wj.value("kl", tc.weights.kl);
            tc.weights.adv = wj.value("adv", tc.weights.adv);
            tc.weights.cyc = wj.value("cyc", tc.weights.cyc);
        }
        auto res = train_cst(day, night, arch, tc);
        std::string csv = "step,recon_s,recon_t,kl_s,kl_t,adv_s,adv_t,cyc_s,cyc_t,total\n";
        for (std::size_t i = 0; i < res.log.size(); ++i) {
            const auto& r = res.log[i];
            csv += std::to_string(i + 1);
            for (double v : {r.recon_s, r.recon_t, r.kl_s, r.kl_t, r.adv_s, r.adv_t, r.cyc_s, r.cyc_t, r.total})
                csv += "," + format_number(v);
            csv += "\n";
        }
        if (res.diverged) csv += "# diverged; parameters restored from the last snapshot\n";
        emit(log_csv, csv);
        *out = new nm_codec{std::move(res.codec)};
    });
}

nm_status nm_codec_load(const char* path, nm_codec** out) {
    NM_REQUIRE(path);
    NM_REQUIRE(out);
    *out = nullptr;
    return guarded([&] { *out = new nm_codec{load_codec(path)}; });
}

nm_status nm_codec_save(const nm_codec* codec, const char* path) {
    NM_REQUIRE(codec);
    NM_REQUIRE(path);
    return guarded([&] { save_codec(path, codec->codec); });
}

void nm_codec_free(nm_codec* codec) { delete codec; }

nm_status nm_cst_translate(const nm_codec* codec, const char* in_dir, const char* out_dir, size_t* clips_written) {
    NM_REQUIRE(codec);
    NM_REQUIRE(in_dir);
    NM_REQUIRE(out_dir);
    return guarded([&] {
        const auto& arch = codec->codec.arch();
        const auto clips = load_clip_set(in_dir, arch.height, arch.width);
        const auto x = synthesize_corpus(codec->codec, clips);
        save_clip_set(out_dir, x);
        if (fs::exists(fs::path(in_dir) / "split.json") && x.size() >= 3) {
            json sj;
            std::ifstream(fs::path(in_dir) / "split.json") >> sj;
            const auto mode = split_mode_from_string(sj.value("mode", std::string("grouped")));
            const auto seed = sj.value("seed", std::uint64_t{0});
            SplitAssignment split;
            if (mode == SplitMode::Independent) {
                std::vector<SplitItem> items;
                for (const auto& c : x) items.push_back({c.clip_id, c.source_video_id, c.provenance});
                split = split_dataset(items, mode, seed);
            } else {
                // renderings join their original's partition
                split.mode = mode;
                split.seed = seed;
                std::map<std::string, std::vector<std::size_t>*> home;
                const auto parts = load_split(in_dir);
                for (auto [name, dst] : {std::pair{"train", &split.train}, {"test", &split.test},
                                         {"validate", &split.validate}})
                    for (const auto& id : parts.at(name)) home[id] = dst;
                for (std::size_t i = 0; i < x.size(); ++i) {
                    const auto& id = x[i].clip_id;
                    auto it = home.find(x[i].provenance == Provenance::Original ? id : id.substr(0, id.rfind('#')));
                    if (it != home.end()) it->second->push_back(i);
                }
            }
            save_split(out_dir, x, split);
        }
        if (clips_written) *clips_written = x.size();
    });
}

nm_status nm_classifier_create(const char* config_json, nm_classifier** out) {
    NM_REQUIRE(out);
    *out = nullptr;
    return guarded([&] { *out = new nm_classifier{Classifier(ClassifierConfig::from_json(parse_json(config_json)))}; });
}

nm_status nm_classifier_load(const char* path, nm_classifier** out) {
    NM_REQUIRE(path);
    NM_REQUIRE(out);
    *out = nullptr;
    return guarded([&] { *out = new nm_classifier{load_classifier(path)}; });
}

nm_status nm_classifier_save(const nm_classifier* clf, const char* path) {
    NM_REQUIRE(clf);
    NM_REQUIRE(path);
    return guarded([&] { save_classifier(path, clf->clf); });
}

nm_status nm_classifier_load_backbone(nm_classifier* clf, const char* path) {
    NM_REQUIRE(clf);
    NM_REQUIRE(path);
    return guarded([&] { load_pretrained_backbone(clf->clf, path); });
}

void nm_classifier_free(nm_classifier* clf) { delete clf; }

size_t nm_classifier_param_count(const nm_classifier* clf) { return clf ? clf->clf.parameter_count() : 0; }

int nm_classifier_num_classes(const nm_classifier* clf) { return clf ? clf->clf.config().num_classes : 0; }

nm_status nm_classifier_predict(const nm_classifier* clf, const float* frames, int frame_count, int height, int width,
                                int* class_id, double* probs, size_t probs_len) {
    NM_REQUIRE(clf);
    NM_REQUIRE(frames);
    NM_REQUIRE(class_id);
    return guarded([&] {
        if (frame_count < 1 || height < 1 || width < 1) fail(ErrorKind::Shape, "clip dimensions must be positive");
        VideoClip clip;
        clip.frames = frame_count;
        clip.height = height;
        clip.width = width;
        clip.pixels.assign(frames, frames + static_cast<std::size_t>(frame_count) * height * width * 3);
        const auto p = predict(clf->clf, clip);
        *class_id = p.class_id;
        if (probs) {
            if (probs_len < p.probs.size()) fail(ErrorKind::Shape, "probability buffer too small");
            std::copy(p.probs.begin(), p.probs.end(), probs);
        }
    });
}

nm_status nm_train(const char* config_json, char** result_json) {
    return guarded([&] {
        const auto cfg = parse_json(config_json);
        auto cc = ClassifierConfig::from_json(cfg.value("classifier", json::object()));
        auto tc = TrainConfig::from_json(cfg.value("train", json::object()));
        const int h = cfg["classifier"].value("height", 0), w = cfg["classifier"].value("width", 0);
        std::vector<VideoClip> train, val;
        if (cfg.contains("clips")) {
            const fs::path dir = cfg["clips"].get<std::string>();
            const auto all = load_clip_set(dir, h, w);
            if (fs::exists(dir / "split.json")) {
                const auto split = load_split(dir);
                train = select_partition(all, split, "train");
                val = select_partition(all, split, "validate");
            } else {
                train = all;
            }
        } else {
            if (!cfg.contains("train_dir")) fail(ErrorKind::Usage, "either 'clips' or 'train_dir' is required");
            train = load_clip_set(cfg["train_dir"].get<std::string>(), h, w);
            if (cfg.contains("val_dir") && !cfg["val_dir"].get<std::string>().empty())
                val = load_clip_set(cfg["val_dir"].get<std::string>(), h, w);
        }
        cc.height = native_dim(train, true);
        cc.width = native_dim(train, false);
        cc.clip_len = tc.clip_len;
        Classifier clf(cc);
        if (cfg.contains("pretrained") && !cfg["pretrained"].get<std::string>().empty())
            load_pretrained_backbone(clf, cfg["pretrained"].get<std::string>());
        const auto res = train_classifier(clf, train, val, tc, cfg.value("model_id", std::string("model")));
        ordered_json out;
        out["train_clips"] = train.size();
        out["val_clips"] = val.size();
        out["epochs"] = res.log.epochs.size();
        out["best_epoch"] = res.best_epoch;
        out["best_score"] = res.best_score;
        out["diverged"] = res.diverged;
        if (res.diverged) out["divergence"] = res.divergence;
        const auto out_dir = cfg.value("out_dir", std::string());
        if (!out_dir.empty()) {
            fs::create_directories(out_dir);
            save_classifier((fs::path(out_dir) / "model.ckpt").string(), clf, {{"epoch", res.best_epoch}});
            write_text_file(fs::path(out_dir) / "runlog.csv", runlog_csv(res.log));
            ordered_json resolved = {{"classifier", cc.to_json()}, {"train", tc.to_json()}};
            write_text_file(fs::path(out_dir) / "config.json", resolved.dump(2) + "\n");
            out["model"] = (fs::path(out_dir) / "model.ckpt").string();
        }
        emit(result_json, out.dump(2));
    });
}

nm_status nm_confusion_accuracy(const int* truth, const int* pred, size_t n, int classes, nm_accuracy_mode mode,
                                double* out) {
    NM_REQUIRE(out);
    if (n > 0) {
        NM_REQUIRE(truth);
        NM_REQUIRE(pred);
    }
    return guarded([&] {
        const auto cm = confusion(std::span<const int>(truth, n), std::span<const int>(pred, n), classes);
        *out = accuracy(cm, mode == NM_ACC_OVR_MACRO ? AccuracyMode::OvrMacro : AccuracyMode::Top1);
    });
}

nm_status nm_eval_run(const char* model_path, const char* clips_dir, const char* partition, const char* out_dir,
                      char** result_json) {
    NM_REQUIRE(model_path);
    NM_REQUIRE(clips_dir);
    return guarded([&] {
        const auto clf = load_classifier(model_path);
        auto clips = load_clip_set(clips_dir, clf.config().height, clf.config().width);
        if (partition && *partition) clips = select_partition(clips, load_split(clips_dir), partition);
        const auto windows = eval_windows(clips, clf.config().clip_len);
        const auto preds = predict_batch(clf, windows);
        std::vector<int> truth, pred;
        std::string csv = "clip_id,truth,predicted,confidence\n";
        for (std::size_t i = 0; i < windows.size(); ++i) {
            truth.push_back(windows[i].label);
            pred.push_back(preds[i].class_id);
            csv += windows[i].clip_id + "," + std::to_string(windows[i].label) + "," +
                   std::to_string(preds[i].class_id) + "," + format_number(preds[i].probs[preds[i].class_id]) + "\n";
        }
        const auto cm = confusion(truth, pred, clf.config().num_classes);
        ordered_json out;
        out["clips"] = windows.size();
        out["accuracy"] = accuracy(cm, AccuracyMode::Top1);
        out["accuracy_ovr"] = accuracy(cm, AccuracyMode::OvrMacro);
        out["confusion"] = confusion_json(cm);
        if (out_dir && *out_dir) {
            std::vector<std::string> labels;
            for (int k = 0; k < cm.classes; ++k) labels.push_back(std::to_string(k));
            write_text_file(fs::path(out_dir) / "confusion.csv", confusion_csv(cm, labels));
            write_text_file(fs::path(out_dir) / "predictions.csv", csv);
        }
        emit(result_json, out.dump(2));
    });
}

nm_status nm_eval_timeline(const char* model_path, const char* video_dir, const char* annotations_path, int stride,
                           const char* out_dir, char** result_json) {
    NM_REQUIRE(model_path);
    NM_REQUIRE(video_dir);
    return guarded([&] {
        const auto clf = load_classifier(model_path);
        const fs::path vdir = fs::path(video_dir).lexically_normal();
        const std::string video_id = (vdir.has_filename() ? vdir : vdir.parent_path()).filename().string();
        std::optional<AnnotationRecord> rec;
        if (annotations_path && *annotations_path)
            for (const auto& r : parse_annotations(annotations_path))
                if (r.video_id == video_id) rec = r;
        const auto src = rec ? load_video(vdir, rec->fps) : load_video(vdir);
        auto rep = sliding_timeline(clf, src, clf.config().clip_len, stride);
        if (rec) {
            rep.truth = rec->window;
            const int level = clf.config().num_classes == 4 ? 1 : clf.config().num_classes == 7 ? 2 : 3;
            rep.truth_label = map_class(rec->class16, level);
        }
        ordered_json out;
        out["video_id"] = rep.video_id;
        out["frame_count"] = rep.frame_count;
        out["predictions"] = rep.predicted.size();
        if (out_dir && *out_dir) {
            const auto csv = fs::path(out_dir) / ("timeline_" + rep.video_id + ".csv");
            const auto png = fs::path(out_dir) / ("timeline_" + rep.video_id + ".png");
            write_text_file(csv, timeline_csv(rep));
            write_timeline_png(png, rep);
            out["csv"] = csv.string();
            out["png"] = png.string();
        }
        emit(result_json, out.dump(2));
    });
}

nm_status nm_eval_crossval(const char* model_path, const char* annotations_path, const char* videos_dir, int level,
                           char** result_json) {
    NM_REQUIRE(model_path);
    NM_REQUIRE(annotations_path);
    NM_REQUIRE(videos_dir);
    return guarded([&] {
        const auto clf = load_classifier(model_path);
        const auto rep = cross_validate_external(clf, parse_annotations(annotations_path), videos_dir, level);
        ordered_json out;
        out["level"] = rep.level;
        out["clip_len"] = rep.clip_len;
        out["clips"] = rep.items.size();
        out["accuracy"] = rep.accuracy;
        out["confusion"] = confusion_json(rep.cm);
        auto items = ordered_json::array();
        for (const auto& i : rep.items)
            items.push_back({{"clip_id", i.clip_id}, {"truth", i.truth}, {"predicted", i.predicted}});
        out["items"] = items;
        emit(result_json, out.dump(2));
    });
}

nm_status nm_describe_matrix(const char* config_json, char** out) {
    NM_REQUIRE(out);
    return guarded([&] {
        const auto cfg = ExperimentConfig::from_json(parse_json(config_json));
        cfg.validate();
        emit(out, describe_matrix(cfg));
    });
}

nm_status nm_run_all(const char* config_json, char** result_json, int* all_ok) {
    return guarded([&] {
        const auto cfg = ExperimentConfig::from_json(parse_json(config_json));
        const auto res = run_experiment_matrix(cfg, std::cerr);
        ordered_json out;
        out["run_dir"] = res.run_dir.string();
        auto cells = ordered_json::array();
        for (const auto& c : res.cells)
            cells.push_back({{"phi", c.phi},
                             {"seed", c.seed},
                             {"status", c.status},
                             {"test_accuracy", c.test_accuracy},
                             {"message", c.message}});
        out["cells"] = cells;
        if (all_ok) *all_ok = res.all_ok() ? 1 : 0;
        emit(result_json, out.dump(2));
    });
}

}  // extern "C"
