// Acceptance driver: one PASS/FAIL line per criterion.
//   acceptance [A1 ... A8] [--work DIR]
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "annotation.hpp"
#include "cst.hpp"
#include "error.hpp"
#include "evaluation.hpp"
#include "experiment.hpp"
#include "oracles.hpp"
#include "s3d.hpp"
#include "split.hpp"
#include "support.hpp"
#include "synth.hpp"
#include "training.hpp"
#include "video.hpp"

using namespace nearmiss;
namespace fs = std::filesystem;
using nn::Tensor;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

struct Criterion {
    std::string id;
    double budget_s;  // <= 0: no limit
    std::function<Outcome(const fs::path&)> run;
};

std::string fmt(double v, int prec = 4) {
    std::ostringstream s;
    s.precision(prec);
    s << v;
    return s.str();
}

std::string read_file(const fs::path& p) { return testing::slurp(p); }

// ---------------------------------------------------------------- A1

Outcome a1(const fs::path&) {
    const std::string dir = NM_TEST_DATA;
    const auto text = read_file(dir + "/annotations_fixture.jsonl");
    const auto records = parse_annotations_text(text);
    const auto overrides = load_overrides(dir + "/overrides_fixture.jsonl");

    std::map<std::string, std::set<std::string>> expected;
    std::istringstream in(text);
    for (std::string line; std::getline(in, line);) {
        if (line.empty()) continue;
        const auto j = nlohmann::json::parse(line);
        auto& e = expected[j.at("video_id").get<std::string>()];
        for (const auto& c : j.at("expect")) e.insert(c.get<std::string>());
    }

    long tp = 0, fp = 0, fn = 0;
    std::set<std::string> seen_codes;
    for (const auto& rep : validate_all(records, &overrides)) {
        std::set<std::string> got;
        for (const auto& v : rep.violations) got.insert(std::string(to_string(v.code)));
        const auto& want = expected[rep.video_id];
        for (const auto& c : got) (want.count(c) ? tp : fp) += 1;
        for (const auto& c : want) {
            fn += got.count(c) ? 0 : 1;
            seen_codes.insert(c);
        }
    }
    const double precision = tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 1.0;
    const double recall = tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 1.0;

    // gap tolerance on a clean record
    auto gap = [](double t4) {
        AnnotationRecord r;
        r.video_id = "gap";
        r.class16 = 3;
        r.window.t0 = 1.0;
        r.window.t3 = 4.0;
        r.window.t4 = t4;
        r.window.t5 = 9.0;
        return validate_record(r).has(ViolationCode::GapViolation);
    };
    const bool gap_ok = !gap(6.0) && !gap(6.0 + 5e-7) && !gap(6.0 - 5e-7) && gap(6.0 + 2e-6) && gap(6.0 - 2e-6) &&
                        gap(5.5);

    Outcome o;
    o.pass = records.size() == 50 && seen_codes.size() == 7 && precision == 1.0 && recall == 1.0 && gap_ok;
    o.detail = "records=" + std::to_string(records.size()) + " codes=" + std::to_string(seen_codes.size()) +
               " precision=" + fmt(precision) + " recall=" + fmt(recall) + " gap_tolerance=" + (gap_ok ? "ok" : "bad");
    return o;
}

// ---------------------------------------------------------------- A2

Outcome a2(const fs::path&) {
    struct Rate {
        long num, den;
    };
    const Rate rates[] = {{2997, 100}, {25, 1}, {30, 1}, {24000, 1001}, {30000, 1001}, {10, 1}, {15, 1}, {60, 1}, {25, 2}};
    auto oracle = [](long cents, Rate r) { return (cents * r.num) / (100 * r.den); };

    Rng rng(2718);
    int matched = 0, empty_rejected = 0, total = 0;
    std::string first_bad;
    for (int i = 0; i < 200; ++i) {
        const Rate r = rates[rng.below(std::size(rates))];
        const long c0 = static_cast<long>(rng.below(6000));
        const long c3 = c0 + 1 + static_cast<long>(rng.below(3000));
        const long f0 = oracle(c0, r), f3 = oracle(c3, r);

        FrameSource src;
        src.video_id = "a2";
        src.fps = static_cast<double>(r.num) / static_cast<double>(r.den);
        src.frame_count = f3 + static_cast<long>(rng.below(50));
        TemporalWindow w;
        w.t0 = static_cast<double>(c0) / 100.0;
        w.t3 = static_cast<double>(c3) / 100.0;
        ++total;
        bool ok = false;
        try {
            const auto range = extract_incident_clip(src, w);
            ok = f0 < f3 && range == FrameRange{f0, f3};
        } catch (const Error& e) {
            ok = f0 >= f3 && e.kind() == ErrorKind::Range;
            empty_rejected += ok;
        }
        matched += ok;
        if (!ok && first_bad.empty())
            first_bad = " first_mismatch=(" + std::to_string(c0) + "c," + std::to_string(c3) + "c," +
                        std::to_string(r.num) + "/" + std::to_string(r.den) + ")";
    }

    // worked example: 29.97 fps, 3.0 s .. 8.0 s
    FrameSource ex;
    ex.fps = 29.97;
    ex.frame_count = 300;
    TemporalWindow w;
    w.t0 = 3.0;
    w.t3 = 8.0;
    const bool example = extract_incident_clip(ex, w) == FrameRange{89, 239};

    Outcome o;
    o.pass = matched == total && example;
    o.detail = "matched=" + std::to_string(matched) + "/" + std::to_string(total) +
               " (empty windows rejected: " + std::to_string(empty_rejected) + ") example=" + (example ? "ok" : "bad") +
               first_bad;
    return o;
}

// ---------------------------------------------------------------- A3

bool partition_sizes(const SplitAssignment& a, std::size_t n) {
    const std::size_t tr = 7 * n / 10, te = 2 * n / 10;
    return a.train.size() == tr && a.test.size() == te && a.validate.size() == n - tr - te;
}

bool disjoint_exhaustive(const SplitAssignment& a, std::size_t n) {
    std::vector<int> hits(n, 0);
    for (const auto* part : {&a.train, &a.test, &a.validate})
        for (auto i : *part) {
            if (i >= n) return false;
            ++hits[i];
        }
    return std::all_of(hits.begin(), hits.end(), [](int h) { return h == 1; });
}

bool videos_unsplit(const SplitAssignment& a, const std::vector<SplitItem>& items) {
    std::map<std::string, int> where;
    int k = 0;
    for (const auto* part : {&a.train, &a.test, &a.validate}) {
        for (auto i : *part) {
            auto [it, fresh] = where.emplace(items[i].source_video_id, k);
            if (!fresh && it->second != k) return false;
        }
        ++k;
    }
    return true;
}

Outcome a3(const fs::path&) {
    Rng rng(31337);
    int ok_independent = 0, ok_grouped = 0, ok_grouped_exact = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 3 + rng.below(400);
        const std::uint64_t seed = rng.next();

        std::vector<SplitItem> unique(n), shared(n);
        const std::size_t n_videos = 1 + n / 3;
        for (std::size_t i = 0; i < n; ++i) {
            unique[i] = {"c" + std::to_string(i), "v" + std::to_string(i), Provenance::Original};
            shared[i] = {"c" + std::to_string(i), "v" + std::to_string(rng.below(n_videos)), Provenance::Original};
        }

        const auto ind = split_dataset(unique, SplitMode::Independent, seed);
        ok_independent += disjoint_exhaustive(ind, n) && partition_sizes(ind, n);

        const auto grp = split_dataset(shared, SplitMode::Grouped, seed);
        ok_grouped += disjoint_exhaustive(grp, n) && videos_unsplit(grp, shared);

        const auto one = split_dataset(unique, SplitMode::Grouped, seed);
        ok_grouped_exact += disjoint_exhaustive(one, n) && partition_sizes(one, n) && videos_unsplit(one, unique);
    }
    Outcome o;
    o.pass = ok_independent == 100 && ok_grouped == 100 && ok_grouped_exact == 100;
    o.detail = "independent=" + std::to_string(ok_independent) + "/100 grouped_no_video_split=" +
               std::to_string(ok_grouped) + "/100 grouped_one_clip_per_video=" + std::to_string(ok_grouped_exact) +
               "/100";
    return o;
}

// ---------------------------------------------------------------- A4

Outcome a4(const fs::path&) {
    SynthSpec spec;
    spec.n_videos = 48;
    spec.n_classes = 4;
    spec.height = 32;
    spec.width = 32;
    const auto corpus = plan_synthetic_corpus(spec, 4);
    std::vector<VideoClip> day, night;
    for (std::size_t i = 0; i < corpus.videos.size() && (day.size() < 16 || night.size() < 16); ++i) {
        auto& pool = corpus.videos[i].domain == Domain::Day ? day : night;
        if (pool.size() >= 16) continue;
        const auto src = FrameSource::from_clip(render_video(corpus, i));
        const auto seg = src.read(extract_incident_clip(src, corpus.videos[i].truth.window), 8, 8);
        Rng r(i);
        auto clip = sample_window(seg, 16, SamplePolicy::UniformStride, r);
        clip.domain = corpus.videos[i].domain;
        clip.clip_id = "a4_" + std::to_string(i);
        clip.source_video_id = corpus.videos[i].truth.video_id;
        pool.push_back(std::move(clip));
    }
    if (day.size() < 16 || night.size() < 16) return {false, "corpus lacks 16 clips per domain"};

    CstTrainConfig cfg;
    cfg.steps = 200;
    cfg.seed = 0;
    const auto res = train_cst(day, night, CstArch::preset_for("toy", 8, 8), cfg);
    if (res.diverged || res.log.size() != 200) return {false, "training diverged or short log"};
    const double first = res.log.front().recon_s + res.log.front().recon_t;
    const double last = res.log.back().recon_s + res.log.back().recon_t;

    bool shapes = true;
    for (const auto* pool : {&day, &night})
        for (const auto& c : *pool) {
            const auto tr = translate(res.codec, c);
            for (const auto* f : {&tr.fake1, &tr.fake2})
                shapes &= f->frames == c.frames && f->height == c.height && f->width == c.width &&
                          f->pixels.size() == c.pixels.size();
        }
    std::vector<VideoClip> originals = day;
    originals.insert(originals.end(), night.begin(), night.end());
    const auto x = synthesize_corpus(res.codec, originals);

    Outcome o;
    o.pass = last < 0.5 * first && shapes && x.size() == 3 * originals.size();
    o.detail = "recon step1=" + fmt(first) + " step200=" + fmt(last) + " ratio=" + fmt(last / first, 3) +
               " shapes=" + (shapes ? "ok" : "bad") + " |X|=" + std::to_string(x.size()) + " n=" +
               std::to_string(originals.size());
    return o;
}

// ---------------------------------------------------------------- A5

Outcome a5(const fs::path&) {
    SynthSpec spec;
    spec.n_videos = 8;
    spec.n_classes = 4;
    spec.height = 64;
    spec.width = 64;
    const auto corpus = plan_synthetic_corpus(spec, 3);
    const auto classes = spec.resolved_classes();
    std::vector<VideoClip> clips;
    for (std::size_t i = 0; i < corpus.videos.size(); ++i) {
        const auto src = FrameSource::from_clip(render_video(corpus, i));
        const auto seg = src.read(extract_incident_clip(src, corpus.videos[i].truth.window), 64, 64);
        Rng r(0);
        auto c = sample_window(seg, 16, SamplePolicy::UniformStride, r);
        c.label = static_cast<int>(std::find(classes.begin(), classes.end(), corpus.videos[i].truth.class16) -
                                   classes.begin());
        c.clip_id = "a5_" + std::to_string(i);
        c.source_video_id = c.clip_id;
        clips.push_back(std::move(c));
    }

    ClassifierConfig cc;
    cc.num_classes = 4;
    cc.clip_len = 16;
    Classifier clf(cc);
    TrainConfig tc;
    tc.epochs = 200;
    tc.clip_len = 16;
    tc.lr0 = 0.01;
    tc.milestones = {100, 150};
    tc.augment = AugmentConfig::none();
    tc.stop_at_train_accuracy = 1.0;
    tc.eval_train = true;
    const auto res = train_classifier(clf, clips, {}, tc, "a5");

    int correct = 0;
    const auto preds = predict_batch(clf, clips);
    for (std::size_t i = 0; i < clips.size(); ++i) correct += preds[i].class_id == clips[i].label;
    Outcome o;
    o.pass = !res.diverged && correct == static_cast<int>(clips.size());
    o.detail = "train_accuracy=" + std::to_string(correct) + "/" + std::to_string(clips.size()) +
               " epochs=" + std::to_string(res.log.epochs.size()) + " params=" + std::to_string(clf.parameter_count());
    return o;
}

// ---------------------------------------------------------------- A6

double max_abs_diff(const Tensor& a, const Tensor& b) {
    if (a.shape != b.shape) return INFINITY;
    double m = 0;
    for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a.data[i] - b.data[i]));
    return m;
}

Outcome a6(const fs::path&) {
    // (a) finite differences
    const auto arch = CstArch::preset_for("toy", 8, 8);
    DomainCodec codec(arch, 3);
    Discriminators discs(arch, 4);
    const auto xs = testing::random_tensor({2, 3, 8, 8}, 21, 0.0, 1.0);
    const auto xt = testing::random_tensor({2, 3, 8, 8}, 22, 0.0, 1.0);
    const auto g_cst = testing::gradcheck(
        codec.params(), [&] { return cst_loss(codec, discs, xs, xt, CstWeights{}, nullptr).total; }, 200, 5);

    ClassifierConfig cc;
    cc.num_classes = 4;
    cc.clip_len = 16;
    cc.height = 16;
    cc.width = 16;
    cc.seed = 2;
    Classifier clf(cc);
    const auto x = nn::constant(testing::random_tensor({1, 16, 3, 16, 16}, 31, 0.0, 1.0));
    const int label[] = {1};
    const auto g_ce = testing::gradcheck(
        clf.params(), [&] { return nn::softmax_cross_entropy(clf.forward(x), label); }, 80, 6);
    const bool fd = g_cst.relative_error() < 1e-3 && g_ce.relative_error() < 1e-3 && g_cst.kink_fraction() < 0.1 &&
                    g_ce.kink_fraction() < 0.1;

    // (b) separable factorisation vs the composed 3D kernel
    //     K[a][b][dt][dy][dx] = sum_m wt[a][m][dt] * ws[m][b][dy][dx]
    double conv_err = 0;
    const int c = 3, k = 3;
    const auto in = testing::random_tensor({2, 5, c, 7, 7}, 40);
    auto compare = [&](const Tensor& ws, const Tensor& wt) {
        const int out = ws.dim(0);
        std::vector<double> K(static_cast<std::size_t>(out) * c * k * k * k, 0.0);
        for (int a = 0; a < out; ++a)
            for (int b = 0; b < c; ++b)
                for (int dt = 0; dt < k; ++dt)
                    for (int dy = 0; dy < k; ++dy)
                        for (int dx = 0; dx < k; ++dx) {
                            double s = 0;
                            for (int m = 0; m < out; ++m)
                                s += wt.data[(static_cast<std::size_t>(a) * out + m) * k + dt] *
                                     ws.data[((static_cast<std::size_t>(m) * c + b) * k + dy) * k + dx];
                            K[(((static_cast<std::size_t>(a) * c + b) * k + dt) * k + dy) * k + dx] = s;
                        }
        for (int st : {1, 2})
            for (int s : {1, 2}) {
                SeparableBlockSpec spec{c, out, k, s, st, false, false};
                const auto y = separable_conv(nn::constant(in), nn::constant(ws), nn::constant(wt), spec);
                conv_err = std::max(conv_err, max_abs_diff(y->value, testing::conv3d_loops(in, K, out, k, k, st, s)));
            }
    };
    const int o4 = 4;
    Tensor wt_id({o4, o4, k});
    for (int i = 0; i < o4; ++i) wt_id.data[(static_cast<std::size_t>(i) * o4 + i) * k + k / 2] = 1.0;
    Tensor ws_id({c, c, k, k});
    for (int i = 0; i < c; ++i) ws_id.data[((static_cast<std::size_t>(i) * c + i) * k + k / 2) * k + k / 2] = 1.0;
    compare(testing::random_tensor({o4, c, k, k}, 41), wt_id);      // temporal factor identity
    compare(ws_id, testing::random_tensor({c, c, k}, 43));          // spatial factor identity
    compare(testing::random_tensor({o4, c, k, k}, 41), testing::random_tensor({o4, o4, k}, 42));

    // (c) top-1 vs a direct count, (d) one-vs-rest == top-1 for two classes
    Rng rng(99);
    bool top1 = true, ovr2 = true;
    for (int classes : {2, 4, 7, 16}) {
        std::vector<int> a(1000), p(1000);
        long hits = 0;
        for (std::size_t i = 0; i < a.size(); ++i) {
            a[i] = static_cast<int>(rng.below(static_cast<std::uint64_t>(classes)));
            p[i] = rng.uniform() < 0.4 ? a[i] : static_cast<int>(rng.below(static_cast<std::uint64_t>(classes)));
            hits += a[i] == p[i];
        }
        const auto cm = confusion(a, p, classes);
        top1 &= std::abs(accuracy(cm) - static_cast<double>(hits) / 1000.0) < 1e-12;
        if (classes == 2) ovr2 = std::abs(accuracy(cm, AccuracyMode::OvrMacro) - accuracy(cm)) < 1e-12;
    }

    Outcome o;
    o.pass = fd && conv_err < 1e-5 && top1 && ovr2;
    o.detail = "(a) cst_rel=" + fmt(g_cst.relative_error(), 3) + " ce_rel=" + fmt(g_ce.relative_error(), 3) +
               " kinks=" + fmt(g_cst.kink_fraction(), 2) + "/" + fmt(g_ce.kink_fraction(), 2) +
               " (b) conv_max_err=" + fmt(conv_err, 3) + " (c) top1=" + (top1 ? "ok" : "bad") +
               " (d) ovr2=" + (ovr2 ? "ok" : "bad");
    return o;
}

// ---------------------------------------------------------------- A7

nlohmann::json load_json(const fs::path& p) { return nlohmann::json::parse(read_file(p)); }

std::size_t data_rows(const fs::path& csv) {
    std::istringstream in(read_file(csv));
    std::size_t n = 0;
    for (std::string l; std::getline(in, l);) n += !l.empty();
    return n ? n - 1 : 0;
}

Outcome a7(const fs::path& work) {
    const fs::path data = fs::path(NM_SOURCE_DIR) / "data";
    const fs::path corpus = work / "a7_corpus";
    fs::remove_all(corpus);
    generate_synthetic_corpus(SynthSpec::from_json(load_json(data / "synth_toy.json")), 11, corpus);

    auto cfg = ExperimentConfig::from_json(load_json(data / "experiment_toy.json"));
    cfg.videos = corpus;
    cfg.annotations = corpus / "annotations.jsonl";
    cfg.baseline_annotations = corpus / "annotations_baseline.jsonl";
    cfg.baseline_overrides = corpus / "baseline_overrides.jsonl";
    cfg.output_root = work / "runs";
    cfg.run_name = "a7";
    fs::remove_all(cfg.output_root / cfg.run_name);

    std::ofstream log(work / "a7.log");
    const auto res = run_experiment_matrix(cfg, log);

    double v = 0, x = 0;
    int nv = 0, nx = 0, ok = 0;
    for (const auto& cell : res.cells) {
        if (!cell.ok()) continue;
        ++ok;
        if (cell.phi >= 4 && cell.phi <= 6) v += cell.test_accuracy, ++nv;
        if (cell.phi >= 7) x += cell.test_accuracy, ++nx;
    }
    const std::size_t expected_cells = cfg.cells.size() * cfg.seeds.size();
    bool timeline_csv = false, timeline_png = false;
    for (const auto& e : fs::directory_iterator(res.run_dir)) {
        const auto name = e.path().filename().string();
        if (name.rfind("timeline_", 0) != 0) continue;
        timeline_csv |= e.path().extension() == ".csv";
        timeline_png |= e.path().extension() == ".png";
    }
    const bool tables = fs::exists(res.run_dir / "table2.csv") && fs::exists(res.run_dir / "table3.csv") &&
                        data_rows(res.run_dir / "table2.csv") == 6 && data_rows(res.run_dir / "table3.csv") == 6;
    const double mean_v = nv ? v / nv : 0.0, mean_x = nx ? x / nx : 0.0;

    Outcome o;
    o.pass = ok == static_cast<int>(expected_cells) && res.cells.size() == expected_cells && tables && timeline_csv &&
             timeline_png && nv > 0 && nx > 0 && mean_x >= mean_v;
    o.detail = "cells_ok=" + std::to_string(ok) + "/" + std::to_string(expected_cells) + " tables=" +
               (tables ? "ok" : "bad") + " timeline=" + (timeline_csv && timeline_png ? "ok" : "missing") +
               " mean_V(phi4-6)=" + fmt(mean_v) + " mean_X(phi7-9)=" + fmt(mean_x) + " run=" + res.run_dir.string();
    return o;
}

// ---------------------------------------------------------------- A8

// Relative path -> bytes for every file under root.
std::map<std::string, std::string> tree(const fs::path& root) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(root))
        if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = read_file(e.path());
    return out;
}

std::vector<std::string> tree_diff(const std::map<std::string, std::string>& a,
                                   const std::map<std::string, std::string>& b) {
    std::vector<std::string> diff;
    for (const auto& [k, v] : a) {
        auto it = b.find(k);
        if (it == b.end() || it->second != v) diff.push_back(k);
    }
    for (const auto& [k, v] : b)
        if (!a.count(k)) diff.push_back(k);
    return diff;
}

Outcome a8(const fs::path& work) {
    const fs::path root = work / "a8";
    fs::remove_all(root);
    SynthSpec spec;
    spec.n_videos = 8;
    spec.n_classes = 3;
    spec.height = 16;
    spec.width = 16;
    generate_synthetic_corpus(spec, 5, root / "corpus1");
    generate_synthetic_corpus(spec, 5, root / "corpus2");
    const auto c1 = tree(root / "corpus1");
    const auto synth_diff = tree_diff(c1, tree(root / "corpus2"));

    auto run = [&](const std::string& where) {
        ExperimentConfig cfg;
        cfg.output_root = root / where;
        cfg.run_name = "det";
        cfg.videos = root / "corpus1";
        cfg.annotations = cfg.videos / "annotations.jsonl";
        cfg.baseline_annotations = cfg.videos / "annotations_baseline.jsonl";
        cfg.baseline_overrides = cfg.videos / "baseline_overrides.jsonl";
        cfg.height = 16;
        cfg.width = 16;
        cfg.cells = {1, 4, 7};
        cfg.train.epochs = 2;
        cfg.train.lr0 = 0.01;
        cfg.cst.steps = 5;
        cfg.timeline_phi = 7;
        cfg.timeline_stride = 8;
        std::ostringstream log;
        return run_experiment_matrix(cfg, log);
    };
    const auto r1 = run("out1");
    const auto r2 = run("out2");
    auto t1 = tree(r1.run_dir), t2 = tree(r2.run_dir);
    // the top-level config.json carries the output root; timing.csv holds wall-clock seconds
    std::size_t timing = 0;
    for (auto* t : {&t1, &t2}) {
        t->erase("config.json");
        for (auto it = t->begin(); it != t->end();) {
            const bool skip = fs::path(it->first).filename() == "timing.csv";
            timing += skip && t == &t1;
            it = skip ? t->erase(it) : std::next(it);
        }
    }
    const auto run_diff = tree_diff(t1, t2);
    std::size_t ckpts = 0, csvs = 0;
    for (const auto& [k, v] : t1) {
        ckpts += fs::path(k).extension() == ".ckpt";
        csvs += fs::path(k).extension() == ".csv";
    }

    Outcome o;
    o.pass = synth_diff.empty() && run_diff.empty() && r1.all_ok() && ckpts > 0 && csvs > 0;
    o.detail = "synth_files=" + std::to_string(c1.size()) + " differing=" + std::to_string(synth_diff.size()) +
               " run_files=" + std::to_string(t1.size()) + " (ckpt=" + std::to_string(ckpts) +
               " csv=" + std::to_string(csvs) + ", wall-clock timing files skipped=" + std::to_string(timing) + ") differing=" + std::to_string(run_diff.size());
    if (!run_diff.empty()) o.detail += " first=" + run_diff.front();
    if (!synth_diff.empty()) o.detail += " first=" + synth_diff.front();
    return o;
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<Criterion> all = {
        {"A1", 1, a1}, {"A2", 1, a2}, {"A3", 5, a3}, {"A4", 600, a4},
        {"A5", 600, a5}, {"A6", 0, a6}, {"A7", 2700, a7}, {"A8", 0, a8},
    };
    fs::path work = NM_ACCEPT_WORK;
    std::set<std::string> wanted;
    for (int i = 1; i < argc; ++i) {
        const std::string a = argv[i];
        if (a == "--work" && i + 1 < argc) {
            work = argv[++i];
        } else if (a == "-h" || a == "--help") {
            std::cout << "usage: acceptance [A1 .. A8] [--work DIR]\n";
            return 0;
        } else {
            wanted.insert(a);
        }
    }
    fs::create_directories(work);

    int failed = 0;
    for (const auto& c : all) {
        if (!wanted.empty() && !wanted.count(c.id)) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run(work);
        } catch (const std::exception& e) {
            o = {false, std::string("error: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (c.budget_s > 0 && secs > c.budget_s) {
            o.pass = false;
            o.detail += " over budget " + fmt(c.budget_s) + "s";
        }
        failed += !o.pass;
        std::printf("%s %s %.2fs %s\n", c.id.c_str(), o.pass ? "PASS" : "FAIL", secs, o.detail.c_str());
        std::fflush(stdout);
    }
    return failed ? 1 : 0;
}
