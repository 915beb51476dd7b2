#include <doctest.h>

#include <map>
#include <numeric>
#include <set>

#include <json.hpp>

#include "augment.hpp"
#include "dataset.hpp"
#include "error.hpp"
#include "split.hpp"
#include "support.hpp"
#include "synth.hpp"
#include "video.hpp"

using namespace nearmiss;

namespace {

VideoClip ramp_clip(int frames, int h, int w, std::uint64_t seed = 1) {
    VideoClip c;
    c.frames = frames;
    c.height = h;
    c.width = w;
    c.pixels.resize(static_cast<std::size_t>(frames) * h * w * 3);
    Rng rng(seed);
    for (auto& p : c.pixels) p = static_cast<float>(rng.uniform());
    c.clip_id = "ramp";
    c.source_video_id = "src";
    return c;
}

FrameSource meta_source(long frames, double fps) {
    FrameSource s;
    s.video_id = "m";
    s.frame_count = frames;
    s.fps = fps;
    return s;
}

TemporalWindow window(double t0, double t3, std::optional<double> t4, double t5) {
    TemporalWindow w;
    w.t0 = t0;
    w.t3 = t3;
    w.t4 = t4;
    w.t5 = t5;
    return w;
}

}  // namespace

TEST_SUITE("dataset") {

TEST_CASE("frame directory loads with declared metadata") {
    testing::TempDir dir("vid");
    const auto clip = ramp_clip(300, 8, 8);
    write_frames(dir / "v300", clip);
    const auto src = load_video(dir / "v300", 30.0);
    CHECK(src.frame_count == 300);
    CHECK(src.fps == 30.0);
    CHECK(src.height == 8);
    CHECK(src.width == 8);
    const auto back = src.read({10, 12}, 8, 8);
    CHECK(back.frames == 2);
    for (std::size_t i = 0; i < back.frame_size(); ++i)
        CHECK(std::abs(back.pixels[i] - clip.frame(10)[i]) <= 1.0f / 255.0f);
}

TEST_CASE("missing directory is an IO error") {
    try {
        load_video("/nonexistent/video_dir", 30.0);
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Io);
    }
}

TEST_CASE("synthetic corpus entries load with their manifest metadata") {
    testing::TempDir dir("syn");
    SynthSpec spec;
    spec.n_videos = 4;
    spec.height = 16;
    spec.width = 16;
    generate_synthetic_corpus(spec, 3, dir.path());
    const auto manifest = nlohmann::json::parse(testing::slurp(dir / "manifest.json"));
    for (const auto& v : manifest["videos"]) {
        const auto src = load_video(dir / v["video_id"].get<std::string>());
        CHECK(src.frame_count == v["frame_count"].get<long>());
        CHECK(src.fps == v["fps"].get<double>());
        CHECK(src.height == v["height"].get<int>());
        CHECK(src.width == v["width"].get<int>());
    }
}

TEST_CASE("incident clip ranges") {
    CHECK(extract_incident_clip(meta_source(600, 30), window(3.0, 8.0, 10.0, 20.0)) == FrameRange{90, 240});
    CHECK(extract_incident_clip(meta_source(600, 29.97), window(3.0, 8.0, 10.0, 20.0)) == FrameRange{89, 239});
    const auto src = meta_source(150, 30);
    CHECK(extract_incident_clip(src, window(0.0, 150 / 30.0, std::nullopt, 5.0)) == FrameRange{0, 150});
    CHECK_THROWS_AS(extract_incident_clip(src, window(3.0, 8.0, 10.0, 20.0)), Error);
}

TEST_CASE("normal clip ranges") {
    CHECK(extract_normal_clip(meta_source(600, 30), window(3.0, 10.0, 12.0, 20.0)) == FrameRange{360, 600});
    try {
        extract_normal_clip(meta_source(600, 30), window(3.0, 10.0, std::nullopt, 20.0));
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Validation);
    }
    // shorter than the smallest window: still a range, padding happens at sampling
    const auto r = extract_normal_clip(meta_source(600, 30), window(3.0, 10.0, 12.0, 12.2));
    CHECK(r.size() == 6);
    Rng rng(0);
    CHECK(window_indices(r.size(), 16, SamplePolicy::UniformStride, rng).size() == 16);
}

TEST_CASE("head, padding and uniform-stride windows") {
    Rng rng(0);
    const auto head = window_indices(150, 32, SamplePolicy::Head, rng);
    for (int k = 0; k < 32; ++k) CHECK(head[k] == k);

    const auto pad = window_indices(10, 16, SamplePolicy::Head, rng);
    for (int k = 0; k < 16; ++k) CHECK(pad[k] == std::min(k, 9));

    const auto uni = window_indices(150, 32, SamplePolicy::UniformStride, rng);
    CHECK(uni.front() == 0);
    CHECK(uni.back() == 149);
    for (int k = 0; k < 32; ++k) {
        CHECK(uni[k] == static_cast<int>(std::lround(k * 149.0 / 31.0)));
        if (k) CHECK(uni[k] > uni[k - 1]);
    }
}

TEST_CASE("random windows are contiguous and in range") {
    Rng rng(9);
    for (int trial = 0; trial < 200; ++trial) {
        const long n = 16 + static_cast<long>(rng.below(200));
        for (int len : {16, 32, 64}) {
            const auto idx = window_indices(n, len, SamplePolicy::Random, rng);
            REQUIRE(static_cast<int>(idx.size()) == len);
            CHECK(idx.back() < std::max<long>(n, 1));
            if (n >= len)
                for (int k = 1; k < len; ++k) CHECK(idx[k] == idx[k - 1] + 1);
        }
    }
    CHECK_THROWS_AS(window_indices(100, 20, SamplePolicy::Head, rng), Error);
    CHECK_THROWS_AS(window_indices(0, 16, SamplePolicy::Head, rng), Error);
}

TEST_CASE("sampled clips have exactly L frames") {
    const auto seg = ramp_clip(40, 4, 4);
    Rng rng(2);
    for (int len : {16, 32, 64})
        for (auto p : {SamplePolicy::Head, SamplePolicy::UniformStride, SamplePolicy::Random}) {
            const auto c = sample_window(seg, len, p, rng);
            CHECK(c.frames == len);
            CHECK(c.pixels.size() == static_cast<std::size_t>(len) * seg.frame_size());
        }
}

TEST_CASE("split sizes for independent mode") {
    std::vector<SplitItem> items;
    for (int i = 0; i < 100; ++i) items.push_back({"c" + std::to_string(i), "s" + std::to_string(i)});
    const auto s = split_dataset(items, SplitMode::Independent, 1);
    CHECK(s.train.size() == 70);
    CHECK(s.test.size() == 20);
    CHECK(s.validate.size() == 10);
}

TEST_CASE("grouped split keeps one source together") {
    std::vector<SplitItem> items;
    for (int i = 0; i < 10; ++i) items.push_back({"c" + std::to_string(i), "only"});
    const auto s = split_dataset(items, SplitMode::Grouped, 4);
    const std::size_t biggest = std::max({s.train.size(), s.test.size(), s.validate.size()});
    CHECK(biggest == 10);
}

TEST_CASE("split is deterministic and seed dependent") {
    std::vector<SplitItem> items;
    for (int i = 0; i < 30; ++i) items.push_back({"c" + std::to_string(i), "s" + std::to_string(i / 3)});
    for (auto mode : {SplitMode::Independent, SplitMode::Grouped}) {
        const auto a = split_dataset(items, mode, 11), b = split_dataset(items, mode, 11),
                   c = split_dataset(items, mode, 12);
        CHECK(a.train == b.train);
        CHECK(a.test == b.test);
        CHECK(a.validate == b.validate);
        CHECK((a.train != c.train || a.test != c.test));
    }
    CHECK_THROWS_AS(split_dataset({items[0], items[1]}, SplitMode::Grouped, 0), Error);
}

TEST_CASE("split partitions are disjoint and exhaustive") {
    Rng rng(77);
    for (int trial = 0; trial < 60; ++trial) {
        const int n = 3 + static_cast<int>(rng.below(120));
        std::vector<SplitItem> items;
        for (int i = 0; i < n; ++i)
            items.push_back({"c" + std::to_string(i), "s" + std::to_string(rng.below(static_cast<std::uint64_t>(n))),
                             static_cast<Provenance>(rng.below(3))});
        for (auto mode : {SplitMode::Independent, SplitMode::Grouped}) {
            const auto s = split_dataset(items, mode, rng.next());
            std::vector<int> seen(n, 0);
            std::map<std::string, std::set<int>> where;
            int part = 0;
            for (const auto* p : {&s.train, &s.test, &s.validate}) {
                for (auto i : *p) {
                    ++seen[i];
                    where[items[i].source_video_id].insert(part);
                }
                ++part;
            }
            for (int v : seen) CHECK(v == 1);
            if (mode == SplitMode::Grouped)
                for (const auto& [src, parts] : where) CHECK(parts.size() == 1);
        }
    }
}

TEST_CASE("augment identity and involution") {
    const auto clip = ramp_clip(4, 6, 5);
    Rng rng(3);
    const auto same = augment_frames(clip, AugmentConfig::none(), rng);
    CHECK(same.pixels == clip.pixels);

    AugmentConfig flip = AugmentConfig::none();
    flip.p_hflip = 1.0;
    const auto once = augment_frames(clip, flip, rng);
    CHECK(once.pixels != clip.pixels);
    for (int t = 0; t < clip.frames; ++t)
        for (int y = 0; y < clip.height; ++y)
            for (int x = 0; x < clip.width; ++x)
                for (int ch = 0; ch < 3; ++ch)
                    CHECK(once.frame(t)[(y * clip.width + x) * 3 + ch] ==
                          clip.frame(t)[(y * clip.width + (clip.width - 1 - x)) * 3 + ch]);
    CHECK(augment_frames(once, flip, rng).pixels == clip.pixels);
}

TEST_CASE("grayscale makes channels equal") {
    const auto clip = ramp_clip(3, 5, 5);
    AugmentConfig g = AugmentConfig::none();
    g.p_grayscale = 1.0;
    Rng rng(5);
    const auto out = augment_frames(clip, g, rng);
    for (std::size_t i = 0; i < out.pixels.size(); i += 3) {
        CHECK(out.pixels[i] == out.pixels[i + 1]);
        CHECK(out.pixels[i + 1] == out.pixels[i + 2]);
        const double luma = 0.299 * clip.pixels[i] + 0.587 * clip.pixels[i + 1] + 0.114 * clip.pixels[i + 2];
        CHECK(std::abs(out.pixels[i] - luma) < 1e-5);
    }
}

TEST_CASE("augmentation draws once per clip") {
    const auto clip = ramp_clip(6, 8, 8);
    AugmentConfig cfg;
    cfg.p_autocontrast = 0.0;
    cfg.p_grayscale = 0.0;
    cfg.p_hflip = 0.0;
    cfg.p_perspective = 1.0;
    cfg.distortion_scale = 0.3;
    Rng a(8), b(8);
    const auto x = augment_frames(clip, cfg, a);
    // every frame went through the same warp; four decisions precede the corners
    for (int i = 0; i < 4; ++i) b.uniform();
    const auto corners = draw_perspective(clip.height, clip.width, cfg.distortion_scale, b);
    auto y = clip;
    warp_perspective(y, corners);
    CHECK(x.pixels == y.pixels);
    for (auto& p : x.pixels) {
        CHECK(p >= 0.0f);
        CHECK(p <= 1.0f);
    }
}

TEST_CASE("synthetic corpus plan") {
    SynthSpec spec;
    spec.n_videos = 8;
    spec.n_classes = 4;
    const auto c = plan_synthetic_corpus(spec, 7);
    const auto recs = c.annotations();
    REQUIRE(recs.size() == 8);
    std::map<int, int> per_class;
    for (const auto& r : recs) {
        CHECK(validate_record(r).clean());
        REQUIRE(r.window.t4);
        CHECK(std::abs(*r.window.t4 - r.window.t3 - 2.0) <= 1e-9);
        ++per_class[r.class16];
    }
    CHECK(per_class.size() == 4);
    for (const auto& [k, n] : per_class) CHECK(n == 2);

    CHECK(plan_synthetic_corpus(spec, 7).manifest().dump() == c.manifest().dump());
    spec.n_videos = 0;
    CHECK_THROWS_AS(plan_synthetic_corpus(spec, 7), Error);
}

TEST_CASE("synthetic corpus on disk is byte-stable") {
    testing::TempDir a("syna"), b("synb");
    SynthSpec spec;
    spec.n_videos = 3;
    spec.height = 16;
    spec.width = 16;
    generate_synthetic_corpus(spec, 7, a.path());
    generate_synthetic_corpus(spec, 7, b.path());
    for (const char* f : {"manifest.json", "annotations.jsonl", "annotations_baseline.jsonl"})
        CHECK(testing::slurp(a / f) == testing::slurp(b / f));
    const auto first = std::filesystem::directory_iterator(a / "syn_0000")->path().filename();
    CHECK(testing::slurp(a / "syn_0000" / first.string()) == testing::slurp(b / "syn_0000" / first.string()));
}

TEST_CASE("segments, clip sets and split files") {
    testing::TempDir dir("seg");
    SynthSpec spec;
    spec.n_videos = 6;
    spec.n_classes = 3;
    spec.height = 16;
    spec.width = 16;
    spec.video_game_videos = 1;
    const auto corpus = generate_synthetic_corpus(spec, 2, dir / "corpus");
    auto records = corpus.annotations();
    records.push_back(records.front());
    records.back().video_id = "missing_video";
    SegmentOptions opt;
    opt.height = 8;
    opt.width = 8;
    const auto set = build_segments(records, dir / "corpus", opt);
    CHECK(set.segments.size() == 12);
    CHECK(set.skipped.size() == 1);
    int normals = 0;
    for (const auto& s : set.segments) {
        CHECK(s.height == 8);
        if (s.label == 3) ++normals;
    }
    CHECK(normals == 6);

    save_clip_set(dir / "clips", set.segments);
    const auto back = load_clip_set(dir / "clips");
    REQUIRE(back.size() == set.segments.size());
    for (std::size_t i = 0; i < back.size(); ++i) {
        CHECK(back[i].clip_id == set.segments[i].clip_id);
        CHECK(back[i].label == set.segments[i].label);
        CHECK(back[i].frames == set.segments[i].frames);
        CHECK(back[i].domain == set.segments[i].domain);
    }

    std::vector<SplitItem> items;
    for (const auto& c : back) items.push_back({c.clip_id, c.source_video_id, c.provenance});
    const auto split = split_dataset(items, SplitMode::Grouped, 0);
    save_split(dir / "clips", back, split);
    const auto parts = load_split(dir / "clips");
    CHECK(select_partition(back, parts, "train").size() == split.train.size());
    CHECK(select_partition(back, parts, "test").size() == split.test.size());
    CHECK_THROWS_AS(select_partition(back, parts, "bogus"), Error);
}

}
