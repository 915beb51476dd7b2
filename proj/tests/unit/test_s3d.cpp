#include <doctest.h>

#include <cmath>

#include "error.hpp"
#include "oracles.hpp"
#include "s3d.hpp"
#include "support.hpp"

using namespace nearmiss;
using nn::Tensor;

namespace {

ClassifierConfig toy(int classes, int len, int size, std::uint64_t seed = 0) {
    ClassifierConfig c;
    c.num_classes = classes;
    c.clip_len = len;
    c.height = size;
    c.width = size;
    c.seed = seed;
    return c;
}

VideoClip noise_clip(int frames, int size, std::uint64_t seed) {
    VideoClip c;
    c.frames = frames;
    c.height = size;
    c.width = size;
    c.pixels.resize(static_cast<std::size_t>(frames) * size * size * 3);
    Rng rng(seed);
    for (auto& p : c.pixels) p = static_cast<float>(rng.uniform());
    return c;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    REQUIRE(a.shape == b.shape);
    double m = 0;
    for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a.data[i] - b.data[i]));
    return m;
}

}  // namespace

TEST_SUITE("s3d") {

TEST_CASE("toy forward maps a clip batch to class scores") {
    Classifier clf(toy(16, 32, 64));
    const auto x = nn::constant(testing::random_tensor({2, 32, 3, 64, 64}, 1, 0.0, 1.0));
    const auto y = clf.forward(x);
    CHECK(y->value.shape == nn::Shape{2, 16});
    for (double v : y->value.data) CHECK(std::isfinite(v));
    CHECK(Classifier(toy(4, 16, 32)).params().find("head.w")->value.dim(0) == 4);
}

TEST_CASE("wrong input contract is a shape error") {
    Classifier clf(toy(4, 16, 16));
    try {
        clf.forward(nn::constant(Tensor({1, 8, 3, 16, 16})));
        FAIL("expected shape error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Shape);
    }
}

TEST_CASE("toy parameter count matches an independent tally") {
    const int widths[] = {3, 16, 32, 64, 96};
    for (int classes : {4, 7, 16}) {
        std::size_t expect = 0;
        for (int i = 0; i < 4; ++i) {
            const std::size_t in = widths[i], out = widths[i + 1];
            expect += out * in * 9 + 2 * out;  // (1,3,3) weights, norm affine
            expect += out * out * 3 + 2 * out;  // (3,1,1) weights, norm affine
        }
        expect += 96 * classes + classes;
        Classifier clf(toy(classes, 16, 64));
        CHECK(clf.parameter_count() == expect);
        CHECK(clf.parameter_count() <= 200000);
    }
}

TEST_CASE("separable convolution equals a direct 3D convolution with one identity factor") {
    const int c = 3, o = 4, k = 3;
    const auto x = testing::random_tensor({2, 5, c, 6, 6}, 7);
    for (int stride : {1, 2}) {
        CAPTURE(stride);
        SeparableBlockSpec spec{c, o, k, stride, stride, false, false};

        // temporal identity: K[o][c][dt][dy][dx] = ws[o][c][dy][dx] at dt = centre
        {
            const auto ws = testing::random_tensor({o, c, k, k}, 8);
            Tensor wt({o, o, k});
            for (int i = 0; i < o; ++i) wt.data[(static_cast<std::size_t>(i) * o + i) * k + k / 2] = 1.0;
            std::vector<double> K(static_cast<std::size_t>(o) * c * k * k * k, 0.0);
            for (int a = 0; a < o; ++a)
                for (int b = 0; b < c; ++b)
                    for (int dy = 0; dy < k; ++dy)
                        for (int dx = 0; dx < k; ++dx)
                            K[((((static_cast<std::size_t>(a) * c + b) * k + k / 2) * k + dy) * k) + dx] =
                                ws.data[((static_cast<std::size_t>(a) * c + b) * k + dy) * k + dx];
            const auto y = separable_conv(nn::constant(x), nn::constant(ws), nn::constant(wt), spec);
            CHECK(max_abs_diff(y->value, testing::conv3d_loops(x, K, o, k, k, stride, stride)) < 1e-5);
        }
        // spatial identity (c == in channels mapped onto the first c outputs)
        {
            SeparableBlockSpec sp{c, c, k, stride, stride, false, false};
            Tensor ws({c, c, k, k});
            for (int i = 0; i < c; ++i) ws.data[((static_cast<std::size_t>(i) * c + i) * k + k / 2) * k + k / 2] = 1.0;
            const auto wt = testing::random_tensor({c, c, k}, 9);
            std::vector<double> K(static_cast<std::size_t>(c) * c * k * k * k, 0.0);
            for (int a = 0; a < c; ++a)
                for (int b = 0; b < c; ++b)
                    for (int dt = 0; dt < k; ++dt)
                        K[((((static_cast<std::size_t>(a) * c + b) * k + dt) * k + k / 2) * k) + k / 2] =
                            wt.data[(static_cast<std::size_t>(a) * c + b) * k + dt];
            const auto y = separable_conv(nn::constant(x), nn::constant(ws), nn::constant(wt), sp);
            CHECK(max_abs_diff(y->value, testing::conv3d_loops(x, K, c, k, k, stride, stride)) < 1e-5);
        }
    }
}

TEST_CASE("softmax and tie-breaking of predictions") {
    const double logits[] = {0, 0, 5, 0};
    const auto p = prediction_from_logits(logits);
    CHECK(p.class_id == 2);
    CHECK(p.probs[0] == doctest::Approx(0.0066).epsilon(0.01));
    CHECK(p.probs[2] == doctest::Approx(0.980).epsilon(0.001));
    const double flat[] = {1.5, 1.5, 1.5};
    CHECK(prediction_from_logits(flat).class_id == 0);
    const double tail[] = {0.0, 2.0, 2.0};
    CHECK(argmax_lowest(tail) == 1);
    const double shifted[] = {100.0, 100.0, 105.0, 100.0};
    CHECK(prediction_from_logits(shifted).class_id == 2);
}

TEST_CASE("identical clips in a batch score identically") {
    Classifier clf(toy(4, 16, 16, 3));
    const auto clip = noise_clip(16, 16, 5);
    const std::vector<VideoClip> batch = {clip, clip, clip};
    const auto preds = predict_batch(clf, batch);
    REQUIRE(preds.size() == 3);
    CHECK(preds[0].probs == preds[1].probs);
    CHECK(preds[1].probs == preds[2].probs);
    CHECK(predict(clf, clip).probs == preds[0].probs);
}

TEST_CASE("save then load reproduces logits bit for bit") {
    testing::TempDir dir("s3d");
    Classifier clf(toy(7, 16, 16, 11));
    const auto path = (dir / "m.ckpt").string();
    save_classifier(path, clf);
    const auto back = load_classifier(path);
    CHECK(back.config().num_classes == 7);
    const auto clip = noise_clip(16, 16, 6);
    const VideoClip* one[] = {&clip};
    CHECK(logits(back, one) == logits(clf, one));
}

TEST_CASE("pretrained backbone keeps features and re-initialises the head") {
    testing::TempDir dir("s3d");
    Classifier big(toy(400, 16, 16, 1));
    const auto path = (dir / "k400.ckpt").string();
    save_classifier(path, big);

    Classifier clf(toy(16, 16, 16, 2));
    load_pretrained_backbone(clf, path);
    CHECK(clf.params().find("head.w")->value.shape == nn::Shape{16, 96});
    for (const auto& p : clf.params().all()) {
        if (p.name.rfind("head.", 0) == 0) continue;
        CHECK(p.var->value == big.params().find(p.name)->value);
    }
    CHECK(clf.params().find("head.w")->value == Classifier(toy(16, 16, 16, 2)).params().find("head.w")->value);
}

TEST_CASE("incompatible or corrupted checkpoints are load errors") {
    testing::TempDir dir("s3d");
    ClassifierConfig pi = toy(4, 16, 32);
    pi.preset = "paper-ish";
    pi.width_divisor = 16;
    save_classifier((dir / "narrow.ckpt").string(), Classifier(pi));
    pi.width_divisor = 8;
    Classifier wide(pi);
    try {
        load_pretrained_backbone(wide, (dir / "narrow.ckpt").string());
        FAIL("expected load error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Load);
        CHECK(std::string(e.what()).find("shape:") != std::string::npos);
    }
    Classifier small(toy(4, 16, 32));
    CHECK_THROWS_AS(load_pretrained_backbone(small, (dir / "narrow.ckpt").string()), Error);

    save_classifier((dir / "ok.ckpt").string(), small);
    auto bytes = testing::slurp(dir / "ok.ckpt");
    bytes[bytes.size() / 2] ^= 0x5a;
    testing::spit(dir / "flip.ckpt", bytes);
    testing::spit(dir / "cut.ckpt", bytes.substr(0, bytes.size() / 3));
    for (const char* name : {"flip.ckpt", "cut.ckpt"}) {
        try {
            load_classifier((dir / name).string());
            FAIL("expected load error");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::Load);
        }
    }
}

}  // TEST_SUITE
