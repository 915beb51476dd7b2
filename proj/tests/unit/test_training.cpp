#include <doctest.h>

#include <cmath>
#include <limits>

#include "error.hpp"
#include "training.hpp"

using namespace nearmiss;
using nn::Tensor;

namespace {

VideoClip labelled_clip(int label, int frames, int size, std::uint64_t seed) {
    VideoClip c;
    c.frames = frames;
    c.height = size;
    c.width = size;
    c.label = label;
    c.clip_id = "c" + std::to_string(seed);
    c.source_video_id = c.clip_id;
    c.pixels.resize(static_cast<std::size_t>(frames) * size * size * 3);
    Rng rng(seed);
    for (std::size_t i = 0; i < c.pixels.size(); ++i)
        c.pixels[i] = static_cast<float>(0.5 * rng.uniform() + (i % 3 == static_cast<std::size_t>(label % 3) ? 0.4 : 0.0));
    return c;
}

ClassifierConfig small_toy(std::uint64_t seed = 0) {
    ClassifierConfig c;
    c.num_classes = 4;
    c.clip_len = 16;
    c.height = 16;
    c.width = 16;
    c.seed = seed;
    return c;
}

std::vector<Tensor> values(const nn::ParamSet& ps) {
    std::vector<Tensor> v;
    for (const auto& p : ps.all()) v.push_back(p.var->value);
    return v;
}

}  // namespace

TEST_SUITE("training") {

TEST_CASE("milestone schedule") {
    TrainConfig cfg;
    CHECK(cfg.lr0 == 0.1);
    CHECK(cfg.milestones == std::vector<int>{30, 50});
    CHECK(lr_at(0, cfg) == doctest::Approx(0.1));
    CHECK(lr_at(29, cfg) == doctest::Approx(0.1));
    CHECK(lr_at(30, cfg) == doctest::Approx(0.01));
    CHECK(lr_at(59, cfg) == doctest::Approx(0.001));
    double prev = lr_at(0, cfg);
    for (int e = 1; e < cfg.epochs; ++e) {
        CHECK(lr_at(e, cfg) <= prev);
        prev = lr_at(e, cfg);
    }
}

TEST_CASE("default recipe") {
    const TrainConfig cfg;
    CHECK(cfg.batch_size == 2);
    CHECK(cfg.momentum == 0.9);
    CHECK(cfg.weight_decay == 1e-7);
    CHECK(cfg.epochs == 60);
    CHECK(cfg.lr_decay_factor == 10.0);
}

TEST_CASE("invalid configs are usage errors") {
    TrainConfig cfg;
    cfg.epochs = 0;
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg = TrainConfig{};
    cfg.clip_len = 20;
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg = TrainConfig{};
    cfg.batch_size = 0;
    CHECK_THROWS_AS(cfg.validate(), Error);
    const auto j = TrainConfig{}.to_json();
    CHECK(TrainConfig::from_json(j).to_json() == j);
}

TEST_CASE("one momentum step on a scalar") {
    nn::ParamSet ps;
    auto p = ps.add("p", Tensor({1}, 1.0));
    p->grad = Tensor({1}, 1.0);
    SgdState st;
    sgd_step(ps, 0.1, 0.9, 0.0, st);
    CHECK(p->value.data[0] == doctest::Approx(0.9));
    CHECK(st.velocity[0][0] == doctest::Approx(1.0));
}

TEST_CASE("two steps follow the momentum recurrence") {
    const double lr = 0.05, m = 0.9, wd = 0.01, g = 0.3, p0 = 2.0;
    nn::ParamSet ps;
    auto p = ps.add("p", Tensor({1}, p0));
    SgdState st;
    p->grad = Tensor({1}, g);
    sgd_step(ps, lr, m, wd, st);
    sgd_step(ps, lr, m, wd, st);
    const double v1 = g + wd * p0;
    const double p1 = p0 - lr * v1;
    const double v2 = m * v1 + g + wd * p1;
    const double p2 = p1 - lr * v2;
    CHECK(p->value.data[0] == doctest::Approx(p2).epsilon(1e-14));
    CHECK(st.velocity[0][0] == doctest::Approx(v2).epsilon(1e-14));
}

TEST_CASE("zero gradient, zero velocity and zero decay change nothing") {
    nn::ParamSet ps;
    auto p = ps.add("p", Tensor({3}, std::vector<double>{1.0, -2.0, 3.0}));
    p->grad = Tensor({3}, 0.0);
    SgdState st;
    sgd_step(ps, 0.1, 0.9, 0.0, st);
    CHECK(p->value.data == std::vector<double>{1.0, -2.0, 3.0});
    p->grad = Tensor({3}, 5.0);
    sgd_step(ps, 0.0, 0.9, 1e-7, st);
    CHECK(p->value.data == std::vector<double>{1.0, -2.0, 3.0});
}

TEST_CASE("a NaN gradient aborts before any update") {
    nn::ParamSet ps;
    auto a = ps.add("a", Tensor({1}, 1.0));
    auto b = ps.add("b", Tensor({1}, 1.0));
    a->grad = Tensor({1}, 1.0);
    b->grad = Tensor({1}, std::numeric_limits<double>::quiet_NaN());
    SgdState st;
    try {
        sgd_step(ps, 0.1, 0.9, 0.0, st);
        FAIL("expected numeric error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Numeric);
    }
    CHECK(a->value.data[0] == 1.0);
}

TEST_CASE("zero learning rate keeps parameters and logs one epoch") {
    Classifier clf(small_toy(1));
    const auto before = values(clf.params());
    const std::vector<VideoClip> train = {labelled_clip(0, 20, 16, 1), labelled_clip(1, 20, 16, 2)};
    TrainConfig cfg;
    cfg.epochs = 1;
    cfg.lr0 = 0.0;
    const auto res = train_classifier(clf, train, {}, cfg, "phi0");
    CHECK(res.log.epochs.size() == 1);
    CHECK(values(clf.params()) == before);
    CHECK_FALSE(res.diverged);
}

TEST_CASE("same config and seed give the same run") {
    const std::vector<VideoClip> train = {labelled_clip(0, 20, 16, 1), labelled_clip(1, 20, 16, 2),
                                          labelled_clip(2, 20, 16, 3)};
    const std::vector<VideoClip> val = {labelled_clip(0, 16, 16, 4), labelled_clip(2, 16, 16, 5)};
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.lr0 = 0.01;
    cfg.seed = 5;
    Classifier a(small_toy(2)), b(small_toy(2));
    const auto ra = train_classifier(a, train, val, cfg, "phi1");
    const auto rb = train_classifier(b, train, val, cfg, "phi1");
    CHECK(runlog_csv(ra.log) == runlog_csv(rb.log));
    CHECK(values(a.params()) == values(b.params()));
    CHECK(ra.log.epochs.size() == 3);
    CHECK(runlog_csv(ra.log).rfind("model,epoch,lr,train_loss", 0) == 0);
}

TEST_CASE("empty training set is rejected") {
    Classifier clf(small_toy());
    CHECK_THROWS_AS(train_classifier(clf, {}, {}, TrainConfig{}), Error);
}

TEST_CASE("loss on a fixed batch falls over ten small steps") {
    const std::vector<VideoClip> batch = {labelled_clip(0, 16, 16, 11), labelled_clip(3, 16, 16, 12)};
    const auto x = nn::constant(clips_to_tensor(batch));
    const int labels[] = {0, 3};
    double first = 0, last = 0;
    for (std::uint64_t seed : {0, 1, 2}) {
        Classifier clf(small_toy(seed));
        SgdState st;
        for (int step = 0; step < 10; ++step) {
            clf.params().zero_grad();
            auto loss = nn::softmax_cross_entropy(clf.forward(x), labels);
            if (step == 0) first += loss->value.data[0];
            if (step == 9) last += loss->value.data[0];
            nn::backward(loss);
            sgd_step(clf.params(), 1e-2, 0.9, 1e-7, st);
        }
    }
    CHECK(last < first);
}

TEST_CASE("evaluation windows are uniform-stride and fixed length") {
    const std::vector<VideoClip> segs = {labelled_clip(1, 40, 8, 1), labelled_clip(2, 10, 8, 2)};
    const auto w = eval_windows(segs, 16);
    REQUIRE(w.size() == 2);
    for (const auto& c : w) CHECK(c.frames == 16);
    CHECK(w[0].label == 1);
    CHECK(w[1].label == 2);
}

}  // TEST_SUITE
