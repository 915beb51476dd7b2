#include "s3d.hpp"

#include <algorithm>
#include <cmath>

#include "checkpoint.hpp"
#include "error.hpp"

namespace nearmiss {

using nn::Tensor;
using nn::Var;

namespace {

// Input normalisation applied to [0,1] pixels.
constexpr double kPixelMean = 0.45;
constexpr double kPixelStd = 0.225;

// Inception widths (b0, b1 reduce, b1, b2 reduce, b2, pool proj) at full scale.
const std::vector<std::pair<std::string, std::array<int, 6>>> kInception3 = {
    {"mixed_3b", {64, 96, 128, 16, 32, 32}},
    {"mixed_3c", {128, 128, 192, 32, 96, 64}},
};
const std::vector<std::pair<std::string, std::array<int, 6>>> kInception4 = {
    {"mixed_4b", {192, 96, 208, 16, 48, 64}},   {"mixed_4c", {160, 112, 224, 24, 64, 64}},
    {"mixed_4d", {128, 128, 256, 24, 64, 64}},  {"mixed_4e", {112, 144, 288, 32, 64, 64}},
    {"mixed_4f", {256, 160, 320, 32, 128, 128}},
};
const std::vector<std::pair<std::string, std::array<int, 6>>> kInception5 = {
    {"mixed_5b", {256, 160, 320, 32, 128, 128}},
    {"mixed_5c", {384, 192, 384, 48, 128, 128}},
};

int reduced(int c, int divisor) { return std::max(2, (c + divisor - 1) / divisor); }

void check_finite(const Tensor& t, const char* what) {
    for (double v : t.data)
        if (!std::isfinite(v)) fail(ErrorKind::Numeric, std::string(what) + ": non-finite value");
}

}  // namespace

void ClassifierConfig::validate() const {
    if (num_classes < 2) fail(ErrorKind::Usage, "classifier needs at least 2 classes");
    if (!valid_clip_length(clip_len)) fail(ErrorKind::Usage, "clip_len must be 16, 32 or 64");
    if (preset != "toy" && preset != "paper-ish") fail(ErrorKind::Usage, "unknown classifier preset '" + preset + "'");
    if (height < 8 || width < 8) fail(ErrorKind::Usage, "classifier input must be at least 8x8");
    if (width_divisor < 1) fail(ErrorKind::Usage, "width_divisor must be >= 1");
}

nlohmann::ordered_json ClassifierConfig::to_json() const {
    return {{"preset", preset}, {"num_classes", num_classes}, {"clip_len", clip_len}, {"height", height},
            {"width", width},   {"width_divisor", width_divisor}, {"seed", seed}};
}

ClassifierConfig ClassifierConfig::from_json(const nlohmann::json& j) {
    ClassifierConfig c;
    c.preset = j.value("preset", c.preset);
    c.num_classes = j.value("num_classes", c.num_classes);
    c.clip_len = j.value("clip_len", c.clip_len);
    c.height = j.value("height", c.height);
    c.width = j.value("width", c.width);
    c.width_divisor = j.value("width_divisor", c.width_divisor);
    c.seed = j.value("seed", c.seed);
    return c;
}

std::vector<SeparableBlockSpec> toy_blocks() {
    return {
        {3, 16, 3, 2, 1, true, true},
        {16, 32, 3, 2, 2, true, true},
        {32, 64, 3, 2, 2, true, true},
        {64, 96, 3, 2, 2, true, true},
    };
}

int norm_groups(int channels) {
    for (int g : {4, 2})
        if (channels % g == 0) return g;
    return 1;
}

void Classifier::add_block(const std::string& name, const SeparableBlockSpec& s, Rng& rng) {
    const int k = s.kernel;
    params_.add(name + ".s.w", nn::he_normal({s.out_channels, s.in_channels, k, k}, s.in_channels * k * k, rng));
    if (s.norm) {
        params_.add(name + ".s.gamma", Tensor({s.out_channels}, 1.0));
        params_.add(name + ".s.beta", Tensor({s.out_channels}, 0.0));
    } else {
        params_.add(name + ".s.b", Tensor({s.out_channels}, 0.0));
    }
    params_.add(name + ".t.w", nn::he_normal({s.out_channels, s.out_channels, k}, s.out_channels * k, rng));
    if (s.norm) {
        params_.add(name + ".t.gamma", Tensor({s.out_channels}, 1.0));
        params_.add(name + ".t.beta", Tensor({s.out_channels}, 0.0));
    } else {
        params_.add(name + ".t.b", Tensor({s.out_channels}, 0.0));
    }
}

void Classifier::add_unit(const std::string& name, int in, int out, Rng& rng) {
    params_.add(name + ".w", nn::he_normal({out, in, 1, 1}, in, rng));
    params_.add(name + ".gamma", Tensor({out}, 1.0));
    params_.add(name + ".beta", Tensor({out}, 0.0));
}

int Classifier::add_inception(const std::string& name, int in, const std::array<int, 6>& w, Rng& rng) {
    add_unit(name + ".b0", in, w[0], rng);
    add_unit(name + ".b1a", in, w[1], rng);
    add_block(name + ".b1b", {w[1], w[2], 3, 1, 1, true, true}, rng);
    add_unit(name + ".b2a", in, w[3], rng);
    add_block(name + ".b2b", {w[3], w[4], 3, 1, 1, true, true}, rng);
    add_unit(name + ".b3", in, w[5], rng);
    inception_widths_.push_back(w);
    return w[0] + w[2] + w[4] + w[5];
}

Classifier::Classifier(const ClassifierConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(mix_seed(cfg.seed, "classifier"));
    if (cfg.preset == "toy") {
        blocks_ = toy_blocks();
        for (std::size_t i = 0; i < blocks_.size(); ++i) add_block("block" + std::to_string(i), blocks_[i], rng);
        feature_channels_ = blocks_.back().out_channels;
    } else {
        const int d = cfg.width_divisor;
        const int c1 = reduced(64, d), c3 = reduced(192, d);
        blocks_ = {{3, c1, 7, 2, 2, true, true}, {c1, c3, 3, 1, 1, true, true}};
        add_block("conv1", blocks_[0], rng);
        add_unit("conv2", c1, c1, rng);
        add_block("conv3", blocks_[1], rng);
        int ch = c3;
        for (const auto* group : {&kInception3, &kInception4, &kInception5})
            for (const auto& [name, full] : *group) {
                std::array<int, 6> w;
                for (int i = 0; i < 6; ++i) w[i] = reduced(full[i], d);
                ch = add_inception(name, ch, w, rng);
            }
        feature_channels_ = ch;
    }
    reset_head(cfg.seed);
}

void Classifier::reset_head(std::uint64_t seed) {
    Rng rng(mix_seed(seed, "classifier-head"));
    auto w = nn::he_normal({cfg_.num_classes, feature_channels_}, feature_channels_, rng, 0.01);
    Tensor b({cfg_.num_classes}, 0.0);
    if (auto hw = params_.find("head.w")) {
        hw->value = std::move(w);
        params_.find("head.b")->value = std::move(b);
    } else {
        params_.add("head.w", std::move(w));
        params_.add("head.b", std::move(b));
    }
}

Var separable_conv(const Var& x, const Var& ws, const Var& wt, const SeparableBlockSpec& s) {
    auto h = nn::conv_spatial(x, ws, nullptr, s.spatial_stride, s.kernel / 2);
    return nn::conv_temporal(h, wt, nullptr, s.temporal_stride, s.kernel / 2);
}

Var Classifier::block(const std::string& name, const SeparableBlockSpec& s, const Var& x) const {
    auto stage = [&](const std::string& part, Var h) {
        if (s.norm) h = nn::group_norm(h, params_.find(part + ".gamma"), params_.find(part + ".beta"),
                                       norm_groups(s.out_channels));
        return s.relu ? nn::relu(h) : h;
    };
    auto bias = [&](const std::string& part) { return s.norm ? nullptr : params_.find(part + ".b"); };
    auto h = nn::conv_spatial(x, params_.find(name + ".s.w"), bias(name + ".s"), s.spatial_stride, s.kernel / 2);
    h = stage(name + ".s", h);
    h = nn::conv_temporal(h, params_.find(name + ".t.w"), bias(name + ".t"), s.temporal_stride, s.kernel / 2);
    return stage(name + ".t", h);
}

Var Classifier::unit(const std::string& name, const Var& x, int, int) const {
    const auto w = params_.find(name + ".w");
    auto h = nn::conv_spatial(x, w, nullptr, 1, 0);
    h = nn::group_norm(h, params_.find(name + ".gamma"), params_.find(name + ".beta"), norm_groups(w->value.dim(0)));
    return nn::relu(h);
}

Var Classifier::inception(const std::string& name, const Var& x) const {
    auto b0 = unit(name + ".b0", x, 1, 1);
    auto b1a = unit(name + ".b1a", x, 1, 1);
    const int c1a = b1a->value.dim(2);
    auto b1 = block(name + ".b1b", {c1a, params_.find(name + ".b1b.s.w")->value.dim(0), 3, 1, 1, true, true}, b1a);
    auto b2a = unit(name + ".b2a", x, 1, 1);
    const int c2a = b2a->value.dim(2);
    auto b2 = block(name + ".b2b", {c2a, params_.find(name + ".b2b.s.w")->value.dim(0), 3, 1, 1, true, true}, b2a);
    auto b3 = unit(name + ".b3", nn::max_pool3d(x, 3, 3, 1, 1), 1, 1);
    return nn::concat_channels({b0, b1, b2, b3});
}

Var Classifier::forward(const Var& x) const {
    const auto& s = x->value.shape;
    if (s.size() != 5 || s[1] != cfg_.clip_len || s[2] != 3 || s[3] != cfg_.height || s[4] != cfg_.width)
        fail(ErrorKind::Shape, "classifier input " + nn::shape_str(s) + " does not match contract (N," +
                                   std::to_string(cfg_.clip_len) + ",3," + std::to_string(cfg_.height) + "," +
                                   std::to_string(cfg_.width) + ")");
    Var h = x;
    if (cfg_.preset == "toy") {
        for (std::size_t i = 0; i < blocks_.size(); ++i) h = block("block" + std::to_string(i), blocks_[i], h);
    } else {
        h = block("conv1", blocks_[0], h);
        h = nn::max_pool3d(h, 1, 3, 1, 2);
        h = unit("conv2", h, 1, 1);
        h = block("conv3", blocks_[1], h);
        h = nn::max_pool3d(h, 1, 3, 1, 2);
        for (const auto& [name, w] : kInception3) h = inception(name, h);
        h = nn::max_pool3d(h, 3, 3, 2, 2);
        for (const auto& [name, w] : kInception4) h = inception(name, h);
        h = nn::max_pool3d(h, 2, 2, 2, 2);
        for (const auto& [name, w] : kInception5) h = inception(name, h);
    }
    return nn::linear(nn::global_avg_pool(h), params_.find("head.w"), params_.find("head.b"));
}

Tensor clips_to_tensor(std::span<const VideoClip* const> clips) {
    if (clips.empty()) fail(ErrorKind::Shape, "empty clip batch");
    const auto& first = *clips.front();
    const int t = first.frames, h = first.height, w = first.width;
    Tensor out({static_cast<int>(clips.size()), t, 3, h, w});
    const std::size_t hw = static_cast<std::size_t>(h) * w;
    for (std::size_t n = 0; n < clips.size(); ++n) {
        const auto& c = *clips[n];
        if (c.frames != t || c.height != h || c.width != w)
            fail(ErrorKind::Shape, "clip '" + c.clip_id + "' shape differs from the rest of the batch");
        for (int f = 0; f < t; ++f) {
            const float* src = c.frame(f);
            double* dst = out.ptr() + (n * t + f) * 3 * hw;
            for (std::size_t p = 0; p < hw; ++p)
                for (int ch = 0; ch < 3; ++ch) dst[ch * hw + p] = (src[p * 3 + ch] - kPixelMean) / kPixelStd;
        }
    }
    return out;
}

Tensor clips_to_tensor(const std::vector<VideoClip>& clips) {
    std::vector<const VideoClip*> ptrs;
    for (const auto& c : clips) ptrs.push_back(&c);
    return clips_to_tensor(ptrs);
}

Tensor logits(const Classifier& clf, std::span<const VideoClip* const> clips) {
    nn::NoGradGuard guard;
    auto out = clf.forward(nn::constant(clips_to_tensor(clips)))->value;
    check_finite(out, "classifier logits");
    return out;
}

int argmax_lowest(std::span<const double> v) {
    if (v.empty()) fail(ErrorKind::Shape, "argmax of empty vector");
    int best = 0;
    for (std::size_t i = 1; i < v.size(); ++i)
        if (v[i] > v[best]) best = static_cast<int>(i);
    return best;
}

Prediction prediction_from_logits(std::span<const double> row) {
    Prediction p;
    p.probs = nn::softmax_row(row);
    p.class_id = argmax_lowest(row);
    return p;
}

Prediction predict(const Classifier& clf, const VideoClip& clip) {
    const VideoClip* one[] = {&clip};
    const auto out = logits(clf, one);
    return prediction_from_logits(out.span());
}

std::vector<Prediction> predict_batch(const Classifier& clf, const std::vector<VideoClip>& clips, int chunk) {
    std::vector<Prediction> out;
    const int k = clf.config().num_classes;
    for (std::size_t b = 0; b < clips.size(); b += static_cast<std::size_t>(chunk)) {
        std::vector<const VideoClip*> ptrs;
        for (std::size_t i = b; i < std::min(clips.size(), b + chunk); ++i) ptrs.push_back(&clips[i]);
        const auto l = logits(clf, ptrs);
        for (std::size_t r = 0; r < ptrs.size(); ++r)
            out.push_back(prediction_from_logits(std::span<const double>(l.ptr() + r * k, k)));
    }
    return out;
}

void save_classifier(const std::string& path, const Classifier& clf, const nlohmann::ordered_json& extra) {
    Checkpoint ck;
    ck.header["kind"] = "classifier";
    const auto cfg = clf.config().to_json();
    for (const auto& [k, v] : cfg.items()) ck.header[k] = v;
    if (extra.is_object())
        for (const auto& [k, v] : extra.items()) ck.header[k] = v;
    for (const auto& p : clf.params().all()) ck.tensors.emplace_back(p.name, p.var->value);
    save_checkpoint(path, ck);
}

namespace {

Checkpoint load_classifier_checkpoint(const std::string& path) {
    auto ck = load_checkpoint(path);
    if (ck.header.value("kind", "") != "classifier") fail(ErrorKind::Load, path + ": not a classifier checkpoint");
    return ck;
}

}  // namespace

Classifier load_classifier(const std::string& path) {
    const auto ck = load_classifier_checkpoint(path);
    Classifier clf(ClassifierConfig::from_json(ck.header));
    std::string mismatches;
    for (auto& p : clf.params().all()) {
        const auto* t = ck.find(p.name);
        if (!t)
            mismatches += " missing:" + p.name;
        else if (t->shape != p.var->value.shape)
            mismatches += " shape:" + p.name + nn::shape_str(t->shape);
        else
            p.var->value = *t;
    }
    if (!mismatches.empty()) fail(ErrorKind::Load, path + ": incompatible classifier checkpoint;" + mismatches);
    return clf;
}

void load_pretrained_backbone(Classifier& clf, const std::string& path) {
    const auto ck = load_classifier_checkpoint(path);
    if (ck.header.value("preset", "") != clf.config().preset)
        fail(ErrorKind::Load, path + ": preset '" + ck.header.value("preset", "") + "' does not match '" +
                                  clf.config().preset + "'");
    std::string mismatches;
    std::vector<std::pair<nn::NamedParam*, const Tensor*>> plan;
    for (auto& p : clf.params().all()) {
        if (p.name.rfind("head.", 0) == 0) continue;
        const auto* t = ck.find(p.name);
        if (!t)
            mismatches += " missing:" + p.name;
        else if (t->shape != p.var->value.shape)
            mismatches += " shape:" + p.name + nn::shape_str(t->shape) + "!=" + nn::shape_str(p.var->value.shape);
        else
            plan.emplace_back(&p, t);
    }
    if (!mismatches.empty()) fail(ErrorKind::Load, path + ": incompatible backbone;" + mismatches);
    for (auto& [p, t] : plan) p->var->value = *t;
    clf.reset_head(clf.config().seed);
}

}  // namespace nearmiss
