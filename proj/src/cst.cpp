#include "cst.hpp"

#include <algorithm>
#include <cmath>

#include "checkpoint.hpp"
#include "error.hpp"
#include "optim.hpp"

namespace nearmiss {

using nn::Tensor;
using nn::Var;

namespace {

constexpr double kSlope = 0.2;

std::string side_tag(Side s) { return s == Side::Source ? "s" : "t"; }

void add_conv(nn::ParamSet& ps, const std::string& name, int in, int out, int k, Rng& rng, double gain = 2.0) {
    ps.add(name + ".w", nn::he_normal({out, in, k, k}, in * k * k, rng, gain));
    ps.add(name + ".b", Tensor({out}, 0.0));
}

void add_res(nn::ParamSet& ps, const std::string& prefix, int ch, Rng& rng) {
    add_conv(ps, prefix + ".a", ch, ch, 3, rng);
    add_conv(ps, prefix + ".b", ch, ch, 3, rng, 0.5);
}

Tensor gather_frames(const std::vector<const float*>& frames, int h, int w) {
    Tensor t({static_cast<int>(frames.size()), 3, h, w});
    const std::size_t hw = static_cast<std::size_t>(h) * w;
    for (std::size_t n = 0; n < frames.size(); ++n)
        for (std::size_t p = 0; p < hw; ++p)
            for (int c = 0; c < 3; ++c) t.data[(n * 3 + c) * hw + p] = frames[n][p * 3 + c];
    return t;
}

void check_finite(double v, const char* term) {
    if (!std::isfinite(v)) fail(ErrorKind::Numeric, std::string("cst_loss: term '") + term + "' is not finite");
}

}  // namespace

CstArch CstArch::preset_for(std::string_view name, int height, int width) {
    CstArch a;
    a.height = height;
    a.width = width;
    if (name == "toy") {
        a.preset = "toy";
        a.base_channels = 4;
    } else if (name == "paper-ish") {
        a.preset = "paper-ish";
        a.base_channels = 16;
    } else {
        fail(ErrorKind::Usage, "unknown CST preset '" + std::string(name) + "'");
    }
    return a;
}

void CstArch::validate() const {
    if (height < 4 || width < 4 || height % 4 != 0 || width % 4 != 0)
        fail(ErrorKind::Shape, "CST resolution must be a multiple of 4 (got " + std::to_string(height) + "x" +
                                   std::to_string(width) + ")");
    if (base_channels < 1) fail(ErrorKind::Usage, "CST base_channels must be >= 1");
}

DomainCodec::DomainCodec(const CstArch& arch, std::uint64_t seed) : arch_(arch), seed_(seed) {
    arch_.validate();
    Rng rng(mix_seed(seed, "cst-codec"));
    const int c = arch.base_channels;
    for (Side s : {Side::Source, Side::Target}) {
        const auto p = "enc_" + side_tag(s);
        add_conv(params_, p + ".c1", 3, c, 3, rng);
        add_conv(params_, p + ".c2", c, 2 * c, 3, rng);
        add_conv(params_, p + ".c3", 2 * c, 4 * c, 3, rng);
        add_res(params_, p + ".res", 4 * c, rng);
    }
    add_res(params_, "enc_shared.res", 4 * c, rng);
    add_res(params_, "dec_shared.res", 4 * c, rng);
    for (Side s : {Side::Source, Side::Target}) {
        const auto p = "dec_" + side_tag(s);
        add_res(params_, p + ".res", 4 * c, rng);
        add_conv(params_, p + ".up1", 4 * c, 2 * c, 3, rng);
        add_conv(params_, p + ".up2", 2 * c, c, 3, rng);
        add_conv(params_, p + ".out", c, 3, 3, rng, 1.0);
    }
}

LatentDims DomainCodec::latent_dims() const { return {4 * arch_.base_channels, arch_.height / 4, arch_.width / 4}; }

Var DomainCodec::conv(const std::string& name, const Var& x, int stride) const {
    return nn::conv2d(x, params_.find(name + ".w"), params_.find(name + ".b"), stride, 1);
}

Var DomainCodec::res_block(const std::string& prefix, const Var& x) const {
    auto h = nn::leaky_relu(conv(prefix + ".a", x, 1), kSlope);
    return nn::add(x, conv(prefix + ".b", h, 1));
}

Var DomainCodec::encode(const Var& frames, Side side) const {
    const auto& s = frames->value.shape;
    if (s.size() != 4 || s[1] != 3 || s[2] != arch_.height || s[3] != arch_.width)
        fail(ErrorKind::Shape, "encode: frames " + nn::shape_str(s) + " do not match codec resolution " +
                                   std::to_string(arch_.height) + "x" + std::to_string(arch_.width));
    const auto p = "enc_" + side_tag(side);
    auto h = nn::leaky_relu(conv(p + ".c1", frames, 1), kSlope);
    h = nn::leaky_relu(conv(p + ".c2", h, 2), kSlope);
    h = nn::leaky_relu(conv(p + ".c3", h, 2), kSlope);
    h = res_block(p + ".res", h);
    return res_block("enc_shared.res", h);
}

Var DomainCodec::decode(const Var& z, Side side) const {
    const auto d = latent_dims();
    const auto& s = z->value.shape;
    if (s.size() != 4 || s[1] != d.channels || s[2] != d.height || s[3] != d.width)
        fail(ErrorKind::Shape, "decode: code " + nn::shape_str(s) + " does not match latent dims");
    const auto p = "dec_" + side_tag(side);
    auto h = res_block("dec_shared.res", z);
    h = res_block(p + ".res", h);
    h = nn::leaky_relu(conv(p + ".up1", nn::upsample2x(h), 1), kSlope);
    h = nn::leaky_relu(conv(p + ".up2", nn::upsample2x(h), 1), kSlope);
    return nn::sigmoid(conv(p + ".out", h, 1));
}

Discriminators::Discriminators(const CstArch& arch, std::uint64_t seed) {
    Rng rng(mix_seed(seed, "cst-disc"));
    const int c = arch.base_channels;
    for (Side s : {Side::Source, Side::Target}) {
        const auto p = "disc_" + side_tag(s);
        add_conv(params_, p + ".c1", 3, c, 3, rng);
        add_conv(params_, p + ".c2", c, 2 * c, 3, rng);
        params_.add(p + ".out.w", nn::he_normal({1, 2 * c, 1, 1}, 2 * c, rng, 1.0));
        params_.add(p + ".out.b", Tensor({1}, 0.0));
    }
}

Var Discriminators::score(const Var& frames, Side side) const {
    const auto p = "disc_" + side_tag(side);
    auto h = nn::leaky_relu(nn::conv2d(frames, params_.find(p + ".c1.w"), params_.find(p + ".c1.b"), 2, 1), kSlope);
    h = nn::leaky_relu(nn::conv2d(h, params_.find(p + ".c2.w"), params_.find(p + ".c2.b"), 2, 1), kSlope);
    return nn::conv2d(h, params_.find(p + ".out.w"), params_.find(p + ".out.b"), 1, 0);
}

CstLoss cst_loss(const DomainCodec& codec, const Discriminators& discs, const Tensor& source_frames,
                 const Tensor& target_frames, const CstWeights& w, Rng* noise, double noise_scale) {
    if (source_frames.numel() == 0 || target_frames.numel() == 0)
        fail(ErrorKind::Domain, "cst_loss: both batches must be non-empty");
    auto sample = [&](const Var& mu) {
        if (!noise) return mu;
        Tensor eps(mu->value.shape);
        for (auto& v : eps.data) v = noise_scale * noise->normal();
        return nn::add(mu, nn::constant(std::move(eps)));
    };
    const auto xs = nn::constant(source_frames);
    const auto xt = nn::constant(target_frames);

    const auto mu_s = codec.encode(xs, Side::Source);
    const auto mu_t = codec.encode(xt, Side::Target);
    const auto z_s = sample(mu_s);
    const auto z_t = sample(mu_t);

    const auto x_ss = codec.decode(z_s, Side::Source);
    const auto x_tt = codec.decode(z_t, Side::Target);
    const auto x_st = codec.decode(z_s, Side::Target);
    const auto x_ts = codec.decode(z_t, Side::Source);

    const auto x_sts = codec.decode(sample(codec.encode(x_st, Side::Target)), Side::Source);
    const auto x_tst = codec.decode(sample(codec.encode(x_ts, Side::Source)), Side::Target);

    std::vector<Var> terms = {
        nn::l1_loss(x_ss, xs),
        nn::l1_loss(x_tt, xt),
        nn::mean_square(mu_s),
        nn::mean_square(mu_t),
        nn::mse_to_constant(discs.score(x_ts, Side::Source), 1.0),
        nn::mse_to_constant(discs.score(x_st, Side::Target), 1.0),
        nn::l1_loss(x_sts, xs),
        nn::l1_loss(x_tst, xt),
    };
    static constexpr const char* kNames[] = {"recon_s", "recon_t", "kl_s", "kl_t", "adv_s", "adv_t", "cyc_s", "cyc_t"};
    for (std::size_t i = 0; i < terms.size(); ++i) check_finite(terms[i]->value.data[0], kNames[i]);

    CstLoss out;
    auto& r = out.report;
    r.recon_s = terms[0]->value.data[0];
    r.recon_t = terms[1]->value.data[0];
    r.kl_s = terms[2]->value.data[0];
    r.kl_t = terms[3]->value.data[0];
    r.adv_s = terms[4]->value.data[0];
    r.adv_t = terms[5]->value.data[0];
    r.cyc_s = terms[6]->value.data[0];
    r.cyc_t = terms[7]->value.data[0];
    out.total = nn::weighted_sum(terms, {w.recon, w.recon, w.kl, w.kl, w.adv, w.adv, w.cyc, w.cyc});
    r.total = out.total->value.data[0];
    check_finite(r.total, "total");
    out.fake_source = x_ts;
    out.fake_target = x_st;
    return out;
}

Var discriminator_loss(const Discriminators& discs, const Tensor& real_s, const Tensor& real_t, const Tensor& fake_s,
                       const Tensor& fake_t) {
    std::vector<Var> terms = {
        nn::mse_to_constant(discs.score(nn::constant(real_s), Side::Source), 1.0),
        nn::mse_to_constant(discs.score(nn::constant(fake_s), Side::Source), 0.0),
        nn::mse_to_constant(discs.score(nn::constant(real_t), Side::Target), 1.0),
        nn::mse_to_constant(discs.score(nn::constant(fake_t), Side::Target), 0.0),
    };
    return nn::weighted_sum(terms, {0.5, 0.5, 0.5, 0.5});
}

Tensor clip_to_chw(const VideoClip& clip) {
    std::vector<const float*> frames;
    for (int t = 0; t < clip.frames; ++t) frames.push_back(clip.frame(t));
    return gather_frames(frames, clip.height, clip.width);
}

void chw_to_clip(const Tensor& t, VideoClip& clip) {
    const int n = t.dim(0), h = t.dim(2), w = t.dim(3);
    const std::size_t hw = static_cast<std::size_t>(h) * w;
    clip.frames = n;
    clip.height = h;
    clip.width = w;
    clip.pixels.resize(static_cast<std::size_t>(n) * hw * 3);
    for (int f = 0; f < n; ++f)
        for (std::size_t p = 0; p < hw; ++p)
            for (int c = 0; c < 3; ++c)
                clip.pixels[(static_cast<std::size_t>(f) * hw + p) * 3 + c] =
                    static_cast<float>(std::clamp(t.data[(static_cast<std::size_t>(f) * 3 + c) * hw + p], 0.0, 1.0));
}

namespace {

constexpr int kInferenceChunk = 32;

void check_resolution(const DomainCodec& codec, const VideoClip& clip) {
    if (clip.height != codec.arch().height || clip.width != codec.arch().width)
        fail(ErrorKind::Shape, "clip resolution " + std::to_string(clip.height) + "x" + std::to_string(clip.width) +
                                   " does not match codec " + std::to_string(codec.arch().height) + "x" +
                                   std::to_string(codec.arch().width));
}

Tensor frames_slice(const Tensor& all, int begin, int end) {
    const std::size_t per = all.numel() / static_cast<std::size_t>(all.dim(0));
    Tensor t({end - begin, all.dim(1), all.dim(2), all.dim(3)});
    std::copy_n(all.ptr() + static_cast<std::size_t>(begin) * per, t.numel(), t.ptr());
    return t;
}

}  // namespace

LatentCode encode(const DomainCodec& codec, const VideoClip& clip, Side side) {
    check_resolution(codec, clip);
    nn::NoGradGuard guard;
    const auto frames = clip_to_chw(clip);
    const auto d = codec.latent_dims();
    LatentCode code{Tensor({clip.frames, d.channels, d.height, d.width})};
    const std::size_t per = static_cast<std::size_t>(d.channels) * d.height * d.width;
    for (int b = 0; b < clip.frames; b += kInferenceChunk) {
        const int e = std::min(clip.frames, b + kInferenceChunk);
        const auto z = codec.encode(nn::constant(frames_slice(frames, b, e)), side);
        std::copy_n(z->value.ptr(), z->value.numel(), code.z.ptr() + static_cast<std::size_t>(b) * per);
    }
    return code;
}

VideoClip decode(const DomainCodec& codec, const LatentCode& code, Side side, const VideoClip& like) {
    nn::NoGradGuard guard;
    const auto d = codec.latent_dims();
    if (code.z.rank() != 4 || code.z.dim(1) != d.channels || code.z.dim(2) != d.height || code.z.dim(3) != d.width)
        fail(ErrorKind::Shape, "decode: code " + nn::shape_str(code.z.shape) + " does not match latent dims");
    const int n = code.z.dim(0);
    Tensor frames({n, 3, codec.arch().height, codec.arch().width});
    const std::size_t per = frames.numel() / static_cast<std::size_t>(std::max(1, n));
    for (int b = 0; b < n; b += kInferenceChunk) {
        const int e = std::min(n, b + kInferenceChunk);
        const auto x = codec.decode(nn::constant(frames_slice(code.z, b, e)), side);
        std::copy_n(x->value.ptr(), x->value.numel(), frames.ptr() + static_cast<std::size_t>(b) * per);
    }
    VideoClip out = like.metadata_only();
    chw_to_clip(frames, out);
    return out;
}

std::string_view to_string(EncoderRule r) { return r == EncoderRule::Crossed ? "crossed" : "clip-domain"; }

EncoderRule encoder_rule_from_string(std::string_view s) {
    if (s == "clip-domain") return EncoderRule::ClipDomain;
    if (s == "crossed") return EncoderRule::Crossed;
    fail(ErrorKind::Usage, "unknown encoder rule '" + std::string(s) + "'");
}

Translation translate(const DomainCodec& codec, const VideoClip& clip, EncoderRule rule) {
    check_resolution(codec, clip);
    Translation tr;
    if (rule == EncoderRule::Crossed) {
        tr.fake1 = decode(codec, encode(codec, clip, Side::Target), Side::Source, clip);
        tr.fake2 = decode(codec, encode(codec, clip, Side::Source), Side::Target, clip);
    } else {
        // E_s reads day frames and E_t night frames
        const auto code = encode(codec, clip, clip.domain == Domain::Night ? Side::Target : Side::Source);
        tr.fake1 = decode(codec, code, Side::Source, clip);
        tr.fake2 = decode(codec, code, Side::Target, clip);
    }
    tr.fake1.provenance = Provenance::Fake1;
    tr.fake1.domain = Domain::Day;
    tr.fake1.clip_id = clip.clip_id + "#f1";
    tr.fake2.provenance = Provenance::Fake2;
    tr.fake2.domain = Domain::Night;
    tr.fake2.clip_id = clip.clip_id + "#f2";
    return tr;
}

std::vector<VideoClip> synthesize_corpus(const DomainCodec& codec, const std::vector<VideoClip>& originals,
                                         EncoderRule rule) {
    std::vector<VideoClip> out(originals.begin(), originals.end());
    std::vector<VideoClip> f2;
    for (const auto& c : originals) {
        auto tr = translate(codec, c, rule);
        out.push_back(std::move(tr.fake1));
        f2.push_back(std::move(tr.fake2));
    }
    for (auto& c : f2) out.push_back(std::move(c));
    return out;
}

CstTrainResult train_cst(const std::vector<VideoClip>& day, const std::vector<VideoClip>& night, const CstArch& arch,
                         const CstTrainConfig& cfg) {
    if (day.empty() || night.empty()) fail(ErrorKind::Domain, "train_cst: both corpora must be non-empty");
    if (cfg.steps < 0 || cfg.batch < 1) fail(ErrorKind::Usage, "train_cst: steps >= 0 and batch >= 1 required");
    CstTrainResult result;
    result.codec = DomainCodec(arch, cfg.seed);
    Discriminators discs(arch, cfg.seed);

    std::vector<const float*> day_frames, night_frames;
    for (const auto* pool : {&day, &night})
        for (const auto& c : *pool) {
            if (c.height != arch.height || c.width != arch.width)
                fail(ErrorKind::Shape, "train_cst: clip '" + c.clip_id + "' resolution does not match codec");
            auto& dst = pool == &day ? day_frames : night_frames;
            for (int t = 0; t < c.frames; ++t) dst.push_back(c.frame(t));
        }
    if (day_frames.empty() || night_frames.empty()) fail(ErrorKind::Domain, "train_cst: corpora contain no frames");

    nn::Adam gen_opt(cfg.lr), disc_opt(cfg.lr);
    Rng batch_rng(mix_seed(cfg.seed, "cst-batches"));
    Rng noise_rng(mix_seed(cfg.seed, "cst-noise"));
    auto draw = [&](const std::vector<const float*>& pool) {
        std::vector<const float*> pick;
        for (int i = 0; i < cfg.batch; ++i) pick.push_back(pool[batch_rng.below(pool.size())]);
        return gather_frames(pick, arch.height, arch.width);
    };

    std::vector<Tensor> saved;
    auto take_snapshot = [&] {
        saved.clear();
        for (const auto& p : result.codec.params().all()) saved.push_back(p.var->value);
    };
    take_snapshot();

    for (int step = 0; step < cfg.steps; ++step) {
        const auto xs = draw(day_frames);
        const auto xt = draw(night_frames);
        try {
            result.codec.params().zero_grad();
            discs.params().zero_grad();
            auto loss = cst_loss(result.codec, discs, xs, xt, cfg.weights, &noise_rng, cfg.latent_noise);
            nn::backward(loss.total);
            gen_opt.step(result.codec.params());
            if (!result.codec.params().all_finite()) fail(ErrorKind::Numeric, "train_cst: parameters diverged");

            discs.params().zero_grad();
            auto dl = discriminator_loss(discs, xs, xt, loss.fake_source->value, loss.fake_target->value);
            nn::backward(dl);
            disc_opt.step(discs.params());
            result.log.push_back(loss.report);
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::Numeric) throw;
            auto& all = result.codec.params().all();
            for (std::size_t i = 0; i < all.size(); ++i) all[i].var->value = saved[i];
            result.diverged = true;
            break;
        }
        result.codec.steps = step + 1;
        if (cfg.snapshot_every > 0 && (step + 1) % cfg.snapshot_every == 0) take_snapshot();
    }
    result.codec.params().zero_grad();
    return result;
}

void save_codec(const std::string& path, const DomainCodec& codec) {
    Checkpoint ck;
    const auto d = codec.latent_dims();
    ck.header["kind"] = "cst-codec";
    ck.header["preset"] = codec.arch().preset;
    ck.header["height"] = codec.arch().height;
    ck.header["width"] = codec.arch().width;
    ck.header["base_channels"] = codec.arch().base_channels;
    ck.header["latent_dims"] = {d.channels, d.height, d.width};
    ck.header["seed"] = codec.seed();
    ck.header["steps"] = codec.steps;
    for (const auto& p : codec.params().all()) ck.tensors.emplace_back(p.name, p.var->value);
    save_checkpoint(path, ck);
}

DomainCodec load_codec(const std::string& path) {
    const auto ck = load_checkpoint(path);
    if (ck.header.value("kind", "") != "cst-codec") fail(ErrorKind::Load, path + ": not a CST codec checkpoint");
    CstArch arch;
    try {
        arch.preset = ck.header.at("preset").get<std::string>();
        arch.height = ck.header.at("height").get<int>();
        arch.width = ck.header.at("width").get<int>();
        arch.base_channels = ck.header.at("base_channels").get<int>();
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::Load, path + ": incomplete header (" + e.what() + ")");
    }
    DomainCodec codec(arch, ck.header.value("seed", std::uint64_t{0}));
    codec.steps = ck.header.value("steps", 0L);
    std::string mismatches;
    for (auto& p : codec.params().all()) {
        const auto* t = ck.find(p.name);
        if (!t)
            mismatches += " missing:" + p.name;
        else if (t->shape != p.var->value.shape)
            mismatches += " shape:" + p.name;
        else
            p.var->value = *t;
    }
    if (!mismatches.empty()) fail(ErrorKind::Load, path + ": incompatible codec checkpoint;" + mismatches);
    return codec;
}

}  // namespace nearmiss
