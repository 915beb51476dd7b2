#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "autograd.hpp"
#include "params.hpp"
#include "video.hpp"

namespace nearmiss {

/// Which half of the shared-latent translator: source = day, target = night.
enum class Side { Source, Target };

struct CstArch {
    std::string preset = "toy";  // "toy" | "paper-ish"
    int height = 8;
    int width = 8;
    int base_channels = 4;

    static CstArch preset_for(std::string_view name, int height, int width);
    void validate() const;
};

struct LatentDims {
    int channels = 0;
    int height = 0;
    int width = 0;
    bool operator==(const LatentDims&) const = default;
};

/// Per-frame latent codes of a clip, shape (T, channels, h, w).
struct LatentCode {
    nn::Tensor z;
};

/// Two encoders and two decoders meeting in a latent space whose innermost
/// residual blocks are shared by both domains.
class DomainCodec {
public:
    DomainCodec() = default;
    DomainCodec(const CstArch& arch, std::uint64_t seed);

    const CstArch& arch() const { return arch_; }
    LatentDims latent_dims() const;
    std::uint64_t seed() const { return seed_; }
    long steps = 0;

    nn::ParamSet& params() { return params_; }
    const nn::ParamSet& params() const { return params_; }

    /// frames [N,3,H,W] -> latent mean [N,C,h,w]
    nn::Var encode(const nn::Var& frames, Side side) const;
    nn::Var decode(const nn::Var& z, Side side) const;

private:
    nn::Var res_block(const std::string& prefix, const nn::Var& x) const;
    nn::Var conv(const std::string& name, const nn::Var& x, int stride) const;

    CstArch arch_;
    std::uint64_t seed_ = 0;
    nn::ParamSet params_;
};

/// Patch discriminators, one per domain.
class Discriminators {
public:
    Discriminators() = default;
    Discriminators(const CstArch& arch, std::uint64_t seed);

    nn::Var score(const nn::Var& frames, Side side) const;
    nn::ParamSet& params() { return params_; }
    const nn::ParamSet& params() const { return params_; }

private:
    nn::ParamSet params_;
};

struct CstWeights {
    double recon = 10.0;
    double kl = 0.01;
    double adv = 1.0;
    double cyc = 10.0;
};

struct CstLossReport {
    double recon_s = 0, recon_t = 0;
    double kl_s = 0, kl_t = 0;
    double adv_s = 0, adv_t = 0;
    double cyc_s = 0, cyc_t = 0;
    double total = 0;
};

struct CstLoss {
    CstLossReport report;
    nn::Var total;
    nn::Var fake_source;  // D_s(E_t(x_t))
    nn::Var fake_target;  // D_t(E_s(x_s))
};

/// UNIT-style objective. With noise == nullptr the latent draw is skipped.
CstLoss cst_loss(const DomainCodec& codec, const Discriminators& discs, const nn::Tensor& source_frames,
                 const nn::Tensor& target_frames, const CstWeights& weights, Rng* noise,
                 double noise_scale = 1.0);

/// Least-squares discriminator objective on real vs detached fake frames.
nn::Var discriminator_loss(const Discriminators& discs, const nn::Tensor& real_s, const nn::Tensor& real_t,
                           const nn::Tensor& fake_s, const nn::Tensor& fake_t);

LatentCode encode(const DomainCodec& codec, const VideoClip& clip, Side side);
VideoClip decode(const DomainCodec& codec, const LatentCode& code, Side side, const VideoClip& like);

struct Translation {
    VideoClip fake1;  // day rendering D_s(E(V))
    VideoClip fake2;  // night rendering D_t(E(V))
};

/// ClipDomain encodes with the encoder of the clip's own domain; Crossed
/// always uses E_t for f1 and E_s for f2.
enum class EncoderRule { ClipDomain, Crossed };
std::string_view to_string(EncoderRule r);
EncoderRule encoder_rule_from_string(std::string_view s);

Translation translate(const DomainCodec& codec, const VideoClip& clip, EncoderRule rule = EncoderRule::ClipDomain);

/// X(n): originals followed by their f1 and f2 fakes.
std::vector<VideoClip> synthesize_corpus(const DomainCodec& codec, const std::vector<VideoClip>& originals,
                                         EncoderRule rule = EncoderRule::ClipDomain);

struct CstTrainConfig {
    int steps = 200;
    double lr = 1e-3;
    int batch = 4;
    CstWeights weights;
    std::uint64_t seed = 0;
    int snapshot_every = 20;
    double latent_noise = 1.0;  // std of the training-time latent sample
};

struct CstTrainResult {
    DomainCodec codec;
    std::vector<CstLossReport> log;
    bool diverged = false;
};

CstTrainResult train_cst(const std::vector<VideoClip>& day, const std::vector<VideoClip>& night,
                         const CstArch& arch, const CstTrainConfig& cfg);

void save_codec(const std::string& path, const DomainCodec& codec);
DomainCodec load_codec(const std::string& path);

/// Frames of a clip as a [T,3,H,W] tensor (and back).
nn::Tensor clip_to_chw(const VideoClip& clip);
void chw_to_clip(const nn::Tensor& t, VideoClip& clip);

}  // namespace nearmiss
