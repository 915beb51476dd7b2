#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "autograd.hpp"
#include "params.hpp"
#include "video.hpp"

namespace nearmiss {

/// A 3D convolution factored into a (1,k,k) spatial pass followed by a
/// (k,1,1) temporal pass, each optionally followed by GroupNorm + ReLU.
struct SeparableBlockSpec {
    int in_channels = 3;
    int out_channels = 16;
    int kernel = 3;
    int spatial_stride = 1;
    int temporal_stride = 1;
    bool norm = true;
    bool relu = true;
};

struct ClassifierConfig {
    int num_classes = 4;
    int clip_len = 16;
    std::string preset = "toy";  // "toy" | "paper-ish"
    int height = 64;
    int width = 64;
    int width_divisor = 8;  // paper-ish channel reduction
    std::uint64_t seed = 0;

    void validate() const;
    nlohmann::ordered_json to_json() const;
    static ClassifierConfig from_json(const nlohmann::json& j);
};

std::vector<SeparableBlockSpec> toy_blocks();

/// Groups used for a normalisation over c channels.
int norm_groups(int channels);

class Classifier {
public:
    Classifier() = default;
    explicit Classifier(const ClassifierConfig& cfg);

    const ClassifierConfig& config() const { return cfg_; }
    nn::ParamSet& params() { return params_; }
    const nn::ParamSet& params() const { return params_; }
    std::size_t parameter_count() const { return params_.count(); }

    /// x [N,T,3,H,W] -> logits [N,ξ]
    nn::Var forward(const nn::Var& x) const;

    /// Fresh head weights (used after loading a backbone).
    void reset_head(std::uint64_t seed);

private:
    nn::Var block(const std::string& name, const SeparableBlockSpec& spec, const nn::Var& x) const;
    nn::Var unit(const std::string& name, const nn::Var& x, int kernel, int stride) const;  // 1x1 conv + norm + relu
    nn::Var inception(const std::string& name, const nn::Var& x) const;

    void add_block(const std::string& name, const SeparableBlockSpec& spec, Rng& rng);
    void add_unit(const std::string& name, int in, int out, Rng& rng);
    int add_inception(const std::string& name, int in, const std::array<int, 6>& widths, Rng& rng);

    ClassifierConfig cfg_;
    nn::ParamSet params_;
    std::vector<SeparableBlockSpec> blocks_;
    std::vector<std::array<int, 6>> inception_widths_;
    int feature_channels_ = 0;
};

/// Spatial then temporal convolution, no norm or activation.
nn::Var separable_conv(const nn::Var& x, const nn::Var& w_spatial, const nn::Var& w_temporal,
                       const SeparableBlockSpec& spec);

/// Clips (T,H,W,3) -> normalised [N,T,3,H,W].
nn::Tensor clips_to_tensor(std::span<const VideoClip* const> clips);
nn::Tensor clips_to_tensor(const std::vector<VideoClip>& clips);

/// Shape-checked forward on a batch; raises Numeric on non-finite logits.
nn::Tensor logits(const Classifier& clf, std::span<const VideoClip* const> clips);

struct Prediction {
    int class_id = 0;
    std::vector<double> probs;
};

/// argmax with ties broken toward the lowest index.
int argmax_lowest(std::span<const double> v);
Prediction prediction_from_logits(std::span<const double> row);
Prediction predict(const Classifier& clf, const VideoClip& clip);
std::vector<Prediction> predict_batch(const Classifier& clf, const std::vector<VideoClip>& clips, int chunk = 8);

void save_classifier(const std::string& path, const Classifier& clf, const nlohmann::ordered_json& extra = {});
Classifier load_classifier(const std::string& path);

/// Replaces every non-head parameter from a compatible checkpoint and
/// re-initialises the head.
void load_pretrained_backbone(Classifier& clf, const std::string& path);

}  // namespace nearmiss
