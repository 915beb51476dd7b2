#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "augment.hpp"
#include "params.hpp"
#include "s3d.hpp"
#include "video.hpp"

namespace nearmiss {

enum class DatasetMode { Originals, Augmented };  // V^δ vs X(n)
std::string_view to_string(DatasetMode m);
DatasetMode dataset_mode_from_string(std::string_view s);

enum class LrMode { Milestones, Plateau };

struct TrainConfig {
    int batch_size = 2;
    double lr0 = 0.1;
    double lr_decay_factor = 10.0;
    std::vector<int> milestones = {30, 50};
    double momentum = 0.9;
    double weight_decay = 1e-7;
    int epochs = 60;
    int clip_len = 16;
    std::uint64_t seed = 0;
    AugmentConfig augment;
    DatasetMode dataset_mode = DatasetMode::Originals;
    LrMode lr_mode = LrMode::Milestones;
    int plateau_patience = 5;
    double plateau_threshold = 1e-3;
    /// Stop once training accuracy reaches this value (0 disables).
    double stop_at_train_accuracy = 0.0;
    /// Measure training-set accuracy after every epoch.
    bool eval_train = false;

    void validate() const;
    nlohmann::ordered_json to_json() const;
    static TrainConfig from_json(const nlohmann::json& j);
};

double lr_at(int epoch, const TrainConfig& cfg);

struct SgdState {
    std::vector<std::vector<double>> velocity;
};

/// v <- m*v + (g + wd*p); p <- p - lr*v. Throws Numeric on a NaN gradient
/// before touching anything.
void sgd_step(nn::ParamSet& params, double lr, double momentum, double weight_decay, SgdState& state);

struct EpochLog {
    int epoch = 0;
    double lr = 0.0;
    double train_loss = 0.0;
    std::optional<double> train_accuracy;
    std::optional<double> val_accuracy;
    double wall_seconds = 0.0;
};

struct RunLog {
    std::string model_id;
    std::vector<EpochLog> epochs;
};

struct TrainResult {
    RunLog log;
    int best_epoch = -1;
    double best_score = -1.0;
    std::vector<nn::Tensor> best_params;
    bool diverged = false;
    std::string divergence;
};

/// Samples from training segments are drawn as random L-frame windows and
/// augmented; validation segments use uniform-stride windows. The best
/// validation-accuracy parameters are restored into clf on return.
TrainResult train_classifier(Classifier& clf, const std::vector<VideoClip>& train, const std::vector<VideoClip>& val,
                             const TrainConfig& cfg, const std::string& model_id = "");

/// Uniform-stride L-frame evaluation windows of a set of segments.
std::vector<VideoClip> eval_windows(const std::vector<VideoClip>& segments, int clip_len);

/// Top-1 accuracy of clf over segments (uniform-stride windows).
double clip_accuracy(const Classifier& clf, const std::vector<VideoClip>& segments, int clip_len);

/// runlog.csv text: one row per epoch, no wall time.
std::string runlog_csv(const RunLog& log);

}  // namespace nearmiss
