#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "annotation.hpp"
#include "s3d.hpp"
#include "video.hpp"

namespace nearmiss {

struct BinaryCounts {
    long tn = 0, fn = 0, tp = 0, fp = 0;
    bool operator==(const BinaryCounts&) const = default;
};

/// Rows are ground truth, columns predictions.
struct ConfusionMatrix {
    int classes = 0;
    std::vector<long> counts;
    long total = 0;

    long at(int truth, int pred) const { return counts[static_cast<std::size_t>(truth) * classes + pred]; }
    long trace() const;
    BinaryCounts binary(int k) const;  // one-vs-rest
};

ConfusionMatrix confusion(std::span<const int> truth, std::span<const int> pred, int classes);

enum class AccuracyMode { Top1, OvrMacro };
AccuracyMode accuracy_mode_from_string(std::string_view s);

double accuracy(const ConfusionMatrix& cm, AccuracyMode mode = AccuracyMode::Top1);
double binary_accuracy(const BinaryCounts& b);

/// Model index with the highest accuracy; ties go to the lowest index.
int select_best(const std::vector<std::pair<int, double>>& accuracies);

struct TimelineReport {
    std::string video_id;
    int clip_len = 32;
    int stride = 1;
    long frame_count = 0;
    double fps = 30.0;
    int num_classes = 0;
    std::vector<long> frames;  // window end frame f; the window is [f-L, f)
    std::vector<int> predicted;
    std::vector<double> confidence;
    std::optional<TemporalWindow> truth;
    std::optional<int> truth_label;
};

TimelineReport sliding_timeline(const Classifier& clf, const FrameSource& video, int clip_len = 32, int stride = 1);

struct CrossValItem {
    std::string clip_id;
    int truth = 0;
    int predicted = 0;
};

struct CrossValReport {
    int level = 1;
    int clip_len = 32;
    std::vector<CrossValItem> items;
    ConfusionMatrix cm;
    double accuracy = 0.0;
};

/// Validates the external annotations first; any violation rejects the set
/// with a Validation error whose message carries the report lines.
CrossValReport cross_validate_external(const Classifier& clf, const std::vector<AnnotationRecord>& records,
                                       const std::filesystem::path& videos_root, int level = 1,
                                       const ClassOverrides* overrides = nullptr);

}  // namespace nearmiss
