#include "evaluation.hpp"

#include "dataset.hpp"
#include "error.hpp"
#include "taxonomy.hpp"
#include "training.hpp"

namespace nearmiss {

long ConfusionMatrix::trace() const {
    long t = 0;
    for (int k = 0; k < classes; ++k) t += at(k, k);
    return t;
}

BinaryCounts ConfusionMatrix::binary(int k) const {
    if (k < 0 || k >= classes) fail(ErrorKind::Domain, "class index out of range");
    BinaryCounts b;
    b.tp = at(k, k);
    for (int j = 0; j < classes; ++j)
        if (j != k) {
            b.fn += at(k, j);
            b.fp += at(j, k);
        }
    b.tn = total - b.tp - b.fn - b.fp;
    return b;
}

ConfusionMatrix confusion(std::span<const int> truth, std::span<const int> pred, int classes) {
    if (classes < 1) fail(ErrorKind::Domain, "confusion: class count must be >= 1");
    if (truth.size() != pred.size()) fail(ErrorKind::Domain, "confusion: label sequences differ in length");
    ConfusionMatrix cm;
    cm.classes = classes;
    cm.counts.assign(static_cast<std::size_t>(classes) * classes, 0);
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (truth[i] < 0 || truth[i] >= classes || pred[i] < 0 || pred[i] >= classes)
            fail(ErrorKind::Domain, "confusion: label out of range at position " + std::to_string(i));
        ++cm.counts[static_cast<std::size_t>(truth[i]) * classes + pred[i]];
    }
    cm.total = static_cast<long>(truth.size());
    return cm;
}

AccuracyMode accuracy_mode_from_string(std::string_view s) {
    if (s == "top1") return AccuracyMode::Top1;
    if (s == "ovr-macro") return AccuracyMode::OvrMacro;
    fail(ErrorKind::Usage, "unknown accuracy mode '" + std::string(s) + "'");
}

double binary_accuracy(const BinaryCounts& b) {
    const long total = b.tn + b.fn + b.tp + b.fp;
    if (total == 0) fail(ErrorKind::Domain, "accuracy is undefined for an empty confusion matrix");
    return static_cast<double>(b.tn + b.tp) / static_cast<double>(total);
}

double accuracy(const ConfusionMatrix& cm, AccuracyMode mode) {
    if (cm.total == 0) fail(ErrorKind::Domain, "accuracy is undefined for an empty confusion matrix");
    if (mode == AccuracyMode::Top1) return static_cast<double>(cm.trace()) / static_cast<double>(cm.total);
    double s = 0.0;
    for (int k = 0; k < cm.classes; ++k) s += binary_accuracy(cm.binary(k));
    return s / cm.classes;
}

int select_best(const std::vector<std::pair<int, double>>& accuracies) {
    if (accuracies.empty()) fail(ErrorKind::Domain, "select_best: no models to choose from");
    auto best = accuracies.front();
    for (const auto& a : accuracies)
        if (a.second > best.second || (a.second == best.second && a.first < best.first)) best = a;
    return best.first;
}

TimelineReport sliding_timeline(const Classifier& clf, const FrameSource& video, int clip_len, int stride) {
    if (clip_len != clf.config().clip_len)
        fail(ErrorKind::Usage, "timeline window " + std::to_string(clip_len) + " differs from the model's clip length " +
                                   std::to_string(clf.config().clip_len));
    if (stride < 1) fail(ErrorKind::Usage, "timeline stride must be >= 1");
    if (video.frame_count < clip_len)
        fail(ErrorKind::Range, "video '" + video.video_id + "' has " + std::to_string(video.frame_count) +
                                   " frames, fewer than the window " + std::to_string(clip_len));
    TimelineReport rep;
    rep.video_id = video.video_id;
    rep.clip_len = clip_len;
    rep.stride = stride;
    rep.frame_count = video.frame_count;
    rep.fps = video.fps;
    rep.num_classes = clf.config().num_classes;

    const auto all = video.read_all(clf.config().height, clf.config().width);
    std::vector<int> idx(static_cast<std::size_t>(clip_len));
    std::vector<VideoClip> batch;
    std::vector<long> ends;
    auto flush = [&] {
        for (const auto& p : predict_batch(clf, batch)) {
            rep.predicted.push_back(p.class_id);
            rep.confidence.push_back(p.probs[static_cast<std::size_t>(p.class_id)]);
        }
        rep.frames.insert(rep.frames.end(), ends.begin(), ends.end());
        batch.clear();
        ends.clear();
    };
    for (long f = clip_len; f <= video.frame_count; f += stride) {
        for (int k = 0; k < clip_len; ++k) idx[k] = static_cast<int>(f - clip_len + k);
        batch.push_back(take_frames(all, idx));
        ends.push_back(f);
        if (batch.size() == 8) flush();
    }
    if (!batch.empty()) flush();
    return rep;
}

CrossValReport cross_validate_external(const Classifier& clf, const std::vector<AnnotationRecord>& records,
                                       const std::filesystem::path& videos_root, int level,
                                       const ClassOverrides* overrides) {
    if (records.empty()) fail(ErrorKind::Domain, "cross-validation set is empty; accuracy undefined");
    const auto reports = validate_all(records, overrides);
    std::vector<InconsistencyReport> bad;
    for (const auto& r : reports)
        if (!r.clean()) bad.push_back(r);
    if (!bad.empty())
        fail(ErrorKind::Validation, "external annotations rejected:\n" + report_to_json_lines(bad));
    if (clf.config().num_classes != taxonomy_size(level))
        fail(ErrorKind::Usage, "model predicts " + std::to_string(clf.config().num_classes) +
                                   " classes but taxonomy level " + std::to_string(level) + " has " +
                                   std::to_string(taxonomy_size(level)));

    SegmentOptions opt;
    opt.level = level;
    opt.height = clf.config().height;
    opt.width = clf.config().width;
    const auto set = build_segments(records, videos_root, opt);
    if (!set.skipped.empty()) {
        std::string msg = "external corpus incomplete:";
        for (const auto& s : set.skipped) msg += "\n  " + s;
        fail(ErrorKind::Io, msg);
    }
    const int len = clf.config().clip_len;
    const auto windows = eval_windows(set.segments, len);
    const auto preds = predict_batch(clf, windows);

    CrossValReport rep;
    rep.level = level;
    rep.clip_len = len;
    std::vector<int> truth, pred;
    for (std::size_t i = 0; i < windows.size(); ++i) {
        rep.items.push_back({windows[i].clip_id, windows[i].label, preds[i].class_id});
        truth.push_back(windows[i].label);
        pred.push_back(preds[i].class_id);
    }
    rep.cm = confusion(truth, pred, clf.config().num_classes);
    rep.accuracy = accuracy(rep.cm, AccuracyMode::Top1);
    return rep;
}

}  // namespace nearmiss
