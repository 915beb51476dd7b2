#include "reports.hpp"

#include <cstdio>
#include <fstream>
#include <map>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "error.hpp"

namespace nearmiss {

namespace fs = std::filesystem;

std::string format_number(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

std::string results_csv(const std::vector<CellResult>& cells) {
    std::string out =
        "phi,dataset,mode,clip_len,seed,status,test_accuracy,test_accuracy_ovr,val_accuracy,best_epoch,n_train,n_test,"
        "n_validate,message\n";
    for (const auto& c : cells) {
        std::string msg = c.message;
        for (auto& ch : msg)
            if (ch == ',' || ch == '\n' || ch == '"') ch = ' ';
        out += "phi" + std::to_string(c.phi) + "," + c.dataset + "," + c.mode + "," + std::to_string(c.clip_len) + "," +
               std::to_string(c.seed) + "," + c.status + "," + (c.ok() ? format_number(c.test_accuracy) : "") + "," +
               (c.ok() ? format_number(c.test_accuracy_ovr) : "") + "," +
               (c.ok() ? format_number(c.val_accuracy) : "") + "," + std::to_string(c.best_epoch) + "," +
               std::to_string(c.n_train) + "," + std::to_string(c.n_test) + "," + std::to_string(c.n_validate) + "," +
               msg + "\n";
    }
    return out;
}

namespace {

struct Mean {
    const CellResult* first = nullptr;
    double sum = 0.0;
    int n = 0;
};

std::map<int, Mean> mean_by_phi(const std::vector<CellResult>& cells, int lo, int hi) {
    std::map<int, Mean> m;
    for (const auto& c : cells) {
        if (c.phi < lo || c.phi > hi) continue;
        auto& e = m[c.phi];
        if (!e.first) e.first = &c;
        if (c.ok()) {
            e.sum += c.test_accuracy;
            ++e.n;
        }
    }
    return m;
}

std::string mean_text(const Mean& e) { return e.n ? format_number(e.sum / e.n) : ""; }

}  // namespace

std::string table2_csv(const std::vector<CellResult>& cells) {
    std::string out = "dataset,clip_len,phi,accuracy,seeds\n";
    for (const auto& [phi, e] : mean_by_phi(cells, 1, 6))
        out += e.first->dataset + "," + std::to_string(e.first->clip_len) + ",phi" + std::to_string(phi) + "," +
               mean_text(e) + "," + std::to_string(e.n) + "\n";
    return out;
}

std::string table3_csv(const std::vector<CellResult>& cells) {
    std::string out = "method,clip_len,phi,accuracy,seeds\n";
    for (const auto& [phi, e] : mean_by_phi(cells, 4, 9))
        out += std::string(e.first->mode == "X" ? "CST+S3D" : "S3D") + "," + std::to_string(e.first->clip_len) +
               ",phi" + std::to_string(phi) + "," + mean_text(e) + "," + std::to_string(e.n) + "\n";
    return out;
}

std::string table4_csv(const std::vector<CrossValRow>& rows) {
    std::string out = "method,phi,accuracy,clips\n";
    for (const auto& r : rows)
        out += r.method + ",phi" + std::to_string(r.phi) + "," + format_number(r.accuracy) + "," +
               std::to_string(r.clips) + "\n";
    return out;
}

std::string confusion_csv(const ConfusionMatrix& cm, const std::vector<std::string>& labels) {
    std::string out = "truth";
    for (int j = 0; j < cm.classes; ++j) out += ",pred_" + std::to_string(j);
    out += ",label,tn,fn,tp,fp\n";
    for (int i = 0; i < cm.classes; ++i) {
        out += std::to_string(i);
        for (int j = 0; j < cm.classes; ++j) out += "," + std::to_string(cm.at(i, j));
        const auto b = cm.binary(i);
        const std::string label = i < static_cast<int>(labels.size()) ? labels[i] : std::to_string(i);
        out += "," + label + "," + std::to_string(b.tn) + "," + std::to_string(b.fn) + "," + std::to_string(b.tp) +
               "," + std::to_string(b.fp) + "\n";
    }
    return out;
}

namespace {

const char* truth_phase(const TimelineReport& rep, long frame) {
    if (!rep.truth) return "";
    const double t = frame / rep.fps;
    const auto& w = *rep.truth;
    if (t >= w.t0 && t < w.t3) return "incident";
    if (w.t4 && t >= *w.t4 && t < w.t5) return "normal";
    return "";
}

}  // namespace

std::string timeline_csv(const TimelineReport& rep) {
    std::string out = "frame,time_s,window_start,predicted,confidence,truth_phase\n";
    for (std::size_t i = 0; i < rep.frames.size(); ++i) {
        const long f = rep.frames[i];
        // the prediction is attributed to the last frame of its window
        out += std::to_string(f - 1) + "," + format_number((f - 1) / rep.fps) + "," + std::to_string(f - rep.clip_len) +
               "," + std::to_string(rep.predicted[i]) + "," + format_number(rep.confidence[i]) + "," +
               truth_phase(rep, f - 1) + "\n";
    }
    return out;
}

namespace {

cv::Scalar class_colour(int k) {
    static const unsigned char palette[16][3] = {
        {230, 25, 75},  {60, 180, 75},  {255, 225, 25}, {0, 130, 200},  {245, 130, 48}, {145, 30, 180},
        {70, 240, 240}, {240, 50, 230}, {210, 245, 60}, {250, 190, 212}, {0, 128, 128}, {220, 190, 255},
        {170, 110, 40}, {128, 0, 0},    {0, 0, 128},    {200, 200, 200}};
    const auto& c = palette[static_cast<std::size_t>(k) % 16];
    return {static_cast<double>(c[2]), static_cast<double>(c[1]), static_cast<double>(c[0])};  // BGR
}

}  // namespace

void write_timeline_png(const fs::path& path, const TimelineReport& rep) {
    constexpr int kScale = 4, kTruth = 12, kGap = 4, kPred = 24;
    const int width = static_cast<int>(std::max<long>(rep.frame_count, 1)) * kScale;
    cv::Mat img(kTruth + kGap + kPred, width, CV_8UC3, cv::Scalar(40, 40, 40));
    for (long f = 0; f < rep.frame_count; ++f) {
        const std::string phase = truth_phase(rep, f);
        cv::Scalar c(90, 90, 90);
        if (phase == "incident" && rep.truth_label)
            c = class_colour(*rep.truth_label);
        else if (phase == "normal")
            c = class_colour(rep.num_classes - 1);
        cv::rectangle(img, cv::Rect(static_cast<int>(f) * kScale, 0, kScale, kTruth), c, cv::FILLED);
    }
    for (std::size_t i = 0; i < rep.frames.size(); ++i) {
        const long f = rep.frames[i] - 1;
        const int span = rep.stride * kScale;
        cv::rectangle(img, cv::Rect(static_cast<int>(f) * kScale, kTruth + kGap, span, kPred),
                      class_colour(rep.predicted[i]), cv::FILLED);
    }
    std::error_code ec;
    if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
    if (!cv::imwrite(path.string(), img)) fail(ErrorKind::Io, "cannot write " + path.string());
}

void write_text_file(const fs::path& path, const std::string& text) {
    std::error_code ec;
    if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
    out << text;
    if (!out) fail(ErrorKind::Io, "write failed: " + path.string());
}

}  // namespace nearmiss
