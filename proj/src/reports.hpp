#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "evaluation.hpp"

namespace nearmiss {

/// One trained model of the experiment matrix.
struct CellResult {
    int phi = 0;
    std::uint64_t seed = 0;
    std::string dataset;  // "baseline" | "re-annotation"
    std::string mode;     // "V" | "X"
    int clip_len = 0;
    std::string status = "ok";  // ok | skipped | failed
    std::string message;
    double test_accuracy = 0.0;
    double test_accuracy_ovr = 0.0;
    double val_accuracy = 0.0;
    int best_epoch = -1;
    int n_train = 0, n_test = 0, n_validate = 0;
    ConfusionMatrix cm;

    bool ok() const { return status == "ok"; }
};

std::string format_number(double v);

std::string results_csv(const std::vector<CellResult>& cells);
/// Mean test accuracy over successful seeds, one row per φ in 1..6.
std::string table2_csv(const std::vector<CellResult>& cells);
/// Rows for φ in 4..9: (method, clip_len, φ_c, accuracy).
std::string table3_csv(const std::vector<CellResult>& cells);

struct CrossValRow {
    std::string method;
    int phi = 0;
    double accuracy = 0.0;
    long clips = 0;
};
std::string table4_csv(const std::vector<CrossValRow>& rows);

/// Per-class counts plus the one-vs-rest binary cells.
std::string confusion_csv(const ConfusionMatrix& cm, const std::vector<std::string>& labels);

std::string timeline_csv(const TimelineReport& rep);
/// Colour band per frame (prediction) under a band for the annotated window.
void write_timeline_png(const std::filesystem::path& path, const TimelineReport& rep);

void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace nearmiss
