#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace nearmiss {

inline constexpr double kNormalGapSeconds = 2.0;
inline constexpr double kGapTolerance = 1e-6;

/// Incident timing for one video, in seconds. t1/t2 are carried through
/// untouched; nothing downstream reads them.
struct TemporalWindow {
    double t0 = 0.0;
    double t3 = 0.0;
    std::optional<double> t4;
    double t5 = 0.0;
    std::optional<double> mu;
    std::optional<double> t1;
    std::optional<double> t2;

    bool well_ordered() const;

    bool operator==(const TemporalWindow&) const = default;
};

struct AnnotationRecord {
    std::string video_id;
    int class16 = 0;
    TemporalWindow window;
    bool near_miss = false;
    bool ego_involved = true;
    bool real_footage = true;
    double fps = 30.0;

    bool operator==(const AnnotationRecord&) const = default;
};

enum class ViolationCode {
    UninvolvedEgo,
    WrongClass,
    VideoGame,
    NormalOnRisk,
    GapViolation,
    WindowOrder,
    MuOutOfRange,
};

std::string_view to_string(ViolationCode code);
ViolationCode violation_from_string(std::string_view s);

struct Violation {
    ViolationCode code;
    std::string detail;
};

struct InconsistencyReport {
    std::string video_id;
    std::vector<Violation> violations;

    bool clean() const { return violations.empty(); }
    bool has(ViolationCode code) const;
};

/// Human-supplied marks for mislabelled videos; a video listed here is
/// reported as WRONG_CLASS.
struct ClassOverrides {
    std::vector<std::pair<std::string, std::string>> wrong_class;  // (video_id, note)
};

AnnotationRecord parse_annotation_line(std::string_view line, std::size_t line_no = 1);
std::vector<AnnotationRecord> parse_annotations(const std::string& path);
std::vector<AnnotationRecord> parse_annotations_text(std::string_view text);

std::string serialize_annotation(const AnnotationRecord& rec);
std::string serialize_annotations(const std::vector<AnnotationRecord>& recs);
void write_annotations(const std::string& path, const std::vector<AnnotationRecord>& recs);

ClassOverrides load_overrides(const std::string& path);

InconsistencyReport validate_record(const AnnotationRecord& rec, const ClassOverrides* overrides = nullptr);
std::vector<InconsistencyReport> validate_all(const std::vector<AnnotationRecord>& recs,
                                              const ClassOverrides* overrides = nullptr);

/// Keeps records with neither UNINVOLVED_EGO nor VIDEO_GAME.
std::vector<AnnotationRecord> filter_corpus(const std::vector<AnnotationRecord>& recs);

double derive_normal_start(double t3);

/// The single seconds -> frame index conversion point.
long to_frame_index(double seconds, double fps);

std::string report_to_json_lines(const std::vector<InconsistencyReport>& reports);

}  // namespace nearmiss
