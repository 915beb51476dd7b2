#include "annotation.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "error.hpp"
#include "taxonomy.hpp"

namespace nearmiss {

using nlohmann::json;

namespace {

constexpr std::array<std::string_view, 7> kCodeNames{
    "UNINVOLVED_EGO", "WRONG_CLASS", "VIDEO_GAME", "NORMAL_ON_RISK",
    "GAP_VIOLATION",  "WINDOW_ORDER", "MU_OUT_OF_RANGE",
};

std::string where(std::size_t line_no, const std::string& field) {
    return "line " + std::to_string(line_no) + ": field '" + field + "'";
}

double read_time(const json& j, const char* key, std::size_t line_no) {
    if (!j.contains(key)) fail(ErrorKind::Parse, where(line_no, key) + " missing");
    const auto& v = j[key];
    if (!v.is_number()) fail(ErrorKind::Parse, where(line_no, key) + " must be a number");
    const double t = v.get<double>();
    if (!std::isfinite(t)) fail(ErrorKind::Validation, where(line_no, key) + " is not finite");
    return t;
}

std::optional<double> read_optional_time(const json& j, const char* key, std::size_t line_no) {
    if (!j.contains(key) || j[key].is_null()) return std::nullopt;
    return read_time(j, key, line_no);
}

bool read_bool(const json& j, const char* key, std::size_t line_no, bool fallback) {
    if (!j.contains(key)) return fallback;
    if (!j[key].is_boolean()) fail(ErrorKind::Parse, where(line_no, key) + " must be a boolean");
    return j[key].get<bool>();
}

}  // namespace

bool TemporalWindow::well_ordered() const {
    if (!(0.0 <= t0 && t0 < t3 && t3 <= t5)) return false;
    if (t4 && !(*t4 < t5)) return false;
    return true;
}

std::string_view to_string(ViolationCode code) { return kCodeNames[static_cast<int>(code)]; }

ViolationCode violation_from_string(std::string_view s) {
    for (std::size_t i = 0; i < kCodeNames.size(); ++i)
        if (kCodeNames[i] == s) return static_cast<ViolationCode>(i);
    fail(ErrorKind::Parse, "unknown violation code '" + std::string(s) + "'");
}

bool InconsistencyReport::has(ViolationCode code) const {
    for (const auto& v : violations)
        if (v.code == code) return true;
    return false;
}

AnnotationRecord parse_annotation_line(std::string_view line, std::size_t line_no) {
    json j;
    try {
        j = json::parse(line);
    } catch (const json::exception& e) {
        fail(ErrorKind::Parse, "line " + std::to_string(line_no) + ": malformed JSON (" + e.what() + ")");
    }
    if (!j.is_object()) fail(ErrorKind::Parse, "line " + std::to_string(line_no) + ": expected an object");

    AnnotationRecord rec;
    if (!j.contains("video_id") || !j["video_id"].is_string())
        fail(ErrorKind::Parse, where(line_no, "video_id") + " missing or not a string");
    rec.video_id = j["video_id"].get<std::string>();
    if (rec.video_id.empty()) fail(ErrorKind::Validation, where(line_no, "video_id") + " is empty");

    if (!j.contains("class16")) fail(ErrorKind::Parse, where(line_no, "class16") + " missing");
    const auto& cls = j["class16"];
    if (cls.is_string()) {
        try {
            rec.class16 = fine_class_from_label(cls.get<std::string>());
        } catch (const Error&) {
            fail(ErrorKind::Validation, where(line_no, "class16") + " unknown label '" + cls.get<std::string>() + "'");
        }
    } else if (cls.is_number_integer()) {
        rec.class16 = cls.get<int>();
        if (rec.class16 < 0 || rec.class16 >= kFineClassCount)
            fail(ErrorKind::Validation, where(line_no, "class16") + " out of range [0,16)");
    } else {
        fail(ErrorKind::Parse, where(line_no, "class16") + " must be a label or integer id");
    }

    rec.window.t0 = read_time(j, "t0", line_no);
    rec.window.t3 = read_time(j, "t3", line_no);
    rec.window.t4 = read_optional_time(j, "t4", line_no);
    rec.window.t5 = read_time(j, "t5", line_no);
    rec.window.mu = read_optional_time(j, "mu", line_no);
    rec.window.t1 = read_optional_time(j, "t1", line_no);
    rec.window.t2 = read_optional_time(j, "t2", line_no);

    rec.fps = read_time(j, "fps", line_no);
    if (rec.fps <= 0.0) fail(ErrorKind::Validation, where(line_no, "fps") + " must be > 0");

    rec.ego_involved = read_bool(j, "ego_involved", line_no, true);
    rec.real_footage = read_bool(j, "real_footage", line_no, true);
    rec.near_miss = read_bool(j, "near_miss", line_no, false);
    if (rec.near_miss && !rec.window.mu)
        fail(ErrorKind::Validation, where(line_no, "mu") + " required when near_miss is true");
    return rec;
}

std::vector<AnnotationRecord> parse_annotations_text(std::string_view text) {
    std::vector<AnnotationRecord> out;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto nl = text.find('\n', pos);
        const auto end = nl == std::string_view::npos ? text.size() : nl;
        auto line = text.substr(pos, end - pos);
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.find_first_not_of(" \t") != std::string_view::npos) out.push_back(parse_annotation_line(line, line_no));
        if (nl == std::string_view::npos) break;
        pos = nl + 1;
    }
    return out;
}

std::vector<AnnotationRecord> parse_annotations(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::Io, "cannot open annotation file " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_annotations_text(ss.str());
}

std::string serialize_annotation(const AnnotationRecord& rec) {
    // ordered_json keeps the key order stable for byte-identical output
    nlohmann::ordered_json j;
    j["video_id"] = rec.video_id;
    j["class16"] = rec.class16;
    j["t0"] = rec.window.t0;
    if (rec.window.t1) j["t1"] = *rec.window.t1;
    if (rec.window.t2) j["t2"] = *rec.window.t2;
    j["t3"] = rec.window.t3;
    j["t4"] = rec.window.t4 ? json(*rec.window.t4) : json(nullptr);
    j["t5"] = rec.window.t5;
    j["mu"] = rec.window.mu ? json(*rec.window.mu) : json(nullptr);
    j["fps"] = rec.fps;
    j["ego_involved"] = rec.ego_involved;
    j["real_footage"] = rec.real_footage;
    j["near_miss"] = rec.near_miss;
    return j.dump();
}

std::string serialize_annotations(const std::vector<AnnotationRecord>& recs) {
    std::string out;
    for (const auto& r : recs) {
        out += serialize_annotation(r);
        out += '\n';
    }
    return out;
}

void write_annotations(const std::string& path, const std::vector<AnnotationRecord>& recs) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorKind::Io, "cannot write " + path);
    out << serialize_annotations(recs);
}

ClassOverrides load_overrides(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::Io, "cannot open override file " + path);
    ClassOverrides ov;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception&) {
            fail(ErrorKind::Parse, path + ": line " + std::to_string(line_no) + ": malformed JSON");
        }
        if (j.value("wrong_class", false))
            ov.wrong_class.emplace_back(j.at("video_id").get<std::string>(), j.value("note", std::string()));
    }
    return ov;
}

InconsistencyReport validate_record(const AnnotationRecord& rec, const ClassOverrides* overrides) {
    InconsistencyReport rep;
    rep.video_id = rec.video_id;
    auto add = [&](ViolationCode c, std::string detail) { rep.violations.push_back({c, std::move(detail)}); };
    const auto& w = rec.window;

    if (!rec.ego_involved) add(ViolationCode::UninvolvedEgo, "ego vehicle not involved in the incident");
    if (overrides) {
        for (const auto& [id, note] : overrides->wrong_class)
            if (id == rec.video_id) add(ViolationCode::WrongClass, note.empty() ? "marked by reviewer" : note);
    }
    if (!rec.real_footage) add(ViolationCode::VideoGame, "footage is not real-world video");

    // Normal segment starting before the incident (or the near-miss) has ended.
    if (w.t4) {
        if (*w.t4 < w.t3)
            add(ViolationCode::NormalOnRisk, "normal segment starts at " + std::to_string(*w.t4) +
                                                 " before incident end " + std::to_string(w.t3));
        else if (w.mu && *w.t4 < *w.mu)
            add(ViolationCode::NormalOnRisk, "normal segment starts at " + std::to_string(*w.t4) +
                                                 " before near-miss end " + std::to_string(*w.mu));
    }
    if (rec.near_miss && rec.class16 == kFineNormal)
        add(ViolationCode::NormalOnRisk, "near-miss video labelled Normal");

    if (w.t4 && std::abs(*w.t4 - (w.t3 + kNormalGapSeconds)) > kGapTolerance)
        add(ViolationCode::GapViolation, "t4 - t3 = " + std::to_string(*w.t4 - w.t3) + ", expected 2.0");
    if (!w.well_ordered()) add(ViolationCode::WindowOrder, "window must satisfy 0 <= t0 < t3 <= t5 and t4 < t5");
    if (w.mu && !(w.t0 <= *w.mu && *w.mu <= w.t5))
        add(ViolationCode::MuOutOfRange, "mu = " + std::to_string(*w.mu) + " outside [t0, t5]");
    return rep;
}

std::vector<InconsistencyReport> validate_all(const std::vector<AnnotationRecord>& recs,
                                              const ClassOverrides* overrides) {
    std::vector<InconsistencyReport> out;
    out.reserve(recs.size());
    for (const auto& r : recs) out.push_back(validate_record(r, overrides));
    return out;
}

std::vector<AnnotationRecord> filter_corpus(const std::vector<AnnotationRecord>& recs) {
    std::vector<AnnotationRecord> out;
    for (const auto& r : recs) {
        const auto rep = validate_record(r);
        if (!rep.has(ViolationCode::UninvolvedEgo) && !rep.has(ViolationCode::VideoGame)) out.push_back(r);
    }
    return out;
}

double derive_normal_start(double t3) {
    if (!(t3 >= 0.0)) fail(ErrorKind::Domain, "t3 must be non-negative");
    return t3 + kNormalGapSeconds;
}

long to_frame_index(double seconds, double fps) {
    // The epsilon absorbs representation error when t*fps is an exact integer
    // (e.g. 0.7 * 30 evaluating to 20.999...).
    return static_cast<long>(std::floor(seconds * fps + 1e-9));
}

std::string report_to_json_lines(const std::vector<InconsistencyReport>& reports) {
    std::string out;
    for (const auto& rep : reports) {
        nlohmann::ordered_json j;
        j["video_id"] = rep.video_id;
        j["violations"] = nlohmann::ordered_json::array();
        for (const auto& v : rep.violations) j["violations"].push_back({{"code", to_string(v.code)}, {"detail", v.detail}});
        out += j.dump();
        out += '\n';
    }
    return out;
}

}  // namespace nearmiss
