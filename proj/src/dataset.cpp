#include "dataset.hpp"

#include <fstream>

#include <json.hpp>

#include "error.hpp"
#include "taxonomy.hpp"

namespace nearmiss {

namespace fs = std::filesystem;

std::map<std::string, Domain> load_domains(const fs::path& videos_root) {
    std::map<std::string, Domain> out;
    const auto path = videos_root / "manifest.json";
    if (!fs::exists(path)) return out;
    std::ifstream in(path);
    nlohmann::json j;
    try {
        in >> j;
        for (const auto& v : j.at("videos"))
            out[v.at("video_id").get<std::string>()] = domain_from_string(v.value("domain", std::string("day")));
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::Parse, path.string() + ": " + e.what());
    }
    return out;
}

SegmentSet build_segments(const std::vector<AnnotationRecord>& records, const fs::path& videos_root,
                          const SegmentOptions& opt) {
    SegmentSet out;
    const auto domains = load_domains(videos_root);
    const int normal = taxonomy_size(opt.level) - 1;
    for (const auto& rec : records) {
        try {
            const auto src = load_video(videos_root / rec.video_id, rec.fps);
            const auto it = domains.find(rec.video_id);
            const Domain domain = it == domains.end() ? Domain::Day : it->second;
            auto add = [&](FrameRange r, int label, const char* kind) {
                auto clip = src.read(r, opt.height, opt.width);
                clip.label = label;
                clip.domain = domain;
                clip.provenance = Provenance::Original;
                clip.source_video_id = rec.video_id;
                clip.clip_id = rec.video_id + ":" + kind;
                out.segments.push_back(std::move(clip));
            };
            add(extract_incident_clip(src, rec.window), map_class(rec.class16, opt.level), "incident");
            if (opt.include_normal && rec.window.t4) {
                try {
                    add(extract_normal_clip(src, rec.window), normal, "normal");
                } catch (const Error& e) {
                    if (e.kind() != ErrorKind::Range) throw;
                    out.skipped.push_back(rec.video_id + ":normal: " + e.what());
                }
            }
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::Io && e.kind() != ErrorKind::Range && e.kind() != ErrorKind::Validation)
                throw;
            out.skipped.push_back(rec.video_id + ": " + e.what());
        }
    }
    return out;
}

}  // namespace nearmiss

#include <set>

#include <opencv2/imgcodecs.hpp>

#include "split.hpp"

namespace nearmiss {

namespace {

std::string clip_dir_name(const std::string& clip_id) {
    std::string s = clip_id;
    for (auto& c : s)
        if (c == ':' || c == '#' || c == '/' || c == '\\') c = '.';
    return s;
}

}  // namespace

void save_clip_set(const fs::path& dir, const std::vector<VideoClip>& clips) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) fail(ErrorKind::Io, "cannot create " + dir.string() + ": " + ec.message());
    std::string index;
    std::set<std::string> names;
    for (const auto& c : clips) {
        const auto name = clip_dir_name(c.clip_id);
        if (!names.insert(name).second) fail(ErrorKind::Domain, "duplicate clip id '" + c.clip_id + "'");
        fs::remove_all(dir / name, ec);
        write_frames(dir / name, c);
        nlohmann::ordered_json j;
        j["clip_id"] = c.clip_id;
        j["dir"] = name;
        j["label"] = c.label;
        j["source_video_id"] = c.source_video_id;
        j["domain"] = to_string(c.domain);
        j["provenance"] = to_string(c.provenance);
        j["fps"] = c.fps;
        j["frames"] = c.frames;
        j["height"] = c.height;
        j["width"] = c.width;
        index += j.dump() + "\n";
    }
    std::ofstream out(dir / "clips.jsonl", std::ios::binary);
    if (!out) fail(ErrorKind::Io, "cannot write " + (dir / "clips.jsonl").string());
    out << index;
}

std::vector<VideoClip> load_clip_set(const fs::path& dir, int height, int width) {
    const auto index = dir / "clips.jsonl";
    std::ifstream in(index);
    if (!in) fail(ErrorKind::Io, "not a clip set (missing clips.jsonl): " + dir.string());
    std::vector<VideoClip> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            fail(ErrorKind::Parse, index.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
        try {
            const auto src = load_video(dir / j.at("dir").get<std::string>(), j.at("fps").get<double>());
            auto clip = src.read_all(height > 0 ? height : src.height, width > 0 ? width : src.width);
            clip.clip_id = j.at("clip_id");
            clip.label = j.at("label");
            clip.source_video_id = j.value("source_video_id", clip.clip_id);
            clip.domain = domain_from_string(j.value("domain", std::string("day")));
            const auto prov = j.value("provenance", std::string("original"));
            clip.provenance = prov == "f1" ? Provenance::Fake1 : prov == "f2" ? Provenance::Fake2 : Provenance::Original;
            out.push_back(std::move(clip));
        } catch (const nlohmann::json::exception& e) {
            fail(ErrorKind::Parse, index.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

void save_split(const fs::path& dir, const std::vector<VideoClip>& clips, const SplitAssignment& split) {
    nlohmann::ordered_json j;
    j["mode"] = to_string(split.mode);
    j["seed"] = split.seed;
    auto ids = [&](const std::vector<std::size_t>& idx) {
        auto a = nlohmann::ordered_json::array();
        for (auto i : idx) a.push_back(clips.at(i).clip_id);
        return a;
    };
    j["train"] = ids(split.train);
    j["test"] = ids(split.test);
    j["validate"] = ids(split.validate);
    std::ofstream out(dir / "split.json", std::ios::binary);
    if (!out) fail(ErrorKind::Io, "cannot write " + (dir / "split.json").string());
    out << j.dump(2) << "\n";
}

std::map<std::string, std::vector<std::string>> load_split(const fs::path& dir) {
    std::ifstream in(dir / "split.json");
    if (!in) fail(ErrorKind::Io, "missing split.json in " + dir.string());
    std::map<std::string, std::vector<std::string>> out;
    try {
        nlohmann::json j;
        in >> j;
        for (const char* k : {"train", "test", "validate"}) out[k] = j.value(k, std::vector<std::string>{});
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::Parse, (dir / "split.json").string() + ": " + e.what());
    }
    return out;
}

std::vector<VideoClip> select_partition(const std::vector<VideoClip>& clips,
                                        const std::map<std::string, std::vector<std::string>>& split,
                                        const std::string& partition) {
    const auto it = split.find(partition);
    if (it == split.end()) fail(ErrorKind::Usage, "unknown partition '" + partition + "'");
    const std::set<std::string> ids(it->second.begin(), it->second.end());
    std::vector<VideoClip> out;
    for (const auto& c : clips)
        if (ids.count(c.clip_id)) out.push_back(c);
    return out;
}

}  // namespace nearmiss
