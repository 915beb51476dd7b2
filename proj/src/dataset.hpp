#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "annotation.hpp"
#include "video.hpp"

namespace nearmiss {

/// video_id -> domain as declared in <root>/manifest.json (absent: day).
std::map<std::string, Domain> load_domains(const std::filesystem::path& videos_root);

struct SegmentOptions {
    int level = 1;
    int height = 64;
    int width = 64;
    bool include_normal = true;
};

struct SegmentSet {
    std::vector<VideoClip> segments;
    std::vector<std::string> skipped;  // one message per unusable record
};

/// Incident [t0,t3) and normal [t4,t5) segments of every record, labelled at
/// the requested taxonomy level and resized to the classifier input.
SegmentSet build_segments(const std::vector<AnnotationRecord>& records, const std::filesystem::path& videos_root,
                          const SegmentOptions& opt);

}  // namespace nearmiss

namespace nearmiss {

/// On-disk clip set: <dir>/<clip dir>/NNNNNN.png plus <dir>/clips.jsonl and,
/// optionally, <dir>/split.json.
void save_clip_set(const std::filesystem::path& dir, const std::vector<VideoClip>& clips);
std::vector<VideoClip> load_clip_set(const std::filesystem::path& dir, int height = 0, int width = 0);

struct SplitAssignment;
void save_split(const std::filesystem::path& dir, const std::vector<VideoClip>& clips, const SplitAssignment& split);
/// Clip ids per partition name ("train", "test", "validate").
std::map<std::string, std::vector<std::string>> load_split(const std::filesystem::path& dir);

/// Clips of a set restricted to one partition of its split.json.
std::vector<VideoClip> select_partition(const std::vector<VideoClip>& clips,
                                        const std::map<std::string, std::vector<std::string>>& split,
                                        const std::string& partition);

}  // namespace nearmiss
