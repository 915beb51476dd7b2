#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "annotation.hpp"
#include "video.hpp"

namespace nearmiss {

/// Procedural corpus description. Incident classes are fine (16-class) ids.
struct SynthSpec {
    int n_videos = 8;
    std::vector<int> classes;  // empty -> first n_classes of a spread default list
    int n_classes = 4;
    double fps = 10.0;
    int height = 64;
    int width = 64;
    double night_fraction = 0.5;
    int uninvolved_videos = 0;
    int video_game_videos = 0;
    double near_miss_fraction = 0.25;
    double baseline_noise = 0.3;

    std::vector<int> resolved_classes() const;
    void validate() const;
    nlohmann::ordered_json to_json() const;
    static SynthSpec from_json(const nlohmann::json& j);
};

struct SyntheticVideo {
    AnnotationRecord truth;
    AnnotationRecord baseline;
    bool baseline_mislabelled = false;
    Domain domain = Domain::Day;
    long frame_count = 0;
};

struct SyntheticCorpus {
    SynthSpec spec;
    std::uint64_t seed = 0;
    std::vector<SyntheticVideo> videos;

    std::vector<AnnotationRecord> annotations() const;
    std::vector<AnnotationRecord> baseline_annotations() const;
    nlohmann::ordered_json manifest() const;
};

/// Plans the corpus (timings, labels, flags) without rendering.
SyntheticCorpus plan_synthetic_corpus(const SynthSpec& spec, std::uint64_t seed);

/// Renders every frame of one planned video.
VideoClip render_video(const SyntheticCorpus& corpus, std::size_t index);

/// Writes <out>/<video_id>/NNNNNN.png, manifest.json, annotations.jsonl,
/// annotations_baseline.jsonl and baseline_overrides.jsonl.
SyntheticCorpus generate_synthetic_corpus(const SynthSpec& spec, std::uint64_t seed,
                                          const std::filesystem::path& out_dir);

}  // namespace nearmiss
