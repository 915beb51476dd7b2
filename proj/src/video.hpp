#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "annotation.hpp"
#include "random.hpp"

namespace nearmiss {

enum class Domain { Day, Night };
enum class Provenance { Original, Fake1, Fake2 };

std::string_view to_string(Domain d);
std::string_view to_string(Provenance p);
Domain domain_from_string(std::string_view s);

/// Frames (T, H, W, 3), RGB in [0, 1].
struct VideoClip {
    int frames = 0;
    int height = 0;
    int width = 0;
    std::vector<float> pixels;
    double fps = 30.0;
    Domain domain = Domain::Day;
    Provenance provenance = Provenance::Original;
    int label = 0;
    std::string source_video_id;
    std::string clip_id;

    std::size_t frame_size() const { return static_cast<std::size_t>(height) * width * 3; }
    float* frame(int t) { return pixels.data() + static_cast<std::size_t>(t) * frame_size(); }
    const float* frame(int t) const { return pixels.data() + static_cast<std::size_t>(t) * frame_size(); }

    /// Same metadata, no frames.
    VideoClip metadata_only() const;
};

/// Half-open frame interval [begin, end).
struct FrameRange {
    long begin = 0;
    long end = 0;
    long size() const { return end - begin; }
    bool operator==(const FrameRange&) const = default;
};

/// Sequential frame accessor over a directory of numbered images, a
/// container file (decoded by OpenCV), or frames already in memory.
class FrameSource {
public:
    std::string video_id;
    long frame_count = 0;
    double fps = 30.0;
    int height = 0;  // native resolution
    int width = 0;

    /// Reads frames [range) resized (bilinear) to out_h x out_w.
    VideoClip read(FrameRange range, int out_h, int out_w) const;
    VideoClip read_all(int out_h, int out_w) const { return read({0, frame_count}, out_h, out_w); }

    static FrameSource from_clip(VideoClip clip);

    struct Backend;
    std::shared_ptr<const Backend> backend;
};

/// fps: explicit value, else the corpus manifest.json in the parent
/// directory, else an error.
FrameSource load_video(const std::filesystem::path& path, std::optional<double> fps = std::nullopt);

FrameRange extract_incident_clip(const FrameSource& src, const TemporalWindow& w);
FrameRange extract_normal_clip(const FrameSource& src, const TemporalWindow& w);

enum class SamplePolicy { Head, UniformStride, Random };
SamplePolicy sample_policy_from_string(std::string_view s);

bool valid_clip_length(int len);

/// Indices (relative to the range start) of an L-frame window over n frames.
/// Short ranges are padded by repeating the last frame.
std::vector<int> window_indices(long n, int len, SamplePolicy policy, Rng& rng);

VideoClip take_frames(const VideoClip& segment, const std::vector<int>& indices);
VideoClip sample_window(const VideoClip& segment, int len, SamplePolicy policy, Rng& rng);

/// Writes <dir>/<frame_index:06d>.png.
void write_frames(const std::filesystem::path& dir, const VideoClip& clip);

}  // namespace nearmiss
