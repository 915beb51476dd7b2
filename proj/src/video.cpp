#include "video.hpp"

#include <algorithm>
#include <fstream>

#include <json.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <opencv2/videoio.hpp>

#include "error.hpp"

namespace nearmiss {

namespace fs = std::filesystem;

struct FrameSource::Backend {
    std::vector<fs::path> files;   // image directory
    fs::path container;            // video file
    VideoClip memory;              // in-memory frames
    enum class Kind { Images, Container, Memory } kind = Kind::Images;
};

namespace {

bool is_image(const fs::path& p) {
    auto ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".bmp";
}

void append_frame(const cv::Mat& bgr, int out_h, int out_w, std::vector<float>& dst) {
    cv::Mat rgb;
    if (bgr.channels() == 1)
        cv::cvtColor(bgr, rgb, cv::COLOR_GRAY2RGB);
    else if (bgr.channels() == 4)
        cv::cvtColor(bgr, rgb, cv::COLOR_BGRA2RGB);
    else
        cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
    cv::Mat f;
    rgb.convertTo(f, CV_32FC3, bgr.depth() == CV_16U ? 1.0 / 65535.0 : 1.0 / 255.0);
    if (f.rows != out_h || f.cols != out_w) {
        cv::Mat r;
        cv::resize(f, r, cv::Size(out_w, out_h), 0, 0, cv::INTER_LINEAR);
        f = r;
    }
    if (!f.isContinuous()) f = f.clone();
    const auto* p = f.ptr<float>();
    dst.insert(dst.end(), p, p + static_cast<std::size_t>(out_h) * out_w * 3);
}

std::optional<double> manifest_fps(const fs::path& video_dir) {
    const auto manifest = video_dir.parent_path() / "manifest.json";
    if (!fs::exists(manifest)) return std::nullopt;
    std::ifstream in(manifest);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::Parse, manifest.string() + ": " + e.what());
    }
    const auto id = video_dir.filename().string();
    if (j.contains("videos"))
        for (const auto& v : j["videos"])
            if (v.value("video_id", "") == id) return v.at("fps").get<double>();
    return std::nullopt;
}

}  // namespace

std::string_view to_string(Domain d) { return d == Domain::Day ? "day" : "night"; }

std::string_view to_string(Provenance p) {
    switch (p) {
        case Provenance::Original: return "original";
        case Provenance::Fake1: return "f1";
        case Provenance::Fake2: return "f2";
    }
    return "original";
}

Domain domain_from_string(std::string_view s) {
    if (s == "day") return Domain::Day;
    if (s == "night") return Domain::Night;
    fail(ErrorKind::Parse, "unknown domain '" + std::string(s) + "'");
}

VideoClip VideoClip::metadata_only() const {
    VideoClip c;
    c.height = height;
    c.width = width;
    c.fps = fps;
    c.domain = domain;
    c.provenance = provenance;
    c.label = label;
    c.source_video_id = source_video_id;
    c.clip_id = clip_id;
    return c;
}

VideoClip FrameSource::read(FrameRange range, int out_h, int out_w) const {
    if (!backend) fail(ErrorKind::Io, "frame source has no reader");
    if (range.begin < 0 || range.end > frame_count || range.begin >= range.end)
        fail(ErrorKind::Range, "frame range [" + std::to_string(range.begin) + ", " + std::to_string(range.end) +
                                   ") outside video '" + video_id + "' of " + std::to_string(frame_count) + " frames");
    VideoClip clip;
    clip.height = out_h;
    clip.width = out_w;
    clip.fps = fps;
    clip.source_video_id = video_id;
    clip.clip_id = video_id;
    clip.frames = static_cast<int>(range.size());
    clip.pixels.reserve(static_cast<std::size_t>(clip.frames) * clip.frame_size());
    switch (backend->kind) {
        case Backend::Kind::Images:
            for (long i = range.begin; i < range.end; ++i) {
                const auto& file = backend->files[static_cast<std::size_t>(i)];
                cv::Mat img = cv::imread(file.string(), cv::IMREAD_UNCHANGED);
                if (img.empty()) fail(ErrorKind::Io, "cannot decode frame " + file.string());
                append_frame(img, out_h, out_w, clip.pixels);
            }
            break;
        case Backend::Kind::Container: {
            cv::VideoCapture cap(backend->container.string());
            if (!cap.isOpened()) fail(ErrorKind::Io, "cannot open video " + backend->container.string());
            cap.set(cv::CAP_PROP_POS_FRAMES, static_cast<double>(range.begin));
            cv::Mat img;
            for (long i = range.begin; i < range.end; ++i) {
                if (!cap.read(img)) fail(ErrorKind::Io, "decoder stopped at frame " + std::to_string(i));
                append_frame(img, out_h, out_w, clip.pixels);
            }
            break;
        }
        case Backend::Kind::Memory: {
            const auto& m = backend->memory;
            for (long i = range.begin; i < range.end; ++i) {
                const float* f = m.frame(static_cast<int>(i));
                if (m.height == out_h && m.width == out_w) {
                    clip.pixels.insert(clip.pixels.end(), f, f + m.frame_size());
                } else {
                    cv::Mat src(m.height, m.width, CV_32FC3, const_cast<float*>(f));
                    cv::Mat r;
                    cv::resize(src, r, cv::Size(out_w, out_h), 0, 0, cv::INTER_LINEAR);
                    clip.pixels.insert(clip.pixels.end(), r.ptr<float>(), r.ptr<float>() + clip.frame_size());
                }
            }
            clip.domain = m.domain;
            clip.label = m.label;
            break;
        }
    }
    for (auto& v : clip.pixels) v = std::clamp(v, 0.0f, 1.0f);
    return clip;
}

FrameSource FrameSource::from_clip(VideoClip clip) {
    if (clip.frames < 1) fail(ErrorKind::Range, "empty video '" + clip.source_video_id + "'");
    FrameSource src;
    src.video_id = clip.source_video_id;
    src.frame_count = clip.frames;
    src.fps = clip.fps;
    src.height = clip.height;
    src.width = clip.width;
    auto b = std::make_shared<FrameSource::Backend>();
    b->kind = FrameSource::Backend::Kind::Memory;
    b->memory = std::move(clip);
    src.backend = std::move(b);
    return src;
}

FrameSource load_video(const fs::path& path, std::optional<double> fps) {
    std::error_code ec;
    if (!fs::exists(path, ec)) fail(ErrorKind::Io, "video path does not exist: " + path.string());
    FrameSource src;
    auto b = std::make_shared<FrameSource::Backend>();
    if (fs::is_directory(path)) {
        src.video_id = path.filename().string();
        for (const auto& e : fs::directory_iterator(path))
            if (e.is_regular_file() && is_image(e.path())) b->files.push_back(e.path());
        std::sort(b->files.begin(), b->files.end());
        if (b->files.empty()) fail(ErrorKind::Range, "empty video: no frames in " + path.string());
        src.frame_count = static_cast<long>(b->files.size());
        cv::Mat first = cv::imread(b->files.front().string(), cv::IMREAD_UNCHANGED);
        if (first.empty()) fail(ErrorKind::Io, "cannot decode " + b->files.front().string());
        src.height = first.rows;
        src.width = first.cols;
        if (!fps) fps = manifest_fps(path);
        if (!fps) fail(ErrorKind::Io, "frame rate unknown for " + path.string() + " (no manifest entry)");
    } else {
        src.video_id = path.stem().string();
        b->kind = FrameSource::Backend::Kind::Container;
        b->container = path;
        cv::VideoCapture cap(path.string());
        if (!cap.isOpened()) fail(ErrorKind::Io, "cannot open video " + path.string());
        src.frame_count = static_cast<long>(cap.get(cv::CAP_PROP_FRAME_COUNT));
        src.width = static_cast<int>(cap.get(cv::CAP_PROP_FRAME_WIDTH));
        src.height = static_cast<int>(cap.get(cv::CAP_PROP_FRAME_HEIGHT));
        if (!fps) fps = cap.get(cv::CAP_PROP_FPS);
        if (src.frame_count < 1) fail(ErrorKind::Range, "empty video: " + path.string());
    }
    if (!(*fps > 0.0)) fail(ErrorKind::Validation, "fps must be > 0 for " + path.string());
    src.fps = *fps;
    src.backend = std::move(b);
    return src;
}

FrameRange extract_incident_clip(const FrameSource& src, const TemporalWindow& w) {
    const FrameRange r{to_frame_index(w.t0, src.fps), to_frame_index(w.t3, src.fps)};
    if (r.begin < 0 || r.begin >= r.end || r.end > src.frame_count)
        fail(ErrorKind::Range, "incident window [" + std::to_string(r.begin) + ", " + std::to_string(r.end) +
                                   ") does not fit video '" + src.video_id + "' of " +
                                   std::to_string(src.frame_count) + " frames");
    return r;
}

FrameRange extract_normal_clip(const FrameSource& src, const TemporalWindow& w) {
    if (!w.t4) fail(ErrorKind::Validation, "video '" + src.video_id + "' has no normal segment (t4 absent)");
    // t5 may round one frame past the decoded length; clamp to what exists.
    const FrameRange r{to_frame_index(*w.t4, src.fps), std::min(to_frame_index(w.t5, src.fps), src.frame_count)};
    if (r.begin < 0 || r.begin >= r.end)
        fail(ErrorKind::Range, "normal segment of '" + src.video_id + "' is empty");
    return r;
}

SamplePolicy sample_policy_from_string(std::string_view s) {
    if (s == "head") return SamplePolicy::Head;
    if (s == "uniform" || s == "uniform-stride") return SamplePolicy::UniformStride;
    if (s == "random") return SamplePolicy::Random;
    fail(ErrorKind::Usage, "unknown sampling policy '" + std::string(s) + "'");
}

bool valid_clip_length(int len) { return len == 16 || len == 32 || len == 64; }

std::vector<int> window_indices(long n, int len, SamplePolicy policy, Rng& rng) {
    if (!valid_clip_length(len)) fail(ErrorKind::Domain, "clip length must be 16, 32 or 64");
    if (n <= 0) fail(ErrorKind::Range, "cannot sample from an empty frame range");
    std::vector<int> idx(static_cast<std::size_t>(len));
    if (n < len) {
        for (int k = 0; k < len; ++k) idx[k] = static_cast<int>(std::min<long>(k, n - 1));
        return idx;
    }
    switch (policy) {
        case SamplePolicy::Head:
            for (int k = 0; k < len; ++k) idx[k] = k;
            break;
        case SamplePolicy::UniformStride:
            // round(k (n-1) / (L-1)) in integers; L-1 is odd so no exact halves occur.
            for (int k = 0; k < len; ++k)
                idx[k] = static_cast<int>((2L * k * (n - 1) + (len - 1)) / (2L * (len - 1)));
            break;
        case SamplePolicy::Random: {
            const auto start = static_cast<int>(rng.below(static_cast<std::uint64_t>(n - len + 1)));
            for (int k = 0; k < len; ++k) idx[k] = start + k;
            break;
        }
    }
    return idx;
}

VideoClip take_frames(const VideoClip& segment, const std::vector<int>& indices) {
    VideoClip out = segment.metadata_only();
    out.frames = static_cast<int>(indices.size());
    out.pixels.resize(static_cast<std::size_t>(out.frames) * out.frame_size());
    for (std::size_t k = 0; k < indices.size(); ++k) {
        if (indices[k] < 0 || indices[k] >= segment.frames) fail(ErrorKind::Range, "frame index out of segment");
        std::copy_n(segment.frame(indices[k]), segment.frame_size(), out.frame(static_cast<int>(k)));
    }
    return out;
}

VideoClip sample_window(const VideoClip& segment, int len, SamplePolicy policy, Rng& rng) {
    return take_frames(segment, window_indices(segment.frames, len, policy, rng));
}

void write_frames(const fs::path& dir, const VideoClip& clip) {
    fs::create_directories(dir);
    for (int t = 0; t < clip.frames; ++t) {
        cv::Mat f(clip.height, clip.width, CV_32FC3, const_cast<float*>(clip.frame(t)));
        cv::Mat bgr, u8;
        cv::cvtColor(f, bgr, cv::COLOR_RGB2BGR);
        bgr.convertTo(u8, CV_8UC3, 255.0);
        char name[32];
        std::snprintf(name, sizeof name, "%06d.png", t);
        if (!cv::imwrite((dir / name).string(), u8)) fail(ErrorKind::Io, "cannot write frame to " + dir.string());
    }
}

}  // namespace nearmiss
