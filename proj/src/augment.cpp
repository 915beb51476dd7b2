#include "augment.hpp"

#include <algorithm>
#include <limits>

#include <opencv2/imgproc.hpp>

#include "error.hpp"

namespace nearmiss {

void AugmentConfig::validate() const {
    for (double p : {p_hflip, p_autocontrast, p_grayscale, p_perspective})
        if (!(p >= 0.0 && p <= 1.0)) fail(ErrorKind::Validation, "augmentation probabilities must lie in [0, 1]");
    if (!(distortion_scale >= 0.0 && distortion_scale <= 1.0))
        fail(ErrorKind::Validation, "distortion_scale must lie in [0, 1]");
}

void hflip(VideoClip& clip) {
    for (int t = 0; t < clip.frames; ++t) {
        float* f = clip.frame(t);
        for (int y = 0; y < clip.height; ++y) {
            float* row = f + static_cast<std::size_t>(y) * clip.width * 3;
            for (int x = 0; x < clip.width / 2; ++x)
                for (int c = 0; c < 3; ++c) std::swap(row[x * 3 + c], row[(clip.width - 1 - x) * 3 + c]);
        }
    }
}

void autocontrast(VideoClip& clip) {
    // Per-channel stretch; extrema taken over the whole clip so every frame
    // receives the same mapping.
    float lo[3], hi[3];
    std::fill(lo, lo + 3, std::numeric_limits<float>::max());
    std::fill(hi, hi + 3, std::numeric_limits<float>::lowest());
    for (std::size_t i = 0; i < clip.pixels.size(); ++i) {
        const auto c = i % 3;
        lo[c] = std::min(lo[c], clip.pixels[i]);
        hi[c] = std::max(hi[c], clip.pixels[i]);
    }
    for (std::size_t i = 0; i < clip.pixels.size(); ++i) {
        const auto c = i % 3;
        if (hi[c] > lo[c]) clip.pixels[i] = (clip.pixels[i] - lo[c]) / (hi[c] - lo[c]);
    }
}

void grayscale(VideoClip& clip) {
    for (std::size_t i = 0; i + 2 < clip.pixels.size(); i += 3) {
        const float y = 0.299f * clip.pixels[i] + 0.587f * clip.pixels[i + 1] + 0.114f * clip.pixels[i + 2];
        clip.pixels[i] = clip.pixels[i + 1] = clip.pixels[i + 2] = y;
    }
}

PerspectiveCorners draw_perspective(int height, int width, double distortion_scale, Rng& rng) {
    const int half_h = height / 2, half_w = width / 2;
    const int dw = static_cast<int>(distortion_scale * half_w) + 1;
    const int dh = static_cast<int>(distortion_scale * half_h) + 1;
    auto rnd = [&](int lo, int hi) { return static_cast<float>(rng.range(lo, hi - 1)); };  // [lo, hi)
    PerspectiveCorners c{};
    const float start[4][2] = {{0.f, 0.f},
                               {static_cast<float>(width - 1), 0.f},
                               {static_cast<float>(width - 1), static_cast<float>(height - 1)},
                               {0.f, static_cast<float>(height - 1)}};
    std::copy(&start[0][0], &start[0][0] + 8, &c.start[0][0]);
    c.end[0][0] = rnd(0, dw);
    c.end[0][1] = rnd(0, dh);
    c.end[1][0] = rnd(width - dw, width);
    c.end[1][1] = rnd(0, dh);
    c.end[2][0] = rnd(width - dw, width);
    c.end[2][1] = rnd(height - dh, height);
    c.end[3][0] = rnd(0, dw);
    c.end[3][1] = rnd(height - dh, height);
    return c;
}

void warp_perspective(VideoClip& clip, const PerspectiveCorners& corners) {
    std::vector<cv::Point2f> src, dst;
    for (int i = 0; i < 4; ++i) {
        src.emplace_back(corners.start[i][0], corners.start[i][1]);
        dst.emplace_back(corners.end[i][0], corners.end[i][1]);
    }
    const cv::Mat m = cv::getPerspectiveTransform(src, dst);
    for (int t = 0; t < clip.frames; ++t) {
        cv::Mat f(clip.height, clip.width, CV_32FC3, clip.frame(t));
        cv::Mat out;
        cv::warpPerspective(f, out, m, f.size(), cv::INTER_LINEAR, cv::BORDER_CONSTANT, cv::Scalar::all(0));
        out.copyTo(f);
    }
}

VideoClip augment_frames(const VideoClip& clip, const AugmentConfig& cfg, Rng& rng) {
    VideoClip out = clip;
    // Draw every decision up front so the stream does not depend on the outcomes.
    const bool flip = rng.bernoulli(cfg.p_hflip);
    const bool contrast = rng.bernoulli(cfg.p_autocontrast);
    const bool gray = rng.bernoulli(cfg.p_grayscale);
    const bool persp = rng.bernoulli(cfg.p_perspective);
    const auto corners = draw_perspective(clip.height, clip.width, cfg.distortion_scale, rng);
    if (flip) hflip(out);
    if (contrast) autocontrast(out);
    if (gray) grayscale(out);
    if (persp) warp_perspective(out, corners);
    for (auto& v : out.pixels) v = std::clamp(v, 0.0f, 1.0f);
    return out;
}

}  // namespace nearmiss
