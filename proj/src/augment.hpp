#pragma once

#include "random.hpp"
#include "video.hpp"

namespace nearmiss {

struct AugmentConfig {
    double p_hflip = 0.5;
    double p_autocontrast = 0.5;
    double p_grayscale = 0.5;
    double p_perspective = 0.5;
    double distortion_scale = 0.1;

    static AugmentConfig none() { return {0.0, 0.0, 0.0, 0.0, 0.1}; }
    void validate() const;
};

/// One random draw per clip; the chosen transforms hit every frame alike.
VideoClip augment_frames(const VideoClip& clip, const AugmentConfig& cfg, Rng& rng);

void hflip(VideoClip& clip);
void autocontrast(VideoClip& clip);
void grayscale(VideoClip& clip);

/// Corner displacements as drawn by the random-perspective transform.
struct PerspectiveCorners {
    float start[4][2];
    float end[4][2];
};
PerspectiveCorners draw_perspective(int height, int width, double distortion_scale, Rng& rng);
void warp_perspective(VideoClip& clip, const PerspectiveCorners& corners);

}  // namespace nearmiss
