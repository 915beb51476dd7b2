#include "synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "error.hpp"
#include "random.hpp"
#include "taxonomy.hpp"

namespace nearmiss {

namespace fs = std::filesystem;

namespace {

// Spread so that small class counts already cover every coarse category.
constexpr int kDefaultClassOrder[] = {1, 10, 12, 7, 3, 5, 14, 0, 11, 2, 4, 6, 8, 9, 13};

enum class Participant { Pedestrian, Cyclist, Motorbike, Truck, Car, Roadblock, Facility, None };
enum class Action { Crossing, Hitting, Overtaking, SelfAccident };

struct Look {
    Participant who;
    Action what;
};

Look look_for(int class16) {
    switch (class16) {
        case 0: return {Participant::Pedestrian, Action::Crossing};
        case 1: return {Participant::Pedestrian, Action::Hitting};
        case 2: return {Participant::Cyclist, Action::Crossing};
        case 3: return {Participant::Cyclist, Action::Hitting};
        case 4: return {Participant::Motorbike, Action::Crossing};
        case 5: return {Participant::Motorbike, Action::Hitting};
        case 6: return {Participant::Truck, Action::Crossing};
        case 7: return {Participant::Truck, Action::Hitting};
        case 8: return {Participant::Truck, Action::Overtaking};
        case 9: return {Participant::Car, Action::Crossing};
        case 10: return {Participant::Car, Action::Hitting};
        case 11: return {Participant::Car, Action::Overtaking};
        case 12: return {Participant::Roadblock, Action::Hitting};
        case 13: return {Participant::Facility, Action::Hitting};
        case 14: return {Participant::None, Action::SelfAccident};
        default: return {Participant::None, Action::Crossing};
    }
}

struct Body {
    float rgb[3];
    float w, h;  // normalised size at unit scale
};

Body body_for(Participant p) {
    switch (p) {
        case Participant::Pedestrian: return {{0.90f, 0.25f, 0.25f}, 0.10f, 0.26f};
        case Participant::Cyclist: return {{0.20f, 0.80f, 0.30f}, 0.12f, 0.22f};
        case Participant::Motorbike: return {{0.95f, 0.85f, 0.10f}, 0.14f, 0.18f};
        case Participant::Truck: return {{0.20f, 0.30f, 0.90f}, 0.34f, 0.30f};
        case Participant::Car: return {{0.92f, 0.92f, 0.97f}, 0.26f, 0.18f};
        case Participant::Roadblock: return {{1.00f, 0.55f, 0.00f}, 0.30f, 0.12f};
        case Participant::Facility: return {{0.60f, 0.60f, 0.65f}, 0.08f, 0.35f};
        case Participant::None: break;
    }
    return {{0.f, 0.f, 0.f}, 0.f, 0.f};
}

double round_tenth(double x) { return std::round(x * 10.0) / 10.0; }

struct Scene {
    float jitter;     // lateral offset of the object path
    float direction;  // crossing direction / overtaking side
    float speed;      // lane-marking scroll speed
    float tint;       // small colour variation of the participant
    std::uint64_t noise_seed;
};

Scene scene_for(std::uint64_t seed, const std::string& video_id) {
    Rng rng(mix_seed(seed, video_id + "/scene"));
    Scene s;
    s.jitter = static_cast<float>(rng.uniform(-0.08, 0.08));
    s.direction = rng.bernoulli(0.5) ? 1.0f : -1.0f;
    s.speed = static_cast<float>(rng.uniform(1.5, 3.0));
    s.tint = static_cast<float>(rng.uniform(-0.08, 0.08));
    s.noise_seed = rng.next();
    return s;
}

}  // namespace

std::vector<int> SynthSpec::resolved_classes() const {
    if (!classes.empty()) return classes;
    std::vector<int> out;
    for (int i = 0; i < n_classes; ++i) out.push_back(kDefaultClassOrder[i]);
    return out;
}

void SynthSpec::validate() const {
    if (n_videos < 1) fail(ErrorKind::Usage, "synth: n_videos must be >= 1");
    if (classes.empty() && (n_classes < 1 || n_classes > 15)) fail(ErrorKind::Usage, "synth: n_classes must be in [1, 15]");
    for (int c : classes)
        if (c < 0 || c >= kFineNormal) fail(ErrorKind::Usage, "synth: incident classes must be fine ids in [0, 15)");
    if (!(fps > 0.0)) fail(ErrorKind::Usage, "synth: fps must be > 0");
    if (height < 8 || width < 8) fail(ErrorKind::Usage, "synth: resolution must be at least 8x8");
    if (!(night_fraction >= 0.0 && night_fraction <= 1.0)) fail(ErrorKind::Usage, "synth: night_fraction in [0,1]");
    if (uninvolved_videos < 0 || video_game_videos < 0 || uninvolved_videos + video_game_videos > n_videos)
        fail(ErrorKind::Usage, "synth: flagged video counts exceed n_videos");
    if (!(baseline_noise >= 0.0 && baseline_noise <= 1.0)) fail(ErrorKind::Usage, "synth: baseline_noise in [0,1]");
    if (!(near_miss_fraction >= 0.0 && near_miss_fraction <= 1.0))
        fail(ErrorKind::Usage, "synth: near_miss_fraction in [0,1]");
}

nlohmann::ordered_json SynthSpec::to_json() const {
    nlohmann::ordered_json j;
    j["n_videos"] = n_videos;
    j["classes"] = resolved_classes();
    j["fps"] = fps;
    j["height"] = height;
    j["width"] = width;
    j["night_fraction"] = night_fraction;
    j["uninvolved_videos"] = uninvolved_videos;
    j["video_game_videos"] = video_game_videos;
    j["near_miss_fraction"] = near_miss_fraction;
    j["baseline_noise"] = baseline_noise;
    return j;
}

SynthSpec SynthSpec::from_json(const nlohmann::json& j) {
    SynthSpec s;
    try {
        s.n_videos = j.value("n_videos", s.n_videos);
        if (j.contains("classes")) {
            if (j["classes"].is_number_integer())
                s.n_classes = j["classes"].get<int>();
            else
                for (const auto& c : j["classes"])
                    s.classes.push_back(c.is_string() ? fine_class_from_label(c.get<std::string>()) : c.get<int>());
        }
        s.n_classes = j.value("n_classes", s.n_classes);
        s.fps = j.value("fps", s.fps);
        s.height = j.value("height", s.height);
        s.width = j.value("width", s.width);
        s.night_fraction = j.value("night_fraction", s.night_fraction);
        s.uninvolved_videos = j.value("uninvolved_videos", s.uninvolved_videos);
        s.video_game_videos = j.value("video_game_videos", s.video_game_videos);
        s.near_miss_fraction = j.value("near_miss_fraction", s.near_miss_fraction);
        s.baseline_noise = j.value("baseline_noise", s.baseline_noise);
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::Usage, std::string("synth spec: ") + e.what());
    } catch (const Error& e) {
        fail(ErrorKind::Usage, std::string("synth spec: ") + e.what());
    }
    s.validate();
    return s;
}

std::vector<AnnotationRecord> SyntheticCorpus::annotations() const {
    std::vector<AnnotationRecord> out;
    for (const auto& v : videos) out.push_back(v.truth);
    return out;
}

std::vector<AnnotationRecord> SyntheticCorpus::baseline_annotations() const {
    std::vector<AnnotationRecord> out;
    for (const auto& v : videos) out.push_back(v.baseline);
    return out;
}

nlohmann::ordered_json SyntheticCorpus::manifest() const {
    nlohmann::ordered_json j;
    j["format"] = "nearmiss-corpus-v1";
    j["seed"] = seed;
    j["spec"] = spec.to_json();
    auto& vids = j["videos"] = nlohmann::ordered_json::array();
    for (const auto& v : videos) {
        nlohmann::ordered_json e;
        e["video_id"] = v.truth.video_id;
        e["frame_count"] = v.frame_count;
        e["fps"] = v.truth.fps;
        e["height"] = spec.height;
        e["width"] = spec.width;
        e["domain"] = to_string(v.domain);
        e["class16"] = v.truth.class16;
        e["label"] = class_label(v.truth.class16, 3);
        e["ego_involved"] = v.truth.ego_involved;
        e["real_footage"] = v.truth.real_footage;
        e["near_miss"] = v.truth.near_miss;
        vids.push_back(std::move(e));
    }
    return j;
}

SyntheticCorpus plan_synthetic_corpus(const SynthSpec& spec, std::uint64_t seed) {
    spec.validate();
    SyntheticCorpus corpus;
    corpus.spec = spec;
    corpus.seed = seed;
    const auto classes = spec.resolved_classes();
    const int n = spec.n_videos;

    Rng plan(mix_seed(seed, "plan"));
    std::vector<int> order(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) order[i] = i;
    plan.shuffle(order.begin(), order.end());
    const int nights = static_cast<int>(std::lround(spec.night_fraction * n));
    std::vector<bool> night(static_cast<std::size_t>(n), false), uninvolved(night), game(night);
    for (int i = 0; i < nights; ++i) night[order[i]] = true;
    plan.shuffle(order.begin(), order.end());
    for (int i = 0; i < spec.uninvolved_videos; ++i) uninvolved[order[i]] = true;
    for (int i = 0; i < spec.video_game_videos; ++i) game[order[spec.uninvolved_videos + i]] = true;

    for (int i = 0; i < n; ++i) {
        char id[32];
        std::snprintf(id, sizeof id, "syn_%04d", i);
        Rng rng(mix_seed(seed, std::string(id) + "/timing"));
        SyntheticVideo v;
        auto& r = v.truth;
        r.video_id = id;
        r.class16 = classes[static_cast<std::size_t>(i) % classes.size()];
        r.fps = spec.fps;
        r.ego_involved = !uninvolved[i];
        r.real_footage = !game[i];
        r.window.t0 = round_tenth(rng.uniform(1.0, 2.0));
        r.window.t3 = round_tenth(r.window.t0 + rng.uniform(3.0, 5.0));
        r.window.t4 = derive_normal_start(r.window.t3);
        r.window.t5 = round_tenth(*r.window.t4 + rng.uniform(3.0, 5.0));
        r.near_miss = rng.bernoulli(spec.near_miss_fraction);
        if (r.near_miss) r.window.mu = round_tenth(r.window.t3 - 0.5);
        v.domain = night[i] ? Domain::Night : Domain::Day;
        v.frame_count = to_frame_index(r.window.t5, r.fps);

        // The baseline annotation has no 2 s gap, noisy windows and noisy labels.
        auto& b = v.baseline;
        b = r;
        b.ego_involved = true;
        b.real_footage = true;
        if (rng.bernoulli(spec.baseline_noise) && classes.size() > 1) {
            int other = classes[rng.below(classes.size())];
            while (other == r.class16) other = classes[rng.below(classes.size())];
            b.class16 = other;
            v.baseline_mislabelled = true;
        }
        if (rng.bernoulli(spec.baseline_noise)) {
            b.window.t0 = round_tenth(std::min(r.window.t0 + rng.uniform(0.5, 1.5), r.window.t3 - 1.0));
            b.window.t3 = round_tenth(std::max(r.window.t3 - rng.uniform(0.5, 1.5), b.window.t0 + 0.5));
        }
        b.window.t4 = b.window.t3;
        corpus.videos.push_back(std::move(v));
    }
    return corpus;
}

VideoClip render_video(const SyntheticCorpus& corpus, std::size_t index) {
    const auto& v = corpus.videos.at(index);
    const auto& rec = v.truth;
    const int H = corpus.spec.height, W = corpus.spec.width;
    const bool night = v.domain == Domain::Night;
    const auto look = look_for(rec.class16);
    Body body = body_for(look.who);
    const Scene scene = scene_for(corpus.seed, rec.video_id);
    for (auto& c : body.rgb) c = std::clamp(c + scene.tint, 0.0f, 1.0f);
    Rng noise(scene.noise_seed);

    VideoClip clip;
    clip.frames = static_cast<int>(v.frame_count);
    clip.height = H;
    clip.width = W;
    clip.fps = rec.fps;
    clip.domain = v.domain;
    clip.source_video_id = rec.video_id;
    clip.clip_id = rec.video_id;
    clip.label = rec.class16;
    clip.pixels.assign(static_cast<std::size_t>(clip.frames) * clip.frame_size(), 0.0f);

    const float sky_day[3] = {0.55f, 0.70f, 0.92f}, sky_night[3] = {0.04f, 0.04f, 0.10f};
    const float grass_day[3] = {0.30f, 0.55f, 0.25f}, grass_night[3] = {0.03f, 0.06f, 0.03f};
    const float road_day = 0.45f, road_night = 0.10f;

    for (int f = 0; f < clip.frames; ++f) {
        const double t = f / rec.fps;
        const bool active = t >= rec.window.t0 && t < rec.window.t3;
        const double p = active ? (t - rec.window.t0) / (rec.window.t3 - rec.window.t0) : 0.0;

        double horizon = 0.40, lateral = 0.0, tilt = 0.0;
        if (active && look.what == Action::SelfAccident && rec.ego_involved) {
            lateral = 0.3 * std::sin(6.0 * p) * p;
            tilt = 0.35 * p;
        }

        // object placement
        bool has_obj = active && look.who != Participant::None;
        double cx = 0.5, cy = 0.6, s = 1.0;
        if (has_obj) {
            if (!rec.ego_involved) {
                cx = -0.1 + 1.2 * p;
                cy = 0.42;
                s = 0.3;
            } else if (look.what == Action::Crossing) {
                cx = 0.5 - scene.direction * 0.6 + scene.direction * 1.2 * p;
                cy = 0.62 + scene.jitter;
                s = 1.0;
            } else if (look.what == Action::Hitting) {
                cx = 0.5 + scene.jitter * (1.0 - p);
                cy = 0.50 + 0.30 * p;
                s = 1.0 + 1.2 * p;
            } else {  // overtaking
                cx = 0.5 + scene.direction * 0.35 * (1.0 - p);
                cy = 0.90 - 0.42 * p;
                s = 2.0 - 1.6 * p;
            }
        }

        float* frame = clip.frame(f);
        for (int y = 0; y < H; ++y) {
            for (int x = 0; x < W; ++x) {
                const double u = (x + 0.5) / W, vv = (y + 0.5) / H;
                const double hz = horizon + tilt * (u - 0.5);
                float px[3];
                if (vv < hz) {
                    for (int c = 0; c < 3; ++c) px[c] = night ? sky_night[c] : sky_day[c];
                } else {
                    const double depth = (vv - hz) / (1.0 - hz);
                    const double center = 0.5 + lateral * depth;
                    const double half = 0.05 + 0.45 * depth;
                    if (std::abs(u - center) < half) {
                        const float g = night ? road_night : road_day;
                        for (float& c : px) c = g;
                        const double phase = 12.0 / (depth + 0.15) + scene.speed * t * 6.0;
                        if (std::abs(u - center) < 0.006 + 0.012 * depth && std::sin(phase) > 0.0)
                            for (float& c : px) c = night ? 0.55f : 0.95f;
                    } else {
                        for (int c = 0; c < 3; ++c) px[c] = night ? grass_night[c] : grass_day[c];
                    }
                }
                if (has_obj) {
                    const double hw = 0.5 * body.w * s, hh = 0.5 * body.h * s;
                    if (std::abs(u - cx) < hw && std::abs(vv - cy) < hh) {
                        const float dim = night ? 0.45f : 1.0f;
                        for (int c = 0; c < 3; ++c) px[c] = body.rgb[c] * dim;
                        if (vv > cy + 0.6 * hh)
                            for (float& c : px) c *= 0.4f;  // shadow / wheels
                    }
                }
                if (night) {
                    for (double lx : {0.3, 0.7}) {
                        const double dx = (u - lx) / 0.22, dy = (vv - 0.97) / 0.30;
                        const double glow = std::exp(-(dx * dx + dy * dy) * 1.5);
                        px[0] += static_cast<float>(0.60 * glow);
                        px[1] += static_cast<float>(0.55 * glow);
                        px[2] += static_cast<float>(0.35 * glow);
                    }
                }
                if (!rec.real_footage) {
                    // flat, posterised palette
                    for (float& c : px) c = std::round(std::clamp(c, 0.0f, 1.0f) * 2.0f) / 2.0f;
                } else {
                    for (float& c : px) c += static_cast<float>(0.02 * noise.normal());
                }
                float* out = frame + (static_cast<std::size_t>(y) * W + x) * 3;
                for (int c = 0; c < 3; ++c) out[c] = std::clamp(px[c], 0.0f, 1.0f);
            }
        }
    }
    return clip;
}

SyntheticCorpus generate_synthetic_corpus(const SynthSpec& spec, std::uint64_t seed, const fs::path& out_dir) {
    auto corpus = plan_synthetic_corpus(spec, seed);
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) fail(ErrorKind::Io, "cannot create " + out_dir.string() + ": " + ec.message());
    for (std::size_t i = 0; i < corpus.videos.size(); ++i) {
        const auto dir = out_dir / corpus.videos[i].truth.video_id;
        fs::remove_all(dir, ec);
        write_frames(dir, render_video(corpus, i));
    }
    auto write_text = [&](const fs::path& p, const std::string& text) {
        std::ofstream out(p, std::ios::binary);
        if (!out) fail(ErrorKind::Io, "cannot write " + p.string());
        out << text;
    };
    write_text(out_dir / "manifest.json", corpus.manifest().dump(2) + "\n");
    write_text(out_dir / "annotations.jsonl", serialize_annotations(corpus.annotations()));
    write_text(out_dir / "annotations_baseline.jsonl", serialize_annotations(corpus.baseline_annotations()));
    std::string overrides;
    for (const auto& v : corpus.videos)
        if (v.baseline_mislabelled)
            overrides += nlohmann::ordered_json{{"video_id", v.truth.video_id},
                                                {"wrong_class", true},
                                                {"note", "baseline label differs from reviewed label"}}
                             .dump() +
                         "\n";
    write_text(out_dir / "baseline_overrides.jsonl", overrides);
    return corpus;
}

}  // namespace nearmiss
