#include "training.hpp"

#include <chrono>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "error.hpp"

namespace nearmiss {

std::string_view to_string(DatasetMode m) { return m == DatasetMode::Originals ? "originals" : "augmented"; }

DatasetMode dataset_mode_from_string(std::string_view s) {
    if (s == "originals" || s == "V") return DatasetMode::Originals;
    if (s == "augmented" || s == "X") return DatasetMode::Augmented;
    fail(ErrorKind::Usage, "unknown dataset mode '" + std::string(s) + "'");
}

void TrainConfig::validate() const {
    if (batch_size < 1) fail(ErrorKind::Usage, "batch_size must be >= 1");
    if (!(lr0 >= 0.0)) fail(ErrorKind::Usage, "lr0 must be >= 0");
    if (!(lr_decay_factor > 0.0)) fail(ErrorKind::Usage, "lr_decay_factor must be > 0");
    if (!(momentum >= 0.0) || !(weight_decay >= 0.0)) fail(ErrorKind::Usage, "momentum and weight_decay must be >= 0");
    if (epochs < 1) fail(ErrorKind::Usage, "epochs must be >= 1");
    if (!valid_clip_length(clip_len)) fail(ErrorKind::Usage, "clip_len must be 16, 32 or 64");
    for (int m : milestones)
        if (m < 0) fail(ErrorKind::Usage, "milestones must be >= 0");
    if (plateau_patience < 0 || plateau_threshold < 0) fail(ErrorKind::Usage, "plateau settings must be >= 0");
    augment.validate();
}

nlohmann::ordered_json TrainConfig::to_json() const {
    nlohmann::ordered_json j;
    j["batch_size"] = batch_size;
    j["lr0"] = lr0;
    j["lr_decay_factor"] = lr_decay_factor;
    j["milestones"] = milestones;
    j["lr_mode"] = lr_mode == LrMode::Milestones ? "milestones" : "plateau";
    j["plateau_patience"] = plateau_patience;
    j["plateau_threshold"] = plateau_threshold;
    j["momentum"] = momentum;
    j["weight_decay"] = weight_decay;
    j["epochs"] = epochs;
    j["clip_len"] = clip_len;
    j["seed"] = seed;
    j["dataset_mode"] = to_string(dataset_mode);
    j["augment"] = {{"p_hflip", augment.p_hflip},
                    {"p_autocontrast", augment.p_autocontrast},
                    {"p_grayscale", augment.p_grayscale},
                    {"p_perspective", augment.p_perspective},
                    {"distortion_scale", augment.distortion_scale}};
    j["stop_at_train_accuracy"] = stop_at_train_accuracy;
    j["eval_train"] = eval_train;
    return j;
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
    TrainConfig c;
    c.batch_size = j.value("batch_size", c.batch_size);
    c.lr0 = j.value("lr0", c.lr0);
    c.lr_decay_factor = j.value("lr_decay_factor", c.lr_decay_factor);
    c.milestones = j.value("milestones", c.milestones);
    const auto mode = j.value("lr_mode", std::string("milestones"));
    if (mode == "milestones")
        c.lr_mode = LrMode::Milestones;
    else if (mode == "plateau")
        c.lr_mode = LrMode::Plateau;
    else
        fail(ErrorKind::Usage, "unknown lr_mode '" + mode + "'");
    c.plateau_patience = j.value("plateau_patience", c.plateau_patience);
    c.plateau_threshold = j.value("plateau_threshold", c.plateau_threshold);
    c.momentum = j.value("momentum", c.momentum);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.epochs = j.value("epochs", c.epochs);
    c.clip_len = j.value("clip_len", c.clip_len);
    c.seed = j.value("seed", c.seed);
    c.dataset_mode = dataset_mode_from_string(j.value("dataset_mode", std::string("originals")));
    if (j.contains("augment")) {
        const auto& a = j["augment"];
        c.augment.p_hflip = a.value("p_hflip", c.augment.p_hflip);
        c.augment.p_autocontrast = a.value("p_autocontrast", c.augment.p_autocontrast);
        c.augment.p_grayscale = a.value("p_grayscale", c.augment.p_grayscale);
        c.augment.p_perspective = a.value("p_perspective", c.augment.p_perspective);
        c.augment.distortion_scale = a.value("distortion_scale", c.augment.distortion_scale);
    }
    c.stop_at_train_accuracy = j.value("stop_at_train_accuracy", c.stop_at_train_accuracy);
    c.eval_train = j.value("eval_train", c.eval_train);
    return c;
}

double lr_at(int epoch, const TrainConfig& cfg) {
    int drops = 0;
    for (int m : cfg.milestones)
        if (m <= epoch) ++drops;
    return cfg.lr0 / std::pow(cfg.lr_decay_factor, drops);
}

void sgd_step(nn::ParamSet& params, double lr, double momentum, double weight_decay, SgdState& state) {
    auto& all = params.all();
    for (const auto& p : all)
        for (double g : p.var->grad.data)
            if (std::isnan(g)) fail(ErrorKind::Numeric, "sgd_step: NaN gradient in '" + p.name + "'");
    if (state.velocity.size() != all.size()) {
        state.velocity.assign(all.size(), {});
        for (std::size_t i = 0; i < all.size(); ++i) state.velocity[i].assign(all[i].var->value.numel(), 0.0);
    }
    for (std::size_t i = 0; i < all.size(); ++i) {
        auto& p = *all[i].var;
        auto& v = state.velocity[i];
        if (v.size() != p.value.numel()) fail(ErrorKind::Shape, "sgd_step: state does not match '" + all[i].name + "'");
        const bool has_grad = !p.grad.data.empty();
        for (std::size_t j = 0; j < v.size(); ++j) {
            const double g = has_grad ? p.grad.data[j] : 0.0;
            v[j] = momentum * v[j] + (g + weight_decay * p.value.data[j]);
            p.value.data[j] -= lr * v[j];
        }
    }
}

std::vector<VideoClip> eval_windows(const std::vector<VideoClip>& segments, int clip_len) {
    Rng unused(0);
    std::vector<VideoClip> out;
    out.reserve(segments.size());
    for (const auto& s : segments) out.push_back(sample_window(s, clip_len, SamplePolicy::UniformStride, unused));
    return out;
}

double clip_accuracy(const Classifier& clf, const std::vector<VideoClip>& segments, int clip_len) {
    if (segments.empty()) fail(ErrorKind::Domain, "accuracy of an empty set is undefined");
    const auto windows = eval_windows(segments, clip_len);
    const auto preds = predict_batch(clf, windows);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < preds.size(); ++i)
        if (preds[i].class_id == windows[i].label) ++hits;
    return static_cast<double>(hits) / static_cast<double>(windows.size());
}

namespace {

std::vector<nn::Tensor> snapshot(const nn::ParamSet& ps) {
    std::vector<nn::Tensor> out;
    for (const auto& p : ps.all()) out.push_back(p.var->value);
    return out;
}

void restore(nn::ParamSet& ps, const std::vector<nn::Tensor>& values) {
    auto& all = ps.all();
    for (std::size_t i = 0; i < all.size() && i < values.size(); ++i) all[i].var->value = values[i];
}

}  // namespace

TrainResult train_classifier(Classifier& clf, const std::vector<VideoClip>& train, const std::vector<VideoClip>& val,
                             const TrainConfig& cfg, const std::string& model_id) {
    cfg.validate();
    if (train.empty()) fail(ErrorKind::Domain, "train_classifier: training set is empty");
    if (cfg.clip_len != clf.config().clip_len)
        fail(ErrorKind::Usage, "train_classifier: clip_len differs from the classifier's input contract");
    for (const auto* set : {&train, &val})
        for (const auto& c : *set)
            if (c.label < 0 || c.label >= clf.config().num_classes)
                fail(ErrorKind::Domain, "clip '" + c.clip_id + "' label out of range");

    TrainResult result;
    result.log.model_id = model_id;
    result.best_params = snapshot(clf.params());
    SgdState state;
    Rng order_rng(mix_seed(cfg.seed, "train-order"));

    double lr = cfg.lr0;
    double plateau_best = std::numeric_limits<double>::infinity();
    int plateau_bad = 0;

    std::vector<std::size_t> order(train.size());
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto t_start = std::chrono::steady_clock::now();
        if (cfg.lr_mode == LrMode::Milestones) lr = lr_at(epoch, cfg);
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        order_rng.shuffle(order.begin(), order.end());

        double loss_sum = 0.0;
        int batches = 0;
        bool diverged = false;
        try {
            for (std::size_t b = 0; b < order.size(); b += static_cast<std::size_t>(cfg.batch_size)) {
                std::vector<VideoClip> batch;
                std::vector<int> labels;
                for (std::size_t i = b; i < std::min(order.size(), b + cfg.batch_size); ++i) {
                    const auto& seg = train[order[i]];
                    // each clip draws from its own stream, independent of batch order
                    Rng clip_rng(mix_seed(cfg.seed, seg.clip_id + "/" + std::to_string(epoch)));
                    auto clip = sample_window(seg, cfg.clip_len, SamplePolicy::Random, clip_rng);
                    batch.push_back(augment_frames(clip, cfg.augment, clip_rng));
                    labels.push_back(seg.label);
                }
                clf.params().zero_grad();
                auto loss = nn::softmax_cross_entropy(clf.forward(nn::constant(clips_to_tensor(batch))), labels);
                const double lv = loss->value.data[0];
                if (!std::isfinite(lv)) fail(ErrorKind::Numeric, "training loss is not finite");
                nn::backward(loss);
                sgd_step(clf.params(), lr, cfg.momentum, cfg.weight_decay, state);
                if (!clf.params().all_finite()) fail(ErrorKind::Numeric, "parameters became non-finite");
                loss_sum += lv;
                ++batches;
            }
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::Numeric) throw;
            diverged = true;
            result.diverged = true;
            result.divergence = "epoch " + std::to_string(epoch) + ": " + e.what();
        }
        clf.params().zero_grad();
        if (diverged) break;

        EpochLog entry;
        entry.epoch = epoch;
        entry.lr = lr;
        entry.train_loss = loss_sum / std::max(1, batches);
        if (cfg.eval_train || cfg.stop_at_train_accuracy > 0.0 || val.empty())
            entry.train_accuracy = clip_accuracy(clf, train, cfg.clip_len);
        if (!val.empty()) entry.val_accuracy = clip_accuracy(clf, val, cfg.clip_len);
        entry.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
        result.log.epochs.push_back(entry);

        const double score = entry.val_accuracy ? *entry.val_accuracy : *entry.train_accuracy;
        if (score > result.best_score) {
            result.best_score = score;
            result.best_epoch = epoch;
            result.best_params = snapshot(clf.params());
        }

        if (cfg.lr_mode == LrMode::Plateau) {
            if (entry.train_loss < plateau_best * (1.0 - cfg.plateau_threshold)) {
                plateau_best = entry.train_loss;
                plateau_bad = 0;
            } else if (++plateau_bad > cfg.plateau_patience) {
                lr /= cfg.lr_decay_factor;
                plateau_bad = 0;
            }
        }
        if (cfg.stop_at_train_accuracy > 0.0 && entry.train_accuracy &&
            *entry.train_accuracy >= cfg.stop_at_train_accuracy)
            break;
    }
    restore(clf.params(), result.best_params);
    return result;
}

namespace {

std::string fmt(double v) {
    std::ostringstream os;
    os << std::setprecision(10) << v;
    return os.str();
}

std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : std::string(); }

}  // namespace

std::string runlog_csv(const RunLog& log) {
    std::string out = "model,epoch,lr,train_loss,train_accuracy,val_accuracy\n";
    for (const auto& e : log.epochs)
        out += log.model_id + "," + std::to_string(e.epoch) + "," + fmt(e.lr) + "," + fmt(e.train_loss) + "," +
               fmt(e.train_accuracy) + "," + fmt(e.val_accuracy) + "\n";
    return out;
}

}  // namespace nearmiss
