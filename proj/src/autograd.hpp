#pragma once

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "tensor.hpp"

namespace nearmiss::nn {

struct Node {
    Tensor value;
    Tensor grad;  // empty until something flows into it
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;

    Tensor& ensure_grad();
};

using Var = std::shared_ptr<Node>;

/// Disables graph recording on this thread while alive.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

bool grad_enabled();

Var constant(Tensor t);
Var leaf(Tensor t, bool requires_grad);

/// Reverse-mode sweep from a scalar root. Gradients accumulate into every
/// reachable node that requires them.
void backward(const Var& root);

// --- convolution -----------------------------------------------------------

/// x [N,C,H,W], w [O,C,k,k], b [O] (may be null) -> [N,O,Ho,Wo].
Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad);

/// Spatial (1,k,k) convolution applied to every frame of x [N,T,C,H,W].
Var conv_spatial(const Var& x, const Var& w, const Var& b, int stride, int pad);

/// Temporal (k,1,1) convolution over x [N,T,C,H,W], w [O,C,k] -> [N,To,O,H,W].
Var conv_temporal(const Var& x, const Var& w, const Var& b, int stride, int pad);

// --- elementwise / structural ---------------------------------------------

Var leaky_relu(const Var& x, double slope);
inline Var relu(const Var& x) { return leaky_relu(x, 0.0); }
Var sigmoid(const Var& x);
Var add(const Var& a, const Var& b);
Var scale(const Var& x, double s);
Var reshape(const Var& x, Shape shape);
Var upsample2x(const Var& x);  // nearest, [N,C,H,W]
Var concat_channels(const std::vector<Var>& xs);  // [N,T,C_i,H,W] along C
Var max_pool3d(const Var& x, int kt, int k, int st, int s);  // [N,T,C,H,W], same-style padding

/// Group normalisation over (C/G, T, H, W) per sample, x [N,T,C,H,W].
Var group_norm(const Var& x, const Var& gamma, const Var& beta, int groups, double eps = 1e-5);

Var global_avg_pool(const Var& x);  // [N,T,C,H,W] -> [N,C]
Var linear(const Var& x, const Var& w, const Var& b);  // [N,I] x [O,I] -> [N,O]

// --- losses (scalar outputs, shape {1}) ---------------------------------------

Var softmax_cross_entropy(const Var& logits, std::span<const int> labels);
Var l1_loss(const Var& a, const Var& b);
Var mse_to_constant(const Var& x, double target);
Var mean_square(const Var& x);
Var weighted_sum(const std::vector<Var>& scalars, const std::vector<double>& weights);

// Plain tensor helpers.
std::vector<double> softmax_row(std::span<const double> logits);

}  // namespace nearmiss::nn
