#include "autograd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_set>

#include <Eigen/Core>

#include "error.hpp"

namespace nearmiss::nn {

namespace {

thread_local bool g_grad_enabled = true;

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

Var make_result(Tensor value, std::vector<Var> parents, std::function<void(Node&)> bw) {
    auto out = std::make_shared<Node>();
    out->value = std::move(value);
    bool needs = false;
    if (g_grad_enabled)
        for (const auto& p : parents)
            if (p && p->requires_grad) needs = true;
    if (needs) {
        out->requires_grad = true;
        out->parents = std::move(parents);
        out->backward_fn = std::move(bw);
    }
    return out;
}

void require_rank(const Var& x, int rank, const char* op) {
    if (x->value.rank() != rank)
        fail(ErrorKind::Shape, std::string(op) + ": expected rank " + std::to_string(rank) + " input, got " +
                                   shape_str(x->value.shape));
}

// Lowered convolution: out(O x M) = W(O x K) * cols(K x M) + b.
struct Lowered {
    RowMat cols;
};

void gemm_forward(const Tensor& w, const Var& b, const RowMat& cols, int out_ch, RowMat& y) {
    const int k = static_cast<int>(cols.rows());
    CMapMat wm(w.ptr(), out_ch, k);
    y.noalias() = wm * cols;
    if (b) {
        for (int o = 0; o < out_ch; ++o) y.row(o).array() += b->value.data[o];
    }
}

void gemm_backward(Node* w, Node* b, const RowMat& cols, const RowMat& dy, RowMat* dcols) {
    const int out_ch = static_cast<int>(dy.rows());
    const int k = static_cast<int>(cols.rows());
    if (w->requires_grad) {
        MapMat dw(w->ensure_grad().ptr(), out_ch, k);
        dw.noalias() += dy * cols.transpose();
    }
    if (b && b->requires_grad) {
        auto& db = b->ensure_grad();
        for (int o = 0; o < out_ch; ++o) db.data[o] += dy.row(o).sum();
    }
    if (dcols) {
        CMapMat wm(w->value.ptr(), out_ch, k);
        dcols->noalias() = wm.transpose() * dy;
    }
}

// x viewed as `images` frames of [C,H,W].
void im2col(const double* x, int images, int c, int h, int wd, int k, int stride, int pad, int ho, int wo,
            RowMat& cols) {
    const int p = ho * wo;
    cols.resize(static_cast<Eigen::Index>(c) * k * k, static_cast<Eigen::Index>(images) * p);
    for (int ci = 0; ci < c; ++ci) {
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                double* row = cols.data() + ((static_cast<std::size_t>(ci) * k + ky) * k + kx) * cols.cols();
                for (int n = 0; n < images; ++n) {
                    const double* src = x + (static_cast<std::size_t>(n) * c + ci) * h * wd;
                    double* dst = row + static_cast<std::size_t>(n) * p;
                    for (int oy = 0; oy < ho; ++oy) {
                        const int iy = oy * stride - pad + ky;
                        double* drow = dst + static_cast<std::size_t>(oy) * wo;
                        if (iy < 0 || iy >= h) {
                            std::fill(drow, drow + wo, 0.0);
                            continue;
                        }
                        const double* srow = src + static_cast<std::size_t>(iy) * wd;
                        for (int ox = 0; ox < wo; ++ox) {
                            const int ix = ox * stride - pad + kx;
                            drow[ox] = (ix >= 0 && ix < wd) ? srow[ix] : 0.0;
                        }
                    }
                }
            }
        }
    }
}

void col2im(const RowMat& cols, int images, int c, int h, int wd, int k, int stride, int pad, int ho, int wo,
            double* dx) {
    const int p = ho * wo;
    for (int ci = 0; ci < c; ++ci) {
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                const double* row = cols.data() + ((static_cast<std::size_t>(ci) * k + ky) * k + kx) * cols.cols();
                for (int n = 0; n < images; ++n) {
                    double* dst = dx + (static_cast<std::size_t>(n) * c + ci) * h * wd;
                    const double* src = row + static_cast<std::size_t>(n) * p;
                    for (int oy = 0; oy < ho; ++oy) {
                        const int iy = oy * stride - pad + ky;
                        if (iy < 0 || iy >= h) continue;
                        const double* srow = src + static_cast<std::size_t>(oy) * wo;
                        double* drow = dst + static_cast<std::size_t>(iy) * wd;
                        for (int ox = 0; ox < wo; ++ox) {
                            const int ix = ox * stride - pad + kx;
                            if (ix >= 0 && ix < wd) drow[ix] += srow[ox];
                        }
                    }
                }
            }
        }
    }
}

// Shared body of conv2d / conv_spatial: x holds `images` frames [C,H,W].
Var conv_frames(const Var& x, const Var& w, const Var& b, int images, int stride, int pad, Shape out_prefix) {
    const auto& xs = x->value.shape;
    const int c = xs[xs.size() - 3], h = xs[xs.size() - 2], wd = xs[xs.size() - 1];
    if (w->value.rank() != 4 || w->value.dim(1) != c || w->value.dim(2) != w->value.dim(3))
        fail(ErrorKind::Shape, "conv: weight " + shape_str(w->value.shape) + " incompatible with input " + shape_str(xs));
    const int o = w->value.dim(0), k = w->value.dim(2);
    if (b && (b->value.numel() != static_cast<std::size_t>(o))) fail(ErrorKind::Shape, "conv: bias size mismatch");
    const int ho = (h + 2 * pad - k) / stride + 1;
    const int wo = (wd + 2 * pad - k) / stride + 1;
    if (ho <= 0 || wo <= 0) fail(ErrorKind::Shape, "conv: input " + shape_str(xs) + " too small for kernel");
    const int p = ho * wo;

    auto lowered = std::make_shared<Lowered>();
    im2col(x->value.ptr(), images, c, h, wd, k, stride, pad, ho, wo, lowered->cols);
    RowMat y;
    gemm_forward(w->value, b, lowered->cols, o, y);

    Shape out_shape = std::move(out_prefix);
    out_shape.insert(out_shape.end(), {o, ho, wo});
    Tensor out(out_shape);
    for (int n = 0; n < images; ++n)
        for (int oc = 0; oc < o; ++oc)
            std::copy_n(y.data() + static_cast<std::size_t>(oc) * y.cols() + static_cast<std::size_t>(n) * p, p,
                        out.ptr() + (static_cast<std::size_t>(n) * o + oc) * p);

    if (!g_grad_enabled) lowered.reset();
    return make_result(std::move(out), {x, w, b}, [=](Node& self) {
        RowMat dy(o, static_cast<Eigen::Index>(images) * p);
        for (int n = 0; n < images; ++n)
            for (int oc = 0; oc < o; ++oc)
                std::copy_n(self.grad.ptr() + (static_cast<std::size_t>(n) * o + oc) * p, p,
                            dy.data() + static_cast<std::size_t>(oc) * dy.cols() + static_cast<std::size_t>(n) * p);
        Node* xn = self.parents[0].get();
        RowMat dcols;
        gemm_backward(self.parents[1].get(), self.parents[2].get(), lowered->cols, dy,
                      xn->requires_grad ? &dcols : nullptr);
        if (xn->requires_grad) col2im(dcols, images, c, h, wd, k, stride, pad, ho, wo, xn->ensure_grad().ptr());
    });
}

}  // namespace

std::string shape_str(const Shape& s) {
    std::string out = "(";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += ", ";
        out += std::to_string(s[i]);
    }
    return out + ")";
}

Tensor& Node::ensure_grad() {
    if (grad.data.size() != value.data.size()) grad = Tensor(value.shape, 0.0);
    return grad;
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

Var constant(Tensor t) {
    auto n = std::make_shared<Node>();
    n->value = std::move(t);
    return n;
}

Var leaf(Tensor t, bool requires_grad) {
    auto n = constant(std::move(t));
    n->requires_grad = requires_grad;
    return n;
}

void backward(const Var& root) {
    if (root->value.numel() != 1) fail(ErrorKind::Shape, "backward: root must be a scalar");
    if (!root->requires_grad) return;
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    // iterative post-order DFS
    std::vector<std::pair<Node*, std::size_t>> stack{{root.get(), 0}};
    seen.insert(root.get());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            Node* p = node->parents[idx++].get();
            if (p && p->requires_grad && !seen.count(p)) {
                seen.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    root->ensure_grad().data[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward_fn && !n->grad.data.empty()) n->backward_fn(*n);
    }
}

Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad) {
    require_rank(x, 4, "conv2d");
    return conv_frames(x, w, b, x->value.dim(0), stride, pad, {x->value.dim(0)});
}

Var conv_spatial(const Var& x, const Var& w, const Var& b, int stride, int pad) {
    require_rank(x, 5, "conv_spatial");
    const int n = x->value.dim(0), t = x->value.dim(1);
    return conv_frames(x, w, b, n * t, stride, pad, {n, t});
}

Var conv_temporal(const Var& x, const Var& w, const Var& b, int stride, int pad) {
    require_rank(x, 5, "conv_temporal");
    const auto& xs = x->value.shape;
    const int n = xs[0], t = xs[1], c = xs[2], hw = xs[3] * xs[4];
    if (w->value.rank() != 3 || w->value.dim(1) != c)
        fail(ErrorKind::Shape, "conv_temporal: weight " + shape_str(w->value.shape) + " incompatible with input " +
                                   shape_str(xs));
    const int o = w->value.dim(0), k = w->value.dim(2);
    const int to = (t + 2 * pad - k) / stride + 1;
    if (to <= 0) fail(ErrorKind::Shape, "conv_temporal: clip too short for kernel");
    const std::size_t m = static_cast<std::size_t>(n) * to * hw;

    auto lowered = std::make_shared<Lowered>();
    auto& cols = lowered->cols;
    cols.resize(static_cast<Eigen::Index>(c) * k, static_cast<Eigen::Index>(m));
    const double* xp = x->value.ptr();
    for (int ci = 0; ci < c; ++ci)
        for (int dt = 0; dt < k; ++dt) {
            double* row = cols.data() + (static_cast<std::size_t>(ci) * k + dt) * m;
            for (int ni = 0; ni < n; ++ni)
                for (int ti = 0; ti < to; ++ti) {
                    const int src_t = ti * stride - pad + dt;
                    double* dst = row + (static_cast<std::size_t>(ni) * to + ti) * hw;
                    if (src_t < 0 || src_t >= t)
                        std::fill(dst, dst + hw, 0.0);
                    else
                        std::copy_n(xp + ((static_cast<std::size_t>(ni) * t + src_t) * c + ci) * hw, hw, dst);
                }
        }
    RowMat y;
    gemm_forward(w->value, b, cols, o, y);
    Tensor out({n, to, o, xs[3], xs[4]});
    for (int ni = 0; ni < n; ++ni)
        for (int ti = 0; ti < to; ++ti)
            for (int oc = 0; oc < o; ++oc)
                std::copy_n(y.data() + static_cast<std::size_t>(oc) * m + (static_cast<std::size_t>(ni) * to + ti) * hw, hw,
                            out.ptr() + ((static_cast<std::size_t>(ni) * to + ti) * o + oc) * hw);
    if (!g_grad_enabled) lowered.reset();
    return make_result(std::move(out), {x, w, b}, [=](Node& self) {
        RowMat dy(o, static_cast<Eigen::Index>(m));
        for (int ni = 0; ni < n; ++ni)
            for (int ti = 0; ti < to; ++ti)
                for (int oc = 0; oc < o; ++oc)
                    std::copy_n(self.grad.ptr() + ((static_cast<std::size_t>(ni) * to + ti) * o + oc) * hw, hw,
                                dy.data() + static_cast<std::size_t>(oc) * m + (static_cast<std::size_t>(ni) * to + ti) * hw);
        Node* xn = self.parents[0].get();
        RowMat dcols;
        gemm_backward(self.parents[1].get(), self.parents[2].get(), lowered->cols, dy,
                      xn->requires_grad ? &dcols : nullptr);
        if (!xn->requires_grad) return;
        double* dx = xn->ensure_grad().ptr();
        for (int ci = 0; ci < c; ++ci)
            for (int dt = 0; dt < k; ++dt) {
                const double* row = dcols.data() + (static_cast<std::size_t>(ci) * k + dt) * m;
                for (int ni = 0; ni < n; ++ni)
                    for (int ti = 0; ti < to; ++ti) {
                        const int src_t = ti * stride - pad + dt;
                        if (src_t < 0 || src_t >= t) continue;
                        const double* src = row + (static_cast<std::size_t>(ni) * to + ti) * hw;
                        double* dst = dx + ((static_cast<std::size_t>(ni) * t + src_t) * c + ci) * hw;
                        for (int i = 0; i < hw; ++i) dst[i] += src[i];
                    }
            }
    });
}

Var leaky_relu(const Var& x, double slope) {
    Tensor out = x->value;
    for (auto& v : out.data)
        if (v < 0.0) v *= slope;
    return make_result(std::move(out), {x}, [slope](Node& self) {
        Node* xn = self.parents[0].get();
        auto& dx = xn->ensure_grad();
        const auto& xv = xn->value.data;
        for (std::size_t i = 0; i < xv.size(); ++i) dx.data[i] += self.grad.data[i] * (xv[i] < 0.0 ? slope : 1.0);
    });
}

Var sigmoid(const Var& x) {
    Tensor out = x->value;
    for (auto& v : out.data) v = 1.0 / (1.0 + std::exp(-v));
    return make_result(std::move(out), {x}, [](Node& self) {
        auto& dx = self.parents[0]->ensure_grad();
        for (std::size_t i = 0; i < self.value.data.size(); ++i) {
            const double s = self.value.data[i];
            dx.data[i] += self.grad.data[i] * s * (1.0 - s);
        }
    });
}

Var add(const Var& a, const Var& b) {
    if (a->value.shape != b->value.shape)
        fail(ErrorKind::Shape, "add: " + shape_str(a->value.shape) + " vs " + shape_str(b->value.shape));
    Tensor out = a->value;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += b->value.data[i];
    return make_result(std::move(out), {a, b}, [](Node& self) {
        for (auto& p : self.parents) {
            if (!p->requires_grad) continue;
            auto& d = p->ensure_grad();
            for (std::size_t i = 0; i < d.data.size(); ++i) d.data[i] += self.grad.data[i];
        }
    });
}

Var scale(const Var& x, double s) {
    Tensor out = x->value;
    for (auto& v : out.data) v *= s;
    return make_result(std::move(out), {x}, [s](Node& self) {
        auto& d = self.parents[0]->ensure_grad();
        for (std::size_t i = 0; i < d.data.size(); ++i) d.data[i] += s * self.grad.data[i];
    });
}

Var reshape(const Var& x, Shape shape) {
    if (shape_numel(shape) != x->value.numel())
        fail(ErrorKind::Shape, "reshape: " + shape_str(x->value.shape) + " -> " + shape_str(shape));
    Tensor out(std::move(shape), x->value.data);
    return make_result(std::move(out), {x}, [](Node& self) {
        auto& d = self.parents[0]->ensure_grad();
        for (std::size_t i = 0; i < d.data.size(); ++i) d.data[i] += self.grad.data[i];
    });
}

Var upsample2x(const Var& x) {
    require_rank(x, 4, "upsample2x");
    const int n = x->value.dim(0), c = x->value.dim(1), h = x->value.dim(2), w = x->value.dim(3);
    Tensor out({n, c, 2 * h, 2 * w});
    const double* src = x->value.ptr();
    double* dst = out.ptr();
    for (int nc = 0; nc < n * c; ++nc)
        for (int y = 0; y < 2 * h; ++y)
            for (int xx = 0; xx < 2 * w; ++xx)
                dst[(static_cast<std::size_t>(nc) * 2 * h + y) * 2 * w + xx] =
                    src[(static_cast<std::size_t>(nc) * h + y / 2) * w + xx / 2];
    return make_result(std::move(out), {x}, [n, c, h, w](Node& self) {
        double* d = self.parents[0]->ensure_grad().ptr();
        const double* g = self.grad.ptr();
        for (int nc = 0; nc < n * c; ++nc)
            for (int y = 0; y < 2 * h; ++y)
                for (int xx = 0; xx < 2 * w; ++xx)
                    d[(static_cast<std::size_t>(nc) * h + y / 2) * w + xx / 2] +=
                        g[(static_cast<std::size_t>(nc) * 2 * h + y) * 2 * w + xx];
    });
}

Var concat_channels(const std::vector<Var>& xs) {
    if (xs.empty()) fail(ErrorKind::Shape, "concat_channels: no inputs");
    for (const auto& x : xs) require_rank(x, 5, "concat_channels");
    const auto& s0 = xs[0]->value.shape;
    const int n = s0[0], t = s0[1], hw = s0[3] * s0[4];
    std::vector<int> chans;
    int total = 0;
    for (const auto& x : xs) {
        const auto& s = x->value.shape;
        if (s[0] != n || s[1] != t || s[3] != s0[3] || s[4] != s0[4])
            fail(ErrorKind::Shape, "concat_channels: mismatched inputs " + shape_str(s) + " vs " + shape_str(s0));
        chans.push_back(s[2]);
        total += s[2];
    }
    Tensor out({n, t, total, s0[3], s0[4]});
    for (int f = 0; f < n * t; ++f) {
        int offset = 0;
        for (std::size_t i = 0; i < xs.size(); ++i) {
            std::copy_n(xs[i]->value.ptr() + static_cast<std::size_t>(f) * chans[i] * hw,
                        static_cast<std::size_t>(chans[i]) * hw,
                        out.ptr() + (static_cast<std::size_t>(f) * total + offset) * hw);
            offset += chans[i];
        }
    }
    return make_result(std::move(out), xs, [n, t, hw, chans, total](Node& self) {
        for (int f = 0; f < n * t; ++f) {
            int offset = 0;
            for (std::size_t i = 0; i < self.parents.size(); ++i) {
                Node* p = self.parents[i].get();
                if (p->requires_grad) {
                    double* d = p->ensure_grad().ptr() + static_cast<std::size_t>(f) * chans[i] * hw;
                    const double* g = self.grad.ptr() + (static_cast<std::size_t>(f) * total + offset) * hw;
                    for (std::size_t j = 0; j < static_cast<std::size_t>(chans[i]) * hw; ++j) d[j] += g[j];
                }
                offset += chans[i];
            }
        }
    });
}

Var max_pool3d(const Var& x, int kt, int k, int st, int s) {
    require_rank(x, 5, "max_pool3d");
    const auto& xs = x->value.shape;
    const int n = xs[0], t = xs[1], c = xs[2], h = xs[3], w = xs[4];
    const int pt = kt / 2, p = k / 2;
    const int to = (t + 2 * pt - kt) / st + 1, ho = (h + 2 * p - k) / s + 1, wo = (w + 2 * p - k) / s + 1;
    Tensor out({n, to, c, ho, wo});
    std::vector<std::size_t> argmax(out.numel());
    const double* xp = x->value.ptr();
    std::size_t oi = 0;
    for (int ni = 0; ni < n; ++ni)
        for (int ti = 0; ti < to; ++ti)
            for (int ci = 0; ci < c; ++ci)
                for (int yi = 0; yi < ho; ++yi)
                    for (int xi = 0; xi < wo; ++xi, ++oi) {
                        double best = -std::numeric_limits<double>::infinity();
                        std::size_t best_idx = 0;
                        for (int dt = 0; dt < kt; ++dt) {
                            const int tt = ti * st - pt + dt;
                            if (tt < 0 || tt >= t) continue;
                            for (int dy = 0; dy < k; ++dy) {
                                const int yy = yi * s - p + dy;
                                if (yy < 0 || yy >= h) continue;
                                for (int dx = 0; dx < k; ++dx) {
                                    const int xx = xi * s - p + dx;
                                    if (xx < 0 || xx >= w) continue;
                                    const std::size_t idx =
                                        (((static_cast<std::size_t>(ni) * t + tt) * c + ci) * h + yy) * w + xx;
                                    if (xp[idx] > best) {
                                        best = xp[idx];
                                        best_idx = idx;
                                    }
                                }
                            }
                        }
                        out.data[oi] = best;
                        argmax[oi] = best_idx;
                    }
    return make_result(std::move(out), {x}, [argmax = std::move(argmax)](Node& self) {
        double* d = self.parents[0]->ensure_grad().ptr();
        for (std::size_t i = 0; i < argmax.size(); ++i) d[argmax[i]] += self.grad.data[i];
    });
}

Var group_norm(const Var& x, const Var& gamma, const Var& beta, int groups, double eps) {
    require_rank(x, 5, "group_norm");
    const auto& xs = x->value.shape;
    const int n = xs[0], t = xs[1], c = xs[2], hw = xs[3] * xs[4];
    if (groups <= 0 || c % groups != 0) fail(ErrorKind::Shape, "group_norm: channels not divisible by groups");
    if (gamma->value.numel() != static_cast<std::size_t>(c) || beta->value.numel() != static_cast<std::size_t>(c))
        fail(ErrorKind::Shape, "group_norm: affine parameter size mismatch");
    const int cg = c / groups;
    const double count = static_cast<double>(t) * cg * hw;

    Tensor xhat(xs);
    std::vector<double> inv_std(static_cast<std::size_t>(n) * groups);
    const double* xp = x->value.ptr();
    auto index = [=](int ni, int ti, int ci) { return ((static_cast<std::size_t>(ni) * t + ti) * c + ci) * hw; };
    for (int ni = 0; ni < n; ++ni)
        for (int g = 0; g < groups; ++g) {
            double sum = 0.0, sq = 0.0;
            for (int ti = 0; ti < t; ++ti)
                for (int ci = g * cg; ci < (g + 1) * cg; ++ci) {
                    const double* src = xp + index(ni, ti, ci);
                    for (int i = 0; i < hw; ++i) sum += src[i];
                }
            const double mean = sum / count;
            for (int ti = 0; ti < t; ++ti)
                for (int ci = g * cg; ci < (g + 1) * cg; ++ci) {
                    const double* src = xp + index(ni, ti, ci);
                    for (int i = 0; i < hw; ++i) sq += (src[i] - mean) * (src[i] - mean);
                }
            const double is = 1.0 / std::sqrt(sq / count + eps);
            inv_std[static_cast<std::size_t>(ni) * groups + g] = is;
            for (int ti = 0; ti < t; ++ti)
                for (int ci = g * cg; ci < (g + 1) * cg; ++ci) {
                    const double* src = xp + index(ni, ti, ci);
                    double* dst = xhat.ptr() + index(ni, ti, ci);
                    for (int i = 0; i < hw; ++i) dst[i] = (src[i] - mean) * is;
                }
        }
    Tensor out(xs);
    for (int ni = 0; ni < n; ++ni)
        for (int ti = 0; ti < t; ++ti)
            for (int ci = 0; ci < c; ++ci) {
                const double gm = gamma->value.data[ci], bt = beta->value.data[ci];
                const double* src = xhat.ptr() + index(ni, ti, ci);
                double* dst = out.ptr() + index(ni, ti, ci);
                for (int i = 0; i < hw; ++i) dst[i] = gm * src[i] + bt;
            }
    return make_result(std::move(out), {x, gamma, beta},
                       [=, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
        Node* xn = self.parents[0].get();
        Node* gn = self.parents[1].get();
        Node* bn = self.parents[2].get();
        const double* gy = self.grad.ptr();
        if (gn->requires_grad || bn->requires_grad) {
            auto& dg = gn->ensure_grad();
            auto& db = bn->ensure_grad();
            for (int ni = 0; ni < n; ++ni)
                for (int ti = 0; ti < t; ++ti)
                    for (int ci = 0; ci < c; ++ci) {
                        const double* g = gy + index(ni, ti, ci);
                        const double* xh = xhat.ptr() + index(ni, ti, ci);
                        double sg = 0.0, sb = 0.0;
                        for (int i = 0; i < hw; ++i) {
                            sg += g[i] * xh[i];
                            sb += g[i];
                        }
                        dg.data[ci] += sg;
                        db.data[ci] += sb;
                    }
        }
        if (!xn->requires_grad) return;
        double* dx = xn->ensure_grad().ptr();
        for (int ni = 0; ni < n; ++ni)
            for (int g = 0; g < groups; ++g) {
                double sum_d = 0.0, sum_dx = 0.0;
                for (int ti = 0; ti < t; ++ti)
                    for (int ci = g * cg; ci < (g + 1) * cg; ++ci) {
                        const double gm = gamma->value.data[ci];
                        const double* gr = gy + index(ni, ti, ci);
                        const double* xh = xhat.ptr() + index(ni, ti, ci);
                        for (int i = 0; i < hw; ++i) {
                            sum_d += gr[i] * gm;
                            sum_dx += gr[i] * gm * xh[i];
                        }
                    }
                const double is = inv_std[static_cast<std::size_t>(ni) * groups + g];
                for (int ti = 0; ti < t; ++ti)
                    for (int ci = g * cg; ci < (g + 1) * cg; ++ci) {
                        const double gm = gamma->value.data[ci];
                        const double* gr = gy + index(ni, ti, ci);
                        const double* xh = xhat.ptr() + index(ni, ti, ci);
                        double* d = dx + index(ni, ti, ci);
                        for (int i = 0; i < hw; ++i)
                            d[i] += is / count * (count * gr[i] * gm - sum_d - xh[i] * sum_dx);
                    }
            }
    });
}

Var global_avg_pool(const Var& x) {
    require_rank(x, 5, "global_avg_pool");
    const auto& xs = x->value.shape;
    const int n = xs[0], t = xs[1], c = xs[2], hw = xs[3] * xs[4];
    const double inv = 1.0 / (static_cast<double>(t) * hw);
    Tensor out({n, c});
    for (int ni = 0; ni < n; ++ni)
        for (int ti = 0; ti < t; ++ti)
            for (int ci = 0; ci < c; ++ci) {
                const double* src = x->value.ptr() + ((static_cast<std::size_t>(ni) * t + ti) * c + ci) * hw;
                double s = 0.0;
                for (int i = 0; i < hw; ++i) s += src[i];
                out.data[static_cast<std::size_t>(ni) * c + ci] += s * inv;
            }
    return make_result(std::move(out), {x}, [=](Node& self) {
        double* d = self.parents[0]->ensure_grad().ptr();
        for (int ni = 0; ni < n; ++ni)
            for (int ti = 0; ti < t; ++ti)
                for (int ci = 0; ci < c; ++ci) {
                    const double g = self.grad.data[static_cast<std::size_t>(ni) * c + ci] * inv;
                    double* dst = d + ((static_cast<std::size_t>(ni) * t + ti) * c + ci) * hw;
                    for (int i = 0; i < hw; ++i) dst[i] += g;
                }
    });
}

Var linear(const Var& x, const Var& w, const Var& b) {
    require_rank(x, 2, "linear");
    const int n = x->value.dim(0), in = x->value.dim(1);
    if (w->value.rank() != 2 || w->value.dim(1) != in)
        fail(ErrorKind::Shape, "linear: weight " + shape_str(w->value.shape) + " vs input " + shape_str(x->value.shape));
    const int o = w->value.dim(0);
    Tensor out({n, o});
    CMapMat xm(x->value.ptr(), n, in);
    CMapMat wm(w->value.ptr(), o, in);
    MapMat ym(out.ptr(), n, o);
    ym.noalias() = xm * wm.transpose();
    if (b)
        for (int r = 0; r < n; ++r)
            for (int j = 0; j < o; ++j) ym(r, j) += b->value.data[j];
    return make_result(std::move(out), {x, w, b}, [n, in, o](Node& self) {
        CMapMat gy(self.grad.ptr(), n, o);
        Node* xn = self.parents[0].get();
        Node* wn = self.parents[1].get();
        Node* bn = self.parents[2].get();
        if (xn->requires_grad) {
            MapMat dx(xn->ensure_grad().ptr(), n, in);
            dx.noalias() += gy * CMapMat(wn->value.ptr(), o, in);
        }
        if (wn->requires_grad) {
            MapMat dw(wn->ensure_grad().ptr(), o, in);
            dw.noalias() += gy.transpose() * CMapMat(xn->value.ptr(), n, in);
        }
        if (bn && bn->requires_grad) {
            auto& db = bn->ensure_grad();
            for (int r = 0; r < n; ++r)
                for (int j = 0; j < o; ++j) db.data[j] += gy(r, j);
        }
    });
}

std::vector<double> softmax_row(std::span<const double> logits) {
    std::vector<double> p(logits.begin(), logits.end());
    if (p.empty()) return p;
    const double mx = *std::max_element(p.begin(), p.end());
    double z = 0.0;
    for (auto& v : p) {
        v = std::exp(v - mx);
        z += v;
    }
    for (auto& v : p) v /= z;
    return p;
}

Var softmax_cross_entropy(const Var& logits, std::span<const int> labels) {
    require_rank(logits, 2, "softmax_cross_entropy");
    const int n = logits->value.dim(0), k = logits->value.dim(1);
    if (static_cast<int>(labels.size()) != n) fail(ErrorKind::Shape, "softmax_cross_entropy: label count mismatch");
    Tensor probs({n, k});
    double loss = 0.0;
    for (int r = 0; r < n; ++r) {
        if (labels[r] < 0 || labels[r] >= k) fail(ErrorKind::Domain, "softmax_cross_entropy: label out of range");
        const auto p = softmax_row(std::span<const double>(logits->value.ptr() + static_cast<std::size_t>(r) * k, k));
        std::copy(p.begin(), p.end(), probs.ptr() + static_cast<std::size_t>(r) * k);
        loss -= std::log(std::max(p[labels[r]], 1e-300));
    }
    std::vector<int> lab(labels.begin(), labels.end());
    return make_result(Tensor({1}, loss / n), {logits}, [n, k, lab, probs = std::move(probs)](Node& self) {
        auto& d = self.parents[0]->ensure_grad();
        const double g = self.grad.data[0] / n;
        for (int r = 0; r < n; ++r)
            for (int j = 0; j < k; ++j) {
                const std::size_t i = static_cast<std::size_t>(r) * k + j;
                d.data[i] += g * (probs.data[i] - (j == lab[r] ? 1.0 : 0.0));
            }
    });
}

Var l1_loss(const Var& a, const Var& b) {
    if (a->value.shape != b->value.shape)
        fail(ErrorKind::Shape, "l1_loss: " + shape_str(a->value.shape) + " vs " + shape_str(b->value.shape));
    const double inv = 1.0 / static_cast<double>(a->value.numel());
    double s = 0.0;
    for (std::size_t i = 0; i < a->value.numel(); ++i) s += std::abs(a->value.data[i] - b->value.data[i]);
    return make_result(Tensor({1}, s * inv), {a, b}, [inv](Node& self) {
        const double g = self.grad.data[0] * inv;
        Node* an = self.parents[0].get();
        Node* bn = self.parents[1].get();
        for (std::size_t i = 0; i < an->value.numel(); ++i) {
            const double diff = an->value.data[i] - bn->value.data[i];
            const double sgn = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
            if (an->requires_grad) an->ensure_grad().data[i] += g * sgn;
            if (bn->requires_grad) bn->ensure_grad().data[i] -= g * sgn;
        }
    });
}

Var mse_to_constant(const Var& x, double target) {
    const double inv = 1.0 / static_cast<double>(x->value.numel());
    double s = 0.0;
    for (double v : x->value.data) s += (v - target) * (v - target);
    return make_result(Tensor({1}, s * inv), {x}, [inv, target](Node& self) {
        auto& d = self.parents[0]->ensure_grad();
        const double g = self.grad.data[0] * inv;
        const auto& xv = self.parents[0]->value.data;
        for (std::size_t i = 0; i < xv.size(); ++i) d.data[i] += g * 2.0 * (xv[i] - target);
    });
}

Var mean_square(const Var& x) { return mse_to_constant(x, 0.0); }

Var weighted_sum(const std::vector<Var>& scalars, const std::vector<double>& weights) {
    if (scalars.size() != weights.size()) fail(ErrorKind::Shape, "weighted_sum: size mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < scalars.size(); ++i) {
        if (scalars[i]->value.numel() != 1) fail(ErrorKind::Shape, "weighted_sum: non-scalar term");
        s += weights[i] * scalars[i]->value.data[0];
    }
    return make_result(Tensor({1}, s), scalars, [weights](Node& self) {
        for (std::size_t i = 0; i < self.parents.size(); ++i)
            if (self.parents[i]->requires_grad) self.parents[i]->ensure_grad().data[0] += weights[i] * self.grad.data[0];
    });
}

}  // namespace nearmiss::nn
