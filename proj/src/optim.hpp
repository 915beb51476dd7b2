#pragma once

#include <cmath>
#include <vector>

#include "params.hpp"

namespace nearmiss::nn {

/// Adam with bias correction; state is laid out parallel to ParamSet::all().
class Adam {
public:
    Adam(double lr, double beta1 = 0.5, double beta2 = 0.999, double eps = 1e-8)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void step(ParamSet& params) {
        auto& all = params.all();
        if (m_.size() != all.size()) {
            m_.assign(all.size(), {});
            v_.assign(all.size(), {});
            for (std::size_t i = 0; i < all.size(); ++i) {
                m_[i].assign(all[i].var->value.numel(), 0.0);
                v_[i].assign(all[i].var->value.numel(), 0.0);
            }
        }
        ++t_;
        const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
        for (std::size_t i = 0; i < all.size(); ++i) {
            auto& p = *all[i].var;
            if (p.grad.data.empty()) continue;
            for (std::size_t j = 0; j < p.value.numel(); ++j) {
                const double g = p.grad.data[j];
                m_[i][j] = beta1_ * m_[i][j] + (1.0 - beta1_) * g;
                v_[i][j] = beta2_ * v_[i][j] + (1.0 - beta2_) * g * g;
                p.value.data[j] -= lr_ * (m_[i][j] / c1) / (std::sqrt(v_[i][j] / c2) + eps_);
            }
        }
    }

    void set_lr(double lr) { lr_ = lr; }

private:
    double lr_, beta1_, beta2_, eps_;
    long t_ = 0;
    std::vector<std::vector<double>> m_, v_;
};

}  // namespace nearmiss::nn
