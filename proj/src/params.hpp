#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "autograd.hpp"
#include "error.hpp"
#include "random.hpp"

namespace nearmiss::nn {

struct NamedParam {
    std::string name;
    Var var;
};

/// Ordered collection of trainable tensors; order fixes checkpoint layout.
class ParamSet {
public:
    Var add(std::string name, Tensor init) {
        auto v = leaf(std::move(init), true);
        params_.push_back({std::move(name), v});
        return v;
    }

    const std::vector<NamedParam>& all() const { return params_; }
    std::vector<NamedParam>& all() { return params_; }

    Var find(const std::string& name) const {
        for (const auto& p : params_)
            if (p.name == name) return p.var;
        return nullptr;
    }

    void zero_grad() {
        for (auto& p : params_) p.var->grad = Tensor();
    }

    std::size_t count() const {
        std::size_t n = 0;
        for (const auto& p : params_) n += p.var->value.numel();
        return n;
    }

    bool all_finite() const {
        for (const auto& p : params_)
            for (double v : p.var->value.data)
                if (!std::isfinite(v)) return false;
        return true;
    }

private:
    std::vector<NamedParam> params_;
};

inline Tensor he_normal(Shape shape, int fan_in, Rng& rng, double gain = 2.0) {
    Tensor t(std::move(shape));
    const double sd = std::sqrt(gain / std::max(1, fan_in));
    for (auto& v : t.data) v = sd * rng.normal();
    return t;
}

}  // namespace nearmiss::nn
