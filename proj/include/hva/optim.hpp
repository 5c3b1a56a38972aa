#pragma once

// Adam over a ParamStore. Moment tensors are kept in store order so they can
// be checkpointed and restored for bit-exact resumption.

#include <cmath>
#include <vector>

#include "hva/autodiff.hpp"

namespace hva {

template <typename Real>
class Adam {
public:
    Adam(ParamStore<Real>& store, Real lr, Real beta1 = Real(0.9), Real beta2 = Real(0.999),
         Real eps = Real(1e-8))
        : store_(&store), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
        for (const auto& [name, var] : store.items()) {
            (void)name;
            m_.push_back(Tensor<Real>::zeros(var->value.shape()));
            v_.push_back(Tensor<Real>::zeros(var->value.shape()));
        }
    }

    void step() {
        ++t_;
        const Real c1 = Real(1) - std::pow(beta1_, Real(t_));
        const Real c2 = Real(1) - std::pow(beta2_, Real(t_));
        const auto& items = store_->items();
        for (std::size_t i = 0; i < items.size(); ++i) {
            auto& p = items[i].second;
            const bool has_grad = !p->grad.empty();
            const std::int64_t n = p->value.numel();
            for (std::int64_t k = 0; k < n; ++k) {
                const Real g = has_grad ? p->grad[k] : Real(0);
                m_[i][k] = beta1_ * m_[i][k] + (Real(1) - beta1_) * g;
                v_[i][k] = beta2_ * v_[i][k] + (Real(1) - beta2_) * g * g;
                p->value[k] -= lr_ * (m_[i][k] / c1) / (std::sqrt(v_[i][k] / c2) + eps_);
            }
        }
    }

    std::int64_t t() const { return t_; }
    const std::vector<Tensor<Real>>& m() const { return m_; }
    const std::vector<Tensor<Real>>& v() const { return v_; }

    void restore(std::int64_t t, std::vector<Tensor<Real>> m, std::vector<Tensor<Real>> v) {
        if (m.size() != m_.size() || v.size() != v_.size())
            throw data_error("Adam::restore: moment table size does not match the parameter set");
        for (std::size_t i = 0; i < m.size(); ++i)
            if (!m[i].same_shape(m_[i]) || !v[i].same_shape(v_[i]))
                throw data_error("Adam::restore: moment shapes do not match the parameter set");
        t_ = t;
        m_ = std::move(m);
        v_ = std::move(v);
    }

private:
    ParamStore<Real>* store_;
    Real lr_, beta1_, beta2_, eps_;
    std::int64_t t_ = 0;
    std::vector<Tensor<Real>> m_, v_;
};

}  // namespace hva
