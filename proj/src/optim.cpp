#include "tdgem/optim.hpp"

#include <cmath>

namespace tdgem::optim {

Adam::Adam(std::vector<Tensor*> params, double lr, double beta1, double beta2,
           double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    if (!(lr > 0.0)) throw TdgemError("Adam: learning rate must be > 0");
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (Tensor* p : params_) {
        m_.emplace_back(p->shape());
        v_.emplace_back(p->shape());
    }
}

void Adam::step(const std::vector<const Tensor*>& grads) {
    if (grads.size() != params_.size())
        throw TdgemError("Adam::step: gradient count mismatch");
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, (double)t_);
    const double bc2 = 1.0 - std::pow(beta2_, (double)t_);
    for (std::size_t i = 0; i < params_.size(); ++i) {
        Tensor& p = *params_[i];
        const Tensor& g = *grads[i];
        if (!p.same_shape(g)) throw TdgemError("Adam::step: gradient shape mismatch");
        Tensor& m = m_[i];
        Tensor& v = v_[i];
        for (std::size_t j = 0; j < p.size(); ++j) {
            m[j] = beta1_ * m[j] + (1.0 - beta1_) * g[j];
            v[j] = beta2_ * v[j] + (1.0 - beta2_) * g[j] * g[j];
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            p[j] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
        }
    }
}

}  // namespace tdgem::optim
