#pragma once

// First-order adaptive optimizer used by PTI, the latent optimizer and mapper
// training. Plain Adam behind a small interface; the update is deterministic
// given the gradient sequence.

#include <vector>

#include "tdgem/tensor.hpp"

namespace tdgem::optim {

class Adam {
public:
    explicit Adam(std::vector<Tensor*> params, double lr, double beta1 = 0.9,
                  double beta2 = 0.999, double eps = 1e-8);

    // grads must match the parameter shapes and order
    void step(const std::vector<const Tensor*>& grads);

    double learning_rate() const { return lr_; }
    void set_learning_rate(double lr) { lr_ = lr; }
    std::size_t steps_taken() const { return t_; }

private:
    std::vector<Tensor*> params_;
    std::vector<Tensor> m_, v_;
    std::size_t t_ = 0;
    double lr_, beta1_, beta2_, eps_;
};

}  // namespace tdgem::optim
