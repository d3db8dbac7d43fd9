#pragma once

#include <span>

#include "autoroute/numgrad/tape.hpp"

namespace autoroute::numgrad {

struct SgdConfig {
    double lr = 0.05;
    double momentum = 0.9;
    double weight_decay = 1e-4;
};

/// Heavy-ball SGD with coupled weight decay:
///   v <- momentum * v + grad + weight_decay * p
///   p <- p - lr * v
/// All gradients are checked before any parameter is touched; a non-finite
/// gradient throws NumericError and leaves every parameter unchanged.
void sgd_step(std::span<Parameter* const> params, double lr, double momentum, double weight_decay);
inline void sgd_step(std::span<Parameter* const> params, const SgdConfig& cfg, double lr) {
    sgd_step(params, lr, cfg.momentum, cfg.weight_decay);
}

/// 0.5 * lr0 * (1 + cos(pi * epoch / total_epochs)).
double cosine_lr(double epoch, double total_epochs, double lr0);

void zero_grads(std::span<Parameter* const> params);

}  // namespace autoroute::numgrad
