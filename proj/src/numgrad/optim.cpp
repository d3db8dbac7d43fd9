#include "autoroute/numgrad/optim.hpp"

#include <cmath>
#include <numbers>

namespace autoroute::numgrad {

void sgd_step(std::span<Parameter* const> params, double lr, double momentum, double weight_decay) {
    if (!(lr > 0.0)) throw ConfigError("sgd_step: learning rate must be positive");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("sgd_step: momentum must lie in [0, 1)");
    if (!(weight_decay >= 0.0)) throw ConfigError("sgd_step: weight decay must be non-negative");
    for (const Parameter* p : params)
        if (!p->grad.all_finite()) throw NumericError("sgd_step: non-finite gradient in parameter '" + p->name + "'");

    for (Parameter* p : params) {
        auto value = p->value.values();
        auto grad = p->grad.values();
        auto vel = p->velocity.values();
        for (std::size_t k = 0; k < value.size(); ++k) {
            vel[k] = momentum * vel[k] + grad[k] + weight_decay * value[k];
            value[k] -= lr * vel[k];
        }
    }
}

double cosine_lr(double epoch, double total_epochs, double lr0) {
    if (total_epochs <= 0.0) return lr0;
    return 0.5 * lr0 * (1.0 + std::cos(std::numbers::pi * epoch / total_epochs));
}

void zero_grads(std::span<Parameter* const> params) {
    for (Parameter* p : params) p->zero_grad();
}

}  // namespace autoroute::numgrad
