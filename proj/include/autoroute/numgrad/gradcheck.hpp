#pragma once

#include <functional>
#include <span>
#include <string>

#include "autoroute/numgrad/tape.hpp"

namespace autoroute::numgrad {

struct GradCheckReport {
    double max_rel_error = 0.0;
    double max_abs_error = 0.0;
    std::string worst_entry;  // "<param name>[index]"
    std::size_t entries_checked = 0;
    bool passed = true;
};

/// Builds a fresh graph on the given tape and returns its 1x1 loss. Must be a
/// pure function of the parameter values.
using LossBuilder = std::function<Var(Tape&)>;

/// Floor on the denominator of the relative error, so entries whose true
/// derivative is ~0 are judged on an absolute scale.
inline constexpr double kGradCheckFloor = 1e-6;

/// Compares reverse-mode gradients with central differences
/// (f(p+eps) - f(p-eps)) / 2eps, entry by entry over every parameter.
/// relative error = |analytic - numeric| / max(|analytic|, |numeric|, kGradCheckFloor).
GradCheckReport grad_check(const LossBuilder& f, std::span<Parameter* const> params, double eps = 1e-5,
                           double tol = 1e-4);

}  // namespace autoroute::numgrad
