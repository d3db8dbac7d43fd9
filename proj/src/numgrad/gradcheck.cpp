#include "autoroute/numgrad/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "autoroute/numgrad/optim.hpp"

namespace autoroute::numgrad {
namespace {

double eval(const LossBuilder& f) {
    Tape tape;
    return f(tape).value()(0, 0);
}

}  // namespace

GradCheckReport grad_check(const LossBuilder& f, std::span<Parameter* const> params, double eps, double tol) {
    if (!(eps > 0.0)) throw ConfigError("grad_check: eps must be positive");
    zero_grads(params);
    {
        Tape tape;
        tape.backward(f(tape));
    }

    GradCheckReport report;
    for (Parameter* p : params) {
        auto values = p->value.values();
        for (std::size_t k = 0; k < values.size(); ++k) {
            const double saved = values[k];
            values[k] = saved + eps;
            const double up = eval(f);
            values[k] = saved - eps;
            const double down = eval(f);
            values[k] = saved;

            const double numeric = (up - down) / (2.0 * eps);
            const double analytic = p->grad[k];
            const double abs_err = std::abs(analytic - numeric);
            const double rel_err = abs_err / std::max({std::abs(analytic), std::abs(numeric), kGradCheckFloor});
            report.max_abs_error = std::max(report.max_abs_error, abs_err);
            if (rel_err > report.max_rel_error || report.entries_checked == 0) {
                report.max_rel_error = std::max(report.max_rel_error, rel_err);
                report.worst_entry = p->name + "[" + std::to_string(k) + "]";
            }
            ++report.entries_checked;
        }
    }
    report.passed = report.max_rel_error < tol;
    return report;
}

}  // namespace autoroute::numgrad
