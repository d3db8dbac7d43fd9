#include "autoroute/numgrad/ops.hpp"

#include <cmath>
#include <string>

#include "autoroute/kernels.hpp"

namespace autoroute::numgrad {
namespace {

Tape& same_tape(Var a, Var b, const char* op) {
    Tape& t = a.tape();
    if (&b.tape() != &t) throw StateError(std::string(op) + ": operands live on different tapes");
    return t;
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
    if (!a.same_shape(b))
        throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " + b.shape_str());
}

void accumulate(Matrix& dst, const Matrix& src) {
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
}

}  // namespace

Var matmul(Var x, Var w) {
    Tape& t = same_tape(x, w, "matmul");
    Matrix out = kernels::matmul(x.value(), w.value());
    const std::size_t xi = x.index(), wi = w.index();
    return t.record(std::move(out), x.requires_grad() || w.requires_grad(),
                    [xi, wi](Tape& tp, std::size_t self) {
                        const Matrix& g = tp.grad(self);
                        if (tp.requires_grad(xi)) accumulate(tp.grad(xi), kernels::matmul_nt(g, tp.value(wi)));
                        if (tp.requires_grad(wi)) accumulate(tp.grad(wi), kernels::matmul_tn(tp.value(xi), g));
                    });
}

Var add_bias(Var x, Var bias) {
    Tape& t = same_tape(x, bias, "add_bias");
    const Matrix& xv = x.value();
    const Matrix& bv = bias.value();
    if (bv.rows() != 1 || bv.cols() != xv.cols())
        throw ShapeError("add_bias: bias " + bv.shape_str() + " does not fit " + xv.shape_str());
    Matrix out = xv;
    for (std::size_t r = 0; r < out.rows(); ++r)
        for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) += bv(0, c);
    const std::size_t xi = x.index(), bi = bias.index();
    return t.record(std::move(out), x.requires_grad() || bias.requires_grad(),
                    [xi, bi](Tape& tp, std::size_t self) {
                        const Matrix& g = tp.grad(self);
                        if (tp.requires_grad(xi)) accumulate(tp.grad(xi), g);
                        if (tp.requires_grad(bi)) accumulate(tp.grad(bi), kernels::col_sum(g));
                    });
}

Var tanh(Var x) {
    Tape& t = x.tape();
    Matrix out = x.value();
    for (double& v : out.values()) v = std::tanh(v);
    const std::size_t xi = x.index();
    return t.record(std::move(out), x.requires_grad(), [xi](Tape& tp, std::size_t self) {
        const Matrix& g = tp.grad(self);
        const Matrix& y = tp.value(self);
        Matrix& gx = tp.grad(xi);
        for (std::size_t k = 0; k < g.size(); ++k) gx[k] += g[k] * (1.0 - y[k] * y[k]);
    });
}

Var add(Var a, Var b) {
    Tape& t = same_tape(a, b, "add");
    require_same_shape(a.value(), b.value(), "add");
    Matrix out = a.value();
    accumulate(out, b.value());
    const std::size_t ai = a.index(), bi = b.index();
    return t.record(std::move(out), a.requires_grad() || b.requires_grad(),
                    [ai, bi](Tape& tp, std::size_t self) {
                        const Matrix& g = tp.grad(self);
                        if (tp.requires_grad(ai)) accumulate(tp.grad(ai), g);
                        if (tp.requires_grad(bi)) accumulate(tp.grad(bi), g);
                    });
}

Var sub(Var a, Var b) {
    Tape& t = same_tape(a, b, "sub");
    require_same_shape(a.value(), b.value(), "sub");
    Matrix out = a.value();
    const Matrix& bv = b.value();
    for (std::size_t k = 0; k < out.size(); ++k) out[k] -= bv[k];
    const std::size_t ai = a.index(), bi = b.index();
    return t.record(std::move(out), a.requires_grad() || b.requires_grad(),
                    [ai, bi](Tape& tp, std::size_t self) {
                        const Matrix& g = tp.grad(self);
                        if (tp.requires_grad(ai)) accumulate(tp.grad(ai), g);
                        if (tp.requires_grad(bi)) {
                            Matrix& gb = tp.grad(bi);
                            for (std::size_t k = 0; k < g.size(); ++k) gb[k] -= g[k];
                        }
                    });
}

Var scale(Var x, Var s) {
    Tape& t = same_tape(x, s, "scale");
    const Matrix& sv = s.value();
    if (sv.rows() != 1 || sv.cols() != 1) throw ShapeError("scale: factor must be 1x1, got " + sv.shape_str());
    const double f = sv(0, 0);
    Matrix out = x.value();
    for (double& v : out.values()) v *= f;
    const std::size_t xi = x.index(), si = s.index();
    return t.record(std::move(out), x.requires_grad() || s.requires_grad(),
                    [xi, si](Tape& tp, std::size_t self) {
                        const Matrix& g = tp.grad(self);
                        const Matrix& xv = tp.value(xi);
                        const double f = tp.value(si)(0, 0);
                        if (tp.requires_grad(xi)) {
                            Matrix& gx = tp.grad(xi);
                            for (std::size_t k = 0; k < g.size(); ++k) gx[k] += f * g[k];
                        }
                        if (tp.requires_grad(si)) {
                            double acc = 0.0;
                            for (std::size_t k = 0; k < g.size(); ++k) acc += g[k] * xv[k];
                            tp.grad(si)(0, 0) += acc;
                        }
                    });
}

Var scale(Var x, double c) {
    Tape& t = x.tape();
    Matrix out = x.value();
    for (double& v : out.values()) v *= c;
    const std::size_t xi = x.index();
    return t.record(std::move(out), x.requires_grad(), [xi, c](Tape& tp, std::size_t self) {
        const Matrix& g = tp.grad(self);
        Matrix& gx = tp.grad(xi);
        for (std::size_t k = 0; k < g.size(); ++k) gx[k] += c * g[k];
    });
}

Var mul_rows(Var x, Var g) {
    Tape& t = same_tape(x, g, "mul_rows");
    const Matrix& xv = x.value();
    const Matrix& gv = g.value();
    if (gv.cols() != 1 || gv.rows() != xv.rows())
        throw ShapeError("mul_rows: gate " + gv.shape_str() + " does not fit " + xv.shape_str());
    Matrix out = xv;
    for (std::size_t r = 0; r < out.rows(); ++r)
        for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) *= gv(r, 0);
    const std::size_t xi = x.index(), gi = g.index();
    return t.record(std::move(out), x.requires_grad() || g.requires_grad(),
                    [xi, gi](Tape& tp, std::size_t self) {
                        const Matrix& up = tp.grad(self);
                        const Matrix& xv = tp.value(xi);
                        const Matrix& gv = tp.value(gi);
                        if (tp.requires_grad(xi)) {
                            Matrix& gx = tp.grad(xi);
                            for (std::size_t r = 0; r < up.rows(); ++r)
                                for (std::size_t c = 0; c < up.cols(); ++c) gx(r, c) += up(r, c) * gv(r, 0);
                        }
                        if (tp.requires_grad(gi)) {
                            Matrix& gg = tp.grad(gi);
                            for (std::size_t r = 0; r < up.rows(); ++r) {
                                double acc = 0.0;
                                for (std::size_t c = 0; c < up.cols(); ++c) acc += up(r, c) * xv(r, c);
                                gg(r, 0) += acc;
                            }
                        }
                    });
}

Var row_mean(Var x) {
    Tape& t = x.tape();
    const Matrix& xv = x.value();
    if (xv.cols() == 0) throw ShapeError("row_mean of a matrix with no columns");
    Matrix out(xv.rows(), 1);
    const double inv = 1.0 / static_cast<double>(xv.cols());
    for (std::size_t r = 0; r < xv.rows(); ++r) out(r, 0) = pairwise_sum(xv.row(r)) * inv;
    const std::size_t xi = x.index();
    return t.record(std::move(out), x.requires_grad(), [xi, inv](Tape& tp, std::size_t self) {
        const Matrix& g = tp.grad(self);
        Matrix& gx = tp.grad(xi);
        for (std::size_t r = 0; r < gx.rows(); ++r)
            for (std::size_t c = 0; c < gx.cols(); ++c) gx(r, c) += g(r, 0) * inv;
    });
}

Var concat_cols(Var a, Var b) {
    Tape& t = same_tape(a, b, "concat_cols");
    const Matrix& av = a.value();
    const Matrix& bv = b.value();
    if (av.rows() != bv.rows())
        throw ShapeError("concat_cols: row mismatch " + av.shape_str() + " vs " + bv.shape_str());
    Matrix out(av.rows(), av.cols() + bv.cols());
    for (std::size_t r = 0; r < av.rows(); ++r) {
        for (std::size_t c = 0; c < av.cols(); ++c) out(r, c) = av(r, c);
        for (std::size_t c = 0; c < bv.cols(); ++c) out(r, av.cols() + c) = bv(r, c);
    }
    const std::size_t ai = a.index(), bi = b.index(), split = av.cols();
    return t.record(std::move(out), a.requires_grad() || b.requires_grad(),
                    [ai, bi, split](Tape& tp, std::size_t self) {
                        const Matrix& g = tp.grad(self);
                        if (tp.requires_grad(ai)) {
                            Matrix& ga = tp.grad(ai);
                            for (std::size_t r = 0; r < ga.rows(); ++r)
                                for (std::size_t c = 0; c < ga.cols(); ++c) ga(r, c) += g(r, c);
                        }
                        if (tp.requires_grad(bi)) {
                            Matrix& gb = tp.grad(bi);
                            for (std::size_t r = 0; r < gb.rows(); ++r)
                                for (std::size_t c = 0; c < gb.cols(); ++c) gb(r, c) += g(r, split + c);
                        }
                    });
}

Var detach(Var x) { return x.tape().constant(x.value()); }

Var mse(Var pred, Var target) {
    Tape& t = same_tape(pred, target, "mse");
    require_same_shape(pred.value(), target.value(), "mse");
    const Matrix& p = pred.value();
    const Matrix& y = target.value();
    std::vector<double> sq(p.size());
    for (std::size_t k = 0; k < p.size(); ++k) sq[k] = (p[k] - y[k]) * (p[k] - y[k]);
    const double n = static_cast<double>(p.size());
    Matrix out(1, 1, pairwise_sum(sq) / n);
    const std::size_t pi = pred.index(), yi = target.index();
    return t.record(std::move(out), pred.requires_grad() || target.requires_grad(),
                    [pi, yi, n](Tape& tp, std::size_t self) {
                        const double g = tp.grad(self)(0, 0);
                        const Matrix& p = tp.value(pi);
                        const Matrix& y = tp.value(yi);
                        for (std::size_t k = 0; k < p.size(); ++k) {
                            const double d = 2.0 * g * (p[k] - y[k]) / n;
                            if (tp.requires_grad(pi)) tp.grad(pi)[k] += d;
                            if (tp.requires_grad(yi)) tp.grad(yi)[k] -= d;
                        }
                    });
}

Var row_norm_mean(Var x) {
    Tape& t = x.tape();
    const Matrix& xv = x.value();
    if (xv.rows() == 0) throw ShapeError("row_norm_mean of an empty batch");
    Matrix norms(xv.rows(), 1);
    for (std::size_t r = 0; r < xv.rows(); ++r) {
        double s = 0.0;
        for (double v : xv.row(r)) s += v * v;
        norms(r, 0) = std::sqrt(s);
    }
    const double n = static_cast<double>(xv.rows());
    Matrix out(1, 1, pairwise_sum(norms.values()) / n);
    const std::size_t xi = x.index();
    return t.record(std::move(out), x.requires_grad(),
                    [xi, n, norms = std::move(norms)](Tape& tp, std::size_t self) {
                        const double g = tp.grad(self)(0, 0);
                        const Matrix& xv = tp.value(xi);
                        Matrix& gx = tp.grad(xi);
                        for (std::size_t r = 0; r < xv.rows(); ++r) {
                            // The norm is not differentiable at 0; use the zero subgradient.
                            if (norms(r, 0) == 0.0) continue;
                            const double f = g / (n * norms(r, 0));
                            for (std::size_t c = 0; c < xv.cols(); ++c) gx(r, c) += f * xv(r, c);
                        }
                    });
}

Var batch_norm_train(Var x, Var gamma, Var beta, double eps, BatchStats* stats) {
    Tape& t = same_tape(x, gamma, "batch_norm_train");
    same_tape(x, beta, "batch_norm_train");
    const Matrix& xv = x.value();
    const std::size_t rows = xv.rows(), cols = xv.cols();
    if (rows == 0) throw ShapeError("batch_norm_train on an empty batch");
    if (gamma.value().rows() != 1 || gamma.value().cols() != cols || !beta.value().same_shape(gamma.value()))
        throw ShapeError("batch_norm_train: affine parameters do not fit " + xv.shape_str());

    Matrix mean(1, cols), var(1, cols), inv_std(1, cols), xhat(rows, cols);
    std::vector<double> col(rows);
    for (std::size_t c = 0; c < cols; ++c) {
        for (std::size_t r = 0; r < rows; ++r) col[r] = xv(r, c);
        mean(0, c) = pairwise_sum(col) / static_cast<double>(rows);
        for (std::size_t r = 0; r < rows; ++r) col[r] = (xv(r, c) - mean(0, c)) * (xv(r, c) - mean(0, c));
        var(0, c) = pairwise_sum(col) / static_cast<double>(rows);
        inv_std(0, c) = 1.0 / std::sqrt(var(0, c) + eps);
        for (std::size_t r = 0; r < rows; ++r) xhat(r, c) = (xv(r, c) - mean(0, c)) * inv_std(0, c);
    }
    const Matrix& gv = gamma.value();
    const Matrix& bv = beta.value();
    Matrix out(rows, cols);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) out(r, c) = gv(0, c) * xhat(r, c) + bv(0, c);
    if (stats) *stats = BatchStats{mean, var};

    const std::size_t xi = x.index(), gi = gamma.index(), bi = beta.index();
    const bool needs = x.requires_grad() || gamma.requires_grad() || beta.requires_grad();
    return t.record(std::move(out), needs,
                    [xi, gi, bi, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape& tp,
                                                                                     std::size_t self) {
                        const Matrix& g = tp.grad(self);
                        const Matrix& gv = tp.value(gi);
                        const std::size_t rows = g.rows(), cols = g.cols();
                        const double n = static_cast<double>(rows);
                        for (std::size_t c = 0; c < cols; ++c) {
                            double sum_g = 0.0, sum_gx = 0.0;
                            for (std::size_t r = 0; r < rows; ++r) {
                                sum_g += g(r, c);
                                sum_gx += g(r, c) * xhat(r, c);
                            }
                            if (tp.requires_grad(bi)) tp.grad(bi)(0, c) += sum_g;
                            if (tp.requires_grad(gi)) tp.grad(gi)(0, c) += sum_gx;
                            if (tp.requires_grad(xi)) {
                                Matrix& gx = tp.grad(xi);
                                const double k = gv(0, c) * inv_std(0, c) / n;
                                for (std::size_t r = 0; r < rows; ++r)
                                    gx(r, c) += k * (n * g(r, c) - sum_g - xhat(r, c) * sum_gx);
                            }
                        }
                    });
}

Var batch_norm_eval(Var x, const Matrix& mean, const Matrix& var, Var gamma, Var beta, double eps) {
    Tape& t = same_tape(x, gamma, "batch_norm_eval");
    same_tape(x, beta, "batch_norm_eval");
    const Matrix& xv = x.value();
    const std::size_t rows = xv.rows(), cols = xv.cols();
    if (mean.rows() != 1 || mean.cols() != cols || !var.same_shape(mean) ||
        !gamma.value().same_shape(mean) || !beta.value().same_shape(mean))
        throw ShapeError("batch_norm_eval: statistics do not fit " + xv.shape_str());
    Matrix inv_std(1, cols), xhat(rows, cols), out(rows, cols);
    for (std::size_t c = 0; c < cols; ++c) inv_std(0, c) = 1.0 / std::sqrt(var(0, c) + eps);
    const Matrix& gv = gamma.value();
    const Matrix& bv = beta.value();
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) {
            xhat(r, c) = (xv(r, c) - mean(0, c)) * inv_std(0, c);
            out(r, c) = gv(0, c) * xhat(r, c) + bv(0, c);
        }
    const std::size_t xi = x.index(), gi = gamma.index(), bi = beta.index();
    const bool needs = x.requires_grad() || gamma.requires_grad() || beta.requires_grad();
    return t.record(std::move(out), needs,
                    [xi, gi, bi, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape& tp,
                                                                                     std::size_t self) {
                        const Matrix& g = tp.grad(self);
                        const Matrix& gv = tp.value(gi);
                        for (std::size_t r = 0; r < g.rows(); ++r)
                            for (std::size_t c = 0; c < g.cols(); ++c) {
                                if (tp.requires_grad(bi)) tp.grad(bi)(0, c) += g(r, c);
                                if (tp.requires_grad(gi)) tp.grad(gi)(0, c) += g(r, c) * xhat(r, c);
                                if (tp.requires_grad(xi)) tp.grad(xi)(r, c) += g(r, c) * gv(0, c) * inv_std(0, c);
                            }
                    });
}

}  // namespace autoroute::numgrad
