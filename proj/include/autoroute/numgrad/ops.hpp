#pragma once

#include "autoroute/numgrad/tape.hpp"

namespace autoroute::numgrad {

// Differentiable primitives. Each records one node on the tape of its first
// argument; all arguments must share that tape.

Var matmul(Var x, Var w);        // (B x in) * (in x out)
Var add_bias(Var x, Var bias);   // bias is 1 x cols, broadcast over rows
Var tanh(Var x);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var scale(Var x, Var s);         // s is 1 x 1
Var scale(Var x, double c);
Var mul_rows(Var x, Var g);      // g is rows x 1, scales each row
Var row_mean(Var x);             // rows x 1, mean over features
Var concat_cols(Var a, Var b);
Var detach(Var x);

Var mse(Var pred, Var target);   // 1 x 1, mean over all entries
Var row_norm_mean(Var x);        // 1 x 1, mean over rows of the Euclidean row norm

struct BatchStats {
    Matrix mean;  // 1 x cols
    Matrix var;   // 1 x cols, biased (divides by rows)
};

/// Batch normalization with batch statistics. `stats`, when given, receives
/// the batch mean and biased variance for running-average updates.
Var batch_norm_train(Var x, Var gamma, Var beta, double eps, BatchStats* stats = nullptr);

/// Batch normalization with fixed statistics (evaluation mode).
Var batch_norm_eval(Var x, const Matrix& mean, const Matrix& var, Var gamma, Var beta, double eps);

}  // namespace autoroute::numgrad
