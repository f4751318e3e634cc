#pragma once

// Finite-difference gradient verification. Always runs in 64-bit precision:
// the graph builder is instantiated for double regardless of what precision
// the op is trained in.

#include <functional>
#include <vector>

#include "crvae/ops.hpp"

namespace crvae {

// Builds a scalar loss from leaf handles on the given tape. Must be
// deterministic: any randomness (noise tensors, dropout-style masks) has to be
// baked into the inputs, not drawn inside the builder.
using GraphBuilder = std::function<Val<double>(Tape<double>&, const std::vector<Val<double>>&)>;

struct GradCheckReport {
    double max_rel_error = 0.0;  // worst guarded relative error over all inputs
    int input_index = -1;        // where the worst error occurred
    std::int64_t elem_index = -1;
    double analytic = 0.0;
    double numeric = 0.0;
    std::int64_t evaluated = 0;  // number of elements probed
};

// |a - n| / max(|a|, |n|, floor). The floor keeps round-off noise in tiny
// gradients from registering as relative error while still flagging any
// absolute deviation above ~1e-8 at the default tolerance of 1e-4.
inline double guarded_rel_error(double a, double n, double floor_ = 1e-4) {
    const double denom = std::max(std::max(std::abs(a), std::abs(n)), floor_);
    return std::abs(a - n) / denom;
}

// Central differences (f(x+h) - f(x-h)) / 2h per element against the tape
// gradient. Probe step h must lie in [1e-6, 1e-4].
inline GradCheckReport grad_check(const GraphBuilder& build, std::vector<Tensor<double>> inputs,
                                  double h = 1e-5) {
    if (h < 1e-6 || h > 1e-4) throw ConfigError("grad_check: step size out of [1e-6, 1e-4]");

    auto eval = [&](const std::vector<Tensor<double>>& xs, bool with_grad,
                    std::vector<Tensor<double>>* grads) -> double {
        Tape<double> tape;
        std::vector<Val<double>> leaves;
        leaves.reserve(xs.size());
        for (const auto& x : xs) leaves.push_back(tape.leaf(x, with_grad));
        Val<double> loss = build(tape, leaves);
        const double value = tape.value(loss).scalar_value();
        if (with_grad) {
            tape.backward(loss);
            grads->clear();
            for (const auto& leaf : leaves) grads->push_back(tape.grad(leaf));
        }
        return value;
    };

    std::vector<Tensor<double>> analytic;
    eval(inputs, true, &analytic);

    GradCheckReport rep;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        for (std::int64_t e = 0; e < inputs[i].numel(); ++e) {
            const double orig = inputs[i][e];
            inputs[i][e] = orig + h;
            const double fp = eval(inputs, false, nullptr);
            inputs[i][e] = orig - h;
            const double fm = eval(inputs, false, nullptr);
            inputs[i][e] = orig;
            const double numeric = (fp - fm) / (2.0 * h);
            const double a = analytic[i][e];
            const double rel = guarded_rel_error(a, numeric);
            rep.evaluated += 1;
            if (rel > rep.max_rel_error) {
                rep.max_rel_error = rel;
                rep.input_index = static_cast<int>(i);
                rep.elem_index = e;
                rep.analytic = a;
                rep.numeric = numeric;
            }
        }
    }
    return rep;
}

}  // namespace crvae
