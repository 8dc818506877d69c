#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "hrseg/autodiff.hpp"
#include "hrseg/tensor.hpp"

namespace hrseg::test {

inline Tensor random_tensor(Rng& rng, std::vector<int> shape, float lo = -1.0f, float hi = 1.0f) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (float& v : t.data) v = lo + static_cast<float>(rng.uniform()) * (hi - lo);
    return t;
}

// Normalized gradient error: |a-b| / max(1, |a|, |b|). The floor of 1
// absorbs f32 forward-rounding noise in the finite-difference quotient;
// genuine gradient bugs show up at the magnitude of the gradient itself.
inline double grad_err(double analytic, double fd) {
    return std::abs(analytic - fd) / std::max({1.0, std::abs(analytic), std::abs(fd)});
}

// Central finite differences (step 1e-3) against reverse-mode gradients
// for a scalar-valued graph over `inputs`. Returns the max normalized
// error over every element of every input.
inline double max_grad_error(const std::vector<Tensor>& inputs,
                             const std::function<Var(Tape&, std::vector<Var>&)>& f,
                             double step = 1e-3) {
    std::vector<Var> vars;
    for (const Tensor& t : inputs) vars.push_back(Var::param(t));
    Tape tape;
    Var loss = f(tape, vars);
    backward(tape, loss);

    auto eval = [&](const std::vector<Tensor>& xs) {
        std::vector<Var> vs;
        for (const Tensor& t : xs) vs.push_back(Var::constant(t));
        Tape tp;
        return static_cast<double>(f(tp, vs).val().data[0]);
    };

    double worst = 0.0;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        const double analytic_missing = !vars[i].has_grad();
        for (std::size_t j = 0; j < inputs[i].data.size(); ++j) {
            std::vector<Tensor> xs = inputs;
            const float orig = xs[i].data[j];
            xs[i].data[j] = orig + static_cast<float>(step);
            const double lp = eval(xs);
            xs[i].data[j] = orig - static_cast<float>(step);
            const double lm = eval(xs);
            const double fd = (lp - lm) / (2.0 * step);
            const double an = analytic_missing ? 0.0 : static_cast<double>(vars[i].grad().data[j]);
            worst = std::max(worst, grad_err(an, fd));
        }
    }
    return worst;
}

}  // namespace hrseg::test
