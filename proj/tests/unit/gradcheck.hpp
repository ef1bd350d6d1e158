#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "pafm/autograd.hpp"
#include "pafm/rng.hpp"

namespace pafm::testing {

using ScalarFn = std::function<ag::Var(ag::Graph&, const std::vector<ag::Var>&)>;

// Largest |analytic - numeric| / max(1, |numeric|) over every entry of every input.
inline double input_grad_error(const ScalarFn& f, std::vector<Matrix> inputs, double h = 1e-6) {
    ag::Graph g;
    std::vector<ag::Var> vars;
    for (auto& m : inputs) vars.push_back(g.input(m));
    g.backward(f(g, vars));
    double worst = 0.0;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        Matrix analytic = vars[k].grad();
        if (analytic.size() == 0) analytic = Matrix::Zero(inputs[k].rows(), inputs[k].cols());
        for (Index i = 0; i < inputs[k].size(); ++i) {
            auto eval = [&](double delta) {
                std::vector<Matrix> shifted = inputs;
                shifted[k].data()[i] += delta;
                ag::Graph g2(false);
                std::vector<ag::Var> v2;
                for (auto& m : shifted) v2.push_back(g2.constant(m));
                return f(g2, v2).value()(0, 0);
            };
            const double num = (eval(h) - eval(-h)) / (2 * h);
            worst = std::max(worst, std::abs(analytic.data()[i] - num) / std::max(1.0, std::abs(num)));
        }
    }
    return worst;
}

using LossFn = std::function<ag::Var(ag::Graph&)>;

struct ParamGradReport {
    double worst = 0.0;       // max relative error over all entries
    std::string worst_name;
    std::size_t checked = 0;
};

// Central differences on every parameter entry. Relative error uses
// |a - n| / max(|a|, |n|, floor) so tiny gradients are compared absolutely.
inline ParamGradReport param_grad_error(ag::ParameterStore& store, const LossFn& loss, double h = 1e-4,
                                        double floor = 1e-6) {
    store.zero_grad();
    {
        ag::Graph g;
        g.backward(loss(g));
    }
    ParamGradReport rep;
    for (auto& [name, p] : store.items()) {
        for (Index i = 0; i < p.value.size(); ++i) {
            const double orig = p.value.data()[i];
            auto eval = [&](double x) {
                p.value.data()[i] = x;
                ag::Graph g(false);
                return loss(g).value()(0, 0);
            };
            const double num = (eval(orig + h) - eval(orig - h)) / (2 * h);
            p.value.data()[i] = orig;
            const double a = p.grad.data()[i];
            const double err = std::abs(a - num) / std::max({std::abs(a), std::abs(num), floor});
            if (err > rep.worst) {
                rep.worst = err;
                rep.worst_name = name;
            }
            ++rep.checked;
        }
    }
    return rep;
}

inline Matrix random_matrix(Index r, Index c, std::uint64_t seed, double scale = 1.0) {
    Rng rng(seed);
    return scale * normal_matrix(r, c, rng);
}

}  // namespace pafm::testing
