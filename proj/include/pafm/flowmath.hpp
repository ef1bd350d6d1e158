#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "pafm/matrix.hpp"
#include "pafm/rng.hpp"

namespace pafm::flow {

struct PerturbationConfig {
    double sigma = 0.1;  // perturbation scale, >= 0
    double alpha = 1.0;  // refinement weight
};

// One unit of training work on the linear path from noise x0 to data x1.
struct FlowSample {
    Matrix x0;
    Matrix x1;
    double t = 0.0;
    Matrix xt;       // (1 - t) x0 + t x1
    Matrix xt_pert;  // xt + sigma * eps
    Matrix eps;
};

struct VelocityOutput {
    Matrix v;        // clean-path velocity
    Matrix v_pert;   // velocity at the perturbed state
    Matrix delta;    // v_pert - v
    Matrix v_final;  // v + alpha * delta * gate
    Matrix gate;     // entries in (0, 1)
};

struct Perturbed {
    Matrix xt_pert;
    Matrix eps;
};

Matrix interpolate(const Matrix& x0, const Matrix& x1, double t);
Matrix target_velocity(const Matrix& x0, const Matrix& x1);

Perturbed perturb(const Matrix& xt, double sigma, std::uint64_t seed);
Perturbed perturb(const Matrix& xt, double sigma, Rng& rng);

FlowSample make_flow_sample(const Matrix& x0, const Matrix& x1, double t, double sigma, const Matrix& eps);

VelocityOutput refine_velocity(const Matrix& v, const Matrix& v_pert, const Matrix& gate, double alpha);

// Mean over all entries of (v_final - (x1 - x0))^2.
double fm_loss(const Matrix& v_final, const Matrix& x0, const Matrix& x1);

using VelocityField = std::function<Matrix(const Matrix& x, double t)>;

struct JvpProbe {
    Matrix eps;                      // shared probe direction
    Matrix reference;                // Richardson estimate of J(x) eps
    std::vector<Matrix> quotients;   // delta(sigma) / sigma per sigma
    std::vector<double> residuals;   // ||quotient - reference||
};

// Finite-difference probe of the field's Jacobian-vector product along a
// shared direction. The reference is 2 D(s/2) - D(s) at the smallest sigma s,
// which is second-order accurate, so residuals shrink linearly in sigma for
// smooth fields and vanish for linear ones.
JvpProbe jvp_probe(const VelocityField& field, const Matrix& xt, double t, const std::vector<double>& sigmas,
                   const Matrix& eps);
JvpProbe jvp_probe(const VelocityField& field, const Matrix& xt, double t, const std::vector<double>& sigmas,
                   std::uint64_t seed);
std::vector<double> jvp_residual(const VelocityField& field, const Matrix& xt, double t,
                                 const std::vector<double>& sigmas, std::uint64_t seed);

}  // namespace pafm::flow
