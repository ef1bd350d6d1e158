#include "pafm/flowmath.hpp"

#include <string>

#include "pafm/errors.hpp"

namespace pafm::flow {

namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw ArgumentError(std::string(op) + ": shape mismatch (" + std::to_string(a.rows()) + "x" +
                            std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                            std::to_string(b.cols()) + ")");
    }
}

}  // namespace

Matrix interpolate(const Matrix& x0, const Matrix& x1, double t) {
    require_same_shape(x0, x1, "interpolate");
    if (!(t >= 0.0 && t <= 1.0)) throw ArgumentError("interpolate: t must be in [0, 1]");
    if (t == 0.0) return x0;
    if (t == 1.0) return x1;
    return (1.0 - t) * x0 + t * x1;
}

Matrix target_velocity(const Matrix& x0, const Matrix& x1) {
    require_same_shape(x0, x1, "target_velocity");
    return x1 - x0;
}

Perturbed perturb(const Matrix& xt, double sigma, std::uint64_t seed) {
    Rng rng(seed);
    return perturb(xt, sigma, rng);
}

Perturbed perturb(const Matrix& xt, double sigma, Rng& rng) {
    if (!(sigma >= 0.0)) throw ArgumentError("perturb: sigma must be >= 0");
    Perturbed p;
    p.eps = normal_matrix(xt.rows(), xt.cols(), rng);
    p.xt_pert = sigma == 0.0 ? xt : Matrix(xt + sigma * p.eps);
    return p;
}

FlowSample make_flow_sample(const Matrix& x0, const Matrix& x1, double t, double sigma, const Matrix& eps) {
    require_same_shape(x0, eps, "make_flow_sample");
    if (!(sigma >= 0.0)) throw ArgumentError("make_flow_sample: sigma must be >= 0");
    FlowSample s;
    s.x0 = x0;
    s.x1 = x1;
    s.t = t;
    s.xt = interpolate(x0, x1, t);
    s.eps = eps;
    s.xt_pert = s.xt + sigma * eps;
    return s;
}

VelocityOutput refine_velocity(const Matrix& v, const Matrix& v_pert, const Matrix& gate, double alpha) {
    require_same_shape(v, v_pert, "refine_velocity");
    require_same_shape(v, gate, "refine_velocity");
    VelocityOutput out;
    out.v = v;
    out.v_pert = v_pert;
    out.gate = gate;
    out.delta = v_pert - v;
    out.v_final = v + alpha * out.delta.cwiseProduct(gate);
    return out;
}

double fm_loss(const Matrix& v_final, const Matrix& x0, const Matrix& x1) {
    require_same_shape(v_final, x0, "fm_loss");
    require_same_shape(x0, x1, "fm_loss");
    return (v_final - (x1 - x0)).squaredNorm() / static_cast<double>(v_final.size());
}

JvpProbe jvp_probe(const VelocityField& field, const Matrix& xt, double t, const std::vector<double>& sigmas,
                   const Matrix& eps) {
    if (sigmas.empty()) throw ArgumentError("jvp_probe: empty sigma list");
    for (std::size_t i = 0; i < sigmas.size(); ++i) {
        if (!(sigmas[i] > 0.0)) throw ArgumentError("jvp_probe: sigmas must be positive");
        if (i > 0 && !(sigmas[i] < sigmas[i - 1])) throw ArgumentError("jvp_probe: sigmas must be strictly decreasing");
    }
    require_same_shape(xt, eps, "jvp_probe");

    const Matrix base = field(xt, t);
    if (!base.allFinite()) throw NumericError("jvp_probe: field output is non-finite at the base point");
    auto quotient = [&](double s) {
        Matrix shifted = field(xt + s * eps, t);
        if (!shifted.allFinite()) throw NumericError("jvp_probe: field output is non-finite at sigma " + std::to_string(s));
        return Matrix((shifted - base) / s);
    };

    JvpProbe probe;
    probe.eps = eps;
    for (double s : sigmas) probe.quotients.push_back(quotient(s));
    const double s_ref = sigmas.back();
    probe.reference = 2.0 * quotient(0.5 * s_ref) - probe.quotients.back();
    for (const Matrix& q : probe.quotients) probe.residuals.push_back((q - probe.reference).norm());
    return probe;
}

JvpProbe jvp_probe(const VelocityField& field, const Matrix& xt, double t, const std::vector<double>& sigmas,
                   std::uint64_t seed) {
    Rng rng(seed);
    return jvp_probe(field, xt, t, sigmas, normal_matrix(xt.rows(), xt.cols(), rng));
}

std::vector<double> jvp_residual(const VelocityField& field, const Matrix& xt, double t,
                                 const std::vector<double>& sigmas, std::uint64_t seed) {
    return jvp_probe(field, xt, t, sigmas, seed).residuals;
}

}  // namespace pafm::flow
