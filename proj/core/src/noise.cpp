#include "csqc/noise.hpp"

#include <cmath>

namespace csqc {

std::string_view to_string(LossConvention c) {
    switch (c) {
        case LossConvention::paper_literal:
            return "paper_literal";
        case LossConvention::intensity_loss:
            return "intensity_loss";
    }
    return "unknown";
}

LossConvention loss_convention_from_string(std::string_view s) {
    if (s == "paper_literal") {
        return LossConvention::paper_literal;
    }
    if (s == "intensity_loss") {
        return LossConvention::intensity_loss;
    }
    throw std::invalid_argument("unknown loss convention: " + std::string(s));
}

std::string_view to_string(OpKind k) {
    switch (k) {
        case OpKind::memory:
            return "memory";
        case OpKind::hadamard:
            return "hadamard";
        case OpKind::cz:
            return "cz";
        case OpKind::plus_prep:
            return "plus_prep";
        case OpKind::x_meas:
            return "x_meas";
    }
    return "unknown";
}

double q_of(double alpha_eff) {
    if (alpha_eff < 0.0 || !std::isfinite(alpha_eff)) {
        throw DomainError("q_of requires a finite alpha_eff >= 0");
    }
    // 2 / (1 + e^{2a^2}) written to stay finite for large a.
    const double x = 2.0 * alpha_eff * alpha_eff;
    return 2.0 * std::exp(-x) / (1.0 + std::exp(-x));
}

double p_of(double alpha, double eta) {
    if (!(alpha > 0.0) || !std::isfinite(alpha)) {
        throw DomainError("p_of is singular at alpha = 0 (sinh(0) in the denominator)");
    }
    if (!(eta >= 0.0 && eta <= 1.0)) {
        throw DomainError("p_of requires 0 <= eta <= 1");
    }
    const double a2 = alpha * alpha;
    // sinh((2 eta - 1) a2) / sinh(a2) evaluated as a ratio of exponentials
    // scaled by e^{-a2} so large amplitudes do not overflow.
    const double num = std::exp((2.0 * eta - 1.0) * a2 - a2) - std::exp(-(2.0 * eta - 1.0) * a2 - a2);
    const double den = 1.0 - std::exp(-2.0 * a2);
    return 0.5 * (1.0 + num / den);
}

double effective_amplitude(double alpha, double eta, LossConvention convention) {
    if (!(eta >= 0.0 && eta <= 1.0)) {
        throw DomainError("loss fraction must lie in [0, 1]");
    }
    switch (convention) {
        case LossConvention::paper_literal:
            return (1.0 - eta) * alpha;
        case LossConvention::intensity_loss:
            return std::sqrt(1.0 - eta) * alpha;
    }
    return alpha;
}

NoiseParams NoiseParams::from_physical(double alpha, double eta, LossConvention convention) {
    NoiseParams np;
    np.alpha = alpha;
    np.eta = eta;
    np.convention = convention;
    np.alpha_eff = effective_amplitude(alpha, eta, convention);
    np.q = q_of(np.alpha_eff);
    np.p = p_of(alpha, eta);
    return np;
}

NoiseParams NoiseParams::from_rates(double p, double q) {
    NoiseParams np;
    np.p = p;
    np.q = q;
    return np;
}

bool OpNoiseTable::is_noiseless() const {
    for (const auto& r : rows) {
        if (r.located != 0.0 || r.x != 0.0 || r.z != 0.0) {
            return false;
        }
    }
    return true;
}

namespace {

void check_rate(double v, std::string_view what) {
    if (!(v >= 0.0 && v <= 1.0)) {
        throw DomainError("noise rate for " + std::string(what) + " outside [0, 1]: " + std::to_string(v));
    }
}

}  // namespace

OpNoiseTable build_table(const NoiseParams& params, bool memory_noise) {
    const double p = params.p;
    const double q = params.q;
    OpNoiseTable t;
    t.memory_noise_enabled = memory_noise;
    t[OpKind::memory] = {0.0, 0.0, memory_noise ? p : 0.0};
    t[OpKind::hadamard] = {q, kHadamardLossFactor * p, kHadamardLossFactor * p};
    t[OpKind::cz] = {q, 0.0, kCzLossFactor * p};
    t[OpKind::plus_prep] = {0.0, 0.0, p};
    t[OpKind::x_meas] = {0.0, 0.0, 0.0};
    for (std::size_t k = 0; k < kOpKinds; ++k) {
        const auto name = to_string(static_cast<OpKind>(k));
        check_rate(t.rows[k].located, name);
        check_rate(t.rows[k].x, name);
        check_rate(t.rows[k].z, name);
    }
    return t;
}

OpNoiseTable uniform_table(double unlocated, double located) {
    check_rate(unlocated, "unlocated");
    check_rate(located, "located");
    OpNoiseTable t;
    for (auto& r : t.rows) {
        r = {located, 0.5 * unlocated, 0.5 * unlocated};
    }
    return t;
}

}  // namespace csqc
