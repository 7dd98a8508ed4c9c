#pragma once

#include <array>
#include <stdexcept>
#include <string>
#include <string_view>

namespace csqc {

class DomainError : public std::domain_error {
   public:
    using std::domain_error::domain_error;
};

/// How the loss fraction eta shrinks the encoding amplitude when computing
/// the gate failure probability q.
enum class LossConvention {
    paper_literal,   // alpha' = (1 - eta) alpha
    intensity_loss,  // alpha' = sqrt(1 - eta) alpha
};

std::string_view to_string(LossConvention c);
LossConvention loss_convention_from_string(std::string_view s);

/// Worst-case (|+> input) failure probability of an unambiguous measurement
/// or teleported Clifford gate at effective amplitude alpha_eff.
double q_of(double alpha_eff);

/// Probability of a Z error on a diagonal state after losing intensity
/// fraction eta. Throws DomainError for alpha <= 0.
double p_of(double alpha, double eta);

double effective_amplitude(double alpha, double eta, LossConvention convention);

struct NoiseParams {
    double alpha = 0.0;
    double eta = 0.0;
    double alpha_eff = 0.0;
    double p = 0.0;
    double q = 0.0;
    LossConvention convention = LossConvention::paper_literal;

    static NoiseParams from_physical(double alpha, double eta,
                                     LossConvention convention = LossConvention::paper_literal);
    /// Explicit (p, q) pair with no physical derivation (alpha, eta unset).
    static NoiseParams from_rates(double p, double q);
};

enum class OpKind : unsigned char { memory = 0, hadamard, cz, plus_prep, x_meas };
inline constexpr std::size_t kOpKinds = 5;
std::string_view to_string(OpKind k);

struct OpNoise {
    double located = 0.0;
    double x = 0.0;
    double z = 0.0;

    bool operator==(const OpNoise&) const = default;
};

/// Per-operation noise rates. For cz the rates apply to each of the two
/// qubits independently; for hadamard the X and Z errors are independent.
struct OpNoiseTable {
    std::array<OpNoise, kOpKinds> rows{};
    bool memory_noise_enabled = true;

    const OpNoise& operator[](OpKind k) const { return rows[static_cast<std::size_t>(k)]; }
    OpNoise& operator[](OpKind k) { return rows[static_cast<std::size_t>(k)]; }

    bool is_noiseless() const;
};

// Table coefficients for the entanglement-hungry gates.
inline constexpr double kHadamardLossFactor = 1.6;
inline constexpr double kCzLossFactor = 2.5;

OpNoiseTable build_table(const NoiseParams& params, bool memory_noise);

/// Uniform table used for concatenation levels >= 2: every operation gets
/// the same located rate and the unlocated rate split evenly between X and Z.
OpNoiseTable uniform_table(double unlocated, double located);

}  // namespace csqc
