#pragma once

// Coherent-state qubits and the linear-optics circuits that measure,
// teleport, and entangle them.
//
// Logical basis: |0> = |alpha>, |1> = |-alpha>. Coefficient vectors over
// several modes are indexed with mode 0 as the most significant bit.
// A Pauli frame (x, z) on an output means: output = X^x Z^z (ideal output),
// up to a global phase.

#include <array>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "csqc/fock.hpp"

namespace csqc {

class ConsistencyError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

class VerificationError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

class StarvationError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

struct CsqcQubit {
    cplx mu{1.0, 0.0};
    cplx nu{0.0, 0.0};
    double alpha = 1.0;

    /// N_{mu,nu}(alpha); throws DegenerateStateError for the zero vector.
    double normalization() const;
};

FockVector encode(const CsqcQubit& q, int cutoff, const FockLimits& limits = {});
FockVector encode(const CsqcQubit& q, const FockLimits& limits = {});

inline constexpr double kLeakageThreshold = 1e-6;

struct DecodedQubit {
    CsqcQubit qubit;
    double residual = 0.0;
    bool leakage = false;
};

/// Least-squares fit of a single-mode state onto span{|alpha>, |-alpha>}.
DecodedQubit decode(const FockVector& state, double alpha);

struct DecodedRegister {
    std::vector<cplx> coeffs;
    double residual = 0.0;
    bool leakage = false;
};

/// Multimode fit onto the product basis {|+-a_0>} x ... x {|+-a_{n-1}>}.
DecodedRegister decode_register(const FockVector& state, std::span<const double> alphas);
DecodedRegister decode_register(const FockVector& state, double alpha);

/// |<a, b>|^2 / (|a|^2 |b|^2): phase-insensitive agreement of coefficient vectors.
double coefficient_fidelity(std::span<const cplx> a, std::span<const cplx> b);

// Coefficient-level Paulis on qubit `target` of an n-qubit coefficient vector.
std::vector<cplx> apply_x(std::span<const cplx> c, std::size_t target, std::size_t n_qubits);
std::vector<cplx> apply_z(std::span<const cplx> c, std::size_t target, std::size_t n_qubits);

enum class Outcome { bell_1, bell_2, bell_3, bell_4, z_zero, z_one, failure };
std::string_view to_string(Outcome o);

struct FrameUpdate {
    bool x = false;
    bool z = false;

    bool operator==(const FrameUpdate&) const = default;
    FrameUpdate& operator^=(const FrameUpdate& o) {
        x = x != o.x;
        z = z != o.z;
        return *this;
    }
};

struct MeasurementRecord {
    Outcome outcome = Outcome::failure;
    std::vector<int> photon_counts;
    FrameUpdate frame;

    bool failed() const { return outcome == Outcome::failure; }
};

/// Bell outcome -> Pauli frame of the teleported output, frozen from
/// calibrate_bell_frames (checked by the test suite).
inline constexpr std::array<FrameUpdate, 4> kBellFrames{{
    {false, false},  // bell_1: light in port 0, even count
    {false, true},   // bell_2: port 0, odd
    {true, false},   // bell_3: port 1, even
    {true, true},    // bell_4: port 1, odd
}};

MeasurementRecord classify_z(int port0, int port1);
MeasurementRecord classify_bell(int port0, int port1);

/// Brute-force frame of each Bell outcome: teleports a generic qubit through
/// an ideal pair and finds the Pauli relating output to input.
std::array<FrameUpdate, 4> calibrate_bell_frames(double alpha, const FockLimits& limits = {});

struct MeasuredState {
    MeasurementRecord record;
    std::optional<FockVector> remaining;
};

struct MeasurementBranch {
    MeasurementRecord record;
    double probability = 0.0;
    FockVector remaining;
};

/// Z-basis measurement of a single-mode qubit (ancilla |alpha>, 50:50, count).
MeasurementRecord z_measure(const FockVector& qubit_mode, double alpha, std::mt19937_64& rng,
                            const FockLimits& limits = {});
std::vector<MeasurementBranch> z_measure_branches(const FockVector& qubit_mode, double alpha,
                                                  const FockLimits& limits = {});

/// Bell measurement on modes (a, b) of `state`; the other modes survive.
MeasuredState bell_measure(const FockVector& state, std::size_t mode_a, std::size_t mode_b, double alpha,
                           std::mt19937_64& rng, const FockLimits& limits = {});
std::vector<MeasurementBranch> bell_measure_branches(const FockVector& state, std::size_t mode_a,
                                                     std::size_t mode_b, double alpha,
                                                     const FockLimits& limits = {});

enum class ResourceKind { bell, zrot, hadamard, cz };
std::string_view to_string(ResourceKind k);

struct EntanglementResource {
    ResourceKind kind = ResourceKind::bell;
    FockVector modes;
    double alpha = 0.0;
    /// Amplitude of each mode's coherent components.
    std::vector<double> mode_amplitudes;
    /// Relative half-phase of zrot resources: e^{i phi}|+..> + e^{-i phi}|-..>.
    double phase = 0.0;
    /// Pending Pauli carried by the resource (zrot only; Z on the pair).
    FrameUpdate frame;
    int attempts_used = 1;
    /// Coefficient fidelity against the kind's ideal pattern.
    double fidelity = 0.0;
    double residual = 0.0;
};

struct FactoryOptions {
    FockLimits limits{};
    int max_attempts = 100000;
    double fidelity_tolerance = 1e-8;
};

/// Ideal coefficient pattern of a resource (after its frame is undone).
std::vector<cplx> ideal_pattern(const EntanglementResource& r);

/// Decodes the resource and fills fidelity/residual; returns whether it
/// matches its ideal pattern within `tolerance`.
bool verify_resource(EntanglementResource& r, double tolerance = 1e-8);

EntanglementResource make_bell_pair(double alpha, const FockLimits& limits = {});

struct FactoryBranch {
    std::vector<int> pattern;
    double probability = 0.0;
    EntanglementResource resource;
};

/// Accepted branches of the Z-rotation factory: phi is the relative
/// half-phase of the emitted pair (e^{i phi}|a,b> + e^{-i phi}|-a,-b>).
std::vector<FactoryBranch> zrot_branches(double phi, double alpha, double beta, const FockLimits& limits = {});
double zrot_acceptance(double phi, double alpha, double beta, const FockLimits& limits = {});
EntanglementResource zrot_entanglement(double phi, double alpha, double beta, std::mt19937_64& rng,
                                       const FactoryOptions& opts = {});

/// Pauli frame left by each one-photon pattern ({1,0} then {0,1}), frozen
/// from calibrate_zrot_frames.
inline constexpr std::array<FrameUpdate, 2> kZrotPatternFrames{{{false, true}, {false, false}}};
std::array<FrameUpdate, 2> calibrate_zrot_frames(double phi, double alpha, double beta,
                                                 const FockLimits& limits = {});

// Hadamard factory: zrot half-phases of the two copies and the final splitter angle.
inline constexpr double kHadamardPhiA = 3.0 * 0.7853981633974483;
inline constexpr double kHadamardPhiB = 0.7853981633974483;
inline constexpr double kHadamardDelta = 0.7853981633974483;

/// X corrections {on first output, on second output} indexed by
/// [pattern of copy A][pattern of copy B][final detector], frozen from
/// calibrate_hadamard_corrections.
using HadamardCorrectionTable = std::array<std::array<std::array<std::array<bool, 2>, 2>, 2>, 2>;
extern const HadamardCorrectionTable kHadamardCorrections;
HadamardCorrectionTable calibrate_hadamard_corrections(double alpha, const FockLimits& limits = {});

std::vector<FactoryBranch> hadamard_branches(double alpha, const FockLimits& limits = {});
double hadamard_acceptance(double alpha, const FockLimits& limits = {});
EntanglementResource hadamard_entanglement(double alpha, std::mt19937_64& rng, const FactoryOptions& opts = {});

/// Splits both halves of a Hadamard resource at amplitude sqrt(2) alpha.
EntanglementResource cz_from_hadamard(const EntanglementResource& h, const FockLimits& limits = {});
EntanglementResource cz_entanglement(double alpha, std::mt19937_64& rng, const FactoryOptions& opts = {});

/// Deterministic X gate: pi phase shift.
FockVector pauli_x(const FockVector& state, std::size_t mode = 0);

struct TeleportBranch {
    std::vector<MeasurementRecord> records;
    double probability = 0.0;
    /// Per output qubit.
    std::vector<bool> erased;
    /// Pauli frame on each output qubit.
    std::vector<FrameUpdate> frames;
    FockVector output;
};

/// All branches of teleporting product inputs (one single-mode state per
/// qubit) through a two-mode (bell/zrot/hadamard) or four-mode (cz)
/// resource. The cz case is staged so at most five modes are live.
std::vector<TeleportBranch> teleport_branches(std::span<const FockVector> inputs,
                                              const EntanglementResource& resource, const FockLimits& limits = {});

struct TeleportResult {
    std::vector<MeasurementRecord> records;
    std::vector<bool> erased;
    std::vector<FrameUpdate> frames;
    FockVector output;

    bool any_erased() const;
};

TeleportResult teleport(std::span<const FockVector> inputs, const EntanglementResource& resource,
                        std::mt19937_64& rng, const FockLimits& limits = {});
TeleportResult teleport(const CsqcQubit& q, const EntanglementResource& resource, std::mt19937_64& rng,
                        const FockLimits& limits = {});

enum class GateKind { zrot, hadamard, cz };
std::string_view to_string(GateKind k);

struct GateSpec {
    GateKind kind = GateKind::hadamard;
    /// Rotation angle for zrot, Z(theta) = exp(i theta Z / 2).
    double theta = 0.0;
};

/// Ideal action on coefficients (2 or 4 entries).
std::vector<cplx> ideal_gate(const GateSpec& g, std::span<const cplx> in);

/// One teleportation step of a gate through a supplied resource.
TeleportResult teleported_gate(const GateSpec& g, std::span<const FockVector> inputs,
                               const EntanglementResource& resource,
                               std::mt19937_64& rng, const FockLimits& limits = {});

/// Adaptive Z(theta): teleports through factory-made zrot resources until
/// the accumulated rotation equals theta up to a Pauli. Erased on failure.
TeleportResult teleported_zrot(double theta, const FockVector& input, double alpha, std::mt19937_64& rng,
                               const FactoryOptions& opts = {}, int max_steps = 8);

struct GateVerification {
    std::string name;
    double alpha = 0.0;
    double failure_probability = 0.0;
    double predicted_failure = 0.0;
    double total_probability = 0.0;
    double min_fidelity = 1.0;
    double max_residual = 0.0;
    std::size_t branches = 0;
    bool unambiguous = true;
    bool passed = false;
    std::string note;
};

struct VerifyOptions {
    FockLimits limits{1e-16, std::size_t{1} << 23};
    double fidelity_tolerance = 1e-8;
    double probability_tolerance = 1e-6;
};

GateVerification verify_z_measure(double alpha, const CsqcQubit& input, const VerifyOptions& opts = {});
GateVerification verify_teleport(double alpha, const CsqcQubit& input, const VerifyOptions& opts = {});
GateVerification verify_zrot_gate(double theta, double alpha, const CsqcQubit& input,
                                  const VerifyOptions& opts = {});
GateVerification verify_hadamard_gate(double alpha, const CsqcQubit& input, const VerifyOptions& opts = {});
GateVerification verify_cz_gate(double alpha, const CsqcQubit& a, const CsqcQubit& b,
                                const VerifyOptions& opts = {});

/// Failure probability of teleporting `input` through an ideal zrot pair of
/// half-phase phi, computed in closed form from coherent-state overlaps.
double teleport_failure_closed_form(double alpha, const CsqcQubit& input, double phi = 0.0);

}  // namespace csqc
