#pragma once

// Pauli-frame Monte Carlo of Steane-code telecorrection under the
// located/unlocated noise model.
//
// One error-correction round (qubit blocks D, A, B, VA, VB of 7):
//   ancilla prep   A and B each encoded as |0_L>, checked for X errors by a
//                  |+_L> block (transversal CZ, X-measure the checker, accept
//                  on a clean even codeword with no located event), then
//                  transversal H -> |+_L>
//   pair           transversal CZ(A, B); a located event discards the pair
//   data round     transversal CZ(D, A), X-measure D and A; B is the output
// D's outcomes fix the Z frame of B, A's fix the X frame.

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "csqc/noise.hpp"
#include "csqc/steane.hpp"

namespace csqc {

struct Op {
    OpKind kind = OpKind::memory;
    std::uint8_t a = 0;
    std::uint8_t b = 0;  // second qubit of cz
};

/// Moment-structured circuit; ops in a moment act on disjoint qubits.
struct CliffordCircuit {
    int qubits = 0;
    std::vector<std::vector<Op>> moments;
    /// Caller-defined phase label per moment.
    std::vector<int> region;

    int classical_bits() const;
    std::size_t op_count() const;
    /// Throws std::invalid_argument on overlapping ops, out-of-range qubits,
    /// a qubit measured twice or used after measurement, or more than 64 qubits.
    void validate() const;
};

/// Error frame over up to 64 qubits plus one record flip bit per measured qubit.
struct PauliFrame {
    Mask x = 0;
    Mask z = 0;
    Mask located = 0;
    Mask records = 0;

    bool operator==(const PauliFrame&) const = default;
};

/// Noiseless conjugation through one op (x_meas copies the z bit into the record).
void apply_op(PauliFrame& f, const Op& op);
PauliFrame propagate(PauliFrame frame, const CliffordCircuit& circuit);

/// Noise after each op per its table row: located -> flag plus a uniformly
/// random Pauli from {I, X, Z, XZ}; otherwise independent X and Z flips. For
/// x_meas the noise acts before the outcome is recorded.
PauliFrame propagate(PauliFrame frame, const CliffordCircuit& circuit, const OpNoiseTable& table,
                     std::mt19937_64& rng);

enum class TrialClass : unsigned char { no_error = 0, logical_x, logical_z, logical_y, located_failure };
inline constexpr std::size_t kTrialClasses = 5;
std::string_view to_string(TrialClass c);
TrialClass classify(bool lx, bool lz, bool located);

struct TrialOutcome {
    TrialClass classification = TrialClass::no_error;
    unsigned syndrome_d = 0;
    unsigned syndrome_a = 0;
    int erasures = 0;
};

/// Error state of one 7-qubit block.
struct BlockFrame {
    std::uint8_t x = 0;
    std::uint8_t z = 0;
    std::uint8_t located = 0;

    bool operator==(const BlockFrame&) const = default;
};

/// Qubit offsets of the blocks in the round circuit.
struct RoundLayout {
    static constexpr int data = 0;
    static constexpr int a = 7;
    static constexpr int b = 14;
    static constexpr int check_a = 21;
    static constexpr int check_b = 28;
    static constexpr int qubits = 35;
};

enum class RoundRegion : int { prep_a = 0, prep_b, pair, data };
inline constexpr std::size_t kRoundRegions = 4;

/// The round circuit with region labels; D is the input, B the output.
CliffordCircuit telecorrection_circuit(const CodeSpec& code);

struct RoundResult {
    BlockFrame out;
    bool lx = false;
    bool lz = false;
    bool located_failure = false;
    bool starved = false;
    unsigned syndrome_d = 0;
    unsigned syndrome_a = 0;
    int erasures = 0;
    /// Preparation attempts of the individual ancilla blocks and of the pair.
    int block_attempts = 0;
    int pair_attempts = 0;
};

/// A single Pauli at one fault site, for exhaustive checks.
struct FaultSpec {
    std::size_t site = 0;
    bool x = false;
    bool z = false;
};

/// Compiled round: every fault site's effect on the final records and the
/// output block is precomputed, so a trial costs one XOR per fault.
class TelecorrectionRound {
   public:
    TelecorrectionRound(const CodeSpec& code, const OpNoiseTable& table, double tie_ratio = 1.0,
                        int max_attempts = 1000);

    RoundResult run(const BlockFrame& in, std::mt19937_64& rng) const;
    /// Noiseless round with at most one injected fault. A fault rejected by
    /// ancilla verification is followed by a clean retry.
    RoundResult run_with_fault(const BlockFrame& in, const std::optional<FaultSpec>& fault) const;

    std::size_t site_count() const { return sites_.size(); }
    const CliffordCircuit& circuit() const { return circuit_; }
    const ErasureDecoder& decoder() const { return decoder_; }
    int max_attempts() const { return max_attempts_; }
    /// Probability that no located event occurs in a region.
    double clean_probability(RoundRegion r) const;

   private:
    struct Effect {
        Mask records = 0;
        std::uint8_t out_x = 0;
        std::uint8_t out_z = 0;
        Effect& operator^=(const Effect& o) {
            records ^= o.records;
            out_x ^= o.out_x;
            out_z ^= o.out_z;
            return *this;
        }
    };
    struct Site {
        int moment = 0;
        int qubit = 0;
        RoundRegion region = RoundRegion::data;
        OpKind kind = OpKind::memory;
        Effect ex;
        Effect ez;
    };
    struct Channel {
        double probability = 0.0;
        double log_q = 0.0;  // log(1 - probability)
        int type = 0;        // 0 located, 1 X, 2 Z
        std::vector<std::uint32_t> sites;
    };
    struct Sampled {
        Effect effect;
        bool located = false;
        Mask flags = 0;
    };

    Effect propagate_unit(int after_moment, int qubit, bool x, bool z) const;
    Sampled sample_region(RoundRegion r, std::mt19937_64& rng) const;
    Effect sample_unlocated(RoundRegion r, std::mt19937_64& rng) const;
    bool verifier_accepts(RoundRegion r, Mask records) const;
    RoundResult finish(const BlockFrame& in, Effect eff, Mask data_flags, int block_attempts, int pair_attempts,
                       bool starved) const;

    const CodeSpec* code_;
    OpNoiseTable table_;
    ErasureDecoder decoder_;
    int max_attempts_;
    CliffordCircuit circuit_;
    std::vector<Site> sites_;
    std::array<std::vector<Channel>, kRoundRegions> channels_;
    std::array<double, kRoundRegions> clean_{};
    std::array<Effect, 7> input_x_{};
    std::array<Effect, 7> input_z_{};
};

/// One full round from an arbitrary data frame (convenience wrapper).
std::pair<BlockFrame, TrialOutcome> telecorrect(const BlockFrame& data, const CodeSpec& code,
                                                const OpNoiseTable& table, std::mt19937_64& rng);

/// Ideal decoding of a block frame: returns (logical X, logical Z, located).
struct IdealDecode {
    bool lx = false;
    bool lz = false;
    bool located = false;
};
IdealDecode ideal_decode(const BlockFrame& f, const ErasureDecoder& decoder);

enum class ExrecGate { memory, hadamard, cz };
std::string_view to_string(ExrecGate g);
ExrecGate exrec_gate_from_string(std::string_view s);

struct ExrecOptions {
    ExrecGate gate = ExrecGate::hadamard;
    double tie_ratio = 1.0;
    int max_attempts = 1000;
    int workers = 1;
    std::size_t chunk = 4096;
};

/// Effective rates at one concatenation level with Wilson 95% intervals.
struct LevelRates {
    int level = 1;
    double unlocated = 0.0;
    double located = 0.0;
    double ci_unlocated = 0.0;  // half-widths
    double ci_located = 0.0;
    // Interval bounds; equal to the point values for rates without sampling error.
    double unlocated_lo = 0.0;
    double unlocated_hi = 0.0;
    double located_lo = 0.0;
    double located_hi = 0.0;
    std::uint64_t trials = 0;
    std::uint64_t unlocated_events = 0;
    std::uint64_t located_events = 0;
};

struct ExrecResult {
    LevelRates rates;
    std::array<std::uint64_t, kTrialClasses> histogram{};
    std::uint64_t starved = 0;
    double mean_block_attempts = 0.0;
    double mean_pair_attempts = 0.0;
    std::vector<std::string> warnings;
};

/// Wilson score interval (lower, upper) at 95%.
std::pair<double, double> wilson_interval(std::uint64_t events, std::uint64_t trials);

ExrecResult run_exrec_table(const OpNoiseTable& table, std::uint64_t trials, std::uint64_t seed,
                            const ExrecOptions& opts = {});
ExrecResult run_exrec(double p, double q, std::uint64_t trials, bool memory_noise, std::uint64_t seed,
                      const ExrecOptions& opts = {});

struct FaultCheckReport {
    std::size_t cases = 0;
    std::size_t logical_failures = 0;
    std::size_t located_failures = 0;
    std::vector<std::string> failures;
};

/// Every single X, Y or Z fault at every site of a noiseless round.
FaultCheckReport exhaustive_single_faults(const CodeSpec& code = CodeSpec::steane());
/// Every pair of erased data qubits with every Pauli on them.
FaultCheckReport exhaustive_double_erasures(const CodeSpec& code = CodeSpec::steane());

}  // namespace csqc
