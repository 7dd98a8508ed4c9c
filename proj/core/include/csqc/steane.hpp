#pragma once

// Steane [[7,1,3]] code: parity checks, graph-state encoders built from
// {|+> prep, H, CZ}, a small Pauli tableau used to check the encoders, and an
// erasure-aware maximum-likelihood syndrome decoder.

#include <array>
#include <cstdint>
#include <utility>
#include <vector>

#include "csqc/noise.hpp"

namespace csqc {

using Mask = std::uint64_t;

inline int popcount(Mask m) { return __builtin_popcountll(m); }
inline bool parity(Mask m) { return (popcount(m) & 1) != 0; }

/// Pauli operator i^phase * prod X^x Z^z on up to 64 qubits.
struct PauliString {
    Mask x = 0;
    Mask z = 0;
    int phase = 0;  // power of i, mod 4

    bool commutes_with(const PauliString& o) const { return !parity((x & o.z) ^ (z & o.x)); }
    PauliString& operator*=(const PauliString& o);
    bool operator==(const PauliString&) const = default;
};

struct EncoderOp {
    OpKind kind = OpKind::plus_prep;
    int a = 0;
    int b = -1;
};

struct CodeSpec {
    int n = 7;
    int k = 1;
    int d = 3;
    /// Check rows as 7-bit masks (bit j = qubit j); used for both X and Z stabilizers.
    std::array<std::uint8_t, 3> checks{};
    std::uint8_t logical_x = 0x7F;
    std::uint8_t logical_z = 0x7F;
    std::array<int, 3> pivots{};
    std::array<int, 4> targets{};
    /// Three CZ layers of the graph encoder, disjoint pairs (pivot, target).
    std::array<std::array<std::pair<int, int>, 3>, 3> cz_layers{};

    unsigned syndrome(std::uint8_t word) const;

    /// Encoder moments (ops within a moment act on disjoint qubits).
    std::vector<std::vector<EncoderOp>> encoder(bool plus) const;

    static const CodeSpec& steane();
};

/// Stabilizer generators (n - k) plus the logical operator fixing the state.
std::vector<PauliString> code_stabilizers(const CodeSpec& code, bool plus);

/// Runs the encoder on a phase-tracking tableau from |0...0> and checks the
/// output stabilizer group (with signs) equals the code's |+_L> or |0_L> group.
bool verify_encoder(const CodeSpec& code, bool plus);

/// All pairs of stabilizers commute; logical X and Z anticommute and commute
/// with every stabilizer.
bool verify_code(const CodeSpec& code);

/// Rank over GF(2) of rows (x | z).
int symplectic_rank(const std::vector<PauliString>& rows, int n);

struct DecodeResult {
    std::uint8_t correction = 0;
    bool located_failure = false;
};

/// Table decoder over (3-bit syndrome, 7-bit erasure mask). Erased positions
/// are free; cosets are ranked by the least non-erased weight and then by the
/// number of patterns achieving it. Cosets whose leading terms agree within
/// `tie_ratio` are reported as located failures.
class ErasureDecoder {
   public:
    explicit ErasureDecoder(const CodeSpec& code = CodeSpec::steane(), double tie_ratio = 1.0);

    const DecodeResult& decode(unsigned syndrome, unsigned erasures) const {
        return table_[(syndrome & 7u) * 128u + (erasures & 127u)];
    }
    /// Decodes a 7-bit flip pattern; `logical` is set when the residual after
    /// correction is a logical operator.
    DecodeResult decode_word(std::uint8_t flips, unsigned erasures, bool& logical) const;

    double tie_ratio() const { return tie_ratio_; }

   private:
    const CodeSpec* code_;
    double tie_ratio_;
    std::array<DecodeResult, 8 * 128> table_{};
};

}  // namespace csqc
