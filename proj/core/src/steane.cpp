#include "csqc/steane.hpp"

#include <algorithm>
#include <stdexcept>

namespace csqc {

PauliString& PauliString::operator*=(const PauliString& o) {
    // Per qubit, (X^a Z^b)(X^c Z^d) = (-1)^{b c} X^{a+c} Z^{b+d}; the Y = i XZ
    // bookkeeping is folded into `phase` by callers building Y as i X Z.
    const int sign = popcount(z & o.x) & 1;
    phase = (phase + o.phase + 2 * sign) & 3;
    x ^= o.x;
    z ^= o.z;
    return *this;
}

unsigned CodeSpec::syndrome(std::uint8_t word) const {
    unsigned s = 0;
    for (std::size_t r = 0; r < checks.size(); ++r) {
        if (parity(word & checks[r])) {
            s |= 1u << r;
        }
    }
    return s;
}

std::vector<std::vector<EncoderOp>> CodeSpec::encoder(bool plus) const {
    std::vector<std::vector<EncoderOp>> moments;
    std::vector<EncoderOp> prep;
    for (int j = 0; j < n; ++j) {
        prep.push_back({OpKind::plus_prep, j});
    }
    moments.push_back(prep);
    for (const auto& layer : cz_layers) {
        std::vector<EncoderOp> m;
        for (auto [a, b] : layer) {
            m.push_back({OpKind::cz, a, b});
        }
        moments.push_back(m);
    }
    std::vector<EncoderOp> last;
    if (plus) {
        for (int j : pivots) {
            last.push_back({OpKind::hadamard, j});
        }
    } else {
        for (int j : targets) {
            last.push_back({OpKind::hadamard, j});
        }
    }
    moments.push_back(last);
    return moments;
}

const CodeSpec& CodeSpec::steane() {
    static const CodeSpec spec = [] {
        CodeSpec c;
        // Column j of the check matrix is the binary expansion of j + 1.
        for (int r = 0; r < 3; ++r) {
            std::uint8_t row = 0;
            for (int j = 0; j < 7; ++j) {
                if (((j + 1) >> r) & 1) {
                    row |= static_cast<std::uint8_t>(1u << j);
                }
            }
            c.checks[r] = row;
        }
        c.pivots = {0, 1, 3};
        c.targets = {2, 4, 5, 6};
        c.cz_layers = {{
            {{{0, 2}, {1, 5}, {3, 6}}},
            {{{0, 4}, {1, 6}, {3, 5}}},
            {{{0, 6}, {1, 2}, {3, 4}}},
        }};
        if (!verify_code(c) || !verify_encoder(c, true) || !verify_encoder(c, false)) {
            throw std::logic_error("Steane encoder does not prepare the code space");
        }
        return c;
    }();
    return spec;
}

std::vector<PauliString> code_stabilizers(const CodeSpec& code, bool plus) {
    std::vector<PauliString> out;
    for (auto row : code.checks) {
        out.push_back({row, 0, 0});
    }
    for (auto row : code.checks) {
        out.push_back({0, row, 0});
    }
    if (plus) {
        out.push_back({code.logical_x, 0, 0});
    } else {
        out.push_back({0, code.logical_z, 0});
    }
    return out;
}

int symplectic_rank(const std::vector<PauliString>& rows, int n) {
    std::vector<std::pair<Mask, Mask>> m;
    for (const auto& r : rows) {
        m.emplace_back(r.x, r.z);
    }
    int rank = 0;
    for (int col = 0; col < 2 * n; ++col) {
        auto bit = [&](const std::pair<Mask, Mask>& v) {
            return col < n ? (v.first >> col) & 1 : (v.second >> (col - n)) & 1;
        };
        auto it = std::find_if(m.begin() + rank, m.end(), [&](const auto& v) { return bit(v) != 0; });
        if (it == m.end()) {
            continue;
        }
        std::iter_swap(m.begin() + rank, it);
        for (std::size_t i = 0; i < m.size(); ++i) {
            if (static_cast<int>(i) != rank && bit(m[i])) {
                m[i].first ^= m[rank].first;
                m[i].second ^= m[rank].second;
            }
        }
        ++rank;
    }
    return rank;
}

namespace {

void conjugate(PauliString& p, const EncoderOp& op) {
    const Mask a = Mask{1} << op.a;
    switch (op.kind) {
        case OpKind::hadamard: {
            const bool xa = p.x & a;
            const bool za = p.z & a;
            if (xa && za) {
                // H Y H = -Y; with Y = i X Z and the X Z ordering kept, the
                // swap XZ -> ZX = -XZ supplies the sign.
                p.phase = (p.phase + 2) & 3;
            }
            p.x = (p.x & ~a) | (za ? a : 0);
            p.z = (p.z & ~a) | (xa ? a : 0);
            break;
        }
        case OpKind::cz: {
            const Mask b = Mask{1} << op.b;
            const bool xa = p.x & a;
            const bool xb = p.x & b;
            // CZ X_a CZ = X_a Z_b; reordering into X...Z... form picks up a sign
            // when both X_a and X_b are present and Z_b is moved past X_b.
            if (xa && xb) {
                p.phase = (p.phase + 2) & 3;
            }
            if (xa) {
                p.z ^= b;
            }
            if (xb) {
                p.z ^= a;
            }
            break;
        }
        default:
            break;
    }
}

// Whether `target` (with sign) lies in the group generated by `gens`.
bool in_group(const std::vector<PauliString>& gens, const PauliString& target, int n) {
    std::vector<PauliString> rows = gens;
    const int r0 = symplectic_rank(rows, n);
    rows.push_back(target);
    if (symplectic_rank(rows, n) != r0) {
        return false;
    }
    // Find the combination by brute force (groups here have at most 2^7 elements).
    const std::size_t g = gens.size();
    for (std::size_t mask = 0; mask < (std::size_t{1} << g); ++mask) {
        PauliString acc;
        for (std::size_t i = 0; i < g; ++i) {
            if (mask >> i & 1) {
                acc *= gens[i];
            }
        }
        if (acc.x == target.x && acc.z == target.z) {
            return acc.phase == target.phase;
        }
    }
    return false;
}

}  // namespace

bool verify_encoder(const CodeSpec& code, bool plus) {
    // Stabilizers of |0...0> are +Z_j; plus_prep then maps each to +X_j.
    std::vector<PauliString> tab;
    for (const auto& moment : code.encoder(plus)) {
        for (const auto& op : moment) {
            if (op.kind == OpKind::plus_prep) {
                tab.push_back({Mask{1} << op.a, 0, 0});
            }
        }
        for (const auto& op : moment) {
            for (auto& row : tab) {
                conjugate(row, op);
            }
        }
    }
    if (static_cast<int>(tab.size()) != code.n || symplectic_rank(tab, code.n) != code.n) {
        return false;
    }
    const auto expected = code_stabilizers(code, plus);
    for (const auto& e : expected) {
        if (!in_group(tab, e, code.n)) {
            return false;
        }
    }
    return symplectic_rank(expected, code.n) == code.n;
}

bool verify_code(const CodeSpec& code) {
    const auto s = code_stabilizers(code, true);
    const std::vector<PauliString> stab(s.begin(), s.end() - 1);
    for (const auto& a : stab) {
        for (const auto& b : stab) {
            if (!a.commutes_with(b)) {
                return false;
            }
        }
    }
    const PauliString lx{code.logical_x, 0, 0};
    const PauliString lz{0, code.logical_z, 0};
    if (lx.commutes_with(lz)) {
        return false;
    }
    for (const auto& a : stab) {
        if (!a.commutes_with(lx) || !a.commutes_with(lz)) {
            return false;
        }
    }
    return symplectic_rank(stab, code.n) == code.n - code.k;
}

ErasureDecoder::ErasureDecoder(const CodeSpec& code, double tie_ratio) : code_(&code), tie_ratio_(tie_ratio) {
    if (!(tie_ratio >= 1.0)) {
        throw std::invalid_argument("decoder tie ratio must be >= 1");
    }
    const unsigned n = static_cast<unsigned>(code.n);
    const unsigned words = 1u << n;
    const unsigned full = words - 1;
    // Patterns with equal syndrome differ by a codeword of the classical code;
    // the odd-weight codewords are the logical operators, so the coset label
    // is the weight parity.
    for (unsigned s = 0; s < 8; ++s) {
        for (unsigned e = 0; e < 128; ++e) {
            struct Best {
                int weight = 1 << 20;
                long count = 0;
                std::uint8_t rep = 0;
            };
            std::array<Best, 2> best;
            for (unsigned w = 0; w < words; ++w) {
                if (code.syndrome(static_cast<std::uint8_t>(w)) != s) {
                    continue;
                }
                const int cost = popcount(w & ~e & full);
                auto& b = best[popcount(w) & 1];
                if (cost < b.weight) {
                    b = {cost, 1, static_cast<std::uint8_t>(w)};
                } else if (cost == b.weight) {
                    ++b.count;
                }
            }
            DecodeResult r;
            const Best& b0 = best[0];
            const Best& b1 = best[1];
            if (b0.weight == b1.weight) {
                const double hi = static_cast<double>(std::max(b0.count, b1.count));
                const double lo = static_cast<double>(std::min(b0.count, b1.count));
                if (hi <= tie_ratio_ * lo) {
                    r.located_failure = true;
                    r.correction = b0.rep;
                } else {
                    r.correction = b0.count > b1.count ? b0.rep : b1.rep;
                }
            } else {
                r.correction = b0.weight < b1.weight ? b0.rep : b1.rep;
            }
            table_[s * 128 + e] = r;
        }
    }
}

DecodeResult ErasureDecoder::decode_word(std::uint8_t flips, unsigned erasures, bool& logical) const {
    const DecodeResult r = decode(code_->syndrome(flips), erasures);
    logical = parity(static_cast<Mask>(flips ^ r.correction) & code_->logical_z);
    return r;
}

}  // namespace csqc
