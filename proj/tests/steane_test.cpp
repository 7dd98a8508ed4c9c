#include "csqc/steane.hpp"

#include <gtest/gtest.h>

#include <map>
#include <set>

#include "oracles.hpp"

using namespace csqc;

namespace {

std::vector<unsigned> codewords(const CodeSpec& code) {
    std::vector<unsigned> out;
    for (unsigned w = 0; w < 128; ++w) {
        if (code.syndrome(static_cast<std::uint8_t>(w)) == 0) {
            out.push_back(w);
        }
    }
    return out;
}

bool contains_odd_codeword(const std::vector<unsigned>& cw, unsigned erased) {
    for (unsigned c : cw) {
        if ((oracle::weight(c) & 1) && (c & ~erased) == 0) {
            return true;
        }
    }
    return false;
}

}  // namespace

TEST(steane, code_is_the_hamming_code) {
    const auto& code = CodeSpec::steane();
    auto cw = codewords(code);
    ASSERT_EQ(cw.size(), 16u);
    std::map<int, int> dist;
    for (unsigned c : cw) {
        ++dist[oracle::weight(c)];
    }
    EXPECT_EQ(dist, (std::map<int, int>{{0, 1}, {3, 7}, {4, 7}, {7, 1}}));
    // Same weight enumerator as the reference ordering.
    std::map<int, int> ref;
    for (unsigned c : oracle::hamming_codewords()) {
        ++ref[oracle::weight(c)];
    }
    EXPECT_EQ(dist, ref);
}

TEST(steane, single_flips_have_distinct_syndromes) {
    const auto& code = CodeSpec::steane();
    std::set<unsigned> seen;
    for (int j = 0; j < 7; ++j) {
        unsigned s = code.syndrome(static_cast<std::uint8_t>(1u << j));
        EXPECT_NE(s, 0u);
        seen.insert(s);
    }
    EXPECT_EQ(seen.size(), 7u);
}

TEST(steane, stabilizers_and_logicals_commute) {
    const auto& code = CodeSpec::steane();
    EXPECT_TRUE(verify_code(code));
    for (bool plus : {false, true}) {
        auto g = code_stabilizers(code, plus);
        ASSERT_EQ(g.size(), 7u);
        EXPECT_EQ(symplectic_rank(g, 7), 7);
        for (const auto& a : g) {
            for (const auto& b : g) {
                EXPECT_TRUE(a.commutes_with(b));
            }
        }
    }
    PauliString lx{code.logical_x, 0, 0};
    PauliString lz{0, code.logical_z, 0};
    EXPECT_FALSE(lx.commutes_with(lz));
}

TEST(steane, encoders_prepare_code_states) {
    const auto& code = CodeSpec::steane();
    EXPECT_TRUE(verify_encoder(code, false));
    EXPECT_TRUE(verify_encoder(code, true));
    for (bool plus : {false, true}) {
        for (const auto& moment : code.encoder(plus)) {
            std::set<int> used;
            for (const auto& op : moment) {
                EXPECT_TRUE(used.insert(op.a).second);
                if (op.b >= 0) {
                    EXPECT_TRUE(used.insert(op.b).second);
                }
                EXPECT_TRUE(op.kind == OpKind::plus_prep || op.kind == OpKind::hadamard || op.kind == OpKind::cz);
            }
        }
    }
}

TEST(steane, pauli_products) {
    PauliString x{1, 0, 0};
    PauliString z{0, 1, 0};
    PauliString xx = x;
    xx *= x;
    EXPECT_EQ(xx, (PauliString{0, 0, 0}));
    PauliString xz = x;
    xz *= z;
    PauliString zx = z;
    zx *= x;
    EXPECT_EQ(xz.x, zx.x);
    EXPECT_EQ(xz.z, zx.z);
    EXPECT_EQ((xz.phase - zx.phase + 4) % 4, 2);
}

TEST(steane, decoder_corrects_single_flips) {
    ErasureDecoder dec;
    for (int j = 0; j < 7; ++j) {
        bool logical = true;
        auto r = dec.decode_word(static_cast<std::uint8_t>(1u << j), 0, logical);
        EXPECT_FALSE(logical) << j;
        EXPECT_FALSE(r.located_failure);
        EXPECT_EQ(r.correction, 1u << j);
    }
    bool logical = true;
    EXPECT_EQ(dec.decode_word(0, 0, logical).correction, 0u);
    EXPECT_FALSE(logical);
}

TEST(steane, decoder_fails_on_double_flips) {
    ErasureDecoder dec;
    for (int i = 0; i < 7; ++i) {
        for (int j = i + 1; j < 7; ++j) {
            bool logical = false;
            dec.decode_word(static_cast<std::uint8_t>((1u << i) | (1u << j)), 0, logical);
            EXPECT_TRUE(logical);
        }
    }
}

TEST(steane, decoder_corrects_two_erasures) {
    ErasureDecoder dec;
    for (unsigned e = 0; e < 128; ++e) {
        if (oracle::weight(e) > 2) {
            continue;
        }
        for (unsigned f = 0; f < 128; ++f) {
            if ((f & ~e) != 0) {
                continue;
            }
            bool logical = true;
            auto r = dec.decode_word(static_cast<std::uint8_t>(f), e, logical);
            EXPECT_FALSE(logical) << e << " " << f;
            EXPECT_FALSE(r.located_failure);
        }
    }
}

TEST(steane, decoder_corrects_erasure_plus_flip) {
    // A flip on an erased position is always recoverable.
    ErasureDecoder dec;
    for (int j = 0; j < 7; ++j) {
        bool logical = true;
        auto r = dec.decode_word(static_cast<std::uint8_t>(1u << j), 1u << j, logical);
        EXPECT_FALSE(logical);
        EXPECT_FALSE(r.located_failure);
    }
}

TEST(steane, erasure_ambiguity_oracle) {
    // With errors confined to the erased set, two logical cosets are equally
    // likely exactly when the erased set supports a logical operator.
    const auto& code = CodeSpec::steane();
    ErasureDecoder dec(code);
    auto cw = codewords(code);
    for (unsigned e = 0; e < 128; ++e) {
        std::set<unsigned> reachable;
        for (unsigned f = 0; f < 128; ++f) {
            if ((f & ~e) == 0) {
                reachable.insert(code.syndrome(static_cast<std::uint8_t>(f)));
            }
        }
        for (unsigned s : reachable) {
            EXPECT_EQ(dec.decode(s, e).located_failure, contains_odd_codeword(cw, e)) << e << " " << s;
        }
    }
}

TEST(steane, correction_reproduces_syndrome) {
    const auto& code = CodeSpec::steane();
    ErasureDecoder dec(code);
    for (unsigned s = 0; s < 8; ++s) {
        for (unsigned e = 0; e < 128; ++e) {
            EXPECT_EQ(code.syndrome(dec.decode(s, e).correction), s);
        }
    }
}

TEST(steane, tie_ratio_validation) {
    EXPECT_THROW(ErasureDecoder(CodeSpec::steane(), 0.5), std::invalid_argument);
    // A looser tie ratio never reports fewer located failures.
    ErasureDecoder strict(CodeSpec::steane(), 1.0);
    ErasureDecoder loose(CodeSpec::steane(), 3.0);
    for (unsigned s = 0; s < 8; ++s) {
        for (unsigned e = 0; e < 128; ++e) {
            if (strict.decode(s, e).located_failure) {
                EXPECT_TRUE(loose.decode(s, e).located_failure);
            }
        }
    }
}
