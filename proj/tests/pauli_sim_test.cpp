#include "csqc/pauli_sim.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "csqc/gates.hpp"

using namespace csqc;

namespace {

CliffordCircuit small_circuit() {
    CliffordCircuit c;
    c.qubits = 4;
    c.moments = {
        {{OpKind::hadamard, 0}, {OpKind::cz, 1, 2}},
        {{OpKind::cz, 0, 1}, {OpKind::memory, 3}},
        {{OpKind::hadamard, 1}, {OpKind::cz, 2, 3}},
        {{OpKind::x_meas, 0}, {OpKind::hadamard, 3}},
    };
    c.region = {0, 0, 0, 0};
    return c;
}

PauliFrame random_frame(std::mt19937_64& rng, int qubits) {
    const Mask m = (Mask{1} << qubits) - 1;
    return {rng() & m, rng() & m, 0, 0};
}

}  // namespace

TEST(pauli_sim, conjugation_rules) {
    PauliFrame f{1, 0, 0, 0};
    apply_op(f, {OpKind::hadamard, 0});
    EXPECT_EQ(f, (PauliFrame{0, 1, 0, 0}));
    apply_op(f, {OpKind::hadamard, 0});
    EXPECT_EQ(f, (PauliFrame{1, 0, 0, 0}));

    PauliFrame g{0b01, 0, 0, 0};
    apply_op(g, {OpKind::cz, 0, 1});
    EXPECT_EQ(g, (PauliFrame{0b01, 0b10, 0, 0}));
    PauliFrame h{0, 0b11, 0, 0};
    apply_op(h, {OpKind::cz, 0, 1});
    EXPECT_EQ(h, (PauliFrame{0, 0b11, 0, 0}));

    PauliFrame m{0b1, 0b1, 0, 0};
    apply_op(m, {OpKind::x_meas, 0});
    EXPECT_EQ(m.records, 0b1u);
    PauliFrame x_only{0b1, 0, 0, 0};
    apply_op(x_only, {OpKind::x_meas, 0});
    EXPECT_EQ(x_only.records, 0u);

    PauliFrame p{0b1, 0b1, 0b1, 0};
    apply_op(p, {OpKind::plus_prep, 0});
    EXPECT_EQ(p, (PauliFrame{}));
}

TEST(pauli_sim, cz_rule_matches_coefficient_algebra) {
    // CZ X_a = X_a Z_b CZ on coefficient vectors.
    std::mt19937_64 rng(1);
    std::normal_distribution<double> g;
    std::vector<cplx> c(4);
    for (auto& z : c) {
        z = cplx{g(rng), g(rng)};
    }
    const GateSpec cz{GateKind::cz, 0.0};
    auto lhs = ideal_gate(cz, apply_x(c, 0, 2));
    auto rhs = apply_x(apply_z(ideal_gate(cz, c), 1, 2), 0, 2);
    EXPECT_NEAR(coefficient_fidelity(lhs, rhs), 1.0, 1e-14);
    PauliFrame f{0b01, 0, 0, 0};
    apply_op(f, {OpKind::cz, 0, 1});
    EXPECT_EQ(f.x, 0b01u);
    EXPECT_EQ(f.z, 0b10u);
}

TEST(pauli_sim, cz_rule_matches_teleported_gate) {
    // X on the first input of a teleported CZ shows up as X_a Z_b on the output.
    const double a = 0.6;
    const auto res = cz_from_hadamard(hadamard_branches(std::sqrt(2.0) * a).front().resource);
    const CsqcQubit qa{cplx{0.8, 0.0}, cplx{0.0, 0.6}, a};
    const CsqcQubit qb{cplx{0.5, 0.5}, cplx{0.7, 0.0}, a};
    const std::array<FockVector, 2> in{pauli_x(encode(qa)), encode(qb)};
    const std::vector<cplx> c{qa.mu * qb.mu, qa.mu * qb.nu, qa.nu * qb.mu, qa.nu * qb.nu};
    const auto expect = apply_x(apply_z(ideal_gate({GateKind::cz, 0.0}, c), 1, 2), 0, 2);
    int checked = 0;
    for (const auto& b : teleport_branches(in, res)) {
        if (b.erased[0] || b.erased[1] || b.probability < 1e-6) {
            continue;
        }
        auto want = expect;
        for (std::size_t q = 0; q < 2; ++q) {
            if (b.frames[q].z) {
                want = apply_z(want, q, 2);
            }
            if (b.frames[q].x) {
                want = apply_x(want, q, 2);
            }
        }
        auto dec = decode_register(b.output, a);
        EXPECT_NEAR(coefficient_fidelity(dec.coeffs, want), 1.0, 1e-8);
        ++checked;
    }
    EXPECT_GT(checked, 10);
}

TEST(pauli_sim, noiseless_table_leaves_frame) {
    auto c = small_circuit();
    std::mt19937_64 rng(3);
    for (int i = 0; i < 50; ++i) {
        auto f = random_frame(rng, 4);
        EXPECT_EQ(propagate(f, c, OpNoiseTable{}, rng), propagate(f, c));
    }
    PauliFrame zero;
    EXPECT_EQ(propagate(zero, c), zero);
}

TEST(pauli_sim, propagation_is_linear_with_fixed_draws) {
    auto c = small_circuit();
    auto table = uniform_table(0.2, 0.1);
    std::mt19937_64 rng(5);
    for (int i = 0; i < 100; ++i) {
        auto f1 = random_frame(rng, 4);
        auto f2 = random_frame(rng, 4);
        const std::uint64_t s = rng();
        std::mt19937_64 r1(s);
        std::mt19937_64 r2(s);
        auto a = propagate(f1, c, table, r1);
        auto b = propagate(f2, c, table, r2);
        PauliFrame sum{f1.x ^ f2.x, f1.z ^ f2.z, 0, 0};
        auto expect = propagate(sum, c);
        EXPECT_EQ(a.x ^ b.x, expect.x);
        EXPECT_EQ(a.z ^ b.z, expect.z);
        EXPECT_EQ(a.records ^ b.records, expect.records);
        EXPECT_EQ(a.located, b.located);
    }
}

TEST(pauli_sim, located_noise_depolarizes_uniformly) {
    CliffordCircuit c;
    c.qubits = 1;
    c.moments = {{{OpKind::memory, 0}}};
    c.region = {0};
    OpNoiseTable t;
    t[OpKind::memory] = {1.0, 0.0, 0.0};
    std::mt19937_64 rng(8);
    std::array<int, 4> counts{};
    const int n = 40000;
    for (int i = 0; i < n; ++i) {
        auto f = propagate(PauliFrame{}, c, t, rng);
        EXPECT_EQ(f.located, 1u);
        ++counts[static_cast<std::size_t>(f.x | (f.z << 1))];
    }
    for (int k : counts) {
        EXPECT_NEAR(k, n / 4.0, 5 * std::sqrt(n * 0.25 * 0.75));
    }
}

TEST(pauli_sim, circuit_validation) {
    auto c = small_circuit();
    EXPECT_NO_THROW(c.validate());
    EXPECT_EQ(c.classical_bits(), 1);
    EXPECT_EQ(c.op_count(), 8u);
    auto overlap = c;
    overlap.moments[0].push_back({OpKind::memory, 2});
    EXPECT_THROW(overlap.validate(), std::invalid_argument);
    auto after = c;
    after.moments.push_back({{OpKind::hadamard, 0}});
    after.region.push_back(0);
    EXPECT_THROW(after.validate(), std::invalid_argument);
    auto range = c;
    range.moments[1].push_back({OpKind::memory, 9});
    EXPECT_THROW(range.validate(), std::invalid_argument);
    auto round = telecorrection_circuit(CodeSpec::steane());
    EXPECT_NO_THROW(round.validate());
    EXPECT_EQ(round.qubits, RoundLayout::qubits);
    for (const auto& m : round.moments) {
        for (const auto& op : m) {
            EXPECT_NE(static_cast<int>(op.kind), -1);
        }
    }
}

TEST(pauli_sim, classification) {
    EXPECT_EQ(classify(false, false, false), TrialClass::no_error);
    EXPECT_EQ(classify(true, false, false), TrialClass::logical_x);
    EXPECT_EQ(classify(false, true, false), TrialClass::logical_z);
    EXPECT_EQ(classify(true, true, false), TrialClass::logical_y);
    EXPECT_EQ(classify(true, true, true), TrialClass::located_failure);
}

TEST(pauli_sim, telecorrect_zero_noise) {
    TelecorrectionRound round(CodeSpec::steane(), OpNoiseTable{});
    auto r = round.run_with_fault({}, std::nullopt);
    EXPECT_EQ(r.out, BlockFrame{});
    EXPECT_FALSE(r.lx || r.lz || r.located_failure);
    std::mt19937_64 rng(1);
    auto [frame, outcome] = telecorrect({}, CodeSpec::steane(), OpNoiseTable{}, rng);
    EXPECT_EQ(outcome.classification, TrialClass::no_error);
    auto d = ideal_decode(frame, ErasureDecoder());
    EXPECT_FALSE(d.lx || d.lz || d.located);
}

TEST(pauli_sim, telecorrect_fixes_single_data_errors) {
    TelecorrectionRound round(CodeSpec::steane(), OpNoiseTable{});
    ErasureDecoder dec;
    for (int j = 0; j < 7; ++j) {
        for (int kind = 1; kind < 4; ++kind) {
            BlockFrame in;
            in.x = (kind & 1) ? static_cast<std::uint8_t>(1u << j) : 0;
            in.z = (kind & 2) ? static_cast<std::uint8_t>(1u << j) : 0;
            auto r = round.run_with_fault(in, std::nullopt);
            auto d = ideal_decode(r.out, dec);
            EXPECT_FALSE(r.lx != d.lx || r.lz != d.lz) << j << " " << kind;
            EXPECT_FALSE(r.lx || r.lz || r.located_failure) << j << " " << kind;
        }
    }
}

TEST(pauli_sim, telecorrect_fixes_double_erasures) {
    TelecorrectionRound round(CodeSpec::steane(), OpNoiseTable{});
    for (int i = 0; i < 7; ++i) {
        for (int j = i + 1; j < 7; ++j) {
            for (int pi = 0; pi < 4; ++pi) {
                for (int pj = 0; pj < 4; ++pj) {
                    BlockFrame in;
                    in.located = static_cast<std::uint8_t>((1u << i) | (1u << j));
                    in.x = static_cast<std::uint8_t>(((pi & 1) << i) | ((pj & 1) << j));
                    in.z = static_cast<std::uint8_t>(((pi >> 1) << i) | ((pj >> 1) << j));
                    auto r = round.run_with_fault(in, std::nullopt);
                    EXPECT_FALSE(r.lx || r.lz || r.located_failure) << i << j << pi << pj;
                }
            }
        }
    }
}

TEST(pauli_sim, exhaustive_fault_checks) {
    auto single = exhaustive_single_faults();
    EXPECT_GT(single.cases, 100u);
    EXPECT_EQ(single.logical_failures, 0u);
    auto erasures = exhaustive_double_erasures();
    EXPECT_EQ(erasures.cases, 21u * 16u);
    EXPECT_EQ(erasures.logical_failures, 0u);
    EXPECT_EQ(erasures.located_failures, 0u);
}

TEST(pauli_sim, wilson_interval) {
    auto [lo0, hi0] = wilson_interval(0, 1000);
    EXPECT_EQ(lo0, 0.0);
    EXPECT_NEAR(hi0, 3.84 / 1003.84, 1e-4);
    auto [lo, hi] = wilson_interval(50, 1000);
    EXPECT_LT(lo, 0.05);
    EXPECT_GT(hi, 0.05);
    EXPECT_NEAR(hi - lo, 2 * 1.96 * std::sqrt(0.05 * 0.95 / 1000), 3e-3);
}

TEST(pauli_sim, exrec_zero_noise) {
    auto r = run_exrec(0.0, 0.0, 2000, true, 1);
    EXPECT_EQ(r.rates.unlocated, 0.0);
    EXPECT_EQ(r.rates.located, 0.0);
    EXPECT_EQ(r.histogram[0], 2000u);
    EXPECT_TRUE(r.warnings.empty());
    EXPECT_FALSE(run_exrec(0.0, 0.0, 100, true, 1).warnings.empty());
}

TEST(pauli_sim, exrec_is_deterministic_across_workers) {
    ExrecOptions one;
    ExrecOptions three;
    three.workers = 3;
    auto a = run_exrec(1e-3, 0.03, 30000, true, 77, one);
    auto b = run_exrec(1e-3, 0.03, 30000, true, 77, three);
    EXPECT_EQ(a.histogram, b.histogram);
    EXPECT_EQ(a.rates.unlocated, b.rates.unlocated);
    EXPECT_EQ(a.rates.located, b.rates.located);
    EXPECT_EQ(a.mean_block_attempts, b.mean_block_attempts);
    auto c = run_exrec(1e-3, 0.03, 30000, true, 78, one);
    EXPECT_NE(a.histogram, c.histogram);
}

TEST(pauli_sim, exrec_monotone_in_p_and_q) {
    double prev = -1.0;
    for (double p : {1e-3, 4e-3, 1.6e-2}) {
        auto r = run_exrec(p, 0.0, 20000, true, 5);
        EXPECT_GT(r.rates.unlocated, prev) << p;
        prev = r.rates.unlocated;
    }
    prev = -1.0;
    for (double q : {0.01, 0.04, 0.16}) {
        auto r = run_exrec(2e-4, q, 20000, true, 5);
        EXPECT_GT(r.rates.located + r.rates.unlocated, prev) << q;
        prev = r.rates.located + r.rates.unlocated;
    }
}

TEST(pauli_sim, memory_noise_only_adds_errors) {
    auto on = run_exrec(2e-3, 0.01, 40000, true, 9);
    auto off = run_exrec(2e-3, 0.01, 40000, false, 9);
    EXPECT_GE(on.rates.unlocated_hi, off.rates.unlocated_lo);
    EXPECT_GT(on.rates.unlocated, 0.0);
}

TEST(pauli_sim, logical_rate_scales_quadratically) {
    // Over a decade of physical noise the unlocated rate grows by >= 10^1.7.
    const double x1 = 3e-4;
    const double x2 = 3e-3;
    auto lo = run_exrec(x1, x1, 400000, true, 11);
    auto hi = run_exrec(x2, x2, 40000, true, 11);
    ASSERT_GT(lo.rates.unlocated_events, 0u);
    const double slope = std::log10(hi.rates.unlocated / lo.rates.unlocated);
    EXPECT_GE(slope, 1.7) << lo.rates.unlocated << " " << hi.rates.unlocated;
}

TEST(pauli_sim, starvation_is_reported) {
    ExrecOptions opts;
    opts.max_attempts = 5;
    auto r = run_exrec(0.0, 0.9, 1000, true, 3, opts);
    EXPECT_GT(r.starved, 0u);
    EXPECT_FALSE(r.warnings.empty());
    EXPECT_EQ(r.rates.located, 1.0);
}

TEST(pauli_sim, gate_names_roundtrip) {
    for (auto g : {ExrecGate::memory, ExrecGate::hadamard, ExrecGate::cz}) {
        EXPECT_EQ(exrec_gate_from_string(to_string(g)), g);
    }
    EXPECT_THROW(exrec_gate_from_string("cnot"), std::invalid_argument);
}
