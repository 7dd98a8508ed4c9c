#include "csqc/gates.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "oracles.hpp"

using namespace csqc;

namespace {

constexpr double kPi = std::numbers::pi;

// X^x Z^z applied to coefficients.
std::vector<cplx> framed(std::vector<cplx> c, const std::vector<FrameUpdate>& frames) {
    for (std::size_t q = 0; q < frames.size(); ++q) {
        if (frames[q].z) {
            c = apply_z(c, q, frames.size());
        }
        if (frames[q].x) {
            c = apply_x(c, q, frames.size());
        }
    }
    return c;
}

CsqcQubit random_qubit(std::mt19937_64& rng, double alpha) {
    std::normal_distribution<double> g;
    return {cplx{g(rng), g(rng)}, cplx{g(rng), g(rng)}, alpha};
}

double fid(const std::vector<cplx>& a, const std::vector<cplx>& b) { return coefficient_fidelity(a, b); }

}  // namespace

TEST(gates, encode_is_normalised) {
    std::mt19937_64 rng(3);
    for (double a : {0.0, 0.3, 1.0, 2.0}) {
        for (int i = 0; i < 5; ++i) {
            auto q = random_qubit(rng, a);
            EXPECT_NEAR(encode(q).norm(), 1.0, 1e-10);
        }
    }
    EXPECT_THROW(CsqcQubit({0.0, 0.0, 1.0}).normalization(), DegenerateStateError);
    // At alpha = 0 both basis states coincide and mu = -nu cancels exactly.
    EXPECT_THROW(encode(CsqcQubit{1.0, -1.0, 0.0}), DegenerateStateError);
}

TEST(gates, encode_basis_states) {
    auto zero = encode({1.0, 0.0, 1.3});
    auto c = coherent(1.3, zero.cutoff(0));
    EXPECT_NEAR(std::abs(overlap(zero, c)), 1.0, 1e-12);
    auto plus = encode({1.0, 1.0, 1.3});
    EXPECT_NEAR(std::abs(overlap(plus, cat_state(1.3, +1, plus.cutoff(0)))), 1.0, 1e-12);
}

TEST(gates, decode_roundtrip) {
    std::mt19937_64 rng(5);
    for (double a : {0.3, 1.0, 1.8}) {
        for (int i = 0; i < 5; ++i) {
            auto q = random_qubit(rng, a);
            auto d = decode(encode(q), a);
            std::vector<cplx> want{q.mu, q.nu};
            std::vector<cplx> got{d.qubit.mu, d.qubit.nu};
            EXPECT_NEAR(coefficient_fidelity(want, got), 1.0, 1e-10);
            EXPECT_LT(d.residual, 1e-10);
            EXPECT_FALSE(d.leakage);
        }
    }
}

TEST(gates, decode_flags_leakage) {
    auto d = decode(coherent(cplx{0.0, 1.0}, 25), 1.0);
    EXPECT_TRUE(d.leakage);
    EXPECT_GT(d.residual, 1e-6);
}

TEST(gates, pauli_x_swaps_coefficients) {
    for (double a : {0.2, 1.0, 2.0}) {
        CsqcQubit q{cplx{0.6, 0.2}, cplx{-0.1, 0.7}, a};
        auto d = decode(pauli_x(encode(q)), a);
        std::vector<cplx> want{q.nu, q.mu};
        std::vector<cplx> got{d.qubit.mu, d.qubit.nu};
        EXPECT_NEAR(coefficient_fidelity(want, got), 1.0, 1e-10);
        auto twice = pauli_x(pauli_x(encode(q)));
        EXPECT_NEAR(std::abs(overlap(twice, encode(q))), 1.0, 1e-12);
    }
    // Even cat is an X eigenstate.
    auto d = decode(pauli_x(encode({1.0, 1.0, 1.0})), 1.0);
    EXPECT_NEAR(std::abs(d.qubit.mu - d.qubit.nu), 0.0, 1e-10);
}

TEST(gates, classify_records) {
    EXPECT_EQ(classify_z(0, 0).outcome, Outcome::failure);
    EXPECT_TRUE(classify_bell(0, 0).failed());
    EXPECT_THROW(classify_z(1, 2), ConsistencyError);
    EXPECT_THROW(classify_bell(1, 1), ConsistencyError);
    EXPECT_EQ(classify_bell(2, 0).outcome, Outcome::bell_1);
    EXPECT_EQ(classify_bell(3, 0).outcome, Outcome::bell_2);
    EXPECT_EQ(classify_bell(0, 4).outcome, Outcome::bell_3);
    EXPECT_EQ(classify_bell(0, 1).outcome, Outcome::bell_4);
    for (int k = 0; k < 4; ++k) {
        EXPECT_EQ(classify_bell(k < 2 ? 2 + k : 0, k < 2 ? 0 : 2 + k - 2).frame, kBellFrames[static_cast<std::size_t>(k)]);
    }
}

TEST(gates, z_measure_is_unambiguous) {
    for (double a : {0.3, 1.0}) {
        auto v0 = verify_z_measure(a, {1.0, 0.0, a});
        auto v1 = verify_z_measure(a, {0.0, 1.0, a});
        EXPECT_TRUE(v0.unambiguous);
        EXPECT_TRUE(v1.unambiguous);
        EXPECT_NEAR(v0.total_probability, 1.0, 1e-10);
        // A basis state fails with the vacuum probability e^{-2a^2}.
        EXPECT_NEAR(v0.failure_probability, std::exp(-2 * a * a), 1e-10);
    }
    std::mt19937_64 rng(11);
    auto in = coherent(1.0, 25);
    for (int i = 0; i < 200; ++i) {
        EXPECT_NE(z_measure(in, 1.0, rng).outcome, Outcome::z_one);
    }
}

TEST(gates, z_measure_failure_law) {
    for (double a : {0.5, 1.0, 1.5, 2.0}) {
        auto v = verify_z_measure(a, {1.0, 1.0, a});
        EXPECT_NEAR(v.failure_probability, oracle::unambiguous_failure(a), 1e-6) << a;
        EXPECT_TRUE(v.passed);
    }
}

TEST(gates, z_measure_vacuum_always_fails) {
    auto branches = z_measure_branches(FockVector::vacuum({3}), 0.0);
    double fail = 0.0;
    for (const auto& b : branches) {
        fail += b.record.failed() ? b.probability : 0.0;
    }
    EXPECT_NEAR(fail, 1.0, 1e-15);
}

TEST(gates, bell_pair_structure) {
    for (double a : {0.5, 1.0, 1.56}) {
        auto r = make_bell_pair(a);
        EXPECT_EQ(r.kind, ResourceKind::bell);
        EXPECT_NEAR(r.modes.parity_expectation(), 1.0, 1e-12);
        EXPECT_GT(r.fidelity, 1.0 - 1e-8);
        // Conditioning one half on +-a leaves the other half in the same state.
        auto dec = decode_register(r.modes, a);
        EXPECT_NEAR(std::abs(dec.coeffs[1]), 0.0, 1e-8);
        EXPECT_NEAR(std::abs(dec.coeffs[2]), 0.0, 1e-8);
        EXPECT_NEAR(std::abs(dec.coeffs[0]), std::abs(dec.coeffs[3]), 1e-8);
    }
    auto vac = make_bell_pair(0.0);
    EXPECT_NEAR(std::abs(vac.modes.amplitudes()[0]), 1.0, 1e-15);
}

TEST(gates, bell_measure_clicks_in_one_port) {
    // |a,a> + |-a,-a> sends all light to output 0 of the balanced splitter.
    auto r = make_bell_pair(1.0);
    double dark = 0.0;
    double odd = 0.0;
    for (const auto& b : bell_measure_branches(r.modes, 0, 1, 1.0)) {
        if (b.record.photon_counts[1] > 0) {
            dark += b.probability;
        }
        if (b.record.photon_counts[0] % 2 == 1) {
            odd += b.probability;
        }
    }
    EXPECT_LT(dark, 1e-12);
    EXPECT_LT(odd, 1e-12);
}

TEST(gates, bell_frames_match_calibration) {
    for (double a : {0.5, 1.0, 1.56}) {
        EXPECT_EQ(calibrate_bell_frames(a), kBellFrames) << a;
    }
}

TEST(gates, zrot_frames_match_calibration) {
    for (double a : {0.5, 1.56, 2.0}) {
        for (double phi : {0.0, kPi / 8, 3 * kPi / 4}) {
            EXPECT_EQ(calibrate_zrot_frames(phi, a, a), kZrotPatternFrames) << a << " " << phi;
        }
    }
}

TEST(gates, hadamard_corrections_match_calibration) {
    for (double a : {0.5, 1.56}) {
        EXPECT_EQ(calibrate_hadamard_corrections(a), kHadamardCorrections) << a;
    }
}

TEST(gates, teleport_is_exact_on_success) {
    std::mt19937_64 rng(9);
    for (int i = 0; i < 4; ++i) {
        auto q = random_qubit(rng, 1.0);
        auto v = verify_teleport(1.0, q);
        EXPECT_TRUE(v.passed) << v.min_fidelity;
        EXPECT_GT(v.min_fidelity, 1.0 - 1e-8);
    }
}

TEST(gates, teleport_failure_matches_overlap_oracle) {
    // The vacuum branch of the Bell measurement is not the unambiguous
    // measurement's: each surviving term carries one factor e^{-a^2}.
    for (double a : {0.5, 1.0, 1.5}) {
        auto v = verify_teleport(a, {1.0, 1.0, a});
        EXPECT_NEAR(v.failure_probability, oracle::bell_teleport_failure(a), 1e-8) << a;
        EXPECT_NEAR(teleport_failure_closed_form(a, {1.0, 1.0, a}), oracle::bell_teleport_failure(a), 1e-12);
        EXPECT_GE(v.failure_probability, oracle::unambiguous_failure(a));
    }
}

TEST(gates, teleport_basis_state_sampled) {
    std::mt19937_64 rng(1);
    auto pair = make_bell_pair(1.2);
    for (int i = 0; i < 20; ++i) {
        auto t = teleport({1.0, 0.0, 1.2}, pair, rng);
        if (t.any_erased()) {
            continue;
        }
        auto d = decode(t.output, 1.2);
        auto want = framed({1.0, 0.0}, t.frames);
        EXPECT_NEAR(fid({d.qubit.mu, d.qubit.nu}, want), 1.0, 1e-8);
    }
}

TEST(gates, teleport_rejects_mismatched_resource) {
    std::mt19937_64 rng(1);
    auto pair = make_bell_pair(1.0);
    std::array<FockVector, 2> two{coherent(1.0, 20), coherent(1.0, 20)};
    EXPECT_THROW(teleport(two, pair, rng), std::invalid_argument);
    auto zr = zrot_branches(0.3, 1.0, 0.7).front().resource;
    std::array<FockVector, 1> one{coherent(1.0, 20)};
    EXPECT_THROW(teleport(one, zr, rng), std::invalid_argument);
    auto h = hadamard_branches(1.0).front().resource;
    EXPECT_THROW(teleported_gate({GateKind::cz, 0.0}, one, h, rng), std::invalid_argument);
    EXPECT_THROW(verify_teleport(0.0, {1.0, 1.0, 0.0}), DegenerateStateError);
}

TEST(gates, zrot_resource_pattern) {
    for (double phi : {0.0, 0.4, kPi / 2}) {
        for (const auto& b : zrot_branches(phi, 1.0, 1.0)) {
            EXPECT_GT(b.resource.fidelity, 1.0 - 1e-8) << phi;
        }
    }
    // phi = 0 with no pending frame is the Bell-type pair.
    auto b = zrot_branches(0.0, 1.0, 1.0).back();
    auto pattern = ideal_pattern(b.resource);
    EXPECT_NEAR(std::abs(pattern[0] - pattern[3]), 0.0, 1e-15);
}

TEST(gates, factory_acceptance_bands) {
    const double pz = zrot_acceptance(kHadamardPhiA, 1.56, 1.0 / std::sqrt(2.0));
    EXPECT_GE(pz, 0.22);
    EXPECT_LE(pz, 0.45);
    const double ph = hadamard_acceptance(1.56);
    EXPECT_GE(ph, (1.0 / 27) / 1.5);
    EXPECT_LE(ph, (1.0 / 27) * 1.5);
    // Branch totals agree with the acceptance.
    double s = 0.0;
    for (const auto& b : hadamard_branches(1.56)) {
        s += b.probability;
        EXPECT_GT(b.resource.fidelity, 1.0 - 1e-8);
    }
    EXPECT_NEAR(s, ph, 1e-12);
}

TEST(gates, factory_sampling_records_attempts) {
    std::mt19937_64 rng(4);
    int total = 0;
    const int n = 60;
    for (int i = 0; i < n; ++i) {
        auto r = zrot_entanglement(0.3, 1.0, 1.0, rng);
        EXPECT_GE(r.attempts_used, 1);
        total += r.attempts_used;
    }
    const double accept = zrot_acceptance(0.3, 1.0, 1.0);
    EXPECT_NEAR(static_cast<double>(total) / n, 1.0 / accept, 0.5 / accept);
}

TEST(gates, factory_starvation_guard) {
    std::mt19937_64 rng(2);
    FactoryOptions opts;
    opts.max_attempts = 1;
    bool threw = false;
    for (int i = 0; i < 200 && !threw; ++i) {
        try {
            hadamard_entanglement(1.56, rng, opts);
        } catch (const StarvationError&) {
            threw = true;
        }
    }
    EXPECT_TRUE(threw);
}

TEST(gates, hadamard_resource_pattern) {
    for (double a : {0.5, 1.0, 1.56}) {
        std::mt19937_64 rng(8);
        auto r = hadamard_entanglement(a, rng);
        EXPECT_GT(r.fidelity, 1.0 - 1e-8);
        auto dec = decode_register(r.modes, a);
        std::vector<cplx> want{1.0, 1.0, 1.0, -1.0};
        EXPECT_NEAR(coefficient_fidelity(dec.coeffs, want), 1.0, 1e-8);
    }
}

TEST(gates, hadamard_teleport_of_zero_gives_plus) {
    const double a = 1.0;
    const FockLimits fine{1e-16};
    auto h = hadamard_branches(a, fine).front().resource;
    std::array<FockVector, 1> in{encode({1.0, 0.0, a}, fine)};
    for (const auto& b : teleport_branches(in, h, fine)) {
        if (b.erased[0] || b.probability < 1e-10) {
            continue;
        }
        auto d = decode(b.output, a);
        EXPECT_NEAR(fid({d.qubit.mu, d.qubit.nu}, framed({1.0, 1.0}, b.frames)), 1.0, 1e-8);
    }
}

TEST(gates, cz_resource_halves_have_amplitude_alpha) {
    const double a = 0.8;
    std::mt19937_64 rng(6);
    FactoryOptions opts;
    opts.limits.tail_tolerance = 1e-16;
    auto r = cz_entanglement(a, rng, opts);
    EXPECT_EQ(r.modes.mode_count(), 4u);
    EXPECT_EQ(r.mode_amplitudes, (std::vector<double>{a, a, a, a}));
    EXPECT_GT(r.fidelity, 1.0 - 1e-8);
    auto dec = decode_register(r.modes, a);
    EXPECT_LT(dec.residual, 1e-7);
    // Decoding at sqrt(2) a instead leaves most of the state unexplained.
    auto wrong = decode_register(r.modes, std::sqrt(2.0) * a);
    EXPECT_GT(wrong.residual, 1e-3);
}

TEST(gates, ideal_gate_actions) {
    std::vector<cplx> c{0.6, 0.8};
    auto z0 = ideal_gate({GateKind::zrot, 0.0}, c);
    EXPECT_EQ(z0, c);
    auto hh = ideal_gate({GateKind::hadamard, 0.0}, ideal_gate({GateKind::hadamard, 0.0}, c));
    EXPECT_NEAR(std::abs(hh[0] - c[0]) + std::abs(hh[1] - c[1]), 0.0, 1e-15);
    std::vector<cplx> four{0.1, 0.2, 0.3, 0.4};
    auto cz = ideal_gate({GateKind::cz, 0.0}, four);
    EXPECT_EQ(cz, (std::vector<cplx>{0.1, 0.2, 0.3, -0.4}));
    EXPECT_THROW(ideal_gate({GateKind::cz, 0.0}, c), std::invalid_argument);
}

TEST(gates, exact_for_small_alpha) {
    // Basis overlap at 0.3 is 0.835 and the gates still act exactly.
    const double a = 0.3;
    CsqcQubit q{cplx{0.7, 0.1}, cplx{0.2, -0.6}, a};
    for (double theta : {0.0, kPi / 4, kPi / 2, kPi}) {
        auto v = verify_zrot_gate(theta, a, q);
        EXPECT_GT(v.min_fidelity, 1.0 - 1e-6) << theta;
        EXPECT_NEAR(v.total_probability, 1.0, 1e-9) << theta;
    }
    auto vh = verify_hadamard_gate(a, q);
    EXPECT_GT(vh.min_fidelity, 1.0 - 1e-6);
    auto vcz = verify_cz_gate(a, q, {cplx{0.3, 0.0}, cplx{0.0, 0.9}, a});
    EXPECT_GT(vcz.min_fidelity, 1.0 - 1e-6);
    EXPECT_NEAR(vcz.total_probability, 1.0, 1e-9);
}

TEST(gates, hadamard_twice_is_identity) {
    const double a = 0.8;
    std::mt19937_64 rng(21);
    CsqcQubit q{cplx{0.9, 0.0}, cplx{0.1, 0.4}, a};
    int checked = 0;
    for (int i = 0; i < 40 && checked < 5; ++i) {
        auto h1 = hadamard_entanglement(a, rng);
        auto t1 = teleported_gate({GateKind::hadamard, 0.0}, std::array<FockVector, 1>{encode(q)}, h1, rng);
        if (t1.any_erased()) {
            continue;
        }
        auto h2 = hadamard_entanglement(a, rng);
        auto t2 = teleported_gate({GateKind::hadamard, 0.0}, std::array<FockVector, 1>{t1.output}, h2, rng);
        if (t2.any_erased()) {
            continue;
        }
        // H X^x Z^z H = Z^x X^z: fold the first frame through the second gate.
        FrameUpdate f{t1.frames[0].z, t1.frames[0].x};
        f ^= t2.frames[0];
        auto d = decode(t2.output, a);
        EXPECT_NEAR(fid({d.qubit.mu, d.qubit.nu}, framed({q.mu, q.nu}, {f})), 1.0, 1e-8);
        ++checked;
    }
    EXPECT_EQ(checked, 5);
}

TEST(gates, adaptive_zrot_sampled) {
    const double a = 1.0;
    std::mt19937_64 rng(13);
    CsqcQubit q{cplx{0.5, 0.5}, cplx{0.3, -0.6}, a};
    for (double theta : {kPi / 4, 1.0}) {
        auto want = ideal_gate({GateKind::zrot, theta}, std::vector<cplx>{q.mu, q.nu});
        int ok = 0;
        for (int i = 0; i < 20; ++i) {
            auto t = teleported_zrot(theta, encode(q), a, rng);
            if (t.any_erased()) {
                continue;
            }
            auto d = decode(t.output, a);
            EXPECT_NEAR(fid({d.qubit.mu, d.qubit.nu}, framed(want, t.frames)), 1.0, 1e-8);
            ++ok;
        }
        EXPECT_GT(ok, 5);
    }
}

TEST(gates, branch_probabilities_sum_to_one) {
    const double a = 1.0;
    CsqcQubit q{cplx{0.5, 0.1}, cplx{0.4, -0.2}, a};
    EXPECT_NEAR(verify_teleport(a, q).total_probability, 1.0, 1e-10);
    EXPECT_NEAR(verify_hadamard_gate(a, q).total_probability, 1.0, 1e-10);
    EXPECT_NEAR(verify_z_measure(a, q).total_probability, 1.0, 1e-10);
}

TEST(gates, cz_teleport_sign_pattern) {
    const double a = 0.6;
    auto v = verify_cz_gate(a, {1.0, 1.0, a}, {1.0, 1.0, a});
    EXPECT_TRUE(v.passed) << v.min_fidelity << " " << v.max_residual;
    EXPECT_NEAR(v.total_probability, 1.0, 1e-10);
}
