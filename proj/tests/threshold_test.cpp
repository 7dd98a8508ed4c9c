#include "csqc/threshold.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace csqc;

namespace {

// Exhaustive NNLS for small problems: best unconstrained least squares over
// every support set, keeping only nonnegative solutions.
std::vector<double> brute_nnls(const std::vector<std::vector<double>>& a, const std::vector<double>& b) {
    const std::size_t m = a.size();
    const std::size_t n = a[0].size();
    std::vector<double> best(n, 0.0);
    double best_r = 0.0;
    for (double v : b) {
        best_r += v * v;
    }
    for (unsigned mask = 1; mask < (1u << n); ++mask) {
        std::vector<std::size_t> cols;
        for (std::size_t j = 0; j < n; ++j) {
            if (mask >> j & 1u) {
                cols.push_back(j);
            }
        }
        const std::size_t k = cols.size();
        // Normal equations with Gaussian elimination.
        std::vector<std::vector<double>> g(k, std::vector<double>(k + 1, 0.0));
        for (std::size_t r = 0; r < k; ++r) {
            for (std::size_t c = 0; c < k; ++c) {
                for (std::size_t i = 0; i < m; ++i) {
                    g[r][c] += a[i][cols[r]] * a[i][cols[c]];
                }
            }
            for (std::size_t i = 0; i < m; ++i) {
                g[r][k] += a[i][cols[r]] * b[i];
            }
        }
        bool singular = false;
        for (std::size_t p = 0; p < k && !singular; ++p) {
            std::size_t piv = p;
            for (std::size_t r = p + 1; r < k; ++r) {
                if (std::abs(g[r][p]) > std::abs(g[piv][p])) {
                    piv = r;
                }
            }
            if (std::abs(g[piv][p]) < 1e-14) {
                singular = true;
                break;
            }
            std::swap(g[p], g[piv]);
            for (std::size_t r = 0; r < k; ++r) {
                if (r != p) {
                    const double f = g[r][p] / g[p][p];
                    for (std::size_t c = p; c <= k; ++c) {
                        g[r][c] -= f * g[p][c];
                    }
                }
            }
        }
        if (singular) {
            continue;
        }
        std::vector<double> x(n, 0.0);
        bool feasible = true;
        for (std::size_t r = 0; r < k; ++r) {
            x[cols[r]] = g[r][k] / g[r][r];
            feasible = feasible && x[cols[r]] >= 0.0;
        }
        if (!feasible) {
            continue;
        }
        double res = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            double s = -b[i];
            for (std::size_t j = 0; j < n; ++j) {
                s += a[i][j] * x[j];
            }
            res += s * s;
        }
        if (res < best_r) {
            best_r = res;
            best = x;
        }
    }
    return best;
}

LevelMapCoeffs quadratic_map(double cu, double cl) {
    LevelMapCoeffs c;
    c.unlocated = {cu, cu, cu, 0, 0, 0, 0};
    c.located = {cl, cl, cl, 0, 0, 0, 0};
    return c;
}

ThresholdOptions external_options(const LevelMapCoeffs& c) {
    ThresholdOptions o;
    o.map_mode = LevelMapMode::external;
    o.coeffs = c;
    o.max_trials = 40000;
    return o;
}

}  // namespace

TEST(threshold, max_steps_reproduces_table) {
    const std::array<std::pair<double, double>, 5> rates{{
        {4e-4, 8e-3}, {1.7e-4, 2e-3}, {2.8e-5, 2.1e-4}, {7.4e-7, 3.6e-6}, {5.3e-10, 1.7e-9}}};
    const std::array<double, 5> table{82, 3.3e2, 3.0e3, 1.6e5, 3.1e8};
    for (std::size_t i = 0; i < 5; ++i) {
        const auto s = static_cast<double>(max_steps(rates[i].first, rates[i].second));
        EXPECT_NEAR(s / table[i], 1.0, 0.05) << i;
    }
    EXPECT_EQ(max_steps(4e-4, 8e-3), 82);
    EXPECT_EQ(max_steps(0.0, 0.0), kUnboundedSteps);
    EXPECT_THROW(max_steps(-1e-3, 0.0), std::invalid_argument);
}

TEST(threshold, max_steps_halves_success) {
    // (1 - r)^N ~ 1/2 at N = ln 2 / r for small r.
    for (double r : {1e-3, 1e-5}) {
        const auto n = static_cast<double>(max_steps(r, 0.0));
        EXPECT_NEAR(std::pow(1.0 - r, n), 0.5, 1e-3);
    }
}

TEST(threshold, level_map_fixes_origin) {
    LevelMapCoeffs c = quadratic_map(100, 10);
    EXPECT_EQ(c.apply(0.0, 0.0), std::make_pair(0.0, 0.0));
    EXPECT_NO_THROW(c.validate());
    auto bad = c;
    bad.located[3] = -1.0;
    EXPECT_THROW(bad.validate(), std::invalid_argument);
    bad.located[3] = std::nan("");
    EXPECT_THROW(bad.validate(), std::invalid_argument);
    // Outputs stay in the unit box.
    auto [u, l] = quadratic_map(1e6, 1e6).apply(0.5, 0.5);
    EXPECT_LE(u, 1.0);
    EXPECT_LE(l, 1.0);
    EXPECT_EQ(LevelMapCoeffs::monomials(2.0, 3.0), (std::array<double, 7>{4, 6, 9, 8, 12, 18, 27}));
}

TEST(threshold, nnls_matches_brute_force) {
    std::mt19937_64 rng(17);
    std::normal_distribution<double> g;
    for (int t = 0; t < 30; ++t) {
        const std::size_t m = 8;
        const std::size_t n = 4;
        std::vector<std::vector<double>> a(m, std::vector<double>(n));
        std::vector<double> b(m);
        for (auto& row : a) {
            for (auto& v : row) {
                v = g(rng);
            }
        }
        for (auto& v : b) {
            v = g(rng);
        }
        auto x = nnls(a, b);
        auto ref = brute_nnls(a, b);
        for (std::size_t j = 0; j < n; ++j) {
            EXPECT_GE(x[j], 0.0);
            EXPECT_NEAR(x[j], ref[j], 1e-8) << t << " " << j;
        }
    }
    EXPECT_THROW(nnls({{1.0, 2.0}}, {1.0, 2.0}), std::invalid_argument);
    EXPECT_THROW(nnls({{1.0, 2.0}, {1.0}}, {1.0, 2.0}), std::invalid_argument);
}

TEST(threshold, nnls_recovers_nonnegative_truth) {
    std::vector<std::vector<double>> a;
    std::vector<double> b;
    const std::vector<double> truth{3.0, 0.0, 0.5};
    for (int i = 0; i < 10; ++i) {
        const double x = 0.1 * (i + 1);
        a.push_back({x, x * x, x * x * x});
        b.push_back(truth[0] * x + truth[2] * x * x * x);
    }
    auto got = nnls(a, b);
    for (std::size_t j = 0; j < 3; ++j) {
        EXPECT_NEAR(got[j], truth[j], 1e-9);
    }
}

TEST(threshold, level_map_external_and_zero) {
    LevelMapConfig cfg;
    EXPECT_EQ(level_map(LevelRates{}, cfg).unlocated, 0.0);
    EXPECT_EQ(level_map(LevelRates{}, cfg).level, 2);
    cfg.mode = LevelMapMode::external;
    cfg.coeffs = quadratic_map(10, 20);
    LevelRates r;
    r.unlocated = 1e-3;
    r.located = 2e-3;
    auto next = level_map(r, cfg);
    EXPECT_NEAR(next.unlocated, 10 * (1e-6 + 2e-6 + 4e-6), 1e-15);
    EXPECT_EQ(next.unlocated_lo, next.unlocated);
    EXPECT_EQ(next.unlocated_hi, next.unlocated);
    LevelRates bad;
    bad.level = 0;
    EXPECT_THROW(level_map(bad, cfg), std::invalid_argument);
}

TEST(threshold, self_similar_map_shrinks_small_rates) {
    // Well inside the correctable region one uniform-noise exRec level
    // reduces both rates.
    LevelRates r;
    r.unlocated = 2e-5;
    r.located = 4e-3;
    LevelMapConfig cfg;
    cfg.trials = 200000;
    cfg.seed = 3;
    auto next = level_map(r, cfg);
    // Only a handful of unlocated events at this size; the point estimate
    // is the meaningful comparison.
    EXPECT_LT(next.unlocated, r.unlocated);
    EXPECT_LT(next.located_hi, r.located);
}

TEST(threshold, fitted_map_decays_super_exponentially) {
    const auto& fit = self_similar_fit(200000);
    EXPECT_EQ(fit.source, LevelMapCoeffs::Source::self_similar);
    EXPECT_NO_THROW(fit.validate());
    double u = 2e-5;
    double l = 4e-3;
    std::vector<double> seq{u + l};
    for (int k = 0; k < 4; ++k) {
        std::tie(u, l) = fit.apply(u, l);
        seq.push_back(u + l);
    }
    for (std::size_t k = 1; k < seq.size(); ++k) {
        EXPECT_LT(seq[k], seq[k - 1]);
    }
    // Each step shrinks the ratio further: r_{k+1}/r_k decreasing.
    for (std::size_t k = 2; k < seq.size(); ++k) {
        EXPECT_LT(seq[k] / seq[k - 1], seq[k - 1] / seq[k - 2]);
    }
}

TEST(threshold, verdict_levels_validation) {
    EXPECT_THROW(is_below_threshold(2.0, 1e-6, 2, 1000, 1), std::invalid_argument);
}

TEST(threshold, verdict_small_alpha_above) {
    ThresholdOptions o;
    o.fit_trials = 200000;
    for (double eta : {0.0, 1e-4}) {
        auto p = is_below_threshold(1.0, eta, 3, 10000, 1, o);
        EXPECT_EQ(p.verdict, Verdict::above) << p.reason;
    }
}

TEST(threshold, verdict_heavy_loss_above) {
    ThresholdOptions o;
    o.fit_trials = 200000;
    auto p = is_below_threshold(1.56, 0.05, 3, 10000, 1, o);
    EXPECT_EQ(p.verdict, Verdict::above) << p.reason;
}

TEST(threshold, verdict_large_alpha_small_loss_below) {
    ThresholdOptions o;
    o.fit_trials = 200000;
    auto p = probe_threshold(2.0, 3e-6, 100000, 1, o);
    EXPECT_EQ(p.verdict, Verdict::below) << p.reason;
    ASSERT_EQ(p.levels.size(), 3u);
    EXPECT_EQ(p.levels[0].level, 1);
    EXPECT_EQ(p.levels[2].level, 3);
}

TEST(threshold, bisect_bracket_invariant) {
    // A steep external map keeps each probe cheap and the outcome stable.
    auto o = external_options(quadratic_map(20, 20));
    auto pt = bisect_threshold(2.0, {0.0, 1e-2}, 0.25, 10000, 4, o);
    ASSERT_EQ(pt.status, ThresholdPoint::Status::ok) << pt.message;
    EXPECT_LT(pt.eta_low, pt.eta_threshold);
    EXPECT_LE(pt.eta_threshold, pt.eta_high);
    EXPECT_LE(pt.eta_high, pt.eta_low * 1.25 * (1 + 1e-12));
    EXPECT_EQ(pt.levels_tested, 3);
    bool saw_below = false;
    bool saw_above = false;
    for (const auto& p : pt.probes) {
        if (p.eta == pt.eta_low) {
            saw_below = p.verdict == Verdict::below;
        }
        if (p.eta == pt.eta_high) {
            saw_above = p.verdict != Verdict::below;
        }
    }
    EXPECT_TRUE(saw_below);
    EXPECT_TRUE(saw_above);
}

TEST(threshold, bisect_reports_no_threshold_and_bad_brackets) {
    auto o = external_options(quadratic_map(20, 20));
    auto pt = bisect_threshold(1.0, {0.0, 1e-2}, 0.25, 10000, 4, o);
    EXPECT_EQ(pt.status, ThresholdPoint::Status::no_threshold);
    EXPECT_THROW(bisect_threshold(2.0, {1e-3, 1e-4}, 0.1, 1000, 1, o), BracketError);
    EXPECT_THROW(bisect_threshold(2.0, {0.0, 1e-2}, 0.0, 1000, 1, o), BracketError);
    EXPECT_THROW(bisect_threshold(2.0, {0.0, 1e-9}, 0.1, 10000, 1, o), BracketError);
}

TEST(threshold, sweep_records_failures_and_is_deterministic) {
    SweepOptions s;
    s.threshold = external_options(quadratic_map(20, 20));
    s.tolerance = 0.5;
    s.eta_bounds = {0.0, 1e-2};
    const std::vector<double> grid{1.0, 2.0, 2.5};
    auto a = sweep(grid, 10000, 2, s);
    ASSERT_EQ(a.size(), 3u);
    EXPECT_EQ(a[0].status, ThresholdPoint::Status::no_threshold);
    EXPECT_EQ(a[1].status, ThresholdPoint::Status::ok);
    s.workers = 3;
    auto b = sweep(grid, 10000, 2, s);
    EXPECT_EQ(sweep_csv(a, 10000, true, 2), sweep_csv(b, 10000, true, 2));
    // A bracket whose top is already below threshold becomes an error row.
    s.eta_bounds = {0.0, 1e-9};
    auto c = sweep({2.0}, 10000, 2, s);
    EXPECT_EQ(c[0].status, ThresholdPoint::Status::error);
    auto csv = sweep_csv(c, 10000, true, 2);
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "alpha,eta_threshold,eta_low,eta_high,levels_tested,trials,memory_noise,seed");
    EXPECT_NE(csv.find("NA,NA,NA"), std::string::npos);
}

TEST(threshold, memory_noise_never_helps) {
    auto on = external_options(quadratic_map(20, 20));
    auto off = on;
    off.memory_noise = false;
    auto a = bisect_threshold(2.0, {0.0, 1e-2}, 0.25, 10000, 4, on);
    auto b = bisect_threshold(2.0, {0.0, 1e-2}, 0.25, 10000, 4, off);
    ASSERT_EQ(a.status, ThresholdPoint::Status::ok);
    ASSERT_EQ(b.status, ThresholdPoint::Status::ok);
    // Allow one bisection step of statistical slack.
    EXPECT_GE(b.eta_threshold * 1.25, a.eta_threshold);
}

TEST(threshold, resources_level_one) {
    auto t = count_resources(1);
    double sum = 0.0;
    for (double c : t.counts) {
        EXPECT_GE(c, 0.0);
        sum += c;
    }
    EXPECT_NEAR(sum, t.total, 1e-9 * t.total);
    double fsum = 0.0;
    for (double f : t.fractions()) {
        fsum += f;
    }
    EXPECT_NEAR(fsum, 1.0, 1e-12);
    EXPECT_GT(t.total, 1e3 / 3);
    EXPECT_LT(t.total, 1e3 * 3);
    EXPECT_GT(t.diagonal_consumed, t.counts[static_cast<std::size_t>(ResourceCategory::diagonal_state)]);
}

TEST(threshold, resources_grow_geometrically) {
    std::vector<double> totals;
    for (int level = 1; level <= 5; ++level) {
        totals.push_back(count_resources(level).total);
    }
    std::vector<double> ratios;
    for (std::size_t i = 1; i < totals.size(); ++i) {
        ratios.push_back(totals[i] / totals[i - 1]);
        EXPECT_GT(ratios.back(), 50.0);
    }
    // From level 3 on the ratio is nearly constant.
    const double hi = std::max(ratios[1], std::max(ratios[2], ratios[3]));
    const double lo = std::min(ratios[1], std::min(ratios[2], ratios[3]));
    EXPECT_LE(hi / lo, 1.2);
    EXPECT_THROW(count_resources(0), std::invalid_argument);
}

TEST(threshold, resources_respond_to_factories) {
    FactoryStats cheap;
    cheap.hadamard_acceptance = 0.5;
    cheap.cz_hadamard_acceptance = 0.5;
    EXPECT_LT(count_resources(1, {}, cheap).diagonal_consumed, count_resources(1).diagonal_consumed);
    EXPECT_NEAR(cheap.diagonal_per_hadamard(), 2.0 * cheap.zrot_acceptance / 0.5, 1e-15);
}

TEST(threshold, measured_factories) {
    auto f = FactoryStats::measured(1.56);
    EXPECT_GE(f.zrot_acceptance, 0.22);
    EXPECT_LE(f.zrot_acceptance, 0.45);
    EXPECT_NEAR(f.hadamard_acceptance * 27, 1.0, 0.5);
}

TEST(threshold, round_counts_follow_the_table) {
    auto noiseless = round_operation_counts(OpNoiseTable{});
    auto noisy = round_operation_counts(build_table(NoiseParams::from_rates(2e-4, 0.015), true));
    for (std::size_t k = 0; k < kResourceCategories; ++k) {
        EXPECT_GE(noisy[k], noiseless[k]);
    }
    EXPECT_GT(noiseless[static_cast<std::size_t>(ResourceCategory::cz)], 0.0);
}
