#include "csqc/threshold.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstdio>
#include <map>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "csqc/gates.hpp"

namespace csqc {

namespace {

std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t mix(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0) {
    return splitmix(splitmix(splitmix(seed ^ splitmix(a)) ^ b) ^ c);
}

LevelRates exact_rates(int level, double u, double l) {
    LevelRates r;
    r.level = level;
    r.unlocated = r.unlocated_lo = r.unlocated_hi = u;
    r.located = r.located_lo = r.located_hi = l;
    return r;
}

}  // namespace

std::array<double, LevelMapCoeffs::kTerms> LevelMapCoeffs::monomials(double u, double l) {
    return {u * u, u * l, l * l, u * u * u, u * u * l, u * l * l, l * l * l};
}

std::pair<double, double> LevelMapCoeffs::apply(double u, double l) const {
    const auto m = monomials(u, l);
    double uo = 0.0;
    double lo = 0.0;
    for (std::size_t k = 0; k < kTerms; ++k) {
        uo += unlocated[k] * m[k];
        lo += located[k] * m[k];
    }
    return {std::clamp(uo, 0.0, 1.0), std::clamp(lo, 0.0, 1.0)};
}

void LevelMapCoeffs::validate() const {
    for (std::size_t k = 0; k < kTerms; ++k) {
        if (!(unlocated[k] >= 0.0) || !(located[k] >= 0.0) || !std::isfinite(unlocated[k]) ||
            !std::isfinite(located[k])) {
            throw std::invalid_argument("level-map coefficients must be finite and nonnegative");
        }
    }
}

std::string_view to_string(LevelMapCoeffs::Source s) {
    return s == LevelMapCoeffs::Source::self_similar ? "self_similar" : "external";
}

namespace {

// Lawson-Hanson on a column-normalized system.
std::vector<double> nnls_unit(const std::vector<std::vector<double>>& a, const std::vector<double>& b) {
    const std::size_t m = a.size();
    const std::size_t n = a[0].size();
    std::vector<double> x(n, 0.0);
    std::vector<bool> passive(n, false);
    auto gradient = [&] {
        std::vector<double> w(n, 0.0);
        for (std::size_t i = 0; i < m; ++i) {
            double r = b[i];
            for (std::size_t j = 0; j < n; ++j) {
                r -= a[i][j] * x[j];
            }
            for (std::size_t j = 0; j < n; ++j) {
                w[j] += a[i][j] * r;
            }
        }
        return w;
    };
    // Unconstrained least squares restricted to the passive set.
    auto solve_passive = [&] {
        std::vector<std::size_t> idx;
        for (std::size_t j = 0; j < n; ++j) {
            if (passive[j]) {
                idx.push_back(j);
            }
        }
        const std::size_t k = idx.size();
        std::vector<std::vector<double>> g(k, std::vector<double>(k + 1, 0.0));
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t r = 0; r < k; ++r) {
                for (std::size_t c = 0; c < k; ++c) {
                    g[r][c] += a[i][idx[r]] * a[i][idx[c]];
                }
                g[r][k] += a[i][idx[r]] * b[i];
            }
        }
        for (std::size_t c = 0; c < k; ++c) {
            std::size_t piv = c;
            for (std::size_t r = c + 1; r < k; ++r) {
                if (std::abs(g[r][c]) > std::abs(g[piv][c])) {
                    piv = r;
                }
            }
            std::swap(g[c], g[piv]);
            const double d = g[c][c];
            if (std::abs(d) < 1e-300) {
                continue;
            }
            for (std::size_t r = 0; r < k; ++r) {
                if (r != c) {
                    const double f = g[r][c] / d;
                    for (std::size_t cc = c; cc <= k; ++cc) {
                        g[r][cc] -= f * g[c][cc];
                    }
                }
            }
        }
        std::vector<double> z(n, 0.0);
        for (std::size_t r = 0; r < k; ++r) {
            z[idx[r]] = std::abs(g[r][r]) < 1e-300 ? 0.0 : g[r][k] / g[r][r];
        }
        return z;
    };
    for (int outer = 0; outer < 3 * static_cast<int>(n) + 10; ++outer) {
        const auto w = gradient();
        std::size_t best = n;
        double wmax = 1e-14;
        for (std::size_t j = 0; j < n; ++j) {
            if (!passive[j] && w[j] > wmax) {
                wmax = w[j];
                best = j;
            }
        }
        if (best == n) {
            break;
        }
        passive[best] = true;
        for (int inner = 0; inner < 3 * static_cast<int>(n) + 10; ++inner) {
            const auto z = solve_passive();
            bool feasible = true;
            for (std::size_t j = 0; j < n; ++j) {
                if (passive[j] && z[j] <= 0.0) {
                    feasible = false;
                }
            }
            if (feasible) {
                x = z;
                break;
            }
            double step = 1.0;
            for (std::size_t j = 0; j < n; ++j) {
                if (passive[j] && z[j] <= 0.0) {
                    step = std::min(step, x[j] / (x[j] - z[j]));
                }
            }
            for (std::size_t j = 0; j < n; ++j) {
                x[j] += step * (z[j] - x[j]);
                if (passive[j] && x[j] <= 1e-300) {
                    passive[j] = false;
                    x[j] = 0.0;
                }
            }
        }
    }
    return x;
}

}  // namespace

std::vector<double> nnls(const std::vector<std::vector<double>>& a, const std::vector<double>& b) {
    const std::size_t m = a.size();
    if (m == 0 || b.size() != m) {
        throw std::invalid_argument("nnls: shape mismatch");
    }
    const std::size_t n = a[0].size();
    for (const auto& row : a) {
        if (row.size() != n) {
            throw std::invalid_argument("nnls: ragged matrix");
        }
    }
    // Monomial columns span many decades; scale each to unit norm.
    std::vector<double> norm(n, 0.0);
    for (const auto& row : a) {
        for (std::size_t j = 0; j < n; ++j) {
            norm[j] += row[j] * row[j];
        }
    }
    for (auto& v : norm) {
        v = std::sqrt(v);
    }
    auto scaled = a;
    for (auto& row : scaled) {
        for (std::size_t j = 0; j < n; ++j) {
            row[j] = norm[j] > 0.0 ? row[j] / norm[j] : 0.0;
        }
    }
    auto x = nnls_unit(scaled, b);
    for (std::size_t j = 0; j < n; ++j) {
        x[j] = norm[j] > 0.0 ? x[j] / norm[j] : 0.0;
    }
    return x;
}

LevelMapCoeffs fit_level_map(const std::vector<std::pair<double, double>>& grid, std::uint64_t trials,
                             std::uint64_t seed, const ExrecOptions& opts) {
    std::vector<std::vector<double>> au, al;
    std::vector<double> bu, bl;
    if (grid.empty()) {
        throw std::invalid_argument("fit_level_map needs grid points");
    }
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const auto [u, l] = grid[i];
        const auto res = run_exrec_table(uniform_table(u, l), trials, mix(seed, i), opts);
        const auto mono = LevelMapCoeffs::monomials(u, l);
        // Relative weighting, floored at the resolution of the run.
        const double floor = 1.0 / static_cast<double>(trials);
        const double wu = 1.0 / std::max(res.rates.unlocated, floor);
        const double wl = 1.0 / std::max(res.rates.located, floor);
        std::vector<double> ru(mono.begin(), mono.end());
        std::vector<double> rl(mono.begin(), mono.end());
        for (auto& v : ru) {
            v *= wu;
        }
        for (auto& v : rl) {
            v *= wl;
        }
        au.push_back(ru);
        al.push_back(rl);
        bu.push_back(res.rates.unlocated * wu);
        bl.push_back(res.rates.located * wl);
    }
    LevelMapCoeffs c;
    c.source = LevelMapCoeffs::Source::self_similar;
    const auto xu = nnls(au, bu);
    const auto xl = nnls(al, bl);
    std::copy(xu.begin(), xu.end(), c.unlocated.begin());
    std::copy(xl.begin(), xl.end(), c.located.begin());
    return c;
}

std::vector<std::pair<double, double>> default_fit_grid() {
    std::vector<std::pair<double, double>> g;
    // Small-rate regime only: at larger u located flags absorb logical
    // failures and the map is no longer monotone in l.
    for (double u : {1e-4, 2e-4, 5e-4}) {
        for (double l : {0.0, 2e-3, 5e-3, 1e-2}) {
            g.emplace_back(u, l);
        }
    }
    // Located-only points pin the pure-l terms.
    for (double l : {5e-3, 1e-2, 2e-2}) {
        g.emplace_back(0.0, l);
    }
    return g;
}

const LevelMapCoeffs& self_similar_fit(std::uint64_t trials, std::uint64_t seed) {
    static std::mutex mu;
    static std::map<std::pair<std::uint64_t, std::uint64_t>, LevelMapCoeffs> cache;
    std::lock_guard lock(mu);
    auto it = cache.find({trials, seed});
    if (it == cache.end()) {
        it = cache.emplace(std::make_pair(trials, seed), fit_level_map(default_fit_grid(), trials, seed)).first;
    }
    return it->second;
}

std::string_view to_string(LevelMapMode m) { return m == LevelMapMode::self_similar ? "self_similar" : "external"; }

LevelMapMode level_map_mode_from_string(std::string_view s) {
    if (s == "self_similar") {
        return LevelMapMode::self_similar;
    }
    if (s == "external") {
        return LevelMapMode::external;
    }
    throw std::invalid_argument("unknown level-map mode: " + std::string(s));
}

LevelRates level_map(const LevelRates& rates, const LevelMapConfig& cfg) {
    if (rates.level < 1) {
        throw std::invalid_argument("level_map requires level >= 1");
    }
    const double u = std::clamp(rates.unlocated, 0.0, 1.0);
    const double l = std::clamp(rates.located, 0.0, 1.0);
    if (u == 0.0 && l == 0.0) {
        return exact_rates(rates.level + 1, 0.0, 0.0);
    }
    if (cfg.mode == LevelMapMode::external) {
        const auto [uo, lo] = cfg.coeffs.apply(u, l);
        return exact_rates(rates.level + 1, uo, lo);
    }
    const auto res = run_exrec_table(uniform_table(u, l), cfg.trials, cfg.seed, cfg.exrec);
    LevelRates out = res.rates;
    out.level = rates.level + 1;
    if (cfg.fallback != nullptr) {
        const auto [pu, pl] = cfg.fallback->apply(u, l);
        if (out.unlocated_events < cfg.min_events) {
            out.unlocated = out.unlocated_lo = out.unlocated_hi = pu;
            out.ci_unlocated = 0.0;
        }
        if (out.located_events < cfg.min_events) {
            out.located = out.located_lo = out.located_hi = pl;
            out.ci_located = 0.0;
        }
    }
    return out;
}

std::string_view to_string(Verdict v) {
    switch (v) {
        case Verdict::below:
            return "below";
        case Verdict::above:
            return "above";
        case Verdict::inconclusive:
            return "inconclusive";
    }
    return "unknown";
}

namespace {

// Significant fall: the new interval lies entirely under the old one, or the
// rate has reached zero and stays there.
bool falls(double prev, double prev_lo, double prev_hi, double next, double next_hi) {
    if (prev == 0.0 && next == 0.0) {
        return true;
    }
    if (prev == 0.0) {
        // Nothing observed: only the upper bound is known, so demand a clear margin.
        return next_hi < 0.1 * prev_hi;
    }
    return next_hi < prev_lo;
}

bool rises(double prev_hi, double next_lo) { return next_lo > prev_hi; }

}  // namespace

ThresholdProbe is_below_threshold(double alpha, double eta, int levels, std::uint64_t trials, std::uint64_t seed,
                                  const ThresholdOptions& opts) {
    if (levels < 3) {
        throw std::invalid_argument("threshold verdicts need at least 3 levels");
    }
    ThresholdProbe probe;
    probe.alpha = alpha;
    probe.eta = eta;
    probe.trials = trials;
    const NoiseParams np = NoiseParams::from_physical(alpha, eta, opts.convention);
    const OpNoiseTable table = build_table(np, opts.memory_noise);
    const std::uint64_t base = mix(seed, std::bit_cast<std::uint64_t>(alpha), std::bit_cast<std::uint64_t>(eta));
    const ExrecResult first = run_exrec_table(table, trials, mix(base, 1), opts.exrec);
    LevelRates prev = first.rates;
    prev.level = 1;
    probe.levels.push_back(prev);
    if (first.starved * 10 > trials) {
        probe.verdict = Verdict::above;
        probe.reason = "ancilla preparation starves at level 1";
        return probe;
    }
    LevelMapConfig cfg;
    cfg.mode = opts.map_mode;
    cfg.coeffs = opts.coeffs;
    cfg.trials = trials;
    cfg.exrec = opts.exrec;
    cfg.min_events = opts.min_events;
    if (opts.map_mode == LevelMapMode::self_similar && opts.polynomial_fallback) {
        cfg.fallback = &self_similar_fit(opts.fit_trials);
    }
    for (int level = 2; level <= levels; ++level) {
        if (prev.unlocated >= 0.5 || prev.located >= 0.5) {
            probe.verdict = Verdict::above;
            probe.reason = "level " + std::to_string(level - 1) + " rate reached 1/2";
            return probe;
        }
        cfg.seed = mix(base, static_cast<std::uint64_t>(level));
        const LevelRates next = level_map(prev, cfg);
        probe.levels.push_back(next);
        if (rises(prev.unlocated_hi, next.unlocated_lo) || rises(prev.located_hi, next.located_lo)) {
            probe.verdict = Verdict::above;
            probe.reason = "rates grow from level " + std::to_string(level - 1) + " to " + std::to_string(level);
            return probe;
        }
        if (!falls(prev.unlocated, prev.unlocated_lo, prev.unlocated_hi, next.unlocated, next.unlocated_hi) ||
            !falls(prev.located, prev.located_lo, prev.located_hi, next.located, next.located_hi)) {
            probe.verdict = Verdict::inconclusive;
            probe.reason = "intervals overlap between levels " + std::to_string(level - 1) + " and " +
                           std::to_string(level);
            return probe;
        }
        prev = next;
    }
    probe.verdict = Verdict::below;
    probe.reason = "both rates fall at every level";
    return probe;
}

ThresholdProbe probe_threshold(double alpha, double eta, std::uint64_t trials, std::uint64_t seed,
                               const ThresholdOptions& opts) {
    std::uint64_t t = trials;
    while (true) {
        ThresholdProbe p = is_below_threshold(alpha, eta, opts.levels, t, seed, opts);
        if (p.verdict != Verdict::inconclusive || t * 4 > opts.max_trials) {
            return p;
        }
        t *= 4;
    }
}

std::string_view to_string(ThresholdPoint::Status s) {
    switch (s) {
        case ThresholdPoint::Status::ok:
            return "ok";
        case ThresholdPoint::Status::no_threshold:
            return "no_threshold";
        case ThresholdPoint::Status::error:
            return "error";
    }
    return "unknown";
}

ThresholdPoint bisect_threshold(double alpha, std::pair<double, double> eta_bounds, double tolerance,
                                std::uint64_t trials, std::uint64_t seed, const ThresholdOptions& opts) {
    auto [lo, hi] = eta_bounds;
    if (!(lo >= 0.0 && hi > lo && hi <= 1.0) || !(tolerance > 0.0)) {
        throw BracketError("eta bounds must satisfy 0 <= low < high <= 1 with a positive tolerance");
    }
    ThresholdPoint pt;
    pt.alpha = alpha;
    pt.levels_tested = opts.levels;
    auto below = [&](double eta) {
        pt.probes.push_back(probe_threshold(alpha, eta, trials, seed, opts));
        return pt.probes.back().verdict == Verdict::below;
    };
    if (!below(lo)) {
        pt.status = ThresholdPoint::Status::no_threshold;
        pt.eta_low = lo;
        pt.eta_high = lo;
        pt.eta_threshold = 0.0;
        pt.message = "not below threshold at the lower bound";
        return pt;
    }
    if (below(hi)) {
        throw BracketError("upper eta bound is below threshold; widen the bracket");
    }
    // Geometric bisection needs a positive lower end.
    constexpr double kEtaFloor = 1e-8;
    if (lo < kEtaFloor && hi > kEtaFloor) {
        if (below(kEtaFloor)) {
            lo = kEtaFloor;
        } else {
            hi = kEtaFloor;
        }
    }
    while (hi > lo * (1.0 + tolerance)) {
        const double mid = lo > 0.0 ? std::sqrt(lo * hi) : 0.5 * (lo + hi);
        if (below(mid)) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    pt.eta_low = lo;
    pt.eta_high = hi;
    pt.eta_threshold = lo > 0.0 ? std::sqrt(lo * hi) : 0.5 * (lo + hi);
    return pt;
}

std::vector<ThresholdPoint> sweep(const std::vector<double>& alpha_grid, std::uint64_t trials, std::uint64_t seed,
                                  const SweepOptions& opts) {
    std::vector<ThresholdPoint> out(alpha_grid.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        while (true) {
            const std::size_t i = next.fetch_add(1);
            if (i >= alpha_grid.size()) {
                return;
            }
            try {
                out[i] = bisect_threshold(alpha_grid[i], opts.eta_bounds, opts.tolerance, trials, seed, opts.threshold);
            } catch (const std::exception& e) {
                ThresholdPoint pt;
                pt.alpha = alpha_grid[i];
                pt.levels_tested = opts.threshold.levels;
                pt.status = ThresholdPoint::Status::error;
                pt.message = e.what();
                out[i] = pt;
            }
        }
    };
    const int workers = std::max(1, std::min<int>(opts.workers, static_cast<int>(alpha_grid.size())));
    if (workers == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w) {
            pool.emplace_back(worker);
        }
        for (auto& t : pool) {
            t.join();
        }
    }
    return out;
}

std::string sweep_csv(const std::vector<ThresholdPoint>& points, std::uint64_t trials, bool memory_noise,
                      std::uint64_t seed) {
    std::ostringstream os;
    os << "alpha,eta_threshold,eta_low,eta_high,levels_tested,trials,memory_noise,seed\n";
    char buf[64];
    auto num = [&](double v) {
        std::snprintf(buf, sizeof buf, "%.6g", v);
        return std::string(buf);
    };
    for (const auto& p : points) {
        os << num(p.alpha) << ',';
        if (p.status == ThresholdPoint::Status::ok) {
            os << num(p.eta_threshold) << ',' << num(p.eta_low) << ',' << num(p.eta_high);
        } else {
            os << "NA,NA,NA";
        }
        os << ',' << p.levels_tested << ',' << trials << ',' << (memory_noise ? "on" : "off") << ',' << seed
           << '\n';
    }
    return os.str();
}

std::int64_t max_steps(double unlocated, double located) {
    if (!(unlocated >= 0.0) || !(located >= 0.0)) {
        throw std::invalid_argument("max_steps requires nonnegative rates");
    }
    const double total = unlocated + located;
    if (total == 0.0) {
        return kUnboundedSteps;
    }
    const double n = std::floor(std::log(2.0) / total);
    return n >= 9.2e18 ? kUnboundedSteps : static_cast<std::int64_t>(n);
}

std::int64_t max_steps(const LevelRates& rates) { return max_steps(rates.unlocated, rates.located); }

std::string_view to_string(ResourceCategory c) {
    switch (c) {
        case ResourceCategory::memory:
            return "memory";
        case ResourceCategory::hadamard:
            return "hadamard";
        case ResourceCategory::cz:
            return "cz";
        case ResourceCategory::diagonal_state:
            return "diagonal_state";
        case ResourceCategory::x_meas:
            return "x_meas";
    }
    return "unknown";
}

std::array<double, kResourceCategories> ResourceTally::fractions() const {
    std::array<double, kResourceCategories> f{};
    if (total > 0.0) {
        for (std::size_t k = 0; k < kResourceCategories; ++k) {
            f[k] = counts[k] / total;
        }
    }
    return f;
}

double FactoryStats::diagonal_per_hadamard() const { return 2.0 * zrot_acceptance / hadamard_acceptance; }

double FactoryStats::diagonal_per_cz() const { return 2.0 * cz_zrot_acceptance / cz_hadamard_acceptance; }

FactoryStats FactoryStats::measured(double alpha) {
    const double b = 1.0 / std::sqrt(2.0);
    FactoryStats s;
    s.zrot_acceptance = csqc::zrot_acceptance(kHadamardPhiA, alpha, b);
    s.hadamard_acceptance = csqc::hadamard_acceptance(alpha);
    s.cz_zrot_acceptance = csqc::zrot_acceptance(kHadamardPhiA, std::sqrt(2.0) * alpha, b);
    s.cz_hadamard_acceptance = csqc::hadamard_acceptance(std::sqrt(2.0) * alpha);
    return s;
}

namespace {

using Counts = std::array<double, kResourceCategories>;

std::size_t category(OpKind k) {
    switch (k) {
        case OpKind::memory:
            return static_cast<std::size_t>(ResourceCategory::memory);
        case OpKind::hadamard:
            return static_cast<std::size_t>(ResourceCategory::hadamard);
        case OpKind::cz:
            return static_cast<std::size_t>(ResourceCategory::cz);
        case OpKind::plus_prep:
            return static_cast<std::size_t>(ResourceCategory::diagonal_state);
        case OpKind::x_meas:
            return static_cast<std::size_t>(ResourceCategory::x_meas);
    }
    return 0;
}

Counts scaled(const Counts& c, double f) {
    Counts out{};
    for (std::size_t k = 0; k < kResourceCategories; ++k) {
        out[k] = c[k] * f;
    }
    return out;
}

Counts& operator+=(Counts& a, const Counts& b) {
    for (std::size_t k = 0; k < kResourceCategories; ++k) {
        a[k] += b[k];
    }
    return a;
}

}  // namespace

std::array<double, kResourceCategories> round_operation_counts(const OpNoiseTable& table) {
    const TelecorrectionRound round(CodeSpec::steane(), table);
    const auto& circ = round.circuit();
    std::array<Counts, kRoundRegions> per_region{};
    for (std::size_t m = 0; m < circ.moments.size(); ++m) {
        for (const auto& op : circ.moments[m]) {
            per_region[static_cast<std::size_t>(circ.region[m])][category(op.kind)] += 1.0;
        }
    }
    // Located events discard an ancilla block (or the whole pair); rejections
    // by the verifier are second order and not counted.
    const double pa = round.clean_probability(RoundRegion::prep_a);
    const double pb = round.clean_probability(RoundRegion::prep_b);
    const double pp = round.clean_probability(RoundRegion::pair);
    if (pa <= 0.0 || pb <= 0.0 || pp <= 0.0) {
        throw std::domain_error("ancilla preparation never succeeds at these rates");
    }
    Counts pair_attempt = scaled(per_region[0], 1.0 / pa);
    pair_attempt += scaled(per_region[1], 1.0 / pb);
    pair_attempt += per_region[2];
    Counts total = scaled(pair_attempt, 1.0 / pp);
    total += per_region[3];
    return total;
}

ResourceTally count_resources(int level, const ProtocolSpec& protocol, const FactoryStats& factories) {
    if (level < 1) {
        throw std::invalid_argument("resource level must be >= 1");
    }
    if (static_cast<std::size_t>(level - 1) > protocol.located_by_level.size() ||
        protocol.located_by_level.size() != protocol.unlocated_by_level.size()) {
        throw std::invalid_argument("protocol rates do not cover the requested level");
    }
    constexpr auto M = static_cast<std::size_t>(ResourceCategory::memory);
    constexpr auto H = static_cast<std::size_t>(ResourceCategory::hadamard);
    constexpr auto CZ = static_cast<std::size_t>(ResourceCategory::cz);
    constexpr auto D = static_cast<std::size_t>(ResourceCategory::diagonal_state);
    constexpr auto XM = static_cast<std::size_t>(ResourceCategory::x_meas);
    // Physical cost of one level-(L-1) operation of each category.
    std::array<Counts, kResourceCategories> cost{};
    for (std::size_t k = 0; k < kResourceCategories; ++k) {
        cost[k][k] = 1.0;
    }
    // Encoder of a logical |+>: 7 preps, 9 CZ, 3 H, 7 idle slots.
    const CodeSpec& code = CodeSpec::steane();
    Counts encoder{};
    {
        Mask live = 0;
        for (const auto& moment : code.encoder(true)) {
            Mask used = 0;
            for (const auto& op : moment) {
                encoder[category(op.kind)] += 1.0;
                used |= Mask{1} << op.a;
                if (op.kind == OpKind::cz) {
                    used |= Mask{1} << op.b;
                }
                if (op.kind == OpKind::plus_prep) {
                    live |= Mask{1} << op.a;
                }
            }
            encoder[M] += static_cast<double>(popcount(live & ~used));
        }
    }
    Counts round{};
    for (int l = 1; l <= level; ++l) {
        const OpNoiseTable table =
            l == 1 ? build_table(NoiseParams::from_rates(protocol.p, protocol.q), protocol.memory_noise)
                   : uniform_table(protocol.unlocated_by_level[static_cast<std::size_t>(l - 2)],
                                   protocol.located_by_level[static_cast<std::size_t>(l - 2)]);
        const Counts n = round_operation_counts(table);
        round = Counts{};
        for (std::size_t k = 0; k < kResourceCategories; ++k) {
            round += scaled(cost[k], n[k]);
        }
        std::array<Counts, kResourceCategories> next{};
        next[M] = scaled(cost[M], 7.0);
        next[M] += round;
        next[H] = scaled(cost[H], 7.0);
        next[H] += round;
        next[CZ] = scaled(cost[CZ], 7.0);
        next[CZ] += scaled(round, 2.0);
        next[XM] = scaled(cost[XM], 7.0);
        for (std::size_t k = 0; k < kResourceCategories; ++k) {
            next[D] += scaled(cost[k], encoder[k]);
        }
        next[D] += round;
        cost = next;
    }
    ResourceTally t;
    t.level = level;
    t.counts = round;
    for (double c : round) {
        t.total += c;
    }
    t.diagonal_consumed =
        round[D] + round[H] * factories.diagonal_per_hadamard() + round[CZ] * factories.diagonal_per_cz();
    return t;
}

}  // namespace csqc
