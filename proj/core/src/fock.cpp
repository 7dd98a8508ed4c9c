#include "csqc/fock.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace csqc {

namespace {

std::vector<std::size_t> make_strides(const std::vector<int>& cutoffs) {
    std::vector<std::size_t> strides(cutoffs.size());
    std::size_t s = 1;
    for (std::size_t i = cutoffs.size(); i-- > 0;) {
        strides[i] = s;
        s *= static_cast<std::size_t>(cutoffs[i] + 1);
    }
    return strides;
}

std::size_t total_size(const std::vector<int>& cutoffs) {
    std::size_t s = 1;
    for (int c : cutoffs) {
        if (c < 0) {
            throw std::invalid_argument("negative Fock cutoff");
        }
        s *= static_cast<std::size_t>(c + 1);
    }
    return s;
}

int digit(std::size_t index, std::size_t stride, int cutoff) {
    return static_cast<int>((index / stride) % static_cast<std::size_t>(cutoff + 1));
}

double uniform01(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace

double poisson_tail(double abs_amplitude, int cutoff) {
    const double lambda = abs_amplitude * abs_amplitude;
    if (lambda == 0.0) {
        return 0.0;
    }
    // log p_n = -lambda + n log lambda - lgamma(n+1); sum forward until negligible.
    double tail = 0.0;
    for (int n = cutoff + 1; n < cutoff + 2000; ++n) {
        const double term =
            std::exp(-lambda + n * std::log(lambda) - std::lgamma(static_cast<double>(n) + 1.0));
        tail += term;
        if (n > lambda && term < 1e-30) {
            break;
        }
    }
    return tail;
}

int cutoff_for_amplitude(double abs_amplitude, double tail_tolerance) {
    int c = 0;
    while (poisson_tail(abs_amplitude, c) >= tail_tolerance) {
        ++c;
    }
    return c;
}

FockVector::FockVector(std::vector<int> cutoffs, const FockLimits& limits)
    : cutoffs_(std::move(cutoffs)), strides_(make_strides(cutoffs_)) {
    const std::size_t n = total_size(cutoffs_);
    if (n > limits.max_amplitudes) {
        throw ResourceError("Fock state with " + std::to_string(n) + " amplitudes exceeds the budget of " +
                            std::to_string(limits.max_amplitudes));
    }
    amps_.assign(n, cplx{0.0, 0.0});
}

FockVector FockVector::vacuum(std::vector<int> cutoffs, const FockLimits& limits) {
    FockVector v(std::move(cutoffs), limits);
    v.amps_[0] = 1.0;
    return v;
}

std::size_t FockVector::index_of(std::span<const int> occupation) const {
    if (occupation.size() != cutoffs_.size()) {
        throw std::invalid_argument("occupation tuple has wrong length");
    }
    std::size_t idx = 0;
    for (std::size_t i = 0; i < occupation.size(); ++i) {
        if (occupation[i] < 0 || occupation[i] > cutoffs_[i]) {
            throw std::out_of_range("occupation outside cutoff");
        }
        idx += static_cast<std::size_t>(occupation[i]) * strides_[i];
    }
    return idx;
}

std::vector<int> FockVector::occupation_of(std::size_t index) const {
    std::vector<int> occ(cutoffs_.size());
    for (std::size_t i = 0; i < occ.size(); ++i) {
        occ[i] = digit(index, strides_[i], cutoffs_[i]);
    }
    return occ;
}

cplx& FockVector::at(std::span<const int> occupation) { return amps_[index_of(occupation)]; }
cplx FockVector::at(std::span<const int> occupation) const { return amps_[index_of(occupation)]; }

double FockVector::squared_norm() const {
    double s = 0.0;
    for (const cplx& a : amps_) {
        s += std::norm(a);
    }
    return s;
}

double FockVector::norm() const { return std::sqrt(squared_norm()); }

void FockVector::normalize() {
    const double n = norm();
    if (n == 0.0 || !std::isfinite(n)) {
        throw DegenerateStateError("cannot normalise a zero Fock vector");
    }
    for (cplx& a : amps_) {
        a /= n;
    }
}

FockVector FockVector::with_cutoff(std::size_t mode, int new_cutoff, const FockLimits& limits) const {
    std::vector<int> cut = cutoffs_;
    cut.at(mode) = new_cutoff;
    FockVector out(cut, limits);
    out.norm_weight_ = norm_weight_;
    for (std::size_t i = 0; i < amps_.size(); ++i) {
        if (amps_[i] == cplx{}) {
            continue;
        }
        bool keep = true;
        std::size_t j = 0;
        for (std::size_t m = 0; m < cutoffs_.size(); ++m) {
            const int d = digit(i, strides_[m], cutoffs_[m]);
            if (d > cut[m]) {
                keep = false;
                break;
            }
            j += static_cast<std::size_t>(d) * out.strides_[m];
        }
        if (keep) {
            out.amps_[j] = amps_[i];
        }
    }
    return out;
}

double FockVector::parity_expectation() const {
    double s = 0.0;
    for (std::size_t i = 0; i < amps_.size(); ++i) {
        int total = 0;
        for (std::size_t m = 0; m < cutoffs_.size(); ++m) {
            total += digit(i, strides_[m], cutoffs_[m]);
        }
        s += (total % 2 == 0 ? 1.0 : -1.0) * std::norm(amps_[i]);
    }
    return s;
}

FockVector coherent(cplx alpha, int cutoff, const FockLimits& limits) {
    const double tail = poisson_tail(std::abs(alpha), cutoff);
    if (tail >= limits.tail_tolerance) {
        throw CutoffError("cutoff " + std::to_string(cutoff) + " leaves tail mass " + std::to_string(tail) +
                          " for |alpha| = " + std::to_string(std::abs(alpha)));
    }
    FockVector v({cutoff}, limits);
    auto amps = v.amplitudes();
    cplx c = std::exp(-0.5 * std::norm(alpha));
    amps[0] = c;
    for (int n = 1; n <= cutoff; ++n) {
        c *= alpha / std::sqrt(static_cast<double>(n));
        amps[static_cast<std::size_t>(n)] = c;
    }
    v.normalize();
    return v;
}

FockVector coherent(cplx alpha, const FockLimits& limits) {
    return coherent(alpha, cutoff_for_amplitude(std::abs(alpha), limits.tail_tolerance), limits);
}

FockVector cat_state(double alpha, int sign, int cutoff, const FockLimits& limits) {
    if (alpha < 0.0) {
        throw std::invalid_argument("cat_state requires alpha >= 0");
    }
    if (sign != 1 && sign != -1) {
        throw std::invalid_argument("cat_state sign must be +1 or -1");
    }
    if (alpha == 0.0 && sign == -1) {
        throw DegenerateStateError("odd cat state at alpha = 0 is the zero vector");
    }
    FockVector v = coherent(alpha, cutoff, limits);
    auto amps = v.amplitudes();
    for (std::size_t n = 0; n < amps.size(); ++n) {
        const bool odd = (n % 2) == 1;
        // |a> + sign |-a>: amplitude c_n (1 + sign (-1)^n)
        const double f = odd ? (1.0 - sign) : (1.0 + sign);
        amps[n] *= f;
    }
    v.normalize();
    return v;
}

FockVector cat_state(double alpha, int sign, const FockLimits& limits) {
    return cat_state(alpha, sign, cutoff_for_amplitude(alpha, limits.tail_tolerance), limits);
}

FockVector tensor(const FockVector& a, const FockVector& b, const FockLimits& limits) {
    std::vector<int> cut = a.cutoffs();
    cut.insert(cut.end(), b.cutoffs().begin(), b.cutoffs().end());
    FockVector out(cut, limits);
    auto o = out.amplitudes();
    auto aa = a.amplitudes();
    auto bb = b.amplitudes();
    for (std::size_t i = 0; i < aa.size(); ++i) {
        if (aa[i] == cplx{}) {
            continue;
        }
        for (std::size_t j = 0; j < bb.size(); ++j) {
            o[i * bb.size() + j] = aa[i] * bb[j];
        }
    }
    out.set_norm_weight(a.norm_weight() * b.norm_weight());
    return out;
}

std::array<std::array<double, 2>, 2> beam_splitter_matrix(double angle) {
    const double c = std::cos(angle);
    const double s = std::sin(angle);
    return {{{c, s}, {-s, c}}};
}

namespace {

// Matrix elements <k, N-k| U |n, N-n> for each photon total N, where
// U a^dag U^dag = c a^dag - s b^dag and U b^dag U^dag = s a^dag + c b^dag.
std::vector<std::vector<double>> splitter_blocks(double angle, int max_total) {
    const long double c = std::cos(static_cast<long double>(angle));
    const long double s = std::sin(static_cast<long double>(angle));
    std::vector<long double> lfact(static_cast<std::size_t>(max_total) + 1);
    lfact[0] = 0.0L;
    for (int i = 1; i <= max_total; ++i) {
        lfact[static_cast<std::size_t>(i)] = lfact[static_cast<std::size_t>(i - 1)] + std::log(static_cast<long double>(i));
    }
    auto binom = [&](int n, int k) {
        return std::exp(lfact[static_cast<std::size_t>(n)] - lfact[static_cast<std::size_t>(k)] -
                        lfact[static_cast<std::size_t>(n - k)]);
    };
    auto ipow = [](long double x, int e) {
        long double r = 1.0L;
        for (int i = 0; i < e; ++i) {
            r *= x;
        }
        return r;
    };
    std::vector<std::vector<double>> blocks(static_cast<std::size_t>(max_total) + 1);
    for (int total = 0; total <= max_total; ++total) {
        const std::size_t dim = static_cast<std::size_t>(total) + 1;
        std::vector<long double> acc(dim * dim, 0.0L);
        for (int n = 0; n <= total; ++n) {
            const int m = total - n;
            const long double pref = std::exp(-0.5L * (lfact[static_cast<std::size_t>(n)] + lfact[static_cast<std::size_t>(m)]));
            for (int k = 0; k <= n; ++k) {
                const long double tk = binom(n, k) * ipow(c, k) * ipow(-s, n - k);
                if (tk == 0.0L) {
                    continue;
                }
                for (int l = 0; l <= m; ++l) {
                    const long double tl = binom(m, l) * ipow(s, l) * ipow(c, m - l);
                    if (tl == 0.0L) {
                        continue;
                    }
                    const int out_a = k + l;
                    const long double f = std::exp(0.5L * (lfact[static_cast<std::size_t>(out_a)] +
                                                           lfact[static_cast<std::size_t>(total - out_a)]));
                    acc[static_cast<std::size_t>(out_a) * dim + static_cast<std::size_t>(n)] += pref * tk * tl * f;
                }
            }
        }
        blocks[static_cast<std::size_t>(total)].assign(acc.begin(), acc.end());
    }
    return blocks;
}

}  // namespace

FockVector apply_beam_splitter(const FockVector& state, const BeamSplitterSpec& spec) {
    const std::size_t ma = spec.mode_a;
    const std::size_t mb = spec.mode_b;
    if (ma == mb || ma >= state.mode_count() || mb >= state.mode_count()) {
        throw std::invalid_argument("beam splitter modes must be distinct and in range");
    }
    const int ca = state.cutoff(ma);
    const int cb = state.cutoff(mb);
    const auto blocks = splitter_blocks(spec.angle, ca + cb);
    const std::size_t sa = state.stride(ma);
    const std::size_t sb = state.stride(mb);

    FockVector out(state.cutoffs(), FockLimits{1.0, state.size()});
    out.set_norm_weight(state.norm_weight());
    auto in = state.amplitudes();
    auto o = out.amplitudes();
    std::vector<cplx> slice(static_cast<std::size_t>(ca + cb) + 2);
    for (std::size_t base = 0; base < in.size(); ++base) {
        if (digit(base, sa, ca) != 0 || digit(base, sb, cb) != 0) {
            continue;
        }
        for (int total = 0; total <= ca + cb; ++total) {
            const int n_lo = std::max(0, total - cb);
            const int n_hi = std::min(ca, total);
            bool any = false;
            for (int n = n_lo; n <= n_hi; ++n) {
                slice[static_cast<std::size_t>(n)] =
                    in[base + static_cast<std::size_t>(n) * sa + static_cast<std::size_t>(total - n) * sb];
                any = any || slice[static_cast<std::size_t>(n)] != cplx{};
            }
            if (!any) {
                continue;
            }
            const auto& blk = blocks[static_cast<std::size_t>(total)];
            const std::size_t dim = static_cast<std::size_t>(total) + 1;
            for (int k = n_lo; k <= n_hi; ++k) {
                cplx acc{};
                for (int n = n_lo; n <= n_hi; ++n) {
                    acc += blk[static_cast<std::size_t>(k) * dim + static_cast<std::size_t>(n)] *
                           slice[static_cast<std::size_t>(n)];
                }
                o[base + static_cast<std::size_t>(k) * sa + static_cast<std::size_t>(total - k) * sb] = acc;
            }
        }
    }
    return out;
}

FockVector phase_shift(const FockVector& state, std::size_t mode, double phi) {
    if (mode >= state.mode_count()) {
        throw std::invalid_argument("phase shift mode out of range");
    }
    FockVector out = state;
    const int c = state.cutoff(mode);
    const std::size_t s = state.stride(mode);
    std::vector<cplx> factors(static_cast<std::size_t>(c) + 1);
    for (int n = 0; n <= c; ++n) {
        factors[static_cast<std::size_t>(n)] = std::polar(1.0, phi * n);
    }
    auto amps = out.amplitudes();
    for (std::size_t i = 0; i < amps.size(); ++i) {
        amps[i] *= factors[static_cast<std::size_t>(digit(i, s, c))];
    }
    return out;
}

cplx overlap(const FockVector& a, const FockVector& b) {
    if (a.cutoffs() != b.cutoffs()) {
        throw std::invalid_argument("overlap requires identically shaped states");
    }
    cplx s{};
    auto aa = a.amplitudes();
    auto bb = b.amplitudes();
    for (std::size_t i = 0; i < aa.size(); ++i) {
        s += std::conj(aa[i]) * bb[i];
    }
    return s;
}

namespace {

void check_modes(const FockVector& state, std::span<const std::size_t> modes) {
    if (modes.empty()) {
        throw std::invalid_argument("measurement needs at least one mode");
    }
    std::vector<bool> seen(state.mode_count(), false);
    for (std::size_t m : modes) {
        if (m >= state.mode_count() || seen[m]) {
            throw std::invalid_argument("measured modes must be distinct and in range");
        }
        seen[m] = true;
    }
}

}  // namespace

ProjectionResult project_outcome(const FockVector& state, std::span<const std::size_t> modes,
                                 std::span<const int> outcome) {
    check_modes(state, modes);
    if (outcome.size() != modes.size()) {
        throw std::invalid_argument("outcome length must match measured modes");
    }
    std::vector<bool> measured(state.mode_count(), false);
    for (std::size_t i = 0; i < modes.size(); ++i) {
        measured[modes[i]] = true;
        if (outcome[i] < 0) {
            throw std::invalid_argument("photon counts are nonnegative");
        }
    }
    const double total = state.squared_norm();
    ProjectionResult res;
    for (std::size_t i = 0; i < modes.size(); ++i) {
        if (outcome[i] > state.cutoff(modes[i])) {
            return res;
        }
    }
    std::vector<int> rest_cut;
    std::vector<std::size_t> rest_modes;
    for (std::size_t m = 0; m < state.mode_count(); ++m) {
        if (!measured[m]) {
            rest_cut.push_back(state.cutoff(m));
            rest_modes.push_back(m);
        }
    }
    std::size_t offset = 0;
    for (std::size_t i = 0; i < modes.size(); ++i) {
        offset += static_cast<std::size_t>(outcome[i]) * state.stride(modes[i]);
    }
    FockVector out(rest_cut, FockLimits{1.0, state.size()});
    auto in = state.amplitudes();
    auto o = out.amplitudes();
    for (std::size_t j = 0; j < o.size(); ++j) {
        std::size_t src = offset;
        for (std::size_t r = 0; r < rest_modes.size(); ++r) {
            src += static_cast<std::size_t>(digit(j, out.stride(r), rest_cut[r])) * state.stride(rest_modes[r]);
        }
        o[j] = in[src];
    }
    const double w = out.squared_norm();
    res.probability = total > 0.0 ? w / total : 0.0;
    if (w > 0.0) {
        out.normalize();
        out.set_norm_weight(state.norm_weight() * res.probability);
        res.collapsed = std::move(out);
    }
    return res;
}

std::vector<double> outcome_distribution(const FockVector& state, std::span<const std::size_t> modes) {
    check_modes(state, modes);
    std::size_t bins = 1;
    for (std::size_t m : modes) {
        bins *= static_cast<std::size_t>(state.cutoff(m) + 1);
    }
    std::vector<double> dist(bins, 0.0);
    auto in = state.amplitudes();
    const double total = state.squared_norm();
    for (std::size_t i = 0; i < in.size(); ++i) {
        const double p = std::norm(in[i]);
        if (p == 0.0) {
            continue;
        }
        std::size_t bin = 0;
        for (std::size_t m : modes) {
            bin = bin * static_cast<std::size_t>(state.cutoff(m) + 1) +
                  static_cast<std::size_t>(digit(i, state.stride(m), state.cutoff(m)));
        }
        dist[bin] += p / total;
    }
    return dist;
}

CountResult count_photons(const FockVector& state, std::span<const std::size_t> modes, std::mt19937_64& rng) {
    const auto dist = outcome_distribution(state, modes);
    const double u = uniform01(rng);
    double acc = 0.0;
    std::size_t pick = dist.size() - 1;
    for (std::size_t i = 0; i < dist.size(); ++i) {
        acc += dist[i];
        if (u < acc) {
            pick = i;
            break;
        }
    }
    while (dist[pick] == 0.0 && pick > 0) {
        --pick;
    }
    std::vector<int> outcome(modes.size());
    std::size_t rem = pick;
    for (std::size_t k = modes.size(); k-- > 0;) {
        const std::size_t radix = static_cast<std::size_t>(state.cutoff(modes[k]) + 1);
        outcome[k] = static_cast<int>(rem % radix);
        rem /= radix;
    }
    auto proj = project_outcome(state, modes, outcome);
    return {std::move(outcome), std::move(*proj.collapsed)};
}

std::vector<OutcomeBranch> split_by_outcome(const FockVector& state, std::span<const std::size_t> modes,
                                            double min_probability) {
    check_modes(state, modes);
    std::vector<bool> measured(state.mode_count(), false);
    std::size_t bins = 1;
    for (std::size_t m : modes) {
        measured[m] = true;
        bins *= static_cast<std::size_t>(state.cutoff(m) + 1);
    }
    std::vector<int> rest_cut;
    std::vector<std::size_t> rest_modes;
    for (std::size_t m = 0; m < state.mode_count(); ++m) {
        if (!measured[m]) {
            rest_cut.push_back(state.cutoff(m));
            rest_modes.push_back(m);
        }
    }
    std::size_t rest_size = 1;
    for (int c : rest_cut) {
        rest_size *= static_cast<std::size_t>(c + 1);
    }
    std::vector<std::size_t> rest_strides(rest_cut.size());
    {
        std::size_t s = 1;
        for (std::size_t i = rest_cut.size(); i-- > 0;) {
            rest_strides[i] = s;
            s *= static_cast<std::size_t>(rest_cut[i] + 1);
        }
    }
    std::vector<double> weight(bins, 0.0);
    auto in = state.amplitudes();
    auto bin_of = [&](std::size_t i) {
        std::size_t bin = 0;
        for (std::size_t m : modes) {
            bin = bin * static_cast<std::size_t>(state.cutoff(m) + 1) +
                  static_cast<std::size_t>(digit(i, state.stride(m), state.cutoff(m)));
        }
        return bin;
    };
    for (std::size_t i = 0; i < in.size(); ++i) {
        weight[bin_of(i)] += std::norm(in[i]);
    }
    const double total = state.squared_norm();
    std::vector<std::ptrdiff_t> slot(bins, -1);
    std::vector<OutcomeBranch> out;
    for (std::size_t b = 0; b < bins; ++b) {
        const double p = total > 0.0 ? weight[b] / total : 0.0;
        if (weight[b] == 0.0 || p <= min_probability) {
            continue;
        }
        OutcomeBranch br;
        br.outcome.resize(modes.size());
        std::size_t rem = b;
        for (std::size_t k = modes.size(); k-- > 0;) {
            const std::size_t radix = static_cast<std::size_t>(state.cutoff(modes[k]) + 1);
            br.outcome[k] = static_cast<int>(rem % radix);
            rem /= radix;
        }
        br.probability = p;
        br.collapsed = FockVector(rest_cut, FockLimits{1.0, rest_size});
        slot[b] = static_cast<std::ptrdiff_t>(out.size());
        out.push_back(std::move(br));
    }
    for (std::size_t i = 0; i < in.size(); ++i) {
        const std::ptrdiff_t k = slot[bin_of(i)];
        if (k < 0) {
            continue;
        }
        std::size_t j = 0;
        for (std::size_t r = 0; r < rest_modes.size(); ++r) {
            j += static_cast<std::size_t>(digit(i, state.stride(rest_modes[r]), rest_cut[r])) * rest_strides[r];
        }
        out[static_cast<std::size_t>(k)].collapsed.amplitudes()[j] = in[i];
    }
    for (auto& br : out) {
        br.collapsed.normalize();
        br.collapsed.set_norm_weight(state.norm_weight() * br.probability);
    }
    return out;
}

FockVector permute_modes(const FockVector& state, std::span<const std::size_t> order) {
    if (order.size() != state.mode_count()) {
        throw std::invalid_argument("permutation length must equal the mode count");
    }
    std::vector<bool> seen(order.size(), false);
    std::vector<int> cut(order.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
        if (order[i] >= order.size() || seen[order[i]]) {
            throw std::invalid_argument("invalid mode permutation");
        }
        seen[order[i]] = true;
        cut[i] = state.cutoff(order[i]);
    }
    FockVector out(cut, FockLimits{1.0, state.size()});
    out.set_norm_weight(state.norm_weight());
    auto in = state.amplitudes();
    auto o = out.amplitudes();
    for (std::size_t j = 0; j < o.size(); ++j) {
        std::size_t src = 0;
        for (std::size_t i = 0; i < order.size(); ++i) {
            src += static_cast<std::size_t>(digit(j, out.stride(i), cut[i])) * state.stride(order[i]);
        }
        o[j] = in[src];
    }
    return out;
}

DensityOperator::DensityOperator(std::vector<int> cutoffs)
    : cutoffs_(std::move(cutoffs)), strides_(make_strides(cutoffs_)), dim_(total_size(cutoffs_)) {
    m_.assign(dim_ * dim_, cplx{});
}

DensityOperator DensityOperator::from_pure(const FockVector& psi) {
    DensityOperator rho(psi.cutoffs());
    auto a = psi.amplitudes();
    for (std::size_t r = 0; r < rho.dim_; ++r) {
        for (std::size_t c = 0; c < rho.dim_; ++c) {
            rho(r, c) = a[r] * std::conj(a[c]);
        }
    }
    return rho;
}

double DensityOperator::trace() const {
    double t = 0.0;
    for (std::size_t i = 0; i < dim_; ++i) {
        t += (*this)(i, i).real();
    }
    return t;
}

double DensityOperator::expectation(const FockVector& psi) const {
    if (psi.cutoffs() != cutoffs_) {
        throw std::invalid_argument("expectation requires a state of the same shape");
    }
    auto a = psi.amplitudes();
    cplx s{};
    for (std::size_t r = 0; r < dim_; ++r) {
        if (a[r] == cplx{}) {
            continue;
        }
        cplx row{};
        for (std::size_t c = 0; c < dim_; ++c) {
            row += (*this)(r, c) * a[c];
        }
        s += std::conj(a[r]) * row;
    }
    return s.real();
}

double DensityOperator::hermiticity_error() const {
    double e = 0.0;
    for (std::size_t r = 0; r < dim_; ++r) {
        for (std::size_t c = r; c < dim_; ++c) {
            e = std::max(e, std::abs((*this)(r, c) - std::conj((*this)(c, r))));
        }
    }
    return e;
}

DensityOperator loss_channel(const DensityOperator& rho, std::size_t mode, double eta) {
    if (!(eta >= 0.0 && eta <= 1.0)) {
        throw std::invalid_argument("loss fraction must lie in [0, 1]");
    }
    if (mode >= rho.mode_count()) {
        throw std::invalid_argument("loss mode out of range");
    }
    const int cut = rho.cutoffs_[mode];
    const std::size_t stride = rho.strides_[mode];
    DensityOperator out(rho.cutoffs_);
    if (eta == 1.0) {
        // Everything ends in vacuum on this mode; the partial trace over the
        // lost photons keeps the other modes' coherences.
        for (std::size_t r = 0; r < rho.dim_; ++r) {
            const int nr = digit(r, stride, cut);
            for (std::size_t c = 0; c < rho.dim_; ++c) {
                if (digit(c, stride, cut) != nr) {
                    continue;
                }
                out(r - static_cast<std::size_t>(nr) * stride, c - static_cast<std::size_t>(nr) * stride) += rho(r, c);
            }
        }
        return out;
    }
    // Kraus E_k |n> = sqrt(C(n,k)) (1-eta)^{(n-k)/2} eta^{k/2} |n-k>
    std::vector<double> lfact(static_cast<std::size_t>(cut) + 1, 0.0);
    for (int i = 1; i <= cut; ++i) {
        lfact[static_cast<std::size_t>(i)] = lfact[static_cast<std::size_t>(i - 1)] + std::log(static_cast<double>(i));
    }
    const double lt = std::log1p(-eta);
    const double le = eta > 0.0 ? std::log(eta) : 0.0;
    auto kraus = [&](int n, int k) {
        if (k == 0) {
            return std::exp(0.5 * n * lt);
        }
        if (eta == 0.0) {
            return 0.0;
        }
        const double lb = lfact[static_cast<std::size_t>(n)] - lfact[static_cast<std::size_t>(k)] -
                          lfact[static_cast<std::size_t>(n - k)];
        return std::exp(0.5 * (lb + (n - k) * lt + k * le));
    };
    for (std::size_t r = 0; r < rho.dim_; ++r) {
        const int nr = digit(r, stride, cut);
        for (std::size_t c = 0; c < rho.dim_; ++c) {
            const cplx v = rho(r, c);
            if (v == cplx{}) {
                continue;
            }
            const int nc = digit(c, stride, cut);
            const int kmax = std::min(nr, nc);
            for (int k = 0; k <= kmax; ++k) {
                const double w = kraus(nr, k) * kraus(nc, k);
                out(r - static_cast<std::size_t>(k) * stride, c - static_cast<std::size_t>(k) * stride) += w * v;
            }
        }
    }
    return out;
}

}  // namespace csqc
