#pragma once

// Truncated multimode Fock-space linear optics.
//
// Beam-splitter convention (fixed library-wide): a splitter with angle t acting
// on modes (a, b) maps coherent amplitudes (x, y) -> (cos t * x + sin t * y,
// -sin t * x + cos t * y). Transmission is real and positive; the reflected
// component into mode b carries the minus sign. With t = pi/4,
// |x>|x> -> |sqrt(2) x>|0> literally.

#include <array>
#include <complex>
#include <cstddef>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace csqc {

using cplx = std::complex<double>;

class CutoffError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

class ResourceError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

class DegenerateStateError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

/// Limits applied to every state construction.
struct FockLimits {
    double tail_tolerance = 1e-12;
    std::size_t max_amplitudes = std::size_t{1} << 23;
};

/// Smallest cutoff n_max such that a coherent state of amplitude |a| has
/// probability mass above n_max below `tail_tolerance`.
int cutoff_for_amplitude(double abs_amplitude, double tail_tolerance = 1e-12);

/// Poisson mass above `cutoff` for mean photon number |a|^2.
double poisson_tail(double abs_amplitude, int cutoff);

class FockVector {
   public:
    FockVector() = default;
    /// All-zero vector over the given per-mode cutoffs (inclusive).
    explicit FockVector(std::vector<int> cutoffs, const FockLimits& limits = {});

    static FockVector vacuum(std::vector<int> cutoffs, const FockLimits& limits = {});

    std::size_t mode_count() const { return cutoffs_.size(); }
    const std::vector<int>& cutoffs() const { return cutoffs_; }
    int cutoff(std::size_t mode) const { return cutoffs_.at(mode); }
    std::size_t size() const { return amps_.size(); }

    std::span<cplx> amplitudes() { return amps_; }
    std::span<const cplx> amplitudes() const { return amps_; }

    cplx& at(std::span<const int> occupation);
    cplx at(std::span<const int> occupation) const;
    std::size_t index_of(std::span<const int> occupation) const;
    std::vector<int> occupation_of(std::size_t index) const;
    std::size_t stride(std::size_t mode) const { return strides_.at(mode); }

    double norm_weight() const { return norm_weight_; }
    void set_norm_weight(double w) { norm_weight_ = w; }

    double squared_norm() const;
    double norm() const;
    /// Rescales to unit norm; throws DegenerateStateError on a zero vector.
    void normalize();

    /// Re-shapes one mode to a new cutoff: padding with zeros or dropping
    /// occupations above the new cutoff.
    FockVector with_cutoff(std::size_t mode, int new_cutoff, const FockLimits& limits = {}) const;

    /// Probability-weighted photon-number parity expectation sum_n (-1)^N |c_n|^2.
    double parity_expectation() const;

   private:
    std::vector<int> cutoffs_;
    std::vector<std::size_t> strides_;
    std::vector<cplx> amps_;
    double norm_weight_ = 1.0;
};

struct BeamSplitterSpec {
    std::size_t mode_a = 0;
    std::size_t mode_b = 1;
    double angle = 0.7853981633974483;  // 50:50
};

FockVector coherent(cplx alpha, int cutoff, const FockLimits& limits = {});
FockVector coherent(cplx alpha, const FockLimits& limits = {});

/// Normalised N(|a> + sign |-a>); throws DegenerateStateError when a = 0, sign = -1.
FockVector cat_state(double alpha, int sign, int cutoff, const FockLimits& limits = {});
FockVector cat_state(double alpha, int sign, const FockLimits& limits = {});

FockVector tensor(const FockVector& a, const FockVector& b, const FockLimits& limits = {});

FockVector apply_beam_splitter(const FockVector& state, const BeamSplitterSpec& spec);
FockVector phase_shift(const FockVector& state, std::size_t mode, double phi);

/// 2x2 mode-mixing matrix implied by `angle` (rows: output a, b).
std::array<std::array<double, 2>, 2> beam_splitter_matrix(double angle);

cplx overlap(const FockVector& a, const FockVector& b);

struct ProjectionResult {
    double probability = 0.0;
    /// Remaining modes after removing the measured ones; empty when the
    /// outcome has zero probability.
    std::optional<FockVector> collapsed;
};

/// Deterministic projection of `modes` onto photon numbers `outcome`.
/// Probability is relative to the (normalised) input state.
ProjectionResult project_outcome(const FockVector& state, std::span<const std::size_t> modes,
                                 std::span<const int> outcome);

struct CountResult {
    std::vector<int> outcome;
    FockVector collapsed;
};

/// Born-rule sample of photon counts on `modes`.
CountResult count_photons(const FockVector& state, std::span<const std::size_t> modes,
                          std::mt19937_64& rng);

/// Marginal photon-number distribution over `modes`, indexed in row-major
/// order over the measured modes' cutoffs.
std::vector<double> outcome_distribution(const FockVector& state, std::span<const std::size_t> modes);

struct OutcomeBranch {
    std::vector<int> outcome;
    double probability = 0.0;
    FockVector collapsed;
};

/// All outcomes on `modes` with probability above `min_probability`, in a
/// single pass over the state. Collapsed states are normalised and carry
/// norm_weight multiplied by the outcome probability.
std::vector<OutcomeBranch> split_by_outcome(const FockVector& state, std::span<const std::size_t> modes,
                                            double min_probability = 0.0);

/// Reorders modes: output mode i is input mode order[i].
FockVector permute_modes(const FockVector& state, std::span<const std::size_t> order);

class DensityOperator {
   public:
    DensityOperator() = default;
    explicit DensityOperator(std::vector<int> cutoffs);
    static DensityOperator from_pure(const FockVector& psi);

    std::size_t mode_count() const { return cutoffs_.size(); }
    const std::vector<int>& cutoffs() const { return cutoffs_; }
    std::size_t dim() const { return dim_; }

    cplx& operator()(std::size_t r, std::size_t c) { return m_[r * dim_ + c]; }
    cplx operator()(std::size_t r, std::size_t c) const { return m_[r * dim_ + c]; }

    double trace() const;
    /// <psi| rho |psi> for a pure state of the same shape.
    double expectation(const FockVector& psi) const;
    double hermiticity_error() const;

   private:
    std::vector<int> cutoffs_;
    std::vector<std::size_t> strides_;
    std::size_t dim_ = 0;
    std::vector<cplx> m_;

    friend DensityOperator loss_channel(const DensityOperator&, std::size_t, double);
};

/// Couples `mode` to a vacuum ancilla with transmission sqrt(1 - eta) and
/// traces the ancilla out; eta is the lost intensity fraction.
DensityOperator loss_channel(const DensityOperator& rho, std::size_t mode, double eta);

}  // namespace csqc
