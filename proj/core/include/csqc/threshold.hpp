#pragma once

// Concatenation-level rate maps, below/above-threshold verdicts, threshold
// bisection over the loss rate, computation-length estimates, and resource
// accounting for one error-correction round.

#include <array>
#include <cstdint>
#include <limits>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "csqc/noise.hpp"
#include "csqc/pauli_sim.hpp"

namespace csqc {

/// Polynomial level map in the monomials
/// u^2, u l, l^2, u^3, u^2 l, u l^2, l^3 (no constant or linear terms).
struct LevelMapCoeffs {
    enum class Source { self_similar, external };
    static constexpr std::size_t kTerms = 7;

    Source source = Source::external;
    std::array<double, kTerms> unlocated{};
    std::array<double, kTerms> located{};

    static std::array<double, kTerms> monomials(double u, double l);
    /// Outputs clamped to [0, 1].
    std::pair<double, double> apply(double u, double l) const;
    /// Throws std::invalid_argument on negative or non-finite coefficients.
    void validate() const;
};

std::string_view to_string(LevelMapCoeffs::Source s);

/// Nonnegative least-squares fit of the self-similar map, from Monte Carlo
/// runs of the uniform-noise exRec at each grid point. Residuals are weighted
/// relative to the measured rates so small rates are fitted as well as large.
LevelMapCoeffs fit_level_map(const std::vector<std::pair<double, double>>& grid, std::uint64_t trials,
                             std::uint64_t seed, const ExrecOptions& opts = {});

/// Nonnegative least squares min |A x - b| subject to x >= 0 (Lawson-Hanson).
std::vector<double> nnls(const std::vector<std::vector<double>>& a, const std::vector<double>& b);

enum class LevelMapMode { self_similar, external };
std::string_view to_string(LevelMapMode m);
LevelMapMode level_map_mode_from_string(std::string_view s);

/// Grid on which the self-similar map is fitted.
std::vector<std::pair<double, double>> default_fit_grid();

/// fit_level_map on the default grid, computed once per (trials, seed).
const LevelMapCoeffs& self_similar_fit(std::uint64_t trials = 1000000, std::uint64_t seed = 20240607);

struct LevelMapConfig {
    LevelMapMode mode = LevelMapMode::self_similar;
    LevelMapCoeffs coeffs;
    /// Self-similar mode: a rate observed fewer than `min_events` times is
    /// replaced by this polynomial's value, when given.
    const LevelMapCoeffs* fallback = nullptr;
    std::uint64_t min_events = 20;
    std::uint64_t trials = 100000;
    std::uint64_t seed = 1;
    ExrecOptions exrec;
};

/// Rates one level up. Self-similar mode reruns the exRec with every
/// operation carrying located rate l and unlocated rate u split evenly
/// between X and Z.
LevelRates level_map(const LevelRates& rates, const LevelMapConfig& cfg);

enum class Verdict { below, above, inconclusive };
std::string_view to_string(Verdict v);

struct ThresholdOptions {
    int levels = 3;
    bool memory_noise = true;
    LossConvention convention = LossConvention::paper_literal;
    LevelMapMode map_mode = LevelMapMode::self_similar;
    LevelMapCoeffs coeffs;
    /// Use self_similar_fit(fit_trials) for sparsely observed higher levels.
    bool polynomial_fallback = true;
    std::uint64_t fit_trials = 1000000;
    std::uint64_t min_events = 20;
    /// Inconclusive probes are rerun with 4x the trials up to this many.
    std::uint64_t max_trials = 1600000;
    ExrecOptions exrec;
};

struct ThresholdProbe {
    double alpha = 0.0;
    double eta = 0.0;
    Verdict verdict = Verdict::inconclusive;
    std::uint64_t trials = 0;
    std::vector<LevelRates> levels;
    std::string reason;
};

/// One verdict at fixed trials: below iff both rates fall, with
/// non-overlapping intervals, over each of the (levels - 1) maps; above if
/// either rate rises significantly (or preparation starves).
ThresholdProbe is_below_threshold(double alpha, double eta, int levels, std::uint64_t trials, std::uint64_t seed,
                                  const ThresholdOptions& opts = {});

/// As above, rerunning inconclusive verdicts with more trials.
ThresholdProbe probe_threshold(double alpha, double eta, std::uint64_t trials, std::uint64_t seed,
                               const ThresholdOptions& opts = {});

struct ThresholdPoint {
    enum class Status { ok, no_threshold, error };

    double alpha = 0.0;
    double eta_threshold = 0.0;
    double eta_low = 0.0;
    double eta_high = 0.0;
    int levels_tested = 0;
    Status status = Status::ok;
    std::string message;
    std::vector<ThresholdProbe> probes;
};

std::string_view to_string(ThresholdPoint::Status s);

class BracketError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

/// Geometric bisection in eta until eta_high / eta_low <= 1 + tolerance.
/// Inconclusive probes (after reruns) count as not below threshold. Throws
/// BracketError when the upper bound is itself below threshold.
ThresholdPoint bisect_threshold(double alpha, std::pair<double, double> eta_bounds, double tolerance,
                                std::uint64_t trials, std::uint64_t seed, const ThresholdOptions& opts = {});

struct SweepOptions {
    std::pair<double, double> eta_bounds{0.0, 1e-2};
    double tolerance = 0.1;
    int workers = 1;
    ThresholdOptions threshold;
};

/// bisect_threshold per alpha; failures are recorded in the point's status.
std::vector<ThresholdPoint> sweep(const std::vector<double>& alpha_grid, std::uint64_t trials, std::uint64_t seed,
                                  const SweepOptions& opts = {});

std::string sweep_csv(const std::vector<ThresholdPoint>& points, std::uint64_t trials, bool memory_noise,
                      std::uint64_t seed);

inline constexpr std::int64_t kUnboundedSteps = std::numeric_limits<std::int64_t>::max();

/// floor(ln 2 / (unlocated + located)); kUnboundedSteps for zero rates.
std::int64_t max_steps(const LevelRates& rates);
std::int64_t max_steps(double unlocated, double located);

enum class ResourceCategory : unsigned char { memory = 0, hadamard, cz, diagonal_state, x_meas };
inline constexpr std::size_t kResourceCategories = 5;
std::string_view to_string(ResourceCategory c);

struct ResourceTally {
    int level = 1;
    /// Expected counts per category, including preparation retries.
    std::array<double, kResourceCategories> counts{};
    double total = 0.0;
    /// Diagonal states used directly and by the gate factories.
    double diagonal_consumed = 0.0;

    std::array<double, kResourceCategories> fractions() const;
};

/// Repeat-until-success statistics of the entanglement factories.
struct FactoryStats {
    double zrot_acceptance = 1.0 / 3.0;
    double hadamard_acceptance = 1.0 / 27.0;
    /// Same factories at the sqrt(2)-larger amplitude used for CZ resources.
    double cz_zrot_acceptance = 1.0 / 3.0;
    double cz_hadamard_acceptance = 1.0 / 27.0;

    /// Expected diagonal states per Hadamard resource: two Z-rotation
    /// resources per final attempt, one diagonal state per Z-rotation attempt.
    double diagonal_per_hadamard() const;
    double diagonal_per_cz() const;

    /// Acceptance probabilities measured by the Fock engine at `alpha`.
    static FactoryStats measured(double alpha);
};

struct ProtocolSpec {
    /// Level-1 noise, which sets the located rate of physical operations.
    double p = 2e-4;
    double q = 0.015;
    bool memory_noise = true;
    /// Effective rates of levels 1, 2, ...; level L + 1 rounds use level L's
    /// rates for their retry statistics.
    std::vector<double> unlocated_by_level{4e-4, 1.7e-4, 2.8e-5, 7.4e-7, 5.3e-10};
    std::vector<double> located_by_level{8e-3, 2e-3, 2.1e-4, 3.6e-6, 1.7e-9};
};

/// Counts operations of one error-correction round at `level`, built
/// recursively: each logical operation of a level-L round is a transversal
/// level-(L-1) operation followed by a level-(L-1) round per block.
ResourceTally count_resources(int level, const ProtocolSpec& protocol = {}, const FactoryStats& factories = {});

/// Expected operation counts of one level-1 round under `table`, per category.
std::array<double, kResourceCategories> round_operation_counts(const OpNoiseTable& table);

}  // namespace csqc
