#include "csqc/pauli_sim.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <map>
#include <stdexcept>
#include <thread>

namespace csqc {

namespace {

constexpr Mask bit(int q) { return Mask{1} << q; }

std::uint8_t block_bits(Mask m, int offset) { return static_cast<std::uint8_t>((m >> offset) & 0x7F); }

double unit_uniform(std::mt19937_64& rng) {
    // (0, 1]
    return (static_cast<double>(rng() >> 11) + 1.0) * 0x1.0p-53;
}

bool bernoulli(std::mt19937_64& rng, double p) { return p > 0.0 && unit_uniform(rng) <= p; }

}  // namespace

int CliffordCircuit::classical_bits() const {
    int n = 0;
    for (const auto& m : moments) {
        for (const auto& op : m) {
            n += op.kind == OpKind::x_meas;
        }
    }
    return n;
}

std::size_t CliffordCircuit::op_count() const {
    std::size_t n = 0;
    for (const auto& m : moments) {
        n += m.size();
    }
    return n;
}

void CliffordCircuit::validate() const {
    if (qubits < 0 || qubits > 64) {
        throw std::invalid_argument("circuit supports at most 64 qubits");
    }
    if (!region.empty() && region.size() != moments.size()) {
        throw std::invalid_argument("region labels do not match moments");
    }
    Mask measured = 0;
    for (std::size_t m = 0; m < moments.size(); ++m) {
        Mask used = 0;
        auto touch = [&](int q) {
            if (q >= qubits) {
                throw std::invalid_argument("op qubit out of range in moment " + std::to_string(m));
            }
            if (used & bit(q)) {
                throw std::invalid_argument("overlapping ops in moment " + std::to_string(m));
            }
            if ((measured & bit(q)) != 0) {
                throw std::invalid_argument("qubit used after measurement in moment " + std::to_string(m));
            }
            used |= bit(q);
        };
        for (const auto& op : moments[m]) {
            touch(op.a);
            if (op.kind == OpKind::cz) {
                if (op.a == op.b) {
                    throw std::invalid_argument("cz on a single qubit");
                }
                touch(op.b);
            }
        }
        for (const auto& op : moments[m]) {
            if (op.kind == OpKind::x_meas) {
                measured |= bit(op.a);
            }
        }
    }
}

void apply_op(PauliFrame& f, const Op& op) {
    const Mask a = bit(op.a);
    switch (op.kind) {
        case OpKind::plus_prep:
            f.x &= ~a;
            f.z &= ~a;
            f.located &= ~a;
            break;
        case OpKind::hadamard: {
            const Mask xa = f.x & a;
            const Mask za = f.z & a;
            f.x = (f.x & ~a) | za;
            f.z = (f.z & ~a) | xa;
            break;
        }
        case OpKind::cz: {
            const Mask b = bit(op.b);
            const bool xa = f.x & a;
            const bool xb = f.x & b;
            if (xa) {
                f.z ^= b;
            }
            if (xb) {
                f.z ^= a;
            }
            break;
        }
        case OpKind::memory:
            break;
        case OpKind::x_meas:
            // Z anticommutes with the X-basis measurement and flips its outcome.
            f.records = (f.records & ~a) | (f.z & a);
            break;
    }
}

PauliFrame propagate(PauliFrame frame, const CliffordCircuit& circuit) {
    for (const auto& m : circuit.moments) {
        for (const auto& op : m) {
            apply_op(frame, op);
        }
    }
    return frame;
}

namespace {

void inject(PauliFrame& f, int q, const OpNoise& row, std::mt19937_64& rng) {
    const Mask b = bit(q);
    if (bernoulli(rng, row.located)) {
        f.located |= b;
        const auto r = rng();
        if (r & 1) {
            f.x ^= b;
        }
        if (r & 2) {
            f.z ^= b;
        }
        return;
    }
    if (bernoulli(rng, row.x)) {
        f.x ^= b;
    }
    if (bernoulli(rng, row.z)) {
        f.z ^= b;
    }
}

}  // namespace

PauliFrame propagate(PauliFrame frame, const CliffordCircuit& circuit, const OpNoiseTable& table,
                     std::mt19937_64& rng) {
    for (const auto& m : circuit.moments) {
        for (const auto& op : m) {
            const OpNoise& row = table[op.kind];
            if (op.kind == OpKind::x_meas) {
                inject(frame, op.a, row, rng);
                apply_op(frame, op);
                continue;
            }
            apply_op(frame, op);
            inject(frame, op.a, row, rng);
            if (op.kind == OpKind::cz) {
                inject(frame, op.b, row, rng);
            }
        }
    }
    return frame;
}

std::string_view to_string(TrialClass c) {
    switch (c) {
        case TrialClass::no_error:
            return "no_error";
        case TrialClass::logical_x:
            return "logical_X";
        case TrialClass::logical_z:
            return "logical_Z";
        case TrialClass::logical_y:
            return "logical_Y";
        case TrialClass::located_failure:
            return "located_failure";
    }
    return "unknown";
}

TrialClass classify(bool lx, bool lz, bool located) {
    if (located) {
        return TrialClass::located_failure;
    }
    if (lx && lz) {
        return TrialClass::logical_y;
    }
    if (lx) {
        return TrialClass::logical_x;
    }
    return lz ? TrialClass::logical_z : TrialClass::no_error;
}

namespace {

class Builder {
   public:
    explicit Builder(int qubits, Mask live) : live_(live) { c_.qubits = qubits; }

    // Adds a moment; live qubits in `scope` left idle get a memory op.
    void moment(std::vector<Op> ops, RoundRegion region, Mask scope) {
        Mask used = 0;
        Mask born = 0;
        Mask dead = 0;
        for (const auto& op : ops) {
            used |= bit(op.a);
            if (op.kind == OpKind::cz) {
                used |= bit(op.b);
            }
            if (op.kind == OpKind::plus_prep) {
                born |= bit(op.a);
            }
            if (op.kind == OpKind::x_meas) {
                dead |= bit(op.a);
            }
        }
        const Mask idle = live_ & scope & ~used;
        for (int q = 0; q < c_.qubits; ++q) {
            if (idle & bit(q)) {
                ops.push_back({OpKind::memory, static_cast<std::uint8_t>(q), 0});
            }
        }
        live_ = (live_ | born) & ~dead;
        c_.moments.push_back(std::move(ops));
        c_.region.push_back(static_cast<int>(region));
    }

    CliffordCircuit take() { return std::move(c_); }

   private:
    CliffordCircuit c_;
    Mask live_;
};

Mask block_mask(int offset) { return Mask{0x7F} << offset; }

std::uint8_t u8(int v) { return static_cast<std::uint8_t>(v); }

void add_prep(Builder& b, const CodeSpec& code, int block, int checker, RoundRegion region) {
    const auto enc_zero = code.encoder(false);
    const auto enc_plus = code.encoder(true);
    const Mask scope = block_mask(block) | block_mask(checker);
    for (std::size_t m = 0; m < enc_zero.size(); ++m) {
        std::vector<Op> ops;
        for (const auto& e : enc_zero[m]) {
            ops.push_back({e.kind, u8(block + e.a), u8(e.b >= 0 ? block + e.b : 0)});
        }
        for (const auto& e : enc_plus[m]) {
            ops.push_back({e.kind, u8(checker + e.a), u8(e.b >= 0 ? checker + e.b : 0)});
        }
        b.moment(std::move(ops), region, scope);
    }
    std::vector<Op> couple, meas, flip;
    for (int j = 0; j < 7; ++j) {
        couple.push_back({OpKind::cz, u8(block + j), u8(checker + j)});
        meas.push_back({OpKind::x_meas, u8(checker + j), 0});
        flip.push_back({OpKind::hadamard, u8(block + j), 0});
    }
    b.moment(std::move(couple), region, scope);
    b.moment(std::move(meas), region, scope);
    b.moment(std::move(flip), region, scope);
}

}  // namespace

CliffordCircuit telecorrection_circuit(const CodeSpec& code) {
    using L = RoundLayout;
    Builder b(L::qubits, block_mask(L::data));
    add_prep(b, code, L::a, L::check_a, RoundRegion::prep_a);
    add_prep(b, code, L::b, L::check_b, RoundRegion::prep_b);
    std::vector<Op> pair, entangle, measure;
    for (int j = 0; j < 7; ++j) {
        pair.push_back({OpKind::cz, u8(L::a + j), u8(L::b + j)});
        entangle.push_back({OpKind::cz, u8(L::data + j), u8(L::a + j)});
        measure.push_back({OpKind::x_meas, u8(L::data + j), 0});
        measure.push_back({OpKind::x_meas, u8(L::a + j), 0});
    }
    b.moment(std::move(pair), RoundRegion::pair, block_mask(L::a) | block_mask(L::b));
    const Mask data_scope = block_mask(L::data) | block_mask(L::a) | block_mask(L::b);
    b.moment(std::move(entangle), RoundRegion::data, data_scope);
    b.moment(std::move(measure), RoundRegion::data, data_scope);
    auto c = b.take();
    c.validate();
    return c;
}

TelecorrectionRound::TelecorrectionRound(const CodeSpec& code, const OpNoiseTable& table, double tie_ratio,
                                         int max_attempts)
    : code_(&code),
      table_(table),
      decoder_(code, tie_ratio),
      max_attempts_(max_attempts),
      circuit_(telecorrection_circuit(code)) {
    if (max_attempts < 1) {
        throw std::invalid_argument("max_attempts must be positive");
    }
    for (int m = 0; m < static_cast<int>(circuit_.moments.size()); ++m) {
        for (const auto& op : circuit_.moments[m]) {
            std::vector<int> qs{op.a};
            if (op.kind == OpKind::cz) {
                qs.push_back(op.b);
            }
            // Measurement noise acts before the outcome; all other noise after the op.
            const int start = op.kind == OpKind::x_meas ? m : m + 1;
            for (int q : qs) {
                Site s;
                s.moment = start;
                s.qubit = q;
                s.region = static_cast<RoundRegion>(circuit_.region[m]);
                s.kind = op.kind;
                s.ex = propagate_unit(start, q, true, false);
                s.ez = propagate_unit(start, q, false, true);
                sites_.push_back(s);
            }
        }
    }
    for (int j = 0; j < 7; ++j) {
        input_x_[j] = propagate_unit(0, RoundLayout::data + j, true, false);
        input_z_[j] = propagate_unit(0, RoundLayout::data + j, false, true);
    }
    // Group sites by (region, error type, probability) for geometric skipping.
    for (std::size_t r = 0; r < kRoundRegions; ++r) {
        std::map<std::pair<int, double>, std::vector<std::uint32_t>> groups;
        for (std::uint32_t i = 0; i < sites_.size(); ++i) {
            if (static_cast<std::size_t>(sites_[i].region) != r) {
                continue;
            }
            const OpNoise& row = table_[sites_[i].kind];
            const double probs[3] = {row.located, row.x, row.z};
            for (int t = 0; t < 3; ++t) {
                if (probs[t] > 0.0) {
                    groups[{t, probs[t]}].push_back(i);
                }
            }
        }
        for (auto& [key, ids] : groups) {
            Channel ch;
            ch.type = key.first;
            ch.probability = key.second;
            ch.log_q = key.second < 1.0 ? std::log1p(-key.second) : 0.0;
            ch.sites = std::move(ids);
            channels_[r].push_back(std::move(ch));
        }
    }
    for (std::size_t r = 0; r < kRoundRegions; ++r) {
        clean_[r] = clean_probability(static_cast<RoundRegion>(r));
    }
}

TelecorrectionRound::Effect TelecorrectionRound::propagate_unit(int after_moment, int qubit, bool x, bool z) const {
    PauliFrame f;
    if (x) {
        f.x = bit(qubit);
    }
    if (z) {
        f.z = bit(qubit);
    }
    for (std::size_t m = static_cast<std::size_t>(after_moment); m < circuit_.moments.size(); ++m) {
        for (const auto& op : circuit_.moments[m]) {
            apply_op(f, op);
        }
    }
    Effect e;
    e.records = f.records;
    e.out_x = block_bits(f.x, RoundLayout::b);
    e.out_z = block_bits(f.z, RoundLayout::b);
    return e;
}

double TelecorrectionRound::clean_probability(RoundRegion r) const {
    double p = 1.0;
    for (const auto& ch : channels_[static_cast<std::size_t>(r)]) {
        if (ch.type == 0) {
            p *= std::pow(1.0 - ch.probability, static_cast<double>(ch.sites.size()));
        }
    }
    return p;
}

TelecorrectionRound::Sampled TelecorrectionRound::sample_region(RoundRegion r, std::mt19937_64& rng) const {
    Sampled out;
    for (const auto& ch : channels_[static_cast<std::size_t>(r)]) {
        const std::size_t n = ch.sites.size();
        std::size_t i = 0;
        while (true) {
            if (ch.probability < 1.0) {
                const double skip = std::floor(std::log(unit_uniform(rng)) / ch.log_q);
                if (skip >= static_cast<double>(n - i)) {
                    break;
                }
                i += static_cast<std::size_t>(skip);
            }
            if (i >= n) {
                break;
            }
            const Site& s = sites_[ch.sites[i]];
            switch (ch.type) {
                case 0: {
                    out.located = true;
                    out.flags |= bit(s.qubit);
                    const auto v = rng();
                    if (v & 1) {
                        out.effect ^= s.ex;
                    }
                    if (v & 2) {
                        out.effect ^= s.ez;
                    }
                    break;
                }
                case 1:
                    out.effect ^= s.ex;
                    break;
                default:
                    out.effect ^= s.ez;
                    break;
            }
            ++i;
        }
    }
    return out;
}

TelecorrectionRound::Effect TelecorrectionRound::sample_unlocated(RoundRegion r, std::mt19937_64& rng) const {
    Effect out;
    for (const auto& ch : channels_[static_cast<std::size_t>(r)]) {
        if (ch.type == 0) {
            continue;
        }
        const std::size_t n = ch.sites.size();
        std::size_t i = 0;
        while (true) {
            if (ch.probability < 1.0) {
                const double skip = std::floor(std::log(unit_uniform(rng)) / ch.log_q);
                if (skip >= static_cast<double>(n - i)) {
                    break;
                }
                i += static_cast<std::size_t>(skip);
            }
            if (i >= n) {
                break;
            }
            const Site& s = sites_[ch.sites[i]];
            out ^= ch.type == 1 ? s.ex : s.ez;
            ++i;
        }
    }
    return out;
}

bool TelecorrectionRound::verifier_accepts(RoundRegion r, Mask records) const {
    const int offset = r == RoundRegion::prep_a ? RoundLayout::check_a : RoundLayout::check_b;
    const std::uint8_t w = block_bits(records, offset);
    // The checker's ideal outcomes form the even-weight subcode.
    return code_->syndrome(w) == 0 && !parity(w);
}

RoundResult TelecorrectionRound::finish(const BlockFrame& in, Effect eff, Mask data_flags, int block_attempts,
                                        int pair_attempts, bool starved) const {
    RoundResult r;
    r.block_attempts = block_attempts;
    r.pair_attempts = pair_attempts;
    if (starved) {
        r.starved = true;
        r.located_failure = true;
        r.out.located = 0x7F;
        return r;
    }
    const std::uint8_t fd = block_bits(eff.records, RoundLayout::data);
    const std::uint8_t fa = block_bits(eff.records, RoundLayout::a);
    const unsigned ed = in.located | block_bits(data_flags, RoundLayout::data);
    // Erased data qubits carry random X that the CZ copies onto A as Z.
    const unsigned ea = in.located | block_bits(data_flags, RoundLayout::a);
    bool lz = false;
    bool lx = false;
    const auto dd = decoder_.decode_word(fd, ed, lz);
    const auto da = decoder_.decode_word(fa, ea, lx);
    r.lz = lz;
    r.lx = lx;
    r.located_failure = dd.located_failure || da.located_failure;
    r.syndrome_d = code_->syndrome(fd);
    r.syndrome_a = code_->syndrome(fa);
    r.erasures = popcount(ed) + popcount(ea);
    r.out.x = eff.out_x;
    r.out.z = eff.out_z;
    r.out.located = block_bits(data_flags, RoundLayout::b);
    return r;
}

RoundResult TelecorrectionRound::run(const BlockFrame& in, std::mt19937_64& rng) const {
    Effect eff;
    for (int j = 0; j < 7; ++j) {
        if (in.x >> j & 1) {
            eff ^= input_x_[j];
        }
        if (in.z >> j & 1) {
            eff ^= input_z_[j];
        }
    }
    // Attempts discarded for a located event are geometric; the surviving
    // attempt only needs its unlocated faults, which are independent of them.
    auto located_rejections = [&](RoundRegion r) -> long long {
        const double clean = clean_[static_cast<std::size_t>(r)];
        if (clean >= 1.0) {
            return 0;
        }
        if (clean <= 0.0) {
            return max_attempts_ + 1LL;
        }
        const double k = std::floor(std::log(unit_uniform(rng)) / std::log1p(-clean));
        return k > 1e9 ? max_attempts_ + 1LL : static_cast<long long>(k);
    };
    int block_attempts = 0;
    int pair_attempts = 0;
    bool starved = false;
    Effect ancilla;
    while (!starved) {
        ancilla = Effect{};
        for (RoundRegion region : {RoundRegion::prep_a, RoundRegion::prep_b}) {
            long long tries = 0;
            while (true) {
                tries += located_rejections(region) + 1;
                if (tries > max_attempts_) {
                    starved = true;
                    break;
                }
                const Effect e = sample_unlocated(region, rng);
                if (verifier_accepts(region, e.records)) {
                    ancilla ^= e;
                    break;
                }
            }
            block_attempts += static_cast<int>(std::min<long long>(tries, max_attempts_));
            if (starved) {
                break;
            }
        }
        if (starved) {
            break;
        }
        const long long rejected = located_rejections(RoundRegion::pair);
        if (rejected == 0) {
            ++pair_attempts;
            ancilla ^= sample_unlocated(RoundRegion::pair, rng);
            break;
        }
        // The discarded pair takes both blocks with it.
        ++pair_attempts;
        if (pair_attempts > max_attempts_) {
            starved = true;
        }
    }
    if (starved) {
        return finish(in, eff, 0, block_attempts, pair_attempts, true);
    }
    eff ^= ancilla;
    const Sampled d = sample_region(RoundRegion::data, rng);
    eff ^= d.effect;
    return finish(in, eff, d.flags, block_attempts, pair_attempts, false);
}

RoundResult TelecorrectionRound::run_with_fault(const BlockFrame& in, const std::optional<FaultSpec>& fault) const {
    Effect eff;
    for (int j = 0; j < 7; ++j) {
        if (in.x >> j & 1) {
            eff ^= input_x_[j];
        }
        if (in.z >> j & 1) {
            eff ^= input_z_[j];
        }
    }
    int block_attempts = 2;
    if (fault) {
        if (fault->site >= sites_.size()) {
            throw std::out_of_range("fault site index");
        }
        const Site& s = sites_[fault->site];
        Effect e;
        if (fault->x) {
            e ^= s.ex;
        }
        if (fault->z) {
            e ^= s.ez;
        }
        const bool prep = s.region == RoundRegion::prep_a || s.region == RoundRegion::prep_b;
        if (prep && !verifier_accepts(s.region, e.records)) {
            ++block_attempts;  // rejected; the clean retry contributes nothing
        } else {
            eff ^= e;
        }
    }
    return finish(in, eff, 0, block_attempts, 1, false);
}

std::pair<BlockFrame, TrialOutcome> telecorrect(const BlockFrame& data, const CodeSpec& code,
                                                const OpNoiseTable& table, std::mt19937_64& rng) {
    const TelecorrectionRound round(code, table);
    const RoundResult r = round.run(data, rng);
    const IdealDecode fin = ideal_decode(r.out, round.decoder());
    TrialOutcome t;
    t.classification = classify(r.lx != fin.lx, r.lz != fin.lz, r.located_failure || fin.located);
    t.syndrome_d = r.syndrome_d;
    t.syndrome_a = r.syndrome_a;
    t.erasures = r.erasures;
    return {r.out, t};
}

IdealDecode ideal_decode(const BlockFrame& f, const ErasureDecoder& decoder) {
    IdealDecode d;
    const auto rx = decoder.decode_word(f.x, f.located, d.lx);
    const auto rz = decoder.decode_word(f.z, f.located, d.lz);
    d.located = rx.located_failure || rz.located_failure;
    return d;
}

std::string_view to_string(ExrecGate g) {
    switch (g) {
        case ExrecGate::memory:
            return "memory";
        case ExrecGate::hadamard:
            return "hadamard";
        case ExrecGate::cz:
            return "cz";
    }
    return "unknown";
}

ExrecGate exrec_gate_from_string(std::string_view s) {
    if (s == "memory") {
        return ExrecGate::memory;
    }
    if (s == "hadamard") {
        return ExrecGate::hadamard;
    }
    if (s == "cz") {
        return ExrecGate::cz;
    }
    throw std::invalid_argument("unknown exRec gate: " + std::string(s));
}

std::pair<double, double> wilson_interval(std::uint64_t events, std::uint64_t trials) {
    if (trials == 0) {
        return {0.0, 1.0};
    }
    constexpr double z = 1.959963984540054;
    const double n = static_cast<double>(trials);
    const double ph = static_cast<double>(events) / n;
    const double denom = 1.0 + z * z / n;
    const double centre = (ph + z * z / (2.0 * n)) / denom;
    const double half = z * std::sqrt(ph * (1.0 - ph) / n + z * z / (4.0 * n * n)) / denom;
    const double lo = events == 0 ? 0.0 : std::max(0.0, centre - half);
    const double hi = events == trials ? 1.0 : std::min(1.0, centre + half);
    return {lo, hi};
}

namespace {

struct ChunkTally {
    std::array<std::uint64_t, kTrialClasses> histogram{};
    std::uint64_t starved = 0;
    std::uint64_t block_attempts = 0;
    std::uint64_t pair_attempts = 0;
    std::uint64_t rounds = 0;
};

void gate_noise(BlockFrame& f, int j, const OpNoise& row, std::mt19937_64& rng) {
    const auto b = static_cast<std::uint8_t>(1u << j);
    if (bernoulli(rng, row.located)) {
        f.located |= b;
        const auto v = rng();
        if (v & 1) {
            f.x ^= b;
        }
        if (v & 2) {
            f.z ^= b;
        }
        return;
    }
    if (bernoulli(rng, row.x)) {
        f.x ^= b;
    }
    if (bernoulli(rng, row.z)) {
        f.z ^= b;
    }
}

TrialClass exrec_trial(const TelecorrectionRound& round, const OpNoiseTable& table, ExrecGate gate,
                       std::mt19937_64& rng, ChunkTally& t) {
    const int blocks = gate == ExrecGate::cz ? 2 : 1;
    std::array<BlockFrame, 2> f{};
    std::array<bool, 2> lx{}, lz{};
    bool located = false;
    auto ec = [&](int k) {
        const RoundResult r = round.run(f[k], rng);
        ++t.rounds;
        t.block_attempts += static_cast<std::uint64_t>(r.block_attempts);
        t.pair_attempts += static_cast<std::uint64_t>(r.pair_attempts);
        if (r.starved) {
            ++t.starved;
        }
        located = located || r.located_failure;
        lx[k] = lx[k] != r.lx;
        lz[k] = lz[k] != r.lz;
        f[k] = r.out;
        return !r.starved;
    };
    for (int k = 0; k < blocks; ++k) {
        if (!ec(k)) {
            return TrialClass::located_failure;
        }
    }
    switch (gate) {
        case ExrecGate::memory:
            for (int j = 0; j < 7; ++j) {
                gate_noise(f[0], j, table[OpKind::memory], rng);
            }
            break;
        case ExrecGate::hadamard:
            std::swap(f[0].x, f[0].z);
            std::swap(lx[0], lz[0]);
            for (int j = 0; j < 7; ++j) {
                gate_noise(f[0], j, table[OpKind::hadamard], rng);
            }
            break;
        case ExrecGate::cz: {
            const auto x0 = f[0].x;
            const auto x1 = f[1].x;
            f[0].z ^= x1;
            f[1].z ^= x0;
            const bool l0 = lx[0];
            const bool l1 = lx[1];
            lz[0] = lz[0] != l1;
            lz[1] = lz[1] != l0;
            for (int j = 0; j < 7; ++j) {
                gate_noise(f[0], j, table[OpKind::cz], rng);
                gate_noise(f[1], j, table[OpKind::cz], rng);
            }
            break;
        }
    }
    for (int k = 0; k < blocks; ++k) {
        if (!ec(k)) {
            return TrialClass::located_failure;
        }
        const IdealDecode fin = ideal_decode(f[k], round.decoder());
        located = located || fin.located;
        lx[k] = lx[k] != fin.lx;
        lz[k] = lz[k] != fin.lz;
    }
    return classify(lx[0] || lx[1], lz[0] || lz[1], located);
}

}  // namespace

ExrecResult run_exrec_table(const OpNoiseTable& table, std::uint64_t trials, std::uint64_t seed,
                            const ExrecOptions& opts) {
    if (opts.chunk == 0) {
        throw std::invalid_argument("chunk size must be positive");
    }
    const TelecorrectionRound round(CodeSpec::steane(), table, opts.tie_ratio, opts.max_attempts);
    const std::uint64_t chunks = (trials + opts.chunk - 1) / opts.chunk;
    std::vector<ChunkTally> tallies(chunks);
    std::atomic<std::uint64_t> next{0};
    auto worker = [&] {
        while (true) {
            const std::uint64_t c = next.fetch_add(1);
            if (c >= chunks) {
                return;
            }
            std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                              static_cast<std::uint32_t>(c), static_cast<std::uint32_t>(c >> 32)};
            std::mt19937_64 rng(seq);
            const std::uint64_t n = std::min<std::uint64_t>(opts.chunk, trials - c * opts.chunk);
            ChunkTally& t = tallies[c];
            for (std::uint64_t i = 0; i < n; ++i) {
                ++t.histogram[static_cast<std::size_t>(exrec_trial(round, table, opts.gate, rng, t))];
            }
        }
    };
    const int workers = std::max(1, std::min<int>(opts.workers, static_cast<int>(std::max<std::uint64_t>(chunks, 1))));
    if (workers == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w) {
            pool.emplace_back(worker);
        }
        for (auto& th : pool) {
            th.join();
        }
    }
    ExrecResult res;
    ChunkTally total;
    for (const auto& t : tallies) {
        for (std::size_t k = 0; k < kTrialClasses; ++k) {
            total.histogram[k] += t.histogram[k];
        }
        total.starved += t.starved;
        total.block_attempts += t.block_attempts;
        total.pair_attempts += t.pair_attempts;
        total.rounds += t.rounds;
    }
    res.histogram = total.histogram;
    res.starved = total.starved;
    if (total.rounds > 0) {
        res.mean_block_attempts = static_cast<double>(total.block_attempts) / static_cast<double>(total.rounds);
        res.mean_pair_attempts = static_cast<double>(total.pair_attempts) / static_cast<double>(total.rounds);
    }
    auto& r = res.rates;
    r.trials = trials;
    r.located_events = total.histogram[static_cast<std::size_t>(TrialClass::located_failure)];
    r.unlocated_events = total.histogram[static_cast<std::size_t>(TrialClass::logical_x)] +
                         total.histogram[static_cast<std::size_t>(TrialClass::logical_z)] +
                         total.histogram[static_cast<std::size_t>(TrialClass::logical_y)];
    if (trials > 0) {
        r.unlocated = static_cast<double>(r.unlocated_events) / static_cast<double>(trials);
        r.located = static_cast<double>(r.located_events) / static_cast<double>(trials);
    }
    const auto [ul, uh] = wilson_interval(r.unlocated_events, trials);
    const auto [ll, lh] = wilson_interval(r.located_events, trials);
    r.ci_unlocated = 0.5 * (uh - ul);
    r.ci_located = 0.5 * (lh - ll);
    r.unlocated_lo = ul;
    r.unlocated_hi = uh;
    r.located_lo = ll;
    r.located_hi = lh;
    if (trials < 1000) {
        res.warnings.push_back("fewer than 1000 trials: rates are statistically unreliable");
    }
    if (res.starved > 0) {
        res.warnings.push_back(std::to_string(res.starved) + " rounds exhausted ancilla preparation attempts");
    }
    return res;
}

ExrecResult run_exrec(double p, double q, std::uint64_t trials, bool memory_noise, std::uint64_t seed,
                      const ExrecOptions& opts) {
    return run_exrec_table(build_table(NoiseParams::from_rates(p, q), memory_noise), trials, seed, opts);
}

FaultCheckReport exhaustive_single_faults(const CodeSpec& code) {
    const TelecorrectionRound round(code, OpNoiseTable{});
    FaultCheckReport rep;
    auto record = [&](const RoundResult& r, const std::string& label) {
        ++rep.cases;
        const IdealDecode fin = ideal_decode(r.out, round.decoder());
        const TrialClass c = classify(r.lx != fin.lx, r.lz != fin.lz, r.located_failure || fin.located);
        if (c == TrialClass::located_failure) {
            ++rep.located_failures;
            rep.failures.push_back(label + ": located_failure");
        } else if (c != TrialClass::no_error) {
            ++rep.logical_failures;
            rep.failures.push_back(label + ": " + std::string(to_string(c)));
        }
    };
    constexpr std::array<std::pair<bool, bool>, 3> paulis{{{true, false}, {false, true}, {true, true}}};
    constexpr const char* names[3] = {"X", "Z", "Y"};
    for (std::size_t s = 0; s < round.site_count(); ++s) {
        for (int k = 0; k < 3; ++k) {
            record(round.run_with_fault({}, FaultSpec{s, paulis[k].first, paulis[k].second}),
                   "site " + std::to_string(s) + " " + names[k]);
        }
    }
    for (int j = 0; j < 7; ++j) {
        for (int k = 0; k < 3; ++k) {
            BlockFrame in;
            in.x = paulis[k].first ? static_cast<std::uint8_t>(1u << j) : 0;
            in.z = paulis[k].second ? static_cast<std::uint8_t>(1u << j) : 0;
            record(round.run_with_fault(in, std::nullopt), "input " + std::to_string(j) + " " + names[k]);
        }
    }
    return rep;
}

FaultCheckReport exhaustive_double_erasures(const CodeSpec& code) {
    const TelecorrectionRound round(code, OpNoiseTable{});
    FaultCheckReport rep;
    for (int i = 0; i < 7; ++i) {
        for (int j = i + 1; j < 7; ++j) {
            for (int pi = 0; pi < 4; ++pi) {
                for (int pj = 0; pj < 4; ++pj) {
                    BlockFrame in;
                    in.located = static_cast<std::uint8_t>((1u << i) | (1u << j));
                    in.x = static_cast<std::uint8_t>(((pi & 1) << i) | ((pj & 1) << j));
                    in.z = static_cast<std::uint8_t>(((pi >> 1) << i) | ((pj >> 1) << j));
                    const RoundResult r = round.run_with_fault(in, std::nullopt);
                    const IdealDecode fin = ideal_decode(r.out, round.decoder());
                    const TrialClass c =
                        classify(r.lx != fin.lx, r.lz != fin.lz, r.located_failure || fin.located);
                    ++rep.cases;
                    if (c == TrialClass::located_failure) {
                        ++rep.located_failures;
                    } else if (c != TrialClass::no_error) {
                        ++rep.logical_failures;
                    }
                    if (c != TrialClass::no_error) {
                        rep.failures.push_back("erase " + std::to_string(i) + "," + std::to_string(j) + " " +
                                               std::string(to_string(c)));
                    }
                }
            }
        }
    }
    return rep;
}

}  // namespace csqc
