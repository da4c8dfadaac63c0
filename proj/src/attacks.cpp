#include "poisonlab/attacks.hpp"

#include "poisonlab/rng.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace poisonlab {

std::string to_string(Strategy s) {
    switch (s) {
        case Strategy::RandomNoise: return "random_noise";
        case Strategy::RandomSubset: return "random_subset";
        case Strategy::LocalGreedy: return "local_greedy";
        case Strategy::GlobalAllocation: return "global_allocation";
    }
    throw ArgumentError("unreachable strategy value");
}

Strategy strategy_from_string(const std::string& s) {
    if (s == "random_noise") return Strategy::RandomNoise;
    if (s == "random_subset") return Strategy::RandomSubset;
    if (s == "local_greedy") return Strategy::LocalGreedy;
    if (s == "global_allocation") return Strategy::GlobalAllocation;
    throw ConfigError("unknown attack strategy: '" + s + "'");
}

std::string to_string(SupportMode m) {
    switch (m) {
        case SupportMode::All: return "all";
        case SupportMode::TopRho: return "top_rho";
    }
    throw ArgumentError("unreachable support mode");
}

SupportMode support_mode_from_string(const std::string& s) {
    if (s == "all") return SupportMode::All;
    if (s == "top_rho") return SupportMode::TopRho;
    throw ConfigError("unknown support mode: '" + s + "'");
}

DatasetFingerprint fingerprint(const TransitionDataset& data) {
    return DatasetFingerprint{data.spec.kind, data.generation_seed, data.size(),
                              data.behavior_tag};
}

namespace {

constexpr std::uint64_t kStreamSelection = 0x21;
constexpr std::uint64_t kStreamNoise = 0x22;
constexpr std::uint64_t kStreamRescore = 0x23;

struct SurfaceLayout {
    bool reward = false;
    bool state = false;
    bool next = false;
    int sd = 0;
    int total = 0;
};

SurfaceLayout layout_of(const AttackConfig& cfg, const MdpSpec& spec) {
    SurfaceLayout lay;
    lay.reward = cfg.surface != Surface::State;
    lay.state = cfg.surface != Surface::Reward;
    lay.next = lay.state && cfg.include_next_state;
    lay.sd = spec.state_dim;
    lay.total = (lay.reward ? 1 : 0) + (lay.state ? lay.sd : 0) +
                (lay.next ? lay.sd : 0);
    return lay;
}

void validate_config(const AttackConfig& cfg, Index n) {
    if (!(cfg.rho > 0.0 && cfg.rho <= 1.0))
        throw ConfigError("AttackConfig.rho must lie in (0, 1]");
    if (cfg.rescore_rounds < 1 || cfg.rescore_rounds > 5)
        throw ConfigError("AttackConfig.rescore_rounds must lie in [1, 5]");
    const bool local = cfg.strategy != Strategy::GlobalAllocation;
    if (local && !(cfg.epsilon_local > 0.0))
        throw ConfigError("AttackConfig.epsilon_local must be > 0 for " +
                          to_string(cfg.strategy));
    if (!local && !(cfg.c_total > 0.0))
        throw ConfigError("AttackConfig.c_total must be > 0 for global_allocation");
    if (n < 1) throw DataError("attack on an empty dataset");
}

Index support_size(const AttackConfig& cfg, Index n) {
    const Index k = static_cast<Index>(std::floor(cfg.rho * static_cast<Scalar>(n)));
    if (k < 1)
        throw ConfigError("AttackConfig.rho selects no records at this dataset size");
    return std::min(k, n);
}

void validate_records(const std::vector<SensitivityRecord>& records,
                      const TransitionDataset& data, const SurfaceLayout& lay) {
    if (static_cast<Index>(records.size()) != data.size())
        throw DataError("sensitivity records do not cover the dataset");
    for (Index i = 0; i < data.size(); ++i)
        if (records[static_cast<std::size_t>(i)].idx != i)
            throw DataError("sensitivity records are not in dataset order");
    if (lay.state) {
        const int need = lay.sd * (lay.next ? 2 : 1);
        for (const auto& rec : records) {
            if (rec.grad_state.size() < need)
                throw DataError(
                    "sensitivity records lack state gradients for this surface");
        }
    }
}

/// Direction of steepest |delta| increase over the configured surface.
Vector direction_of(const SensitivityRecord& rec, const SurfaceLayout& lay) {
    Vector g = Vector::Zero(lay.total);
    int off = 0;
    if (lay.reward) g[off++] = rec.grad_reward;
    if (lay.state) {
        g.segment(off, lay.sd) = rec.grad_state.head(lay.sd);
        off += lay.sd;
    }
    if (lay.next) g.segment(off, lay.sd) = rec.grad_state.tail(lay.sd);
    return g;
}

struct Accumulator {
    PoisonedDataset out;
    Vector lo, hi;
    SurfaceLayout lay;

    /// Clip the intended vector against the state box and record what lands.
    void deliver(const Transition& t, const Vector& eta) {
        PerturbationRecord p;
        int off = 0;
        if (lay.reward) p.d_r = eta[off++];
        if (lay.state) {
            const Vector desired = eta.segment(off, lay.sd);
            p.d_s = (t.s + desired).cwiseMax(lo).cwiseMin(hi) - t.s;
            off += lay.sd;
        }
        if (lay.next) {
            const Vector desired = eta.segment(off, lay.sd);
            p.d_s_next = (t.s_next + desired).cwiseMax(lo).cwiseMin(hi) - t.s_next;
        }
        const Scalar energy = p.energy();
        if (energy > 0.0) {
            out.perturbations.emplace(t.idx, std::move(p));
            ++out.n_poisoned;
            out.delivered_energy += energy;
        }
    }

    void finish() {
        out.energy_shortfall =
            std::max(Scalar{0.0}, out.budgeted_energy - out.delivered_energy);
    }
};

Accumulator make_accumulator(const TransitionDataset& data, const AttackConfig& cfg) {
    Accumulator acc;
    acc.out.base = fingerprint(data);
    acc.out.config = cfg;
    acc.lay = layout_of(cfg, data.spec);
    Environment(data.spec).state_bounds(acc.lo, acc.hi);
    return acc;
}

PoisonedDataset attack_random_noise(const TransitionDataset& data,
                                    const AttackConfig& cfg) {
    Accumulator acc = make_accumulator(data, cfg);
    const Index k = support_size(cfg, data.size());
    acc.out.n_selected = k;

    Rng select(derive_seed(cfg.seed, kStreamSelection));
    std::vector<Index> chosen = select.sample_without_replacement(data.size(), k);
    std::sort(chosen.begin(), chosen.end());

    // noise drawn in ascending idx order so the stream is selection-stable
    Rng noise(derive_seed(cfg.seed, kStreamNoise));
    for (Index idx : chosen) {
        Vector direction(acc.lay.total);
        Scalar norm = 0.0;
        do {
            for (int d = 0; d < acc.lay.total; ++d) direction[d] = noise.normal();
            norm = direction.norm();
        } while (norm == 0.0);
        const Vector eta = (cfg.epsilon_local / norm) * direction;
        acc.out.budgeted_energy += cfg.epsilon_local * cfg.epsilon_local;
        acc.deliver(data.transitions[static_cast<std::size_t>(idx)], eta);
    }
    acc.finish();
    return acc.out;
}

PoisonedDataset attack_directed_local(const TransitionDataset& data,
                                      const std::vector<SensitivityRecord>& records,
                                      const AttackConfig& cfg) {
    Accumulator acc = make_accumulator(data, cfg);
    validate_records(records, data, acc.lay);
    const Index k = support_size(cfg, data.size());
    acc.out.n_selected = k;

    std::vector<Index> chosen;
    if (cfg.strategy == Strategy::RandomSubset) {
        Rng select(derive_seed(cfg.seed, kStreamSelection));
        chosen = select.sample_without_replacement(data.size(), k);
        std::sort(chosen.begin(), chosen.end());
    } else {
        chosen = top_k_by_sensitivity(records, k, RankKey::AbsDelta);
    }

    bool any_signal = false;
    for (Index idx : chosen) {
        const auto& rec = records[static_cast<std::size_t>(idx)];
        acc.out.budgeted_energy += cfg.epsilon_local * cfg.epsilon_local;
        const Vector g = direction_of(rec, acc.lay);
        const Scalar gnorm = g.norm();
        if (gnorm == 0.0) {
            ++acc.out.n_zero_grad;
            continue;
        }
        any_signal = true;
        acc.deliver(data.transitions[static_cast<std::size_t>(idx)],
                    (cfg.epsilon_local / gnorm) * g);
    }
    acc.out.degenerate = !any_signal;
    acc.finish();
    return acc.out;
}

PoisonedDataset attack_global(const TransitionDataset& data,
                              const std::vector<SensitivityRecord>& records,
                              const AttackConfig& cfg) {
    Accumulator acc = make_accumulator(data, cfg);
    validate_records(records, data, acc.lay);

    std::vector<Index> support;
    if (cfg.support == SupportMode::TopRho) {
        support = top_k_by_sensitivity(records, support_size(cfg, data.size()),
                                       RankKey::AbsDelta);
    } else {
        support.resize(static_cast<std::size_t>(data.size()));
        for (Index i = 0; i < data.size(); ++i)
            support[static_cast<std::size_t>(i)] = i;
    }
    acc.out.n_selected = static_cast<Index>(support.size());

    Vector abs_deltas(static_cast<Index>(support.size()));
    for (std::size_t i = 0; i < support.size(); ++i)
        abs_deltas[static_cast<Index>(i)] =
            records[static_cast<std::size_t>(support[i])].abs_delta;

    const AllocationPlan plan = global_allocate(abs_deltas, cfg.c_total);
    if (plan.degenerate) {
        acc.out.degenerate = true;
        acc.finish();
        return acc.out;
    }
    acc.out.budgeted_energy = plan.epsilons.squaredNorm();

    for (std::size_t i = 0; i < support.size(); ++i) {
        const Scalar eps = plan.epsilons[static_cast<Index>(i)];
        if (eps == 0.0) continue;
        const auto& rec = records[static_cast<std::size_t>(support[i])];
        const Vector g = direction_of(rec, acc.lay);
        const Scalar gnorm = g.norm();
        if (gnorm == 0.0) {
            // a nonzero delta whose gradient vanishes on this surface
            ++acc.out.n_zero_grad;
            continue;
        }
        acc.deliver(data.transitions[static_cast<std::size_t>(support[i])],
                    (eps / gnorm) * g);
    }
    acc.finish();
    return acc.out;
}

}  // namespace

PoisonedDataset run_attack(const TransitionDataset& data,
                           const std::vector<SensitivityRecord>& records,
                           const AttackConfig& cfg) {
    validate_config(cfg, data.size());
    switch (cfg.strategy) {
        case Strategy::RandomNoise:
            return attack_random_noise(data, cfg);
        case Strategy::RandomSubset:
        case Strategy::LocalGreedy:
            return attack_directed_local(data, records, cfg);
        case Strategy::GlobalAllocation:
            return attack_global(data, records, cfg);
    }
    throw ArgumentError("unreachable strategy value");
}

TransitionDataset apply(const TransitionDataset& data, const PoisonedDataset& poison) {
    const DatasetFingerprint fp = fingerprint(data);
    const DatasetFingerprint& base = poison.base;
    if (fp.kind != base.kind || fp.generation_seed != base.generation_seed ||
        fp.n != base.n || fp.behavior_tag != base.behavior_tag)
        throw DataError("perturbations were computed for a different dataset");

    TransitionDataset out = data;
    for (const auto& [idx, p] : poison.perturbations) {
        if (idx < 0 || idx >= out.size())
            throw DataError("perturbation idx " + std::to_string(idx) +
                            " outside the dataset");
        Transition& t = out.transitions[static_cast<std::size_t>(idx)];
        t.r += p.d_r;
        if (p.d_s.size() > 0) t.s += p.d_s;
        if (p.d_s_next.size() > 0) t.s_next += p.d_s_next;
        t.poisoned = true;
    }
    return out;
}

PoisonedDataset run_attack_with_rescoring(const TransitionDataset& data,
                                          const VictimModel& victim,
                                          const AttackConfig& cfg,
                                          const RetrainFn& retrain) {
    validate_config(cfg, data.size());
    const ScoreOptions opts{cfg.surface, cfg.include_next_state};
    if (cfg.rescore_rounds == 1)
        return run_attack(data, score_dataset(victim, data, opts), cfg);
    if (!retrain)
        throw ArgumentError("rescore_rounds > 1 requires a retrain callback");

    const int rounds = cfg.rescore_rounds;
    AttackConfig round_cfg = cfg;
    round_cfg.rescore_rounds = 1;
    // even energy split across rounds
    round_cfg.epsilon_local = cfg.epsilon_local / std::sqrt(static_cast<Scalar>(rounds));
    round_cfg.c_total = cfg.c_total / static_cast<Scalar>(rounds);

    TransitionDataset current = data;
    VictimModel model = victim;
    PoisonedDataset out;
    out.base = fingerprint(data);
    out.config = cfg;
    std::set<Index> selected_union;

    for (int round = 0; round < rounds; ++round) {
        round_cfg.seed = derive_seed(cfg.seed, kStreamRescore,
                                     static_cast<std::uint64_t>(round));
        const auto records = score_dataset(model, current, opts);
        PoisonedDataset pd = run_attack(current, records, round_cfg);
        out.budgeted_energy += pd.budgeted_energy;
        out.n_zero_grad += pd.n_zero_grad;
        for (const auto& [idx, p] : pd.perturbations) selected_union.insert(idx);
        current = apply(current, pd);
        if (round + 1 < rounds) model = retrain(current);
    }

    // the final perturbation set is the diff against the base dataset
    for (Index i = 0; i < data.size(); ++i) {
        const Transition& base_t = data.transitions[static_cast<std::size_t>(i)];
        const Transition& cur_t = current.transitions[static_cast<std::size_t>(i)];
        PerturbationRecord p;
        p.d_r = cur_t.r - base_t.r;
        if (cur_t.s != base_t.s) p.d_s = cur_t.s - base_t.s;
        if (cur_t.s_next != base_t.s_next) p.d_s_next = cur_t.s_next - base_t.s_next;
        if (p.energy() > 0.0) {
            out.delivered_energy += p.energy();
            out.perturbations.emplace(i, std::move(p));
            ++out.n_poisoned;
        }
    }
    out.n_selected = static_cast<Index>(selected_union.size());
    out.energy_shortfall =
        std::max(Scalar{0.0}, out.budgeted_energy - out.delivered_energy);
    out.degenerate = out.perturbations.empty();
    return out;
}

}  // namespace poisonlab
