#include "poisonlab/attacks.hpp"

#include "doctest.h"

#include <cmath>
#include <set>

using namespace poisonlab;

namespace {

// medium-quality lineworld data plus a trained FQI victim, shared fixtures
struct LineFixture {
    TransitionDataset data;
    VictimModel model;
    std::vector<SensitivityRecord> records;

    explicit LineFixture(Surface surface = Surface::Reward, Index n = 800) {
        MdpSpec spec = make_lineworld_spec(0.01, 0.95);
        Environment env(spec);
        data = generate_dataset(env, n, Quality::Medium, 57);
        TrainConfig cfg;
        cfg.n_iterations = 30;
        model = train_linear_fqi(data, cfg);
        records = score_dataset(model, data,
                                {surface == Surface::Reward ? Surface::Reward
                                                            : surface,
                                 false});
    }
};

AttackConfig base_config(Strategy s) {
    AttackConfig cfg;
    cfg.strategy = s;
    cfg.surface = Surface::Reward;
    cfg.rho = 0.05;
    cfg.epsilon_local = 0.5;
    cfg.c_total = 0.0;
    cfg.seed = 1234;
    return cfg;
}

}  // namespace

TEST_CASE("local greedy perturbs exactly the top-k td errors by +-epsilon") {
    LineFixture fix;
    AttackConfig cfg = base_config(Strategy::LocalGreedy);
    PoisonedDataset pd = run_attack(fix.data, fix.records, cfg);

    const Index k = static_cast<Index>(std::floor(0.05 * 800));
    CHECK(pd.n_selected == k);
    auto expected = top_k_by_sensitivity(fix.records, k, RankKey::AbsDelta);
    std::set<Index> expected_set(expected.begin(), expected.end());

    // every perturbed record is in the top-k and moves the reward by
    // epsilon in the direction of sign(delta)
    for (const auto& [idx, p] : pd.perturbations) {
        CHECK(expected_set.count(idx) == 1);
        const auto& rec = fix.records[static_cast<std::size_t>(idx)];
        CHECK(std::abs(p.d_r) == doctest::Approx(0.5));
        CHECK(p.d_r * rec.grad_reward > 0.0);
        CHECK(p.d_s.size() == 0);
    }
    CHECK(pd.n_poisoned + pd.n_zero_grad == k);
    CHECK(pd.budgeted_energy == doctest::Approx(static_cast<Scalar>(k) * 0.25));
    CHECK(pd.delivered_energy ==
          doctest::Approx(static_cast<Scalar>(pd.n_poisoned) * 0.25));
}

TEST_CASE("global allocation matches the closed form record by record") {
    LineFixture fix;
    AttackConfig cfg = base_config(Strategy::GlobalAllocation);
    cfg.c_total = 2.0;
    PoisonedDataset pd = run_attack(fix.data, fix.records, cfg);

    Vector abs(fix.data.size());
    for (Index i = 0; i < fix.data.size(); ++i)
        abs[i] = fix.records[static_cast<std::size_t>(i)].abs_delta;
    const Scalar norm = abs.norm();

    CHECK(pd.n_selected == fix.data.size());
    for (const auto& [idx, p] : pd.perturbations) {
        const Scalar expected_eps = std::sqrt(2.0) * abs[idx] / norm;
        CHECK(std::abs(p.d_r) == doctest::Approx(expected_eps).epsilon(1e-9));
    }
    // reward-surface perturbations cannot clip: full budget delivered
    CHECK(pd.delivered_energy == doctest::Approx(2.0).epsilon(1e-9));
    CHECK(pd.energy_shortfall == doctest::Approx(0.0));
    CHECK(!pd.degenerate);
}

TEST_CASE("budget-matched strategies rank by achieved objective") {
    // objective = sum |delta_i| |eta_i| with the same total energy
    LineFixture fix;
    const Scalar rho = 0.05, eps = 0.5;
    const Index k = static_cast<Index>(std::floor(rho * 800));
    const Scalar c_total = static_cast<Scalar>(k) * eps * eps;

    auto objective = [&](const PoisonedDataset& pd) {
        Scalar total = 0.0;
        for (const auto& [idx, p] : pd.perturbations)
            total += fix.records[static_cast<std::size_t>(idx)].abs_delta *
                     std::abs(p.d_r);
        return total;
    };

    AttackConfig cfg = base_config(Strategy::LocalGreedy);
    const Scalar obj_lg = objective(run_attack(fix.data, fix.records, cfg));
    cfg.strategy = Strategy::RandomSubset;
    const Scalar obj_rs = objective(run_attack(fix.data, fix.records, cfg));
    cfg.strategy = Strategy::GlobalAllocation;
    cfg.c_total = c_total;
    const Scalar obj_gl = objective(run_attack(fix.data, fix.records, cfg));

    CHECK(obj_gl >= obj_lg - 1e-9);
    CHECK(obj_lg >= obj_rs - 1e-9);
    CHECK(obj_gl > 0.0);
}

TEST_CASE("global allocation concentrates no more than rho n records above the local scale") {
    LineFixture fix;
    const Scalar rho = 0.05, eps = 0.5;
    const Index k = static_cast<Index>(std::floor(rho * 800));
    AttackConfig cfg = base_config(Strategy::GlobalAllocation);
    cfg.c_total = static_cast<Scalar>(k) * eps * eps;
    PoisonedDataset pd = run_attack(fix.data, fix.records, cfg);

    // energy conservation caps how many records can exceed the flat scale
    Index above = 0;
    for (const auto& [idx, p] : pd.perturbations)
        if (std::abs(p.d_r) > eps) ++above;
    CHECK(above <= k);
}

TEST_CASE("random strategies are seed-deterministic with distinct draws") {
    LineFixture fix;
    AttackConfig cfg = base_config(Strategy::RandomNoise);
    PoisonedDataset a = run_attack(fix.data, fix.records, cfg);
    PoisonedDataset b = run_attack(fix.data, fix.records, cfg);
    REQUIRE(a.perturbations.size() == b.perturbations.size());
    auto ita = a.perturbations.begin();
    auto itb = b.perturbations.begin();
    for (; ita != a.perturbations.end(); ++ita, ++itb) {
        CHECK(ita->first == itb->first);
        CHECK(ita->second.d_r == itb->second.d_r);
    }

    cfg.seed = 4321;
    PoisonedDataset c = run_attack(fix.data, fix.records, cfg);
    bool differs = a.perturbations.size() != c.perturbations.size();
    if (!differs) {
        auto it1 = a.perturbations.begin();
        auto it2 = c.perturbations.begin();
        for (; it1 != a.perturbations.end(); ++it1, ++it2)
            differs |= (it1->first != it2->first) ||
                       (it1->second.d_r != it2->second.d_r);
    }
    CHECK(differs);
}

TEST_CASE("random noise spends epsilon^2 per selected record") {
    LineFixture fix;
    AttackConfig cfg = base_config(Strategy::RandomNoise);
    cfg.rho = 1.0;  // full support
    PoisonedDataset pd = run_attack(fix.data, fix.records, cfg);
    CHECK(pd.n_selected == 800);
    CHECK(pd.n_poisoned == 800);
    for (const auto& [idx, p] : pd.perturbations)
        CHECK(std::abs(p.d_r) == doctest::Approx(0.5));
    CHECK(pd.budgeted_energy == doctest::Approx(800 * 0.25));
    CHECK(pd.delivered_energy == doctest::Approx(800 * 0.25).epsilon(1e-9));
}

TEST_CASE("state-surface perturbations respect the box with energy accounting") {
    LineFixture fix(Surface::State);
    AttackConfig cfg = base_config(Strategy::LocalGreedy);
    cfg.surface = Surface::State;
    cfg.rho = 0.25;
    cfg.epsilon_local = 0.2;
    PoisonedDataset pd = run_attack(fix.data, fix.records, cfg);

    Scalar delivered = 0.0;
    for (const auto& [idx, p] : pd.perturbations) {
        const Transition& t = fix.data.transitions[static_cast<std::size_t>(idx)];
        CHECK(p.d_r == 0.0);
        REQUIRE(p.d_s.size() == 1);
        const Scalar moved = t.s[0] + p.d_s[0];
        CHECK(moved >= 0.0);
        CHECK(moved <= 1.0);
        CHECK(std::abs(p.d_s[0]) <= 0.2 + 1e-12);
        delivered += p.energy();
    }
    CHECK(pd.delivered_energy == doctest::Approx(delivered));
    CHECK(pd.delivered_energy <= pd.budgeted_energy + 1e-12);
    CHECK(pd.energy_shortfall ==
          doctest::Approx(pd.budgeted_energy - pd.delivered_energy));
}

TEST_CASE("apply adds perturbations and flags exactly the changed records") {
    LineFixture fix;
    AttackConfig cfg = base_config(Strategy::LocalGreedy);
    PoisonedDataset pd = run_attack(fix.data, fix.records, cfg);
    TransitionDataset poisoned = apply(fix.data, pd);

    CHECK(poisoned.size() == fix.data.size());
    for (Index i = 0; i < poisoned.size(); ++i) {
        const Transition& before = fix.data.transitions[static_cast<std::size_t>(i)];
        const Transition& after = poisoned.transitions[static_cast<std::size_t>(i)];
        const auto it = pd.perturbations.find(i);
        if (it != pd.perturbations.end()) {
            CHECK(after.poisoned);
            CHECK(after.r == before.r + it->second.d_r);
        } else {
            CHECK(!after.poisoned);
            CHECK(after.r == before.r);
        }
        CHECK(after.s == before.s);
        CHECK(!before.poisoned);  // the base dataset is untouched
    }
}

TEST_CASE("apply refuses a mismatched base dataset") {
    LineFixture fix;
    AttackConfig cfg = base_config(Strategy::LocalGreedy);
    PoisonedDataset pd = run_attack(fix.data, fix.records, cfg);

    TransitionDataset other = fix.data;
    other.generation_seed += 1;
    CHECK_THROWS_AS(apply(other, pd), DataError);
    other = fix.data;
    other.behavior_tag = "expert";
    CHECK_THROWS_AS(apply(other, pd), DataError);
    other = fix.data;
    other.transitions.pop_back();
    CHECK_THROWS_AS(apply(other, pd), DataError);
}

TEST_CASE("degenerate scores produce a no-op attack") {
    LineFixture fix;
    std::vector<SensitivityRecord> zeros = fix.records;
    for (auto& r : zeros) {
        r.delta = 0.0;
        r.abs_delta = 0.0;
        r.grad_reward = 0.0;
        r.grad_norm = 0.0;
    }
    AttackConfig cfg = base_config(Strategy::GlobalAllocation);
    cfg.c_total = 1.0;
    PoisonedDataset pd = run_attack(fix.data, zeros, cfg);
    CHECK(pd.degenerate);
    CHECK(pd.perturbations.empty());
    CHECK(pd.delivered_energy == 0.0);

    cfg = base_config(Strategy::LocalGreedy);
    pd = run_attack(fix.data, zeros, cfg);
    CHECK(pd.degenerate);
    CHECK(pd.n_zero_grad == pd.n_selected);
}

TEST_CASE("attack configuration is validated") {
    LineFixture fix;
    AttackConfig cfg = base_config(Strategy::LocalGreedy);
    cfg.rho = 0.0;
    CHECK_THROWS_AS(run_attack(fix.data, fix.records, cfg), ConfigError);
    cfg = base_config(Strategy::LocalGreedy);
    cfg.rho = 1.5;
    CHECK_THROWS_AS(run_attack(fix.data, fix.records, cfg), ConfigError);
    cfg = base_config(Strategy::LocalGreedy);
    cfg.epsilon_local = 0.0;
    CHECK_THROWS_AS(run_attack(fix.data, fix.records, cfg), ConfigError);
    cfg = base_config(Strategy::GlobalAllocation);
    cfg.c_total = 0.0;
    CHECK_THROWS_AS(run_attack(fix.data, fix.records, cfg), ConfigError);
    cfg = base_config(Strategy::LocalGreedy);
    cfg.rescore_rounds = 6;
    CHECK_THROWS_AS(run_attack(fix.data, fix.records, cfg), ConfigError);
    cfg = base_config(Strategy::LocalGreedy);
    cfg.rho = 1e-5;  // floor(rho n) == 0
    CHECK_THROWS_AS(run_attack(fix.data, fix.records, cfg), ConfigError);

    // records scored on the wrong surface
    cfg = base_config(Strategy::LocalGreedy);
    cfg.surface = Surface::Both;
    CHECK_THROWS_AS(run_attack(fix.data, fix.records, cfg), DataError);

    // records out of order
    auto shuffled = fix.records;
    std::swap(shuffled[0], shuffled[1]);
    cfg = base_config(Strategy::LocalGreedy);
    CHECK_THROWS_AS(run_attack(fix.data, shuffled, cfg), DataError);
}

TEST_CASE("top-rho support concentrates the whole global budget") {
    LineFixture fix;
    AttackConfig cfg = base_config(Strategy::GlobalAllocation);
    cfg.c_total = 1.0;
    cfg.support = SupportMode::TopRho;
    cfg.rho = 0.02;
    PoisonedDataset pd = run_attack(fix.data, fix.records, cfg);

    const Index k = static_cast<Index>(std::floor(0.02 * 800));
    CHECK(pd.n_selected == k);
    CHECK(static_cast<Index>(pd.perturbations.size()) <= k);
    CHECK(pd.delivered_energy == doctest::Approx(1.0).epsilon(1e-9));
    auto top = top_k_by_sensitivity(fix.records, k, RankKey::AbsDelta);
    std::set<Index> allowed(top.begin(), top.end());
    for (const auto& [idx, p] : pd.perturbations) CHECK(allowed.count(idx) == 1);
}

TEST_CASE("single-round rescoring equals the one-shot attack") {
    LineFixture fix;
    AttackConfig cfg = base_config(Strategy::GlobalAllocation);
    cfg.c_total = 1.5;
    PoisonedDataset direct = run_attack(fix.data, fix.records, cfg);
    PoisonedDataset via = run_attack_with_rescoring(fix.data, fix.model, cfg, {});

    REQUIRE(direct.perturbations.size() == via.perturbations.size());
    auto it1 = direct.perturbations.begin();
    auto it2 = via.perturbations.begin();
    for (; it1 != direct.perturbations.end(); ++it1, ++it2) {
        CHECK(it1->first == it2->first);
        CHECK(it1->second.d_r == it2->second.d_r);
    }
    CHECK(direct.budgeted_energy == via.budgeted_energy);
}

TEST_CASE("multi-round rescoring splits the budget and diffs the base") {
    LineFixture fix;
    AttackConfig cfg = base_config(Strategy::GlobalAllocation);
    cfg.c_total = 1.5;
    cfg.rescore_rounds = 3;

    TrainConfig tc;
    tc.n_iterations = 10;
    int retrains = 0;
    auto retrain = [&](const TransitionDataset& d) {
        ++retrains;
        return train_linear_fqi(d, tc);
    };
    PoisonedDataset pd = run_attack_with_rescoring(fix.data, fix.model, cfg, retrain);

    CHECK(retrains == 2);  // between rounds only
    CHECK(pd.budgeted_energy == doctest::Approx(1.5).epsilon(1e-9));
    CHECK(pd.delivered_energy > 0.0);
    // applying the diff reconstructs a dataset consistent with the records
    TransitionDataset poisoned = apply(fix.data, pd);
    Scalar energy = 0.0;
    for (Index i = 0; i < poisoned.size(); ++i) {
        const Scalar dr = poisoned.transitions[static_cast<std::size_t>(i)].r -
                          fix.data.transitions[static_cast<std::size_t>(i)].r;
        energy += dr * dr;
    }
    CHECK(energy == doctest::Approx(pd.delivered_energy).epsilon(1e-9));

    CHECK_THROWS_AS(run_attack_with_rescoring(fix.data, fix.model, cfg, {}),
                    ArgumentError);
}
