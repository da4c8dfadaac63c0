#include "poisonlab/io.hpp"

#include "doctest.h"

#include <filesystem>

using namespace poisonlab;

namespace {

// exactly representable doubles so the expected serialization can be
// written out by hand
TransitionDataset tiny_dataset() {
    TransitionDataset data;
    data.spec = make_lineworld_spec();
    data.spec.gamma = 0.5;
    data.spec.noise_std = 0.25;
    data.generation_seed = 5;
    data.behavior_tag = "manual";
    Transition t;
    t.idx = 0;
    t.s = Vector::Constant(1, 0.25);
    t.a = 1;
    t.r = 0.5;
    t.s_next = Vector::Constant(1, 0.125);
    t.terminal = false;
    t.poisoned = true;
    data.transitions.push_back(t);
    return data;
}

TransitionDataset medium_line_dataset(Index n = 300, std::uint64_t seed = 57) {
    MdpSpec spec = make_lineworld_spec(0.01, 0.95);
    Environment env(spec);
    return generate_dataset(env, n, Quality::Medium, seed);
}

struct TempDir {
    std::filesystem::path path;
    TempDir() : path(std::filesystem::temp_directory_path() / "poisonlab_io_test") {
        std::filesystem::remove_all(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

bool bitwise_equal(const TransitionDataset& a, const TransitionDataset& b) {
    if (a.size() != b.size()) return false;
    if (a.behavior_tag != b.behavior_tag) return false;
    if (a.generation_seed != b.generation_seed) return false;
    if (a.spec.kind != b.spec.kind) return false;
    if (a.spec.gamma != b.spec.gamma) return false;
    if (a.spec.noise_std != b.spec.noise_std) return false;
    if (a.spec.hazards != b.spec.hazards) return false;
    for (Index i = 0; i < a.size(); ++i) {
        const Transition& x = a.transitions[static_cast<std::size_t>(i)];
        const Transition& y = b.transitions[static_cast<std::size_t>(i)];
        if (x.idx != y.idx || x.a != y.a || x.terminal != y.terminal ||
            x.poisoned != y.poisoned)
            return false;
        if (x.r != y.r) return false;  // bitwise
        if (x.s != y.s || x.s_next != y.s_next) return false;
    }
    return true;
}

}  // namespace

TEST_CASE("number formatting survives the round trip and trims cleanly") {
    CHECK(format_number(0.5) == "0.5");
    CHECK(format_number(1.0) == "1");
    CHECK(format_number(-0.01) == "-0.01");
    // 0.95 is not representable: the 17-digit form is exact
    CHECK(format_number(0.95) == "0.94999999999999996");
    const Scalar awkward = 0.1 + 0.2;
    CHECK(std::stod(format_number(awkward)) == awkward);
}

TEST_CASE("tiny dataset serializes to the exact expected bytes") {
    const std::string text = dataset_to_ndjson(tiny_dataset());
    const std::string expected =
        "{\"kind\":\"lineworld\",\"state_dim\":1,\"n_actions\":2,"
        "\"gamma\":0.5,\"horizon\":100,\"goal_reward\":1,\"step_cost\":-0.01,"
        "\"hazard_cost\":-1,\"noise_std\":0.25,\"seed\":0,\"grid_size\":0,"
        "\"hazards\":[],\"generation_seed\":5,\"behavior_tag\":\"manual\"}\n"
        "{\"idx\":0,\"s\":[0.25],\"a\":1,\"r\":0.5,\"s_next\":[0.125],"
        "\"terminal\":false,\"poisoned\":true}\n";
    CHECK(text == expected);
    CHECK(bitwise_equal(dataset_from_ndjson(text), tiny_dataset()));
}

TEST_CASE("generated lineworld dataset round-trips bit-exactly") {
    const TransitionDataset data = medium_line_dataset();
    const std::string text = dataset_to_ndjson(data);
    const TransitionDataset loaded = dataset_from_ndjson(text);
    CHECK(bitwise_equal(loaded, data));
    // and the re-serialization is byte-identical
    CHECK(dataset_to_ndjson(loaded) == text);
}

TEST_CASE("gridworld dataset with hazards round-trips") {
    MdpSpec spec = make_gridworld_spec(5, 0.95, 60);
    spec.hazards = {{1, 1}, {3, 3}};
    Environment env(spec);
    const TransitionDataset data = generate_dataset(env, 200, Quality::Medium, 3);
    const TransitionDataset loaded = dataset_from_ndjson(dataset_to_ndjson(data));
    CHECK(bitwise_equal(loaded, data));
    CHECK(loaded.spec.hazards == spec.hazards);
}

TEST_CASE("dataset files save and load through nested directories") {
    TempDir tmp;
    const TransitionDataset data = medium_line_dataset(100);
    const std::string path = tmp.file("nested/dir/data.ndjson");
    save_dataset(data, path);
    CHECK(bitwise_equal(load_dataset(path), data));
}

TEST_CASE("malformed dataset input is rejected with the line number") {
    CHECK_THROWS_AS(dataset_from_ndjson(""), DataError);

    const std::string good = dataset_to_ndjson(tiny_dataset());
    const std::string truncated = good.substr(0, good.size() - 5);
    CHECK_THROWS_WITH_AS(dataset_from_ndjson(truncated),
                         doctest::Contains("line 2"), DataError);

    // a record missing the reward key
    std::string missing = good;
    const auto pos = missing.find("\"r\":0.5,");
    missing.erase(pos, 8);
    CHECK_THROWS_AS(dataset_from_ndjson(missing), DataError);
}

TEST_CASE("reading a nonexistent file is a data error") {
    CHECK_THROWS_AS(read_text_file("/nonexistent/poisonlab/file"), DataError);
}

TEST_CASE("fqi model checkpoint round-trips bit-exactly") {
    const TransitionDataset data = medium_line_dataset();
    TrainConfig cfg;
    cfg.n_iterations = 20;
    const VictimModel model = train_linear_fqi(data, cfg);

    const std::string text = model_to_ndjson(model);
    const VictimModel loaded = model_from_ndjson(text);
    CHECK(loaded.algo == model.algo);
    CHECK(loaded.gamma == model.gamma);
    CHECK(loaded.theta == model.theta);  // bitwise
    CHECK(loaded.feature_map.kind == model.feature_map.kind);
    CHECK(loaded.feature_map.centers == model.feature_map.centers);
    CHECK(loaded.feature_map.bandwidth == model.feature_map.bandwidth);
    CHECK(loaded.train_log.empty());

    const Vector probe = Vector::Constant(1, 0.37);
    CHECK(q_value(loaded, probe, 1) == q_value(model, probe, 1));
    CHECK(model_to_ndjson(loaded) == text);
}

TEST_CASE("tabular model checkpoint preserves the binning") {
    MdpSpec spec = make_gridworld_spec();
    Environment env(spec);
    const TransitionDataset data = generate_dataset(env, 500, Quality::Medium, 11);
    TrainConfig cfg;
    cfg.n_iterations = 10;
    const VictimModel model = train_tabular_q(data, cfg);

    const VictimModel loaded = model_from_ndjson(model_to_ndjson(model));
    CHECK(loaded.algo == AlgoTag::TabQ);
    CHECK(loaded.theta == model.theta);
    CHECK(loaded.feature_map.bins_per_dim == model.feature_map.bins_per_dim);
    CHECK(loaded.feature_map.bin_lo == model.feature_map.bin_lo);
    CHECK(loaded.feature_map.bin_hi == model.feature_map.bin_hi);
    const Vector probe = (Vector(2) << 2.0, 3.0).finished();
    CHECK(q_values(loaded, probe) == q_values(model, probe));
}

TEST_CASE("model parsing rejects malformed checkpoints") {
    const TransitionDataset data = medium_line_dataset(100);
    TrainConfig cfg;
    cfg.n_iterations = 5;
    const std::string text = model_to_ndjson(train_linear_fqi(data, cfg));

    CHECK_THROWS_AS(model_from_ndjson(""), DataError);
    CHECK_THROWS_AS(model_from_ndjson(text.substr(0, text.find('\n') + 1)),
                    DataError);
    // theta length disagreeing with the declared feature dim
    std::string clipped = text;
    const auto open = clipped.find("{\"theta\":[");
    const auto comma = clipped.find(',', open + 10);
    clipped = clipped.substr(0, comma) + "]}\n";
    CHECK_THROWS_AS(model_from_ndjson(clipped), DataError);
}

TEST_CASE("poison artifact round-trips and re-applies identically") {
    const TransitionDataset data = medium_line_dataset();
    TrainConfig tc;
    tc.n_iterations = 20;
    const VictimModel victim = train_linear_fqi(data, tc);
    const auto records = score_dataset(victim, data, {Surface::Both, false});

    AttackConfig cfg;
    cfg.strategy = Strategy::GlobalAllocation;
    cfg.surface = Surface::Both;
    cfg.c_total = 0.5;
    cfg.seed = 77;
    const PoisonedDataset poison = run_attack(data, records, cfg);

    const std::string text = poison_to_ndjson(poison);
    const PoisonedDataset loaded = poison_from_ndjson(text);
    CHECK(loaded.base == poison.base);
    CHECK(loaded.config.strategy == cfg.strategy);
    CHECK(loaded.config.surface == cfg.surface);
    CHECK(loaded.config.c_total == cfg.c_total);
    CHECK(loaded.config.seed == cfg.seed);
    CHECK(loaded.budgeted_energy == poison.budgeted_energy);
    CHECK(loaded.delivered_energy == poison.delivered_energy);
    CHECK(loaded.energy_shortfall == poison.energy_shortfall);
    CHECK(loaded.n_selected == poison.n_selected);
    CHECK(loaded.n_poisoned == poison.n_poisoned);
    REQUIRE(loaded.perturbations.size() == poison.perturbations.size());
    for (const auto& [idx, p] : poison.perturbations) {
        const auto it = loaded.perturbations.find(idx);
        REQUIRE(it != loaded.perturbations.end());
        CHECK(it->second.d_r == p.d_r);  // bitwise
        CHECK(it->second.d_s == p.d_s);
        CHECK(it->second.d_s_next == p.d_s_next);
    }
    CHECK(bitwise_equal(apply(data, loaded), apply(data, poison)));
    CHECK(poison_to_ndjson(loaded) == text);

    TempDir tmp;
    save_poison(poison, tmp.file("poison.ndjson"));
    CHECK(load_poison(tmp.file("poison.ndjson")).delivered_energy ==
          poison.delivered_energy);
}

TEST_CASE("poison parsing rejects duplicates and garbage") {
    CHECK_THROWS_AS(poison_from_ndjson(""), DataError);

    const TransitionDataset data = medium_line_dataset(100);
    AttackConfig cfg;
    cfg.strategy = Strategy::RandomNoise;
    cfg.rho = 0.1;
    cfg.epsilon_local = 0.3;
    cfg.seed = 5;
    const PoisonedDataset poison = run_attack(data, {}, cfg);
    std::string text = poison_to_ndjson(poison);

    // duplicate the first perturbation line
    const auto first_end = text.find('\n');
    const auto second_end = text.find('\n', first_end + 1);
    const std::string dup_line =
        text.substr(first_end + 1, second_end - first_end);
    CHECK_THROWS_WITH_AS(poison_from_ndjson(text + dup_line),
                         doctest::Contains("duplicate"), DataError);
}

TEST_CASE("sensitivity csv freezes the expected layout") {
    SensitivityRecord a;
    a.idx = 0;
    a.delta = -0.5;
    a.abs_delta = 0.5;
    a.grad_norm = 1.0;
    a.influence_proxy = 0.75;
    SensitivityRecord b;
    b.idx = 1;
    b.delta = 0.25;
    b.abs_delta = 0.25;
    b.grad_norm = 2.0;
    b.influence_proxy = 0.5;

    CHECK(sensitivity_csv({a, b}) ==
          "idx,delta,abs_delta,grad_norm,influence_proxy\n"
          "0,-0.5,0.5,1,0.75\n"
          "1,0.25,0.25,2,0.5\n");

    AllocationPlan plan;
    plan.epsilons = (Vector(2) << 0.5, 0.25).finished();
    CHECK(sensitivity_csv({a, b}, plan) ==
          "idx,delta,abs_delta,grad_norm,influence_proxy,epsilon\n"
          "0,-0.5,0.5,1,0.75,0.5\n"
          "1,0.25,0.25,2,0.5,0.25\n");

    plan.epsilons = Vector::Zero(3);
    CHECK_THROWS_AS(sensitivity_csv({a, b}, plan), ArgumentError);
}

TEST_CASE("detection csv leaves a missing auc field empty") {
    StealthRow with;
    with.detector = "robust_z";
    with.attack = "random_noise";
    with.recall = 1.0;
    with.precision = 0.5;
    with.auc_vs_clean = 0.75;
    with.max_score = 12.0;
    with.flagged_count = 3;
    StealthRow without;
    without.detector = "spectral";
    without.attack = "global_allocation";
    without.max_score = 4.0;

    CHECK(detection_csv({with, without}) ==
          "detector,attack,recall,precision,auc,max_score,flagged_count\n"
          "robust_z,random_noise,1,0.5,0.75,12,3\n"
          "spectral,global_allocation,0,0,,4,0\n");
}
