#include "poisonlab/victims.hpp"

#include "doctest.h"

#include <Eigen/Cholesky>

#include <cmath>

using namespace poisonlab;

namespace {

Vector vec2(Scalar a, Scalar b) {
    Vector v(2);
    v << a, b;
    return v;
}

Transition make_tr(Vector s, int a, Scalar r, Vector s_next, bool terminal, Index idx) {
    Transition t;
    t.s = std::move(s);
    t.a = a;
    t.r = r;
    t.s_next = std::move(s_next);
    t.terminal = terminal;
    t.idx = idx;
    return t;
}

// three-transition dataset on the 2x2 grid used by the hand-traced sweeps
TransitionDataset tiny_grid_data() {
    TransitionDataset data;
    data.spec = make_gridworld_spec(2, 0.9);
    data.behavior_tag = "manual";
    data.transitions = {
        make_tr(vec2(0, 1), 1, 1.0, vec2(1, 1), true, 0),
        make_tr(vec2(0, 0), 3, -0.01, vec2(0, 1), false, 1),
        make_tr(vec2(1, 0), 3, 1.0, vec2(1, 1), true, 2),
    };
    return data;
}

}  // namespace

TEST_CASE("tabular q sweeps reproduce the hand-traced updates") {
    // alpha = 0.5, two sweeps over (goal-adjacent, start, goal-adjacent):
    //   sweep 1: deltas 1.0, 0.44, 1.0
    //   sweep 2: deltas 0.5, 0.445, 0.5
    TrainConfig cfg;
    cfg.learning_rate = 0.5;
    cfg.n_iterations = 2;
    cfg.tol = 0.0;
    VictimModel m = train_tabular_q(tiny_grid_data(), cfg);

    CHECK(q_value(m, vec2(0, 1), 1) == doctest::Approx(0.75));
    CHECK(q_value(m, vec2(0, 0), 3) == doctest::Approx(0.4425));
    CHECK(q_value(m, vec2(1, 0), 3) == doctest::Approx(0.75));
    CHECK(q_value(m, vec2(0, 0), 0) == 0.0);  // never updated

    REQUIRE(m.train_log.size() == 2);
    CHECK(m.train_log[0] == doctest::Approx((1.0 + 0.44 + 1.0) / 3.0));
    CHECK(m.train_log[1] == doctest::Approx((0.5 + 0.445 + 0.5) / 3.0));
}

TEST_CASE("tabular q with full coverage converges to the planning oracle") {
    MdpSpec spec = make_gridworld_spec(2, 0.9);
    Environment env(spec);
    TransitionDataset data = generate_dataset(env, 2000, Quality::Random, 17);

    TrainConfig cfg;
    cfg.learning_rate = 1.0;  // deterministic env: sweeps become exact backups
    cfg.n_iterations = 200;
    cfg.tol = 1e-12;
    VictimModel m = train_tabular_q(data, cfg);

    OptimalValues ov = value_iteration_oracle(spec, 0, 1e-12);
    for (int row = 0; row < 2; ++row) {
        for (int col = 0; col < 2; ++col) {
            Vector s = vec2(row, col);
            if (Environment(spec).is_terminal(s)) continue;
            for (int a = 0; a < 4; ++a)
                CHECK(q_value(m, s, a) ==
                      doctest::Approx(ov.q(ov.state_index(s), a)).epsilon(1e-8));
        }
    }
}

TEST_CASE("training runs are bit-reproducible") {
    MdpSpec spec = make_lineworld_spec(0.01, 0.95);
    Environment env(spec);
    TransitionDataset data = generate_dataset(env, 1500, Quality::Medium, 5);
    TrainConfig cfg;
    cfg.n_iterations = 30;
    VictimModel a = train_linear_fqi(data, cfg);
    VictimModel b = train_linear_fqi(data, cfg);
    CHECK(a.theta == b.theta);

    VictimModel ta = train_tabular_q(data, cfg);
    VictimModel tb = train_tabular_q(data, cfg);
    CHECK(ta.theta == tb.theta);
}

TEST_CASE("fqi on all-terminal data equals one-shot ridge regression") {
    // with every transition terminal the bootstrap vanishes and FQI is a
    // single ridge regression of r on phi
    MdpSpec spec = make_lineworld_spec(0.0, 0.95);
    TransitionDataset data;
    data.spec = spec;
    data.behavior_tag = "manual";
    Rng rng(3);
    for (Index i = 0; i < 60; ++i) {
        Vector s(1), sn(1);
        s << rng.uniform();
        sn << rng.uniform();
        data.transitions.push_back(
            make_tr(s, static_cast<int>(rng.uniform_index(2)),
                    rng.uniform(-1.0, 1.0), sn, true, i));
    }

    FeatureMap fm = make_rbf_grid(6, 2, Vector::Zero(1), Vector::Ones(1), 0.2);
    TrainConfig cfg;
    cfg.ridge_lambda = 1e-4;
    VictimModel m = train_linear_fqi(data, fm, cfg);

    Matrix features(60, fm.dim);
    Vector r(60);
    for (Index i = 0; i < 60; ++i) {
        const Transition& t = data.transitions[static_cast<std::size_t>(i)];
        features.row(i) = phi(fm, t.s, t.a);
        r[i] = t.r;
    }
    const Matrix gram = features.transpose() * features +
                        cfg.ridge_lambda * Matrix::Identity(fm.dim, fm.dim);
    const Vector theta_ridge = Eigen::LDLT<Matrix>(gram).solve(features.transpose() * r);
    CHECK((m.theta - theta_ridge).cwiseAbs().maxCoeff() < 1e-10);
    // converged: second iteration reproduces the first solution exactly
    CHECK(m.train_log.back() < cfg.tol);
}

TEST_CASE("conservative fqi with beta 0 is exactly vanilla fqi") {
    MdpSpec spec = make_lineworld_spec(0.01, 0.95);
    Environment env(spec);
    TransitionDataset data = generate_dataset(env, 1200, Quality::Medium, 11);
    TrainConfig cfg;
    cfg.n_iterations = 40;
    cfg.conservative_beta = 0.0;
    VictimModel vanilla = train_linear_fqi(data, cfg);
    VictimModel cons = train_conservative_fqi(data, cfg);
    CHECK(vanilla.theta == cons.theta);  // bitwise
    CHECK(cons.algo == AlgoTag::ConsLinFQI);
}

TEST_CASE("conservative targets match an independent re-derivation") {
    MdpSpec spec = make_lineworld_spec(0.01, 0.95);
    Environment env(spec);
    TransitionDataset data = generate_dataset(env, 600, Quality::Medium, 23);
    FeatureMap fm = make_rbf_grid(8, 2, Vector::Zero(1), Vector::Ones(1), 0.12);
    TrainConfig cfg;
    cfg.n_iterations = 2;
    cfg.tol = 0.0;
    cfg.conservative_beta = 0.3;
    VictimModel cons = train_conservative_fqi(data, fm, cfg);

    // replay two iterations by hand: theta_{k+1} solves the ridge regression
    // onto y = r + gamma (1 - T) max_a Q(s', a) - beta (mean_a Q(s, a) - Q(s, a_i))
    const Index n = data.size();
    Matrix features(n, fm.dim);
    for (Index i = 0; i < n; ++i) {
        const Transition& t = data.transitions[static_cast<std::size_t>(i)];
        features.row(i) = phi(fm, t.s, t.a);
    }
    const Matrix gram = features.transpose() * features +
                        cfg.ridge_lambda * Matrix::Identity(fm.dim, fm.dim);
    const Eigen::LDLT<Matrix> solver(gram);
    Vector theta = Vector::Zero(fm.dim);
    for (int iter = 0; iter < 2; ++iter) {
        Vector y(n);
        for (Index i = 0; i < n; ++i) {
            const Transition& t = data.transitions[static_cast<std::size_t>(i)];
            Scalar best = -std::numeric_limits<Scalar>::infinity();
            for (int a = 0; a < 2; ++a)
                best = std::max(best, theta.dot(phi(fm, t.s_next, a)));
            Scalar target = t.r + (t.terminal ? 0.0 : spec.gamma * best);
            Scalar mean_q = 0.0;
            for (int a = 0; a < 2; ++a) mean_q += theta.dot(phi(fm, t.s, a));
            mean_q /= 2.0;
            target -= cfg.conservative_beta * (mean_q - theta.dot(features.row(i)));
            y[i] = target;
        }
        theta = solver.solve(features.transpose() * y);
    }
    CHECK((cons.theta - theta).cwiseAbs().maxCoeff() < 1e-9);

    // and the penalty genuinely changes the solution
    cfg.conservative_beta = 0.0;
    VictimModel vanilla = train_linear_fqi(data, fm, cfg);
    CHECK(vanilla.theta != cons.theta);
}

TEST_CASE("fqi trains a competent lineworld policy") {
    MdpSpec spec = make_lineworld_spec(0.01, 0.95);
    Environment env(spec);
    TransitionDataset data = generate_dataset(env, 4000, Quality::Medium, 41);
    TrainConfig cfg;
    cfg.n_iterations = 80;
    VictimModel m = train_linear_fqi(data, cfg);
    MeanReturn mr = evaluate_policy(env, greedy_policy(m), 400, 99);
    CHECK(mr.mean > 0.5);
}

TEST_CASE("unobserved action blocks make the normal equations singular") {
    MdpSpec spec = make_lineworld_spec(0.0, 0.95);
    TransitionDataset data;
    data.spec = spec;
    data.behavior_tag = "manual";
    Rng rng(7);
    for (Index i = 0; i < 40; ++i) {
        Vector s(1), sn(1);
        s << rng.uniform();
        sn << rng.uniform();
        // only action 0 ever appears
        data.transitions.push_back(make_tr(s, 0, 0.1, sn, true, i));
    }
    TrainConfig cfg;
    cfg.ridge_lambda = 0.0;
    CHECK_THROWS_AS(train_linear_fqi(data, cfg), NumericalError);
    cfg.ridge_lambda = 1e-6;  // regularization restores solvability
    CHECK_NOTHROW(train_linear_fqi(data, cfg));
}

TEST_CASE("greedy policy breaks ties toward the lowest action") {
    VictimModel m;
    m.algo = AlgoTag::TabQ;
    m.feature_map = default_tabular_map(make_gridworld_spec(2));
    m.theta = Vector::Zero(m.feature_map.dim);
    Policy p = greedy_policy(m);
    CHECK(p(vec2(0, 0)) == 0);
}

TEST_CASE("train_victim dispatches on the tag") {
    MdpSpec spec = make_lineworld_spec(0.01, 0.95);
    Environment env(spec);
    TransitionDataset data = generate_dataset(env, 800, Quality::Medium, 2);
    TrainConfig cfg;
    cfg.n_iterations = 10;
    CHECK(train_victim(AlgoTag::TabQ, data, cfg).algo == AlgoTag::TabQ);
    CHECK(train_victim(AlgoTag::LinFQI, data, cfg).algo == AlgoTag::LinFQI);
    cfg.conservative_beta = 0.5;
    CHECK(train_victim(AlgoTag::ConsLinFQI, data, cfg).algo == AlgoTag::ConsLinFQI);
}

TEST_CASE("trainers reject bad inputs") {
    TransitionDataset empty;
    empty.spec = make_gridworld_spec(2);
    TrainConfig cfg;
    CHECK_THROWS_AS(train_tabular_q(empty, cfg), DataError);

    TransitionDataset data = tiny_grid_data();
    cfg.learning_rate = 0.0;
    CHECK_THROWS_AS(train_tabular_q(data, cfg), ConfigError);
    cfg = TrainConfig{};
    cfg.n_iterations = 0;
    CHECK_THROWS_AS(train_tabular_q(data, cfg), ConfigError);
    cfg = TrainConfig{};
    cfg.ridge_lambda = -1.0;
    CHECK_THROWS_AS(train_linear_fqi(data, cfg), ConfigError);
}

TEST_CASE("algo tags round-trip through strings") {
    CHECK(algo_from_string(to_string(AlgoTag::TabQ)) == AlgoTag::TabQ);
    CHECK(algo_from_string(to_string(AlgoTag::LinFQI)) == AlgoTag::LinFQI);
    CHECK(algo_from_string(to_string(AlgoTag::ConsLinFQI)) == AlgoTag::ConsLinFQI);
    CHECK_THROWS_AS(algo_from_string("dqn"), ConfigError);
}
