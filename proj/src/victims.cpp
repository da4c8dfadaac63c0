#include "poisonlab/victims.hpp"

#include <Eigen/Cholesky>
#include <Eigen/LU>

#include <cmath>

namespace poisonlab {

std::string to_string(AlgoTag tag) {
    switch (tag) {
        case AlgoTag::TabQ: return "tabq";
        case AlgoTag::LinFQI: return "linfqi";
        case AlgoTag::ConsLinFQI: return "conslinfqi";
    }
    throw ArgumentError("unreachable algo tag");
}

AlgoTag algo_from_string(const std::string& s) {
    if (s == "tabq") return AlgoTag::TabQ;
    if (s == "linfqi") return AlgoTag::LinFQI;
    if (s == "conslinfqi") return AlgoTag::ConsLinFQI;
    throw ConfigError("unknown victim algorithm: '" + s + "'");
}

Scalar q_value(const VictimModel& m, const Vector& s, int a) {
    if (m.feature_map.kind == FeatureKind::Tabular) {
        const Index cell = tabular_cell(m.feature_map, s);
        return m.theta[static_cast<Index>(a) * m.feature_map.state_features + cell];
    }
    return m.theta.dot(phi(m.feature_map, s, a));
}

Vector q_values(const VictimModel& m, const Vector& s) {
    Vector q(m.feature_map.n_actions);
    for (int a = 0; a < m.feature_map.n_actions; ++a) q[a] = q_value(m, s, a);
    return q;
}

Policy greedy_policy(const VictimModel& m) {
    VictimModel self = m;
    return [self = std::move(self)](const Vector& s) {
        const Vector q = q_values(self, s);
        int best = 0;
        for (int a = 1; a < static_cast<int>(q.size()); ++a)
            if (q[a] > q[best]) best = a;  // strict: ties keep the lowest index
        return best;
    };
}

namespace {

void check_common(const TransitionDataset& data, const TrainConfig& cfg) {
    if (data.transitions.empty()) throw DataError("training on an empty dataset");
    if (cfg.n_iterations < 1) throw ConfigError("TrainConfig.n_iterations must be >= 1");
    if (cfg.tol < 0.0) throw ConfigError("TrainConfig.tol must be >= 0");
    if (cfg.ridge_lambda < 0.0) throw ConfigError("TrainConfig.ridge_lambda must be >= 0");
    if (!(data.spec.gamma > 0.0 && data.spec.gamma < 1.0))
        throw ConfigError("dataset gamma must lie in (0, 1)");
}

constexpr Scalar kDivergenceLimit = 1e8;

}  // namespace

VictimModel train_tabular_q(const TransitionDataset& data, const TrainConfig& cfg) {
    check_common(data, cfg);
    if (!(cfg.learning_rate > 0.0 && cfg.learning_rate <= 1.0))
        throw ConfigError("TrainConfig.learning_rate must lie in (0, 1]");

    VictimModel m;
    m.algo = AlgoTag::TabQ;
    m.feature_map = default_tabular_map(data.spec, cfg.tabular_line_bins);
    m.gamma = data.spec.gamma;
    m.theta = Vector::Zero(m.feature_map.dim);

    const int n_actions = m.feature_map.n_actions;
    const int cells = m.feature_map.state_features;
    // cache cell indices once; this also surfaces out-of-range states early
    std::vector<Index> cell_s, cell_next;
    cell_s.reserve(data.transitions.size());
    cell_next.reserve(data.transitions.size());
    for (const Transition& t : data.transitions) {
        cell_s.push_back(tabular_cell(m.feature_map, t.s));
        cell_next.push_back(tabular_cell(m.feature_map, t.s_next));
    }

    auto q_at = [&](Index cell, int a) -> Scalar& {
        return m.theta[static_cast<Index>(a) * cells + cell];
    };

    for (int sweep = 0; sweep < cfg.n_iterations; ++sweep) {
        Scalar abs_sum = 0.0;
        for (std::size_t i = 0; i < data.transitions.size(); ++i) {
            const Transition& t = data.transitions[i];
            Scalar boot = 0.0;
            if (!t.terminal) {
                Scalar best = q_at(cell_next[i], 0);
                for (int a = 1; a < n_actions; ++a)
                    best = std::max(best, q_at(cell_next[i], a));
                boot = m.gamma * best;
            }
            const Scalar delta = t.r + boot - q_at(cell_s[i], t.a);
            q_at(cell_s[i], t.a) += cfg.learning_rate * delta;
            abs_sum += std::abs(delta);
        }
        m.train_log.push_back(abs_sum / static_cast<Scalar>(data.transitions.size()));
        if (m.train_log.back() < cfg.tol) break;
    }
    return m;
}

namespace {

VictimModel fqi_impl(AlgoTag tag, const TransitionDataset& data,
                     const FeatureMap& fm, const TrainConfig& cfg) {
    check_common(data, cfg);
    if (tag == AlgoTag::ConsLinFQI && cfg.conservative_beta < 0.0)
        throw ConfigError("TrainConfig.conservative_beta must be >= 0");
    if (fm.state_dim != data.spec.state_dim)
        throw DataError("feature map state_dim does not match the dataset");
    if (fm.n_actions != data.spec.n_actions)
        throw DataError("feature map n_actions does not match the dataset");

    const Index n = data.size();
    const int dim = fm.dim;
    const int n_actions = fm.n_actions;
    const bool conservative =
        tag == AlgoTag::ConsLinFQI && cfg.conservative_beta > 0.0;

    // Design matrix and per-action next-state (and, for the conservative
    // penalty, current-state) feature blocks, built once.
    Matrix features(n, dim);
    std::vector<Matrix> next_features(static_cast<std::size_t>(n_actions));
    std::vector<Matrix> cur_features;
    for (int a = 0; a < n_actions; ++a)
        next_features[static_cast<std::size_t>(a)].resize(n, dim);
    if (conservative) {
        cur_features.resize(static_cast<std::size_t>(n_actions));
        for (int a = 0; a < n_actions; ++a)
            cur_features[static_cast<std::size_t>(a)].resize(n, dim);
    }
    for (Index i = 0; i < n; ++i) {
        const Transition& t = data.transitions[static_cast<std::size_t>(i)];
        features.row(i) = phi(fm, t.s, t.a);
        for (int a = 0; a < n_actions; ++a) {
            next_features[static_cast<std::size_t>(a)].row(i) = phi(fm, t.s_next, a);
            if (conservative)
                cur_features[static_cast<std::size_t>(a)].row(i) = phi(fm, t.s, a);
        }
    }

    const Matrix gram = features.transpose() * features +
                        cfg.ridge_lambda * Matrix::Identity(dim, dim);
    if (cfg.ridge_lambda == 0.0) {
        const Eigen::FullPivLU<Matrix> lu(gram);
        if (!lu.isInvertible())
            throw NumericalError(
                "FQI normal equations are singular; set ridge_lambda > 0");
    }
    const Eigen::LDLT<Matrix> solver(gram);
    if (solver.info() != Eigen::Success)
        throw NumericalError("FQI normal-equation factorization failed");

    Vector not_terminal(n);
    Vector rewards(n);
    for (Index i = 0; i < n; ++i) {
        const Transition& t = data.transitions[static_cast<std::size_t>(i)];
        not_terminal[i] = t.terminal ? 0.0 : 1.0;
        rewards[i] = t.r;
    }

    VictimModel m;
    m.algo = tag;
    m.feature_map = fm;
    m.gamma = data.spec.gamma;
    m.theta = Vector::Zero(dim);

    for (int iter = 0; iter < cfg.n_iterations; ++iter) {
        // y_i = r_i + gamma * max_a theta . phi(s'_i, a) on non-terminal rows
        Vector best_next = next_features[0] * m.theta;
        for (int a = 1; a < n_actions; ++a)
            best_next = best_next.cwiseMax(next_features[static_cast<std::size_t>(a)] * m.theta);
        Vector y = rewards.array() +
                   m.gamma * not_terminal.array() * best_next.array();
        if (conservative) {
            Vector mean_q = cur_features[0] * m.theta;
            for (int a = 1; a < n_actions; ++a)
                mean_q += cur_features[static_cast<std::size_t>(a)] * m.theta;
            mean_q /= static_cast<Scalar>(n_actions);
            const Vector taken_q = features * m.theta;
            y -= cfg.conservative_beta * (mean_q - taken_q);
        }
        const Vector theta_new = solver.solve(features.transpose() * y);
        const Scalar residual = (theta_new - m.theta).cwiseAbs().maxCoeff();
        m.theta = theta_new;
        m.train_log.push_back(residual);
        if (!m.theta.allFinite() || m.theta.cwiseAbs().maxCoeff() > kDivergenceLimit)
            throw NumericalError("FQI diverged at iteration " +
                                 std::to_string(iter + 1) +
                                 "; reduce gamma or increase ridge_lambda");
        if (residual < cfg.tol) break;
    }
    return m;
}

}  // namespace

VictimModel train_linear_fqi(const TransitionDataset& data, const FeatureMap& fm,
                             const TrainConfig& cfg) {
    return fqi_impl(AlgoTag::LinFQI, data, fm, cfg);
}

VictimModel train_linear_fqi(const TransitionDataset& data, const TrainConfig& cfg) {
    return fqi_impl(AlgoTag::LinFQI, data, default_rbf_map(data.spec), cfg);
}

VictimModel train_conservative_fqi(const TransitionDataset& data,
                                   const FeatureMap& fm, const TrainConfig& cfg) {
    return fqi_impl(AlgoTag::ConsLinFQI, data, fm, cfg);
}

VictimModel train_conservative_fqi(const TransitionDataset& data,
                                   const TrainConfig& cfg) {
    return fqi_impl(AlgoTag::ConsLinFQI, data, default_rbf_map(data.spec), cfg);
}

VictimModel train_victim(AlgoTag tag, const TransitionDataset& data,
                         const TrainConfig& cfg) {
    switch (tag) {
        case AlgoTag::TabQ: return train_tabular_q(data, cfg);
        case AlgoTag::LinFQI: return train_linear_fqi(data, cfg);
        case AlgoTag::ConsLinFQI: return train_conservative_fqi(data, cfg);
    }
    throw ArgumentError("unreachable algo tag");
}

}  // namespace poisonlab
