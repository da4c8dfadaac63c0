#include "poisonlab/sensitivity.hpp"

#include "poisonlab/metrics.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>

namespace poisonlab {

std::string to_string(Surface s) {
    switch (s) {
        case Surface::Reward: return "reward";
        case Surface::State: return "state";
        case Surface::Both: return "both";
    }
    throw ArgumentError("unreachable surface value");
}

Surface surface_from_string(const std::string& s) {
    if (s == "reward") return Surface::Reward;
    if (s == "state") return Surface::State;
    if (s == "both") return Surface::Both;
    throw ConfigError("unknown perturbation surface: '" + s + "'");
}

Scalar td_error(const VictimModel& m, const Transition& t) {
    Scalar boot = 0.0;
    if (!t.terminal) boot = m.gamma * q_values(m, t.s_next).maxCoeff();
    return t.r + boot - q_value(m, t.s, t.a);
}

namespace {

int argmax_action(const Vector& q) {
    int best = 0;
    for (int a = 1; a < static_cast<int>(q.size()); ++a)
        if (q[a] > q[best]) best = a;
    return best;
}

Scalar sign_of(Scalar x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

}  // namespace

std::vector<SensitivityRecord> score_dataset(const VictimModel& m,
                                             const TransitionDataset& data,
                                             const ScoreOptions& opts) {
    const bool needs_state = opts.surface != Surface::Reward;
    if (needs_state && !differentiable(m.feature_map))
        throw ArgumentError(
            "state-surface scoring requires a differentiable feature map");
    if (m.feature_map.state_dim != data.spec.state_dim)
        throw DataError("model and dataset disagree on state_dim");

    const int sd = data.spec.state_dim;
    const int state_len = needs_state ? sd * (opts.include_next_state ? 2 : 1) : 0;

    std::vector<SensitivityRecord> out;
    out.reserve(data.transitions.size());
    for (const Transition& t : data.transitions) {
        SensitivityRecord rec;
        rec.idx = t.idx;
        rec.delta = td_error(m, t);
        rec.abs_delta = std::abs(rec.delta);
        const Scalar sgn = sign_of(rec.delta);
        rec.grad_reward = sgn;  // d|delta|/dr

        if (needs_state) {
            rec.grad_state = Vector::Zero(state_len);
            if (sgn != 0.0) {
                // d|delta|/ds = -sign(delta) * dQ(s, a)/ds
                const Vector dq_ds =
                    phi_state_jacobian(m.feature_map, t.s, t.a).transpose() * m.theta;
                rec.grad_state.head(sd) = -sgn * dq_ds;
                if (opts.include_next_state && !t.terminal) {
                    // through the bootstrap: gamma * dQ(s', a*)/ds'
                    const int a_star = argmax_action(q_values(m, t.s_next));
                    const Vector dq_dsn =
                        phi_state_jacobian(m.feature_map, t.s_next, a_star).transpose() *
                        m.theta;
                    rec.grad_state.tail(sd) = sgn * m.gamma * dq_dsn;
                }
            }
        }

        switch (opts.surface) {
            case Surface::Reward:
                rec.grad_norm = std::abs(rec.grad_reward);
                break;
            case Surface::State:
                rec.grad_norm = rec.grad_state.norm();
                break;
            case Surface::Both:
                rec.grad_norm = std::sqrt(rec.grad_reward * rec.grad_reward +
                                          rec.grad_state.squaredNorm());
                break;
        }
        rec.influence_proxy = rec.abs_delta * phi(m.feature_map, t.s, t.a).norm();
        out.push_back(std::move(rec));
    }
    return out;
}

std::vector<Index> top_k_by_sensitivity(const std::vector<SensitivityRecord>& records,
                                        Index k, RankKey key) {
    const Index n = static_cast<Index>(records.size());
    if (k < 1 || k > n)
        throw ArgumentError("top_k_by_sensitivity: need 1 <= k <= " +
                            std::to_string(n));
    auto value = [&](const SensitivityRecord& r) {
        return key == RankKey::AbsDelta ? r.abs_delta : r.influence_proxy;
    };
    std::vector<Index> order(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
    // descending by key, ties toward the lower dataset idx
    std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
        const Scalar va = value(records[static_cast<std::size_t>(a)]);
        const Scalar vb = value(records[static_cast<std::size_t>(b)]);
        if (va != vb) return va > vb;
        return records[static_cast<std::size_t>(a)].idx <
               records[static_cast<std::size_t>(b)].idx;
    });
    std::vector<Index> out;
    out.reserve(static_cast<std::size_t>(k));
    for (Index i = 0; i < k; ++i)
        out.push_back(records[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])].idx);
    std::sort(out.begin(), out.end());
    return out;
}

InfluenceResult exact_influence(const VictimModel& m, const TransitionDataset& data,
                                Scalar damping) {
    if (damping < 0.0) throw ArgumentError("exact_influence: damping must be >= 0");
    const Index n = data.size();
    if (n < 1) throw DataError("exact_influence: empty dataset");
    if (n > kInfluenceMaxRecords)
        throw ArgumentError("exact_influence: dataset exceeds " +
                            std::to_string(kInfluenceMaxRecords) + " records");
    if (m.feature_map.state_dim != data.spec.state_dim)
        throw DataError("model and dataset disagree on state_dim");

    const int dim = m.feature_map.dim;
    Matrix features(n, dim);
    Vector deltas(n);
    for (Index i = 0; i < n; ++i) {
        const Transition& t = data.transitions[static_cast<std::size_t>(i)];
        features.row(i) = phi(m.feature_map, t.s, t.a);
        deltas[i] = td_error(m, t);
    }

    const Matrix hessian = features.transpose() * features +
                           damping * Matrix::Identity(dim, dim);
    const Eigen::SelfAdjointEigenSolver<Matrix> eig(hessian);
    if (eig.info() != Eigen::Success)
        throw NumericalError("exact_influence: eigendecomposition failed");
    const Scalar ev_min = eig.eigenvalues().minCoeff();
    const Scalar ev_max = eig.eigenvalues().maxCoeff();
    InfluenceResult out;
    if (ev_min <= 0.0 || ev_max / ev_min > kInfluenceConditionLimit) {
        throw NumericalError(
            "exact_influence: Gauss-Newton Hessian is ill-conditioned "
            "(condition > 1e12); increase damping");
    }
    out.hessian_condition = ev_max / ev_min;

    const Eigen::LDLT<Matrix> solver(hessian);
    out.influence.resize(n);
    Vector proxy(n);
    for (Index i = 0; i < n; ++i) {
        const Vector x = solver.solve(features.row(i).transpose());
        out.influence[i] = std::abs(deltas[i]) * x.norm();
        proxy[i] = std::abs(deltas[i]) * features.row(i).norm();
    }
    out.proxy_rank_correlation = spearman(out.influence, proxy);
    return out;
}

}  // namespace poisonlab
