#include "poisonlab/envlab.hpp"

#include "poisonlab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>

namespace poisonlab {

// ─── Spec construction and validation ───────────────────────────────────────

std::string to_string(EnvKind kind) {
    return kind == EnvKind::GridWorld ? "gridworld" : "lineworld";
}

EnvKind env_kind_from_string(const std::string& s) {
    if (s == "gridworld") return EnvKind::GridWorld;
    if (s == "lineworld") return EnvKind::LineWorld;
    throw ConfigError("unknown environment kind: '" + s + "'");
}

void validate(const MdpSpec& spec) {
    if (!(spec.gamma > 0.0 && spec.gamma < 1.0))
        throw ConfigError("MdpSpec.gamma must lie in (0, 1)");
    if (spec.horizon < 1) throw ConfigError("MdpSpec.horizon must be >= 1");
    if (spec.kind == EnvKind::GridWorld) {
        if (spec.state_dim != 2) throw ConfigError("MdpSpec.state_dim must be 2 for gridworld");
        if (spec.n_actions != 4) throw ConfigError("MdpSpec.n_actions must be 4 for gridworld");
        if (spec.grid_size < 2) throw ConfigError("MdpSpec.grid_size must be >= 2");
        for (const auto& [row, col] : spec.hazards) {
            if (row < 0 || row >= spec.grid_size || col < 0 || col >= spec.grid_size)
                throw ConfigError("MdpSpec.hazards cell outside the grid");
            if (row == spec.grid_size - 1 && col == spec.grid_size - 1)
                throw ConfigError("MdpSpec.hazards may not cover the goal cell");
        }
    } else {
        if (spec.state_dim != 1) throw ConfigError("MdpSpec.state_dim must be 1 for lineworld");
        if (spec.n_actions != 2) throw ConfigError("MdpSpec.n_actions must be 2 for lineworld");
        if (spec.noise_std < 0.0) throw ConfigError("MdpSpec.noise_std must be >= 0");
    }
}

MdpSpec make_gridworld_spec(int grid_size, Scalar gamma, int horizon,
                            std::uint64_t seed) {
    MdpSpec spec;
    spec.kind = EnvKind::GridWorld;
    spec.state_dim = 2;
    spec.n_actions = 4;
    spec.gamma = gamma;
    spec.horizon = horizon;
    spec.seed = seed;
    spec.grid_size = grid_size;
    validate(spec);
    return spec;
}

MdpSpec make_lineworld_spec(Scalar noise_std, Scalar gamma, int horizon,
                            std::uint64_t seed) {
    MdpSpec spec;
    spec.kind = EnvKind::LineWorld;
    spec.state_dim = 1;
    spec.n_actions = 2;
    spec.gamma = gamma;
    spec.horizon = horizon;
    spec.noise_std = noise_std;
    spec.seed = seed;
    spec.grid_size = 0;
    validate(spec);
    return spec;
}

void validate(const TransitionDataset& data) {
    validate(data.spec);
    const Index n = data.size();
    std::vector<bool> seen(static_cast<std::size_t>(n), false);
    for (const Transition& t : data.transitions) {
        if (t.idx < 0 || t.idx >= n)
            throw DataError("transition idx " + std::to_string(t.idx) +
                            " outside [0, n)");
        if (seen[static_cast<std::size_t>(t.idx)])
            throw DataError("duplicate transition idx " + std::to_string(t.idx));
        seen[static_cast<std::size_t>(t.idx)] = true;
        if (t.s.size() != data.spec.state_dim || t.s_next.size() != data.spec.state_dim)
            throw DataError("transition idx " + std::to_string(t.idx) +
                            " has wrong state dimension");
        if (t.a < 0 || t.a >= data.spec.n_actions)
            throw DataError("transition idx " + std::to_string(t.idx) +
                            " has action outside [0, n_actions)");
    }
}

// ─── Environment dynamics ───────────────────────────────────────────────────

namespace {

bool grid_is_goal(const MdpSpec& spec, int row, int col) {
    return row == spec.grid_size - 1 && col == spec.grid_size - 1;
}

bool grid_is_hazard(const MdpSpec& spec, int row, int col) {
    for (const auto& [hr, hc] : spec.hazards)
        if (hr == row && hc == col) return true;
    return false;
}

bool line_in_goal_window(Scalar x) {
    return std::abs(x - kLineGoalCenter) < kLineGoalHalfWidth;
}

}  // namespace

Environment::Environment(MdpSpec spec) : spec_(std::move(spec)), rng_(0) {
    validate(spec_);
}

Environment build_env(const MdpSpec& spec) { return Environment(spec); }

bool Environment::is_terminal(const Vector& s) const {
    if (spec_.kind == EnvKind::GridWorld) {
        const int row = static_cast<int>(std::lround(s[0]));
        const int col = static_cast<int>(std::lround(s[1]));
        return grid_is_goal(spec_, row, col) || grid_is_hazard(spec_, row, col);
    }
    return line_in_goal_window(s[0]);
}

void Environment::state_bounds(Vector& lo, Vector& hi) const {
    if (spec_.kind == EnvKind::GridWorld) {
        lo = Vector::Zero(2);
        hi = Vector::Constant(2, static_cast<Scalar>(spec_.grid_size - 1));
    } else {
        lo = Vector::Zero(1);
        hi = Vector::Ones(1);
    }
}

std::vector<std::pair<int, int>> Environment::non_terminal_cells() const {
    std::vector<std::pair<int, int>> cells;
    for (int row = 0; row < spec_.grid_size; ++row)
        for (int col = 0; col < spec_.grid_size; ++col)
            if (!grid_is_goal(spec_, row, col) && !grid_is_hazard(spec_, row, col))
                cells.emplace_back(row, col);
    return cells;
}

Vector Environment::reset(std::uint64_t seed) {
    rng_ = Rng(seed);
    if (spec_.kind == EnvKind::GridWorld) {
        const auto cells = non_terminal_cells();
        const auto& [row, col] = cells[static_cast<std::size_t>(
            rng_.uniform_index(static_cast<Index>(cells.size())))];
        Vector s(2);
        s << static_cast<Scalar>(row), static_cast<Scalar>(col);
        return s;
    }
    Vector s(1);
    s[0] = rng_.uniform(kLineResetLo, kLineResetHi);
    return s;
}

StepResult Environment::step(const Vector& s, int a) {
    if (a < 0 || a >= spec_.n_actions)
        throw ArgumentError("action " + std::to_string(a) + " outside [0, " +
                            std::to_string(spec_.n_actions) + ")");
    if (is_terminal(s)) return StepResult{s, 0.0, true};  // absorbing

    if (spec_.kind == EnvKind::GridWorld) {
        const int row = static_cast<int>(std::lround(s[0]));
        const int col = static_cast<int>(std::lround(s[1]));
        // 0: up, 1: down, 2: left, 3: right; off-grid moves keep the agent put.
        static constexpr int kDRow[4] = {-1, 1, 0, 0};
        static constexpr int kDCol[4] = {0, 0, -1, 1};
        int nr = row + kDRow[a];
        int nc = col + kDCol[a];
        if (nr < 0 || nr >= spec_.grid_size || nc < 0 || nc >= spec_.grid_size) {
            nr = row;
            nc = col;
        }
        Vector s_next(2);
        s_next << static_cast<Scalar>(nr), static_cast<Scalar>(nc);
        if (grid_is_goal(spec_, nr, nc))
            return StepResult{s_next, spec_.rewards.goal_reward, true};
        if (grid_is_hazard(spec_, nr, nc))
            return StepResult{s_next, spec_.rewards.hazard_cost, true};
        return StepResult{s_next, spec_.rewards.step_cost, false};
    }

    const Scalar dir = (a == 0) ? -1.0 : 1.0;
    Scalar x = s[0] + dir * kLineStep;
    if (spec_.noise_std > 0.0) x += rng_.normal(0.0, spec_.noise_std);
    x = std::clamp(x, Scalar{0.0}, Scalar{1.0});
    Vector s_next(1);
    s_next[0] = x;
    if (line_in_goal_window(x))
        return StepResult{s_next, spec_.rewards.goal_reward, true};
    return StepResult{s_next, spec_.rewards.step_cost, false};
}

// ─── Value iteration ────────────────────────────────────────────────────────

int OptimalValues::state_index(const Vector& s) const {
    if (spec.kind == EnvKind::GridWorld) {
        const int row = static_cast<int>(std::lround(s[0]));
        const int col = static_cast<int>(std::lround(s[1]));
        return row * spec.grid_size + col;
    }
    const int bin = static_cast<int>(std::floor(s[0] * resolution));
    return std::clamp(bin, 0, resolution - 1);
}

Policy OptimalValues::greedy() const {
    // Copy the plan so the policy outlives this struct.
    auto self = *this;
    return [self](const Vector& s) {
        return self.greedy_actions[static_cast<std::size_t>(self.state_index(s))];
    };
}

namespace {

constexpr int kMaxSweeps = 100000;

Scalar normal_cdf(Scalar z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

struct DiscreteModel {
    // reward[s][a], terminal[s], prob[s][a] sparse rows over next states
    int n_states = 0;
    int n_actions = 0;
    std::vector<bool> terminal;
    std::vector<std::vector<Scalar>> reward;                  // expected reward
    std::vector<std::vector<std::vector<std::pair<int, Scalar>>>> next;
};

DiscreteModel build_grid_model(const MdpSpec& spec) {
    DiscreteModel m;
    m.n_states = spec.grid_size * spec.grid_size;
    m.n_actions = 4;
    m.terminal.assign(static_cast<std::size_t>(m.n_states), false);
    m.reward.assign(static_cast<std::size_t>(m.n_states),
                    std::vector<Scalar>(4, 0.0));
    m.next.assign(static_cast<std::size_t>(m.n_states), {});
    Environment env(spec);
    for (int row = 0; row < spec.grid_size; ++row) {
        for (int col = 0; col < spec.grid_size; ++col) {
            const int si = row * spec.grid_size + col;
            if (grid_is_goal(spec, row, col) || grid_is_hazard(spec, row, col)) {
                m.terminal[static_cast<std::size_t>(si)] = true;
                m.next[static_cast<std::size_t>(si)].assign(4, {});
                continue;
            }
            Vector s(2);
            s << static_cast<Scalar>(row), static_cast<Scalar>(col);
            auto& rows = m.next[static_cast<std::size_t>(si)];
            rows.assign(4, {});
            for (int a = 0; a < 4; ++a) {
                const StepResult sr = env.step(s, a);
                const int ni = static_cast<int>(std::lround(sr.s_next[0])) * spec.grid_size +
                               static_cast<int>(std::lround(sr.s_next[1]));
                m.reward[static_cast<std::size_t>(si)][static_cast<std::size_t>(a)] = sr.r;
                if (!sr.terminal) rows[static_cast<std::size_t>(a)] = {{ni, 1.0}};
            }
        }
    }
    return m;
}

// LineWorld is discretized onto `res` equal bins with centers (j+0.5)/res.
// The pre-clip next position is N(x + dir*step, noise_std^2); probability
// mass outside [0,1] is absorbed into the boundary bins, matching the clip.
DiscreteModel build_line_model(const MdpSpec& spec, int res) {
    DiscreteModel m;
    m.n_states = res;
    m.n_actions = 2;
    m.terminal.assign(static_cast<std::size_t>(res), false);
    m.reward.assign(static_cast<std::size_t>(res), std::vector<Scalar>(2, 0.0));
    m.next.assign(static_cast<std::size_t>(res), {});

    std::vector<Scalar> center(static_cast<std::size_t>(res));
    std::vector<bool> in_goal(static_cast<std::size_t>(res));
    for (int j = 0; j < res; ++j) {
        center[static_cast<std::size_t>(j)] = (j + 0.5) / res;
        in_goal[static_cast<std::size_t>(j)] =
            line_in_goal_window(center[static_cast<std::size_t>(j)]);
    }
    for (int j = 0; j < res; ++j) {
        if (in_goal[static_cast<std::size_t>(j)]) {
            m.terminal[static_cast<std::size_t>(j)] = true;
            m.next[static_cast<std::size_t>(j)].assign(2, {});
            continue;
        }
        auto& rows = m.next[static_cast<std::size_t>(j)];
        rows.assign(2, {});
        for (int a = 0; a < 2; ++a) {
            const Scalar dir = (a == 0) ? -1.0 : 1.0;
            const Scalar mu = center[static_cast<std::size_t>(j)] + dir * kLineStep;
            std::vector<Scalar> p(static_cast<std::size_t>(res), 0.0);
            if (spec.noise_std == 0.0) {
                const Scalar x = std::clamp(mu, Scalar{0.0}, Scalar{1.0});
                int k = std::clamp(static_cast<int>(std::floor(x * res)), 0, res - 1);
                p[static_cast<std::size_t>(k)] = 1.0;
            } else {
                for (int k = 0; k < res; ++k) {
                    const Scalar lo = static_cast<Scalar>(k) / res;
                    const Scalar hi = static_cast<Scalar>(k + 1) / res;
                    const Scalar c_lo = (k == 0)
                        ? 0.0
                        : normal_cdf((lo - mu) / spec.noise_std);
                    const Scalar c_hi = (k == res - 1)
                        ? 1.0
                        : normal_cdf((hi - mu) / spec.noise_std);
                    p[static_cast<std::size_t>(k)] = c_hi - c_lo;
                }
            }
            Scalar er = 0.0;
            for (int k = 0; k < res; ++k) {
                const Scalar pk = p[static_cast<std::size_t>(k)];
                if (pk <= 0.0) continue;
                er += pk * (in_goal[static_cast<std::size_t>(k)]
                                ? spec.rewards.goal_reward
                                : spec.rewards.step_cost);
                if (!in_goal[static_cast<std::size_t>(k)])
                    rows[static_cast<std::size_t>(a)].emplace_back(k, pk);
            }
            m.reward[static_cast<std::size_t>(j)][static_cast<std::size_t>(a)] = er;
        }
    }
    return m;
}

}  // namespace

OptimalValues value_iteration_oracle(const MdpSpec& spec, int grid_resolution,
                                     Scalar tol) {
    validate(spec);
    if (tol <= 0.0) throw ArgumentError("value iteration tol must be > 0");
    if (spec.kind == EnvKind::LineWorld && grid_resolution < 2)
        throw ArgumentError("lineworld grid_resolution must be >= 2");

    const int res = (spec.kind == EnvKind::GridWorld) ? spec.grid_size : grid_resolution;
    const DiscreteModel model = (spec.kind == EnvKind::GridWorld)
        ? build_grid_model(spec)
        : build_line_model(spec, res);

    OptimalValues out;
    out.spec = spec;
    out.resolution = res;
    out.v = Vector::Zero(model.n_states);
    out.q = Matrix::Zero(model.n_states, model.n_actions);
    out.greedy_actions.assign(static_cast<std::size_t>(model.n_states), 0);

    for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
        Scalar max_update = 0.0;
        Vector v_new = Vector::Zero(model.n_states);
        for (int s = 0; s < model.n_states; ++s) {
            if (model.terminal[static_cast<std::size_t>(s)]) continue;
            Scalar best = -std::numeric_limits<Scalar>::infinity();
            for (int a = 0; a < model.n_actions; ++a) {
                Scalar q = model.reward[static_cast<std::size_t>(s)][static_cast<std::size_t>(a)];
                for (const auto& [ns, p] :
                     model.next[static_cast<std::size_t>(s)][static_cast<std::size_t>(a)])
                    q += spec.gamma * p * out.v[ns];
                out.q(s, a) = q;
                best = std::max(best, q);
            }
            v_new[s] = best;
            max_update = std::max(max_update, std::abs(v_new[s] - out.v[s]));
        }
        out.v = v_new;
        out.residuals.push_back(max_update);
        if (max_update < tol) break;
    }
    if (out.residuals.empty() || out.residuals.back() >= tol)
        throw NumericalError("value iteration failed to reach tol " +
                             std::to_string(tol) + " within " +
                             std::to_string(kMaxSweeps) + " sweeps");

    // Final greedy extraction from converged Q; ties resolve to the lowest
    // action index.
    for (int s = 0; s < model.n_states; ++s) {
        if (model.terminal[static_cast<std::size_t>(s)]) continue;
        int best_a = 0;
        for (int a = 1; a < model.n_actions; ++a)
            if (out.q(s, a) > out.q(s, best_a)) best_a = a;
        out.greedy_actions[static_cast<std::size_t>(s)] = best_a;
    }
    return out;
}

// ─── Dataset generation and evaluation ──────────────────────────────────────

std::string to_string(Quality q) {
    switch (q) {
        case Quality::Random: return "random";
        case Quality::Medium: return "medium";
        case Quality::Expert: return "expert";
    }
    throw ArgumentError("unreachable quality value");
}

Quality quality_from_string(const std::string& s) {
    if (s == "random") return Quality::Random;
    if (s == "medium") return Quality::Medium;
    if (s == "expert") return Quality::Expert;
    throw ConfigError("unknown behavior quality: '" + s + "'");
}

namespace {

constexpr std::uint64_t kStreamBehavior = 0x11;
constexpr std::uint64_t kStreamEpisodeStart = 0x12;
constexpr std::uint64_t kStreamEvalEpisode = 0x13;

constexpr int kOracleResolution = 101;
constexpr Scalar kOracleTol = 1e-10;

}  // namespace

TransitionDataset generate_dataset(Environment& env, Index n_transitions,
                                   Quality quality, std::uint64_t seed) {
    if (n_transitions < 1)
        throw ArgumentError("n_transitions must be >= 1");

    std::optional<OptimalValues> oracle;
    if (quality != Quality::Random)
        oracle = value_iteration_oracle(env.spec(), kOracleResolution, kOracleTol);
    const Policy greedy = oracle ? oracle->greedy() : Policy{};

    Rng behavior(derive_seed(seed, kStreamBehavior));
    TransitionDataset data;
    data.spec = env.spec();
    data.behavior_tag = to_string(quality);
    data.generation_seed = seed;
    data.transitions.reserve(static_cast<std::size_t>(n_transitions));

    std::uint64_t episode = 0;
    while (static_cast<Index>(data.transitions.size()) < n_transitions) {
        Vector s = env.reset(derive_seed(seed, kStreamEpisodeStart, episode));
        ++episode;
        for (int t = 0; t < env.spec().horizon; ++t) {
            int a;
            switch (quality) {
                case Quality::Random:
                    a = static_cast<int>(behavior.uniform_index(env.spec().n_actions));
                    break;
                case Quality::Expert:
                    a = greedy(s);
                    break;
                case Quality::Medium:
                    // ε-greedy: the exploration draw happens every step so the
                    // stream position does not depend on which branch is taken.
                    if (behavior.uniform() < kMediumEpsilon)
                        a = static_cast<int>(behavior.uniform_index(env.spec().n_actions));
                    else
                        a = greedy(s);
                    break;
                default:
                    throw ArgumentError("unreachable quality value");
            }
            const StepResult sr = env.step(s, a);
            Transition tr;
            tr.s = s;
            tr.a = a;
            tr.r = sr.r;
            tr.s_next = sr.s_next;
            tr.terminal = sr.terminal;
            tr.idx = static_cast<Index>(data.transitions.size());
            data.transitions.push_back(std::move(tr));
            if (static_cast<Index>(data.transitions.size()) == n_transitions) break;
            if (sr.terminal) break;
            s = sr.s_next;
        }
    }
    return data;
}

MeanReturn evaluate_policy(Environment& env, const Policy& policy,
                           Index n_episodes, std::uint64_t seed) {
    if (n_episodes < 1) throw ArgumentError("n_episodes must be >= 1");
    std::vector<Scalar> returns;
    returns.reserve(static_cast<std::size_t>(n_episodes));
    for (Index ep = 0; ep < n_episodes; ++ep) {
        Vector s = env.reset(derive_seed(seed, kStreamEvalEpisode,
                                         static_cast<std::uint64_t>(ep)));
        Scalar total = 0.0;
        for (int t = 0; t < env.spec().horizon; ++t) {
            const StepResult sr = env.step(s, policy(s));
            total += sr.r;
            if (sr.terminal) break;
            s = sr.s_next;
        }
        returns.push_back(total);
    }
    return summarize(returns);
}

}  // namespace poisonlab
