#pragma once

#include "poisonlab/rng.hpp"
#include "poisonlab/types.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

namespace poisonlab {

// ─── MDP specification ──────────────────────────────────────────────────────

enum class EnvKind { GridWorld, LineWorld };

std::string to_string(EnvKind kind);
EnvKind env_kind_from_string(const std::string& s);

struct RewardSpec {
    Scalar goal_reward = 1.0;
    Scalar step_cost = -0.01;
    Scalar hazard_cost = -1.0;
};

/// Fully specifies one of the two lab environments.
///
/// GridWorld: grid_size × grid_size cells, 4 actions (up/down/left/right),
/// deterministic moves, goal at (grid_size-1, grid_size-1), optional hazard
/// cells. LineWorld: x in [0,1], 2 actions moving x by ±0.05 plus Gaussian
/// noise, terminal reward window |x - 0.9| < 0.05.
struct MdpSpec {
    EnvKind kind = EnvKind::GridWorld;
    int state_dim = 2;
    int n_actions = 4;
    Scalar gamma = 0.95;
    int horizon = 60;
    RewardSpec rewards;
    Scalar noise_std = 0.0;  // LineWorld transition noise
    std::uint64_t seed = 0;
    int grid_size = 5;                              // GridWorld
    std::vector<std::pair<int, int>> hazards;       // GridWorld cells
};

/// Throws ConfigError naming the violated field.
void validate(const MdpSpec& spec);

MdpSpec make_gridworld_spec(int grid_size = 5, Scalar gamma = 0.95, int horizon = 60,
                            std::uint64_t seed = 0);
MdpSpec make_lineworld_spec(Scalar noise_std = 0.01, Scalar gamma = 0.95,
                            int horizon = 100, std::uint64_t seed = 0);

// LineWorld geometry. Step size and goal window are part of the environment
// definition, not tunables.
inline constexpr Scalar kLineStep = 0.05;
inline constexpr Scalar kLineGoalCenter = 0.9;
inline constexpr Scalar kLineGoalHalfWidth = 0.05;
inline constexpr Scalar kLineResetLo = 0.0;
inline constexpr Scalar kLineResetHi = 0.2;

// ─── Transitions and datasets ───────────────────────────────────────────────

/// One (s, a, r, s', terminal) record. `idx` is the stable dataset ordinal;
/// `poisoned` is the only field attacks may flip after construction.
struct Transition {
    Vector s;
    int a = 0;
    Scalar r = 0.0;
    Vector s_next;
    bool terminal = false;
    Index idx = 0;
    bool poisoned = false;
};

struct TransitionDataset {
    MdpSpec spec;
    std::vector<Transition> transitions;
    std::string behavior_tag;
    std::uint64_t generation_seed = 0;

    Index size() const { return static_cast<Index>(transitions.size()); }
};

/// Checks dimensional consistency and the dense-unique idx invariant.
void validate(const TransitionDataset& data);

// ─── Environment ────────────────────────────────────────────────────────────

struct StepResult {
    Vector s_next;
    Scalar r = 0.0;
    bool terminal = false;
};

class Environment {
  public:
    explicit Environment(MdpSpec spec);

    const MdpSpec& spec() const { return spec_; }

    /// Seeds the internal stream and returns a start state.
    /// GridWorld: uniform over non-terminal cells. LineWorld: x ~ U(0, 0.2).
    Vector reset(std::uint64_t seed);

    /// Transition from `s` under action `a`. LineWorld consumes one normal
    /// draw from the stream seeded at reset; GridWorld is deterministic.
    StepResult step(const Vector& s, int a);

    bool is_terminal(const Vector& s) const;

    /// Componentwise valid range of states; perturbed states are clipped here.
    void state_bounds(Vector& lo, Vector& hi) const;

    std::vector<std::pair<int, int>> non_terminal_cells() const;  // GridWorld

  private:
    MdpSpec spec_;
    Rng rng_;
};

Environment build_env(const MdpSpec& spec);

// ─── Planning oracle ────────────────────────────────────────────────────────

using Policy = std::function<int(const Vector&)>;

/// Exact (GridWorld) or discretized (LineWorld) optimal values from value
/// iteration, with the greedy optimal policy.
struct OptimalValues {
    MdpSpec spec;
    int resolution = 0;  // LineWorld bins; grid_size for GridWorld
    Vector v;            // per discrete state
    Matrix q;            // n_states × n_actions
    std::vector<int> greedy_actions;
    std::vector<Scalar> residuals;  // max |V update| per sweep

    int n_states() const { return static_cast<int>(v.size()); }
    int state_index(const Vector& s) const;
    Policy greedy() const;
};

OptimalValues value_iteration_oracle(const MdpSpec& spec, int grid_resolution,
                                     Scalar tol);

// ─── Behavior data and evaluation ───────────────────────────────────────────

enum class Quality { Random, Medium, Expert };

std::string to_string(Quality q);
Quality quality_from_string(const std::string& s);

/// Epsilon used by the "medium" behavior policy (ε-greedy around the oracle).
inline constexpr Scalar kMediumEpsilon = 0.4;

TransitionDataset generate_dataset(Environment& env, Index n_transitions,
                                   Quality quality, std::uint64_t seed);

MeanReturn evaluate_policy(Environment& env, const Policy& policy,
                           Index n_episodes, std::uint64_t seed);

}  // namespace poisonlab
