#pragma once

#include "poisonlab/envlab.hpp"
#include "poisonlab/features.hpp"
#include "poisonlab/types.hpp"

namespace poisonlab {

// Victim trainers: the offline learners whose policies the attacks degrade.
// All victims are linear in theta so that the sensitivity analysis has exact
// gradients; stochasticity-free solvers keep retraining bit-reproducible.

enum class AlgoTag { TabQ, LinFQI, ConsLinFQI };

std::string to_string(AlgoTag tag);
AlgoTag algo_from_string(const std::string& s);

struct VictimModel {
    AlgoTag algo = AlgoTag::TabQ;
    FeatureMap feature_map;
    Vector theta;
    Scalar gamma = 0.95;
    std::vector<Scalar> train_log;  // per-iteration residual
};

Scalar q_value(const VictimModel& m, const Vector& s, int a);
Vector q_values(const VictimModel& m, const Vector& s);  // one entry per action

/// Greedy policy of the model; ties resolve to the lowest action index.
Policy greedy_policy(const VictimModel& m);

struct TrainConfig {
    int n_iterations = 60;
    Scalar tol = 1e-10;           // stop when the iteration residual drops below
    Scalar ridge_lambda = 1e-6;   // FQI regression regularizer
    Scalar conservative_beta = 0.0;
    Scalar learning_rate = 0.4;   // tabular sweeps
    int tabular_line_bins = 50;   // binning for tabular victims on LineWorld
};

/// Tabular Q-learning sweeps over the dataset in idx order.
/// train_log records the mean |TD error| per sweep.
VictimModel train_tabular_q(const TransitionDataset& data, const TrainConfig& cfg);

/// Fitted Q-iteration with exact ridge-regression solves.
/// train_log records the max |theta change| per iteration.
VictimModel train_linear_fqi(const TransitionDataset& data, const FeatureMap& fm,
                             const TrainConfig& cfg);
VictimModel train_linear_fqi(const TransitionDataset& data, const TrainConfig& cfg);

/// FQI with a conservative penalty: regression targets are shifted by
/// -beta * (mean_a Q(s, a) - Q(s, a_i)) before each solve. beta = 0 reduces
/// exactly to train_linear_fqi.
VictimModel train_conservative_fqi(const TransitionDataset& data,
                                   const FeatureMap& fm, const TrainConfig& cfg);
VictimModel train_conservative_fqi(const TransitionDataset& data,
                                   const TrainConfig& cfg);

/// Dispatch on the tag, using each algorithm's default feature map.
VictimModel train_victim(AlgoTag tag, const TransitionDataset& data,
                         const TrainConfig& cfg);

}  // namespace poisonlab
