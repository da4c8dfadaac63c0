#include "poisonlab/harness.hpp"

#include "poisonlab/metrics.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>

namespace poisonlab {

namespace {

using ordered_json = nlohmann::ordered_json;

constexpr std::uint64_t kStreamDataset = 0x31;
constexpr std::uint64_t kStreamEval = 0x32;
constexpr std::uint64_t kStreamAttack = 0x33;

constexpr Scalar kMadToStd = 1.4826;  // 1 / Phi^-1(3/4)

const char* kDeskUnitsNote =
    "epsilon values are desk units: 1 unit = RMS over the perturbed columns "
    "of the per-column robust std (1.4826 MAD; plain std when the MAD is "
    "zero, 1.0 when both are); budgets match across strategies via c_total = "
    "rho * N * epsilon_raw^2";

Scalar column_median(Vector v) {
    const Index n = v.size();
    std::sort(v.data(), v.data() + n);
    if (n % 2 == 1) return v(n / 2);
    return 0.5 * (v(n / 2 - 1) + v(n / 2));
}

Scalar robust_column_scale(const Vector& col) {
    const Scalar med = column_median(col);
    const Scalar mad = column_median((col.array() - med).abs().matrix());
    if (mad > 0.0) return kMadToStd * mad;
    const Scalar mean = col.mean();
    const Scalar var = (col.array() - mean).square().mean();
    const Scalar sd = std::sqrt(var);
    return sd > 0.0 ? sd : 1.0;
}

std::string hex_digest(std::uint64_t h) {
    char buf[24];
    std::snprintf(buf, sizeof(buf), "0x%016llx",
                  static_cast<unsigned long long>(h));
    return buf;
}

// ─── config <-> json helpers ────────────────────────────────────────────────

ordered_json train_config_json(const TrainConfig& tc) {
    ordered_json j;
    j["n_iterations"] = tc.n_iterations;
    j["tol"] = tc.tol;
    j["ridge_lambda"] = tc.ridge_lambda;
    j["conservative_beta"] = tc.conservative_beta;
    j["learning_rate"] = tc.learning_rate;
    j["tabular_line_bins"] = tc.tabular_line_bins;
    return j;
}

TrainConfig train_config_from(const ordered_json& j) {
    TrainConfig tc;
    tc.n_iterations = j.value("n_iterations", tc.n_iterations);
    tc.tol = j.value("tol", tc.tol);
    tc.ridge_lambda = j.value("ridge_lambda", tc.ridge_lambda);
    tc.conservative_beta = j.value("conservative_beta", tc.conservative_beta);
    tc.learning_rate = j.value("learning_rate", tc.learning_rate);
    tc.tabular_line_bins = j.value("tabular_line_bins", tc.tabular_line_bins);
    return tc;
}

ordered_json config_json(const ExperimentConfig& cfg) {
    ordered_json j;
    j["name"] = cfg.name;
    j["env"] = ordered_json::parse(mdp_spec_to_json(cfg.env));
    j["dataset_size"] = cfg.dataset_size;
    j["quality"] = to_string(cfg.quality);
    j["algo"] = to_string(cfg.algo);
    j["train"] = train_config_json(cfg.train);
    j["surface"] = to_string(cfg.surface);
    j["include_next_state"] = cfg.include_next_state;
    j["support"] = to_string(cfg.support);
    ordered_json grid = ordered_json::array();
    for (const BudgetCell& cell : cfg.grid) {
        ordered_json c;
        c["rho"] = cell.rho;
        c["epsilon_desk"] = cell.epsilon_desk;
        grid.push_back(c);
    }
    j["grid"] = grid;
    ordered_json strategies = ordered_json::array();
    for (Strategy s : cfg.strategies) strategies.push_back(to_string(s));
    j["strategies"] = strategies;
    j["rescore_rounds"] = cfg.rescore_rounds;
    j["n_eval_episodes"] = cfg.n_eval_episodes;
    j["n_seeds"] = cfg.n_seeds;
    ordered_json det;
    det["robustz_threshold"] = cfg.detectors.robustz_threshold;
    det["mahalanobis_quantile"] = cfg.detectors.mahalanobis_quantile;
    det["spectral_k_remove"] = cfg.detectors.spectral_k_remove;
    j["detectors"] = det;
    j["run_detectors"] = cfg.run_detectors;
    j["base_seed"] = cfg.base_seed;
    j["output_dir"] = cfg.output_dir;
    return j;
}

ExperimentConfig config_from(const ordered_json& j) {
    ExperimentConfig cfg;
    cfg.name = j.value("name", cfg.name);
    if (j.contains("env")) cfg.env = mdp_spec_from_json(j.at("env").dump());
    cfg.dataset_size = j.value("dataset_size", cfg.dataset_size);
    if (j.contains("quality")) {
        cfg.quality = quality_from_string(j.at("quality").get<std::string>());
    }
    if (j.contains("algo")) {
        cfg.algo = algo_from_string(j.at("algo").get<std::string>());
    }
    if (j.contains("train")) cfg.train = train_config_from(j.at("train"));
    if (j.contains("surface")) {
        cfg.surface = surface_from_string(j.at("surface").get<std::string>());
    }
    cfg.include_next_state = j.value("include_next_state", cfg.include_next_state);
    if (j.contains("support")) {
        cfg.support = support_mode_from_string(j.at("support").get<std::string>());
    }
    if (j.contains("grid")) {
        cfg.grid.clear();
        for (const auto& c : j.at("grid")) {
            BudgetCell cell;
            cell.rho = c.at("rho").get<Scalar>();
            cell.epsilon_desk = c.at("epsilon_desk").get<Scalar>();
            cfg.grid.push_back(cell);
        }
    }
    if (j.contains("strategies")) {
        cfg.strategies.clear();
        for (const auto& s : j.at("strategies")) {
            cfg.strategies.push_back(strategy_from_string(s.get<std::string>()));
        }
    }
    cfg.rescore_rounds = j.value("rescore_rounds", cfg.rescore_rounds);
    cfg.n_eval_episodes = j.value("n_eval_episodes", cfg.n_eval_episodes);
    cfg.n_seeds = j.value("n_seeds", cfg.n_seeds);
    if (j.contains("detectors")) {
        const auto& det = j.at("detectors");
        cfg.detectors.robustz_threshold =
            det.value("robustz_threshold", cfg.detectors.robustz_threshold);
        cfg.detectors.mahalanobis_quantile =
            det.value("mahalanobis_quantile", cfg.detectors.mahalanobis_quantile);
        cfg.detectors.spectral_k_remove =
            det.value("spectral_k_remove", cfg.detectors.spectral_k_remove);
    }
    cfg.run_detectors = j.value("run_detectors", cfg.run_detectors);
    cfg.base_seed = j.value("base_seed", cfg.base_seed);
    cfg.output_dir = j.value("output_dir", cfg.output_dir);
    return cfg;
}

// ─── report <-> json helpers ────────────────────────────────────────────────

ordered_json optional_json(const std::optional<Scalar>& v) {
    if (v.has_value()) return *v;
    return nullptr;
}

std::optional<Scalar> optional_from(const ordered_json& j) {
    if (j.is_null()) return std::nullopt;
    return j.get<Scalar>();
}

ordered_json stealth_row_json(const StealthRow& row) {
    ordered_json j;
    j["detector"] = row.detector;
    j["attack"] = row.attack;
    j["recall"] = row.recall;
    j["precision"] = row.precision;
    j["auc_vs_clean"] = optional_json(row.auc_vs_clean);
    j["within_auc"] = optional_json(row.within_auc);
    j["max_score"] = row.max_score;
    j["flagged_count"] = row.flagged_count;
    return j;
}

StealthRow stealth_row_from(const ordered_json& j) {
    StealthRow row;
    row.detector = j.at("detector").get<std::string>();
    row.attack = j.at("attack").get<std::string>();
    row.recall = j.at("recall").get<Scalar>();
    row.precision = j.at("precision").get<Scalar>();
    row.auc_vs_clean = optional_from(j.at("auc_vs_clean"));
    row.within_auc = optional_from(j.at("within_auc"));
    row.max_score = j.at("max_score").get<Scalar>();
    row.flagged_count = j.at("flagged_count").get<Index>();
    return row;
}

ordered_json cell_json(const CellResult& cell) {
    ordered_json j;
    j["victim"] = cell.victim;
    j["cell_index"] = cell.cell_index;
    j["rho"] = cell.rho;
    j["epsilon_desk"] = cell.epsilon_desk;
    j["epsilon_raw"] = cell.epsilon_raw;
    j["c_total"] = cell.c_total;
    j["strategy"] = cell.strategy;
    j["seed_index"] = cell.seed_index;
    j["dataset_seed"] = cell.dataset_seed;
    j["eval_seed"] = cell.eval_seed;
    j["attack_seed"] = cell.attack_seed;
    j["desk_unit"] = cell.desk_unit_value;
    j["ok"] = cell.ok;
    j["error"] = cell.error;
    j["clean_score"] = cell.clean_score;
    j["post_attack_score"] = cell.post_attack_score;
    j["reduction_pct"] = cell.reduction;
    j["budgeted_energy"] = cell.budgeted_energy;
    j["delivered_energy"] = cell.delivered_energy;
    j["n_poisoned"] = cell.n_poisoned;
    ordered_json stealth = ordered_json::array();
    for (const StealthRow& row : cell.stealth) stealth.push_back(stealth_row_json(row));
    j["stealth"] = stealth;
    return j;
}

CellResult cell_from(const ordered_json& j) {
    CellResult cell;
    cell.victim = j.at("victim").get<std::string>();
    cell.cell_index = j.at("cell_index").get<Index>();
    cell.rho = j.at("rho").get<Scalar>();
    cell.epsilon_desk = j.at("epsilon_desk").get<Scalar>();
    cell.epsilon_raw = j.at("epsilon_raw").get<Scalar>();
    cell.c_total = j.at("c_total").get<Scalar>();
    cell.strategy = j.at("strategy").get<std::string>();
    cell.seed_index = j.at("seed_index").get<Index>();
    cell.dataset_seed = j.at("dataset_seed").get<std::uint64_t>();
    cell.eval_seed = j.at("eval_seed").get<std::uint64_t>();
    cell.attack_seed = j.at("attack_seed").get<std::uint64_t>();
    cell.desk_unit_value = j.at("desk_unit").get<Scalar>();
    cell.ok = j.at("ok").get<bool>();
    cell.error = j.at("error").get<std::string>();
    cell.clean_score = j.at("clean_score").get<Scalar>();
    cell.post_attack_score = j.at("post_attack_score").get<Scalar>();
    cell.reduction = j.at("reduction_pct").get<Scalar>();
    cell.budgeted_energy = j.at("budgeted_energy").get<Scalar>();
    cell.delivered_energy = j.at("delivered_energy").get<Scalar>();
    cell.n_poisoned = j.at("n_poisoned").get<Index>();
    for (const auto& row : j.at("stealth")) {
        cell.stealth.push_back(stealth_row_from(row));
    }
    return cell;
}

ordered_json aggregate_json(const AggregateRow& a) {
    ordered_json j;
    j["victim"] = a.victim;
    j["rho"] = a.rho;
    j["epsilon_desk"] = a.epsilon_desk;
    j["strategy"] = a.strategy;
    j["n_ok"] = a.n_ok;
    j["mean_post_attack_score"] = a.mean_post;
    j["se_post_attack_score"] = optional_json(a.se_post);
    j["mean_reduction_pct"] = a.mean_reduction;
    j["se_reduction_pct"] = optional_json(a.se_reduction);
    j["mean_delivered_energy"] = a.mean_energy;
    return j;
}

AggregateRow aggregate_from(const ordered_json& j) {
    AggregateRow a;
    a.victim = j.at("victim").get<std::string>();
    a.rho = j.at("rho").get<Scalar>();
    a.epsilon_desk = j.at("epsilon_desk").get<Scalar>();
    a.strategy = j.at("strategy").get<std::string>();
    a.n_ok = j.at("n_ok").get<Index>();
    a.mean_post = j.at("mean_post_attack_score").get<Scalar>();
    a.se_post = optional_from(j.at("se_post_attack_score"));
    a.mean_reduction = j.at("mean_reduction_pct").get<Scalar>();
    a.se_reduction = optional_from(j.at("se_reduction_pct"));
    a.mean_energy = j.at("mean_delivered_energy").get<Scalar>();
    return a;
}

ordered_json verdict_json(const HierarchyVerdict& v) {
    ordered_json j;
    j["rho"] = v.rho;
    j["epsilon_desk"] = v.epsilon_desk;
    j["ordered"] = v.ordered;
    j["global_below_local"] = v.global_below_local;
    j["local_below_noise"] = v.local_below_noise;
    return j;
}

HierarchyVerdict verdict_from(const ordered_json& j) {
    HierarchyVerdict v;
    v.rho = j.at("rho").get<Scalar>();
    v.epsilon_desk = j.at("epsilon_desk").get<Scalar>();
    v.ordered = j.at("ordered").get<bool>();
    v.global_below_local = j.at("global_below_local").get<bool>();
    v.local_below_noise = j.at("local_below_noise").get<bool>();
    return v;
}

const AggregateRow* find_aggregate(const std::vector<AggregateRow>& rows,
                                   const BudgetCell& cell, const std::string& name) {
    for (const AggregateRow& a : rows) {
        if (a.rho == cell.rho && a.epsilon_desk == cell.epsilon_desk &&
            a.strategy == name && a.n_ok > 0) {
            return &a;
        }
    }
    return nullptr;
}

bool gap_significant(const AggregateRow& lower, const AggregateRow& upper) {
    if (!lower.se_post.has_value() || !upper.se_post.has_value()) return false;
    const Scalar se = std::sqrt(*lower.se_post * *lower.se_post +
                                *upper.se_post * *upper.se_post);
    return upper.mean_post - lower.mean_post > 2.0 * se;
}

std::string format_fixed(Scalar x, int decimals) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.*f", decimals, x);
    return buf;
}

std::string csv_quote(const std::string& s) {
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += "\"\"";
        else out += c;
    }
    return out + "\"";
}

}  // namespace

// ─── desk units and grids ───────────────────────────────────────────────────

Scalar desk_unit(const TransitionDataset& data, Surface surface,
                 bool include_next_state) {
    if (data.transitions.empty()) throw DataError("desk_unit: dataset is empty");
    const Index n = data.size();
    const auto sd = static_cast<Index>(data.transitions.front().s.size());
    std::vector<Vector> columns;
    const bool states = surface != Surface::Reward;
    const bool rewards = surface != Surface::State;
    if (states) {
        for (Index d = 0; d < sd; ++d) {
            Vector col(n);
            for (Index i = 0; i < n; ++i) {
                col(i) = data.transitions[static_cast<std::size_t>(i)].s(d);
            }
            columns.push_back(std::move(col));
        }
    }
    if (rewards) {
        Vector col(n);
        for (Index i = 0; i < n; ++i) {
            col(i) = data.transitions[static_cast<std::size_t>(i)].r;
        }
        columns.push_back(std::move(col));
    }
    if (states && include_next_state) {
        for (Index d = 0; d < sd; ++d) {
            Vector col(n);
            for (Index i = 0; i < n; ++i) {
                col(i) = data.transitions[static_cast<std::size_t>(i)].s_next(d);
            }
            columns.push_back(std::move(col));
        }
    }
    Scalar sum_sq = 0.0;
    for (const Vector& col : columns) {
        const Scalar scale = robust_column_scale(col);
        sum_sq += scale * scale;
    }
    return std::sqrt(sum_sq / static_cast<Scalar>(columns.size()));
}

std::vector<BudgetCell> default_budget_grid() {
    return {{0.01, 0.5}, {0.015, 0.33}, {0.02, 0.25}, {0.025, 0.2},
            {0.033, 0.15}, {0.05, 0.1}, {0.1, 0.05}};
}

// ─── config ─────────────────────────────────────────────────────────────────

void validate(const ExperimentConfig& cfg) {
    validate(cfg.env);
    if (cfg.dataset_size < 10) {
        throw ConfigError("dataset_size must be at least 10");
    }
    if (cfg.n_seeds < 1) throw ConfigError("n_seeds must be at least 1");
    if (cfg.n_eval_episodes < 1) {
        throw ConfigError("n_eval_episodes must be at least 1");
    }
    if (cfg.grid.empty()) throw ConfigError("grid must not be empty");
    for (const BudgetCell& cell : cfg.grid) {
        if (!(cell.rho > 0.0) || cell.rho > 1.0) {
            throw ConfigError("grid rho must lie in (0, 1]");
        }
        if (!(cell.epsilon_desk >= 0.0)) {
            throw ConfigError("grid epsilon_desk must be non-negative");
        }
    }
    if (cfg.strategies.empty()) throw ConfigError("strategies must not be empty");
    if (cfg.rescore_rounds < 1 || cfg.rescore_rounds > 5) {
        throw ConfigError("rescore_rounds must lie in [1, 5]");
    }
}

std::string experiment_config_to_json(const ExperimentConfig& cfg) {
    return config_json(cfg).dump(2) + "\n";
}

ExperimentConfig experiment_config_from_json(const std::string& text) {
    ordered_json j;
    try {
        j = ordered_json::parse(text);
    } catch (const std::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    try {
        return config_from(j);
    } catch (const Error&) {
        throw;
    } catch (const std::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
}

std::string config_hash(const ExperimentConfig& cfg) {
    const std::string canon = experiment_config_to_json(cfg);
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : canon) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return hex_digest(h);
}

// ─── benchmark presets ──────────────────────────────────────────────────────

ExperimentConfig lineworld_benchmark() {
    ExperimentConfig cfg;
    cfg.name = "lineworld_linfqi";
    cfg.env = make_lineworld_spec(0.01, 0.9, 120);
    cfg.env.rewards.step_cost = -0.005;
    cfg.algo = AlgoTag::LinFQI;
    // relocating records on the state surface plants spurious goal evidence;
    // reward bumps on an already-rewarding goal buy nothing on this victim
    cfg.surface = Surface::State;
    cfg.support = SupportMode::TopRho;
    // semi-converged on purpose: a converged least-squares fit is anchored by
    // the untouched 99% of the data and barely moves under a 1% perturbation
    cfg.train.n_iterations = 10;
    return cfg;
}

ExperimentConfig gridworld_benchmark() {
    ExperimentConfig cfg;
    cfg.name = "gridworld_tabq";
    cfg.env = make_gridworld_spec(9, 0.99, 100);
    cfg.env.hazards = {{2, 2}, {2, 6}, {6, 2}, {6, 6}};
    cfg.algo = AlgoTag::TabQ;
    cfg.surface = Surface::Reward;
    cfg.support = SupportMode::TopRho;
    // small learning rate widens the per-cell averaging window (~1/lr
    // records), so cell values respond to accumulated reward shifts instead
    // of whichever duplicate happens to arrive last; ten sweeps leave the
    // value table semi-converged with discriminative td errors
    cfg.train.n_iterations = 10;
    cfg.train.learning_rate = 0.1;
    return cfg;
}

ExperimentConfig conservative_benchmark() {
    ExperimentConfig cfg = lineworld_benchmark();
    cfg.name = "lineworld_conslinfqi";
    cfg.algo = AlgoTag::ConsLinFQI;
    cfg.train.conservative_beta = 0.1;
    return cfg;
}

ExperimentConfig stealth_benchmark() {
    ExperimentConfig cfg = lineworld_benchmark();
    cfg.name = "lineworld_stealth";
    cfg.grid = {{0.05, 1.0}};
    cfg.strategies = {Strategy::GlobalAllocation, Strategy::RandomNoise};
    cfg.run_detectors = true;
    return cfg;
}

// ─── experiment runner ──────────────────────────────────────────────────────

ExperimentReport run_experiment(const ExperimentConfig& cfg) {
    validate(cfg);
    ExperimentReport report;
    report.config = cfg;
    report.config_digest = config_hash(cfg);
    const std::string victim_name = to_string(cfg.algo);
    const auto n = static_cast<Scalar>(cfg.dataset_size);

    const auto retrain = [&cfg](const TransitionDataset& d) {
        return train_victim(cfg.algo, d, cfg.train);
    };

    for (Index seed_idx = 0; seed_idx < cfg.n_seeds; ++seed_idx) {
        const auto s = static_cast<std::uint64_t>(seed_idx);
        const std::uint64_t dataset_seed =
            derive_seed(cfg.base_seed, kStreamDataset, s);
        const std::uint64_t eval_seed = derive_seed(cfg.base_seed, kStreamEval, s);

        Environment env(cfg.env);
        const TransitionDataset data =
            generate_dataset(env, cfg.dataset_size, cfg.quality, dataset_seed);
        const VictimModel clean_model = retrain(data);
        const Scalar clean_score =
            evaluate_policy(env, greedy_policy(clean_model), cfg.n_eval_episodes,
                            eval_seed)
                .mean;
        report.clean_scores.push_back(clean_score);
        const auto records = score_dataset(
            clean_model, data, {cfg.surface, cfg.include_next_state});
        const Scalar u = desk_unit(data, cfg.surface, cfg.include_next_state);

        for (std::size_t cell_idx = 0; cell_idx < cfg.grid.size(); ++cell_idx) {
            const BudgetCell& cell = cfg.grid[cell_idx];
            const Scalar eps_raw = cell.epsilon_desk * u;
            const Scalar c_total = cell.rho * n * eps_raw * eps_raw;

            for (std::size_t strat_idx = 0; strat_idx < cfg.strategies.size();
                 ++strat_idx) {
                const Strategy strat = cfg.strategies[strat_idx];
                CellResult row;
                row.victim = victim_name;
                row.cell_index = static_cast<Index>(cell_idx);
                row.rho = cell.rho;
                row.epsilon_desk = cell.epsilon_desk;
                row.epsilon_raw = eps_raw;
                row.c_total = c_total;
                row.strategy = to_string(strat);
                row.seed_index = seed_idx;
                row.dataset_seed = dataset_seed;
                row.eval_seed = eval_seed;
                row.attack_seed = derive_seed(
                    cfg.base_seed, kStreamAttack,
                    s * 1048576 + static_cast<std::uint64_t>(cell_idx) * 1024 +
                        static_cast<std::uint64_t>(strat_idx));
                row.desk_unit_value = u;
                row.clean_score = clean_score;
                try {
                    PoisonedDataset poison;
                    if (eps_raw == 0.0) {
                        // zero-energy cell: nothing to perturb
                        poison.base = fingerprint(data);
                        poison.config.strategy = strat;
                        poison.config.surface = cfg.surface;
                        poison.degenerate = true;
                    } else {
                        AttackConfig acfg;
                        acfg.strategy = strat;
                        acfg.surface = cfg.surface;
                        acfg.include_next_state = cfg.include_next_state;
                        acfg.rho = cell.rho;
                        acfg.epsilon_local = eps_raw;
                        acfg.c_total = c_total;
                        acfg.support = cfg.support;
                        acfg.seed = row.attack_seed;
                        acfg.rescore_rounds = cfg.rescore_rounds;
                        poison = cfg.rescore_rounds > 1
                                     ? run_attack_with_rescoring(data, clean_model,
                                                                 acfg, retrain)
                                     : run_attack(data, records, acfg);
                    }
                    const TransitionDataset attacked = apply(data, poison);
                    const VictimModel attacked_model = retrain(attacked);
                    row.post_attack_score =
                        evaluate_policy(env, greedy_policy(attacked_model),
                                        cfg.n_eval_episodes, eval_seed)
                            .mean;
                    row.reduction =
                        clean_score == 0.0
                            ? 0.0
                            : reduction_pct(clean_score, row.post_attack_score);
                    row.budgeted_energy = poison.budgeted_energy;
                    row.delivered_energy = poison.delivered_energy;
                    row.n_poisoned = poison.n_poisoned;
                    if (cfg.run_detectors) {
                        row.stealth = stealth_comparison(data, {poison}, cfg.detectors);
                    }
                    row.ok = true;
                } catch (const std::exception& e) {
                    row.ok = false;
                    row.error = e.what();
                }
                report.cells.push_back(std::move(row));
            }
        }
    }

    // deterministic reduction order: (cell, strategy, seed)
    std::stable_sort(report.cells.begin(), report.cells.end(),
                     [](const CellResult& a, const CellResult& b) {
                         if (a.cell_index != b.cell_index)
                             return a.cell_index < b.cell_index;
                         if (a.strategy != b.strategy)
                             return a.strategy < b.strategy;
                         return a.seed_index < b.seed_index;
                     });

    report.clean_mean = mean(report.clean_scores);
    report.clean_se = standard_error(report.clean_scores);

    for (std::size_t cell_idx = 0; cell_idx < cfg.grid.size(); ++cell_idx) {
        const BudgetCell& cell = cfg.grid[cell_idx];
        for (Strategy strat : cfg.strategies) {
            const std::string name = to_string(strat);
            std::vector<Scalar> posts, reductions, energies;
            for (const CellResult& row : report.cells) {
                if (row.cell_index == static_cast<Index>(cell_idx) &&
                    row.strategy == name && row.ok) {
                    posts.push_back(row.post_attack_score);
                    reductions.push_back(row.reduction);
                    energies.push_back(row.delivered_energy);
                }
            }
            AggregateRow agg;
            agg.victim = victim_name;
            agg.rho = cell.rho;
            agg.epsilon_desk = cell.epsilon_desk;
            agg.strategy = name;
            agg.n_ok = static_cast<Index>(posts.size());
            if (!posts.empty()) {
                agg.mean_post = mean(posts);
                agg.se_post = standard_error(posts);
                agg.mean_reduction = mean(reductions);
                agg.se_reduction = standard_error(reductions);
                agg.mean_energy = mean(energies);
            }
            report.aggregates.push_back(agg);
        }

        HierarchyVerdict verdict;
        verdict.rho = cell.rho;
        verdict.epsilon_desk = cell.epsilon_desk;
        const AggregateRow* global =
            find_aggregate(report.aggregates, cell, "global_allocation");
        const AggregateRow* greedy =
            find_aggregate(report.aggregates, cell, "local_greedy");
        const AggregateRow* subset =
            find_aggregate(report.aggregates, cell, "random_subset");
        const AggregateRow* noise =
            find_aggregate(report.aggregates, cell, "random_noise");
        if (global && greedy && subset && noise) {
            verdict.ordered = global->mean_post <= greedy->mean_post &&
                              greedy->mean_post <= subset->mean_post &&
                              subset->mean_post <= noise->mean_post &&
                              noise->mean_post <= report.clean_mean;
            verdict.global_below_local = gap_significant(*global, *greedy);
            verdict.local_below_noise = gap_significant(*greedy, *noise);
        }
        report.verdicts.push_back(verdict);
    }
    return report;
}

// ─── stealth experiment ─────────────────────────────────────────────────────

StealthReport run_stealth_experiment(const ExperimentConfig& cfg) {
    validate(cfg);
    StealthReport report;
    report.config = cfg;
    report.config_digest = config_hash(cfg);
    const BudgetCell cell = cfg.grid.front();
    const auto n = static_cast<Scalar>(cfg.dataset_size);

    for (Index seed_idx = 0; seed_idx < cfg.n_seeds; ++seed_idx) {
        const auto s = static_cast<std::uint64_t>(seed_idx);
        const std::uint64_t dataset_seed =
            derive_seed(cfg.base_seed, kStreamDataset, s);
        Environment env(cfg.env);
        const TransitionDataset data =
            generate_dataset(env, cfg.dataset_size, cfg.quality, dataset_seed);
        const VictimModel model = train_victim(cfg.algo, data, cfg.train);
        const auto records = score_dataset(
            model, data, {cfg.surface, cfg.include_next_state});
        const Scalar u = desk_unit(data, cfg.surface, cfg.include_next_state);
        const Scalar eps_raw = cell.epsilon_desk * u;
        const Scalar c_total = cell.rho * n * eps_raw * eps_raw;
        if (!(c_total > 0.0)) {
            throw ConfigError("stealth experiment needs a positive budget cell");
        }

        // same total energy: the noise baseline spreads c_total uniformly
        AttackConfig noise;
        noise.strategy = Strategy::RandomNoise;
        noise.surface = cfg.surface;
        noise.include_next_state = cfg.include_next_state;
        noise.rho = 1.0;
        noise.epsilon_local = std::sqrt(c_total / n);
        noise.seed = derive_seed(cfg.base_seed, kStreamAttack, s * 2);
        AttackConfig global;
        global.strategy = Strategy::GlobalAllocation;
        global.surface = cfg.surface;
        global.include_next_state = cfg.include_next_state;
        global.rho = cell.rho;
        global.c_total = c_total;
        global.support = cfg.support;
        global.seed = derive_seed(cfg.base_seed, kStreamAttack, s * 2 + 1);

        SeedStealth seed_rows;
        seed_rows.seed_index = seed_idx;
        seed_rows.rows = stealth_comparison(
            data, {run_attack(data, records, noise), run_attack(data, records, global)},
            cfg.detectors);
        report.seeds.push_back(std::move(seed_rows));
    }

    // aggregate auc per (detector, attack) in first-seen row order
    std::vector<std::pair<std::string, std::string>> keys;
    for (const StealthRow& row : report.seeds.front().rows) {
        keys.emplace_back(row.detector, row.attack);
    }
    for (const auto& [detector, attack] : keys) {
        std::vector<Scalar> aucs;
        for (const SeedStealth& seed_rows : report.seeds) {
            for (const StealthRow& row : seed_rows.rows) {
                if (row.detector == detector && row.attack == attack &&
                    row.auc_vs_clean.has_value()) {
                    aucs.push_back(*row.auc_vs_clean);
                }
            }
        }
        StealthAggregate agg;
        agg.detector = detector;
        agg.attack = attack;
        agg.n_seeds = static_cast<Index>(aucs.size());
        if (!aucs.empty()) {
            agg.mean_auc = mean(aucs);
            agg.se_auc = standard_error(aucs);
        }
        report.aggregates.push_back(agg);
    }
    return report;
}

// ─── report emission ────────────────────────────────────────────────────────

std::string to_string(ReportFormat f) {
    switch (f) {
        case ReportFormat::Csv: return "csv";
        case ReportFormat::Json: return "json";
        case ReportFormat::Markdown: return "markdown";
    }
    throw ArgumentError("unreachable report format");
}

ReportFormat report_format_from_string(const std::string& s) {
    if (s == "csv") return ReportFormat::Csv;
    if (s == "json") return ReportFormat::Json;
    if (s == "markdown" || s == "md") return ReportFormat::Markdown;
    throw ConfigError("unknown report format: '" + s + "'");
}

std::string report_to_json(const ExperimentReport& report) {
    ordered_json j;
    j["config"] = config_json(report.config);
    j["config_digest"] = report.config_digest;
    j["units_note"] = kDeskUnitsNote;
    ordered_json clean;
    clean["scores"] = report.clean_scores;
    clean["mean"] = report.clean_mean;
    clean["se"] = optional_json(report.clean_se);
    j["clean"] = clean;
    ordered_json cells = ordered_json::array();
    for (const CellResult& cell : report.cells) cells.push_back(cell_json(cell));
    j["cells"] = cells;
    ordered_json aggregates = ordered_json::array();
    for (const AggregateRow& a : report.aggregates) {
        aggregates.push_back(aggregate_json(a));
    }
    j["aggregates"] = aggregates;
    ordered_json verdicts = ordered_json::array();
    for (const HierarchyVerdict& v : report.verdicts) {
        verdicts.push_back(verdict_json(v));
    }
    j["verdicts"] = verdicts;
    return j.dump(2) + "\n";
}

ExperimentReport report_from_json(const std::string& text) {
    ordered_json j;
    try {
        j = ordered_json::parse(text);
    } catch (const std::exception& e) {
        throw DataError(std::string("report is not valid JSON: ") + e.what());
    }
    try {
        ExperimentReport report;
        report.config = config_from(j.at("config"));
        report.config_digest = j.at("config_digest").get<std::string>();
        const auto& clean = j.at("clean");
        report.clean_scores = clean.at("scores").get<std::vector<Scalar>>();
        report.clean_mean = clean.at("mean").get<Scalar>();
        report.clean_se = optional_from(clean.at("se"));
        for (const auto& cell : j.at("cells")) {
            report.cells.push_back(cell_from(cell));
        }
        for (const auto& a : j.at("aggregates")) {
            report.aggregates.push_back(aggregate_from(a));
        }
        for (const auto& v : j.at("verdicts")) {
            report.verdicts.push_back(verdict_from(v));
        }
        return report;
    } catch (const Error&) {
        throw;
    } catch (const std::exception& e) {
        throw DataError(std::string("report: ") + e.what());
    }
}

std::string report_to_csv(const ExperimentReport& report) {
    std::string out =
        "victim,rho,epsilon_desk,epsilon_raw,c_total,strategy,seed,"
        "dataset_seed,eval_seed,attack_seed,desk_unit,status,clean_score,"
        "post_attack_score,reduction_pct,budgeted_energy,delivered_energy,"
        "n_poisoned,error\n";
    for (const CellResult& c : report.cells) {
        out += c.victim;
        out += "," + format_number(c.rho);
        out += "," + format_number(c.epsilon_desk);
        out += "," + format_number(c.epsilon_raw);
        out += "," + format_number(c.c_total);
        out += "," + c.strategy;
        out += "," + std::to_string(c.seed_index);
        out += "," + std::to_string(c.dataset_seed);
        out += "," + std::to_string(c.eval_seed);
        out += "," + std::to_string(c.attack_seed);
        out += "," + format_number(c.desk_unit_value);
        out += c.ok ? ",ok" : ",failed";
        out += "," + format_number(c.clean_score);
        out += "," + format_number(c.post_attack_score);
        out += "," + format_number(c.reduction);
        out += "," + format_number(c.budgeted_energy);
        out += "," + format_number(c.delivered_energy);
        out += "," + std::to_string(c.n_poisoned);
        out += "," + csv_quote(c.error);
        out += "\n";
    }
    return out;
}

std::string report_to_markdown(const ExperimentReport& report) {
    const ExperimentConfig& cfg = report.config;
    std::string out = "# " + cfg.name + "\n\n";
    out += "- victim: " + to_string(cfg.algo) + " on " + to_string(cfg.env.kind) +
           ", " + std::to_string(cfg.dataset_size) + " " + to_string(cfg.quality) +
           " transitions, " + std::to_string(cfg.n_seeds) + " seeds, " +
           std::to_string(cfg.n_eval_episodes) + " eval episodes\n";
    out += "- surface: " + to_string(cfg.surface) +
           (cfg.include_next_state ? " (including next state)" : "") + "\n";
    out += std::string("- units: ") + kDeskUnitsNote + "\n";
    out += "- clean score: " + format_fixed(report.clean_mean, 4);
    if (report.clean_se.has_value()) {
        out += " (se " + format_fixed(*report.clean_se, 4) + ")";
    }
    out += "\n- config digest: " + report.config_digest + "\n\n";

    // table 1 layout: one row per budget config, one column per strategy,
    // the row minimum in bold
    out += "| config (rho, eps) |";
    for (Strategy s : cfg.strategies) out += " " + to_string(s) + " |";
    out += " clean | reduction % (global) |\n";
    out += "| --- |";
    for (std::size_t i = 0; i < cfg.strategies.size(); ++i) out += " --- |";
    out += " --- | --- |\n";

    for (const BudgetCell& cell : cfg.grid) {
        out += "| (" + format_number(cell.rho) + ", " +
               format_number(cell.epsilon_desk) + ") |";
        const AggregateRow* row_min = nullptr;
        for (Strategy s : cfg.strategies) {
            const AggregateRow* a =
                find_aggregate(report.aggregates, cell, to_string(s));
            if (a != nullptr && (row_min == nullptr || a->mean_post < row_min->mean_post)) {
                row_min = a;
            }
        }
        for (Strategy s : cfg.strategies) {
            const AggregateRow* a =
                find_aggregate(report.aggregates, cell, to_string(s));
            if (a == nullptr) {
                out += " failed |";
                continue;
            }
            std::string entry = format_fixed(a->mean_post, 4);
            if (a->se_post.has_value()) {
                entry += " (" + format_fixed(*a->se_post, 4) + ")";
            }
            if (a == row_min) entry = "**" + entry + "**";
            out += " " + entry + " |";
        }
        out += " " + format_fixed(report.clean_mean, 4) + " |";
        const AggregateRow* global =
            find_aggregate(report.aggregates, cell, "global_allocation");
        out += global != nullptr
                   ? " " + format_fixed(global->mean_reduction, 1) + " |\n"
                   : "  |\n";
    }

    out += "\n| config (rho, eps) | ordered | global < local (2 se) | local < noise (2 se) |\n";
    out += "| --- | --- | --- | --- |\n";
    for (const HierarchyVerdict& v : report.verdicts) {
        out += "| (" + format_number(v.rho) + ", " + format_number(v.epsilon_desk) +
               ") | " + (v.ordered ? "yes" : "no") + " | " +
               (v.global_below_local ? "yes" : "no") + " | " +
               (v.local_below_noise ? "yes" : "no") + " |\n";
    }
    return out;
}

std::string stealth_report_to_json(const StealthReport& report) {
    ordered_json j;
    j["config"] = config_json(report.config);
    j["config_digest"] = report.config_digest;
    ordered_json seeds = ordered_json::array();
    for (const SeedStealth& seed_rows : report.seeds) {
        ordered_json sj;
        sj["seed_index"] = seed_rows.seed_index;
        ordered_json rows = ordered_json::array();
        for (const StealthRow& row : seed_rows.rows) {
            rows.push_back(stealth_row_json(row));
        }
        sj["rows"] = rows;
        seeds.push_back(sj);
    }
    j["seeds"] = seeds;
    ordered_json aggregates = ordered_json::array();
    for (const StealthAggregate& a : report.aggregates) {
        ordered_json aj;
        aj["detector"] = a.detector;
        aj["attack"] = a.attack;
        aj["n_seeds"] = a.n_seeds;
        aj["mean_auc"] = a.mean_auc;
        aj["se_auc"] = optional_json(a.se_auc);
        aggregates.push_back(aj);
    }
    j["aggregates"] = aggregates;
    return j.dump(2) + "\n";
}

std::string emit_report(const ExperimentReport& report, ReportFormat format,
                        const std::string& out_dir) {
    namespace fs = std::filesystem;
    std::string content, name;
    switch (format) {
        case ReportFormat::Csv:
            content = report_to_csv(report);
            name = "report.csv";
            break;
        case ReportFormat::Json:
            content = report_to_json(report);
            name = "report.json";
            break;
        case ReportFormat::Markdown:
            content = report_to_markdown(report);
            name = "report.md";
            break;
    }
    const std::string path = (fs::path(out_dir) / name).string();
    write_text_file(path, content);
    return path;
}

}  // namespace poisonlab
