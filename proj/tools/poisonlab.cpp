#include "poisonlab/harness.hpp"

#include "CLI11.hpp"

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>

using namespace poisonlab;

namespace {

// fixed artifact names: outputs are addressed by directory, not by file
constexpr const char* kDatasetFile = "dataset.ndjson";
constexpr const char* kModelFile = "model.ndjson";
constexpr const char* kScoresFile = "scores.csv";
constexpr const char* kPoisonFile = "poison.ndjson";
constexpr const char* kPoisonedDataFile = "dataset_poisoned.ndjson";
constexpr const char* kDetectionFile = "detection.csv";
constexpr const char* kStealthFile = "stealth.json";

std::string joined(const std::string& dir, const char* name) {
    return (std::filesystem::path(dir) / name).string();
}

std::vector<std::pair<int, int>> parse_hazards(const std::vector<std::string>& raw) {
    std::vector<std::pair<int, int>> hazards;
    for (const std::string& cell : raw) {
        int r = 0, c = 0;
        char extra = 0;
        if (std::sscanf(cell.c_str(), "%d,%d%c", &r, &c, &extra) != 2) {
            throw ConfigError("hazard cell must look like row,col: '" + cell + "'");
        }
        hazards.emplace_back(r, c);
    }
    return hazards;
}

ExperimentConfig preset_by_name(const std::string& name) {
    if (name == "lineworld") return lineworld_benchmark();
    if (name == "gridworld") return gridworld_benchmark();
    if (name == "conservative") return conservative_benchmark();
    if (name == "stealth") return stealth_benchmark();
    throw ConfigError("unknown preset: '" + name + "'");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"poisonlab: data-poisoning experiments on offline RL victims"};
    app.require_subcommand(1);

    std::uint64_t seed = 0;
    std::string config_path;
    std::string out_dir = ".";
    std::string format = "all";
    auto* seed_opt =
        app.add_option("--seed", seed, "Seed for this subcommand's random stream");
    app.add_option("--config", config_path,
                   "Experiment config JSON supplying defaults")
        ->check(CLI::ExistingFile);
    auto* out_opt = app.add_option("--out", out_dir, "Output directory")
                        ->envname("POISONLAB_OUT");
    app.add_option("--format", format, "Report format")
        ->check(CLI::IsMember({"json", "csv", "markdown", "md", "all"}));

    // generate
    auto* gen = app.add_subcommand("generate", "Sample a behavior dataset");
    gen->fallthrough();
    std::string env_name = "lineworld", quality = "medium";
    Index n_transitions = 20000;
    Scalar gamma = 0.95, noise_std = 0.01;
    int horizon = 0, grid_size = 5;
    std::vector<std::string> hazard_cells;
    gen->add_option("--env", env_name, "Environment")
        ->check(CLI::IsMember({"lineworld", "gridworld"}));
    auto* n_opt = gen->add_option("--n", n_transitions, "Number of transitions");
    auto* quality_opt = gen->add_option("--quality", quality, "Behavior policy")
                            ->check(CLI::IsMember({"random", "medium", "expert"}));
    gen->add_option("--gamma", gamma, "Discount factor");
    gen->add_option("--noise-std", noise_std, "LineWorld transition noise");
    gen->add_option("--horizon", horizon, "Episode cap (0 = environment default)");
    gen->add_option("--grid-size", grid_size, "GridWorld side length");
    gen->add_option("--hazard", hazard_cells,
                    "GridWorld hazard cell as row,col (repeatable)");

    // train
    auto* train = app.add_subcommand("train", "Fit a victim on a dataset");
    train->fallthrough();
    std::string train_data_path, algo_name;
    int iterations = 0, bins = 0;
    Scalar tol = 0.0, ridge = 0.0, beta = 0.0, learning_rate = 0.0;
    train->add_option("--data", train_data_path, "Dataset file")
        ->required()
        ->check(CLI::ExistingFile);
    auto* algo_opt = train->add_option("--algo", algo_name, "Victim algorithm")
                         ->check(CLI::IsMember({"tabq", "linfqi", "conslinfqi"}));
    auto* iter_opt = train->add_option("--iterations", iterations, "Training iterations");
    auto* tol_opt = train->add_option("--tol", tol, "Early-stop residual");
    auto* ridge_opt = train->add_option("--ridge", ridge, "Ridge regularizer");
    auto* beta_opt = train->add_option("--beta", beta, "Conservative penalty weight");
    auto* lr_opt = train->add_option("--learning-rate", learning_rate,
                                     "Tabular learning rate");
    auto* bins_opt = train->add_option("--bins", bins, "Tabular LineWorld bins");

    // score
    auto* score = app.add_subcommand("score", "TD-error sensitivities per record");
    score->fallthrough();
    std::string score_data_path, score_model_path, surface_name;
    bool include_next_state = false;
    score->add_option("--data", score_data_path, "Dataset file")
        ->required()
        ->check(CLI::ExistingFile);
    score->add_option("--model", score_model_path, "Victim checkpoint")
        ->required()
        ->check(CLI::ExistingFile);
    auto* surface_opt = score->add_option("--surface", surface_name,
                                          "Perturbation surface")
                            ->check(CLI::IsMember({"reward", "state", "both"}));
    score->add_flag("--include-next-state", include_next_state,
                    "Extend the state surface to next states");

    // attack
    auto* attack = app.add_subcommand("attack", "Poison a dataset with one strategy");
    attack->fallthrough();
    std::string attack_data_path, attack_model_path, strategy_name;
    std::string attack_surface_name = "reward", support_name = "all";
    bool attack_include_next = false;
    Scalar rho = 0.01, epsilon = 0.0, c_total = 0.0;
    int rescore_rounds = 1;
    attack->add_option("--data", attack_data_path, "Dataset file")
        ->required()
        ->check(CLI::ExistingFile);
    attack->add_option("--model", attack_model_path,
                       "Victim checkpoint the attack is aimed at")
        ->required()
        ->check(CLI::ExistingFile);
    attack->add_option("--strategy", strategy_name, "Attack strategy")
        ->required()
        ->check(CLI::IsMember({"random_noise", "random_subset", "local_greedy",
                               "global_allocation"}));
    attack->add_option("--rho", rho, "Poisoned fraction of the dataset");
    attack->add_option("--epsilon", epsilon,
                       "Per-record magnitude for the local strategies");
    attack->add_option("--c-total", c_total,
                       "Total energy pool for global_allocation");
    attack->add_option("--surface", attack_surface_name, "Perturbation surface")
        ->check(CLI::IsMember({"reward", "state", "both"}));
    attack->add_flag("--include-next-state", attack_include_next,
                     "Extend the state surface to next states");
    attack->add_option("--support", support_name, "global_allocation support")
        ->check(CLI::IsMember({"all", "top_rho"}));
    attack->add_option("--rescore-rounds", rescore_rounds,
                       "Rounds of attack + retrain + re-score");

    // detect
    auto* detect = app.add_subcommand("detect", "Run poison detectors on a dataset");
    detect->fallthrough();
    std::string detect_data_path, detector_name = "all", label = "dataset";
    Scalar robustz_threshold = 3.5, mahalanobis_quantile = 0.999;
    Index k_remove = 0;
    detect->add_option("--data", detect_data_path, "Dataset file")
        ->required()
        ->check(CLI::ExistingFile);
    detect->add_option("--detector", detector_name, "Detector to run")
        ->check(CLI::IsMember({"all", "robust_z", "mahalanobis", "spectral"}));
    detect->add_option("--threshold", robustz_threshold, "robust_z flag threshold");
    detect->add_option("--quantile", mahalanobis_quantile,
                       "mahalanobis flag quantile");
    detect->add_option("--k-remove", k_remove,
                       "spectral removals (0 = the dataset's poison count)");
    detect->add_option("--label", label, "Attack column value in the CSV");

    // evaluate
    auto* evaluate = app.add_subcommand("evaluate", "Roll out a victim's greedy policy");
    evaluate->fallthrough();
    std::string eval_data_path, eval_model_path;
    Index episodes = 200;
    evaluate->add_option("--data", eval_data_path,
                         "Dataset file supplying the environment spec")
        ->required()
        ->check(CLI::ExistingFile);
    evaluate->add_option("--model", eval_model_path, "Victim checkpoint")
        ->required()
        ->check(CLI::ExistingFile);
    auto* episodes_opt =
        evaluate->add_option("--episodes", episodes, "Evaluation episodes");

    // run
    auto* run = app.add_subcommand("run", "Full experiment from a config");
    run->fallthrough();
    std::string preset;
    run->add_option("--preset", preset, "Built-in benchmark config")
        ->check(CLI::IsMember({"lineworld", "gridworld", "conservative", "stealth"}));

    // report
    auto* report_cmd = app.add_subcommand("report", "Re-emit a stored report");
    report_cmd->fallthrough();
    std::string report_in;
    report_cmd->add_option("--in", report_in, "report.json produced by run")
        ->required()
        ->check(CLI::ExistingFile);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        std::optional<ExperimentConfig> file_cfg;
        if (!config_path.empty()) {
            file_cfg = experiment_config_from_json(read_text_file(config_path));
        }

        if (gen->parsed()) {
            MdpSpec spec;
            if (file_cfg.has_value()) {
                spec = file_cfg->env;
            } else if (env_name == "gridworld") {
                spec = make_gridworld_spec(grid_size, gamma,
                                           horizon > 0 ? horizon : 60);
                spec.hazards = parse_hazards(hazard_cells);
            } else {
                spec = make_lineworld_spec(noise_std, gamma,
                                           horizon > 0 ? horizon : 100);
            }
            if (file_cfg.has_value() && n_opt->count() == 0) {
                n_transitions = file_cfg->dataset_size;
            }
            Quality q = file_cfg.has_value() && quality_opt->count() == 0
                            ? file_cfg->quality
                            : quality_from_string(quality);
            Environment env(spec);
            const TransitionDataset data =
                generate_dataset(env, n_transitions, q, seed);
            const std::string path = joined(out_dir, kDatasetFile);
            save_dataset(data, path);
            std::cout << path << "\n";
        } else if (train->parsed()) {
            const TransitionDataset data = load_dataset(train_data_path);
            AlgoTag algo = file_cfg.has_value() ? file_cfg->algo : AlgoTag::LinFQI;
            if (algo_opt->count() > 0) algo = algo_from_string(algo_name);
            TrainConfig tc = file_cfg.has_value() ? file_cfg->train : TrainConfig{};
            if (iter_opt->count() > 0) tc.n_iterations = iterations;
            if (tol_opt->count() > 0) tc.tol = tol;
            if (ridge_opt->count() > 0) tc.ridge_lambda = ridge;
            if (beta_opt->count() > 0) tc.conservative_beta = beta;
            if (lr_opt->count() > 0) tc.learning_rate = learning_rate;
            if (bins_opt->count() > 0) tc.tabular_line_bins = bins;
            const VictimModel model = train_victim(algo, data, tc);
            const std::string path = joined(out_dir, kModelFile);
            save_model(model, path);
            std::cout << path << "\n";
        } else if (score->parsed()) {
            const TransitionDataset data = load_dataset(score_data_path);
            const VictimModel model = load_model(score_model_path);
            ScoreOptions opts;
            if (file_cfg.has_value()) opts.surface = file_cfg->surface;
            if (surface_opt->count() > 0) {
                opts.surface = surface_from_string(surface_name);
            }
            opts.include_next_state = include_next_state;
            const auto records = score_dataset(model, data, opts);
            const std::string path = joined(out_dir, kScoresFile);
            write_text_file(path, sensitivity_csv(records));
            std::cout << path << "\n";
        } else if (attack->parsed()) {
            const TransitionDataset data = load_dataset(attack_data_path);
            const VictimModel model = load_model(attack_model_path);
            AttackConfig acfg;
            acfg.strategy = strategy_from_string(strategy_name);
            acfg.surface = surface_from_string(attack_surface_name);
            acfg.include_next_state = attack_include_next;
            acfg.rho = rho;
            acfg.epsilon_local = epsilon;
            acfg.c_total = c_total;
            acfg.support = support_mode_from_string(support_name);
            acfg.seed = seed;
            acfg.rescore_rounds = rescore_rounds;
            PoisonedDataset poison;
            if (rescore_rounds > 1) {
                const TrainConfig tc =
                    file_cfg.has_value() ? file_cfg->train : TrainConfig{};
                const AlgoTag algo = model.algo;
                poison = run_attack_with_rescoring(
                    data, model, acfg, [&](const TransitionDataset& d) {
                        return train_victim(algo, d, tc);
                    });
            } else {
                const auto records = score_dataset(
                    model, data, {acfg.surface, acfg.include_next_state});
                poison = run_attack(data, records, acfg);
            }
            const std::string poison_path = joined(out_dir, kPoisonFile);
            save_poison(poison, poison_path);
            const std::string data_path = joined(out_dir, kPoisonedDataFile);
            save_dataset(apply(data, poison), data_path);
            std::cout << poison_path << "\n" << data_path << "\n";
        } else if (detect->parsed()) {
            const TransitionDataset data = load_dataset(detect_data_path);
            Index n_poisoned = 0;
            for (const Transition& t : data.transitions) {
                if (t.poisoned) ++n_poisoned;
            }
            const Index k = k_remove > 0 ? k_remove : n_poisoned;
            std::vector<StealthRow> rows;
            const auto add = [&](const std::string& name,
                                 const DetectionReport& rep) {
                StealthRow row;
                row.detector = name;
                row.attack = label;
                row.recall = rep.recall;
                row.precision = rep.precision;
                row.auc_vs_clean = rep.auc;
                row.within_auc = rep.auc;
                row.max_score = rep.max_score;
                row.flagged_count = static_cast<Index>(rep.flagged.size());
                rows.push_back(row);
                for (const std::string& warning : rep.warnings) {
                    std::cerr << "warning: " << warning << "\n";
                }
            };
            if (detector_name == "all" || detector_name == "robust_z") {
                add("robust_z", detect_robust_z(data, robustz_threshold));
            }
            if (detector_name == "all" || detector_name == "mahalanobis") {
                add("mahalanobis", detect_mahalanobis(data, mahalanobis_quantile));
            }
            if (detector_name == "all" || detector_name == "spectral") {
                add("spectral", detect_spectral(data, k));
            }
            const std::string path = joined(out_dir, kDetectionFile);
            write_text_file(path, detection_csv(rows));
            std::cout << path << "\n";
        } else if (evaluate->parsed()) {
            const TransitionDataset data = load_dataset(eval_data_path);
            const VictimModel model = load_model(eval_model_path);
            if (file_cfg.has_value() && episodes_opt->count() == 0) {
                episodes = file_cfg->n_eval_episodes;
            }
            Environment env(data.spec);
            const MeanReturn result =
                evaluate_policy(env, greedy_policy(model), episodes, seed);
            std::cout << "{\"mean\": " << format_number(result.mean) << ", \"se\": "
                      << (result.se.has_value() ? format_number(*result.se)
                                                : std::string("null"))
                      << ", \"n_episodes\": " << result.n_episodes << "}\n";
        } else if (run->parsed()) {
            ExperimentConfig cfg;
            if (!preset.empty()) {
                cfg = preset_by_name(preset);
                if (file_cfg.has_value()) {
                    throw ConfigError("run takes --config or --preset, not both");
                }
            } else if (file_cfg.has_value()) {
                cfg = *file_cfg;
            } else {
                throw ConfigError("run needs --config or --preset");
            }
            if (seed_opt->count() > 0) cfg.base_seed = seed;
            std::string dir = cfg.output_dir.empty() ? "." : cfg.output_dir;
            if (out_opt->count() > 0) dir = out_dir;
            const ExperimentReport report = run_experiment(cfg);
            if (format == "all" || format == "json") {
                std::cout << emit_report(report, ReportFormat::Json, dir) << "\n";
            }
            if (format == "all" || format == "csv") {
                std::cout << emit_report(report, ReportFormat::Csv, dir) << "\n";
            }
            if (format == "all" || format == "markdown" || format == "md") {
                std::cout << emit_report(report, ReportFormat::Markdown, dir) << "\n";
            }
            if (cfg.run_detectors) {
                const StealthReport stealth = run_stealth_experiment(cfg);
                const std::string path = joined(dir, kStealthFile);
                write_text_file(path, stealth_report_to_json(stealth));
                std::cout << path << "\n";
            }
        } else if (report_cmd->parsed()) {
            const ExperimentReport report =
                report_from_json(read_text_file(report_in));
            if (format == "all" || format == "json") {
                std::cout << emit_report(report, ReportFormat::Json, out_dir) << "\n";
            }
            if (format == "all" || format == "csv") {
                std::cout << emit_report(report, ReportFormat::Csv, out_dir) << "\n";
            }
            if (format == "all" || format == "markdown" || format == "md") {
                std::cout << emit_report(report, ReportFormat::Markdown, out_dir)
                          << "\n";
            }
        }
        return 0;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const ArgumentError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
