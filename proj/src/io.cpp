#include "poisonlab/io.hpp"

#include "json.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace poisonlab {

namespace {

using ordered_json = nlohmann::ordered_json;

// writers build lines by hand so every double goes through format_number;
// the json library is used for parsing and for string escaping only

std::string quoted(const std::string& s) { return ordered_json(s).dump(); }

std::string vector_json(const Vector& v) {
    std::string out = "[";
    for (Index i = 0; i < v.size(); ++i) {
        if (i > 0) out += ',';
        out += format_number(v(i));
    }
    return out + "]";
}

std::string matrix_json(const Matrix& m) {
    std::string out = "[";
    for (Index i = 0; i < m.rows(); ++i) {
        if (i > 0) out += ',';
        out += vector_json(m.row(i).transpose());
    }
    return out + "]";
}

Vector vector_from(const ordered_json& j) {
    Vector v(static_cast<Index>(j.size()));
    Index i = 0;
    for (const auto& x : j) v(i++) = x.get<Scalar>();
    return v;
}

Matrix matrix_from(const ordered_json& j, Index cols_hint) {
    const auto rows = static_cast<Index>(j.size());
    if (rows == 0) return Matrix(0, cols_hint);
    const auto cols = static_cast<Index>(j.front().size());
    Matrix m(rows, cols);
    Index r = 0;
    for (const auto& row : j) {
        m.row(r++) = vector_from(row).transpose();
    }
    return m;
}

std::vector<std::string> split_lines(const std::string& text) {
    std::vector<std::string> lines;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty()) lines.push_back(line);
    }
    return lines;
}

ordered_json parse_line(const std::string& line, std::size_t line_no,
                        const std::string& what) {
    try {
        return ordered_json::parse(line);
    } catch (const std::exception& e) {
        throw DataError(what + ": line " + std::to_string(line_no) +
                        " is not valid JSON: " + e.what());
    }
}

// rethrows json access errors (missing key, wrong type) as DataError
template <typename Fn>
auto reading(const std::string& what, std::size_t line_no, Fn&& fn) {
    try {
        return fn();
    } catch (const Error&) {
        throw;
    } catch (const std::exception& e) {
        throw DataError(what + ": line " + std::to_string(line_no) + ": " +
                        e.what());
    }
}

std::string spec_json(const MdpSpec& spec) {
    std::string hazards = "[";
    for (std::size_t i = 0; i < spec.hazards.size(); ++i) {
        if (i > 0) hazards += ',';
        hazards += "[" + std::to_string(spec.hazards[i].first) + "," +
                   std::to_string(spec.hazards[i].second) + "]";
    }
    hazards += "]";
    std::string out = "{";
    out += "\"kind\":" + quoted(to_string(spec.kind));
    out += ",\"state_dim\":" + std::to_string(spec.state_dim);
    out += ",\"n_actions\":" + std::to_string(spec.n_actions);
    out += ",\"gamma\":" + format_number(spec.gamma);
    out += ",\"horizon\":" + std::to_string(spec.horizon);
    out += ",\"goal_reward\":" + format_number(spec.rewards.goal_reward);
    out += ",\"step_cost\":" + format_number(spec.rewards.step_cost);
    out += ",\"hazard_cost\":" + format_number(spec.rewards.hazard_cost);
    out += ",\"noise_std\":" + format_number(spec.noise_std);
    out += ",\"seed\":" + std::to_string(spec.seed);
    out += ",\"grid_size\":" + std::to_string(spec.grid_size);
    out += ",\"hazards\":" + hazards;
    return out + "}";
}

MdpSpec spec_from(const ordered_json& j) {
    MdpSpec spec;
    spec.kind = env_kind_from_string(j.at("kind").get<std::string>());
    spec.state_dim = j.at("state_dim").get<int>();
    spec.n_actions = j.at("n_actions").get<int>();
    spec.gamma = j.at("gamma").get<Scalar>();
    spec.horizon = j.at("horizon").get<int>();
    spec.rewards.goal_reward = j.at("goal_reward").get<Scalar>();
    spec.rewards.step_cost = j.at("step_cost").get<Scalar>();
    spec.rewards.hazard_cost = j.at("hazard_cost").get<Scalar>();
    spec.noise_std = j.at("noise_std").get<Scalar>();
    spec.seed = j.at("seed").get<std::uint64_t>();
    spec.grid_size = j.at("grid_size").get<int>();
    for (const auto& h : j.at("hazards")) {
        spec.hazards.emplace_back(h.at(0).get<int>(), h.at(1).get<int>());
    }
    return spec;
}

std::string feature_map_json(const FeatureMap& fm) {
    std::string out = "{";
    out += "\"kind\":" + quoted(to_string(fm.kind));
    out += ",\"state_dim\":" + std::to_string(fm.state_dim);
    out += ",\"n_actions\":" + std::to_string(fm.n_actions);
    out += ",\"state_features\":" + std::to_string(fm.state_features);
    out += ",\"dim\":" + std::to_string(fm.dim);
    out += ",\"bins_per_dim\":" + std::to_string(fm.bins_per_dim);
    out += ",\"bin_lo\":" + vector_json(fm.bin_lo);
    out += ",\"bin_hi\":" + vector_json(fm.bin_hi);
    out += ",\"centers\":" + matrix_json(fm.centers);
    out += ",\"bandwidth\":" + format_number(fm.bandwidth);
    out += ",\"degree\":" + std::to_string(fm.degree);
    out += ",\"exponents\":[";
    for (std::size_t i = 0; i < fm.exponents.size(); ++i) {
        if (i > 0) out += ',';
        out += "[";
        for (std::size_t k = 0; k < fm.exponents[i].size(); ++k) {
            if (k > 0) out += ',';
            out += std::to_string(fm.exponents[i][k]);
        }
        out += "]";
    }
    return out + "]}";
}

FeatureMap feature_map_from(const ordered_json& j) {
    FeatureMap fm;
    fm.kind = feature_kind_from_string(j.at("kind").get<std::string>());
    fm.state_dim = j.at("state_dim").get<int>();
    fm.n_actions = j.at("n_actions").get<int>();
    fm.state_features = j.at("state_features").get<int>();
    fm.dim = j.at("dim").get<int>();
    fm.bins_per_dim = j.at("bins_per_dim").get<int>();
    fm.bin_lo = vector_from(j.at("bin_lo"));
    fm.bin_hi = vector_from(j.at("bin_hi"));
    fm.centers = matrix_from(j.at("centers"), fm.state_dim);
    fm.bandwidth = j.at("bandwidth").get<Scalar>();
    fm.degree = j.at("degree").get<int>();
    for (const auto& row : j.at("exponents")) {
        fm.exponents.push_back(row.get<std::vector<int>>());
    }
    return fm;
}

}  // namespace

std::string format_number(Scalar x) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

std::string mdp_spec_to_json(const MdpSpec& spec) { return spec_json(spec); }

MdpSpec mdp_spec_from_json(const std::string& text) {
    const ordered_json j = parse_line(text, 1, "mdp spec");
    return reading("mdp spec", 1, [&] { return spec_from(j); });
}

// ─── Datasets ───────────────────────────────────────────────────────────────

std::string dataset_to_ndjson(const TransitionDataset& data) {
    std::string out = spec_json(data.spec);
    out.pop_back();  // reopen the header object
    out += ",\"generation_seed\":" + std::to_string(data.generation_seed);
    out += ",\"behavior_tag\":" + quoted(data.behavior_tag);
    out += "}\n";
    for (const Transition& t : data.transitions) {
        out += "{\"idx\":" + std::to_string(t.idx);
        out += ",\"s\":" + vector_json(t.s);
        out += ",\"a\":" + std::to_string(t.a);
        out += ",\"r\":" + format_number(t.r);
        out += ",\"s_next\":" + vector_json(t.s_next);
        out += std::string(",\"terminal\":") + (t.terminal ? "true" : "false");
        out += std::string(",\"poisoned\":") + (t.poisoned ? "true" : "false");
        out += "}\n";
    }
    return out;
}

TransitionDataset dataset_from_ndjson(const std::string& text) {
    const std::vector<std::string> lines = split_lines(text);
    if (lines.empty()) throw DataError("dataset: file is empty");
    TransitionDataset data;
    const ordered_json header = parse_line(lines[0], 1, "dataset");
    reading("dataset", 1, [&] {
        data.spec = spec_from(header);
        data.generation_seed = header.at("generation_seed").get<std::uint64_t>();
        data.behavior_tag = header.at("behavior_tag").get<std::string>();
        return 0;
    });
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const ordered_json j = parse_line(lines[i], i + 1, "dataset");
        reading("dataset", i + 1, [&] {
            Transition t;
            t.idx = j.at("idx").get<Index>();
            t.s = vector_from(j.at("s"));
            t.a = j.at("a").get<int>();
            t.r = j.at("r").get<Scalar>();
            t.s_next = vector_from(j.at("s_next"));
            t.terminal = j.at("terminal").get<bool>();
            t.poisoned = j.at("poisoned").get<bool>();
            data.transitions.push_back(std::move(t));
            return 0;
        });
    }
    validate(data);
    return data;
}

void save_dataset(const TransitionDataset& data, const std::string& path) {
    write_text_file(path, dataset_to_ndjson(data));
}

TransitionDataset load_dataset(const std::string& path) {
    return dataset_from_ndjson(read_text_file(path));
}

// ─── Model checkpoints ──────────────────────────────────────────────────────

std::string model_to_ndjson(const VictimModel& model) {
    std::string out = "{\"algo\":" + quoted(to_string(model.algo));
    out += ",\"gamma\":" + format_number(model.gamma);
    out += ",\"feature_map\":" + feature_map_json(model.feature_map);
    out += "}\n{\"theta\":" + vector_json(model.theta) + "}\n";
    return out;
}

VictimModel model_from_ndjson(const std::string& text) {
    const std::vector<std::string> lines = split_lines(text);
    if (lines.size() != 2) {
        throw DataError("model: expected a header line and a theta line, got " +
                        std::to_string(lines.size()) + " lines");
    }
    VictimModel model;
    const ordered_json header = parse_line(lines[0], 1, "model");
    reading("model", 1, [&] {
        model.algo = algo_from_string(header.at("algo").get<std::string>());
        model.gamma = header.at("gamma").get<Scalar>();
        model.feature_map = feature_map_from(header.at("feature_map"));
        return 0;
    });
    const ordered_json thetas = parse_line(lines[1], 2, "model");
    reading("model", 2, [&] {
        model.theta = vector_from(thetas.at("theta"));
        return 0;
    });
    if (model.theta.size() != model.feature_map.dim) {
        throw DataError("model: theta length " + std::to_string(model.theta.size()) +
                        " does not match feature dim " +
                        std::to_string(model.feature_map.dim));
    }
    return model;
}

void save_model(const VictimModel& model, const std::string& path) {
    write_text_file(path, model_to_ndjson(model));
}

VictimModel load_model(const std::string& path) {
    return model_from_ndjson(read_text_file(path));
}

// ─── Attack artifacts ───────────────────────────────────────────────────────

std::string poison_to_ndjson(const PoisonedDataset& poison) {
    std::string out = "{\"base\":{";
    out += "\"kind\":" + quoted(to_string(poison.base.kind));
    out += ",\"generation_seed\":" + std::to_string(poison.base.generation_seed);
    out += ",\"n\":" + std::to_string(poison.base.n);
    out += ",\"behavior_tag\":" + quoted(poison.base.behavior_tag);
    out += "},\"config\":{";
    const AttackConfig& cfg = poison.config;
    out += "\"strategy\":" + quoted(to_string(cfg.strategy));
    out += ",\"surface\":" + quoted(to_string(cfg.surface));
    out += std::string(",\"include_next_state\":") +
           (cfg.include_next_state ? "true" : "false");
    out += ",\"rho\":" + format_number(cfg.rho);
    out += ",\"epsilon_local\":" + format_number(cfg.epsilon_local);
    out += ",\"c_total\":" + format_number(cfg.c_total);
    out += ",\"support\":" + quoted(to_string(cfg.support));
    out += ",\"seed\":" + std::to_string(cfg.seed);
    out += ",\"rescore_rounds\":" + std::to_string(cfg.rescore_rounds);
    out += "},\"budgeted_energy\":" + format_number(poison.budgeted_energy);
    out += ",\"delivered_energy\":" + format_number(poison.delivered_energy);
    out += ",\"energy_shortfall\":" + format_number(poison.energy_shortfall);
    out += ",\"n_selected\":" + std::to_string(poison.n_selected);
    out += ",\"n_poisoned\":" + std::to_string(poison.n_poisoned);
    out += ",\"n_zero_grad\":" + std::to_string(poison.n_zero_grad);
    out += std::string(",\"degenerate\":") + (poison.degenerate ? "true" : "false");
    out += "}\n";
    for (const auto& [idx, p] : poison.perturbations) {
        out += "{\"idx\":" + std::to_string(idx);
        out += ",\"d_r\":" + format_number(p.d_r);
        out += ",\"d_s\":" + vector_json(p.d_s);
        out += ",\"d_s_next\":" + vector_json(p.d_s_next);
        out += "}\n";
    }
    return out;
}

PoisonedDataset poison_from_ndjson(const std::string& text) {
    const std::vector<std::string> lines = split_lines(text);
    if (lines.empty()) throw DataError("poison: file is empty");
    PoisonedDataset poison;
    const ordered_json header = parse_line(lines[0], 1, "poison");
    reading("poison", 1, [&] {
        const ordered_json& base = header.at("base");
        poison.base.kind = env_kind_from_string(base.at("kind").get<std::string>());
        poison.base.generation_seed = base.at("generation_seed").get<std::uint64_t>();
        poison.base.n = base.at("n").get<Index>();
        poison.base.behavior_tag = base.at("behavior_tag").get<std::string>();
        const ordered_json& cfg = header.at("config");
        poison.config.strategy =
            strategy_from_string(cfg.at("strategy").get<std::string>());
        poison.config.surface =
            surface_from_string(cfg.at("surface").get<std::string>());
        poison.config.include_next_state = cfg.at("include_next_state").get<bool>();
        poison.config.rho = cfg.at("rho").get<Scalar>();
        poison.config.epsilon_local = cfg.at("epsilon_local").get<Scalar>();
        poison.config.c_total = cfg.at("c_total").get<Scalar>();
        poison.config.support =
            support_mode_from_string(cfg.at("support").get<std::string>());
        poison.config.seed = cfg.at("seed").get<std::uint64_t>();
        poison.config.rescore_rounds = cfg.at("rescore_rounds").get<int>();
        poison.budgeted_energy = header.at("budgeted_energy").get<Scalar>();
        poison.delivered_energy = header.at("delivered_energy").get<Scalar>();
        poison.energy_shortfall = header.at("energy_shortfall").get<Scalar>();
        poison.n_selected = header.at("n_selected").get<Index>();
        poison.n_poisoned = header.at("n_poisoned").get<Index>();
        poison.n_zero_grad = header.at("n_zero_grad").get<Index>();
        poison.degenerate = header.at("degenerate").get<bool>();
        return 0;
    });
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const ordered_json j = parse_line(lines[i], i + 1, "poison");
        reading("poison", i + 1, [&] {
            PerturbationRecord p;
            const Index idx = j.at("idx").get<Index>();
            p.d_r = j.at("d_r").get<Scalar>();
            p.d_s = vector_from(j.at("d_s"));
            p.d_s_next = vector_from(j.at("d_s_next"));
            if (!poison.perturbations.emplace(idx, std::move(p)).second) {
                throw DataError("poison: duplicate perturbation idx " +
                                std::to_string(idx));
            }
            return 0;
        });
    }
    return poison;
}

void save_poison(const PoisonedDataset& poison, const std::string& path) {
    write_text_file(path, poison_to_ndjson(poison));
}

PoisonedDataset load_poison(const std::string& path) {
    return poison_from_ndjson(read_text_file(path));
}

// ─── CSV tables ─────────────────────────────────────────────────────────────

namespace {

std::string sensitivity_csv_impl(const std::vector<SensitivityRecord>& records,
                                 const AllocationPlan* plan) {
    if (plan != nullptr &&
        plan->epsilons.size() != static_cast<Index>(records.size())) {
        throw ArgumentError("sensitivity csv: plan size " +
                            std::to_string(plan->epsilons.size()) +
                            " does not match record count " +
                            std::to_string(records.size()));
    }
    std::string out = "idx,delta,abs_delta,grad_norm,influence_proxy";
    if (plan != nullptr) out += ",epsilon";
    out += "\n";
    for (std::size_t i = 0; i < records.size(); ++i) {
        const SensitivityRecord& r = records[i];
        out += std::to_string(r.idx);
        out += "," + format_number(r.delta);
        out += "," + format_number(r.abs_delta);
        out += "," + format_number(r.grad_norm);
        out += "," + format_number(r.influence_proxy);
        if (plan != nullptr) {
            out += "," + format_number(plan->epsilons(static_cast<Index>(i)));
        }
        out += "\n";
    }
    return out;
}

}  // namespace

std::string sensitivity_csv(const std::vector<SensitivityRecord>& records) {
    return sensitivity_csv_impl(records, nullptr);
}

std::string sensitivity_csv(const std::vector<SensitivityRecord>& records,
                            const AllocationPlan& plan) {
    return sensitivity_csv_impl(records, &plan);
}

std::string detection_csv(const std::vector<StealthRow>& rows) {
    std::string out = "detector,attack,recall,precision,auc,max_score,flagged_count\n";
    for (const StealthRow& r : rows) {
        out += r.detector + "," + r.attack;
        out += "," + format_number(r.recall);
        out += "," + format_number(r.precision);
        out += ",";
        if (r.auc_vs_clean.has_value()) out += format_number(*r.auc_vs_clean);
        out += "," + format_number(r.max_score);
        out += "," + std::to_string(r.flagged_count);
        out += "\n";
    }
    return out;
}

// ─── Files ──────────────────────────────────────────────────────────────────

void write_text_file(const std::string& path, const std::string& content) {
    namespace fs = std::filesystem;
    const fs::path target(path);
    std::error_code ec;
    if (target.has_parent_path()) {
        fs::create_directories(target.parent_path(), ec);
        if (ec) {
            throw DataError("cannot create directory '" +
                            target.parent_path().string() + "': " + ec.message());
        }
    }
    std::ofstream out(target, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open '" + path + "' for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out.good()) throw DataError("write to '" + path + "' failed");
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open '" + path + "' for reading");
    std::ostringstream buf;
    buf << in.rdbuf();
    if (in.bad()) throw DataError("read from '" + path + "' failed");
    return buf.str();
}

}  // namespace poisonlab
