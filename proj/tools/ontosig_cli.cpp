// ontosig command line: inspect-ontology, generate, train, grid-search,
// evaluate, predict. Every command writes a manifest with the resolved
// configuration, seeds, and input digests so runs can be reproduced exactly.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "ontosig/dataset.hpp"
#include "ontosig/metrics.hpp"
#include "ontosig/model.hpp"
#include "ontosig/ontology.hpp"
#include "ontosig/rng.hpp"
#include "ontosig/synth.hpp"
#include "ontosig/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace ontosig;

namespace {

constexpr const char* kVersion = "0.1.0";

// exit codes: 0 ok, 2 parse error, 3 validation failure, 4 runtime divergence
constexpr int kExitParse = 2;
constexpr int kExitValidation = 3;
constexpr int kExitRuntime = 4;

std::string file_digest(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open '" + path + "' for digest");
    std::uint64_t h = 0xcbf29ce484222325ULL;
    char buf[65536];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
        for (std::streamsize i = 0; i < in.gcount(); ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 0x100000001b3ULL;
        }
        if (!in) break;
    }
    char out[20];
    std::snprintf(out, sizeof(out), "fnv1a64:%016llx", static_cast<unsigned long long>(h));
    return out;
}

struct ManifestBuilder {
    json j;
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

    ManifestBuilder(const std::string& command) {
        j["command"] = command;
        j["library_version"] = kVersion;
        j["inputs"] = json::object();
        j["artifacts"] = json::array();
    }
    void input(const std::string& path) { j["inputs"][path] = file_digest(path); }
    void artifact(const std::string& path) { j["artifacts"].push_back(path); }
    void write(const std::string& path) {
        j["wall_clock_seconds"] =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::ofstream out(path, std::ios::binary);
        out << j.dump(2) << '\n';
    }
};

std::string default_out_dir() {
    const char* env = std::getenv("ONTOSIG_OUT_DIR");
    return env ? env : ".";
}

Ontology load_ontology(const std::string& path, const std::string& format, bool strict) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open ontology '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    if (format == "obo") {
        std::vector<std::string> warnings;
        auto ont = Ontology::from_obo(ss.str(), strict, &warnings);
        for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
        return ont;
    }
    return Ontology::from_edge_list(ss.str());
}

std::map<std::string, std::string> read_kv_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open config '" + path + "'");
    std::map<std::string, std::string> kv;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("config line without '=': " + line);
        kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    return kv;
}

json config_json(const TrainConfig& c) {
    return {{"learning_rate", c.learning_rate},
            {"d", c.d},
            {"n_additional_layers", c.n_additional_layers},
            {"layer_size", c.layer_size},
            {"activation", to_string(c.activation)},
            {"shared_weights", c.shared_weights},
            {"mode", to_string(c.mode)},
            {"weighting", to_string(c.weighting)},
            {"batch_size", c.batch_size},
            {"epochs", c.epochs},
            {"seed", c.seed},
            {"patience", c.patience}};
}

void apply_config_file(TrainConfig& c, const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open config '" + path + "'");
    json j;
    in >> j;
    if (j.contains("learning_rate")) c.learning_rate = j["learning_rate"].get<double>();
    if (j.contains("d")) c.d = j["d"].get<int>();
    if (j.contains("n_additional_layers"))
        c.n_additional_layers = j["n_additional_layers"].get<int>();
    if (j.contains("layer_size")) c.layer_size = j["layer_size"].get<int>();
    if (j.contains("activation"))
        c.activation = activation_from_string(j["activation"].get<std::string>());
    if (j.contains("shared_weights")) c.shared_weights = j["shared_weights"].get<bool>();
    if (j.contains("mode")) c.mode = mode_from_string(j["mode"].get<std::string>());
    if (j.contains("weighting"))
        c.weighting = weighting_from_string(j["weighting"].get<std::string>());
    if (j.contains("batch_size")) c.batch_size = j["batch_size"].get<int>();
    if (j.contains("epochs")) c.epochs = j["epochs"].get<int>();
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("patience")) c.patience = j["patience"].get<int>();
}

void write_train_log(const std::vector<LogEntry>& log, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    for (const auto& e : log)
        out << e.epoch << '\t' << e.split << '\t' << e.metric << '\t' << e.value << '\n';
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Bayesian-network-of-sigmoids output layer for ontology-structured labels"};
    app.require_subcommand(1);

    std::string ontology_path, format = "edges", out_dir = default_out_dir();
    std::uint64_t seed = 0;
    bool strict = false, deterministic = false;

    auto add_common = [&](CLI::App* cmd, bool needs_ontology) {
        if (needs_ontology)
            cmd->add_option("--ontology", ontology_path, "ontology file")->required();
        cmd->add_option("--format", format, "ontology format: edges|obo")
            ->check(CLI::IsMember({"edges", "obo"}));
        cmd->add_option("--seed", seed, "master RNG seed");
        cmd->add_option("--out-dir", out_dir, "output directory (env ONTOSIG_OUT_DIR)");
        cmd->add_flag("--strict", strict, "error on dangling OBO is_a targets");
        cmd->add_flag("--deterministic", deterministic, "force serial reductions");
    };

    // inspect-ontology
    auto* inspect = app.add_subcommand("inspect-ontology", "counts, depths, tree diagnostic");
    add_common(inspect, true);

    // generate
    auto* generate = app.add_subcommand("generate", "synthetic ontology-consistent dataset");
    add_common(generate, true);
    SynthSpec spec;
    std::string splits = "1";
    std::string synth_config;
    std::vector<double> depth_bias;
    generate->add_option("--config", synth_config, "key=value synth spec file (flags override)");
    auto* fd = generate->add_option("--feature-dim", spec.feature_dim);
    auto* fpi = generate->add_option("--features-per-instance", spec.features_per_instance);
    auto* scale = generate->add_option("--scale", spec.true_embedding_scale);
    auto* count = generate->add_option("--count", spec.instance_count);
    auto* bias = generate->add_option("--depth-bias", depth_bias, "logit bias per depth");
    generate->add_option("--splits", splits, "comma fractions, e.g. 0.8,0.1,0.1");

    // train
    auto* train_cmd = app.add_subcommand("train", "train flat or bayesian model");
    add_common(train_cmd, true);
    std::string train_path, valid_path, config_path, mode_str, act_str, weight_str;
    TrainConfig tc;
    int min_count = 5;
    train_cmd->add_option("--train", train_path)->required();
    train_cmd->add_option("--valid", valid_path)->required();
    train_cmd->add_option("--config", config_path, "JSON config (flags override)");
    train_cmd->add_option("--mode", mode_str)->check(CLI::IsMember({"flat", "bayesian"}));
    train_cmd->add_option("--learning-rate", tc.learning_rate);
    train_cmd->add_option("--embedding-size", tc.d);
    train_cmd->add_option("--layers", tc.n_additional_layers);
    train_cmd->add_option("--layer-size", tc.layer_size);
    train_cmd->add_option("--activation", act_str)->check(CLI::IsMember({"identity", "relu"}));
    train_cmd->add_option("--shared-weights", tc.shared_weights);
    train_cmd->add_option("--weighting", weight_str)
        ->check(CLI::IsMember({"none", "inv_sqrt_freq"}));
    train_cmd->add_option("--batch-size", tc.batch_size);
    train_cmd->add_option("--epochs", tc.epochs);
    train_cmd->add_option("--patience", tc.patience);
    train_cmd->add_option("--min-count", min_count, "label dictionary threshold");

    // grid-search
    auto* grid_cmd = app.add_subcommand("grid-search", "train every grid point, rank by micro-AP");
    add_common(grid_cmd, true);
    std::string grid_path;
    grid_cmd->add_option("--train", train_path)->required();
    grid_cmd->add_option("--valid", valid_path)->required();
    grid_cmd->add_option("--grid", grid_path, "JSON grid space")->required();
    grid_cmd->add_option("--config", config_path, "base JSON config");
    grid_cmd->add_option("--mode", mode_str)->check(CLI::IsMember({"flat", "bayesian"}));
    grid_cmd->add_option("--batch-size", tc.batch_size);
    grid_cmd->add_option("--epochs", tc.epochs);
    grid_cmd->add_option("--min-count", min_count);

    // evaluate
    auto* eval_cmd = app.add_subcommand("evaluate", "binned AUROC/AP report with bootstrap CIs");
    add_common(eval_cmd, true);
    std::string ckpt_path, data_path, counts_path;
    int bootstrap = 500;
    eval_cmd->add_option("--checkpoint", ckpt_path)->required();
    eval_cmd->add_option("--data", data_path, "test dataset")->required();
    eval_cmd->add_option("--counts", counts_path, "label_counts.tsv from training")->required();
    eval_cmd->add_option("--bootstrap", bootstrap, "bootstrap resamples (0 disables CIs)");

    // predict
    auto* predict_cmd = app.add_subcommand("predict", "ranked label probabilities per instance");
    add_common(predict_cmd, true);
    int top_k = 0;
    predict_cmd->add_option("--checkpoint", ckpt_path)->required();
    predict_cmd->add_option("--data", data_path)->required();
    predict_cmd->add_option("--counts", counts_path)->required();
    predict_cmd->add_option("--top-k", top_k, "0 means all targets");

    CLI11_PARSE(app, argc, argv);

    try {
        fs::create_directories(out_dir);

        if (inspect->parsed()) {
            ManifestBuilder manifest("inspect-ontology");
            manifest.input(ontology_path);
            auto ont = load_ontology(ontology_path, format, strict);
            auto diag = ont.assumption_diagnostic();
            auto depth = ont.depths();
            std::map<int, int> histogram;
            for (int d : depth) ++histogram[d];
            std::cout << "nodes " << ont.node_count() << "\n";
            std::cout << "edges " << ont.edge_count() << "\n";
            std::cout << "is_tree " << (diag.is_tree ? "true" : "false") << "\n";
            for (const auto& [d, n] : histogram)
                std::cout << "depth " << d << " " << n << "\n";
            for (const auto& l : diag.multi_parent_labels)
                std::cout << "multi_parent " << l << "\n";
            manifest.j["config"] = {{"ontology", ontology_path}, {"format", format},
                                    {"strict", strict}};
            manifest.write((fs::path(out_dir) / "manifest.json").string());
            return 0;
        }

        if (generate->parsed()) {
            ManifestBuilder manifest("generate");
            manifest.input(ontology_path);
            if (!synth_config.empty()) {
                manifest.input(synth_config);
                auto kv = read_kv_config(synth_config);
                if (kv.count("feature_dim") && !*fd) spec.feature_dim = std::stoi(kv["feature_dim"]);
                if (kv.count("features_per_instance") && !*fpi)
                    spec.features_per_instance = std::stoi(kv["features_per_instance"]);
                if (kv.count("true_embedding_scale") && !*scale)
                    spec.true_embedding_scale = std::stod(kv["true_embedding_scale"]);
                if (kv.count("instance_count") && !*count)
                    spec.instance_count = std::stoi(kv["instance_count"]);
                if (kv.count("seed") && !generate->count("--seed"))
                    seed = std::stoull(kv["seed"]);
                if (kv.count("depth_bias") && !*bias) {
                    std::stringstream ss(kv["depth_bias"]);
                    std::string tok;
                    while (std::getline(ss, tok, ',')) depth_bias.push_back(std::stod(tok));
                }
            }
            spec.seed = seed;
            spec.depth_bias = depth_bias;
            auto ont = load_ontology(ontology_path, format, strict);
            auto result = synth_generate(ont, spec);

            std::vector<double> fractions;
            {
                std::stringstream ss(splits);
                std::string tok;
                while (std::getline(ss, tok, ',')) fractions.push_back(std::stod(tok));
            }
            const char* names[] = {"train", "valid", "test"};
            if (fractions.size() == 1) {
                auto path = (fs::path(out_dir) / "data.jsonl").string();
                write_dataset(result.dataset, path);
                manifest.artifact(path);
            } else {
                std::size_t offset = 0;
                for (std::size_t s = 0; s < fractions.size() && s < 3; ++s) {
                    std::size_t n = (s + 1 == fractions.size())
                                        ? result.dataset.size() - offset
                                        : std::size_t(fractions[s] * result.dataset.size());
                    Dataset split(result.dataset.begin() + offset,
                                  result.dataset.begin() + offset + n);
                    offset += n;
                    auto path = (fs::path(out_dir) / (std::string(names[s]) + ".jsonl")).string();
                    write_dataset(split, path);
                    manifest.artifact(path);
                }
            }
            auto tm_path = (fs::path(out_dir) / "true_model.json").string();
            result.truth.save(tm_path);
            manifest.artifact(tm_path);
            manifest.j["config"] = {{"feature_dim", spec.feature_dim},
                                    {"features_per_instance", spec.features_per_instance},
                                    {"true_embedding_scale", spec.true_embedding_scale},
                                    {"instance_count", spec.instance_count},
                                    {"seed", spec.seed},
                                    {"depth_bias", spec.depth_bias},
                                    {"splits", splits}};
            manifest.write((fs::path(out_dir) / "manifest.json").string());
            return 0;
        }

        if (train_cmd->parsed() || grid_cmd->parsed()) {
            const bool is_grid = grid_cmd->parsed();
            ManifestBuilder manifest(is_grid ? "grid-search" : "train");
            manifest.input(ontology_path);
            manifest.input(train_path);
            manifest.input(valid_path);
            // config file first, then flags override (CLI11 wrote flag values
            // into tc during parse; pull file values only for unset flags)
            if (!config_path.empty()) {
                manifest.input(config_path);
                TrainConfig from_file;
                apply_config_file(from_file, config_path);
                CLI::App* cmd = is_grid ? grid_cmd : train_cmd;
                auto unset = [&](const char* flag) { return cmd->count(flag) == 0; };
                if (is_grid || unset("--learning-rate")) tc.learning_rate = from_file.learning_rate;
                if (is_grid || unset("--embedding-size")) tc.d = from_file.d;
                if (is_grid || unset("--layers"))
                    tc.n_additional_layers = from_file.n_additional_layers;
                if (is_grid || unset("--layer-size")) tc.layer_size = from_file.layer_size;
                if (is_grid || unset("--shared-weights"))
                    tc.shared_weights = from_file.shared_weights;
                if (unset("--batch-size")) tc.batch_size = from_file.batch_size;
                if (unset("--epochs")) tc.epochs = from_file.epochs;
                if (is_grid || unset("--patience")) tc.patience = from_file.patience;
                if (is_grid || act_str.empty()) tc.activation = from_file.activation;
                if (is_grid || weight_str.empty()) tc.weighting = from_file.weighting;
                if (mode_str.empty()) tc.mode = from_file.mode;
            }
            if (!mode_str.empty()) tc.mode = mode_from_string(mode_str);
            if (!act_str.empty()) tc.activation = activation_from_string(act_str);
            if (!weight_str.empty()) tc.weighting = weighting_from_string(weight_str);
            tc.seed = seed;

            auto ont = load_ontology(ontology_path, format, strict);
            auto train_ds = read_dataset(train_path);
            auto valid_ds = read_dataset(valid_path);
            auto dict = build_label_dictionary(train_ds, ont, min_count,
                                               /*closure=*/tc.mode == OutputMode::bayesian);

            TrainResult result;
            if (is_grid) {
                manifest.input(grid_path);
                auto space = GridSpace::from_json_file(grid_path);
                auto grid = grid_search(space, tc, train_ds, valid_ds, dict, ont);
                auto lb_path = (fs::path(out_dir) / "leaderboard.tsv").string();
                std::ofstream lb(lb_path, std::ios::binary);
                lb << "rank\tmicro_ap\tbest_epoch\tlearning_rate\td\tn_additional_layers\t"
                      "layer_size\tactivation\tshared_weights\terror\n";
                for (std::size_t r = 0; r < grid.leaderboard.size(); ++r) {
                    const auto& run = grid.leaderboard[r];
                    lb << r << '\t'
                       << (run.valid_micro_ap ? std::to_string(*run.valid_micro_ap) : "NA") << '\t'
                       << run.best_epoch << '\t' << run.config.learning_rate << '\t'
                       << run.config.d << '\t' << run.config.n_additional_layers << '\t'
                       << run.config.layer_size << '\t' << to_string(run.config.activation)
                       << '\t' << (run.config.shared_weights ? 1 : 0) << '\t' << run.error << '\n';
                }
                manifest.artifact(lb_path);
                if (grid.best_index < 0) throw TrainError("every grid run failed");
                result = std::move(grid.best);
                manifest.j["best_config"] = config_json(grid.leaderboard[0].config);
            } else {
                result = train(tc, train_ds, valid_ds, dict, ont);
            }

            auto ckpt = (fs::path(out_dir) / "checkpoint.bin").string();
            result.model.save(ckpt);
            manifest.artifact(ckpt);
            auto counts = (fs::path(out_dir) / "label_counts.tsv").string();
            write_label_counts(dict, counts);
            manifest.artifact(counts);
            auto log_path = (fs::path(out_dir) / "train_log.tsv").string();
            write_train_log(result.log, log_path);
            manifest.artifact(log_path);
            manifest.j["config"] = config_json(tc);
            manifest.j["config"]["min_count"] = min_count;
            manifest.j["best_epoch"] = result.best_epoch;
            manifest.j["best_valid_micro_ap"] = result.best_valid_micro_ap;
            manifest.write((fs::path(out_dir) / "manifest.json").string());
            std::cout << "best_epoch " << result.best_epoch << "\n";
            std::cout << "best_valid_micro_ap " << result.best_valid_micro_ap << "\n";
            return 0;
        }

        if (eval_cmd->parsed()) {
            ManifestBuilder manifest("evaluate");
            manifest.input(ontology_path);
            manifest.input(ckpt_path);
            manifest.input(data_path);
            manifest.input(counts_path);
            auto ont = load_ontology(ontology_path, format, strict);
            auto model = Model::load(ckpt_path);
            auto dict = read_label_counts(counts_path);
            auto test_ds = read_dataset(data_path, &ont);
            auto sm = score_dataset(model, test_ds, dict, ont);
            auto report = evaluate(sm, dict.positive_counts, bootstrap, 0.95, seed);
            auto json_path = (fs::path(out_dir) / "report.json").string();
            auto csv_path = (fs::path(out_dir) / "report.csv").string();
            emit_report(report, json_path, csv_path);
            manifest.artifact(json_path);
            manifest.artifact(csv_path);
            manifest.j["config"] = {{"bootstrap", bootstrap}, {"seed", seed}};
            manifest.write((fs::path(out_dir) / "manifest.json").string());
            if (report.micro.auroc) std::cout << "micro_auroc " << *report.micro.auroc << "\n";
            if (report.micro.ap) std::cout << "micro_ap " << *report.micro.ap << "\n";
            return 0;
        }

        if (predict_cmd->parsed()) {
            auto ont = load_ontology(ontology_path, format, strict);
            auto model = Model::load(ckpt_path);
            auto dict = read_label_counts(counts_path);
            auto ds = read_dataset(data_path);
            for (const auto& inst : ds) {
                auto x = model.encode(inst);
                auto probs = model.predict_all(x, dict, ont);
                std::vector<std::size_t> order(probs.size());
                std::iota(order.begin(), order.end(), 0);
                std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
                    return probs[a] > probs[b];
                });
                std::size_t k = top_k > 0 ? std::min<std::size_t>(std::size_t(top_k), order.size())
                                          : order.size();
                for (std::size_t r = 0; r < k; ++r)
                    std::cout << inst.id << '\t' << dict.targets[order[r]] << '\t'
                              << probs[order[r]] << '\n';
            }
            return 0;
        }
    } catch (const OntologyError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitParse;
    } catch (const DatasetError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitParse;
    } catch (const ModelError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const TrainError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return 0;
}
