// Command-line front end: gen / train / eval / sweep / report.
// All state flows through flags, config files and checkpoint files; every
// command is deterministic given its inputs.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "frt/driver.hpp"

namespace {

using frt::RunConfig;

struct ConfigCli {
    std::string config_file;
    std::vector<std::string> sets;
    std::optional<std::uint64_t> seed;

    void attach(CLI::App* cmd) {
        cmd->add_option("--config", config_file, "key=value config file");
        cmd->add_option("--set", sets, "override a config key, e.g. --set delta=0.3")
            ->take_all();
        cmd->add_option("--seed", seed, "shorthand for seed and synth.seed");
    }

    void apply(RunConfig& cfg) const {
        if (!config_file.empty())
            for (const auto& [k, v] : frt::parse_config_file(config_file)) cfg.set(k, v);
        for (const auto& kv : sets) {
            auto eq = kv.find('=');
            if (eq == std::string::npos || eq == 0)
                throw frt::ConfigError("--set expects key=value, got '" + kv + "'");
            cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
        }
        if (seed) {
            cfg.seed = *seed;
            cfg.synth.seed = *seed;
        }
    }
};

frt::Stage parse_stage(const std::string& s) {
    if (s == "E" || s == "e") return frt::Stage::E;
    if (s == "G" || s == "g") return frt::Stage::G;
    if (s == "T" || s == "t") return frt::Stage::T;
    throw frt::ConfigError("unknown stage '" + s + "' (expected E|G|T)");
}

int data_channels(const frt::Dataset& data) {
    if (data.train.empty() && data.query.empty())
        throw frt::ContractError("dataset holds no descriptors");
    return data.train.empty() ? data.query[0].channels() : data.train[0].channels();
}

/// The raw channel width is a property of the feature files; a checkpoint
/// pins it, otherwise the data decides.
void reconcile_c_raw(RunConfig& cfg, const frt::Dataset& data, bool from_checkpoint) {
    int channels = data_channels(data);
    if (channels != cfg.c_raw) {
        if (from_checkpoint)
            throw frt::ContractError("checkpoint expects c_raw=" + std::to_string(cfg.c_raw) +
                                     " but the data has " + std::to_string(channels) +
                                     " channels per part");
        cfg.c_raw = channels;
    }
}

int cmd_gen(const ConfigCli& cli, const std::string& out_dir) {
    RunConfig cfg;
    cli.apply(cfg);
    cfg.synth.validate();
    std::filesystem::create_directories(out_dir);
    frt::generate_files(cfg.synth, out_dir);
    std::cout << "wrote " << out_dir << "/{train,query,gallery}.pfv and manifest.txt\n";
    return 0;
}

int cmd_train(const ConfigCli& cli, const std::string& stage_str, const std::string& data_dir,
              const std::string& ckpt_in, const std::string& ckpt_out,
              const std::string& loss_csv) {
    frt::Stage stage = parse_stage(stage_str);

    RunConfig cfg;
    frt::ModelParams params;
    frt::StageFlags stages;
    std::optional<frt::Checkpoint> in;
    if (!ckpt_in.empty()) {
        in = frt::read_checkpoint(ckpt_in);
        cfg = frt::config_from_checkpoint(*in, cfg);
    }
    cli.apply(cfg);
    cfg.validate();

    frt::Dataset data = frt::load_dataset(data_dir, cfg);
    reconcile_c_raw(cfg, data, in.has_value());
    frt::IdIndex index(data.train);

    if (in) {
        stages = in->stages();
        params = std::move(in->params);
        if (in->meta_int("num_classes") != index.num_classes())
            throw frt::ContractError("checkpoint was trained with a different identity set");
    } else {
        if (stage != frt::Stage::E)
            throw frt::ContractError(std::string("stage ") + frt::stage_name(stage) +
                                     " requires --checkpoint-in from the previous stage");
        params = frt::init_model(cfg, index.num_classes());
    }

    auto result = frt::train_stage(stage, data.train, params, cfg.train_config(), stages);

    if (stage == frt::Stage::E) stages.e = true;
    if (stage == frt::Stage::G) stages.g = true;
    if (stage == frt::Stage::T) stages.t = true;
    frt::Checkpoint out = frt::make_checkpoint(cfg, std::move(params), stages,
                                               index.num_classes());
    frt::write_checkpoint(ckpt_out, out);
    if (!loss_csv.empty()) frt::write_loss_curve_csv(loss_csv, stage, result.epoch_losses, false);

    std::cout << "stage " << frt::stage_name(stage) << ": " << result.epoch_losses.size()
              << " epochs";
    if (!result.epoch_losses.empty())
        std::cout << ", loss " << frt::format_double(result.epoch_losses.front()) << " -> "
                  << frt::format_double(result.epoch_losses.back());
    std::cout << "; wrote " << ckpt_out << "\n";
    return 0;
}

int cmd_eval(const ConfigCli& cli, const std::string& data_dir, const std::string& ckpt_path,
             const std::string& recover_str, const std::string& baseline_str,
             const std::string& matching_str, const std::string& out_csv,
             const std::string& ranklists_csv, const std::string& attention_csv,
             const std::string& per_part_csv) {
    frt::Checkpoint ckpt = frt::read_checkpoint(ckpt_path);
    RunConfig cfg = frt::config_from_checkpoint(ckpt, RunConfig{});
    cli.apply(cfg);

    frt::EvalOptions opt;
    if (recover_str == "on") opt.use_recovery = true;
    else if (recover_str != "off") throw frt::ConfigError("--recover expects on|off");
    if (matching_str == "graph") opt.use_graph = true;
    else if (matching_str == "cosine") opt.use_graph = false;
    else throw frt::ConfigError("--matching expects graph|cosine");
    opt.baseline = frt::baseline_from_string(baseline_str);

    frt::StageFlags stages = ckpt.stages();
    if (!stages.e) throw frt::ContractError("checkpoint has no completed stage E");
    if (opt.use_graph && !stages.g)
        throw frt::ContractError("graph matching requires a completed stage G");
    if (opt.use_recovery && !stages.t)
        throw frt::ContractError("recovery requires a completed stage T");
    if (!opt.use_recovery && !attention_csv.empty())
        throw frt::ConfigError("attention report needs --recover on");

    frt::Dataset data = frt::load_dataset(data_dir, cfg);
    reconcile_c_raw(cfg, data, true);
    auto art = frt::evaluate(data, ckpt.params, cfg, opt);
    frt::write_report_csv(out_csv, art.report);
    if (!ranklists_csv.empty()) {
        auto gallery = frt::encode_all(data.gallery, ckpt.params, cfg.delta);
        frt::write_ranklists_csv(ranklists_csv, art.ranklists, gallery);
    }
    if (!attention_csv.empty()) frt::write_attention_csv(attention_csv, art.attention);
    if (!per_part_csv.empty()) {
        auto before = frt::per_part_eval(data, ckpt.params, cfg, false);
        std::optional<std::array<frt::EvalReport, 5>> after;
        if (opt.use_recovery) after = frt::per_part_eval(data, ckpt.params, cfg, true);
        frt::write_per_part_csv(per_part_csv, before, after);
    }

    std::cout << "rank1 " << frt::format_double(art.report.cmc1) << ", mAP "
              << frt::format_double(art.report.map) << " over " << art.report.queries_evaluated
              << " queries (" << art.report.queries_skipped << " skipped); wrote " << out_csv
              << "\n";
    return 0;
}

int cmd_sweep(const ConfigCli& cli, const std::string& data_dir, const std::string& ckpt_path,
              const std::string& param, const std::string& values_str,
              const std::string& out_csv) {
    frt::Checkpoint ckpt = frt::read_checkpoint(ckpt_path);
    RunConfig cfg = frt::config_from_checkpoint(ckpt, RunConfig{});
    cli.apply(cfg);

    std::vector<double> values;
    std::string tok;
    std::istringstream ss(values_str);
    while (std::getline(ss, tok, ',')) values.push_back(frt::parse_double(tok, -1));

    frt::Dataset data = frt::load_dataset(data_dir, cfg);
    reconcile_c_raw(cfg, data, true);
    auto rows = frt::sweep(param, values, data, ckpt.params, cfg, ckpt.stages());
    frt::write_sweep_csv(out_csv, rows);
    std::cout << "swept " << param << " over " << rows.size() << " values; wrote " << out_csv
              << "\n";
    return 0;
}

int cmd_report(const std::string& ckpt_path, const std::string& eval_csv) {
    if (ckpt_path.empty() && eval_csv.empty())
        throw frt::ConfigError("report needs --checkpoint and/or --eval");
    if (!ckpt_path.empty()) {
        frt::Checkpoint ckpt = frt::read_checkpoint(ckpt_path);
        auto stages = ckpt.stages();
        std::cout << "checkpoint " << ckpt_path << "\n";
        std::cout << "  stages: E=" << stages.e << " G=" << stages.g << " T=" << stages.t << "\n";
        long scalars = 0;
        for (const auto& [name, p] : ckpt.params) scalars += p.tensor.numel();
        std::cout << "  parameters: " << ckpt.params.size() << " tensors, " << scalars
                  << " scalars\n";
        for (const auto& [key, value] : ckpt.meta)
            std::cout << "  meta " << key << "=" << value << "\n";
    }
    if (!eval_csv.empty()) {
        std::ifstream in(eval_csv);
        if (!in) throw frt::ParseError("cannot open " + eval_csv);
        std::cout << "report " << eval_csv << "\n";
        std::string line;
        while (std::getline(in, line)) {
            if (line.rfind("config.", 0) == 0 || line == "metric,value") continue;
            auto comma = line.find(',');
            if (comma == std::string::npos) continue;
            std::cout << "  " << line.substr(0, comma) << " = " << line.substr(comma + 1) << "\n";
        }
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"part-feature re-identification pipeline"};
    app.require_subcommand(1);

    ConfigCli gen_cli, train_cli, eval_cli, sweep_cli;

    auto* gen = app.add_subcommand("gen", "generate a synthetic dataset");
    std::string gen_out;
    gen->add_option("--out", gen_out, "output directory")->required();
    gen_cli.attach(gen);

    auto* train = app.add_subcommand("train", "run one training stage");
    std::string stage, train_data, ckpt_in, ckpt_out, loss_csv;
    train->add_option("--stage", stage, "E, G or T")->required();
    train->add_option("--data", train_data, "dataset directory")->required();
    train->add_option("--checkpoint-in", ckpt_in, "checkpoint from the previous stage");
    train->add_option("--checkpoint-out", ckpt_out, "checkpoint to write")->required();
    train->add_option("--loss-curve", loss_csv, "CSV file for the per-epoch losses");
    train_cli.attach(train);

    auto* eval = app.add_subcommand("eval", "retrieval evaluation");
    std::string eval_data, eval_ckpt, recover = "off", baseline = "none", matching = "graph";
    std::string eval_out, ranklists_csv, attention_csv, per_part_csv;
    eval->add_option("--data", eval_data, "dataset directory")->required();
    eval->add_option("--checkpoint", eval_ckpt, "trained checkpoint")->required();
    eval->add_option("--recover", recover, "on|off (default off)");
    eval->add_option("--baseline", baseline, "none|aqe|rerank (default none)");
    eval->add_option("--matching", matching, "graph|cosine (default graph)");
    eval->add_option("--out", eval_out, "report CSV")->required();
    eval->add_option("--ranklists", ranklists_csv, "rank-list CSV");
    eval->add_option("--attention", attention_csv, "attention-contribution CSV");
    eval->add_option("--per-part", per_part_csv, "per-part report CSV");
    eval_cli.attach(eval);

    auto* sweep = app.add_subcommand("sweep", "evaluate across parameter values");
    std::string sweep_data, sweep_ckpt, sweep_param, sweep_values, sweep_out;
    sweep->add_option("--data", sweep_data, "dataset directory")->required();
    sweep->add_option("--checkpoint", sweep_ckpt, "trained checkpoint")->required();
    sweep->add_option("--param", sweep_param, "k|s|delta|gallery_size")->required();
    sweep->add_option("--values", sweep_values, "comma-separated values")->required();
    sweep->add_option("--out", sweep_out, "sweep CSV")->required();
    sweep_cli.attach(sweep);

    auto* report = app.add_subcommand("report", "summarize checkpoints and report files");
    std::string report_ckpt, report_eval;
    report->add_option("--checkpoint", report_ckpt, "checkpoint to inspect");
    report->add_option("--eval", report_eval, "report CSV to summarize");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) return cmd_gen(gen_cli, gen_out);
        if (train->parsed())
            return cmd_train(train_cli, stage, train_data, ckpt_in, ckpt_out, loss_csv);
        if (eval->parsed())
            return cmd_eval(eval_cli, eval_data, eval_ckpt, recover, baseline, matching, eval_out,
                            ranklists_csv, attention_csv, per_part_csv);
        if (sweep->parsed())
            return cmd_sweep(sweep_cli, sweep_data, sweep_ckpt, sweep_param, sweep_values,
                             sweep_out);
        if (report->parsed()) return cmd_report(report_ckpt, report_eval);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
