// tra: synthesize data, train and evaluate three-region attention networks,
// run ablations, and run the verification suites.

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>

#include <CLI11.hpp>
#include <json.hpp>

#include "tra/data.hpp"
#include "tra/kernels.hpp"
#include "tra/metrics.hpp"
#include "tra/network.hpp"
#include "tra/serialize.hpp"
#include "tra/training.hpp"
#include "tra/verify.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

std::uint64_t default_seed() {
    if (const char* env = std::getenv("TRA_SEED")) {
        try {
            return std::stoull(env);
        } catch (const std::exception&) {
            throw tra::ConfigError(tra::cat("TRA_SEED='", env, "' is not an integer"));
        }
    }
    return 42;
}

void append_run_record(const std::string& out_dir, const std::string& command,
                       const json& config_snapshot, std::uint64_t seed,
                       const std::string& weights_hash, const std::string& metrics_csv,
                       double seconds) {
    json rec;
    rec["command"] = command;
    rec["config"] = config_snapshot;
    rec["seed"] = seed;
    rec["weights_hash"] = weights_hash;
    rec["metrics_csv"] = metrics_csv;
    rec["duration_seconds"] = seconds;
    rec["unix_time"] = static_cast<std::int64_t>(std::time(nullptr));
    std::ofstream os(fs::path(out_dir) / "runs.jsonl", std::ios::app);
    tra::require<tra::DataError>(os.good(), "cannot append run record in ", out_dir);
    os << rec.dump() << "\n";
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream os(path, std::ios::trunc);
    tra::require<tra::DataError>(os.good(), "cannot write ", path);
    os << text;
    tra::require<tra::DataError>(os.good(), "short write to ", path);
}

struct CommonOpts {
    std::string data_dir;
    std::string model_cfg_path = "toy";
    std::string train_cfg_path;
    std::string out_dir = "runs";
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::string precision = "double";
    std::int64_t epoch_cap_override = -1;
    std::int64_t folds = 3;
    std::int64_t jobs = 1;
};

tra::TrainConfig resolve_train_cfg(const CommonOpts& opts) {
    tra::TrainConfig cfg;
    if (!opts.train_cfg_path.empty()) cfg = tra::train_config_from_file(opts.train_cfg_path);
    if (opts.seed_set)
        cfg.seed = opts.seed;
    else if (opts.train_cfg_path.empty())
        cfg.seed = default_seed();
    if (opts.epoch_cap_override >= 0) cfg.epoch_cap = opts.epoch_cap_override;
    cfg.validate();
    return cfg;
}

tra::Dataset load_data_dir(const std::string& data_dir, std::int64_t input_size) {
    const fs::path manifest = fs::path(data_dir) / "manifest.csv";
    tra::require<tra::DataError>(fs::exists(manifest), "no manifest.csv under ", data_dir);
    tra::LoadReport rep;
    tra::Dataset ds = tra::load_dataset(manifest.string(), input_size, &rep);
    for (const auto& d : rep.diagnostics) std::cerr << "warning: " << d << "\n";
    if (rep.skipped_bad > 0)
        std::cout << "skipped " << rep.skipped_bad << " bad-annotation frames\n";
    tra::require<tra::DataError>(!ds.samples.empty(), "dataset under ", data_dir, " is empty");
    return ds;
}

// ---- synth ------------------------------------------------------------------

int cmd_synth(const std::string& spec_path, const std::string& out_dir, bool seed_set,
              std::uint64_t seed) {
    tra::SynthSpec spec;
    if (!spec_path.empty()) {
        spec = tra::synth_spec_from_file(spec_path);
    } else if (std::getenv("TRA_SEED")) {
        spec.seed = default_seed();
    }
    if (seed_set) spec.seed = seed;
    const std::string manifest = tra::generate_synthetic(spec, out_dir);
    const tra::DatasetManifest m = tra::read_manifest(manifest);

    std::array<std::int64_t, 8> pos{};
    for (const auto& row : m.rows) {
        const tra::AuLabels lab = tra::binarize(row.intensities);
        for (std::size_t a = 0; a < 8; ++a) pos[a] += lab[a];
    }
    std::cout << "wrote " << m.rows.size() << " frames under " << out_dir << "\n";
    std::cout << "per-AU positive rates:\n";
    for (std::size_t a = 0; a < 8; ++a) {
        std::printf("  %-5s %6.3f\n", tra::au_name(tra::kAuNumbers[a]).c_str(),
                    static_cast<double>(pos[a]) / static_cast<double>(m.rows.size()));
    }
    return kExitOk;
}

// ---- train -------------------------------------------------------------------

template <class T>
int run_train(const CommonOpts& opts, const std::string& holdout_csv) {
    const auto t0 = std::chrono::steady_clock::now();
    const tra::ModelConfig model_cfg = tra::model_config_from_file(opts.model_cfg_path);
    const tra::TrainConfig train_cfg = resolve_train_cfg(opts);
    tra::Dataset ds = load_data_dir(opts.data_dir, model_cfg.input_size);

    std::set<std::string> holdout;
    if (holdout_csv.empty()) {
        const auto groups =
            tra::split_subject_folds(tra::distinct_subjects(ds), 3, train_cfg.seed);
        holdout.insert(groups[0].begin(), groups[0].end());
    } else {
        std::string cur;
        for (char c : holdout_csv + ",") {
            if (c == ',') {
                if (!cur.empty()) holdout.insert(cur);
                cur.clear();
            } else {
                cur.push_back(c);
            }
        }
    }
    std::vector<std::int64_t> train_idx, test_idx;
    for (std::size_t i = 0; i < ds.samples.size(); ++i) {
        (holdout.count(ds.samples[i].subject) ? test_idx : train_idx)
            .push_back(static_cast<std::int64_t>(i));
    }
    tra::require<tra::DataError>(!test_idx.empty(), "holdout subjects match no frames");
    tra::require<tra::DataError>(!train_idx.empty(), "holdout subjects cover the whole dataset");

    fs::create_directories(opts.out_dir);
    tra::Model<T> model = tra::Model<T>::build(model_cfg, tra::Rng::mix(train_cfg.seed, "init", 0));
    const tra::FoldOutcome<T> outcome = tra::run_fold(model, ds, train_idx, test_idx, train_cfg, 0);

    const std::string weights_path = (fs::path(opts.out_dir) / "weights.traw1").string();
    tra::write_traw1(weights_path, model.to_records());
    const std::string metrics_path = (fs::path(opts.out_dir) / "metrics.csv").string();
    write_text_file(metrics_path, tra::reports_to_csv({outcome.report}));

    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    json snapshot;
    snapshot["model"] = json::parse(tra::model_config_to_json_text(model_cfg));
    snapshot["train"] = json::parse(tra::train_config_to_json_text(train_cfg));
    snapshot["precision"] = opts.precision;
    append_run_record(opts.out_dir, "train", snapshot, train_cfg.seed,
                      tra::file_content_hash(weights_path), metrics_path, seconds);

    std::cout << tra::format_report_table({outcome.report});
    std::cout << "epochs=" << outcome.stats.epochs_run << " best_epoch=" << outcome.stats.best_epoch
              << (outcome.stats.stopped_early ? " (early stop)" : "") << " time=" << seconds
              << "s\n";
    std::cout << "weights: " << weights_path << "\n";
    return kExitOk;
}

// ---- crossval ------------------------------------------------------------------

template <class T>
tra::CrossValOutcome run_crossval_typed(const tra::Dataset& ds, const CommonOpts& opts,
                                        const tra::ModelConfig& model_cfg,
                                        const tra::TrainConfig& train_cfg) {
    return tra::cross_validate<T>(ds, opts.folds, model_cfg, train_cfg, opts.jobs);
}

int run_crossval(const CommonOpts& opts, const std::string& label, tra::ModelConfig model_cfg,
                 bool quiet = false, double* mean_f1_out = nullptr) {
    const auto t0 = std::chrono::steady_clock::now();
    const tra::TrainConfig train_cfg = resolve_train_cfg(opts);
    tra::Dataset ds = load_data_dir(opts.data_dir, model_cfg.input_size);

    tra::CrossValOutcome outcome;
    if (opts.precision == "float") {
        outcome = run_crossval_typed<float>(ds, opts, model_cfg, train_cfg);
    } else {
        outcome = run_crossval_typed<double>(ds, opts, model_cfg, train_cfg);
    }

    fs::create_directories(opts.out_dir);
    const std::string metrics_path =
        (fs::path(opts.out_dir) / (label + "_metrics.csv")).string();
    write_text_file(metrics_path, tra::reports_to_csv(outcome.fold_reports));

    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    json snapshot;
    snapshot["model"] = json::parse(tra::model_config_to_json_text(model_cfg));
    snapshot["train"] = json::parse(tra::train_config_to_json_text(train_cfg));
    snapshot["precision"] = opts.precision;
    snapshot["folds"] = opts.folds;
    append_run_record(opts.out_dir, "crossval:" + label, snapshot, train_cfg.seed, "", metrics_path,
                      seconds);

    if (!quiet) {
        std::cout << tra::format_report_table(outcome.fold_reports);
        for (const auto& st : outcome.fold_stats) {
            std::cout << "fold " << st.fold << ": epochs=" << st.epochs_run
                      << " best_epoch=" << st.best_epoch
                      << (st.stopped_early ? " (early stop)" : "") << " time=" << st.seconds
                      << "s\n";
        }
        std::cout << "mean F1 " << outcome.mean.mean_f1 << ", mean accuracy "
                  << outcome.mean.mean_accuracy << "\n";
    }
    if (mean_f1_out) *mean_f1_out = outcome.mean.mean_f1;
    return kExitOk;
}

// ---- ablate ---------------------------------------------------------------------

const std::vector<std::string>& ablation_variants() {
    static const std::vector<std::string> names{
        "backbone",          "backbone+cbam",      "backbone+hm", "hm+cbam-no-channel",
        "hm+cbam-no-spatial", "full+residual",      "full"};
    return names;
}

tra::ModelConfig ablation_config(const tra::ModelConfig& base, const std::string& variant) {
    tra::ModelConfig cfg = base;
    cfg.enable_hard_mask = true;
    cfg.enable_cbam = true;
    cfg.enable_channel_att = true;
    cfg.enable_spatial_att = true;
    cfg.cbam_residual = false;
    if (variant == "backbone") {
        cfg.enable_hard_mask = false;
        cfg.enable_cbam = false;
    } else if (variant == "backbone+cbam") {
        cfg.enable_hard_mask = false;
    } else if (variant == "backbone+hm") {
        cfg.enable_cbam = false;
    } else if (variant == "hm+cbam-no-channel") {
        cfg.enable_channel_att = false;
    } else if (variant == "hm+cbam-no-spatial") {
        cfg.enable_spatial_att = false;
    } else if (variant == "full+residual") {
        cfg.cbam_residual = true;
    } else if (variant == "full") {
        // defaults above
    } else {
        std::string valid;
        for (const auto& v : ablation_variants()) valid += v + " ";
        throw tra::ConfigError(tra::cat("unknown ablation variant '", variant, "'; valid: ", valid));
    }
    return cfg;
}

int cmd_ablate(const CommonOpts& opts, const std::string& variant) {
    const tra::ModelConfig base = tra::model_config_from_file(opts.model_cfg_path);
    std::vector<std::string> to_run;
    if (variant == "all") {
        to_run = ablation_variants();
    } else {
        to_run.push_back(variant);
    }
    std::vector<std::pair<std::string, double>> results;
    for (const auto& name : to_run) {
        const tra::ModelConfig cfg = ablation_config(base, name);
        std::cout << "== variant " << name << " ==\n";
        double mean_f1 = 0.0;
        run_crossval(opts, "ablate_" + name, cfg, false, &mean_f1);
        results.emplace_back(name, mean_f1);
    }
    if (results.size() > 1) {
        std::cout << "\nvariant comparison (mean F1 over folds)\n";
        for (const auto& [name, f1] : results) std::printf("  %-22s %6.2f\n", name.c_str(), f1);
    }
    return kExitOk;
}

// ---- check -------------------------------------------------------------------------

int cmd_check(const std::string& suite, int probes, int instances, bool self_test_fault) {
    std::vector<tra::verify::SuiteResult> results;
    if (suite == "grad" || suite == "all") {
        results.push_back(tra::verify::grad_suite(probes, 160, 14));
    }
    if (suite == "invariants" || suite == "all") {
        results.push_back(tra::verify::invariants_suite(2));
    }
    if (suite == "oracles" || suite == "all") {
        results.push_back(tra::verify::oracles_suite(instances, 1));
    }
    tra::require<tra::ConfigError>(!results.empty(), "unknown suite '", suite,
                                   "' (grad|invariants|oracles|all)");
    if (self_test_fault) {
        tra::verify::SuiteResult fault;
        fault.suite = "self-test-fault";
        fault.checks.push_back({"injected failure", false, 1.0, "forced by --self-test-fault"});
        results.push_back(fault);
    }
    int failures = 0;
    double total_seconds = 0.0;
    for (const auto& r : results) {
        std::cout << tra::verify::format_suite(r);
        failures += r.failures();
        total_seconds += r.seconds;
    }
    std::cout << (failures == 0 ? "ALL CHECKS PASSED" : "CHECKS FAILED") << " (" << total_seconds
              << "s)\n";
    return std::min(failures, 125);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"three-region attention network for facial action unit detection"};
    app.require_subcommand(1);

    CommonOpts opts;
    std::string synth_spec_path, synth_out = "data/synth";
    std::string holdout_csv;
    std::string variant = "full";
    std::string suite = "all";
    int probes = 64;
    int instances = 100;
    bool self_test_fault = false;

    auto add_seed = [&](CLI::App* cmd) {
        cmd->add_option("--seed", opts.seed, "master seed (env TRA_SEED overrides the default)")
            ->each([&](const std::string&) { opts.seed_set = true; });
    };
    auto add_training_opts = [&](CLI::App* cmd) {
        cmd->add_option("--data", opts.data_dir, "dataset directory (contains manifest.csv)")
            ->required();
        cmd->add_option("--model-cfg", opts.model_cfg_path,
                        "model config JSON file or preset (toy|paper224)");
        cmd->add_option("--train-cfg", opts.train_cfg_path, "training config JSON file");
        cmd->add_option("--out", opts.out_dir, "output directory");
        cmd->add_option("--precision", opts.precision, "double|float")
            ->check(CLI::IsMember({"double", "float"}));
        cmd->add_option("--epoch-cap", opts.epoch_cap_override, "override epoch cap");
        add_seed(cmd);
    };

    CLI::App* synth = app.add_subcommand("synth", "generate a synthetic dataset");
    synth->add_option("--spec", synth_spec_path, "synth spec JSON (defaults applied if omitted)");
    synth->add_option("--out", synth_out, "output directory")->required();
    add_seed(synth);

    CLI::App* train = app.add_subcommand("train", "train one identity split");
    add_training_opts(train);
    train->add_option("--holdout", holdout_csv,
                      "comma-separated holdout subjects (default: fold 0 of a 3-way split)");

    CLI::App* crossval = app.add_subcommand("crossval", "subject-disjoint cross-validation");
    add_training_opts(crossval);
    crossval->add_option("--folds", opts.folds, "number of folds");
    crossval->add_option("--jobs", opts.jobs, "parallel fold workers");

    CLI::App* ablate = app.add_subcommand("ablate", "run ablation variants via cross-validation");
    add_training_opts(ablate);
    ablate->add_option("--folds", opts.folds, "number of folds");
    ablate->add_option("--jobs", opts.jobs, "parallel fold workers");
    ablate->add_option("--variant", variant, "variant name or 'all'");

    CLI::App* check = app.add_subcommand("check", "run verification suites");
    check->add_option("--suite", suite, "grad|invariants|oracles|all");
    check->add_option("--probes", probes, "finite-difference probes per block");
    check->add_option("--instances", instances, "random instances per oracle check");
    check->add_flag("--self-test-fault", self_test_fault,
                    "inject a failing check (exercises the failure exit path)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfig;
    }

    try {
        if (synth->parsed()) {
            return cmd_synth(synth_spec_path, synth_out, opts.seed_set, opts.seed);
        }
        if (train->parsed()) {
            return opts.precision == "float" ? run_train<float>(opts, holdout_csv)
                                             : run_train<double>(opts, holdout_csv);
        }
        if (crossval->parsed()) {
            return run_crossval(opts, "crossval", tra::model_config_from_file(opts.model_cfg_path));
        }
        if (ablate->parsed()) {
            return cmd_ablate(opts, variant);
        }
        if (check->parsed()) {
            return cmd_check(suite, probes, instances, self_test_fault);
        }
    } catch (const tra::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const tra::NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const tra::DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const tra::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    }
    return kExitConfig;
}
