#include <CLI11.hpp>
#include <fmt/format.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "venomguard/config.hpp"
#include "venomguard/dataset.hpp"
#include "venomguard/error.hpp"
#include "venomguard/gradcheck.hpp"
#include "venomguard/inference.hpp"
#include "venomguard/metrics.hpp"
#include "venomguard/parallel.hpp"
#include "venomguard/pca.hpp"
#include "venomguard/prior.hpp"
#include "venomguard/synthetic.hpp"

namespace fs = std::filesystem;
using namespace venomguard;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitCheck = 2;
constexpr int kExitIo = 3;

int exit_code_for(ErrorCode code) {
    switch (code) {
        case ErrorCode::Argument: return kExitUsage;
        case ErrorCode::Io:
        case ErrorCode::BadMagic:
        case ErrorCode::Truncated:
        case ErrorCode::TrailingData: return kExitIo;
        default: return kExitCheck;
    }
}

// Flags that mirror a config key; only explicitly given flags override.
class KeyedFlags {
public:
    CLI::Option* option(CLI::App* app, const std::string& name, const std::string& key,
                        const std::string& help) {
        const ConfigKey* k = RunConfig::find_key(key);
        auto* opt = app->add_option(name, values_[key], help + " [" + key + "]");
        opt->default_str(k->default_value);
        options_.emplace_back(opt, key);
        return opt;
    }

    // A boolean switch that stores `value` into `key` when present.
    void toggle(CLI::App* app, const std::string& name, const std::string& key,
                const std::string& value, const std::string& help) {
        const ConfigKey* k = RunConfig::find_key(key);
        auto* opt = app->add_flag(name)->description(help + " [" + key + ", default " + k->default_value + "]");
        toggles_.push_back({opt, key, value});
    }

    void apply(RunConfig& cfg) const {
        for (const auto& [opt, key] : options_) {
            if (opt->count() > 0) cfg.set(key, values_.at(key));
        }
        for (const auto& t : toggles_) {
            if (t.opt->count() > 0) cfg.set(t.key, t.value);
        }
    }

private:
    struct Toggle {
        CLI::Option* opt;
        std::string key;
        std::string value;
    };
    std::map<std::string, std::string> values_;
    std::vector<std::pair<CLI::Option*, std::string>> options_;
    std::vector<Toggle> toggles_;
};

void log_config(const RunConfig& cfg, const std::vector<std::string>& prefixes) {
    std::cerr << "# resolved config\n" << cfg.dump(prefixes);
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::Io, "cannot open " + path.string() + " for writing");
    out << text;
    if (!out) throw Error(ErrorCode::Io, "write failed for " + path.string());
}

ValidationMode validation_mode(const RunConfig& cfg) {
    return cfg.text("validate.mode") == "drop" ? ValidationMode::Drop : ValidationMode::Strict;
}

DatasetBundle load_validated(const fs::path& dir, const RunConfig& cfg) {
    auto v = validate_bundle(load_bundle(dir), validation_mode(cfg));
    if (v.report.dropped_rows || v.report.dropped_locations) {
        std::cerr << fmt::format("{}: dropped {} observation row(s), {} location(s)\n", dir.string(),
                                 v.report.dropped_rows, v.report.dropped_locations);
    }
    return std::move(v.bundle);
}

int run_validate(const fs::path& dir, const RunConfig& cfg) {
    std::vector<fs::path> bundles;
    if (is_bundle_dir(dir)) {
        bundles.push_back(dir);
    } else if (fs::is_directory(dir)) {
        for (const auto& entry : fs::directory_iterator(dir)) {
            if (entry.is_directory() && is_bundle_dir(entry.path())) bundles.push_back(entry.path());
        }
        std::sort(bundles.begin(), bundles.end());
    }
    if (bundles.empty()) throw Error(ErrorCode::Io, dir.string() + " holds no dataset bundle");

    for (const auto& b : bundles) {
        const auto v = validate_bundle(load_bundle(b), validation_mode(cfg));
        const auto& bundle = v.bundle;
        std::cout << fmt::format("{}: ok, {} classes ({} venomous), {} observations, {} image rows",
                                 b.string(), bundle.classes.size(), bundle.classes.venomous_count(),
                                 bundle.observations.groups().size(), bundle.observations.rows.size());
        if (v.report.dropped_rows || v.report.dropped_locations) {
            std::cout << fmt::format(", dropped {} row(s) and {} location(s)", v.report.dropped_rows,
                                     v.report.dropped_locations);
        }
        std::cout << "\n";
        for (const auto& o : v.report.offenders) std::cerr << "  dropped " << o << "\n";
    }
    return 0;
}

int run_pca(const fs::path& input, const fs::path& output, const RunConfig& cfg) {
    const FeatureMatrix x = fs::is_directory(input)
                                ? read_feature_matrix(input / bundle_files::kMetadata)
                                : read_feature_matrix(input);
    std::size_t k = cfg.count("pca.k");
    if (!cfg.is_set("pca.k")) k = std::min({k, x.rows(), x.dims()});
    const PcaModel model = fit_pca(x, k);
    save_pca(model, output);
    std::cout << fmt::format("pca: {} -> {} dims, explained variance {:.4f}\n", model.input_dims(),
                             model.output_dims(), model.explained_variance_ratio());
    return 0;
}

int run_train_prior(const fs::path& dir, const std::optional<fs::path>& pca_path,
                    const fs::path& output, std::optional<fs::path> trace, const RunConfig& cfg) {
    const DatasetBundle bundle = load_validated(dir, cfg);
    std::optional<PcaModel> pca;
    if (pca_path) pca = load_pca(*pca_path);

    const PrototypeMatrix prototypes = bundle_prototypes(bundle, cfg.flag("prior.normalize_prototypes"));
    const PriorTrainingSet data = build_prior_training_set(bundle, pca ? &*pca : nullptr);

    PriorTrainConfig tc;
    tc.lambda = cfg.real("prior.lambda");
    tc.epochs = cfg.count("prior.epochs");
    tc.batch_size = cfg.count("prior.batch_size");
    tc.seed = cfg.count("prior.seed");
    tc.hidden = cfg.count("prior.hidden");
    tc.dropout_rate = cfg.real("prior.dropout");
    tc.base_lr = cfg.real("prior.base_lr");
    tc.warmup_lr = cfg.real("prior.warmup_lr");
    tc.final_lr = cfg.real("prior.final_lr");
    tc.warmup_epochs = cfg.count("prior.warmup_epochs");
    tc.optimizer.beta1 = cfg.real("adamw.beta1");
    tc.optimizer.beta2 = cfg.real("adamw.beta2");
    tc.optimizer.eps = cfg.real("adamw.eps");
    tc.optimizer.weight_decay = cfg.real("adamw.weight_decay");

    const PriorTrainResult result = train_prior(data, prototypes, tc);
    save_prior(result.model, prototypes, output);

    std::string csv = "epoch,mean_loss\n";
    for (std::size_t e = 0; e < result.epoch_loss.size(); ++e) {
        csv += fmt::format("{},{:.17g}\n", e + 1, result.epoch_loss[e]);
    }
    if (!trace) trace = fs::path(output.string() + ".loss.csv");
    write_text(*trace, csv);
    std::cout << fmt::format("train-prior: {} samples, {} epochs, final loss {:.6f}\n",
                             data.labels.size(), result.epoch_loss.size(),
                             result.epoch_loss.empty() ? 0.0 : result.epoch_loss.back());
    return 0;
}

int run_infer(const fs::path& dir, const std::optional<fs::path>& prior_path,
              const std::optional<fs::path>& pca_path, const fs::path& output, bool explain,
              const RunConfig& cfg) {
    if (pca_path && !prior_path) throw_argument("--pca only applies together with --prior");
    const DatasetBundle bundle = load_validated(dir, cfg);

    std::optional<LoadedPrior> prior;
    std::optional<PcaModel> pca;
    std::optional<PriorContext> context;
    if (prior_path) {
        prior = load_prior(*prior_path);
        if (pca_path) pca = load_pca(*pca_path);
        context = PriorContext{&prior->model, &prior->prototypes, pca ? &*pca : nullptr};
    }

    PredictOptions options;
    options.policy.tau = cfg.real("infer.tau");
    options.policy.top_k = cfg.count("infer.top_k");
    options.escalate = cfg.flag("infer.escalate");
    options.threads = configured_threads();
    const auto result = predict_dataset(bundle, context, options);
    write_predictions_csv(result.predictions, output, explain);

    std::size_t escalated = 0;
    for (const auto& p : result.predictions) escalated += p.class_id != p.pre_escalation;
    std::cout << fmt::format("infer: {} observations, {} escalated, prior {}\n",
                             result.predictions.size(), escalated, prior ? "on" : "off");
    return 0;
}

MetricOptions metric_options(const RunConfig& cfg) {
    MetricOptions o;
    for (std::size_t i = 0; i < 5; ++i) o.weights.w[i] = cfg.real(fmt::format("metric.w{}", i + 1));
    const auto& d = cfg.text("metric.pdenom");
    o.denominator = d == "all"      ? PercentDenominator::All
                    : d == "errors" ? PercentDenominator::Errors
                                    : PercentDenominator::Status;
    o.f1_all_classes = cfg.flag("metric.f1_all_classes");
    return o;
}

int run_score(const fs::path& truth, const fs::path& pred, const fs::path& classes_csv,
              const std::optional<fs::path>& json, const RunConfig& cfg) {
    const ClassTable classes = parse_classes_csv(classes_csv);
    const MetricReport report = score_predictions(truth, pred, classes, metric_options(cfg));
    std::cout << format_report_text(report);
    if (json) write_text(*json, format_report_json(report));
    return 0;
}

int run_gradcheck_cmd(const std::string& loss, const RunConfig& cfg) {
    GradCheckOptions o;
    o.trials = cfg.count("gradcheck.trials");
    o.seed = cfg.count("gradcheck.seed");
    o.step = cfg.real("gradcheck.step");
    o.tolerance = cfg.real("gradcheck.tolerance");
    o.seesaw_p = cfg.real("seesaw.p");
    o.seesaw_q = cfg.real("seesaw.q");
    o.cost = {cfg.real("rwwce.w_hh"), cfg.real("rwwce.w_hv"), cfg.real("rwwce.w_vh"),
              cfg.real("rwwce.w_vv")};
    o.clamp = cfg.real("loss.clamp_eps");

    std::vector<GradLoss> losses;
    if (loss == "all") {
        losses = {GradLoss::CrossEntropy, GradLoss::Seesaw, GradLoss::Rwwce, GradLoss::Loc};
    } else {
        losses = {parse_grad_loss(loss)};
    }
    bool ok = true;
    for (GradLoss l : losses) {
        const auto r = run_gradcheck(l, o);
        std::cout << fmt::format("{:<7} trials {:>4}  max rel err {:.3e}  {}\n", to_string(l), r.trials,
                                 r.max_rel_error, r.passed ? "PASS" : "FAIL");
        ok = ok && r.passed;
    }
    return ok ? 0 : kExitCheck;
}

SynthConfig synth_config(const RunConfig& cfg) {
    SynthConfig s;
    s.seed = cfg.count("synth.seed");
    s.n_classes = cfg.count("synth.n_classes");
    s.imbalance_ratio = cfg.real("synth.imbalance_ratio");
    s.dims_meta = cfg.count("synth.dims_meta");
    s.dims_proto = cfg.count("synth.dims_proto");
    s.venom_fraction = cfg.real("synth.venom_fraction");
    s.location_informativeness = cfg.real("synth.location_informativeness");
    s.n_observations = cfg.count("synth.n_observations");
    s.images_min = cfg.count("synth.images_min");
    s.images_max = cfg.count("synth.images_max");
    s.logit_scale = cfg.real("synth.logit_scale");
    s.logit_noise = cfg.real("synth.logit_noise");
    s.embedding_noise = cfg.real("synth.embedding_noise");
    s.meta_spread = cfg.real("synth.meta_spread");
    s.meta_noise = cfg.real("synth.meta_noise");
    s.test_stride = cfg.count("synth.test_stride");
    return s;
}

int run_synth(const fs::path& dir, const RunConfig& cfg) {
    const SynthDataset data = generate(synth_config(cfg));
    write_synthetic(data, dir);
    std::cout << fmt::format("synth: {} train rows, {} test observations -> {}\n",
                             data.train.observations.rows.size(), data.test_truth.size(), dir.string());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"venomguard: venom-aware decision layer for snake species classification"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path;
    std::vector<std::string> overrides;
    app.add_option("--config", config_path, "flat `key = value` config file");
    app.add_option("--set", overrides, "override a config key, as key=value (repeatable)");
    app.add_flag_callback(
        "--list-keys",
        [] {
            for (const auto& k : RunConfig::registry()) {
                std::cout << fmt::format("{} = {}    # {}\n", k.name, k.default_value, k.description);
            }
            throw CLI::Success();
        },
        "print every config key with its default and exit");

    KeyedFlags flags;

    auto* validate = app.add_subcommand("validate", "check a bundle directory (or a directory of bundles)");
    std::string validate_dir;
    validate->add_option("dir", validate_dir, "bundle directory")->required();
    flags.option(validate, "--mode", "validate.mode", "strict fails on dangling references, drop removes them");

    auto* pca = app.add_subcommand("pca", "fit PCA on a VGF1 matrix (or a bundle's metadata)");
    std::string pca_input, pca_output;
    pca->add_option("features", pca_input, "VGF1 file or bundle directory")->required();
    pca->add_option("-o,--output", pca_output, "model output path")->required();
    flags.option(pca, "-k", "pca.k", "components to keep");

    auto* train = app.add_subcommand("train-prior", "train the metadata prior on a labeled bundle");
    std::string train_dir, train_out, train_pca, train_trace;
    train->add_option("dir", train_dir, "labeled bundle with embeddings")->required();
    train->add_option("--pca", train_pca, "PCA model applied to metadata rows");
    train->add_option("-o,--output", train_out, "prior model output path")->required();
    train->add_option("--trace", train_trace, "loss trace CSV (default: <output>.loss.csv)");
    flags.option(train, "--epochs", "prior.epochs", "training epochs");
    flags.option(train, "--batch-size", "prior.batch_size", "samples per step");
    flags.option(train, "--seed", "prior.seed", "training seed");
    flags.option(train, "--lambda", "prior.lambda", "positive-term weight");
    flags.option(train, "--hidden", "prior.hidden", "hidden width");
    flags.option(train, "--dropout", "prior.dropout", "dropout rate");
    flags.option(train, "--lr", "prior.base_lr", "peak learning rate");
    flags.option(train, "--mode", "validate.mode", "bundle validation mode");

    auto* infer = app.add_subcommand("infer", "predict one class per observation");
    std::string infer_dir, infer_prior, infer_pca, infer_out;
    bool explain = false;
    infer->add_option("dir", infer_dir, "bundle directory")->required();
    infer->add_option("--prior", infer_prior, "prior model from train-prior");
    infer->add_option("--pca", infer_pca, "PCA model the prior was trained with");
    infer->add_option("-o,--output", infer_out, "predictions CSV")->required();
    infer->add_flag("--explain", explain, "add pre_escalation_class_id and max_confidence columns");
    flags.option(infer, "--tau", "infer.tau", "escalation confidence threshold");
    flags.option(infer, "--top-k", "infer.top_k", "escalation candidate count");
    flags.toggle(infer, "--no-escalate", "infer.escalate", "false", "skip venomous escalation");
    flags.option(infer, "--mode", "validate.mode", "bundle validation mode");

    auto* score = app.add_subcommand("score", "score predictions against ground truth");
    std::string truth, pred, classes, json;
    score->add_option("--truth", truth, "ground-truth CSV (observation_id,class_id)")->required();
    score->add_option("--pred", pred, "prediction CSV (observation_id,class_id)")->required();
    score->add_option("--classes", classes, "classes.csv")->required();
    score->add_option("--json", json, "also write the report as JSON");
    flags.option(score, "--pdenom", "metric.pdenom", "P1..P4 denominator: status, all or errors");
    flags.toggle(score, "--f1-all-classes", "metric.f1_all_classes", "true",
                 "include zero-support classes in macro F1");

    auto* grad = app.add_subcommand("gradcheck", "finite-difference gradient checks");
    std::string grad_loss = "all";
    grad->add_option("--loss", grad_loss, "ce, seesaw, rwwce, loc or all")
        ->check(CLI::IsMember({"ce", "seesaw", "rwwce", "loc", "all"}))
        ->capture_default_str();
    flags.option(grad, "--trials", "gradcheck.trials", "random instances per loss");
    flags.option(grad, "--seed", "gradcheck.seed", "instance seed");

    auto* synth = app.add_subcommand("synth", "generate a synthetic long-tailed dataset");
    std::string synth_out;
    synth->add_option("-o,--output", synth_out, "output directory")->required();
    flags.option(synth, "--seed", "synth.seed", "generator seed");
    flags.option(synth, "--classes", "synth.n_classes", "number of classes");
    flags.option(synth, "--observations", "synth.n_observations", "number of observations");
    flags.option(synth, "--informativeness", "synth.location_informativeness",
                 "probability that metadata follows the class");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitUsage;
    }

    try {
        RunConfig cfg;
        if (!config_path.empty()) cfg.load_file(config_path);
        for (const auto& o : overrides) cfg.apply_override(o);
        flags.apply(cfg);

        auto opt_path = [](const std::string& s) {
            return s.empty() ? std::nullopt : std::optional<fs::path>(s);
        };

        if (validate->parsed()) {
            log_config(cfg, {"validate."});
            return run_validate(validate_dir, cfg);
        }
        if (pca->parsed()) {
            log_config(cfg, {"pca."});
            return run_pca(pca_input, pca_output, cfg);
        }
        if (train->parsed()) {
            log_config(cfg, {"prior.", "adamw.", "validate."});
            return run_train_prior(train_dir, opt_path(train_pca), train_out, opt_path(train_trace), cfg);
        }
        if (infer->parsed()) {
            log_config(cfg, {"infer.", "validate."});
            return run_infer(infer_dir, opt_path(infer_prior), opt_path(infer_pca), infer_out, explain,
                             cfg);
        }
        if (score->parsed()) {
            log_config(cfg, {"metric."});
            return run_score(truth, pred, classes, opt_path(json), cfg);
        }
        if (grad->parsed()) {
            log_config(cfg, {"gradcheck.", "seesaw.", "rwwce.", "loss."});
            return run_gradcheck_cmd(grad_loss, cfg);
        }
        if (synth->parsed()) {
            log_config(cfg, {"synth."});
            return run_synth(synth_out, cfg);
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code_for(e.code());
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitIo;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitCheck;
    }
    return kExitUsage;
}
