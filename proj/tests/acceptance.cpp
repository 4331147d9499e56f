// Acceptance suite: one PASS/FAIL line per criterion.

#include <fmt/format.h>

#include <bit>
#include <chrono>
#include <cmath>
#include <functional>
#include <map>
#include <nlohmann/json.hpp>

#include "cli_runner.hpp"
#include "oracles.hpp"
#include "support.hpp"
#include "venomguard/diagnostics.hpp"
#include "venomguard/feature_matrix.hpp"
#include "venomguard/gradcheck.hpp"
#include "venomguard/inference.hpp"
#include "venomguard/losses.hpp"
#include "venomguard/metrics.hpp"
#include "venomguard/optim.hpp"
#include "venomguard/pca.hpp"
#include "venomguard/prior.hpp"
#include "venomguard/synthetic.hpp"

using namespace venomguard;
using testing_support::run_cli;
using testing_support::TempDir;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;

    void require(bool ok, const std::string& what) {
        if (!ok && pass) detail = what;
        pass = pass && ok;
    }
};

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string q(const std::filesystem::path& p) { return "'" + p.string() + "'"; }

void write_labels(const std::filesystem::path& path, const std::vector<std::string>& ids,
                  const std::vector<ClassId>& labels) {
    std::string text = "observation_id,class_id\n";
    for (std::size_t i = 0; i < ids.size(); ++i) text += fmt::format("{},{}\n", ids[i], labels[i]);
    testing_support::write_text(path, text);
}

Outcome gradients() {
    Outcome o;
    const auto start = Clock::now();
    double worst = 0.0;
    for (auto loss : {GradLoss::CrossEntropy, GradLoss::Seesaw, GradLoss::Rwwce, GradLoss::Loc}) {
        GradCheckOptions opts;
        opts.trials = 20;
        const auto r = run_gradcheck(loss, opts);
        worst = std::max(worst, r.max_rel_error);
        o.require(r.passed, fmt::format("{} max rel err {:.3g}", to_string(loss), r.max_rel_error));
    }
    const double elapsed = seconds_since(start);
    o.require(elapsed < 10.0, fmt::format("took {:.1f} s", elapsed));
    if (o.pass) o.detail = fmt::format("max rel err {:.2e}, {:.2f} s", worst, elapsed);
    return o;
}

Outcome seesaw_degeneracy() {
    Outcome o;
    Rng rng(2024);
    double worst = 0.0;
    for (int t = 0; t < 100; ++t) {
        const std::size_t c = 2 + rng.index(6);
        std::vector<double> z(c);
        for (double& v : z) v = rng.normal(0.0, 3.0);
        std::vector<std::uint64_t> counts(c);
        for (auto& n : counts) n = rng.index(1000);
        const ClassId y = rng.index(c);
        SeesawState state(counts, 0.0, 0.0);
        worst = std::max(worst, std::abs(seesaw_loss(z, y, state).value - cross_entropy(z, y).value));
    }
    o.require(worst < 1e-12, fmt::format("max diff {:.3g}", worst));
    if (o.pass) o.detail = fmt::format("max |diff| {:.2e}", worst);
    return o;
}

Outcome metric_correctness() {
    Outcome o;
    TempDir dir;
    Rng rng(33);
    double worst = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
        SynthConfig cfg;
        cfg.seed = 100 + trial;
        cfg.n_classes = 2 + rng.index(19);
        cfg.n_observations = std::max<std::size_t>(cfg.n_classes * 5, 50 + rng.index(4951));
        const auto data = generate(cfg);
        const auto result = predict_dataset(data.test, std::nullopt);

        // Shuffle the prediction file order and corrupt some answers.
        std::vector<std::string> ids;
        std::vector<ClassId> pred, truth_ids;
        for (const auto& p : result.predictions) {
            ids.push_back(p.observation_id);
            pred.push_back(rng.bernoulli(0.1) ? rng.index(cfg.n_classes) : p.class_id);
        }
        std::map<std::string, ClassId> truth_map;
        for (const auto& t : data.test_truth) truth_map[t.observation_id] = t.class_id;
        for (const auto& id : ids) truth_ids.push_back(truth_map.at(id));
        if (ids.size() > 1000) {
            o.require(false, "prediction set larger than 1000");
            break;
        }
        std::vector<std::string> shuffled = ids;
        std::vector<ClassId> shuffled_pred = pred;
        for (std::size_t i = shuffled.size(); i > 1; --i) {
            const std::size_t j = rng.index(i);
            std::swap(shuffled[i - 1], shuffled[j]);
            std::swap(shuffled_pred[i - 1], shuffled_pred[j]);
        }
        write_labels(dir / "truth.csv", ids, truth_ids);
        write_labels(dir / "pred.csv", shuffled, shuffled_pred);

        std::vector<bool> venomous;
        for (const auto& e : data.test.classes.entries()) venomous.push_back(e.venomous);
        WarningCapture quiet;
        const auto r = score_predictions(dir / "truth.csv", dir / "pred.csv", data.test.classes);
        const auto oracle = oracle_metric(truth_ids, pred, venomous);
        for (auto [a, b] : {std::pair{r.macro_f1, oracle.macro_f1}, {r.p1, oracle.p1}, {r.p2, oracle.p2},
                            {r.p3, oracle.p3}, {r.p4, oracle.p4}, {r.accuracy, oracle.accuracy},
                            {r.composite, oracle.composite}}) {
            worst = std::max(worst, std::abs(a - b));
        }
        o.require(r.n_observations == oracle.n, "observation count differs");

        const auto perfect = score_predictions(dir / "truth.csv", dir / "truth.csv", data.test.classes);
        o.require(perfect.composite == 100.0 && perfect.macro_f1 == 100.0 && perfect.accuracy == 100.0,
                  fmt::format("perfect predictions scored {}", perfect.composite));
    }
    o.require(worst < 1e-9, fmt::format("max field diff {:.3g}", worst));
    const double hand = track1_metric(50.0, {20.0, 10.0, 0.0, 0.0});
    o.require(std::abs(hand - 1010.0 / 11.0) < 1e-9, fmt::format("hand case {}", hand));
    if (o.pass) o.detail = fmt::format("max field diff {:.2e}, hand case {:.9f}", worst, hand);
    return o;
}

Outcome constant_prior_invariance() {
    Outcome o;
    const auto data = generate(SynthConfig{});
    const std::size_t c = data.test.classes.size();
    std::size_t compared = 0;
    for (double level : {-3.0, 0.0, 2.5}) {
        PriorMlp model({data.test.metadata.dims(), 8, 4}, 0.0, 0);
        const auto v = model.layer(2);
        for (std::size_t i = 0; i < 4; ++i) model.parameters()[v.bias_offset + i] = level + 0.1 * i;
        const PrototypeMatrix proto{FeatureMatrix(c, 4, 1.0), false};
        const PriorContext ctx{&model, &proto, nullptr};
        for (bool escalate : {false, true}) {
            PredictOptions opts;
            opts.escalate = escalate;
            const auto a = predict_dataset(data.test, std::nullopt, opts);
            const auto b = predict_dataset(data.test, ctx, opts);
            for (std::size_t i = 0; i < a.predictions.size(); ++i) {
                o.require(a.predictions[i].class_id == b.predictions[i].class_id,
                          "prediction changed for " + a.predictions[i].observation_id);
                ++compared;
            }
        }
    }
    if (o.pass) o.detail = fmt::format("{} predictions unchanged", compared);
    return o;
}

Outcome escalation_safety() {
    Outcome o;
    std::size_t before_total = 0, after_total = 0, flips = 0;
    for (std::uint64_t seed = 1; seed <= 100; ++seed) {
        SynthConfig cfg;
        cfg.seed = seed;
        cfg.n_classes = 12;
        cfg.n_observations = 400;
        cfg.logit_noise = 4.0;
        const auto data = generate(cfg);
        std::map<std::string, ClassId> truth;
        for (const auto& t : data.test_truth) truth[t.observation_id] = t.class_id;
        const auto r = predict_dataset(data.test, std::nullopt);
        std::size_t before = 0, after = 0;
        for (const auto& p : r.predictions) {
            const bool venomous_truth = data.test.classes.venomous(truth.at(p.observation_id));
            before += venomous_truth && !data.test.classes.venomous(p.pre_escalation);
            after += venomous_truth && !data.test.classes.venomous(p.class_id);
            if (data.test.classes.venomous(p.pre_escalation)) {
                o.require(data.test.classes.venomous(p.class_id),
                          fmt::format("seed {}: venomous argmax became harmless", seed));
            }
            flips += p.class_id != p.pre_escalation;
        }
        o.require(after <= before, fmt::format("seed {}: {} -> {} venomous misses", seed, before, after));
        before_total += before;
        after_total += after;
    }
    if (o.pass) {
        o.detail = fmt::format("venomous->harmless {} -> {}, {} escalations", before_total, after_total, flips);
    }
    return o;
}

Outcome pca_checks() {
    Outcome o;
    Rng rng(66);
    double ortho = 0.0, recon = 0.0, eig = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t d = 1 + rng.index(6);
        const std::size_t n = d + 1 + rng.index(10);
        FeatureMatrix x(n, d);
        for (double& v : x.values()) v = rng.normal(rng.uniform(-5, 5), rng.uniform(0.1, 3));
        const auto m = fit_pca(x, d);
        for (std::size_t a = 0; a < d; ++a) {
            for (std::size_t b = 0; b < d; ++b) {
                double dot = 0.0;
                for (std::size_t j = 0; j < d; ++j) dot += m.components.at(a, j) * m.components.at(b, j);
                ortho = std::max(ortho, std::abs(dot - (a == b ? 1.0 : 0.0)));
            }
        }
        const auto back = pca_inverse(m, pca_transform(m, x));
        for (std::size_t i = 0; i < x.values().size(); ++i)
            recon = std::max(recon, std::abs(back.values()[i] - x.values()[i]));
        const auto expected = testing_support::jacobi_eigenvalues(testing_support::covariance(x));
        for (std::size_t i = 0; i < d; ++i) eig = std::max(eig, std::abs(m.eigenvalues[i] - expected[i]));
    }
    o.require(ortho < 1e-8, fmt::format("orthonormality error {:.3g}", ortho));
    o.require(recon < 1e-8, fmt::format("reconstruction error {:.3g}", recon));
    o.require(eig < 1e-8, fmt::format("eigenvalue error {:.3g}", eig));
    if (o.pass) o.detail = fmt::format("ortho {:.1e}, recon {:.1e}, eig {:.1e}", ortho, recon, eig);
    return o;
}

Outcome adamw_checks() {
    Outcome o;
    const double lr = 1e-3, wd = 2e-5, start = 1.7;
    std::vector<double> theta{start};
    AdamWState state(1, {0.9, 0.999, 1e-8, wd});
    double decay_err = 0.0;
    for (int t = 1; t <= 1000; ++t) {
        adamw_step(theta, std::vector<double>{0.0}, state, lr);
        decay_err = std::max(decay_err, std::abs(theta[0] - start * std::pow(1.0 - lr * wd, t)));
    }
    o.require(decay_err < 1e-12, fmt::format("decay error {:.3g}", decay_err));

    std::vector<double> q{1.0};
    AdamWState qs(1);
    int steps = 0;
    while (std::abs(q[0]) >= 1e-3 && steps < 10000) {
        adamw_step(q, std::vector<double>{q[0]}, qs, 1e-2);
        ++steps;
    }
    o.require(std::abs(q[0]) < 1e-3, fmt::format("quadratic stalled at {}", q[0]));

    const CosineSchedule s{100, 1000, 2e-7, 2e-5, 0.0};
    o.require(lr_at(s, 0) == 2e-7, "warmup start");
    o.require(lr_at(s, 100) == 2e-5, "base rate");
    o.require(lr_at(s, 999) == 0.0, "final rate");
    if (o.pass) o.detail = fmt::format("decay err {:.1e}, quadratic converged in {} steps", decay_err, steps);
    return o;
}

struct Scores {
    double macro_f1 = 0.0, composite = 0.0;
};

Scores score_json(const std::filesystem::path& dir, const std::string& name, Outcome& o) {
    const auto r = run_cli("score --truth " + q(dir / "data" / "test" / "truth.csv") + " --pred " +
                           q(dir / (name + ".csv")) + " --classes " + q(dir / "data" / "test" / "classes.csv") +
                           " --json " + q(dir / (name + ".json")));
    o.require(r.exit_code == 0, "score failed for " + name);
    if (r.exit_code != 0) return {};
    const auto j = nlohmann::json::parse(testing_support::read_text(dir / (name + ".json")));
    return {j.at("macro_f1").get<double>(), j.at("composite").get<double>()};
}

Outcome end_to_end() {
    Outcome o;
    TempDir dir;
    const std::string env = "VENOMGUARD_THREADS=1";
    const auto d = dir.path();
    const auto start = Clock::now();
    auto step = [&](const std::string& args) {
        const auto r = run_cli(args, env);
        o.require(r.exit_code == 0, "command failed: " + args);
    };
    step("synth -o " + q(d / "data"));
    step("pca " + q(d / "data" / "train") + " -o " + q(d / "pca.vgf"));
    step("train-prior " + q(d / "data" / "train") + " --pca " + q(d / "pca.vgf") + " -o " + q(d / "prior.vgf"));
    step("infer " + q(d / "data" / "test") + " --prior " + q(d / "prior.vgf") + " --pca " + q(d / "pca.vgf") +
         " -o " + q(d / "full.csv"));
    step("infer " + q(d / "data" / "test") + " -o " + q(d / "base.csv"));
    step("infer " + q(d / "data" / "test") + " --no-escalate -o " + q(d / "plain.csv"));
    const double elapsed = seconds_since(start);
    if (!o.pass) return o;

    const auto full = score_json(d, "full", o);
    const auto base = score_json(d, "base", o);
    const auto plain = score_json(d, "plain", o);
    o.require(full.macro_f1 > base.macro_f1 && full.composite >= base.composite,
              fmt::format("vs no-prior (escalating): F1 {:.2f} vs {:.2f}, M {:.2f} vs {:.2f}", full.macro_f1,
                          base.macro_f1, full.composite, base.composite));
    o.require(full.macro_f1 > plain.macro_f1 && full.composite >= plain.composite,
              fmt::format("vs plain argmax: F1 {:.2f} vs {:.2f}, M {:.2f} vs {:.2f}", full.macro_f1,
                          plain.macro_f1, full.composite, plain.composite));
    o.require(elapsed < 60.0, fmt::format("pipeline took {:.1f} s", elapsed));
    if (o.pass) {
        o.detail = fmt::format("F1 {:.2f} (no prior {:.2f} / {:.2f}), M {:.2f} (no prior {:.2f} / {:.2f}), {:.1f} s",
                               full.macro_f1, base.macro_f1, plain.macro_f1, full.composite, base.composite,
                               plain.composite, elapsed);
    }
    return o;
}

Outcome determinism() {
    Outcome o;
    TempDir dir;
    const std::vector<std::string> artifacts = {
        "data/manifest.txt", "data/train/classes.csv", "data/train/observations.csv",
        "data/train/locations.csv", "data/train/logits.vgf", "data/train/embeddings.vgf",
        "data/train/metadata.vgf", "data/test/observations.csv", "data/test/logits.vgf",
        "data/test/truth.csv", "pca.vgf", "pca.vgf.meta", "prior.vgf", "prior.vgf.meta",
        "prior.vgf.loss.csv", "preds.csv", "report.json", "report.txt"};
    auto run = [&](const std::string& tag, const std::string& threads) {
        const auto d = dir.path() / tag;
        const std::string env = "VENOMGUARD_THREADS=" + threads;
        auto step = [&](const std::string& args) {
            o.require(run_cli(args, env).exit_code == 0, "command failed: " + args);
        };
        step("synth --seed 11 --classes 20 --observations 1500 -o " + q(d / "data"));
        step("pca " + q(d / "data" / "train") + " -k 6 -o " + q(d / "pca.vgf"));
        step("train-prior " + q(d / "data" / "train") + " --pca " + q(d / "pca.vgf") +
             " --epochs 5 --hidden 64 --seed 3 -o " + q(d / "prior.vgf"));
        step("infer " + q(d / "data" / "test") + " --prior " + q(d / "prior.vgf") + " --pca " +
             q(d / "pca.vgf") + " --explain -o " + q(d / "preds.csv"));
        const auto r = run_cli("score --truth " + q(d / "data" / "test" / "truth.csv") + " --pred " +
                                   q(d / "preds.csv") + " --classes " + q(d / "data" / "test" / "classes.csv") +
                                   " --json " + q(d / "report.json"),
                               env);
        o.require(r.exit_code == 0, "score failed");
        testing_support::write_text(d / "report.txt", r.output);
    };
    run("first", "1");
    run("second", "4");
    std::size_t bytes = 0;
    for (const auto& f : artifacts) {
        const auto a = testing_support::read_text(dir.path() / "first" / f);
        const auto b = testing_support::read_text(dir.path() / "second" / f);
        o.require(!a.empty() && a == b, f + " differs between runs");
        bytes += a.size();
    }
    if (o.pass) o.detail = fmt::format("{} artifacts, {} bytes identical", artifacts.size(), bytes);
    return o;
}

Outcome vgf_round_trip() {
    Outcome o;
    TempDir dir;
    Rng rng(1010);
    std::size_t zero_rows = 0, unit = 0;
    for (int i = 0; i < 1000; ++i) {
        std::size_t rows = rng.index(40), dims = 1 + rng.index(40);
        if (i % 10 == 0) rows = 0, ++zero_rows;
        if (i % 10 == 1) rows = 1, dims = 1, ++unit;
        FeatureMatrix m(rows, dims);
        for (double& v : m.values()) {
            const double scale = std::pow(10.0, rng.uniform(-30, 30));
            v = static_cast<float>(rng.normal() * scale);
        }
        const auto path = dir / "m.vgf";
        write_feature_matrix(m, path);
        const auto back = read_feature_matrix(path);
        bool same = back.rows() == m.rows() && back.dims() == m.dims();
        for (std::size_t k = 0; same && k < m.values().size(); ++k) {
            same = std::bit_cast<std::uint64_t>(back.values()[k]) == std::bit_cast<std::uint64_t>(m.values()[k]);
        }
        o.require(same, fmt::format("matrix {} ({}x{}) changed", i, rows, dims));
    }
    if (o.pass) o.detail = fmt::format("1000 matrices bit-exact ({} with 0 rows, {} 1x1)", zero_rows, unit);
    return o;
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"gradient correctness", gradients},
        {"seesaw degeneracy", seesaw_degeneracy},
        {"metric correctness", metric_correctness},
        {"constant prior invariance", constant_prior_invariance},
        {"escalation safety", escalation_safety},
        {"pca", pca_checks},
        {"adamw and schedule", adamw_checks},
        {"end-to-end synthetic gain", end_to_end},
        {"cli determinism", determinism},
        {"vgf1 round trip", vgf_round_trip},
    };
    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome out;
        try {
            out = criteria[i].second();
        } catch (const std::exception& e) {
            out.pass = false;
            out.detail = std::string("exception: ") + e.what();
        }
        failures += !out.pass;
        fmt::print("{} {:2} {}: {}\n", out.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, out.detail);
        std::fflush(stdout);
    }
    return failures == 0 ? 0 : 1;
}
