#include <gtest/gtest.h>

#include <algorithm>
#include <fmt/format.h>

#include <nlohmann/json.hpp>

#include "support.hpp"
#include "venomguard/diagnostics.hpp"
#include "venomguard/error.hpp"
#include "venomguard/metrics.hpp"
#include "venomguard/synthetic.hpp"

using namespace venomguard;
using testing_support::TempDir;
using testing_support::write_text;

namespace {

ClassTable table(const std::vector<bool>& venomous) {
    std::vector<ClassEntry> e;
    for (std::size_t i = 0; i < venomous.size(); ++i) e.push_back({i, "c" + std::to_string(i), venomous[i]});
    return ClassTable(e);
}

struct RandomCase {
    std::vector<bool> venomous;
    std::vector<ClassId> truth, pred;
};

RandomCase random_case(Rng& rng) {
    RandomCase rc;
    const std::size_t c = 2 + rng.index(19);
    rc.venomous.resize(c);
    for (std::size_t i = 0; i < c; ++i) rc.venomous[i] = rng.bernoulli(0.3);
    rc.venomous[rng.index(c)] = true;
    const std::size_t n = 1 + rng.index(1000);
    const double hit = rng.uniform();
    for (std::size_t i = 0; i < n; ++i) {
        const ClassId t = rng.index(c);
        rc.truth.push_back(t);
        rc.pred.push_back(rng.bernoulli(hit) ? t : rng.index(c));
    }
    return rc;
}

std::string label_csv(const std::vector<ClassId>& ids, const std::vector<std::size_t>& order) {
    std::string out = "observation_id,class_id\n";
    for (std::size_t i : order) out += "obs" + std::to_string(i) + "," + std::to_string(ids[i]) + "\n";
    return out;
}

}  // namespace

TEST(Confusion, Tally) {
    const std::vector<ClassId> t{0, 1, 1, 2}, p{0, 2, 1, 2};
    const auto cm = confusion_matrix(t, p, 3);
    EXPECT_EQ(cm.at(0, 0), 1u);
    EXPECT_EQ(cm.at(1, 2), 1u);
    EXPECT_EQ(cm.at(1, 1), 1u);
    EXPECT_EQ(cm.total(), 4u);
    const std::vector<ClassId> one_t{0}, one_p{1};
    const auto single = confusion_matrix(one_t, one_p, 2);
    EXPECT_EQ(single.at(0, 1), 1u);
    EXPECT_EQ(single.total(), 1u);
}

TEST(Confusion, Errors) {
    const std::vector<ClassId> a{0, 1}, b{0}, bad{0, 5};
    EXPECT_THROW(confusion_matrix(a, b, 2), Error);
    EXPECT_THROW(confusion_matrix(a, bad, 2), Error);
    EXPECT_THROW(confusion_matrix(std::vector<ClassId>{}, std::vector<ClassId>{}, 2), Error);
}

TEST(MacroF1, HandCases) {
    const std::vector<ClassId> t{0, 0, 0, 0, 0, 1, 1, 1, 1, 1};
    const std::vector<ClassId> p(10, 0);
    EXPECT_NEAR(macro_f1(confusion_matrix(t, p, 2)), 100.0 / 3.0, 1e-12);
    EXPECT_EQ(macro_f1(confusion_matrix(t, t, 2)), 100.0);
}

TEST(MacroF1, ZeroSupportClasses) {
    const std::vector<ClassId> t{0, 1}, p{0, 1};
    EXPECT_EQ(macro_f1(confusion_matrix(t, p, 4)), 100.0);
    EXPECT_EQ(macro_f1(confusion_matrix(t, p, 4), true), 50.0);
}

TEST(Venom, Examples) {
    const auto classes = table({true, false});
    const std::vector<ClassId> t(10, 0), p(10, 1);
    const auto v = venom_confusions(confusion_matrix(t, p, 2), classes);
    EXPECT_EQ(v.p3, 100.0);
    EXPECT_EQ(v.p4, 0.0);

    const std::vector<ClassId> both{0, 1};
    const auto perfect = venom_confusions(confusion_matrix(both, both, 2), classes);
    EXPECT_EQ(perfect.p1 + perfect.p2 + perfect.p3 + perfect.p4, 0.0);
}

TEST(Venom, MissingSideWarns) {
    const auto classes = table({true, false, false});
    const std::vector<ClassId> t{1, 2}, p{2, 0};
    WarningCapture warnings;
    const auto v = venom_confusions(confusion_matrix(t, p, 3), classes);
    EXPECT_EQ(v.p1, 50.0);
    EXPECT_EQ(v.p2, 50.0);
    EXPECT_EQ(v.p3, 0.0);
    EXPECT_EQ(warnings.messages().size(), 1u);
}

TEST(Venom, DenominatorModes) {
    const auto classes = table({true, false, false});
    // 2 harmless (one error to venomous), 2 venomous (one error to harmless).
    const std::vector<ClassId> t{1, 2, 0, 0}, p{0, 2, 1, 0};
    const auto cm = confusion_matrix(t, p, 3);
    const auto status = venom_confusions(cm, classes, PercentDenominator::Status);
    const auto all = venom_confusions(cm, classes, PercentDenominator::All);
    const auto errors = venom_confusions(cm, classes, PercentDenominator::Errors);
    EXPECT_EQ(status.p2, 50.0);
    EXPECT_EQ(status.p3, 50.0);
    EXPECT_EQ(all.p2, 25.0);
    EXPECT_EQ(all.p3, 25.0);
    EXPECT_EQ(errors.p2, 50.0);
    EXPECT_EQ(errors.p3, 50.0);
}

TEST(Track1, HandCases) {
    EXPECT_EQ(track1_metric(100.0, {0, 0, 0, 0}), 100.0);
    EXPECT_NEAR(track1_metric(50.0, {20, 10, 0, 0}), 1010.0 / 11.0, 1e-9);
    MetricWeights ones;
    ones.w = {1, 1, 1, 1, 1};
    EXPECT_EQ(track1_metric(0.0, {100, 100, 100, 100}, ones), 0.0);
}

TEST(Track1, MonotoneAndBounded) {
    Rng rng(1);
    for (int t = 0; t < 500; ++t) {
        const double f1 = rng.uniform(0, 100);
        VenomConfusions p{rng.uniform(0, 100), rng.uniform(0, 100), rng.uniform(0, 100), rng.uniform(0, 100)};
        const double m = track1_metric(f1, p);
        EXPECT_GE(m, 0.0);
        EXPECT_LE(m, 100.0);
        EXPECT_GE(track1_metric(std::min(100.0, f1 + rng.uniform(0, 10)), p), m);
        VenomConfusions lower = p;
        lower.p3 = std::max(0.0, p.p3 - rng.uniform(0, 10));
        EXPECT_GE(track1_metric(f1, lower), m);
        if (f1 < 100.0) {
            EXPECT_LT(m, 100.0);
        }
    }
}

TEST(Report, MatchesOracle) {
    Rng rng(2);
    for (int trial = 0; trial < 50; ++trial) {
        const auto rc = random_case(rng);
        const auto classes = table(rc.venomous);
        WarningCapture quiet;
        const auto r = compute_report(rc.truth, rc.pred, classes);
        const auto o = oracle_metric(rc.truth, rc.pred, rc.venomous);
        EXPECT_NEAR(r.macro_f1, o.macro_f1, 1e-9);
        EXPECT_NEAR(r.p1, o.p1, 1e-9);
        EXPECT_NEAR(r.p2, o.p2, 1e-9);
        EXPECT_NEAR(r.p3, o.p3, 1e-9);
        EXPECT_NEAR(r.p4, o.p4, 1e-9);
        EXPECT_NEAR(r.accuracy, o.accuracy, 1e-9);
        EXPECT_NEAR(r.composite, o.composite, 1e-9);
        EXPECT_EQ(r.n_observations, o.n);
        EXPECT_EQ(r.confusion.total(), rc.truth.size());
        EXPECT_LE(r.p1 + r.p2, 100.0 + 1e-12);
        EXPECT_LE(r.p3 + r.p4, 100.0 + 1e-12);
    }
}

TEST(Report, RelabelingKeepsF1) {
    Rng rng(3);
    for (int trial = 0; trial < 30; ++trial) {
        auto rc = random_case(rng);
        const std::size_t c = rc.venomous.size();
        std::vector<ClassId> perm(c);
        for (ClassId i = 0; i < c; ++i) perm[i] = i;
        for (std::size_t i = c; i > 1; --i) std::swap(perm[i - 1], perm[rng.index(i)]);
        auto t2 = rc.truth, p2 = rc.pred;
        for (auto& v : t2) v = perm[v];
        for (auto& v : p2) v = perm[v];
        EXPECT_NEAR(macro_f1(confusion_matrix(rc.truth, rc.pred, c)), macro_f1(confusion_matrix(t2, p2, c)),
                    1e-9);
    }
}

TEST(Score, PerfectFromFiles) {
    TempDir dir;
    const std::vector<ClassId> ids{0, 1, 2, 1};
    write_text(dir / "truth.csv", label_csv(ids, {0, 1, 2, 3}));
    write_text(dir / "pred.csv", label_csv(ids, {3, 1, 0, 2}));
    const auto r = score_predictions(dir / "truth.csv", dir / "pred.csv", table({false, true, false}));
    EXPECT_EQ(r.composite, 100.0);
    EXPECT_EQ(r.accuracy, 100.0);
    EXPECT_EQ(r.macro_f1, 100.0);
}

TEST(Score, FilesMatchOracle) {
    Rng rng(4);
    TempDir dir;
    for (int trial = 0; trial < 20; ++trial) {
        const auto rc = random_case(rng);
        std::vector<std::size_t> order(rc.truth.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        write_text(dir / "truth.csv", label_csv(rc.truth, order));
        std::reverse(order.begin(), order.end());
        write_text(dir / "pred.csv", label_csv(rc.pred, order));
        WarningCapture quiet;
        const auto r = score_predictions(dir / "truth.csv", dir / "pred.csv", table(rc.venomous));
        const auto o = oracle_metric(rc.truth, rc.pred, rc.venomous);
        EXPECT_NEAR(r.composite, o.composite, 1e-9);
        EXPECT_NEAR(r.macro_f1, o.macro_f1, 1e-9);
    }
}

TEST(Score, MissingIdIsError) {
    TempDir dir;
    write_text(dir / "truth.csv", "observation_id,class_id\na,0\nb,1\n");
    write_text(dir / "pred.csv", "observation_id,class_id\na,0\nz,1\n");
    try {
        score_predictions(dir / "truth.csv", dir / "pred.csv", table({false, true}));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::Validation);
        const std::string msg = e.what();
        EXPECT_NE(msg.find("missing from predictions: b"), std::string::npos) << msg;
        EXPECT_NE(msg.find("z"), std::string::npos) << msg;
    }
}

TEST(Score, DuplicateAndUnknownIds) {
    TempDir dir;
    const auto classes = table({false, true});
    write_text(dir / "dup.csv", "observation_id,class_id\na,0\na,1\n");
    EXPECT_THROW(read_label_csv(dir / "dup.csv", classes), Error);
    write_text(dir / "bad.csv", "class_id,observation_id,extra\n7,a,x\n");
    EXPECT_THROW(read_label_csv(dir / "bad.csv", classes), Error);
    write_text(dir / "swapped.csv", "class_id,observation_id,extra\n1,a,x\n");
    const auto rows = read_label_csv(dir / "swapped.csv", classes);
    ASSERT_EQ(rows.size(), 1u);
    EXPECT_EQ(rows[0].class_id, 1u);
}

TEST(Format, TextAndJson) {
    const std::vector<ClassId> t{0, 1, 1}, p{0, 1, 0};
    const auto r = compute_report(t, p, table({false, true}));
    const auto text = format_report_text(r);
    EXPECT_NE(text.find("composite"), std::string::npos);
    EXPECT_NE(text.find(fmt::format("{:.4f}", r.composite)), std::string::npos);
    const auto j = nlohmann::json::parse(format_report_json(r));
    for (const char* key : {"macro_f1", "p1", "p2", "p3", "p4", "accuracy", "composite", "n_observations"})
        EXPECT_TRUE(j.contains(key)) << key;
    EXPECT_EQ(j.size(), 8u);
    EXPECT_EQ(j["composite"].get<double>(), r.composite);
    EXPECT_EQ(j["n_observations"].get<std::size_t>(), 3u);
}
