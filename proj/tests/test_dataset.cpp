#include <gtest/gtest.h>

#include <functional>

#include "support.hpp"
#include "venomguard/csv.hpp"
#include "venomguard/dataset.hpp"
#include "venomguard/error.hpp"

using namespace venomguard;
using testing_support::TempDir;
using testing_support::write_text;

namespace {

std::string error_text(const std::function<void()>& fn, ErrorCode expected) {
    try {
        fn();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), expected) << e.what();
        return e.what();
    }
    ADD_FAILURE() << "no error thrown";
    return {};
}

ClassTable three_classes() {
    return ClassTable({{0, "a", false}, {1, "b", true}, {2, "c", false}});
}

// Two observations, three images, every reference resolves.
DatasetBundle small_bundle() {
    DatasetBundle b;
    b.classes = three_classes();
    b.observations.rows = {{"obs1", 0, 1, "L1"}, {"obs1", 1, 1, "L1"}, {"obs2", 2, 0, "L2"}};
    b.scores = FeatureMatrix::from_rows({{0.0, 1.0, 0.0}, {0.5, 0.5, 0.0}, {2.0, 0.0, 0.0}});
    b.metadata = FeatureMatrix::from_rows({{1.0, 2.0}, {3.0, 4.0}});
    b.locations.entries = {{"L1", 0}, {"L2", 1}};
    return b;
}

}  // namespace

TEST(Csv, QuotedFieldsAndCrlf) {
    const auto records = csv::parse("a,\"b,c\",\"say \"\"hi\"\"\"\r\n\r\n1,2,3\n");
    ASSERT_EQ(records.size(), 2u);
    EXPECT_EQ(records[0].fields, (std::vector<std::string>{"a", "b,c", "say \"hi\""}));
    EXPECT_EQ(records[1].line, 3u);
    EXPECT_EQ(csv::quote_if_needed("x,y"), "\"x,y\"");
    EXPECT_EQ(csv::quote_if_needed("plain"), "plain");
}

TEST(Classes, ParsesThreeRows) {
    TempDir dir;
    write_text(dir / "classes.csv", "class_id,name,venomous\n0,a,0\n1,b,1\n2,c,0\n");
    const auto t = parse_classes_csv(dir / "classes.csv");
    EXPECT_EQ(t.size(), 3u);
    EXPECT_FALSE(t.venomous(0));
    EXPECT_TRUE(t.venomous(1));
    EXPECT_FALSE(t.venomous(2));
    EXPECT_EQ(t.venomous_count(), 1u);
}

TEST(Classes, NonContiguousIds) {
    TempDir dir;
    write_text(dir / "classes.csv", "class_id,name,venomous\n0,a,0\n2,c,1\n");
    const auto msg = error_text([&] { parse_classes_csv(dir / "classes.csv"); }, ErrorCode::Parse);
    EXPECT_NE(msg.find("non-contiguous class ids"), std::string::npos) << msg;
}

TEST(Classes, HeaderOnlyHasNoClasses) {
    TempDir dir;
    write_text(dir / "classes.csv", "class_id,name,venomous\n");
    const auto msg = error_text([&] { parse_classes_csv(dir / "classes.csv"); }, ErrorCode::Parse);
    EXPECT_NE(msg.find("no classes"), std::string::npos) << msg;
}

TEST(Classes, DuplicateIdNamesLine) {
    TempDir dir;
    write_text(dir / "classes.csv", "class_id,name,venomous\n0,a,0\n0,b,1\n");
    try {
        parse_classes_csv(dir / "classes.csv");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.line(), std::optional<std::size_t>(3));
    }
}

TEST(Observations, SharedIdFormsOneGroup) {
    TempDir dir;
    write_text(dir / "obs.csv",
               "observation_id,image_index,class_id,location_code\nobs1,0,1,L1\nobs1,1,1,L1\n");
    const auto t = parse_observations_csv(dir / "obs.csv", three_classes(), false);
    const auto groups = t.groups();
    ASSERT_EQ(groups.size(), 1u);
    EXPECT_EQ(groups[0].observation_id, "obs1");
    EXPECT_EQ(groups[0].rows.size(), 2u);
}

TEST(Observations, UnknownClassNamesRow) {
    TempDir dir;
    write_text(dir / "obs.csv",
               "observation_id,image_index,class_id,location_code\nobs1,0,1,L1\nobs7,1,99,L1\n");
    try {
        parse_observations_csv(dir / "obs.csv", three_classes(), false);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::Parse);
        EXPECT_EQ(e.line(), std::optional<std::size_t>(3));
        EXPECT_NE(std::string(e.what()).find("obs7"), std::string::npos);
    }
}

TEST(Observations, UnlabeledRows) {
    TempDir dir;
    write_text(dir / "obs.csv", "observation_id,image_index,class_id,location_code\nobs1,0,,L1\n");
    const auto t = parse_observations_csv(dir / "obs.csv", three_classes(), true);
    ASSERT_EQ(t.rows.size(), 1u);
    EXPECT_FALSE(t.rows[0].class_id.has_value());
    EXPECT_FALSE(t.fully_labeled());
    EXPECT_THROW(parse_observations_csv(dir / "obs.csv", three_classes(), false), Error);
}

TEST(Observations, DuplicateImageIndex) {
    TempDir dir;
    write_text(dir / "obs.csv",
               "observation_id,image_index,class_id,location_code\na,0,1,L1\nb,0,1,L1\n");
    error_text([&] { parse_observations_csv(dir / "obs.csv", three_classes(), false); },
               ErrorCode::Parse);
}

TEST(Observations, FileOrderPreserved) {
    TempDir dir;
    write_text(dir / "obs.csv",
               "observation_id,image_index,class_id,location_code\nz,2,0,L\na,0,1,L\nm,1,2,L\n");
    const auto t = parse_observations_csv(dir / "obs.csv", three_classes(), false);
    ASSERT_EQ(t.rows.size(), 3u);
    EXPECT_EQ(t.rows[0].observation_id, "z");
    EXPECT_EQ(t.rows[1].observation_id, "a");
    EXPECT_EQ(t.rows[2].observation_id, "m");
}

TEST(Validate, ConsistentBundleUnchanged) {
    const auto b = small_bundle();
    const auto v = validate_bundle(b, ValidationMode::Drop);
    EXPECT_EQ(v.bundle, b);
    EXPECT_EQ(v.report.dropped_rows, 0u);
    EXPECT_TRUE(v.report.offenders.empty());
    EXPECT_NO_THROW(validate_bundle(b, ValidationMode::Strict));
}

TEST(Validate, DropsRowBeyondImageMatrix) {
    auto b = small_bundle();
    b.observations.rows.push_back({"obs3", 9, 2, "L1"});
    const auto v = validate_bundle(b, ValidationMode::Drop);
    EXPECT_EQ(v.report.dropped_rows, 1u);
    EXPECT_EQ(v.bundle.observations.rows.size(), 3u);
}

TEST(Validate, StrictRejectsDanglingLocation) {
    auto b = small_bundle();
    b.locations.entries["L2"] = 5;  // past the metadata rows
    const auto msg =
        error_text([&] { validate_bundle(b, ValidationMode::Strict); }, ErrorCode::Validation);
    EXPECT_NE(msg.find("L2"), std::string::npos);
    const auto v = validate_bundle(b, ValidationMode::Drop);
    EXPECT_EQ(v.report.dropped_locations, 1u);
    EXPECT_EQ(v.report.dropped_rows, 1u);  // obs2 lost its location
}

TEST(Validate, StrictListsAtMostTenOffenders) {
    auto b = small_bundle();
    for (int i = 0; i < 15; ++i) b.observations.rows.push_back({"x" + std::to_string(i), 100u + i, 0, "L1"});
    const auto msg =
        error_text([&] { validate_bundle(b, ValidationMode::Strict); }, ErrorCode::Validation);
    EXPECT_NE(msg.find("15 dangling"), std::string::npos) << msg;
    EXPECT_NE(msg.find("x9"), std::string::npos);
    EXPECT_EQ(msg.find("x10"), std::string::npos);
}

TEST(Validate, ScoreWidthMismatchFailsInBothModes) {
    auto b = small_bundle();
    b.scores = FeatureMatrix(3, 2);
    EXPECT_THROW(validate_bundle(b, ValidationMode::Drop), Error);
    EXPECT_THROW(validate_bundle(b, ValidationMode::Strict), Error);
}

TEST(Validate, DropIsIdempotent) {
    Rng rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        auto b = small_bundle();
        for (int i = 0; i < 6; ++i) {
            const std::string loc = rng.bernoulli(0.5) ? "L1" : (rng.bernoulli(0.5) ? "L2" : "nowhere");
            b.observations.rows.push_back({"o" + std::to_string(i), 3 + rng.index(4), 0, loc});
        }
        if (rng.bernoulli(0.3)) b.locations.entries["L3"] = 7;
        const auto once = validate_bundle(b, ValidationMode::Drop).bundle;
        const auto twice = validate_bundle(once, ValidationMode::Drop);
        EXPECT_EQ(twice.bundle, once);
        EXPECT_EQ(twice.report.dropped_rows + twice.report.dropped_locations, 0u);
    }
}

TEST(Bundle, SaveLoadRoundTrip) {
    TempDir dir;
    auto b = small_bundle();
    b.embeddings = FeatureMatrix::from_rows({{1.0}, {2.0}, {3.0}});
    save_bundle(b, dir.path());
    EXPECT_TRUE(is_bundle_dir(dir.path()));
    EXPECT_EQ(load_bundle(dir.path()), b);

    b.score_kind = ScoreKind::Probabilities;
    b.embeddings.reset();
    save_bundle(b, dir.path());
    EXPECT_EQ(load_bundle(dir.path()), b);
}

TEST(Bundle, MissingScoresIsIo) {
    TempDir dir;
    save_bundle(small_bundle(), dir.path());
    std::filesystem::remove(dir / bundle_files::kLogits);
    error_text([&] { load_bundle(dir.path()); }, ErrorCode::Io);
}
