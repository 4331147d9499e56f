#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "venomguard/dataset.hpp"
#include "venomguard/metrics.hpp"

namespace venomguard {

inline constexpr std::uint64_t kDefaultSynthSeed = 7;

struct SynthConfig {
    std::uint64_t seed = kDefaultSynthSeed;
    std::size_t n_classes = 50;
    double imbalance_ratio = 100.0;  // head count / tail count
    std::size_t dims_meta = 8;
    std::size_t dims_proto = 16;
    double venom_fraction = 0.25;
    double location_informativeness = 0.8;
    std::size_t n_observations = 5000;
    std::size_t images_min = 1;
    std::size_t images_max = 3;

    double logit_scale = 6.0;      // true-class logit offset
    double logit_noise = 3.0;      // stddev of every logit
    double embedding_noise = 0.1;  // per-dimension stddev around the class direction
    double meta_spread = 3.0;      // class means uniform in [-spread, spread]^d
    double meta_noise = 1.0;       // stddev around the class mean
    std::size_t test_stride = 5;   // every n-th observation of a class is held out

    void validate() const;
};

// Power-law counts n_c proportional to (c + 1)^-a, with a chosen so that
// n_0 / n_{C-1} = ratio, rounded by largest remainder to sum to `total`.
std::vector<std::uint64_t> power_law_counts(std::size_t classes, double ratio, std::size_t total);

struct SynthDataset {
    SynthConfig config;
    std::vector<std::uint64_t> class_counts;  // observations per class, both splits
    DatasetBundle train;                      // labeled, with embeddings
    DatasetBundle test;                       // unlabeled
    std::vector<LabeledObservation> test_truth;
};

SynthDataset generate(const SynthConfig& cfg);

// <dir>/train, <dir>/test (with truth.csv) and <dir>/manifest.txt.
void write_synthetic(const SynthDataset& data, const std::filesystem::path& dir);

// `key = value` lines for every SynthConfig field.
std::string synth_manifest(const SynthConfig& cfg);

// Loop-based reference implementations, kept free of the main modules' code.

double oracle_seesaw(const std::vector<double>& logits, std::size_t label,
                     const std::vector<std::uint64_t>& counts, double p, double q);

struct OracleMetric {
    double macro_f1 = 0.0;
    double p1 = 0.0, p2 = 0.0, p3 = 0.0, p4 = 0.0;
    double accuracy = 0.0;
    double composite = 0.0;
    std::size_t n = 0;
};

// Status-denominator percentages, zero-support classes excluded from F1.
OracleMetric oracle_metric(const std::vector<std::size_t>& truth,
                           const std::vector<std::size_t>& predicted,
                           const std::vector<bool>& venomous,
                           const std::vector<double>& weights = {1, 1, 2, 5, 2});

// Observation id -> final class. `prior_by_location` maps location codes to
// prior score vectors; pass nullopt to skip the prior.
std::map<std::string, std::size_t> oracle_predict(
    const DatasetBundle& bundle,
    const std::optional<std::map<std::string, std::vector<double>>>& prior_by_location,
    double tau, std::size_t top_k, bool escalate);

}  // namespace venomguard
