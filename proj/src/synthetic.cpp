#include "venomguard/synthetic.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "venomguard/error.hpp"
#include "venomguard/rng.hpp"

namespace fs = std::filesystem;

namespace venomguard {

void SynthConfig::validate() const {
    if (n_classes < 2) throw_argument("synth: n_classes must be >= 2");
    if (n_observations < n_classes) {
        throw_argument("synth: n_observations must be >= n_classes so every class has an observation");
    }
    if (!(imbalance_ratio >= 1.0) || !std::isfinite(imbalance_ratio)) {
        throw_argument("synth: imbalance_ratio must be >= 1");
    }
    if (dims_meta == 0 || dims_proto == 0) throw_argument("synth: dimensions must be >= 1");
    if (!(venom_fraction > 0.0 && venom_fraction < 1.0)) {
        throw_argument("synth: venom_fraction must be in (0, 1)");
    }
    if (static_cast<std::size_t>(std::ceil(venom_fraction * static_cast<double>(n_classes))) >=
        n_classes) {
        throw_argument("synth: venom_fraction leaves no harmless class");
    }
    if (!(location_informativeness >= 0.0 && location_informativeness <= 1.0)) {
        throw_argument("synth: location_informativeness must be in [0, 1]");
    }
    if (images_min == 0 || images_max < images_min) {
        throw_argument("synth: need 1 <= images_min <= images_max");
    }
    for (double v : {logit_scale, logit_noise, embedding_noise, meta_spread, meta_noise}) {
        if (!std::isfinite(v) || v < 0.0) throw_argument("synth: noise and scale parameters must be >= 0");
    }
    if (test_stride < 2) throw_argument("synth: test_stride must be >= 2");
}

std::vector<std::uint64_t> power_law_counts(std::size_t classes, double ratio, std::size_t total) {
    if (classes == 0 || total < classes) throw_argument("power_law_counts: need total >= classes >= 1");
    const double exponent =
        classes > 1 ? std::log(ratio) / std::log(static_cast<double>(classes)) : 0.0;
    std::vector<double> weight(classes);
    for (std::size_t c = 0; c < classes; ++c) {
        weight[c] = std::pow(static_cast<double>(c + 1), -exponent);
    }
    const double sum = std::accumulate(weight.begin(), weight.end(), 0.0);

    std::vector<std::uint64_t> counts(classes);
    std::vector<double> remainder(classes);
    std::uint64_t assigned = 0;
    for (std::size_t c = 0; c < classes; ++c) {
        const double exact = static_cast<double>(total) * weight[c] / sum;
        counts[c] = static_cast<std::uint64_t>(std::floor(exact));
        remainder[c] = exact - std::floor(exact);
        assigned += counts[c];
    }
    std::vector<std::size_t> order(classes);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
    for (std::size_t i = 0; assigned < total; ++i, ++assigned) ++counts[order[i % classes]];

    // Every class keeps at least one observation; the largest class pays.
    for (std::size_t c = 0; c < classes; ++c) {
        if (counts[c] == 0) {
            ++counts[c];
            --*std::max_element(counts.begin(), counts.end());
        }
    }
    return counts;
}

namespace {

double f32(double v) { return static_cast<double>(static_cast<float>(v)); }

template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.index(i)]);
}

}  // namespace

SynthDataset generate(const SynthConfig& cfg) {
    cfg.validate();
    Rng rng(cfg.seed);
    const std::size_t C = cfg.n_classes;

    SynthDataset out;
    out.config = cfg;
    out.class_counts = power_law_counts(C, cfg.imbalance_ratio, cfg.n_observations);

    std::vector<ClassId> venom_order(C);
    std::iota(venom_order.begin(), venom_order.end(), ClassId{0});
    shuffle(venom_order, rng);
    const auto n_venomous =
        static_cast<std::size_t>(std::ceil(cfg.venom_fraction * static_cast<double>(C)));
    std::vector<ClassEntry> entries(C);
    for (ClassId c = 0; c < C; ++c) entries[c] = {c, fmt::format("species_{:03}", c), false};
    for (std::size_t i = 0; i < n_venomous; ++i) entries[venom_order[i]].venomous = true;
    const ClassTable classes(entries);

    // Sparse non-negative unit directions, like rectified penultimate
    // features, and metadata class means.
    const std::size_t active = std::max<std::size_t>(1, cfg.dims_proto / 4);
    std::vector<std::vector<double>> direction(C, std::vector<double>(cfg.dims_proto, 0.0));
    for (auto& u : direction) {
        std::vector<std::size_t> dims(cfg.dims_proto);
        std::iota(dims.begin(), dims.end(), std::size_t{0});
        shuffle(dims, rng);
        double norm = 0.0;
        for (std::size_t i = 0; i < active; ++i) {
            u[dims[i]] = 0.5 + std::abs(rng.normal());
            norm += u[dims[i]] * u[dims[i]];
        }
        norm = std::sqrt(norm);
        for (double& v : u) v /= norm;
    }
    std::vector<std::vector<double>> meta_mean(C, std::vector<double>(cfg.dims_meta));
    for (auto& m : meta_mean) {
        for (double& v : m) v = rng.uniform(-cfg.meta_spread, cfg.meta_spread);
    }
    const double box = cfg.meta_spread + 2.0 * cfg.meta_noise;

    std::vector<ClassId> labels;
    labels.reserve(cfg.n_observations);
    for (ClassId c = 0; c < C; ++c) labels.insert(labels.end(), out.class_counts[c], c);
    shuffle(labels, rng);

    struct Split {
        std::vector<ObservationRow> rows;
        std::vector<std::vector<double>> scores, embeddings, metadata;
        LocationTable locations;
    };
    Split train, test;
    std::vector<std::size_t> seen(C, 0);

    for (std::size_t i = 0; i < labels.size(); ++i) {
        const ClassId y = labels[i];
        const bool held_out = ++seen[y] % cfg.test_stride == 0;
        Split& split = held_out ? test : train;
        const std::string obs_id = fmt::format("obs{:05}", i);
        const std::string loc_code = fmt::format("loc{:05}", i);

        std::vector<double> meta(cfg.dims_meta);
        if (rng.bernoulli(cfg.location_informativeness)) {
            for (std::size_t d = 0; d < cfg.dims_meta; ++d) {
                meta[d] = f32(rng.normal(meta_mean[y][d], cfg.meta_noise));
            }
        } else {
            for (double& v : meta) v = f32(rng.uniform(-box, box));
        }
        split.locations.entries.emplace(loc_code, split.metadata.size());
        split.metadata.push_back(std::move(meta));

        const std::size_t images =
            cfg.images_min + rng.index(cfg.images_max - cfg.images_min + 1);
        for (std::size_t k = 0; k < images; ++k) {
            std::vector<double> logits(C);
            for (ClassId c = 0; c < C; ++c) {
                logits[c] = f32((c == y ? cfg.logit_scale : 0.0) + rng.normal(0.0, cfg.logit_noise));
            }
            std::vector<double> emb(cfg.dims_proto);
            for (std::size_t d = 0; d < cfg.dims_proto; ++d) {
                emb[d] = f32(std::max(0.0, direction[y][d] + rng.normal(0.0, cfg.embedding_noise)));
            }
            ObservationRow row;
            row.observation_id = obs_id;
            row.image_index = split.scores.size();
            row.location_code = loc_code;
            if (!held_out) row.class_id = y;
            split.rows.push_back(std::move(row));
            split.scores.push_back(std::move(logits));
            split.embeddings.push_back(std::move(emb));
        }
        if (held_out) out.test_truth.push_back({obs_id, y});
    }

    auto assemble = [&](Split& s, bool with_embeddings) {
        DatasetBundle b;
        b.classes = classes;
        b.observations.rows = std::move(s.rows);
        b.scores = s.scores.empty() ? FeatureMatrix(0, C) : FeatureMatrix::from_rows(s.scores);
        b.score_kind = ScoreKind::Logits;
        if (with_embeddings) {
            b.embeddings = s.embeddings.empty() ? FeatureMatrix(0, cfg.dims_proto)
                                                : FeatureMatrix::from_rows(s.embeddings);
        }
        b.metadata =
            s.metadata.empty() ? FeatureMatrix(0, cfg.dims_meta) : FeatureMatrix::from_rows(s.metadata);
        b.locations = std::move(s.locations);
        return b;
    };
    out.train = assemble(train, true);
    out.test = assemble(test, false);
    return out;
}

std::string synth_manifest(const SynthConfig& c) {
    std::string s;
    s += fmt::format("synth.seed = {}\n", c.seed);
    s += fmt::format("synth.n_classes = {}\n", c.n_classes);
    s += fmt::format("synth.imbalance_ratio = {}\n", c.imbalance_ratio);
    s += fmt::format("synth.dims_meta = {}\n", c.dims_meta);
    s += fmt::format("synth.dims_proto = {}\n", c.dims_proto);
    s += fmt::format("synth.venom_fraction = {}\n", c.venom_fraction);
    s += fmt::format("synth.location_informativeness = {}\n", c.location_informativeness);
    s += fmt::format("synth.n_observations = {}\n", c.n_observations);
    s += fmt::format("synth.images_min = {}\n", c.images_min);
    s += fmt::format("synth.images_max = {}\n", c.images_max);
    s += fmt::format("synth.logit_scale = {}\n", c.logit_scale);
    s += fmt::format("synth.logit_noise = {}\n", c.logit_noise);
    s += fmt::format("synth.embedding_noise = {}\n", c.embedding_noise);
    s += fmt::format("synth.meta_spread = {}\n", c.meta_spread);
    s += fmt::format("synth.meta_noise = {}\n", c.meta_noise);
    s += fmt::format("synth.test_stride = {}\n", c.test_stride);
    return s;
}

void write_synthetic(const SynthDataset& data, const fs::path& dir) {
    save_bundle(data.train, dir / "train");
    save_bundle(data.test, dir / "test");

    std::string truth = "observation_id,class_id\n";
    for (const auto& t : data.test_truth) truth += fmt::format("{},{}\n", t.observation_id, t.class_id);
    std::string manifest = "# synthetic dataset\n" + synth_manifest(data.config);
    manifest += "# observations per class\n";
    for (std::size_t c = 0; c < data.class_counts.size(); ++c) {
        manifest += fmt::format("# class {} {}\n", c, data.class_counts[c]);
    }
    for (const auto& [path, text] : {std::pair{dir / "test" / "truth.csv", &truth},
                                     std::pair{dir / "manifest.txt", &manifest}}) {
        std::ofstream f(path, std::ios::binary | std::ios::trunc);
        if (!f) throw Error(ErrorCode::Io, "cannot open " + path.string() + " for writing");
        f << *text;
        if (!f) throw Error(ErrorCode::Io, "write failed for " + path.string());
    }
}

// ---------------------------------------------------------------------------
// Oracles

double oracle_seesaw(const std::vector<double>& logits, std::size_t label,
                     const std::vector<std::uint64_t>& counts, double p, double q) {
    const std::size_t n = logits.size();
    double shift = logits[0];
    for (std::size_t i = 1; i < n; ++i) shift = logits[i] > shift ? logits[i] : shift;
    std::vector<double> e(n);
    double z = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        e[i] = std::exp(logits[i] - shift);
        z += e[i];
    }
    std::vector<double> sigma(n);
    for (std::size_t i = 0; i < n; ++i) sigma[i] = e[i] / z;

    bool all_zero = true;
    for (auto c : counts) all_zero = all_zero && c == 0;

    double denom = e[label];
    for (std::size_t j = 0; j < n; ++j) {
        if (j == label) continue;
        double m = 1.0;
        if (!(all_zero && p > 0.0) && counts[label] > counts[j]) {
            m = std::pow(double(counts[j]) / double(counts[label]), p);
        }
        double c = 1.0;
        if (sigma[j] > sigma[label]) c = std::pow(sigma[j] / sigma[label], q);
        denom += m * c * e[j];
    }
    return -std::log(e[label] / denom);
}

OracleMetric oracle_metric(const std::vector<std::size_t>& truth,
                           const std::vector<std::size_t>& predicted,
                           const std::vector<bool>& venomous, const std::vector<double>& weights) {
    const std::size_t n_classes = venomous.size();
    OracleMetric r;
    r.n = truth.size();

    double f1_sum = 0.0;
    std::size_t present = 0;
    for (std::size_t c = 0; c < n_classes; ++c) {
        double tp = 0, fp = 0, fn = 0;
        for (std::size_t i = 0; i < truth.size(); ++i) {
            if (truth[i] == c && predicted[i] == c) tp += 1;
            if (truth[i] != c && predicted[i] == c) fp += 1;
            if (truth[i] == c && predicted[i] != c) fn += 1;
        }
        if (tp + fn == 0) continue;
        ++present;
        f1_sum += tp == 0 ? 0.0 : 2 * tp / (2 * tp + fp + fn);
    }
    r.macro_f1 = 100.0 * f1_sum / double(present);

    double harmless = 0, venom = 0, c1 = 0, c2 = 0, c3 = 0, c4 = 0, correct = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const bool vt = venomous[truth[i]];
        const bool vp = venomous[predicted[i]];
        if (vt) venom += 1;
        else harmless += 1;
        if (truth[i] == predicted[i]) {
            correct += 1;
            continue;
        }
        if (!vt && !vp) c1 += 1;
        if (!vt && vp) c2 += 1;
        if (vt && !vp) c3 += 1;
        if (vt && vp) c4 += 1;
    }
    r.p1 = harmless > 0 ? 100.0 * c1 / harmless : 0.0;
    r.p2 = harmless > 0 ? 100.0 * c2 / harmless : 0.0;
    r.p3 = venom > 0 ? 100.0 * c3 / venom : 0.0;
    r.p4 = venom > 0 ? 100.0 * c4 / venom : 0.0;
    r.accuracy = 100.0 * correct / double(truth.size());

    const double wsum = weights[0] + weights[1] + weights[2] + weights[3] + weights[4];
    r.composite = (weights[0] * r.macro_f1 + weights[1] * (100 - r.p1) + weights[2] * (100 - r.p2) +
                   weights[3] * (100 - r.p3) + weights[4] * (100 - r.p4)) /
                  wsum;
    return r;
}

std::map<std::string, std::size_t> oracle_predict(
    const DatasetBundle& bundle,
    const std::optional<std::map<std::string, std::vector<double>>>& prior_by_location,
    double tau, std::size_t top_k, bool escalate) {
    const std::size_t n = bundle.classes.size();
    std::map<std::string, std::vector<std::vector<double>>> per_obs;

    for (const auto& row : bundle.observations.rows) {
        std::vector<double> s(n);
        double total = 0.0;
        for (std::size_t c = 0; c < n; ++c) s[c] = bundle.scores.at(row.image_index, c);
        if (bundle.score_kind == ScoreKind::Logits) {
            double hi = s[0];
            for (double v : s) hi = v > hi ? v : hi;
            for (double& v : s) {
                v = std::exp(v - hi);
                total += v;
            }
        } else {
            for (double v : s) total += v;
        }
        if (total > 0) {
            for (double& v : s) v /= total;
        }

        if (prior_by_location) {
            const auto& prior = prior_by_location->at(row.location_code);
            double hi = prior[0];
            for (double v : prior) hi = v > hi ? v : hi;
            std::vector<double> w(n);
            double wz = 0.0;
            for (std::size_t c = 0; c < n; ++c) {
                w[c] = std::exp(prior[c] - hi);
                wz += w[c];
            }
            std::vector<double> joint(n);
            double jz = 0.0;
            for (std::size_t c = 0; c < n; ++c) {
                joint[c] = s[c] * (w[c] / wz);
                jz += joint[c];
            }
            if (jz > 0) {
                for (std::size_t c = 0; c < n; ++c) s[c] = joint[c] / jz;
            }
        }
        per_obs[row.observation_id].push_back(s);
    }

    std::map<std::string, std::size_t> out;
    for (const auto& [id, images] : per_obs) {
        std::vector<double> mean(n, 0.0);
        for (const auto& s : images) {
            for (std::size_t c = 0; c < n; ++c) mean[c] += s[c];
        }
        for (double& v : mean) v /= double(images.size());

        std::size_t best = 0;
        for (std::size_t c = 1; c < n; ++c) {
            if (mean[c] > mean[best]) best = c;
        }
        std::size_t decision = best;
        if (escalate && mean[best] < tau) {
            std::vector<bool> taken(n, false);
            for (std::size_t rank = 0; rank < top_k && rank < n; ++rank) {
                std::size_t pick = n;
                for (std::size_t c = 0; c < n; ++c) {
                    if (taken[c]) continue;
                    if (pick == n || mean[c] > mean[pick]) pick = c;
                }
                taken[pick] = true;
                if (bundle.classes.entries()[pick].venomous) {
                    decision = pick;
                    break;
                }
            }
        }
        out[id] = decision;
    }
    return out;
}

}  // namespace venomguard
