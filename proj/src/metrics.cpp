#include "venomguard/metrics.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <nlohmann/json.hpp>
#include <numeric>
#include <unordered_map>

#include "venomguard/csv.hpp"
#include "venomguard/diagnostics.hpp"
#include "venomguard/error.hpp"

namespace venomguard {

std::uint64_t ConfusionMatrix::total() const noexcept {
    return std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0});
}

ConfusionMatrix confusion_matrix(std::span<const ClassId> truth, std::span<const ClassId> predicted,
                                 std::size_t classes) {
    if (truth.size() != predicted.size()) {
        throw_argument("confusion_matrix: " + std::to_string(truth.size()) + " truths vs " +
                       std::to_string(predicted.size()) + " predictions");
    }
    if (truth.empty()) throw_argument("confusion_matrix: no examples");
    ConfusionMatrix m(classes);
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (truth[i] >= classes || predicted[i] >= classes) {
            throw_argument("confusion_matrix: class id out of range at example " + std::to_string(i));
        }
        m.add(truth[i], predicted[i]);
    }
    return m;
}

double macro_f1(const ConfusionMatrix& confusion, bool all_classes) {
    const std::size_t n = confusion.classes();
    double sum = 0.0;
    std::size_t counted = 0;
    for (ClassId c = 0; c < n; ++c) {
        std::uint64_t support = 0, predicted = 0;
        for (ClassId k = 0; k < n; ++k) {
            support += confusion.at(c, k);
            predicted += confusion.at(k, c);
        }
        if (support == 0 && !all_classes) continue;
        ++counted;
        const double tp = static_cast<double>(confusion.at(c, c));
        const double precision = predicted ? tp / static_cast<double>(predicted) : 0.0;
        const double recall = support ? tp / static_cast<double>(support) : 0.0;
        if (precision + recall > 0.0) sum += 2.0 * precision * recall / (precision + recall);
    }
    if (counted == 0) throw_argument("macro_f1: no class has ground-truth support");
    return 100.0 * sum / static_cast<double>(counted);
}

VenomConfusions venom_confusions(const ConfusionMatrix& confusion, const ClassTable& classes,
                                 PercentDenominator denominator) {
    const std::size_t n = confusion.classes();
    if (classes.size() != n) throw_argument("venom_confusions: class table does not match matrix");
    std::uint64_t hh = 0, hv = 0, vh = 0, vv = 0, harmless = 0, venomous = 0;
    for (ClassId t = 0; t < n; ++t) {
        const bool vt = classes.venomous(t);
        for (ClassId p = 0; p < n; ++p) {
            const std::uint64_t count = confusion.at(t, p);
            (vt ? venomous : harmless) += count;
            if (t == p) continue;
            const bool vp = classes.venomous(p);
            if (vt) (vp ? vv : vh) += count;
            else (vp ? hv : hh) += count;
        }
    }
    auto pct = [](std::uint64_t num, std::uint64_t den) {
        return den ? 100.0 * static_cast<double>(num) / static_cast<double>(den) : 0.0;
    };
    VenomConfusions out;
    switch (denominator) {
        case PercentDenominator::Status:
            if (harmless == 0) warn("no harmless ground truth; P1 and P2 reported as 0");
            if (venomous == 0) warn("no venomous ground truth; P3 and P4 reported as 0");
            out = {pct(hh, harmless), pct(hv, harmless), pct(vh, venomous), pct(vv, venomous)};
            break;
        case PercentDenominator::All: {
            const std::uint64_t all = harmless + venomous;
            out = {pct(hh, all), pct(hv, all), pct(vh, all), pct(vv, all)};
            break;
        }
        case PercentDenominator::Errors: {
            const std::uint64_t errors = hh + hv + vh + vv;
            out = {pct(hh, errors), pct(hv, errors), pct(vh, errors), pct(vv, errors)};
            break;
        }
    }
    return out;
}

double track1_metric(double f1, const VenomConfusions& p, const MetricWeights& weights) {
    const auto& w = weights.w;
    const double total = std::accumulate(w.begin(), w.end(), 0.0);
    if (!(total > 0.0)) throw_argument("metric weights must have a positive sum");
    return (w[0] * f1 + w[1] * (100.0 - p.p1) + w[2] * (100.0 - p.p2) + w[3] * (100.0 - p.p3) +
            w[4] * (100.0 - p.p4)) /
           total;
}

MetricReport compute_report(std::span<const ClassId> truth, std::span<const ClassId> predicted,
                            const ClassTable& classes, const MetricOptions& options) {
    MetricReport r;
    r.confusion = confusion_matrix(truth, predicted, classes.size());
    r.n_observations = truth.size();
    r.macro_f1 = macro_f1(r.confusion, options.f1_all_classes);
    const auto p = venom_confusions(r.confusion, classes, options.denominator);
    r.p1 = p.p1;
    r.p2 = p.p2;
    r.p3 = p.p3;
    r.p4 = p.p4;
    std::uint64_t correct = 0;
    for (ClassId c = 0; c < classes.size(); ++c) correct += r.confusion.at(c, c);
    r.accuracy = 100.0 * static_cast<double>(correct) / static_cast<double>(r.n_observations);
    r.composite = track1_metric(r.macro_f1, p, options.weights);
    return r;
}

std::vector<LabeledObservation> read_label_csv(const std::filesystem::path& path,
                                               const ClassTable& classes) {
    auto records = csv::read_file(path);
    if (records.empty()) throw Error(ErrorCode::Parse, path.string() + ": missing header", 1);
    const auto& header = records.front().fields;
    const auto find_column = [&](const char* name) {
        const auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) {
            throw Error(ErrorCode::Parse, path.string() + ": header lacks `" + name + "`", 1);
        }
        return static_cast<std::size_t>(it - header.begin());
    };
    const std::size_t id_col = find_column("observation_id");
    const std::size_t class_col = find_column("class_id");

    std::vector<LabeledObservation> out;
    std::unordered_map<std::string, std::size_t> first_line;
    for (std::size_t i = 1; i < records.size(); ++i) {
        const auto& r = records[i];
        if (r.fields.size() != header.size()) {
            throw Error(ErrorCode::Parse, path.string() + ": wrong field count", r.line);
        }
        const long long id = csv::parse_int(r.fields[class_col], r.line, "class_id");
        if (!classes.contains(id)) {
            throw Error(ErrorCode::Parse, path.string() + ": unknown class_id " + r.fields[class_col],
                        r.line);
        }
        const auto& obs = r.fields[id_col];
        if (auto [it, inserted] = first_line.emplace(obs, r.line); !inserted) {
            throw Error(ErrorCode::Parse,
                        path.string() + ": duplicate observation_id " + obs + " (first at line " +
                            std::to_string(it->second) + ")",
                        r.line);
        }
        out.push_back({obs, static_cast<ClassId>(id)});
    }
    return out;
}

MetricReport score_labels(const std::vector<LabeledObservation>& truth,
                          const std::vector<LabeledObservation>& predicted,
                          const ClassTable& classes, const MetricOptions& options) {
    std::unordered_map<std::string, ClassId> by_id;
    for (const auto& p : predicted) by_id.emplace(p.observation_id, p.class_id);

    std::vector<std::string> missing;
    std::vector<ClassId> t, p;
    t.reserve(truth.size());
    p.reserve(truth.size());
    std::unordered_map<std::string, bool> truth_ids;
    for (const auto& obs : truth) {
        truth_ids.emplace(obs.observation_id, true);
        const auto it = by_id.find(obs.observation_id);
        if (it == by_id.end()) {
            missing.push_back(obs.observation_id);
            continue;
        }
        t.push_back(obs.class_id);
        p.push_back(it->second);
    }
    std::vector<std::string> extra;
    for (const auto& obs : predicted) {
        if (!truth_ids.count(obs.observation_id)) extra.push_back(obs.observation_id);
    }
    if (!missing.empty() || !extra.empty()) {
        std::sort(missing.begin(), missing.end());
        std::sort(extra.begin(), extra.end());
        std::string message;
        auto list = [&](const char* what, const std::vector<std::string>& ids) {
            if (ids.empty()) return;
            message += std::to_string(ids.size()) + " " + what + ":";
            for (std::size_t i = 0; i < std::min<std::size_t>(10, ids.size()); ++i) {
                message += " " + ids[i];
            }
            message += "\n";
        };
        list("observation id(s) missing from predictions", missing);
        list("observation id(s) not in truth", extra);
        message.pop_back();
        throw Error(ErrorCode::Validation, message);
    }
    return compute_report(t, p, classes, options);
}

MetricReport score_predictions(const std::filesystem::path& truth_csv,
                               const std::filesystem::path& prediction_csv,
                               const ClassTable& classes, const MetricOptions& options) {
    return score_labels(read_label_csv(truth_csv, classes), read_label_csv(prediction_csv, classes),
                        classes, options);
}

std::string format_report_text(const MetricReport& r) {
    return fmt::format(
        "observations  {}\n"
        "macro_f1      {:.4f}\n"
        "accuracy      {:.4f}\n"
        "p1            {:.4f}\n"
        "p2            {:.4f}\n"
        "p3            {:.4f}\n"
        "p4            {:.4f}\n"
        "composite     {:.4f}\n",
        r.n_observations, r.macro_f1, r.accuracy, r.p1, r.p2, r.p3, r.p4, r.composite);
}

std::string format_report_json(const MetricReport& r) {
    nlohmann::ordered_json j;
    j["macro_f1"] = r.macro_f1;
    j["p1"] = r.p1;
    j["p2"] = r.p2;
    j["p3"] = r.p3;
    j["p4"] = r.p4;
    j["accuracy"] = r.accuracy;
    j["composite"] = r.composite;
    j["n_observations"] = r.n_observations;
    return j.dump(2) + "\n";
}

}  // namespace venomguard
