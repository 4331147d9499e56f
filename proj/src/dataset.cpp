#include "venomguard/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "venomguard/csv.hpp"
#include "venomguard/error.hpp"

namespace venomguard {

namespace fs = std::filesystem;

ClassTable::ClassTable(std::vector<ClassEntry> entries) : entries_(std::move(entries)) {
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        if (entries_[i].id != i) {
            throw_argument("class table entry " + std::to_string(i) + " has id " +
                           std::to_string(entries_[i].id));
        }
    }
}

std::size_t ClassTable::venomous_count() const noexcept {
    return static_cast<std::size_t>(
        std::count_if(entries_.begin(), entries_.end(), [](const auto& e) { return e.venomous; }));
}

void ClassTable::require_both_statuses(const char* context) const {
    if (!has_both_statuses()) {
        throw_argument(std::string(context) +
                       " requires at least one venomous and one harmless class");
    }
}

std::vector<ObservationGroup> ObservationTable::groups() const {
    std::map<std::string, std::vector<std::size_t>> by_id;
    for (std::size_t i = 0; i < rows.size(); ++i) by_id[rows[i].observation_id].push_back(i);
    std::vector<ObservationGroup> out;
    out.reserve(by_id.size());
    for (auto& [id, idx] : by_id) out.push_back({id, std::move(idx)});
    return out;
}

bool ObservationTable::fully_labeled() const noexcept {
    return std::all_of(rows.begin(), rows.end(), [](const auto& r) { return r.class_id.has_value(); });
}

namespace {

bool parse_flag(const std::string& text, std::size_t line) {
    if (text == "1" || text == "true" || text == "True" || text == "TRUE") return true;
    if (text == "0" || text == "false" || text == "False" || text == "FALSE") return false;
    throw Error(ErrorCode::Parse, "invalid venomous flag `" + text + "`", line);
}

void write_text(const std::string& text, const fs::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::Io, "cannot open " + path.string() + " for writing");
    out << text;
    if (!out) throw Error(ErrorCode::Io, "write failed for " + path.string());
}

}  // namespace

ClassTable parse_classes_csv(const fs::path& path) {
    auto records = csv::expect_header(csv::read_file(path), {"class_id", "name", "venomous"}, path);
    if (records.empty()) throw Error(ErrorCode::Parse, path.string() + ": no classes");

    const std::size_t count = records.size();
    std::vector<std::optional<ClassEntry>> slots(count);
    std::vector<std::size_t> first_line(count, 0);
    for (const auto& r : records) {
        const long long id = csv::parse_int(r.fields[0], r.line, "class_id");
        if (id < 0 || static_cast<std::size_t>(id) >= count) {
            throw Error(ErrorCode::Parse,
                        path.string() + ": non-contiguous class ids (id " + std::to_string(id) +
                            " with " + std::to_string(count) + " classes)",
                        r.line);
        }
        const auto slot = static_cast<std::size_t>(id);
        if (slots[slot]) {
            throw Error(ErrorCode::Parse,
                        path.string() + ": duplicate class id " + std::to_string(id) +
                            " (first at line " + std::to_string(first_line[slot]) + ")",
                        r.line);
        }
        slots[slot] = ClassEntry{slot, r.fields[1], parse_flag(r.fields[2], r.line)};
        first_line[slot] = r.line;
    }
    std::vector<ClassEntry> entries;
    entries.reserve(count);
    for (auto& s : slots) entries.push_back(std::move(*s));
    return ClassTable(std::move(entries));
}

ObservationTable parse_observations_csv(const fs::path& path, const ClassTable& classes,
                                        bool allow_unlabeled) {
    auto records = csv::expect_header(
        csv::read_file(path), {"observation_id", "image_index", "class_id", "location_code"},
        path);
    ObservationTable table;
    table.rows.reserve(records.size());
    std::unordered_map<std::size_t, std::size_t> seen_index;
    for (const auto& r : records) {
        ObservationRow row;
        row.observation_id = r.fields[0];
        if (row.observation_id.empty()) {
            throw Error(ErrorCode::Parse, path.string() + ": empty observation_id", r.line);
        }
        const long long image_index = csv::parse_int(r.fields[1], r.line, "image_index");
        if (image_index < 0) {
            throw Error(ErrorCode::Parse, path.string() + ": negative image_index", r.line);
        }
        row.image_index = static_cast<std::size_t>(image_index);
        if (auto [it, inserted] = seen_index.emplace(row.image_index, r.line); !inserted) {
            throw Error(ErrorCode::Parse,
                        path.string() + ": duplicate image_index " + r.fields[1] +
                            " (first at line " + std::to_string(it->second) + ")",
                        r.line);
        }
        if (r.fields[2].empty()) {
            if (!allow_unlabeled) {
                throw Error(ErrorCode::Parse, path.string() + ": missing class_id", r.line);
            }
        } else {
            const long long id = csv::parse_int(r.fields[2], r.line, "class_id");
            if (!classes.contains(id)) {
                throw Error(ErrorCode::Parse,
                            path.string() + ": unknown class_id " + r.fields[2] + " in row for " +
                                row.observation_id + " (C=" + std::to_string(classes.size()) + ")",
                            r.line);
            }
            row.class_id = static_cast<ClassId>(id);
        }
        row.location_code = r.fields[3];
        table.rows.push_back(std::move(row));
    }
    return table;
}

LocationTable parse_locations_csv(const fs::path& path) {
    auto records =
        csv::expect_header(csv::read_file(path), {"location_code", "metadata_row"}, path);
    LocationTable table;
    for (const auto& r : records) {
        const long long row = csv::parse_int(r.fields[1], r.line, "metadata_row");
        if (row < 0) throw Error(ErrorCode::Parse, path.string() + ": negative metadata_row", r.line);
        if (!table.entries.emplace(r.fields[0], static_cast<std::size_t>(row)).second) {
            throw Error(ErrorCode::Parse,
                        path.string() + ": duplicate location_code " + r.fields[0], r.line);
        }
    }
    return table;
}

void write_classes_csv(const ClassTable& classes, const fs::path& path) {
    std::ostringstream out;
    out << "class_id,name,venomous\n";
    for (const auto& e : classes.entries()) {
        out << e.id << ',' << csv::quote_if_needed(e.name) << ',' << (e.venomous ? 1 : 0) << '\n';
    }
    write_text(out.str(), path);
}

void write_observations_csv(const ObservationTable& table, const fs::path& path) {
    std::ostringstream out;
    out << "observation_id,image_index,class_id,location_code\n";
    for (const auto& r : table.rows) {
        out << csv::quote_if_needed(r.observation_id) << ',' << r.image_index << ',';
        if (r.class_id) out << *r.class_id;
        out << ',' << csv::quote_if_needed(r.location_code) << '\n';
    }
    write_text(out.str(), path);
}

void write_locations_csv(const LocationTable& table, const fs::path& path) {
    std::ostringstream out;
    out << "location_code,metadata_row\n";
    for (const auto& [code, row] : table.entries) {
        out << csv::quote_if_needed(code) << ',' << row << '\n';
    }
    write_text(out.str(), path);
}

ValidatedBundle validate_bundle(const DatasetBundle& bundle, ValidationMode mode) {
    const std::size_t classes = bundle.classes.size();
    if (classes == 0) throw Error(ErrorCode::Validation, "bundle has no classes");
    if (bundle.scores.dims() != classes) {
        throw Error(ErrorCode::Validation,
                    "score matrix has " + std::to_string(bundle.scores.dims()) +
                        " columns but the class table has " + std::to_string(classes));
    }
    if (bundle.embeddings && bundle.embeddings->rows() != bundle.scores.rows()) {
        throw Error(ErrorCode::Validation,
                    "embedding rows (" + std::to_string(bundle.embeddings->rows()) +
                        ") differ from score rows (" + std::to_string(bundle.scores.rows()) + ")");
    }
    for (const auto& r : bundle.observations.rows) {
        if (r.class_id && *r.class_id >= classes) {
            throw Error(ErrorCode::Validation,
                        "observation " + r.observation_id + " has invalid class id " +
                            std::to_string(*r.class_id));
        }
    }

    ValidatedBundle result{bundle, {}};
    DropReport& report = result.report;

    LocationTable kept_locations;
    for (const auto& [code, row] : bundle.locations.entries) {
        if (row >= bundle.metadata.rows()) {
            report.offenders.push_back("location " + code + " -> metadata row " +
                                       std::to_string(row) + " out of range (" +
                                       std::to_string(bundle.metadata.rows()) + " rows)");
            ++report.dropped_locations;
        } else {
            kept_locations.entries.emplace(code, row);
        }
    }

    ObservationTable kept_rows;
    kept_rows.rows.reserve(bundle.observations.rows.size());
    for (std::size_t i = 0; i < bundle.observations.rows.size(); ++i) {
        const auto& r = bundle.observations.rows[i];
        std::string problem;
        if (r.image_index >= bundle.scores.rows()) {
            problem = "image_index " + std::to_string(r.image_index) + " out of range (" +
                      std::to_string(bundle.scores.rows()) + " rows)";
        } else if (!kept_locations.find(r.location_code)) {
            problem = "unresolved location_code `" + r.location_code + "`";
        }
        if (problem.empty()) {
            kept_rows.rows.push_back(r);
        } else {
            report.offenders.push_back("observation row " + std::to_string(i) + " (" +
                                       r.observation_id + "): " + problem);
            ++report.dropped_rows;
        }
    }

    if (mode == ValidationMode::Strict && !report.offenders.empty()) {
        std::string message = std::to_string(report.offenders.size()) + " dangling reference(s):";
        const std::size_t shown = std::min<std::size_t>(10, report.offenders.size());
        for (std::size_t i = 0; i < shown; ++i) message += "\n  " + report.offenders[i];
        throw Error(ErrorCode::Validation, message);
    }
    result.bundle.locations = std::move(kept_locations);
    result.bundle.observations = std::move(kept_rows);
    return result;
}

bool is_bundle_dir(const fs::path& dir) {
    return fs::is_regular_file(dir / bundle_files::kClasses) &&
           fs::is_regular_file(dir / bundle_files::kObservations);
}

DatasetBundle load_bundle(const fs::path& dir, bool allow_unlabeled) {
    if (!fs::is_directory(dir)) throw Error(ErrorCode::Io, dir.string() + " is not a directory");
    DatasetBundle b;
    b.classes = parse_classes_csv(dir / bundle_files::kClasses);
    b.observations =
        parse_observations_csv(dir / bundle_files::kObservations, b.classes, allow_unlabeled);
    b.locations = parse_locations_csv(dir / bundle_files::kLocations);
    const bool has_logits = fs::exists(dir / bundle_files::kLogits);
    const bool has_probs = fs::exists(dir / bundle_files::kProbs);
    if (has_logits == has_probs) {
        throw Error(ErrorCode::Io, dir.string() + ": expected exactly one of " +
                                       bundle_files::kLogits + " or " + bundle_files::kProbs);
    }
    if (has_logits) {
        b.scores = read_feature_matrix(dir / bundle_files::kLogits);
        b.score_kind = ScoreKind::Logits;
    } else {
        b.scores = read_feature_matrix(dir / bundle_files::kProbs);
        b.score_kind = ScoreKind::Probabilities;
    }
    b.metadata = read_feature_matrix(dir / bundle_files::kMetadata);
    if (fs::exists(dir / bundle_files::kEmbeddings)) {
        b.embeddings = read_feature_matrix(dir / bundle_files::kEmbeddings);
    }
    return b;
}

void save_bundle(const DatasetBundle& b, const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Error(ErrorCode::Io, "cannot create " + dir.string() + ": " + ec.message());
    write_classes_csv(b.classes, dir / bundle_files::kClasses);
    write_observations_csv(b.observations, dir / bundle_files::kObservations);
    write_locations_csv(b.locations, dir / bundle_files::kLocations);
    const bool logits = b.score_kind == ScoreKind::Logits;
    fs::remove(dir / (logits ? bundle_files::kProbs : bundle_files::kLogits), ec);
    write_feature_matrix(b.scores, dir / (logits ? bundle_files::kLogits : bundle_files::kProbs));
    write_feature_matrix(b.metadata, dir / bundle_files::kMetadata);
    if (b.embeddings) {
        write_feature_matrix(*b.embeddings, dir / bundle_files::kEmbeddings);
    } else {
        fs::remove(dir / bundle_files::kEmbeddings, ec);
    }
}

}  // namespace venomguard
