#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "venomguard/feature_matrix.hpp"

namespace venomguard {

using ClassId = std::size_t;

struct ClassEntry {
    ClassId id = 0;
    std::string name;
    bool venomous = false;

    friend bool operator==(const ClassEntry&, const ClassEntry&) = default;
};

// Class id -> name and venomous flag. Ids are contiguous 0..C-1.
class ClassTable {
public:
    ClassTable() = default;
    explicit ClassTable(std::vector<ClassEntry> entries);

    std::size_t size() const noexcept { return entries_.size(); }
    const std::vector<ClassEntry>& entries() const noexcept { return entries_; }
    const ClassEntry& operator[](ClassId id) const { return entries_.at(id); }
    bool venomous(ClassId id) const { return entries_.at(id).venomous; }
    bool contains(long long id) const noexcept {
        return id >= 0 && static_cast<std::size_t>(id) < entries_.size();
    }

    std::size_t venomous_count() const noexcept;
    bool has_both_statuses() const noexcept {
        const auto v = venomous_count();
        return v > 0 && v < size();
    }
    // Cost-sensitive operations need at least one venomous and one harmless class.
    void require_both_statuses(const char* context) const;

    friend bool operator==(const ClassTable&, const ClassTable&) = default;

private:
    std::vector<ClassEntry> entries_;
};

struct ObservationRow {
    std::string observation_id;
    std::size_t image_index = 0;
    std::optional<ClassId> class_id;
    std::string location_code;

    friend bool operator==(const ObservationRow&, const ObservationRow&) = default;
};

struct ObservationGroup {
    std::string observation_id;
    std::vector<std::size_t> rows;  // indices into ObservationTable::rows, file order
};

struct ObservationTable {
    std::vector<ObservationRow> rows;

    // Groups sorted by observation_id.
    std::vector<ObservationGroup> groups() const;
    bool fully_labeled() const noexcept;

    friend bool operator==(const ObservationTable&, const ObservationTable&) = default;
};

struct LocationTable {
    std::map<std::string, std::size_t> entries;  // code -> metadata row

    std::optional<std::size_t> find(const std::string& code) const {
        auto it = entries.find(code);
        if (it == entries.end()) return std::nullopt;
        return it->second;
    }

    friend bool operator==(const LocationTable&, const LocationTable&) = default;
};

enum class ScoreKind { Logits, Probabilities };

// Everything the decision layer consumes for one split.
struct DatasetBundle {
    ClassTable classes;
    ObservationTable observations;
    FeatureMatrix scores;  // one row per image, C columns
    ScoreKind score_kind = ScoreKind::Logits;
    std::optional<FeatureMatrix> embeddings;  // penultimate image features
    FeatureMatrix metadata;                   // one row per location
    LocationTable locations;

    friend bool operator==(const DatasetBundle&, const DatasetBundle&) = default;
};

ClassTable parse_classes_csv(const std::filesystem::path& path);
ObservationTable parse_observations_csv(const std::filesystem::path& path,
                                        const ClassTable& classes, bool allow_unlabeled);
LocationTable parse_locations_csv(const std::filesystem::path& path);

void write_classes_csv(const ClassTable& classes, const std::filesystem::path& path);
void write_observations_csv(const ObservationTable& table,
                            const std::filesystem::path& path);
void write_locations_csv(const LocationTable& table, const std::filesystem::path& path);

enum class ValidationMode { Strict, Drop };

struct DropReport {
    std::size_t dropped_rows = 0;
    std::size_t dropped_locations = 0;
    std::vector<std::string> offenders;  // one description per dropped item
};

struct ValidatedBundle {
    DatasetBundle bundle;
    DropReport report;
};

// Drop mode removes observation rows whose image_index or location_code does
// not resolve (and location entries pointing past the metadata matrix). Strict
// mode throws a Validation error naming the first 10 offenders instead. Shape
// mismatches between the score matrix and the class table fail in both modes.
ValidatedBundle validate_bundle(const DatasetBundle& bundle, ValidationMode mode);

// Bundle directory layout:
//   classes.csv, observations.csv, locations.csv,
//   logits.vgf (or probs.vgf), metadata.vgf, optional embeddings.vgf
namespace bundle_files {
inline constexpr const char* kClasses = "classes.csv";
inline constexpr const char* kObservations = "observations.csv";
inline constexpr const char* kLocations = "locations.csv";
inline constexpr const char* kLogits = "logits.vgf";
inline constexpr const char* kProbs = "probs.vgf";
inline constexpr const char* kMetadata = "metadata.vgf";
inline constexpr const char* kEmbeddings = "embeddings.vgf";
}  // namespace bundle_files

bool is_bundle_dir(const std::filesystem::path& dir);
DatasetBundle load_bundle(const std::filesystem::path& dir, bool allow_unlabeled = true);
void save_bundle(const DatasetBundle& bundle, const std::filesystem::path& dir);

}  // namespace venomguard
