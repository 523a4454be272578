#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fmsr/grid.hpp"

namespace fmsr {

inline constexpr int kSchemaVersion = 1;

/// A header + float32 blob pair as read from disk.
struct Record {
    nlohmann::json header;
    std::vector<float> blob;
};

/// Writes `<prefix>.json` and `<prefix>.bin`. Adds schema_version, dtype,
/// endianness, blob_bytes and content_hash (SHA-256 of the blob) to the header.
/// `header["kind"]` must be set.
void write_record(const std::filesystem::path& prefix, nlohmann::json header, std::span<const float> blob);

/// Reads and verifies a record: schema version, kind, blob length and hash.
/// Every failure is a ValidationError naming the file.
Record read_record(const std::filesystem::path& prefix, const std::string& expected_kind);

/// Parsed record header without touching the blob. Throws ValidationError
/// when the header is missing or unreadable.
nlohmann::json read_header(const std::filesystem::path& prefix);

/// Stack of same-layout fields, dims [time, channel, lat, lon].
struct FieldBatch {
    std::vector<Field> fields;
    nlohmann::json metadata = nlohmann::json::object();
};

void write_fields(const std::filesystem::path& prefix, const FieldBatch& batch);
FieldBatch read_fields(const std::filesystem::path& prefix);

/// Ensembles are flattened in (init, member, lead) order; the shape goes
/// into metadata["ensemble"].
void write_ensembles(const std::filesystem::path& prefix, std::span<const EnsembleSet> sets,
                     nlohmann::json metadata = nlohmann::json::object());
std::vector<EnsembleSet> read_ensembles(const std::filesystem::path& prefix);

/// Directory of records that must all share one channel catalog.
class FieldStore {
public:
    explicit FieldStore(std::filesystem::path dir);

    const std::filesystem::path& dir() const { return dir_; }
    std::filesystem::path prefix(const std::string& name) const { return dir_ / name; }
    bool contains(const std::string& name) const;
    /// True for records written by put_ensembles.
    bool is_ensemble(const std::string& name) const;

    void put(const std::string& name, const FieldBatch& batch);
    FieldBatch get(const std::string& name) const;
    void put_ensembles(const std::string& name, std::span<const EnsembleSet> sets,
                       nlohmann::json metadata = nlohmann::json::object());
    std::vector<EnsembleSet> get_ensembles(const std::string& name) const;

private:
    void check_catalog(const std::string& name, const std::string& hash) const;

    std::filesystem::path dir_;
};

}  // namespace fmsr
