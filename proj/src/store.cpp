#include "fmsr/store.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "fmsr/errors.hpp"
#include "fmsr/hash.hpp"

namespace fmsr {

namespace fs = std::filesystem;

static_assert(std::endian::native == std::endian::little, "blob IO assumes a little-endian host");

namespace {

fs::path with_ext(const fs::path& prefix, const char* ext) {
    fs::path p = prefix;
    p += ext;
    return p;
}

std::string blob_hash(std::span<const float> blob) { return sha256_hex(std::as_bytes(blob)); }

nlohmann::json channel_json(const ChannelCatalog& cat) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& ch : cat.entries()) {
        if (ch.level_hpa) out.push_back({{"variable", ch.variable}, {"level", *ch.level_hpa}});
        else out.push_back({{"variable", ch.variable}, {"level", "surface"}});
    }
    return out;
}

CatalogPtr catalog_from_json(const nlohmann::json& j) {
    std::vector<Channel> entries;
    for (const auto& e : j) {
        Channel ch{e.at("variable").get<std::string>(), std::nullopt};
        if (!e.at("level").is_string()) ch.level_hpa = e.at("level").get<int>();
        entries.push_back(std::move(ch));
    }
    return std::make_shared<const ChannelCatalog>(std::move(entries));
}

}  // namespace

void write_record(const fs::path& prefix, nlohmann::json header, std::span<const float> blob) {
    if (!header.contains("kind")) throw ValidationError("write_record: header has no kind");
    header["schema_version"] = kSchemaVersion;
    header["dtype"] = "float32";
    header["endianness"] = "little";
    header["blob_bytes"] = blob.size() * sizeof(float);
    header["content_hash"] = blob_hash(blob);
    if (prefix.has_parent_path()) fs::create_directories(prefix.parent_path());

    const fs::path bin = with_ext(prefix, ".bin");
    {
        std::ofstream out(bin, std::ios::binary | std::ios::trunc);
        if (!out) throw ValidationError("cannot open " + bin.string() + " for writing");
        out.write(reinterpret_cast<const char*>(blob.data()), static_cast<std::streamsize>(blob.size_bytes()));
        if (!out) throw ValidationError("write failed: " + bin.string());
    }
    const fs::path js = with_ext(prefix, ".json");
    std::ofstream out(js, std::ios::trunc);
    if (!out) throw ValidationError("cannot open " + js.string() + " for writing");
    out << header.dump(2) << '\n';
}

nlohmann::json read_header(const fs::path& prefix) {
    const fs::path js = with_ext(prefix, ".json");
    std::ifstream hin(js);
    if (!hin) throw ValidationError("missing record header " + js.string());
    auto h = nlohmann::json::parse(hin, nullptr, false);
    if (h.is_discarded() || !h.is_object()) throw ValidationError(js.string() + ": unreadable record header");
    return h;
}

Record read_record(const fs::path& prefix, const std::string& expected_kind) {
    const fs::path js = with_ext(prefix, ".json");
    const fs::path bin = with_ext(prefix, ".bin");
    std::ifstream hin(js);
    if (!hin) throw ValidationError("missing record header " + js.string());
    Record rec;
    try {
        rec.header = nlohmann::json::parse(hin);
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(js.string() + ": malformed JSON: " + e.what());
    }
    const auto& h = rec.header;
    const int version = h.value("schema_version", -1);
    if (version != kSchemaVersion) {
        throw ValidationError(js.string() + ": schema version " + std::to_string(version) + ", expected " +
                              std::to_string(kSchemaVersion) + "; regenerate the file with this build");
    }
    if (h.value("kind", "") != expected_kind) {
        throw ValidationError(js.string() + ": record kind '" + h.value("kind", "") + "', expected '" +
                              expected_kind + "'");
    }
    if (h.value("dtype", "") != "float32" || h.value("endianness", "") != "little") {
        throw ValidationError(js.string() + ": only little-endian float32 blobs are supported");
    }
    std::ifstream bin_in(bin, std::ios::binary | std::ios::ate);
    if (!bin_in) throw ValidationError("missing record blob " + bin.string());
    const auto bytes = static_cast<std::size_t>(bin_in.tellg());
    const auto declared = h.value("blob_bytes", std::size_t{0});
    if (bytes != declared || bytes % sizeof(float) != 0) {
        throw ValidationError(bin.string() + ": blob is " + std::to_string(bytes) + " bytes, header declares " +
                              std::to_string(declared));
    }
    rec.blob.resize(bytes / sizeof(float));
    bin_in.seekg(0);
    bin_in.read(reinterpret_cast<char*>(rec.blob.data()), static_cast<std::streamsize>(bytes));
    if (!bin_in) throw ValidationError("read failed: " + bin.string());
    if (blob_hash(rec.blob) != h.value("content_hash", "")) {
        throw ValidationError(bin.string() + ": content hash mismatch (file corrupted or header/blob out of sync)");
    }
    return rec;
}

void write_fields(const fs::path& prefix, const FieldBatch& batch) {
    if (batch.fields.empty()) throw ValidationError("write_fields: no fields to write");
    const Field& first = batch.fields.front();
    nlohmann::json timestamps = nlohmann::json::array();
    std::vector<float> blob;
    blob.reserve(batch.fields.size() * first.values().size());
    for (const auto& f : batch.fields) {
        require_same_layout(first, f, "write_fields");
        for (double v : f.values()) blob.push_back(static_cast<float>(v));
        if (f.timestamp()) timestamps.push_back(*f.timestamp());
        else timestamps.push_back(nullptr);
    }
    nlohmann::json header = {
        {"kind", "fields"},
        {"grid", {{"n_lat", first.n_lat()}, {"n_lon", first.n_lon()}}},
        {"channels", channel_json(first.catalog())},
        {"catalog_hash", first.catalog().hash()},
        {"dims", {batch.fields.size(), first.n_channels(), first.n_lat(), first.n_lon()}},
        {"timestamps", std::move(timestamps)},
        {"metadata", batch.metadata},
    };
    write_record(prefix, std::move(header), blob);
}

FieldBatch read_fields(const fs::path& prefix) {
    Record rec = read_record(prefix, "fields");
    const auto& h = rec.header;
    FieldBatch out;
    try {
        const auto dims = h.at("dims").get<std::vector<std::size_t>>();
        if (dims.size() != 4) throw ValidationError("dims must have 4 entries");
        auto grid = make_grid_ptr(h.at("grid").at("n_lat").get<std::size_t>(),
                                  h.at("grid").at("n_lon").get<std::size_t>());
        auto cat = catalog_from_json(h.at("channels"));
        if (cat->hash() != h.at("catalog_hash").get<std::string>()) {
            throw ValidationError("channel list does not match catalog_hash");
        }
        if (dims[1] != cat->size() || dims[2] != grid->n_lat() || dims[3] != grid->n_lon()) {
            throw ValidationError("dims do not match grid and channels");
        }
        const std::size_t per = dims[1] * dims[2] * dims[3];
        if (rec.blob.size() != dims[0] * per) throw ValidationError("blob length does not match dims");
        const auto& ts = h.at("timestamps");
        if (ts.size() != dims[0]) throw ValidationError("timestamps length does not match dims");
        out.fields.reserve(dims[0]);
        for (std::size_t t = 0; t < dims[0]; ++t) {
            std::vector<double> v(rec.blob.begin() + t * per, rec.blob.begin() + (t + 1) * per);
            std::optional<std::int64_t> stamp;
            if (!ts[t].is_null()) stamp = ts[t].get<std::int64_t>();
            out.fields.emplace_back(grid, cat, std::move(v), stamp);
        }
        out.metadata = h.value("metadata", nlohmann::json::object());
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(prefix.string() + ".json: " + e.what());
    } catch (const ValidationError& e) {
        throw ValidationError(prefix.string() + ".json: " + e.what());
    }
    return out;
}

void write_ensembles(const fs::path& prefix, std::span<const EnsembleSet> sets, nlohmann::json metadata) {
    if (sets.empty()) throw ValidationError("write_ensembles: no ensembles");
    FieldBatch batch;
    nlohmann::json inits = nlohmann::json::array();
    const std::size_t m = sets.front().size();
    const std::size_t t = sets.front().n_leads();
    for (const auto& s : sets) {
        s.validate();
        if (s.size() != m || s.n_leads() != t) {
            throw ValidationError("write_ensembles: all ensembles must share member count and length");
        }
        inits.push_back(s.members.front().init_time);
        for (const auto& mem : s.members) {
            for (const auto& st : mem.states) batch.fields.push_back(st);
        }
    }
    metadata["ensemble"] = {{"n_init", sets.size()},
                            {"n_members", m},
                            {"n_leads", t},
                            {"lead_step_hours", sets.front().members.front().lead_step_hours},
                            {"init_times", std::move(inits)}};
    batch.metadata = std::move(metadata);
    write_fields(prefix, batch);
}

std::vector<EnsembleSet> read_ensembles(const fs::path& prefix) {
    FieldBatch batch = read_fields(prefix);
    if (!batch.metadata.contains("ensemble")) {
        throw ValidationError(prefix.string() + ".json: not an ensemble dataset (metadata.ensemble missing)");
    }
    const auto& e = batch.metadata["ensemble"];
    const auto n_init = e.at("n_init").get<std::size_t>();
    const auto m = e.at("n_members").get<std::size_t>();
    const auto t = e.at("n_leads").get<std::size_t>();
    const auto step = e.at("lead_step_hours").get<int>();
    const auto inits = e.at("init_times").get<std::vector<std::int64_t>>();
    if (batch.fields.size() != n_init * m * t || inits.size() != n_init) {
        throw ValidationError(prefix.string() + ".json: ensemble shape does not match the stored fields");
    }
    std::vector<EnsembleSet> out(n_init);
    std::size_t idx = 0;
    for (std::size_t i = 0; i < n_init; ++i) {
        out[i].members.resize(m);
        for (auto& mem : out[i].members) {
            mem.init_time = inits[i];
            mem.lead_step_hours = step;
            for (std::size_t l = 0; l < t; ++l) mem.states.push_back(std::move(batch.fields[idx++]));
        }
    }
    return out;
}

FieldStore::FieldStore(fs::path dir) : dir_(std::move(dir)) { fs::create_directories(dir_); }

bool FieldStore::contains(const std::string& name) const {
    return fs::exists(with_ext(prefix(name), ".json")) && fs::exists(with_ext(prefix(name), ".bin"));
}

void FieldStore::check_catalog(const std::string& name, const std::string& hash) const {
    for (const auto& entry : fs::directory_iterator(dir_)) {
        if (entry.path().extension() != ".json" || entry.path().stem() == name) continue;
        std::ifstream in(entry.path());
        nlohmann::json h = nlohmann::json::parse(in, nullptr, false);
        if (h.is_discarded() || h.value("kind", "") != "fields") continue;
        if (h.value("catalog_hash", hash) != hash) {
            throw ValidationError("store " + dir_.string() + ": record " + name +
                                  " uses a different channel catalog than " + entry.path().filename().string());
        }
    }
}

void FieldStore::put(const std::string& name, const FieldBatch& batch) {
    if (batch.fields.empty()) throw ValidationError("FieldStore::put: empty batch");
    check_catalog(name, batch.fields.front().catalog().hash());
    write_fields(prefix(name), batch);
}

FieldBatch FieldStore::get(const std::string& name) const {
    if (!contains(name)) throw ValidationError("store " + dir_.string() + " has no record '" + name + "'");
    return read_fields(prefix(name));
}

void FieldStore::put_ensembles(const std::string& name, std::span<const EnsembleSet> sets, nlohmann::json metadata) {
    if (sets.empty()) throw ValidationError("FieldStore::put_ensembles: empty");
    check_catalog(name, sets.front().members.front().states.front().catalog().hash());
    write_ensembles(prefix(name), sets, std::move(metadata));
}

bool FieldStore::is_ensemble(const std::string& name) const {
    if (!contains(name)) throw ValidationError("store " + dir_.string() + " has no record '" + name + "'");
    const auto h = read_header(prefix(name));
    return h.contains("metadata") && h["metadata"].contains("ensemble");
}

std::vector<EnsembleSet> FieldStore::get_ensembles(const std::string& name) const {
    if (!contains(name)) throw ValidationError("store " + dir_.string() + " has no record '" + name + "'");
    return read_ensembles(prefix(name));
}

}  // namespace fmsr
