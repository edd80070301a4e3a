#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "vlcabs/errors.hpp"
#include "vlcabs/tensor.hpp"

namespace vlcabs {

// ---------------------------------------------------------------------------
// VLCE container: fixed little-endian layout for bulk float payloads.
//
//   bytes 0..3   magic "VLCE"
//   bytes 4..5   u16 version (currently 1)
//   bytes 6..9   u32 rows
//   bytes 10..13 u32 cols
//   then rows*cols little-endian f32, row-major
//   then per row: u32 byte length + UTF-8 id
// ---------------------------------------------------------------------------

inline constexpr char kContainerMagic[4] = {'V', 'L', 'C', 'E'};
inline constexpr std::uint16_t kContainerVersion = 1;

namespace detail {

inline void put_u16(std::string& buf, std::uint16_t v) {
    buf.push_back(static_cast<char>(v & 0xFF));
    buf.push_back(static_cast<char>((v >> 8) & 0xFF));
}

inline void put_u32(std::string& buf, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) {
        buf.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
    }
}

inline void put_f32(std::string& buf, float f) {
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    put_u32(buf, bits);
}

class ByteReader {
public:
    ByteReader(const std::string& bytes, const std::string& path)
        : bytes_(bytes), path_(path) {}

    std::uint16_t u16() {
        need(2);
        std::uint16_t v = static_cast<std::uint8_t>(bytes_[pos_]) |
                          (static_cast<std::uint8_t>(bytes_[pos_ + 1]) << 8);
        pos_ += 2;
        return v;
    }

    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) {
            v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(bytes_[pos_ + i]))
                 << (8 * i);
        }
        pos_ += 4;
        return v;
    }

    float f32() {
        std::uint32_t bits = u32();
        float f;
        std::memcpy(&f, &bits, 4);
        return f;
    }

    std::string str(std::size_t n) {
        need(n);
        std::string s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    std::size_t remaining() const { return bytes_.size() - pos_; }

private:
    void need(std::size_t n) {
        if (pos_ + n > bytes_.size()) {
            throw TruncatedFileError("truncated container: " + path_);
        }
    }

    const std::string& bytes_;
    std::string path_;
    std::size_t pos_ = 0;
};

inline std::string read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open file: " + path);
    }
    std::string bytes((std::istreambuf_iterator<char>(in)),
                      std::istreambuf_iterator<char>());
    return bytes;
}

// write-temp-then-rename so a crash never leaves a half-written file
inline void write_file_atomic(const std::string& path, const std::string& bytes) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw IoError("cannot open file for writing: " + tmp);
        }
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) {
            throw IoError("write failed: " + tmp);
        }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        throw IoError("rename failed: " + tmp + " -> " + path + " (" + ec.message() + ")");
    }
}

}  // namespace detail

inline void write_container(const std::string& path, const DenseMatrix& embeddings,
                            const std::vector<std::string>& ids) {
    if (ids.size() != embeddings.rows) {
        throw DimensionMismatchError("write_container: ids length " +
                                     std::to_string(ids.size()) + " != rows " +
                                     std::to_string(embeddings.rows));
    }
    for (const auto& id : ids) {
        if (id.empty()) {
            throw ValidationError("write_container: empty id entry");
        }
    }
    check_finite(embeddings, "container payload");

    std::string buf;
    buf.reserve(14 + embeddings.data.size() * 4);
    buf.append(kContainerMagic, 4);
    detail::put_u16(buf, kContainerVersion);
    detail::put_u32(buf, static_cast<std::uint32_t>(embeddings.rows));
    detail::put_u32(buf, static_cast<std::uint32_t>(embeddings.cols));
    for (float f : embeddings.data) {
        detail::put_f32(buf, f);
    }
    for (const auto& id : ids) {
        detail::put_u32(buf, static_cast<std::uint32_t>(id.size()));
        buf.append(id);
    }
    detail::write_file_atomic(path, buf);
}

inline std::pair<DenseMatrix, std::vector<std::string>> read_container(
    const std::string& path) {
    const std::string bytes = detail::read_file_bytes(path);
    detail::ByteReader r(bytes, path);

    const std::string magic = r.str(4);
    if (std::memcmp(magic.data(), kContainerMagic, 4) != 0) {
        throw BadMagicError("bad magic in container: " + path);
    }
    const std::uint16_t version = r.u16();
    if (version != kContainerVersion) {
        throw VersionUnsupportedError("unsupported container version " +
                                      std::to_string(version) + ": " + path);
    }
    const std::uint32_t rows = r.u32();
    const std::uint32_t cols = r.u32();

    DenseMatrix m(rows, cols);
    for (std::size_t i = 0; i < m.data.size(); ++i) {
        m.data[i] = r.f32();
    }
    std::vector<std::string> ids(rows);
    for (std::uint32_t i = 0; i < rows; ++i) {
        const std::uint32_t len = r.u32();
        ids[i] = r.str(len);
    }
    for (float f : m.data) {
        if (!std::isfinite(f)) {
            throw CorruptDataError("non-finite value in container: " + path);
        }
    }
    return {std::move(m), std::move(ids)};
}

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

// Image preprocessing geometry: the original frame was padded on each side,
// then the padded frame was resized to a model_input_size square.
struct GeometryMeta {
    std::size_t original_height = 0;
    std::size_t original_width = 0;
    std::size_t pad_top = 0;
    std::size_t pad_bottom = 0;
    std::size_t pad_left = 0;
    std::size_t pad_right = 0;
    std::size_t model_input_size = 0;

    std::size_t padded_height() const { return original_height + pad_top + pad_bottom; }
    std::size_t padded_width() const { return original_width + pad_left + pad_right; }

    void validate() const {
        if (original_height == 0 || original_width == 0) {
            throw GeometryMismatchError("geometry: original dims must be positive");
        }
        if (model_input_size == 0) {
            throw GeometryMismatchError("geometry: model_input_size must be positive");
        }
    }
};

// One image: CLS embedding (token 0) plus L patch embeddings.
struct PatchEmbeddingSet {
    std::string image_id;
    std::vector<float> cls_embedding;
    DenseMatrix patch_embeddings;  // L x D
    std::size_t grid_side = 0;     // sqrt(L)
    GeometryMeta geometry;

    std::size_t patch_count() const { return patch_embeddings.rows; }
    std::size_t dim() const { return patch_embeddings.cols; }

    // tokens() lays the set out as the (L+1) x D matrix the attention and
    // head code consume: row 0 = CLS, rows 1..L = patches.
    DenseMatrix tokens() const {
        DenseMatrix t(patch_embeddings.rows + 1, patch_embeddings.cols);
        std::copy(cls_embedding.begin(), cls_embedding.end(), t.row(0).begin());
        std::copy(patch_embeddings.data.begin(), patch_embeddings.data.end(),
                  t.data.begin() + static_cast<std::ptrdiff_t>(t.cols));
        return t;
    }

    void validate() const {
        if (cls_embedding.size() != patch_embeddings.cols) {
            throw DimensionMismatchError("patch set: CLS dim != patch dim");
        }
        if (grid_side * grid_side != patch_embeddings.rows) {
            throw GeometryMismatchError("patch set: grid_side^2 != patch count");
        }
        geometry.validate();
        check_finite(std::span<const float>(cls_embedding), "CLS embedding");
        check_finite(patch_embeddings, "patch embeddings");
    }
};

struct SentenceEmbedding {
    std::string sentence_id;
    std::string text;
    std::vector<float> embedding;

    void validate() const {
        if (text.empty()) {
            throw ValidationError("sentence " + sentence_id + ": empty text");
        }
        check_finite(std::span<const float>(embedding), "sentence embedding");
    }
};

// B images, each with its own positive sentences. `sentences` is flat with
// one entry per (image, positive) pair, so N_T == sum of positives sizes;
// a sentence shared by two images appears twice. owner[q] names the image
// a flat sentence belongs to.
struct PairedBatch {
    std::vector<PatchEmbeddingSet> images;
    std::vector<SentenceEmbedding> sentences;
    std::vector<std::vector<std::size_t>> positives;  // per image, flat indices
    std::vector<std::size_t> owner;                   // per flat sentence

    std::size_t batch_size() const { return images.size(); }
    std::size_t total_sentences() const { return sentences.size(); }

    void validate() const {
        if (positives.size() != images.size()) {
            throw DimensionMismatchError("batch: positives size != image count");
        }
        std::size_t counted = 0;
        for (std::size_t i = 0; i < positives.size(); ++i) {
            if (positives[i].empty()) {
                throw EmptyPositivesError("batch: image " + images[i].image_id +
                                          " has no positive sentences");
            }
            for (std::size_t q : positives[i]) {
                if (q >= sentences.size()) {
                    throw DimensionMismatchError("batch: sentence index out of range");
                }
                if (owner.size() != sentences.size() || owner[q] != i) {
                    throw DimensionMismatchError("batch: owner table inconsistent");
                }
            }
            counted += positives[i].size();
        }
        if (counted != sentences.size()) {
            throw DimensionMismatchError("batch: N_T != sum of positives");
        }
    }
};

// ---------------------------------------------------------------------------
// Manifest: human-readable JSON index over the binary containers.
// ---------------------------------------------------------------------------

struct ManifestEntry {
    std::string image_id;
    std::string image_container;  // path, relative to the manifest file
    std::vector<std::string> sentence_ids;
    GeometryMeta geometry;
    std::string view;  // optional free-form tag, no semantics
};

struct Manifest {
    int version = 1;
    std::size_t embedding_dim = 0;
    std::string sentence_container;
    std::vector<std::pair<std::string, std::string>> sentence_texts;  // id, text
    std::vector<ManifestEntry> entries;
    std::string base_dir;  // directory of the manifest file; resolves paths

    std::string resolve(const std::string& path) const {
        std::filesystem::path p(path);
        if (p.is_absolute() || base_dir.empty()) return path;
        return (std::filesystem::path(base_dir) / p).string();
    }

    const ManifestEntry& find_entry(const std::string& image_id) const {
        for (const auto& e : entries) {
            if (e.image_id == image_id) return e;
        }
        throw UnknownIdError("unknown image id: " + image_id);
    }

    double average_positives_per_image() const {
        if (entries.empty()) return 0.0;
        std::size_t total = 0;
        for (const auto& e : entries) total += e.sentence_ids.size();
        return static_cast<double>(total) / static_cast<double>(entries.size());
    }
};

namespace detail {

inline GeometryMeta geometry_from_json(const nlohmann::json& j) {
    GeometryMeta g;
    g.original_height = j.at("original_height").get<std::size_t>();
    g.original_width = j.at("original_width").get<std::size_t>();
    g.pad_top = j.value("pad_top", 0u);
    g.pad_bottom = j.value("pad_bottom", 0u);
    g.pad_left = j.value("pad_left", 0u);
    g.pad_right = j.value("pad_right", 0u);
    g.model_input_size = j.at("model_input_size").get<std::size_t>();
    g.validate();
    return g;
}

inline nlohmann::json geometry_to_json(const GeometryMeta& g) {
    return nlohmann::json{
        {"original_height", g.original_height},
        {"original_width", g.original_width},
        {"pad_top", g.pad_top},
        {"pad_bottom", g.pad_bottom},
        {"pad_left", g.pad_left},
        {"pad_right", g.pad_right},
        {"model_input_size", g.model_input_size},
    };
}

}  // namespace detail

inline Manifest read_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open manifest: " + path);
    }
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw CorruptDataError("manifest parse error: " + path + ": " + e.what());
    }
    try {
        Manifest m;
        m.version = j.at("version").get<int>();
        if (m.version != 1) {
            throw VersionUnsupportedError("unsupported manifest version " +
                                          std::to_string(m.version));
        }
        m.embedding_dim = j.at("embedding_dim").get<std::size_t>();
        m.sentence_container = j.at("sentence_container").get<std::string>();
        for (const auto& s : j.at("sentences")) {
            m.sentence_texts.emplace_back(s.at("id").get<std::string>(),
                                          s.at("text").get<std::string>());
        }
        for (const auto& e : j.at("entries")) {
            ManifestEntry entry;
            entry.image_id = e.at("image_id").get<std::string>();
            entry.image_container = e.at("image_container").get<std::string>();
            for (const auto& sid : e.at("sentence_ids")) {
                entry.sentence_ids.push_back(sid.get<std::string>());
            }
            entry.geometry = detail::geometry_from_json(e.at("geometry"));
            entry.view = e.value("view", "");
            m.entries.push_back(std::move(entry));
        }
        m.base_dir = std::filesystem::path(path).parent_path().string();
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw CorruptDataError("manifest schema error: " + path + ": " + e.what());
    }
}

inline void write_manifest(const std::string& path, const Manifest& m) {
    nlohmann::json j;
    j["version"] = m.version;
    j["embedding_dim"] = m.embedding_dim;
    j["sentence_container"] = m.sentence_container;
    nlohmann::json sentences = nlohmann::json::array();
    for (const auto& [id, text] : m.sentence_texts) {
        sentences.push_back({{"id", id}, {"text", text}});
    }
    j["sentences"] = std::move(sentences);
    nlohmann::json entries = nlohmann::json::array();
    for (const auto& e : m.entries) {
        nlohmann::json je{
            {"image_id", e.image_id},
            {"image_container", e.image_container},
            {"sentence_ids", e.sentence_ids},
            {"geometry", detail::geometry_to_json(e.geometry)},
        };
        if (!e.view.empty()) je["view"] = e.view;
        entries.push_back(std::move(je));
    }
    j["entries"] = std::move(entries);
    detail::write_file_atomic(path, j.dump(2) + "\n");
}

// Loads the patch set for one manifest entry. Container row 0 is CLS,
// rows 1..L are patches; L must be a perfect square.
inline PatchEmbeddingSet load_patch_set(const Manifest& manifest,
                                        const ManifestEntry& entry) {
    auto [mat, ids] = read_container(manifest.resolve(entry.image_container));
    if (mat.rows < 2) {
        throw CorruptDataError("image container " + entry.image_container +
                               " must hold CLS plus at least one patch row");
    }
    if (mat.cols != manifest.embedding_dim) {
        throw DimensionMismatchError(
            "image container " + entry.image_container + " dim " +
            std::to_string(mat.cols) + " != manifest embedding_dim " +
            std::to_string(manifest.embedding_dim));
    }
    PatchEmbeddingSet set;
    set.image_id = entry.image_id;
    set.geometry = entry.geometry;
    const std::size_t patches = mat.rows - 1;
    const auto side = static_cast<std::size_t>(std::llround(std::sqrt(
        static_cast<double>(patches))));
    if (side * side != patches) {
        throw GeometryMismatchError("image container " + entry.image_container +
                                    ": patch count " + std::to_string(patches) +
                                    " is not a perfect square");
    }
    set.grid_side = side;
    set.cls_embedding.assign(mat.row(0).begin(), mat.row(0).end());
    set.patch_embeddings = DenseMatrix(patches, mat.cols);
    std::copy(mat.data.begin() + static_cast<std::ptrdiff_t>(mat.cols),
              mat.data.end(), set.patch_embeddings.data.begin());
    set.validate();
    return set;
}

// Loads the sentence container into id -> embedding form.
struct SentenceTable {
    std::unordered_map<std::string, std::size_t> index;
    DenseMatrix embeddings;
    std::vector<std::string> ids;
    std::unordered_map<std::string, std::string> texts;
};

inline SentenceTable load_sentence_table(const Manifest& manifest) {
    SentenceTable table;
    auto [mat, ids] = read_container(manifest.resolve(manifest.sentence_container));
    if (mat.cols != manifest.embedding_dim) {
        throw DimensionMismatchError("sentence container dim " +
                                     std::to_string(mat.cols) +
                                     " != manifest embedding_dim " +
                                     std::to_string(manifest.embedding_dim));
    }
    table.embeddings = std::move(mat);
    table.ids = std::move(ids);
    for (std::size_t i = 0; i < table.ids.size(); ++i) {
        table.index[table.ids[i]] = i;
    }
    for (const auto& [id, text] : manifest.sentence_texts) {
        table.texts[id] = text;
    }
    return table;
}

inline SentenceEmbedding sentence_from_table(const SentenceTable& table,
                                             const std::string& sentence_id) {
    auto it = table.index.find(sentence_id);
    if (it == table.index.end()) {
        throw UnknownIdError("unknown sentence id: " + sentence_id);
    }
    SentenceEmbedding s;
    s.sentence_id = sentence_id;
    auto text_it = table.texts.find(sentence_id);
    s.text = text_it != table.texts.end() ? text_it->second : sentence_id;
    auto row = table.embeddings.row(it->second);
    s.embedding.assign(row.begin(), row.end());
    s.validate();
    return s;
}

// Builds the PairedBatch for the given image ids. Mirrors the corpus rule
// that a study with no finding-sentences is rejected rather than carried
// as an unsupervisable example.
inline PairedBatch load_batch(const Manifest& manifest,
                              const std::vector<std::string>& image_ids) {
    PairedBatch batch;
    const SentenceTable table = load_sentence_table(manifest);
    for (const auto& image_id : image_ids) {
        const ManifestEntry& entry = manifest.find_entry(image_id);
        if (entry.sentence_ids.empty()) {
            throw EmptyPositivesError("image " + image_id +
                                      " has no finding-sentences");
        }
        const std::size_t image_index = batch.images.size();
        batch.images.push_back(load_patch_set(manifest, entry));
        std::vector<std::size_t> pos;
        for (const auto& sid : entry.sentence_ids) {
            pos.push_back(batch.sentences.size());
            batch.sentences.push_back(sentence_from_table(table, sid));
            batch.owner.push_back(image_index);
        }
        batch.positives.push_back(std::move(pos));
    }
    batch.validate();
    return batch;
}

// Full manifest check: every referenced container exists, parses, and has
// the dims the manifest promises.
inline void validate_manifest(const Manifest& manifest) {
    const SentenceTable table = load_sentence_table(manifest);
    for (const auto& entry : manifest.entries) {
        load_patch_set(manifest, entry);
        for (const auto& sid : entry.sentence_ids) {
            if (!table.index.contains(sid)) {
                throw UnknownIdError("manifest entry " + entry.image_id +
                                     " references unknown sentence id " + sid);
            }
        }
    }
}

}  // namespace vlcabs
