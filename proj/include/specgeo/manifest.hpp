#pragma once

// Model manifests: JSON documents describing one model export.
//
// {
//   "model_id": "gemma-2-2b",
//   "hidden_dim": 2304,
//   "vocab_size": 256000,
//   "token_table": [[0, "<pad>"], [1, "hello"], ...],
//   "word_tokens": {"walk": [4], "walked": [4, 9]},          (optional)
//   "concepts": [{"concept_id": "verb-Ved", "category": "verb_morphology",
//                 "pairs": [["walk", "walked"], ...]}],
//   "file_refs": {"unembedding": "wu.sgt", "sigma": "sigma.sgt", ...},
//   "pooling": "mean",                                        (optional)
//   "extraction_point": "final layer, after norm"             (optional)
// }
//
// Relative file_refs resolve against the manifest's directory. Known roles
// are shape-checked on load:
//   unembedding              [vocab_size, hidden_dim]
//   sigma, sigma_*           [hidden_dim, hidden_dim]
//   anchors_*, concept_*, concepts_*, acts_*, activations*, sae_decoder
//                            [*, hidden_dim]

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "specgeo/error.hpp"
#include "specgeo/tensor.hpp"

namespace specgeo {

using json = nlohmann::ordered_json;

enum class ConceptCategory { verb_morphology, semantic, grammatical, language_pair };

inline std::string to_string(ConceptCategory c) {
    switch (c) {
    case ConceptCategory::verb_morphology: return "verb_morphology";
    case ConceptCategory::semantic: return "semantic";
    case ConceptCategory::grammatical: return "grammatical";
    case ConceptCategory::language_pair: return "language_pair";
    }
    return "semantic";
}

inline ConceptCategory parse_category(const std::string& s) {
    if (s == "verb_morphology") return ConceptCategory::verb_morphology;
    if (s == "semantic") return ConceptCategory::semantic;
    if (s == "grammatical") return ConceptCategory::grammatical;
    if (s == "language_pair") return ConceptCategory::language_pair;
    fail(Errc::schema, "unknown concept category '" + s + "'");
}

struct ConceptSpec {
    std::string concept_id;
    ConceptCategory category = ConceptCategory::semantic;
    std::vector<std::pair<std::string, std::string>> pairs;
};

struct TokenEntry {
    std::int64_t id = 0;
    std::string token;
};

struct Manifest {
    std::string model_id;
    std::size_t hidden_dim = 0;
    std::size_t vocab_size = 0;
    std::vector<TokenEntry> token_table;
    std::map<std::string, std::vector<std::int64_t>> word_tokens;
    std::vector<ConceptSpec> concepts;
    std::map<std::string, std::filesystem::path> file_refs;  // resolved paths
    std::string pooling;
    std::string extraction_point;
    std::filesystem::path base_dir;

    bool has_ref(const std::string& role) const { return file_refs.count(role) != 0; }

    const std::filesystem::path& ref(const std::string& role) const {
        auto it = file_refs.find(role);
        if (it == file_refs.end()) fail(Errc::dangling_ref, "manifest has no file_ref '" + role + "'");
        return it->second;
    }

    Matrix load(const std::string& role) const { return load_matrix(ref(role)); }
};

namespace detail {

inline bool starts_with(const std::string& s, const char* prefix) { return s.rfind(prefix, 0) == 0; }

inline void check_role_dims(const Manifest& m, const std::string& role, const std::vector<std::uint64_t>& dims) {
    const auto where = " (file_ref '" + role + "')";
    if (role == "unembedding") {
        if (dims.size() != 2) fail(Errc::schema, "unembedding must be 2-D" + where);
        if (dims[1] != m.hidden_dim) fail(Errc::hidden_dim_mismatch, "hidden_dim does not match unembedding columns" + where);
        if (dims[0] != m.vocab_size) fail(Errc::dimension_mismatch, "vocab_size does not match unembedding rows" + where);
        return;
    }
    if (role == "sigma" || starts_with(role, "sigma_")) {
        if (dims.size() != 2 || dims[0] != dims[1]) fail(Errc::schema, "covariance must be square" + where);
        if (dims[1] != m.hidden_dim) fail(Errc::hidden_dim_mismatch, "hidden_dim does not match covariance" + where);
        return;
    }
    if (starts_with(role, "anchors") || starts_with(role, "concept") || starts_with(role, "acts") ||
        starts_with(role, "activations") || role == "sae_decoder") {
        if (dims.size() != 2) fail(Errc::schema, "expected a 2-D tensor" + where);
        if (dims[1] != m.hidden_dim) fail(Errc::hidden_dim_mismatch, "hidden_dim does not match tensor columns" + where);
    }
}

template <class T>
T get_field(const json& j, const char* key) {
    if (!j.contains(key)) fail(Errc::schema, std::string("manifest missing field '") + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        fail(Errc::schema, std::string("manifest field '") + key + "': " + e.what());
    }
}

} // namespace detail

inline Manifest parse_manifest(const json& j, const std::filesystem::path& base_dir) {
    if (!j.is_object()) fail(Errc::schema, "manifest must be a JSON object");
    Manifest m;
    m.base_dir = base_dir;
    m.model_id = detail::get_field<std::string>(j, "model_id");
    const auto hidden = detail::get_field<std::int64_t>(j, "hidden_dim");
    const auto vocab = detail::get_field<std::int64_t>(j, "vocab_size");
    if (hidden <= 0) fail(Errc::schema, "hidden_dim must be positive");
    if (vocab <= 0) fail(Errc::schema, "vocab_size must be positive");
    m.hidden_dim = static_cast<std::size_t>(hidden);
    m.vocab_size = static_cast<std::size_t>(vocab);

    const auto& table = detail::get_field<json>(j, "token_table");
    if (!table.is_array()) fail(Errc::schema, "token_table must be an array");
    for (const auto& entry : table) {
        if (!entry.is_array() || entry.size() != 2 || !entry[0].is_number_integer() || !entry[1].is_string())
            fail(Errc::schema, "token_table entries must be [id, \"token\"]");
        TokenEntry t{entry[0].get<std::int64_t>(), entry[1].get<std::string>()};
        if (t.id < 0 || static_cast<std::size_t>(t.id) >= m.vocab_size) fail(Errc::schema, "token id out of range");
        m.token_table.push_back(std::move(t));
    }

    if (j.contains("word_tokens")) {
        const auto& wt = j.at("word_tokens");
        if (!wt.is_object()) fail(Errc::schema, "word_tokens must be an object");
        for (const auto& [word, ids] : wt.items()) {
            if (!ids.is_array()) fail(Errc::schema, "word_tokens values must be id arrays");
            std::vector<std::int64_t> list;
            for (const auto& id : ids) {
                if (!id.is_number_integer()) fail(Errc::schema, "word_tokens ids must be integers");
                const auto v = id.get<std::int64_t>();
                if (v < 0 || static_cast<std::size_t>(v) >= m.vocab_size) fail(Errc::schema, "word token id out of range");
                list.push_back(v);
            }
            m.word_tokens.emplace(word, std::move(list));
        }
    }

    const auto& concepts = detail::get_field<json>(j, "concepts");
    if (!concepts.is_array()) fail(Errc::schema, "concepts must be an array");
    for (const auto& c : concepts) {
        ConceptSpec spec;
        spec.concept_id = detail::get_field<std::string>(c, "concept_id");
        spec.category = parse_category(detail::get_field<std::string>(c, "category"));
        const auto& pairs = detail::get_field<json>(c, "pairs");
        if (!pairs.is_array() || pairs.empty()) fail(Errc::schema, "concept '" + spec.concept_id + "' needs at least one pair");
        for (const auto& p : pairs) {
            if (!p.is_array() || p.size() != 2 || !p[0].is_string() || !p[1].is_string())
                fail(Errc::schema, "concept pairs must be [\"positive\", \"negative\"]");
            spec.pairs.emplace_back(p[0].get<std::string>(), p[1].get<std::string>());
        }
        m.concepts.push_back(std::move(spec));
    }

    const auto& refs = detail::get_field<json>(j, "file_refs");
    if (!refs.is_object()) fail(Errc::schema, "file_refs must be an object");
    for (const auto& [role, path] : refs.items()) {
        if (!path.is_string()) fail(Errc::schema, "file_refs values must be path strings");
        std::filesystem::path p = path.get<std::string>();
        if (p.is_relative()) p = base_dir / p;
        if (!std::filesystem::exists(p)) fail(Errc::dangling_ref, "file_ref '" + role + "' points to missing " + p.string());
        detail::check_role_dims(m, role, read_tensor_dims(p));
        m.file_refs.emplace(role, std::move(p));
    }

    if (j.contains("pooling")) m.pooling = detail::get_field<std::string>(j, "pooling");
    if (j.contains("extraction_point")) m.extraction_point = detail::get_field<std::string>(j, "extraction_point");
    return m;
}

inline Manifest load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(Errc::io, "cannot open manifest " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        fail(Errc::schema, "manifest is not valid JSON: " + std::string(e.what()));
    }
    return parse_manifest(j, path.parent_path());
}

/// JSON form with file_refs written relative to `base_dir` where possible.
inline json manifest_to_json(const Manifest& m, const std::filesystem::path& base_dir) {
    json j;
    j["model_id"] = m.model_id;
    j["hidden_dim"] = m.hidden_dim;
    j["vocab_size"] = m.vocab_size;
    j["token_table"] = json::array();
    for (const auto& t : m.token_table) j["token_table"].push_back(json::array({t.id, t.token}));
    if (!m.word_tokens.empty()) {
        j["word_tokens"] = json::object();
        for (const auto& [w, ids] : m.word_tokens) j["word_tokens"][w] = ids;
    }
    j["concepts"] = json::array();
    for (const auto& c : m.concepts) {
        json pairs = json::array();
        for (const auto& [a, b] : c.pairs) pairs.push_back(json::array({a, b}));
        j["concepts"].push_back({{"concept_id", c.concept_id}, {"category", to_string(c.category)}, {"pairs", pairs}});
    }
    j["file_refs"] = json::object();
    for (const auto& [role, p] : m.file_refs) {
        auto rel = p.lexically_relative(base_dir);
        j["file_refs"][role] = (rel.empty() || rel.native().rfind("..", 0) == 0) ? p.string() : rel.string();
    }
    if (!m.pooling.empty()) j["pooling"] = m.pooling;
    if (!m.extraction_point.empty()) j["extraction_point"] = m.extraction_point;
    return j;
}

inline void save_manifest(const Manifest& m, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) fail(Errc::io, "cannot write manifest " + path.string());
    out << manifest_to_json(m, path.parent_path()).dump(2) << '\n';
}

} // namespace specgeo
