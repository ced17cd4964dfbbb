#include "saplda/corpus.hpp"

#include "saplda/errors.hpp"
#include "saplda/io.hpp"

#include <algorithm>
#include <cctype>
#include <map>

#include "json.hpp"

namespace saplda {

Vocabulary::Vocabulary(std::vector<std::string> terms) {
    for (auto& t : terms) {
        if (index_.count(t)) throw InvariantViolation("duplicate vocabulary term '" + t + "'");
        index_.emplace(t, static_cast<TermId>(terms_.size()));
        terms_.push_back(std::move(t));
    }
}

TermId Vocabulary::intern(std::string_view term) {
    std::string key(term);
    auto it = index_.find(key);
    if (it != index_.end()) return it->second;
    const auto id = static_cast<TermId>(terms_.size());
    index_.emplace(key, id);
    terms_.push_back(std::move(key));
    return id;
}

std::optional<TermId> Vocabulary::find(std::string_view term) const {
    auto it = index_.find(std::string(term));
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

std::uint64_t Document::length() const {
    std::uint64_t n = 0;
    for (const auto& [term, count] : counts) n += count;
    return n;
}

Corpus::Corpus(Vocabulary vocabulary, std::vector<Document> documents)
    : vocabulary_(std::move(vocabulary)), documents_(std::move(documents)) {
    if (vocabulary_.size() == 0) throw InvariantViolation("empty vocabulary");
    if (documents_.empty()) throw InvariantViolation("corpus has no documents");
    const auto V = vocabulary_.size();
    for (const auto& doc : documents_) {
        if (doc.counts.empty()) throw InvariantViolation("document '" + doc.id + "' has zero length");
        for (std::size_t i = 0; i < doc.counts.size(); ++i) {
            const auto [term, count] = doc.counts[i];
            if (term >= V)
                throw InvariantViolation("document '" + doc.id + "' references term " + std::to_string(term) +
                                         " outside vocabulary of size " + std::to_string(V));
            if (count == 0) throw InvariantViolation("document '" + doc.id + "' has a zero count");
            if (i > 0 && doc.counts[i - 1].first >= term)
                throw InvariantViolation("document '" + doc.id + "' counts not strictly sorted");
        }
        if (doc.label && *doc.label < 1) throw InvariantViolation("document '" + doc.id + "' has label < 1");
    }
}

std::uint64_t Corpus::total_tokens() const {
    std::uint64_t n = 0;
    for (const auto& doc : documents_) n += doc.length();
    return n;
}

std::vector<std::string> tokenize(std::string_view text, const std::unordered_set<std::string>& stopwords) {
    std::vector<std::string> tokens;
    std::string current;
    auto flush = [&] {
        if (current.size() >= 2 && !stopwords.count(current)) tokens.push_back(current);
        current.clear();
    };
    for (char ch : text) {
        const auto c = static_cast<unsigned char>(ch);
        if (c < 128 && std::isalpha(c)) {
            current.push_back(static_cast<char>(std::tolower(c)));
        } else {
            flush();
        }
    }
    flush();
    return tokens;
}

TermCounts count_terms(const std::vector<TermId>& tokens) {
    std::map<TermId, std::uint32_t> counts;
    for (TermId t : tokens) ++counts[t];
    return {counts.begin(), counts.end()};
}

TermCounts tokenize_and_count(std::string_view text, const std::unordered_set<std::string>& stopwords,
                              Vocabulary& vocabulary) {
    const auto tokens = tokenize(text, stopwords);
    if (tokens.empty()) throw EmptyDocument("no tokens survive filtering");
    std::vector<TermId> ids;
    ids.reserve(tokens.size());
    for (const auto& t : tokens) ids.push_back(vocabulary.intern(t));
    return count_terms(ids);
}

std::vector<Document> chunk_document(const std::vector<TermId>& tokens, std::size_t target_len,
                                     const std::string& source_id) {
    if (target_len == 0) throw InvalidConfig("chunk target length must be >= 1");
    std::vector<Document> chunks;
    std::vector<std::pair<std::size_t, std::size_t>> spans;
    for (std::size_t begin = 0; begin < tokens.size(); begin += target_len)
        spans.emplace_back(begin, std::min(tokens.size(), begin + target_len));
    if (spans.size() >= 2) {
        const auto tail = spans.back().second - spans.back().first;
        if (2 * tail <= target_len) {
            spans[spans.size() - 2].second = spans.back().second;
            spans.pop_back();
        }
    }
    for (std::size_t i = 0; i < spans.size(); ++i) {
        std::vector<TermId> piece(tokens.begin() + static_cast<std::ptrdiff_t>(spans[i].first),
                                  tokens.begin() + static_cast<std::ptrdiff_t>(spans[i].second));
        Document doc;
        doc.id = source_id + "#" + std::to_string(i);
        doc.source_id = source_id;
        doc.counts = count_terms(piece);
        chunks.push_back(std::move(doc));
    }
    return chunks;
}

Corpus build_corpus(Vocabulary vocabulary, std::vector<Document> documents) {
    return Corpus(std::move(vocabulary), std::move(documents));
}

Corpus ingest_texts(const std::vector<std::pair<std::string, std::string>>& id_and_text, std::size_t target_len,
                    const std::unordered_set<std::string>& stopwords) {
    Vocabulary vocab;
    std::vector<Document> docs;
    for (const auto& [id, text] : id_and_text) {
        const auto tokens = tokenize(text, stopwords);
        if (tokens.empty()) throw EmptyDocument("text '" + id + "' has no tokens after filtering");
        std::vector<TermId> ids;
        ids.reserve(tokens.size());
        for (const auto& t : tokens) ids.push_back(vocab.intern(t));
        if (target_len == 0) {
            Document doc;
            doc.id = id;
            doc.counts = count_terms(ids);
            docs.push_back(std::move(doc));
        } else {
            for (auto& chunk : chunk_document(ids, target_len, id)) docs.push_back(std::move(chunk));
        }
    }
    return build_corpus(std::move(vocab), std::move(docs));
}

nlohmann::json corpus_to_json(const Corpus& corpus) {
    nlohmann::json docs = nlohmann::json::array();
    for (const auto& doc : corpus.documents()) {
        nlohmann::json counts = nlohmann::json::array();
        for (const auto& [term, count] : doc.counts) counts.push_back({term, count});
        nlohmann::json jd = {{"id", doc.id}, {"counts", std::move(counts)}};
        if (doc.source_id) jd["source_id"] = *doc.source_id;
        if (doc.label) jd["label"] = *doc.label;
        docs.push_back(std::move(jd));
    }
    return {{"vocab", corpus.vocabulary().terms()}, {"docs", std::move(docs)}};
}

Corpus corpus_from_json(const nlohmann::json& j) {
    try {
        Vocabulary vocab(j.at("vocab").get<std::vector<std::string>>());
        std::vector<Document> docs;
        for (const auto& jd : j.at("docs")) {
            Document doc;
            doc.id = jd.at("id").get<std::string>();
            if (jd.contains("source_id") && !jd["source_id"].is_null())
                doc.source_id = jd["source_id"].get<std::string>();
            if (jd.contains("label") && !jd["label"].is_null()) doc.label = jd["label"].get<int>();
            for (const auto& pair : jd.at("counts")) {
                if (!pair.is_array() || pair.size() != 2) throw ParseError("count entries must be [term, count]");
                const auto term = pair[0].get<std::int64_t>();
                const auto count = pair[1].get<std::int64_t>();
                if (term < 0 || count < 0) throw InvariantViolation("negative term index or count");
                doc.counts.emplace_back(static_cast<TermId>(term), static_cast<std::uint32_t>(count));
            }
            docs.push_back(std::move(doc));
        }
        return build_corpus(std::move(vocab), std::move(docs));
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("malformed corpus JSON: ") + e.what());
    }
}

void write_corpus(const Corpus& corpus, const std::filesystem::path& path) {
    write_json_file(path, corpus_to_json(corpus));
}

Corpus read_corpus(const std::filesystem::path& path) { return corpus_from_json(read_json_file(path)); }

}  // namespace saplda
