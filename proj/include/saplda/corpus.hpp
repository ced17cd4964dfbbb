#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "json.hpp"

namespace saplda {

using TermId = std::uint32_t;

class Vocabulary {
public:
    Vocabulary() = default;
    explicit Vocabulary(std::vector<std::string> terms);

    /// Returns the id of `term`, appending it if unseen.
    TermId intern(std::string_view term);
    std::optional<TermId> find(std::string_view term) const;

    const std::string& term(TermId id) const { return terms_.at(id); }
    const std::vector<std::string>& terms() const { return terms_; }
    std::size_t size() const { return terms_.size(); }

    friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.terms_ == b.terms_; }

private:
    std::vector<std::string> terms_;
    std::unordered_map<std::string, TermId> index_;
};

/// Sparse bag of words, sorted by term id, every count >= 1.
using TermCounts = std::vector<std::pair<TermId, std::uint32_t>>;

struct Document {
    std::string id;
    std::optional<std::string> source_id;
    TermCounts counts;
    std::optional<int> label;

    std::uint64_t length() const;

    friend bool operator==(const Document&, const Document&) = default;
};

class Corpus {
public:
    /// Validates every invariant; throws InvariantViolation.
    Corpus(Vocabulary vocabulary, std::vector<Document> documents);

    const Vocabulary& vocabulary() const { return vocabulary_; }
    const std::vector<Document>& documents() const { return documents_; }
    const Document& document(std::size_t d) const { return documents_.at(d); }
    std::size_t num_documents() const { return documents_.size(); }
    std::size_t vocab_size() const { return vocabulary_.size(); }
    std::uint64_t total_tokens() const;

    friend bool operator==(const Corpus&, const Corpus&) = default;

private:
    Vocabulary vocabulary_;
    std::vector<Document> documents_;
};

const std::unordered_set<std::string>& english_stopwords();

/// Lowercases, splits on anything that is not an ASCII letter, drops tokens
/// shorter than two characters and stop-words.
std::vector<std::string> tokenize(std::string_view text, const std::unordered_set<std::string>& stopwords);

/// Tokenizes `text` and aggregates counts, extending `vocabulary` with unseen
/// terms. Throws EmptyDocument if nothing survives filtering.
TermCounts tokenize_and_count(std::string_view text, const std::unordered_set<std::string>& stopwords,
                              Vocabulary& vocabulary);

TermCounts count_terms(const std::vector<TermId>& tokens);

/// Splits a token stream into consecutive chunks of `target_len`. A tail of at
/// most half the target is merged into the previous chunk.
std::vector<Document> chunk_document(const std::vector<TermId>& tokens, std::size_t target_len,
                                     const std::string& source_id);

Corpus build_corpus(Vocabulary vocabulary, std::vector<Document> documents);

/// Full ingestion path for raw texts: tokenize, optionally chunk, count.
/// `target_len == 0` keeps each text as one document.
Corpus ingest_texts(const std::vector<std::pair<std::string, std::string>>& id_and_text,
                    std::size_t target_len = 0,
                    const std::unordered_set<std::string>& stopwords = english_stopwords());

nlohmann::json corpus_to_json(const Corpus& corpus);
Corpus corpus_from_json(const nlohmann::json& j);

void write_corpus(const Corpus& corpus, const std::filesystem::path& path);
Corpus read_corpus(const std::filesystem::path& path);

}  // namespace saplda
