#pragma once

#include "oem/common.hpp"
#include "oem/lda_family.hpp"

#include <filesystem>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace oem {

struct Corpus {
    std::vector<Document> documents;
    std::vector<std::string> vocab;

    [[nodiscard]] int vocab_size() const { return static_cast<int>(vocab.size()); }
    [[nodiscard]] std::size_t size() const { return documents.size(); }
    [[nodiscard]] std::int64_t num_tokens() const;
    friend bool operator==(const Corpus&, const Corpus&) = default;
};

class CorpusFormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Reads a UCI bag-of-words pair. `vocab_path` may be empty, in which case
/// tokens are named by their 1-based word id. Documents without tokens are
/// dropped with a warning.
Corpus load_uci_bag_of_words(const std::filesystem::path& docword_path, const std::filesystem::path& vocab_path);

/// Stream variant of the docword reader; `vocab` supplies W when non-empty.
Corpus read_uci_docword(std::istream& in, std::vector<std::string> vocab);

void write_uci_bag_of_words(const Corpus& corpus, const std::filesystem::path& docword_path,
                            const std::filesystem::path& vocab_path);
void write_uci_docword(const Corpus& corpus, std::ostream& out);

std::set<std::string> load_stopwords(const std::filesystem::path& path);

/// Keeps the `top_n` most frequent non-stopword tokens (frequency ties broken
/// lexicographically), preserving their original relative order, re-indexes
/// documents and drops the ones left empty.
Corpus filter_vocabulary(const Corpus& corpus, const std::set<std::string>& stopwords, int top_n);

/// Uniform split without replacement. Both halves keep corpus order.
std::pair<Corpus, Corpus> split(const Corpus& corpus, std::size_t n_test, std::uint64_t seed);

struct DirichletTopics {
    double concentration = 0.1;
};

struct SyntheticSpec {
    int num_topics = 10;
    int vocab_size = 1000;
    int num_docs = 1000;
    double mean_length = 60.0;
    Vector alpha;  // empty means 0.5 for every topic
    std::variant<DirichletTopics, Matrix> topic_source = DirichletTopics{};
};

struct SyntheticCorpus {
    Corpus corpus;
    ModelParams truth;
};

/// Samples documents from the LDA generative process. Poisson lengths of zero
/// are redrawn.
SyntheticCorpus generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed);

/// Parses "k=5,v=100,d=20000,len=40,alpha=0.5,c=0.1".
SyntheticSpec parse_synthetic_spec(const std::string& text);

/// Consecutive slices of at most `size` documents.
std::vector<std::span<const Document>> minibatches(std::span<const Document> docs, std::size_t size);

}  // namespace oem
