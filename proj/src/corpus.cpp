#include "oem/corpus.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <unordered_set>

namespace oem {

std::int64_t Corpus::num_tokens() const {
    std::int64_t n = 0;
    for (const auto& d : documents) n += d.length();
    return n;
}

namespace {

std::int64_t read_header_value(std::istream& in, const char* name) {
    std::string line;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        std::istringstream ss(line);
        std::int64_t value = 0;
        std::string rest;
        if (!(ss >> value) || (ss >> rest) || value < 0)
            throw CorpusFormatError(std::string("malformed header line for ") + name + ": '" + line + "'");
        return value;
    }
    throw CorpusFormatError(std::string("missing header line for ") + name);
}

std::vector<std::string> read_vocab(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open vocabulary " + path.string());
    std::vector<std::string> vocab;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        vocab.push_back(line);
    }
    // Trailing blank lines are not tokens.
    while (!vocab.empty() && vocab.back().empty()) vocab.pop_back();
    return vocab;
}

}  // namespace

Corpus read_uci_docword(std::istream& in, std::vector<std::string> vocab) {
    const auto n_docs = read_header_value(in, "D");
    const auto n_words = read_header_value(in, "W");
    const auto nnz = read_header_value(in, "NNZ");

    if (vocab.empty()) {
        vocab.reserve(static_cast<std::size_t>(n_words));
        for (std::int64_t w = 1; w <= n_words; ++w) vocab.push_back(std::to_string(w));
    } else if (static_cast<std::int64_t>(vocab.size()) != n_words) {
        throw CorpusFormatError("vocabulary has " + std::to_string(vocab.size()) + " entries but header W=" +
                                std::to_string(n_words));
    }
    {
        std::unordered_set<std::string> seen;
        for (const auto& token : vocab)
            if (!seen.insert(token).second) throw CorpusFormatError("duplicate vocabulary entry '" + token + "'");
    }

    std::vector<Document> docs(static_cast<std::size_t>(n_docs));
    std::int64_t lines = 0;
    std::string line;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        std::istringstream ss(line);
        std::int64_t doc = 0, word = 0, count = 0;
        std::string rest;
        if (!(ss >> doc >> word >> count) || (ss >> rest)) throw CorpusFormatError("malformed triplet: '" + line + "'");
        if (doc < 1 || doc > n_docs) throw CorpusFormatError("document id out of range: " + std::to_string(doc));
        if (word < 1 || word > n_words) throw CorpusFormatError("word id out of range: " + std::to_string(word));
        if (count <= 0) throw CorpusFormatError("nonpositive count on line: '" + line + "'");
        auto& ids = docs[static_cast<std::size_t>(doc - 1)].word_ids;
        ids.insert(ids.end(), static_cast<std::size_t>(count), static_cast<std::int32_t>(word - 1));
        ++lines;
    }
    if (lines != nnz)
        throw CorpusFormatError("header NNZ=" + std::to_string(nnz) + " but found " + std::to_string(lines) + " triplets");

    Corpus corpus;
    corpus.vocab = std::move(vocab);
    std::size_t dropped = 0;
    for (auto& d : docs) {
        if (d.empty()) {
            ++dropped;
            continue;
        }
        std::sort(d.word_ids.begin(), d.word_ids.end());
        corpus.documents.push_back(std::move(d));
    }
    if (dropped > 0) spdlog::warn("dropped {} empty document(s)", dropped);
    return corpus;
}

Corpus load_uci_bag_of_words(const std::filesystem::path& docword_path, const std::filesystem::path& vocab_path) {
    std::ifstream in(docword_path);
    if (!in) throw std::runtime_error("cannot open " + docword_path.string());
    return read_uci_docword(in, vocab_path.empty() ? std::vector<std::string>{} : read_vocab(vocab_path));
}

void write_uci_docword(const Corpus& corpus, std::ostream& out) {
    std::vector<std::vector<std::pair<std::int32_t, std::int64_t>>> rows;
    std::int64_t nnz = 0;
    rows.reserve(corpus.documents.size());
    for (const auto& d : corpus.documents) {
        std::map<std::int32_t, std::int64_t> counts;
        for (auto w : d.word_ids) ++counts[w];
        rows.emplace_back(counts.begin(), counts.end());
        nnz += static_cast<std::int64_t>(counts.size());
    }
    out << corpus.documents.size() << '\n' << corpus.vocab.size() << '\n' << nnz << '\n';
    for (std::size_t d = 0; d < rows.size(); ++d)
        for (const auto& [w, c] : rows[d]) out << d + 1 << ' ' << w + 1 << ' ' << c << '\n';
}

void write_uci_bag_of_words(const Corpus& corpus, const std::filesystem::path& docword_path,
                            const std::filesystem::path& vocab_path) {
    std::ofstream out(docword_path);
    if (!out) throw std::runtime_error("cannot write " + docword_path.string());
    write_uci_docword(corpus, out);
    std::ofstream vout(vocab_path);
    if (!vout) throw std::runtime_error("cannot write " + vocab_path.string());
    for (const auto& token : corpus.vocab) vout << token << '\n';
}

std::set<std::string> load_stopwords(const std::filesystem::path& path) {
    std::set<std::string> out;
    for (auto& token : read_vocab(path))
        if (!token.empty()) out.insert(std::move(token));
    return out;
}

Corpus filter_vocabulary(const Corpus& corpus, const std::set<std::string>& stopwords, int top_n) {
    if (top_n < 1) throw std::invalid_argument("filter_vocabulary: top_n must be >= 1");
    const int vocab = corpus.vocab_size();
    std::vector<std::int64_t> freq(static_cast<std::size_t>(vocab), 0);
    for (const auto& d : corpus.documents)
        for (auto w : d.word_ids) ++freq[static_cast<std::size_t>(w)];

    std::vector<int> candidates;
    for (int w = 0; w < vocab; ++w)
        if (!stopwords.contains(corpus.vocab[static_cast<std::size_t>(w)])) candidates.push_back(w);
    std::sort(candidates.begin(), candidates.end(), [&](int a, int b) {
        if (freq[a] != freq[b]) return freq[a] > freq[b];
        return corpus.vocab[a] < corpus.vocab[b];
    });
    if (static_cast<int>(candidates.size()) > top_n) candidates.resize(static_cast<std::size_t>(top_n));
    std::sort(candidates.begin(), candidates.end());

    std::vector<std::int32_t> remap(static_cast<std::size_t>(vocab), -1);
    Corpus out;
    for (int w : candidates) {
        remap[static_cast<std::size_t>(w)] = static_cast<std::int32_t>(out.vocab.size());
        out.vocab.push_back(corpus.vocab[static_cast<std::size_t>(w)]);
    }
    for (const auto& d : corpus.documents) {
        Document kept;
        for (auto w : d.word_ids)
            if (remap[static_cast<std::size_t>(w)] >= 0) kept.word_ids.push_back(remap[static_cast<std::size_t>(w)]);
        if (!kept.empty()) out.documents.push_back(std::move(kept));
    }
    return out;
}

std::pair<Corpus, Corpus> split(const Corpus& corpus, std::size_t n_test, std::uint64_t seed) {
    const std::size_t n = corpus.size();
    if (n_test >= n && !(n_test == 0 && n == 0))
        throw std::invalid_argument("split: n_test must be smaller than the corpus size");
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed({seed, 0x5011}));
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<std::size_t> test(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_test));
    std::vector<std::size_t> train(order.begin() + static_cast<std::ptrdiff_t>(n_test), order.end());
    std::sort(test.begin(), test.end());
    std::sort(train.begin(), train.end());

    std::pair<Corpus, Corpus> out{Corpus{{}, corpus.vocab}, Corpus{{}, corpus.vocab}};
    for (auto i : train) out.first.documents.push_back(corpus.documents[i]);
    for (auto i : test) out.second.documents.push_back(corpus.documents[i]);
    return out;
}

SyntheticCorpus generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
    const int k_topics = spec.num_topics;
    const int vocab = spec.vocab_size;
    if (k_topics < 1 || vocab < 1 || spec.num_docs < 0 || !(spec.mean_length > 0.0))
        throw std::invalid_argument("generate_synthetic: invalid shape");
    Vector alpha = spec.alpha.size() == 0 ? Vector::Constant(k_topics, 0.5) : spec.alpha;
    if (alpha.size() != k_topics || (alpha.array() <= 0.0).any())
        throw std::invalid_argument("generate_synthetic: alpha must have K positive entries");

    Matrix beta(k_topics, vocab);
    if (const auto* explicit_beta = std::get_if<Matrix>(&spec.topic_source)) {
        if (explicit_beta->rows() != k_topics || explicit_beta->cols() != vocab)
            throw std::invalid_argument("generate_synthetic: topic matrix shape differs from (K, V)");
        beta = *explicit_beta;
    } else {
        const double c = std::get<DirichletTopics>(spec.topic_source).concentration;
        if (!(c > 0.0)) throw std::invalid_argument("generate_synthetic: topic concentration must be positive");
        Rng rng(derive_seed({seed, 1}));
        const Vector conc = Vector::Constant(vocab, c);
        for (int k = 0; k < k_topics; ++k) beta.row(k) = sample_dirichlet(conc, rng).transpose();
    }
    for (int k = 0; k < k_topics; ++k)
        if ((beta.row(k).array() < 0.0).any() || std::abs(beta.row(k).sum() - 1.0) > 1e-9)
            throw std::invalid_argument("generate_synthetic: topic " + std::to_string(k) + " does not sum to 1");

    // Row-wise cumulative sums for inverse-CDF word draws.
    std::vector<std::vector<double>> cumulative(static_cast<std::size_t>(k_topics));
    for (int k = 0; k < k_topics; ++k) {
        auto& c = cumulative[static_cast<std::size_t>(k)];
        c.resize(static_cast<std::size_t>(vocab));
        double acc = 0.0;
        for (int v = 0; v < vocab; ++v) c[static_cast<std::size_t>(v)] = (acc += beta(k, v));
    }

    SyntheticCorpus out;
    out.truth.beta = beta;
    out.truth.alpha = alpha;
    out.corpus.vocab.reserve(static_cast<std::size_t>(vocab));
    for (int v = 0; v < vocab; ++v) out.corpus.vocab.push_back("w" + std::to_string(v));
    out.corpus.documents.resize(static_cast<std::size_t>(spec.num_docs));

    for (int d = 0; d < spec.num_docs; ++d) {
        Rng rng(derive_seed({seed, 2, static_cast<std::uint64_t>(d)}));
        const Vector theta = sample_dirichlet(alpha, rng);
        std::poisson_distribution<int> length_dist(spec.mean_length);
        int length = 0;
        while (length == 0) length = length_dist(rng);
        auto& ids = out.corpus.documents[static_cast<std::size_t>(d)].word_ids;
        ids.reserve(static_cast<std::size_t>(length));
        for (int n = 0; n < length; ++n) {
            const int z = sample_index(theta, rng);
            const auto& c = cumulative[static_cast<std::size_t>(z)];
            const double u = uniform01(rng) * c.back();
            auto it = std::upper_bound(c.begin(), c.end(), u);
            if (it == c.end()) --it;
            ids.push_back(static_cast<std::int32_t>(it - c.begin()));
        }
        std::sort(ids.begin(), ids.end());
    }
    return out;
}

SyntheticSpec parse_synthetic_spec(const std::string& text) {
    SyntheticSpec spec;
    double alpha_value = 0.5;
    std::istringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        const auto eq = item.find('=');
        if (eq == std::string::npos) throw std::invalid_argument("synthetic spec entry without '=': " + item);
        const std::string key = item.substr(0, eq);
        const std::string value = item.substr(eq + 1);
        if (key == "k") spec.num_topics = std::stoi(value);
        else if (key == "v") spec.vocab_size = std::stoi(value);
        else if (key == "d") spec.num_docs = std::stoi(value);
        else if (key == "len") spec.mean_length = std::stod(value);
        else if (key == "alpha") alpha_value = std::stod(value);
        else if (key == "c") spec.topic_source = DirichletTopics{std::stod(value)};
        else throw std::invalid_argument("unknown synthetic spec key: " + key);
    }
    spec.alpha = Vector::Constant(spec.num_topics, alpha_value);
    return spec;
}

std::vector<std::span<const Document>> minibatches(std::span<const Document> docs, std::size_t size) {
    if (size == 0) throw std::invalid_argument("minibatches: size must be >= 1");
    std::vector<std::span<const Document>> out;
    for (std::size_t start = 0; start < docs.size(); start += size)
        out.push_back(docs.subspan(start, std::min(size, docs.size() - start)));
    return out;
}

}  // namespace oem
