#include "oem/corpus.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

using namespace oem;

namespace {

Corpus parse(const std::string& text, std::vector<std::string> vocab = {}) {
    std::istringstream in(text);
    return read_uci_docword(in, std::move(vocab));
}

std::filesystem::path temp_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("oem_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace

TEST_CASE("UCI reader expands counts") {
    const auto c = parse("1\n2\n1\n1 2 3\n");
    REQUIRE(c.size() == 1);
    CHECK(c.documents[0].word_ids == std::vector<std::int32_t>{1, 1, 1});
    CHECK(c.vocab_size() == 2);
}

TEST_CASE("UCI reader sorts tokens and keeps document order") {
    const auto c = parse("2\n3\n3\n1 3 1\n1 1 2\n2 2 1\n");
    REQUIRE(c.size() == 2);
    CHECK(c.documents[0].word_ids == std::vector<std::int32_t>{0, 0, 2});
    CHECK(c.documents[1].word_ids == std::vector<std::int32_t>{1});
    CHECK(c.num_tokens() == 4);
}

TEST_CASE("UCI reader rejects malformed input") {
    CHECK_THROWS_AS(parse("1\n2\n2\n1 2 3\n"), CorpusFormatError);   // NNZ mismatch
    CHECK_THROWS_AS(parse("x\n2\n1\n1 2 3\n"), CorpusFormatError);   // header
    CHECK_THROWS_AS(parse("1\n2\n"), CorpusFormatError);             // missing NNZ
    CHECK_THROWS_AS(parse("1\n2\n1\n2 1 1\n"), CorpusFormatError);   // doc id
    CHECK_THROWS_AS(parse("1\n2\n1\n1 3 1\n"), CorpusFormatError);   // word id
    CHECK_THROWS_AS(parse("1\n2\n1\n1 0 1\n"), CorpusFormatError);
    CHECK_THROWS_AS(parse("1\n2\n1\n1 1 0\n"), CorpusFormatError);   // count
    CHECK_THROWS_AS(parse("1\n2\n1\n1 1 -2\n"), CorpusFormatError);
    CHECK_THROWS_AS(parse("1\n2\n1\n1 1\n"), CorpusFormatError);     // short triplet
    CHECK_THROWS_AS(parse("1\n2\n1\n1 1 1\n", {"a", "a"}), CorpusFormatError);
    CHECK_THROWS_AS(parse("1\n2\n1\n1 1 1\n", {"a", "b", "c"}), CorpusFormatError);
}

TEST_CASE("documents without tokens are dropped") {
    const auto c = parse("3\n2\n2\n1 1 1\n3 2 2\n");
    REQUIRE(c.size() == 2);
    CHECK(c.documents[1].word_ids == std::vector<std::int32_t>{1, 1});
}

TEST_CASE("UCI round trip through files") {
    const auto data = generate_synthetic(parse_synthetic_spec("k=3,v=40,d=50,len=12"), 7);
    const auto dir = temp_dir("roundtrip");
    write_uci_bag_of_words(data.corpus, dir / "docword.txt", dir / "vocab.txt");
    const auto back = load_uci_bag_of_words(dir / "docword.txt", dir / "vocab.txt");
    CHECK(back == data.corpus);
    const auto unnamed = load_uci_bag_of_words(dir / "docword.txt", "");
    CHECK(unnamed.documents == data.corpus.documents);
    CHECK(unnamed.vocab.front() == "1");
}

TEST_CASE("filter_vocabulary") {
    Corpus c;
    c.vocab = {"c", "a", "the", "b"};
    c.documents = {Document{{0, 1, 1, 2, 2, 2, 2}}, Document{{1, 3, 3}}, Document{{0}}};
    // frequencies: a 3, b 2, c 1, the 4 (stopword)
    const auto top2 = filter_vocabulary(c, {"the"}, 2);
    CHECK(std::set<std::string>(top2.vocab.begin(), top2.vocab.end()) == std::set<std::string>{"a", "b"});
    CHECK(top2.size() == 2);  // the third document only had "c"
    CHECK(top2.num_tokens() == 5);
    for (const auto& d : top2.documents)
        for (auto w : d.word_ids) CHECK((w >= 0 && w < 2));

    const auto all = filter_vocabulary(c, {}, 10);
    CHECK(all.vocab == c.vocab);
    CHECK(all.documents == c.documents);

    const auto none = filter_vocabulary(c, {"a", "b", "c", "the"}, 3);
    CHECK(none.size() == 0);

    // ties broken lexicographically
    Corpus t;
    t.vocab = {"y", "x", "z"};
    t.documents = {Document{{0, 1, 2}}};
    CHECK(filter_vocabulary(t, {}, 1).vocab == std::vector<std::string>{"x"});
    CHECK_THROWS_AS(filter_vocabulary(t, {}, 0), std::invalid_argument);
}

TEST_CASE("stopword file") {
    const auto dir = temp_dir("stop");
    std::ofstream(dir / "stop.txt") << "the\nand\n\n a \n";
    const auto words = load_stopwords(dir / "stop.txt");
    CHECK(words.count("the") == 1);
    CHECK(words.count("and") == 1);
}

TEST_CASE("split") {
    Corpus c;
    c.vocab = {"a"};
    for (int i = 0; i < 10; ++i) c.documents.push_back(Document{std::vector<std::int32_t>(static_cast<std::size_t>(i + 1), 0)});
    const auto [train, test] = split(c, 3, 5);
    CHECK(test.size() == 3);
    CHECK(train.size() == 7);
    std::set<int> lengths;
    for (const auto& d : train.documents) lengths.insert(d.length());
    for (const auto& d : test.documents) CHECK(lengths.insert(d.length()).second);
    CHECK(lengths.size() == 10);

    const auto again = split(c, 3, 5);
    CHECK(again.first == train);
    CHECK(again.second == test);

    CHECK(split(c, 0, 1).second.size() == 0);
    CHECK_THROWS_AS(split(c, 10, 1), std::invalid_argument);
}

TEST_CASE("synthetic corpus is deterministic and well formed") {
    const auto spec = parse_synthetic_spec("k=4,v=30,d=200,len=15,alpha=0.3,c=0.2");
    CHECK(spec.num_topics == 4);
    CHECK(spec.vocab_size == 30);
    CHECK(spec.num_docs == 200);
    CHECK(spec.mean_length == 15.0);
    const auto a = generate_synthetic(spec, 3);
    const auto b = generate_synthetic(spec, 3);
    CHECK(a.corpus == b.corpus);
    CHECK(a.truth.beta == b.truth.beta);
    CHECK(generate_synthetic(spec, 4).corpus != a.corpus);
    CHECK(a.corpus.size() == 200);
    for (const auto& d : a.corpus.documents) {
        CHECK(d.length() >= 1);
        CHECK(std::is_sorted(d.word_ids.begin(), d.word_ids.end()));
    }
    a.truth.check(1e-9);
    CHECK(a.truth.alpha == Vector::Constant(4, 0.3));
    CHECK(parse_synthetic_spec("k=2").alpha == Vector::Constant(2, 0.5));
    CHECK_THROWS_AS(parse_synthetic_spec("k=2,q=1"), std::invalid_argument);
    CHECK_THROWS_AS(parse_synthetic_spec("k"), std::invalid_argument);
}

TEST_CASE("synthetic generator rejects degenerate topics") {
    SyntheticSpec spec;
    spec.num_topics = 2;
    spec.vocab_size = 3;
    spec.num_docs = 5;
    Matrix bad(2, 3);
    bad << 0.5, 0.5, 0.0, 0.5, 0.4, 0.0;
    spec.topic_source = bad;
    CHECK_THROWS_AS(generate_synthetic(spec, 1), std::invalid_argument);
    spec.topic_source = Matrix::Constant(3, 3, 1.0 / 3);
    CHECK_THROWS_AS(generate_synthetic(spec, 1), std::invalid_argument);
}

TEST_CASE("single topic: word frequencies converge to the topic") {
    SyntheticSpec spec;
    spec.num_topics = 1;
    spec.vocab_size = 5;
    spec.num_docs = 4000;
    spec.mean_length = 20;
    Matrix topic(1, 5);
    topic << 0.4, 0.3, 0.15, 0.1, 0.05;
    spec.topic_source = topic;
    const auto data = generate_synthetic(spec, 2);
    Vector freq = Vector::Zero(5);
    for (const auto& d : data.corpus.documents)
        for (auto w : d.word_ids) freq[w] += 1.0;
    freq /= freq.sum();
    CHECK((freq - topic.row(0).transpose()).cwiseAbs().sum() < 0.01);
}

TEST_CASE("unigram frequencies converge to the alpha-weighted topic mixture") {
    SyntheticSpec spec;
    spec.num_topics = 3;
    spec.vocab_size = 50;
    spec.num_docs = 50000;
    spec.mean_length = 10;
    spec.alpha = Vector(3);
    spec.alpha << 0.2, 0.5, 1.3;
    const auto data = generate_synthetic(spec, 11);
    Vector freq = Vector::Zero(50);
    for (const auto& d : data.corpus.documents)
        for (auto w : d.word_ids) freq[w] += 1.0;
    freq /= freq.sum();
    const Vector mean_theta = spec.alpha / spec.alpha.sum();
    const Vector expected = data.truth.beta.transpose() * mean_theta;
    CHECK((freq - expected).cwiseAbs().sum() <= 0.02);
}

TEST_CASE("minibatches") {
    std::vector<Document> docs(23, Document{{0}});
    const auto mbs = minibatches(docs, 10);
    REQUIRE(mbs.size() == 3);
    CHECK(mbs[0].size() == 10);
    CHECK(mbs[2].size() == 3);
    CHECK(minibatches(std::span<const Document>{}, 4).empty());
    CHECK_THROWS_AS(minibatches(docs, 0), std::invalid_argument);
}
