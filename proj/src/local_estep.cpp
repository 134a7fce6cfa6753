#include "oem/local_estep.hpp"

#include <stdexcept>

namespace oem {

void accumulate(SuffStats& acc, const Document& doc, const LocalEstimate& est, double weight) {
    if (est.responsibilities.rows() != doc.length() || est.responsibilities.cols() != acc.s1.rows() ||
        est.s2.size() != acc.s2.size())
        throw std::invalid_argument("accumulate: estimate shape differs from the accumulator");
    for (int n = 0; n < doc.length(); ++n)
        acc.s1.col(doc.word_ids[static_cast<std::size_t>(n)]) += weight * est.responsibilities.row(n).transpose();
    acc.s2 += weight * est.s2;
}

SuffStats to_suff_stats(const Document& doc, const LocalEstimate& est, int vocab_size) {
    SuffStats s = SuffStats::zeros(static_cast<int>(est.s2.size()), vocab_size);
    accumulate(s, doc, est, 1.0);
    return s;
}

SuffStats mean_stats(std::span<const Document> docs, std::span<const LocalEstimate> ests, int vocab_size) {
    if (docs.empty() || docs.size() != ests.size()) throw std::invalid_argument("mean_stats: empty or ragged minibatch");
    SuffStats acc = SuffStats::zeros(static_cast<int>(ests.front().s2.size()), vocab_size);
    const double w = 1.0 / static_cast<double>(docs.size());
    for (std::size_t j = 0; j < docs.size(); ++j) accumulate(acc, docs[j], ests[j], w);
    return acc;
}

}  // namespace oem
