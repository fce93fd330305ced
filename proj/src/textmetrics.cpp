#include "ocrprep/textmetrics.hpp"

#include <algorithm>
#include <stdexcept>

#include "ocrprep/vocab.hpp"

namespace ocrprep::losses {

int levenshtein(const std::u32string& a, const std::u32string& b) {
    const std::size_t n = a.size(), m = b.size();
    if (n == 0) return static_cast<int>(m);
    if (m == 0) return static_cast<int>(n);
    std::vector<int> prev(m + 1), cur(m + 1);
    for (std::size_t j = 0; j <= m; ++j) prev[j] = static_cast<int>(j);
    for (std::size_t i = 1; i <= n; ++i) {
        cur[0] = static_cast<int>(i);
        for (std::size_t j = 1; j <= m; ++j) {
            const int sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
        }
        std::swap(prev, cur);
    }
    return prev[m];
}

int levenshtein_utf8(const std::string& a, const std::string& b) {
    return levenshtein(utf8_decode(a), utf8_decode(b));
}

double cer(const std::u32string& pred, const std::u32string& gt) {
    if (gt.empty())
        throw std::invalid_argument("cer: ground truth is empty (undefined at m = 0)");
    return 100.0 * levenshtein(pred, gt) / static_cast<double>(gt.size());
}

double cer_utf8(const std::string& pred, const std::string& gt) {
    return cer(utf8_decode(pred), utf8_decode(gt));
}

double word_accuracy(const std::vector<std::string>& preds,
                     const std::vector<std::string>& gts) {
    if (preds.size() != gts.size())
        throw std::invalid_argument("word_accuracy: list lengths differ (" +
                                    std::to_string(preds.size()) + " vs " +
                                    std::to_string(gts.size()) + ")");
    if (preds.empty()) throw std::invalid_argument("word_accuracy: empty lists");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < preds.size(); ++i)
        if (preds[i] == gts[i]) ++hits;
    return 100.0 * static_cast<double>(hits) / static_cast<double>(preds.size());
}

}  // namespace ocrprep::losses
