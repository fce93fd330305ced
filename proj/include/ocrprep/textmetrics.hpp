#pragma once

// Edit-distance based text metrics over Unicode scalar values.

#include <string>
#include <vector>

namespace ocrprep::losses {

int levenshtein(const std::u32string& a, const std::u32string& b);
int levenshtein_utf8(const std::string& a, const std::string& b);

// 100 * edit_distance(pred, gt) / |gt|. May exceed 100. Throws
// std::invalid_argument when gt is empty (undefined at m = 0).
double cer(const std::u32string& pred, const std::u32string& gt);
double cer_utf8(const std::string& pred, const std::string& gt);

// 100 * exact matches / count; case-sensitive, no normalization.
double word_accuracy(const std::vector<std::string>& preds,
                     const std::vector<std::string>& gts);

}  // namespace ocrprep::losses
