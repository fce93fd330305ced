#pragma once

// Character inventory for CTC. The reserved blank sits outside the character
// list; a reserved UNKNOWN class absorbs recognizer output characters that
// fall outside the inventory (external engines have open vocabularies).

#include <cstdint>
#include <string>
#include <vector>

namespace ocrprep::losses {

// UTF-8 <-> Unicode scalar values. Throws std::invalid_argument on malformed
// input (the external-OCR adapter reports that as a recognition error).
std::u32string utf8_decode(const std::string& s);
std::string utf8_encode(const std::u32string& s);

class CharVocab {
public:
    CharVocab() = default;
    explicit CharVocab(std::u32string chars);
    explicit CharVocab(const std::string& utf8_chars);

    static CharVocab default_vocab();  // A-Z 0-9

    int size() const { return static_cast<int>(chars_.size()); }
    int unknown_index() const { return size(); }
    int blank_index() const { return size() + 1; }
    int num_classes() const { return size() + 2; }  // chars + unknown + blank

    char32_t char_at(int index) const;      // valid for [0, size()); unknown -> U+003F '?'
    int index_of(char32_t c) const;         // -1 when absent
    bool contains(char32_t c) const { return index_of(c) >= 0; }

    // Text -> class indices; out-of-vocab characters map to unknown_index().
    std::vector<int> encode(const std::u32string& text) const;
    std::vector<int> encode_utf8(const std::string& text) const;

    const std::u32string& chars() const { return chars_; }
    std::string chars_utf8() const { return utf8_encode(chars_); }

private:
    std::u32string chars_;
    std::vector<int> lookup_;  // dense ASCII fast path
};

}  // namespace ocrprep::losses
