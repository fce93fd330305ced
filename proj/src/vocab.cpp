#include "ocrprep/vocab.hpp"

#include <stdexcept>
#include <unordered_map>

namespace ocrprep::losses {

std::u32string utf8_decode(const std::string& s) {
    std::u32string out;
    out.reserve(s.size());
    std::size_t i = 0;
    while (i < s.size()) {
        const unsigned char c = static_cast<unsigned char>(s[i]);
        int extra;
        char32_t cp;
        if (c < 0x80) {
            cp = c;
            extra = 0;
        } else if ((c & 0xE0) == 0xC0) {
            cp = c & 0x1F;
            extra = 1;
        } else if ((c & 0xF0) == 0xE0) {
            cp = c & 0x0F;
            extra = 2;
        } else if ((c & 0xF8) == 0xF0) {
            cp = c & 0x07;
            extra = 3;
        } else {
            throw std::invalid_argument("utf8_decode: invalid lead byte at offset " +
                                        std::to_string(i));
        }
        if (i + extra >= s.size())
            throw std::invalid_argument("utf8_decode: truncated sequence at offset " +
                                        std::to_string(i));
        for (int k = 1; k <= extra; ++k) {
            const unsigned char cc = static_cast<unsigned char>(s[i + k]);
            if ((cc & 0xC0) != 0x80)
                throw std::invalid_argument("utf8_decode: invalid continuation at offset " +
                                            std::to_string(i + k));
            cp = (cp << 6) | (cc & 0x3F);
        }
        out.push_back(cp);
        i += extra + 1;
    }
    return out;
}

std::string utf8_encode(const std::u32string& s) {
    std::string out;
    out.reserve(s.size());
    for (char32_t cp : s) {
        if (cp < 0x80) {
            out.push_back(static_cast<char>(cp));
        } else if (cp < 0x800) {
            out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
            out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
        } else if (cp < 0x10000) {
            out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
            out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
            out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
        } else {
            out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
            out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
            out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
            out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
        }
    }
    return out;
}

CharVocab::CharVocab(std::u32string chars) : chars_(std::move(chars)), lookup_(128, -1) {
    for (std::size_t i = 0; i < chars_.size(); ++i) {
        for (std::size_t j = 0; j < i; ++j)
            if (chars_[j] == chars_[i])
                throw std::invalid_argument("CharVocab: duplicate character at index " +
                                            std::to_string(i));
        if (chars_[i] < 128) lookup_[chars_[i]] = static_cast<int>(i);
    }
}

CharVocab::CharVocab(const std::string& utf8_chars) : CharVocab(utf8_decode(utf8_chars)) {}

CharVocab CharVocab::default_vocab() {
    return CharVocab(std::string("ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789"));
}

char32_t CharVocab::char_at(int index) const {
    if (index >= 0 && index < size()) return chars_[index];
    if (index == unknown_index()) return U'?';
    throw std::out_of_range("CharVocab: index " + std::to_string(index));
}

int CharVocab::index_of(char32_t c) const {
    if (c < 128) return lookup_[c];
    for (std::size_t i = 0; i < chars_.size(); ++i)
        if (chars_[i] == c) return static_cast<int>(i);
    return -1;
}

std::vector<int> CharVocab::encode(const std::u32string& text) const {
    std::vector<int> out;
    out.reserve(text.size());
    for (char32_t c : text) {
        const int idx = index_of(c);
        out.push_back(idx >= 0 ? idx : unknown_index());
    }
    return out;
}

std::vector<int> CharVocab::encode_utf8(const std::string& text) const {
    return encode(utf8_decode(text));
}

}  // namespace ocrprep::losses
