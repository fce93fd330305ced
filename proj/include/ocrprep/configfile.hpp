#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace ocrprep::evalcli {

// Flat "key = value" files with optional [section] headers; keys are looked up
// as "section.key". '#' starts a comment.
class ConfigFile {
public:
    static ConfigFile parse_file(const std::string& path);
    static ConfigFile parse_string(const std::string& text, const std::string& origin = "<string>");

    bool has(const std::string& key) const;
    std::string get_string(const std::string& key, const std::string& def) const;
    long get_int(const std::string& key, long def) const;
    double get_double(const std::string& key, double def) const;
    bool get_bool(const std::string& key, bool def) const;
    // Comma-separated float list.
    std::vector<float> get_floats(const std::string& key, const std::vector<float>& def) const;

    const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

private:
    const std::string* find(const std::string& key) const;
    std::vector<std::pair<std::string, std::string>> entries_;
    std::string origin_;
};

}  // namespace ocrprep::evalcli
