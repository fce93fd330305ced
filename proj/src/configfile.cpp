#include "ocrprep/configfile.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace ocrprep::evalcli {

namespace {

std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

[[noreturn]] void fail(const std::string& origin, int line, const std::string& what) {
    throw std::runtime_error("config " + origin + ":" + std::to_string(line) + ": " + what);
}

}  // namespace

ConfigFile ConfigFile::parse_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("config: cannot open " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return parse_string(ss.str(), path);
}

ConfigFile ConfigFile::parse_string(const std::string& text, const std::string& origin) {
    ConfigFile cfg;
    cfg.origin_ = origin;
    std::istringstream in(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') fail(origin, lineno, "unterminated section header");
            section = trim(line.substr(1, line.size() - 2));
            if (section.empty()) fail(origin, lineno, "empty section name");
            continue;
        }
        auto eq = line.find('=');
        if (eq == std::string::npos) fail(origin, lineno, "expected key = value");
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (key.empty()) fail(origin, lineno, "empty key");
        if (!section.empty()) key = section + "." + key;
        for (const auto& [k, v] : cfg.entries_)
            if (k == key) fail(origin, lineno, "duplicate key " + key);
        cfg.entries_.emplace_back(key, value);
    }
    return cfg;
}

const std::string* ConfigFile::find(const std::string& key) const {
    for (const auto& [k, v] : entries_)
        if (k == key) return &v;
    return nullptr;
}

bool ConfigFile::has(const std::string& key) const { return find(key) != nullptr; }

std::string ConfigFile::get_string(const std::string& key, const std::string& def) const {
    const std::string* v = find(key);
    return v ? *v : def;
}

long ConfigFile::get_int(const std::string& key, long def) const {
    const std::string* v = find(key);
    if (!v) return def;
    std::size_t pos = 0;
    long out;
    try {
        out = std::stol(*v, &pos);
    } catch (const std::exception&) {
        throw std::runtime_error("config " + origin_ + ": key " + key + ": not an integer: " + *v);
    }
    if (pos != v->size())
        throw std::runtime_error("config " + origin_ + ": key " + key + ": not an integer: " + *v);
    return out;
}

double ConfigFile::get_double(const std::string& key, double def) const {
    const std::string* v = find(key);
    if (!v) return def;
    std::size_t pos = 0;
    double out;
    try {
        out = std::stod(*v, &pos);
    } catch (const std::exception&) {
        throw std::runtime_error("config " + origin_ + ": key " + key + ": not a number: " + *v);
    }
    if (pos != v->size())
        throw std::runtime_error("config " + origin_ + ": key " + key + ": not a number: " + *v);
    return out;
}

bool ConfigFile::get_bool(const std::string& key, bool def) const {
    const std::string* v = find(key);
    if (!v) return def;
    if (*v == "true" || *v == "1" || *v == "yes") return true;
    if (*v == "false" || *v == "0" || *v == "no") return false;
    throw std::runtime_error("config " + origin_ + ": key " + key + ": not a boolean: " + *v);
}

std::vector<float> ConfigFile::get_floats(const std::string& key,
                                          const std::vector<float>& def) const {
    const std::string* v = find(key);
    if (!v) return def;
    std::vector<float> out;
    std::istringstream ss(*v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty())
            throw std::runtime_error("config " + origin_ + ": key " + key + ": empty list item");
        std::size_t pos = 0;
        float f;
        try {
            f = std::stof(item, &pos);
        } catch (const std::exception&) {
            throw std::runtime_error("config " + origin_ + ": key " + key +
                                     ": not a number: " + item);
        }
        if (pos != item.size())
            throw std::runtime_error("config " + origin_ + ": key " + key +
                                     ": not a number: " + item);
        out.push_back(f);
    }
    if (out.empty())
        throw std::runtime_error("config " + origin_ + ": key " + key + ": empty list");
    return out;
}

}  // namespace ocrprep::evalcli
