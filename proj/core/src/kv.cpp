#include "spider/kv.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "spider/errors.hpp"

namespace spider {

std::string format_double(double v) {
    char buf[40];
    for (int prec = 1; prec <= 17; ++prec) {
        std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
        if (std::strtod(buf, nullptr) == v) break;
    }
    return buf;
}

void KvMap::set(const std::string& key, const std::string& value) {
    if (entries_.find(key) == entries_.end()) order_.push_back(key);
    entries_[key] = value;
}

bool KvMap::has(const std::string& key) const { return entries_.count(key) != 0; }

std::string KvMap::get_string(const std::string& key) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) throw ConfigError("missing key: " + key);
    return it->second;
}

std::string KvMap::get_string(const std::string& key, const std::string& fallback) const {
    auto it = entries_.find(key);
    return it == entries_.end() ? fallback : it->second;
}

long long KvMap::get_int(const std::string& key) const {
    const std::string s = get_string(key);
    char* end = nullptr;
    long long v = std::strtoll(s.c_str(), &end, 10);
    if (end == s.c_str() || *end != '\0')
        throw ConfigError("key " + key + ": not an integer: '" + s + "'");
    return v;
}

long long KvMap::get_int(const std::string& key, long long fallback) const {
    return has(key) ? get_int(key) : fallback;
}

double KvMap::get_double(const std::string& key) const {
    const std::string s = get_string(key);
    char* end = nullptr;
    double v = std::strtod(s.c_str(), &end);
    if (end == s.c_str() || *end != '\0')
        throw ConfigError("key " + key + ": not a number: '" + s + "'");
    return v;
}

double KvMap::get_double(const std::string& key, double fallback) const {
    return has(key) ? get_double(key) : fallback;
}

std::vector<double> KvMap::get_doubles(const std::string& key) const {
    std::istringstream ss(get_string(key));
    std::vector<double> out;
    double v;
    while (ss >> v) out.push_back(v);
    if (!ss.eof())
        throw ConfigError("key " + key + ": malformed number list");
    return out;
}

std::string KvMap::serialize() const {
    std::string out;
    for (const auto& k : order_) {
        out += k;
        out += " = ";
        out += entries_.at(k);
        out += '\n';
    }
    return out;
}

static std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

KvMap KvMap::parse(const std::string& text) {
    KvMap kv;
    std::istringstream ss(text);
    std::string line;
    int lineno = 0;
    while (std::getline(ss, line)) {
        ++lineno;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value'");
        kv.set(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
    }
    return kv;
}

KvMap KvMap::load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open " + path);
    std::stringstream buf;
    buf << f.rdbuf();
    return parse(buf.str());
}

void KvMap::save(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write " + path);
    f << serialize();
}

}  // namespace spider
