#pragma once

#include <map>
#include <string>
#include <vector>

namespace spider {

// Flat `key = value` text files. Used for phantom specs, run configs and
// manifests. Lines starting with '#' and blank lines are ignored. Keys keep
// their dotted structure ("primitive.0.center"); values are raw strings.
class KvMap {
  public:
    void set(const std::string& key, const std::string& value);
    bool has(const std::string& key) const;

    std::string get_string(const std::string& key) const;
    std::string get_string(const std::string& key, const std::string& fallback) const;
    long long get_int(const std::string& key) const;
    long long get_int(const std::string& key, long long fallback) const;
    double get_double(const std::string& key) const;
    double get_double(const std::string& key, double fallback) const;
    std::vector<double> get_doubles(const std::string& key) const;  // whitespace separated

    // Keys in insertion order (stable round trip).
    const std::vector<std::string>& keys() const { return order_; }

    std::string serialize() const;

    static KvMap parse(const std::string& text);
    static KvMap load(const std::string& path);
    void save(const std::string& path) const;

  private:
    std::map<std::string, std::string> entries_;
    std::vector<std::string> order_;
};

std::string format_double(double v);  // shortest round-trip decimal

}  // namespace spider
