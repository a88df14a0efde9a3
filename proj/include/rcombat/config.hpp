#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "rcombat/eval.hpp"

namespace rcombat {

/// Flat key-value config with [section] headers; every unspecified key
/// takes the documented default. Keys are addressed as "section.key".
class KeyValueConfig {
public:
    static KeyValueConfig parse_file(const std::filesystem::path& path);
    static KeyValueConfig parse_text(const std::string& text);

    bool has(const std::string& key) const { return values_.count(key) > 0; }
    std::string get(const std::string& key, const std::string& fallback) const;
    double get(const std::string& key, double fallback) const;
    long get(const std::string& key, long fallback) const;
    std::vector<std::string> get_list(const std::string& key,
                                      const std::vector<std::string>& fallback) const;

    void set(const std::string& key, const std::string& value) { values_[key] = value; }
    const std::map<std::string, std::string>& values() const { return values_; }

private:
    std::map<std::string, std::string> values_;
};

/// Everything one run needs, resolved against defaults.
struct RunConfig {
    // paths
    std::filesystem::path pool_path;
    std::filesystem::path reference_path;
    std::filesystem::path out_dir = "out";
    std::filesystem::path model_path;
    // pool generation
    std::size_t pool_hc = 1200;
    std::size_t pool_per_profile = 300;
    std::size_t reference_size = 200;
    // experiment grid
    std::vector<double> ratios = default_disease_ratios();
    std::size_t sites_per_ratio = 40;
    std::size_t site_size = 100;
    SiteEffectRanges effect_ranges;
    // filters
    std::vector<FilterSpec> filters;
    // detector
    NetworkConfig network;
    // size sweep / bootstrap
    std::vector<std::size_t> sweep_sizes = {20, 30, 40, 50, 60};
    std::vector<double> sweep_ratios = {0.5, 0.7, 0.8};
    std::size_t sweep_sites_per_cell = 10;
    BootstrapConfig bootstrap;
    // run
    std::uint64_t seed = 42;
    int threads = 1;
    std::string log_level = "info";

    static RunConfig from_config(const KeyValueConfig& kv);
    static std::string default_config_text();
    /// Stable content hash over the resolved settings (no timestamps).
    std::string hash() const;
};

}  // namespace rcombat
