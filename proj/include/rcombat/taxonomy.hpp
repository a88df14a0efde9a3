#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "rcombat/errors.hpp"

namespace rcombat {

/// Direction a metric moves under pathology; decides which tail the
/// one-sided trimming filters attack.
enum class PathologyDirection {
    IncreasesWithPathology,
    DecreasesWithPathology,
};

/// Bundle x metric feature space. Features are ordered bundle-major:
/// index(b, m) = b * n_metrics + m, named "<bundle>__<metric>".
class FeatureTaxonomy {
public:
    FeatureTaxonomy() = default;

    FeatureTaxonomy(std::vector<std::string> bundles,
                    std::vector<std::string> metrics,
                    std::map<std::string, PathologyDirection> directions)
        : bundles_(std::move(bundles)),
          metrics_(std::move(metrics)),
          directions_(std::move(directions)) {
        for (const auto& m : metrics_) {
            if (!directions_.count(m))
                fail(ErrorCode::ConfigError,
                     "metric '" + m + "' has no pathological direction");
        }
        feature_names_.reserve(bundles_.size() * metrics_.size());
        for (const auto& b : bundles_)
            for (const auto& m : metrics_)
                feature_names_.push_back(b + "__" + m);
        for (std::size_t v = 0; v < feature_names_.size(); ++v) {
            auto [it, fresh] = index_.emplace(feature_names_[v], v);
            if (!fresh)
                fail(ErrorCode::ConfigError,
                     "duplicate feature name '" + feature_names_[v] + "'");
        }
    }

    std::size_t n_bundles() const { return bundles_.size(); }
    std::size_t n_metrics() const { return metrics_.size(); }
    std::size_t n_features() const { return feature_names_.size(); }

    const std::vector<std::string>& bundles() const { return bundles_; }
    const std::vector<std::string>& metrics() const { return metrics_; }
    const std::vector<std::string>& feature_names() const { return feature_names_; }

    std::size_t feature_index(std::size_t bundle, std::size_t metric) const {
        return bundle * metrics_.size() + metric;
    }
    std::size_t bundle_of(std::size_t feature) const { return feature / metrics_.size(); }
    std::size_t metric_of(std::size_t feature) const { return feature % metrics_.size(); }

    std::size_t feature_index(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end())
            fail(ErrorCode::MissingColumn, "unknown feature '" + name + "'");
        return it->second;
    }

    PathologyDirection direction(const std::string& metric) const {
        auto it = directions_.find(metric);
        if (it == directions_.end())
            fail(ErrorCode::ConfigError, "no direction for metric '" + metric + "'");
        return it->second;
    }
    PathologyDirection direction_of_feature(std::size_t feature) const {
        return direction(metrics_[metric_of(feature)]);
    }

    bool operator==(const FeatureTaxonomy& other) const {
        return bundles_ == other.bundles_ && metrics_ == other.metrics_ &&
               directions_ == other.directions_;
    }
    bool operator!=(const FeatureTaxonomy& other) const { return !(*this == other); }

    /// Stable fingerprint of the feature space (FNV-1a over feature names).
    std::uint64_t fingerprint() const {
        std::uint64_t h = 1469598103934665603ull;
        auto mix = [&h](const std::string& s) {
            for (unsigned char c : s) {
                h ^= c;
                h *= 1099511628211ull;
            }
            h ^= 0xff;
            h *= 1099511628211ull;
        };
        for (const auto& n : feature_names_) mix(n);
        return h;
    }

    /// Default dMRI metric set: diffusivity-style metrics rise with
    /// pathology, anisotropy/density metrics fall.
    static std::map<std::string, PathologyDirection> default_directions() {
        using D = PathologyDirection;
        return {
            {"md", D::IncreasesWithPathology},  {"mdt", D::IncreasesWithPathology},
            {"rd", D::IncreasesWithPathology},  {"rdt", D::IncreasesWithPathology},
            {"fw", D::IncreasesWithPathology},  {"ad", D::IncreasesWithPathology},
            {"adt", D::IncreasesWithPathology}, {"fa", D::DecreasesWithPathology},
            {"fat", D::DecreasesWithPathology}, {"afd", D::DecreasesWithPathology},
        };
    }

    /// 43 bundles x 10 metrics = 430 features.
    static FeatureTaxonomy default_dmri() {
        std::vector<std::string> bundles;
        bundles.reserve(43);
        for (int i = 0; i < 43; ++i) bundles.push_back("bundle" + pad2(i));
        std::vector<std::string> metrics = {"fa",  "fat", "md",  "mdt", "rd",
                                            "rdt", "ad",  "adt", "fw",  "afd"};
        return FeatureTaxonomy(std::move(bundles), std::move(metrics),
                               default_directions());
    }

private:
    static std::string pad2(int i) {
        std::string s = std::to_string(i);
        return s.size() < 2 ? "0" + s : s;
    }

    std::vector<std::string> bundles_;
    std::vector<std::string> metrics_;
    std::map<std::string, PathologyDirection> directions_;
    std::vector<std::string> feature_names_;
    std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace rcombat
