#include "rcombat/filters.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace rcombat {

namespace {

constexpr double kMadConsistency = 0.6745;
constexpr double kSnConsistency = 1.1926;
constexpr double kQnConsistency = 2.2219;

void require_length(const std::vector<double>& column, std::size_t minimum,
                    const char* method) {
    if (column.size() < minimum)
        fail(ErrorCode::ColumnTooShort,
             std::string(method) + " needs at least " + std::to_string(minimum) +
                 " values, got " + std::to_string(column.size()));
}

double mean_of(const std::vector<double>& x) {
    return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

double sample_sd(const std::vector<double>& x, double mean) {
    if (x.size() < 2) return 0.0;
    double ss = 0.0;
    for (double v : x) ss += (v - mean) * (v - mean);
    return std::sqrt(ss / static_cast<double>(x.size() - 1));
}

// Low median: element (n-1)/2 of the sorted sequence.
double low_median_sorted(const std::vector<double>& sorted) {
    return sorted[(sorted.size() - 1) / 2];
}

std::size_t trim_floor(std::size_t n) {
    return std::max<std::size_t>(4, static_cast<std::size_t>(
                                        std::ceil(0.2 * static_cast<double>(n))));
}

}  // namespace

double quantile(std::vector<double> values, double p) {
    if (values.empty()) fail(ErrorCode::EmptyInput, "quantile of empty vector");
    std::sort(values.begin(), values.end());
    double h = p * static_cast<double>(values.size() - 1);
    std::size_t lo = static_cast<std::size_t>(std::floor(h));
    std::size_t hi = std::min(lo + 1, values.size() - 1);
    double frac = h - static_cast<double>(lo);
    return values[lo] + frac * (values[hi] - values[lo]);
}

double median(std::vector<double> values) { return quantile(std::move(values), 0.5); }

std::vector<bool> filter_zscore(const std::vector<double>& column, double threshold) {
    require_length(column, 2, "ZS");
    double mu = mean_of(column);
    double sd = sample_sd(column, mu);
    std::vector<bool> include(column.size(), true);
    if (sd == 0.0) return include;  // fail open on zero dispersion
    for (std::size_t j = 0; j < column.size(); ++j)
        include[j] = std::abs(column[j] - mu) / sd <= threshold;
    return include;
}

std::vector<bool> filter_iqr(const std::vector<double>& column, double k) {
    require_length(column, 4, "IQR");
    double q1 = quantile(column, 0.25);
    double q3 = quantile(column, 0.75);
    double iqr = q3 - q1;
    double lo = q1 - k * iqr;
    double hi = q3 + k * iqr;
    std::vector<bool> include(column.size(), true);
    for (std::size_t j = 0; j < column.size(); ++j)
        include[j] = column[j] >= lo && column[j] <= hi;
    return include;
}

std::vector<bool> filter_mad(const std::vector<double>& column, double threshold) {
    require_length(column, 2, "MAD");
    double med = median(column);
    std::vector<double> dev(column.size());
    for (std::size_t j = 0; j < column.size(); ++j) dev[j] = std::abs(column[j] - med);
    double mad = median(dev);
    std::vector<bool> include(column.size(), true);
    if (mad == 0.0) return include;
    for (std::size_t j = 0; j < column.size(); ++j)
        include[j] = kMadConsistency * dev[j] / mad <= threshold;
    return include;
}

std::vector<bool> filter_sn(const std::vector<double>& column, double threshold) {
    require_length(column, 3, "Sn");
    const std::size_t n = column.size();
    // Double median with the inner median over all k (including k = j),
    // low-median for even counts. O(n^2) is fine at site sizes.
    std::vector<double> inner(n), diffs(n);
    for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t k = 0; k < n; ++k) diffs[k] = std::abs(column[j] - column[k]);
        std::sort(diffs.begin(), diffs.end());
        inner[j] = low_median_sorted(diffs);
    }
    std::sort(inner.begin(), inner.end());
    double sn = kSnConsistency * low_median_sorted(inner);
    std::vector<bool> include(n, true);
    if (sn == 0.0) return include;
    double med = median(column);
    for (std::size_t j = 0; j < n; ++j)
        include[j] = std::abs(column[j] - med) / sn <= threshold;
    return include;
}

std::vector<bool> filter_qn(const std::vector<double>& column, double threshold) {
    require_length(column, 4, "Qn");
    const std::size_t n = column.size();
    std::vector<double> pair_diffs;
    pair_diffs.reserve(n * (n - 1) / 2);
    for (std::size_t j = 0; j < n; ++j)
        for (std::size_t k = j + 1; k < n; ++k)
            pair_diffs.push_back(std::abs(column[j] - column[k]));
    double qn = kQnConsistency * quantile(std::move(pair_diffs), 0.25);
    std::vector<bool> include(n, true);
    if (qn == 0.0) return include;
    double med = median(column);
    for (std::size_t j = 0; j < n; ++j)
        include[j] = std::abs(column[j] - med) / qn <= threshold;
    return include;
}

namespace {

// Shared one-sided trimming loop for MMS and VS. `converged` is evaluated
// on the surviving values each iteration; the most extreme value on the
// pathological tail is removed until convergence or the survivor floor.
template <typename StopFn>
std::vector<bool> trim_pathological_tail(const std::vector<double>& column,
                                         PathologyDirection direction,
                                         const StopFn& converged) {
    const std::size_t n = column.size();
    const std::size_t floor_count = trim_floor(n);
    std::vector<bool> include(n, true);
    std::vector<std::size_t> alive(n);
    std::iota(alive.begin(), alive.end(), 0);

    while (alive.size() > floor_count) {
        std::vector<double> values;
        values.reserve(alive.size());
        for (std::size_t j : alive) values.push_back(column[j]);
        if (converged(values)) break;

        std::size_t worst = 0;
        for (std::size_t i = 1; i < alive.size(); ++i) {
            bool more_extreme =
                direction == PathologyDirection::IncreasesWithPathology
                    ? column[alive[i]] > column[alive[worst]]
                    : column[alive[i]] < column[alive[worst]];
            if (more_extreme) worst = i;
        }
        include[alive[worst]] = false;
        alive.erase(alive.begin() + static_cast<std::ptrdiff_t>(worst));
    }
    return include;
}

}  // namespace

std::vector<bool> filter_mms(const std::vector<double>& column,
                             PathologyDirection direction, double tol) {
    require_length(column, 3, "MMS");
    return trim_pathological_tail(column, direction, [tol](const std::vector<double>& v) {
        double mu = mean_of(v);
        double med = median(v);
        double gap = std::abs(mu - med);
        // Near-zero medians (centered residuals) make the relative test
        // meaningless; fall back to the absolute gap there.
        if (std::abs(med) < 1e-12) return gap < tol;
        return gap / std::abs(med) < tol;
    });
}

std::vector<bool> filter_vs(const std::vector<double>& column,
                            PathologyDirection direction, double tol) {
    require_length(column, 3, "VS");
    return trim_pathological_tail(column, direction, [tol](const std::vector<double>& v) {
        double med = median(v);
        double left = 0.0, right = 0.0;
        std::size_t n_left = 0, n_right = 0;
        for (double x : v) {
            if (x < med) {
                left += med - x;
                ++n_left;
            } else if (x > med) {
                right += x - med;
                ++n_right;
            }
        }
        if (n_left == 0 || n_right == 0) return true;
        left /= static_cast<double>(n_left);
        right /= static_cast<double>(n_right);
        return std::abs(left - right) <= tol * 0.5 * (left + right);
    });
}

std::vector<bool> filter_global_zscore(const ResidualMatrix& residuals,
                                       double threshold) {
    const std::size_t n = residuals.n_subjects();
    const std::size_t V = residuals.n_features();
    if (n < 2) fail(ErrorCode::ColumnTooShort, "G_ZS needs at least 2 subjects");
    Eigen::VectorXd score = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
    for (Eigen::Index v = 0; v < static_cast<Eigen::Index>(V); ++v) {
        auto col = residuals.z.col(v);
        double mu = col.mean();
        double sd = std::sqrt((col.array() - mu).square().sum() /
                              static_cast<double>(n - 1));
        if (sd == 0.0) continue;  // zero-dispersion feature contributes 0
        score += ((col.array() - mu) / sd).abs().matrix();
    }
    score /= static_cast<double>(V);
    std::vector<bool> include(n, true);
    for (std::size_t j = 0; j < n; ++j)
        include[j] = score(static_cast<Eigen::Index>(j)) <= threshold;
    return include;
}

std::vector<bool> filter_global_mad(const ResidualMatrix& residuals, double threshold) {
    const std::size_t n = residuals.n_subjects();
    const std::size_t V = residuals.n_features();
    if (n < 2) fail(ErrorCode::ColumnTooShort, "G_MAD needs at least 2 subjects");
    Eigen::VectorXd score = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
    std::vector<double> col(n), dev(n);
    for (std::size_t v = 0; v < V; ++v) {
        for (std::size_t j = 0; j < n; ++j)
            col[j] = residuals.z(static_cast<Eigen::Index>(j),
                                 static_cast<Eigen::Index>(v));
        double med = median(col);
        for (std::size_t j = 0; j < n; ++j) dev[j] = std::abs(col[j] - med);
        double mad = median(dev);
        if (mad == 0.0) continue;
        for (std::size_t j = 0; j < n; ++j)
            score(static_cast<Eigen::Index>(j)) += kMadConsistency * dev[j] / mad;
    }
    score /= static_cast<double>(V);
    std::vector<bool> include(n, true);
    for (std::size_t j = 0; j < n; ++j)
        include[j] = score(static_cast<Eigen::Index>(j)) <= threshold;
    return include;
}

double FilterSpec::threshold_or_default() const {
    if (!std::isnan(threshold)) return threshold;
    switch (method) {
        case FilterMethod::ZS: return 3.0;
        case FilterMethod::IQR: return 1.5;
        case FilterMethod::MAD: return 3.5;
        case FilterMethod::Sn: return 3.0;
        case FilterMethod::Qn: return 3.0;
        case FilterMethod::G_ZS: return 1.5;
        case FilterMethod::G_MAD: return 3.5;
        case FilterMethod::MLP: return 0.5;
        default: return 0.0;
    }
}

double FilterSpec::tol_or_default() const {
    if (!std::isnan(tol)) return tol;
    return method == FilterMethod::VS ? 0.05 : 1e-3;
}

FilterMethod parse_filter_method(const std::string& name) {
    std::string n;
    for (char c : name) n += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (n == "none") return FilterMethod::None;
    if (n == "zs") return FilterMethod::ZS;
    if (n == "iqr") return FilterMethod::IQR;
    if (n == "mad") return FilterMethod::MAD;
    if (n == "sn") return FilterMethod::Sn;
    if (n == "qn") return FilterMethod::Qn;
    if (n == "mms") return FilterMethod::MMS;
    if (n == "vs") return FilterMethod::VS;
    if (n == "g_zs" || n == "gzs") return FilterMethod::G_ZS;
    if (n == "g_mad" || n == "gmad") return FilterMethod::G_MAD;
    if (n == "mlp") return FilterMethod::MLP;
    if (n == "oracle-hc" || n == "oracle_hc" || n == "hc") return FilterMethod::OracleHC;
    fail(ErrorCode::UnknownMethod, "unknown filter method '" + name + "'");
}

std::string filter_method_name(FilterMethod method) {
    switch (method) {
        case FilterMethod::None: return "none";
        case FilterMethod::ZS: return "zs";
        case FilterMethod::IQR: return "iqr";
        case FilterMethod::MAD: return "mad";
        case FilterMethod::Sn: return "sn";
        case FilterMethod::Qn: return "qn";
        case FilterMethod::MMS: return "mms";
        case FilterMethod::VS: return "vs";
        case FilterMethod::G_ZS: return "g_zs";
        case FilterMethod::G_MAD: return "g_mad";
        case FilterMethod::MLP: return "mlp";
        case FilterMethod::OracleHC: return "oracle-hc";
    }
    return "none";
}

FilterSpec FilterSpec::parse(const std::string& text) {
    FilterSpec spec;
    auto pos = text.find(':');
    if (pos == std::string::npos) {
        spec.method = parse_filter_method(text);
    } else {
        spec.method = parse_filter_method(text.substr(0, pos));
        double value = std::stod(text.substr(pos + 1));
        if (spec.method == FilterMethod::MMS || spec.method == FilterMethod::VS)
            spec.tol = value;
        else
            spec.threshold = value;
    }
    return spec;
}

std::string FilterSpec::to_string() const { return filter_method_name(method); }

FilterMask apply_filter(const ResidualMatrix& residuals, const FilterSpec& spec,
                        const FeatureTaxonomy& taxonomy,
                        const CohortDataset* site_data,
                        const SubjectMaskFn& subject_masker) {
    const std::size_t n = residuals.n_subjects();
    const std::size_t V = residuals.n_features();
    const double T = spec.threshold_or_default();

    FilterMask mask;
    switch (spec.method) {
        case FilterMethod::None:
            return FilterMask::all_included(n, V);
        case FilterMethod::G_ZS:
            mask = FilterMask::from_subject_flags(filter_global_zscore(residuals, T));
            break;
        case FilterMethod::G_MAD:
            mask = FilterMask::from_subject_flags(filter_global_mad(residuals, T));
            break;
        case FilterMethod::OracleHC: {
            if (!site_data)
                fail(ErrorCode::UnknownMethod,
                     "oracle-hc filter requires group labels");
            std::vector<bool> include(n);
            for (std::size_t j = 0; j < n; ++j)
                include[j] = site_data->subjects[j].healthy();
            mask = FilterMask::from_subject_flags(std::move(include));
            break;
        }
        case FilterMethod::MLP: {
            if (!subject_masker || !site_data)
                fail(ErrorCode::UnknownMethod,
                     "mlp filter requires a trained detector");
            mask = FilterMask::from_subject_flags(subject_masker(*site_data));
            break;
        }
        default: {
            mask.kind = MaskKind::PerValue;
            mask.per_value.resize(static_cast<Eigen::Index>(n),
                                  static_cast<Eigen::Index>(V));
            std::vector<double> column(n);
            for (std::size_t v = 0; v < V; ++v) {
                for (std::size_t j = 0; j < n; ++j)
                    column[j] = residuals.z(static_cast<Eigen::Index>(j),
                                            static_cast<Eigen::Index>(v));
                std::vector<bool> include;
                switch (spec.method) {
                    case FilterMethod::ZS: include = filter_zscore(column, T); break;
                    case FilterMethod::IQR: include = filter_iqr(column, T); break;
                    case FilterMethod::MAD: include = filter_mad(column, T); break;
                    case FilterMethod::Sn: include = filter_sn(column, T); break;
                    case FilterMethod::Qn: include = filter_qn(column, T); break;
                    case FilterMethod::MMS:
                        include = filter_mms(column, taxonomy.direction_of_feature(v),
                                             spec.tol_or_default());
                        break;
                    case FilterMethod::VS:
                        include = filter_vs(column, taxonomy.direction_of_feature(v),
                                            spec.tol_or_default());
                        break;
                    default:
                        fail(ErrorCode::UnknownMethod, "unhandled filter method");
                }
                for (std::size_t j = 0; j < n; ++j)
                    mask.per_value(static_cast<Eigen::Index>(j),
                                   static_cast<Eigen::Index>(v)) = include[j];
            }
            break;
        }
    }

    for (std::size_t v = 0; v < V; ++v) {
        std::size_t survivors = 0;
        for (std::size_t j = 0; j < n; ++j) survivors += mask.included(j, v) ? 1 : 0;
        if (survivors < 2)
            fail(ErrorCode::MaskTooAggressive,
                 filter_method_name(spec.method) + " left " +
                     std::to_string(survivors) + " values for feature " +
                     std::to_string(v));
    }
    return mask;
}

}  // namespace rcombat
