#include "rcombat/csv_io.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_set>

namespace rcombat {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::stringstream ss(line);
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    return fields;
}

double parse_real(const std::string& s, std::size_t row, const std::string& col) {
    double value = 0.0;
    const char* begin = s.data();
    const char* end = begin + s.size();
    auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc{} || ptr != end)
        fail(ErrorCode::NonFiniteValue,
             "unparseable value '" + s + "' at row " + std::to_string(row) +
                 ", column '" + col + "'");
    if (!std::isfinite(value))
        fail(ErrorCode::NonFiniteValue,
             "non-finite value at row " + std::to_string(row) + ", column '" + col + "'");
    return value;
}

FeatureTaxonomy infer_taxonomy(const std::vector<std::string>& feature_columns) {
    std::vector<std::string> bundles, metrics;
    for (const auto& name : feature_columns) {
        auto pos = name.rfind("__");
        if (pos == std::string::npos || pos == 0 || pos + 2 >= name.size())
            fail(ErrorCode::MissingColumn,
                 "feature column '" + name + "' is not of the form <bundle>__<metric>");
        std::string bundle = name.substr(0, pos);
        std::string metric = name.substr(pos + 2);
        if (std::find(bundles.begin(), bundles.end(), bundle) == bundles.end())
            bundles.push_back(bundle);
        if (std::find(metrics.begin(), metrics.end(), metric) == metrics.end())
            metrics.push_back(metric);
    }
    auto directions = FeatureTaxonomy::default_directions();
    for (const auto& m : metrics)
        if (!directions.count(m))
            directions[m] = PathologyDirection::IncreasesWithPathology;
    // Keep only the metrics actually present.
    std::map<std::string, PathologyDirection> dirs;
    for (const auto& m : metrics) dirs[m] = directions.at(m);
    FeatureTaxonomy tax(bundles, metrics, dirs);
    if (tax.n_features() != feature_columns.size())
        fail(ErrorCode::MissingColumn,
             "feature columns do not form a full bundle x metric grid");
    for (std::size_t v = 0; v < feature_columns.size(); ++v)
        if (tax.feature_names()[v] != feature_columns[v])
            fail(ErrorCode::MissingColumn,
                 "feature columns are not in bundle-major taxonomy order near '" +
                     feature_columns[v] + "'");
    return tax;
}

}  // namespace

CohortDataset load_cohort(const std::filesystem::path& path,
                          const std::optional<FeatureTaxonomy>& schema) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::IoFailure, "cannot open '" + path.string() + "'");

    std::string line;
    if (!std::getline(in, line))
        fail(ErrorCode::MissingColumn, "empty file '" + path.string() + "'");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto header = split_csv_line(line);

    const std::vector<std::string> fixed = {"subject_id", "site_id", "group"};
    if (header.size() < fixed.size())
        fail(ErrorCode::MissingColumn, "header too short in '" + path.string() + "'");
    for (std::size_t i = 0; i < fixed.size(); ++i)
        if (header[i] != fixed[i])
            fail(ErrorCode::MissingColumn,
                 "expected column '" + fixed[i] + "' at position " + std::to_string(i));

    // Covariate columns run from after 'group' to the first bundle__metric column.
    std::size_t first_feature = fixed.size();
    while (first_feature < header.size() &&
           header[first_feature].rfind("__") == std::string::npos)
        ++first_feature;

    CohortDataset ds;
    ds.covariate_names.assign(header.begin() + fixed.size(),
                              header.begin() + first_feature);
    std::vector<std::string> feature_columns(header.begin() + first_feature,
                                             header.end());
    if (feature_columns.empty())
        fail(ErrorCode::MissingColumn, "no feature columns in '" + path.string() + "'");

    if (schema) {
        if (schema->feature_names() != feature_columns)
            fail(ErrorCode::TaxonomyMismatch,
                 "feature columns do not match the given taxonomy");
        ds.taxonomy = *schema;
    } else {
        ds.taxonomy = infer_taxonomy(feature_columns);
    }

    const std::size_t C = ds.covariate_names.size();
    const std::size_t V = ds.taxonomy.n_features();
    std::unordered_set<std::string> seen_ids;
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto fields = split_csv_line(line);
        if (fields.size() != header.size())
            fail(ErrorCode::MissingColumn,
                 "row " + std::to_string(row) + " has " + std::to_string(fields.size()) +
                     " fields, expected " + std::to_string(header.size()));
        SubjectRecord s;
        s.subject_id = fields[0];
        s.site_id = fields[1];
        s.group = fields[2];
        if (!seen_ids.insert(s.subject_id).second)
            fail(ErrorCode::DuplicateSubjectId,
                 "duplicate subject_id '" + s.subject_id + "' at row " +
                     std::to_string(row));
        s.covariates.resize(static_cast<Eigen::Index>(C));
        for (std::size_t c = 0; c < C; ++c)
            s.covariates(static_cast<Eigen::Index>(c)) =
                parse_real(fields[3 + c], row, ds.covariate_names[c]);
        s.features.resize(static_cast<Eigen::Index>(V));
        for (std::size_t v = 0; v < V; ++v)
            s.features(static_cast<Eigen::Index>(v)) =
                parse_real(fields[3 + C + v], row, ds.taxonomy.feature_names()[v]);
        ds.subjects.push_back(std::move(s));
    }

    if (ds.subjects.empty())
        fail(ErrorCode::EmptySite, "no data rows in '" + path.string() + "'");

    std::map<std::string, std::size_t> per_site;
    for (const auto& s : ds.subjects) ++per_site[s.site_id];
    for (const auto& [site, n] : per_site)
        if (n < 2)
            fail(ErrorCode::EmptySite,
                 "site '" + site + "' has " + std::to_string(n) +
                     " subject(s); at least 2 required");
    return ds;
}

void save_cohort(const CohortDataset& dataset, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) fail(ErrorCode::IoFailure, "cannot write '" + path.string() + "'");

    out << "subject_id,site_id,group";
    for (const auto& c : dataset.covariate_names) out << ',' << c;
    for (const auto& f : dataset.taxonomy.feature_names()) out << ',' << f;
    out << '\n';

    char buf[64];
    auto emit = [&](double x) {
        std::snprintf(buf, sizeof(buf), "%.17g", x);
        out << ',' << buf;
    };
    for (const auto& s : dataset.subjects) {
        out << s.subject_id << ',' << s.site_id << ',' << s.group;
        for (Eigen::Index c = 0; c < s.covariates.size(); ++c) emit(s.covariates(c));
        for (Eigen::Index v = 0; v < s.features.size(); ++v) emit(s.features(v));
        out << '\n';
    }
    if (!out) fail(ErrorCode::IoFailure, "write failed for '" + path.string() + "'");
}

}  // namespace rcombat
