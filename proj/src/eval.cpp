#include "rcombat/eval.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <limits>
#include <numeric>
#include <sstream>

#include "rcombat/split.hpp"

namespace rcombat {

Eigen::VectorXd feature_std(const CohortDataset& dataset) {
    const std::size_t n = dataset.n_subjects();
    Eigen::MatrixXd X = dataset.feature_matrix();
    Eigen::VectorXd sd(X.cols());
    for (Eigen::Index v = 0; v < X.cols(); ++v) {
        double mu = X.col(v).mean();
        sd(v) = n >= 2 ? std::sqrt((X.col(v).array() - mu).square().sum() /
                                   static_cast<double>(n - 1))
                       : 0.0;
    }
    return sd;
}

StdMae std_mae(const CohortDataset& harmonized, const CohortDataset& ground_truth,
               const Eigen::VectorXd& ref_std) {
    if (harmonized.n_subjects() != ground_truth.n_subjects())
        fail(ErrorCode::SubjectMismatch, "subject counts differ");
    for (std::size_t j = 0; j < harmonized.n_subjects(); ++j)
        if (harmonized.subjects[j].subject_id != ground_truth.subjects[j].subject_id)
            fail(ErrorCode::SubjectMismatch,
                 "subject order differs at index " + std::to_string(j));
    const std::size_t V = harmonized.n_features();
    if (static_cast<std::size_t>(ref_std.size()) != V)
        fail(ErrorCode::SubjectMismatch, "reference std length mismatch");

    StdMae out;
    out.per_feature.resize(static_cast<Eigen::Index>(V));
    const double n = static_cast<double>(harmonized.n_subjects());
    double sum = 0.0;
    std::size_t used = 0;
    for (std::size_t v = 0; v < V; ++v) {
        const Eigen::Index vi = static_cast<Eigen::Index>(v);
        if (!(ref_std(vi) > 0.0)) {
            out.per_feature(vi) = std::numeric_limits<double>::quiet_NaN();
            continue;
        }
        double acc = 0.0;
        for (std::size_t j = 0; j < harmonized.n_subjects(); ++j)
            acc += std::abs(
                harmonized.subjects[j].features(vi) - ground_truth.subjects[j].features(vi));
        out.per_feature(vi) = acc / n / ref_std(vi);
        sum += out.per_feature(vi);
        ++used;
    }
    if (used == 0)
        fail(ErrorCode::ZeroReferenceStd, "no feature has positive reference std");
    out.mean = sum / static_cast<double>(used);
    return out;
}

double worst_case(const std::vector<double>& values, double fraction) {
    if (values.empty()) fail(ErrorCode::EmptyInput, "worst_case of empty vector");
    std::vector<double> sorted = values;
    std::sort(sorted.begin(), sorted.end(), std::greater<>());
    std::size_t k = static_cast<std::size_t>(
        std::ceil(fraction * static_cast<double>(sorted.size())));
    k = std::clamp<std::size_t>(k, 1, sorted.size());
    return std::accumulate(sorted.begin(), sorted.begin() + static_cast<long>(k), 0.0) /
           static_cast<double>(k);
}

double bhattacharyya_gaussian(double mean_a, double std_a, double mean_b, double std_b) {
    if (!(std_a > 0.0) || !(std_b > 0.0))
        fail(ErrorCode::NonPositiveStd, "Bhattacharyya needs positive stds");
    const double va = std_a * std_a;
    const double vb = std_b * std_b;
    const double dm = mean_a - mean_b;
    return 0.25 * dm * dm / (va + vb) + 0.25 * std::log(0.25 * (va / vb + vb / va + 2.0));
}

double standardized_difference(const std::vector<double>& patients,
                               const std::vector<double>& controls) {
    if (patients.size() < 2 || controls.size() < 2)
        fail(ErrorCode::DegenerateControls, "both samples need >= 2 values");
    auto mean = [](const std::vector<double>& x) {
        return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
    };
    double mc = mean(controls);
    double ss = 0.0;
    for (double v : controls) ss += (v - mc) * (v - mc);
    double sd = std::sqrt(ss / static_cast<double>(controls.size() - 1));
    if (!(sd > 0.0)) fail(ErrorCode::DegenerateControls, "control std is zero");
    return (mean(patients) - mc) / sd;
}

SubjectMaskFn mlp_masker(NetworkState& state, double threshold) {
    return [&state, threshold](const CohortDataset& site) {
        auto pred = predict_outliers(state, site, threshold);
        return pred.mask.per_subject;
    };
}

namespace {

void audit_mask(SiteEvalRecord& rec, const FilterMask& mask, const CohortDataset& site) {
    const std::size_t n = site.n_subjects();
    const std::size_t V = site.n_features();
    for (std::size_t j = 0; j < n; ++j) {
        bool hc = site.subjects[j].healthy();
        (hc ? rec.n_hc : rec.n_pathology) += 1;
        bool excluded;
        if (mask.kind == MaskKind::PerSubject) {
            excluded = !mask.per_subject[j];
        } else {
            std::size_t masked = 0;
            for (std::size_t v = 0; v < V; ++v) masked += mask.included(j, v) ? 0 : 1;
            excluded = masked * 2 > V;  // majority of values rejected
        }
        if (excluded) (hc ? rec.excluded_hc : rec.excluded_pathology) += 1;
    }
}

void evaluate_site(std::vector<SiteEvalRecord>& out, const GridSite& site,
                   const NormativeModel& model, const Eigen::VectorXd& ref_std,
                   const FilterSpec& spec, const SubjectMaskFn& masker,
                   const EBConfig& eb) {
    SiteEvalRecord rec;
    rec.site_id = site.site_id;
    rec.disease_ratio = site.disease_ratio;
    rec.site_size = site.biased.n_subjects();
    rec.filter = filter_method_name(spec.method);
    try {
        PairwiseResult result = pairwise_harmonize(site.biased, model, spec, eb, masker);
        StdMae score = std_mae(result.harmonized, site.ground_truth, ref_std);
        rec.mean_std_mae = score.mean;
        rec.per_feature_std_mae.assign(score.per_feature.data(),
                                       score.per_feature.data() +
                                           score.per_feature.size());
        audit_mask(rec, result.mask, site.biased);
    } catch (const Error& e) {
        rec.failed = true;
        rec.error = e.what();
    }
    out.push_back(std::move(rec));
}

std::string hash_string(const std::string& text) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ull;
    }
    std::ostringstream os;
    os << std::hex << h;
    return os.str();
}

}  // namespace

EvaluationReport run_experiment(const std::vector<GridSite>& grid,
                                const CohortDataset& reference,
                                const std::vector<FilterSpec>& filters,
                                NetworkState* mlp, const EBConfig& eb) {
    NormativeModel model = fit_normative_model(reference);
    Eigen::VectorXd ref_std = feature_std(reference);
    SubjectMaskFn masker;
    if (mlp) masker = mlp_masker(*mlp);

    EvaluationReport report;
    std::ostringstream cfg;
    cfg << "experiment|sites=" << grid.size() << "|filters=";
    for (const auto& f : filters) cfg << filter_method_name(f.method) << ",";
    report.config_hash = hash_string(cfg.str());

    for (const auto& site : grid)
        for (const auto& spec : filters)
            evaluate_site(report.sites, site, model, ref_std, spec, masker, eb);
    return report;
}

EvaluationReport run_size_sweep(const CohortDataset& pool,
                                const CohortDataset& reference,
                                const std::vector<double>& ratios,
                                const std::vector<std::size_t>& sizes,
                                const std::vector<FilterSpec>& filters,
                                std::size_t sites_per_cell, std::uint64_t seed,
                                NetworkState* mlp, const SiteEffectRanges& ranges) {
    NormativeModel model = fit_normative_model(reference);
    Eigen::VectorXd ref_std = feature_std(reference);
    SubjectMaskFn masker;
    if (mlp) masker = mlp_masker(*mlp);

    EvaluationReport report;
    report.master_seed = seed;
    std::ostringstream cfg;
    cfg << "size_sweep|cells=" << ratios.size() * sizes.size()
        << "|per_cell=" << sites_per_cell;
    report.config_hash = hash_string(cfg.str());

    std::uint64_t index = 0;
    for (std::size_t size : sizes) {
        for (double ratio : ratios) {
            for (std::size_t k = 0; k < sites_per_cell; ++k, ++index) {
                GridSite site;
                site.disease_ratio = ratio;
                site.seed = derive_seed(seed, index);
                site.site_id = "sweep_n" + std::to_string(size) + "_r" +
                               std::to_string(static_cast<int>(ratio * 100)) + "_" +
                               std::to_string(k);
                site.ground_truth =
                    sample_control_site(pool, size, ratio, site.seed, site.site_id);
                site.effects =
                    sample_site_effects(model, ranges, derive_seed(site.seed, 1));
                site.biased = inject_bias(site.ground_truth, model, site.effects.gamma,
                                          site.effects.delta);
                for (const auto& spec : filters)
                    evaluate_site(report.sites, site, model, ref_std, spec, masker,
                                  {});
            }
        }
    }
    return report;
}

EvaluationReport run_bootstrap(const CohortDataset& pool,
                               const CohortDataset& reference,
                               const BootstrapConfig& config) {
    NormativeModel model = fit_normative_model(reference);
    const auto& taxonomy = pool.taxonomy;
    const std::size_t n_metrics = taxonomy.n_metrics();

    EvaluationReport report;
    report.master_seed = config.seed;
    std::ostringstream cfg;
    cfg << "bootstrap|iters=" << config.n_iterations
        << "|heldout=" << config.heldout_per_iter
        << "|sites=" << config.sites_per_iter << "|n=" << config.site_size;
    report.config_hash = hash_string(cfg.str());

    // Reference HC moments per feature.
    Eigen::MatrixXd R = reference.feature_matrix();
    Eigen::VectorXd ref_mean(R.cols()), ref_sd = feature_std(reference);
    for (Eigen::Index v = 0; v < R.cols(); ++v) ref_mean(v) = R.col(v).mean();

    std::map<std::string, std::vector<double>> sums;  // filter -> per-metric sums
    std::map<std::string, std::vector<std::size_t>> counts;
    for (const char* f : {"none", "mlp"}) {
        sums[f].assign(n_metrics, 0.0);
        counts[f].assign(n_metrics, 0);
    }

    for (int iter = 0; iter < config.n_iterations; ++iter) {
        std::uint64_t iter_seed = derive_seed(config.seed, static_cast<std::uint64_t>(iter));

        std::vector<GridSite> sites;
        const auto& ratios = default_disease_ratios();
        for (std::size_t s = 0; s < config.sites_per_iter; ++s) {
            GridSite site;
            site.disease_ratio = ratios[s % ratios.size()];
            site.seed = derive_seed(iter_seed, s);
            site.site_id = "boot" + std::to_string(iter) + "_s" + std::to_string(s);
            site.ground_truth = sample_control_site(pool, config.site_size,
                                                    site.disease_ratio, site.seed,
                                                    site.site_id);
            site.effects =
                sample_site_effects(model, config.ranges, derive_seed(site.seed, 1));
            site.biased = inject_bias(site.ground_truth, model, site.effects.gamma,
                                      site.effects.delta);
            sites.push_back(std::move(site));
        }

        std::vector<std::size_t> order(sites.size());
        std::iota(order.begin(), order.end(), 0);
        std::mt19937_64 rng(derive_seed(iter_seed, 9999));
        std::shuffle(order.begin(), order.end(), rng);
        std::vector<bool> heldout(sites.size(), false);
        for (std::size_t k = 0; k < config.heldout_per_iter && k < sites.size(); ++k)
            heldout[order[k]] = true;

        CohortDataset train_pool;
        train_pool.taxonomy = taxonomy;
        train_pool.covariate_names = pool.covariate_names;
        for (std::size_t s = 0; s < sites.size(); ++s) {
            if (heldout[s]) continue;
            for (auto subj : sites[s].biased.subjects) {
                subj.subject_id = sites[s].site_id + "/" + subj.subject_id;
                train_pool.subjects.push_back(std::move(subj));
            }
        }
        NetworkConfig mlp_cfg = config.mlp;
        mlp_cfg.seed = derive_seed(iter_seed, 777);
        auto splits = split_dataset(train_pool, {0.85, 0.15, 0.0}, mlp_cfg.seed);
        TrainingResult trained = train(splits.train, splits.val, mlp_cfg);
        SubjectMaskFn masker = mlp_masker(trained.state);

        for (std::size_t s = 0; s < sites.size(); ++s) {
            if (!heldout[s]) continue;
            for (const char* fname : {"none", "mlp"}) {
                FilterSpec spec;
                spec.method = parse_filter_method(fname);
                PairwiseResult result =
                    pairwise_harmonize(sites[s].biased, model, spec, {}, masker);
                CohortDataset hc = result.harmonized.hc_subset();
                Eigen::MatrixXd H = hc.feature_matrix();
                // Per metric: Gaussian Bhattacharyya per bundle, averaged.
                for (std::size_t m = 0; m < n_metrics; ++m) {
                    double acc = 0.0;
                    std::size_t used = 0;
                    for (std::size_t b = 0; b < taxonomy.n_bundles(); ++b) {
                        const Eigen::Index vi =
                            static_cast<Eigen::Index>(taxonomy.feature_index(b, m));
                        double mu = H.col(vi).mean();
                        double sd = std::sqrt((H.col(vi).array() - mu).square().sum() /
                                              static_cast<double>(H.rows() - 1));
                        if (!(sd > 0.0) || !(ref_sd(vi) > 0.0)) continue;
                        acc += bhattacharyya_gaussian(mu, sd, ref_mean(vi), ref_sd(vi));
                        ++used;
                    }
                    if (used > 0) {
                        sums[fname][m] += acc / static_cast<double>(used);
                        counts[fname][m] += 1;
                    }
                }
            }
        }
    }

    for (std::size_t m = 0; m < n_metrics; ++m) {
        BootstrapMetricRow row;
        row.metric = taxonomy.metrics()[m];
        for (const char* f : {"none", "mlp"})
            row.mean_bhattacharyya[f] =
                counts[f][m] ? sums[f][m] / static_cast<double>(counts[f][m]) : 0.0;
        report.bootstrap.push_back(std::move(row));
    }
    return report;
}

namespace {

bool cell_match(const SiteEvalRecord& rec, double ratio, const std::string& filter) {
    return !rec.failed && rec.filter == filter &&
           std::abs(rec.disease_ratio - ratio) < 1e-9;
}

}  // namespace

double EvaluationReport::mean_std_mae(double ratio, const std::string& filter) const {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& rec : sites)
        if (cell_match(rec, ratio, filter)) {
            sum += rec.mean_std_mae;
            ++n;
        }
    if (n == 0) fail(ErrorCode::EmptyInput, "no records for requested cell");
    return sum / static_cast<double>(n);
}

double EvaluationReport::mean_std_mae_at_size(std::size_t size, double ratio,
                                              const std::string& filter) const {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& rec : sites)
        if (cell_match(rec, ratio, filter) && rec.site_size == size) {
            sum += rec.mean_std_mae;
            ++n;
        }
    if (n == 0) fail(ErrorCode::EmptyInput, "no records for requested cell");
    return sum / static_cast<double>(n);
}

double EvaluationReport::worst_case_std_mae(double ratio, const std::string& filter,
                                            double fraction) const {
    std::vector<double> pooled;
    for (const auto& rec : sites)
        if (cell_match(rec, ratio, filter))
            for (double v : rec.per_feature_std_mae)
                if (std::isfinite(v)) pooled.push_back(v);
    return worst_case(pooled, fraction);
}

std::size_t EvaluationReport::n_failed() const {
    std::size_t n = 0;
    for (const auto& rec : sites) n += rec.failed ? 1 : 0;
    return n;
}

std::string EvaluationReport::to_json() const {
    nlohmann::json j;
    j["master_seed"] = master_seed;
    j["config_hash"] = config_hash;
    j["n_failed"] = n_failed();
    nlohmann::json site_rows = nlohmann::json::array();
    for (const auto& rec : sites) {
        nlohmann::json r = {{"site_id", rec.site_id},
                            {"disease_ratio", rec.disease_ratio},
                            {"site_size", rec.site_size},
                            {"filter", rec.filter},
                            {"mean_std_mae", rec.mean_std_mae},
                            {"n_hc", rec.n_hc},
                            {"n_pathology", rec.n_pathology},
                            {"excluded_hc", rec.excluded_hc},
                            {"excluded_pathology", rec.excluded_pathology},
                            {"failed", rec.failed}};
        if (rec.failed) r["error"] = rec.error;
        if (!rec.per_feature_std_mae.empty()) {
            nlohmann::json pf = nlohmann::json::array();
            for (double v : rec.per_feature_std_mae)
                pf.push_back(std::isfinite(v) ? nlohmann::json(v)
                                              : nlohmann::json(nullptr));
            r["per_feature_std_mae"] = std::move(pf);
        }
        site_rows.push_back(std::move(r));
    }
    j["sites"] = std::move(site_rows);
    nlohmann::json boot = nlohmann::json::array();
    for (const auto& row : bootstrap)
        boot.push_back({{"metric", row.metric},
                        {"mean_bhattacharyya", row.mean_bhattacharyya}});
    j["bootstrap"] = std::move(boot);
    return j.dump(2);
}

EvaluationReport EvaluationReport::from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::IoFailure, std::string("bad report json: ") + e.what());
    }
    EvaluationReport report;
    try {
        report.master_seed = j.value("master_seed", std::uint64_t{0});
        report.config_hash = j.value("config_hash", std::string{});
        for (const auto& r : j.value("sites", nlohmann::json::array())) {
            SiteEvalRecord rec;
            rec.site_id = r.value("site_id", std::string{});
            rec.disease_ratio = r.value("disease_ratio", 0.0);
            rec.site_size = r.value("site_size", std::size_t{0});
            rec.filter = r.value("filter", std::string{});
            rec.mean_std_mae = r.value("mean_std_mae", 0.0);
            rec.n_hc = r.value("n_hc", std::size_t{0});
            rec.n_pathology = r.value("n_pathology", std::size_t{0});
            rec.excluded_hc = r.value("excluded_hc", std::size_t{0});
            rec.excluded_pathology = r.value("excluded_pathology", std::size_t{0});
            rec.failed = r.value("failed", false);
            rec.error = r.value("error", std::string{});
            if (r.contains("per_feature_std_mae"))
                for (const auto& v : r["per_feature_std_mae"])
                    rec.per_feature_std_mae.push_back(
                        v.is_null() ? std::numeric_limits<double>::quiet_NaN()
                                    : v.get<double>());
            report.sites.push_back(std::move(rec));
        }
        for (const auto& b : j.value("bootstrap", nlohmann::json::array())) {
            BootstrapMetricRow row;
            row.metric = b.value("metric", std::string{});
            // Bind before .items(): iterating a temporary would dangle.
            const nlohmann::json distances =
                b.value("mean_bhattacharyya", nlohmann::json::object());
            for (const auto& [f, v] : distances.items())
                row.mean_bhattacharyya[f] = v.get<double>();
            report.bootstrap.push_back(std::move(row));
        }
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::IoFailure, std::string("bad report json: ") + e.what());
    }
    return report;
}

std::string EvaluationReport::to_csv() const {
    // One row per (ratio, size, filter) cell.
    std::map<std::tuple<double, std::size_t, std::string>,
             std::pair<std::vector<double>, std::vector<double>>>
        cells;  // cell -> (site means, pooled per-feature values)
    for (const auto& rec : sites) {
        if (rec.failed) continue;
        auto& cell = cells[{rec.disease_ratio, rec.site_size, rec.filter}];
        cell.first.push_back(rec.mean_std_mae);
        for (double v : rec.per_feature_std_mae)
            if (std::isfinite(v)) cell.second.push_back(v);
    }
    std::ostringstream os;
    if (!cells.empty()) {
        os << "disease_ratio,site_size,filter,n_sites,mean_std_mae,top10_std_mae\n";
        for (const auto& [key, cell] : cells) {
            double mean = std::accumulate(cell.first.begin(), cell.first.end(), 0.0) /
                          static_cast<double>(cell.first.size());
            os << std::get<0>(key) << ',' << std::get<1>(key) << ','
               << std::get<2>(key) << ',' << cell.first.size() << ',' << mean << ','
               << (cell.second.empty() ? 0.0 : worst_case(cell.second, 0.10)) << '\n';
        }
    }
    if (!bootstrap.empty()) {
        os << "statistic,metric";
        std::size_t max_filters = 0;
        for (const auto& row : bootstrap)
            max_filters = std::max(max_filters, row.mean_bhattacharyya.size());
        for (std::size_t i = 0; i < max_filters; ++i)
            os << ",filter,mean_bhattacharyya";
        os << '\n';
        for (const auto& row : bootstrap) {
            os << "bhattacharyya," << row.metric;
            for (const auto& [f, v] : row.mean_bhattacharyya) os << ',' << f << ',' << v;
            os << '\n';
        }
    }
    return os.str();
}

}  // namespace rcombat
