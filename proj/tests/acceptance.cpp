// End-to-end acceptance harness: one pass/fail line per criterion.
// Exit code = number of failed criteria.

#include <chrono>
#include <cmath>
#include <functional>
#include <iomanip>
#include <iostream>
#include <random>
#include <sstream>
#include <vector>

#include "rcombat/config.hpp"
#include "rcombat/csv_io.hpp"
#include "rcombat/eval.hpp"
#include "rcombat/split.hpp"

using namespace rcombat;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

int g_failures = 0;

void report(int id, const std::string& name, bool ok, const std::string& detail) {
    std::cout << (ok ? "PASS" : "FAIL") << "  " << std::setw(2) << id << "  " << name;
    if (!detail.empty()) std::cout << "  [" << detail << "]";
    std::cout << std::endl;
    if (!ok) ++g_failures;
}

// Seed-stream indices shared with the CLI front end.
constexpr std::uint64_t kSeedModel = 101;
constexpr std::uint64_t kSeedPool = 102;
constexpr std::uint64_t kSeedReference = 103;
constexpr std::uint64_t kSeedGrid = 104;
constexpr std::uint64_t kSeedSweep = 105;
constexpr std::uint64_t kSeedTrainSites = 106;
constexpr std::uint64_t kSeedSplit = 107;
constexpr std::uint64_t kSeedAugment = 108;

struct World {
    RunConfig rc;
    FeatureTaxonomy taxonomy;
    NormativeModel model;
    CohortDataset pool;
    CohortDataset reference;
    std::vector<GridSite> grid;
};

World build_world() {
    World w;
    w.rc = RunConfig::from_config(KeyValueConfig::parse_text(""));  // seed 42
    w.taxonomy = FeatureTaxonomy::default_dmri();
    w.model =
        default_generative_model(w.taxonomy, derive_seed(w.rc.seed, kSeedModel));
    w.pool = generate_pool(w.model, w.taxonomy, w.rc.pool_hc, default_profiles(),
                           w.rc.pool_per_profile, derive_seed(w.rc.seed, kSeedPool));
    w.reference = generate_reference(w.model, w.taxonomy, w.rc.reference_size,
                                     derive_seed(w.rc.seed, kSeedReference));
    w.grid = build_experiment_grid(w.pool, w.model, w.rc.ratios,
                                   w.rc.sites_per_ratio, w.rc.site_size,
                                   derive_seed(w.rc.seed, kSeedGrid),
                                   w.rc.effect_ranges);
    return w;
}

CohortDataset build_training_sites(const World& w) {
    CohortDataset combined;
    combined.taxonomy = w.pool.taxonomy;
    combined.covariate_names = w.pool.covariate_names;
    for (std::size_t i = 0; i < 12; ++i) {
        double ratio = w.rc.ratios[i % w.rc.ratios.size()];
        std::uint64_t seed = derive_seed(w.rc.seed, kSeedTrainSites * 1000 + i);
        CohortDataset site = sample_control_site(w.pool, w.rc.site_size, ratio, seed,
                                                 "train_" + std::to_string(i));
        SiteEffectSample fx =
            sample_site_effects(w.model, w.rc.effect_ranges, derive_seed(seed, 1));
        CohortDataset biased = inject_bias(site, w.model, fx.gamma, fx.delta);
        for (auto& s : biased.subjects) combined.subjects.push_back(std::move(s));
    }
    return combined;
}

NetworkState train_detector(const World& w, const CohortDataset& labeled,
                            std::uint64_t train_seed) {
    CohortDataset augmented =
        augment(labeled, 0.05, 3, derive_seed(w.rc.seed, kSeedAugment));
    SplitResult split = split_dataset(augmented, {0.85, 0.15, 0.0},
                                      derive_seed(w.rc.seed, kSeedSplit));
    NetworkConfig cfg = w.rc.network;
    cfg.seed = train_seed;
    cfg.input_dim = static_cast<int>(labeled.n_features());
    TrainingResult result = train(split.train, split.val, cfg);
    result.state.taxonomy_fingerprint = labeled.taxonomy.fingerprint();
    return std::move(result.state);
}

/// Columns with sample mean 0 and sd exactly 1.
Eigen::MatrixXd standardized_residuals(std::size_t n, std::size_t V,
                                       std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::MatrixXd Z(n, V);
    for (Eigen::Index j = 0; j < Z.rows(); ++j)
        for (Eigen::Index v = 0; v < Z.cols(); ++v) Z(j, v) = normal(rng);
    for (Eigen::Index v = 0; v < Z.cols(); ++v) {
        double m = Z.col(v).mean();
        double sd = std::sqrt((Z.col(v).array() - m).square().sum() /
                              static_cast<double>(n - 1));
        Z.col(v) = (Z.col(v).array() - m) / sd;
    }
    return Z;
}

// ---- criterion 1 ----------------------------------------------------------

void criterion_round_trip(const World& w) {
    auto t0 = Clock::now();
    NormativeModel fit = fit_normative_model(w.reference);
    std::mt19937_64 cov_rng(99);
    std::uniform_real_distribution<double> age(20.0, 80.0);

    const std::size_t V = w.taxonomy.n_features();
    double acc = 0.0;
    Eigen::VectorXd ref_sd = feature_std(w.reference);
    for (int s = 0; s < 20; ++s) {
        Eigen::MatrixXd Z = standardized_residuals(
            100, V, derive_seed(777, static_cast<std::uint64_t>(s)));
        CohortDataset site;
        site.taxonomy = w.taxonomy;
        site.covariate_names = w.reference.covariate_names;
        for (Eigen::Index j = 0; j < 100; ++j) {
            SubjectRecord rec;
            rec.subject_id = "s" + std::to_string(j);
            rec.site_id = "rt" + std::to_string(s);
            rec.group = "HC";
            rec.covariates.resize(3);
            rec.covariates << age(cov_rng), (j % 2) ? 1.0 : 0.0,
                (j % 5) ? 1.0 : 0.0;
            rec.features.resize(static_cast<Eigen::Index>(V));
            for (Eigen::Index v = 0; v < static_cast<Eigen::Index>(V); ++v)
                rec.features(v) = fit.alpha(v) + fit.beta.row(v).dot(rec.covariates) +
                                  fit.sigma(v) * Z(j, v);
            site.subjects.push_back(std::move(rec));
        }
        SiteEffectSample fx = sample_site_effects(
            fit, SiteEffectRanges{}, derive_seed(778, static_cast<std::uint64_t>(s)));
        CohortDataset biased = inject_bias(site, fit, fx.gamma, fx.delta);
        PairwiseResult res =
            pairwise_harmonize(biased, w.reference, FilterSpec::parse("none"));
        acc += std_mae(res.harmonized, site, ref_sd).mean;
    }
    double mean = acc / 20.0;
    double dt = seconds_since(t0);
    std::ostringstream os;
    os << "mean STD_MAE " << mean << ", " << std::fixed << std::setprecision(1) << dt
       << " s";
    report(1, "round-trip harmonization of biased HC-only sites",
           mean < 0.05 && dt < 10.0, os.str());
}

// ---- criteria 6/7: filter properties --------------------------------------

double q7(std::vector<double> v, double p) {
    std::sort(v.begin(), v.end());
    double h = p * static_cast<double>(v.size() - 1);
    auto lo = static_cast<std::size_t>(h);
    double g = h - static_cast<double>(lo);
    if (lo + 1 >= v.size()) return v.back();
    return (1.0 - g) * v[lo] + g * v[lo + 1];
}

double med(std::vector<double> v) { return q7(std::move(v), 0.5); }

std::vector<bool> oracle_zs(const std::vector<double>& x, double T) {
    double mu = 0.0;
    for (double v : x) mu += v;
    mu /= static_cast<double>(x.size());
    double ss = 0.0;
    for (double v : x) ss += (v - mu) * (v - mu);
    double sd = std::sqrt(ss / static_cast<double>(x.size() - 1));
    std::vector<bool> keep(x.size(), true);
    if (sd == 0.0) return keep;
    for (std::size_t j = 0; j < x.size(); ++j) keep[j] = std::abs(x[j] - mu) <= T * sd;
    return keep;
}

std::vector<bool> oracle_iqr(const std::vector<double>& x, double k) {
    double q1 = q7(x, 0.25), q3 = q7(x, 0.75);
    std::vector<bool> keep(x.size(), true);
    for (std::size_t j = 0; j < x.size(); ++j)
        keep[j] = x[j] >= q1 - k * (q3 - q1) && x[j] <= q3 + k * (q3 - q1);
    return keep;
}

std::vector<bool> oracle_mad(const std::vector<double>& x, double T) {
    double m = med(x);
    std::vector<double> dev;
    for (double v : x) dev.push_back(std::abs(v - m));
    double mad = med(dev);
    std::vector<bool> keep(x.size(), true);
    if (mad == 0.0) return keep;
    for (std::size_t j = 0; j < x.size(); ++j)
        keep[j] = 0.6745 * std::abs(x[j] - m) / mad <= T;
    return keep;
}

double sn_scale(const std::vector<double>& x) {
    std::size_t n = x.size();
    std::vector<double> inner;
    for (std::size_t j = 0; j < n; ++j) {
        std::vector<double> d;
        for (std::size_t k = 0; k < n; ++k) d.push_back(std::abs(x[j] - x[k]));
        std::sort(d.begin(), d.end());
        inner.push_back(d[(n - 1) / 2]);
    }
    std::sort(inner.begin(), inner.end());
    return 1.1926 * inner[(n - 1) / 2];
}

std::vector<bool> oracle_sn(const std::vector<double>& x, double T) {
    double sn = sn_scale(x);
    std::vector<bool> keep(x.size(), true);
    if (sn == 0.0) return keep;
    double m = med(x);
    for (std::size_t j = 0; j < x.size(); ++j)
        keep[j] = std::abs(x[j] - m) / sn <= T;
    return keep;
}

double qn_scale(const std::vector<double>& x) {
    std::vector<double> d;
    for (std::size_t j = 0; j < x.size(); ++j)
        for (std::size_t k = j + 1; k < x.size(); ++k)
            d.push_back(std::abs(x[j] - x[k]));
    return 2.2219 * q7(std::move(d), 0.25);
}

std::vector<bool> oracle_qn(const std::vector<double>& x, double T) {
    double qn = qn_scale(x);
    std::vector<bool> keep(x.size(), true);
    if (qn == 0.0) return keep;
    double m = med(x);
    for (std::size_t j = 0; j < x.size(); ++j)
        keep[j] = std::abs(x[j] - m) / qn <= T;
    return keep;
}

void criterion_filter_oracles() {
    std::mt19937_64 rng(6);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    std::uniform_int_distribution<std::size_t> size(4, 50);
    bool exact = true;
    for (int trial = 0; trial < 1000 && exact; ++trial) {
        std::vector<double> x(size(rng));
        for (auto& v : x) {
            v = normal(rng);
            if (uni(rng) < 0.1) v += (uni(rng) < 0.5 ? -6.0 : 6.0);
        }
        exact = filter_zscore(x, 3.0) == oracle_zs(x, 3.0) &&
                filter_iqr(x, 1.5) == oracle_iqr(x, 1.5) &&
                filter_mad(x, 3.5) == oracle_mad(x, 3.5) &&
                filter_sn(x, 3.0) == oracle_sn(x, 3.0) &&
                filter_qn(x, 3.0) == oracle_qn(x, 3.0);
    }

    bool consistent = true;
    for (int rep = 0; rep < 3; ++rep) {
        std::vector<double> x(1000);
        for (auto& v : x) v = normal(rng);
        consistent = consistent && std::abs(sn_scale(x) - 1.0) < 0.10 &&
                     std::abs(qn_scale(x) - 1.0) < 0.10;
    }

    std::size_t zs_ex = 0, mad_ex = 0, iqr_ex = 0, total = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        std::vector<double> x(100);
        for (auto& v : x) v = normal(rng);
        for (bool b : filter_zscore(x, 3.0)) zs_ex += b ? 0 : 1;
        for (bool b : filter_mad(x, 3.5)) mad_ex += b ? 0 : 1;
        for (bool b : filter_iqr(x, 1.5)) iqr_ex += b ? 0 : 1;
        total += 100;
    }
    double n = static_cast<double>(total);
    bool rates = zs_ex / n < 0.01 && mad_ex / n < 0.01 && iqr_ex / n < 0.02;

    std::ostringstream os;
    os << "rates zs " << zs_ex / n << " mad " << mad_ex / n << " iqr " << iqr_ex / n;
    report(6, "statistical filters match brute-force oracles",
           exact && consistent && rates, os.str());
}

void criterion_trimming_filters() {
    std::vector<double> sym = {-2.0, -1.0, 0.0, 1.0, 2.0};
    bool ok =
        filter_mms(sym, PathologyDirection::IncreasesWithPathology, 1e-3) ==
            std::vector<bool>(5, true) &&
        filter_vs(sym, PathologyDirection::IncreasesWithPathology, 0.05) ==
            std::vector<bool>(5, true);

    // Adversarial tolerance 0: must stop at the survivor floor, i.e. after
    // at most n - floor removals, on every random input.
    std::mt19937_64 rng(7);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (int trial = 0; trial < 100 && ok; ++trial) {
        std::vector<double> x(5 + trial % 40);
        for (auto& v : x) v = normal(rng);
        for (auto dir : {PathologyDirection::IncreasesWithPathology,
                         PathologyDirection::DecreasesWithPathology}) {
            auto keep = filter_mms(x, dir, 0.0);
            std::size_t kept = 0;
            for (bool b : keep) kept += b ? 1 : 0;
            std::size_t floor_count = std::max<std::size_t>(
                4, static_cast<std::size_t>(std::ceil(0.2 * double(x.size()))));
            ok = ok && kept == floor_count;
        }
    }

    // Direction map: the contaminated tail goes, the clean tail stays.
    std::vector<double> upper = {1.0, 2.0, 3.0, 4.0, 100.0};
    auto up = filter_mms(upper, PathologyDirection::IncreasesWithPathology, 1e-3);
    auto down = filter_mms(upper, PathologyDirection::DecreasesWithPathology, 1e-3);
    ok = ok && up == std::vector<bool>{1, 1, 1, 1, 0} && !down[0] && down[4];
    std::vector<double> heavy = {-1.0, -0.5, 0.0, 0.5, 1.0,
                                 6.0,  7.0,  8.0, 9.0, 10.0};
    auto vs = filter_vs(heavy, PathologyDirection::IncreasesWithPathology, 0.05);
    ok = ok && !vs.back() && vs.front();

    report(7, "MMS/VS symmetry, termination, and tail direction", ok, "");
}

// ---- criterion 8: MLP numerics --------------------------------------------

CohortDataset separable_cohort(std::size_t n, std::size_t V, double sep,
                               std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<std::string> bundles;
    for (std::size_t b = 0; b < V; ++b) bundles.push_back("b" + std::to_string(b));
    CohortDataset ds;
    ds.taxonomy = FeatureTaxonomy(
        bundles, {"m0"}, {{"m0", PathologyDirection::IncreasesWithPathology}});
    for (std::size_t j = 0; j < n; ++j) {
        SubjectRecord s;
        s.subject_id = "s" + std::to_string(j);
        s.site_id = j % 2 ? "a" : "b";
        bool sick = j % 4 == 0;
        s.group = sick ? "AD" : "HC";
        s.covariates = Eigen::VectorXd::Zero(3);
        s.features.resize(static_cast<Eigen::Index>(V));
        for (Eigen::Index v = 0; v < s.features.size(); ++v)
            s.features(v) = normal(rng) + (sick ? sep : 0.0);
        ds.subjects.push_back(std::move(s));
    }
    return ds;
}

void criterion_mlp_numerics() {
    NetworkConfig cfg;
    cfg.input_dim = 5;
    cfg.hidden = {8, 4};
    cfg.dropout_rate = 0.0;
    cfg.seed = 9;
    NetworkState state = init_network(cfg, 0);
    std::mt19937_64 rng(17);
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::MatrixXd batch(6, 5);
    for (Eigen::Index j = 0; j < batch.size(); ++j) batch.data()[j] = normal(rng);
    Eigen::VectorXd labels(6), weights(6);
    for (int j = 0; j < 6; ++j) {
        labels(j) = j % 2;
        weights(j) = labels(j) == 0.0 ? cfg.hc_penalty_weight : 1.0;
    }
    ForwardCache cache;
    forward(state, batch, ForwardMode::Train, &rng, &cache);
    ParamSet grads = backward(state, cache, batch, labels, weights);
    bool grad_ok = true;
    const double eps = 1e-5;
    for (std::size_t t = 0; t < grads.tensors.size() && grad_ok; ++t) {
        for (Eigen::Index k = 0; k < grads.tensors[t].size(); ++k) {
            NetworkState probe = state;
            auto loss_at = [&]() {
                ForwardCache c;
                std::mt19937_64 r(1);
                forward(probe, batch, ForwardMode::Train, &r, &c);
                return weighted_bce_loss(c.logits, labels, weights);
            };
            probe.params.tensors[t].data()[k] += eps;
            double up = loss_at();
            probe.params.tensors[t].data()[k] -= 2.0 * eps;
            double down = loss_at();
            double fd = (up - down) / (2.0 * eps);
            double an = grads.tensors[t].data()[k];
            if (std::abs(fd - an) >
                1e-4 * std::max({1.0, std::abs(fd), std::abs(an)})) {
                grad_ok = false;
                break;
            }
        }
    }

    Eigen::MatrixXd probe_batch = Eigen::MatrixXd::Random(7, 5);
    bool eval_det = (forward(state, probe_batch, ForwardMode::Eval) -
                     forward(state, probe_batch, ForwardMode::Eval))
                        .cwiseAbs()
                        .maxCoeff() == 0.0;

    // 20-sample separable overfit within 500 epochs.
    CohortDataset tiny = separable_cohort(20, 6, 4.0, 31);
    NetworkConfig ocfg = cfg;
    ocfg.input_dim = 6;
    ocfg.hidden = {32, 16};
    ocfg.batch_size = 16;
    ocfg.max_epochs = 500;
    ocfg.early_stop_patience = 200;
    ocfg.seed = 7;
    TrainingResult fit_a = train(tiny, tiny, ocfg);
    TrainingResult fit_b = train(tiny, tiny, ocfg);
    bool overfit = fit_a.best_val_loss < 0.05;
    bool repro = weight_hash(fit_a.state) == weight_hash(fit_b.state);

    std::ostringstream os;
    os << "overfit loss " << fit_a.best_val_loss;
    report(8, "detector gradients, determinism, overfit, reproducibility",
           grad_ok && eval_det && overfit && repro, os.str());
}

// ---- criterion 9: metric closed forms --------------------------------------

double bhatta_quadrature(double ma, double sa, double mb, double sb) {
    double lo = std::min(ma - 12.0 * sa, mb - 12.0 * sb);
    double hi = std::max(ma + 12.0 * sa, mb + 12.0 * sb);
    const int n = 40000;
    double h = (hi - lo) / n;
    auto f = [&](double x) {
        double pa = std::exp(-0.5 * (x - ma) * (x - ma) / (sa * sa)) /
                    (sa * std::sqrt(2.0 * M_PI));
        double pb = std::exp(-0.5 * (x - mb) * (x - mb) / (sb * sb)) /
                    (sb * std::sqrt(2.0 * M_PI));
        return std::sqrt(pa * pb);
    };
    double acc = f(lo) + f(hi);
    for (int i = 1; i < n; ++i) acc += f(lo + i * h) * (i % 2 ? 4.0 : 2.0);
    return -std::log(acc * h / 3.0);
}

void criterion_metrics() {
    bool ok = bhattacharyya_gaussian(0.0, 1.0, 1.0, 1.0) == 0.125;

    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> mu(-2.0, 2.0), sd(0.3, 2.5);
    for (int t = 0; t < 100 && ok; ++t) {
        double ma = mu(rng), mb = mu(rng), sa = sd(rng), sb = sd(rng);
        ok = std::abs(bhattacharyya_gaussian(ma, sa, mb, sb) -
                      bhatta_quadrature(ma, sa, mb, sb)) < 1e-6;
    }

    // SD recovers constructed shifts, including the published anchors.
    std::normal_distribution<double> normal(0.0, 1.0);
    for (double shift : {-1.31, 1.02, -2.0, 0.5}) {
        std::vector<double> controls(1000), patients(1000);
        for (auto& v : controls) v = normal(rng);
        for (auto& v : patients) v = normal(rng) + shift;
        ok = ok && std::abs(standardized_difference(patients, controls) - shift) < 0.1;
    }
    report(9, "Bhattacharyya closed form and standardized-difference anchors", ok,
           "");
}

// ---- criterion 10: EB properties -------------------------------------------

void eb_oracle(const std::vector<double>& col, double gamma_hat, double gamma_bar,
               double tau_sq, double lambda, double theta, double& g_out,
               double& d2_out) {
    double n = static_cast<double>(col.size());
    double g = gamma_hat, d2 = 1.0;
    for (int it = 0; it < 100000; ++it) {
        double g_next = (n * tau_sq * gamma_hat + d2 * gamma_bar) / (n * tau_sq + d2);
        double ss = 0.0;
        for (double z : col) ss += (z - g_next) * (z - g_next);
        double d2_next = (theta + 0.5 * ss) / (0.5 * n + lambda - 1.0);
        bool done = std::abs(g_next - g) < 1e-13 && std::abs(d2_next - d2) < 1e-13;
        g = g_next;
        d2 = d2_next;
        if (done) break;
    }
    g_out = g;
    d2_out = d2;
}

void criterion_eb() {
    std::mt19937_64 rng(10);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> uni(0.5, 2.0);
    NormativeModel dummy;  // estimate_site_effects only reads n_features
    EBConfig eb;
    eb.tol = 1e-12;
    eb.max_iterations = 100000;

    bool convex = true, fixed_point = true;
    for (int prob = 0; prob < 100 && convex && fixed_point; ++prob) {
        const std::size_t n = 30, V = 12;
        ResidualMatrix rm;
        rm.z.resize(n, V);
        for (std::size_t j = 0; j < n; ++j)
            rm.subject_ids.push_back("s" + std::to_string(j));
        for (Eigen::Index v = 0; v < static_cast<Eigen::Index>(V); ++v) {
            double g = normal(rng), d = uni(rng);
            for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(n); ++j)
                rm.z(j, v) = g + d * normal(rng);
        }
        dummy.alpha = Eigen::VectorXd::Zero(V);
        dummy.zero_variance.assign(V, false);
        FilterMask mask = FilterMask::all_included(n, V);
        SiteEffects fx = estimate_site_effects(rm, mask, dummy, eb);
        for (Eigen::Index v = 0; v < static_cast<Eigen::Index>(V); ++v) {
            double lo = std::min(fx.gamma_hat(v), fx.gamma_bar) - 1e-4;
            double hi = std::max(fx.gamma_hat(v), fx.gamma_bar) + 1e-4;
            convex = convex && fx.gamma_star(v) >= lo && fx.gamma_star(v) <= hi;
            std::vector<double> col(rm.z.col(v).data(), rm.z.col(v).data() + n);
            double g, d2;
            eb_oracle(col, fx.gamma_hat(v), fx.gamma_bar, fx.tau_sq, fx.lambda,
                      fx.theta, g, d2);
            fixed_point = fixed_point && std::abs(fx.gamma_star(v) - g) < 1e-8 &&
                          std::abs(fx.delta_star(v) - std::sqrt(d2)) < 1e-8;
        }
    }

    // Garbage in masked cells must not move the estimates at all.
    const std::size_t n = 40, V = 6;
    ResidualMatrix rm;
    rm.z.resize(n, V);
    for (std::size_t j = 0; j < n; ++j)
        rm.subject_ids.push_back("s" + std::to_string(j));
    for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(n); ++j)
        for (Eigen::Index v = 0; v < static_cast<Eigen::Index>(V); ++v)
            rm.z(j, v) = normal(rng);
    FilterMask mask = FilterMask::all_included(n, V);
    for (Eigen::Index j = 0; j < 8; ++j) mask.per_value(j * 3, j % V) = false;
    dummy.alpha = Eigen::VectorXd::Zero(V);
    dummy.zero_variance.assign(V, false);
    SiteEffects base = estimate_site_effects(rm, mask, dummy, eb);
    ResidualMatrix garbage = rm;
    for (Eigen::Index j = 0; j < 8; ++j) garbage.z(j * 3, j % V) = 1e6;
    SiteEffects poisoned = estimate_site_effects(garbage, mask, dummy, eb);
    bool insensitive =
        (base.gamma_star - poisoned.gamma_star).cwiseAbs().maxCoeff() == 0.0 &&
        (base.delta_star - poisoned.delta_star).cwiseAbs().maxCoeff() == 0.0;

    report(10, "EB shrinkage convexity, fixed point, mask insensitivity",
           convex && fixed_point && insensitive, "");
}

}  // namespace

int main() {
    std::cout << "building shared universe (seed 42)..." << std::endl;
    World w = build_world();

    criterion_round_trip(w);

    // ---- criteria 2-4: the full 240-site grid -----------------------------
    auto t_grid = Clock::now();
    CohortDataset labeled = build_training_sites(w);
    NetworkState det42 = train_detector(w, labeled, w.rc.network.seed);
    std::vector<FilterSpec> all_filters = {FilterSpec::parse("none"),
                                           FilterSpec::parse("oracle-hc"),
                                           FilterSpec::parse("mlp")};
    EvaluationReport grid_report =
        run_experiment(w.grid, w.reference, all_filters, &det42);
    double grid_secs = seconds_since(t_grid);

    {
        std::vector<double> upper = {0.3, 0.5, 0.7, 0.8};
        bool increasing = true;
        for (std::size_t i = 1; i < upper.size(); ++i)
            increasing = increasing && grid_report.mean_std_mae(upper[i], "none") >
                                           grid_report.mean_std_mae(upper[i - 1], "none");
        double oracle_base = grid_report.mean_std_mae(0.03, "oracle-hc");
        double oracle_worst = 0.0;
        for (double r : w.rc.ratios)
            oracle_worst =
                std::max(oracle_worst, grid_report.mean_std_mae(r, "oracle-hc"));
        std::ostringstream os;
        os << "none@0.3-0.8";
        for (double r : upper) os << " " << grid_report.mean_std_mae(r, "none");
        os << ", oracle worst/base " << oracle_worst / oracle_base << ", "
           << std::fixed << std::setprecision(0) << grid_secs << " s";
        report(2, "contamination degrades unfiltered harmonization",
               increasing && oracle_worst <= 2.0 * oracle_base &&
                   grid_report.n_failed() == 0 && grid_secs < 300.0,
               os.str());
    }

    {
        double none_80 = grid_report.worst_case_std_mae(0.8, "none");
        double oracle_80 = grid_report.worst_case_std_mae(0.8, "oracle-hc");
        double none_03 = grid_report.worst_case_std_mae(0.03, "none");
        double oracle_03 = grid_report.worst_case_std_mae(0.03, "oracle-hc");
        bool ok = none_80 >= 1.5 * oracle_80 &&
                  std::abs(none_03 - oracle_03) <= 0.15 * oracle_03;
        std::ostringstream os;
        os << "top10 @0.8 " << none_80 << " vs " << oracle_80 << "; @0.03 "
           << none_03 << " vs " << oracle_03;
        report(3, "worst-case error gap at high contamination", ok, os.str());
    }

    {
        // Median over three detector training seeds.
        std::vector<double> ratios_hi = {0.5, 0.7, 0.8};
        struct SeedResult {
            double closure = 0.0;
            std::map<double, double> mlp_by_ratio;
        };
        std::vector<SeedResult> runs;
        std::vector<std::uint64_t> train_seeds = {w.rc.network.seed, 1042, 2042};
        for (std::size_t i = 0; i < train_seeds.size(); ++i) {
            EvaluationReport rep;
            if (i == 0) {
                rep = grid_report;
            } else {
                NetworkState det = train_detector(w, labeled, train_seeds[i]);
                rep = run_experiment(w.grid, w.reference,
                                     {FilterSpec::parse("mlp")}, &det);
            }
            SeedResult sr;
            double acc = 0.0;
            for (double r : ratios_hi) {
                double none = grid_report.mean_std_mae(r, "none");
                double oracle = grid_report.mean_std_mae(r, "oracle-hc");
                double mlp = rep.mean_std_mae(r, "mlp");
                acc += (none - mlp) / (none - oracle);
            }
            sr.closure = acc / static_cast<double>(ratios_hi.size());
            for (double r : {0.3, 0.5, 0.7, 0.8})
                sr.mlp_by_ratio[r] = rep.mean_std_mae(r, "mlp");
            runs.push_back(std::move(sr));
        }
        std::vector<double> closures;
        for (const auto& r : runs) closures.push_back(r.closure);
        std::vector<double> sorted = closures;
        std::sort(sorted.begin(), sorted.end());
        double median_closure = sorted[1];
        const SeedResult* median_run = nullptr;
        for (const auto& r : runs)
            if (r.closure == median_closure) median_run = &r;
        bool dominated = true;
        for (const auto& [r, mlp] : median_run->mlp_by_ratio)
            dominated = dominated && mlp <= grid_report.mean_std_mae(r, "none");
        std::ostringstream os;
        os << "closures";
        for (double c : closures) os << " " << c;
        os << ", median " << median_closure;
        report(4, "detector closes the oracle gap (median of 3 seeds)",
               dominated && median_closure >= 0.5, os.str());
    }

    // ---- criterion 5: site-size sweep -------------------------------------
    {
        EvaluationReport sweep = run_size_sweep(
            w.pool, w.reference, w.rc.sweep_ratios, w.rc.sweep_sizes, all_filters,
            w.rc.sweep_sites_per_cell, derive_seed(w.rc.seed, kSeedSweep), &det42,
            w.rc.effect_ranges);
        double oracle_20 = sweep.mean_std_mae_at_size(20, 0.8, "oracle-hc");
        double oracle_60 = sweep.mean_std_mae_at_size(60, 0.8, "oracle-hc");
        bool small_worse = oracle_20 > oracle_60;
        bool mlp_wins = true;
        for (std::size_t size : {30, 40, 50, 60})
            for (double r : {0.5, 0.7, 0.8})
                mlp_wins = mlp_wins && sweep.mean_std_mae_at_size(size, r, "mlp") <=
                                           sweep.mean_std_mae_at_size(size, r, "none");
        std::ostringstream os;
        os << "oracle(20,0.8) " << oracle_20 << " vs (60,0.8) " << oracle_60;
        report(5, "site-size sweep trends", small_worse && mlp_wins, os.str());
    }

    criterion_filter_oracles();
    criterion_trimming_filters();
    criterion_mlp_numerics();
    criterion_metrics();
    criterion_eb();

    // ---- criterion 11: bootstrap harness ----------------------------------
    {
        auto t0 = Clock::now();
        BootstrapConfig small = w.rc.bootstrap;
        small.n_iterations = 2;
        EvaluationReport probe_a = run_bootstrap(w.pool, w.reference, small);
        EvaluationReport probe_b = run_bootstrap(w.pool, w.reference, small);
        bool deterministic = probe_a.to_json() == probe_b.to_json();

        EvaluationReport boot = run_bootstrap(w.pool, w.reference, w.rc.bootstrap);
        double secs = seconds_since(t0);
        int wins = 0, metrics = 0;
        for (const auto& row : boot.bootstrap) {
            auto mlp = row.mean_bhattacharyya.find("mlp");
            auto none = row.mean_bhattacharyya.find("none");
            if (mlp == row.mean_bhattacharyya.end() ||
                none == row.mean_bhattacharyya.end())
                continue;
            ++metrics;
            wins += mlp->second <= none->second ? 1 : 0;
        }
        std::ostringstream os;
        os << "mlp <= none on " << wins << "/" << metrics << " metrics, "
           << std::fixed << std::setprecision(0) << secs << " s";
        report(11, "bootstrap harness (detector vs no filtering)",
               deterministic && metrics == 10 && wins >= 7 && secs < 900.0,
               os.str());
    }

    std::cout << (g_failures == 0 ? "ALL CRITERIA PASSED"
                                  : std::to_string(g_failures) + " CRITERIA FAILED")
              << std::endl;
    return g_failures;
}
