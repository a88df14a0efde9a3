// Command-line front end: simulate / harmonize / train-mlp / evaluate / report.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <optional>
#include <sstream>

#include "rcombat/config.hpp"
#include "rcombat/csv_io.hpp"
#include "rcombat/eval.hpp"
#include "rcombat/report.hpp"
#include "rcombat/split.hpp"

namespace fs = std::filesystem;
using namespace rcombat;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumerical = 4;

int exit_code_for(ErrorCode code) {
    switch (code) {
        case ErrorCode::ConfigError:
        case ErrorCode::UnknownMethod:
        case ErrorCode::InvalidRange:
            return kExitConfig;
        case ErrorCode::RankDeficientDesign:
        case ErrorCode::ZeroResidualVariance:
        case ErrorCode::EBNonConvergence:
        case ErrorCode::NonPositiveDelta:
        case ErrorCode::NonFiniteLoss:
        case ErrorCode::DegenerateBatch:
        case ErrorCode::ZeroReferenceStd:
        case ErrorCode::NonPositiveStd:
        case ErrorCode::DegenerateControls:
        case ErrorCode::MaskTooAggressive:
            return kExitNumerical;
        default:
            return kExitData;
    }
}

std::uint64_t fnv1a(const std::string& text) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

std::string hex64(std::uint64_t h) {
    std::ostringstream os;
    os << std::hex << h;
    return os.str();
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::IoFailure, "cannot open '" + path.string() + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) fail(ErrorCode::IoFailure, "cannot write '" + path.string() + "'");
    out << text;
}

/// The process owns its output directory for the duration of a command.
class OutputLock {
public:
    explicit OutputLock(const fs::path& out_dir) : path_(out_dir / ".lock") {
        fs::create_directories(out_dir);
        if (fs::exists(path_))
            fail(ErrorCode::ConfigError,
                 "output directory is locked by another run (" + path_.string() +
                     "); remove the lock file if that run is dead");
        write_text(path_, "robust-combat\n");
    }
    ~OutputLock() {
        std::error_code ec;
        fs::remove(path_, ec);
    }
    OutputLock(const OutputLock&) = delete;
    OutputLock& operator=(const OutputLock&) = delete;

private:
    fs::path path_;
};

struct GlobalArgs {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out_dir;
    std::optional<int> threads;
};

RunConfig resolve_config(const GlobalArgs& args) {
    KeyValueConfig kv;
    if (!args.config_path.empty()) kv = KeyValueConfig::parse_file(args.config_path);
    RunConfig rc = RunConfig::from_config(kv);
    if (args.seed) {
        rc.seed = *args.seed;
        rc.network.seed = *args.seed;
        rc.bootstrap.seed = *args.seed;
    }
    if (!args.out_dir.empty()) rc.out_dir = args.out_dir;
    if (args.threads) rc.threads = *args.threads;
    return rc;
}

// Fixed seed-stream indices so simulate and evaluate agree on the universe.
constexpr std::uint64_t kSeedModel = 101;
constexpr std::uint64_t kSeedPool = 102;
constexpr std::uint64_t kSeedReference = 103;
constexpr std::uint64_t kSeedGrid = 104;
constexpr std::uint64_t kSeedSweep = 105;
constexpr std::uint64_t kSeedTrainSites = 106;
constexpr std::uint64_t kSeedSplit = 107;
constexpr std::uint64_t kSeedAugment = 108;

struct Universe {
    FeatureTaxonomy taxonomy;
    NormativeModel model;  // generative truth
    CohortDataset pool;
    CohortDataset reference;
};

Universe build_universe(const RunConfig& rc) {
    Universe u;
    u.taxonomy = FeatureTaxonomy::default_dmri();
    u.model = default_generative_model(u.taxonomy, derive_seed(rc.seed, kSeedModel));
    u.pool = generate_pool(u.model, u.taxonomy, rc.pool_hc, default_profiles(),
                           rc.pool_per_profile, derive_seed(rc.seed, kSeedPool));
    u.reference = generate_reference(u.model, u.taxonomy, rc.reference_size,
                                     derive_seed(rc.seed, kSeedReference));
    return u;
}

/// Biased multi-site cohort for detector training, disjoint from the
/// evaluation grid by seed stream.
CohortDataset build_training_sites(const CohortDataset& pool,
                                   const NormativeModel& model, const RunConfig& rc,
                                   std::size_t n_sites) {
    CohortDataset combined;
    combined.taxonomy = pool.taxonomy;
    combined.covariate_names = pool.covariate_names;
    const auto& ratios = rc.ratios;
    for (std::size_t i = 0; i < n_sites; ++i) {
        double ratio = ratios[i % ratios.size()];
        std::uint64_t seed = derive_seed(rc.seed, kSeedTrainSites * 1000 + i);
        std::string site_id = "train_" + std::to_string(i);
        CohortDataset site =
            sample_control_site(pool, rc.site_size, ratio, seed, site_id);
        SiteEffectSample fx =
            sample_site_effects(model, rc.effect_ranges, derive_seed(seed, 1));
        CohortDataset biased = inject_bias(site, model, fx.gamma, fx.delta);
        for (auto& s : biased.subjects) combined.subjects.push_back(std::move(s));
    }
    return combined;
}

NetworkState train_detector(const CohortDataset& labeled_sites, const RunConfig& rc,
                            bool quiet) {
    CohortDataset augmented =
        augment(labeled_sites, 0.05, 3, derive_seed(rc.seed, kSeedAugment));
    SplitResult split =
        split_dataset(augmented, {0.85, 0.15, 0.0}, derive_seed(rc.seed, kSeedSplit));
    NetworkConfig cfg = rc.network;
    cfg.input_dim = static_cast<int>(labeled_sites.n_features());
    TrainingResult result = train(split.train, split.val, cfg);
    if (!quiet)
        std::cout << "detector: best epoch " << result.best_epoch << ", val loss "
                  << result.best_val_loss << ", weight hash "
                  << hex64(weight_hash(result.state)) << "\n";
    return std::move(result.state);
}

bool wants_mlp(const std::vector<FilterSpec>& filters) {
    for (const auto& f : filters)
        if (f.method == FilterMethod::MLP) return true;
    return false;
}

int cmd_simulate(const RunConfig& rc) {
    OutputLock lock(rc.out_dir);
    Universe u = build_universe(rc);
    std::vector<GridSite> grid =
        build_experiment_grid(u.pool, u.model, rc.ratios, rc.sites_per_ratio,
                              rc.site_size, derive_seed(rc.seed, kSeedGrid),
                              rc.effect_ranges);

    save_cohort(u.pool, rc.out_dir / "pool.csv");
    save_cohort(u.reference, rc.out_dir / "reference.csv");
    fs::create_directories(rc.out_dir / "sites");

    nlohmann::json manifest;
    manifest["config_hash"] = rc.hash();
    manifest["master_seed"] = rc.seed;
    manifest["taxonomy_fingerprint"] = hex64(u.taxonomy.fingerprint());
    manifest["n_sites"] = grid.size();
    nlohmann::json site_rows = nlohmann::json::array();
    for (const auto& site : grid) {
        fs::path biased_path = rc.out_dir / "sites" / (site.site_id + ".csv");
        fs::path truth_path = rc.out_dir / "sites" / (site.site_id + "_truth.csv");
        save_cohort(site.biased, biased_path);
        save_cohort(site.ground_truth, truth_path);
        site_rows.push_back({{"site_id", site.site_id},
                             {"disease_ratio", site.disease_ratio},
                             {"n_subjects", site.biased.n_subjects()},
                             {"seed", site.seed},
                             {"biased", fs::relative(biased_path, rc.out_dir).string()},
                             {"ground_truth",
                              fs::relative(truth_path, rc.out_dir).string()},
                             {"biased_hash", hex64(fnv1a(read_text(biased_path)))},
                             {"truth_hash", hex64(fnv1a(read_text(truth_path)))}});
    }
    manifest["sites"] = std::move(site_rows);
    write_text(rc.out_dir / "manifest.json", manifest.dump(2) + "\n");
    std::cout << "wrote " << grid.size() << " sites + pool + reference to "
              << rc.out_dir.string() << "\n";
    return kExitOk;
}

int cmd_harmonize(const RunConfig& rc, const std::string& reference_path,
                  const std::string& input_path, const std::string& filter_name,
                  const std::string& model_path) {
    FilterSpec spec = FilterSpec::parse(filter_name);
    if (spec.method == FilterMethod::MLP && model_path.empty())
        fail(ErrorCode::ConfigError, "filter 'mlp' requires --model <network.json>");

    CohortDataset reference = load_cohort(reference_path);
    CohortDataset site = load_cohort(input_path);
    if (spec.method == FilterMethod::OracleHC && site.hc_subset().n_subjects() == 0)
        fail(ErrorCode::EmptyInput,
             "filter 'oracle-hc' needs at least one subject labeled HC");

    OutputLock lock(rc.out_dir);
    NetworkState mlp;
    SubjectMaskFn masker;
    if (spec.method == FilterMethod::MLP) {
        mlp = load_network(model_path);
        masker = mlp_masker(mlp, spec.threshold_or_default());
    }

    PairwiseResult result = pairwise_harmonize(site, reference, spec, {}, masker);

    std::string stem = fs::path(input_path).stem().string();
    save_cohort(result.harmonized, rc.out_dir / (stem + "_harmonized.csv"));
    write_text(rc.out_dir / (stem + "_effects.json"), result.effects.to_json());

    std::ostringstream mask_csv;
    mask_csv << "subject_id,included_fraction\n";
    const std::size_t V = site.n_features();
    for (std::size_t j = 0; j < site.n_subjects(); ++j) {
        std::size_t kept = 0;
        for (std::size_t v = 0; v < V; ++v) kept += result.mask.included(j, v) ? 1 : 0;
        mask_csv << site.subjects[j].subject_id << ','
                 << static_cast<double>(kept) / static_cast<double>(V) << '\n';
    }
    write_text(rc.out_dir / (stem + "_mask.csv"), mask_csv.str());
    std::cout << "harmonized " << site.n_subjects() << " subjects with filter '"
              << spec.to_string() << "' -> " << rc.out_dir.string() << "\n";
    return kExitOk;
}

int cmd_train_mlp(const RunConfig& rc, const std::string& data_path,
                  const std::string& model_out) {
    CohortDataset labeled;
    RunConfig local = rc;
    if (data_path.empty()) {
        // Self-contained mode: synthesize labeled training sites.
        Universe u = build_universe(rc);
        labeled = build_training_sites(u.pool, u.model, rc, 12);
    } else {
        labeled = load_cohort(data_path);
    }
    local.network.input_dim = static_cast<int>(labeled.n_features());

    OutputLock lock(rc.out_dir);
    NetworkState state = train_detector(labeled, local, /*quiet=*/false);
    state.taxonomy_fingerprint = labeled.taxonomy.fingerprint();
    fs::path out_path =
        model_out.empty() ? rc.out_dir / "mlp.json" : fs::path(model_out);
    save_network(state, out_path);
    std::cout << "saved detector to " << out_path.string() << "\n";
    return kExitOk;
}

int cmd_evaluate(const RunConfig& rc, const std::string& model_path, bool with_sweep,
                 bool with_bootstrap) {
    OutputLock lock(rc.out_dir);
    Universe u = build_universe(rc);
    std::vector<GridSite> grid =
        build_experiment_grid(u.pool, u.model, rc.ratios, rc.sites_per_ratio,
                              rc.site_size, derive_seed(rc.seed, kSeedGrid),
                              rc.effect_ranges);

    NetworkState mlp;
    NetworkState* mlp_ptr = nullptr;
    if (wants_mlp(rc.filters)) {
        if (!model_path.empty()) {
            mlp = load_network(model_path);
        } else {
            CohortDataset labeled = build_training_sites(u.pool, u.model, rc, 12);
            mlp = train_detector(labeled, rc, /*quiet=*/false);
            mlp.taxonomy_fingerprint = labeled.taxonomy.fingerprint();
        }
        mlp_ptr = &mlp;
    }

    EvaluationReport report = run_experiment(grid, u.reference, rc.filters, mlp_ptr);
    report.master_seed = rc.seed;
    report.config_hash = rc.hash();
    write_report_files(report, rc.out_dir, "evaluation");
    std::cout << "grid: " << report.sites.size() << " site evaluations, "
              << report.n_failed() << " failed\n";

    if (with_sweep) {
        EvaluationReport sweep = run_size_sweep(
            u.pool, u.reference, rc.sweep_ratios, rc.sweep_sizes, rc.filters,
            rc.sweep_sites_per_cell, derive_seed(rc.seed, kSeedSweep), mlp_ptr,
            rc.effect_ranges);
        sweep.master_seed = rc.seed;
        sweep.config_hash = rc.hash();
        write_report_files(sweep, rc.out_dir, "size_sweep");
        std::cout << "size sweep: " << sweep.sites.size() << " site evaluations, "
                  << sweep.n_failed() << " failed\n";
    }
    if (with_bootstrap) {
        EvaluationReport boot = run_bootstrap(u.pool, u.reference, rc.bootstrap);
        boot.config_hash = rc.hash();
        write_report_files(boot, rc.out_dir, "bootstrap");
        std::cout << "bootstrap: " << boot.bootstrap.size() << " metric rows\n";
    }
    return kExitOk;
}

int cmd_report(const RunConfig& rc, const std::string& input_path,
               const std::string& stem) {
    EvaluationReport report = EvaluationReport::from_json(read_text(input_path));
    OutputLock lock(rc.out_dir);
    write_report_files(report, rc.out_dir, stem);
    std::cout << "rendered report '" << stem << "' to " << rc.out_dir.string() << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Robust multi-site harmonization of tabular dMRI features"};
    app.require_subcommand(0, 1);
    app.fallthrough();

    GlobalArgs args;
    bool print_config = false;
    std::uint64_t seed_arg = 0;
    int threads_arg = 0;
    app.add_option("--config", args.config_path, "Run configuration file");
    auto* seed_opt = app.add_option("--seed", seed_arg, "Master seed override");
    app.add_option("--out", args.out_dir, "Output directory override");
    auto* threads_opt = app.add_option("--threads", threads_arg, "Worker threads");
    app.add_flag("--print-config", print_config,
                 "Print the default configuration and exit");

    auto* sim = app.add_subcommand("simulate", "Generate the synthetic site grid");
    std::string sim_ratios;
    long sim_sites_per_ratio = -1;
    sim->add_option("--ratios", sim_ratios, "Comma-separated disease ratios");
    sim->add_option("--sites-per-ratio", sim_sites_per_ratio, "Sites per ratio");

    auto* harm = app.add_subcommand("harmonize", "Harmonize one site to a reference");
    std::string harm_reference, harm_input, harm_filter = "none", harm_model;
    harm->add_option("--reference", harm_reference, "Reference cohort CSV")
        ->required();
    harm->add_option("--input", harm_input, "Site cohort CSV")->required();
    harm->add_option("--filter", harm_filter, "Filter spec, e.g. mad or mad:4.0");
    harm->add_option("--model", harm_model, "Trained detector (for --filter mlp)");

    auto* tr = app.add_subcommand("train-mlp", "Train the outlier detector");
    std::string tr_data, tr_model_out;
    tr->add_option("--data", tr_data,
                   "Labeled multi-site cohort CSV (default: synthesize one)");
    tr->add_option("--model-out", tr_model_out, "Where to write the network");

    auto* ev = app.add_subcommand("evaluate", "Run the experiment grid");
    std::string ev_model;
    bool ev_sweep = false, ev_bootstrap = false;
    ev->add_option("--model", ev_model, "Pretrained detector (skips training)");
    ev->add_flag("--sweep", ev_sweep, "Also run the site-size sweep");
    ev->add_flag("--bootstrap", ev_bootstrap, "Also run the site bootstrap");

    auto* rep = app.add_subcommand("report", "Render tables + SVG from a report JSON");
    std::string rep_input, rep_stem = "report";
    rep->add_option("--input", rep_input, "Evaluation report JSON")->required();
    rep->add_option("--stem", rep_stem, "Output file stem");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitConfig;
    }

    if (print_config) {
        std::cout << RunConfig::default_config_text();
        return kExitOk;
    }
    if (app.get_subcommands().empty()) {
        std::cerr << app.help();
        return kExitConfig;
    }

    try {
        if (seed_opt->count() > 0) args.seed = seed_arg;
        if (threads_opt->count() > 0) args.threads = threads_arg;
        RunConfig rc = resolve_config(args);

        if (sim->parsed()) {
            if (!sim_ratios.empty()) {
                rc.ratios.clear();
                std::stringstream ss(sim_ratios);
                std::string item;
                while (std::getline(ss, item, ','))
                    if (!item.empty()) rc.ratios.push_back(std::stod(item));
                if (rc.ratios.empty())
                    fail(ErrorCode::ConfigError, "--ratios parsed to nothing");
            }
            if (sim_sites_per_ratio >= 0)
                rc.sites_per_ratio = static_cast<std::size_t>(sim_sites_per_ratio);
            return cmd_simulate(rc);
        }
        if (harm->parsed())
            return cmd_harmonize(rc, harm_reference, harm_input, harm_filter,
                                 harm_model);
        if (tr->parsed()) return cmd_train_mlp(rc, tr_data, tr_model_out);
        if (ev->parsed()) return cmd_evaluate(rc, ev_model, ev_sweep, ev_bootstrap);
        if (rep->parsed()) return cmd_report(rc, rep_input, rep_stem);
        return kExitConfig;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code_for(e.code());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    }
}
