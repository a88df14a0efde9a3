#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>

#include "rcombat/mlp.hpp"

using namespace rcombat;

namespace {

FeatureTaxonomy tiny_taxonomy(std::size_t V) {
    std::vector<std::string> bs, ms = {"m0"};
    std::map<std::string, PathologyDirection> dirs = {
        {"m0", PathologyDirection::IncreasesWithPathology}};
    for (std::size_t b = 0; b < V; ++b) bs.push_back("b" + std::to_string(b));
    return FeatureTaxonomy(bs, ms, dirs);
}

/// HC at N(0,1), pathology shifted by `sep`, split across two sites.
CohortDataset separable_cohort(std::size_t n, std::size_t V, double sep,
                               std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    CohortDataset ds;
    ds.taxonomy = tiny_taxonomy(V);
    for (std::size_t j = 0; j < n; ++j) {
        SubjectRecord s;
        s.subject_id = "s" + std::to_string(j);
        s.site_id = j % 2 ? "siteA" : "siteB";
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

NetworkConfig small_config(int input_dim, std::uint64_t seed) {
    NetworkConfig cfg;
    cfg.input_dim = input_dim;
    cfg.hidden = {8, 4};
    cfg.dropout_rate = 0.0;
    cfg.batch_size = 16;
    cfg.max_epochs = 500;
    cfg.early_stop_patience = 100;
    cfg.seed = seed;
    return cfg;
}

}  // namespace

TEST_CASE("within-site standardization properties") {
    CohortDataset site = separable_cohort(24, 4, 0.0, 5).site_subset("siteA");
    Eigen::MatrixXd z = standardize_within_site(site);
    REQUIRE(z.rows() == static_cast<Eigen::Index>(site.n_subjects()));
    REQUIRE(z.cols() == 4);

    // Every feature ends up at sample mean 0, sd 1.
    auto n = static_cast<double>(site.n_subjects());
    for (Eigen::Index v = 0; v < 4; ++v) {
        double mean = z.col(v).mean();
        double sd = std::sqrt((z.col(v).array() - mean).square().sum() / (n - 1.0));
        CHECK(std::abs(mean) < 1e-12);
        CHECK(sd == doctest::Approx(1.0).epsilon(1e-12));
    }

    SUBCASE("an affine site bias cancels out") {
        CohortDataset biased = site;
        for (auto& s : biased.subjects)
            s.features = (1.7 * s.features.array() + 0.4).matrix();
        Eigen::MatrixXd z2 = standardize_within_site(biased);
        CHECK((z2 - z).cwiseAbs().maxCoeff() < 1e-10);
    }

    SUBCASE("zero-variance features map to zero") {
        CohortDataset flat = site;
        for (auto& s : flat.subjects) s.features(2) = 7.0;
        Eigen::MatrixXd z3 = standardize_within_site(flat);
        CHECK(z3.col(2).cwiseAbs().maxCoeff() == 0.0);
    }

    SUBCASE("a single-subject site is rejected") {
        CohortDataset lonely = site;
        lonely.subjects.resize(1);
        CHECK_THROWS_AS(standardize_within_site(lonely), Error);
    }
}

TEST_CASE("backward matches central finite differences") {
    NetworkConfig cfg = small_config(5, 9);
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

    auto loss_at = [&](NetworkState& st) {
        ForwardCache c;
        std::mt19937_64 r(1);  // dropout_rate 0: rng value irrelevant
        forward(st, batch, ForwardMode::Train, &r, &c);
        return weighted_bce_loss(c.logits, labels, weights);
    };

    const double eps = 1e-5;
    for (std::size_t t = 0; t < grads.tensors.size(); ++t) {
        // Spot-check a handful of entries per tensor to keep runtime sane.
        Eigen::Index count = std::min<Eigen::Index>(6, grads.tensors[t].size());
        for (Eigen::Index k = 0; k < count; ++k) {
            NetworkState probe = state;
            probe.params.tensors[t].data()[k] += eps;
            double up = loss_at(probe);
            probe.params.tensors[t].data()[k] -= 2.0 * eps;
            double down = loss_at(probe);
            double fd = (up - down) / (2.0 * eps);
            double an = grads.tensors[t].data()[k];
            CHECK(std::abs(fd - an) <
                  1e-4 * std::max({1.0, std::abs(fd), std::abs(an)}));
        }
    }
}

TEST_CASE("zeroed output layer predicts exactly one half") {
    NetworkConfig cfg = small_config(3, 2);
    NetworkState state = init_network(cfg, 0);
    state.params.tensors[state.out_w_index()].setZero();
    state.params.tensors[state.out_b_index()].setZero();
    Eigen::MatrixXd batch = Eigen::MatrixXd::Random(5, 3);
    Eigen::VectorXd p = forward(state, batch, ForwardMode::Eval);
    for (Eigen::Index j = 0; j < 5; ++j) CHECK(p(j) == doctest::Approx(0.5));
}

TEST_CASE("eval-mode forward is deterministic") {
    NetworkConfig cfg = small_config(4, 3);
    NetworkState state = init_network(cfg, 0);
    Eigen::MatrixXd batch = Eigen::MatrixXd::Random(7, 4);
    Eigen::VectorXd a = forward(state, batch, ForwardMode::Eval);
    Eigen::VectorXd b = forward(state, batch, ForwardMode::Eval);
    CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("inverted dropout keeps the activation scale") {
    NetworkConfig cfg;
    cfg.input_dim = 50;
    cfg.hidden = {400};
    cfg.dropout_rate = 0.5;
    cfg.seed = 4;
    NetworkState state = init_network(cfg, 0);
    std::mt19937_64 rng(21);

    Eigen::MatrixXd batch = Eigen::MatrixXd::Random(120, 50);
    ForwardCache cache;
    forward(state, batch, ForwardMode::Train, &rng, &cache);
    const Eigen::MatrixXd& mask = cache.dropout_mask[0];

    double lo = mask.minCoeff(), hi = mask.maxCoeff();
    CHECK(lo == 0.0);
    CHECK(hi == doctest::Approx(2.0));
    for (Eigen::Index j = 0; j < mask.size(); ++j) {
        bool valid = mask.data()[j] == 0.0 ||
                     std::abs(mask.data()[j] - 2.0) < 1e-12;
        if (!valid) {
            CHECK(valid);
            break;
        }
    }
    // Inverted scaling: the mask has unit mean in expectation.
    CHECK(mask.mean() == doctest::Approx(1.0).epsilon(0.02));

    SUBCASE("train mode without an rng is rejected") {
        CHECK_THROWS_AS(forward(state, batch, ForwardMode::Train, nullptr), Error);
    }
}

TEST_CASE("training overfits a small separable problem") {
    CohortDataset data = separable_cohort(40, 6, 4.0, 31);
    NetworkConfig cfg = small_config(6, 7);
    cfg.hidden = {32, 16};
    TrainingResult result = train(data, data, cfg);
    CHECK(result.best_val_loss < 0.05);
    CHECK(result.best_epoch <= cfg.max_epochs);
    CHECK_FALSE(result.log.empty());

    // The trained detector flags exactly the shifted subjects.
    OutlierPrediction pred = predict_outliers(result.state, data);
    REQUIRE(pred.mask.kind == MaskKind::PerSubject);
    for (std::size_t j = 0; j < data.subjects.size(); ++j) {
        bool predicted_hc = pred.mask.included(static_cast<Eigen::Index>(j), 0);
        CHECK(predicted_hc == (data.subjects[j].group == "HC"));
    }
}

TEST_CASE("training is reproducible under the seed") {
    CohortDataset data = separable_cohort(32, 5, 2.0, 41);
    NetworkConfig cfg = small_config(5, 77);
    cfg.max_epochs = 30;
    cfg.dropout_rate = 0.5;
    TrainingResult a = train(data, data, cfg);
    TrainingResult b = train(data, data, cfg);
    CHECK(weight_hash(a.state) == weight_hash(b.state));
    CHECK(a.best_epoch == b.best_epoch);
    CHECK(a.best_val_loss == b.best_val_loss);

    cfg.seed = 78;
    TrainingResult c = train(data, data, cfg);
    CHECK(weight_hash(a.state) != weight_hash(c.state));
}

TEST_CASE("weighted loss favors healthy controls") {
    Eigen::VectorXd logits(2), labels(2), flat(2), weighted(2);
    logits << -1.0, -1.0;
    labels << 0.0, 1.0;
    flat << 1.0, 1.0;
    weighted << 2.0, 1.0;
    // Misclassified pathology (label 1, logit -1) dominates either way...
    double base = weighted_bce_loss(logits, labels, flat);
    double hc_weighted = weighted_bce_loss(logits, labels, weighted);
    // ...but doubling the HC weight adds exactly one extra HC term.
    double hc_term = std::log1p(std::exp(-1.0)) * 0.5;  // -0.5*log(sigmoid(1))
    CHECK(hc_weighted - base == doctest::Approx(hc_term).epsilon(1e-9));

    // Hand value: both terms at logit 0 give log(2).
    Eigen::VectorXd zero = Eigen::VectorXd::Zero(2);
    CHECK(weighted_bce_loss(zero, labels, flat) ==
          doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("save/load round trip preserves behavior") {
    CohortDataset data = separable_cohort(32, 5, 3.0, 51);
    NetworkConfig cfg = small_config(5, 13);
    cfg.max_epochs = 40;
    TrainingResult trained = train(data, data, cfg);

    auto path = std::filesystem::temp_directory_path() / "rcombat_mlp_test.json";
    save_network(trained.state, path);
    NetworkState loaded = load_network(path);
    std::filesystem::remove(path);

    CHECK(weight_hash(loaded) == weight_hash(trained.state));
    CHECK(loaded.taxonomy_fingerprint == trained.state.taxonomy_fingerprint);
    Eigen::MatrixXd probe = Eigen::MatrixXd::Random(6, 5);
    Eigen::VectorXd pa = forward(trained.state, probe, ForwardMode::Eval);
    Eigen::VectorXd pb = forward(loaded, probe, ForwardMode::Eval);
    CHECK((pa - pb).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("prediction rejects a mismatched taxonomy") {
    CohortDataset data = separable_cohort(32, 5, 3.0, 61);
    NetworkConfig cfg = small_config(5, 19);
    cfg.max_epochs = 10;
    TrainingResult trained = train(data, data, cfg);

    CohortDataset other = data;
    other.taxonomy = tiny_taxonomy(4);  // different fingerprint
    for (auto& s : other.subjects) s.features = Eigen::VectorXd::Zero(4);
    try {
        predict_outliers(trained.state, other);
        FAIL("expected throw");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::TaxonomyMismatch);
    }
}

TEST_CASE("prepare_training_data labels and stacks sites") {
    CohortDataset data = separable_cohort(24, 3, 0.0, 71);
    LabeledMatrix lm = prepare_training_data(data);
    REQUIRE(lm.features.rows() == 24);
    REQUIRE(lm.features.cols() == 3);
    REQUIRE(lm.labels.size() == 24);
    // Rows are stacked one site at a time, each site standardized on its own.
    Eigen::Index row = 0;
    for (const auto& site : data.site_ids()) {
        CohortDataset sd = data.site_subset(site);
        Eigen::MatrixXd z = standardize_within_site(sd);
        for (std::size_t j = 0; j < sd.n_subjects(); ++j, ++row) {
            CHECK((lm.features.row(row) - z.row(static_cast<Eigen::Index>(j)))
                      .cwiseAbs()
                      .maxCoeff() == 0.0);
            CHECK(lm.labels(row) == (sd.subjects[j].group == "HC" ? 0.0 : 1.0));
        }
    }
    CHECK(row == 24);
}
