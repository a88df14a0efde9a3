#include "rcombat/combat.hpp"

#include <cmath>
#include <json.hpp>

namespace rcombat {

NormativeModel fit_normative_model(const CohortDataset& reference,
                                   const std::vector<std::string>& covariates) {
    const std::size_t n = reference.n_subjects();
    const std::size_t C = covariates.size();
    if (reference.covariate_names != covariates)
        fail(ErrorCode::TaxonomyMismatch, "covariate list does not match dataset");
    if (n < C + 2)
        fail(ErrorCode::TooFewSubjects,
             "reference has " + std::to_string(n) + " subjects; need at least " +
                 std::to_string(C + 2));

    const Eigen::Index ni = static_cast<Eigen::Index>(n);
    const Eigen::Index p = static_cast<Eigen::Index>(C) + 1;
    Eigen::MatrixXd X(ni, p);
    X.col(0).setOnes();
    X.rightCols(p - 1) = reference.covariate_matrix();

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
    if (qr.rank() < p)
        fail(ErrorCode::RankDeficientDesign, "covariate design matrix is rank deficient");

    Eigen::MatrixXd Y = reference.feature_matrix();       // n x V
    Eigen::MatrixXd coef = qr.solve(Y);                   // (C+1) x V
    Eigen::MatrixXd resid = Y - X * coef;                 // n x V

    const std::size_t V = reference.n_features();
    NormativeModel model;
    model.covariate_names = covariates;
    model.alpha = coef.row(0).transpose();
    model.beta = coef.bottomRows(p - 1).transpose();      // V x C
    model.sigma.resize(static_cast<Eigen::Index>(V));
    model.zero_variance.assign(V, false);

    const double dof = static_cast<double>(n) - static_cast<double>(C) - 1.0;
    for (Eigen::Index v = 0; v < static_cast<Eigen::Index>(V); ++v) {
        double ssr = resid.col(v).squaredNorm();
        double sd = std::sqrt(ssr / dof);
        double scale = std::sqrt(Y.col(v).squaredNorm() / static_cast<double>(n));
        if (sd <= 1e-12 * std::max(1.0, scale)) {
            model.sigma(v) = 0.0;
            model.zero_variance[static_cast<std::size_t>(v)] = true;
        } else {
            model.sigma(v) = sd;
        }
    }
    return model;
}

ResidualMatrix standardize(const CohortDataset& site_data, const NormativeModel& model) {
    if (site_data.n_features() != model.n_features())
        fail(ErrorCode::TaxonomyMismatch, "feature count differs from model");
    if (site_data.covariate_names != model.covariate_names)
        fail(ErrorCode::TaxonomyMismatch, "covariate list differs from model");

    const std::size_t n = site_data.n_subjects();
    const std::size_t V = site_data.n_features();
    ResidualMatrix out;
    out.site_id = n ? site_data.subjects.front().site_id : "";
    out.z.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(V));
    for (std::size_t j = 0; j < n; ++j) {
        const auto& s = site_data.subjects[j];
        out.subject_ids.push_back(s.subject_id);
        for (std::size_t v = 0; v < V; ++v) {
            const Eigen::Index vi = static_cast<Eigen::Index>(v);
            if (!model.usable(v)) {
                out.z(static_cast<Eigen::Index>(j), vi) = 0.0;
                continue;
            }
            out.z(static_cast<Eigen::Index>(j), vi) =
                (s.features(vi) - model.expected(v, s.covariates)) / model.sigma(vi);
        }
    }
    return out;
}

SiteEffects estimate_site_effects(const ResidualMatrix& residuals,
                                  const FilterMask& mask,
                                  const NormativeModel& model,
                                  const EBConfig& eb) {
    const std::size_t n = residuals.n_subjects();
    const std::size_t V = residuals.n_features();
    if (model.n_features() != V)
        fail(ErrorCode::TaxonomyMismatch, "model/residual feature count mismatch");

    SiteEffects fx;
    fx.gamma_hat.setZero(static_cast<Eigen::Index>(V));
    fx.delta_hat.setOnes(static_cast<Eigen::Index>(V));
    fx.gamma_star.setZero(static_cast<Eigen::Index>(V));
    fx.delta_star.setOnes(static_cast<Eigen::Index>(V));
    fx.n_used.setZero(static_cast<Eigen::Index>(V));

    // Per-feature moments over included residuals only.
    std::vector<std::vector<double>> included(V);
    for (std::size_t v = 0; v < V; ++v) {
        if (!model.usable(v)) continue;
        auto& col = included[v];
        for (std::size_t j = 0; j < n; ++j)
            if (mask.included(j, v))
                col.push_back(residuals.z(static_cast<Eigen::Index>(j),
                                          static_cast<Eigen::Index>(v)));
        if (col.size() < 2)
            fail(ErrorCode::MaskTooAggressive,
                 "feature " + std::to_string(v) + " has " +
                     std::to_string(col.size()) + " included values; need >= 2");
        double m = 0.0;
        for (double z : col) m += z;
        m /= static_cast<double>(col.size());
        double ss = 0.0;
        for (double z : col) ss += (z - m) * (z - m);
        double var = ss / static_cast<double>(col.size() - 1);
        const Eigen::Index vi = static_cast<Eigen::Index>(v);
        fx.gamma_hat(vi) = m;
        fx.delta_hat(vi) = std::sqrt(std::max(var, 1e-300));
        fx.n_used(vi) = static_cast<int>(col.size());
    }

    // Method-of-moments hyperparameters across usable features.
    std::vector<double> gammas, d2s;
    for (std::size_t v = 0; v < V; ++v) {
        if (!model.usable(v)) continue;
        gammas.push_back(fx.gamma_hat(static_cast<Eigen::Index>(v)));
        double d = fx.delta_hat(static_cast<Eigen::Index>(v));
        d2s.push_back(d * d);
    }
    if (gammas.empty())
        fail(ErrorCode::ZeroResidualVariance, "no usable features for estimation");

    auto mean_of = [](const std::vector<double>& x) {
        double s = 0.0;
        for (double v : x) s += v;
        return s / static_cast<double>(x.size());
    };
    auto var_of = [&](const std::vector<double>& x, double m) {
        if (x.size() < 2) return 0.0;
        double s = 0.0;
        for (double v : x) s += (v - m) * (v - m);
        return s / static_cast<double>(x.size() - 1);
    };

    fx.gamma_bar = mean_of(gammas);
    fx.tau_sq = var_of(gammas, fx.gamma_bar);
    const double d2_mean = mean_of(d2s);
    const double d2_var = var_of(d2s, d2_mean);
    if (d2_var <= 1e-12 * std::max(d2_mean * d2_mean, 1e-30)) {
        // Degenerate spread of delta_hat^2 across features: use a tight
        // prior whose mean matches, so shrinkage collapses to the common
        // value.
        fx.lambda = 1e8;
        fx.theta = (fx.lambda - 1.0) * d2_mean;
    } else {
        fx.lambda = d2_mean * d2_mean / d2_var + 2.0;
        fx.theta = d2_mean * (fx.lambda - 1.0);
    }

    if (!eb.empirical_bayes) {
        fx.gamma_star = fx.gamma_hat;
        fx.delta_star = fx.delta_hat;
        return fx;
    }

    // Conditional fixed-point iteration per feature.
    for (std::size_t v = 0; v < V; ++v) {
        const Eigen::Index vi = static_cast<Eigen::Index>(v);
        if (!model.usable(v)) continue;
        const auto& col = included[v];
        const double nv = static_cast<double>(col.size());
        double g = fx.gamma_hat(vi);
        double d2 = fx.delta_hat(vi) * fx.delta_hat(vi);
        bool converged = false;
        for (int it = 0; it < eb.max_iterations; ++it) {
            double g_new = (nv * fx.tau_sq * fx.gamma_hat(vi) + d2 * fx.gamma_bar) /
                           (nv * fx.tau_sq + d2);
            double ss = 0.0;
            for (double z : col) ss += (z - g_new) * (z - g_new);
            double d2_new = (fx.theta + 0.5 * ss) / (nv / 2.0 + fx.lambda - 1.0);
            double change = std::max(std::abs(g_new - g), std::abs(d2_new - d2));
            g = g_new;
            d2 = d2_new;
            if (change < eb.tol) {
                converged = true;
                break;
            }
        }
        if (!converged)
            fail(ErrorCode::EBNonConvergence,
                 "EB fixed point did not converge for feature " + std::to_string(v));
        fx.gamma_star(vi) = g;
        fx.delta_star(vi) = std::sqrt(std::max(d2, 1e-300));
    }
    return fx;
}

CohortDataset harmonize(const CohortDataset& site_data, const NormativeModel& model,
                        const SiteEffects& effects) {
    if (site_data.n_features() != model.n_features())
        fail(ErrorCode::TaxonomyMismatch, "feature count differs from model");
    CohortDataset out = site_data;
    const std::size_t V = site_data.n_features();
    for (auto& s : out.subjects) {
        for (std::size_t v = 0; v < V; ++v) {
            if (!model.usable(v)) continue;  // reported, never divided
            const Eigen::Index vi = static_cast<Eigen::Index>(v);
            double fit = model.expected(v, s.covariates);
            double z = (s.features(vi) - fit) / model.sigma(vi);
            s.features(vi) =
                model.sigma(vi) / effects.delta_star(vi) * (z - effects.gamma_star(vi)) +
                fit;
        }
    }
    return out;
}

CohortDataset inject_bias(const CohortDataset& site_data, const NormativeModel& model,
                          const Eigen::VectorXd& gamma, const Eigen::VectorXd& delta) {
    const std::size_t V = site_data.n_features();
    if (static_cast<std::size_t>(gamma.size()) != V ||
        static_cast<std::size_t>(delta.size()) != V)
        fail(ErrorCode::TaxonomyMismatch, "effect vectors do not match feature count");
    for (Eigen::Index v = 0; v < delta.size(); ++v)
        if (!(delta(v) > 0.0))
            fail(ErrorCode::NonPositiveDelta,
                 "delta[" + std::to_string(v) + "] = " + std::to_string(delta(v)));

    CohortDataset out = site_data;
    for (auto& s : out.subjects) {
        for (std::size_t v = 0; v < V; ++v) {
            const Eigen::Index vi = static_cast<Eigen::Index>(v);
            double fit = model.expected(v, s.covariates);
            s.features(vi) = fit + gamma(vi) + delta(vi) * (s.features(vi) - fit);
        }
    }
    return out;
}

std::string SiteEffects::to_json() const {
    nlohmann::json j;
    auto vec = [](const Eigen::VectorXd& v) {
        return std::vector<double>(v.data(), v.data() + v.size());
    };
    j["gamma_hat"] = vec(gamma_hat);
    j["delta_hat"] = vec(delta_hat);
    j["gamma_star"] = vec(gamma_star);
    j["delta_star"] = vec(delta_star);
    j["hyper"] = {{"gamma_bar", gamma_bar},
                  {"tau_sq", tau_sq},
                  {"lambda", lambda},
                  {"theta", theta}};
    j["n_used"] = std::vector<int>(n_used.data(), n_used.data() + n_used.size());
    return j.dump(2);
}

SiteEffects SiteEffects::from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    SiteEffects fx;
    auto vec = [&](const char* key) {
        auto data = j.at(key).get<std::vector<double>>();
        return Eigen::Map<Eigen::VectorXd>(data.data(),
                                           static_cast<Eigen::Index>(data.size()))
            .eval();
    };
    fx.gamma_hat = vec("gamma_hat");
    fx.delta_hat = vec("delta_hat");
    fx.gamma_star = vec("gamma_star");
    fx.delta_star = vec("delta_star");
    fx.gamma_bar = j.at("hyper").at("gamma_bar").get<double>();
    fx.tau_sq = j.at("hyper").at("tau_sq").get<double>();
    fx.lambda = j.at("hyper").at("lambda").get<double>();
    fx.theta = j.at("hyper").at("theta").get<double>();
    auto used = j.at("n_used").get<std::vector<int>>();
    fx.n_used =
        Eigen::Map<Eigen::VectorXi>(used.data(), static_cast<Eigen::Index>(used.size()));
    return fx;
}

}  // namespace rcombat
