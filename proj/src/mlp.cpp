#include "rcombat/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <json.hpp>
#include <numeric>

namespace rcombat {

namespace {
constexpr double kBnEps = 1e-5;
constexpr double kBnMomentum = 0.1;
}  // namespace

ParamSet ParamSet::zeros_like(const ParamSet& other) {
    ParamSet out;
    out.tensors.reserve(other.tensors.size());
    for (const auto& t : other.tensors)
        out.tensors.emplace_back(Eigen::MatrixXd::Zero(t.rows(), t.cols()));
    return out;
}

void ParamSet::axpy(double a, const ParamSet& other) {
    for (std::size_t i = 0; i < tensors.size(); ++i) tensors[i] += a * other.tensors[i];
}

double ParamSet::max_abs() const {
    double m = 0.0;
    for (const auto& t : tensors) m = std::max(m, t.cwiseAbs().maxCoeff());
    return m;
}

NetworkState init_network(const NetworkConfig& config,
                          std::uint64_t taxonomy_fingerprint) {
    NetworkState st;
    st.config = config;
    st.taxonomy_fingerprint = taxonomy_fingerprint;
    std::mt19937_64 rng(config.seed);

    int fan_in = config.input_dim;
    for (int width : config.hidden) {
        double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        std::uniform_real_distribution<double> u(-bound, bound);
        Eigen::MatrixXd W(width, fan_in);
        for (Eigen::Index i = 0; i < W.rows(); ++i)
            for (Eigen::Index j = 0; j < W.cols(); ++j) W(i, j) = u(rng);
        st.params.tensors.push_back(std::move(W));
        st.params.tensors.emplace_back(Eigen::MatrixXd::Zero(width, 1));  // bias
        st.params.tensors.emplace_back(Eigen::MatrixXd::Ones(width, 1));  // bn scale
        st.params.tensors.emplace_back(Eigen::MatrixXd::Zero(width, 1));  // bn shift
        st.running_mean.emplace_back(Eigen::VectorXd::Zero(width));
        st.running_var.emplace_back(Eigen::VectorXd::Ones(width));
        fan_in = width;
    }
    {
        double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        std::uniform_real_distribution<double> u(-bound, bound);
        Eigen::MatrixXd W(1, fan_in);
        for (Eigen::Index j = 0; j < W.cols(); ++j) W(0, j) = u(rng);
        st.params.tensors.push_back(std::move(W));
        st.params.tensors.emplace_back(Eigen::MatrixXd::Zero(1, 1));
    }
    st.adam_m = ParamSet::zeros_like(st.params);
    st.adam_v = ParamSet::zeros_like(st.params);
    return st;
}

Eigen::MatrixXd standardize_within_site(const CohortDataset& site_data) {
    const std::size_t n = site_data.n_subjects();
    if (n < 2)
        fail(ErrorCode::SiteTooSmall,
             "within-site standardization needs >= 2 subjects, got " +
                 std::to_string(n));
    Eigen::MatrixXd X = site_data.feature_matrix();
    for (Eigen::Index v = 0; v < X.cols(); ++v) {
        double mu = X.col(v).mean();
        double sd = std::sqrt((X.col(v).array() - mu).square().sum() /
                              static_cast<double>(n - 1));
        if (sd == 0.0)
            X.col(v).setZero();
        else
            X.col(v) = (X.col(v).array() - mu) / sd;
    }
    return X;
}

Eigen::VectorXd forward(NetworkState& state, const Eigen::MatrixXd& batch,
                        ForwardMode mode, std::mt19937_64* rng, ForwardCache* cache) {
    if (batch.cols() != state.config.input_dim)
        fail(ErrorCode::ShapeMismatch,
             "batch has " + std::to_string(batch.cols()) + " features, network expects " +
                 std::to_string(state.config.input_dim));
    const Eigen::Index n = batch.rows();
    if (mode == ForwardMode::Train && n < 2)
        fail(ErrorCode::DegenerateBatch, "train-mode batch needs >= 2 rows");

    const std::size_t L = state.n_hidden();
    if (cache) {
        cache->inputs.assign(L, {});
        cache->bn_xhat.assign(L, {});
        cache->bn_mean.assign(L, {});
        cache->bn_var.assign(L, {});
        cache->bn_out.assign(L, {});
        cache->dropout_mask.assign(L, {});
    }

    Eigen::MatrixXd h = batch;
    for (std::size_t l = 0; l < L; ++l) {
        const auto& W = state.params.tensors[state.w_index(l)];
        const auto& b = state.params.tensors[state.b_index(l)];
        const auto& scale = state.params.tensors[state.g_index(l)];
        const auto& shift = state.params.tensors[state.s_index(l)];
        if (cache) cache->inputs[l] = h;

        Eigen::MatrixXd a = h * W.transpose();
        a.rowwise() += b.col(0).transpose();

        Eigen::VectorXd mean, var;
        if (mode == ForwardMode::Train) {
            mean = a.colwise().mean();
            var = (a.rowwise() - mean.transpose()).array().square().colwise().sum() /
                  static_cast<double>(n);
            // Running statistics track the unbiased batch variance.
            double bessel = static_cast<double>(n) / static_cast<double>(n - 1);
            state.running_mean[l] =
                (1.0 - kBnMomentum) * state.running_mean[l] + kBnMomentum * mean;
            state.running_var[l] = (1.0 - kBnMomentum) * state.running_var[l] +
                                   kBnMomentum * bessel * var;
        } else {
            mean = state.running_mean[l];
            var = state.running_var[l];
        }
        Eigen::ArrayXd inv_sd = (var.array() + kBnEps).sqrt().inverse();
        Eigen::MatrixXd xhat =
            ((a.rowwise() - mean.transpose()).array().rowwise() * inv_sd.transpose())
                .matrix();
        Eigen::MatrixXd y =
            (xhat.array().rowwise() * scale.col(0).transpose().array()).matrix();
        y.rowwise() += shift.col(0).transpose();
        if (cache) {
            cache->bn_xhat[l] = xhat;
            cache->bn_mean[l] = mean;
            cache->bn_var[l] = var;
            cache->bn_out[l] = y;
        }

        h = y.cwiseMax(0.0);

        if (mode == ForwardMode::Train && state.config.dropout_rate > 0.0) {
            if (!rng)
                fail(ErrorCode::DegenerateBatch, "train-mode dropout needs an rng");
            const double keep = 1.0 - state.config.dropout_rate;
            std::bernoulli_distribution coin(keep);
            Eigen::MatrixXd mask(h.rows(), h.cols());
            for (Eigen::Index i = 0; i < mask.rows(); ++i)
                for (Eigen::Index j = 0; j < mask.cols(); ++j)
                    mask(i, j) = coin(*rng) ? 1.0 / keep : 0.0;
            h = h.cwiseProduct(mask);
            if (cache) cache->dropout_mask[l] = std::move(mask);
        } else if (cache) {
            cache->dropout_mask[l] = Eigen::MatrixXd::Ones(h.rows(), h.cols());
        }
    }

    const auto& out_w = state.params.tensors[state.out_w_index()];
    const auto& out_b = state.params.tensors[state.out_b_index()];
    Eigen::VectorXd logits = h * out_w.transpose();
    logits.array() += out_b(0, 0);
    if (cache) {
        cache->last_hidden = std::move(h);
        cache->logits = logits;
    }
    return (1.0 / (1.0 + (-logits.array()).exp())).matrix();
}

double weighted_bce_loss(const Eigen::VectorXd& logits, const Eigen::VectorXd& labels,
                         const Eigen::VectorXd& weights) {
    // Stable BCE-with-logits: max(s,0) - s*y + log(1 + exp(-|s|)).
    Eigen::ArrayXd s = logits.array();
    Eigen::ArrayXd per = s.max(0.0) - s * labels.array() + (1.0 + (-s.abs()).exp()).log();
    return (weights.array() * per).sum() / static_cast<double>(logits.size());
}

ParamSet backward(const NetworkState& state, const ForwardCache& cache,
                  const Eigen::MatrixXd& batch, const Eigen::VectorXd& labels,
                  const Eigen::VectorXd& weights) {
    const Eigen::Index n = batch.rows();
    const std::size_t L = state.n_hidden();
    ParamSet grads = ParamSet::zeros_like(state.params);

    Eigen::ArrayXd sig = 1.0 / (1.0 + (-cache.logits.array()).exp());
    Eigen::VectorXd dlogit =
        (weights.array() * (sig - labels.array()) / static_cast<double>(n)).matrix();

    const auto& out_w = state.params.tensors[state.out_w_index()];
    grads.tensors[state.out_w_index()] = dlogit.transpose() * cache.last_hidden;
    grads.tensors[state.out_b_index()](0, 0) = dlogit.sum();
    Eigen::MatrixXd dh = dlogit * out_w;  // n x H

    for (std::size_t li = L; li-- > 0;) {
        // Dropout (masks fixed from the forward pass), then ReLU.
        Eigen::MatrixXd drelu = dh.cwiseProduct(cache.dropout_mask[li]);
        Eigen::MatrixXd dy =
            (drelu.array() * (cache.bn_out[li].array() > 0.0).cast<double>()).matrix();

        // Batch-norm backward with biased batch variance.
        const auto& scale = state.params.tensors[state.g_index(li)];
        const auto& xhat = cache.bn_xhat[li];
        grads.tensors[state.g_index(li)].col(0) =
            dy.cwiseProduct(xhat).colwise().sum().transpose();
        grads.tensors[state.s_index(li)].col(0) = dy.colwise().sum().transpose();

        Eigen::MatrixXd dxhat =
            (dy.array().rowwise() * scale.col(0).transpose().array()).matrix();
        Eigen::ArrayXd inv_sd = (cache.bn_var[li].array() + kBnEps).sqrt().inverse();
        Eigen::RowVectorXd sum_dxhat = dxhat.colwise().sum();
        Eigen::RowVectorXd sum_dxhat_xhat = dxhat.cwiseProduct(xhat).colwise().sum();
        Eigen::MatrixXd da =
            (((dxhat * static_cast<double>(n)).rowwise() - sum_dxhat).array() -
             (xhat.array().rowwise() * sum_dxhat_xhat.array()))
                .rowwise() *
            (inv_sd / static_cast<double>(n)).transpose();

        grads.tensors[state.w_index(li)] = da.transpose() * cache.inputs[li];
        grads.tensors[state.b_index(li)].col(0) = da.colwise().sum().transpose();
        const auto& W = state.params.tensors[state.w_index(li)];
        dh = da * W;
    }
    return grads;
}

void adam_step(NetworkState& state, const ParamSet& grads) {
    const auto& c = state.config;
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double bc1 = 1.0 - std::pow(c.adam_beta1, t);
    const double bc2 = 1.0 - std::pow(c.adam_beta2, t);
    for (std::size_t i = 0; i < state.params.tensors.size(); ++i) {
        auto& m = state.adam_m.tensors[i];
        auto& v = state.adam_v.tensors[i];
        const auto& g = grads.tensors[i];
        m = c.adam_beta1 * m + (1.0 - c.adam_beta1) * g;
        v = (c.adam_beta2 * v.array() + (1.0 - c.adam_beta2) * g.array().square())
                .matrix();
        state.params.tensors[i].array() -=
            c.learning_rate * (m.array() / bc1) /
            ((v.array() / bc2).sqrt() + c.adam_epsilon);
    }
}

LabeledMatrix prepare_training_data(const CohortDataset& dataset) {
    LabeledMatrix out;
    const std::size_t V = dataset.n_features();
    out.features.resize(static_cast<Eigen::Index>(dataset.n_subjects()),
                        static_cast<Eigen::Index>(V));
    out.labels.resize(static_cast<Eigen::Index>(dataset.n_subjects()));
    Eigen::Index row = 0;
    for (const auto& site : dataset.site_ids()) {
        CohortDataset sd = dataset.site_subset(site);
        Eigen::MatrixXd X = standardize_within_site(sd);
        for (std::size_t j = 0; j < sd.n_subjects(); ++j) {
            out.features.row(row) = X.row(static_cast<Eigen::Index>(j));
            out.labels(row) = sd.subjects[j].healthy() ? 0.0 : 1.0;
            ++row;
        }
    }
    return out;
}

namespace {

Eigen::VectorXd class_weights(const Eigen::VectorXd& labels, double hc_penalty) {
    Eigen::VectorXd w(labels.size());
    for (Eigen::Index i = 0; i < labels.size(); ++i)
        w(i) = labels(i) == 0.0 ? hc_penalty : 1.0;
    return w;
}

}  // namespace

TrainingResult train(const CohortDataset& train_data, const CohortDataset& val_data,
                     const NetworkConfig& config) {
    if (train_data.n_subjects() == 0 || val_data.n_subjects() == 0)
        fail(ErrorCode::EmptySplit, "training and validation splits must be non-empty");

    NetworkConfig cfg = config;
    cfg.input_dim = static_cast<int>(train_data.n_features());

    LabeledMatrix tr = prepare_training_data(train_data);
    LabeledMatrix va = prepare_training_data(val_data);

    TrainingResult result;
    result.state = init_network(cfg, train_data.taxonomy.fingerprint());
    NetworkState& st = result.state;
    std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ull);

    const Eigen::Index n = tr.features.rows();
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);

    Eigen::VectorXd val_weights = class_weights(va.labels, cfg.hc_penalty_weight);

    ParamSet best_params = st.params;
    std::vector<Eigen::VectorXd> best_rm = st.running_mean, best_rv = st.running_var;
    double best_val = std::numeric_limits<double>::infinity();
    int best_epoch = 0;
    int patience_used = 0;

    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double epoch_loss = 0.0;
        Eigen::Index seen = 0;
        for (Eigen::Index start = 0; start < n; start += cfg.batch_size) {
            Eigen::Index bs = std::min<Eigen::Index>(cfg.batch_size, n - start);
            if (bs < 2) continue;  // batch-norm needs at least two rows
            Eigen::MatrixXd X(bs, tr.features.cols());
            Eigen::VectorXd y(bs);
            for (Eigen::Index i = 0; i < bs; ++i) {
                X.row(i) = tr.features.row(order[static_cast<std::size_t>(start + i)]);
                y(i) = tr.labels(order[static_cast<std::size_t>(start + i)]);
            }
            Eigen::VectorXd w = class_weights(y, cfg.hc_penalty_weight);
            ForwardCache cache;
            forward(st, X, ForwardMode::Train, &rng, &cache);
            double loss = weighted_bce_loss(cache.logits, y, w);
            if (!std::isfinite(loss))
                fail(ErrorCode::NonFiniteLoss,
                     "non-finite training loss at epoch " + std::to_string(epoch));
            epoch_loss += loss * static_cast<double>(bs);
            seen += bs;
            ParamSet grads = backward(st, cache, X, y, w);
            adam_step(st, grads);
        }

        ForwardCache vc;
        Eigen::VectorXd vp = forward(st, va.features, ForwardMode::Eval, nullptr, &vc);
        double val_loss = weighted_bce_loss(vc.logits, va.labels, val_weights);
        double correct = 0.0;
        for (Eigen::Index i = 0; i < vp.size(); ++i)
            correct += ((vp(i) > 0.5) == (va.labels(i) > 0.5)) ? 1.0 : 0.0;

        EpochLog log;
        log.epoch = epoch;
        log.train_loss = seen > 0 ? epoch_loss / static_cast<double>(seen) : 0.0;
        log.val_loss = val_loss;
        log.val_accuracy = correct / static_cast<double>(vp.size());
        result.log.push_back(log);

        if (val_loss < best_val - 1e-12) {
            best_val = val_loss;
            best_epoch = epoch;
            best_params = st.params;
            best_rm = st.running_mean;
            best_rv = st.running_var;
            patience_used = 0;
        } else if (++patience_used >= cfg.early_stop_patience) {
            break;
        }
    }

    st.params = std::move(best_params);
    st.running_mean = std::move(best_rm);
    st.running_var = std::move(best_rv);
    result.best_epoch = best_epoch;
    result.best_val_loss = best_val;
    return result;
}

OutlierPrediction predict_outliers(NetworkState& state, const CohortDataset& site_data,
                                   double threshold) {
    if (state.taxonomy_fingerprint != 0 &&
        state.taxonomy_fingerprint != site_data.taxonomy.fingerprint())
        fail(ErrorCode::TaxonomyMismatch,
             "site taxonomy does not match the one the detector was trained on");
    Eigen::MatrixXd X = standardize_within_site(site_data);
    Eigen::VectorXd p = forward(state, X, ForwardMode::Eval);
    std::vector<bool> include(site_data.n_subjects());
    for (std::size_t j = 0; j < include.size(); ++j)
        include[j] = !(p(static_cast<Eigen::Index>(j)) > threshold);
    OutlierPrediction out;
    out.mask = FilterMask::from_subject_flags(std::move(include));
    out.probabilities = std::move(p);
    return out;
}

void save_network(const NetworkState& state, const std::filesystem::path& path) {
    nlohmann::json j;
    j["format_version"] = 1;
    const auto& c = state.config;
    j["config"] = {{"input_dim", c.input_dim},
                   {"hidden", c.hidden},
                   {"dropout_rate", c.dropout_rate},
                   {"batch_size", c.batch_size},
                   {"hc_penalty_weight", c.hc_penalty_weight},
                   {"learning_rate", c.learning_rate},
                   {"adam_beta1", c.adam_beta1},
                   {"adam_beta2", c.adam_beta2},
                   {"adam_epsilon", c.adam_epsilon},
                   {"max_epochs", c.max_epochs},
                   {"early_stop_patience", c.early_stop_patience},
                   {"seed", c.seed}};
    j["taxonomy_fingerprint"] = state.taxonomy_fingerprint;
    j["step"] = state.step;
    auto dump_mat = [](const Eigen::MatrixXd& m) {
        nlohmann::json a = nlohmann::json::array();
        for (Eigen::Index r = 0; r < m.rows(); ++r) {
            nlohmann::json row = nlohmann::json::array();
            for (Eigen::Index col = 0; col < m.cols(); ++col) row.push_back(m(r, col));
            a.push_back(std::move(row));
        }
        return a;
    };
    nlohmann::json tensors = nlohmann::json::array();
    for (const auto& t : state.params.tensors) tensors.push_back(dump_mat(t));
    j["params"] = std::move(tensors);
    nlohmann::json rm = nlohmann::json::array(), rv = nlohmann::json::array();
    for (const auto& v : state.running_mean)
        rm.push_back(std::vector<double>(v.data(), v.data() + v.size()));
    for (const auto& v : state.running_var)
        rv.push_back(std::vector<double>(v.data(), v.data() + v.size()));
    j["running_mean"] = std::move(rm);
    j["running_var"] = std::move(rv);

    std::ofstream out(path);
    if (!out) fail(ErrorCode::IoFailure, "cannot write '" + path.string() + "'");
    out << j.dump();
    if (!out) fail(ErrorCode::IoFailure, "write failed for '" + path.string() + "'");
}

NetworkState load_network(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::IoFailure, "cannot open '" + path.string() + "'");
    nlohmann::json j;
    in >> j;
    NetworkConfig c;
    const auto& jc = j.at("config");
    c.input_dim = jc.at("input_dim").get<int>();
    c.hidden = jc.at("hidden").get<std::vector<int>>();
    c.dropout_rate = jc.at("dropout_rate").get<double>();
    c.batch_size = jc.at("batch_size").get<int>();
    c.hc_penalty_weight = jc.at("hc_penalty_weight").get<double>();
    c.learning_rate = jc.at("learning_rate").get<double>();
    c.adam_beta1 = jc.at("adam_beta1").get<double>();
    c.adam_beta2 = jc.at("adam_beta2").get<double>();
    c.adam_epsilon = jc.at("adam_epsilon").get<double>();
    c.max_epochs = jc.at("max_epochs").get<int>();
    c.early_stop_patience = jc.at("early_stop_patience").get<int>();
    c.seed = jc.at("seed").get<std::uint64_t>();

    NetworkState st = init_network(c, j.at("taxonomy_fingerprint").get<std::uint64_t>());
    st.step = j.at("step").get<long>();
    const auto& tensors = j.at("params");
    if (tensors.size() != st.params.tensors.size())
        fail(ErrorCode::ShapeMismatch, "model file tensor count mismatch");
    for (std::size_t i = 0; i < st.params.tensors.size(); ++i) {
        auto& t = st.params.tensors[i];
        const auto& a = tensors[i];
        if (static_cast<Eigen::Index>(a.size()) != t.rows())
            fail(ErrorCode::ShapeMismatch, "model file tensor shape mismatch");
        for (Eigen::Index r = 0; r < t.rows(); ++r)
            for (Eigen::Index col = 0; col < t.cols(); ++col)
                t(r, col) = a[static_cast<std::size_t>(r)][static_cast<std::size_t>(col)]
                                .get<double>();
    }
    for (std::size_t l = 0; l < st.running_mean.size(); ++l) {
        auto rm = j.at("running_mean")[l].get<std::vector<double>>();
        auto rv = j.at("running_var")[l].get<std::vector<double>>();
        st.running_mean[l] = Eigen::Map<Eigen::VectorXd>(
            rm.data(), static_cast<Eigen::Index>(rm.size()));
        st.running_var[l] = Eigen::Map<Eigen::VectorXd>(
            rv.data(), static_cast<Eigen::Index>(rv.size()));
    }
    return st;
}

std::uint64_t weight_hash(const NetworkState& state) {
    std::uint64_t h = 1469598103934665603ull;
    auto mix_bytes = [&h](const double* data, std::size_t count) {
        const unsigned char* p = reinterpret_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < count * sizeof(double); ++i) {
            h ^= p[i];
            h *= 1099511628211ull;
        }
    };
    for (const auto& t : state.params.tensors)
        mix_bytes(t.data(), static_cast<std::size_t>(t.size()));
    for (const auto& v : state.running_mean)
        mix_bytes(v.data(), static_cast<std::size_t>(v.size()));
    for (const auto& v : state.running_var)
        mix_bytes(v.data(), static_cast<std::size_t>(v.size()));
    return h;
}

}  // namespace rcombat
