#include "bers/neural_linear.hpp"

#include <cmath>
#include <istream>
#include <numbers>
#include <ostream>
#include <string>

#include <json.hpp>

namespace bers {

void Dataset::add(Demonstration d) {
    if (items_.empty() && input_dim_ == 0) {
        input_dim_ = d.x.size();
    }
    if (d.x.size() != input_dim_) {
        throw DimensionMismatch("demonstration has width " + std::to_string(d.x.size()) +
                                ", dataset expects " + std::to_string(input_dim_));
    }
    if (!d.x.allFinite() || !std::isfinite(d.y)) {
        throw NumericalError("demonstration contains non-finite values");
    }
    items_.push_back(std::move(d));
}

Matrix Dataset::inputs(std::size_t first, std::size_t count) const {
    Matrix x(static_cast<Index>(count), input_dim_);
    for (std::size_t r = 0; r < count; ++r) {
        x.row(static_cast<Index>(r)) = items_[first + r].x.transpose();
    }
    return x;
}

Vector Dataset::targets(std::size_t first, std::size_t count) const {
    Vector y(static_cast<Index>(count));
    for (std::size_t r = 0; r < count; ++r) {
        y(static_cast<Index>(r)) = items_[first + r].y;
    }
    return y;
}

NigParams standard_prior(Index dim) {
    return NigParams{Vector::Zero(dim), Matrix::Identity(dim, dim), 1.0, 1.0};
}

NigHead NigHead::from_prior(NigParams prior) {
    NigHead h;
    h.posterior = prior;
    h.prior = std::move(prior);
    return h;
}

Matrix NigHead::covariance() const { return cholesky(posterior.precision).inverse(); }

double NigHead::noise_mean() const {
    if (!(posterior.shape > 1.0)) {
        throw AlphaTooSmall("E[sigma^2] needs alpha > 1, got alpha = " +
                            std::to_string(posterior.shape));
    }
    return posterior.scale / (posterior.shape - 1.0);
}

void SufficientStats::add(const Matrix& phi, const Vector& y) {
    if (phi.rows() != y.size() || phi.cols() != gram.rows()) {
        throw DimensionMismatch("sufficient statistics: feature/target shapes disagree");
    }
    gram.noalias() += phi.transpose() * phi;
    moment.noalias() += phi.transpose() * y;
    yy += y.squaredNorm();
    count += static_cast<std::size_t>(y.size());
}

NigHead nig_update(const NigHead& head, const SufficientStats& stats) {
    const NigParams& p = head.posterior;
    if (stats.gram.rows() != p.dim()) {
        throw DimensionMismatch("feature width differs from head dimension");
    }
    NigHead out;
    out.prior = head.prior;
    out.observations = head.observations + stats.count;
    if (stats.count == 0) {
        out.posterior = p;
        return out;
    }
    NigParams& q = out.posterior;
    q.precision = p.precision + stats.gram;
    q.precision = 0.5 * (q.precision + q.precision.transpose());
    const Vector rhs = p.precision * p.mean + stats.moment;
    const CholeskyFactor chol(q.precision);
    q.mean = chol.solve(rhs);
    q.shape = p.shape + 0.5 * static_cast<double>(stats.count);
    q.scale = p.scale + 0.5 * (stats.yy + p.mean.dot(p.precision * p.mean) - q.mean.dot(rhs));
    if (!(q.scale > 0.0) || !std::isfinite(q.scale)) {
        throw NumericalError("posterior scale is not positive: " + std::to_string(q.scale));
    }
    return out;
}

NigHead nig_update(const NigHead& head, const Matrix& phi, const Vector& y) {
    if (phi.rows() != y.size()) {
        throw DimensionMismatch("feature rows and observation count differ");
    }
    if (!phi.allFinite() || !y.allFinite()) {
        throw NumericalError("non-finite features or observations");
    }
    SufficientStats stats(head.dim());
    if (phi.rows() > 0) {
        stats.add(phi, y);
    }
    return nig_update(head, stats);
}

namespace {

struct EvidenceParts {
    double value;
    NigParams post;
    CholeskyFactor post_chol;
};

EvidenceParts evidence_parts(const NigParams& prior, const Matrix& phi, const Vector& y) {
    if (phi.rows() != y.size() || phi.cols() != prior.dim()) {
        throw DimensionMismatch("evidence: feature/target shapes disagree");
    }
    const NigHead post = nig_update(NigHead::from_prior(prior), phi, y);
    const NigParams& q = post.posterior;
    CholeskyFactor post_chol(q.precision);
    const double n = static_cast<double>(y.size());
    const double value = -0.5 * n * std::log(2.0 * std::numbers::pi) +
                         0.5 * log_det(prior.precision) - 0.5 * post_chol.log_det() +
                         prior.shape * std::log(prior.scale) - q.shape * std::log(q.scale) +
                         std::lgamma(q.shape) - std::lgamma(prior.shape);
    return EvidenceParts{value, q, std::move(post_chol)};
}

}  // namespace

double log_marginal_likelihood(const NigParams& prior, const Matrix& phi, const Vector& y) {
    return evidence_parts(prior, phi, y).value;
}

EvidenceGradient log_marginal_likelihood_gradient(const NigParams& prior, const Matrix& phi,
                                                  const Vector& y) {
    EvidenceParts parts = evidence_parts(prior, phi, y);
    const NigParams& q = parts.post;
    // d/dPhi [-alpha_n log beta_n] = (alpha_n / beta_n) r mu^T with r = y - Phi mu;
    // d/dPhi [-1/2 log|Lambda_n|] = -Phi Lambda_n^{-1}.
    const Vector residual = y - phi * q.mean;
    Matrix grad = (q.shape / q.scale) * residual * q.mean.transpose();
    grad.noalias() -= parts.post_chol.solve(Matrix(phi.transpose())).transpose();
    return EvidenceGradient{parts.value, std::move(grad)};
}

Tape::Node record_log_marginal_likelihood(Tape& tape, Tape::Node features, Vector y,
                                          NigParams prior) {
    auto forward = [y, prior](std::span<const Matrix* const> in) {
        Matrix v(1, 1);
        v(0, 0) = log_marginal_likelihood(prior, *in[0], y);
        return v;
    };
    auto backward = [y, prior](std::span<const Matrix* const> in, const Matrix&,
                               const Matrix& adjoint) {
        EvidenceGradient g = log_marginal_likelihood_gradient(prior, *in[0], y);
        std::vector<Matrix> out;
        out.push_back(adjoint(0, 0) * g.d_features);
        return out;
    };
    return tape.custom({features}, std::move(forward), std::move(backward));
}

// ---------------------------------------------------------------------------
// Encoder

Encoder::Encoder(EncoderShape shape) : shape_(shape) {
    if (shape.input_dim <= 0 || shape.hidden1 <= 0 || shape.hidden2 <= 0 || shape.latent_dim <= 0) {
        throw DimensionMismatch("encoder widths must be positive");
    }
    params_.push_back(Matrix::Zero(shape.input_dim, shape.hidden1));
    params_.push_back(Matrix::Zero(1, shape.hidden1));
    params_.push_back(Matrix::Zero(shape.hidden1, shape.hidden2));
    params_.push_back(Matrix::Zero(1, shape.hidden2));
    params_.push_back(Matrix::Zero(shape.hidden2, shape.latent_dim));
    params_.push_back(Matrix::Zero(1, shape.latent_dim));
}

Encoder Encoder::glorot(EncoderShape shape, Rng& rng) {
    Encoder enc(shape);
    for (std::size_t k = 0; k < enc.params_.size(); k += 2) {
        Matrix& w = enc.params_[k];
        const double limit = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
        std::uniform_real_distribution<double> u(-limit, limit);
        for (Index i = 0; i < w.size(); ++i) {
            w.data()[i] = u(rng);
        }
    }
    return enc;
}

std::size_t Encoder::parameter_count() const {
    std::size_t n = 0;
    for (const Matrix& p : params_) {
        n += static_cast<std::size_t>(p.size());
    }
    return n;
}

double Encoder::squared_norm() const {
    double s = 0.0;
    for (const Matrix& p : params_) {
        s += p.squaredNorm();
    }
    return s;
}

Vector Encoder::encode(const Vector& x) const {
    if (x.size() != shape_.input_dim) {
        throw DimensionMismatch("encode: input has width " + std::to_string(x.size()) +
                                ", encoder expects " + std::to_string(shape_.input_dim));
    }
    Matrix row = x.transpose();
    return encode_batch(row).row(0).transpose();
}

Matrix Encoder::encode_batch(const Matrix& x) const {
    if (x.cols() != shape_.input_dim) {
        throw DimensionMismatch("encode: input width mismatch");
    }
    Matrix h1 = x * params_[0];
    h1.rowwise() += params_[1].row(0);
    h1 = h1.cwiseMax(0.0);
    Matrix h2 = h1 * params_[2];
    h2.rowwise() += params_[3].row(0);
    h2 = h2.cwiseMax(0.0);
    Matrix z = h2 * params_[4];
    z.rowwise() += params_[5].row(0);
    Matrix phi(x.rows(), shape_.latent_dim + 1);
    phi.leftCols(shape_.latent_dim) = z.array().tanh().matrix();
    phi.col(shape_.latent_dim).setOnes();
    return phi;
}

std::vector<Tape::Node> Encoder::register_parameters(Tape& tape) const {
    std::vector<Tape::Node> nodes;
    nodes.reserve(params_.size());
    for (const Matrix& p : params_) {
        nodes.push_back(tape.parameter(p));
    }
    return nodes;
}

Tape::Node Encoder::record(Tape& tape, std::span<const Tape::Node> params, const Matrix& x) const {
    if (x.cols() != shape_.input_dim) {
        throw DimensionMismatch("encode: input width mismatch");
    }
    const Tape::Node in = tape.constant(x);
    const Tape::Node h1 = tape.relu(tape.add(tape.matmul(in, params[0]), params[1]));
    const Tape::Node h2 = tape.relu(tape.add(tape.matmul(h1, params[2]), params[3]));
    const Tape::Node z = tape.tanh(tape.add(tape.matmul(h2, params[4]), params[5]));
    return tape.append_ones(z);
}

// ---------------------------------------------------------------------------
// Model

MultiHeadModel::MultiHeadModel(Encoder encoder, std::size_t head_count, NigParams prior,
                               TrainConfig config)
    : encoder_(std::move(encoder)), prior_(std::move(prior)), config_(config) {
    if (prior_.dim() != encoder_.feature_dim()) {
        throw DimensionMismatch("prior dimension must equal encoder feature width d + 1");
    }
    heads_.assign(head_count, NigHead::from_prior(prior_));
    transforms_.assign(head_count, "identity");
}

const NigHead& MultiHeadModel::head(std::size_t i) const {
    if (i >= heads_.size()) {
        throw UnknownHead("head " + std::to_string(i) + " does not exist");
    }
    return heads_[i];
}

NigHead& MultiHeadModel::head(std::size_t i) {
    if (i >= heads_.size()) {
        throw UnknownHead("head " + std::to_string(i) + " does not exist");
    }
    return heads_[i];
}

void MultiHeadModel::apply_gradient(const std::vector<Matrix>& grads) {
    std::vector<Matrix>& params = encoder_.parameters();
    if (grads.size() != params.size()) {
        throw DimensionMismatch("gradient layout does not match encoder parameters");
    }
    const double lr = config_.learning_rate;
    if (config_.optimizer == OptimizerKind::gradient_ascent) {
        for (std::size_t k = 0; k < params.size(); ++k) {
            params[k] += lr * grads[k];
        }
        return;
    }
    if (adam_m_.empty()) {
        for (const Matrix& p : params) {
            adam_m_.push_back(Matrix::Zero(p.rows(), p.cols()));
            adam_v_.push_back(Matrix::Zero(p.rows(), p.cols()));
        }
    }
    ++adam_t_;
    const double b1 = config_.adam_beta1;
    const double b2 = config_.adam_beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(adam_t_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(adam_t_));
    for (std::size_t k = 0; k < params.size(); ++k) {
        adam_m_[k] = b1 * adam_m_[k] + (1.0 - b1) * grads[k];
        adam_v_[k] = b2 * adam_v_[k] + (1.0 - b2) * grads[k].cwiseProduct(grads[k]);
        params[k].array() += lr * (adam_m_[k].array() / c1) /
                             ((adam_v_[k].array() / c2).sqrt() + config_.adam_epsilon);
    }
}

StepReport evaluate_objective(const MultiHeadModel& model, std::span<const HeadBatch> batches,
                              std::vector<Matrix>* grads) {
    Tape tape;
    const Encoder& enc = model.encoder();
    const std::vector<Tape::Node> params = enc.register_parameters(tape);
    StepReport report;
    report.log_evidence.assign(model.head_count(), 0.0);

    std::vector<Tape::Node> terms;
    for (const HeadBatch& b : batches) {
        const NigHead& head = model.head(b.head);
        if (b.x.rows() == 0) {
            continue;
        }
        const Tape::Node phi = enc.record(tape, params, b.x);
        const Tape::Node ev = record_log_marginal_likelihood(tape, phi, b.y, head.prior);
        report.log_evidence[b.head] += tape.value(ev)(0, 0);
        terms.push_back(ev);
    }
    const double l2 = model.config().l2;
    if (l2 != 0.0) {
        Matrix neg(1, 1);
        neg(0, 0) = -l2;
        const Tape::Node coeff = tape.constant(neg);
        for (Tape::Node p : params) {
            terms.push_back(tape.multiply(coeff, tape.sum(tape.square(p))));
        }
    }
    if (terms.empty()) {
        if (grads != nullptr) {
            grads->clear();
            for (const Matrix& p : enc.parameters()) {
                grads->push_back(Matrix::Zero(p.rows(), p.cols()));
            }
        }
        return report;
    }
    Tape::Node total = terms.front();
    for (std::size_t k = 1; k < terms.size(); ++k) {
        total = tape.add(total, terms[k]);
    }
    report.objective = tape.value(total)(0, 0);
    if (grads != nullptr) {
        *grads = tape.gradient(total);
    }
    return report;
}

StepReport train_step(MultiHeadModel& model, std::span<const HeadBatch> batches) {
    std::vector<Matrix> grads;
    StepReport report = evaluate_objective(model, batches, &grads);
    model.apply_gradient(grads);
    return report;
}

void recompute_heads(MultiHeadModel& model, std::span<const Dataset* const> datasets) {
    if (datasets.size() > model.head_count()) {
        throw UnknownHead("more datasets than heads");
    }
    constexpr std::size_t chunk = 2048;
    const Encoder& enc = model.encoder();
    for (std::size_t h = 0; h < model.head_count(); ++h) {
        NigHead fresh = NigHead::from_prior(model.head(h).prior);
        const Dataset* ds = h < datasets.size() ? datasets[h] : nullptr;
        if (ds == nullptr || ds->empty()) {
            model.head(h) = std::move(fresh);
            continue;
        }
        SufficientStats stats(enc.feature_dim());
        for (std::size_t first = 0; first < ds->size(); first += chunk) {
            const std::size_t count = std::min(chunk, ds->size() - first);
            stats.add(enc.encode_batch(ds->inputs(first, count)), ds->targets(first, count));
        }
        model.head(h) = nig_update(fresh, stats);
    }
}

std::vector<HeadBatch> sample_pooled_batch(std::span<const Dataset* const> datasets,
                                           std::size_t batch_size, Rng& rng) {
    std::vector<std::size_t> offsets{0};
    for (const Dataset* ds : datasets) {
        offsets.push_back(offsets.back() + (ds != nullptr ? ds->size() : 0));
    }
    const std::size_t total = offsets.back();
    if (total == 0) {
        throw EmptyDataset("cannot sample a batch from empty datasets");
    }
    std::uniform_int_distribution<std::size_t> pick(0, total - 1);
    std::vector<std::vector<std::size_t>> rows(datasets.size());
    for (std::size_t k = 0; k < batch_size; ++k) {
        const std::size_t g = pick(rng);
        const auto it = std::upper_bound(offsets.begin(), offsets.end(), g);
        const std::size_t h = static_cast<std::size_t>(it - offsets.begin()) - 1;
        rows[h].push_back(g - offsets[h]);
    }
    std::vector<HeadBatch> batches;
    for (std::size_t h = 0; h < datasets.size(); ++h) {
        if (rows[h].empty()) {
            continue;
        }
        const Dataset& ds = *datasets[h];
        HeadBatch b;
        b.head = h;
        b.x.resize(static_cast<Index>(rows[h].size()), ds.input_dim());
        b.y.resize(static_cast<Index>(rows[h].size()));
        for (std::size_t r = 0; r < rows[h].size(); ++r) {
            b.x.row(static_cast<Index>(r)) = ds[rows[h][r]].x.transpose();
            b.y(static_cast<Index>(r)) = ds[rows[h][r]].y;
        }
        batches.push_back(std::move(b));
    }
    return batches;
}

namespace {

void train_batches(MultiHeadModel& model, std::span<const Dataset* const> datasets,
                   std::size_t n_batches, std::size_t batch_size, Rng& rng) {
    for (std::size_t step = 0; step < n_batches; ++step) {
        const std::vector<HeadBatch> batches = sample_pooled_batch(datasets, batch_size, rng);
        train_step(model, batches);
    }
}

}  // namespace

void pretrain(MultiHeadModel& model, std::span<const Dataset> sources, std::size_t n_batches,
              std::size_t batch_size, Rng& rng) {
    if (sources.empty()) {
        throw EmptyDataset("pretraining needs at least one source dataset");
    }
    if (sources.size() > model.head_count()) {
        throw UnknownHead("more source datasets than heads");
    }
    std::vector<const Dataset*> ptrs;
    bool any = false;
    for (const Dataset& ds : sources) {
        ptrs.push_back(&ds);
        any = any || !ds.empty();
    }
    if (!any) {
        throw EmptyDataset("all source datasets are empty");
    }
    train_batches(model, ptrs, n_batches, batch_size, rng);
    recompute_heads(model, ptrs);
}

void refine(MultiHeadModel& model, std::span<const Dataset* const> datasets, std::size_t n_batches,
            std::size_t batch_size, Rng& rng) {
    if (n_batches > 0) {
        if (model.config().refine_source_heads) {
            train_batches(model, datasets, n_batches, batch_size, rng);
        } else {
            // Only the last (target) head drives the encoder.
            std::vector<const Dataset*> only_target(datasets.size(), nullptr);
            only_target.back() = datasets.back();
            if (only_target.back() != nullptr && !only_target.back()->empty()) {
                train_batches(model, only_target, n_batches, batch_size, rng);
            }
        }
    }
    recompute_heads(model, datasets);
}

double predict(const MultiHeadModel& model, std::size_t head, const Vector& x) {
    const NigHead& h = model.head(head);
    return model.encoder().encode(x).dot(h.posterior.mean);
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

using nlohmann::json;

json matrix_to_json(const Matrix& m) {
    return json{{"rows", m.rows()},
                {"cols", m.cols()},
                {"data", std::vector<double>(m.data(), m.data() + m.size())}};
}

Matrix matrix_from_json(const json& j) {
    const auto data = j.at("data").get<std::vector<double>>();
    return make_matrix(j.at("rows").get<Index>(), j.at("cols").get<Index>(), data);
}

json vector_to_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Vector vector_from_json(const json& j) {
    const auto data = j.get<std::vector<double>>();
    return Eigen::Map<const Vector>(data.data(), static_cast<Index>(data.size()));
}

json nig_to_json(const NigParams& p) {
    return json{{"mean", vector_to_json(p.mean)},
                {"precision", matrix_to_json(p.precision)},
                {"shape", p.shape},
                {"scale", p.scale}};
}

NigParams nig_from_json(const json& j) {
    return NigParams{vector_from_json(j.at("mean")), matrix_from_json(j.at("precision")),
                     j.at("shape").get<double>(), j.at("scale").get<double>()};
}

}  // namespace

void save_model(const MultiHeadModel& model, std::ostream& out) {
    const EncoderShape& s = model.encoder().shape();
    json j;
    j["format"] = "bers-neural-linear";
    j["version"] = 1;
    j["shape"] = {{"input_dim", s.input_dim},
                  {"hidden1", s.hidden1},
                  {"hidden2", s.hidden2},
                  {"latent_dim", s.latent_dim}};
    json params = json::array();
    for (const Matrix& p : model.encoder().parameters()) {
        params.push_back(matrix_to_json(p));
    }
    j["parameters"] = params;
    j["prior"] = nig_to_json(model.prior());
    json heads = json::array();
    for (const NigHead& h : model.heads()) {
        heads.push_back({{"prior", nig_to_json(h.prior)},
                         {"posterior", nig_to_json(h.posterior)},
                         {"observations", h.observations}});
    }
    j["heads"] = heads;
    j["transforms"] = model.transforms();
    const TrainConfig& c = model.config();
    j["train"] = {{"learning_rate", c.learning_rate},
                  {"l2", c.l2},
                  {"optimizer", c.optimizer == OptimizerKind::adam ? "adam" : "gradient_ascent"},
                  {"refine_source_heads", c.refine_source_heads}};
    out << j.dump(1) << '\n';
    if (!out) {
        throw IOFailure("failed to write model checkpoint");
    }
}

MultiHeadModel load_model(std::istream& in) {
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw IOFailure(std::string("malformed model checkpoint: ") + e.what());
    }
    if (j.value("format", "") != "bers-neural-linear") {
        throw IOFailure("not a neural-linear checkpoint");
    }
    const json& s = j.at("shape");
    EncoderShape shape{s.at("input_dim").get<Index>(), s.at("hidden1").get<Index>(),
                       s.at("hidden2").get<Index>(), s.at("latent_dim").get<Index>()};
    Encoder enc(shape);
    const json& params = j.at("parameters");
    if (params.size() != enc.parameters().size()) {
        throw IOFailure("checkpoint parameter count mismatch");
    }
    for (std::size_t k = 0; k < params.size(); ++k) {
        Matrix p = matrix_from_json(params[k]);
        if (p.rows() != enc.parameters()[k].rows() || p.cols() != enc.parameters()[k].cols()) {
            throw IOFailure("checkpoint parameter shape mismatch");
        }
        enc.parameters()[k] = std::move(p);
    }
    TrainConfig cfg;
    const json& t = j.at("train");
    cfg.learning_rate = t.at("learning_rate").get<double>();
    cfg.l2 = t.at("l2").get<double>();
    cfg.optimizer = t.at("optimizer").get<std::string>() == "adam" ? OptimizerKind::adam
                                                                   : OptimizerKind::gradient_ascent;
    cfg.refine_source_heads = t.at("refine_source_heads").get<bool>();
    const json& heads = j.at("heads");
    MultiHeadModel model(std::move(enc), heads.size(), nig_from_json(j.at("prior")), cfg);
    for (std::size_t h = 0; h < heads.size(); ++h) {
        NigHead& head = model.head(h);
        head.prior = nig_from_json(heads[h].at("prior"));
        head.posterior = nig_from_json(heads[h].at("posterior"));
        head.observations = heads[h].at("observations").get<std::size_t>();
    }
    model.transforms() = j.at("transforms").get<std::vector<std::string>>();
    return model;
}

}  // namespace bers
