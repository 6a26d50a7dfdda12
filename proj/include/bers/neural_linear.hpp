#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "bers/numerics.hpp"
#include "bers/tape.hpp"

namespace bers {

/// One labeled pair (x, y) from a task.
struct Demonstration {
    Vector x;
    double y = 0.0;
};

/// Ordered demonstrations of one task. Every x shares the same dimension.
class Dataset {
public:
    Dataset() = default;
    explicit Dataset(std::size_t task_id, Index input_dim = 0)
        : task_id_(task_id), input_dim_(input_dim) {}

    /// Throws DimensionMismatch on a width change and NumericalError on
    /// non-finite values.
    void add(Demonstration d);
    void reserve(std::size_t n) { items_.reserve(n); }

    std::size_t task_id() const { return task_id_; }
    void set_task_id(std::size_t id) { task_id_ = id; }
    Index input_dim() const { return input_dim_; }
    std::size_t size() const { return items_.size(); }
    bool empty() const { return items_.empty(); }

    const Demonstration& operator[](std::size_t i) const { return items_[i]; }
    const std::vector<Demonstration>& items() const { return items_; }
    auto begin() const { return items_.begin(); }
    auto end() const { return items_.end(); }

    /// Rows [first, first + count) stacked as a matrix / vector.
    Matrix inputs(std::size_t first, std::size_t count) const;
    Vector targets(std::size_t first, std::size_t count) const;
    Matrix inputs() const { return inputs(0, size()); }
    Vector targets() const { return targets(0, size()); }

private:
    std::size_t task_id_ = 0;
    Index input_dim_ = 0;
    std::vector<Demonstration> items_;
};

/// Normal-inverse-gamma parameters: w | s2 ~ N(mean, s2 precision^-1),
/// s2 ~ InvGamma(shape, scale).
struct NigParams {
    Vector mean;
    Matrix precision;
    double shape = 1.0;
    double scale = 1.0;

    Index dim() const { return mean.size(); }
};

/// w ~ N(0, I), s2 ~ InvGamma(1, 1).
NigParams standard_prior(Index dim);

/// One regression head: the prior it started from and its current posterior.
struct NigHead {
    NigParams prior;
    NigParams posterior;
    std::size_t observations = 0;

    static NigHead from_prior(NigParams prior);

    Index dim() const { return posterior.dim(); }
    /// Sigma = Lambda^{-1}.
    Matrix covariance() const;
    /// E[s2] = beta / (alpha - 1). Throws AlphaTooSmall for alpha <= 1.
    double noise_mean() const;
};

/// Phi^T Phi, Phi^T y, y^T y accumulated over row chunks.
struct SufficientStats {
    Matrix gram;
    Vector moment;
    double yy = 0.0;
    std::size_t count = 0;

    explicit SufficientStats(Index dim)
        : gram(Matrix::Zero(dim, dim)), moment(Vector::Zero(dim)) {}

    void add(const Matrix& phi, const Vector& y);
};

/// Conjugate update treating `head.posterior` as the prior. The root prior
/// stored in the head is carried over unchanged.
NigHead nig_update(const NigHead& head, const Matrix& phi, const Vector& y);
NigHead nig_update(const NigHead& head, const SufficientStats& stats);

/// Log evidence log p(y | Phi) with w and s2 integrated out.
double log_marginal_likelihood(const NigParams& prior, const Matrix& phi, const Vector& y);

struct EvidenceGradient {
    double value = 0.0;
    /// d(log evidence) / d(Phi), shaped like Phi.
    Matrix d_features;
};

EvidenceGradient log_marginal_likelihood_gradient(const NigParams& prior, const Matrix& phi,
                                                  const Vector& y);

/// Records the log evidence of `y` under features node `features` as a 1 x 1 tape node.
Tape::Node record_log_marginal_likelihood(Tape& tape, Tape::Node features, Vector y,
                                          NigParams prior);

struct EncoderShape {
    Index input_dim = 1;
    Index hidden1 = 200;
    Index hidden2 = 200;
    Index latent_dim = 20;
};

/// Feed-forward feature map: two ReLU layers, a tanh output layer of width
/// d, then a constant bias feature. Output width is d + 1.
class Encoder {
public:
    /// All weights and biases zero.
    explicit Encoder(EncoderShape shape);
    /// Glorot-uniform weights, zero biases.
    static Encoder glorot(EncoderShape shape, Rng& rng);

    const EncoderShape& shape() const { return shape_; }
    Index feature_dim() const { return shape_.latent_dim + 1; }

    Vector encode(const Vector& x) const;
    Matrix encode_batch(const Matrix& x) const;

    /// Parameter order: W1, b1, W2, b2, W3, b3 (biases are 1 x width rows).
    std::vector<Matrix>& parameters() { return params_; }
    const std::vector<Matrix>& parameters() const { return params_; }
    std::size_t parameter_count() const;
    double squared_norm() const;

    std::vector<Tape::Node> register_parameters(Tape& tape) const;
    /// Records the forward pass for rows `x`; returns the (n x d+1) feature node.
    Tape::Node record(Tape& tape, std::span<const Tape::Node> params, const Matrix& x) const;

private:
    EncoderShape shape_;
    std::vector<Matrix> params_;
};

enum class OptimizerKind { gradient_ascent, adam };

struct TrainConfig {
    double learning_rate = 1e-4;
    double l2 = 1e-4;
    OptimizerKind optimizer = OptimizerKind::gradient_ascent;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_epsilon = 1e-8;
    /// When false, source heads stop contributing to the encoder loss
    /// during refinement (their posteriors are still recomputed).
    bool refine_source_heads = true;
};

/// Rows of one head used in a single training step.
struct HeadBatch {
    std::size_t head = 0;
    Matrix x;
    Vector y;
};

/// Shared encoder plus one NIG head per task. By convention the last head
/// is the target task in transfer runs.
class MultiHeadModel {
public:
    MultiHeadModel(Encoder encoder, std::size_t head_count, NigParams prior, TrainConfig config);

    Encoder& encoder() { return encoder_; }
    const Encoder& encoder() const { return encoder_; }
    std::size_t head_count() const { return heads_.size(); }
    const NigHead& head(std::size_t i) const;
    NigHead& head(std::size_t i);
    const std::vector<NigHead>& heads() const { return heads_; }
    const NigParams& prior() const { return prior_; }
    TrainConfig& config() { return config_; }
    const TrainConfig& config() const { return config_; }

    /// Output transform tag per head ("identity", "log1p", ...). Informational.
    std::vector<std::string>& transforms() { return transforms_; }
    const std::vector<std::string>& transforms() const { return transforms_; }

    /// Applies one ascent step with gradient `grads` (same layout as the
    /// encoder parameters), using the configured optimizer.
    void apply_gradient(const std::vector<Matrix>& grads);

private:
    Encoder encoder_;
    NigParams prior_;
    TrainConfig config_;
    std::vector<NigHead> heads_;
    std::vector<std::string> transforms_;
    std::vector<Matrix> adam_m_;
    std::vector<Matrix> adam_v_;
    std::size_t adam_t_ = 0;
};

struct StepReport {
    /// Sum of head log evidences minus the L2 penalty.
    double objective = 0.0;
    std::vector<double> log_evidence;
};

/// Objective and its gradient without changing the model.
StepReport evaluate_objective(const MultiHeadModel& model, std::span<const HeadBatch> batches,
                              std::vector<Matrix>* grads);

/// One gradient-ascent step of the encoder on the summed head evidences.
/// Head posteriors are not touched; see recompute_heads.
StepReport train_step(MultiHeadModel& model, std::span<const HeadBatch> batches);

/// Recomputes every head posterior in closed form from its full dataset
/// under the current features (streaming sufficient statistics).
/// `datasets[i]` belongs to head i; a null entry resets that head to its prior.
void recompute_heads(MultiHeadModel& model, std::span<const Dataset* const> datasets);

/// Draws `batch_size` rows uniformly with replacement from the pooled
/// datasets and groups them by head.
std::vector<HeadBatch> sample_pooled_batch(std::span<const Dataset* const> datasets,
                                           std::size_t batch_size, Rng& rng);

/// Trains the encoder on source heads 0..N-1 and then recomputes their posteriors
/// from the full source datasets. Throws EmptyDataset without any source data.
void pretrain(MultiHeadModel& model, std::span<const Dataset> sources, std::size_t n_batches,
              std::size_t batch_size, Rng& rng);

/// Same as pretrain but over every head (sources and target).
void refine(MultiHeadModel& model, std::span<const Dataset* const> datasets, std::size_t n_batches,
            std::size_t batch_size, Rng& rng);

/// phi(x)^T mu of head `head`.
double predict(const MultiHeadModel& model, std::size_t head, const Vector& x);

/// Textual checkpoint (JSON) of the encoder, heads, and transforms.
void save_model(const MultiHeadModel& model, std::ostream& out);
MultiHeadModel load_model(std::istream& in);

}  // namespace bers
