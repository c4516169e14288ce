#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "stancebench/corpus.hpp"
#include "stancebench/error.hpp"
#include "stancebench/rng.hpp"

namespace stancebench {

enum class StanceErrorKind {
    MissingEmbedding,
    DimensionMismatch,
    NonFiniteLoss,
    SingleClassTrainingSet,
    EmptyInput,
    VersionMismatch,
    CorruptFile,
    IoError,
};
using StanceError = KindedError<StanceErrorKind>;

enum class BackendKind : std::uint8_t { HashedNgram = 1, PrecomputedEmbedding = 2 };

struct BackendConfig {
    BackendKind kind = BackendKind::HashedNgram;
    std::size_t dim = std::size_t{1} << 12;
    std::size_t max_ngram = 2; // hashed backend only

    static BackendConfig hashed(std::size_t dim, std::size_t max_ngram = 2) {
        return {BackendKind::HashedNgram, dim, max_ngram};
    }
    static BackendConfig precomputed(std::size_t dim = 1024) {
        return {BackendKind::PrecomputedEmbedding, dim, 0};
    }
};

/// Sparse vector; indices strictly increasing and < dim.
struct FeatureVector {
    std::size_t dim = 0;
    std::vector<std::uint32_t> indices;
    std::vector<double> values;

    double norm() const;
};

/// Bucket and sign of one n-gram under the hashed backend.
struct HashedSlot {
    std::uint32_t bucket;
    double sign;
};
HashedSlot hash_ngram(std::string_view ngram, std::size_t dim);

/// Word n-grams (orders 1..max_ngram) joined by a single space.
std::vector<std::string> ngrams(std::span<const std::string> tokens, std::size_t max_ngram);

/// Signed feature hashing of word n-grams followed by L2 normalization.
FeatureVector featurize_text(std::string_view text, std::size_t dim, std::size_t max_ngram = 2);

/// Precomputed encoder outputs keyed by article id.
class EmbeddingStore {
public:
    explicit EmbeddingStore(std::size_t dim = 1024) : dim_(dim) {}

    /// Records: u32 LE id length, id bytes, dim x f32 LE.
    static EmbeddingStore load(const std::string& path, std::size_t dim = 1024);
    void save(const std::string& path) const;

    void insert(std::string article_id, std::vector<float> vector);
    const std::vector<float>* find(std::string_view article_id) const;
    std::size_t dim() const noexcept { return dim_; }
    std::size_t size() const noexcept { return vectors_.size(); }

private:
    std::size_t dim_;
    std::vector<std::string> order_;
    std::unordered_map<std::string, std::vector<float>> vectors_;
};

FeatureVector featurize(const Article& article, const BackendConfig& backend,
                        const EmbeddingStore* embeddings = nullptr);

inline constexpr std::size_t kHeadWidth = 1024;
inline constexpr double kHeadDropout = 0.1;

struct EvalRecord {
    std::size_t step = 0;
    double accuracy = 0.0;
};

struct ModelMetadata {
    std::uint64_t seed = 0;
    std::size_t best_step = 0;
    double best_val_accuracy = 0.0;
    std::size_t total_steps = 0;
    std::size_t warmup_steps = 0;
    std::vector<EvalRecord> evals;
};

/// Encoder surrogate (P) plus the classification head:
/// dropout -> linear(h,h) -> tanh -> dropout -> linear(h,2).
/// Matrices are row-major: P is dim x h, W1 is h x h (out x in), W2 is 2 x h.
struct StanceModel {
    BackendConfig backend;
    std::size_t hidden = kHeadWidth;
    double dropout_p = kHeadDropout;
    std::vector<double> P;
    std::vector<double> W1;
    std::vector<double> b1;
    std::vector<double> W2;
    std::vector<double> b2;
    ModelMetadata metadata;

    std::size_t input_dim() const noexcept { return backend.dim; }
    std::size_t parameter_count() const noexcept {
        return P.size() + W1.size() + b1.size() + W2.size() + b2.size();
    }
};

/// Random initialization; the precomputed backend with dim == hidden starts
/// P at the identity so real encoder outputs pass through unchanged.
StanceModel init_model(const BackendConfig& backend, std::uint64_t seed,
                       std::size_t hidden = kHeadWidth, double dropout_p = kHeadDropout);

/// Same shapes as StanceModel, all zeros.
struct Gradients {
    std::vector<double> P, W1, b1, W2, b2;
    explicit Gradients(const StanceModel& model);
    void clear();
};

/// Dropout is applied only when `dropout_rng` is non-null (training mode).
std::array<double, 2> forward(const StanceModel& model, const FeatureVector& x,
                              Rng* dropout_rng = nullptr);

struct LabeledExample {
    FeatureVector features;
    Stance label;
};

/// Mean cross-entropy over the batch; gradients accumulated into `grads`.
double loss_and_gradients(const StanceModel& model, std::span<const LabeledExample> batch,
                          Gradients& grads, Rng* dropout_rng = nullptr);

struct AdamWParams {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double weight_decay = 0.01;
};

/// Decoupled weight decay applied to P, W1 and W2; biases are not decayed.
class AdamW {
public:
    AdamW(const StanceModel& model, AdamWParams params = {});

    void step(StanceModel& model, const Gradients& grads, double learning_rate);
    std::size_t steps_taken() const noexcept { return t_; }
    const AdamWParams& params() const noexcept { return params_; }

private:
    AdamWParams params_;
    std::size_t t_ = 0;
    std::array<std::vector<double>, 5> m_;
    std::array<std::vector<double>, 5> v_;
};

struct TrainConfig {
    std::size_t batch_size = 8;
    double peak_lr = 1e-3;
    std::size_t epochs = 4;
    double warmup_fraction = 0.06;
    double weight_decay = 0.01;
    std::uint64_t seed = 0;
    std::size_t eval_every = 100;
    std::size_t hidden = kHeadWidth;
    double dropout_p = kHeadDropout;
};

/// Default peak learning rate for a backend: 5e-6 for precomputed encoder
/// outputs, 1e-3 for the randomly initialized hashed projection.
double default_peak_lr(BackendKind kind) noexcept;
/// 6 epochs for "de" and "es", 4 otherwise.
std::size_t default_epochs(std::string_view model_language) noexcept;

std::size_t warmup_steps(std::size_t total_steps, const TrainConfig& config) noexcept;

/// Linear warmup 0 -> peak over the warmup steps, then linear decay to 0 at total_steps.
double lr_at_step(std::size_t step, std::size_t total_steps, const TrainConfig& config) noexcept;

/// One optimizer update on `batch`; returns the batch loss (before the update).
double train_step(StanceModel& model, std::span<const LabeledExample> batch, AdamW& optimizer,
                  double learning_rate, Rng* dropout_rng = nullptr);

double accuracy(const StanceModel& model, std::span<const LabeledExample> examples);

struct TrainProgress {
    std::size_t step;
    std::size_t total_steps;
    double loss;
    std::optional<double> val_accuracy;
};

/// Seeded shuffling each epoch; returns the checkpoint with the highest
/// validation accuracy (earliest on ties).
StanceModel train(std::span<const LabeledExample> train_set, std::span<const LabeledExample> val_set,
                  const BackendConfig& backend, const TrainConfig& config,
                  const std::function<void(const TrainProgress&)>& on_progress = {});

struct Prediction {
    std::string article_id;
    Stance stance = Stance::Right;
    double prob_left = 0.0;
};

/// Left iff prob_left > 0.5; an exact 0.5 resolves to Right.
Stance stance_from_prob_left(double prob_left) noexcept;

Prediction predict(const StanceModel& model, std::string_view article_id, const FeatureVector& x);
Prediction predict(const StanceModel& model, const Article& article,
                   const EmbeddingStore* embeddings = nullptr);
std::vector<Prediction> predict_all(const StanceModel& model, std::span<const Article> articles,
                                    const EmbeddingStore* embeddings = nullptr);

std::string render_predictions_tsv(std::span<const Prediction> predictions);
std::vector<Prediction> parse_predictions_tsv(std::string_view content);

inline constexpr std::uint32_t kModelFormatVersion = 1;

std::string serialize_model(const StanceModel& model);
StanceModel deserialize_model(std::string_view bytes);
void save_model(const StanceModel& model, const std::string& path);
StanceModel load_model(const std::string& path);

/// SHA-256 over the serialized model.
std::string model_digest(const StanceModel& model);

} // namespace stancebench
