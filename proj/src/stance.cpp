#include "stancebench/stance.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "stancebench/hashing.hpp"
#include "stancebench/textprep.hpp"

namespace stancebench {

namespace {

constexpr std::uint64_t kSignHashBasis = 0x84222325cbf29ce4ULL;

void require_dim(const StanceModel& model, const FeatureVector& x) {
    if (x.dim != model.input_dim()) {
        throw StanceError(StanceErrorKind::DimensionMismatch,
                          "feature dimension " + std::to_string(x.dim) + " != model input " +
                              std::to_string(model.input_dim()));
    }
}

// Activations kept for the backward pass.
struct Activations {
    std::vector<double> e;     // P^T x
    std::vector<double> mask1; // 0 or 1/(1-p); empty in eval mode
    std::vector<double> u;     // dropped e
    std::vector<double> h;     // tanh(W1 u + b1)
    std::vector<double> mask2;
    std::vector<double> v;     // dropped h
    std::array<double, 2> logits{};
    std::array<double, 2> prob{};
};

void draw_mask(std::vector<double>& mask, std::size_t n, double p, Rng& rng) {
    mask.resize(n);
    const double keep_scale = 1.0 / (1.0 - p);
    for (auto& m : mask) m = rng.uniform01() < p ? 0.0 : keep_scale;
}

void run_forward(const StanceModel& model, const FeatureVector& x, Rng* rng, Activations& act) {
    const std::size_t H = model.hidden;
    act.e.assign(H, 0.0);
    for (std::size_t n = 0; n < x.indices.size(); ++n) {
        const double xi = x.values[n];
        const double* row = &model.P[static_cast<std::size_t>(x.indices[n]) * H];
        for (std::size_t j = 0; j < H; ++j) act.e[j] += xi * row[j];
    }
    act.u = act.e;
    if (rng && model.dropout_p > 0.0) {
        draw_mask(act.mask1, H, model.dropout_p, *rng);
        for (std::size_t j = 0; j < H; ++j) act.u[j] *= act.mask1[j];
    } else {
        act.mask1.clear();
    }
    act.h.resize(H);
    for (std::size_t o = 0; o < H; ++o) {
        const double* w = &model.W1[o * H];
        double a = model.b1[o];
        for (std::size_t i = 0; i < H; ++i) a += w[i] * act.u[i];
        act.h[o] = std::tanh(a);
    }
    act.v = act.h;
    if (rng && model.dropout_p > 0.0) {
        draw_mask(act.mask2, H, model.dropout_p, *rng);
        for (std::size_t j = 0; j < H; ++j) act.v[j] *= act.mask2[j];
    } else {
        act.mask2.clear();
    }
    for (std::size_t c = 0; c < 2; ++c) {
        const double* w = &model.W2[c * H];
        double l = model.b2[c];
        for (std::size_t i = 0; i < H; ++i) l += w[i] * act.v[i];
        act.logits[c] = l;
    }
    const double m = std::max(act.logits[0], act.logits[1]);
    const double e0 = std::exp(act.logits[0] - m);
    const double e1 = std::exp(act.logits[1] - m);
    act.prob = {e0 / (e0 + e1), e1 / (e0 + e1)};
}

// --- little-endian byte encoding for the model file ---

void put_u8(std::string& out, std::uint8_t v) { out.push_back(static_cast<char>(v)); }

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

void put_array(std::string& out, const std::vector<double>& values) {
    put_u64(out, values.size());
    for (double v : values) put_f64(out, v);
}

class Reader {
public:
    explicit Reader(std::string_view bytes) : bytes_(bytes) {}

    std::uint8_t u8() { return static_cast<std::uint8_t>(take(1)[0]); }
    std::uint32_t u32() {
        const auto b = take(4);
        std::uint32_t v = 0;
        for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(b[i]);
        return v;
    }
    std::uint64_t u64() {
        const auto b = take(8);
        std::uint64_t v = 0;
        for (int i = 7; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(b[i]);
        return v;
    }
    double f64() { return std::bit_cast<double>(u64()); }
    std::vector<double> array(std::size_t expected) {
        const auto n = u64();
        if (n != expected) corrupt("array length mismatch");
        if (n > (bytes_.size() - pos_) / 8) corrupt("array exceeds file");
        std::vector<double> values(n);
        for (auto& v : values) v = f64();
        return values;
    }
    std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

    [[noreturn]] static void corrupt(const std::string& why) {
        throw StanceError(StanceErrorKind::CorruptFile, "model file: " + why);
    }

private:
    std::string_view take(std::size_t n) {
        if (pos_ + n > bytes_.size()) corrupt("truncated");
        const auto out = bytes_.substr(pos_, n);
        pos_ += n;
        return out;
    }

    std::string_view bytes_;
    std::size_t pos_ = 0;
};

constexpr std::string_view kModelMagic = "SBSTANCE";
constexpr std::size_t kChecksumHexLen = 64;

} // namespace

double FeatureVector::norm() const {
    double s = 0.0;
    for (double v : values) s += v * v;
    return std::sqrt(s);
}

HashedSlot hash_ngram(std::string_view ngram, std::size_t dim) {
    const std::uint64_t h = fnv1a64(ngram);
    const std::uint64_t s = fnv1a64(ngram, kSignHashBasis);
    return {static_cast<std::uint32_t>(h % dim), (s >> 63) ? -1.0 : 1.0};
}

std::vector<std::string> ngrams(std::span<const std::string> tokens, std::size_t max_ngram) {
    std::vector<std::string> out;
    for (std::size_t order = 1; order <= max_ngram; ++order) {
        if (tokens.size() < order) break;
        for (std::size_t i = 0; i + order <= tokens.size(); ++i) {
            std::string g = tokens[i];
            for (std::size_t j = 1; j < order; ++j) {
                g.push_back(' ');
                g += tokens[i + j];
            }
            out.push_back(std::move(g));
        }
    }
    return out;
}

FeatureVector featurize_text(std::string_view text, std::size_t dim, std::size_t max_ngram) {
    FeatureVector x;
    x.dim = dim;
    const auto tokens = word_tokens(text);
    std::map<std::uint32_t, double> buckets;
    for (const auto& g : ngrams(tokens, max_ngram)) {
        const auto slot = hash_ngram(g, dim);
        buckets[slot.bucket] += slot.sign;
    }
    double sq = 0.0;
    for (const auto& [b, v] : buckets) sq += v * v;
    if (sq == 0.0) return x;
    const double inv = 1.0 / std::sqrt(sq);
    for (const auto& [b, v] : buckets) {
        if (v == 0.0) continue;
        x.indices.push_back(b);
        x.values.push_back(v * inv);
    }
    return x;
}

EmbeddingStore EmbeddingStore::load(const std::string& path, std::size_t dim) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw StanceError(StanceErrorKind::IoError, "cannot open embeddings " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    const std::string bytes = ss.str();
    Reader r(bytes);
    EmbeddingStore store(dim);
    try {
        while (r.remaining() > 0) {
            const auto id_len = r.u32();
            std::string id;
            id.reserve(id_len);
            for (std::uint32_t i = 0; i < id_len; ++i) id.push_back(static_cast<char>(r.u8()));
            std::vector<float> vec(dim);
            for (auto& v : vec) v = std::bit_cast<float>(r.u32());
            store.insert(std::move(id), std::move(vec));
        }
    } catch (const StanceError&) {
        throw StanceError(StanceErrorKind::CorruptFile, "embeddings file " + path + " is truncated");
    }
    return store;
}

void EmbeddingStore::save(const std::string& path) const {
    std::string out;
    for (const auto& id : order_) {
        put_u32(out, static_cast<std::uint32_t>(id.size()));
        out += id;
        for (float v : vectors_.at(id)) put_u32(out, std::bit_cast<std::uint32_t>(v));
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw StanceError(StanceErrorKind::IoError, "cannot write " + path);
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
}

void EmbeddingStore::insert(std::string article_id, std::vector<float> vector) {
    if (vector.size() != dim_) {
        throw StanceError(StanceErrorKind::DimensionMismatch, "embedding for '" + article_id + "' has wrong size");
    }
    if (!vectors_.contains(article_id)) order_.push_back(article_id);
    vectors_[std::move(article_id)] = std::move(vector);
}

const std::vector<float>* EmbeddingStore::find(std::string_view article_id) const {
    const auto it = vectors_.find(std::string(article_id));
    return it == vectors_.end() ? nullptr : &it->second;
}

FeatureVector featurize(const Article& article, const BackendConfig& backend, const EmbeddingStore* embeddings) {
    if (backend.kind == BackendKind::HashedNgram) {
        return featurize_text(article.text(), backend.dim, backend.max_ngram);
    }
    const std::vector<float>* vec = embeddings ? embeddings->find(article.article_id) : nullptr;
    if (!vec) {
        throw StanceError(StanceErrorKind::MissingEmbedding, "no embedding for article '" + article.article_id + "'");
    }
    if (vec->size() != backend.dim) {
        throw StanceError(StanceErrorKind::DimensionMismatch, "embedding size differs from backend dim");
    }
    FeatureVector x;
    x.dim = backend.dim;
    for (std::uint32_t i = 0; i < vec->size(); ++i) {
        if ((*vec)[i] == 0.0f) continue;
        x.indices.push_back(i);
        x.values.push_back((*vec)[i]);
    }
    return x;
}

StanceModel init_model(const BackendConfig& backend, std::uint64_t seed, std::size_t hidden, double dropout_p) {
    if (!(dropout_p >= 0.0 && dropout_p < 1.0)) {
        throw StanceError(StanceErrorKind::EmptyInput, "dropout probability must lie in [0, 1)");
    }
    StanceModel m;
    m.backend = backend;
    m.hidden = hidden;
    m.dropout_p = dropout_p;
    m.metadata.seed = seed;
    const std::size_t D = backend.dim;
    const std::size_t H = hidden;
    Rng rng(derive_seed(seed, 0));
    m.P.assign(D * H, 0.0);
    if (backend.kind == BackendKind::PrecomputedEmbedding && D == H) {
        for (std::size_t i = 0; i < D; ++i) m.P[i * H + i] = 1.0;
    } else {
        const double scale = backend.kind == BackendKind::HashedNgram ? 1.0 : 1.0 / std::sqrt(static_cast<double>(D));
        for (auto& p : m.P) p = scale * rng.normal();
    }
    m.W1.resize(H * H);
    for (auto& w : m.W1) w = 0.02 * rng.normal();
    m.b1.assign(H, 0.0);
    m.W2.resize(2 * H);
    for (auto& w : m.W2) w = 0.02 * rng.normal();
    m.b2.assign(2, 0.0);
    return m;
}

Gradients::Gradients(const StanceModel& model)
    : P(model.P.size(), 0.0),
      W1(model.W1.size(), 0.0),
      b1(model.b1.size(), 0.0),
      W2(model.W2.size(), 0.0),
      b2(model.b2.size(), 0.0) {}

void Gradients::clear() {
    for (auto* g : {&P, &W1, &b1, &W2, &b2}) std::fill(g->begin(), g->end(), 0.0);
}

std::array<double, 2> forward(const StanceModel& model, const FeatureVector& x, Rng* dropout_rng) {
    require_dim(model, x);
    Activations act;
    run_forward(model, x, dropout_rng, act);
    return act.prob;
}

double loss_and_gradients(const StanceModel& model, std::span<const LabeledExample> batch, Gradients& grads,
                          Rng* dropout_rng) {
    if (batch.empty()) {
        throw StanceError(StanceErrorKind::EmptyInput, "empty batch");
    }
    const std::size_t H = model.hidden;
    const double scale = 1.0 / static_cast<double>(batch.size());
    double loss = 0.0;
    Activations act;
    std::vector<double> dv(H), da(H), du(H);
    for (const auto& ex : batch) {
        require_dim(model, ex.features);
        run_forward(model, ex.features, dropout_rng, act);
        const std::size_t y = ex.label == Stance::Left ? 0 : 1;
        const double m = std::max(act.logits[0], act.logits[1]);
        const double lse = m + std::log(std::exp(act.logits[0] - m) + std::exp(act.logits[1] - m));
        loss += lse - act.logits[y];

        std::array<double, 2> dlogits{act.prob[0] * scale, act.prob[1] * scale};
        dlogits[y] -= scale;

        std::fill(dv.begin(), dv.end(), 0.0);
        for (std::size_t c = 0; c < 2; ++c) {
            grads.b2[c] += dlogits[c];
            double* gw = &grads.W2[c * H];
            const double* w = &model.W2[c * H];
            for (std::size_t i = 0; i < H; ++i) {
                gw[i] += dlogits[c] * act.v[i];
                dv[i] += dlogits[c] * w[i];
            }
        }
        for (std::size_t i = 0; i < H; ++i) {
            const double dh = act.mask2.empty() ? dv[i] : dv[i] * act.mask2[i];
            da[i] = dh * (1.0 - act.h[i] * act.h[i]);
        }
        std::fill(du.begin(), du.end(), 0.0);
        for (std::size_t o = 0; o < H; ++o) {
            const double g = da[o];
            grads.b1[o] += g;
            if (g == 0.0) continue;
            double* gw = &grads.W1[o * H];
            const double* w = &model.W1[o * H];
            for (std::size_t i = 0; i < H; ++i) {
                gw[i] += g * act.u[i];
                du[i] += g * w[i];
            }
        }
        if (!act.mask1.empty()) {
            for (std::size_t i = 0; i < H; ++i) du[i] *= act.mask1[i];
        }
        for (std::size_t n = 0; n < ex.features.indices.size(); ++n) {
            const double xi = ex.features.values[n];
            double* gp = &grads.P[static_cast<std::size_t>(ex.features.indices[n]) * H];
            for (std::size_t j = 0; j < H; ++j) gp[j] += xi * du[j];
        }
    }
    return loss * scale;
}

AdamW::AdamW(const StanceModel& model, AdamWParams params) : params_(params) {
    const std::array<std::size_t, 5> sizes{model.P.size(), model.W1.size(), model.b1.size(), model.W2.size(),
                                           model.b2.size()};
    for (std::size_t g = 0; g < 5; ++g) {
        m_[g].assign(sizes[g], 0.0);
        v_[g].assign(sizes[g], 0.0);
    }
}

void AdamW::step(StanceModel& model, const Gradients& grads, double learning_rate) {
    ++t_;
    const double bc1 = 1.0 - std::pow(params_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(params_.beta2, static_cast<double>(t_));
    const std::array<std::vector<double>*, 5> params{&model.P, &model.W1, &model.b1, &model.W2, &model.b2};
    const std::array<const std::vector<double>*, 5> gs{&grads.P, &grads.W1, &grads.b1, &grads.W2, &grads.b2};
    const std::array<bool, 5> decayed{true, true, false, true, false};
    const double b1 = params_.beta1;
    const double b2 = params_.beta2;
    for (std::size_t g = 0; g < 5; ++g) {
        std::vector<double>& p = *params[g];
        const std::vector<double>& grad = *gs[g];
        std::vector<double>& m = m_[g];
        std::vector<double>& v = v_[g];
        const double decay = decayed[g] ? params_.weight_decay : 0.0;
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = b1 * m[i] + (1.0 - b1) * grad[i];
            v[i] = b2 * v[i] + (1.0 - b2) * grad[i] * grad[i];
            const double m_hat = m[i] / bc1;
            const double v_hat = v[i] / bc2;
            p[i] -= learning_rate * (m_hat / (std::sqrt(v_hat) + params_.epsilon) + decay * p[i]);
        }
    }
}

double default_peak_lr(BackendKind kind) noexcept {
    return kind == BackendKind::PrecomputedEmbedding ? 5e-6 : 1e-3;
}

std::size_t default_epochs(std::string_view model_language) noexcept {
    return (model_language == "de" || model_language == "es") ? 6 : 4;
}

std::size_t warmup_steps(std::size_t total_steps, const TrainConfig& config) noexcept {
    return static_cast<std::size_t>(std::ceil(config.warmup_fraction * static_cast<double>(total_steps)));
}

double lr_at_step(std::size_t step, std::size_t total_steps, const TrainConfig& config) noexcept {
    if (step >= total_steps) return 0.0;
    const std::size_t warmup = warmup_steps(total_steps, config);
    if (step < warmup) {
        return config.peak_lr * static_cast<double>(step) / static_cast<double>(warmup);
    }
    return config.peak_lr * static_cast<double>(total_steps - step) / static_cast<double>(total_steps - warmup);
}

double train_step(StanceModel& model, std::span<const LabeledExample> batch, AdamW& optimizer, double learning_rate,
                  Rng* dropout_rng) {
    Gradients grads(model);
    const double loss = loss_and_gradients(model, batch, grads, dropout_rng);
    if (!std::isfinite(loss)) {
        throw StanceError(StanceErrorKind::NonFiniteLoss, "training loss is not finite");
    }
    optimizer.step(model, grads, learning_rate);
    return loss;
}

double accuracy(const StanceModel& model, std::span<const LabeledExample> examples) {
    if (examples.empty()) return 0.0;
    std::size_t correct = 0;
    for (const auto& ex : examples) {
        const auto p = forward(model, ex.features);
        if (stance_from_prob_left(p[0]) == ex.label) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(examples.size());
}

StanceModel train(std::span<const LabeledExample> train_set, std::span<const LabeledExample> val_set,
                  const BackendConfig& backend, const TrainConfig& config,
                  const std::function<void(const TrainProgress&)>& on_progress) {
    if (train_set.empty() || val_set.empty()) {
        throw StanceError(StanceErrorKind::EmptyInput, "train and validation sets must be non-empty");
    }
    if (config.batch_size == 0 || !(config.warmup_fraction >= 0.0 && config.warmup_fraction < 1.0)) {
        throw StanceError(StanceErrorKind::EmptyInput, "invalid batch size or warmup fraction");
    }
    const bool has_left = std::any_of(train_set.begin(), train_set.end(),
                                      [](const LabeledExample& e) { return e.label == Stance::Left; });
    const bool has_right = std::any_of(train_set.begin(), train_set.end(),
                                       [](const LabeledExample& e) { return e.label == Stance::Right; });
    if (!has_left || !has_right) {
        throw StanceError(StanceErrorKind::SingleClassTrainingSet, "training set holds a single class");
    }

    StanceModel model = init_model(backend, config.seed, config.hidden, config.dropout_p);
    AdamW optimizer(model, AdamWParams{.weight_decay = config.weight_decay});
    Rng shuffle_rng(derive_seed(config.seed, 1));
    Rng dropout_rng(derive_seed(config.seed, 2));

    const std::size_t n = train_set.size();
    const std::size_t steps_per_epoch = (n + config.batch_size - 1) / config.batch_size;
    const std::size_t total = config.epochs * steps_per_epoch;
    const std::size_t eval_every = std::max<std::size_t>(config.eval_every, 1);

    StanceModel best = model;
    double best_acc = -1.0;
    std::size_t best_step = 0;
    std::vector<EvalRecord> evals;

    Gradients grads(model);
    std::vector<std::size_t> order(n);
    std::vector<LabeledExample> batch;
    std::size_t step = 0;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        shuffle_rng.shuffle(order.begin(), order.end());
        for (std::size_t b = 0; b < steps_per_epoch; ++b) {
            batch.clear();
            const std::size_t end = std::min(n, (b + 1) * config.batch_size);
            for (std::size_t i = b * config.batch_size; i < end; ++i) batch.push_back(train_set[order[i]]);

            grads.clear();
            const double loss = loss_and_gradients(model, batch, grads, &dropout_rng);
            if (!std::isfinite(loss)) {
                throw StanceError(StanceErrorKind::NonFiniteLoss,
                                  "training loss is not finite at step " + std::to_string(step));
            }
            optimizer.step(model, grads, lr_at_step(step, total, config));
            ++step;

            std::optional<double> val_acc;
            if (step % eval_every == 0 || step == total) {
                val_acc = accuracy(model, val_set);
                evals.push_back({step, *val_acc});
                if (*val_acc > best_acc) {
                    best_acc = *val_acc;
                    best_step = step;
                    best.P = model.P;
                    best.W1 = model.W1;
                    best.b1 = model.b1;
                    best.W2 = model.W2;
                    best.b2 = model.b2;
                }
            }
            if (on_progress) on_progress({step, total, loss, val_acc});
        }
    }
    best.metadata.seed = config.seed;
    best.metadata.best_step = best_step;
    best.metadata.best_val_accuracy = best_acc;
    best.metadata.total_steps = total;
    best.metadata.warmup_steps = warmup_steps(total, config);
    best.metadata.evals = std::move(evals);
    return best;
}

Stance stance_from_prob_left(double prob_left) noexcept {
    return prob_left > 0.5 ? Stance::Left : Stance::Right;
}

Prediction predict(const StanceModel& model, std::string_view article_id, const FeatureVector& x) {
    const auto p = forward(model, x);
    return {std::string(article_id), stance_from_prob_left(p[0]), p[0]};
}

Prediction predict(const StanceModel& model, const Article& article, const EmbeddingStore* embeddings) {
    return predict(model, article.article_id, featurize(article, model.backend, embeddings));
}

std::vector<Prediction> predict_all(const StanceModel& model, std::span<const Article> articles,
                                    const EmbeddingStore* embeddings) {
    std::vector<Prediction> out;
    out.reserve(articles.size());
    for (const auto& a : articles) out.push_back(predict(model, a, embeddings));
    return out;
}

std::string render_predictions_tsv(std::span<const Prediction> predictions) {
    std::string out = "article_id\tstance\tprob_left\n";
    char buf[64];
    for (const auto& p : predictions) {
        std::snprintf(buf, sizeof buf, "%.17g", p.prob_left);
        out += p.article_id;
        out += '\t';
        out += to_string(p.stance);
        out += '\t';
        out += buf;
        out += '\n';
    }
    return out;
}

std::vector<Prediction> parse_predictions_tsv(std::string_view content) {
    std::vector<Prediction> out;
    std::istringstream in{std::string(content)};
    std::string line;
    bool header = true;
    while (std::getline(in, line)) {
        if (header) {
            header = false;
            continue;
        }
        if (line.empty()) continue;
        const auto t1 = line.find('\t');
        const auto t2 = line.find('\t', t1 + 1);
        if (t1 == std::string::npos || t2 == std::string::npos) {
            throw StanceError(StanceErrorKind::CorruptFile, "bad prediction line: " + line);
        }
        Prediction p;
        p.article_id = line.substr(0, t1);
        const auto stance = parse_stance(line.substr(t1 + 1, t2 - t1 - 1));
        if (!stance) throw StanceError(StanceErrorKind::CorruptFile, "bad stance in: " + line);
        p.stance = *stance;
        p.prob_left = std::stod(line.substr(t2 + 1));
        out.push_back(std::move(p));
    }
    return out;
}

std::string serialize_model(const StanceModel& model) {
    std::string out(kModelMagic);
    put_u32(out, kModelFormatVersion);
    put_u8(out, static_cast<std::uint8_t>(model.backend.kind));
    put_u32(out, static_cast<std::uint32_t>(model.backend.dim));
    put_u32(out, static_cast<std::uint32_t>(model.backend.max_ngram));
    put_u32(out, static_cast<std::uint32_t>(model.hidden));
    put_f64(out, model.dropout_p);
    const auto& md = model.metadata;
    put_u64(out, md.seed);
    put_u64(out, md.best_step);
    put_f64(out, md.best_val_accuracy);
    put_u64(out, md.total_steps);
    put_u64(out, md.warmup_steps);
    put_u32(out, static_cast<std::uint32_t>(md.evals.size()));
    for (const auto& e : md.evals) {
        put_u64(out, e.step);
        put_f64(out, e.accuracy);
    }
    put_array(out, model.P);
    put_array(out, model.W1);
    put_array(out, model.b1);
    put_array(out, model.W2);
    put_array(out, model.b2);
    out += sha256_hex(out);
    return out;
}

StanceModel deserialize_model(std::string_view bytes) {
    if (bytes.size() < kModelMagic.size() + 4 + kChecksumHexLen || bytes.substr(0, kModelMagic.size()) != kModelMagic) {
        Reader::corrupt("bad magic or truncated header");
    }
    const auto body = bytes.substr(0, bytes.size() - kChecksumHexLen);
    if (sha256_hex(body) != bytes.substr(body.size())) {
        Reader::corrupt("checksum mismatch");
    }
    Reader r(body.substr(kModelMagic.size()));
    const auto version = r.u32();
    if (version != kModelFormatVersion) {
        throw StanceError(StanceErrorKind::VersionMismatch,
                          "model format version " + std::to_string(version) + ", expected " +
                              std::to_string(kModelFormatVersion));
    }
    StanceModel m;
    const auto kind = r.u8();
    if (kind != static_cast<std::uint8_t>(BackendKind::HashedNgram) &&
        kind != static_cast<std::uint8_t>(BackendKind::PrecomputedEmbedding)) {
        Reader::corrupt("unknown backend kind");
    }
    m.backend.kind = static_cast<BackendKind>(kind);
    m.backend.dim = r.u32();
    m.backend.max_ngram = r.u32();
    m.hidden = r.u32();
    m.dropout_p = r.f64();
    auto& md = m.metadata;
    md.seed = r.u64();
    md.best_step = r.u64();
    md.best_val_accuracy = r.f64();
    md.total_steps = r.u64();
    md.warmup_steps = r.u64();
    const auto n_evals = r.u32();
    for (std::uint32_t i = 0; i < n_evals; ++i) {
        EvalRecord e;
        e.step = r.u64();
        e.accuracy = r.f64();
        md.evals.push_back(e);
    }
    const std::size_t D = m.backend.dim;
    const std::size_t H = m.hidden;
    m.P = r.array(D * H);
    m.W1 = r.array(H * H);
    m.b1 = r.array(H);
    m.W2 = r.array(2 * H);
    m.b2 = r.array(2);
    if (r.remaining() != 0) Reader::corrupt("trailing bytes");
    return m;
}

void save_model(const StanceModel& model, const std::string& path) {
    const std::filesystem::path p(path);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw StanceError(StanceErrorKind::IoError, "cannot write " + path);
    const auto bytes = serialize_model(model);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

StanceModel load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw StanceError(StanceErrorKind::IoError, "cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return deserialize_model(ss.str());
}

std::string model_digest(const StanceModel& model) {
    return sha256_hex(serialize_model(model));
}

} // namespace stancebench
