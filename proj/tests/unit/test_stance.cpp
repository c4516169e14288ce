#include <algorithm>
#include <cmath>
#include <cstring>
#include <map>

#include "doctest.h"
#include "helpers.hpp"

#include "stancebench/hashing.hpp"
#include "stancebench/stance.hpp"
#include "stancebench/textprep.hpp"

using namespace stancebench;

namespace {

std::uint64_t ref_fnv(const std::string& s, std::uint64_t h) {
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::vector<double> dense(const FeatureVector& x) {
    std::vector<double> d(x.dim, 0.0);
    for (std::size_t i = 0; i < x.indices.size(); ++i) d[x.indices[i]] = x.values[i];
    return d;
}

// Dense forward pass written from the layer definitions, no dropout.
std::array<double, 2> ref_forward(const StanceModel& m, const std::vector<double>& x) {
    const std::size_t D = m.input_dim(), H = m.hidden;
    std::vector<double> z(H, 0.0), t(H, 0.0);
    for (std::size_t j = 0; j < H; ++j)
        for (std::size_t i = 0; i < D; ++i) z[j] += x[i] * m.P[i * H + j];
    for (std::size_t o = 0; o < H; ++o) {
        double a = m.b1[o];
        for (std::size_t i = 0; i < H; ++i) a += m.W1[o * H + i] * z[i];
        t[o] = std::tanh(a);
    }
    double l[2];
    for (std::size_t c = 0; c < 2; ++c) {
        l[c] = m.b2[c];
        for (std::size_t i = 0; i < H; ++i) l[c] += m.W2[c * H + i] * t[i];
    }
    const double mx = std::max(l[0], l[1]);
    const double e0 = std::exp(l[0] - mx), e1 = std::exp(l[1] - mx);
    return {e0 / (e0 + e1), e1 / (e0 + e1)};
}

double ref_loss(const StanceModel& m, std::span<const LabeledExample> batch) {
    double s = 0;
    for (const auto& ex : batch) {
        const auto p = ref_forward(m, dense(ex.features));
        s -= std::log(p[ex.label == Stance::Left ? 0 : 1]);
    }
    return s / static_cast<double>(batch.size());
}

FeatureVector dense_features(std::vector<double> v) {
    FeatureVector x;
    x.dim = v.size();
    for (std::size_t i = 0; i < v.size(); ++i)
        if (v[i] != 0.0) x.indices.push_back(static_cast<std::uint32_t>(i)), x.values.push_back(v[i]);
    return x;
}

std::vector<LabeledExample> separable_set(std::size_t n, std::size_t dim, std::uint64_t seed) {
    static const std::vector<std::string> left{"solidarity", "workers", "public", "union", "equality", "welfare"};
    static const std::vector<std::string> right{"market", "tax", "business", "tradition", "security", "enterprise"};
    static const std::vector<std::string> shared{"city", "report", "people", "week", "council", "plan", "today"};
    Rng rng(seed);
    std::vector<LabeledExample> out;
    for (std::size_t i = 0; i < n; ++i) {
        const bool is_left = i % 2 == 0;
        std::string text;
        for (int w = 0; w < 30; ++w) {
            const auto& pool = rng.bernoulli(0.3) ? (is_left ? left : right) : shared;
            text += pool[rng.uniform_index(pool.size())] + " ";
        }
        out.push_back({featurize_text(text, dim), is_left ? Stance::Left : Stance::Right});
    }
    return out;
}

std::vector<double>* param(StanceModel& m, int which) {
    switch (which) {
    case 0: return &m.P;
    case 1: return &m.W1;
    case 2: return &m.b1;
    case 3: return &m.W2;
    default: return &m.b2;
    }
}

const std::vector<double>& grad(const Gradients& g, int which) {
    switch (which) {
    case 0: return g.P;
    case 1: return g.W1;
    case 2: return g.b1;
    case 3: return g.W2;
    default: return g.b2;
    }
}

} // namespace

TEST_CASE("hashed featurization matches a dictionary oracle") {
    const std::string text = "The council approved the new budget while the opposition said the budget "
                             "ignores workers and the council ignores rents today";
    const std::size_t dim = 64;
    const auto x = featurize_text(text, dim, 2);

    const auto toks = word_tokens(text);
    REQUIRE(toks.size() == 20);
    std::map<std::size_t, double> acc;
    auto add = [&](const std::string& g) {
        const auto b = ref_fnv(g, 0xcbf29ce484222325ULL) % dim;
        const double s = (ref_fnv(g, 0x84222325cbf29ce4ULL) >> 63) ? -1.0 : 1.0;
        acc[b] += s;
    };
    for (const auto& t : toks) add(t);
    for (std::size_t i = 0; i + 1 < toks.size(); ++i) add(toks[i] + " " + toks[i + 1]);
    double sq = 0;
    for (auto& [b, v] : acc) sq += v * v;
    std::vector<double> expected(dim, 0.0);
    for (auto& [b, v] : acc) expected[b] = v / std::sqrt(sq);

    const auto got = dense(x);
    for (std::size_t i = 0; i < dim; ++i) CHECK(got[i] == doctest::Approx(expected[i]).epsilon(1e-15));
    CHECK(x.norm() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(std::is_sorted(x.indices.begin(), x.indices.end()));
    CHECK(dense(featurize_text(text, dim, 2)) == got);

    const auto empty = featurize_text("", dim);
    CHECK(empty.indices.empty());
    CHECK(empty.dim == dim);
    CHECK(ngrams(std::vector<std::string>{"a", "b", "c"}, 2) ==
          std::vector<std::string>{"a", "b", "c", "a b", "b c"});
}

TEST_CASE("zero weights give an even split") {
    auto m = init_model(BackendConfig::hashed(16), 1, 4, 0.0);
    for (int w = 0; w < 5; ++w) std::fill(param(m, w)->begin(), param(m, w)->end(), 0.0);
    const auto p = forward(m, featurize_text("some words here", 16));
    CHECK(p[0] == 0.5);
    CHECK(p[1] == 0.5);
    CHECK(stance_from_prob_left(0.5) == Stance::Right);
    CHECK(stance_from_prob_left(0.5000001) == Stance::Left);
    CHECK(predict(m, "id", featurize_text("x", 16)).stance == Stance::Right);
}

TEST_CASE("forward pass agrees with a dense oracle") {
    auto m = init_model(BackendConfig::hashed(4), 3, 4, 0.1);
    Rng rng(5);
    for (int w = 0; w < 5; ++w)
        for (auto& v : *param(m, w)) v = rng.normal();
    const std::vector<double> x{0.5, -0.5, 0.5, 0.5};
    const auto got = forward(m, dense_features(x));
    const auto ref = ref_forward(m, x);
    CHECK(std::abs(got[0] - ref[0]) < 1e-12);
    CHECK(std::abs(got[1] - ref[1]) < 1e-12);
    CHECK(got[0] + got[1] == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("analytic gradients match central differences") {
    auto m = init_model(BackendConfig::hashed(6), 9, 6, 0.0);
    Rng rng(13);
    for (int w = 0; w < 5; ++w)
        for (auto& v : *param(m, w)) v = 0.5 * rng.normal();
    std::vector<LabeledExample> batch;
    for (int i = 0; i < 4; ++i) {
        std::vector<double> x(6);
        for (auto& v : x) v = rng.normal();
        batch.push_back({dense_features(x), i % 2 ? Stance::Left : Stance::Right});
    }
    Gradients g(m);
    const double loss = loss_and_gradients(m, batch, g);
    CHECK(loss == doctest::Approx(ref_loss(m, batch)).epsilon(1e-12));
    const double eps = 1e-4;
    double worst = 0;
    for (int w = 0; w < 5; ++w) {
        auto& p = *param(m, w);
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double orig = p[i];
            p[i] = orig + eps;
            const double up = ref_loss(m, batch);
            p[i] = orig - eps;
            const double down = ref_loss(m, batch);
            p[i] = orig;
            const double fd = (up - down) / (2 * eps);
            const double an = grad(g, w)[i];
            worst = std::max(worst, std::abs(fd - an) / std::max(1e-8, std::abs(fd) + std::abs(an)));
        }
    }
    CHECK(worst < 1e-4);
}

TEST_CASE("learning-rate schedule") {
    TrainConfig cfg;
    cfg.peak_lr = 2e-3;
    cfg.warmup_fraction = 0.1;
    CHECK(warmup_steps(100, cfg) == 10);
    CHECK(warmup_steps(95, cfg) == 10);
    CHECK(lr_at_step(0, 100, cfg) == 0.0);
    CHECK(lr_at_step(5, 100, cfg) == doctest::Approx(1e-3));
    CHECK(lr_at_step(10, 100, cfg) == doctest::Approx(2e-3));
    CHECK(lr_at_step(55, 100, cfg) == doctest::Approx(1e-3));
    CHECK(lr_at_step(100, 100, cfg) == 0.0);
    CHECK(lr_at_step(250, 100, cfg) == 0.0);
    double prev = 1;
    for (std::size_t s = 10; s <= 100; ++s) {
        CHECK(lr_at_step(s, 100, cfg) <= prev);
        prev = lr_at_step(s, 100, cfg);
    }
    CHECK(default_epochs("de") == 6);
    CHECK(default_epochs("es") == 6);
    CHECK(default_epochs("en") == 4);
    CHECK(default_epochs("multi") == 4);
}

TEST_CASE("zero learning rate without decay changes nothing") {
    auto m = init_model(BackendConfig::hashed(32), 2, 8, 0.1);
    const auto before = serialize_model(m);
    AdamW opt(m, AdamWParams{0.9, 0.999, 1e-8, 0.0});
    const auto batch = separable_set(4, 32, 1);
    Rng drop(3);
    train_step(m, batch, opt, 0.0, &drop);
    CHECK(serialize_model(m) == before);
    CHECK(opt.steps_taken() == 1);
}

TEST_CASE("repeated steps on one example drive its loss down") {
    auto m = init_model(BackendConfig::hashed(32), 4, 8, 0.0);
    AdamW opt(m, AdamWParams{0.9, 0.999, 1e-8, 0.0});
    const auto one = separable_set(1, 32, 2);
    double prev = ref_loss(m, one);
    for (int i = 0; i < 50; ++i) {
        train_step(m, one, opt, 1e-2);
        const double now = ref_loss(m, one);
        CHECK(now < prev);
        prev = now;
    }
    CHECK(prev < 0.05);
}

TEST_CASE("training learns a separable set and is reproducible") {
    const auto tr = separable_set(200, 256, 11);
    const auto va = separable_set(60, 256, 12);
    TrainConfig cfg;
    cfg.hidden = 32;
    cfg.epochs = 3;
    cfg.eval_every = 10;
    cfg.seed = 42;
    const auto m1 = train(tr, va, BackendConfig::hashed(256), cfg);
    const auto m2 = train(tr, va, BackendConfig::hashed(256), cfg);
    CHECK(model_digest(m1) == model_digest(m2));
    CHECK(accuracy(m1, va) >= 0.9);
    const auto& md = m1.metadata;
    CHECK(md.total_steps == 3 * 25);
    CHECK(md.warmup_steps == 5);
    REQUIRE(!md.evals.empty());
    double best = -1;
    std::size_t best_step = 0;
    for (const auto& e : md.evals)
        if (e.accuracy > best) best = e.accuracy, best_step = e.step;
    CHECK(md.best_val_accuracy == best);
    CHECK(md.best_step == best_step);
    CHECK(md.evals.back().step == md.total_steps);
    CHECK(accuracy(m1, va) == doctest::Approx(best));

    cfg.seed = 43;
    CHECK(model_digest(train(tr, va, BackendConfig::hashed(256), cfg)) != model_digest(m1));
}

TEST_CASE("training input validation") {
    const auto tr = separable_set(10, 32, 1);
    TrainConfig cfg;
    cfg.hidden = 8;
    CHECK_THROWS_AS(train({}, tr, BackendConfig::hashed(32), cfg), StanceError);
    CHECK_THROWS_AS(train(tr, {}, BackendConfig::hashed(32), cfg), StanceError);
    std::vector<LabeledExample> one_class;
    for (const auto& e : tr)
        if (e.label == Stance::Left) one_class.push_back(e);
    try {
        train(one_class, tr, BackendConfig::hashed(32), cfg);
        FAIL("expected SingleClassTrainingSet");
    } catch (const StanceError& e) {
        CHECK(e.kind() == StanceErrorKind::SingleClassTrainingSet);
    }
}

TEST_CASE("batch prediction equals per-document prediction") {
    const auto m = init_model(BackendConfig::hashed(64), 7, 8);
    std::vector<Article> arts;
    for (int i = 0; i < 5; ++i)
        arts.push_back(testutil::make_article("a" + std::to_string(i), "s", "en", Stance::Left,
                                              "text number " + std::to_string(i) + " about taxes"));
    const auto all = predict_all(m, arts);
    REQUIRE(all.size() == 5);
    for (std::size_t i = 0; i < 5; ++i) {
        const auto one = predict(m, arts[i]);
        CHECK(all[i].article_id == one.article_id);
        CHECK(all[i].prob_left == one.prob_left);
        CHECK(all[i].stance == stance_from_prob_left(one.prob_left));
    }
    const auto tsv = render_predictions_tsv(all);
    CHECK(tsv.rfind("article_id\tstance\tprob_left\n", 0) == 0);
    const auto back = parse_predictions_tsv(tsv);
    REQUIRE(back.size() == 5);
    for (std::size_t i = 0; i < 5; ++i) {
        CHECK(back[i].article_id == all[i].article_id);
        CHECK(back[i].prob_left == all[i].prob_left);
        CHECK(back[i].stance == all[i].stance);
    }
}

TEST_CASE("model serialization") {
    auto m = init_model(BackendConfig::hashed(16, 3), 21, 4, 0.2);
    m.metadata.evals = {{10, 0.5}, {20, 0.75}};
    m.metadata.best_step = 20;
    m.metadata.best_val_accuracy = 0.75;
    const auto bytes = serialize_model(m);

    // W1 payload offset: header, metadata, eval records, P array, W1 length prefix
    const std::size_t off = 8 + 4 + 1 + 12 + 8 + 5 * 8 + 4 + 2 * 16 + 8 + 8 * m.P.size() + 8;
    double w0;
    std::memcpy(&w0, bytes.data() + off, 8);
    CHECK(w0 == m.W1[0]);

    const auto back = deserialize_model(bytes);
    CHECK(serialize_model(back) == bytes);
    CHECK(back.backend.max_ngram == 3);
    CHECK(back.metadata.evals.size() == 2);

    auto kind_of = [](std::string_view b) {
        try {
            deserialize_model(b);
        } catch (const StanceError& e) {
            return e.kind();
        }
        return StanceErrorKind::IoError;
    };
    CHECK(kind_of(std::string_view(bytes).substr(0, bytes.size() - 10)) == StanceErrorKind::CorruptFile);
    CHECK(kind_of("garbage") == StanceErrorKind::CorruptFile);
    auto flipped = bytes;
    flipped[off] ^= 1;
    CHECK(kind_of(flipped) == StanceErrorKind::CorruptFile);

    auto bumped = bytes.substr(0, bytes.size() - 64);
    bumped[8] = 2;
    bumped += sha256_hex(bumped);
    CHECK(kind_of(bumped) == StanceErrorKind::VersionMismatch);

    testutil::TempDir dir;
    save_model(m, dir.file("m.bin"));
    CHECK(model_digest(load_model(dir.file("m.bin"))) == model_digest(m));
    CHECK(model_digest(m) == sha256_hex(bytes));
}

TEST_CASE("precomputed embeddings") {
    testutil::TempDir dir;
    EmbeddingStore store(4);
    store.insert("x1", {1.0f, 0.0f, -2.0f, 0.5f});
    store.insert("x2", {0.0f, 0.0f, 0.0f, 1.0f});
    store.save(dir.file("e.bin"));
    const auto back = EmbeddingStore::load(dir.file("e.bin"), 4);
    REQUIRE(back.size() == 2);
    REQUIRE(back.find("x1") != nullptr);
    CHECK(*back.find("x1") == std::vector<float>{1.0f, 0.0f, -2.0f, 0.5f});
    CHECK(back.find("nope") == nullptr);
    CHECK_THROWS_AS(EmbeddingStore::load(dir.file("e.bin"), 3), StanceError);

    const auto a = testutil::make_article("x1", "s", "en", Stance::Left);
    const auto x = featurize(a, BackendConfig::precomputed(4), &back);
    CHECK(dense(x) == std::vector<double>{1.0, 0.0, -2.0, 0.5});
    try {
        featurize(testutil::make_article("nope", "s", "en", Stance::Left), BackendConfig::precomputed(4), &back);
        FAIL("expected MissingEmbedding");
    } catch (const StanceError& e) {
        CHECK(e.kind() == StanceErrorKind::MissingEmbedding);
    }

    // identity projection when the input width equals the head width
    const auto m = init_model(BackendConfig::precomputed(4), 1, 4);
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 4; ++j) CHECK(m.P[i * 4 + j] == (i == j ? 1.0 : 0.0));
}
