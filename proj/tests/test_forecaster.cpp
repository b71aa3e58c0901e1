#include "clusterfx/error.hpp"
#include "clusterfx/forecaster.hpp"
#include "clusterfx/rng.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <numeric>
#include <sstream>

using namespace clusterfx;

namespace {

ModelConfig small_config(std::size_t h, std::size_t len, std::size_t f, std::uint64_t seed = 1) {
    ModelConfig c;
    c.hidden_size = h;
    c.input_len_bars = len;
    c.n_features = f;
    c.seed = seed;
    return c;
}

SampleSet random_samples(std::uint64_t seed, std::size_t n, std::size_t len, std::size_t f) {
    Rng rng(seed);
    SampleSet s;
    s.input_len = len;
    for (std::size_t j = 0; j < f; ++j) s.feature_names.push_back("f" + std::to_string(j));
    for (std::size_t i = 0; i < n; ++i) {
        Sample x;
        for (std::size_t k = 0; k < len * f; ++k) x.window.push_back(rng.uniform());
        x.target = rng.uniform();
        x.bar_index = i;
        s.samples.push_back(x);
    }
    return s;
}

} // namespace

TEST_CASE("parameter count") {
    CHECK(AttentionForecaster::parameter_count(small_config(8, 9, 6)) == 3105);
    for (std::size_t h : {1u, 2u, 5u}) {
        for (std::size_t f : {1u, 3u}) {
            const std::size_t expect = 2 * (4 * h * f + 4 * h * h + 4 * h) + 2 * (8 * h * 2 * h) + 8 * h + 4 * h + 1;
            CHECK(AttentionForecaster::parameter_count(small_config(h, 4, f)) == expect);
        }
    }
    const auto m = init_model(small_config(3, 4, 2));
    std::size_t covered = 0;
    for (const auto& b : m.blocks()) {
        CHECK(b.offset == covered);
        covered += b.size();
    }
    CHECK(covered == m.parameter_count());
}

TEST_CASE("initialisation is seeded and bounded by fan-in") {
    const auto a = init_model(small_config(4, 5, 3, 9));
    CHECK(a == init_model(small_config(4, 5, 3, 9)));
    CHECK_FALSE(a == init_model(small_config(4, 5, 3, 10)));
    for (const auto& b : a.blocks()) {
        const double fan = b.name.rfind("fwd", 0) == 0 || b.name.rfind("bwd", 0) == 0 ? 3.0 + 4.0 : 16.0;
        for (std::size_t i = 0; i < b.size(); ++i) CHECK(std::abs(a.params()[b.offset + i]) <= 1.0 / std::sqrt(fan));
    }
    CHECK(AttentionForecaster::from_json(a.to_json()) == a);
}

TEST_CASE("forward pass matches a scalar replay") {
    for (bool scaled : {false, true}) {
        auto cfg = small_config(2, 3, 2, 4);
        cfg.scaled_attention = scaled;
        const auto m = init_model(cfg);
        const std::vector<double> w{0.1, 0.9, 0.4, 0.3, 0.7, 0.2};
        const auto tr = forward(m, w);
        const auto ref = oracle::forecaster_forward(m, w);
        CHECK(tr.prediction == doctest::Approx(ref.prediction).epsilon(1e-12));
        REQUIRE(tr.attention.size() == 3);
        for (std::size_t t = 0; t < 3; ++t) CHECK(tr.attention[t] == doctest::Approx(ref.attention[t]).epsilon(1e-12));
    }
    const auto big = init_model(small_config(5, 9, 4, 2));
    const auto w = random_samples(3, 1, 9, 4).samples[0].window;
    CHECK(forward(big, w).prediction == doctest::Approx(oracle::forecaster_forward(big, w).prediction).epsilon(1e-12));
}

TEST_CASE("attention is a probability vector") {
    const auto m = init_model(small_config(4, 6, 3));
    const auto set = random_samples(8, 50, 6, 3);
    for (const auto& s : set.samples) {
        const auto tr = forward(m, s.window);
        double sum = 0.0;
        for (double a : tr.attention) {
            CHECK(a >= 0.0);
            sum += a;
        }
        CHECK(std::abs(sum - 1.0) <= 1e-9);
    }
    CHECK_THROWS_AS(forward(m, std::vector<double>(5, 0.0)), Error);
}

TEST_CASE("loss and error metrics") {
    const auto e = error_metrics(std::vector<double>{0, 0}, std::vector<double>{1, 3});
    CHECK(e.mse == 5.0);
    CHECK(e.rmse == doctest::Approx(std::sqrt(5.0)));
    CHECK(e.mae == 2.0);
    CHECK(loss_mse(std::vector<double>{2}, std::vector<double>{5}) == 9.0);
}

TEST_CASE("analytic gradient agrees with central differences") {
    auto m = init_model(small_config(3, 4, 2, 5));
    const auto batch = random_samples(6, 3, 4, 2);
    std::vector<double> g;
    backward(m, batch, g);
    const double eps = 1e-5;
    auto p = m.params();
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double keep = p[i];
        p[i] = keep + eps;
        const double up = evaluate_mse(m, batch);
        p[i] = keep - eps;
        const double dn = evaluate_mse(m, batch);
        p[i] = keep;
        const double fd = (up - dn) / (2 * eps);
        num += (fd - g[i]) * (fd - g[i]);
        den += fd * fd + g[i] * g[i];
    }
    CHECK(std::sqrt(num) / std::sqrt(den) < 1e-6);
}

TEST_CASE("head bias gradient is twice the mean residual") {
    const auto m = init_model(small_config(3, 4, 2, 7));
    const auto batch = random_samples(9, 5, 4, 2);
    std::vector<double> g;
    backward(m, batch, g);
    const auto preds = predict_all(m, batch);
    double mean = 0.0;
    for (std::size_t i = 0; i < preds.size(); ++i) mean += preds[i] - batch.samples[i].target;
    mean /= static_cast<double>(preds.size());
    CHECK(g[m.block("head.b").offset] == doctest::Approx(2.0 * mean).epsilon(1e-12));
}

TEST_CASE("training behaviour") {
    auto cfg = small_config(3, 4, 2, 11);
    cfg.epochs = 5;
    cfg.batch_size = 4;
    const auto data = random_samples(12, 30, 4, 2);
    const auto [tr, va] = data.split_tail(0.2);

    SUBCASE("zero learning rate leaves parameters alone") {
        cfg.learning_rate = 0.0;
        const auto init = init_model(cfg);
        const auto r = train(init, tr, va, cfg);
        CHECK(r.model == init);
        CHECK(r.history.size() == 5);
    }
    SUBCASE("same seed, same history") {
        const auto a = train(init_model(cfg), tr, va, cfg);
        const auto b = train(init_model(cfg), tr, va, cfg);
        CHECK(a.history == b.history);
        CHECK(a.model == b.model);
    }
    SUBCASE("best validation epoch is kept") {
        const auto r = train(init_model(cfg), tr, va, cfg);
        double best = 1e300;
        for (const auto& h : r.history) best = std::min(best, h.val_mse);
        CHECK(evaluate_mse(r.model, va) == doctest::Approx(best).epsilon(1e-12));
    }
    SUBCASE("empty sets are rejected") {
        SampleSet empty;
        empty.input_len = 4;
        empty.feature_names = tr.feature_names;
        CHECK_THROWS_AS(train(init_model(cfg), empty, va, cfg), Error);
    }
}

TEST_CASE("constant target is learned") {
    auto cfg = small_config(3, 4, 2, 13);
    cfg.epochs = 60;
    cfg.batch_size = 8;
    auto data = random_samples(14, 40, 4, 2);
    for (auto& s : data.samples) s.target = 0.6;
    const auto [tr, va] = data.split_tail(0.25);
    const auto r = train(init_model(cfg), tr, va, cfg);
    CHECK(r.history.back().val_mse < 1e-4);
}

TEST_CASE("training history CSV") {
    std::ostringstream out;
    write_history_csv(out, {{1, 0.5, 0.25}});
    CHECK(out.str() == "epoch,train_mse,val_mse\n1,0.5,0.25\n");
}
