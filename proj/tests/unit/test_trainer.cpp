#include "doctest.h"

#include "hrf/checkpoint.hpp"
#include "hrf/dataset.hpp"
#include "hrf/errors.hpp"
#include "hrf/models.hpp"
#include "hrf/ops.hpp"
#include "hrf/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

using namespace hrf;
using namespace hrf::train;

namespace {

// Closed form of the bias-corrected moments after t steps with gradients g[0..t-1].
double adam_oracle(const std::vector<double>& g, const TrainConfig& c) {
    double theta = 0.0;
    for (std::size_t t = 1; t <= g.size(); ++t) {
        double m = 0.0, v = 0.0;
        for (std::size_t i = 1; i <= t; ++i) {
            m += (1 - c.beta1) * std::pow(c.beta1, double(t - i)) * g[i - 1];
            v += (1 - c.beta2) * std::pow(c.beta2, double(t - i)) * g[i - 1] * g[i - 1];
        }
        const double m_hat = m / (1 - std::pow(c.beta1, double(t)));
        const double v_hat = v / (1 - std::pow(c.beta2, double(t)));
        theta -= c.lr * m_hat / (std::sqrt(v_hat) + c.eps);
    }
    return theta;
}

void set_grad(Tensor& p, double g) {
    auto& buf = p.grad_buffer();
    std::fill(buf.begin(), buf.end(), g);
}

// One linear map, optionally poisoned so its output is NaN.
class Toy final : public nn::ForecastModel {
  public:
    Toy(std::size_t L, std::size_t H, bool poisoned = false)
        : ForecastModel(L, H), lin_(params_, L, H), poisoned_(poisoned) {}
    [[nodiscard]] std::string_view name() const override { return "toy"; }
    [[nodiscard]] std::string config_string() const override { return "toy"; }

  protected:
    [[nodiscard]] Tensor forward_impl(const Tensor& batch) override {
        Tensor y = lin_(batch);
        return poisoned_ ? ops::scale(y, std::numeric_limits<double>::quiet_NaN()) : y;
    }

  private:
    nn::Linear lin_;
    bool poisoned_;
};

data::WindowedDataset quasi(std::size_t length, std::size_t L, std::size_t H, std::uint64_t seed = 3) {
    const auto s = data::synth_series(seed, length, data::SynthProfile::QuasiPeriodic);
    const auto raw = data::make_windows(s, L, H);
    return normalize(raw, data::fit_minmax(s));
}

data::FoldSpec all_train(std::size_t n) {
    data::FoldSpec f;
    f.train = {{0, n}};
    f.val = {n, n};
    return f;
}

bool same_params(const Snapshot& a, const Snapshot& b) {
    if (a.tensors.size() != b.tensors.size()) return false;
    for (std::size_t i = 0; i < a.tensors.size(); ++i) {
        const auto x = a.tensors[i].data(), y = b.tensors[i].data();
        if (!std::equal(x.begin(), x.end(), y.begin(), y.end())) return false;
    }
    return true;
}

}  // namespace

TEST_CASE("config validation") {
    TrainConfig c;
    CHECK_NOTHROW(c.validate());
    auto bad = [](auto edit) {
        TrainConfig c;
        edit(c);
        CHECK_THROWS_AS(c.validate(), ConfigError);
    };
    bad([](TrainConfig& c) { c.lr = 0; });
    bad([](TrainConfig& c) { c.beta1 = 1.0; });
    bad([](TrainConfig& c) { c.beta2 = -0.1; });
    bad([](TrainConfig& c) { c.epochs = 0; });
    bad([](TrainConfig& c) { c.batch_size = 0; });
}

TEST_CASE("adam closed form") {
    TrainConfig c;
    SUBCASE("single step") {
        Tensor p = Tensor::zeros({1}, true);
        auto st = AdamState::for_params({p});
        set_grad(p, 1.0);
        adam_step({p}, st, c);
        CHECK(st.t == 1);
        CHECK(std::abs(p.item() - (-c.lr / (1 + c.eps))) < 1e-12);
        CHECK(std::abs(p.item() + 9.99999e-4) < 1e-9);
    }
    SUBCASE("two steps of constant gradient") {
        Tensor p = Tensor::zeros({1}, true);
        auto st = AdamState::for_params({p});
        for (int i = 0; i < 2; ++i) {
            set_grad(p, 1.0);
            adam_step({p}, st, c);
        }
        CHECK(std::abs(p.item() - 2 * (-c.lr / (1 + c.eps))) < 1e-12);
        CHECK(std::abs(p.item() + 2 * c.lr) < 1e-10);
    }
    SUBCASE("arbitrary gradients up to five steps") {
        std::mt19937_64 rng(11);
        std::uniform_real_distribution<double> dist(-3.0, 3.0);
        for (int trial = 0; trial < 50; ++trial) {
            std::vector<double> g(1 + trial % 5);
            for (double& x : g) x = dist(rng);
            Tensor p = Tensor::zeros({1}, true);
            auto st = AdamState::for_params({p});
            for (double x : g) {
                set_grad(p, x);
                adam_step({p}, st, c);
                for (double v : st.v[0]) CHECK(v >= 0.0);
            }
            CHECK(st.t == g.size());
            CHECK(std::abs(p.item() - adam_oracle(g, c)) < 1e-12);
        }
    }
    SUBCASE("zero gradient") {
        Tensor p = Tensor::from({3}, std::vector<double>{0.5, -1.0, 2.0}, true);
        auto st = AdamState::for_params({p});
        for (int i = 0; i < 3; ++i) {
            set_grad(p, 0.0);
            adam_step({p}, st, c);
        }
        CHECK(st.t == 3);
        CHECK(p.at(0) == 0.5);
        CHECK(p.at(1) == -1.0);
        CHECK(p.at(2) == 2.0);
    }
    SUBCASE("missing gradient counts as zero") {
        Tensor p = Tensor::full({2}, 1.5, true);
        auto st = AdamState::for_params({p});
        adam_step({p}, st, c);
        CHECK(p.at(0) == 1.5);
        CHECK(st.t == 1);
    }
    SUBCASE("non-finite gradient names the parameter and changes nothing") {
        Tensor a = Tensor::zeros({2}, true), b = Tensor::zeros({2, 2}, true);
        auto st = AdamState::for_params({a, b});
        set_grad(a, 1.0);
        set_grad(b, 1.0);
        b.grad_buffer()[3] = std::numeric_limits<double>::infinity();
        try {
            adam_step({a, b}, st, c);
            FAIL("expected divergence");
        } catch (const TrainingDivergence& e) {
            CHECK(std::string(e.what()).find("parameter 1") != std::string::npos);
        }
        CHECK(st.t == 0);
        CHECK(a.at(0) == 0.0);
    }
    SUBCASE("state mismatch") {
        Tensor a = Tensor::zeros({2}, true);
        auto st = AdamState::for_params({});
        CHECK_THROWS_AS(adam_step({a}, st, c), DimensionError);
    }
}

TEST_CASE("zero learning rate leaves a real model untouched") {
    // validate() rejects lr = 0, so drive adam_step directly over several passes.
    const auto data = quasi(300, 32, 8);
    auto model = nn::make_model("tsmixer", 32, 8);
    model->reset(1);
    const Snapshot before = take_snapshot(*model);
    TrainConfig c;
    c.lr = 0.0;
    auto st = AdamState::for_params(model->parameters());
    const auto idx = all_train(data.size()).train_indices();
    for (std::size_t epoch = 1; epoch <= 3; ++epoch) {
        const auto order = epoch_order(idx, 1, epoch);
        for (std::size_t b = 0; b < order.size(); b += 64) {
            std::vector<std::size_t> rows(order.begin() + b, order.begin() + std::min(order.size(), b + 64));
            std::vector<double> x, y;
            for (auto r : rows) {
                x.insert(x.end(), data.input(r).begin(), data.input(r).end());
                y.insert(y.end(), data.target(r).begin(), data.target(r).end());
            }
            GradGraph::current().reset();
            for (auto p : model->parameters()) p.zero_grad();
            Tensor loss = ops::mse_loss(model->forward(Tensor::from({rows.size(), 32}, x)),
                                        Tensor::from({rows.size(), 8}, y));
            backward(loss);
            adam_step(model->parameters(), st, c);
        }
    }
    CHECK(st.t > 0);
    CHECK(same_params(before, take_snapshot(*model)));
}

TEST_CASE("epoch order is a seeded permutation") {
    std::vector<std::size_t> idx(97);
    std::iota(idx.begin(), idx.end(), 5);
    const auto a = epoch_order(idx, 9, 1);
    auto sorted = a;
    std::sort(sorted.begin(), sorted.end());
    CHECK(sorted == idx);
    CHECK(a == epoch_order(idx, 9, 1));
    CHECK(a != epoch_order(idx, 9, 2));
    CHECK(a != epoch_order(idx, 10, 1));
    CHECK(epoch_order({}, 1, 1).empty());
}

TEST_CASE("train_fold") {
    SUBCASE("one epoch on a constant series beats initialization") {
        const std::vector<double> flat(200, 0.5);
        const auto data = data::make_windows(flat, 16, 4);
        const auto fold = all_train(data.size());
        TrainConfig c;
        c.epochs = 1;
        c.seed = 4;
        Toy model(16, 4);
        model.reset(c.seed);
        const double before = evaluate_loss(model, data, fold.train_indices());
        train_fold(model, fold, data, c);
        CHECK(evaluate_loss(model, data, fold.train_indices()) < before);
    }
    SUBCASE("bit-identical for the same seed, different for another") {
        const auto data = quasi(260, 32, 8);
        const auto folds = data::make_folds(data.size(), 5, data.span());
        TrainConfig c;
        c.epochs = 3;
        c.seed = 21;
        auto m1 = nn::make_model("lstm", 32, 8);
        auto m2 = nn::make_model("lstm", 32, 8);
        TrainLog l1, l2;
        const auto r1 = train_fold(*m1, folds[2], data, c, &l1);
        const auto r2 = train_fold(*m2, folds[2], data, c, &l2);
        CHECK(same_params(r1.snapshot, r2.snapshot));
        CHECK(r1.val_loss == r2.val_loss);
        REQUIRE(l1.records.size() == 3);
        for (std::size_t i = 0; i < 3; ++i) CHECK(l1.records[i].train_loss == l2.records[i].train_loss);
        CHECK(!l1.records[0].val_loss);
        CHECK(l1.records[2].val_loss.has_value());
        c.seed = 22;
        const auto r3 = train_fold(*m1, folds[2], data, c);
        CHECK_FALSE(same_params(r1.snapshot, r3.snapshot));
    }
    SUBCASE("loss falls over 50 epochs for every model") {
        const auto data = quasi(240, 32, 8, 5);
        const auto fold = all_train(data.size());
        TrainConfig c;
        c.epochs = 50;
        c.seed = 2;
        for (const auto& name : nn::neural_model_names()) {
            auto m = nn::make_model(name, 32, 8);
            TrainLog log;
            train_fold(*m, fold, data, c, &log);
            REQUIRE(log.records.size() == 50);
            INFO(name << ": " << log.records.front().train_loss << " -> " << log.records.back().train_loss);
            CHECK(log.records.back().train_loss <= log.records.front().train_loss);
            for (const auto& r : log.records) CHECK(std::isfinite(r.train_loss));
        }
    }
    SUBCASE("diverging model reports the last good snapshot") {
        const auto data = quasi(200, 16, 4);
        Toy model(16, 4, true);
        TrainConfig c;
        c.epochs = 2;
        try {
            (void)train_fold(model, all_train(data.size()), data, c);
            FAIL("expected divergence");
        } catch (const DivergenceError& e) {
            CHECK(e.last_good().tensors.size() == model.parameters().size());
        }
    }
    SUBCASE("shape mismatch") {
        const auto data = quasi(200, 16, 4);
        Toy model(8, 4);
        CHECK_THROWS_AS((void)train_fold(model, all_train(data.size()), data, TrainConfig{}), DimensionError);
    }
}

TEST_CASE("log csv") {
    TrainLog log;
    log.records.push_back({1, 0, 0.5, std::nullopt, 0.25});
    log.records.push_back({2, 0, 0.25, 0.125, 0.5});
    std::ostringstream os;
    log.write_csv(os);
    CHECK(os.str() == "epoch,fold,train_loss,val_loss,seconds\n1,0,0.5,,0.25\n2,0,0.25,0.125,0.5\n");
}

TEST_CASE("cross_validate") {
    const auto s = data::synth_series(8, 400, data::SynthProfile::QuasiPeriodic);
    const auto raw = data::make_windows(s, 16, 4);
    TrainConfig c;
    c.epochs = 2;
    c.seed = 100;

    SUBCASE("cardinality, mean and leakage") {
        TrainLog log;
        const auto cv = cross_validate([] { return std::make_unique<Toy>(16, 4); }, raw, c, &log);
        REQUIRE(cv.results.size() == 5);
        CHECK(cv.folds.size() == 5);
        CHECK(cv.norms.size() == 5);
        CHECK(log.records.size() == 10);
        CHECK(log.seed == 100);
        CHECK(log.config_digest != 0);
        double sum = 0.0;
        for (const auto& r : cv.results) sum += r.val_loss;
        CHECK(std::abs(cv.mean_val_loss() - sum / 5.0) < 1e-12);
        for (const auto& f : cv.folds) {
            for (const auto& span : f.train_time_spans()) CHECK_FALSE(span.intersects(f.val_time_span()));
            for (std::size_t i : f.train_indices()) CHECK_FALSE(f.val.contains(i));
        }
        // Fold k trains with seed + k: rerunning fold 3 alone reproduces it.
        Toy solo(16, 4);
        TrainConfig c3 = c;
        c3.seed = c.seed + 3;
        const auto r3 = train_fold(solo, cv.folds[3], normalize(raw, cv.norms[3]), c3);
        CHECK(same_params(r3.snapshot, cv.results[3].snapshot));
    }
    SUBCASE("per-fold normalization spans the fold's training windows") {
        const auto cv = cross_validate([] { return std::make_unique<Toy>(16, 4); }, raw, c);
        for (std::size_t k = 0; k < 5; ++k) {
            const auto nd = normalize(raw, cv.norms[k]);
            double lo = 1e9, hi = -1e9;
            for (std::size_t i : cv.folds[k].train_indices()) {
                for (double v : nd.input(i)) lo = std::min(lo, v), hi = std::max(hi, v);
                for (double v : nd.target(i)) lo = std::min(lo, v), hi = std::max(hi, v);
            }
            CHECK(std::abs(lo) < 1e-12);
            CHECK(std::abs(hi - 1.0) < 1e-12);
        }
    }
    SUBCASE("global normalization uses one map") {
        const auto cv = cross_validate([] { return std::make_unique<Toy>(16, 4); }, raw, c, nullptr,
                                       Normalization::Global);
        for (const auto& n : cv.norms) {
            CHECK(n.min == cv.norms[0].min);
            CHECK(n.max == cv.norms[0].max);
        }
    }
    SUBCASE("one diverging fold keeps the others") {
        int made = 0;
        try {
            (void)cross_validate([&] { return std::make_unique<Toy>(16, 4, made++ == 2); }, raw, c);
            FAIL("expected failure");
        } catch (const CrossValidationError& e) {
            CHECK(e.fold() == 2);
            CHECK(std::string(e.what()).find("fold 2") != std::string::npos);
            REQUIRE(e.partial().results.size() == 4);
            CHECK(e.partial().results[2].fold_index == 3);
        }
        CHECK(made == 5);
    }
}

TEST_CASE("checkpoint round trip") {
    auto m = nn::make_model("patchtst", 32, 8);
    m->reset(5);
    std::stringstream buf;
    nn::write_checkpoint(buf, *m);

    auto other = nn::make_model("patchtst", 32, 8);
    other->reset(6);
    nn::read_checkpoint(buf, *other);
    CHECK(same_params(take_snapshot(*m), take_snapshot(*other)));

    SUBCASE("different architecture is rejected") {
        std::stringstream b2(buf.str());
        auto lstm = nn::make_model("lstm", 32, 8);
        CHECK_THROWS_AS(nn::read_checkpoint(b2, *lstm), InputError);
        std::stringstream b3(buf.str());
        auto wider = nn::make_model("patchtst", 32, 4);
        CHECK_THROWS_AS(nn::read_checkpoint(b3, *wider), InputError);
    }
    SUBCASE("truncated and corrupt files are rejected") {
        const std::string full = buf.str();
        std::stringstream cut(full.substr(0, full.size() - 9));
        CHECK_THROWS_AS(nn::read_checkpoint(cut, *other), InputError);
        std::string bad = full;
        bad[0] = 'X';
        std::stringstream b(bad);
        CHECK_THROWS_AS(nn::read_checkpoint(b, *other), InputError);
    }
}
