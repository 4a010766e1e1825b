#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>
#include <limits>
#include <random>

#include "oftta/autograd.hpp"
#include "oftta/network.hpp"
#include "oftta/trainer.hpp"

using namespace oftta;

namespace {

// Visit every trainable parameter span together with its gradient span, in
// the optimizer's traversal order.
template <typename T, typename Fn>
void visit_params(ModelT<T>& model, ModelT<T>& grads, Fn&& fn) {
    for (std::size_t i = 0; i < model.blocks.size(); ++i) {
        auto& b = model.blocks[i];
        auto& g = grads.blocks[i];
        fn(b.conv.weights.data.data(), g.conv.weights.data.data(),
           b.conv.weights.data.size());
        fn(b.conv.bias.data(), g.conv.bias.data(), b.conv.bias.size());
        fn(b.bn.gamma.data(), g.bn.gamma.data(), b.bn.gamma.size());
        fn(b.bn.beta.data(), g.bn.beta.data(), b.bn.beta.size());
    }
    fn(model.head.weight.data.data(), grads.head.weight.data.data(),
       model.head.weight.data.size());
    fn(model.head.bias.data(), grads.head.bias.data(), model.head.bias.size());
}

ArchSpec tiny_arch() {
    ArchSpec arch;
    arch.in_h = 12;
    arch.in_w = 2;
    arch.kernel_h = 3;
    arch.kernel_w = 1;
    arch.channels = {2, 3};
    arch.classes = 3;
    return arch;
}

std::vector<const DomainDataset*> ptrs(const std::vector<DomainDataset>& v,
                                       std::size_t n) {
    std::vector<const DomainDataset*> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(&v[i]);
    return out;
}

bool weights_equal(const NetworkModel& a, const NetworkModel& b) {
    for (std::size_t i = 0; i < a.blocks.size(); ++i) {
        if (a.blocks[i].conv.weights.data != b.blocks[i].conv.weights.data)
            return false;
        if (a.blocks[i].conv.bias != b.blocks[i].conv.bias) return false;
        if (a.blocks[i].bn.gamma != b.blocks[i].bn.gamma) return false;
        if (a.blocks[i].bn.beta != b.blocks[i].bn.beta) return false;
    }
    return a.head.weight.data == b.head.weight.data &&
           a.head.bias == b.head.bias;
}

} // namespace

TEST_CASE("lr_at stepwise decay") {
    TrainConfig cfg;
    CHECK(lr_at(0, cfg) == doctest::Approx(1e-4));
    CHECK(lr_at(19, cfg) == doctest::Approx(1e-4));
    CHECK(lr_at(20, cfg) == doctest::Approx(5e-5));
    CHECK(lr_at(40, cfg) == doctest::Approx(2.5e-5));
    CHECK(lr_at(99, cfg) == doctest::Approx(6.25e-6));
}

TEST_CASE("build_model initialization contract") {
    ArchSpec arch = tiny_arch();
    auto model = build_model<float>(arch, 7);
    REQUIRE(model.blocks.size() == 2);
    for (std::size_t i = 0; i < model.blocks.size(); ++i) {
        const auto& blk = model.blocks[i];
        const int fan_in = blk.conv.weights.c * arch.kernel_h * arch.kernel_w;
        const int fan_out = blk.conv.weights.b * arch.kernel_h * arch.kernel_w;
        const float limit = std::sqrt(6.0f / (fan_in + fan_out));
        for (float w : blk.conv.weights.data) {
            CHECK(w >= -limit);
            CHECK(w <= limit);
        }
        for (float b : blk.conv.bias) CHECK(b == 0.0f);
        for (float g : blk.bn.gamma) CHECK(g == 1.0f);
        for (float b : blk.bn.beta) CHECK(b == 0.0f);
        for (float m : blk.bn.running_mean) CHECK(m == 0.0f);
        for (float v : blk.bn.running_var) CHECK(v == 1.0f);
    }
    for (float b : model.head.bias) CHECK(b == 0.0f);

    ArchSpec bad = arch;
    bad.in_h = 3; // collapses before the second pool
    CHECK_THROWS_AS(build_model<float>(bad, 1), std::invalid_argument);
}

TEST_CASE("make_batch assembles windows in index order") {
    DomainDataset dom;
    dom.height = 2;
    dom.width = 2;
    dom.class_count = 2;
    dom.windows = {{1, 2, 3, 4}, {5, 6, 7, 8}, {9, 10, 11, 12}};
    dom.labels = {0, 1, 0};
    Tensor4 batch = make_batch(dom, {2, 0});
    REQUIRE(batch.b == 2);
    CHECK(batch.at(0, 0, 0, 0) == 9.0f);
    CHECK(batch.at(0, 0, 1, 1) == 12.0f);
    CHECK(batch.at(1, 0, 0, 0) == 1.0f);
}

TEST_CASE("softmax-CE gradient is (softmax - onehot)/B and zero at the one-hot fixed point") {
    MatrixT<double> logits(2, 3);
    logits.at(0, 0) = 0.3;
    logits.at(0, 1) = -1.2;
    logits.at(0, 2) = 0.9;
    logits.at(1, 0) = 2.0;
    logits.at(1, 1) = 0.0;
    logits.at(1, 2) = -0.5;
    std::vector<int> labels = {2, 0};
    MatrixT<double> dl;
    const double loss = softmax_ce_loss(logits, labels, dl);
    double expect_loss = 0.0;
    for (int r = 0; r < 2; ++r) {
        double z = 0.0;
        for (int j = 0; j < 3; ++j) z += std::exp(logits.at(r, j));
        expect_loss -= std::log(std::exp(logits.at(r, labels[r])) / z);
        for (int j = 0; j < 3; ++j) {
            const double p = std::exp(logits.at(r, j)) / z;
            CHECK(dl.at(r, j) ==
                  doctest::Approx((p - (j == labels[r] ? 1.0 : 0.0)) / 2)
                      .epsilon(1e-12));
        }
    }
    CHECK(loss == doctest::Approx(expect_loss / 2).epsilon(1e-12));

    // Saturated logits: softmax equals the one-hot target, gradient vanishes.
    MatrixT<double> hot(1, 3);
    hot.at(0, 0) = 1000.0;
    hot.at(0, 1) = -1000.0;
    hot.at(0, 2) = -1000.0;
    MatrixT<double> dhot;
    softmax_ce_loss(hot, {0}, dhot);
    for (double g : dhot.data) CHECK(std::abs(g) < 1e-12);

    CHECK_THROWS_AS(softmax_ce_loss(logits, {0}, dl), std::invalid_argument);
}

TEST_CASE("analytic gradients match central finite differences (64-bit)") {
    ArchSpec arch = tiny_arch();
    ModelT<double> model = build_model<double>(arch, 3);
    // Shift BN outputs away from the ReLU kink so the 1e-3 probe stays on one
    // side of every piecewise-linear boundary.
    for (auto& blk : model.blocks)
        for (auto& b : blk.bn.beta) b = 0.35;

    std::mt19937_64 rng(17);
    std::normal_distribution<double> noise(0.0, 1.0);
    Tensor4T<double> batch(4, 1, arch.in_h, arch.in_w);
    for (auto& v : batch.data) v = noise(rng);
    const std::vector<int> labels = {0, 2, 1, 1};

    auto loss_of = [&](ModelT<double>& m) {
        TrainCache<double> cache;
        auto fwd = train_forward(m, batch, cache, false);
        MatrixT<double> dl;
        return softmax_ce_loss(fwd.logits, labels, dl);
    };

    TrainCache<double> cache;
    auto fwd = train_forward(model, batch, cache, false);
    MatrixT<double> dlogits;
    softmax_ce_loss(fwd.logits, labels, dlogits);
    ModelT<double> grads = backward_pass(model, cache, dlogits);

    const double h = 1e-3;
    double num = 0.0, den = 0.0; // vector-norm relative error
    double worst = 0.0;
    visit_params(model, grads, [&](double* p, double* g, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) {
            const double saved = p[i];
            p[i] = saved + h;
            const double up = loss_of(model);
            p[i] = saved - h;
            const double down = loss_of(model);
            p[i] = saved;
            const double fd = (up - down) / (2 * h);
            num += (g[i] - fd) * (g[i] - fd);
            den += fd * fd;
            const double rel =
                std::abs(g[i] - fd) / std::max({std::abs(g[i]), std::abs(fd), 1e-2});
            worst = std::max(worst, rel);
        }
    });
    CHECK(std::sqrt(num) / std::max(std::sqrt(den), 1e-12) <= 1e-4);
    CHECK(worst <= 1e-4);
}

TEST_CASE("doubling the batch by duplication leaves gradients unchanged") {
    ArchSpec arch = tiny_arch();
    ModelT<double> model = build_model<double>(arch, 5);
    std::mt19937_64 rng(23);
    std::normal_distribution<double> noise(0.0, 1.0);
    Tensor4T<double> batch(3, 1, arch.in_h, arch.in_w);
    for (auto& v : batch.data) v = noise(rng);
    const std::vector<int> labels = {1, 0, 2};

    Tensor4T<double> doubled(6, 1, arch.in_h, arch.in_w);
    std::copy(batch.data.begin(), batch.data.end(), doubled.data.begin());
    std::copy(batch.data.begin(), batch.data.end(),
              doubled.data.begin() + batch.data.size());
    std::vector<int> labels2 = {1, 0, 2, 1, 0, 2};

    auto grad_of = [&](const Tensor4T<double>& x, const std::vector<int>& y) {
        TrainCache<double> cache;
        auto fwd = train_forward(model, x, cache, false);
        MatrixT<double> dl;
        softmax_ce_loss(fwd.logits, y, dl);
        return backward_pass(model, cache, dl);
    };
    ModelT<double> g1 = grad_of(batch, labels);
    ModelT<double> g2 = grad_of(doubled, labels2);
    visit_params(g1, g2, [](double* a, double* b, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i)
            CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-10).scale(1.0));
    });
}

TEST_CASE("zero learning rate leaves every trainable parameter unchanged") {
    SyntheticSpec spec;
    spec.classes = 2;
    spec.axes = 2;
    spec.window_len = 16;
    spec.subjects = 2;
    spec.samples_per_class = 6;
    auto domains = generate_synthetic(spec);
    ArchSpec arch;
    arch.in_h = 16;
    arch.in_w = 2;
    arch.kernel_h = 3;
    arch.kernel_w = 1;
    arch.channels = {3, 4};
    arch.classes = 2;
    TrainConfig cfg;
    cfg.learning_rate = 0.0;
    cfg.epochs = 3;
    cfg.batch_size = 8;
    const Checkpoint ck = train_erm(ptrs(domains, 2), arch, cfg);
    const NetworkModel fresh = build_model<float>(arch, cfg.seed);
    CHECK(weights_equal(ck.model, fresh));
}

TEST_CASE("fixed seed gives bit-identical checkpoints") {
    SyntheticSpec spec;
    spec.classes = 2;
    spec.axes = 2;
    spec.window_len = 16;
    spec.subjects = 2;
    spec.samples_per_class = 6;
    auto domains = generate_synthetic(spec);
    ArchSpec arch;
    arch.in_h = 16;
    arch.in_w = 2;
    arch.kernel_h = 3;
    arch.kernel_w = 1;
    arch.channels = {3, 4};
    arch.classes = 2;
    TrainConfig cfg;
    cfg.learning_rate = 1e-3;
    cfg.epochs = 4;
    cfg.batch_size = 8;
    const Checkpoint a = train_erm(ptrs(domains, 2), arch, cfg);
    const Checkpoint b = train_erm(ptrs(domains, 2), arch, cfg);
    CHECK(weights_equal(a.model, b.model));
    CHECK(a.validation_loss == b.validation_loss);
    CHECK(a.epoch == b.epoch);
    for (std::size_t i = 0; i < a.model.blocks.size(); ++i) {
        CHECK(a.model.blocks[i].bn.running_mean ==
              b.model.blocks[i].bn.running_mean);
        CHECK(a.model.blocks[i].bn.running_var ==
              b.model.blocks[i].bn.running_var);
    }
}

TEST_CASE("separable toy problem trains to >= 99% accuracy, loss decreases") {
    SyntheticSpec spec;
    spec.classes = 2;
    spec.axes = 2;
    spec.window_len = 32;
    spec.subjects = 2;
    spec.samples_per_class = 20;
    spec.gain_log_sigma = 0.0;
    spec.offset_sigma = 0.0;
    auto domains = generate_synthetic(spec);
    ArchSpec arch;
    arch.in_h = 32;
    arch.in_w = 2;
    arch.kernel_h = 5;
    arch.kernel_w = 1;
    arch.channels = {4, 8};
    arch.classes = 2;
    for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
        TrainConfig cfg;
        cfg.learning_rate = 1e-3;
        cfg.epochs = 40;
        cfg.batch_size = 16;
        cfg.seed = seed;

        // Initial training loss at the untouched initialization.
        NetworkModel init = build_model<float>(arch, seed);
        std::vector<int> all(domains[0].size() + domains[1].size());
        DomainDataset pool = domains[0];
        pool.windows.insert(pool.windows.end(), domains[1].windows.begin(),
                            domains[1].windows.end());
        pool.labels.insert(pool.labels.end(), domains[1].labels.begin(),
                           domains[1].labels.end());
        for (std::size_t i = 0; i < all.size(); ++i) all[i] = (int)i;
        const Tensor4 full = make_batch(pool, all);
        auto fwd0 = network_forward(init, full, NormStrategy::tbn());
        Matrix unused;
        const double loss0 = softmax_ce_loss(fwd0.logits, pool.labels, unused);

        const Checkpoint ck = train_erm(ptrs(domains, 2), arch, cfg);
        auto fwd1 = network_forward(ck.model, full, NormStrategy::cbn());
        const double loss1 = softmax_ce_loss(fwd1.logits, pool.labels, unused);
        CHECK(loss1 < loss0);

        int correct = 0;
        for (std::size_t i = 0; i < pool.labels.size(); ++i) {
            int best = 0;
            for (int j = 1; j < 2; ++j)
                if (fwd1.logits.at((int)i, j) > fwd1.logits.at((int)i, best))
                    best = j;
            if (best == pool.labels[i]) ++correct;
        }
        CHECK(correct >= static_cast<int>(0.99 * pool.labels.size()));
    }
}

TEST_CASE("training aborts with a diagnostic when the loss is non-finite") {
    SyntheticSpec spec;
    spec.classes = 2;
    spec.axes = 2;
    spec.window_len = 16;
    spec.subjects = 2;
    spec.samples_per_class = 4;
    auto domains = generate_synthetic(spec);
    ArchSpec arch;
    arch.in_h = 16;
    arch.in_w = 2;
    arch.kernel_h = 3;
    arch.kernel_w = 1;
    arch.channels = {3};
    arch.classes = 2;
    TrainConfig cfg;
    cfg.epochs = 4;
    cfg.batch_size = 16;
    cfg.learning_rate = 1e30; // blows up the weights so the loss overflows
    CHECK_THROWS_AS(train_erm(ptrs(domains, 2), arch, cfg), std::runtime_error);
}

TEST_CASE("running statistics converge to the momentum fixed point") {
    ArchSpec arch = tiny_arch();
    ModelT<double> model = build_model<double>(arch, 9);
    std::mt19937_64 rng(31);
    std::normal_distribution<double> noise(1.5, 0.8); // N(mu, sigma^2) inputs

    // Long-run average of first-layer conv-output batch statistics.
    std::vector<double> target_mean(model.blocks[0].conv.weights.b, 0.0);
    std::vector<double> target_var(model.blocks[0].conv.weights.b, 0.0);
    const int probes = 50;
    for (int rep = 0; rep < probes; ++rep) {
        Tensor4T<double> batch(16, 1, arch.in_h, arch.in_w);
        for (auto& v : batch.data) v = noise(rng);
        auto z = conv_forward(batch, model.blocks[0].conv);
        auto [m, v] = batch_stats(z);
        for (std::size_t c = 0; c < m.size(); ++c) {
            target_mean[c] += m[c] / probes;
            target_var[c] += v[c] / probes;
        }
    }

    for (int step = 0; step < 300; ++step) {
        Tensor4T<double> batch(16, 1, arch.in_h, arch.in_w);
        for (auto& v : batch.data) v = noise(rng);
        TrainCache<double> cache;
        train_forward(model, batch, cache, true);
    }
    for (std::size_t c = 0; c < target_mean.size(); ++c) {
        CHECK(model.blocks[0].bn.running_mean[c] ==
              doctest::Approx(target_mean[c]).epsilon(0.10).scale(0.05));
        CHECK(model.blocks[0].bn.running_var[c] ==
              doctest::Approx(target_var[c]).epsilon(0.10));
    }
}
