#include <doctest.h>

#include <cmath>
#include <set>
#include <sstream>

#include "gradlab/direct_inversion.hpp"
#include "support.hpp"

using namespace gradlab;

namespace {

struct Problem {
    Dataset data;
    DenseModel model;
};

Problem synthetic_problem(std::size_t classes, std::uint64_t seed, std::size_t per_class = 1) {
    SeededRng rng(seed);
    auto data = make_synthetic(classes, per_class, 32, 32, rng);
    auto model = DenseModel::random(32 * 32, classes, rng);
    return {std::move(data), std::move(model)};
}

double median_error(const DenseModel& m, const Batch& batch, LossKind kind) {
    const auto g = backward(Model{m}, batch, kind).gradients;
    return inversion_error(invert_dense_batch(g), batch).median;
}

}  // namespace

TEST_CASE("single-sample worked example inverts exactly") {
    const auto gw = Tensor({2, 2}, std::vector<double>{-0.5, 0.5, -1.0, 1.0});
    const auto gb = Tensor::from({-0.5, 0.5});
    const auto est = invert_dense_batch(gw, gb);
    REQUIRE(est.classes.size() == 2);
    const auto row = *est.estimate_for(0);
    CHECK(row[0] == 1.0);
    CHECK(row[1] == 2.0);
}

TEST_CASE("classes below the divisor threshold are skipped") {
    const auto gw = Tensor({1, 3}, std::vector<double>{1.0, 2.0, 3.0});
    const auto est = invert_dense_batch(gw, Tensor::from({1e-9, 0.5, 0.0}));
    CHECK(est.classes == std::vector<std::size_t>{1});
    CHECK(est.skipped == std::vector<std::size_t>{0, 2});
    CHECK(!est.estimate_for(0).has_value());
    CHECK_THROWS_AS((void)invert_dense_batch(gw, Tensor::from({0.0, 1e-10, -1e-9})), std::domain_error);
    CHECK_THROWS((void)invert_dense_batch(gw, Tensor::from({1.0, 1.0})));
}

TEST_CASE("single-sample cross-entropy inversion is exact") {
    SeededRng rng(11);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 1 + rng.below(40), c = 2 + rng.below(20);
        const Model m = DenseModel::random(n, c, rng);
        const auto x = uniform(rng, {1, n}, 0, 1);
        const auto g = backward(m, x, support::random_targets(1, c, rng), LossKind::SoftmaxCE).gradients;
        const auto est = invert_dense_batch(g);
        for (std::size_t k = 0; k < est.classes.size(); ++k) {
            const auto row = est.estimates.row(k);
            for (std::size_t i = 0; i < n; ++i) REQUIRE(std::abs(row[i] - x[i]) < 1e-10);
        }
    }
}

TEST_CASE("unique labels de-mix at large C, equal labels do not") {
    const auto p = synthetic_problem(5749, 5, 2);
    SeededRng rng(6);
    const auto unique = sample_batch(p.data, SamplingStrategy::UniqueLabels, 2, rng);
    CHECK(median_error(p.model, unique, LossKind::SoftmaxCE) < 1e-2);
    // two distinct samples of one class
    const std::size_t c = rng.below(5749);
    const std::vector<std::size_t> rows{2 * c, 2 * c + 1};
    const auto equal = gather(p.data, rows, SamplingStrategy::EqualLabels);
    CHECK(median_error(p.model, equal, LossKind::SoftmaxCE) > 1e-1);
}

TEST_CASE("squared-error losses mix even distinct labels") {
    const auto p = synthetic_problem(5749, 7);
    SeededRng rng(8);
    std::vector<double> errors;
    for (int t = 0; t < 5; ++t) {
        const auto batch = sample_batch(p.data, SamplingStrategy::UniqueLabels, 2, rng);
        errors.push_back(median_error(p.model, batch, LossKind::MSE));
    }
    CHECK(median(errors) > 1e-1);
}

TEST_CASE("label inference on zero-weight models") {
    const Model m = DenseModel::zeros(4, 5);
    const auto x = Tensor({2, 4}, 0.5);
    {
        const auto g = backward(m, x, one_hot(std::vector<std::size_t>{0, 1}, 5), LossKind::SoftmaxCE).gradients;
        const auto& gb = g.tensors[1];
        for (std::size_t j = 0; j < 5; ++j) CHECK((gb[j] < 0.0) == (j < 2));
        const auto inf = infer_label_distribution(gb, 5, 2);
        CHECK(inf.labels == std::vector<std::size_t>{0, 1});
    }
    {
        const auto g = backward(m, x, one_hot(std::vector<std::size_t>{0, 0}, 5), LossKind::SoftmaxCE).gradients;
        CHECK(g.tensors[1][0] == doctest::Approx(0.2 - 1.0));
        const auto inf = infer_label_distribution(g.tensors[1], 5, 2);
        CHECK(inf.counts[0] == 2);
        CHECK(inf.labels == std::vector<std::size_t>{0, 0});
    }
}

TEST_CASE("label inference confidence") {
    SKIP_WITHOUT_MNIST();
    const auto& d = support::mnist_train();
    SeededRng rng(9);
    const Model m = DenseModel::random(784, 10, rng);
    const auto batch = sample_batch(d, SamplingStrategy::UniqueLabels, 8, rng);
    const auto g = backward(m, batch, LossKind::SoftmaxCE).gradients;
    const auto inf = infer_label_distribution(g.tensors[1], 10, 8);
    CHECK(inf.confidence == Confidence::Low);
    CHECK(inf.labels.size() == 8);
}

TEST_CASE("label inference recovers distinct labels when C is much larger than B") {
    const auto p = synthetic_problem(5749, 12);
    SeededRng rng(13);
    for (int t = 0; t < 10; ++t) {
        const auto batch = sample_batch(p.data, SamplingStrategy::UniqueLabels, 1 + rng.below(8), rng);
        const auto g = backward(Model{p.model}, batch, LossKind::SoftmaxCE).gradients;
        const auto inf = infer_label_distribution(g.tensors[1], 5749, batch.size());
        auto truth = batch.labels;
        std::sort(truth.begin(), truth.end());
        CHECK(inf.labels == truth);
        CHECK(inf.confidence == Confidence::High);
    }
}

TEST_CASE("noise defense") {
    SeededRng rng(14);
    const Model m = DenseModel::random(16, 4, rng);
    const auto x = uniform(rng, {1, 16}, 0, 1);
    const auto g = backward(m, x, support::random_targets(1, 4, rng), LossKind::SoftmaxCE).gradients;

    SeededRng a(1), b(1);
    CHECK(apply_noise_defense(g, 0.0, a) == g);
    CHECK(apply_noise_defense(g, 0.01, a) == apply_noise_defense(g, 0.01, b));
    CHECK(apply_noise_defense(g, 0.01, a) != g);
    CHECK_THROWS((void)apply_noise_defense(g, -1.0, a));
}

TEST_CASE("noisy inversion error is of the order of the noise") {
    const auto p = synthetic_problem(50, 15);
    SeededRng rng(16);
    std::vector<double> errors;
    for (int t = 0; t < 10; ++t) {
        const auto batch = sample_batch(p.data, SamplingStrategy::UniqueLabels, 1, rng);
        const auto g = backward(Model{p.model}, batch, LossKind::SoftmaxCE).gradients;
        const auto noisy = apply_noise_defense(g, 0.01, rng);
        errors.push_back(inversion_error(invert_dense_batch(noisy), batch).median);
    }
    const double e = median(errors);
    CHECK(e > 1e-3);
    CHECK(e < 1e-1);
}

TEST_CASE("inversion error statistics") {
    SeededRng rng(17);
    SeededRng data_rng(1);
    const auto d = make_synthetic(4, 1, 4, 4, data_rng);
    const std::vector<std::size_t> rows{0, 2};
    const auto batch = gather(d, rows);

    DirectInversionEstimate exact;
    exact.classes = {0, 2};
    exact.estimates = batch.inputs.reshaped({2, 16});
    const auto e0 = inversion_error(exact, batch);
    CHECK(e0.median == 0.0);
    CHECK(e0.histogram.counts[0] == 2);
    CHECK(e0.histogram.total() == 2);

    DirectInversionEstimate shifted = exact;
    for (auto& v : shifted.estimates.values()) v += 0.01;
    CHECK(inversion_error(shifted, batch).median == doctest::Approx(0.01).epsilon(1e-9));

    DirectInversionEstimate unrelated;
    unrelated.classes = {3};
    unrelated.estimates = Tensor({1, 16});
    CHECK_THROWS_AS((void)inversion_error(unrelated, batch), std::invalid_argument);
}

TEST_CASE("log histogram bins") {
    CHECK(LogHistogram::bin_of(0.0) == 0);
    CHECK(LogHistogram::bin_of(1e-30) == 0);
    CHECK(LogHistogram::bin_of(1e5) == LogHistogram::kBins - 1);
    CHECK(LogHistogram::bin_of(1.0) == 64);
    CHECK(LogHistogram::lower_edge(64) == 0.0);
    LogHistogram h, k;
    h.add(0.5);
    k.add(0.5);
    k.add(1e-3);
    h.merge(k);
    CHECK(h.total() == 3);
    CHECK(h.counts[LogHistogram::bin_of(0.5)] == 2);

    std::ostringstream out;
    write_histogram_header(out);
    write_histogram_rows(out, HistogramKey{"fig", "unique", "softmax_ce", 8, 10, 0.0}, h);
    const auto text = out.str();
    CHECK(text.rfind("experiment_id,strategy,loss_kind,B,C,sigma,log10_error_bin,count\n", 0) == 0);
    CHECK(std::count(text.begin(), text.end(), '\n') == 1 + static_cast<long>(LogHistogram::kBins));
}
