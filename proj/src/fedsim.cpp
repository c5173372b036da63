#include "gradlab/fedsim.hpp"

#include <algorithm>
#include <cstdio>
#include <ostream>
#include <stdexcept>

#include "gradlab/numerics.hpp"

namespace gradlab {

void FedConfig::validate() const {
    if (num_clients == 0) throw std::invalid_argument("FedConfig: need at least one client");
    if (!(lr > 0.0)) throw std::invalid_argument("FedConfig: learning rate must be positive");
    if (batch_size == 0) throw std::invalid_argument("FedConfig: batch size must be positive");
    if (eavesdrop_client && *eavesdrop_client >= num_clients) {
        throw std::invalid_argument("FedConfig: eavesdropped client does not exist");
    }
}

std::pair<Batch, GradientBundle> client_step(const Model& model, const Dataset& data, SamplingStrategy strategy,
                                             std::size_t batch_size, LossKind loss, SeededRng& rng) {
    Batch batch = sample_batch(data, strategy, batch_size, rng);
    auto bundle = backward(model, batch, loss).gradients;
    return {std::move(batch), std::move(bundle)};
}

Model aggregate_and_update(Model model, std::span<const GradientBundle> bundles, double lr) {
    if (bundles.empty()) throw std::invalid_argument("aggregate_and_update: no bundles");
    return sgd_step(std::move(model), mean_of(bundles), lr);
}

double evaluate(const Model& model, const Dataset& data) {
    if (data.size() == 0) throw std::invalid_argument("evaluate: empty split");
    constexpr std::size_t kChunk = 256;
    std::size_t correct = 0;
    const auto n = data.pixels();
    for (std::size_t start = 0; start < data.size(); start += kChunk) {
        const auto count = std::min(kChunk, data.size() - start);
        const auto src = data.images().values().subspan(start * n, count * n);
        const Tensor inputs({count, n}, std::vector<double>(src.begin(), src.end()));
        const Tensor logits = forward(model, inputs);
        for (std::size_t i = 0; i < count; ++i) {
            const auto row = logits.row(i);
            const auto pred = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
            if (pred == data.labels()[start + i]) ++correct;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(data.size());
}

TrainOutcome train(Model model, const Dataset& train_data, const Dataset& test_data, const FedConfig& cfg,
                   const EavesdropSink& sink) {
    cfg.validate();
    const auto rounds = std::max<std::size_t>(1, train_data.size() / (cfg.num_clients * cfg.batch_size));
    std::vector<SeededRng> clients;
    for (std::size_t k = 0; k < cfg.num_clients; ++k) clients.emplace_back(cfg.seed, stream_key("fed-client", k));
    const Dataset train_eval = train_data.head(cfg.eval_subset_size);

    TrainReport report;
    std::vector<GradientBundle> bundles(cfg.num_clients);
    std::size_t round = 0;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        double epoch_loss = 0.0;
        for (std::size_t r = 0; r < rounds; ++r, ++round) {
            double round_loss = 0.0;
            for (std::size_t k = 0; k < cfg.num_clients; ++k) {
                Batch batch = sample_batch(train_data, cfg.strategy, cfg.batch_size, clients[k]);
                auto res = backward(model, batch, cfg.loss);
                round_loss += res.mean_loss;
                if (sink && cfg.eavesdrop_client == k) {
                    sink(EavesdropRecord{round, k, round, model, res.gradients, std::move(batch)});
                }
                bundles[k] = std::move(res.gradients);
            }
            round_loss /= static_cast<double>(cfg.num_clients);
            report.loss_curve.push_back(round_loss);
            epoch_loss += round_loss;
            model = aggregate_and_update(std::move(model), bundles, cfg.lr);
        }
        EpochStats s;
        s.epoch = epoch + 1;
        s.train_accuracy = evaluate(model, train_eval);
        s.test_accuracy = evaluate(model, test_data);
        s.mean_loss = epoch_loss / static_cast<double>(rounds);
        report.epochs.push_back(s);
    }
    report.final_accuracy = report.epochs.empty() ? evaluate(model, test_data) : report.epochs.back().test_accuracy;
    return {std::move(model), std::move(report)};
}

void write_train_report(std::ostream& out, const TrainReport& report) {
    out << "epoch,train_acc,test_acc,mean_loss\n";
    char line[128];
    for (const auto& e : report.epochs) {
        std::snprintf(line, sizeof line, "%zu,%.6f,%.6f,%.9g\n", e.epoch, e.train_accuracy, e.test_accuracy,
                      e.mean_loss);
        out << line;
    }
}

}  // namespace gradlab
