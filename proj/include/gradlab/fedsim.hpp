#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "gradlab/datasets.hpp"
#include "gradlab/models.hpp"
#include "gradlab/rng.hpp"

namespace gradlab {

struct FedConfig {
    std::size_t num_clients = 4;
    double lr = 0.1;
    std::size_t batch_size = 6;
    SamplingStrategy strategy = SamplingStrategy::RandomLabels;
    LossKind loss = LossKind::SoftmaxCE;
    std::size_t epochs = 5;
    std::size_t eval_subset_size = 0;  ///< train-accuracy subset, 0 = whole split
    std::uint64_t seed = 0;
    std::optional<std::size_t> eavesdrop_client;  ///< client whose bundles are captured

    void validate() const;
};

struct EpochStats {
    std::size_t epoch = 0;
    double train_accuracy = 0.0;
    double test_accuracy = 0.0;
    double mean_loss = 0.0;
};

struct TrainReport {
    std::vector<EpochStats> epochs;
    double final_accuracy = 0.0;
    std::vector<double> loss_curve;  ///< mean client loss per round
};

struct EavesdropRecord {
    std::size_t round = 0;
    std::size_t client = 0;
    std::size_t snapshot_id = 0;  ///< equals the round: the model before that round's update
    Model snapshot;
    GradientBundle bundle;
    Batch batch;  ///< ground truth, kept for scoring replayed attacks
};

using EavesdropSink = std::function<void(const EavesdropRecord&)>;

/// Draws a batch and returns it with the batch-mean gradient at `model`.
[[nodiscard]] std::pair<Batch, GradientBundle> client_step(const Model& model, const Dataset& data,
                                                           SamplingStrategy strategy, std::size_t batch_size,
                                                           LossKind loss, SeededRng& rng);

/// model - lr * mean(bundles).
[[nodiscard]] Model aggregate_and_update(Model model, std::span<const GradientBundle> bundles, double lr);

/// Fraction of samples whose argmax logit equals the label; ties go to the
/// lowest class index.
[[nodiscard]] double evaluate(const Model& model, const Dataset& data);

struct TrainOutcome {
    Model model;
    TrainReport report;
};

/// Synchronous federated training. An epoch is N / (K B) rounds. Each
/// client owns an independent stream derived from the seed and samples
/// from the whole training split.
[[nodiscard]] TrainOutcome train(Model model, const Dataset& train_data, const Dataset& test_data,
                                 const FedConfig& config, const EavesdropSink& sink = {});

void write_train_report(std::ostream& out, const TrainReport& report);

}  // namespace gradlab
