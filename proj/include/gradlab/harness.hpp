#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "gradlab/attacks.hpp"
#include "gradlab/datasets.hpp"
#include "gradlab/direct_inversion.hpp"
#include "gradlab/fedsim.hpp"
#include "gradlab/metrics.hpp"
#include "gradlab/models.hpp"

namespace gradlab {

/// Malformed or inconsistent experiment manifest.
class ConfigError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// The dataset directory is missing or incomplete.
class DataUnavailable : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

enum class ExperimentKind {
    AttackGrid,  ///< optimisation attacks over a loss x strategy x B x channels x attack grid
    DirectGrid,  ///< closed-form dense inversion, error histograms
    Train,       ///< federated training per variant, plus attacks on eavesdropped bundles
};

[[nodiscard]] std::string_view to_string(ExperimentKind k) noexcept;

struct Variant {
    LossKind loss = LossKind::SoftmaxCE;
    SamplingStrategy strategy = SamplingStrategy::RandomLabels;
};

struct TrainSettings {
    std::size_t clients = 4;
    double lr = 0.1;
    std::size_t batch_size = 6;
    std::size_t epochs = 5;
    std::size_t eval_subset = 2000;
    std::size_t attack_rounds = 10;  ///< eavesdropped rounds replayed through the attack
};

/// One experiment manifest. JSON keys mirror the field names; see
/// configs/ for one file per figure family.
struct ExperimentConfig {
    std::string id = "experiment";
    ExperimentKind kind = ExperimentKind::AttackGrid;
    std::string dataset = "mnist";  ///< "mnist" or "synthetic"
    std::size_t synthetic_classes = 5749;
    std::size_t synthetic_per_class = 2;
    std::size_t synthetic_height = 32;
    std::size_t synthetic_width = 32;
    std::size_t train_subset = 0;  ///< leading training samples used, 0 = all
    std::string model = "dense";   ///< "dense" or "lenet"
    std::vector<std::size_t> channels{1};
    std::vector<Variant> variants{Variant{}};
    std::vector<std::size_t> batch_sizes{1};
    std::vector<AttackKind> attacks{AttackKind::TwoNorm};
    std::size_t trials = 10;
    std::vector<double> thresholds{0.6, 0.8};
    std::vector<double> sigmas{0.0};
    double lr = 0.05;
    std::size_t iters = 550;
    double tv_weight = 1e-2;
    double orth_weight = 1e-3;
    LabelMode label_mode = LabelMode::Auto;
    MetricKind success_metric = MetricKind::AVD;
    std::uint64_t seed = 1;
    std::size_t workers = 1;
    TrainSettings train;

    void validate() const;
    [[nodiscard]] nlohmann::json to_json() const;
    [[nodiscard]] static ExperimentConfig from_json(const nlohmann::json& j);
    [[nodiscard]] static ExperimentConfig load(const std::filesystem::path& path);
};

/// One grid point. Trials of a cell draw from stream_key(key, trial).
struct Cell {
    std::string key;
    Variant variant;
    std::size_t batch_size = 1;
    std::size_t channels = 0;  ///< 0 for dense models
    AttackKind attack = AttackKind::TwoNorm;
    double sigma = 0.0;
};

[[nodiscard]] std::vector<Cell> enumerate_cells(const ExperimentConfig& config);

struct TrialRecord {
    Cell cell;
    std::size_t trial = 0;
    std::size_t iterations = 0;
    std::string termination;
    std::string label_mode;
    double final_objective = 0.0;
    double normalized_avd = 0.0;
    double normalized_mse = 0.0;

    [[nodiscard]] double metric(MetricKind kind) const {
        return kind == MetricKind::AVD ? normalized_avd : normalized_mse;
    }
};

/// Fraction of records whose metric is below the threshold.
/// Throws std::invalid_argument on an empty cell.
[[nodiscard]] double recovery_rate(std::span<const TrialRecord> records, double threshold, MetricKind metric);

struct RateRow {
    Cell cell;
    std::string attack;  ///< attack kind, or "all" for the roll-up over attacks
    std::size_t trials = 0;
    std::vector<double> rates;  ///< one per threshold
    bool skipped = false;
    std::string reason;
};

struct DirectSummary {
    Cell cell;
    std::size_t classes = 0;
    std::vector<double> errors;  ///< per recovered vector, pooled over trials
    double median = 0.0;
    double mean = 0.0;
    LogHistogram histogram;
    bool skipped = false;
    std::string reason;
};

struct TrainSummary {
    Cell cell;
    TrainReport report;
    std::vector<TrialRecord> attacks;  ///< replays of eavesdropped bundles
    std::vector<double> recovery;      ///< one per threshold
};

struct ExperimentResults {
    std::vector<RateRow> rates;
    std::vector<TrialRecord> records;
    std::vector<DirectSummary> direct;
    std::vector<TrainSummary> train;

    /// Rate for a cell; attack "all" gives the roll-up. Throws if absent.
    [[nodiscard]] const RateRow& rate_row(const Variant& v, std::size_t batch_size, std::size_t channels,
                                          const std::string& attack, double sigma = 0.0) const;
};

struct ExperimentData {
    std::optional<Dataset> train;
    std::optional<Dataset> test;
};

/// Data directory from an explicit flag, else GRADLAB_DATA_DIR, else
/// ./data/mnist. Throws DataUnavailable when the IDX files are missing.
[[nodiscard]] std::filesystem::path resolve_data_dir(const std::optional<std::filesystem::path>& flag);

[[nodiscard]] ExperimentData load_experiment_data(const ExperimentConfig& config,
                                                  const std::optional<std::filesystem::path>& data_dir);

struct RunOptions {
    std::filesystem::path out_dir;
    std::ostream* log = nullptr;
};

/// Runs every cell not already completed under out_dir/cells, then writes
/// records.csv, rates.csv (attack grids), hist_<id>.csv (direct grids),
/// heatmap_<id>_*.csv (LeNet grids), accuracy.csv and scatter.csv (training),
/// timing.csv and manifest.json.
ExperimentResults run_experiment(const ExperimentConfig& config, const ExperimentData& data,
                                 const RunOptions& options);

}  // namespace gradlab
