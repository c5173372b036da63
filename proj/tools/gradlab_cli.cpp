// gradlab command-line front end.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gradlab/attacks.hpp"
#include "gradlab/datasets.hpp"
#include "gradlab/direct_inversion.hpp"
#include "gradlab/fedsim.hpp"
#include "gradlab/harness.hpp"
#include "gradlab/image_io.hpp"
#include "gradlab/metrics.hpp"
#include "gradlab/models.hpp"
#include "gradlab/numerics.hpp"
#include "gradlab/serialization.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace gradlab;

namespace {

constexpr int kExitError = 1;
constexpr int kExitNoData = 2;

// Flat JSON object -> CLI11 config items, so every subcommand accepts
// `--config file.json` with keys named after its long flags.
class JsonConfig : public CLI::Config {
  public:
    std::string to_config(const CLI::App* app, bool default_also, bool, std::string) const override {
        json j;
        for (const CLI::Option* opt : app->get_options({})) {
            if (opt->get_lnames().empty() || !opt->get_configurable()) continue;
            const auto name = opt->get_lnames().front();
            if (opt->count() > 0) {
                j[name] = opt->results().size() == 1 ? json(opt->results().front()) : json(opt->results());
            } else if (default_also && !opt->get_default_str().empty()) {
                j[name] = opt->get_default_str();
            }
        }
        return j.dump(2);
    }

    std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
        json j;
        try {
            j = json::parse(input, nullptr, true, true);
        } catch (const json::parse_error& e) {
            throw CLI::ConversionError("config", e.what());
        }
        if (!j.is_object()) throw CLI::ConversionError("config", "top level must be a JSON object");
        std::vector<CLI::ConfigItem> items;
        for (const auto& [key, value] : j.items()) {
            CLI::ConfigItem item;
            item.name = key;
            auto scalar = [](const json& v) {
                if (v.is_string()) return v.get<std::string>();
                if (v.is_boolean()) return std::string(v.get<bool>() ? "true" : "false");
                return v.dump();
            };
            if (value.is_array()) {
                for (const auto& v : value) item.inputs.push_back(scalar(v));
            } else {
                item.inputs.push_back(scalar(value));
            }
            items.push_back(std::move(item));
        }
        return items;
    }
};

struct Common {
    std::uint64_t seed = 1;
    std::string out;
    std::optional<std::string> data_dir;
};

void add_common(CLI::App* sub, Common& c, bool config_is_flags = true) {
    sub->add_option("--seed", c.seed, "Master seed")->capture_default_str();
    sub->add_option("--out", c.out, "Output directory");
    sub->add_option("--data-dir", c.data_dir, "Directory with MNIST IDX files (default: $GRADLAB_DATA_DIR or data/mnist)");
    if (config_is_flags) sub->set_config("--config", "", "JSON file with default values for these flags");
}

std::optional<fs::path> as_path(const std::optional<std::string>& s) {
    if (!s) return std::nullopt;
    return fs::path(*s);
}

fs::path ensure_out(const std::string& out) {
    if (out.empty()) throw std::invalid_argument("--out is required");
    fs::create_directories(out);
    return out;
}

void write_json(const fs::path& path, const json& j) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error(path.string() + ": cannot open for writing");
    f << j.dump(2) << '\n';
}

Tensor image_of(const Tensor& batch, std::size_t m, std::size_t h, std::size_t w) {
    return batch.slice(m).reshaped({h, w});
}

Model build_model(const std::string& kind, std::size_t channels, const Dataset& data, SeededRng& rng) {
    if (kind == "lenet") return LeNetModel::random(data.height(), data.width(), channels, data.num_classes(), rng);
    if (kind == "dense") return DenseModel::random(data.pixels(), data.num_classes(), rng);
    throw std::invalid_argument("--model must be dense or lenet");
}

// ---- train ---------------------------------------------------------------

struct TrainArgs {
    Common common;
    std::string model = "dense";
    std::size_t channels = 1;
    std::string loss = "softmax_ce";
    std::string strategy = "random";
    std::size_t clients = 4;
    double lr = 0.1;
    std::size_t batch = 6;
    std::size_t epochs = 5;
    std::size_t train_subset = 0;
    std::size_t eval_subset = 2000;
    std::size_t eavesdrop_rounds = 1;
    std::string profile = "desk";
};

int run_train(const TrainArgs& a) {
    const auto dir = resolve_data_dir(as_path(a.common.data_dir));
    const auto out = ensure_out(a.common.out);
    const Dataset train_data = load_mnist_split(dir, "train").head(a.train_subset);
    const Dataset test_data = load_mnist_split(dir, "t10k");
    SeededRng rng(a.common.seed, stream_key("cli-train-model", 0));
    const Model init = build_model(a.model, a.channels, train_data, rng);

    FedConfig fc;
    fc.num_clients = a.clients;
    fc.lr = a.lr;
    fc.batch_size = a.batch;
    fc.strategy = parse_strategy(a.strategy);
    fc.loss = parse_loss(a.loss);
    fc.epochs = a.profile == "full" ? 60 : a.epochs;
    fc.eval_subset_size = a.eval_subset;
    fc.seed = a.common.seed;
    fc.eavesdrop_client = 0;

    const auto eaves = out / "eavesdrop";
    if (a.eavesdrop_rounds > 0) fs::create_directories(eaves);
    const auto sink = [&](const EavesdropRecord& r) {
        if (r.round >= a.eavesdrop_rounds) return;
        const auto stem = "round" + std::to_string(r.round);
        save_model(eaves / (stem + "_model.bin"), r.snapshot);
        save_bundle(eaves / (stem + "_bundle.bin"), r.bundle);
        json meta{{"round", r.round},      {"client", r.client},     {"batch_size", r.batch.size()},
                  {"labels", r.batch.labels}, {"indices", r.batch.indices}, {"loss", a.loss},
                  {"height", train_data.height()}, {"width", train_data.width()}};
        write_json(eaves / (stem + ".json"), meta);
        for (std::size_t m = 0; m < r.batch.size(); ++m) {
            write_pgm(eaves / (stem + "_truth" + std::to_string(m) + ".pgm"),
                      image_of(r.batch.inputs, m, train_data.height(), train_data.width()));
        }
    };
    const auto outcome = train(init, train_data, test_data, fc, sink);
    {
        std::ofstream f(out / "train_report.csv");
        write_train_report(f, outcome.report);
    }
    save_model(out / "model_final.bin", outcome.model);
    std::cout << "final test accuracy " << outcome.report.final_accuracy << '\n';
    return 0;
}

// ---- attack --------------------------------------------------------------

struct AttackArgs {
    Common common;
    std::string attack = "two_norm";
    std::string loss = "softmax_ce";
    std::string strategy = "random";
    std::string model = "dense";
    std::size_t channels = 1;
    std::size_t batch = 1;
    double lr = 0.05;
    std::size_t iters = 550;
    double tv_weight = 1e-2;
    double orth_weight = 1e-3;
    std::string label_mode = "auto";
    double sigma = 0.0;
    std::optional<std::string> snapshot;
    std::optional<std::string> bundle;
    std::vector<std::string> truth;
    std::size_t height = 28;
    std::size_t width = 28;
};

int run_attack_cmd(const AttackArgs& a) {
    const auto out = ensure_out(a.common.out);
    Model model;
    GradientBundle observed;
    std::optional<Tensor> truth;
    std::size_t h = a.height;
    std::size_t w = a.width;
    std::size_t b = a.batch;

    if (a.snapshot || a.bundle) {
        if (!a.snapshot || !a.bundle) throw std::invalid_argument("--snapshot and --bundle go together");
        model = load_model(*a.snapshot);
        observed = load_bundle(*a.bundle);
        if (!a.truth.empty()) {
            std::vector<Tensor> imgs;
            for (const auto& p : a.truth) imgs.push_back(read_pgm(p));
            truth = stack(imgs);
            b = imgs.size();
            h = imgs.front().dim(0);
            w = imgs.front().dim(1);
        }
    } else {
        const auto dir = resolve_data_dir(as_path(a.common.data_dir));
        const Dataset data = load_mnist_split(dir, "train");
        SeededRng rng(a.common.seed, stream_key("cli-attack", 0));
        auto model_rng = rng.derive(1);
        auto data_rng = rng.derive(2);
        auto noise_rng = rng.derive(4);
        model = build_model(a.model, a.channels, data, model_rng);
        const Batch batch = sample_batch(data, parse_strategy(a.strategy), a.batch, data_rng);
        observed = apply_noise_defense(backward(model, batch, parse_loss(a.loss)).gradients, a.sigma, noise_rng);
        truth = batch.inputs;
        h = data.height();
        w = data.width();
    }

    AttackProblem p;
    p.model = &model;
    p.observed = &observed;
    p.loss = parse_loss(a.loss);
    p.batch_size = b;
    p.height = h;
    p.width = w;
    AttackConfig cfg;
    cfg.kind = parse_attack(a.attack);
    cfg.lr = a.lr;
    cfg.max_iters = a.iters;
    cfg.tv_weight = a.tv_weight;
    cfg.orth_weight = a.orth_weight;
    cfg.label_mode = parse_label_mode(a.label_mode);
    cfg.seed = a.common.seed;
    cfg.stream = stream_key("cli-attack-init", 0);
    const auto res = run_attack(p, cfg);

    for (std::size_t m = 0; m < b; ++m) {
        write_pgm(out / ("recovered" + std::to_string(m) + ".pgm"), image_of(res.recovered, m, h, w));
        write_pgm(out / ("initial" + std::to_string(m) + ".pgm"), image_of(res.initial, m, h, w));
    }
    {
        std::ofstream f(out / "trace.csv");
        f << "iteration,objective\n";
        for (std::size_t i = 0; i < res.trace.size(); ++i) f << i + 1 << ',' << res.trace[i] << '\n';
    }
    json summary{{"attack", a.attack},
                 {"loss", a.loss},
                 {"batch_size", b},
                 {"iterations", res.iterations},
                 {"termination", std::string(to_string(res.termination))},
                 {"label_mode", std::string(to_string(res.label_mode))},
                 {"labels", res.labels},
                 {"final_objective", res.final_objective}};
    if (truth) {
        const auto score = score_batch(*truth, res.recovered, res.initial);
        summary["normalized_avd"] = score.normalized_avd;
        summary["normalized_mse"] = score.normalized_mse;
        summary["success@0.6"] = classify_success(score.normalized_avd, 0.6);
        summary["success@0.8"] = classify_success(score.normalized_avd, 0.8);
        for (std::size_t m = 0; m < truth->dim(0); ++m) {
            write_pgm(out / ("truth" + std::to_string(m) + ".pgm"), image_of(*truth, m, h, w));
        }
    }
    write_json(out / "attack.json", summary);
    std::cout << summary.dump(2) << '\n';
    return 0;
}

// ---- direct-invert -------------------------------------------------------

struct DirectArgs {
    Common common;
    std::string dataset = "mnist";
    std::size_t classes = 5749;
    std::size_t per_class = 2;
    std::size_t height = 32;
    std::size_t width = 32;
    std::string loss = "softmax_ce";
    std::string strategy = "unique";
    std::size_t batch = 2;
    double sigma = 0.0;
    std::size_t trials = 1;
    std::optional<std::string> bundle;
};

int run_direct(const DirectArgs& a) {
    const auto out = ensure_out(a.common.out);
    if (a.bundle) {
        const auto est = invert_dense_batch(load_bundle(*a.bundle));
        const auto n = est.estimates.row_size();
        const auto side = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(n))));
        for (std::size_t k = 0; k < est.classes.size(); ++k) {
            if (side * side == n) {
                write_pgm(out / ("estimate_class" + std::to_string(est.classes[k]) + ".pgm"),
                          image_of(est.estimates, k, side, side));
            }
        }
        json j{{"invertible_classes", est.classes}, {"skipped_classes", est.skipped}};
        write_json(out / "direct.json", j);
        std::cout << j.dump(2) << '\n';
        return 0;
    }

    Dataset data = [&] {
        if (a.dataset == "synthetic") {
            SeededRng rng(a.common.seed, stream_key("synthetic-data", 0));
            return make_synthetic(a.classes, a.per_class, a.height, a.width, rng);
        }
        if (a.dataset != "mnist") throw std::invalid_argument("--dataset must be mnist or synthetic");
        return load_mnist_split(resolve_data_dir(as_path(a.common.data_dir)), "train");
    }();
    const auto loss = parse_loss(a.loss);
    const auto strategy = parse_strategy(a.strategy);
    LogHistogram hist;
    std::vector<double> errors;
    json trials = json::array();
    for (std::size_t t = 0; t < a.trials; ++t) {
        SeededRng rng(a.common.seed, stream_key("cli-direct", t));
        auto model_rng = rng.derive(1);
        auto data_rng = rng.derive(2);
        auto noise_rng = rng.derive(4);
        const Model model = DenseModel::random(data.pixels(), data.num_classes(), model_rng);
        const Batch batch = sample_batch(data, strategy, a.batch, data_rng);
        const auto bundle = apply_noise_defense(backward(model, batch, loss).gradients, a.sigma, noise_rng);
        const auto est = invert_dense_batch(bundle);
        const auto err = inversion_error(est, batch);
        hist.merge(err.histogram);
        errors.insert(errors.end(), err.per_vector.begin(), err.per_vector.end());
        trials.push_back({{"trial", t}, {"labels", batch.labels}, {"median_error", err.median}});
        if (t == 0) {
            for (std::size_t m = 0; m < batch.size(); ++m) {
                const auto row = est.estimate_for(batch.labels[m]);
                if (!row) continue;
                Tensor img({data.height(), data.width()}, std::vector<double>(row->begin(), row->end()));
                write_pgm(out / ("estimate" + std::to_string(m) + ".pgm"), img);
                write_pgm(out / ("truth" + std::to_string(m) + ".pgm"), image_of(batch.inputs, m, data.height(), data.width()));
            }
        }
    }
    {
        std::ofstream f(out / "hist.csv");
        write_histogram_header(f);
        write_histogram_rows(f, HistogramKey{"cli", a.strategy, a.loss, a.batch, data.num_classes(), a.sigma}, hist);
    }
    json summary{{"dataset", a.dataset},  {"classes", data.num_classes()}, {"loss", a.loss},
                 {"strategy", a.strategy}, {"batch_size", a.batch},        {"sigma", a.sigma},
                 {"vectors", errors.size()}, {"median_error", median(errors)}, {"mean_error", mean(errors)},
                 {"trials", trials}};
    write_json(out / "direct.json", summary);
    std::cout << "median per-pixel error " << summary["median_error"] << " over " << errors.size() << " vectors\n";
    return 0;
}

// ---- experiment ----------------------------------------------------------

struct ExperimentArgs {
    Common common;
    std::string config;
    std::optional<std::size_t> workers;
    std::string profile = "desk";
    bool seed_given = false;
};

int run_experiment_cmd(const ExperimentArgs& a) {
    auto cfg = ExperimentConfig::load(a.config);
    if (a.seed_given) cfg.seed = a.common.seed;
    if (a.workers) cfg.workers = *a.workers;
    if (a.profile == "full") {
        cfg.lr = 0.05;
        cfg.iters = 550;
        cfg.train.epochs = 60;
    } else if (a.profile != "desk") {
        throw ConfigError("--profile must be desk or full");
    }
    const auto out = ensure_out(a.common.out);
    const auto data = load_experiment_data(cfg, as_path(a.common.data_dir));
    const auto res = run_experiment(cfg, data, RunOptions{out, &std::cerr});
    std::cout << "experiment " << cfg.id << ": " << enumerate_cells(cfg).size() << " cells, results in " << out.string()
              << '\n';
    (void)res;
    return 0;
}

// ---- metrics -------------------------------------------------------------

struct MetricsArgs {
    Common common;
    std::string pairs;
    double p0 = 0.5;
};

int run_metrics(const MetricsArgs& a) {
    // <name>_source.pgm + <name>_target.pgm, optional <name>_init.pgm.
    std::map<std::string, fs::path> sources;
    for (const auto& e : fs::directory_iterator(a.pairs)) {
        const auto name = e.path().filename().string();
        const std::string suffix = "_source.pgm";
        if (name.size() > suffix.size() && name.ends_with(suffix)) {
            sources[name.substr(0, name.size() - suffix.size())] = e.path();
        }
    }
    if (sources.empty()) throw std::invalid_argument("no *_source.pgm files in " + a.pairs);
    std::ostream* os = &std::cout;
    std::ofstream file;
    if (!a.common.out.empty()) {
        file.open(ensure_out(a.common.out) / "metrics.csv");
        os = &file;
    }
    *os << "name,avd,normalized_avd,normalized_mse,entropy_variation\n";
    for (const auto& [name, src] : sources) {
        const auto dir = src.parent_path();
        const auto tgt = dir / (name + "_target.pgm");
        if (!fs::exists(tgt)) throw std::invalid_argument("missing " + tgt.string());
        const Tensor s = read_pgm(src);
        const Tensor t = read_pgm(tgt);
        *os << name << ',' << avd(s, t) << ',';
        const auto init = dir / (name + "_init.pgm");
        if (fs::exists(init)) {
            const Tensor i = read_pgm(init);
            *os << normalized_avd(s, t, i) << ',' << normalized_mse(s, t, i);
        } else {
            *os << ',';
        }
        *os << ',' << entropy_variation(s, t, EntropyVariationConfig{a.p0, 1e-8}) << '\n';
    }
    return 0;
}

// ---- gen-data ------------------------------------------------------------

struct GenArgs {
    Common common;
    std::size_t classes = 20;
    std::size_t per_class = 2;
    std::size_t height = 32;
    std::size_t width = 32;
    std::string format = "pgm";
};

int run_gen(const GenArgs& a) {
    const auto out = ensure_out(a.common.out);
    SeededRng rng(a.common.seed, stream_key("synthetic-data", 0));
    const Dataset d = make_synthetic(a.classes, a.per_class, a.height, a.width, rng);
    if (a.format == "idx") {
        write_idx(d, out / "train-images-idx3-ubyte", out / "train-labels-idx1-ubyte");
    } else if (a.format == "pgm") {
        std::ofstream labels(out / "labels.csv");
        labels << "file,label\n";
        for (std::size_t i = 0; i < d.size(); ++i) {
            const auto file = "sample" + std::to_string(i) + ".pgm";
            write_pgm(out / file, d.images().slice(i));
            labels << file << ',' << d.labels()[i] << '\n';
        }
    } else {
        throw std::invalid_argument("--format must be pgm or idx");
    }
    std::cout << "wrote " << d.size() << " samples to " << out.string() << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"gradlab: gradient inversion and gradient-mixing defence experiments"};
    app.config_formatter(std::make_shared<JsonConfig>());
    app.require_subcommand(1);
    app.set_version_flag("--version", GRADLAB_VERSION);

    TrainArgs ta;
    auto* train_cmd = app.add_subcommand("train", "Federated training on MNIST");
    add_common(train_cmd, ta.common);
    train_cmd->add_option("--model", ta.model)->check(CLI::IsMember({"dense", "lenet"}))->capture_default_str();
    train_cmd->add_option("--channels", ta.channels)->capture_default_str();
    train_cmd->add_option("--loss", ta.loss)->capture_default_str();
    train_cmd->add_option("--strategy", ta.strategy)->capture_default_str();
    train_cmd->add_option("--clients", ta.clients)->capture_default_str();
    train_cmd->add_option("--lr", ta.lr)->capture_default_str();
    train_cmd->add_option("--batch", ta.batch)->capture_default_str();
    train_cmd->add_option("--epochs", ta.epochs)->capture_default_str();
    train_cmd->add_option("--train-subset", ta.train_subset, "Leading training samples used (0 = all)");
    train_cmd->add_option("--eval-subset", ta.eval_subset)->capture_default_str();
    train_cmd->add_option("--eavesdrop-rounds", ta.eavesdrop_rounds, "Rounds of client 0 written for replay");
    train_cmd->add_option("--profile", ta.profile)->check(CLI::IsMember({"desk", "full"}))->capture_default_str();

    AttackArgs aa;
    auto* attack_cmd = app.add_subcommand("attack", "Optimisation attack on one observed gradient bundle");
    add_common(attack_cmd, aa.common);
    attack_cmd->add_option("--attack", aa.attack)->capture_default_str();
    attack_cmd->add_option("--loss", aa.loss)->capture_default_str();
    attack_cmd->add_option("--strategy", aa.strategy)->capture_default_str();
    attack_cmd->add_option("--model", aa.model)->check(CLI::IsMember({"dense", "lenet"}))->capture_default_str();
    attack_cmd->add_option("--channels", aa.channels)->capture_default_str();
    attack_cmd->add_option("--batch", aa.batch)->capture_default_str();
    attack_cmd->add_option("--lr", aa.lr)->capture_default_str();
    attack_cmd->add_option("--iters", aa.iters)->capture_default_str();
    attack_cmd->add_option("--tv-weight", aa.tv_weight)->capture_default_str();
    attack_cmd->add_option("--orth-weight", aa.orth_weight)->capture_default_str();
    attack_cmd->add_option("--label-mode", aa.label_mode)->capture_default_str();
    attack_cmd->add_option("--sigma", aa.sigma, "Gaussian noise added to the observed gradients");
    attack_cmd->add_option("--snapshot", aa.snapshot, "Model snapshot to replay (from train --eavesdrop-rounds)");
    attack_cmd->add_option("--bundle", aa.bundle, "Observed gradient bundle to replay");
    attack_cmd->add_option("--truth", aa.truth, "Ground-truth PGM images for scoring a replay");
    attack_cmd->add_option("--height", aa.height)->capture_default_str();
    attack_cmd->add_option("--width", aa.width)->capture_default_str();

    DirectArgs da;
    auto* direct_cmd = app.add_subcommand("direct-invert", "Closed-form inversion of dense-layer gradients");
    add_common(direct_cmd, da.common);
    direct_cmd->add_option("--dataset", da.dataset)->check(CLI::IsMember({"mnist", "synthetic"}))->capture_default_str();
    direct_cmd->add_option("--classes", da.classes)->capture_default_str();
    direct_cmd->add_option("--per-class", da.per_class)->capture_default_str();
    direct_cmd->add_option("--height", da.height)->capture_default_str();
    direct_cmd->add_option("--width", da.width)->capture_default_str();
    direct_cmd->add_option("--loss", da.loss)->capture_default_str();
    direct_cmd->add_option("--strategy", da.strategy)->capture_default_str();
    direct_cmd->add_option("--batch", da.batch)->capture_default_str();
    direct_cmd->add_option("--sigma", da.sigma)->capture_default_str();
    direct_cmd->add_option("--trials", da.trials)->capture_default_str();
    direct_cmd->add_option("--bundle", da.bundle, "Invert a saved dense-model bundle instead");

    ExperimentArgs ea;
    auto* exp_cmd = app.add_subcommand("experiment", "Run an experiment grid from a JSON manifest");
    add_common(exp_cmd, ea.common, false);
    exp_cmd->add_option("--config", ea.config, "Experiment manifest (JSON)")->required()->check(CLI::ExistingFile);
    exp_cmd->add_option("--workers", ea.workers, "Worker threads (0 = all cores)");
    exp_cmd->add_option("--profile", ea.profile, "desk or full")->capture_default_str();

    MetricsArgs ma;
    auto* metrics_cmd = app.add_subcommand("metrics", "Score <name>_source.pgm / <name>_target.pgm pairs");
    add_common(metrics_cmd, ma.common);
    metrics_cmd->add_option("--pairs", ma.pairs, "Directory of image pairs")->required()->check(CLI::ExistingDirectory);
    metrics_cmd->add_option("--p0", ma.p0)->capture_default_str();

    GenArgs ga;
    auto* gen_cmd = app.add_subcommand("gen-data", "Write a synthetic many-class dataset");
    add_common(gen_cmd, ga.common);
    gen_cmd->add_option("--classes", ga.classes)->capture_default_str();
    gen_cmd->add_option("--per-class", ga.per_class)->capture_default_str();
    gen_cmd->add_option("--height", ga.height)->capture_default_str();
    gen_cmd->add_option("--width", ga.width)->capture_default_str();
    gen_cmd->add_option("--format", ga.format)->check(CLI::IsMember({"pgm", "idx"}))->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (*train_cmd) return run_train(ta);
        if (*attack_cmd) return run_attack_cmd(aa);
        if (*direct_cmd) return run_direct(da);
        if (*exp_cmd) {
            ea.seed_given = exp_cmd->count("--seed") > 0;
            return run_experiment_cmd(ea);
        }
        if (*metrics_cmd) return run_metrics(ma);
        if (*gen_cmd) return run_gen(ga);
    } catch (const DataUnavailable& e) {
        std::cerr << "gradlab: " << e.what() << '\n';
        return kExitNoData;
    } catch (const std::exception& e) {
        std::cerr << "gradlab: " << e.what() << '\n';
        return kExitError;
    }
    return kExitError;
}
