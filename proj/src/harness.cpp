#include "gradlab/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <mutex>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

#include "gradlab/direct_inversion.hpp"
#include "gradlab/numerics.hpp"
#include "gradlab/rng.hpp"

namespace gradlab {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(ExperimentKind k) noexcept {
    switch (k) {
        case ExperimentKind::AttackGrid: return "attack";
        case ExperimentKind::DirectGrid: return "direct";
        case ExperimentKind::Train: return "train";
    }
    return "unknown";
}

namespace {

std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string short_num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%g", v);
    return buf;
}

std::string fixed(double v, int digits = 4) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

std::vector<std::string> split(const std::string& line, char sep = ',') {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream in(line);
    while (std::getline(in, cur, sep)) out.push_back(cur);
    if (!line.empty() && line.back() == sep) out.emplace_back();
    return out;
}

std::string sanitize(std::string s) {
    std::replace(s.begin(), s.end(), ',', ';');
    std::replace(s.begin(), s.end(), '\n', ' ');
    return s;
}

std::string file_stem(const std::string& key) {
    std::string out;
    for (char ch : key) {
        if (ch == '/') {
            out += "__";
        } else if (std::isalnum(static_cast<unsigned char>(ch)) || ch == '-' || ch == '_' || ch == '.') {
            out += ch;
        } else {
            out += '_';
        }
    }
    return out;
}

MetricKind parse_metric(const std::string& s) {
    if (s == "avd") return MetricKind::AVD;
    if (s == "mse") return MetricKind::MSE;
    throw ConfigError("success_metric must be \"avd\" or \"mse\", got \"" + s + "\"");
}

ExperimentKind parse_kind(const std::string& s) {
    if (s == "attack") return ExperimentKind::AttackGrid;
    if (s == "direct") return ExperimentKind::DirectGrid;
    if (s == "train") return ExperimentKind::Train;
    throw ConfigError("kind must be one of attack, direct, train; got \"" + s + "\"");
}

template <typename T>
T get(const json& j, const char* key) {
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config key '") + key + "': " + e.what());
    }
}

}  // namespace

void ExperimentConfig::validate() const {
    auto fail = [](const std::string& what) { throw ConfigError(what); };
    if (id.empty()) fail("id must not be empty");
    if (dataset != "mnist" && dataset != "synthetic") fail("dataset must be \"mnist\" or \"synthetic\"");
    if (model != "dense" && model != "lenet") fail("model must be \"dense\" or \"lenet\"");
    if (kind == ExperimentKind::DirectGrid && model != "dense") fail("direct inversion needs the dense model");
    if (kind == ExperimentKind::Train && dataset != "mnist") fail("training runs need the mnist dataset");
    if (variants.empty()) fail("at least one loss/strategy variant is required");
    if (batch_sizes.empty() || std::count(batch_sizes.begin(), batch_sizes.end(), 0)) fail("batch sizes must be positive");
    if (model == "lenet" && (channels.empty() || std::count(channels.begin(), channels.end(), 0))) {
        fail("lenet channel counts must be positive");
    }
    if (attacks.empty()) fail("at least one attack kind is required");
    if (trials == 0) fail("trials must be positive");
    if (thresholds.empty()) fail("at least one threshold is required");
    for (double t : thresholds) {
        if (!(t > 0.0)) fail("thresholds must be positive");
    }
    for (double s : sigmas) {
        if (!(s >= 0.0)) fail("noise sigmas must be non-negative");
    }
    if (sigmas.empty()) fail("sigma list must not be empty (use [0])");
    if (!(lr > 0.0)) fail("lr must be positive");
    if (tv_weight < 0.0 || orth_weight < 0.0) fail("regularizer weights must be non-negative");
    if (dataset == "synthetic" && (synthetic_classes < 2 || synthetic_per_class == 0 || synthetic_height < 2 ||
                                   synthetic_width < 2)) {
        fail("synthetic dataset dimensions are too small");
    }
    if (train.clients == 0 || train.batch_size == 0 || !(train.lr > 0.0)) fail("invalid training settings");
}

json ExperimentConfig::to_json() const {
    json j;
    j["id"] = id;
    j["kind"] = std::string(to_string(kind));
    j["dataset"] = dataset;
    j["synthetic"] = {{"classes", synthetic_classes},
                      {"per_class", synthetic_per_class},
                      {"height", synthetic_height},
                      {"width", synthetic_width}};
    j["train_subset"] = train_subset;
    j["model"] = model;
    j["channels"] = channels;
    json vs = json::array();
    for (const auto& v : variants) vs.push_back({std::string(to_string(v.loss)), std::string(to_string(v.strategy))});
    j["variants"] = vs;
    j["batch_sizes"] = batch_sizes;
    json as = json::array();
    for (auto a : attacks) as.push_back(std::string(to_string(a)));
    j["attacks"] = as;
    j["trials"] = trials;
    j["thresholds"] = thresholds;
    j["sigmas"] = sigmas;
    j["lr"] = lr;
    j["iters"] = iters;
    j["tv_weight"] = tv_weight;
    j["orth_weight"] = orth_weight;
    j["label_mode"] = std::string(to_string(label_mode));
    j["success_metric"] = success_metric == MetricKind::AVD ? "avd" : "mse";
    j["seed"] = seed;
    j["workers"] = workers;
    j["train"] = {{"clients", train.clients},         {"lr", train.lr},
                  {"batch_size", train.batch_size},   {"epochs", train.epochs},
                  {"eval_subset", train.eval_subset}, {"attack_rounds", train.attack_rounds}};
    return j;
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
    if (!j.is_object()) throw ConfigError("experiment config must be a JSON object");
    static const std::set<std::string> known = {
        "id",         "kind",     "dataset",   "synthetic",   "train_subset", "model",      "channels",
        "variants",   "losses",   "strategies", "batch_sizes", "attacks",      "trials",     "thresholds",
        "sigmas",     "lr",       "iters",     "tv_weight",   "orth_weight",  "label_mode", "success_metric",
        "seed",       "workers",  "train",     "description"};
    for (const auto& [k, _] : j.items()) {
        if (!known.contains(k)) throw ConfigError("unknown config key '" + k + "'");
    }
    ExperimentConfig c;
    try {
        if (j.contains("id")) c.id = get<std::string>(j, "id");
        if (j.contains("kind")) c.kind = parse_kind(get<std::string>(j, "kind"));
        if (j.contains("dataset")) c.dataset = get<std::string>(j, "dataset");
        if (j.contains("synthetic")) {
            const auto& s = j.at("synthetic");
            for (const auto& [k, _] : s.items()) {
                if (k != "classes" && k != "per_class" && k != "height" && k != "width") {
                    throw ConfigError("unknown synthetic key '" + k + "'");
                }
            }
            if (s.contains("classes")) c.synthetic_classes = get<std::size_t>(s, "classes");
            if (s.contains("per_class")) c.synthetic_per_class = get<std::size_t>(s, "per_class");
            if (s.contains("height")) c.synthetic_height = get<std::size_t>(s, "height");
            if (s.contains("width")) c.synthetic_width = get<std::size_t>(s, "width");
        }
        if (j.contains("train_subset")) c.train_subset = get<std::size_t>(j, "train_subset");
        if (j.contains("model")) c.model = get<std::string>(j, "model");
        if (j.contains("channels")) c.channels = get<std::vector<std::size_t>>(j, "channels");
        if (j.contains("variants") && (j.contains("losses") || j.contains("strategies"))) {
            throw ConfigError("give either 'variants' or 'losses' x 'strategies', not both");
        }
        if (j.contains("variants")) {
            c.variants.clear();
            for (const auto& v : j.at("variants")) {
                if (!v.is_array() || v.size() != 2) throw ConfigError("each variant is [loss, strategy]");
                c.variants.push_back({parse_loss(v[0].get<std::string>()), parse_strategy(v[1].get<std::string>())});
            }
        } else if (j.contains("losses") || j.contains("strategies")) {
            std::vector<std::string> losses{"softmax_ce"};
            std::vector<std::string> strategies{"random"};
            if (j.contains("losses")) losses = get<std::vector<std::string>>(j, "losses");
            if (j.contains("strategies")) strategies = get<std::vector<std::string>>(j, "strategies");
            c.variants.clear();
            for (const auto& l : losses) {
                for (const auto& s : strategies) c.variants.push_back({parse_loss(l), parse_strategy(s)});
            }
        }
        if (j.contains("batch_sizes")) c.batch_sizes = get<std::vector<std::size_t>>(j, "batch_sizes");
        if (j.contains("attacks")) {
            c.attacks.clear();
            for (const auto& a : get<std::vector<std::string>>(j, "attacks")) c.attacks.push_back(parse_attack(a));
        }
        if (j.contains("trials")) c.trials = get<std::size_t>(j, "trials");
        if (j.contains("thresholds")) c.thresholds = get<std::vector<double>>(j, "thresholds");
        if (j.contains("sigmas")) c.sigmas = get<std::vector<double>>(j, "sigmas");
        if (j.contains("lr")) c.lr = get<double>(j, "lr");
        if (j.contains("iters")) c.iters = get<std::size_t>(j, "iters");
        if (j.contains("tv_weight")) c.tv_weight = get<double>(j, "tv_weight");
        if (j.contains("orth_weight")) c.orth_weight = get<double>(j, "orth_weight");
        if (j.contains("label_mode")) c.label_mode = parse_label_mode(get<std::string>(j, "label_mode"));
        if (j.contains("success_metric")) c.success_metric = parse_metric(get<std::string>(j, "success_metric"));
        if (j.contains("seed")) c.seed = get<std::uint64_t>(j, "seed");
        if (j.contains("workers")) c.workers = get<std::size_t>(j, "workers");
        if (j.contains("train")) {
            const auto& t = j.at("train");
            for (const auto& [k, _] : t.items()) {
                static const std::set<std::string> tk = {"clients",     "lr",         "batch_size",
                                                         "epochs",      "eval_subset", "attack_rounds"};
                if (!tk.contains(k)) throw ConfigError("unknown train key '" + k + "'");
            }
            if (t.contains("clients")) c.train.clients = get<std::size_t>(t, "clients");
            if (t.contains("lr")) c.train.lr = get<double>(t, "lr");
            if (t.contains("batch_size")) c.train.batch_size = get<std::size_t>(t, "batch_size");
            if (t.contains("epochs")) c.train.epochs = get<std::size_t>(t, "epochs");
            if (t.contains("eval_subset")) c.train.eval_subset = get<std::size_t>(t, "eval_subset");
            if (t.contains("attack_rounds")) c.train.attack_rounds = get<std::size_t>(t, "attack_rounds");
        }
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw ConfigError(e.what());
    }
    c.validate();
    return c;
}

ExperimentConfig ExperimentConfig::load(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(path.string() + ": cannot open config");
    json j;
    try {
        j = json::parse(in, nullptr, true, true);
    } catch (const json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    return from_json(j);
}

std::vector<Cell> enumerate_cells(const ExperimentConfig& cfg) {
    std::vector<Cell> cells;
    const bool lenet = cfg.model == "lenet";
    const std::vector<std::size_t> chans = lenet ? cfg.channels : std::vector<std::size_t>{0};
    auto base = [&](const Variant& v) {
        return cfg.id + "/" + cfg.model + "/" + std::string(to_string(v.loss)) + "/" +
               std::string(to_string(v.strategy));
    };
    if (cfg.kind == ExperimentKind::Train) {
        for (const auto& v : cfg.variants) {
            Cell c;
            c.variant = v;
            c.batch_size = cfg.train.batch_size;
            c.channels = lenet ? cfg.channels.front() : 0;
            c.key = base(v);
            cells.push_back(c);
        }
        return cells;
    }
    for (const auto& v : cfg.variants) {
        for (double sigma : cfg.sigmas) {
            for (auto b : cfg.batch_sizes) {
                for (auto ch : chans) {
                    const auto attacks = cfg.kind == ExperimentKind::AttackGrid ? cfg.attacks
                                                                                : std::vector<AttackKind>{AttackKind::TwoNorm};
                    for (auto a : attacks) {
                        Cell c;
                        c.variant = v;
                        c.batch_size = b;
                        c.channels = ch;
                        c.attack = a;
                        c.sigma = sigma;
                        c.key = base(v) + "/B" + std::to_string(b);
                        if (lenet) c.key += "/ch" + std::to_string(ch);
                        if (cfg.kind == ExperimentKind::AttackGrid) c.key += "/" + std::string(to_string(a));
                        c.key += "/s" + short_num(sigma);
                        cells.push_back(c);
                    }
                }
            }
        }
    }
    return cells;
}

double recovery_rate(std::span<const TrialRecord> records, double threshold, MetricKind metric) {
    if (records.empty()) throw std::invalid_argument("recovery_rate: no records");
    std::size_t hits = 0;
    for (const auto& r : records) hits += classify_success(r.metric(metric), threshold) ? 1 : 0;
    return static_cast<double>(hits) / static_cast<double>(records.size());
}

const RateRow& ExperimentResults::rate_row(const Variant& v, std::size_t batch_size, std::size_t channels,
                                           const std::string& attack, double sigma) const {
    for (const auto& r : rates) {
        if (r.cell.variant.loss == v.loss && r.cell.variant.strategy == v.strategy && r.cell.batch_size == batch_size &&
            r.cell.channels == channels && r.attack == attack && r.cell.sigma == sigma) {
            return r;
        }
    }
    throw std::out_of_range("no rate row for the requested cell");
}

fs::path resolve_data_dir(const std::optional<fs::path>& flag) {
    fs::path dir;
    if (flag) {
        dir = *flag;
    } else if (const char* env = std::getenv("GRADLAB_DATA_DIR"); env && *env) {
        dir = env;
    } else {
        dir = "data/mnist";
    }
    for (const char* f : {"train-images-idx3-ubyte", "train-labels-idx1-ubyte"}) {
        if (!fs::exists(dir / f)) {
            throw DataUnavailable("MNIST files not found in '" + dir.string() + "' (missing " + f +
                                  "). Run tools/fetch_mnist.py or point --data-dir / GRADLAB_DATA_DIR at the IDX files.");
        }
    }
    return dir;
}

ExperimentData load_experiment_data(const ExperimentConfig& cfg, const std::optional<fs::path>& data_dir) {
    ExperimentData d;
    if (cfg.dataset == "synthetic") {
        SeededRng rng(cfg.seed, stream_key("synthetic-data", 0));
        d.train = make_synthetic(cfg.synthetic_classes, cfg.synthetic_per_class, cfg.synthetic_height,
                                 cfg.synthetic_width, rng);
        return d;
    }
    const auto dir = resolve_data_dir(data_dir);
    d.train = load_mnist_split(dir, "train").head(cfg.train_subset);
    if (cfg.kind == ExperimentKind::Train) {
        if (!fs::exists(dir / "t10k-images-idx3-ubyte")) {
            throw DataUnavailable("MNIST test split missing in '" + dir.string() + "'");
        }
        d.test = load_mnist_split(dir, "t10k");
    }
    return d;
}

namespace {

Model make_model(const ExperimentConfig& cfg, const Cell& cell, const Dataset& data, SeededRng& rng) {
    if (cfg.model == "lenet") {
        return LeNetModel::random(data.height(), data.width(), cell.channels, data.num_classes(), rng);
    }
    return DenseModel::random(data.pixels(), data.num_classes(), rng);
}

AttackConfig attack_config(const ExperimentConfig& cfg, AttackKind kind, std::uint64_t stream) {
    AttackConfig ac;
    ac.kind = kind;
    ac.lr = cfg.lr;
    ac.max_iters = cfg.iters;
    ac.tv_weight = cfg.tv_weight;
    ac.orth_weight = cfg.orth_weight;
    ac.label_mode = cfg.label_mode;
    ac.seed = cfg.seed;
    ac.stream = splitmix64(stream ^ 0x3ULL);
    return ac;
}

TrialRecord score_attack(const ExperimentConfig& cfg, const Cell& cell, std::size_t trial, const Model& model,
                         const GradientBundle& observed, const Batch& batch, std::uint64_t stream) {
    AttackProblem p;
    p.model = &model;
    p.observed = &observed;
    p.loss = cell.variant.loss;
    p.batch_size = batch.size();
    p.height = batch.inputs.dim(1);
    p.width = batch.inputs.dim(2);
    const auto res = run_attack(p, attack_config(cfg, cell.attack, stream));
    const auto score = score_batch(batch.inputs, res.recovered, res.initial);
    TrialRecord r;
    r.cell = cell;
    r.trial = trial;
    r.iterations = res.iterations;
    r.termination = std::string(to_string(res.termination));
    r.label_mode = std::string(to_string(res.label_mode));
    r.final_objective = res.final_objective;
    r.normalized_avd = score.normalized_avd;
    r.normalized_mse = score.normalized_mse;
    return r;
}

std::string record_line(const TrialRecord& r) {
    return std::to_string(r.trial) + "," + std::to_string(r.iterations) + "," + r.termination + "," + r.label_mode +
           "," + num(r.final_objective) + "," + num(r.normalized_avd) + "," + num(r.normalized_mse);
}

TrialRecord parse_record(const Cell& cell, const std::vector<std::string>& f, std::size_t offset) {
    if (f.size() < offset + 7) throw std::runtime_error("corrupt cell file for " + cell.key);
    TrialRecord r;
    r.cell = cell;
    r.trial = std::stoul(f[offset]);
    r.iterations = std::stoul(f[offset + 1]);
    r.termination = f[offset + 2];
    r.label_mode = f[offset + 3];
    r.final_objective = std::stod(f[offset + 4]);
    r.normalized_avd = std::stod(f[offset + 5]);
    r.normalized_mse = std::stod(f[offset + 6]);
    return r;
}

std::optional<std::string> infeasible(const Cell& cell, const Dataset& data) {
    if (cell.variant.strategy == SamplingStrategy::UniqueLabels) {
        std::size_t present = 0;
        for (std::size_t c = 0; c < data.num_classes(); ++c) present += data.indices_of(c).empty() ? 0 : 1;
        if (cell.batch_size > present) {
            return "unique labels need B <= " + std::to_string(present) + " classes";
        }
    }
    if (cell.variant.strategy == SamplingStrategy::RandomLabels && cell.batch_size > data.size()) {
        return "batch larger than the dataset";
    }
    return std::nullopt;
}

// Runs one cell and returns the lines of its cell file plus timing lines.
struct CellOutput {
    std::vector<std::string> lines;
    std::vector<std::string> timing;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

CellOutput run_attack_cell(const ExperimentConfig& cfg, const Cell& cell, const Dataset& data) {
    CellOutput out;
    for (std::size_t t = 0; t < cfg.trials; ++t) {
        const auto t0 = Clock::now();
        const auto stream = stream_key(cell.key, t);
        SeededRng rng(cfg.seed, stream);
        auto model_rng = rng.derive(1);
        auto data_rng = rng.derive(2);
        auto noise_rng = rng.derive(4);
        const Model model = make_model(cfg, cell, data, model_rng);
        const Batch batch = sample_batch(data, cell.variant.strategy, cell.batch_size, data_rng);
        auto observed = backward(model, batch, cell.variant.loss).gradients;
        if (cell.sigma > 0.0) observed = apply_noise_defense(observed, cell.sigma, noise_rng);
        const auto rec = score_attack(cfg, cell, t, model, observed, batch, stream);
        out.lines.push_back(record_line(rec));
        out.timing.push_back(std::to_string(t) + "," + fixed(seconds_since(t0), 3));
    }
    return out;
}

CellOutput run_direct_cell(const ExperimentConfig& cfg, const Cell& cell, const Dataset& data) {
    CellOutput out;
    for (std::size_t t = 0; t < cfg.trials; ++t) {
        const auto t0 = Clock::now();
        const auto stream = stream_key(cell.key, t);
        SeededRng rng(cfg.seed, stream);
        auto model_rng = rng.derive(1);
        auto data_rng = rng.derive(2);
        auto noise_rng = rng.derive(4);
        const Model model = DenseModel::random(data.pixels(), data.num_classes(), model_rng);
        const Batch batch = sample_batch(data, cell.variant.strategy, cell.batch_size, data_rng);
        auto bundle = backward(model, batch, cell.variant.loss).gradients;
        if (cell.sigma > 0.0) bundle = apply_noise_defense(bundle, cell.sigma, noise_rng);
        try {
            const auto err = inversion_error(invert_dense_batch(bundle), batch);
            for (std::size_t k = 0; k < err.per_vector.size(); ++k) {
                out.lines.push_back(std::to_string(t) + "," + std::to_string(err.matched[k]) + "," +
                                    num(err.per_vector[k]));
            }
        } catch (const std::domain_error&) {
            // nothing invertible in this trial
        } catch (const std::invalid_argument&) {
        }
        out.timing.push_back(std::to_string(t) + "," + fixed(seconds_since(t0), 3));
    }
    return out;
}

CellOutput run_train_cell(const ExperimentConfig& cfg, const Cell& cell, const ExperimentData& data) {
    const auto t0 = Clock::now();
    const auto stream = stream_key(cell.key, 0);
    SeededRng rng(cfg.seed, stream);
    auto model_rng = rng.derive(1);
    const Model init = make_model(cfg, cell, *data.train, model_rng);

    FedConfig fc;
    fc.num_clients = cfg.train.clients;
    fc.lr = cfg.train.lr;
    fc.batch_size = cfg.train.batch_size;
    fc.strategy = cell.variant.strategy;
    fc.loss = cell.variant.loss;
    fc.epochs = cfg.train.epochs;
    fc.eval_subset_size = cfg.train.eval_subset;
    fc.seed = splitmix64(stream ^ 0x5ULL);
    fc.eavesdrop_client = 0;
    std::vector<EavesdropRecord> captured;
    const auto sink = [&](const EavesdropRecord& r) {
        if (r.round < cfg.train.attack_rounds) captured.push_back(r);
    };
    const auto outcome = train(init, *data.train, *data.test, fc, sink);

    CellOutput out;
    for (const auto& e : outcome.report.epochs) {
        out.lines.push_back("E," + std::to_string(e.epoch) + "," + num(e.train_accuracy) + "," + num(e.test_accuracy) +
                            "," + num(e.mean_loss));
    }
    out.timing.push_back("train," + fixed(seconds_since(t0), 3));
    for (auto kind : cfg.attacks) {
        Cell ac = cell;
        ac.attack = kind;
        for (const auto& rec : captured) {
            const auto t1 = Clock::now();
            const auto s = stream_key(cell.key + "/" + std::string(to_string(kind)), rec.round);
            const auto r = score_attack(cfg, ac, rec.round, rec.snapshot, rec.bundle, rec.batch, s);
            out.lines.push_back("A," + std::string(to_string(kind)) + "," + record_line(r));
            out.timing.push_back(std::string(to_string(kind)) + "-" + std::to_string(rec.round) + "," +
                                 fixed(seconds_since(t1), 3));
        }
    }
    return out;
}

void write_atomic(const fs::path& path, const std::vector<std::string>& lines) {
    const auto tmp = fs::path(path.string() + ".tmp");
    {
        std::ofstream f(tmp, std::ios::binary);
        if (!f) throw std::runtime_error(tmp.string() + ": cannot open for writing");
        for (const auto& l : lines) f << l << '\n';
        if (!f) throw std::runtime_error(tmp.string() + ": write failed");
    }
    fs::rename(tmp, path);
}

std::vector<std::string> read_lines(const fs::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error(path.string() + ": cannot open");
    std::vector<std::string> lines;
    for (std::string l; std::getline(f, l);) lines.push_back(l);
    return lines;
}

std::ofstream open_out(const fs::path& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error(path.string() + ": cannot open for writing");
    return f;
}

std::string threshold_columns(const std::string& prefix, const std::vector<double>& thresholds) {
    std::string s;
    for (double t : thresholds) s += "," + prefix + "@" + short_num(t);
    return s;
}

// The worker count does not affect results, so it is left out.
json identity(const ExperimentConfig& cfg) {
    auto j = cfg.to_json();
    j.erase("workers");
    return j;
}

void write_manifest(const fs::path& path, const ExperimentConfig& cfg, std::size_t cells) {
    json m;
    m["experiment"] = identity(cfg);
    m["master_seed"] = cfg.seed;
    m["version"] = GRADLAB_VERSION;
    m["cells"] = cells;
    auto f = open_out(path);
    f << m.dump(2) << '\n';
}

void check_manifest(const fs::path& path, const ExperimentConfig& cfg) {
    if (!fs::exists(path)) return;
    std::ifstream in(path);
    json m;
    try {
        m = json::parse(in);
    } catch (const json::parse_error&) {
        throw ConfigError(path.string() + ": unreadable manifest; use a fresh --out directory");
    }
    if (!m.contains("experiment") || m["experiment"] != identity(cfg)) {
        throw ConfigError("output directory holds results of a different experiment configuration (" + path.string() +
                          "); use a fresh --out directory");
    }
}

bool zero_boundary(const std::vector<std::vector<double>>& grid, std::size_t i, std::size_t k) {
    if (grid[i][k] != 0.0) return false;
    const auto rows = grid.size();
    const auto cols = grid[i].size();
    auto positive = [&](std::size_t a, std::size_t b) { return a < rows && b < cols && grid[a][b] > 0.0; };
    return positive(i - 1, k) || positive(i + 1, k) || positive(i, k - 1) || positive(i, k + 1);
}

}  // namespace

ExperimentResults run_experiment(const ExperimentConfig& cfg, const ExperimentData& data, const RunOptions& opt) {
    cfg.validate();
    if (!data.train) throw std::invalid_argument("run_experiment: training split not loaded");
    if (cfg.kind == ExperimentKind::Train && !data.test) throw std::invalid_argument("run_experiment: test split missing");
    if (opt.out_dir.empty()) throw std::invalid_argument("run_experiment: no output directory");

    const auto cells_dir = opt.out_dir / "cells";
    std::error_code ec;
    fs::create_directories(cells_dir, ec);
    if (ec || !fs::is_directory(cells_dir)) {
        throw std::runtime_error("cannot create output directory '" + cells_dir.string() + "': " + ec.message());
    }
    const auto manifest = opt.out_dir / "manifest.json";
    check_manifest(manifest, cfg);
    const auto cells = enumerate_cells(cfg);
    write_manifest(manifest, cfg, cells.size());

    // Execute pending cells on a small worker pool. Each cell owns its file,
    // so workers share nothing but the job counter and the log.
    std::vector<std::size_t> pending;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (!fs::exists(cells_dir / (file_stem(cells[i].key) + ".csv"))) pending.push_back(i);
    }
    std::atomic<std::size_t> next{0};
    std::mutex log_mu;
    std::exception_ptr failure;
    std::atomic<bool> failed{false};
    const std::size_t done_before = cells.size() - pending.size();
    std::atomic<std::size_t> finished{done_before};
    auto worker = [&] {
        while (!failed) {
            const auto j = next++;
            if (j >= pending.size()) return;
            const Cell& cell = cells[pending[j]];
            const auto t0 = Clock::now();
            try {
                CellOutput out;
                if (cfg.kind != ExperimentKind::Train) {
                    if (auto why = infeasible(cell, *data.train)) out.lines.push_back("skipped," + sanitize(*why));
                }
                if (out.lines.empty()) {
                    try {
                        switch (cfg.kind) {
                            case ExperimentKind::AttackGrid: out = run_attack_cell(cfg, cell, *data.train); break;
                            case ExperimentKind::DirectGrid: out = run_direct_cell(cfg, cell, *data.train); break;
                            case ExperimentKind::Train: out = run_train_cell(cfg, cell, data); break;
                        }
                    } catch (const InfeasibleBatch& e) {
                        out = CellOutput{{"skipped," + sanitize(e.what())}, {}};
                    }
                }
                const auto stem = file_stem(cell.key);
                write_atomic(cells_dir / (stem + ".timing"), out.timing);
                write_atomic(cells_dir / (stem + ".csv"), out.lines);
                if (opt.log) {
                    std::lock_guard lock(log_mu);
                    *opt.log << "[" << ++finished << "/" << cells.size() << "] " << cell.key << " ("
                             << fixed(seconds_since(t0), 1) << "s)\n";
                    opt.log->flush();
                }
            } catch (...) {
                std::lock_guard lock(log_mu);
                if (!failure) failure = std::current_exception();
                failed = true;
            }
        }
    };
    std::size_t n_workers = cfg.workers == 0 ? std::max(1u, std::thread::hardware_concurrency()) : cfg.workers;
    n_workers = std::max<std::size_t>(1, std::min(n_workers, pending.size()));
    if (!pending.empty()) {
        if (n_workers == 1) {
            worker();
        } else {
            std::vector<std::thread> pool;
            for (std::size_t i = 0; i < n_workers; ++i) pool.emplace_back(worker);
            for (auto& t : pool) t.join();
        }
    }
    if (failure) std::rethrow_exception(failure);

    // Assemble results from the cell files, in enumeration order.
    ExperimentResults res;
    auto records = open_out(opt.out_dir / "records.csv");
    auto timing = open_out(opt.out_dir / "timing.csv");
    timing << "cell,item,seconds\n";
    const auto& th = cfg.thresholds;
    const std::string mname = cfg.model;

    if (cfg.kind == ExperimentKind::AttackGrid || cfg.kind == ExperimentKind::Train) {
        records << "experiment_id,cell,trial_id,model,attack_kind,loss_kind,strategy,B,channels,sigma,iterations,"
                   "termination,label_mode,final_objective,normalized_avd,normalized_mse"
                << threshold_columns("success", th) << '\n';
    } else {
        records << "experiment_id,cell,trial_id,strategy,loss_kind,B,C,sigma,vector,error\n";
    }
    auto emit_record = [&](const TrialRecord& r) {
        records << cfg.id << ',' << r.cell.key << ',' << r.trial << ',' << mname << ',' << to_string(r.cell.attack) << ','
                << to_string(r.cell.variant.loss) << ',' << to_string(r.cell.variant.strategy) << ',' << r.cell.batch_size
                << ',' << r.cell.channels << ',' << short_num(r.cell.sigma) << ',' << r.iterations << ','
                << r.termination << ',' << r.label_mode << ',' << num(r.final_objective) << ','
                << num(r.normalized_avd) << ',' << num(r.normalized_mse);
        for (double t : th) records << ',' << (classify_success(r.metric(cfg.success_metric), t) ? 1 : 0);
        records << '\n';
    };

    for (const auto& cell : cells) {
        const auto stem = file_stem(cell.key);
        const auto lines = read_lines(cells_dir / (stem + ".csv"));
        for (const auto& l : read_lines(cells_dir / (stem + ".timing"))) timing << cell.key << ',' << l << '\n';
        const bool skipped = !lines.empty() && lines.front().rfind("skipped,", 0) == 0;
        const std::string reason = skipped ? lines.front().substr(8) : "";

        if (cfg.kind == ExperimentKind::AttackGrid) {
            RateRow row;
            row.cell = cell;
            row.attack = std::string(to_string(cell.attack));
            row.skipped = skipped;
            row.reason = reason;
            if (!skipped) {
                std::vector<TrialRecord> recs;
                for (const auto& l : lines) recs.push_back(parse_record(cell, split(l), 0));
                for (const auto& r : recs) emit_record(r);
                row.trials = recs.size();
                for (double t : th) row.rates.push_back(recovery_rate(recs, t, cfg.success_metric));
                res.records.insert(res.records.end(), recs.begin(), recs.end());
            }
            res.rates.push_back(row);
        } else if (cfg.kind == ExperimentKind::DirectGrid) {
            DirectSummary s;
            s.cell = cell;
            s.classes = data.train->num_classes();
            s.skipped = skipped;
            s.reason = reason;
            if (!skipped) {
                for (const auto& l : lines) {
                    const auto f = split(l);
                    if (f.size() != 3) throw std::runtime_error("corrupt cell file for " + cell.key);
                    const double e = std::stod(f[2]);
                    s.errors.push_back(e);
                    s.histogram.add(e);
                    records << cfg.id << ',' << cell.key << ',' << f[0] << ',' << to_string(cell.variant.strategy) << ','
                            << to_string(cell.variant.loss) << ',' << cell.batch_size << ',' << s.classes << ','
                            << short_num(cell.sigma) << ',' << f[1] << ',' << f[2] << '\n';
                }
                if (!s.errors.empty()) {
                    s.median = median(s.errors);
                    s.mean = mean(s.errors);
                }
            }
            res.direct.push_back(std::move(s));
        } else {
            TrainSummary s;
            s.cell = cell;
            for (const auto& l : lines) {
                const auto f = split(l);
                if (f.empty()) continue;
                if (f[0] == "E" && f.size() == 5) {
                    EpochStats e;
                    e.epoch = std::stoul(f[1]);
                    e.train_accuracy = std::stod(f[2]);
                    e.test_accuracy = std::stod(f[3]);
                    e.mean_loss = std::stod(f[4]);
                    s.report.epochs.push_back(e);
                } else if (f[0] == "A") {
                    Cell ac = cell;
                    ac.attack = parse_attack(f.at(1));
                    s.attacks.push_back(parse_record(ac, f, 2));
                } else {
                    throw std::runtime_error("corrupt cell file for " + cell.key);
                }
            }
            if (!s.report.epochs.empty()) s.report.final_accuracy = s.report.epochs.back().test_accuracy;
            for (const auto& r : s.attacks) emit_record(r);
            for (double t : th) s.recovery.push_back(s.attacks.empty() ? 0.0 : recovery_rate(s.attacks, t, cfg.success_metric));
            res.records.insert(res.records.end(), s.attacks.begin(), s.attacks.end());
            res.train.push_back(std::move(s));
        }
    }

    if (cfg.kind == ExperimentKind::AttackGrid) {
        // Roll-up over attack kinds: one row per (variant, sigma, B, channels).
        std::vector<RateRow> rolled;
        for (const auto& row : res.rates) {
            auto it = std::find_if(rolled.begin(), rolled.end(), [&](const RateRow& r) {
                return r.cell.variant.loss == row.cell.variant.loss &&
                       r.cell.variant.strategy == row.cell.variant.strategy && r.cell.batch_size == row.cell.batch_size &&
                       r.cell.channels == row.cell.channels && r.cell.sigma == row.cell.sigma;
            });
            if (it == rolled.end()) {
                RateRow r;
                r.cell = row.cell;
                r.attack = "all";
                r.skipped = true;
                r.reason = row.reason;
                r.rates.assign(th.size(), 0.0);
                rolled.push_back(r);
                it = rolled.end() - 1;
            }
            if (row.skipped) continue;
            for (std::size_t k = 0; k < th.size(); ++k) {
                it->rates[k] = (it->rates[k] * static_cast<double>(it->trials) + row.rates[k] * static_cast<double>(row.trials)) /
                               static_cast<double>(it->trials + row.trials);
            }
            it->trials += row.trials;
            it->skipped = false;
        }
        for (auto& r : rolled) {
            if (r.skipped) r.rates.clear();
        }
        res.rates.insert(res.rates.end(), rolled.begin(), rolled.end());

        auto rates = open_out(opt.out_dir / "rates.csv");
        rates << "experiment_id,model,loss_kind,strategy,B,channels,sigma,attack_kind,trials" << threshold_columns("rate", th)
              << ",status\n";
        for (const auto& r : res.rates) {
            rates << cfg.id << ',' << mname << ',' << to_string(r.cell.variant.loss) << ','
                  << to_string(r.cell.variant.strategy) << ',' << r.cell.batch_size << ',' << r.cell.channels << ','
                  << short_num(r.cell.sigma) << ',' << r.attack << ',' << r.trials;
            for (std::size_t k = 0; k < th.size(); ++k) rates << ',' << (r.skipped ? "" : fixed(r.rates[k]));
            rates << ',' << (r.skipped ? "skipped: " + r.reason : "ok") << '\n';
        }

        if (cfg.model == "lenet") {
            for (const auto& v : cfg.variants) {
                for (double sigma : cfg.sigmas) {
                    std::string name = "heatmap_" + cfg.id + "_" + std::string(to_string(v.loss)) + "_" +
                                       std::string(to_string(v.strategy));
                    if (cfg.sigmas.size() > 1) name += "_s" + short_num(sigma);
                    auto f = open_out(opt.out_dir / (name + ".csv"));
                    f << "B,channels,trials" << threshold_columns("rate", th) << threshold_columns("on_zero_boundary", th)
                      << '\n';
                    const auto nb = cfg.batch_sizes.size();
                    const auto nc = cfg.channels.size();
                    std::vector<std::vector<std::vector<double>>> grid(
                        th.size(), std::vector<std::vector<double>>(nb, std::vector<double>(nc, -1.0)));
                    std::vector<std::vector<std::size_t>> trials(nb, std::vector<std::size_t>(nc, 0));
                    for (std::size_t i = 0; i < nb; ++i) {
                        for (std::size_t k = 0; k < nc; ++k) {
                            const auto& row = res.rate_row(v, cfg.batch_sizes[i], cfg.channels[k], "all", sigma);
                            trials[i][k] = row.trials;
                            for (std::size_t t = 0; t < th.size(); ++t) grid[t][i][k] = row.skipped ? -1.0 : row.rates[t];
                        }
                    }
                    for (std::size_t i = 0; i < nb; ++i) {
                        for (std::size_t k = 0; k < nc; ++k) {
                            f << cfg.batch_sizes[i] << ',' << cfg.channels[k] << ',' << trials[i][k];
                            for (std::size_t t = 0; t < th.size(); ++t) {
                                f << ',' << (grid[t][i][k] < 0.0 ? "" : fixed(grid[t][i][k]));
                            }
                            for (std::size_t t = 0; t < th.size(); ++t) f << ',' << (zero_boundary(grid[t], i, k) ? 1 : 0);
                            f << '\n';
                        }
                    }
                }
            }
        }
    } else if (cfg.kind == ExperimentKind::DirectGrid) {
        auto hist = open_out(opt.out_dir / ("hist_" + cfg.id + ".csv"));
        write_histogram_header(hist);
        auto summary = open_out(opt.out_dir / "direct_summary.csv");
        summary << "experiment_id,strategy,loss_kind,B,C,sigma,trials,vectors,median_error,mean_error,status\n";
        for (const auto& s : res.direct) {
            summary << cfg.id << ',' << to_string(s.cell.variant.strategy) << ',' << to_string(s.cell.variant.loss) << ','
                    << s.cell.batch_size << ',' << s.classes << ',' << short_num(s.cell.sigma) << ','
                    << (s.skipped ? 0 : cfg.trials) << ',' << s.errors.size() << ',';
            if (s.skipped || s.errors.empty()) {
                summary << ",," << (s.skipped ? "skipped: " + s.reason : "no matched vectors") << '\n';
                continue;
            }
            summary << num(s.median) << ',' << num(s.mean) << ",ok\n";
            write_histogram_rows(hist, HistogramKey{cfg.id, std::string(to_string(s.cell.variant.strategy)),
                                                    std::string(to_string(s.cell.variant.loss)), s.cell.batch_size,
                                                    s.classes, s.cell.sigma},
                                 s.histogram);
        }
    } else {
        auto acc = open_out(opt.out_dir / "accuracy.csv");
        acc << "experiment_id,loss_kind,strategy,epoch,train_acc,test_acc,mean_loss\n";
        auto scatter = open_out(opt.out_dir / "scatter.csv");
        scatter << "experiment_id,loss_kind,strategy,final_test_acc,attack_trials" << threshold_columns("recovered", th)
                << '\n';
        for (const auto& s : res.train) {
            const auto loss = to_string(s.cell.variant.loss);
            const auto strat = to_string(s.cell.variant.strategy);
            for (const auto& e : s.report.epochs) {
                acc << cfg.id << ',' << loss << ',' << strat << ',' << e.epoch << ',' << fixed(e.train_accuracy) << ','
                    << fixed(e.test_accuracy) << ',' << num(e.mean_loss) << '\n';
            }
            scatter << cfg.id << ',' << loss << ',' << strat << ',' << fixed(s.report.final_accuracy) << ','
                    << s.attacks.size();
            for (double r : s.recovery) scatter << ',' << fixed(r);
            scatter << '\n';
        }
    }
    return res;
}

}  // namespace gradlab
