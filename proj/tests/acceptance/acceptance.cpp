// Acceptance driver: runs criteria 1-11 into an output directory and prints
// one PASS/FAIL line per criterion. Criterion 12 compares two such
// directories byte for byte (--against, or standalone --compare).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gradlab/direct_inversion.hpp"
#include "gradlab/harness.hpp"
#include "gradlab/metrics.hpp"
#include "gradlab/models.hpp"
#include "gradlab/numerics.hpp"

using namespace gradlab;
namespace fs = std::filesystem;

namespace {

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

std::string g3(double v) {
    return fmt("%.3g", v);
}

struct Outcome {
    bool pass = false;
    std::string detail;
};

struct Context {
    fs::path out;
    fs::path data_dir;
    std::uint64_t seed = 1;
    std::size_t workers = 1;
    std::ostream* log = nullptr;

    const Dataset& mnist() {
        if (!mnist_) mnist_ = load_mnist_split(data_dir, "train");
        return *mnist_;
    }

    ExperimentResults experiment(const ExperimentConfig& cfg) {
        const auto dir = out / cfg.id;
        fs::create_directories(dir);
        {
            std::ofstream f(dir / "config.json");
            f << cfg.to_json().dump(2) << '\n';
        }
        return run_experiment(cfg, load_experiment_data(cfg, data_dir), {dir, log});
    }

    SeededRng rng(const std::string& tag, std::uint64_t index) const { return SeededRng(seed, stream_key(tag, index)); }

  private:
    std::optional<Dataset> mnist_;
};

class CsvOut {
  public:
    CsvOut(const fs::path& path, const std::string& header) : f_(path, std::ios::binary) {
        if (!f_) throw std::runtime_error(path.string() + ": cannot open for writing");
        f_ << header << '\n';
    }
    template <typename... T>
    void row(const T&... cols) {
        std::size_t i = 0;
        ((f_ << (i++ ? "," : "") << cell(cols)), ...);
        f_ << '\n';
    }

  private:
    static std::string cell(double v) { return fmt("%.17g", v); }
    static std::string cell(const std::string& s) { return s; }
    static std::string cell(const char* s) { return s; }
    template <typename I>
        requires std::is_integral_v<I>
    static std::string cell(I v) {
        return std::to_string(v);
    }
    std::ofstream f_;
};

// ---------------------------------------------------------------------------
// 1. analytic parameter gradients vs central differences

Tensor flat_params(const Model& m) {
    std::vector<double> out;
    for (const Tensor* p : parameters(m)) out.insert(out.end(), p->values().begin(), p->values().end());
    return Tensor({out.size()}, out);
}

Model with_params(Model m, const Tensor& flat) {
    std::size_t off = 0;
    for (Tensor* p : parameters(m)) {
        for (auto& v : p->values()) v = flat[off++];
    }
    return m;
}

double relative_error(std::span<const double> a, std::span<const double> b) {
    double diff = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        diff += (a[i] - b[i]) * (a[i] - b[i]);
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    const double scale = std::sqrt(std::max(na, nb));
    return scale == 0.0 ? 0.0 : std::sqrt(diff) / scale;
}

Tensor random_targets(std::size_t b, std::size_t c, SeededRng& rng) {
    std::vector<std::size_t> labels(b);
    for (auto& l : labels) l = rng.below(c);
    return one_hot(labels, c);
}

Outcome gradient_oracle(Context& ctx) {
    CsvOut csv(ctx.out / "c01_gradient_oracle.csv", "instance,model,loss_kind,parameters,relative_error");
    double worst = 0.0;
    std::size_t checks = 0;
    for (int model_kind = 0; model_kind < 2; ++model_kind) {
        const bool lenet = model_kind == 1;
        for (std::uint64_t i = 0; i < 50; ++i) {
            auto rng = ctx.rng(lenet ? "c1/lenet" : "c1/dense", i);
            Model m;
            Tensor x;
            std::size_t c = 2 + rng.below(9);
            if (lenet) {
                const auto ch = 1 + rng.below(2);
                const auto b = 1 + rng.below(2);
                m = LeNetModel::random(8, 8, ch, c, rng);
                x = uniform(rng, {b, 8, 8}, 0, 1);
            } else {
                const auto n = 1 + rng.below(20);
                const auto b = 1 + rng.below(4);
                m = DenseModel::random(n, c, rng);
                x = uniform(rng, {b, n}, 0, 1);
            }
            const auto y = random_targets(x.dim(0), c, rng);
            for (auto kind : {LossKind::SoftmaxCE, LossKind::MSE, LossKind::SoftmaxMSE}) {
                const auto analytic = backward(m, x, y, kind).gradients.flatten();
                const ScalarFunction f = [&](const Tensor& p) { return loss(forward(with_params(m, p), x), y, kind).mean; };
                const auto numeric = finite_diff_gradient(f, flat_params(m), 1e-5);
                const double err = relative_error(analytic, numeric.values());
                worst = std::max(worst, err);
                ++checks;
                csv.row(i, lenet ? "lenet" : "dense", std::string(to_string(kind)), analytic.size(), err);
            }
        }
    }
    return {worst < 1e-5, "max relative error " + g3(worst) + " over " + std::to_string(checks) +
                              " (model, loss) instances, limit 1e-05"};
}

// ---------------------------------------------------------------------------
// 2. single-sample ratio inversion is exact

Outcome exact_inversion(Context& ctx) {
    CsvOut csv(ctx.out / "c02_exact_inversion.csv", "instance,label,classes_inverted,max_abs_error");
    const auto& d = ctx.mnist();
    std::size_t exact = 0;
    double worst = 0.0;
    for (std::uint64_t i = 0; i < 100; ++i) {
        auto rng = ctx.rng("c2", i);
        const Model m = DenseModel::random(d.pixels(), d.num_classes(), rng);
        const auto batch = sample_batch(d, SamplingStrategy::RandomLabels, 1, rng);
        const auto est = invert_dense_batch(backward(m, batch, LossKind::SoftmaxCE).gradients, 1e-8);
        double err = 0.0;
        for (std::size_t k = 0; k < est.classes.size(); ++k) {
            const auto row = est.estimates.row(k);
            for (std::size_t p = 0; p < row.size(); ++p) err = std::max(err, std::abs(row[p] - batch.inputs[p]));
        }
        worst = std::max(worst, err);
        if (err < 1e-10) ++exact;
        csv.row(i, batch.labels[0], est.classes.size(), err);
    }
    return {exact == 100, std::to_string(exact) + "/100 exact, max abs error " + g3(worst) + ", limit 1e-10"};
}

// ---------------------------------------------------------------------------
// 3-6. direct inversion grids

ExperimentConfig direct_base(Context& ctx, const std::string& id) {
    ExperimentConfig c;
    c.id = id;
    c.kind = ExperimentKind::DirectGrid;
    c.trials = 100;
    c.seed = ctx.seed;
    c.workers = ctx.workers;
    return c;
}

const DirectSummary& find_direct(const ExperimentResults& r, LossKind loss, SamplingStrategy s, std::size_t b,
                                 double sigma = 0.0) {
    for (const auto& d : r.direct) {
        if (d.cell.variant.loss == loss && d.cell.variant.strategy == s && d.cell.batch_size == b &&
            d.cell.sigma == sigma) {
            if (d.skipped) throw std::runtime_error("direct cell skipped: " + d.reason);
            return d;
        }
    }
    throw std::runtime_error("direct cell missing");
}

struct DirectRuns {
    std::optional<ExperimentResults> synthetic, mnist, noise;
};

const ExperimentResults& synthetic_direct(Context& ctx, DirectRuns& runs) {
    if (!runs.synthetic) {
        auto c = direct_base(ctx, "direct_synthetic");
        c.dataset = "synthetic";
        c.synthetic_classes = 5749;
        c.synthetic_per_class = 2;
        c.synthetic_height = 32;
        c.synthetic_width = 32;
        c.variants = {{LossKind::SoftmaxCE, SamplingStrategy::UniqueLabels},
                      {LossKind::MSE, SamplingStrategy::UniqueLabels}};
        c.batch_sizes = {2, 8};
        runs.synthetic = ctx.experiment(c);
    }
    return *runs.synthetic;
}

const ExperimentResults& mnist_direct(Context& ctx, DirectRuns& runs) {
    if (!runs.mnist) {
        auto c = direct_base(ctx, "direct_mnist");
        c.variants = {{LossKind::SoftmaxCE, SamplingStrategy::UniqueLabels},
                      {LossKind::SoftmaxCE, SamplingStrategy::EqualLabels}};
        c.batch_sizes = {2, 8};
        runs.mnist = ctx.experiment(c);
    }
    return *runs.mnist;
}

Outcome large_class_demixing(Context& ctx, DirectRuns& runs) {
    const auto& syn = find_direct(synthetic_direct(ctx, runs), LossKind::SoftmaxCE, SamplingStrategy::UniqueLabels, 8);
    const auto& mn = find_direct(mnist_direct(ctx, runs), LossKind::SoftmaxCE, SamplingStrategy::UniqueLabels, 8);
    const double ratio = mn.median / syn.median;
    return {ratio >= 10.0, "B=8 unique, median error C=5749 " + g3(syn.median) + " vs C=10 " + g3(mn.median) +
                               " (ratio " + g3(ratio) + ", need >= 10)"};
}

Outcome equal_label_mixing(Context& ctx, DirectRuns& runs) {
    const auto& r = mnist_direct(ctx, runs);
    bool pass = true;
    std::string detail;
    for (std::size_t b : {2, 8}) {
        const auto& u = find_direct(r, LossKind::SoftmaxCE, SamplingStrategy::UniqueLabels, b);
        const auto& e = find_direct(r, LossKind::SoftmaxCE, SamplingStrategy::EqualLabels, b);
        const double ratio = e.median / u.median;
        pass = pass && ratio >= 10.0;
        if (!detail.empty()) detail += "; ";
        detail += "B=" + std::to_string(b) + " equal " + g3(e.median) + " vs unique " + g3(u.median) + " (ratio " +
                  g3(ratio) + ")";
    }
    return {pass, detail + ", need ratio >= 10"};
}

Outcome mse_mixing(Context& ctx, DirectRuns& runs) {
    const auto& r = synthetic_direct(ctx, runs);
    const auto& mse = find_direct(r, LossKind::MSE, SamplingStrategy::UniqueLabels, 2);
    const auto& ce = find_direct(r, LossKind::SoftmaxCE, SamplingStrategy::UniqueLabels, 2);
    return {mse.median > 1e-1 && ce.median < 1e-2, "B=2, median error mse " + g3(mse.median) + " (need > 0.1), " +
                                                       "softmax_ce " + g3(ce.median) + " (need < 0.01)"};
}

Outcome noise_scaling(Context& ctx, DirectRuns& runs) {
    if (!runs.noise) {
        auto c = direct_base(ctx, "direct_noise");
        c.variants = {{LossKind::SoftmaxCE, SamplingStrategy::UniqueLabels}};
        c.batch_sizes = {1};
        c.sigmas = {1e-4, 1e-3, 1e-2, 1e-1};
        runs.noise = ctx.experiment(c);
    }
    std::vector<double> lx, ly;
    std::string detail = "median error";
    for (double s : {1e-4, 1e-3, 1e-2, 1e-1}) {
        const auto& d = find_direct(*runs.noise, LossKind::SoftmaxCE, SamplingStrategy::UniqueLabels, 1, s);
        lx.push_back(std::log10(s));
        ly.push_back(std::log10(d.median));
        detail += " " + g3(d.median);
    }
    const double slope = regression_slope(lx, ly);
    return {std::abs(slope - 1.0) <= 0.2, detail + " at sigma 1e-4..1e-1, log-log slope " + fmt("%.3f", slope) +
                                              " (need 1 +- 0.2)"};
}

// ---------------------------------------------------------------------------
// 7. AVD calibration

Outcome avd_calibration(Context& ctx) {
    const auto& d = ctx.mnist();
    CsvOut csv(ctx.out / "c07_avd_calibration.csv", "digit,self_avd,noise_black_normalized,blend_spearman");
    bool identity = true, unit = true;
    double spearman_sum = 0.0;
    for (std::uint64_t i = 0; i < 50; ++i) {
        auto rng = ctx.rng("c7", i);
        const auto digit = d.images().slice(i);
        const auto noise = uniform(rng, {d.height(), d.width()}, 0, 1);
        const double self = avd(digit, digit);
        const double unit_v = normalized_avd(Tensor(noise.shape()), noise, noise);
        identity = identity && self == 0.0;
        unit = unit && unit_v == 1.0;
        double rho = 0.0;
        if (i < 20) {
            std::vector<double> lambda, score;
            for (int k = 0; k <= 10; ++k) {
                const double l = 0.1 * k;
                lambda.push_back(l);
                score.push_back(normalized_avd(digit, (1.0 - l) * noise + l * digit, noise));
            }
            rho = spearman_correlation(lambda, score);
            spearman_sum += rho;
        }
        csv.row(i, self, unit_v, rho);
    }
    const double mean_rho = spearman_sum / 20.0;
    return {identity && unit && mean_rho <= -0.9,
            std::string("avd(v,v)=0 ") + (identity ? "on all 50" : "FAILED") + ", noise-vs-black = 1 " +
                (unit ? "on all 50" : "FAILED") + ", blend Spearman mean " + fmt("%.3f", mean_rho) + " (need <= -0.9)"};
}

// ---------------------------------------------------------------------------
// 8-9. optimisation attacks on the dense model

ExperimentConfig attack_base(Context& ctx, const std::string& id) {
    ExperimentConfig c;
    c.id = id;
    c.kind = ExperimentKind::AttackGrid;
    c.attacks = {AttackKind::TwoNorm, AttackKind::AngleVar, AttackKind::AngleVarOrth};
    c.trials = 10;
    c.lr = 0.05;
    c.iters = 550;
    c.seed = ctx.seed;
    c.workers = ctx.workers;
    return c;
}

Outcome single_sample_attack(Context& ctx) {
    auto c = attack_base(ctx, "attack_b1");
    c.variants = {{LossKind::SoftmaxCE, SamplingStrategy::RandomLabels}};
    c.batch_sizes = {1};
    const auto r = ctx.experiment(c);
    std::size_t best = 0;
    std::string detail = "successes at 0.6:";
    for (auto a : c.attacks) {
        const auto& row = r.rate_row(c.variants[0], 1, 0, std::string(to_string(a)));
        const auto n = static_cast<std::size_t>(std::lround(row.rates[0] * static_cast<double>(row.trials)));
        best = std::max(best, n);
        detail += " " + std::string(to_string(a)) + " " + std::to_string(n) + "/" + std::to_string(row.trials);
    }
    return {best >= 8, detail + " (need >= 8/10 for one attack)"};
}

Outcome batch_defences(Context& ctx) {
    auto c = attack_base(ctx, "attack_b4");
    const Variant ce_random{LossKind::SoftmaxCE, SamplingStrategy::RandomLabels};
    const Variant ce_equal{LossKind::SoftmaxCE, SamplingStrategy::EqualLabels};
    const Variant mse{LossKind::MSE, SamplingStrategy::RandomLabels};
    const Variant softmax_mse{LossKind::SoftmaxMSE, SamplingStrategy::RandomLabels};
    c.variants = {ce_random, ce_equal, mse, softmax_mse};
    c.batch_sizes = {4};
    const auto r = ctx.experiment(c);
    auto rate = [&](const Variant& v, const std::string& a) { return r.rate_row(v, 4, 0, a).rates[1]; };
    const double base = rate(ce_random, "all");
    const double eq = rate(ce_equal, "all");
    const double ms = rate(mse, "all");
    std::string detail = "rate@0.8 over all attacks: softmax_ce/random " + fmt("%.3f", base) + ", softmax_ce/equal " +
                         fmt("%.3f", eq) + ", mse/random " + fmt("%.3f", ms) + " (softmax_mse/random " +
                         fmt("%.3f", rate(softmax_mse, "all")) + ")";
    return {base > eq && base > ms && base > 0.0, detail + "; need random > equal, random > mse, random > 0"};
}

// ---------------------------------------------------------------------------
// 10. training accuracy under the defences

Outcome accuracy_preservation(Context& ctx) {
    ExperimentConfig c;
    c.id = "train";
    c.kind = ExperimentKind::Train;
    c.train_subset = 10000;
    const Variant base{LossKind::SoftmaxCE, SamplingStrategy::RandomLabels};
    const Variant smse{LossKind::SoftmaxMSE, SamplingStrategy::RandomLabels};
    const Variant equal{LossKind::SoftmaxCE, SamplingStrategy::EqualLabels};
    c.variants = {base, smse, equal};
    c.train = TrainSettings{};
    c.train.epochs = 5;
    c.train.attack_rounds = 1;
    c.attacks = {AttackKind::TwoNorm};
    c.seed = ctx.seed;
    c.workers = ctx.workers;
    const auto r = ctx.experiment(c);
    auto acc = [&](const Variant& v) {
        for (const auto& s : r.train) {
            if (s.cell.variant.loss == v.loss && s.cell.variant.strategy == v.strategy) return s.report.final_accuracy;
        }
        throw std::runtime_error("training cell missing");
    };
    const double a0 = acc(base), a1 = acc(smse), a2 = acc(equal);
    const bool pass = a0 >= 0.85 && std::abs(a1 - a0) <= 0.03 && std::abs(a2 - a0) <= 0.03;
    return {pass, "test accuracy softmax_ce/random " + fmt("%.4f", a0) + " (need >= 0.85), softmax_mse/random " +
                      fmt("%.4f", a1) + ", softmax_ce/equal " + fmt("%.4f", a2) + " (need within 0.03)"};
}

// ---------------------------------------------------------------------------
// 11. label inference

Outcome label_inference(Context& ctx) {
    CsvOut csv(ctx.out / "c11_label_inference.csv", "classes,B,trial,exact,confidence");
    SeededRng data_rng(ctx.seed, stream_key("c11/data", 0));
    const auto syn = make_synthetic(5749, 1, 32, 32, data_rng);
    std::size_t exact = 0, total = 0;
    for (std::size_t b : {2, 4, 8}) {
        for (std::uint64_t t = 0; t < 50; ++t) {
            auto rng = ctx.rng("c11/B" + std::to_string(b), t);
            const Model m = DenseModel::random(syn.pixels(), syn.num_classes(), rng);
            const auto batch = sample_batch(syn, SamplingStrategy::UniqueLabels, b, rng);
            const auto g = backward(m, batch, LossKind::SoftmaxCE).gradients;
            const auto inf = infer_label_distribution(g.tensors.back(), syn.num_classes(), b);
            auto truth = batch.labels;
            std::sort(truth.begin(), truth.end());
            const bool ok = inf.labels == truth;
            exact += ok ? 1 : 0;
            ++total;
            csv.row(5749, b, t, ok ? 1 : 0, inf.confidence == Confidence::High ? "high" : "low");
        }
    }
    const auto& mn = ctx.mnist();
    std::size_t low = 0;
    for (std::uint64_t t = 0; t < 50; ++t) {
        auto rng = ctx.rng("c11/mnist", t);
        const Model m = DenseModel::random(mn.pixels(), mn.num_classes(), rng);
        const auto batch = sample_batch(mn, SamplingStrategy::UniqueLabels, 8, rng);
        const auto inf = infer_label_distribution(backward(m, batch, LossKind::SoftmaxCE).gradients.tensors.back(), 10, 8);
        low += inf.confidence == Confidence::Low ? 1 : 0;
        csv.row(10, 8, t, "", inf.confidence == Confidence::High ? "high" : "low");
    }
    return {exact == total && low == 50, "C=5749 exact on " + std::to_string(exact) + "/" + std::to_string(total) +
                                             " trials (B=2,4,8 x 50); C=10 B=8 flagged low on " + std::to_string(low) +
                                             "/50"};
}

// ---------------------------------------------------------------------------
// 12. byte-identical reruns

bool is_timing(const fs::path& rel) {
    const auto name = rel.filename().string();
    return name == "timing.csv" || name == "acceptance_timing.csv" || rel.extension() == ".timing";
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        const auto rel = fs::relative(e.path(), dir);
        if (is_timing(rel)) continue;
        std::ifstream in(e.path(), std::ios::binary);
        std::ostringstream s;
        s << in.rdbuf();
        out[rel.generic_string()] = s.str();
    }
    return out;
}

Outcome compare_dirs(const fs::path& a, const fs::path& b) {
    if (!fs::is_directory(a) || !fs::is_directory(b)) {
        return {false, "missing directory " + (fs::is_directory(a) ? b : a).string()};
    }
    const auto sa = snapshot(a);
    const auto sb = snapshot(b);
    std::vector<std::string> diff;
    for (const auto& [k, v] : sa) {
        const auto it = sb.find(k);
        if (it == sb.end() || it->second != v) diff.push_back(k);
    }
    for (const auto& [k, _] : sb) {
        if (!sa.contains(k)) diff.push_back(k);
    }
    std::string detail = std::to_string(sa.size()) + " result files compared, " + std::to_string(diff.size()) + " differ";
    for (std::size_t i = 0; i < std::min<std::size_t>(diff.size(), 5); ++i) detail += (i ? ", " : ": ") + diff[i];
    return {!sa.empty() && diff.empty(), detail};
}

// ---------------------------------------------------------------------------

struct Criterion {
    int id;
    const char* name;
    double budget_seconds;  // 0 = no stated limit
    std::function<Outcome(Context&)> run;
};

void print_line(int id, const char* name, const std::string& status, const std::string& detail, double seconds) {
    std::printf("criterion %2d  %-4s  %-28s %s  [%.1f s]\n", id, status.c_str(), name, detail.c_str(), seconds);
    std::fflush(stdout);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"gradlab acceptance criteria"};
    std::string out = "acceptance_out";
    std::string data_dir;
    std::string against;
    std::vector<std::string> compare;
    std::vector<int> only;
    std::uint64_t seed = 20220101;
    std::size_t workers = 1;
    bool strict = false;
    bool verbose = false;
    bool resume = false;
    app.add_option("--out", out, "Output directory (cleared first unless --resume)")->capture_default_str();
    app.add_option("--data-dir", data_dir, "MNIST IDX directory (default: $GRADLAB_DATA_DIR or data/mnist)");
    app.add_option("--seed", seed, "Master seed")->capture_default_str();
    app.add_option("--workers", workers, "Worker threads for experiment grids")->capture_default_str();
    app.add_option("--only", only, "Run only these criteria");
    app.add_option("--against", against, "Earlier output directory to check criterion 12 against");
    app.add_option("--compare", compare, "Compare two output directories and exit")->expected(2);
    app.add_flag("--strict", strict, "Exit non-zero when any criterion fails");
    app.add_flag("--resume", resume, "Keep finished experiment cells in --out");
    app.add_flag("--verbose", verbose, "Log experiment progress to stderr");
    CLI11_PARSE(app, argc, argv);

    if (!compare.empty()) {
        const auto r = compare_dirs(compare[0], compare[1]);
        print_line(12, "determinism", r.pass ? "PASS" : "FAIL", r.detail, 0.0);
        return r.pass ? 0 : 1;
    }

    Context ctx;
    ctx.out = out;
    ctx.seed = seed;
    ctx.workers = workers;
    ctx.log = verbose ? &std::cerr : nullptr;
    try {
        ctx.data_dir = resolve_data_dir(data_dir.empty() ? std::nullopt : std::optional<fs::path>(data_dir));
    } catch (const DataUnavailable& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    if (!resume) fs::remove_all(ctx.out);
    fs::create_directories(ctx.out);

    DirectRuns direct;
    const std::vector<Criterion> criteria = {
        {1, "gradient oracle", 60, gradient_oracle},
        {2, "exact B=1 inversion", 60, exact_inversion},
        {3, "large-C de-mixing", 0, [&](Context& c) { return large_class_demixing(c, direct); }},
        {4, "equal-label mixing", 0, [&](Context& c) { return equal_label_mixing(c, direct); }},
        {5, "mse mixing", 0, [&](Context& c) { return mse_mixing(c, direct); }},
        {6, "noise scaling", 0, [&](Context& c) { return noise_scaling(c, direct); }},
        {7, "avd calibration", 60, avd_calibration},
        {8, "end-to-end attack B=1", 600, single_sample_attack},
        {9, "batch defence ordering", 3600, batch_defences},
        {10, "accuracy preservation", 600, accuracy_preservation},
        {11, "label inference", 0, label_inference},
    };

    CsvOut summary(ctx.out / "summary.csv", "criterion,name,status,detail");
    CsvOut timing(ctx.out / "acceptance_timing.csv", "criterion,seconds");
    int failed = 0, errors = 0;
    for (const auto& c : criteria) {
        if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome r;
        std::string status;
        try {
            r = c.run(ctx);
            status = r.pass ? "PASS" : "FAIL";
        } catch (const std::exception& e) {
            r = {false, std::string("error: ") + e.what()};
            status = "ERROR";
            ++errors;
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (status == "PASS" && c.budget_seconds > 0 && secs > c.budget_seconds) {
            status = "FAIL";
            r.detail += "; over the " + fmt("%.0f", c.budget_seconds) + " s budget";
        }
        if (status != "PASS") ++failed;
        print_line(c.id, c.name, status, r.detail, secs);
        summary.row(c.id, c.name, status, "\"" + r.detail + "\"");
        timing.row(c.id, secs);
    }

    if (only.empty() || std::find(only.begin(), only.end(), 12) != only.end()) {
        if (against.empty()) {
            print_line(12, "determinism", "SKIP", "needs a second run: --against <dir> or --compare <a> <b>", 0.0);
        } else {
            const auto r = compare_dirs(ctx.out, against);
            if (!r.pass) ++failed;
            print_line(12, "determinism", r.pass ? "PASS" : "FAIL", r.detail + " against " + against, 0.0);
        }
    }
    if (errors) return 1;
    return strict && failed ? 1 : 0;
}
