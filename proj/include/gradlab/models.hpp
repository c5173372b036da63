#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <variant>
#include <vector>

#include "gradlab/datasets.hpp"
#include "gradlab/rng.hpp"
#include "gradlab/tensor.hpp"

namespace gradlab {

enum class LossKind {
    SoftmaxCE,   ///< softmax followed by cross-entropy
    MSE,         ///< squared error on raw logits
    SoftmaxMSE,  ///< squared error on softmax outputs
};

[[nodiscard]] std::string_view to_string(LossKind k) noexcept;
[[nodiscard]] LossKind parse_loss(std::string_view text);

/// Single fully connected layer, o_j = sum_i w_ij x_i + b_j.
struct DenseModel {
    Tensor weight;  ///< [n x C]
    Tensor bias;    ///< [C]

    static DenseModel zeros(std::size_t inputs, std::size_t classes);
    /// Every parameter uniform in [lo, hi).
    static DenseModel random(std::size_t inputs, std::size_t classes, SeededRng& rng, double lo = -0.5,
                             double hi = 0.5);

    [[nodiscard]] std::size_t inputs() const { return weight.dim(0); }
    [[nodiscard]] std::size_t classes() const { return weight.dim(1); }
};

/// LeNet-style CNN: two 5x5 "same" convolutions, each followed by a
/// sigmoid and 2x2 average pooling, then a dense classifier.
struct LeNetModel {
    static constexpr std::size_t kKernel = 5;

    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t channels = 0;
    std::size_t classes = 0;
    Tensor conv1_weight;  ///< [ch x 1 x 5 x 5]
    Tensor conv1_bias;    ///< [ch]
    Tensor conv2_weight;  ///< [2ch x ch x 5 x 5]
    Tensor conv2_bias;    ///< [2ch]
    Tensor fc_weight;     ///< [features x C]
    Tensor fc_bias;       ///< [C]

    /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialisation.
    static LeNetModel random(std::size_t height, std::size_t width, std::size_t channels, std::size_t classes,
                             SeededRng& rng);

    [[nodiscard]] std::size_t features() const { return 2 * channels * (height / 4) * (width / 4); }
};

using Model = std::variant<DenseModel, LeNetModel>;

/// Parameters in declaration order.
[[nodiscard]] std::vector<const Tensor*> parameters(const Model& model);
[[nodiscard]] std::vector<Tensor*> parameters(Model& model);
[[nodiscard]] std::size_t input_size(const Model& model);
[[nodiscard]] std::size_t num_classes(const Model& model);
[[nodiscard]] std::string_view model_name(const Model& model);

/// Gradients of every model parameter, in parameter declaration order.
/// When per_sample is set each tensor carries an extra leading axis of
/// length B.
struct GradientBundle {
    std::vector<Tensor> tensors;
    bool per_sample = false;

    [[nodiscard]] std::size_t total_size() const;
    [[nodiscard]] std::vector<double> flatten() const;
    friend bool operator==(const GradientBundle&, const GradientBundle&) = default;
};

/// Elementwise mean of a per-sample bundle over its leading axis.
[[nodiscard]] GradientBundle average(const GradientBundle& per_sample);
/// Elementwise mean of several averaged bundles.
[[nodiscard]] GradientBundle mean_of(std::span<const GradientBundle> bundles);
void require_matching(const GradientBundle& a, const GradientBundle& b, const char* what);

/// Logits [B x C] for inputs [B x ...].
[[nodiscard]] Tensor forward(const Model& model, const Tensor& inputs);

/// Softmax of a logit vector, or row-wise for a [B x C] tensor.
[[nodiscard]] Tensor softmax(const Tensor& logits);
void softmax(std::span<const double> logits, std::span<double> out);

[[nodiscard]] Tensor one_hot(std::span<const std::size_t> labels, std::size_t classes);

struct LossValue {
    std::vector<double> per_sample;
    double mean = 0.0;
};

/// Loss of [B x C] logits against one-hot targets.
[[nodiscard]] LossValue loss(const Tensor& logits, const Tensor& targets, LossKind kind);

struct BackwardOptions {
    bool per_sample = false;       ///< keep per-sample gradients instead of the batch mean
    bool input_gradient = false;   ///< d(mean loss)/d(inputs)
    bool target_gradient = false;  ///< d(mean loss)/d(targets)
};

struct BackwardResult {
    double mean_loss = 0.0;
    GradientBundle gradients;
    Tensor input_gradient;   ///< same shape as inputs, when requested
    Tensor target_gradient;  ///< [B x C], when requested
};

/// Hand-derived backpropagation. Targets are rows on the probability
/// simplex: one-hot for training, soft labels for label-optimising attacks.
[[nodiscard]] BackwardResult backward(const Model& model, const Tensor& inputs, const Tensor& targets, LossKind kind,
                                      BackwardOptions options = {});
[[nodiscard]] BackwardResult backward(const Model& model, const Batch& batch, LossKind kind,
                                      BackwardOptions options = {});

/// Every parameter decremented by lr times its gradient.
[[nodiscard]] Model sgd_step(Model model, const GradientBundle& bundle, double lr);

/// Per-sample derivatives in logit space. `delta` is dl/do for one sample;
/// the transposed Jacobian products feed the attack's second-order chain.
namespace logit_space {

/// Writes dl/do into delta and returns l.
double loss_and_delta(std::span<const double> logits, std::span<const double> target, LossKind kind,
                      std::span<double> delta);

/// out = (d delta / d o)^T u
void delta_jacobian_t(std::span<const double> logits, std::span<const double> target, LossKind kind,
                      std::span<const double> u, std::span<double> out);

/// out = (d delta / d y)^T u
void delta_target_jacobian_t(std::span<const double> logits, std::span<const double> target, LossKind kind,
                             std::span<const double> u, std::span<double> out);

/// out = dl/dy
void loss_target_gradient(std::span<const double> logits, std::span<const double> target, LossKind kind,
                          std::span<double> out);

}  // namespace logit_space

namespace detail {

BackwardResult lenet_backward(const LeNetModel& model, const Tensor& inputs, const Tensor& targets, LossKind kind,
                              const BackwardOptions& options);
Tensor lenet_forward(const LeNetModel& model, const Tensor& inputs);

}  // namespace detail

}  // namespace gradlab
