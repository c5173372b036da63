#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "gradlab/lbfgs.hpp"
#include "gradlab/models.hpp"
#include "gradlab/tensor.hpp"

namespace gradlab {

enum class AttackKind {
    TwoNorm,       ///< Euclidean gradient distance
    AngleVar,      ///< cosine distance + total variation
    AngleVarOrth,  ///< cosine distance + total variation + orthogonality
};

[[nodiscard]] std::string_view to_string(AttackKind k) noexcept;
[[nodiscard]] AttackKind parse_attack(std::string_view text);

enum class LabelMode {
    Auto,           ///< FixedInferred for SoftmaxCE with high-confidence inference, else Optimized
    FixedInferred,  ///< labels read off the bias gradient and held fixed
    Optimized,      ///< label logits optimised jointly with the inputs
};

[[nodiscard]] std::string_view to_string(LabelMode m) noexcept;
[[nodiscard]] LabelMode parse_label_mode(std::string_view text);

struct AttackConfig {
    AttackKind kind = AttackKind::TwoNorm;
    double lr = 0.05;
    std::size_t max_iters = 550;
    double tv_weight = 1e-2;
    double orth_weight = 1e-3;
    LabelMode label_mode = LabelMode::Auto;
    std::size_t history_size = 10;
    std::uint64_t seed = 0;
    std::uint64_t stream = 0;

    /// Longer, gentler optimiser schedule.
    static AttackConfig slow_profile(AttackKind kind);
};

/// What the eavesdropper knows: the model that produced the observed
/// bundle, the loss, the batch size and the input geometry.
struct AttackProblem {
    const Model* model = nullptr;
    const GradientBundle* observed = nullptr;
    LossKind loss = LossKind::SoftmaxCE;
    std::size_t batch_size = 1;
    std::size_t height = 0;
    std::size_t width = 0;
};

struct AttackResult {
    Tensor initial;    ///< [B x H x W] starting noise
    Tensor recovered;  ///< [B x H x W], clamped to [0, 1]
    Tensor label_probs;  ///< [B x C]
    std::vector<std::size_t> labels;  ///< argmax of label_probs
    LabelMode label_mode = LabelMode::FixedInferred;  ///< mode actually used
    std::vector<double> trace;
    std::size_t iterations = 0;
    Termination termination = Termination::MaxIterations;
    double final_objective = 0.0;
};

/// |a - b| over the flattened bundles.
[[nodiscard]] double objective_l2(const GradientBundle& candidate, const GradientBundle& observed);
/// 1 - cos(a, b), in [0, 2]. Throws std::domain_error on a zero bundle.
[[nodiscard]] double objective_cosine(const GradientBundle& candidate, const GradientBundle& observed);
/// Anisotropic total variation summed over a [B x H x W] batch or one [H x W] image.
[[nodiscard]] double tv_penalty(const Tensor& images);
/// Sum over sample pairs of squared cosine similarity; rows of a [B x ...] batch.
[[nodiscard]] double orth_penalty(const Tensor& batch);

/// The attack objective as a function of the flattened optimisation
/// variables: B candidate inputs, then (when labels are optimised) B rows of
/// label logits.
class AttackObjective {
  public:
    AttackObjective(const AttackProblem& problem, const AttackConfig& config, LabelMode mode,
                    std::vector<std::size_t> fixed_labels);

    /// Value and gradient. The TwoNorm value is the squared distance.
    double operator()(std::span<const double> z, std::span<double> grad) const;
    /// Value reported to users: the TwoNorm value is the plain distance.
    [[nodiscard]] double reported(std::span<const double> z) const;

    /// Objective with explicit inputs [B x ...] and targets [B x C].
    [[nodiscard]] double value_at(const Tensor& inputs, const Tensor& targets) const;

    [[nodiscard]] std::size_t input_variables() const { return b_ * n_; }
    [[nodiscard]] std::size_t size() const { return b_ * n_ + (optimize_labels_ ? b_ * c_ : 0); }
    [[nodiscard]] Tensor targets(std::span<const double> z) const;

  private:
    double match_term(const Tensor& inputs, const Tensor& targets, std::span<double> gx, std::span<double> gy,
                      bool want_grad) const;
    double regularizers(std::span<const double> x, std::span<double> gx, bool want_grad) const;

    AttackProblem problem_;
    AttackConfig config_;
    bool optimize_labels_;
    Tensor fixed_targets_;
    std::size_t b_, n_, c_;
    std::vector<double> observed_flat_;
    double observed_norm_;
};

[[nodiscard]] AttackResult run_attack(const AttackProblem& problem, const AttackConfig& config);

}  // namespace gradlab
