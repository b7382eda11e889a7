#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "mkbd/common.hpp"
#include "mkbd/embedding_store.hpp"

namespace mkbd {

/// Trainable decision head: FC(d -> h), ReLU, FC(h -> 1), sigmoid.
/// Also used as the gradient container (same shapes).
struct HeadParameters {
  std::size_t d = 0;
  std::size_t h = 0;
  std::vector<double> w1;  // h x d, row-major
  std::vector<double> b1;  // h
  std::vector<double> w2;  // h
  double b2 = 0.0;

  static HeadParameters zeros(std::size_t d, std::size_t h);
  /// Throws ShapeError / NumericError when an invariant is broken.
  void validate() const;

  friend bool operator==(const HeadParameters&, const HeadParameters&) = default;
};

struct ForwardTrace {
  std::vector<double> delta;
  std::vector<double> pre_act;
  std::vector<double> hidden;
  double logit = 0.0;
  double prob = 0.5;
};

struct AdamState {
  HeadParameters first_moment;
  HeadParameters second_moment;
  std::uint64_t step = 0;

  static AdamState zeros_like(const HeadParameters& params);
};

struct AdamConfig {
  double lr = 1e-4;
  double weight_decay = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Probability clamp keeping the loss finite.
inline constexpr double kProbClamp = 1e-12;

enum class Decision : bool { kNo = false, kYes = true };

/// |x_i - y_i| per coordinate, widened to double.
std::vector<double> combine(std::span<const float> x, std::span<const float> y);
std::vector<double> combine(std::span<const double> x, std::span<const double> y);

/// prob is sigmoid(logit) clamped into [kProbClamp, 1 - kProbClamp].
ForwardTrace forward(const HeadParameters& params, std::span<const double> delta);
void forward_into(const HeadParameters& params, std::span<const double> delta, ForwardTrace& trace);

inline Decision decide(double prob) noexcept { return prob > 0.5 ? Decision::kYes : Decision::kNo; }

double sigmoid(double z) noexcept;

/// Summed binary cross-entropy, probabilities clamped.
double ce_loss(std::span<const double> probs, std::span<const std::uint8_t> labels);
double ce_term(double prob, bool label) noexcept;

/// Exact gradient of the per-pair CE term.
HeadParameters backward(const HeadParameters& params, const ForwardTrace& trace, bool label);

/// grads += scale * backward(params, trace, label), without materializing it.
void accumulate_backward(const HeadParameters& params, const ForwardTrace& trace, bool label, double scale,
                         HeadParameters& grads);

/// Decoupled weight decay on weights (not biases), then bias-corrected Adam.
void adam_step(HeadParameters& params, const HeadParameters& grads, AdamState& state, const AdamConfig& cfg);

/// He-normal weights, zero biases.
HeadParameters init_params(std::size_t d, std::size_t h, std::uint64_t seed);

struct Checkpoint {
  HeadParameters params;
  std::uint64_t step = 0;
  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

// "MKHD" | u32 version=1 | u32 d | u32 h | w1 | b1 | w2 | b2 (f64 LE) | u64 steps
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace mkbd
