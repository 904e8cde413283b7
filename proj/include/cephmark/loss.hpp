#pragma once

#include "cephmark/codec.hpp"
#include "cephmark/ops.hpp"

namespace cephmark {

// Combined BCE + focal heatmap-regression objective:
//
//   loss = -(1/N) * sum( w_bce * H * log(Hp)
//                      + w_focal * alpha * (1 - Ht)^gamma * log(Ht) )
//   with Ht = Hp where H > gate, and 1 - Hp elsewhere.
//
// The sum runs over all channels and pixels. The BCE term is the positive
// half only; the symmetric (1-H)*log(1-Hp) counterpart is available behind
// full_bce for experimentation and is off by default.
struct LossConfig {
  double alpha = 0.25;        // focal balance weight alpha_t
  double gamma = 2.0;         // focal exponent
  double target_gate = 0.01;  // H above this counts as target
  double bce_weight = 0.5;
  double focal_weight = 0.5;
  bool full_bce = false;
  double clamp_eps = 1e-7;    // predictions pinned to [eps, 1-eps] before logs
  // optional epoch gate: focal term disabled before this epoch (0 = always
  // on, matching the printed formula; the paper's 60-epoch remark is an
  // observation, not a schedule)
  int focal_start_epoch = 0;

  void validate() const {
    if (!(gamma >= 0.0)) throw ConfigError("loss: gamma must be >= 0");
    if (focal_start_epoch < 0) throw ConfigError("loss: focal_start_epoch must be >= 0");
    if (!(alpha > 0.0 && alpha <= 1.0)) throw ConfigError("loss: alpha must be in (0, 1]");
    if (!(target_gate > 0.0 && target_gate < 1.0))
      throw ConfigError("loss: target gate must be in (0, 1)");
    if (!(clamp_eps > 0.0 && clamp_eps < 0.5)) throw ConfigError("loss: bad clamp epsilon");
  }
};

// Differentiable w.r.t. `predicted`; `target` is treated as constant.
template <typename T>
ag::Tensor<T> heatmap_loss(ag::Tape<T>* tape, const ag::Tensor<T>& predicted,
                           const ag::Tensor<T>& target, const LossConfig& cfg, int batch_size) {
  cfg.validate();
  if (batch_size < 1) throw ShapeError("heatmap_loss: batch size must be >= 1");
  if (predicted.shape() != target.shape())
    throw ShapeError("heatmap_loss: predicted " + shape_str(predicted.shape()) +
                     " vs target " + shape_str(target.shape()));

  const int64_t n = target.numel();
  const T eps = static_cast<T>(cfg.clamp_eps);

  // target-vs-background mask, constant w.r.t. the prediction
  ag::Tensor<T> mask = ag::Tensor<T>::zeros(target.shape());
  {
    const T gate = static_cast<T>(cfg.target_gate);
    const T* h = target.values().data();
    T* m = mask.values().data();
    for (int64_t i = 0; i < n; ++i) m[i] = h[i] > gate ? T{1} : T{};
  }

  auto hp = ag::clamp(tape, predicted, eps, T{1} - eps);
  auto one_minus_hp = ag::affine(tape, hp, T{-1}, T{1});
  auto inv_mask = ag::affine(tape, mask, T{-1}, T{1});
  auto ht = ag::add(tape, ag::mul(tape, mask, hp), ag::mul(tape, inv_mask, one_minus_hp));

  auto bce = ag::mul(tape, target, ag::log(tape, hp));
  if (cfg.full_bce) {
    ag::Tensor<T> inv_target = ag::affine(tape, target, T{-1}, T{1});
    bce = ag::add(tape, bce, ag::mul(tape, inv_target, ag::log(tape, one_minus_hp)));
  }
  auto focal = ag::mul(tape, ag::pow(tape, ag::affine(tape, ht, T{-1}, T{1}),
                                     static_cast<T>(cfg.gamma)),
                       ag::log(tape, ht));

  auto inner = ag::add(tape, ag::affine(tape, bce, static_cast<T>(cfg.bce_weight), T{}),
                       ag::affine(tape, focal, static_cast<T>(cfg.focal_weight * cfg.alpha), T{}));
  auto loss = ag::affine(tape, ag::sum(tape, inner), static_cast<T>(-1.0 / batch_size), T{});
  if (!loss.all_finite()) throw NumericError("heatmap_loss: non-finite loss value");
  return loss;
}

template <typename T>
ag::Tensor<T> heatmap_loss(ag::Tape<T>* tape, const HeatmapStack<T>& predicted,
                           const HeatmapStack<T>& target, const LossConfig& cfg, int batch_size) {
  if (predicted.frame != target.frame)
    throw ShapeError(std::string("heatmap_loss: frame mismatch ") + frame_name(predicted.frame) +
                     " vs " + frame_name(target.frame));
  return heatmap_loss(tape, predicted.channels, target.channels, cfg, batch_size);
}

}  // namespace cephmark
