#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "seatnet/rng.hpp"
#include "seatnet/tensor.hpp"

// Pure forward/backward kernels. Each backward takes whatever the forward
// saved and the upstream gradient, and returns gradients for every input.
namespace seatnet::ops {

enum class Padding { kValid, kSame };
enum class Mode { kTrain, kInfer };

struct ConvGeometry {
  std::size_t out_h = 0;
  std::size_t out_w = 0;
  std::size_t pad_top = 0;
  std::size_t pad_left = 0;
};

/// Output size and leading padding for one convolution. "same" pads so that
/// stride 1 preserves size (output = ceil(in / stride)); any odd pixel of
/// padding goes bottom/right.
ConvGeometry conv_geometry(std::size_t in_h, std::size_t in_w, std::size_t k_h,
                           std::size_t k_w, std::size_t stride, Padding padding);

// --- convolution -----------------------------------------------------------

/// Cross-correlation of a BCHW input with an OIKhKw kernel. `bias` may be an
/// empty tensor, meaning no bias.
Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias,
              std::size_t stride, Padding padding);

struct Conv2dGrads {
  Tensor input;  // empty when not requested
  Tensor kernel;
  Tensor bias;  // empty when the forward had no bias
};

Conv2dGrads conv2d_backward(const Tensor& input, const Tensor& kernel, bool has_bias,
                            std::size_t stride, Padding padding, const Tensor& grad_out,
                            bool need_input_grad = true);

/// Per-channel convolution with a C x 1 x Kh x Kw kernel.
Tensor depthwise_conv2d(const Tensor& input, const Tensor& kernel, std::size_t stride,
                        Padding padding);

struct DepthwiseGrads {
  Tensor input;
  Tensor kernel;
};

DepthwiseGrads depthwise_conv2d_backward(const Tensor& input, const Tensor& kernel,
                                         std::size_t stride, Padding padding,
                                         const Tensor& grad_out);

// --- batch normalization ---------------------------------------------------

struct BatchNormResult {
  Tensor output;
  Tensor mean;      // statistics actually used to normalize, per channel
  Tensor inv_std;
  Tensor updated_running_mean;
  Tensor updated_running_var;
};

/// Train mode normalizes with the batch statistics over (B, H, W) and blends
/// them into the running statistics: running = momentum * running +
/// (1 - momentum) * batch. Infer mode uses the running statistics and
/// returns them unchanged.
BatchNormResult batch_norm(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                           const Tensor& running_mean, const Tensor& running_var, Mode mode,
                           float epsilon, float stat_momentum);

struct BatchNormGrads {
  Tensor input;
  Tensor gamma;
  Tensor beta;
};

BatchNormGrads batch_norm_backward(const Tensor& input, const Tensor& gamma,
                                   const BatchNormResult& forward, Mode mode,
                                   const Tensor& grad_out);

// --- elementwise -------------------------------------------------------------

Tensor relu(const Tensor& input);
Tensor relu6(const Tensor& input);
/// Subgradient 0 at both kinks.
Tensor relu_backward(const Tensor& input, const Tensor& grad_out);
Tensor relu6_backward(const Tensor& input, const Tensor& grad_out);

Tensor add(const Tensor& a, const Tensor& b);

Tensor sigmoid(const Tensor& input);
Tensor sigmoid_backward(const Tensor& output, const Tensor& grad_out);

struct DropoutResult {
  Tensor output;
  Tensor scale;  // 0 for dropped elements, 1 / (1 - rate) for kept ones
};

/// Inverted dropout. One uniform draw per element in row-major order; an
/// element is dropped when its draw is below `rate`. Infer mode (or rate 0)
/// returns the input unchanged and consumes no randomness.
DropoutResult dropout(const Tensor& input, float rate, Mode mode, Rng& rng);
Tensor dropout_backward(const DropoutResult& forward, const Tensor& grad_out);

// --- pooling and dense -------------------------------------------------------

struct MaxPoolResult {
  Tensor output;                      // B x C
  std::vector<std::size_t> argmax;    // flat input index per output
};

/// Per (batch, channel) maximum; ties resolve to the first maximum in
/// row-major order.
MaxPoolResult global_max_pool(const Tensor& input);
Tensor global_max_pool_backward(const Shape& input_shape, const MaxPoolResult& forward,
                                const Tensor& grad_out);

/// x (B x F_in) -> x W^T + b with W shaped F_out x F_in.
Tensor dense(const Tensor& input, const Tensor& weights, const Tensor& bias);

struct DenseGrads {
  Tensor input;
  Tensor weights;
  Tensor bias;
};

DenseGrads dense_backward(const Tensor& input, const Tensor& weights, const Tensor& grad_out);

// --- loss --------------------------------------------------------------------

inline constexpr double kBceClamp = 1e-7;

/// Mean binary cross-entropy over the batch. Probabilities are clamped into
/// [clamp, 1 - clamp] first; labels must be exactly 0 or 1. Positive
/// examples are weighted by `positive_weight`.
double bce_loss(const Tensor& prob, const Tensor& label, double clamp = kBceClamp,
                double positive_weight = 1.0);
/// Gradient with respect to the (unclamped) probabilities; zero where the
/// clamp is active.
Tensor bce_loss_backward(const Tensor& prob, const Tensor& label, double grad_out,
                         double clamp = kBceClamp, double positive_weight = 1.0);

// --- optimizer ---------------------------------------------------------------

struct OptimizerState {
  float learning_rate = 1e-4f;
  float momentum = 0.9f;
  std::vector<Tensor> velocity;  // one per parameter; filled with zeros on first step
};

/// v <- momentum * v - lr * g ; w <- w + v, elementwise.
void sgd_momentum_step(std::span<Tensor* const> params, std::span<const Tensor* const> grads,
                       OptimizerState& state);

}  // namespace seatnet::ops
