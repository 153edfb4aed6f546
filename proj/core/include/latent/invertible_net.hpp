#pragma once

#include <vector>

#include "latent/numerics.hpp"

namespace latent {

enum class NonlinearityKind { kIdentity, kTanh, kSigmoid };

// Piecewise-invertible activation: the original curve between -knot and
// +knot, linear tails of slope c outside. The knot is where the curve's
// slope equals c and the offsets make the function continuous, so the
// result is C^1 and strictly increasing on the whole real line.
class InvertibleNonlinearity {
 public:
  static constexpr double kDefaultSlope = 0.01;

  InvertibleNonlinearity() = default;
  explicit InvertibleNonlinearity(NonlinearityKind kind,
                                  double slope_c = kDefaultSlope);

  NonlinearityKind kind() const { return kind_; }
  double slope() const { return slope_c_; }
  double knot() const { return knot_; }
  /// Offset of the upper tail: f(t) = c*t + offset for t >= knot.
  double offset() const { return offset_hi_; }
  double lower_offset() const { return offset_lo_; }

  double eval(double t) const;
  double invert(double y) const;
  double derivative(double t) const;
  double log_abs_deriv(double t) const;
  /// d/dt log|f'(t)|.
  double log_abs_deriv_grad(double t) const;

 private:
  NonlinearityKind kind_ = NonlinearityKind::kIdentity;
  double slope_c_ = kDefaultSlope;
  double knot_ = 0.0;
  double offset_hi_ = 0.0;
  double offset_lo_ = 0.0;
  double y_knot_hi_ = 0.0;
  double y_knot_lo_ = 0.0;
};

/// Affine layer Wh + b whose inverse is the least-squares pre-image
/// (W^T W)^{-1} W^T (x - b). Requires out_dim >= in_dim and full column rank.
struct PseudoLinearLayer {
  Matrix weight;  // out_dim x in_dim
  Vector bias;    // out_dim

  Eigen::Index in_dim() const { return weight.cols(); }
  Eigen::Index out_dim() const { return weight.rows(); }
};

Vector linear_forward(const PseudoLinearLayer& layer, const Vector& h);

/// Factorization of W^T W with jitter 1e-10 * trace / dim.
SpdFactorization gram_factor(const PseudoLinearLayer& layer);

Vector linear_pseudo_inverse(const PseudoLinearLayer& layer, const Vector& x);
Vector linear_pseudo_inverse(const PseudoLinearLayer& layer,
                             const SpdFactorization& gram, const Vector& x);

/// 0.5 * log det(W^T W).
double linear_log_volume(const PseudoLinearLayer& layer);

struct InvertibleStage {
  PseudoLinearLayer layer;
  InvertibleNonlinearity activation;
};

// Stack of (linear, activation) stages. The default two-stage perceptron maps
// K -> hidden (tanh) -> out (sigmoid).
struct InvertibleNet {
  std::vector<InvertibleStage> stages;

  Eigen::Index input_dim() const;
  Eigen::Index output_dim() const;
  bool is_square() const;
  /// Throws DimensionMismatch when the chain is inconsistent or a layer is
  /// wider on its input side.
  void validate() const;
};

/// Glorot-uniform weights, zero biases: K -> hidden (tanh) -> out (sigmoid).
InvertibleNet make_invertible_perceptron(Eigen::Index latent_dim,
                                         Eigen::Index hidden_dim,
                                         Eigen::Index output_dim,
                                         SeededRng& rng);

Vector net_forward(const InvertibleNet& net, const Vector& h);
Vector net_inverse(const InvertibleNet& net, const Vector& x);

/// Log-volume expansion of the forward map at h: sum over stages of
/// 0.5 log det(W^T W) plus the activation log-derivatives at the
/// pre-activations reached from h. Likelihoods subtract it.
double net_log_volume(const InvertibleNet& net, const Vector& h);

// ---------------------------------------------------------------------------
// Gradient plumbing shared by tied-autoencoder and implicit-likelihood
// training. Gradients are laid out one (dW, db) pair per stage.

struct StageGradient {
  Matrix weight;
  Vector bias;
};

using NetGradient = std::vector<StageGradient>;

NetGradient zero_gradient(const InvertibleNet& net);

struct ForwardTrace {
  std::vector<Vector> inputs;           // input to each stage
  std::vector<Vector> pre_activations;  // W a + b for each stage
  Vector output;
};

ForwardTrace net_forward_trace(const InvertibleNet& net, const Vector& h);

/// Accumulates parameter gradients of a scalar loss into `grad` given the
/// loss gradient at the net's output; returns the gradient at the input.
Vector net_forward_backward(const InvertibleNet& net, const ForwardTrace& trace,
                            const Vector& grad_output, NetGradient& grad);

struct InverseTrace {
  // Indexed by stage (forward order). For stage s the inverse pass computes
  // pre = act^{-1}(stage_output[s]) and stage_input[s] = L^+(pre).
  std::vector<Vector> stage_output;
  std::vector<Vector> pre_activations;
  std::vector<Vector> stage_input;
  std::vector<SpdFactorization> grams;
  Vector latent;
};

InverseTrace net_inverse_trace(const InvertibleNet& net, const Vector& x);

/// Backward pass through the inverse chain. `grad_latent` is the loss
/// gradient at the recovered latent; `grad_pre` (optional, one entry per
/// stage) adds direct gradients at each stage's recovered pre-activation.
/// Returns the gradient at the observation x.
Vector net_inverse_backward(const InvertibleNet& net, const InverseTrace& trace,
                            const Vector& grad_latent,
                            const std::vector<Vector>* grad_pre,
                            NetGradient& grad);

/// Adds d/dW of 0.5 log det(W^T W) * scale for every stage.
void add_log_volume_weight_gradient(const InvertibleNet& net, double scale,
                                    NetGradient& grad);

}  // namespace latent
