#pragma once

#include <span>
#include <variant>
#include <vector>

#include "latent/invertible_net.hpp"
#include "latent/numerics.hpp"

namespace latent {

enum class Activation { kIdentity, kTanh, kSigmoid, kRelu };

struct DenseLayer {
  Matrix weight;  // out x in
  Vector bias;
  Activation activation = Activation::kIdentity;
};

/// Untied encoder/decoder stacks of dense layers.
struct DenseAutoencoder {
  std::vector<DenseLayer> encoder;
  std::vector<DenseLayer> decoder;

  Eigen::Index input_dim() const { return encoder.front().weight.cols(); }
  Eigen::Index latent_dim() const { return encoder.back().weight.rows(); }
};

/// input -> hidden... -> latent (identity) and the mirror back to input,
/// `hidden_activation` in between and `output_activation` on the last layer.
DenseAutoencoder make_dense_autoencoder(Eigen::Index input_dim,
                                        const std::vector<Eigen::Index>& hidden,
                                        Eigen::Index latent_dim,
                                        Activation hidden_activation,
                                        Activation output_activation, SeededRng& rng);

// One 1-D convolution (or transposed convolution) stage. Signals are laid out
// channels x length. A forward convolution keeps weight as
// out_ch x (in_ch * kernel); a transposed one as in_ch x (out_ch * kernel).
struct ConvLayer {
  int in_channels = 1;
  int out_channels = 1;
  int kernel = 1;
  int stride = 1;
  int padding = 0;
  bool transposed = false;
  Matrix weight;
  Vector bias;  // out_channels

  Eigen::Index output_length(Eigen::Index input_length) const;
};

struct Conv1dConfig {
  Eigen::Index chunk_length = 800;
  Eigen::Index latent_dim = 80;
  int kernel = 200;
  int stride = 2;
  std::vector<int> channels = {16, 32, 1};
};

// Three strided convolutions (tanh) and a dense projection to the latent
// code; the decoder mirrors it with a dense layer and three transposed
// convolutions, the last one linear.
struct Conv1dAutoencoder {
  Conv1dConfig config;
  std::vector<ConvLayer> encoder_convs;
  DenseLayer encoder_dense;
  DenseLayer decoder_dense;
  std::vector<ConvLayer> decoder_convs;

  Eigen::Index input_dim() const { return config.chunk_length; }
  Eigen::Index latent_dim() const { return config.latent_dim; }
  /// Length of the signal entering the dense projection.
  Eigen::Index bottleneck_length() const;
};

Conv1dAutoencoder make_conv1d_autoencoder(const Conv1dConfig& config, SeededRng& rng);

/// Encoder is the exact analytic inverse of the decoder; W and b are shared.
struct TiedAutoencoder {
  InvertibleNet net;

  Eigen::Index input_dim() const { return net.output_dim(); }
  Eigen::Index latent_dim() const { return net.input_dim(); }
};

using Autoencoder = std::variant<DenseAutoencoder, Conv1dAutoencoder, TiedAutoencoder>;

Eigen::Index input_dim(const Autoencoder& model);
Eigen::Index latent_dim(const Autoencoder& model);

Vector encode(const Autoencoder& model, const Vector& x);
Vector decode(const Autoencoder& model, const Vector& h);

std::vector<Vector> encode_dataset(const Autoencoder& model, const std::vector<Vector>& dataset);

/// Mean over the batch of the squared L2 reconstruction error.
double reconstruction_loss(const Autoencoder& model, std::span<const Vector> batch);

/// One gradient buffer per parameter tensor, aligned with parameter_spans().
using GradientSet = std::vector<std::vector<double>>;

std::vector<std::span<double>> parameter_spans(Autoencoder& model);

struct LossGradient {
  double loss = 0.0;
  GradientSet gradients;
};

/// Reconstruction loss and its gradient with respect to every parameter.
/// Throws NonFiniteLoss.
LossGradient backprop_gradients(const Autoencoder& model, std::span<const Vector> batch);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamConfig config;
  long step = 0;
  GradientSet first_moment;
  GradientSet second_moment;
};

/// Bias-corrected Adam update of `params` in place. Moments are sized on the
/// first call; later calls with different shapes throw ShapeMismatch.
void adam_step(AdamState& state, std::span<const std::span<double>> params,
               const GradientSet& grads);

struct TrainOptions {
  int epochs = 10;
  std::size_t batch_size = 128;
  AdamConfig adam;
};

struct TrainResult {
  double initial_loss = 0.0;
  /// Full-dataset loss after each epoch.
  std::vector<double> loss_history;
};

/// Raised when a loss turns non-finite mid-training; carries the history so far.
class TrainingDiverged : public Error {
 public:
  TrainingDiverged(const std::string& what, std::vector<double> history)
      : Error(ErrorCode::kNonFiniteLoss, what), history_(std::move(history)) {}
  const std::vector<double>& history() const { return history_; }

 private:
  std::vector<double> history_;
};

/// Minibatch Adam on the reconstruction loss. The shuffle order is drawn from
/// `rng`, so equal seeds reproduce the history bit for bit. If the final loss
/// ends above the initial one the initial parameters are restored.
TrainResult train_stage1(Autoencoder& model, const std::vector<Vector>& dataset,
                         const TrainOptions& options, SeededRng& rng);

namespace detail {
double activate(Activation a, double t);
double activate_derivative(Activation a, double t);
Matrix conv_forward(const ConvLayer& layer, const Matrix& x, Matrix* columns = nullptr);
/// Returns the gradient at the layer input and accumulates parameter grads.
Matrix conv_backward(const ConvLayer& layer, const Matrix& x, const Matrix& columns,
                     const Matrix& grad_out, Matrix& grad_weight, Vector& grad_bias);
Vector conv1d_encode(const Conv1dAutoencoder& model, const Vector& x);
Vector conv1d_decode(const Conv1dAutoencoder& model, const Vector& h);
LossGradient conv1d_loss_gradient(const Conv1dAutoencoder& model, std::span<const Vector> batch);
std::vector<std::span<double>> conv1d_parameter_spans(Conv1dAutoencoder& model);
}  // namespace detail

}  // namespace latent
