#include <cmath>

#include "latent/autoencoder.hpp"

namespace latent {

namespace {

// columns(c * k + j, t) = x(c, t * stride + j - pad), zero outside the signal.
Matrix im2col(const Matrix& x, int kernel, int stride, int pad, Eigen::Index out_len) {
  const Eigen::Index channels = x.rows();
  const Eigen::Index len = x.cols();
  Matrix cols = Matrix::Zero(channels * kernel, out_len);
  for (Eigen::Index t = 0; t < out_len; ++t) {
    const Eigen::Index start = t * stride - pad;
    for (Eigen::Index c = 0; c < channels; ++c) {
      for (int j = 0; j < kernel; ++j) {
        const Eigen::Index src = start + j;
        if (src >= 0 && src < len) cols(c * kernel + j, t) = x(c, src);
      }
    }
  }
  return cols;
}

// Adjoint of im2col.
Matrix col2im(const Matrix& cols, Eigen::Index channels, Eigen::Index len, int kernel,
              int stride, int pad) {
  Matrix x = Matrix::Zero(channels, len);
  for (Eigen::Index t = 0; t < cols.cols(); ++t) {
    const Eigen::Index start = t * stride - pad;
    for (Eigen::Index c = 0; c < channels; ++c) {
      for (int j = 0; j < kernel; ++j) {
        const Eigen::Index dst = start + j;
        if (dst >= 0 && dst < len) x(c, dst) += cols(c * kernel + j, t);
      }
    }
  }
  return x;
}

ConvLayer make_conv(int in_ch, int out_ch, int kernel, int stride, bool transposed,
                    SeededRng& rng) {
  ConvLayer layer;
  layer.in_channels = in_ch;
  layer.out_channels = out_ch;
  layer.kernel = kernel;
  layer.stride = stride;
  layer.padding = (kernel - stride) / 2;
  layer.transposed = transposed;
  const double limit =
      std::sqrt(6.0 / static_cast<double>((in_ch + out_ch) * kernel));
  layer.weight = transposed ? Matrix(in_ch, out_ch * kernel) : Matrix(out_ch, in_ch * kernel);
  for (Eigen::Index i = 0; i < layer.weight.size(); ++i) {
    layer.weight.data()[i] = rng.uniform(-limit, limit);
  }
  layer.bias = Vector::Zero(out_ch);
  return layer;
}

DenseLayer make_dense(Eigen::Index in, Eigen::Index out, Activation act, SeededRng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  DenseLayer layer{Matrix(out, in), Vector::Zero(out), act};
  for (Eigen::Index i = 0; i < layer.weight.size(); ++i) {
    layer.weight.data()[i] = rng.uniform(-limit, limit);
  }
  return layer;
}

Matrix apply(Activation a, const Matrix& m) {
  return m.unaryExpr([a](double t) { return detail::activate(a, t); });
}

Matrix apply_derivative(Activation a, const Matrix& pre, const Matrix& grad) {
  return grad.cwiseProduct(pre.unaryExpr([a](double t) { return detail::activate_derivative(a, t); }));
}

// Flatten channels x length in channel-major order.
Vector flatten(const Matrix& m) {
  Vector v(m.size());
  for (Eigen::Index c = 0; c < m.rows(); ++c) v.segment(c * m.cols(), m.cols()) = m.row(c).transpose();
  return v;
}

Matrix unflatten(const Vector& v, Eigen::Index channels) {
  const Eigen::Index len = v.size() / channels;
  Matrix m(channels, len);
  for (Eigen::Index c = 0; c < channels; ++c) m.row(c) = v.segment(c * len, len).transpose();
  return m;
}

struct ConvCache {
  std::vector<Matrix> conv_inputs;
  std::vector<Matrix> conv_columns;
  std::vector<Matrix> conv_pre;
};

}  // namespace

Eigen::Index ConvLayer::output_length(Eigen::Index input_length) const {
  if (transposed) return (input_length - 1) * stride - 2 * padding + kernel;
  return (input_length + 2 * padding - kernel) / stride + 1;
}

Eigen::Index Conv1dAutoencoder::bottleneck_length() const {
  Eigen::Index len = config.chunk_length;
  for (const auto& c : encoder_convs) len = c.output_length(len);
  return len;
}

Conv1dAutoencoder make_conv1d_autoencoder(const Conv1dConfig& config, SeededRng& rng) {
  if (config.channels.size() != 3) {
    throw Error(ErrorCode::kInvalidArgument, "conv autoencoder needs three channel widths");
  }
  if ((config.kernel - config.stride) % 2 != 0 || config.kernel < config.stride) {
    throw Error(ErrorCode::kInvalidArgument, "kernel - stride must be even and non-negative");
  }
  const Eigen::Index reduction = static_cast<Eigen::Index>(config.stride) * config.stride * config.stride;
  if (config.chunk_length % reduction != 0) {
    throw Error(ErrorCode::kInvalidArgument, "chunk length must be divisible by stride^3");
  }
  Conv1dAutoencoder model;
  model.config = config;
  int in_ch = 1;
  for (int ch : config.channels) {
    model.encoder_convs.push_back(make_conv(in_ch, ch, config.kernel, config.stride, false, rng));
    in_ch = ch;
  }
  const Eigen::Index flat = config.channels.back() * model.bottleneck_length();
  model.encoder_dense = make_dense(flat, config.latent_dim, Activation::kIdentity, rng);
  model.decoder_dense = make_dense(config.latent_dim, flat, Activation::kTanh, rng);
  const std::vector<int> widths = {config.channels[2], config.channels[1], config.channels[0], 1};
  for (std::size_t i = 0; i < 3; ++i) {
    model.decoder_convs.push_back(
        make_conv(widths[i], widths[i + 1], config.kernel, config.stride, true, rng));
  }
  return model;
}

namespace detail {

Matrix conv_forward(const ConvLayer& layer, const Matrix& x, Matrix* columns) {
  require_dim(x.rows(), layer.in_channels, "conv input channels");
  const Eigen::Index out_len = layer.output_length(x.cols());
  Matrix y;
  if (!layer.transposed) {
    Matrix cols = im2col(x, layer.kernel, layer.stride, layer.padding, out_len);
    y = layer.weight * cols;
    if (columns != nullptr) *columns = std::move(cols);
  } else {
    const Matrix cols = layer.weight.transpose() * x;
    y = col2im(cols, layer.out_channels, out_len, layer.kernel, layer.stride, layer.padding);
  }
  y.colwise() += layer.bias;
  return y;
}

Matrix conv_backward(const ConvLayer& layer, const Matrix& x, const Matrix& columns,
                     const Matrix& grad_out, Matrix& grad_weight, Vector& grad_bias) {
  grad_bias += grad_out.rowwise().sum();
  if (!layer.transposed) {
    grad_weight.noalias() += grad_out * columns.transpose();
    const Matrix grad_cols = layer.weight.transpose() * grad_out;
    return col2im(grad_cols, layer.in_channels, x.cols(), layer.kernel, layer.stride,
                  layer.padding);
  }
  const Matrix grad_cols = im2col(grad_out, layer.kernel, layer.stride, layer.padding, x.cols());
  grad_weight.noalias() += x * grad_cols.transpose();
  return layer.weight * grad_cols;
}

Vector conv1d_encode(const Conv1dAutoencoder& model, const Vector& x) {
  require_dim(x.size(), model.config.chunk_length, "conv autoencoder input");
  Matrix a = x.transpose();
  for (const auto& conv : model.encoder_convs) a = apply(Activation::kTanh, conv_forward(conv, a));
  return model.encoder_dense.weight * flatten(a) + model.encoder_dense.bias;
}

Vector conv1d_decode(const Conv1dAutoencoder& model, const Vector& h) {
  require_dim(h.size(), model.config.latent_dim, "conv autoencoder latent");
  const Vector flat = apply(Activation::kTanh,
                            model.decoder_dense.weight * h + model.decoder_dense.bias);
  Matrix a = unflatten(flat, model.config.channels.back());
  for (std::size_t i = 0; i < model.decoder_convs.size(); ++i) {
    a = conv_forward(model.decoder_convs[i], a);
    if (i + 1 < model.decoder_convs.size()) a = apply(Activation::kTanh, a);
  }
  return a.row(0).transpose();
}

std::vector<std::span<double>> conv1d_parameter_spans(Conv1dAutoencoder& model) {
  std::vector<std::span<double>> spans;
  auto add = [&spans](auto& m) {
    spans.emplace_back(m.data(), static_cast<std::size_t>(m.size()));
  };
  for (auto& c : model.encoder_convs) {
    add(c.weight);
    add(c.bias);
  }
  add(model.encoder_dense.weight);
  add(model.encoder_dense.bias);
  add(model.decoder_dense.weight);
  add(model.decoder_dense.bias);
  for (auto& c : model.decoder_convs) {
    add(c.weight);
    add(c.bias);
  }
  return spans;
}

LossGradient conv1d_loss_gradient(const Conv1dAutoencoder& model, std::span<const Vector> batch) {
  const std::size_t n_conv = model.encoder_convs.size();
  std::vector<Matrix> enc_gw, dec_gw;
  std::vector<Vector> enc_gb, dec_gb;
  for (const auto& c : model.encoder_convs) {
    enc_gw.push_back(Matrix::Zero(c.weight.rows(), c.weight.cols()));
    enc_gb.push_back(Vector::Zero(c.bias.size()));
  }
  for (const auto& c : model.decoder_convs) {
    dec_gw.push_back(Matrix::Zero(c.weight.rows(), c.weight.cols()));
    dec_gb.push_back(Vector::Zero(c.bias.size()));
  }
  Matrix ed_gw = Matrix::Zero(model.encoder_dense.weight.rows(), model.encoder_dense.weight.cols());
  Vector ed_gb = Vector::Zero(model.encoder_dense.bias.size());
  Matrix dd_gw = Matrix::Zero(model.decoder_dense.weight.rows(), model.decoder_dense.weight.cols());
  Vector dd_gb = Vector::Zero(model.decoder_dense.bias.size());

  const double scale = 1.0 / static_cast<double>(batch.size());
  double loss = 0.0;
  const int bottleneck_channels = model.config.channels.back();
  for (const Vector& x : batch) {
    require_dim(x.size(), model.config.chunk_length, "conv autoencoder input");
    // Encoder forward.
    ConvCache enc;
    Matrix a = x.transpose();
    for (const auto& conv : model.encoder_convs) {
      Matrix cols;
      Matrix pre = conv_forward(conv, a, &cols);
      enc.conv_inputs.push_back(a);
      enc.conv_columns.push_back(std::move(cols));
      a = apply(Activation::kTanh, pre);
      enc.conv_pre.push_back(std::move(pre));
    }
    const Vector enc_flat = flatten(a);
    const Vector h = model.encoder_dense.weight * enc_flat + model.encoder_dense.bias;
    // Decoder forward.
    const Vector dec_pre = model.decoder_dense.weight * h + model.decoder_dense.bias;
    Matrix d = unflatten(apply(Activation::kTanh, dec_pre), bottleneck_channels);
    ConvCache dec;
    for (std::size_t i = 0; i < n_conv; ++i) {
      Matrix pre = conv_forward(model.decoder_convs[i], d);
      dec.conv_inputs.push_back(d);
      d = i + 1 < n_conv ? apply(Activation::kTanh, pre) : pre;
      dec.conv_pre.push_back(std::move(pre));
    }
    const Vector diff = d.row(0).transpose() - x;
    loss += diff.squaredNorm() * scale;

    // Backward.
    Matrix g = (2.0 * scale) * diff.transpose();
    for (std::size_t i = n_conv; i-- > 0;) {
      if (i + 1 < n_conv) g = apply_derivative(Activation::kTanh, dec.conv_pre[i], g);
      g = conv_backward(model.decoder_convs[i], dec.conv_inputs[i], Matrix(), g, dec_gw[i],
                        dec_gb[i]);
    }
    Vector g_dec = apply_derivative(Activation::kTanh, dec_pre, flatten(g));
    dd_gw.noalias() += g_dec * h.transpose();
    dd_gb += g_dec;
    const Vector g_h = model.decoder_dense.weight.transpose() * g_dec;
    ed_gw.noalias() += g_h * enc_flat.transpose();
    ed_gb += g_h;
    g = unflatten(model.encoder_dense.weight.transpose() * g_h, bottleneck_channels);
    for (std::size_t i = n_conv; i-- > 0;) {
      g = apply_derivative(Activation::kTanh, enc.conv_pre[i], g);
      g = conv_backward(model.encoder_convs[i], enc.conv_inputs[i], enc.conv_columns[i], g,
                        enc_gw[i], enc_gb[i]);
    }
  }
  if (!std::isfinite(loss)) throw Error(ErrorCode::kNonFiniteLoss, "conv autoencoder loss");

  LossGradient out;
  out.loss = loss;
  auto push = [&out](const auto& m) {
    out.gradients.emplace_back(m.data(), m.data() + m.size());
  };
  for (std::size_t i = 0; i < n_conv; ++i) {
    push(enc_gw[i]);
    push(enc_gb[i]);
  }
  push(ed_gw);
  push(ed_gb);
  push(dd_gw);
  push(dd_gb);
  for (std::size_t i = 0; i < n_conv; ++i) {
    push(dec_gw[i]);
    push(dec_gb[i]);
  }
  return out;
}

}  // namespace detail

}  // namespace latent
