#include "latent/autoencoder.hpp"

#include <cmath>
#include <numeric>

#include <spdlog/spdlog.h>

namespace latent {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

DenseLayer glorot_layer(Eigen::Index in, Eigen::Index out, Activation act, SeededRng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  DenseLayer layer{Matrix(out, in), Vector::Zero(out), act};
  for (Eigen::Index i = 0; i < layer.weight.size(); ++i) {
    layer.weight.data()[i] = rng.uniform(-limit, limit);
  }
  return layer;
}

Vector dense_apply(const std::vector<DenseLayer>& layers, const Vector& x) {
  Vector a = x;
  for (const auto& l : layers) {
    require_dim(a.size(), l.weight.cols(), "dense layer input");
    a = (l.weight * a + l.bias).unaryExpr([&](double t) { return detail::activate(l.activation, t); });
  }
  return a;
}

LossGradient dense_loss_gradient(const DenseAutoencoder& model, std::span<const Vector> batch) {
  std::vector<const DenseLayer*> layers;
  for (const auto& l : model.encoder) layers.push_back(&l);
  for (const auto& l : model.decoder) layers.push_back(&l);

  std::vector<Matrix> gw;
  std::vector<Vector> gb;
  for (const auto* l : layers) {
    gw.push_back(Matrix::Zero(l->weight.rows(), l->weight.cols()));
    gb.push_back(Vector::Zero(l->bias.size()));
  }
  const double scale = 1.0 / static_cast<double>(batch.size());
  double loss = 0.0;
  std::vector<Vector> inputs(layers.size());
  std::vector<Vector> pre(layers.size());
  for (const Vector& x : batch) {
    require_dim(x.size(), model.input_dim(), "autoencoder input");
    Vector a = x;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      inputs[i] = a;
      pre[i] = layers[i]->weight * a + layers[i]->bias;
      const Activation act = layers[i]->activation;
      a = pre[i].unaryExpr([act](double t) { return detail::activate(act, t); });
    }
    const Vector diff = a - x;
    loss += diff.squaredNorm() * scale;
    Vector g = (2.0 * scale) * diff;
    for (std::size_t i = layers.size(); i-- > 0;) {
      const Activation act = layers[i]->activation;
      const Vector g_pre = g.cwiseProduct(
          pre[i].unaryExpr([act](double t) { return detail::activate_derivative(act, t); }));
      gw[i].noalias() += g_pre * inputs[i].transpose();
      gb[i] += g_pre;
      g = layers[i]->weight.transpose() * g_pre;
    }
  }
  if (!std::isfinite(loss)) throw Error(ErrorCode::kNonFiniteLoss, "dense autoencoder loss");
  LossGradient out;
  out.loss = loss;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    out.gradients.emplace_back(gw[i].data(), gw[i].data() + gw[i].size());
    out.gradients.emplace_back(gb[i].data(), gb[i].data() + gb[i].size());
  }
  return out;
}

// Loss ||f(f^{-1}(x)) - x||^2 averaged over the batch; W and b receive
// gradient from both the inverse and the forward pass.
LossGradient tied_loss_gradient(const TiedAutoencoder& model, std::span<const Vector> batch) {
  NetGradient grad = zero_gradient(model.net);
  const double scale = 1.0 / static_cast<double>(batch.size());
  double loss = 0.0;
  for (const Vector& x : batch) {
    const InverseTrace inv = net_inverse_trace(model.net, x);
    const ForwardTrace fwd = net_forward_trace(model.net, inv.latent);
    const Vector diff = fwd.output - x;
    loss += diff.squaredNorm() * scale;
    const Vector g_latent = net_forward_backward(model.net, fwd, (2.0 * scale) * diff, grad);
    net_inverse_backward(model.net, inv, g_latent, nullptr, grad);
  }
  if (!std::isfinite(loss)) throw Error(ErrorCode::kNonFiniteLoss, "tied autoencoder loss");
  LossGradient out;
  out.loss = loss;
  for (const auto& g : grad) {
    out.gradients.emplace_back(g.weight.data(), g.weight.data() + g.weight.size());
    out.gradients.emplace_back(g.bias.data(), g.bias.data() + g.bias.size());
  }
  return out;
}

}  // namespace

namespace detail {

double activate(Activation a, double t) {
  switch (a) {
    case Activation::kIdentity: return t;
    case Activation::kTanh: return std::tanh(t);
    case Activation::kSigmoid: return t >= 0.0 ? 1.0 / (1.0 + std::exp(-t)) : std::exp(t) / (1.0 + std::exp(t));
    case Activation::kRelu: return t > 0.0 ? t : 0.0;
  }
  return t;
}

double activate_derivative(Activation a, double t) {
  switch (a) {
    case Activation::kIdentity: return 1.0;
    case Activation::kTanh: {
      const double th = std::tanh(t);
      return 1.0 - th * th;
    }
    case Activation::kSigmoid: {
      const double s = activate(a, t);
      return s * (1.0 - s);
    }
    case Activation::kRelu: return t > 0.0 ? 1.0 : 0.0;
  }
  return 1.0;
}

}  // namespace detail

DenseAutoencoder make_dense_autoencoder(Eigen::Index input_dim,
                                        const std::vector<Eigen::Index>& hidden,
                                        Eigen::Index latent_dim,
                                        Activation hidden_activation,
                                        Activation output_activation, SeededRng& rng) {
  DenseAutoencoder model;
  Eigen::Index in = input_dim;
  for (Eigen::Index h : hidden) {
    model.encoder.push_back(glorot_layer(in, h, hidden_activation, rng));
    in = h;
  }
  model.encoder.push_back(glorot_layer(in, latent_dim, Activation::kIdentity, rng));
  in = latent_dim;
  for (auto it = hidden.rbegin(); it != hidden.rend(); ++it) {
    model.decoder.push_back(glorot_layer(in, *it, hidden_activation, rng));
    in = *it;
  }
  model.decoder.push_back(glorot_layer(in, input_dim, output_activation, rng));
  return model;
}

Eigen::Index input_dim(const Autoencoder& model) {
  return std::visit([](const auto& m) { return m.input_dim(); }, model);
}

Eigen::Index latent_dim(const Autoencoder& model) {
  return std::visit([](const auto& m) { return m.latent_dim(); }, model);
}

Vector encode(const Autoencoder& model, const Vector& x) {
  return std::visit(
      overloaded{
          [&](const DenseAutoencoder& m) {
            require_dim(x.size(), m.input_dim(), "autoencoder input");
            return dense_apply(m.encoder, x);
          },
          [&](const Conv1dAutoencoder& m) { return detail::conv1d_encode(m, x); },
          [&](const TiedAutoencoder& m) { return net_inverse(m.net, x); },
      },
      model);
}

Vector decode(const Autoencoder& model, const Vector& h) {
  return std::visit(
      overloaded{
          [&](const DenseAutoencoder& m) {
            require_dim(h.size(), m.latent_dim(), "autoencoder latent");
            return dense_apply(m.decoder, h);
          },
          [&](const Conv1dAutoencoder& m) { return detail::conv1d_decode(m, h); },
          [&](const TiedAutoencoder& m) { return net_forward(m.net, h); },
      },
      model);
}

std::vector<Vector> encode_dataset(const Autoencoder& model, const std::vector<Vector>& dataset) {
  std::vector<Vector> out;
  out.reserve(dataset.size());
  for (const auto& x : dataset) out.push_back(encode(model, x));
  return out;
}

double reconstruction_loss(const Autoencoder& model, std::span<const Vector> batch) {
  if (batch.empty()) throw Error(ErrorCode::kInvalidArgument, "empty batch");
  double total = 0.0;
  for (const auto& x : batch) {
    require_dim(x.size(), input_dim(model), "autoencoder input");
    total += (decode(model, encode(model, x)) - x).squaredNorm();
  }
  return total / static_cast<double>(batch.size());
}

std::vector<std::span<double>> parameter_spans(Autoencoder& model) {
  auto add = [](std::vector<std::span<double>>& spans, auto& m) {
    spans.emplace_back(m.data(), static_cast<std::size_t>(m.size()));
  };
  return std::visit(
      overloaded{
          [&](DenseAutoencoder& m) {
            std::vector<std::span<double>> spans;
            for (auto& l : m.encoder) {
              add(spans, l.weight);
              add(spans, l.bias);
            }
            for (auto& l : m.decoder) {
              add(spans, l.weight);
              add(spans, l.bias);
            }
            return spans;
          },
          [&](Conv1dAutoencoder& m) { return detail::conv1d_parameter_spans(m); },
          [&](TiedAutoencoder& m) {
            std::vector<std::span<double>> spans;
            for (auto& s : m.net.stages) {
              add(spans, s.layer.weight);
              add(spans, s.layer.bias);
            }
            return spans;
          },
      },
      model);
}

LossGradient backprop_gradients(const Autoencoder& model, std::span<const Vector> batch) {
  if (batch.empty()) throw Error(ErrorCode::kInvalidArgument, "empty batch");
  return std::visit(
      overloaded{
          [&](const DenseAutoencoder& m) { return dense_loss_gradient(m, batch); },
          [&](const Conv1dAutoencoder& m) { return detail::conv1d_loss_gradient(m, batch); },
          [&](const TiedAutoencoder& m) { return tied_loss_gradient(m, batch); },
      },
      model);
}

void adam_step(AdamState& state, std::span<const std::span<double>> params,
               const GradientSet& grads) {
  if (grads.size() != params.size()) {
    throw Error(ErrorCode::kShapeMismatch, "gradient tensor count differs from parameters");
  }
  if (state.first_moment.empty()) {
    for (const auto& p : params) {
      state.first_moment.emplace_back(p.size(), 0.0);
      state.second_moment.emplace_back(p.size(), 0.0);
    }
  }
  if (state.first_moment.size() != params.size()) {
    throw Error(ErrorCode::kShapeMismatch, "optimizer state does not match parameters");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].size() != params[i].size() || state.first_moment[i].size() != params[i].size()) {
      throw Error(ErrorCode::kShapeMismatch, "gradient tensor shape differs from parameter");
    }
  }
  const AdamConfig& c = state.config;
  ++state.step;
  const double correction1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double correction2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    for (std::size_t j = 0; j < params[i].size(); ++j) {
      const double g = grads[i][j];
      m[j] = c.beta1 * m[j] + (1.0 - c.beta1) * g;
      v[j] = c.beta2 * v[j] + (1.0 - c.beta2) * g * g;
      const double m_hat = m[j] / correction1;
      const double v_hat = v[j] / correction2;
      params[i][j] -= c.lr * m_hat / (std::sqrt(v_hat) + c.eps);
    }
  }
}

TrainResult train_stage1(Autoencoder& model, const std::vector<Vector>& dataset,
                         const TrainOptions& options, SeededRng& rng) {
  if (dataset.empty()) throw Error(ErrorCode::kInvalidArgument, "empty dataset");
  if (options.epochs < 1) throw Error(ErrorCode::kInvalidArgument, "epochs must be >= 1");
  if (options.batch_size == 0) throw Error(ErrorCode::kInvalidArgument, "batch size must be >= 1");

  TrainResult result;
  result.initial_loss = reconstruction_loss(model, dataset);
  const Autoencoder initial = model;
  AdamState adam{options.adam, 0, {}, {}};
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<Vector> batch;
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    rng.shuffle(order.begin(), order.end());
    for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
      const std::size_t end = std::min(order.size(), start + options.batch_size);
      batch.clear();
      for (std::size_t i = start; i < end; ++i) batch.push_back(dataset[order[i]]);
      LossGradient lg;
      try {
        lg = backprop_gradients(model, batch);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::kNonFiniteLoss) throw;
        throw TrainingDiverged("training diverged in epoch " + std::to_string(epoch + 1), result.loss_history);
      }
      auto spans = parameter_spans(model);
      adam_step(adam, spans, lg.gradients);
    }
    double loss = 0.0;
    try {
      loss = reconstruction_loss(model, dataset);
    } catch (const Error& e) {
      // A step that destroys the layer rank is divergence too.
      if (e.code() != ErrorCode::kNotPositiveDefinite) throw;
      throw TrainingDiverged("training diverged in epoch " + std::to_string(epoch + 1), result.loss_history);
    }
    if (!std::isfinite(loss)) {
      throw TrainingDiverged("reconstruction loss became non-finite in epoch " + std::to_string(epoch + 1),
                             result.loss_history);
    }
    result.loss_history.push_back(loss);
  }
  if (result.loss_history.back() > result.initial_loss) {
    spdlog::warn("training ended above its initial loss; restoring initial parameters");
    model = initial;
  }
  return result;
}

}  // namespace latent
