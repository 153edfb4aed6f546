#include "latent/invertible_net.hpp"

#include <cmath>

namespace latent {

namespace {

double sigmoid(double t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

// log(1 + exp(t)) without overflow.
double softplus(double t) {
  return t > 0.0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t));
}

// Bisection for the positive t where a decreasing slope curve crosses c.
template <typename Slope>
double solve_knot(Slope slope, double c) {
  double lo = 0.0;
  double hi = 1.0;
  while (slope(hi) > c) hi *= 2.0;
  while (hi - lo > 1e-12) {
    const double mid = 0.5 * (lo + hi);
    (slope(mid) > c ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

InvertibleNonlinearity::InvertibleNonlinearity(NonlinearityKind kind,
                                               double slope_c)
    : kind_(kind), slope_c_(slope_c) {
  if (kind_ == NonlinearityKind::kIdentity) {
    slope_c_ = 1.0;
    return;
  }
  if (!(slope_c > 0.0 && slope_c < 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "activation slope must lie in (0, 1)");
  }
  if (kind_ == NonlinearityKind::kTanh) {
    knot_ = solve_knot([](double t) { return 1.0 - std::tanh(t) * std::tanh(t); },
                       slope_c);
    y_knot_hi_ = std::tanh(knot_);
    y_knot_lo_ = -y_knot_hi_;
    offset_hi_ = y_knot_hi_ - slope_c * knot_;
    offset_lo_ = -offset_hi_;
  } else {
    if (slope_c >= 0.25) {
      throw Error(ErrorCode::kInvalidArgument,
                  "sigmoid tail slope must be below the peak slope 0.25");
    }
    knot_ = solve_knot(
        [](double t) {
          const double s = sigmoid(t);
          return s * (1.0 - s);
        },
        slope_c);
    y_knot_hi_ = sigmoid(knot_);
    y_knot_lo_ = sigmoid(-knot_);
    offset_hi_ = y_knot_hi_ - slope_c * knot_;
    offset_lo_ = y_knot_lo_ + slope_c * knot_;
  }
}

double InvertibleNonlinearity::eval(double t) const {
  switch (kind_) {
    case NonlinearityKind::kIdentity:
      return t;
    case NonlinearityKind::kTanh:
    case NonlinearityKind::kSigmoid:
      if (t >= knot_) return slope_c_ * t + offset_hi_;
      if (t <= -knot_) return slope_c_ * t + offset_lo_;
      return kind_ == NonlinearityKind::kTanh ? std::tanh(t) : sigmoid(t);
  }
  return t;
}

double InvertibleNonlinearity::invert(double y) const {
  if (kind_ == NonlinearityKind::kIdentity) return y;
  if (y >= y_knot_hi_) return (y - offset_hi_) / slope_c_;
  if (y <= y_knot_lo_) return (y - offset_lo_) / slope_c_;
  if (kind_ == NonlinearityKind::kTanh) return std::atanh(y);
  return std::log(y) - std::log1p(-y);
}

double InvertibleNonlinearity::derivative(double t) const {
  if (kind_ == NonlinearityKind::kIdentity) return 1.0;
  if (t >= knot_ || t <= -knot_) return slope_c_;
  if (kind_ == NonlinearityKind::kTanh) {
    const double th = std::tanh(t);
    return 1.0 - th * th;
  }
  const double s = sigmoid(t);
  return s * (1.0 - s);
}

double InvertibleNonlinearity::log_abs_deriv(double t) const {
  if (kind_ == NonlinearityKind::kIdentity) return 0.0;
  if (t >= knot_ || t <= -knot_) return std::log(slope_c_);
  if (kind_ == NonlinearityKind::kTanh) {
    // log sech^2(t)
    const double a = std::abs(t);
    return 2.0 * (std::log(2.0) - a - std::log1p(std::exp(-2.0 * a)));
  }
  return -softplus(t) - softplus(-t);
}

double InvertibleNonlinearity::log_abs_deriv_grad(double t) const {
  if (kind_ == NonlinearityKind::kIdentity) return 0.0;
  if (t >= knot_ || t <= -knot_) return 0.0;
  if (kind_ == NonlinearityKind::kTanh) return -2.0 * std::tanh(t);
  return 1.0 - 2.0 * sigmoid(t);
}

Vector linear_forward(const PseudoLinearLayer& layer, const Vector& h) {
  require_dim(h.size(), layer.in_dim(), "linear_forward input");
  return layer.weight * h + layer.bias;
}

SpdFactorization gram_factor(const PseudoLinearLayer& layer) {
  const Matrix gram = layer.weight.transpose() * layer.weight;
  const double jitter = 1e-10 * gram.trace() / static_cast<double>(gram.rows());
  SpdFactorization f = cholesky(add_jitter(gram, jitter));
  const double min_pivot = f.lower().diagonal().array().square().minCoeff();
  if (!(min_pivot > 10.0 * jitter)) {
    throw Error(ErrorCode::kNotPositiveDefinite, "linear layer is rank deficient");
  }
  return f;
}

Vector linear_pseudo_inverse(const PseudoLinearLayer& layer,
                             const SpdFactorization& gram, const Vector& x) {
  require_dim(x.size(), layer.out_dim(), "linear_pseudo_inverse input");
  const Vector rhs = layer.weight.transpose() * (x - layer.bias);
  Vector z = solve_spd(gram, rhs);
  // One refinement step against the unjittered normal equations.
  const Vector residual = rhs - layer.weight.transpose() * (layer.weight * z);
  z += solve_spd(gram, residual);
  return z;
}

Vector linear_pseudo_inverse(const PseudoLinearLayer& layer, const Vector& x) {
  return linear_pseudo_inverse(layer, gram_factor(layer), x);
}

double linear_log_volume(const PseudoLinearLayer& layer) {
  const SpdFactorization gram = gram_factor(layer);
  const double jitter = 1e-10 * layer.weight.squaredNorm() / static_cast<double>(layer.in_dim());
  // First-order removal of the jitter: log det(G + eI) - e tr((G + eI)^{-1}).
  const Matrix l_inv = gram.lower().triangularView<Eigen::Lower>().solve(
      Matrix::Identity(gram.dim(), gram.dim()));
  return 0.5 * (log_det_spd(gram) - jitter * l_inv.squaredNorm());
}

Eigen::Index InvertibleNet::input_dim() const {
  return stages.empty() ? 0 : stages.front().layer.in_dim();
}

Eigen::Index InvertibleNet::output_dim() const {
  return stages.empty() ? 0 : stages.back().layer.out_dim();
}

bool InvertibleNet::is_square() const {
  for (const auto& s : stages) {
    if (s.layer.in_dim() != s.layer.out_dim()) return false;
  }
  return !stages.empty();
}

void InvertibleNet::validate() const {
  if (stages.empty()) {
    throw Error(ErrorCode::kDimensionMismatch, "invertible net has no stages");
  }
  for (std::size_t s = 0; s < stages.size(); ++s) {
    const auto& layer = stages[s].layer;
    require_dim(layer.bias.size(), layer.out_dim(), "stage bias");
    if (layer.out_dim() < layer.in_dim()) {
      throw Error(ErrorCode::kDimensionMismatch,
                  "invertible stage narrows its input");
    }
    if (s > 0) require_dim(layer.in_dim(), stages[s - 1].layer.out_dim(), "stage chain");
  }
}

InvertibleNet make_invertible_perceptron(Eigen::Index latent_dim,
                                         Eigen::Index hidden_dim,
                                         Eigen::Index output_dim,
                                         SeededRng& rng) {
  auto layer = [&rng](Eigen::Index in, Eigen::Index out) {
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    PseudoLinearLayer l{Matrix(out, in), Vector::Zero(out)};
    for (Eigen::Index i = 0; i < out; ++i) {
      for (Eigen::Index j = 0; j < in; ++j) l.weight(i, j) = rng.uniform(-limit, limit);
    }
    return l;
  };
  InvertibleNet net;
  net.stages.push_back({layer(latent_dim, hidden_dim),
                        InvertibleNonlinearity(NonlinearityKind::kTanh)});
  net.stages.push_back({layer(hidden_dim, output_dim),
                        InvertibleNonlinearity(NonlinearityKind::kSigmoid)});
  net.validate();
  return net;
}

ForwardTrace net_forward_trace(const InvertibleNet& net, const Vector& h) {
  require_dim(h.size(), net.input_dim(), "net_forward input");
  ForwardTrace trace;
  Vector a = h;
  for (const auto& stage : net.stages) {
    Vector pre = linear_forward(stage.layer, a);
    trace.inputs.push_back(std::move(a));
    a = pre.unaryExpr([&](double t) { return stage.activation.eval(t); });
    trace.pre_activations.push_back(std::move(pre));
  }
  trace.output = std::move(a);
  return trace;
}

Vector net_forward(const InvertibleNet& net, const Vector& h) {
  return net_forward_trace(net, h).output;
}

InverseTrace net_inverse_trace(const InvertibleNet& net, const Vector& x) {
  require_dim(x.size(), net.output_dim(), "net_inverse input");
  const std::size_t n = net.stages.size();
  InverseTrace trace;
  trace.stage_output.resize(n);
  trace.pre_activations.resize(n);
  trace.stage_input.resize(n);
  trace.grams.resize(n);
  Vector y = x;
  for (std::size_t s = n; s-- > 0;) {
    const auto& stage = net.stages[s];
    Vector pre = y.unaryExpr([&](double v) { return stage.activation.invert(v); });
    trace.grams[s] = gram_factor(stage.layer);
    Vector z = linear_pseudo_inverse(stage.layer, trace.grams[s], pre);
    trace.stage_output[s] = std::move(y);
    trace.pre_activations[s] = std::move(pre);
    trace.stage_input[s] = z;
    y = std::move(z);
  }
  trace.latent = std::move(y);
  return trace;
}

Vector net_inverse(const InvertibleNet& net, const Vector& x) {
  return net_inverse_trace(net, x).latent;
}

double net_log_volume(const InvertibleNet& net, const Vector& h) {
  const ForwardTrace trace = net_forward_trace(net, h);
  double total = 0.0;
  for (std::size_t s = 0; s < net.stages.size(); ++s) {
    const auto& stage = net.stages[s];
    total += linear_log_volume(stage.layer);
    for (double t : trace.pre_activations[s]) total += stage.activation.log_abs_deriv(t);
  }
  return total;
}

NetGradient zero_gradient(const InvertibleNet& net) {
  NetGradient g;
  for (const auto& s : net.stages) {
    g.push_back({Matrix::Zero(s.layer.out_dim(), s.layer.in_dim()),
                 Vector::Zero(s.layer.out_dim())});
  }
  return g;
}

Vector net_forward_backward(const InvertibleNet& net, const ForwardTrace& trace,
                            const Vector& grad_output, NetGradient& grad) {
  Vector g = grad_output;
  for (std::size_t s = net.stages.size(); s-- > 0;) {
    const auto& stage = net.stages[s];
    const Vector& pre = trace.pre_activations[s];
    Vector g_pre(pre.size());
    for (Eigen::Index i = 0; i < pre.size(); ++i) {
      g_pre[i] = g[i] * stage.activation.derivative(pre[i]);
    }
    grad[s].weight.noalias() += g_pre * trace.inputs[s].transpose();
    grad[s].bias += g_pre;
    g = stage.layer.weight.transpose() * g_pre;
  }
  return g;
}

Vector net_inverse_backward(const InvertibleNet& net, const InverseTrace& trace,
                            const Vector& grad_latent,
                            const std::vector<Vector>* grad_pre,
                            NetGradient& grad) {
  Vector g = grad_latent;
  for (std::size_t s = 0; s < net.stages.size(); ++s) {
    const auto& stage = net.stages[s];
    const Matrix& w = stage.layer.weight;
    const Vector& pre = trace.pre_activations[s];
    const Vector& z = trace.stage_input[s];
    // z = G^{-1} W^T (pre - b) with G = W^T W.
    const Vector a = solve_spd(trace.grams[s], g);
    const Vector wa = w * a;
    const Vector residual = pre - stage.layer.bias - w * z;
    grad[s].weight.noalias() += residual * a.transpose();
    grad[s].weight.noalias() -= wa * z.transpose();
    grad[s].bias -= wa;
    Vector g_pre = wa;
    if (grad_pre != nullptr) g_pre += (*grad_pre)[s];
    Vector g_y(pre.size());
    for (Eigen::Index i = 0; i < pre.size(); ++i) {
      g_y[i] = g_pre[i] / stage.activation.derivative(pre[i]);
    }
    g = std::move(g_y);
  }
  return g;
}

void add_log_volume_weight_gradient(const InvertibleNet& net, double scale,
                                    NetGradient& grad) {
  for (std::size_t s = 0; s < net.stages.size(); ++s) {
    const Matrix& w = net.stages[s].layer.weight;
    const SpdFactorization gram = gram_factor(net.stages[s].layer);
    // d/dW 0.5 log det(W^T W) = W (W^T W)^{-1}
    grad[s].weight += scale * solve_spd(gram, Matrix(w.transpose())).transpose();
  }
}

}  // namespace latent
