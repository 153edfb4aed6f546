#include "latent/implicit_likelihood.hpp"

#include <cmath>
#include <numeric>

namespace latent {

bool has_exact_volume(const ImplicitModel& model) {
  return std::holds_alternative<TiedAutoencoder>(model.mapping);
}

Eigen::Index base_dim(const BaseDistribution& base) {
  return std::visit([](const auto& b) { return b.dim(); }, base);
}

double base_log_pdf(const BaseDistribution& base, const Vector& h) {
  if (const auto* gmm = std::get_if<GaussianMixture>(&base)) return gmm_log_pdf(*gmm, h);
  const auto& hmm = std::get<GaussianHMM>(base);
  require_dim(h.size(), hmm.dim(), "HMM frame");
  return hmm_log_likelihood(hmm, SequenceEmbedding{{h}});
}

double model_log_pdf(const ImplicitModel& model, const Vector& x) {
  const auto* tied = std::get_if<TiedAutoencoder>(&model.mapping);
  if (tied == nullptr) {
    throw Error(ErrorCode::kExactVolumeUnavailable,
                "exact density needs an invertible mapping");
  }
  require_dim(x.size(), tied->net.output_dim(), "model input");
  const Vector h = net_inverse(tied->net, x);
  return base_log_pdf(model.base, h) - net_log_volume(tied->net, h);
}

double proxy_log_pdf(const ImplicitModel& model, const Vector& x) {
  require_dim(x.size(), input_dim(model.mapping), "model input");
  return base_log_pdf(model.base, encode(model.mapping, x));
}

SequenceLogPdf sequence_log_pdf(const ImplicitModel& model, const std::vector<Vector>& chunks) {
  const auto* hmm = std::get_if<GaussianHMM>(&model.base);
  if (hmm == nullptr) {
    throw Error(ErrorCode::kInvalidArgument, "sequence likelihood needs an HMM base");
  }
  SequenceEmbedding seq;
  for (const auto& c : chunks) {
    require_dim(c.size(), input_dim(model.mapping), "sequence chunk");
    seq.frames.push_back(encode(model.mapping, c));
  }
  SequenceLogPdf out;
  out.log_pdf = hmm_log_likelihood(*hmm, seq);
  if (const auto* tied = std::get_if<TiedAutoencoder>(&model.mapping)) {
    for (const auto& h : seq.frames) out.log_pdf -= net_log_volume(tied->net, h);
  } else {
    out.proxy = true;
  }
  return out;
}

ObjectiveGradient implicit_objective_gradient(const InvertibleNet& net,
                                              const GaussianMixture& base,
                                              const std::vector<Vector>& data) {
  if (!net.is_square()) {
    throw Error(ErrorCode::kDimensionMismatch, "implicit ML training needs a square net");
  }
  if (data.empty()) throw Error(ErrorCode::kInvalidArgument, "empty data");
  const double scale = 1.0 / static_cast<double>(data.size());
  ObjectiveGradient out;
  out.gradient = zero_gradient(net);
  double linear_volume = 0.0;
  for (const auto& stage : net.stages) linear_volume += linear_log_volume(stage.layer);

  std::vector<Vector> grad_pre(net.stages.size());
  for (const Vector& x : data) {
    const InverseTrace trace = net_inverse_trace(net, x);
    double value = gmm_log_pdf(base, trace.latent) - linear_volume;
    for (std::size_t s = 0; s < net.stages.size(); ++s) {
      const auto& act = net.stages[s].activation;
      const Vector& pre = trace.pre_activations[s];
      grad_pre[s].resize(pre.size());
      for (Eigen::Index i = 0; i < pre.size(); ++i) {
        value -= act.log_abs_deriv(pre[i]);
        grad_pre[s][i] = -scale * act.log_abs_deriv_grad(pre[i]);
      }
    }
    out.objective += scale * value;
    const Vector g_latent = scale * gmm_log_pdf_grad(base, trace.latent);
    net_inverse_backward(net, trace, g_latent, &grad_pre, out.gradient);
  }
  add_log_volume_weight_gradient(net, -1.0, out.gradient);
  return out;
}

ImplicitTrainResult train_implicit_ml(InvertibleNet net, GaussianMixture base,
                                      const std::vector<Vector>& data,
                                      const ImplicitTrainOptions& options, SeededRng& rng) {
  net.validate();
  if (!net.is_square()) {
    throw Error(ErrorCode::kDimensionMismatch, "implicit ML training needs a square net");
  }
  if (data.empty()) throw Error(ErrorCode::kInvalidArgument, "empty data");
  for (const auto& x : data) require_dim(x.size(), net.output_dim(), "training point");
  require_dim(base.dim(), net.input_dim(), "base dimension");

  auto embed = [&net](const std::vector<Vector>& xs) {
    std::vector<Vector> hs;
    hs.reserve(xs.size());
    for (const auto& x : xs) hs.push_back(net_inverse(net, x));
    return hs;
  };

  ImplicitTrainResult result;
  AdamState adam{options.adam, 0, {}, {}};
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t batch_size = options.batch_size == 0 ? data.size() : options.batch_size;
  std::vector<Vector> batch;

  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    if (options.learn_base && epoch % std::max(1, options.refit_every) == 0) {
      const std::vector<Vector> hs = embed(data);
      base = epoch == 0 ? gmm_fit_em(hs, options.components, rng, options.gmm).model
                        : gmm_fit_em_from(base, hs, rng, options.gmm).model;
    }
    if (batch_size < data.size()) rng.shuffle(order.begin(), order.end());
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
      const std::size_t end = std::min(order.size(), start + batch_size);
      batch.clear();
      for (std::size_t i = start; i < end; ++i) batch.push_back(data[order[i]]);
      const ObjectiveGradient og = implicit_objective_gradient(net, base, batch);
      if (!std::isfinite(og.objective)) {
        throw Error(ErrorCode::kNonFiniteObjective, "implicit likelihood became non-finite");
      }
      // Adam minimizes, so feed the negated ascent direction.
      GradientSet grads;
      std::vector<std::span<double>> params;
      for (std::size_t s = 0; s < net.stages.size(); ++s) {
        auto& layer = net.stages[s].layer;
        const auto& g = og.gradient[s];
        grads.emplace_back(g.weight.size());
        for (Eigen::Index i = 0; i < g.weight.size(); ++i) grads.back()[static_cast<std::size_t>(i)] = -g.weight.data()[i];
        grads.emplace_back(g.bias.size());
        for (Eigen::Index i = 0; i < g.bias.size(); ++i) grads.back()[static_cast<std::size_t>(i)] = -g.bias[i];
        params.emplace_back(layer.weight.data(), static_cast<std::size_t>(layer.weight.size()));
        params.emplace_back(layer.bias.data(), static_cast<std::size_t>(layer.bias.size()));
      }
      adam_step(adam, params, grads);
    }
    double mean = 0.0;
    const ImplicitModel model{TiedAutoencoder{net}, base};
    for (const auto& x : data) mean += model_log_pdf(model, x);
    mean /= static_cast<double>(data.size());
    if (!std::isfinite(mean)) {
      throw Error(ErrorCode::kNonFiniteObjective, "implicit likelihood became non-finite");
    }
    result.objective_trace.push_back(mean);
  }
  if (options.learn_base) {
    base = gmm_fit_em_from(base, embed(data), rng, options.gmm).model;
  }
  result.net = std::move(net);
  result.base = std::move(base);
  return result;
}

}  // namespace latent
