#include "demos.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>

#include <spdlog/spdlog.h>

#include "data.hpp"
#include "latent/csv.hpp"

namespace latent::cli {
namespace fs = std::filesystem;

namespace {

double mean_log_pdf(const InvertibleNet& net, const GaussianMixture& base,
                    const std::vector<Vector>& xs) {
  const ImplicitModel model{Autoencoder(TiedAutoencoder{net}), base};
  double total = 0.0;
  for (const auto& x : xs) total += model_log_pdf(model, x);
  return total / static_cast<double>(xs.size());
}

std::vector<long> as_long(const std::vector<std::size_t>& v) {
  return std::vector<long>(v.begin(), v.end());
}

std::vector<long> as_long(const std::vector<int>& v) {
  return std::vector<long>(v.begin(), v.end());
}

std::vector<std::string> columns(const std::string& prefix, Eigen::Index n, const char* last) {
  std::vector<std::string> h;
  for (Eigen::Index i = 0; i < n; ++i) h.push_back(prefix + std::to_string(i));
  if (last) h.emplace_back(last);
  return h;
}

void write_csv(const fs::path& path, const std::vector<std::string>& header,
               const std::vector<Vector>& rows, const std::vector<long>* trailing) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
  write_matrix_csv(out, header, rows, trailing);
}

Fig1Run fit_linear(const std::string& name, const Fig1Result& r, bool learn_base,
                   const Fig1Options& options, SeededRng& rng) {
  InvertibleNet net;
  net.stages.push_back({{Matrix::Identity(2, 2), Vector::Zero(2)},
                        InvertibleNonlinearity(NonlinearityKind::kIdentity)});
  ImplicitTrainOptions train;
  train.learn_base = learn_base;
  train.epochs = options.epochs;
  train.components = options.components;
  train.adam.lr = options.lr;
  auto trained = train_implicit_ml(std::move(net), GaussianMixture::standard_normal(2),
                                   r.train.items, train, rng);
  Fig1Run run;
  run.name = name;
  run.net = std::move(trained.net);
  run.base = std::move(trained.base);
  run.trace = std::move(trained.objective_trace);
  run.train_log_likelihood = mean_log_pdf(run.net, run.base, r.train.items);
  run.test_log_likelihood = mean_log_pdf(run.net, run.base, r.test.items);
  return run;
}

}  // namespace

Fig1Result run_fig1(std::uint64_t seed, const Fig1Options& options) {
  const SeededRng root(seed);
  SeededRng data_rng = root.substream("data");
  Fig1Result r;
  r.train = gen_two_gaussian_toy(data_rng, options.n_train);
  r.test = gen_two_gaussian_toy(data_rng, options.n_test);

  SeededRng base_rng = root.substream("base");
  r.fixed = fit_linear("fixed_base", r, false, options, base_rng);
  r.learned = fit_linear("learned_base", r, true, options, base_rng);

  r.oracle = gmm_fit_em(r.train.items, options.components, base_rng).model;
  double total = 0.0;
  for (const auto& x : r.test.items) total += gmm_log_pdf(r.oracle, x);
  r.oracle_test_log_likelihood = total / static_cast<double>(r.test.size());
  return r;
}

void write_fig1(const Fig1Result& r, std::uint64_t seed, std::size_t n_generated,
                const fs::path& out_dir) {
  fs::create_directories(out_dir);
  const auto labels = as_long(r.train.labels);
  write_csv(out_dir / "fig1_data.csv", {"x0", "x1", "label"}, r.train.items, &labels);

  SeededRng sample_rng = SeededRng(seed).substream("sample");
  for (const Fig1Run* run : {&r.fixed, &r.learned}) {
    const auto draws = gmm_sample(run->base, sample_rng, n_generated);
    std::vector<Vector> generated;
    for (const auto& h : draws.points) generated.push_back(net_forward(run->net, h));
    std::vector<Vector> embeddings;
    for (const auto& x : r.train.items) embeddings.push_back(net_inverse(run->net, x));
    const auto comp = as_long(draws.labels);
    const std::string p = "fig1_" + run->name;
    write_csv(out_dir / (p + "_generated.csv"), {"x0", "x1", "component"}, generated, &comp);
    write_csv(out_dir / (p + "_latent.csv"), {"h0", "h1", "component"}, draws.points, &comp);
    write_csv(out_dir / (p + "_embeddings.csv"), {"h0", "h1", "label"}, embeddings, &labels);
  }

  std::ofstream out(out_dir / "fig1_summary.csv", std::ios::binary);
  out << "run,train_log_likelihood,test_log_likelihood\n";
  for (const Fig1Run* run : {&r.fixed, &r.learned}) {
    out << run->name << ',' << format_double(run->train_log_likelihood) << ','
        << format_double(run->test_log_likelihood) << '\n';
  }
  double oracle_train = 0.0;
  for (const auto& x : r.train.items) oracle_train += gmm_log_pdf(r.oracle, x);
  out << "oracle_gmm," << format_double(oracle_train / static_cast<double>(r.train.size())) << ','
      << format_double(r.oracle_test_log_likelihood) << '\n';
}

double majority_purity(const std::vector<std::size_t>& assignments, const std::vector<int>& labels,
                       std::size_t components) {
  std::vector<std::map<int, std::size_t>> counts(components);
  for (std::size_t i = 0; i < assignments.size(); ++i) ++counts[assignments[i]][labels[i]];
  std::size_t agree = 0;
  for (const auto& c : counts) {
    std::size_t best = 0;
    for (const auto& [label, n] : c) best = std::max(best, n);
    agree += best;
  }
  return assignments.empty() ? 0.0 : static_cast<double>(agree) / static_cast<double>(assignments.size());
}

Fig2Result run_fig2(std::uint64_t seed, const Fig2Options& options) {
  const SeededRng root(seed);
  SeededRng data_rng = root.substream("data");
  Fig2Result r;
  if (!options.mnist_images.empty()) {
    r.train = filter_classes(load_mnist_idx(options.mnist_images, options.mnist_labels), {0, 1});
  } else {
    r.train = gen_synthetic_digits(data_rng, options.n_synthetic);
  }
  if (r.train.size() < options.components) {
    throw Error(ErrorCode::kIoError, "too few 0/1 digits for the requested components");
  }

  SeededRng ae_rng = root.substream("ae");
  Autoencoder ae = make_dense_autoencoder(r.train.dim, options.hidden, 2, Activation::kTanh,
                                          Activation::kSigmoid, ae_rng);
  TrainOptions train;
  train.epochs = options.epochs;
  train.batch_size = options.batch_size;
  train.adam.lr = options.lr;
  const auto history = train_stage1(ae, r.train.items, train, ae_rng);
  spdlog::info("stage 1: reconstruction loss {} -> {}", history.initial_loss,
               history.loss_history.back());

  r.embeddings = encode_dataset(ae, r.train.items);
  SeededRng base_rng = root.substream("base");
  const auto fit = gmm_fit_em(r.embeddings, options.components, base_rng);
  for (const auto& h : r.embeddings) {
    Eigen::Index best = 0;
    gmm_responsibilities(fit.model, h).maxCoeff(&best);
    r.assignments.push_back(static_cast<std::size_t>(best));
  }
  r.purity = majority_purity(r.assignments, r.train.labels, options.components);

  SeededRng sample_rng = root.substream("sample");
  for (std::size_t m = 0; m < options.components; ++m) {
    for (std::size_t i = 0; i < options.samples_per_component; ++i) {
      r.latent_samples.push_back(sample_gaussian(sample_rng, fit.model.means()[m], fit.model.factor(m)));
      r.sample_components.push_back(m);
    }
  }
  for (const auto& h : r.latent_samples) {
    const Vector x = decode(ae, h);
    double best = std::numeric_limits<double>::infinity();
    for (const auto& t : r.train.items) best = std::min(best, (x - t).norm());
    r.decoded.push_back(x);
    r.nearest_train_distance.push_back(best);
  }

  std::vector<double> between;
  for (std::size_t i = 0; i < r.train.size(); ++i) {
    if (r.train.labels[i] != 0) continue;
    for (std::size_t j = 0; j < r.train.size(); ++j) {
      if (r.train.labels[j] == 1) between.push_back((r.train.items[i] - r.train.items[j]).norm());
    }
  }
  if (between.empty()) throw Error(ErrorCode::kIoError, "need both 0 and 1 digits");
  const auto k = static_cast<std::size_t>(0.95 * static_cast<double>(between.size() - 1));
  std::nth_element(between.begin(), between.begin() + static_cast<std::ptrdiff_t>(k), between.end());
  r.interclass_p95 = between[k];

  r.bundle.mapping = std::move(ae);
  r.bundle.base = fit.model;
  r.bundle.info["seed"] = seed;
  DataSpec spec;
  if (!options.mnist_images.empty()) {
    spec.source = "mnist";
    spec.path = options.mnist_images;
    spec.labels_path = options.mnist_labels;
    spec.classes = {0, 1};
  } else {
    spec.source = "digits";
    spec.n = options.n_synthetic;
  }
  r.bundle.info["data"] = to_json(spec);
  r.bundle.info["training"] = {{"epochs", options.epochs},
                               {"batch_size", options.batch_size},
                               {"lr", options.lr},
                               {"final_loss", history.loss_history.back()}};
  r.bundle.info["base_training"] = {{"kind", "gmm"}, {"components", options.components},
                                    {"iterations", fit.trace.size() - 1}};
  return r;
}

void write_fig2(const Fig2Result& r, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  const auto labels = as_long(r.train.labels);
  write_csv(out_dir / "fig2_embeddings.csv", {"h0", "h1", "label"}, r.embeddings, &labels);

  const auto& gmm = std::get<GaussianMixture>(*r.bundle.base);
  {
    std::ofstream out(out_dir / "fig2_ellipses.csv", std::ios::binary);
    out << "component,weight,mean0,mean1,cov00,cov01,cov11\n";
    for (std::size_t m = 0; m < gmm.size(); ++m) {
      const auto& mu = gmm.means()[m];
      const auto& c = gmm.covariances()[m];
      out << m << ',' << format_double(gmm.weights()[static_cast<Eigen::Index>(m)]) << ','
          << format_double(mu[0]) << ',' << format_double(mu[1]) << ',' << format_double(c(0, 0))
          << ',' << format_double(c(0, 1)) << ',' << format_double(c(1, 1)) << '\n';
    }
  }
  const auto comp = as_long(r.sample_components);
  write_csv(out_dir / "fig2_samples.csv", columns("x", r.train.dim, "component"), r.decoded, &comp);
  {
    std::ofstream out(out_dir / "fig2_summary.csv", std::ios::binary);
    const double max_nn = *std::max_element(r.nearest_train_distance.begin(), r.nearest_train_distance.end());
    out << "purity,max_nearest_train_distance,interclass_distance_p95\n"
        << format_double(r.purity) << ',' << format_double(max_nn) << ','
        << format_double(r.interclass_p95) << '\n';
  }
  save_bundle(r.bundle, out_dir / "fig2_bundle");
}

}  // namespace latent::cli
