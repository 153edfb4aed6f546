#include <benchmark/benchmark.h>

#include "latent/audio.hpp"
#include "latent/kde.hpp"

using namespace latent;

namespace {

GaussianMixture mixture(SeededRng& rng, std::size_t m, Eigen::Index k) {
  std::vector<Vector> means;
  std::vector<Matrix> covs;
  for (std::size_t i = 0; i < m; ++i) {
    means.push_back(rng.normal_vector(k));
    covs.push_back(Matrix::Identity(k, k) * rng.uniform(0.5, 2.0));
  }
  return GaussianMixture(Vector::Constant(static_cast<Eigen::Index>(m), 1.0 / static_cast<double>(m)),
                         means, covs);
}

void BM_GmmLogPdf(benchmark::State& state) {
  SeededRng rng(1);
  const auto k = state.range(0);
  const auto gmm = mixture(rng, 8, k);
  const Vector h = rng.normal_vector(k);
  for (auto _ : state) benchmark::DoNotOptimize(gmm_log_pdf(gmm, h));
}
BENCHMARK(BM_GmmLogPdf)->Arg(2)->Arg(16)->Arg(80);

void BM_HmmForward(benchmark::State& state) {
  SeededRng rng(2);
  const auto s = state.range(0);
  GaussianHMM hmm;
  hmm.initial = Vector::Constant(s, 1.0 / static_cast<double>(s));
  hmm.transitions = Matrix::Constant(s, s, 1.0 / static_cast<double>(s));
  for (Eigen::Index i = 0; i < s; ++i) {
    hmm.means.push_back(rng.normal_vector(80));
    hmm.variances.push_back(Vector::Ones(80));
  }
  SequenceEmbedding seq;
  for (int t = 0; t < 200; ++t) seq.frames.push_back(rng.normal_vector(80));
  for (auto _ : state) benchmark::DoNotOptimize(hmm_log_likelihood(hmm, seq));
}
BENCHMARK(BM_HmmForward)->Arg(4)->Arg(16);

void BM_NetInverse(benchmark::State& state) {
  SeededRng rng(3);
  const auto k = state.range(0);
  const auto net = make_invertible_perceptron(k, 4 * k, 16 * k, rng);
  const Vector x = net_forward(net, rng.normal_vector(k));
  for (auto _ : state) benchmark::DoNotOptimize(net_inverse(net, x));
}
BENCHMARK(BM_NetInverse)->Arg(2)->Arg(8)->Arg(32);

void BM_KdeScore(benchmark::State& state) {
  SeededRng rng(4);
  std::vector<Vector> test, samples;
  for (int i = 0; i < 500; ++i) test.push_back(rng.normal_vector(state.range(0)));
  for (int i = 0; i < 1000; ++i) samples.push_back(rng.normal_vector(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(kde_score(test, samples, KdeConfig{}));
}
BENCHMARK(BM_KdeScore)->Arg(2)->Arg(784);

void BM_ConvAutoencoderGradient(benchmark::State& state) {
  SeededRng rng(5);
  Conv1dConfig cfg;
  cfg.latent_dim = 24;
  cfg.kernel = static_cast<int>(state.range(0));
  cfg.channels = {8, 8, 1};
  const Autoencoder ae = make_conv1d_autoencoder(cfg, rng);
  std::vector<Vector> batch;
  for (int i = 0; i < 16; ++i) batch.push_back(0.3 * rng.normal_vector(kChunkLength));
  for (auto _ : state) benchmark::DoNotOptimize(backprop_gradients(ae, batch).loss);
}
BENCHMARK(BM_ConvAutoencoderGradient)->Arg(50)->Arg(200)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
