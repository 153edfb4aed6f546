#include "commands.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "bundle.hpp"
#include "data.hpp"
#include "demos.hpp"
#include "latent/audio.hpp"
#include "latent/csv.hpp"
#include "latent/kde.hpp"

namespace latent::cli {
namespace fs = std::filesystem;

namespace {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Globals {
  std::uint64_t seed = 0;
  std::string out_dir = ".";
  std::string config;
};

fs::path out_path(const Globals& g, const std::string& name) {
  fs::create_directories(g.out_dir);
  return fs::path(g.out_dir) / name;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
  return out;
}

template <typename T>
std::vector<T> parse_list(const std::string& text, const char* what) {
  std::vector<T> out;
  if (text.empty()) return out;
  for (const auto& field : split_csv_line(text)) {
    try {
      std::size_t used = 0;
      const long long v = std::stoll(field, &used);
      if (used != field.size()) throw std::invalid_argument(field);
      out.push_back(static_cast<T>(v));
    } catch (const std::exception&) {
      throw ConfigError(std::string("--") + what + ": '" + text + "' is not a comma-separated integer list");
    }
  }
  return out;
}

void write_trace(const fs::path& path, const char* column, const std::vector<double>& values,
                 int first_index) {
  auto out = open_out(path);
  out << "iteration," << column << '\n';
  for (std::size_t i = 0; i < values.size(); ++i) {
    out << static_cast<long>(i) + first_index << ',' << format_double(values[i]) << '\n';
  }
}

std::vector<std::string> dim_columns(const char* prefix, Eigen::Index n) {
  std::vector<std::string> h;
  for (Eigen::Index i = 0; i < n; ++i) h.push_back(prefix + std::to_string(i));
  return h;
}

// ---------------------------------------------------------------------------
// train-ae

struct TrainAeArgs {
  std::string data, synthetic, mnist_images, mnist_labels, classes;
  std::size_t n = 0;
  double test_fraction = 0.0;
  std::string arch = "dense";
  Eigen::Index latent = 2;
  std::string hidden = "64";
  std::string hidden_act = "tanh";
  std::string output_act = "identity";
  int kernel = 200, stride = 2;
  std::string channels = "16,32,1";
  int epochs = 10;
  std::size_t batch_size = 128;
  double lr = 1e-3;
  std::string bundle = "model";
};

void add_train_ae(CLI::App& app, TrainAeArgs& a) {
  auto* sub = app.add_subcommand("train-ae", "Stage 1: train an autoencoder and write a bundle");
  sub->add_option("--data", a.data, "Dataset cache (.csv or raw float64 with .json sidecar)");
  sub->add_option("--synthetic", a.synthetic, "Generated dataset instead of --data")->check(CLI::IsMember({"toy", "digits"}));
  sub->add_option("--mnist-images", a.mnist_images, "IDX image file");
  sub->add_option("--mnist-labels", a.mnist_labels, "IDX label file");
  sub->add_option("--classes", a.classes, "Comma-separated labels to keep");
  sub->add_option("--n", a.n, "Item count for --synthetic");
  sub->add_option("--test-fraction", a.test_fraction, "Held-out fraction written to test.csv")->check(CLI::Range(0.0, 0.9));
  sub->add_option("--arch", a.arch, "dense | conv1d | tied")->check(CLI::IsMember({"dense", "conv1d", "tied"}));
  sub->add_option("--latent", a.latent, "Latent dimension K")->check(CLI::PositiveNumber);
  sub->add_option("--hidden", a.hidden, "Hidden widths (dense: list; tied: one width)");
  sub->add_option("--hidden-act", a.hidden_act, "Dense hidden activation");
  sub->add_option("--output-act", a.output_act, "Dense output activation");
  sub->add_option("--kernel", a.kernel, "conv1d filter length")->check(CLI::PositiveNumber);
  sub->add_option("--stride", a.stride, "conv1d stride")->check(CLI::PositiveNumber);
  sub->add_option("--channels", a.channels, "conv1d channel widths");
  sub->add_option("--epochs", a.epochs)->check(CLI::PositiveNumber);
  sub->add_option("--batch-size", a.batch_size)->check(CLI::PositiveNumber);
  sub->add_option("--lr", a.lr)->check(CLI::PositiveNumber);
  sub->add_option("--bundle", a.bundle, "Bundle directory name under --out-dir");
}

DataSpec data_spec(const TrainAeArgs& a) {
  DataSpec spec;
  const int sources = !a.data.empty() + !a.synthetic.empty() + !a.mnist_images.empty();
  if (sources != 1) throw ConfigError("give exactly one of --data, --synthetic, --mnist-images");
  if (!a.data.empty()) {
    spec.source = "file";
    spec.path = a.data;
  } else if (!a.synthetic.empty()) {
    spec.source = a.synthetic;
    spec.n = a.n > 0 ? a.n : (a.synthetic == "toy" ? 2000 : 1000);
  } else {
    if (a.mnist_labels.empty()) throw ConfigError("--mnist-images needs --mnist-labels");
    spec.source = "mnist";
    spec.path = a.mnist_images;
    spec.labels_path = a.mnist_labels;
  }
  spec.classes = parse_list<int>(a.classes, "classes");
  spec.test_fraction = a.test_fraction;
  return spec;
}

int cmd_train_ae(const Globals& g, const TrainAeArgs& a) {
  const DataSpec spec = data_spec(a);
  const Activation hidden_act = parse_activation(a.hidden_act);
  const Activation output_act = parse_activation(a.output_act);
  const auto hidden = parse_list<Eigen::Index>(a.hidden, "hidden");
  const auto [train, test] = materialize(spec, g.seed);

  SeededRng rng = SeededRng(g.seed).substream("ae");
  Autoencoder model;
  if (a.arch == "dense") {
    model = make_dense_autoencoder(train.dim, hidden, a.latent, hidden_act, output_act, rng);
  } else if (a.arch == "tied") {
    if (hidden.size() != 1) throw ConfigError("--hidden takes a single width for --arch tied");
    model = TiedAutoencoder{make_invertible_perceptron(a.latent, hidden[0], train.dim, rng)};
  } else {
    Conv1dConfig cfg;
    cfg.chunk_length = train.dim;
    cfg.latent_dim = a.latent;
    cfg.kernel = a.kernel;
    cfg.stride = a.stride;
    cfg.channels = parse_list<int>(a.channels, "channels");
    model = make_conv1d_autoencoder(cfg, rng);
  }

  TrainOptions opts;
  opts.epochs = a.epochs;
  opts.batch_size = a.batch_size;
  opts.adam.lr = a.lr;
  const auto result = train_stage1(model, train.items, opts, rng);

  Bundle bundle;
  bundle.mapping = std::move(model);
  bundle.info["seed"] = g.seed;
  bundle.info["data"] = to_json(spec);
  bundle.info["training"] = {{"epochs", a.epochs},
                             {"batch_size", a.batch_size},
                             {"lr", a.lr},
                             {"initial_loss", result.initial_loss},
                             {"final_loss", result.loss_history.back()}};
  save_bundle(bundle, out_path(g, a.bundle));

  auto out = open_out(out_path(g, "loss.csv"));
  out << "epoch,loss\n";
  for (std::size_t i = 0; i < result.loss_history.size(); ++i) {
    out << i + 1 << ',' << format_double(result.loss_history[i]) << '\n';
  }
  if (test.size() > 0) save_dataset_csv(test, out_path(g, "test.csv"));
  std::cout << "final_loss " << format_double(result.loss_history.back()) << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------
// fit-base

struct FitBaseArgs {
  std::string bundle;
  std::string base = "gmm";
  std::size_t components = 3;
  int max_iters = 0;
  double tol = 1e-6;
};

void add_fit_base(CLI::App& app, FitBaseArgs& a) {
  auto* sub = app.add_subcommand("fit-base", "Stage 2: fit a GMM or HMM base on the embeddings");
  sub->add_option("--bundle", a.bundle, "Bundle directory")->required();
  sub->add_option("--base", a.base, "gmm | hmm")->check(CLI::IsMember({"gmm", "hmm"}));
  sub->add_option("--components", a.components, "Mixture components or HMM states")->check(CLI::PositiveNumber);
  sub->add_option("--max-iters", a.max_iters, "EM iteration cap (0 keeps the default)");
  sub->add_option("--tol", a.tol, "Relative improvement threshold")->check(CLI::PositiveNumber);
}

int cmd_fit_base(const Globals& g, const FitBaseArgs& a) {
  Bundle bundle = load_bundle(a.bundle);
  if (!bundle.info.contains("data") || !bundle.info.contains("seed")) {
    throw Error(ErrorCode::kUnsupportedFormat, "bundle: no training data record");
  }
  const auto train = materialize(data_spec_from_json(bundle.info["data"]),
                                 bundle.info["seed"].get<std::uint64_t>()).first;
  const auto embeddings = encode_dataset(bundle.mapping, train.items);
  SeededRng rng = SeededRng(g.seed).substream("base");

  std::vector<double> trace;
  if (a.base == "gmm") {
    GmmFitOptions opts;
    if (a.max_iters > 0) opts.max_iters = a.max_iters;
    opts.tol = a.tol;
    auto fit = gmm_fit_em(embeddings, a.components, rng, opts);
    trace = std::move(fit.trace);
    bundle.base = std::move(fit.model);
  } else {
    if (!std::holds_alternative<Conv1dAutoencoder>(bundle.mapping)) {
      spdlog::warn("fitting an HMM to a non-sequential bundle; items are treated as one ordered sequence");
    }
    HmmFitOptions opts;
    if (a.max_iters > 0) opts.max_iters = a.max_iters;
    opts.tol = a.tol;
    auto fit = hmm_fit_baum_welch({SequenceEmbedding{embeddings}}, a.components, rng, opts);
    trace = std::move(fit.trace);
    bundle.base = std::move(fit.model);
  }
  bundle.info["base_training"] = {{"kind", a.base},
                                  {"components", a.components},
                                  {"seed", g.seed},
                                  {"iterations", trace.size() - 1},
                                  {"final_objective", trace.back()}};
  save_bundle(bundle, a.bundle);
  write_trace(out_path(g, "trace.csv"), "objective", trace, 0);
  std::cout << "final_objective " << format_double(trace.back()) << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------
// sample / score

struct Drawn {
  std::vector<Vector> latent;
  std::vector<std::size_t> labels;
};

Drawn draw_latent(const BaseDistribution& base, SeededRng& rng, std::size_t n) {
  if (const auto* g = std::get_if<GaussianMixture>(&base)) {
    auto s = gmm_sample(*g, rng, n);
    return {std::move(s.points), std::move(s.labels)};
  }
  auto s = hmm_sample(std::get<GaussianHMM>(base), rng, n);
  return {std::move(s.sequence.frames), std::move(s.states)};
}

const BaseDistribution& require_base(const Bundle& b) {
  if (!b.base) throw Error(ErrorCode::kUnsupportedFormat, "bundle: no fitted base (run fit-base first)");
  return *b.base;
}

struct SampleArgs {
  std::string bundle;
  std::size_t n = 10;
};

void add_sample(CLI::App& app, SampleArgs& a) {
  auto* sub = app.add_subcommand("sample", "Draw from the base and decode");
  sub->add_option("--bundle", a.bundle, "Bundle directory")->required();
  sub->add_option("--n", a.n, "Samples (GMM) or frames (HMM)")->check(CLI::PositiveNumber);
}

int cmd_sample(const Globals& g, const SampleArgs& a) {
  const Bundle bundle = load_bundle(a.bundle);
  const auto& base = require_base(bundle);
  SeededRng rng = SeededRng(g.seed).substream("sample");
  if (std::holds_alternative<GaussianHMM>(base) && input_dim(bundle.mapping) == kChunkLength) {
    const ImplicitModel model{bundle.mapping, base};
    const auto gen = generate_audio(model, rng, a.n);
    save_wav(gen.signal, out_path(g, "samples.wav"));
    std::cout << "samples " << gen.signal.samples.size() << '\n';
    return kExitOk;
  }
  const Drawn d = draw_latent(base, rng, a.n);
  std::vector<Vector> decoded;
  for (const auto& h : d.latent) decoded.push_back(decode(bundle.mapping, h));
  auto header = dim_columns("x", input_dim(bundle.mapping));
  header.emplace_back("label");
  const std::vector<long> labels(d.labels.begin(), d.labels.end());
  auto out = open_out(out_path(g, "samples.csv"));
  write_matrix_csv(out, header, decoded, &labels);
  if (!all_finite(Eigen::Map<const Matrix>(decoded.front().data(), decoded.front().size(), 1))) {
    throw Error(ErrorCode::kNonFiniteLoss, "decoded samples are not finite");
  }
  std::cout << "samples " << decoded.size() << '\n';
  return kExitOk;
}

struct ScoreArgs {
  std::string bundle, test, name;
  std::size_t samples = 1000;
  double bandwidth = 0.1;
};

void add_score(CLI::App& app, ScoreArgs& a) {
  auto* sub = app.add_subcommand("score", "KDE score of a test set under bundle samples");
  sub->add_option("--bundle", a.bundle, "Bundle directory")->required();
  sub->add_option("--test", a.test, "Test dataset cache")->required();
  sub->add_option("--samples", a.samples, "Model samples per scoring run")->check(CLI::PositiveNumber);
  sub->add_option("--bandwidth", a.bandwidth, "Kernel variance")->check(CLI::PositiveNumber);
  sub->add_option("--name", a.name, "Model name in the output row");
}

int cmd_score(const Globals& g, const ScoreArgs& a) {
  const Bundle bundle = load_bundle(a.bundle);
  const auto& base = require_base(bundle);
  const auto test = load_dataset_file(a.test);
  SeededRng rng = SeededRng(g.seed).substream("sample");
  const Drawn d = draw_latent(base, rng, a.samples);
  std::vector<Vector> samples;
  for (const auto& h : d.latent) samples.push_back(decode(bundle.mapping, h));
  KdeConfig cfg;
  cfg.bandwidth_variance = a.bandwidth;
  cfg.samples_per_batch = a.samples;
  const std::string name = a.name.empty() ? fs::path(a.bundle).lexically_normal().filename().string() : a.name;
  const auto rows = kde_compare(test.items, {{name, samples}}, cfg);
  auto out = open_out(out_path(g, "kde.csv"));
  write_kde_csv(out, rows);
  std::cout << "log_kde_score " << format_double(rows[0].result.log_score) << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------
// demos

void add_fig1(CLI::App& app, Fig1Options& o) {
  auto* sub = app.add_subcommand("demo-fig1", "Fixed vs learned base on the two-Gaussian toy");
  sub->add_option("--n-train", o.n_train)->check(CLI::PositiveNumber);
  sub->add_option("--n-test", o.n_test)->check(CLI::PositiveNumber);
  sub->add_option("--epochs", o.epochs)->check(CLI::PositiveNumber);
  sub->add_option("--lr", o.lr)->check(CLI::PositiveNumber);
  sub->add_option("--components", o.components)->check(CLI::PositiveNumber);
  sub->add_option("--n-generated", o.n_generated)->check(CLI::PositiveNumber);
}

int cmd_fig1(const Globals& g, const Fig1Options& o) {
  const auto r = run_fig1(g.seed, o);
  write_fig1(r, g.seed, o.n_generated, g.out_dir);
  std::cout << "fixed_base_test_ll " << format_double(r.fixed.test_log_likelihood) << '\n'
            << "learned_base_test_ll " << format_double(r.learned.test_log_likelihood) << '\n'
            << "oracle_gmm_test_ll " << format_double(r.oracle_test_log_likelihood) << '\n';
  return kExitOk;
}

struct Fig2Args {
  Fig2Options options;
  std::string hidden = "128";
};

void add_fig2(CLI::App& app, Fig2Args& a) {
  auto* sub = app.add_subcommand("demo-fig2", "Two-dimensional embeddings of 0/1 digits with a GMM base");
  sub->add_option("--mnist-images", a.options.mnist_images, "IDX images (synthetic digits when absent)");
  sub->add_option("--mnist-labels", a.options.mnist_labels, "IDX labels");
  sub->add_option("--n", a.options.n_synthetic, "Synthetic digit count")->check(CLI::PositiveNumber);
  sub->add_option("--hidden", a.hidden, "Hidden widths");
  sub->add_option("--epochs", a.options.epochs)->check(CLI::PositiveNumber);
  sub->add_option("--batch-size", a.options.batch_size)->check(CLI::PositiveNumber);
  sub->add_option("--lr", a.options.lr)->check(CLI::PositiveNumber);
  sub->add_option("--components", a.options.components)->check(CLI::PositiveNumber);
  sub->add_option("--samples-per-component", a.options.samples_per_component)->check(CLI::PositiveNumber);
}

int cmd_fig2(const Globals& g, Fig2Args a) {
  if (a.options.mnist_images.empty() != a.options.mnist_labels.empty()) {
    throw ConfigError("--mnist-images and --mnist-labels go together");
  }
  a.options.hidden = parse_list<Eigen::Index>(a.hidden, "hidden");
  const auto r = run_fig2(g.seed, a.options);
  write_fig2(r, g.out_dir);
  std::cout << "purity " << format_double(r.purity) << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------
// audio

struct AudioPrepArgs {
  std::string wav;
  double synthetic_seconds = 0.0;
};

void add_audio_prep(CLI::App& app, AudioPrepArgs& a) {
  auto* sub = app.add_subcommand("audio-prep", "Chunk WAV files into a windowed frame dataset");
  sub->add_option("--wav", a.wav, "Comma-separated 8 kHz mono WAV files");
  sub->add_option("--synthetic-seconds", a.synthetic_seconds, "Generate a multi-tone signal instead")->check(CLI::PositiveNumber);
}

int cmd_audio_prep(const Globals& g, const AudioPrepArgs& a) {
  if (a.wav.empty() == (a.synthetic_seconds <= 0.0)) {
    throw ConfigError("give exactly one of --wav, --synthetic-seconds");
  }
  std::vector<AudioSignal> signals;
  if (a.synthetic_seconds > 0.0) {
    SeededRng rng = SeededRng(g.seed).substream("data");
    signals.push_back(synthetic_tone_sequence(rng, a.synthetic_seconds));
    save_wav(signals.back(), out_path(g, "synthetic.wav"));
  } else {
    for (const auto& path : split_csv_line(a.wav)) signals.push_back(load_wav(path));
  }
  LabeledDataset ds;
  ds.dim = kChunkLength;
  for (const auto& s : signals) {
    for (auto& c : chunk(s).chunks) ds.items.push_back(std::move(c));
  }
  save_dataset_raw(ds, out_path(g, "chunks.f64"));
  std::cout << "chunks " << ds.size() << '\n';
  return kExitOk;
}

struct AudioGenArgs {
  std::string bundle;
  std::size_t frames = 19;
};

void add_audio_gen(CLI::App& app, AudioGenArgs& a) {
  auto* sub = app.add_subcommand("audio-gen", "Generate audio from an HMM-base bundle");
  sub->add_option("--bundle", a.bundle, "Bundle directory")->required();
  sub->add_option("--frames", a.frames, "Number of HMM frames")->check(CLI::PositiveNumber);
}

int cmd_audio_gen(const Globals& g, const AudioGenArgs& a) {
  const Bundle bundle = load_bundle(a.bundle);
  const auto& base = require_base(bundle);
  if (!std::holds_alternative<GaussianHMM>(base)) {
    throw Error(ErrorCode::kUnsupportedFormat, "bundle: audio generation needs an HMM base");
  }
  if (input_dim(bundle.mapping) != kChunkLength) {
    throw Error(ErrorCode::kUnsupportedFormat, "bundle: mapping does not produce 800-sample chunks");
  }
  SeededRng rng = SeededRng(g.seed).substream("sample");
  const auto gen = generate_audio(ImplicitModel{bundle.mapping, base}, rng, a.frames);
  for (double v : gen.signal.samples) {
    if (!std::isfinite(v)) throw Error(ErrorCode::kNonFiniteLoss, "generated audio is not finite");
  }
  save_wav(gen.signal, out_path(g, "generated.wav"));
  auto out = open_out(out_path(g, "generated_states.csv"));
  out << "frame,state\n";
  for (std::size_t t = 0; t < gen.states.size(); ++t) out << t << ',' << gen.states[t] << '\n';
  std::cout << "samples " << gen.signal.samples.size() << '\n'
            << "clip_fraction " << format_double(gen.clip_fraction) << '\n';
  return kExitOk;
}

struct SpectrogramArgs {
  std::string wav;
  Eigen::Index fft_size = 256;
  Eigen::Index hop = 128;
};

void add_spectrogram(CLI::App& app, SpectrogramArgs& a) {
  auto* sub = app.add_subcommand("spectrogram", "Magnitude spectrogram of a WAV file as CSV");
  sub->add_option("--wav", a.wav, "8 kHz mono WAV")->required();
  sub->add_option("--fft-size", a.fft_size)->check(CLI::PositiveNumber);
  sub->add_option("--hop", a.hop)->check(CLI::PositiveNumber);
}

int cmd_spectrogram(const Globals& g, const SpectrogramArgs& a) {
  const auto signal = load_wav(a.wav);
  const Matrix grid = spectrogram(signal, a.fft_size, a.hop);
  auto out = open_out(out_path(g, "spectrogram.csv"));
  write_spectrogram_csv(out, grid);
  std::cout << "frames " << grid.cols() << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------
// JSON config: keys become flags placed ahead of the user's own, so the
// command line wins under the take-last policy.

std::string json_scalar(const Json& v, const std::string& key) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer()) return std::to_string(v.get<long long>());
  if (v.is_number_unsigned()) return std::to_string(v.get<unsigned long long>());
  if (v.is_number_float()) return format_double(v.get<double>());
  throw ConfigError("config key '" + key + "' must be a string or number");
}

void append_config_value(std::vector<std::string>& out, const CLI::Option* opt, const std::string& key,
                         const Json& value) {
  if (opt->get_type_size() == 0) {
    if (!value.is_boolean()) throw ConfigError("config key '" + key + "' must be a boolean");
    if (value.get<bool>()) out.push_back("--" + key);
    return;
  }
  if (value.is_array()) {
    std::string joined;
    for (const auto& item : value) joined += (joined.empty() ? "" : ",") + json_scalar(item, key);
    out.push_back("--" + key);
    out.push_back(joined);
    return;
  }
  out.push_back("--" + key);
  out.push_back(json_scalar(value, key));
}

const CLI::Option* find_long(const CLI::App& app, const std::string& key) {
  for (const auto* opt : app.get_options()) {
    for (const auto& name : opt->get_lnames()) {
      if (name == key) return opt;
    }
  }
  return nullptr;
}

std::vector<std::string> inject_config(const CLI::App& app, const std::vector<std::string>& args) {
  std::string config_path;
  std::size_t sub_pos = args.size();
  for (std::size_t i = 1; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) config_path = args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) config_path = args[i].substr(9);
    if (sub_pos == args.size() && args[i].rfind("-", 0) != 0) {
      for (const auto* sub : app.get_subcommands({})) {
        if (sub->get_name() == args[i]) sub_pos = i;
      }
    }
  }
  if (config_path.empty()) return args;

  std::ifstream in(config_path);
  if (!in) throw ConfigError("cannot read config file " + config_path);
  Json config;
  try {
    config = Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config file is not valid JSON: ") + e.what());
  }
  if (!config.is_object()) throw ConfigError("config file must hold a JSON object");

  const CLI::App* sub = sub_pos < args.size() ? app.get_subcommand(args[sub_pos]) : nullptr;
  std::vector<std::string> global_args, sub_args;
  auto place = [&](const std::string& key, const Json& value, bool section) {
    if (key == "config") throw ConfigError("config files cannot nest --config");
    if (const auto* opt = find_long(app, key)) return append_config_value(global_args, opt, key, value);
    if (sub) {
      if (const auto* opt = find_long(*sub, key)) return append_config_value(sub_args, opt, key, value);
    }
    if (section) throw ConfigError("unknown config key '" + key + "' for " + sub->get_name());
    for (const auto* other : app.get_subcommands({})) {
      if (find_long(*other, key)) return;  // belongs to a different command
    }
    throw ConfigError("unknown config key '" + key + "'");
  };
  for (const auto& [key, value] : config.items()) {
    if (value.is_object()) {
      if (!app.get_subcommands([&](const CLI::App* s) { return s->get_name() == key; }).size()) {
        throw ConfigError("unknown config section '" + key + "'");
      }
      continue;
    }
    place(key, value, false);
  }
  if (sub && config.contains(sub->get_name())) {
    for (const auto& [key, value] : config[sub->get_name()].items()) place(key, value, true);
  }

  std::vector<std::string> out = {args[0]};
  out.insert(out.end(), global_args.begin(), global_args.end());
  out.insert(out.end(), args.begin() + 1, args.begin() + static_cast<std::ptrdiff_t>(std::min(sub_pos + 1, args.size())));
  out.insert(out.end(), sub_args.begin(), sub_args.end());
  if (sub_pos + 1 < args.size()) out.insert(out.end(), args.begin() + static_cast<std::ptrdiff_t>(sub_pos + 1), args.end());
  return out;
}

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument:
      return kExitConfig;
    case ErrorCode::kNotPositiveDefinite:
    case ErrorCode::kNonFiniteLoss:
    case ErrorCode::kNonFiniteObjective:
    case ErrorCode::kDegenerateState:
      return kExitNumerical;
    default:
      return kExitData;
  }
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"Two-stage generative models with learned latent base distributions", "latent-base"};
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.require_subcommand(1);
  app.fallthrough();

  Globals g;
  app.add_option("--seed", g.seed, "Seed for every random sub-stream")->required();
  app.add_option("--out-dir", g.out_dir, "Directory for outputs");
  app.add_option("--config", g.config, "JSON file of flag values; command-line flags win");

  TrainAeArgs train_ae;
  FitBaseArgs fit_base;
  SampleArgs sample;
  ScoreArgs score;
  Fig1Options fig1;
  Fig2Args fig2;
  AudioPrepArgs audio_prep;
  AudioGenArgs audio_gen;
  SpectrogramArgs spec;
  add_train_ae(app, train_ae);
  add_fit_base(app, fit_base);
  add_sample(app, sample);
  add_score(app, score);
  add_fig1(app, fig1);
  add_fig2(app, fig2);
  add_audio_prep(app, audio_prep);
  add_audio_gen(app, audio_gen);
  add_spectrogram(app, spec);

  try {
    std::vector<std::string> argv = inject_config(app, args);
    std::reverse(argv.begin(), argv.end());
    argv.pop_back();  // program name
    app.parse(argv);
  } catch (const CLI::CallForHelp&) {
    std::cout << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    std::cout << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    std::cerr << "latent-base: " << e.what() << '\n';
    return kExitConfig;
  } catch (const ConfigError& e) {
    std::cerr << "latent-base: " << e.what() << '\n';
    return kExitConfig;
  }

  try {
    const std::string cmd = app.get_subcommands().front()->get_name();
    if (cmd == "train-ae") return cmd_train_ae(g, train_ae);
    if (cmd == "fit-base") return cmd_fit_base(g, fit_base);
    if (cmd == "sample") return cmd_sample(g, sample);
    if (cmd == "score") return cmd_score(g, score);
    if (cmd == "demo-fig1") return cmd_fig1(g, fig1);
    if (cmd == "demo-fig2") return cmd_fig2(g, fig2);
    if (cmd == "audio-prep") return cmd_audio_prep(g, audio_prep);
    if (cmd == "audio-gen") return cmd_audio_gen(g, audio_gen);
    return cmd_spectrogram(g, spec);
  } catch (const ConfigError& e) {
    std::cerr << "latent-base: " << e.what() << '\n';
    return kExitConfig;
  } catch (const Error& e) {
    std::cerr << "latent-base: " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "latent-base: " << e.what() << '\n';
    return kExitData;
  }
}

}  // namespace latent::cli
