#include "bundle.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <functional>
#include <map>
#include <set>

namespace latent::cli {
namespace fs = std::filesystem;

namespace {

struct Tensor {
  std::string name;
  Matrix value;
};

Error bundle_error(const std::string& what) {
  return Error(ErrorCode::kUnsupportedFormat, "bundle: " + what);
}

const char* nonlinearity_name(NonlinearityKind k) {
  switch (k) {
    case NonlinearityKind::kIdentity: return "identity";
    case NonlinearityKind::kTanh: return "tanh";
    case NonlinearityKind::kSigmoid: return "sigmoid";
  }
  return "identity";
}

NonlinearityKind parse_nonlinearity(const std::string& name) {
  if (name == "identity") return NonlinearityKind::kIdentity;
  if (name == "tanh") return NonlinearityKind::kTanh;
  if (name == "sigmoid") return NonlinearityKind::kSigmoid;
  throw bundle_error("unknown nonlinearity '" + name + "'");
}

Matrix row(const Vector& v) { return v.transpose(); }

Matrix stack(const std::vector<Vector>& rows) {
  Matrix m(static_cast<Eigen::Index>(rows.size()), rows.empty() ? 0 : rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
  return m;
}

std::vector<Vector> unstack(const Matrix& m) {
  std::vector<Vector> out;
  for (Eigen::Index i = 0; i < m.rows(); ++i) out.push_back(m.row(i).transpose());
  return out;
}

Json layer_list(const std::vector<DenseLayer>& layers) {
  Json out = Json::array();
  for (const auto& l : layers) {
    out.push_back({{"in", l.weight.cols()}, {"out", l.weight.rows()}, {"activation", activation_name(l.activation)}});
  }
  return out;
}

void push_dense(std::vector<Tensor>& t, const std::string& prefix, const DenseLayer& l) {
  t.push_back({prefix + ".weight", l.weight});
  t.push_back({prefix + ".bias", row(l.bias)});
}

void push_conv(std::vector<Tensor>& t, const std::string& prefix, const ConvLayer& l) {
  t.push_back({prefix + ".weight", l.weight});
  t.push_back({prefix + ".bias", row(l.bias)});
}

Json describe_mapping(const Autoencoder& mapping, std::vector<Tensor>& tensors) {
  Json m;
  if (const auto* d = std::get_if<DenseAutoencoder>(&mapping)) {
    m["kind"] = "dense";
    m["input_dim"] = d->input_dim();
    m["latent_dim"] = d->latent_dim();
    m["encoder"] = layer_list(d->encoder);
    m["decoder"] = layer_list(d->decoder);
    for (std::size_t i = 0; i < d->encoder.size(); ++i) push_dense(tensors, "encoder." + std::to_string(i), d->encoder[i]);
    for (std::size_t i = 0; i < d->decoder.size(); ++i) push_dense(tensors, "decoder." + std::to_string(i), d->decoder[i]);
  } else if (const auto* c = std::get_if<Conv1dAutoencoder>(&mapping)) {
    m["kind"] = "conv1d";
    m["chunk_length"] = c->config.chunk_length;
    m["latent_dim"] = c->config.latent_dim;
    m["kernel"] = c->config.kernel;
    m["stride"] = c->config.stride;
    m["channels"] = c->config.channels;
    for (std::size_t i = 0; i < c->encoder_convs.size(); ++i) push_conv(tensors, "encoder_conv." + std::to_string(i), c->encoder_convs[i]);
    push_dense(tensors, "encoder_dense", c->encoder_dense);
    push_dense(tensors, "decoder_dense", c->decoder_dense);
    for (std::size_t i = 0; i < c->decoder_convs.size(); ++i) push_conv(tensors, "decoder_conv." + std::to_string(i), c->decoder_convs[i]);
  } else {
    const auto& t = std::get<TiedAutoencoder>(mapping);
    m["kind"] = "tied";
    m["input_dim"] = t.input_dim();
    m["latent_dim"] = t.latent_dim();
    Json stages = Json::array();
    for (std::size_t i = 0; i < t.net.stages.size(); ++i) {
      const auto& s = t.net.stages[i];
      stages.push_back({{"in", s.layer.in_dim()},
                        {"out", s.layer.out_dim()},
                        {"nonlinearity", nonlinearity_name(s.activation.kind())},
                        {"slope", s.activation.slope()}});
      tensors.push_back({"stage." + std::to_string(i) + ".weight", s.layer.weight});
      tensors.push_back({"stage." + std::to_string(i) + ".bias", row(s.layer.bias)});
    }
    m["stages"] = stages;
  }
  return m;
}

Json describe_base(const BaseDistribution& base, std::vector<Tensor>& tensors) {
  Json b;
  if (const auto* g = std::get_if<GaussianMixture>(&base)) {
    b["kind"] = "gmm";
    b["components"] = g->size();
    b["dim"] = g->dim();
    tensors.push_back({"base.weights", row(g->weights())});
    tensors.push_back({"base.means", stack(g->means())});
    for (std::size_t k = 0; k < g->size(); ++k) {
      tensors.push_back({"base.covariance." + std::to_string(k), g->covariances()[k]});
    }
  } else {
    const auto& h = std::get<GaussianHMM>(base);
    b["kind"] = "hmm";
    b["states"] = h.num_states();
    b["dim"] = h.dim();
    tensors.push_back({"base.initial", row(h.initial)});
    tensors.push_back({"base.transitions", h.transitions});
    tensors.push_back({"base.means", stack(h.means)});
    tensors.push_back({"base.variances", stack(h.variances)});
  }
  return b;
}

void write_tensor(const fs::path& path, const Matrix& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
  // Row-major little-endian float64.
  std::vector<char> bytes(static_cast<std::size_t>(m.size()) * 8);
  std::size_t at = 0;
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      std::uint64_t bits;
      const double v = m(r, c);
      std::memcpy(&bits, &v, 8);
      for (int b = 0; b < 8; ++b) bytes[at++] = static_cast<char>((bits >> (8 * b)) & 0xFF);
    }
  }
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::kIoError, "short write to " + path.string());
}

Matrix read_tensor(const fs::path& path, Eigen::Index rows, Eigen::Index cols) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "missing tensor file " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), {});
  if (bytes.size() != static_cast<std::size_t>(rows * cols) * 8) {
    throw bundle_error(path.filename().string() + " has " + std::to_string(bytes.size()) +
                       " bytes, expected " + std::to_string(rows * cols * 8));
  }
  Matrix m(rows, cols);
  std::size_t at = 0;
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      std::uint64_t bits = 0;
      for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[at++])) << (8 * b);
      double v;
      std::memcpy(&v, &bits, 8);
      m(r, c) = v;
    }
  }
  return m;
}

class TensorStore {
 public:
  explicit TensorStore(std::map<std::string, Matrix> tensors) : tensors_(std::move(tensors)) {}

  Matrix take(const std::string& name, Eigen::Index rows, Eigen::Index cols) {
    auto it = tensors_.find(name);
    if (it == tensors_.end()) throw bundle_error("missing tensor '" + name + "'");
    if (it->second.rows() != rows || it->second.cols() != cols) {
      throw bundle_error("tensor '" + name + "' has the wrong shape");
    }
    Matrix m = std::move(it->second);
    tensors_.erase(it);
    return m;
  }
  Vector take_vector(const std::string& name, Eigen::Index n) {
    return take(name, 1, n).transpose();
  }
  void expect_empty() const {
    if (!tensors_.empty()) throw bundle_error("unreferenced tensor '" + tensors_.begin()->first + "'");
  }

 private:
  std::map<std::string, Matrix> tensors_;
};

template <typename T>
T get(const Json& j, const char* key) {
  if (!j.contains(key)) throw bundle_error(std::string("manifest lacks '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw bundle_error(std::string("manifest field '") + key + "' has the wrong type");
  }
}

void load_dense(const Json& list, const std::string& prefix, std::vector<DenseLayer>& out,
                TensorStore& store) {
  for (std::size_t i = 0; i < list.size(); ++i) {
    const auto in = get<Eigen::Index>(list[i], "in");
    const auto o = get<Eigen::Index>(list[i], "out");
    const std::string p = prefix + "." + std::to_string(i);
    out.push_back({store.take(p + ".weight", o, in), store.take_vector(p + ".bias", o),
                   parse_activation(get<std::string>(list[i], "activation"))});
  }
}

void fill_dense(DenseLayer& l, const std::string& prefix, TensorStore& store) {
  l.weight = store.take(prefix + ".weight", l.weight.rows(), l.weight.cols());
  l.bias = store.take_vector(prefix + ".bias", l.bias.size());
}

void fill_conv(ConvLayer& l, const std::string& prefix, TensorStore& store) {
  l.weight = store.take(prefix + ".weight", l.weight.rows(), l.weight.cols());
  l.bias = store.take_vector(prefix + ".bias", l.bias.size());
}

Autoencoder load_mapping(const Json& m, TensorStore& store) {
  const auto kind = get<std::string>(m, "kind");
  if (kind == "dense") {
    DenseAutoencoder d;
    load_dense(get<Json>(m, "encoder"), "encoder", d.encoder, store);
    load_dense(get<Json>(m, "decoder"), "decoder", d.decoder, store);
    if (d.encoder.empty() || d.decoder.empty()) throw bundle_error("dense mapping without layers");
    return d;
  }
  if (kind == "conv1d") {
    Conv1dConfig cfg;
    cfg.chunk_length = get<Eigen::Index>(m, "chunk_length");
    cfg.latent_dim = get<Eigen::Index>(m, "latent_dim");
    cfg.kernel = get<int>(m, "kernel");
    cfg.stride = get<int>(m, "stride");
    cfg.channels = get<std::vector<int>>(m, "channels");
    SeededRng unused(0);
    Conv1dAutoencoder c = make_conv1d_autoencoder(cfg, unused);
    for (std::size_t i = 0; i < c.encoder_convs.size(); ++i) fill_conv(c.encoder_convs[i], "encoder_conv." + std::to_string(i), store);
    fill_dense(c.encoder_dense, "encoder_dense", store);
    fill_dense(c.decoder_dense, "decoder_dense", store);
    for (std::size_t i = 0; i < c.decoder_convs.size(); ++i) fill_conv(c.decoder_convs[i], "decoder_conv." + std::to_string(i), store);
    return c;
  }
  if (kind == "tied") {
    TiedAutoencoder t;
    const Json stages = get<Json>(m, "stages");
    for (std::size_t i = 0; i < stages.size(); ++i) {
      const auto in = get<Eigen::Index>(stages[i], "in");
      const auto out = get<Eigen::Index>(stages[i], "out");
      const std::string p = "stage." + std::to_string(i);
      PseudoLinearLayer layer{store.take(p + ".weight", out, in), store.take_vector(p + ".bias", out)};
      t.net.stages.push_back({std::move(layer),
                              InvertibleNonlinearity(parse_nonlinearity(get<std::string>(stages[i], "nonlinearity")),
                                                     get<double>(stages[i], "slope"))});
    }
    t.net.validate();
    return t;
  }
  throw bundle_error("unknown mapping kind '" + kind + "'");
}

BaseDistribution load_base(const Json& b, TensorStore& store) {
  const auto kind = get<std::string>(b, "kind");
  const auto dim = get<Eigen::Index>(b, "dim");
  if (kind == "gmm") {
    const auto m = get<Eigen::Index>(b, "components");
    const Vector w = store.take_vector("base.weights", m);
    const auto means = unstack(store.take("base.means", m, dim));
    std::vector<Matrix> covs;
    for (Eigen::Index k = 0; k < m; ++k) covs.push_back(store.take("base.covariance." + std::to_string(k), dim, dim));
    return GaussianMixture(w, means, covs);
  }
  if (kind == "hmm") {
    const auto s = get<Eigen::Index>(b, "states");
    GaussianHMM h;
    h.initial = store.take_vector("base.initial", s);
    h.transitions = store.take("base.transitions", s, s);
    h.means = unstack(store.take("base.means", s, dim));
    h.variances = unstack(store.take("base.variances", s, dim));
    h.validate();
    return h;
  }
  throw bundle_error("unknown base kind '" + kind + "'");
}

}  // namespace

const char* activation_name(Activation a) {
  switch (a) {
    case Activation::kIdentity: return "identity";
    case Activation::kTanh: return "tanh";
    case Activation::kSigmoid: return "sigmoid";
    case Activation::kRelu: return "relu";
  }
  return "identity";
}

Activation parse_activation(const std::string& name) {
  if (name == "identity") return Activation::kIdentity;
  if (name == "tanh") return Activation::kTanh;
  if (name == "sigmoid") return Activation::kSigmoid;
  if (name == "relu") return Activation::kRelu;
  throw Error(ErrorCode::kInvalidArgument, "unknown activation '" + name + "'");
}

void save_bundle(const Bundle& bundle, const fs::path& dir) {
  std::vector<Tensor> tensors;
  Json manifest;
  manifest["version"] = kBundleVersion;
  manifest["mapping"] = describe_mapping(bundle.mapping, tensors);
  manifest["base"] = bundle.base ? describe_base(*bundle.base, tensors) : Json(nullptr);
  for (const auto& [key, value] : bundle.info.items()) manifest[key] = value;
  Json listing = Json::array();
  for (const auto& t : tensors) {
    listing.push_back({{"name", t.name}, {"file", t.name + ".f64"}, {"shape", {t.value.rows(), t.value.cols()}}});
  }
  manifest["tensors"] = listing;

  const fs::path target = fs::absolute(dir).lexically_normal();
  const fs::path parent = target.parent_path();
  const std::string leaf = target.filename().string();
  const fs::path staging = parent / ("." + leaf + ".tmp");
  const fs::path retired = parent / ("." + leaf + ".old");
  std::error_code ec;
  fs::create_directories(parent, ec);
  fs::remove_all(staging, ec);
  fs::remove_all(retired, ec);
  if (!fs::create_directory(staging, ec)) {
    throw Error(ErrorCode::kIoError, "cannot create " + staging.string());
  }
  for (const auto& t : tensors) write_tensor(staging / (t.name + ".f64"), t.value);
  {
    std::ofstream out(staging / "manifest.json", std::ios::binary);
    out << manifest.dump(2) << '\n';
    if (!out) throw Error(ErrorCode::kIoError, "cannot write manifest");
  }
  if (fs::exists(target)) fs::rename(target, retired);
  fs::rename(staging, target);
  fs::remove_all(retired, ec);
}

Bundle load_bundle(const fs::path& dir) {
  const fs::path manifest_path = dir / "manifest.json";
  std::ifstream in(manifest_path);
  if (!in) throw Error(ErrorCode::kIoError, "no bundle manifest at " + manifest_path.string());
  Json manifest;
  try {
    manifest = Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw bundle_error(std::string("unreadable manifest: ") + e.what());
  }
  if (!manifest.is_object() || get<int>(manifest, "version") != kBundleVersion) {
    throw bundle_error("unsupported manifest version");
  }

  std::map<std::string, Matrix> tensors;
  std::set<std::string> listed_files;
  for (const auto& t : get<Json>(manifest, "tensors")) {
    const auto name = get<std::string>(t, "name");
    const auto file = get<std::string>(t, "file");
    const auto shape = get<std::vector<Eigen::Index>>(t, "shape");
    if (shape.size() != 2) throw bundle_error("tensor '" + name + "' is not two-dimensional");
    tensors.emplace(name, read_tensor(dir / file, shape[0], shape[1]));
    listed_files.insert(file);
  }
  for (const auto& entry : fs::directory_iterator(dir)) {
    const auto file = entry.path().filename().string();
    if (entry.path().extension() == ".f64" && !listed_files.count(file)) {
      throw bundle_error("tensor file " + file + " is not listed in the manifest");
    }
  }

  TensorStore store(std::move(tensors));
  Bundle bundle;
  bundle.mapping = load_mapping(get<Json>(manifest, "mapping"), store);
  if (!manifest["base"].is_null()) {
    bundle.base = load_base(manifest["base"], store);
    if (base_dim(*bundle.base) != latent_dim(bundle.mapping)) {
      throw bundle_error("base dimension does not match the mapping's latent dimension");
    }
  }
  store.expect_empty();
  for (const auto& [key, value] : manifest.items()) {
    if (key != "version" && key != "mapping" && key != "base" && key != "tensors") bundle.info[key] = value;
  }
  return bundle;
}

}  // namespace latent::cli
