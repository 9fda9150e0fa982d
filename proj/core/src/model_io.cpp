#include "hpigcn/model_io.hpp"

#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include <json.hpp>

#include "hpigcn/errors.hpp"

namespace hpigcn {
namespace {

using Json = nlohmann::ordered_json;
using Dims = std::vector<std::uint32_t>;

template <class... Fs>
struct Overloaded : Fs... {
  using Fs::operator()...;
};
template <class... Fs>
Overloaded(Fs...) -> Overloaded<Fs...>;

std::uint32_t dim(std::size_t d) {
  if (d > std::numeric_limits<std::uint32_t>::max()) {
    throw FormatError(FormatErrorKind::kBadShape,
                      "dimension " + std::to_string(d) + " exceeds u32");
  }
  return static_cast<std::uint32_t>(d);
}

std::string block_prefix(std::size_t b) { return "block" + std::to_string(b + 1) + "."; }

// ---- writing ----

template <typename T>
class Writer {
 public:
  void values(const std::string& name, Dims dims, const std::vector<T>& v) {
    store_.put_values<T>(name, std::move(dims), v);
  }

  void pointwise(const std::string& prefix, const PointwiseConvParams<T>& p) {
    values(prefix + ".weight", {dim(p.c_out), dim(p.c_in)}, p.weight);
    if (p.has_bias()) values(prefix + ".bias", {dim(p.c_out)}, p.bias);
  }

  void temporal(const std::string& prefix, const TemporalConvParams<T>& p) {
    values(prefix + ".weight", {dim(p.c_out), dim(p.c_in), dim(p.kernel)}, p.weight);
    if (p.has_bias()) values(prefix + ".bias", {dim(p.c_out)}, p.bias);
  }

  void bn(const std::string& prefix, const BatchNormParams<T>& p) {
    const Dims c{dim(p.channels())};
    values(prefix + ".mean", c, p.mean);
    values(prefix + ".variance", c, p.variance);
    values(prefix + ".scale", c, p.scale);
    values(prefix + ".shift", c, p.shift);
  }

  template <typename Gc>
  void gc(const std::string& prefix, const Gc& g) {
    pointwise(prefix + "pre", g.pre);
    for (std::size_t j = 0; j < g.pas.size(); ++j) {
      const auto& pa = g.pas[j];
      values(prefix + "pa[" + std::to_string(j) + "]", {dim(pa.v), dim(pa.v)}, pa.matrix);
    }
    pointwise(prefix + "post", g.post);
    if (g.bn) bn(prefix + "bn", *g.bn);
  }

  void serial(const std::string& prefix, const SerialBranchParams<T>& s) {
    pointwise(prefix + "first", s.first);
    temporal(prefix + "second", s.second);
    bn(prefix + "bn", s.bn);
  }

  WeightStore take() { return std::move(store_); }

 private:
  WeightStore store_;
};

// ---- reading ----

template <typename T>
class Reader {
 public:
  Reader(const WeightStore& store, DtypePolicy policy, T epsilon)
      : store_(store), policy_(policy), epsilon_(epsilon) {}

  bool has(const std::string& name) const { return store_.contains(name); }

  std::vector<T> values(const std::string& name, const Dims& dims) {
    if (!has(name)) throw FormatError(FormatErrorKind::kMissingTensor, "'" + name + "'");
    used_.insert(name);
    return store_.get_values<T>(name, dims, policy_);
  }

  std::vector<T> optional_values(const std::string& name, const Dims& dims) {
    return has(name) ? values(name, dims) : std::vector<T>{};
  }

  PointwiseConvParams<T> pointwise(const std::string& prefix, std::size_t c_out, std::size_t c_in) {
    PointwiseConvParams<T> p;
    p.c_out = c_out;
    p.c_in = c_in;
    p.weight = values(prefix + ".weight", {dim(c_out), dim(c_in)});
    p.bias = optional_values(prefix + ".bias", {dim(c_out)});
    return p;
  }

  TemporalConvParams<T> temporal(const std::string& prefix, std::size_t c_out, std::size_t c_in,
                                 std::size_t kernel, std::size_t stride) {
    TemporalConvParams<T> p;
    p.c_out = c_out;
    p.c_in = c_in;
    p.kernel = kernel;
    p.stride = stride;
    p.padding = (kernel - 1) / 2;
    p.weight = values(prefix + ".weight", {dim(c_out), dim(c_in), dim(kernel)});
    p.bias = optional_values(prefix + ".bias", {dim(c_out)});
    return p;
  }

  BatchNormParams<T> bn(const std::string& prefix, std::size_t c) {
    BatchNormParams<T> p;
    const Dims d{dim(c)};
    p.mean = values(prefix + ".mean", d);
    p.variance = values(prefix + ".variance", d);
    p.scale = values(prefix + ".scale", d);
    p.shift = values(prefix + ".shift", d);
    p.epsilon = epsilon_;
    return p;
  }

  std::optional<BatchNormParams<T>> optional_bn(const std::string& prefix, std::size_t c) {
    if (!has(prefix + ".mean")) return std::nullopt;
    return bn(prefix, c);
  }

  template <typename Gc>
  Gc gc(const std::string& prefix, std::size_t c_in, std::size_t c_out, std::size_t v) {
    Gc g;
    g.pre = pointwise(prefix + "pre", c_out, c_in);
    for (std::size_t j = 0; has(prefix + "pa[" + std::to_string(j) + "]"); ++j) {
      AdjacencyParam<T> pa;
      pa.v = v;
      pa.matrix = values(prefix + "pa[" + std::to_string(j) + "]", {dim(v), dim(v)});
      g.pas.push_back(std::move(pa));
    }
    if (g.pas.empty()) {
      throw FormatError(FormatErrorKind::kMissingTensor, "'" + prefix + "pa[0]'");
    }
    g.post = pointwise(prefix + "post", c_out, c_out);
    g.bn = optional_bn(prefix + "bn", c_out);
    return g;
  }

  std::optional<SerialBranchParams<T>> serial(const std::string& prefix, std::size_t c,
                                              std::size_t kernel, std::size_t stride) {
    if (!has(prefix + "first.weight")) return std::nullopt;
    SerialBranchParams<T> s;
    s.first = pointwise(prefix + "first", c, c);
    s.second = temporal(prefix + "second", c, c, kernel, stride);
    s.bn = bn(prefix + "bn", c);
    return s;
  }

  void check_all_used() const {
    for (const auto& name : store_.names()) {
      if (!used_.count(name)) {
        throw FormatError(FormatErrorKind::kUnexpectedTensor, "'" + name + "'");
      }
    }
  }

 private:
  const WeightStore& store_;
  DtypePolicy policy_;
  T epsilon_;
  std::set<std::string> used_;
};

// ---- config ----

const std::set<std::string>& config_keys() {
  static const std::set<std::string> keys = {
      "format_version", "structure",   "variant",  "k_max",    "n_pas",
      "joints",         "num_classes", "in_channels", "channels", "downsample_blocks",
      "bn_epsilon"};
  return keys;
}

[[noreturn]] void bad_config(const std::string& detail) {
  throw FormatError(FormatErrorKind::kBadConfig, detail);
}

std::size_t as_size(const Json& j, const std::string& key) {
  if (!j.is_number_unsigned()) bad_config("'" + key + "' must be a non-negative integer");
  return j.get<std::size_t>();
}

std::vector<std::size_t> as_sizes(const Json& j, const std::string& key) {
  if (!j.is_array()) bad_config("'" + key + "' must be an array of non-negative integers");
  std::vector<std::size_t> out;
  for (const auto& e : j) out.push_back(as_size(e, key));
  return out;
}

}  // namespace

std::string to_json(const ConfigDocument& doc) {
  const auto& s = doc.spec;
  Json j;
  j["format_version"] = kConfigFormatVersion;
  j["structure"] = to_string(doc.structure);
  j["variant"] = to_string(s.variant);
  j["k_max"] = s.k_max;
  j["n_pas"] = s.n_pas;
  j["joints"] = s.joints;
  j["num_classes"] = s.num_classes;
  j["in_channels"] = s.in_channels;
  j["channels"] = s.channels;
  j["downsample_blocks"] = s.downsample_blocks;
  j["bn_epsilon"] = s.bn_epsilon;
  return j.dump(2) + "\n";
}

ConfigDocument parse_config(std::string_view text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    bad_config(std::string("not valid JSON (") + e.what() + ")");
  }
  if (!j.is_object()) bad_config("top level must be an object");
  for (const auto& [key, value] : j.items()) {
    if (!config_keys().count(key)) bad_config("unknown key '" + key + "'");
  }
  for (const auto& key : config_keys()) {
    if (!j.contains(key)) bad_config("missing key '" + key + "'");
  }

  const auto version = j["format_version"];
  if (!version.is_number_integer() || version.get<long long>() != kConfigFormatVersion) {
    bad_config("unsupported format_version " + version.dump() + ", expected " +
               std::to_string(kConfigFormatVersion));
  }

  ConfigDocument doc;
  const auto& structure = j["structure"];
  if (structure == "train") {
    doc.structure = Structure::kTrain;
  } else if (structure == "fused") {
    doc.structure = Structure::kFused;
  } else {
    bad_config("'structure' must be \"train\" or \"fused\", got " + structure.dump());
  }
  const auto& variant = j["variant"];
  if (variant == "rp") {
    doc.spec.variant = Variant::kRp;
  } else if (variant == "op") {
    doc.spec.variant = Variant::kOp;
  } else {
    bad_config("'variant' must be \"rp\" or \"op\", got " + variant.dump());
  }
  doc.spec.k_max = as_size(j["k_max"], "k_max");
  doc.spec.n_pas = as_size(j["n_pas"], "n_pas");
  doc.spec.joints = as_size(j["joints"], "joints");
  doc.spec.num_classes = as_size(j["num_classes"], "num_classes");
  doc.spec.in_channels = as_size(j["in_channels"], "in_channels");
  doc.spec.channels = as_sizes(j["channels"], "channels");
  doc.spec.downsample_blocks = as_sizes(j["downsample_blocks"], "downsample_blocks");
  if (!j["bn_epsilon"].is_number()) bad_config("'bn_epsilon' must be a number");
  doc.spec.bn_epsilon = j["bn_epsilon"].get<double>();

  try {
    doc.spec.validate();
  } catch (const ConfigError& e) {
    bad_config(e.what());
  }
  return doc;
}

ConfigDocument read_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError(FormatErrorKind::kIo, "cannot open " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str());
}

void write_config(const ConfigDocument& doc, const std::filesystem::path& path) {
  const std::string text = to_json(doc);
  write_file(path, std::as_bytes(std::span(text.data(), text.size())));
}

template <typename T>
WeightStore to_weight_store(const ModelParams<T>& params) {
  Writer<T> w;
  w.pointwise("stem", params.stem);
  for (std::size_t b = 0; b < params.blocks.size(); ++b) {
    const auto& block = params.blocks[b];
    const std::string p = block_prefix(b);
    std::visit([&](const auto& g) { w.gc(p + "gc.", g); }, block.gc);
    std::visit(Overloaded{[&](const RepTcnTrainParams<T>& t) {
                            w.temporal(p + "tcn.a.conv", t.a.conv);
                            w.bn(p + "tcn.a.bn", t.a.bn);
                            if (t.b) w.serial(p + "tcn.b.", *t.b);
                            if (t.c) w.serial(p + "tcn.c.", *t.c);
                            if (t.d) w.bn(p + "tcn.d.bn", t.d->bn);
                          },
                          [&](const RepTcnInferParams<T>& t) {
                            w.temporal(p + "tcn.fused", t.fused);
                          }},
               block.tcn);
    if (const auto* conv = std::get_if<TemporalConvParams<T>>(&block.residual)) {
      w.temporal(p + "residual", *conv);
    }
  }
  w.pointwise("head", params.head);
  return w.take();
}

template <typename T>
ModelParams<T> from_weight_store(const ConfigDocument& doc, const WeightStore& store,
                                 DtypePolicy policy) {
  const ModelSpec& spec = doc.spec;
  spec.validate();
  const bool fused_tcn = store.contains("block1.tcn.fused.weight");
  const bool train_tcn = store.contains("block1.tcn.a.conv.weight");
  if ((doc.structure == Structure::kFused && train_tcn) ||
      (doc.structure == Structure::kTrain && fused_tcn)) {
    bad_config("config declares structure '" + to_string(doc.structure) +
               "' but the weights hold the other structure");
  }
  Reader<T> r(store, policy, static_cast<T>(spec.bn_epsilon));
  ModelParams<T> m;
  m.spec = spec;
  m.stem = r.pointwise("stem", spec.channels.front(), spec.in_channels);
  for (std::size_t b = 0; b < ModelSpec::kBlocks; ++b) {
    const std::string p = block_prefix(b);
    const std::size_t c_in = spec.block_in(b);
    const std::size_t c_out = spec.block_out(b);
    const std::size_t stride = spec.block_stride(b);
    BlockParams<T> block;
    try {
      if (spec.variant == Variant::kRp) {
        block.gc = r.template gc<HpiGcRpParams<T>>(p + "gc.", c_in, c_out, spec.joints);
      } else {
        block.gc = r.template gc<HpiGcOpParams<T>>(p + "gc.", c_in, c_out, spec.joints);
      }
      std::visit([](const auto& g) { g.validate(); }, block.gc);

      if (doc.structure == Structure::kFused) {
        RepTcnInferParams<T> t;
        t.fused = r.temporal(p + "tcn.fused", c_out, c_out, spec.k_max, stride);
        t.fused.validate("fused tcn");
        block.tcn = std::move(t);
      } else {
        RepTcnTrainParams<T> t;
        t.config = RepTcnConfig{c_out, c_out, spec.k_max, stride};
        t.a.conv = r.temporal(p + "tcn.a.conv", c_out, c_out, spec.k_max, stride);
        t.a.bn = r.bn(p + "tcn.a.bn", c_out);
        t.b = r.serial(p + "tcn.b.", c_out, 5, stride);
        t.c = r.serial(p + "tcn.c.", c_out, 3, stride);
        if (r.has(p + "tcn.d.bn.mean")) t.d = PoolBnBranch<T>{3, r.bn(p + "tcn.d.bn", c_out)};
        t.validate();
        block.tcn = std::move(t);
      }

      if (r.has(p + "residual.weight")) {
        auto conv = r.temporal(p + "residual", c_out, c_in, 1, stride);
        conv.validate("residual");
        block.residual = std::move(conv);
      } else if (c_in == c_out && stride == 1) {
        block.residual = IdentityResidual{};
      } else {
        throw FormatError(FormatErrorKind::kMissingTensor, "'" + p + "residual.weight'");
      }
    } catch (const FormatError&) {
      throw;
    } catch (const std::runtime_error& e) {
      throw FormatError(FormatErrorKind::kBadShape, p.substr(0, p.size() - 1) + ": " + e.what());
    }
    m.blocks.push_back(std::move(block));
  }
  m.head = r.pointwise("head", spec.num_classes, spec.channels.back());
  r.check_all_used();
  if (m.structure() != doc.structure) {
    bad_config("config declares structure '" + to_string(doc.structure) +
               "' but the weights hold structure '" + to_string(m.structure()) + "'");
  }
  return m;
}

template <typename T>
void save_model(const ModelParams<T>& params, const std::filesystem::path& config_path,
                const std::filesystem::path& weights_path) {
  write_config(ConfigDocument{params.spec, params.structure()}, config_path);
  to_weight_store(params).save(weights_path);
}

template <typename T>
ModelParams<T> load_model(const std::filesystem::path& config_path,
                          const std::filesystem::path& weights_path, DtypePolicy policy) {
  const ConfigDocument doc = read_config(config_path);
  return from_weight_store<T>(doc, WeightStore::load(weights_path), policy);
}

template <typename T>
void save_tensor(const Tensor4<T>& tensor, const std::filesystem::path& path) {
  const auto& s = tensor.shape();
  WeightStore store;
  store.put_values<T>("tensor", {dim(s.n), dim(s.c), dim(s.t), dim(s.v)}, tensor.data());
  store.save(path);
}

template <typename T>
Tensor4<T> load_tensor(const std::filesystem::path& path, DtypePolicy policy) {
  const WeightStore store = WeightStore::load(path);
  for (const auto& name : store.names()) {
    if (name != "tensor") throw FormatError(FormatErrorKind::kUnexpectedTensor, "'" + name + "'");
  }
  const StoredTensor& t = store.at("tensor");
  if (t.dims.size() != 4) {
    throw FormatError(FormatErrorKind::kBadShape,
                      "'tensor' has rank " + std::to_string(t.dims.size()) + ", expected 4");
  }
  const Shape4 shape{t.dims[0], t.dims[1], t.dims[2], t.dims[3]};
  return Tensor4<T>(shape, store.get_values<T>("tensor", {}, policy));
}

#define HPIGCN_INSTANTIATE_IO(T)                                                            \
  template WeightStore to_weight_store(const ModelParams<T>&);                              \
  template ModelParams<T> from_weight_store<T>(const ConfigDocument&, const WeightStore&,   \
                                               DtypePolicy);                                \
  template void save_model(const ModelParams<T>&, const std::filesystem::path&,             \
                           const std::filesystem::path&);                                   \
  template ModelParams<T> load_model<T>(const std::filesystem::path&,                      \
                                        const std::filesystem::path&, DtypePolicy);         \
  template void save_tensor(const Tensor4<T>&, const std::filesystem::path&);               \
  template Tensor4<T> load_tensor<T>(const std::filesystem::path&, DtypePolicy);

HPIGCN_INSTANTIATE_IO(float)
HPIGCN_INSTANTIATE_IO(double)

#undef HPIGCN_INSTANTIATE_IO

}  // namespace hpigcn
