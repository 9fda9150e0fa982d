#include "cli.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "hpigcn/errors.hpp"
#include "hpigcn/latency.hpp"
#include "hpigcn/model.hpp"
#include "hpigcn/model_io.hpp"
#include "hpigcn/ops.hpp"
#include "hpigcn/random.hpp"

namespace hpigcn::cli {
namespace {

namespace fs = std::filesystem;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

fs::path config_path(const std::string& prefix) { return prefix + ".json"; }
fs::path weights_path(const std::string& prefix) { return prefix + ".hpiw"; }

DType stored_dtype(const WeightStore& store) {
  if (store.size() == 0) throw FormatError(FormatErrorKind::kMissingTensor, "weight file is empty");
  return store.at(store.names().front()).dtype;
}

bool is_f64(const std::string& dtype) { return dtype == "f64"; }

template <typename T>
Tensor4<T> random_input(const Shape4& shape, std::uint64_t seed) {
  Rng rng(seed);
  Tensor4<T> x(shape);
  for (T& v : x.data()) v = static_cast<T>(rng.uniform(-1.0, 1.0));
  return x;
}

std::string fmt(double v) {
  std::ostringstream s;
  s << std::setprecision(6) << std::scientific << v;
  return s.str();
}

// ---- init ----

struct InitOptions {
  std::string arch = "rp";
  std::size_t kmax = 5;
  std::optional<std::size_t> pas;
  std::size_t joints = 25;
  std::size_t classes = 120;
  std::size_t in_channels = 3;
  std::vector<std::size_t> channels;
  std::uint64_t seed = 0;
  std::string dtype = "f32";
  std::string out;
};

int cmd_init(const InitOptions& o, std::ostream& out) {
  ModelSpec spec;
  spec.variant = o.arch == "op" ? Variant::kOp : Variant::kRp;
  spec.k_max = o.kmax;
  if (o.pas) {
    if (spec.variant == Variant::kOp && *o.pas != HpiGcOpParams<float>::kGroups) {
      throw UsageError("--pas: the op architecture always uses 8 grouped PAs");
    }
    spec.n_pas = *o.pas;
  }
  spec.joints = o.joints;
  spec.num_classes = o.classes;
  spec.in_channels = o.in_channels;
  if (!o.channels.empty()) spec.channels = o.channels;
  try {
    spec.validate();
  } catch (const ConfigError& e) {
    throw UsageError(e.what());
  }
  if (is_f64(o.dtype)) {
    save_model(build_model<double>(spec, o.seed), config_path(o.out), weights_path(o.out));
  } else {
    save_model(build_model<float>(spec, o.seed), config_path(o.out), weights_path(o.out));
  }
  out << "wrote " << config_path(o.out).string() << " and " << weights_path(o.out).string()
      << "\n";
  return kExitOk;
}

// ---- fuse ----

struct FuseOptions {
  std::string model;
  std::string weights;
  std::string out;
};

template <typename T>
int fuse_as(const ConfigDocument& doc, const WeightStore& store, const FuseOptions& o,
            std::ostream& out) {
  const auto train = from_weight_store<T>(doc, store, DtypePolicy::kStrict);
  if (train.structure() == Structure::kFused) {
    out << "model is already fused; nothing to do\n";
    return kExitOk;
  }
  const auto fused = fuse_model(train);
  out << "parameters: " << train.param_count() << " -> " << fused.param_count() << "\n";
  out << "block  PAs      TCN kernels\n";
  for (std::size_t b = 0; b < train.blocks.size(); ++b) {
    out << std::left << std::setw(7) << b + 1 << std::setw(9)
        << (std::to_string(train.blocks[b].pa_count()) + " -> " +
            std::to_string(fused.blocks[b].pa_count()))
        << train.blocks[b].tcn_branch_count() << " -> " << fused.blocks[b].tcn_branch_count()
        << "\n";
  }
  save_model(fused, config_path(o.out), weights_path(o.out));
  out << "wrote " << config_path(o.out).string() << " and " << weights_path(o.out).string()
      << "\n";
  return kExitOk;
}

int cmd_fuse(const FuseOptions& o, std::ostream& out) {
  const ConfigDocument doc = read_config(o.model);
  const WeightStore store = WeightStore::load(o.weights);
  return stored_dtype(store) == DType::kF64 ? fuse_as<double>(doc, store, o, out)
                                            : fuse_as<float>(doc, store, o, out);
}

// ---- verify ----

struct VerifyOptions {
  std::string model;
  std::string weights;
  std::string fused_model;
  std::string fused_weights;
  std::optional<double> tolerance;
  std::size_t trials = 20;
  std::string dtype = "f32";
  std::uint64_t seed = 0;
  std::size_t batch = 2;
  std::size_t frames = 64;
};

template <typename T>
int verify_as(const VerifyOptions& o, std::ostream& out) {
  const double tolerance = o.tolerance.value_or(is_f64(o.dtype) ? 1e-9 : 1e-4);
  const auto train = load_model<T>(o.model, o.weights);
  ModelParams<T> fused;
  if (!o.fused_model.empty()) {
    fused = load_model<T>(o.fused_model, o.fused_weights);
    if (!(fused.spec == train.spec)) {
      throw UsageError("fused model architecture differs from the training model");
    }
  } else {
    fused = fuse_model(train);
  }
  const Shape4 shape{o.batch, train.spec.in_channels, o.frames, train.spec.joints};

  double worst = 0.0;
  std::size_t worst_trial = 0;
  std::vector<double> worst_blocks;
  for (std::size_t trial = 0; trial < o.trials; ++trial) {
    const auto x = random_input<T>(shape, o.seed + trial);
    ForwardTrace<T> ta;
    ForwardTrace<T> tb;
    const auto a = forward(train, x, &ta);
    const auto b = forward(fused, x, &tb);
    const double d = static_cast<double>(max_abs_diff(a, b));
    if (trial == 0 || d > worst || std::isnan(d)) {
      worst = d;
      worst_trial = trial;
      worst_blocks.clear();
      for (std::size_t k = 0; k < ta.block_outputs.size(); ++k) {
        worst_blocks.push_back(
            static_cast<double>(max_abs_diff(ta.block_outputs[k], tb.block_outputs[k])));
      }
    }
  }
  const bool pass = worst <= tolerance;
  out << "dtype " << o.dtype << ", " << o.trials << " trials, input " << to_string(shape) << "\n";
  out << "max |delta| = " << fmt(worst) << " (tolerance " << fmt(tolerance) << ")\n";
  if (pass) {
    out << "PASS\n";
    return kExitOk;
  }
  const auto block = static_cast<std::size_t>(
      std::max_element(worst_blocks.begin(), worst_blocks.end()) - worst_blocks.begin());
  out << "FAIL: trial " << worst_trial << ", worst block " << block + 1 << "\n";
  const auto first = std::find_if(worst_blocks.begin(), worst_blocks.end(),
                                  [&](double d) { return !(d <= tolerance); });
  if (first != worst_blocks.end()) {
    out << "first block over tolerance: " << first - worst_blocks.begin() + 1 << "\n";
  }
  for (std::size_t k = 0; k < worst_blocks.size(); ++k) {
    out << "  block " << k + 1 << ": max |delta| = " << fmt(worst_blocks[k])
        << (k == block ? "  <-- worst" : "") << "\n";
  }
  return kExitVerifyFailed;
}

int cmd_verify(const VerifyOptions& o, std::ostream& out) {
  if (o.fused_model.empty() != o.fused_weights.empty()) {
    throw UsageError("--fused-model and --fused-weights must be given together");
  }
  if (o.trials < 1) throw UsageError("--trials must be >= 1");
  return is_f64(o.dtype) ? verify_as<double>(o, out) : verify_as<float>(o, out);
}

// ---- infer ----

struct InferOptions {
  std::string model;
  std::string weights;
  std::string input;
  std::string out;
  std::string dtype = "f32";
  bool strict_dtype = false;
};

template <typename T>
int infer_as(const InferOptions& o, std::ostream& out) {
  const auto params = load_model<T>(o.model, o.weights);
  const auto policy = o.strict_dtype ? DtypePolicy::kStrict : DtypePolicy::kConvert;
  const auto x = load_tensor<T>(o.input, policy);
  const auto logits = forward(params, x);
  save_tensor(logits, o.out);
  const auto& s = logits.shape();
  for (std::size_t n = 0; n < s.n; ++n) {
    const auto row = logits.data().subspan(n * s.c, s.c);
    out << "sample " << n << ": class " << argmax_lowest_tie<T>(row) << "\n";
  }
  out << "wrote " << o.out << "\n";
  return kExitOk;
}

int cmd_infer(const InferOptions& o, std::ostream& out) {
  return is_f64(o.dtype) ? infer_as<double>(o, out) : infer_as<float>(o, out);
}

// ---- bench ----

struct BenchOptions {
  std::string model;
  std::string weights;
  std::size_t batch = 64;
  std::size_t frames = 64;
  std::string mode = "both";
  std::size_t iters = kMinIterations;
  std::size_t warmup = kMinWarmup;
  int threads = 0;
  std::string dtype = "f32";
};

template <typename T>
int bench_as(const BenchOptions& o, std::ostream& out) {
  if (o.threads > 0) set_num_threads(o.threads);
  const auto loaded = load_model<T>(o.model, o.weights);
  const bool want_train = o.mode != "fused";
  const bool want_fused = o.mode != "train";
  if (want_train && loaded.structure() == Structure::kFused) {
    throw UsageError("--mode " + o.mode + " needs training-structure weights");
  }
  const ModelParams<T> fused = want_fused ? fuse_model(loaded) : ModelParams<T>{};
  const Shape4 shape{o.batch, loaded.spec.in_channels, o.frames, loaded.spec.joints};
  const auto x = random_input<T>(shape, 0);

  std::vector<BenchCase> cases;
  std::vector<std::string> structures;
  if (want_train) {
    cases.push_back({"train", [&] { (void)forward(loaded, x); }});
    structures.push_back("train");
  }
  if (want_fused) {
    cases.push_back({"fused", [&] { (void)forward(fused, x); }});
    structures.push_back("fused");
  }
  const auto stats = measure_interleaved(cases, o.warmup, o.iters);

  std::vector<std::string> reports;
  for (std::size_t i = 0; i < cases.size(); ++i) {
    BenchReport r;
    r.arch = to_string(loaded.spec.variant);
    r.kmax = loaded.spec.k_max;
    r.structure = structures[i];
    r.batch = o.batch;
    r.frames = o.frames;
    r.dtype = o.dtype;
    r.threads = num_threads();
    r.stats = stats[i];
    reports.push_back(to_json(r));
  }
  out << "{\"reports\": [";
  for (std::size_t i = 0; i < reports.size(); ++i) out << (i ? ", " : "") << reports[i];
  out << "]";
  if (want_train && want_fused) {
    out << ", \"speedup\": " << nlohmann::json(stats[0].median_ms / stats[1].median_ms).dump();
  }
  out << "}\n";
  return kExitOk;
}

int cmd_bench(const BenchOptions& o, std::ostream& out) {
  if (o.iters < kMinIterations) {
    throw UsageError("--iters must be >= " + std::to_string(kMinIterations));
  }
  if (o.warmup < kMinWarmup) throw UsageError("--warmup must be >= " + std::to_string(kMinWarmup));
  return is_f64(o.dtype) ? bench_as<double>(o, out) : bench_as<float>(o, out);
}

// ---- ensemble ----

struct EnsembleOptions {
  std::vector<std::string> scores;
  std::vector<double> weights;
  std::string out;
  std::string pred;
};

int cmd_ensemble(const EnsembleOptions& o, std::ostream& out) {
  if (!o.weights.empty() && o.weights.size() != o.scores.size()) {
    throw UsageError("--weights needs one value per --scores file (" +
                     std::to_string(o.scores.size()) + ")");
  }
  std::vector<Tensor4<double>> streams;
  for (const auto& path : o.scores) streams.push_back(load_tensor<double>(path));
  for (std::size_t s = 1; s < streams.size(); ++s) {
    if (streams[s].shape().n != streams[0].shape().n) {
      throw ShapeError("ensemble: " + o.scores[s] + " has " + std::to_string(streams[s].shape().n) +
                       " samples, " + o.scores[0] + " has " + std::to_string(streams[0].shape().n));
    }
  }
  const auto result = ensemble_average<double>(streams, o.weights);
  save_tensor(result.mean, o.out);
  std::ofstream pred;
  if (!o.pred.empty()) {
    pred.open(o.pred);
    if (!pred) throw FormatError(FormatErrorKind::kIo, "cannot create " + o.pred);
  }
  for (std::size_t n = 0; n < result.predictions.size(); ++n) {
    out << "sample " << n << ": class " << result.predictions[n] << "\n";
    if (pred.is_open()) pred << result.predictions[n] << "\n";
  }
  out << "wrote " << o.out << (o.pred.empty() ? "" : " and " + o.pred) << "\n";
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Re-parameterized skeleton GCN: build, fuse, verify, run and time models",
               "hpigcn"};
  app.require_subcommand(1);
  const auto dtypes = CLI::IsMember({"f32", "f64"});
  const auto positive = CLI::Range(1, 1 << 30);

  InitOptions init;
  auto* c_init = app.add_subcommand("init", "Build a training-structure model with random weights");
  c_init->add_option("--arch", init.arch, "Spatial module")->check(CLI::IsMember({"rp", "op"}));
  c_init->add_option("--kmax", init.kmax, "Largest temporal kernel")->check(CLI::IsMember({5, 9}));
  c_init->add_option("--pas", init.pas, "Parallel PAs per block (rp)")->check(positive);
  c_init->add_option("--joints", init.joints, "Skeleton joints V")->check(positive);
  c_init->add_option("--classes", init.classes, "Output classes")->check(positive);
  c_init->add_option("--in-channels", init.in_channels, "Input channels")
      ->check(positive);
  c_init->add_option("--channels", init.channels, "Per-block channel schedule (9 values)")
      ->delimiter(',');
  c_init->add_option("--seed", init.seed, "Random seed");
  c_init->add_option("--dtype", init.dtype, "Stored precision")->check(dtypes);
  c_init->add_option("--out", init.out, "Output prefix (writes PREFIX.json, PREFIX.hpiw)")
      ->required();

  FuseOptions fuse;
  auto* c_fuse = app.add_subcommand("fuse", "Convert a model to its inference structure");
  c_fuse->add_option("--model", fuse.model, "Config file")->required();
  c_fuse->add_option("--weights", fuse.weights, "Weight file")->required();
  c_fuse->add_option("--out", fuse.out, "Output prefix")->required();

  VerifyOptions verify;
  auto* c_verify = app.add_subcommand("verify", "Check fused and training outputs agree");
  c_verify->add_option("--model", verify.model, "Training config file")->required();
  c_verify->add_option("--weights", verify.weights, "Training weight file")->required();
  c_verify->add_option("--fused-model", verify.fused_model,
                       "Fused config to compare against (default: fuse in memory)");
  c_verify->add_option("--fused-weights", verify.fused_weights, "Fused weight file");
  c_verify->add_option("--tolerance", verify.tolerance,
                       "Max |delta| allowed (default 1e-4 f32, 1e-9 f64)")
      ->check(CLI::NonNegativeNumber);
  c_verify->add_option("--trials", verify.trials, "Random inputs");
  c_verify->add_option("--dtype", verify.dtype, "Engine precision")->check(dtypes);
  c_verify->add_option("--seed", verify.seed, "Seed of the first input");
  c_verify->add_option("--batch", verify.batch, "Samples per input")->check(positive);
  c_verify->add_option("--frames", verify.frames, "Frames per input")->check(positive);

  InferOptions infer;
  auto* c_infer = app.add_subcommand("infer", "Run one forward pass");
  c_infer->add_option("--model", infer.model, "Config file")->required();
  c_infer->add_option("--weights", infer.weights, "Weight file")->required();
  c_infer->add_option("--input", infer.input, "Input tensor file (N, C, T, V)")->required();
  c_infer->add_option("--out", infer.out, "Score tensor file to write")->required();
  c_infer->add_option("--dtype", infer.dtype, "Engine precision")->check(dtypes);
  c_infer->add_flag("--strict-dtype", infer.strict_dtype,
                    "Reject an input stored in another precision instead of converting");

  BenchOptions bench;
  auto* c_bench = app.add_subcommand("bench", "Time forward passes");
  c_bench->add_option("--model", bench.model, "Config file")->required();
  c_bench->add_option("--weights", bench.weights, "Weight file")->required();
  c_bench->add_option("--batch", bench.batch, "Batch size")->check(positive);
  c_bench->add_option("--frames", bench.frames, "Frames")->check(positive);
  c_bench->add_option("--mode", bench.mode, "Structures to time")
      ->check(CLI::IsMember({"train", "fused", "both"}));
  c_bench->add_option("--iters", bench.iters, "Measured iterations (>= 20)");
  c_bench->add_option("--warmup", bench.warmup, "Warmup iterations (>= 5)");
  c_bench->add_option("--threads", bench.threads, "Worker threads (default: all cores)");
  c_bench->add_option("--dtype", bench.dtype, "Engine precision")->check(dtypes);

  EnsembleOptions ensemble;
  auto* c_ensemble = app.add_subcommand("ensemble", "Average score files and take the argmax");
  c_ensemble->add_option("--scores", ensemble.scores, "Score tensor files")->required();
  c_ensemble->add_option("--weights", ensemble.weights, "One weight per score file")
      ->check(CLI::NonNegativeNumber);
  c_ensemble->add_option("--out", ensemble.out, "Averaged score file to write")->required();
  c_ensemble->add_option("--pred", ensemble.pred, "Text file of predicted classes");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (c_init->parsed()) return cmd_init(init, out);
    if (c_fuse->parsed()) return cmd_fuse(fuse, out);
    if (c_verify->parsed()) return cmd_verify(verify, out);
    if (c_infer->parsed()) return cmd_infer(infer, out);
    if (c_bench->parsed()) return cmd_bench(bench, out);
    if (c_ensemble->parsed()) return cmd_ensemble(ensemble, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace hpigcn::cli
