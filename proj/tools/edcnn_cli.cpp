#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iostream>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "edcnn/factorize.hpp"
#include "edcnn/nets.hpp"
#include "edcnn/train.hpp"
#include "json.hpp"

namespace {

using Json = nlohmann::ordered_json;
using namespace edcnn;

constexpr const char* kVersion = "0.1.0";

constexpr int kExitOk = 0;
constexpr int kExitVerifyFailed = 1;
constexpr int kExitInvalidInput = 2;
constexpr int kExitNumericFailure = 3;
constexpr int kExitUsage = 64;

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string timestamp_utc() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::strftime(buf, sizeof buf, "%FT%TZ", std::gmtime(&t));
  return buf;
}

void write_manifest(const std::string& command, const Json& config,
                    const std::vector<std::string>& outputs) {
  if (outputs.empty()) return;
  Json doc;
  doc["command"] = command;
  doc["config"] = config;
  doc["tool_version"] = kVersion;
  doc["timestamp"] = timestamp_utc();
  doc["outputs"] = outputs;
  const std::string path = outputs.front() + ".manifest.json";
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot open for writing: " + path);
  out << doc.dump(2) << "\n";
}

Vector coeffs_from_json(const std::string& text) {
  Json doc;
  try {
    doc = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw InputError(std::string("coefficient JSON: ") + e.what());
  }
  const Json* arr = doc.is_array() ? &doc : nullptr;
  if (!arr && doc.is_object() && doc.contains("coeffs")) arr = &doc["coeffs"];
  if (!arr || !arr->is_array()) throw InputError("expected an array or {\"coeffs\": [...]}");
  Vector v(arr->size());
  Index i = 0;
  for (const auto& x : *arr) v[i++] = x.get<double>();
  return v;
}

struct FactorizeArgs {
  std::string input, out;
  int s = 2;
  double threshold = 1e-8;
  bool json = false;
};

int run_factorize(const FactorizeArgs& args) {
  const SymbolPolynomial u{coeffs_from_json(read_file(args.input))};
  if (u.is_zero()) {
    std::cerr << "error: the zero polynomial has no filter factorization\n";
    return kExitInvalidInput;
  }
  const FilterCascade cascade = factor_filter(u, args.s);

  Json doc;
  doc["s"] = cascade.s;
  doc["filters"] = Json::array();
  for (const auto& w : cascade.filters) {
    Json f = Json::array();
    for (Index i = 0; i < w.coeffs.size(); ++i) f.push_back(w.coeffs[i]);
    doc["filters"].push_back(std::move(f));
  }
  doc["reconstruction_error"] = cascade.reconstruction_error;
  if (!args.out.empty()) {
    std::ofstream out(args.out, std::ios::binary);
    if (!out) throw InputError("cannot open for writing: " + args.out);
    out << doc.dump(2) << "\n";
    write_manifest("factorize",
                   Json{{"input", args.input},
                        {"s", args.s},
                        {"threshold", args.threshold},
                        {"out", args.out}},
                   {args.out});
  }
  if (args.json)
    std::cout << Json{{"filters", doc["filters"].size()},
                      {"reconstruction_error", cascade.reconstruction_error}}
                     .dump()
              << "\n";
  else
    std::cout << "cascade of " << cascade.filters.size()
              << " filters, reconstruction error " << cascade.reconstruction_error
              << "\n";
  return cascade.reconstruction_error <= args.threshold ? kExitOk : kExitNumericFailure;
}

struct CompileArgs {
  std::string dense, out, mode = "tight";
  int s = 2;
  double bound = 1.0;
  bool json = false;
};

int run_compile(const CompileArgs& args) {
  const Network net = network_from_json(read_file(args.dense));
  const DenseNet dense = dense_from_network(net);
  const BiasSynthesis mode =
      args.mode == "paper" ? BiasSynthesis::Paper : BiasSynthesis::Tight;
  const CompiledEdcnn compiled = compile_dense_net(dense, args.s, args.bound, mode);
  save_compiled(compiled, args.out);
  write_manifest("compile",
                 Json{{"dense", args.dense},
                      {"s", args.s},
                      {"bound", args.bound},
                      {"mode", args.mode},
                      {"out", args.out}},
                 {args.out});

  long dense_params = 0;
  long bound3 = 0;
  for (const auto& layer : dense.layers) {
    dense_params += layer.weights.size() + layer.bias.size();
    bound3 += 3 * layer.weights.size();
  }
  const long cascade_params = filter_parameter_count(compiled);
  if (args.json) {
    std::cout << Json{{"dense_params", dense_params},
                      {"cascade_params", cascade_params},
                      {"bound_3ndd", bound3},
                      {"stages", compiled.stages.size()}}
                     .dump()
              << "\n";
  } else {
    std::cout << "dense params " << dense_params << ", cascade filter params "
              << cascade_params << ", bound 3*sum(n*d) = " << bound3 << "\n";
  }
  return kExitOk;
}

struct VerifyArgs {
  std::string compiled, dense;
  int probes = 100;
  bool shift_test = false;
  std::uint64_t seed = 1;
  double tolerance = 1e-6;
  bool json = false;
};

int run_verify(const VerifyArgs& args) {
  const CompiledEdcnn compiled = load_compiled(args.compiled);
  const DenseNet dense = dense_from_network(network_from_json(read_file(args.dense)));
  require(!dense.layers.empty(), "verify: dense net has no layers");
  require(static_cast<int>(dense.layers.front().weights.cols()) == compiled.input_dim,
          "verify: input dimensions disagree");

  std::mt19937_64 rng(args.seed);
  std::uniform_real_distribution<double> unif(-compiled.input_bound,
                                              compiled.input_bound);
  double worst = 0.0;
  Vector worst_probe;
  for (int i = 0; i < args.probes; ++i) {
    Vector x(compiled.input_dim);
    for (Index k = 0; k < x.size(); ++k) x[k] = unif(rng);
    const Vector want = dense.features(x);
    const Vector got = forward(compiled, x);
    const double gap =
        (want - got).cwiseAbs().maxCoeff() / std::max(1.0, want.cwiseAbs().maxCoeff());
    if (gap > worst) {
      worst = gap;
      worst_probe = x;
    }
  }

  double worst_shift_gap = 0.0;
  bool shifts_ok = true;
  if (args.shift_test) {
    const int d = compiled.input_dim;
    const int p = std::max(1, d / 2);
    std::uniform_real_distribution<double> unit(0.0, compiled.input_bound);
    for (int rep = 0; rep < std::max(1, args.probes / 10); ++rep) {
      Vector payload(p);
      for (int k = 0; k < p; ++k) payload[k] = unit(rng);
      const SupportedVector x = SupportedVector::place(d, 1, payload);
      for (int k = 0; k <= d - p; ++k) {
        const auto report = verify_translation_invariance(compiled, x, k);
        worst_shift_gap = std::max(worst_shift_gap, report.max_abs_gap);
        shifts_ok = shifts_ok && report.equal;
      }
    }
  }

  const bool pass = (args.probes == 0 || worst <= args.tolerance) &&
                    (!args.shift_test || shifts_ok);
  Json report{{"probes", args.probes},
              {"max_relative_gap", worst},
              {"tolerance", args.tolerance},
              {"pass", pass}};
  if (args.shift_test) report["max_shift_gap"] = worst_shift_gap;
  if (!pass && worst_probe.size() > 0) {
    Json probe = Json::array();
    for (Index i = 0; i < worst_probe.size(); ++i) probe.push_back(worst_probe[i]);
    report["worst_probe"] = std::move(probe);
  }
  std::cout << report.dump(args.json ? -1 : 2) << "\n";
  if (args.probes == 0 && !args.shift_test)
    std::cerr << "warning: zero probes requested; verification is vacuous\n";
  return pass ? kExitOk : kExitVerifyFailed;
}

struct ExperimentArgs {
  std::string name, out, data;
  int repeats = 10;
  std::optional<std::uint64_t> seed;
  int threads = 0;
  int epochs = 2000;
  bool overwrite = false;
  std::vector<std::string> archs;
  std::vector<int> depths;
  std::vector<int> sizes;
  std::string arch_for_csv = "edcnn";
  int depth_for_csv = 4;
};

int run_csv_regression(const ExperimentArgs& args, std::uint64_t seed);

int run_experiment_cmd(const ExperimentArgs& args) {
  std::uint64_t seed = 0;
  if (args.seed) {
    seed = *args.seed;
  } else {
    std::random_device rd;
    seed = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
  }
  if (!args.data.empty()) return run_csv_regression(args, seed);

  const auto known = experiment_names();
  if (std::find(known.begin(), known.end(), args.name) == known.end()) {
    std::cerr << "error: unknown experiment name '" << args.name << "'\n";
    return kExitUsage;
  }

  ExperimentRequest req;
  req.name = args.name;
  req.repeats = args.repeats;
  req.master_seed = seed;
  req.threads = args.threads;
  req.arch_filter = args.archs;
  req.depth_filter = args.depths;
  req.m_filter = args.sizes;
  req.train.epochs = args.epochs;
  if (args.epochs != 2000) {
    // keep the piecewise schedule inside the shortened run
    req.train.lr_boundaries = {(args.epochs * 2) / 5, (args.epochs * 3) / 5,
                               (args.epochs * 3) / 4};
  }

  const ExperimentResult result = run_experiment(req);
  write_results_csv(args.out, result.rows, args.overwrite);
  write_manifest("experiment",
                 Json{{"name", args.name},
                      {"repeats", args.repeats},
                      {"seed", seed},
                      {"threads", args.threads},
                      {"epochs", args.epochs},
                      {"archs", args.archs},
                      {"depths", args.depths},
                      {"sizes", args.sizes},
                      {"overwrite", true},
                      {"out", args.out}},
                 {args.out});
  int retained = 0, total = 0;
  for (const auto& cell : result.cells) {
    ++total;
    if (!cell.outlier) ++retained;
  }
  std::cout << "wrote " << result.rows.size() << " rows to " << args.out << " ("
            << retained << "/" << total << " repeats retained)\n";
  return kExitOk;
}

int run_csv_regression(const ExperimentArgs& args, std::uint64_t seed) {
  const Dataset all = load_csv(args.data);
  const int d = static_cast<int>(all.dim());

  NetworkSpec spec;
  spec.input_dim = d;
  spec.count_head_params = false;
  const int depth = args.depth_for_csv;
  for (int l = 0; l < depth; ++l) {
    const BiasMode bias = l + 1 == depth ? BiasMode::Full : BiasMode::Scalar;
    if (args.arch_for_csv == "dfcn")
      spec.layers.push_back(DenseDesc{10, BiasMode::Full, true, true});
    else
      spec.layers.push_back(ConvDesc{args.arch_for_csv == "cdcnn"
                                         ? ConvKind::Contracting
                                         : ConvKind::Expansive,
                                     2, bias, true, true});
  }

  // deterministic 80/20 split
  std::mt19937_64 rng(seed);
  std::vector<int> order(all.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  const int test_count = std::max<int>(1, static_cast<int>(all.size()) / 5);
  Dataset train, test;
  train.inputs = Matrix(all.size() - test_count, d);
  train.targets = Vector(all.size() - test_count);
  test.inputs = Matrix(test_count, d);
  test.targets = Vector(test_count);
  for (Index i = 0; i < all.size(); ++i) {
    const int row = order[i];
    if (i < test_count) {
      test.inputs.row(i) = all.inputs.row(row);
      test.targets[i] = all.targets[row];
    } else {
      train.inputs.row(i - test_count) = all.inputs.row(row);
      train.targets[i - test_count] = all.targets[row];
    }
  }

  std::vector<ResultRow> rows;
  for (int rep = 0; rep < args.repeats; ++rep) {
    Network net(spec);
    const std::uint64_t cell = cell_seed(seed, "csv|" + std::to_string(rep));
    net.init_params(cell);
    TrainConfig config;
    config.epochs = args.epochs;
    if (args.epochs != 2000)
      config.lr_boundaries = {(args.epochs * 2) / 5, (args.epochs * 3) / 5,
                              (args.epochs * 3) / 4};
    config.seed = cell;
    const TrainResult trained = train_erm(net, train, config);
    ResultRow row;
    row.experiment = "csv:" + args.data;
    row.architecture = args.arch_for_csv;
    row.depth = depth;
    row.m = static_cast<int>(train.size());
    row.seed_count = trained.final_loss() < trained.initial_loss() ? 1 : 0;
    row.rmse_mean = evaluate_rmse(net, test);
    row.rmse_std = 0.0;
    row.params = net.parameter_count();
    rows.push_back(std::move(row));
  }
  write_results_csv(args.out, rows, args.overwrite);
  write_manifest("experiment",
                 Json{{"data", args.data},
                      {"arch", args.arch_for_csv},
                      {"depth", args.depth_for_csv},
                      {"repeats", args.repeats},
                      {"seed", seed},
                      {"epochs", args.epochs},
                      {"overwrite", true},
                      {"out", args.out}},
                 {args.out});
  std::cout << "wrote " << rows.size() << " rows to " << args.out << "\n";
  return kExitOk;
}

int run_rerun(const std::string& manifest_path) {
  Json doc;
  try {
    doc = Json::parse(read_file(manifest_path));
  } catch (const Json::parse_error& e) {
    throw InputError(std::string("manifest: ") + e.what());
  }
  const std::string command = doc.at("command").get<std::string>();
  const Json& config = doc.at("config");
  if (command == "factorize") {
    FactorizeArgs args;
    args.input = config.at("input");
    args.s = config.at("s");
    args.threshold = config.at("threshold");
    args.out = config.at("out");
    return run_factorize(args);
  }
  if (command == "compile") {
    CompileArgs args;
    args.dense = config.at("dense");
    args.s = config.at("s");
    args.bound = config.at("bound");
    args.mode = config.at("mode");
    args.out = config.at("out");
    return run_compile(args);
  }
  if (command == "experiment") {
    ExperimentArgs args;
    args.out = config.at("out");
    args.repeats = config.at("repeats");
    args.seed = config.at("seed").get<std::uint64_t>();
    args.epochs = config.at("epochs");
    args.overwrite = true;
    if (config.contains("data")) {
      args.data = config.at("data");
      args.arch_for_csv = config.at("arch");
      args.depth_for_csv = config.at("depth");
    } else {
      args.name = config.at("name");
      args.threads = config.at("threads");
      args.archs = config.at("archs").get<std::vector<std::string>>();
      args.depths = config.at("depths").get<std::vector<int>>();
      args.sizes = config.at("sizes").get<std::vector<int>>();
    }
    return run_experiment_cmd(args);
  }
  throw InputError("manifest: unknown command '" + command + "'");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"zero-padded convolutional network toolkit"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  FactorizeArgs fac;
  auto* cmd_fac = app.add_subcommand("factorize",
                                     "factor a coefficient sequence into short filters");
  cmd_fac->add_option("--input", fac.input, "coefficient JSON file")->required();
  cmd_fac->add_option("--s", fac.s, "filter length parameter")->required();
  cmd_fac->add_option("--out", fac.out, "output cascade JSON");
  cmd_fac->add_option("--threshold", fac.threshold, "acceptable reconstruction error");
  cmd_fac->add_flag("--json", fac.json, "machine-readable stdout");

  CompileArgs comp;
  auto* cmd_comp = app.add_subcommand("compile",
                                      "compile a dense ReLU network into a filter cascade");
  cmd_comp->add_option("--dense", comp.dense, "dense network JSON")->required();
  cmd_comp->add_option("--s", comp.s, "filter length parameter")->required();
  cmd_comp->add_option("--bound", comp.bound, "input sup-norm bound");
  cmd_comp->add_option("--mode", comp.mode, "bias synthesis: tight or paper")
      ->check(CLI::IsMember({"tight", "paper"}));
  cmd_comp->add_option("--out", comp.out, "output compiled JSON")->required();
  cmd_comp->add_flag("--json", comp.json, "machine-readable stdout");

  VerifyArgs ver;
  auto* cmd_ver = app.add_subcommand("verify",
                                     "check a compiled network against its dense source");
  cmd_ver->add_option("--compiled", ver.compiled, "compiled JSON")->required();
  cmd_ver->add_option("--dense", ver.dense, "dense network JSON")->required();
  cmd_ver->add_option("--probes", ver.probes, "number of random probes");
  cmd_ver->add_flag("--shift-test", ver.shift_test, "also check translation invariance");
  cmd_ver->add_option("--seed", ver.seed, "probe RNG seed");
  cmd_ver->add_option("--tolerance", ver.tolerance, "max relative gap");
  cmd_ver->add_flag("--json", ver.json, "compact stdout");

  ExperimentArgs exp;
  auto* cmd_exp = app.add_subcommand("experiment", "run a named training experiment");
  cmd_exp->add_option("--name", exp.name, "experiment name");
  cmd_exp->add_option("--repeats", exp.repeats, "repeats per cell");
  cmd_exp->add_option("--seed", exp.seed, "master seed (drawn and recorded if absent)");
  cmd_exp->add_option("--threads", exp.threads, "parallel cells (0 = EDCNN_THREADS/auto)");
  cmd_exp->add_option("--epochs", exp.epochs, "training epochs");
  cmd_exp->add_option("--out", exp.out, "results CSV path")->required();
  cmd_exp->add_flag("--overwrite", exp.overwrite, "replace an existing CSV");
  cmd_exp->add_option("--arch", exp.archs, "restrict to these architectures");
  cmd_exp->add_option("--depth", exp.depths, "restrict to these depths");
  cmd_exp->add_option("--m", exp.sizes, "restrict to these sample sizes");
  cmd_exp->add_option("--data", exp.data, "train on a CSV file instead of a named run");
  cmd_exp->add_option("--csv-arch", exp.arch_for_csv, "architecture for --data runs");
  cmd_exp->add_option("--csv-depth", exp.depth_for_csv, "depth for --data runs");

  std::string manifest_path;
  auto* cmd_rerun = app.add_subcommand("rerun", "re-execute a recorded run");
  cmd_rerun->add_option("--manifest", manifest_path, "manifest JSON")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help / --version
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (cmd_fac->parsed()) return run_factorize(fac);
    if (cmd_comp->parsed()) return run_compile(comp);
    if (cmd_ver->parsed()) return run_verify(ver);
    if (cmd_exp->parsed()) {
      if (exp.name.empty() && exp.data.empty()) {
        std::cerr << "error: experiment needs --name or --data\n";
        return kExitUsage;
      }
      return run_experiment_cmd(exp);
    }
    if (cmd_rerun->parsed()) return run_rerun(manifest_path);
  } catch (const NumericFailure& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kExitNumericFailure;
  } catch (const InputError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kExitInvalidInput;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid argument: " << e.what() << "\n";
    return kExitInvalidInput;
  }
  return kExitUsage;
}
