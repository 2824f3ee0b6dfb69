// Acceptance suite: one checkable criterion per entry, each printing a
// PASS/FAIL line with its measured numbers. Run with no arguments for the
// whole battery or pass criterion numbers to select.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "edcnn/factorize.hpp"
#include "edcnn/nets.hpp"
#include "edcnn/train.hpp"

using namespace edcnn;

namespace {

constexpr std::uint64_t kMasterSeed = 20240811ULL;

struct Criterion {
  int id;
  const char* summary;
  std::function<bool(std::string&)> run;
};

char buffer[1024];

std::string fmt(const char* pattern, auto... args) {
  std::snprintf(buffer, sizeof buffer, pattern, args...);
  return buffer;
}

Vector random_vec(Index n, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> unif(lo, hi);
  Vector v(n);
  for (Index i = 0; i < n; ++i) v[i] = unif(rng);
  return v;
}

Matrix random_matrix(Index rows, Index cols, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  Matrix m(rows, cols);
  for (Index r = 0; r < rows; ++r)
    for (Index c = 0; c < cols; ++c) m(r, c) = unif(rng);
  return m;
}

Filter random_filter(int s, std::mt19937_64& rng) {
  return Filter(random_vec(s + 1, rng));
}

// --- 1: commutativity of filter composition ---------------------------------

bool criterion_commutativity(std::string& metrics) {
  std::mt19937_64 rng(kMasterSeed + 1);
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const int s = 2 + static_cast<int>(rng() % 7);
    const Filter a = random_filter(s, rng);
    const Filter b = random_filter(s, rng);
    worst = std::max(worst,
                     (conv_compose(a, b).coeffs - conv_compose(b, a).coeffs)
                         .cwiseAbs()
                         .maxCoeff());
  }
  metrics = fmt("max gap %.2e (tol 1e-13)", worst);
  return worst <= 1e-13;
}

// --- 2: translation equivariance of expansive stacks ------------------------

bool criterion_equivariance(std::string& metrics) {
  std::mt19937_64 rng(kMasterSeed + 2);
  double worst = 0.0;
  int checks = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const int s = 1 + static_cast<int>(rng() % 4);
    const int layers = 1 + static_cast<int>(rng() % 6);
    const int d = 8 + static_cast<int>(rng() % 25);
    const int p = 1 + static_cast<int>(rng() % (d - 1));
    std::vector<Filter> stack;
    for (int l = 0; l < layers; ++l) stack.push_back(random_filter(s, rng));
    const SupportedVector v = SupportedVector::place(d, 1, random_vec(p, rng));
    for (int j = 1; j <= d - p + 1; ++j) {
      const auto report = equivariance_check(ConvKind::Expansive, stack, v, j);
      worst = std::max(worst, report.max_abs_gap);
      ++checks;
      if (!report.holds) {
        metrics = fmt("failed at trial %d shift %d, gap %.2e", trial, j,
                      report.max_abs_gap);
        return false;
      }
    }
  }
  metrics = fmt("%d shift checks, max gap %.2e (tol 1e-10)", checks, worst);
  return worst <= 1e-10;
}

// --- 3: contracting failure witness ------------------------------------------

bool criterion_witness(std::string& metrics) {
  const auto witness = find_equivariance_witness(2, 10, 2);
  if (!witness) {
    metrics = "no witness found";
    return false;
  }
  const SupportedVector v = SupportedVector::place(10, 1, Vector::Ones(2));
  const auto recheck =
      equivariance_check(ConvKind::Contracting, {witness->first}, v, witness->second);
  metrics = fmt("witness shift %d, re-check gap %.2e (needs > 1e-6)",
                witness->second, recheck.max_abs_gap);
  return !recheck.holds && recheck.max_abs_gap > 1e-6;
}

// --- 4: filter factorization --------------------------------------------------

bool criterion_factorization(std::string& metrics) {
  std::mt19937_64 rng(kMasterSeed + 4);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int degree = 2 + static_cast<int>(rng() % 59);  // S <= 60
    const int s = std::vector<int>{2, 3, 5}[rng() % 3];
    const SymbolPolynomial u{random_vec(degree + 1, rng)};
    if (u.is_zero()) continue;
    const FilterCascade cascade = factor_filter(u, s);
    const int eff = u.effective_degree();
    const int bound = eff <= s ? 1 : (eff + s - 2) / (s - 1);
    if (static_cast<int>(cascade.filters.size()) > bound) {
      metrics = fmt("trial %d: L=%zu exceeds ceil(S/(s-1))=%d", trial,
                    cascade.filters.size(), bound);
      return false;
    }
    worst = std::max(worst, cascade.reconstruction_error);
  }
  metrics = fmt("100 polynomials, worst relative error %.2e (tol 1e-8)", worst);
  return worst <= 1e-8;
}

// --- 5: shallow-net compilation ----------------------------------------------

bool criterion_shallow_compiler(std::string& metrics) {
  std::mt19937_64 rng(kMasterSeed + 5);
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 1 + static_cast<int>(rng() % 8);
    const int d = 2 + static_cast<int>(rng() % 7);
    const int s = 2 + static_cast<int>(rng() % std::min(d - 1, 4));
    const Matrix w = random_matrix(n, d, rng);
    const Vector theta = random_vec(n, rng);
    const CompiledStage stage = compile_dense_layer(w, theta, s, 1.0);

    const long l_star = static_cast<long>(stage.filters.size());
    if (l_star * (s + 1) > 3L * n * d) {
      metrics = fmt("trial %d: parameter bound violated (L*(s+1)=%ld > 3nd=%ld)",
                    trial, l_star * (s + 1), 3L * n * d);
      return false;
    }
    for (int probe = 0; probe < 100; ++probe) {
      const Vector x = random_vec(d, rng, 0.0, 1.0);
      const Vector want = (w * x + theta).cwiseMax(0.0);
      const Vector got = stage_forward(stage, x);
      worst = std::max(worst, (want - got).cwiseAbs().maxCoeff() /
                                  std::max(1.0, want.cwiseAbs().maxCoeff()));
    }
  }
  metrics = fmt("50 layers x 100 probes, worst relative gap %.2e (tol 1e-6)", worst);
  return worst <= 1e-6;
}

// --- 6: deep-net compilation and invariance -----------------------------------

bool criterion_dfcn_compiler(std::string& metrics) {
  std::mt19937_64 rng(kMasterSeed + 6);
  double worst = 0.0;
  double worst_shift = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const int layers = 2 + static_cast<int>(rng() % 2);
    std::vector<int> widths{2 + static_cast<int>(rng() % 7)};
    for (int l = 0; l < layers; ++l) widths.push_back(2 + static_cast<int>(rng() % 7));
    int min_in = widths.front();
    for (int l = 0; l + 1 < layers; ++l) min_in = std::min(min_in, widths[l + 1]);
    const int s = 2 + static_cast<int>(rng() % std::max(1, std::min(min_in - 1, 3)));

    DenseNet net;
    for (int l = 0; l < layers; ++l)
      net.layers.push_back({random_matrix(widths[l + 1], widths[l], rng),
                            random_vec(widths[l + 1], rng), true});
    const CompiledEdcnn compiled = compile_dense_net(net, s, 1.0);

    for (int probe = 0; probe < 100; ++probe) {
      const Vector x = random_vec(widths.front(), rng);
      const Vector want = net.features(x);
      worst = std::max(worst, (forward(compiled, x) - want).cwiseAbs().maxCoeff() /
                                  std::max(1.0, want.cwiseAbs().maxCoeff()));
    }

    const int d = widths.front();
    const int p = 1 + static_cast<int>(rng() % (d - 1));
    const SupportedVector x =
        SupportedVector::place(d, 1, random_vec(p, rng, 0.0, 1.0));
    for (int k = 0; k <= d - p; ++k) {
      const auto report = verify_translation_invariance(compiled, x, k);
      worst_shift = std::max(worst_shift, report.max_abs_gap);
      if (!report.equal) {
        metrics = fmt("trial %d: shift %d broke invariance, gap %.2e", trial, k,
                      report.max_abs_gap);
        return false;
      }
    }
  }
  metrics = fmt("worst forward gap %.2e (tol 1e-6), worst shift gap %.2e (tol 1e-9)",
                worst, worst_shift);
  return worst <= 1e-6;
}

// --- 7: gradient correctness ---------------------------------------------------

void randomize_params(Network& net, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unif(-0.6, 0.6);
  for (Index i = 0; i < net.params().size(); ++i) net.params()[i] = unif(rng);
}

bool kink_safe(const Network& net, const Vector& x, double margin = 1e-3) {
  Workspace ws;
  net.forward(x, ws);
  for (std::size_t l = 0; l < net.spec().layers.size(); ++l) {
    bool activated = false;
    if (const auto* d = std::get_if<DenseDesc>(&net.spec().layers[l]))
      activated = d->activated;
    else if (const auto* c = std::get_if<ConvDesc>(&net.spec().layers[l]))
      activated = c->activated;
    if (activated && ws.pre[l].cwiseAbs().minCoeff() < margin) return false;
  }
  return true;
}

bool criterion_gradients(std::string& metrics) {
  std::mt19937_64 rng(kMasterSeed + 7);
  const ExperimentDef def = build_experiment_config("learn_f3");
  double worst = 0.0;
  for (const auto& arch : def.archs) {
    if (arch.depth != 4) continue;  // one representative depth per architecture
    for (int seed = 0; seed < 10; ++seed) {
      Network net(arch.spec);
      randomize_params(net, rng);
      Vector x(arch.spec.input_dim);
      do {
        x = random_vec(arch.spec.input_dim, rng, 0.05, 1.0);
      } while (!kink_safe(net, x));
      const Vector grad = net.gradient(x);
      const double h = 1e-5;
      for (Index i = 0; i < net.params().size(); ++i) {
        const double keep = net.params()[i];
        net.params()[i] = keep + h;
        const double up = net.forward(x);
        net.params()[i] = keep - h;
        const double down = net.forward(x);
        net.params()[i] = keep;
        const double fd = (up - down) / (2.0 * h);
        worst = std::max(worst, std::abs(grad[i] - fd) /
                                    std::max({1.0, std::abs(grad[i]), std::abs(fd)}));
      }
    }
  }
  metrics = fmt("five architectures x 10 seeds, worst relative error %.2e (tol 1e-4)",
                worst);
  return worst <= 1e-4;
}

// --- 8-10: trained directions ---------------------------------------------------

const ResultRow* find_row(const ExperimentResult& result, const std::string& experiment,
                          const std::string& arch, int m, int depth = -1) {
  for (const auto& row : result.rows)
    if (row.experiment == experiment && row.architecture == arch && row.m == m &&
        (depth < 0 || row.depth == depth))
      return &row;
  return nullptr;
}

bool criterion_fit_direction(std::string& metrics) {
  metrics.clear();
  bool ok = true;
  for (const char* name : {"fit_f1", "fit_f2"}) {
    ExperimentRequest req;
    req.name = name;
    req.repeats = 10;
    req.master_seed = kMasterSeed;
    req.arch_filter = {"fc-1layer", "edcnn-1block"};
    const ExperimentResult result = run_experiment(req);
    const ResultRow* fc = find_row(result, name, "fc-1layer", 900);
    const ResultRow* conv = find_row(result, name, "edcnn-1block", 900);
    if (fc == nullptr || conv == nullptr || fc->seed_count == 0 ||
        conv->seed_count == 0) {
      metrics += fmt("%s: missing rows; ", name);
      ok = false;
      continue;
    }
    int wins = 0, paired = 0;
    std::map<int, double> fc_by_repeat, conv_by_repeat;
    for (const auto& cell : result.cells) {
      if (cell.outlier) continue;
      if (cell.architecture == "fc-1layer") fc_by_repeat[cell.repeat] = cell.rmse.at(name);
      if (cell.architecture == "edcnn-1block")
        conv_by_repeat[cell.repeat] = cell.rmse.at(name);
    }
    for (const auto& [repeat, loss] : conv_by_repeat) {
      const auto it = fc_by_repeat.find(repeat);
      if (it == fc_by_repeat.end()) continue;
      ++paired;
      if (loss < it->second) ++wins;
    }
    const bool direction = conv->rmse_mean < fc->rmse_mean && 2 * wins > paired;
    const bool params_ok = conv->params == 16 && fc->params == 300;
    metrics +=
        fmt("%s: edcnn %.3e (n=%d) vs fc %.3e (n=%d), wins %d/%d, params %ld<%ld; ",
            name, conv->rmse_mean, conv->seed_count, fc->rmse_mean, fc->seed_count,
            wins, paired, conv->params, fc->params);
    ok = ok && direction && params_ok;
  }
  return ok;
}

bool criterion_edge_direction(std::string& metrics) {
  ExperimentRequest req;
  req.name = "f2m";
  req.repeats = 10;
  req.master_seed = kMasterSeed;
  req.arch_filter = {"cdcnn_S", "edcnn_S"};
  const ExperimentResult result = run_experiment(req);
  const ResultRow* cdcnn = find_row(result, "f2m_edge", "cdcnn_S", 900);
  const ResultRow* edcnn = find_row(result, "f2m_edge", "edcnn_S", 900);
  if (cdcnn == nullptr || edcnn == nullptr || cdcnn->seed_count == 0 ||
      edcnn->seed_count == 0) {
    metrics = "missing rows";
    return false;
  }
  metrics = fmt("edge test rmse: edcnn %.3e (n=%d) vs cdcnn %.3e (n=%d)",
                edcnn->rmse_mean, edcnn->seed_count, cdcnn->rmse_mean,
                cdcnn->seed_count);
  return edcnn->rmse_mean < cdcnn->rmse_mean;
}

// pool-adjacent-violators fit to a non-increasing sequence
std::vector<double> isotonic_non_increasing(const std::vector<double>& values) {
  std::vector<double> level, weight;
  for (double v : values) {
    level.push_back(v);
    weight.push_back(1.0);
    while (level.size() > 1 && level[level.size() - 2] < level.back()) {
      const double w = weight[weight.size() - 2] + weight.back();
      const double merged = (level[level.size() - 2] * weight[weight.size() - 2] +
                             level.back() * weight.back()) /
                            w;
      level.pop_back();
      weight.pop_back();
      level.back() = merged;
      weight.back() = w;
    }
  }
  std::vector<double> fitted;
  for (std::size_t i = 0; i < level.size(); ++i)
    for (int k = 0; k < static_cast<int>(weight[i]); ++k) fitted.push_back(level[i]);
  return fitted;
}

bool criterion_consistency(std::string& metrics) {
  ExperimentRequest req;
  req.name = "consistency_f2";
  req.repeats = 10;
  req.master_seed = kMasterSeed;
  req.arch_filter = {"edcnn"};
  const ExperimentResult result = run_experiment(req);

  const std::vector<int> grid{250, 500, 1000, 2000, 4000};
  std::vector<double> best_mean;
  for (int m : grid) {
    double best = std::numeric_limits<double>::infinity();
    for (int depth : {2, 4, 6}) {
      const ResultRow* row = find_row(result, "consistency_f2", "edcnn", m, depth);
      if (row != nullptr && row->seed_count > 0) best = std::min(best, row->rmse_mean);
    }
    if (!std::isfinite(best)) {
      metrics = fmt("missing cell at m=%d", m);
      return false;
    }
    best_mean.push_back(best);
  }

  const std::vector<double> fitted = isotonic_non_increasing(best_mean);
  bool monotone = true;
  for (std::size_t i = 1; i < fitted.size(); ++i)
    if (fitted[i] > fitted[i - 1] + 1e-15) monotone = false;

  metrics = fmt("rmse by m: %.3e %.3e %.3e %.3e %.3e; smoothed ends %.3e -> %.3e",
                best_mean[0], best_mean[1], best_mean[2], best_mean[3], best_mean[4],
                fitted.front(), fitted.back());
  return best_mean.back() < best_mean.front() && monotone &&
         fitted.back() < fitted.front();
}

// --- 11: serialization round trip ----------------------------------------------

bool criterion_serialization(std::string& metrics) {
  std::mt19937_64 rng(kMasterSeed + 11);
  DenseNet net;
  net.layers.push_back({random_matrix(5, 7, rng), random_vec(5, rng), true});
  net.layers.push_back({random_matrix(4, 5, rng), random_vec(4, rng), true});
  const CompiledEdcnn compiled = compile_dense_net(net, 2, 1.0);

  const std::string path = "/tmp/edcnn_acceptance_roundtrip.json";
  save_compiled(compiled, path);
  const CompiledEdcnn loaded = load_compiled(path);
  const std::string again = compiled_to_json(loaded);
  const std::string original = compiled_to_json(compiled);
  std::remove(path.c_str());
  if (again != original) {
    metrics = "re-saved JSON differs byte-wise";
    return false;
  }
  double worst = 0.0;
  for (int probe = 0; probe < 100; ++probe) {
    const Vector x = random_vec(7, rng);
    const Vector want = net.features(x);
    worst = std::max(worst, (forward(loaded, x) - want).cwiseAbs().maxCoeff() /
                                std::max(1.0, want.cwiseAbs().maxCoeff()));
  }
  metrics = fmt("byte-identical re-save, worst gap after reload %.2e (tol 1e-6)", worst);
  return worst <= 1e-6;
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria{
      {1, "filter composition commutes (200 random pairs, s in 2..8)",
       criterion_commutativity},
      {2, "expansive stacks are translation equivariant (50 stacks, all shifts)",
       criterion_equivariance},
      {3, "contracting witness at s=2, d'=10, p=2 re-checks as a failure",
       criterion_witness},
      {4, "factorization reconstructs 100 random polynomials (S <= 60)",
       criterion_factorization},
      {5, "compiled shallow layers match sigma(Wx+theta) within 1e-6",
       criterion_shallow_compiler},
      {6, "compiled 2-3 layer networks match and stay translation invariant",
       criterion_dfcn_compiler},
      {7, "all five trainable architectures pass finite-difference checks",
       criterion_gradients},
      {8, "fit_f1/fit_f2: 16-parameter eDCNN beats the 300-parameter dense layer",
       criterion_fit_direction},
      {9, "f2m edge test: eDCNN beats cDCNN when the support sits on the edge",
       criterion_edge_direction},
      {10, "eDCNN test RMSE on f2 decreases from m=250 to m=4000",
       criterion_consistency},
      {11, "compiled networks round-trip byte-identically and still verify",
       criterion_serialization},
  };

  // runtime ceilings from the acceptance contract, in seconds
  const std::map<int, double> runtime_limit{{1, 1.0},  {2, 5.0},  {3, 1.0},
                                            {4, 30.0}, {5, 60.0}, {6, 120.0},
                                            {7, 60.0}};

  std::vector<int> selected;
  for (int i = 1; i < argc; ++i) selected.push_back(std::atoi(argv[i]));

  int failures = 0;
  for (const auto& criterion : criteria) {
    if (!selected.empty() &&
        std::find(selected.begin(), selected.end(), criterion.id) == selected.end())
      continue;
    std::string metrics;
    const auto started = std::chrono::steady_clock::now();
    bool pass = false;
    try {
      pass = criterion.run(metrics);
    } catch (const std::exception& e) {
      metrics = std::string("exception: ") + e.what();
    }
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started)
            .count();
    const auto limit = runtime_limit.find(criterion.id);
    if (limit != runtime_limit.end() && elapsed > limit->second) {
      pass = false;
      metrics += fmt(" [over runtime limit %.0fs]", limit->second);
    }
    std::printf("%s criterion %2d: %s (%s, %.2fs)\n", pass ? "PASS" : "FAIL",
                criterion.id, criterion.summary, metrics.c_str(), elapsed);
    std::fflush(stdout);
    if (!pass) ++failures;
  }
  return failures == 0 ? 0 : 1;
}
