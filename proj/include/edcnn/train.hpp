#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "edcnn/nets.hpp"

namespace edcnn {

struct DatasetMeta {
  std::uint64_t seed = 0;
  SupportPosition support_position = SupportPosition::Random;
  double noise_std = 0.0;
  std::string generator;
};

/// Paired inputs (rows) and scalar targets.
struct Dataset {
  Matrix inputs;
  Vector targets;
  DatasetMeta meta;

  Index size() const { return inputs.rows(); }
  Index dim() const { return inputs.cols(); }
};

/// pi_M: clamps t to [-M, M] keeping the sign.
double truncate(double m_bound, double t);

// Closed-form regression targets of the learning experiments.
double target_f1(const Vector& x);
double target_f2(const Vector& x);
double target_f3(const Vector& x);

/// Draws one dataset: 30-dimensional inputs carrying five consecutive
/// uniform [0,1) entries at the requested position (dense (-1,1) inputs for
/// the first learning target), with targets from the named generator. The
/// frozen target networks of the fit experiments are derived from the same
/// seed.
Dataset generate(GeneratorKind kind, int m, std::uint64_t seed,
                 SupportPosition position,
                 std::optional<double> noise_std = std::nullopt);

struct ExperimentData {
  Dataset train;
  std::vector<std::pair<std::string, Dataset>> tests;  // row-group label -> set
};

/// Train set plus one test set per row group (test positions, edge variant),
/// all drawn from one stream so every set shares the same target function.
ExperimentData make_experiment_data(const ExperimentDef& def, int m,
                                    std::uint64_t seed);

struct TrainConfig {
  int epochs = 2000;
  std::vector<double> lr_rates = {0.003, 0.001, 0.0003, 0.0001};
  std::vector<int> lr_boundaries = {800, 1200, 1500};
  int batch_size = 0;  // 0: full batch for m <= 1000, else 128
  std::uint64_t seed = 0;
  std::optional<double> truncation_M;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const;
  double rate_at(int epoch) const;
};

struct TrainResult {
  Vector loss_trace;  // entry e = training MSE entering epoch e; last = final

  double initial_loss() const { return loss_trace[0]; }
  double final_loss() const { return loss_trace[loss_trace.size() - 1]; }
};

/// Adam on the mean squared error; deterministic for a fixed seed.
TrainResult train_erm(Network& net, const Dataset& data, const TrainConfig& config);

/// Root mean squared error on the given set; predictions are truncated when
/// a bound is supplied.
double evaluate_rmse(const Network& net, const Dataset& data,
                     std::optional<double> truncation_M = std::nullopt);

struct ResultRow {
  std::string experiment;
  std::string architecture;
  int depth = 0;
  int m = 0;
  int seed_count = 0;
  double rmse_mean = 0.0;
  double rmse_std = 0.0;
  long params = 0;
  double seconds = 0.0;
};

struct CellOutcome {
  std::string architecture;
  int depth = 0;
  int m = 0;
  int repeat = 0;
  std::uint64_t data_seed = 0;
  std::uint64_t train_seed = 0;
  bool outlier = false;
  double train_initial = 0.0;
  double train_final = 0.0;
  std::map<std::string, double> rmse;  // row-group label -> test RMSE
  long params = 0;
  double seconds = 0.0;
};

struct ExperimentResult {
  std::string name;
  std::vector<ResultRow> rows;
  std::vector<CellOutcome> cells;
};

struct ExperimentRequest {
  std::string name;
  int repeats = 10;
  std::uint64_t master_seed = 0;
  int threads = 0;  // 0: EDCNN_THREADS env var, else hardware concurrency
  std::vector<std::string> arch_filter;  // empty = every architecture
  std::vector<int> depth_filter;
  std::vector<int> m_filter;
  TrainConfig train;
};

/// Trains every (architecture x depth x sample size x repeat) cell, drops
/// repeats whose training loss did not decrease, and aggregates test RMSE
/// per row group. Cells run in parallel; each owns its seeds.
ExperimentResult run_experiment(const ExperimentRequest& req);

/// Deterministic seed for a cell, derived by hashing its coordinates.
std::uint64_t cell_seed(std::uint64_t master, const std::string& tag);

/// Generic CSV regression: feature columns plus one target column, header
/// row detected by a non-numeric first line.
Dataset load_csv(const std::string& path);

void write_results_csv(const std::string& path, const std::vector<ResultRow>& rows,
                       bool overwrite);

int env_thread_cap();

}  // namespace edcnn
