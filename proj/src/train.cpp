#include "edcnn/train.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

namespace edcnn {

double truncate(double m_bound, double t) {
  require(m_bound > 0.0, "truncate: the bound must be positive");
  const double mag = std::min(m_bound, std::abs(t));
  return t < 0.0 ? -mag : mag;
}

double target_f1(const Vector& x) {
  require(x.size() >= 5, "f1 needs at least five coordinates");
  return x[0] + x[1] + x[2] * x[3] + x[4] * x[4];
}

double target_f2(const Vector& x) {
  require(x.size() >= 5, "f2 needs at least five coordinates");
  double sum = 0.0;
  for (Index i = 0; i + 5 <= x.size(); ++i) {
    double prod = 1.0;
    for (Index j = i; j < i + 5; ++j) prod *= x[j];
    sum += prod;
  }
  return sum;
}

double target_f3(const Vector& x) {
  const double r = x.squaredNorm();
  return std::sin(r) + 0.5 * std::cos(r);
}

namespace {

constexpr int kDim = 30;
constexpr int kSupportLen = 5;

int support_start(SupportPosition position, int d, std::mt19937_64& rng) {
  switch (position) {
    case SupportPosition::Beginning: return 1;
    case SupportPosition::Middle: return (d - kSupportLen) / 2 + 1;
    case SupportPosition::End: return d - kSupportLen + 1;
    case SupportPosition::Random: {
      std::uniform_int_distribution<int> pick(1, d - kSupportLen + 1);
      return pick(rng);
    }
  }
  return 1;
}

bool uses_closed_form(GeneratorKind kind) {
  return kind == GeneratorKind::LearnF1 || kind == GeneratorKind::LearnF2 ||
         kind == GeneratorKind::LearnF3;
}

double default_noise(GeneratorKind kind) {
  return kind == GeneratorKind::LearnF3 ? 0.1 : 0.0;  // N(0, 0.01) read as variance
}

const char* generator_name(GeneratorKind kind) {
  switch (kind) {
    case GeneratorKind::FitF1: return "fit_f1";
    case GeneratorKind::FitF2: return "fit_f2";
    case GeneratorKind::FitF3: return "fit_f3";
    case GeneratorKind::F1m: return "f1m";
    case GeneratorKind::F2m: return "f2m";
    case GeneratorKind::LearnF1: return "learn_f1";
    case GeneratorKind::LearnF2: return "learn_f2";
    case GeneratorKind::LearnF3: return "learn_f3";
  }
  return "unknown";
}

Dataset draw_dataset(GeneratorKind kind, int m, SupportPosition position,
                     double noise_std, std::mt19937_64& rng,
                     const Network* target_net, std::uint64_t seed) {
  require(m >= 1, "generate: need at least one sample");
  Dataset data;
  data.inputs = Matrix::Zero(m, kDim);
  data.targets = Vector::Zero(m);
  data.meta = {seed, position, noise_std, generator_name(kind)};

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> sym(-1.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Workspace ws;
  Vector x(kDim);
  for (int i = 0; i < m; ++i) {
    x.setZero();
    if (kind == GeneratorKind::LearnF1) {
      for (int j = 0; j < kDim; ++j) x[j] = sym(rng);
    } else {
      const int start = support_start(position, kDim, rng);
      for (int j = 0; j < kSupportLen; ++j) x[start - 1 + j] = unit(rng);
    }
    double y = 0.0;
    switch (kind) {
      case GeneratorKind::LearnF1: y = target_f1(x); break;
      case GeneratorKind::LearnF2: y = target_f2(x); break;
      case GeneratorKind::LearnF3: y = target_f3(x); break;
      default: y = target_net->forward(x, ws); break;
    }
    if (noise_std > 0.0) y += noise_std * gauss(rng);
    data.inputs.row(i) = x.transpose();
    data.targets[i] = y;
  }
  return data;
}

}  // namespace

Dataset generate(GeneratorKind kind, int m, std::uint64_t seed,
                 SupportPosition position, std::optional<double> noise_std) {
  std::mt19937_64 rng(seed);
  const double noise = noise_std.value_or(default_noise(kind));
  if (uses_closed_form(kind))
    return draw_dataset(kind, m, position, noise, rng, nullptr, seed);
  const Network target = make_target_network(kind, seed);
  return draw_dataset(kind, m, position, noise, rng, &target, seed);
}

ExperimentData make_experiment_data(const ExperimentDef& def, int m,
                                    std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::optional<Network> target;
  if (!uses_closed_form(def.generator))
    target.emplace(make_target_network(def.generator, seed));
  const Network* tp = target ? &*target : nullptr;

  ExperimentData data;
  data.train = draw_dataset(def.generator, m, SupportPosition::Random,
                            def.noise_std, rng, tp, seed);
  const bool single = def.test_positions.size() == 1 && !def.edge_variant;
  for (SupportPosition pos : def.test_positions) {
    std::string label = def.name;
    if (!single) {
      switch (pos) {
        case SupportPosition::Random: break;
        case SupportPosition::Beginning: label += "_beginning"; break;
        case SupportPosition::Middle: label += "_middle"; break;
        case SupportPosition::End: label += "_end"; break;
      }
    }
    data.tests.emplace_back(label, draw_dataset(def.generator, def.test_size, pos,
                                                def.noise_std, rng, tp, seed));
  }
  if (def.edge_variant)
    data.tests.emplace_back(def.name + "_edge",
                            draw_dataset(def.generator, def.test_size,
                                         SupportPosition::End, def.noise_std, rng,
                                         tp, seed));
  return data;
}

void TrainConfig::validate() const {
  require(epochs >= 1, "train config: epochs must be positive");
  require(lr_rates.size() == lr_boundaries.size() + 1,
          "train config: need one rate per schedule segment");
  for (std::size_t i = 0; i < lr_boundaries.size(); ++i) {
    require(lr_boundaries[i] < epochs, "train config: boundary past the last epoch");
    if (i > 0)
      require(lr_boundaries[i] > lr_boundaries[i - 1],
              "train config: boundaries must increase");
  }
}

double TrainConfig::rate_at(int epoch) const {
  std::size_t k = 0;
  while (k < lr_boundaries.size() && epoch >= lr_boundaries[k]) ++k;
  return lr_rates[k];
}

namespace {

double full_mse(const Network& net, const Dataset& data, Workspace& ws) {
  double acc = 0.0;
  for (Index i = 0; i < data.size(); ++i) {
    const double diff = net.forward(data.inputs.row(i).transpose(), ws) - data.targets[i];
    acc += diff * diff;
  }
  return acc / static_cast<double>(data.size());
}

}  // namespace

TrainResult train_erm(Network& net, const Dataset& data, const TrainConfig& config) {
  config.validate();
  require(data.size() >= 1, "train: empty dataset");
  require(data.dim() == net.spec().input_dim, "train: input width mismatch");

  const int m = static_cast<int>(data.size());
  const int batch = config.batch_size > 0 ? std::min(config.batch_size, m)
                     : m <= 1000          ? m
                                          : 128;
  std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<int> order(m);
  std::iota(order.begin(), order.end(), 0);

  const Index np = net.params().size();
  Vector grad = Vector::Zero(np);
  Vector m1 = Vector::Zero(np);
  Vector m2 = Vector::Zero(np);
  const Vector& mask = net.trainable_mask();
  Workspace ws;
  Vector x(data.dim());

  TrainResult result;
  result.loss_trace = Vector::Zero(config.epochs + 1);

  long step = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = config.rate_at(epoch);
    if (batch < m) std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    long epoch_terms = 0;
    for (int begin = 0; begin < m; begin += batch) {
      const int count = std::min(batch, m - begin);
      grad.setZero();
      double batch_loss = 0.0;
      for (int i = 0; i < count; ++i) {
        const int row = order[begin + i];
        x = data.inputs.row(row).transpose();
        const double pred = net.forward(x, ws);
        const double diff = pred - data.targets[row];
        batch_loss += diff * diff;
        net.backward(x, 2.0 * diff / count, ws, grad);
      }
      batch_loss /= count;
      epoch_loss += batch_loss * count;
      epoch_terms += count;

      ++step;
      const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(step));
      m1 = config.beta1 * m1 + (1.0 - config.beta1) * grad;
      m2 = config.beta2 * m2 + (1.0 - config.beta2) * grad.cwiseProduct(grad);
      net.params().array() -=
          mask.array() * (lr * (m1.array() / c1) /
                          ((m2.array() / c2).sqrt() + config.epsilon));
    }
    const double loss = epoch_loss / static_cast<double>(epoch_terms);
    if (!std::isfinite(loss))
      throw NumericFailure("training loss diverged at epoch " + std::to_string(epoch));
    result.loss_trace[epoch] = loss;
  }
  result.loss_trace[config.epochs] = full_mse(net, data, ws);
  return result;
}

double evaluate_rmse(const Network& net, const Dataset& data,
                     std::optional<double> truncation_M) {
  require(data.size() >= 1, "evaluate: empty dataset");
  Workspace ws;
  double acc = 0.0;
  for (Index i = 0; i < data.size(); ++i) {
    double pred = net.forward(data.inputs.row(i).transpose(), ws);
    if (truncation_M) pred = truncate(*truncation_M, pred);
    const double diff = pred - data.targets[i];
    acc += diff * diff;
  }
  return std::sqrt(acc / static_cast<double>(data.size()));
}

std::uint64_t cell_seed(std::uint64_t master, const std::string& tag) {
  std::uint64_t h = 1469598103934665603ULL ^ master;
  for (unsigned char c : tag) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  h ^= master >> 32;
  h *= 1099511628211ULL;
  return h;
}

int env_thread_cap() {
  if (const char* env = std::getenv("EDCNN_THREADS")) {
    const int v = std::atoi(env);
    if (v >= 1) return v;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

namespace {

template <typename T>
bool pass_filter(const std::vector<T>& filter, const T& value) {
  return filter.empty() || std::find(filter.begin(), filter.end(), value) != filter.end();
}

}  // namespace

ExperimentResult run_experiment(const ExperimentRequest& req) {
  const ExperimentDef def = build_experiment_config(req.name);
  require(req.repeats >= 1, "experiment: need at least one repeat");

  std::vector<int> m_values = def.m_grid.empty() ? std::vector<int>{def.train_size}
                                                 : def.m_grid;
  std::erase_if(m_values, [&](int m) { return !pass_filter(req.m_filter, m); });
  std::vector<ArchConfig> archs;
  for (const auto& arch : def.archs)
    if (pass_filter(req.arch_filter, arch.label) && pass_filter(req.depth_filter, arch.depth))
      archs.push_back(arch);
  require(!archs.empty() && !m_values.empty(), "experiment: filters removed every cell");

  struct CellPlan {
    const ArchConfig* arch;
    int m;
    int repeat;
  };
  std::vector<CellPlan> plan;
  for (const auto& arch : archs)
    for (int m : m_values)
      for (int r = 0; r < req.repeats; ++r) plan.push_back({&arch, m, r});

  std::vector<CellOutcome> cells(plan.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (;;) {
      const std::size_t idx = next.fetch_add(1);
      if (idx >= plan.size()) return;
      const CellPlan& item = plan[idx];
      CellOutcome& out = cells[idx];
      out.architecture = item.arch->label;
      out.depth = item.arch->depth;
      out.m = item.m;
      out.repeat = item.repeat;
      out.data_seed = cell_seed(req.master_seed,
                                def.name + "|data|" + std::to_string(item.m) + "|" +
                                    std::to_string(item.repeat));
      out.train_seed = cell_seed(
          req.master_seed, def.name + "|train|" + item.arch->label + "|" +
                               std::to_string(item.arch->depth) + "|" +
                               std::to_string(item.m) + "|" + std::to_string(item.repeat));

      const auto started = std::chrono::steady_clock::now();
      const ExperimentData data = make_experiment_data(def, item.m, out.data_seed);
      Network net(item.arch->spec);
      net.init_params(out.train_seed);
      TrainConfig config = req.train;
      config.seed = out.train_seed;
      const TrainResult trained = train_erm(net, data.train, config);
      out.train_initial = trained.initial_loss();
      out.train_final = trained.final_loss();
      out.outlier = !(out.train_final < out.train_initial);
      for (const auto& [label, test] : data.tests)
        out.rmse[label] = evaluate_rmse(net, test, config.truncation_M);
      out.params = net.parameter_count();
      out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                                  started)
                        .count();
    }
  };

  int threads = req.threads > 0 ? req.threads : env_thread_cap();
  threads = std::min<int>(threads, static_cast<int>(plan.size()));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  // Aggregate: one row per (row-group label, architecture, depth, m).
  ExperimentResult result;
  result.name = def.name;
  std::vector<std::string> labels;
  if (!cells.empty())
    for (const auto& [label, _] : cells.front().rmse) labels.push_back(label);

  for (const std::string& label : labels) {
    for (const auto& arch : archs) {
      for (int m : m_values) {
        ResultRow row;
        row.experiment = label;
        row.architecture = arch.label;
        row.depth = arch.depth;
        row.m = m;
        std::vector<double> values;
        for (const auto& cell : cells) {
          if (cell.architecture != arch.label || cell.depth != arch.depth ||
              cell.m != m)
            continue;
          row.params = cell.params;
          row.seconds += cell.seconds;
          if (!cell.outlier) values.push_back(cell.rmse.at(label));
        }
        row.seed_count = static_cast<int>(values.size());
        if (!values.empty()) {
          const double mean =
              std::accumulate(values.begin(), values.end(), 0.0) / values.size();
          double var = 0.0;
          for (double v : values) var += (v - mean) * (v - mean);
          row.rmse_mean = mean;
          row.rmse_std = values.size() > 1 ? std::sqrt(var / (values.size() - 1)) : 0.0;
        } else {
          row.rmse_mean = std::numeric_limits<double>::quiet_NaN();
          row.rmse_std = std::numeric_limits<double>::quiet_NaN();
        }
        result.rows.push_back(std::move(row));
      }
    }
  }
  result.cells = std::move(cells);
  return result;
}

namespace {

bool parse_double(const std::string& field, double& out) {
  const char* begin = field.data();
  const char* end = begin + field.size();
  const auto res = std::from_chars(begin, end, out);
  return res.ec == std::errc() && res.ptr == end;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) {
    // trim surrounding whitespace
    const auto a = field.find_first_not_of(" \t\r");
    const auto b = field.find_last_not_of(" \t\r");
    fields.push_back(a == std::string::npos ? "" : field.substr(a, b - a + 1));
  }
  if (!line.empty() && line.back() == ',') fields.push_back("");
  return fields;
}

}  // namespace

Dataset load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open: " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  int line_no = 0;
  std::size_t columns = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto fields = split_csv_line(line);
    std::vector<double> values(fields.size());
    bool numeric = true;
    for (std::size_t i = 0; i < fields.size(); ++i)
      if (!parse_double(fields[i], values[i])) {
        numeric = false;
        break;
      }
    if (!numeric) {
      if (rows.empty() && columns == 0) {
        columns = fields.size();  // header row
        continue;
      }
      throw InputError(path + ":" + std::to_string(line_no) + ": non-numeric row");
    }
    if (columns == 0) columns = fields.size();
    if (fields.size() != columns)
      throw InputError(path + ":" + std::to_string(line_no) + ": expected " +
                       std::to_string(columns) + " fields, got " +
                       std::to_string(fields.size()));
    rows.push_back(std::move(values));
  }
  if (rows.empty()) throw InputError(path + ": no data rows");
  require(columns >= 2, "csv: need at least one feature column plus the target");

  Dataset data;
  data.inputs = Matrix::Zero(static_cast<Index>(rows.size()), static_cast<Index>(columns - 1));
  data.targets = Vector::Zero(static_cast<Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j + 1 < columns; ++j) data.inputs(i, j) = rows[i][j];
    data.targets[static_cast<Index>(i)] = rows[i][columns - 1];
  }
  data.meta.generator = "csv";
  return data;
}

void write_results_csv(const std::string& path, const std::vector<ResultRow>& rows,
                       bool overwrite) {
  if (!overwrite) {
    std::ifstream probe(path);
    if (probe.good()) throw InputError(path + " exists; pass the overwrite flag");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot open for writing: " + path);
  out << "experiment,architecture,depth,m,seed_count,rmse_mean,rmse_std,params,seconds\n";
  char buf[512];
  for (const auto& row : rows) {
    if (row.seed_count > 0) {
      std::snprintf(buf, sizeof buf, "%s,%s,%d,%d,%d,%.6e,%.6e,%ld,%.3f\n",
                    row.experiment.c_str(), row.architecture.c_str(), row.depth,
                    row.m, row.seed_count, row.rmse_mean, row.rmse_std, row.params,
                    row.seconds);
    } else {
      std::snprintf(buf, sizeof buf, "%s,%s,%d,%d,%d,,,%ld,%.3f\n",
                    row.experiment.c_str(), row.architecture.c_str(), row.depth,
                    row.m, row.seed_count, row.params, row.seconds);
    }
    out << buf;
  }
}

}  // namespace edcnn
