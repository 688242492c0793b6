// stableseq command-line tool: data generation, pool training, sequence
// selection, frontier sweeps and adaptive-retraining reports. Every command
// writes a manifest recording its arguments and the SHA-256 of its inputs and
// outputs; `replay` re-runs a manifest and checks the outputs byte for byte.

#include <openssl/evp.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "stableseq.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace stableseq;

namespace {

constexpr const char* kVersion = "0.1.0";

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

unsigned worker_threads() {
  unsigned n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("STABLESEQ_THREADS")) {
    try {
      const long cap = std::stol(env);
      if (cap < 1) throw std::invalid_argument(env);
      n = std::min<unsigned>(n, static_cast<unsigned>(cap));
    } catch (const std::exception&) {
      throw UsageError(std::string("STABLESEQ_THREADS must be a positive integer, got '") + env + "'");
    }
  }
  return n;
}

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    EVP_DigestUpdate(ctx, buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, digest, &len);
  EVP_MD_CTX_free(ctx);
  std::ostringstream hex;
  for (unsigned i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  return hex.str();
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(1) + "\n"); }

std::string format_double(double v) {
  std::ostringstream out;
  out.precision(17);
  out << v;
  return out.str();
}

/// Inputs read and outputs written by one command.
class Manifest {
 public:
  Manifest(std::string command, std::vector<std::string> argv) : command_(std::move(command)), argv_(std::move(argv)) {}

  json params = json::object();
  std::optional<std::uint64_t> seed;

  void input(const fs::path& p) { inputs_.push_back(p); }
  void output(const fs::path& p) { outputs_.push_back(p); }

  void write(const fs::path& path) const {
    json j;
    j["tool"] = "stableseq";
    j["version"] = kVersion;
    j["command"] = command_;
    j["argv"] = argv_;
    j["prng"] = Rng::kAlgorithm;
    j["seed"] = seed ? json(*seed) : json(nullptr);
    j["params"] = params;
    j["inputs"] = hashes(inputs_);
    j["outputs"] = hashes(outputs_);
    write_json(path, j);
    std::cout << "manifest: " << path.string() << '\n';
  }

 private:
  static json hashes(const std::vector<fs::path>& files) {
    json list = json::array();
    for (const auto& f : files) list.push_back({{"path", f.generic_string()}, {"sha256", sha256_file(f)}});
    return list;
  }

  std::string command_;
  std::vector<std::string> argv_;
  std::vector<fs::path> inputs_;
  std::vector<fs::path> outputs_;
};

// ---------------------------------------------------------------------------
// Shared option groups

struct MetricArgs {
  std::string metric = "linear";
  bool squared = true;
  bool include_intercept = false;
  double label_weight = 1.0;

  void add(CLI::App* app) {
    app->add_option("--metric", metric, "Model distance: linear, tree or importance")
        ->check(CLI::IsMember({"linear", "tree", "importance"}));
    app->add_flag("--squared,!--no-squared", squared, "Squared L2 for linear/importance distances (default on)");
    app->add_flag("--include-intercept", include_intercept, "Include the intercept in the linear distance");
    app->add_option("--label-weight", label_weight, "Label-mismatch weight of the tree path distance")
        ->check(CLI::NonNegativeNumber);
  }

  DistanceSpec spec() const {
    DistanceSpec s;
    s.kind = metric == "tree" ? MetricKind::tree_path_matching
             : metric == "importance" ? MetricKind::importance_l2
                                      : MetricKind::linear_l2;
    s.squared = squared;
    s.include_intercept = include_intercept;
    s.label_weight = label_weight;
    return s;
  }

  json to_json() const {
    return {{"metric", metric}, {"squared", squared}, {"include_intercept", include_intercept}, {"label_weight", label_weight}};
  }
};

struct FilterArgs {
  std::string loss_source = "val";
  std::string filter_metric = "loss";
  std::string anchor;
  bool force_anchor = false;

  void add(CLI::App* app) {
    app->add_option("--loss-source", loss_source, "Loss used by the accuracy filter: val or train")
        ->check(CLI::IsMember({"val", "train"}));
    app->add_option("--filter-metric", filter_metric,
                    "Filter on the loss (<= (1+alpha) min) or on validation AUC (>= (1-alpha) max)")
        ->check(CLI::IsMember({"loss", "auc"}));
    app->add_option("--anchor", anchor, "Pin batch 1 to this model id");
    app->add_flag("--force-anchor", force_anchor, "Keep the anchor even if it fails the batch-1 filter");
  }

  SelectOptions options(double alpha) const {
    SelectOptions o;
    o.alpha = alpha;
    o.source = loss_source == "train" ? LossSource::train : LossSource::validation;
    if (!anchor.empty()) o.anchor = anchor;
    o.force_anchor = force_anchor;
    if (filter_metric == "auc") o.score_key = "val_auc";
    return o;
  }

  json to_json() const {
    return {{"loss_source", loss_source}, {"filter_metric", filter_metric}, {"anchor", anchor}, {"force_anchor", force_anchor}};
  }
};

// ---------------------------------------------------------------------------
// File layout

fs::path train_csv(const fs::path& dir, int b) { return dir / ("train_b" + std::to_string(b) + ".csv"); }
fs::path val_csv(const fs::path& dir, int b) { return dir / ("val_b" + std::to_string(b) + ".csv"); }
fs::path pool_json(const fs::path& dir, int b) { return dir / ("pool_b" + std::to_string(b) + ".json"); }

struct SeriesFiles {
  json info;
  BatchSeries series;
};

SeriesFiles load_series(const fs::path& dir, Manifest& manifest, bool need_batches = true) {
  SeriesFiles out;
  const fs::path info = dir / "series.json";
  out.info = read_json(info);
  manifest.input(info);
  const int batches = out.info.at("batches").get<int>();
  out.series.task = out.info.at("task") == "classification" ? Task::classification : Task::regression;
  for (const auto& b : out.info.at("bounds")) out.series.bounds.push_back({b.at(0).get<double>(), b.at(1).get<double>()});
  if (need_batches) {
    for (int b = 1; b <= batches; ++b) {
      out.series.train.push_back(load_dataset_csv(train_csv(dir, b)));
      out.series.validation.push_back(load_dataset_csv(val_csv(dir, b)));
      manifest.input(train_csv(dir, b));
      manifest.input(val_csv(dir, b));
    }
  }
  out.series.test = load_dataset_csv(dir / "test.csv");
  manifest.input(dir / "test.csv");
  return out;
}

std::vector<CandidatePool> load_pools(const fs::path& dir, Manifest& manifest) {
  std::vector<CandidatePool> pools;
  for (int b = 1; fs::exists(pool_json(dir, b)); ++b) {
    pools.push_back(load_pool(pool_json(dir, b)));
    manifest.input(pool_json(dir, b));
  }
  if (pools.empty()) throw UsageError("no pool_b1.json found in " + dir.string());
  if (pools.size() < 2) throw UsageError("need pools for at least two batches in " + dir.string());
  return pools;
}

std::vector<DistanceMatrix> all_matrices(const std::vector<CandidatePool>& pools, const DistanceSpec& spec) {
  const unsigned threads = worker_threads();
  std::vector<DistanceMatrix> out;
  for (std::size_t b = 0; b + 1 < pools.size(); ++b) out.push_back(distance_matrix(pools[b], pools[b + 1], spec, threads));
  return out;
}

LossKind loss_for(Task task) { return task == Task::classification ? LossKind::log_loss : LossKind::mse; }

std::vector<double> parse_grid(const std::string& text) {
  std::vector<double> grid;
  std::stringstream in(text);
  std::string cell;
  while (std::getline(in, cell, ',')) {
    try {
      std::size_t used = 0;
      const double v = std::stod(cell, &used);
      if (used != cell.size() || !(v >= 0.0)) throw std::invalid_argument(cell);
      grid.push_back(v);
    } catch (const std::exception&) {
      throw UsageError("--grid expects comma-separated tolerances >= 0, got '" + cell + "'");
    }
  }
  if (grid.empty()) throw UsageError("--grid is empty");
  return grid;
}

// ---------------------------------------------------------------------------
// Commands

struct GenArgs {
  std::string kind = "linear";
  int n = 200;
  int p = 10;
  int batches = 5;
  std::uint64_t seed = 0;
  double noise = 0.5;
  double drift = 0.0;
  double separation = 2.0;
  std::string out;
};

void cmd_gen(const GenArgs& a, Manifest& manifest) {
  if (a.batches < 2) throw UsageError("--batches must be at least 2");
  if (a.p < 1) throw UsageError("--p must be positive");
  if (a.n < a.p + 1) throw UsageError("--n must be at least p+1");
  const fs::path dir = a.out;
  fs::create_directories(dir);
  BatchSeries s = a.kind == "linear" ? gen_linear(a.n, a.p, a.noise, a.batches, a.seed, a.drift).series
                                     : gen_classification(a.n, a.p, a.batches, a.seed, a.separation, a.drift);
  for (int b = 1; b <= a.batches; ++b) {
    write_text(train_csv(dir, b), dataset_csv(s.train[static_cast<std::size_t>(b - 1)]));
    write_text(val_csv(dir, b), dataset_csv(s.validation[static_cast<std::size_t>(b - 1)]));
    manifest.output(train_csv(dir, b));
    manifest.output(val_csv(dir, b));
  }
  write_text(dir / "test.csv", dataset_csv(s.test));
  manifest.output(dir / "test.csv");
  json bounds = json::array();
  for (const auto& b : s.bounds) bounds.push_back({b.min, b.max});
  write_json(dir / "series.json", {{"schema_version", 1},
                                   {"kind", a.kind},
                                   {"task", to_string(s.task)},
                                   {"batches", a.batches},
                                   {"p", a.p},
                                   {"rows_per_interval", a.n},
                                   {"bounds", bounds}});
  manifest.output(dir / "series.json");
  manifest.seed = a.seed;
  manifest.params = {{"kind", a.kind}, {"n", a.n}, {"p", a.p}, {"batches", a.batches},
                     {"noise", a.noise}, {"drift", a.drift}, {"separation", a.separation}};
  std::cout << "generated " << a.batches << " batches in " << dir.string() << '\n';
}

struct TrainArgs {
  std::string data;
  std::string family = "ridge";
  int candidates = 25;
  std::uint64_t seed = 0;
  std::optional<double> lambda_min, lambda_max;
  int depth_min = 2, depth_max = 4, leaf_min = 1, leaf_max = 10;
  double feature_fraction = 1.0;
  bool no_bootstrap = false;
  std::string out;
};

void cmd_train(const TrainArgs& a, Manifest& manifest) {
  if (a.candidates < 1) throw UsageError("--candidates must be at least 1");
  const Family family = a.family == "ridge" ? Family::ridge : a.family == "logistic" ? Family::logistic : Family::cart;
  PoolConfig cfg = PoolConfig::defaults(family);
  cfg.candidates = a.candidates;
  cfg.bootstrap = !a.no_bootstrap;
  if (a.lambda_min) cfg.lambda_min = *a.lambda_min;
  if (a.lambda_max) cfg.lambda_max = *a.lambda_max;
  cfg.depth_min = a.depth_min;
  cfg.depth_max = a.depth_max;
  cfg.leaf_min = a.leaf_min;
  cfg.leaf_max = a.leaf_max;
  cfg.feature_fraction = a.feature_fraction;

  const SeriesFiles files = load_series(a.data, manifest);
  if ((family == Family::ridge) != (files.series.task == Task::regression))
    throw UsageError("family '" + a.family + "' does not fit " + to_string(files.series.task) + " data");
  const fs::path dir = a.out.empty() ? fs::path(a.data) : fs::path(a.out);
  fs::create_directories(dir);
  json draws = json::array();
  const unsigned threads = worker_threads();
  for (std::size_t b = 0; b < files.series.batches(); ++b) {
    const int batch = static_cast<int>(b + 1);
    const CandidatePool pool = bootstrap_pool(files.series.train[b], files.series.validation[b], batch,
                                              files.series.bounds, cfg, Rng::derive(a.seed, b), threads);
    save_pool(pool, pool_json(dir, batch));
    manifest.output(pool_json(dir, batch));
    for (const Model& m : pool.models) {
      json d = {{"id", m.id}};
      for (const char* key : {"stream_seed", "lambda", "max_depth", "min_leaf"})
        if (m.metadata.contains(key)) d[key] = m.metadata[key];
      draws.push_back(d);
    }
  }
  manifest.seed = a.seed;
  manifest.params = {{"family", a.family},
                     {"candidates", cfg.candidates},
                     {"bootstrap", cfg.bootstrap},
                     {"lambda_range", {cfg.lambda_min, cfg.lambda_max}},
                     {"depth_range", {cfg.depth_min, cfg.depth_max}},
                     {"leaf_range", {cfg.leaf_min, cfg.leaf_max}},
                     {"feature_fraction", cfg.feature_fraction},
                     {"jitter_draws", draws}};
  std::cout << "trained " << files.series.batches() << " pools of " << cfg.candidates << " " << a.family
            << " models in " << dir.string() << '\n';
}

struct SelectArgs {
  std::string pools;
  std::string data;
  double alpha = 0.01;
  MetricArgs metric;
  FilterArgs filter;
  bool greedy = false;
  bool verify = false;
  bool write_matrices = false;
  std::string out;
};

int cmd_select(const SelectArgs& a, Manifest& manifest) {
  if (!(a.alpha >= 0.0)) throw UsageError("--alpha must be >= 0");
  const auto pools = load_pools(a.pools, manifest);
  std::optional<SeriesFiles> files;
  if (!a.data.empty()) files = load_series(a.data, manifest, false);
  const DistanceSpec spec = a.metric.spec();
  const auto matrices = all_matrices(pools, spec);
  const SelectOptions options = a.filter.options(a.alpha);
  const SequencePlan plan =
      a.greedy ? greedy_sequence(pools, matrices, options) : select_sequence(pools, matrices, options);

  json report = plan_to_json(plan);
  report["mode"] = a.greedy ? "greedy" : "svml";
  report["distance"] = a.metric.to_json();
  json batches = json::array();
  bool within = true;
  for (std::size_t b = 0; b < pools.size(); ++b) {
    const auto losses = pool_losses(pools[b], options.source);
    const double best = *std::min_element(losses.begin(), losses.end());
    const Model& chosen = pools[b].models[plan.indices[b]];
    const double loss = selection_loss(chosen, options.source);
    json row = {{"batch", pools[b].batch}, {"id", chosen.id}, {"loss", loss}, {"batch_best_loss", best},
                {"relative_excess", best > 0 ? loss / best - 1.0 : 0.0}};
    within = within && loss <= (1.0 + a.alpha) * best;
    if (chosen.metadata.contains("val_auc")) row["val_auc"] = chosen.metadata["val_auc"];
    if (files && is_predictive(chosen)) {
      const LossKind kind = loss_for(files->series.task);
      const std::size_t best_index = static_cast<std::size_t>(std::min_element(losses.begin(), losses.end()) - losses.begin());
      row["test_loss"] = empirical_loss(chosen, files->series.test, kind);
      row["batch_best_test_loss"] = empirical_loss(pools[b].models[best_index], files->series.test, kind);
      if (files->series.task == Task::classification) {
        row["test_auc"] = auc(chosen, files->series.test);
        row["batch_best_test_auc"] = auc(pools[b].models[best_index], files->series.test);
      }
    }
    batches.push_back(row);
  }
  report["batches"] = batches;
  report["within_tolerance"] = within;

  int status = 0;
  if (a.verify) {
    const OptimalityCheck wpo = check_wpo(plan, pools, matrices, options.source);
    const OptimalityCheck po = verify_po(plan, pools, matrices, options.source);
    json cert = {{"weakly_pareto_optimal", wpo.holds}, {"pareto_optimal", po.holds}};
    if (!wpo.holds) cert["wpo_certificate"] = plan_to_json(*wpo.certificate);
    if (!po.holds) {
      cert["po_certificate"] = plan_to_json(*po.certificate);
      cert["po_detail"] = po.detail;
    }
    report["verification"] = cert;
    if (!wpo.holds) status = 1;
  }

  const fs::path dir = a.out;
  fs::create_directories(dir);
  const fs::path plan_path = dir / (a.greedy ? "greedy_plan.json" : "plan.json");
  write_json(plan_path, report);
  manifest.output(plan_path);
  if (a.write_matrices)
    for (const auto& m : matrices) {
      const fs::path p = dir / ("distances_b" + std::to_string(m.from_batch) + "-b" + std::to_string(m.to_batch) + ".csv");
      write_text(p, distance_matrix_csv(m));
      manifest.output(p);
    }
  manifest.params = {{"alpha", a.alpha}, {"greedy", a.greedy}, {"verify", a.verify},
                     {"distance", a.metric.to_json()}, {"filter", a.filter.to_json()}};
  std::cout << (a.greedy ? "greedy" : "svml") << " plan:";
  for (const auto& id : plan.ids) std::cout << ' ' << id;
  std::cout << "\nstability loss: " << format_double(plan.stability_loss) << '\n';
  if (a.verify) std::cout << "weakly Pareto optimal: " << (report["verification"]["weakly_pareto_optimal"] ? "yes" : "NO") << '\n';
  return status;
}

struct SweepArgs {
  std::string pools;
  std::string data;
  std::string grid = "0.1,0.05,0.02,0.01";
  MetricArgs metric;
  FilterArgs filter;
  bool full_linear = false;
  std::string out;
};

void cmd_sweep(const SweepArgs& a, Manifest& manifest) {
  const std::vector<double> grid = parse_grid(a.grid);
  const auto pools = load_pools(a.pools, manifest);
  const SeriesFiles files = load_series(a.data, manifest, a.full_linear);
  const DistanceSpec spec = a.metric.spec();
  if (a.full_linear) {
    if (spec.kind != MetricKind::linear_l2 || !spec.squared || spec.include_intercept)
      throw UsageError("--full-linear compares against squared linear distance without intercept");
    if (files.series.task != Task::regression) throw UsageError("--full-linear needs regression data");
    if (files.series.batches() != pools.size()) throw UsageError("data and pools disagree on the batch count");
  }
  const auto matrices = all_matrices(pools, spec);
  const LossKind kind = loss_for(files.series.task);

  std::vector<FrontierRow> rows;
  json plans = json::array();
  if (!a.full_linear) {
    const auto points = sweep(pools, matrices, grid, a.filter.options(0.0));
    rows = frontier_report(points, pools, files.series.test, kind);
    for (const auto& p : points) plans.push_back({{"curve", "restricted"}, {"plan", plan_to_json(p.plan)}});
  } else {
    // Both curves share absolute budgets eps_b = (1 + alpha) · min train MSE of the pool.
    std::vector<double> sorted = grid;
    std::sort(sorted.begin(), sorted.end());
    std::vector<FrontierRow> full_rows;
    for (double alpha : sorted) {
      SelectOptions o = a.filter.options(alpha);
      o.source = LossSource::train;
      o.score_key.reset();
      for (const auto& pool : pools) {
        const auto losses = pool_losses(pool, LossSource::train);
        o.epsilon.push_back((1.0 + alpha) * *std::min_element(losses.begin(), losses.end()));
      }
      ParetoPoint point;
      point.alpha = alpha;
      point.plan = select_sequence(pools, matrices, o);
      point.stability_loss = point.plan.stability_loss;
      rows.push_back(frontier_report({point}, pools, files.series.test, kind).front());
      plans.push_back({{"curve", "restricted"}, {"plan", plan_to_json(point.plan)}});
      const auto full = solve_full(files.series.train, o.epsilon);
      full_rows.push_back(full_frontier_row(full, alpha, files.series.test));
      json coefficients = json::array();
      for (const auto& m : full.models) coefficients.push_back({{"coefficients", m.coefficients}, {"intercept", m.intercept}});
      plans.push_back({{"curve", "full"}, {"alpha", alpha}, {"epsilon", o.epsilon}, {"models", coefficients},
                       {"stability_loss", full.stability_loss}, {"iterations", full.iterations},
                       {"converged", full.converged}});
    }
    rows.insert(rows.end(), full_rows.begin(), full_rows.end());
  }

  const fs::path dir = a.out;
  fs::create_directories(dir);
  write_text(dir / "frontier.csv", frontier_csv(rows));
  write_json(dir / "sweep.json", {{"points", plans}});
  manifest.output(dir / "frontier.csv");
  manifest.output(dir / "sweep.json");
  manifest.params = {{"grid", grid}, {"full_linear", a.full_linear}, {"distance", a.metric.to_json()},
                     {"filter", a.filter.to_json()}};
  std::cout << frontier_csv(rows);
}

struct AdaptArgs {
  std::string pools;
  double alpha = 0.01;
  MetricArgs metric;
  FilterArgs filter;
  bool anchored = false;
  bool greedy_adapt = false;
  bool check_lemma = false;
  std::string out;
};

int cmd_adapt(const AdaptArgs& a, Manifest& manifest) {
  if (!(a.alpha >= 0.0)) throw UsageError("--alpha must be >= 0");
  const DistanceSpec spec = a.metric.spec();
  if (a.check_lemma && spec.squared && spec.kind != MetricKind::tree_path_matching)
    throw UsageError("--check-lemma needs a metric distance; add --no-squared");
  const auto pools = load_pools(a.pools, manifest);
  const auto matrices = all_matrices(pools, spec);
  SelectOptions options = a.filter.options(a.alpha);
  std::optional<std::string> anchor = options.anchor;
  if (!anchor && (a.anchored || a.check_lemma))
    anchor = greedy_sequence(std::span<const CandidatePool>(pools).first(1), {}, options).ids.front();

  std::vector<SequenceFamily> families;
  families.push_back(build_family(pools, matrices, options, AdaptStrategy::greedy, spec, anchor));
  families.push_back(build_family(pools, matrices, options, AdaptStrategy::svml, spec, anchor));
  if (a.greedy_adapt) families.push_back(build_family(pools, matrices, options, AdaptStrategy::greedy_adapt, spec, anchor));

  const fs::path dir = a.out;
  fs::create_directories(dir);
  write_text(dir / "family.csv", family_table_csv(families));
  manifest.output(dir / "family.csv");
  json fams = json::array();
  for (const auto& f : families) {
    json plans = json::array();
    for (const auto& p : f.plans) plans.push_back(plan_to_json(p));
    fams.push_back({{"strategy", to_string(f.strategy)}, {"anchor", f.anchor ? json(*f.anchor) : json(nullptr)},
                    {"inter_losses", f.inter_losses}, {"plans", plans}});
  }
  write_json(dir / "family.json", {{"families", fams}});
  manifest.output(dir / "family.json");

  int status = 0;
  if (a.check_lemma) {
    std::ostringstream csv;
    csv.precision(17);
    csv << "transition,lhs,rhs,holds\n";
    int violations = 0;
    const SequenceFamily& svml = families[1];
    for (std::size_t k = 0; k + 1 < svml.plans.size(); ++k) {
      const BoundCheck c = stability_bound_check(svml.plans[k], pools, svml.plans[k + 1], pools, spec);
      csv << "T_" << k + 1 << '-' << k + 2 << ',' << c.lhs << ',' << c.rhs << ',' << (c.holds ? "true" : "false") << '\n';
      violations += c.holds ? 0 : 1;
    }
    write_text(dir / "lemma.csv", csv.str());
    manifest.output(dir / "lemma.csv");
    std::cout << "inter-sequence bound: " << (violations == 0 ? "holds on all transitions" : "VIOLATED") << '\n';
    if (violations) status = 1;
  }
  manifest.params = {{"alpha", a.alpha}, {"anchor", anchor ? json(*anchor) : json(nullptr)},
                     {"greedy_adapt", a.greedy_adapt}, {"check_lemma", a.check_lemma},
                     {"distance", a.metric.to_json()}, {"filter", a.filter.to_json()}};
  std::cout << family_table_csv(families);
  return status;
}

int run(const std::vector<std::string>& args, bool replaying = false);

int cmd_replay(const std::string& path) {
  const json m = read_json(path);
  const auto argv = m.at("argv").get<std::vector<std::string>>();
  if (!argv.empty() && argv.front() == "replay") throw UsageError("cannot replay a replay");
  const int status = run(argv, true);
  if (status != 0) return status;
  int mismatches = 0;
  for (const auto& out : m.at("outputs")) {
    const fs::path p = out.at("path").get<std::string>();
    const bool same = fs::exists(p) && sha256_file(p) == out.at("sha256").get<std::string>();
    if (!same) {
      std::cerr << "replay: output differs: " << p.string() << '\n';
      ++mismatches;
    }
  }
  std::cout << "replay: " << m.at("outputs").size() - static_cast<std::size_t>(mismatches) << " of "
            << m.at("outputs").size() << " outputs identical\n";
  return mismatches == 0 ? 0 : 1;
}

int run(const std::vector<std::string>& args, bool replaying) {
  CLI::App app{"Slowly varying model sequences: selection, frontiers and adaptive retraining"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  std::string manifest_path;
  app.add_option("--manifest", manifest_path, "Manifest path (default: <out>/<command>.manifest.json)");

  GenArgs gen;
  auto* g = app.add_subcommand("gen", "Generate a synthetic batch series");
  g->add_option("--kind", gen.kind, "linear or classification")->check(CLI::IsMember({"linear", "classification"}));
  g->add_option("--n", gen.n, "Rows per time interval");
  g->add_option("--p", gen.p, "Feature count");
  g->add_option("--batches", gen.batches, "Number of batches B (>= 2)");
  g->add_option("--seed", gen.seed, "Random seed");
  g->add_option("--noise", gen.noise, "Noise standard deviation (linear)")->check(CLI::NonNegativeNumber);
  g->add_option("--drift", gen.drift, "Per-batch coefficient drift standard deviation")->check(CLI::NonNegativeNumber);
  g->add_option("--sep", gen.separation, "Class separation (classification)")->check(CLI::NonNegativeNumber);
  g->add_option("--out", gen.out, "Output directory")->required();

  TrainArgs train;
  auto* t = app.add_subcommand("train", "Train bootstrap candidate pools for every batch");
  t->add_option("--data", train.data, "Directory written by gen")->required();
  t->add_option("--family", train.family, "ridge, logistic or cart")->check(CLI::IsMember({"ridge", "logistic", "cart"}));
  t->add_option("--candidates", train.candidates, "Models per pool");
  t->add_option("--seed", train.seed, "Random seed");
  t->add_option("--lambda-min", train.lambda_min, "Smallest penalty of the jitter range");
  t->add_option("--lambda-max", train.lambda_max, "Largest penalty of the jitter range");
  t->add_option("--depth-min", train.depth_min, "CART depth jitter lower bound");
  t->add_option("--depth-max", train.depth_max, "CART depth jitter upper bound");
  t->add_option("--leaf-min", train.leaf_min, "CART minimum-leaf jitter lower bound");
  t->add_option("--leaf-max", train.leaf_max, "CART minimum-leaf jitter upper bound");
  t->add_option("--feature-fraction", train.feature_fraction, "CART features tried per split");
  t->add_flag("--no-bootstrap", train.no_bootstrap, "Train every candidate on the full batch");
  t->add_option("--out", train.out, "Output directory (default: the data directory)");

  SelectArgs select;
  auto* s = app.add_subcommand("select", "Choose one model per batch");
  s->add_option("--pools", select.pools, "Directory with pool_b<b>.json files")->required();
  s->add_option("--data", select.data, "Data directory, for out-of-sample columns");
  s->add_option("--alpha", select.alpha, "Accuracy tolerance");
  select.metric.add(s);
  select.filter.add(s);
  s->add_flag("--greedy", select.greedy, "Greedy baseline instead of the stability-optimal plan");
  s->add_flag("--verify", select.verify, "Append weak/strict Pareto certificates (small pools only)");
  s->add_flag("--write-matrices", select.write_matrices, "Write the distance matrices as CSV");
  s->add_option("--out", select.out, "Output directory")->required();

  SweepArgs sw;
  auto* w = app.add_subcommand("sweep", "Sweep the accuracy tolerance and write the frontier");
  w->add_option("--pools", sw.pools, "Directory with pool_b<b>.json files")->required();
  w->add_option("--data", sw.data, "Data directory (test set and, with --full-linear, batches)")->required();
  w->add_option("--grid", sw.grid, "Comma-separated tolerances");
  sw.metric.add(w);
  sw.filter.add(w);
  w->add_flag("--full-linear", sw.full_linear, "Overlay the unrestricted linear solution");
  w->add_option("--out", sw.out, "Output directory")->required();

  AdaptArgs ad;
  auto* d = app.add_subcommand("adapt", "Inter-sequence stability of retrained sequence families");
  d->add_option("--pools", ad.pools, "Directory with pool_b<b>.json files")->required();
  d->add_option("--alpha", ad.alpha, "Accuracy tolerance");
  ad.metric.add(d);
  ad.filter.add(d);
  d->add_flag("--anchored", ad.anchored, "Share batch 1's best model as anchor (or use --anchor)");
  d->add_flag("--greedy-adapt", ad.greedy_adapt, "Add the greedy-adapt baseline row");
  d->add_flag("--check-lemma", ad.check_lemma, "Check the inter-sequence bound on every transition");
  d->add_option("--out", ad.out, "Output directory")->required();

  std::string replay_path;
  auto* r = app.add_subcommand("replay", "Re-run a manifest and compare its outputs");
  r->add_option("manifest", replay_path, "Manifest file")->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  CLI::App* cmd = app.get_subcommands().front();
  try {
    if (cmd == r) {
      if (replaying) throw UsageError("nested replay");
      return cmd_replay(replay_path);
    }
    Manifest manifest(cmd->get_name(), args);
    int status = 0;
    std::string out_dir;
    if (cmd == g) cmd_gen(gen, manifest), out_dir = gen.out;
    if (cmd == t) cmd_train(train, manifest), out_dir = train.out.empty() ? train.data : train.out;
    if (cmd == s) status = cmd_select(select, manifest), out_dir = select.out;
    if (cmd == w) cmd_sweep(sw, manifest), out_dir = sw.out;
    if (cmd == d) status = cmd_adapt(ad, manifest), out_dir = ad.out;
    manifest.write(manifest_path.empty() ? fs::path(out_dir) / (cmd->get_name() + ".manifest.json")
                                         : fs::path(manifest_path));
    return status;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const ParseError& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return 2;
  } catch (const ValidationError& e) {
    std::cerr << "invalid input: " << e.what() << '\n';
    return 2;
  } catch (const InfeasibleError& e) {
    std::cerr << "infeasible: " << e.what() << '\n';
    return 1;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return 1;
  } catch (const TooLargeError& e) {
    std::cerr << "too large: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args);
}
