#include "nifflow/cli.hpp"

#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <numbers>
#include <optional>
#include <random>

#include <fmt/format.h>

#include "CLI11.hpp"
#include "json.hpp"
#include "nifflow/attribution.hpp"
#include "nifflow/error.hpp"
#include "nifflow/estimators.hpp"
#include "nifflow/model_io.hpp"
#include "nifflow/network_science.hpp"
#include "nifflow/nif_graph.hpp"
#include "nifflow/parallel.hpp"
#include "nifflow/pruning.hpp"

namespace nifflow::cli {

namespace {

using nlohmann::json;

struct RunConfig {
  std::string subcommand;
  std::string model;
  std::string data;
  std::string eval;
  std::string config_file;
  std::string estimator = "ksg";
  std::size_t k = 5;
  std::size_t bins = 16;
  double beta = 5e-4;
  std::string relevance = "per_feature";
  std::string mode = "mi";
  std::size_t sample = 0;
  std::optional<std::size_t> target_class;
  double gamma = 1.0;
  std::string edge_length = "inverse";
  std::string format = "json";
  std::string out = "-";
  std::string report;
  std::uint64_t seed = 0;
  unsigned threads = 0;
  std::vector<std::size_t> steps;
  std::vector<double> fractions;

  EstimatorConfig estimator_config() const {
    EstimatorConfig c;
    c.kind = estimator == "ksg" ? EstimatorKind::ksg : EstimatorKind::histogram;
    c.k = k;
    c.bins = bins;
    c.beta = beta;
    c.relevance_mode = relevance == "literal" ? RelevanceMode::literal : RelevanceMode::per_feature;
    c.rng_seed = seed;
    return c;
  }

  FlowSpec flow() const { return FlowSpec{mode == "pmi" ? FlowMode::pmi : FlowMode::mean_mi, sample}; }

  /// Canonical compact JSON (keys sorted) embedded in every artifact.
  std::string to_json() const {
    json doc = {{"subcommand", subcommand}, {"model", model},       {"data", data},
                {"estimator", estimator},   {"k", k},               {"bins", bins},
                {"beta", beta},             {"relevance", relevance}, {"mode", mode},
                {"sample", sample},         {"gamma", gamma},       {"edge_length", edge_length},
                {"format", format},         {"out", out},           {"seed", seed},
                {"threads", threads}};
    if (!eval.empty()) doc["eval"] = eval;
    if (!report.empty()) doc["report"] = report;
    if (!config_file.empty()) doc["config"] = config_file;
    if (target_class) doc["class"] = *target_class;
    if (!steps.empty()) doc["steps"] = steps;
    if (!fractions.empty()) doc["fractions"] = fractions;
    return doc.dump();
  }
};

struct Options {
  CLI::Option* estimator = nullptr;
  CLI::Option* k = nullptr;
  CLI::Option* bins = nullptr;
  CLI::Option* beta = nullptr;
  CLI::Option* relevance = nullptr;
  CLI::Option* mode = nullptr;
  CLI::Option* sample = nullptr;
  CLI::Option* gamma = nullptr;
  CLI::Option* edge_length = nullptr;
  CLI::Option* format = nullptr;
  CLI::Option* seed = nullptr;
  CLI::Option* threads = nullptr;
};

void write_artifact(const std::string& path, const std::string& content, std::ostream& out) {
  if (path == "-") {
    out << content;
    return;
  }
  std::ofstream file(path, std::ios::binary);
  if (!file) throw Error(ErrorKind::io, fmt::format("cannot write '{}'", path));
  file << content;
  if (!file) throw Error(ErrorKind::io, fmt::format("failed writing '{}'", path));
}

void require_file(const std::string& flag, const std::string& path) {
  if (path.empty()) throw Error(ErrorKind::invalid_argument, fmt::format("{} is required", flag));
  if (!std::filesystem::exists(path)) {
    throw Error(ErrorKind::io, fmt::format("{} '{}' does not exist", flag, path));
  }
}

/// Fills options that were not given on the command line from the config file.
void apply_config_file(RunConfig& rc, const Options& opts) {
  if (rc.config_file.empty()) return;
  require_file("--config", rc.config_file);
  std::ifstream in(rc.config_file);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::parse, fmt::format("{}: {}", rc.config_file, e.what()));
  }
  auto take = [&](const char* key, CLI::Option* opt, auto& field) {
    if (!doc.contains(key) || (opt != nullptr && opt->count() > 0)) return;
    try {
      doc.at(key).get_to(field);
    } catch (const json::exception& e) {
      throw Error(ErrorKind::parse, fmt::format("{}: key '{}': {}", rc.config_file, key, e.what()));
    }
  };
  take("estimator", opts.estimator, rc.estimator);
  take("k", opts.k, rc.k);
  take("bins", opts.bins, rc.bins);
  take("beta", opts.beta, rc.beta);
  take("relevance", opts.relevance, rc.relevance);
  take("mode", opts.mode, rc.mode);
  take("sample", opts.sample, rc.sample);
  take("gamma", opts.gamma, rc.gamma);
  take("edge_length", opts.edge_length, rc.edge_length);
  take("format", opts.format, rc.format);
  take("seed", opts.seed, rc.seed);
  take("threads", opts.threads, rc.threads);
}

void check_ranges(const RunConfig& rc) {
  auto one_of = [](const std::string& flag, const std::string& value, std::initializer_list<const char*> allowed) {
    for (const char* a : allowed) {
      if (value == a) return;
    }
    throw Error(ErrorKind::invalid_argument, fmt::format("{} has invalid value '{}'", flag, value));
  };
  one_of("--estimator", rc.estimator, {"ksg", "hist"});
  one_of("--relevance", rc.relevance, {"literal", "per_feature"});
  one_of("--mode", rc.mode, {"mi", "pmi"});
  one_of("--edge-length", rc.edge_length, {"inverse", "unit"});
  one_of("--format", rc.format, {"dot", "graphml", "json"});
  if (rc.k < 1) throw Error(ErrorKind::invalid_argument, "--k must be at least 1");
  if (rc.bins < 2) throw Error(ErrorKind::invalid_argument, "--bins must be at least 2");
  if (!(rc.beta >= 0.0)) throw Error(ErrorKind::invalid_argument, "--beta must be nonnegative");
  if (!(rc.gamma > 0.0)) throw Error(ErrorKind::invalid_argument, "--gamma must be positive");
}

std::string csv_header(const RunConfig& rc) { return fmt::format("# run_config: {}\n", rc.to_json()); }

struct Loaded {
  ModelGraph model;
  Dataset data;
};

Loaded load_inputs(const RunConfig& rc) {
  require_file("--model", rc.model);
  require_file("--data", rc.data);
  Loaded loaded{load_model(rc.model), load_dataset(rc.data)};
  check_compatible(loaded.model, loaded.data);
  return loaded;
}

NifGraph build_graph(const RunConfig& rc, const Loaded& in, std::ostream& err) {
  const ActivationRecord record = forward(in.model, in.data);
  NifGraph graph = build_nif_graph(in.model, record, rc.estimator_config(), rc.flow(), in.data.feature_names);
  graph.run_config = rc.to_json();
  err << fmt::format("nifflow: built {} graph: {} nodes, {} edges from {} samples\n", to_string(graph.flow.mode),
                     graph.nodes.size(), graph.edges.size(), in.data.size());
  return graph;
}

void annotate(NifGraph& graph, const RunConfig& rc) {
  const WeightedGraph view = to_weighted_graph(graph);
  const EdgeLength length = parse_edge_length(rc.edge_length);
  const CommunityAssignment communities = detect_communities(view, rc.gamma, rc.seed);
  graph.analytics = GraphAnalytics{betweenness(view, length), communities.community, rc.gamma,
                                   communities.modularity, std::string(to_string(length))};
}

int cmd_build(const RunConfig& rc, bool analyze, std::ostream& out, std::ostream& err) {
  const Loaded in = load_inputs(rc);
  NifGraph graph = build_graph(rc, in, err);
  if (analyze) {
    annotate(graph, rc);
    err << fmt::format("nifflow: {} communities, modularity {:.6f}\n",
                       *std::max_element(graph.analytics->community.begin(), graph.analytics->community.end()) + 1,
                       graph.analytics->modularity);
  }
  write_artifact(rc.out, export_graph(graph, parse_export_format(rc.format), analyze), out);
  return 0;
}

json matrix_json(const AttributionMatrix& m) {
  json rows = json::array();
  for (std::size_t i = 0; i < m.values.rows(); ++i) {
    const auto row = m.values.row(i);
    rows.push_back(std::vector<double>(row.begin(), row.end()));
  }
  return rows;
}

int cmd_attribute(const RunConfig& rc, std::ostream& out, std::ostream& err) {
  const Loaded in = load_inputs(rc);
  const NifGraph graph = build_graph(rc, in, err);
  const AttributionMatrix nif = attribution_matrix(graph);
  const ActivationRecord record = forward(in.model, in.data);
  const AttributionMatrix raw = raw_mi_attribution(record, in.data.labels, in.model.class_count(),
                                                   rc.estimator_config());

  std::string csv = csv_header(rc) + "feature,class,value\n";
  for (std::size_t i = 0; i < nif.values.rows(); ++i) {
    for (std::size_t j = 0; j < nif.values.cols(); ++j) {
      csv += fmt::format("{},{},{}\n", nif.feature_names[i], j, nif.values(i, j));
    }
  }
  write_artifact(rc.out, csv, out);

  const KsResult overall = ks_two_sample(nif.values.data(), raw.values.data());
  json per_class = json::array();
  for (std::size_t j = 0; j < nif.values.cols(); ++j) {
    std::vector<double> a;
    std::vector<double> b;
    for (std::size_t i = 0; i < nif.values.rows(); ++i) {
      a.push_back(nif.values(i, j));
      b.push_back(raw.values(i, j));
    }
    const KsResult r = ks_two_sample(a, b);
    per_class.push_back({{"class", j}, {"statistic", r.statistic}, {"p_value", r.p_value}});
  }
  err << fmt::format("nifflow: K-S vs raw-MI attribution: D = {:.6f}, p = {:.6f}\n", overall.statistic,
                     overall.p_value);
  if (!rc.report.empty()) {
    json report = {{"ks", {{"statistic", overall.statistic}, {"p_value", overall.p_value}}},
                   {"per_class", per_class},
                   {"nif_attribution", matrix_json(nif)},
                   {"raw_mi_attribution", matrix_json(raw)},
                   {"feature_names", nif.feature_names},
                   {"run_config", json::parse(rc.to_json())}};
    write_artifact(rc.report, report.dump(1) + "\n", out);
  }
  return 0;
}

int cmd_saliency(const RunConfig& rc, std::ostream& out, std::ostream& err) {
  const Loaded in = load_inputs(rc);
  const std::size_t cls = rc.target_class ? *rc.target_class
                          : rc.sample < in.data.size()
                              ? static_cast<std::size_t>(in.data.labels[rc.sample])
                              : 0;
  const SaliencyMap map = saliency_map(in.model, in.data, rc.sample, cls, rc.estimator_config());
  std::string csv = csv_header(rc) + "pixel,row,col,channel,class,value\n";
  for (std::size_t r = 0; r < map.shape.height; ++r) {
    for (std::size_t c = 0; c < map.shape.width; ++c) {
      for (std::size_t ch = 0; ch < map.shape.channels; ++ch) {
        const std::size_t pixel = (r * map.shape.width + c) * map.shape.channels + ch;
        csv += fmt::format("{},{},{},{},{},{}\n", pixel, r, c, ch, cls, map.values[pixel]);
      }
    }
  }
  err << fmt::format("nifflow: saliency for sample {} class {} ({} pixels)\n", rc.sample, cls, map.values.size());
  write_artifact(rc.out, csv, out);
  return 0;
}

int cmd_prune(const RunConfig& rc, std::ostream& out, std::ostream& err) {
  const Loaded in = load_inputs(rc);
  Dataset eval = in.data;
  if (!rc.eval.empty()) {
    require_file("--eval", rc.eval);
    eval = load_dataset(rc.eval);
  } else {
    err << "nifflow: warning: evaluating on the estimation data; pass --eval for a held-out split\n";
  }
  const NifGraph graph = build_graph(rc, in, err);
  std::vector<std::size_t> counts = rc.steps;
  if (counts.empty()) {
    std::vector<double> fractions = rc.fractions;
    if (fractions.empty()) {
      for (int i = 0; i <= 20; ++i) fractions.push_back(i / 20.0);
    }
    counts = steps_from_fractions(graph.edges.size(), fractions);
  }
  const PruneReport report = prune_sweep(in.model, eval, graph, counts);
  err << fmt::format("nifflow: pruning sweep over {} steps, baseline accuracy {:.4f}\n", report.steps.size(),
                     report.steps.front().accuracy);
  write_artifact(rc.out, prune_report_csv(report, rc.to_json()), out);
  return 0;
}

// Estimator self-checks against distributions with known MI.

struct Check {
  std::string name;
  double value;
  double expected;
  double tolerance;
  bool pass() const { return std::abs(value - expected) <= tolerance; }
};

int cmd_validate(const RunConfig& rc, std::ostream& out, std::ostream&) {
  EstimatorConfig ksg = rc.estimator_config();
  ksg.kind = EstimatorKind::ksg;
  EstimatorConfig hist = ksg;
  hist.kind = EstimatorKind::histogram;
  std::vector<Check> checks;

  for (double rho : {0.0, 0.3, 0.6, 0.9}) {
    double total = 0.0;
    constexpr int repeats = 10;
    for (int r = 0; r < repeats; ++r) {
      std::mt19937_64 rng(rc.seed * 1000 + static_cast<std::uint64_t>(r));
      std::normal_distribution<double> normal;
      std::vector<double> x(2000);
      std::vector<double> y(2000);
      for (std::size_t i = 0; i < x.size(); ++i) {
        x[i] = normal(rng);
        y[i] = rho * x[i] + std::sqrt(1.0 - rho * rho) * normal(rng);
      }
      total += ksg_mi(x, y, ksg).value;
    }
    checks.push_back({fmt::format("ksg_gaussian_rho_{}", rho), total / repeats,
                      -0.5 * std::log(1.0 - rho * rho), 0.1});
  }
  {
    std::mt19937_64 rng(rc.seed + 7);
    std::bernoulli_distribution coin(0.5);
    std::vector<double> x(5000);
    for (double& v : x) v = coin(rng) ? 1.0 : 0.0;
    checks.push_back({"ksg_binary_copy", ksg_mi(x, x, ksg).value, std::numbers::ln2, 0.03});
  }
  {
    std::vector<double> x(4000);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<double>(i % 4);
    checks.push_back({"hist_four_value_copy", histogram_mi(x, x, hist).value, std::log(4.0), 0.02});
  }
  {
    std::mt19937_64 rng(rc.seed + 11);
    std::uniform_real_distribution<double> uniform;
    std::vector<double> x(5000);
    std::vector<double> y(5000);
    for (std::size_t i = 0; i < x.size(); ++i) {
      x[i] = uniform(rng);
      y[i] = uniform(rng);
    }
    checks.push_back({"hist_independent_uniform", histogram_mi(x, y, hist).value, 0.0, 0.08});
    checks.push_back({"ksg_independent_uniform", ksg_mi(x, y, ksg).value, 0.0, 0.05});
    for (const EstimatorConfig& config : {ksg, hist}) {
      const MiEstimate e = estimate_mi(x, y, config);
      double total = 0.0;
      for (double v : e.per_sample) total += v;
      checks.push_back({fmt::format("{}_pmi_mean_identity", to_string(config.kind)),
                        total / static_cast<double>(e.per_sample.size()), e.value, 1e-9});
    }
  }

  bool all = true;
  for (const Check& c : checks) {
    all = all && c.pass();
    out << fmt::format("{} {} estimate={:.4f} expected={:.4f} tol={}\n", c.pass() ? "PASS" : "FAIL", c.name,
                       c.value, c.expected, c.tolerance);
  }
  return all ? 0 : 1;
}

void add_common(CLI::App* cmd, RunConfig& rc, Options& opts) {
  cmd->add_option("--model", rc.model, "Model document (JSON)");
  cmd->add_option("--data", rc.data, "Dataset CSV with a 'label' column");
  opts.estimator = cmd->add_option("--estimator", rc.estimator, "ksg | hist");
  opts.k = cmd->add_option("--k", rc.k, "KSG neighbour count");
  opts.bins = cmd->add_option("--bins", rc.bins, "Histogram bins per axis");
  opts.beta = cmd->add_option("--beta", rc.beta, "Redundancy weight");
  opts.relevance = cmd->add_option("--relevance", rc.relevance, "literal | per_feature");
  opts.mode = cmd->add_option("--mode", rc.mode, "mi | pmi");
  opts.sample = cmd->add_option("--sample", rc.sample, "Sample index for pmi mode and saliency");
  opts.gamma = cmd->add_option("--gamma", rc.gamma, "Community resolution");
  opts.edge_length = cmd->add_option("--edge-length", rc.edge_length, "inverse | unit");
  opts.format = cmd->add_option("--format", rc.format, "dot | graphml | json");
  cmd->add_option("--out", rc.out, "Output path, '-' for standard output");
  opts.seed = cmd->add_option("--seed", rc.seed, "Seed for jitter and community search");
  opts.threads = cmd->add_option("--threads", rc.threads, "Worker thread cap (0 = NIFFLOW_THREADS or all cores)");
  cmd->add_option("--config", rc.config_file, "JSON file with default option values");
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"nifflow: neural information flow graphs for feedforward models", "nifflow"};
  app.require_subcommand(1);
  RunConfig rc;
  std::map<CLI::App*, Options> options;

  auto* build = app.add_subcommand("build", "Build the NIF graph and export it");
  auto* analyze = app.add_subcommand("analyze", "Build, then add centrality and communities");
  auto* attribute = app.add_subcommand("attribute", "Attribution matrix CSV and K-S report vs raw MI");
  auto* saliency = app.add_subcommand("saliency", "Per-sample saliency map CSV (conv models)");
  auto* prune = app.add_subcommand("prune", "Accuracy vs number of zeroed weights");
  auto* validate = app.add_subcommand("validate", "Estimator self-checks against known MI values");
  for (CLI::App* cmd : {build, analyze, attribute, saliency, prune, validate}) add_common(cmd, rc, options[cmd]);
  attribute->add_option("--report", rc.report, "K-S report path (JSON)");
  std::size_t target_class = 0;
  auto* class_opt = saliency->add_option("--class", target_class, "Target class (default: the sample's label)");
  prune->add_option("--eval", rc.eval, "Held-out evaluation dataset CSV");
  prune->add_option("--steps", rc.steps, "Zeroed-weight counts")->delimiter(',');
  prune->add_option("--fractions", rc.fractions, "Zeroed-weight fractions")->delimiter(',');

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << json{{"kind", "usage"}, {"message", e.what()}}.dump() << "\n";
    return 2;
  }

  try {
    CLI::App* chosen = app.get_subcommands().front();
    rc.subcommand = chosen->get_name();
    const Options& opts = options.at(chosen);
    if (class_opt->count() > 0) rc.target_class = target_class;
    apply_config_file(rc, opts);
    check_ranges(rc);
    if (rc.threads > 0) set_thread_limit(rc.threads);
    if (rc.mode == "pmi" && opts.sample->count() == 0 && rc.subcommand != "saliency") {
      err << "nifflow: pmi mode without --sample; using sample 0\n";
    }

    if (rc.subcommand == "build") return cmd_build(rc, false, out, err);
    if (rc.subcommand == "analyze") return cmd_build(rc, true, out, err);
    if (rc.subcommand == "attribute") return cmd_attribute(rc, out, err);
    if (rc.subcommand == "saliency") return cmd_saliency(rc, out, err);
    if (rc.subcommand == "prune") return cmd_prune(rc, out, err);
    return cmd_validate(rc, out, err);
  } catch (const Error& e) {
    err << "error: " << json{{"kind", to_string(e.kind())}, {"message", e.what()}}.dump() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << json{{"kind", "internal"}, {"message", e.what()}}.dump() << "\n";
    return 1;
  }
}

}  // namespace nifflow::cli
