#include <random>
#include <sstream>

#include <fmt/format.h>

#include "doctest.h"
#include "json.hpp"
#include "nifflow/cli.hpp"
#include "nifflow/model_io.hpp"
#include "support.hpp"

using nlohmann::json;

namespace {

struct Result {
  int code = 0;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out;
  std::ostringstream err;
  const int code = nifflow::cli::run(args, out, err);
  return Result{code, out.str(), err.str()};
}

/// A small dense model and dataset written to disk for the CLI to read.
struct Workspace {
  testing::ScratchDir dir{"cli"};
  std::string model;
  std::string data;

  Workspace() {
    std::mt19937_64 rng(12);
    const nifflow::ModelGraph m = testing::random_dense_model({3, 4, 2}, rng);
    const nifflow::Dataset d = testing::labelled_by_model(m, testing::random_matrix(80, 3, rng, -2, 2));
    model = (dir / "model.json").string();
    data = (dir / "data.csv").string();
    testing::write_file(model, nifflow::serialize_model(m));
    testing::write_file(data, nifflow::dataset_to_csv(d));
  }

  std::string path(const std::string& leaf) const { return (dir / leaf).string(); }
};

json error_line(const std::string& err) {
  const std::size_t at = err.rfind("error: ");
  REQUIRE(at != std::string::npos);
  const std::size_t end = err.find('\n', at);
  return json::parse(err.substr(at + 7, end - at - 7));
}

}  // namespace

TEST_CASE("build writes a graph document with the run configuration") {
  const Workspace ws;
  const Result r = run({"build", "--model", ws.model, "--data", ws.data, "--out", "-"});
  REQUIRE(r.code == 0);
  const json doc = json::parse(r.out);
  CHECK(doc["edges"].size() == 3 * 4 + 4 * 2);
  CHECK(doc["run_config"]["subcommand"] == "build");
  CHECK(doc["run_config"]["k"] == 5);
  CHECK(doc["run_config"]["beta"] == 5e-4);
  CHECK(doc["run_config"]["seed"] == 0);
  CHECK(doc["estimator"]["kind"] == "ksg");
  CHECK(r.err.find("built mean_mi graph") != std::string::npos);
}

TEST_CASE("analyze annotates every node") {
  const Workspace ws;
  for (const char* format : {"json", "dot", "graphml"}) {
    const Result r = run({"analyze", "--model", ws.model, "--data", ws.data, "--gamma", "1.0", "--format", format});
    REQUIRE(r.code == 0);
    if (std::string(format) == "json") {
      const json doc = json::parse(r.out);
      for (const json& node : doc["nodes"]) {
        CHECK(node.contains("centrality"));
        CHECK(node.contains("community"));
      }
      CHECK(doc["analysis"]["gamma"] == 1.0);
    } else {
      CHECK(r.out.find("centrality") != std::string::npos);
      CHECK(r.out.find("run_config") != std::string::npos);
    }
  }
}

TEST_CASE("repeated invocations produce identical artifacts") {
  const Workspace ws;
  const std::vector<std::vector<std::string>> invocations{
      {"analyze", "--model", ws.model, "--data", ws.data, "--seed", "3", "--out", ws.path("a.json")},
      {"build", "--model", ws.model, "--data", ws.data, "--mode", "pmi", "--sample", "4", "--format", "dot",
       "--out", ws.path("a.dot")},
      {"attribute", "--model", ws.model, "--data", ws.data, "--out", ws.path("a.csv"), "--report", ws.path("ks.json")},
      {"prune", "--model", ws.model, "--data", ws.data, "--eval", ws.data, "--steps", "0,5,10,20", "--out",
       ws.path("p.csv")},
  };
  for (const auto& args : invocations) {
    CAPTURE(args[0]);
    REQUIRE(run(args).code == 0);
    std::vector<std::string> first;
    for (const char* leaf : {"a.json", "a.dot", "a.csv", "ks.json", "p.csv"}) first.push_back(testing::read_file(ws.path(leaf)));
    REQUIRE(run(args).code == 0);
    std::vector<std::string> second;
    for (const char* leaf : {"a.json", "a.dot", "a.csv", "ks.json", "p.csv"}) second.push_back(testing::read_file(ws.path(leaf)));
    CHECK(first == second);
  }
}

TEST_CASE("attribute and prune artifacts") {
  const Workspace ws;
  REQUIRE(run({"attribute", "--model", ws.model, "--data", ws.data, "--out", ws.path("attr.csv"), "--report",
               ws.path("report.json")})
              .code == 0);
  const std::string csv = testing::read_file(ws.path("attr.csv"));
  CHECK(csv.rfind("# run_config: {", 0) == 0);
  CHECK(csv.find("feature,class,value\n") != std::string::npos);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 2 + 3 * 2);
  const json report = json::parse(testing::read_file(ws.path("report.json")));
  CHECK(report["ks"]["statistic"].get<double>() >= 0.0);
  CHECK(report["ks"]["statistic"].get<double>() <= 1.0);
  CHECK(report["per_class"].size() == 2);
  CHECK(report["run_config"]["report"] == ws.path("report.json"));

  const Result r = run({"prune", "--model", ws.model, "--data", ws.data, "--fractions", "0,0.5,1"});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("zeroed_weights,accuracy\n0,1\n10,") != std::string::npos);
  CHECK(r.out.find("\n20,") != std::string::npos);
  CHECK(r.err.find("warning") != std::string::npos);
}

TEST_CASE("saliency map CSV for an image model") {
  const Workspace ws;
  std::mt19937_64 rng(13);
  nifflow::Layer conv;
  conv.kind = nifflow::LayerKind::conv2d;
  conv.activation = nifflow::Activation::relu;
  conv.kernel = nifflow::ConvKernel{2, 1, 2, 2, testing::random_vector(8, rng)};
  conv.bias = {0.1, 0.1};
  nifflow::Layer flatten;
  flatten.kind = nifflow::LayerKind::flatten;
  const nifflow::ModelGraph cnn(nifflow::TensorShape{1, 3, 3, true}, 2,
                                {conv, flatten,
                                 testing::dense_layer(testing::random_matrix(2, 8, rng), {0, 0}, nifflow::Activation::identity)});
  nifflow::Dataset images = testing::labelled_by_model(cnn, testing::random_matrix(60, 9, rng, 0, 1));
  testing::write_file(ws.path("cnn.json"), nifflow::serialize_model(cnn));
  testing::write_file(ws.path("images.csv"), nifflow::dataset_to_csv(images));
  testing::write_file(ws.path("images.meta.json"), R"({"image_shape": [3, 3, 1]})");

  const Result r = run({"saliency", "--model", ws.path("cnn.json"), "--data", ws.path("images.csv"), "--sample", "2"});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("pixel,row,col,channel,class,value\n") != std::string::npos);
  CHECK(std::count(r.out.begin(), r.out.end(), '\n') == 2 + 9);
  CHECK(r.out.find(fmt::format("\n8,2,2,0,{},", images.labels[2])) != std::string::npos);

  const Result dense = run({"saliency", "--model", ws.model, "--data", ws.data});
  CHECK(dense.code == 1);
  CHECK(error_line(dense.err)["kind"] == "unsupported");
}

TEST_CASE("flags override the config file, which overrides defaults") {
  const Workspace ws;
  testing::write_file(ws.path("config.json"), R"({"k": 3, "beta": 0.01, "gamma": 0.5})");
  const Result from_file = run({"build", "--model", ws.model, "--data", ws.data, "--config", ws.path("config.json")});
  REQUIRE(from_file.code == 0);
  const json a = json::parse(from_file.out);
  CHECK(a["run_config"]["k"] == 3);
  CHECK(a["run_config"]["beta"] == 0.01);
  CHECK(a["estimator"]["k"] == 3);

  const Result flagged =
      run({"build", "--model", ws.model, "--data", ws.data, "--config", ws.path("config.json"), "--k", "4"});
  REQUIRE(flagged.code == 0);
  const json b = json::parse(flagged.out);
  CHECK(b["run_config"]["k"] == 4);
  CHECK(b["run_config"]["beta"] == 0.01);
}

TEST_CASE("failures print a machine-readable error line") {
  const Workspace ws;
  SUBCASE("missing input") {
    const Result r = run({"build", "--data", ws.data});
    CHECK(r.code == 1);
    CHECK(error_line(r.err)["kind"] == "invalid_argument");
  }
  SUBCASE("nonexistent path") {
    const Result r = run({"build", "--model", ws.path("nope.json"), "--data", ws.data});
    CHECK(r.code == 1);
    CHECK(error_line(r.err)["kind"] == "io");
  }
  SUBCASE("out-of-range value") {
    const Result r = run({"analyze", "--model", ws.model, "--data", ws.data, "--gamma", "0"});
    CHECK(r.code == 1);
    CHECK(error_line(r.err)["message"].get<std::string>().find("--gamma") != std::string::npos);
  }
  SUBCASE("unknown estimator") {
    const Result r = run({"build", "--model", ws.model, "--data", ws.data, "--estimator", "mine"});
    CHECK(r.code == 1);
  }
  SUBCASE("unknown flag") {
    const Result r = run({"build", "--frobnicate"});
    CHECK(r.code == 2);
    CHECK(error_line(r.err)["kind"] == "usage");
  }
  SUBCASE("no subcommand") { CHECK(run({}).code == 2); }
  SUBCASE("k too large for the data") {
    const Result r = run({"build", "--model", ws.model, "--data", ws.data, "--k", "500"});
    CHECK(r.code == 1);
    CHECK(error_line(r.err)["kind"] == "invalid_argument");
  }
}

TEST_CASE("validate runs the estimator self-checks") {
  const Result r = run({"validate"});
  CHECK(r.code == 0);
  CHECK(r.out.find("FAIL") == std::string::npos);
  CHECK(std::count(r.out.begin(), r.out.end(), '\n') >= 6);
}
