#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "csrb/cost.hpp"
#include "csrb/model.hpp"
#include "csrb/model_io.hpp"
#include "csrb/tensor.hpp"

using namespace csrb;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct RunResult {
  int code = -1;
  std::string out, err;
};

fs::path fresh_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / "csrb_cli_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE_MESSAGE(in.good(), "cannot open ", p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary);
  REQUIRE(out.good());
  out << content;
}

RunResult run_cli(const fs::path& scratch, const std::vector<std::string>& args) {
  fs::path out_p = scratch / "stdout.txt", err_p = scratch / "stderr.txt";
  std::ostringstream cmd;
  cmd << '\'' << CSRB_CLI_PATH << '\'';
  for (const std::string& a : args) cmd << " '" << a << '\'';
  cmd << " >'" << out_p.string() << "' 2>'" << err_p.string() << '\'';
  int rc = std::system(cmd.str().c_str());
  REQUIRE(rc != -1);
  RunResult r;
  r.code = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
  r.out = read_file(out_p);
  r.err = read_file(err_p);
  return r;
}

fs::path write_config(const fs::path& dir, const json& cfg, const char* name = "config.json") {
  fs::path p = dir / name;
  write_file(p, cfg.dump(2) + "\n");
  return p;
}

json synth_dataset(std::size_t classes, std::size_t dim, std::size_t per_class,
                   std::uint64_t seed) {
  json d;
  d["kind"] = "synth";
  d["classes"] = classes;
  d["dim"] = dim;
  d["per_class"] = per_class;
  d["spread"] = 0.05;
  d["seed"] = seed;
  return d;
}

json base_train(const char* loss) {
  json t;
  t["loss"] = loss;
  t["epochs"] = 3;
  t["batch_size"] = 8;
  t["lr"] = 0.01;
  t["optimizer"] = "adam";
  t["eps_start"] = 0.01;
  t["eps_target"] = 0.05;
  t["warmup_epochs"] = 2;
  t["seed"] = 11;
  t["selection_threshold"] = 1.0;
  t["folds"] = 4;
  t["val_fold"] = 0;
  return t;
}

void put_be32(std::string& s, std::uint32_t v) {
  s.push_back(static_cast<char>((v >> 24) & 0xff));
  s.push_back(static_cast<char>((v >> 16) & 0xff));
  s.push_back(static_cast<char>((v >> 8) & 0xff));
  s.push_back(static_cast<char>(v & 0xff));
}

struct PixelRow {
  std::size_t label;
  std::vector<std::pair<std::size_t, unsigned char>> px;  // sparse dim -> byte
};

// 1 x d images so the flattened input dimension is d
json write_idx(const fs::path& dir, std::size_t d, const std::vector<PixelRow>& rows) {
  std::string imgs;
  put_be32(imgs, 0x803);
  put_be32(imgs, static_cast<std::uint32_t>(rows.size()));
  put_be32(imgs, 1);
  put_be32(imgs, static_cast<std::uint32_t>(d));
  for (const PixelRow& r : rows) {
    std::string row(d, '\0');
    for (auto [i, b] : r.px) row[i] = static_cast<char>(b);
    imgs += row;
  }
  std::string labels;
  put_be32(labels, 0x801);
  put_be32(labels, static_cast<std::uint32_t>(rows.size()));
  for (const PixelRow& r : rows) labels.push_back(static_cast<char>(r.label));
  write_file(dir / "images.idx", imgs);
  write_file(dir / "labels.idx", labels);
  json d_cfg;
  d_cfg["kind"] = "mnist";
  d_cfg["images"] = (dir / "images.idx").string();
  d_cfg["labels"] = (dir / "labels.idx").string();
  return d_cfg;
}

// identity network: logits == inputs, hidden neurons stably positive
Network probe_net(std::size_t d) {
  Network net;
  net.layers.push_back({Tensor::identity(d), Tensor::vec(std::vector<double>(d, 10.0))});
  net.layers.push_back({Tensor::identity(d), Tensor::vec(std::vector<double>(d, -10.0))});
  return net;
}

std::string save_probe(const fs::path& dir, std::size_t d) {
  fs::path p = dir / "probe.bin";
  save_model(probe_net(d), ModelMeta{0.04, 0.0, 7}, p.string());
  return p.string();
}

CostMatrix zeros_matrix(std::size_t m) {
  CostMatrix C;
  C.m = m;
  C.entries.assign(m * m, 0.0);
  return C;
}

CostMatrix all_ones_offdiag(std::size_t m) {
  CostMatrix C = zeros_matrix(m);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j)
      if (i != j) C.at(i, j) = 1.0;
  return C;
}

std::string write_cost_csv(const fs::path& dir, const CostMatrix& C,
                           const char* name = "cost.csv") {
  fs::path p = dir / name;
  write_file(p, cost_matrix_to_csv(C));
  return p.string();
}

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream ss(text);
  std::string line;
  while (std::getline(ss, line)) {
    std::vector<std::string> cells;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

// one seed-class example certified everywhere at moderate radii, one that
// loses only the (s, s+1 mod 10) pair
std::vector<PixelRow> wheel_rows() {
  std::vector<PixelRow> rows;
  for (std::size_t s = 0; s < 10; ++s) {
    rows.push_back({s, {{s, 200}}});
    rows.push_back({s, {{s, 200}, {(s + 1) % 10, 150}}});
  }
  return rows;
}

}  // namespace

TEST_CASE("train writes its artifacts and reruns byte-identically") {
  fs::path dir = fresh_dir("train_smoke");
  json cfg;
  cfg["dataset"] = synth_dataset(3, 4, 12, 5);
  cfg["arch"]["hidden"] = json::array({6});
  cfg["train"] = base_train("ce");
  cfg["output_dir"] = (dir / "run1").string();
  fs::path cfg_path = write_config(dir, cfg);

  RunResult r = run_cli(dir, {"train", "--config", cfg_path.string()});
  CHECK(r.code == 0);
  REQUIRE(fs::exists(dir / "run1" / "model.bin"));
  REQUIRE(fs::exists(dir / "run1" / "history.csv"));
  REQUIRE(fs::exists(dir / "run1" / "summary.json"));

  json s = json::parse(read_file(dir / "run1" / "summary.json"));
  CHECK(s["command"] == "train");
  CHECK(s["epochs_run"] == 3);
  CHECK(s["selected_epoch"].get<std::size_t>() < 3);
  CHECK(s["diverged"] == false);
  CHECK(s["seed"] == 11);
  CHECK(s["alpha"] == 0.0);
  CHECK(s["eps_target"] == 0.05);
  CHECK(s["val_class_err"].is_number());
  CHECK(s["config"]["dataset"]["kind"] == "synth");
  CHECK(s["artifacts"]["model"] == "model.bin");
  CHECK(json::parse(r.out) == s);

  auto hist = parse_csv(read_file(dir / "run1" / "history.csv"));
  REQUIRE(hist.size() == 4);
  CHECK(hist[0] == std::vector<std::string>{"epoch", "eps", "lr", "train_loss",
                                            "val_class_err", "val_robust_metric"});

  ModelMeta meta;
  Network net = load_model((dir / "run1" / "model.bin").string(), &meta);
  CHECK(net.input_dim() == 4);
  CHECK(net.class_count() == 3);
  CHECK(meta.epsilon == 0.05);
  CHECK(meta.alpha == 0.0);
  CHECK(meta.seed == 11);

  // reruns are pure functions of the config; --output-dir only moves them
  RunResult r2 = run_cli(dir, {"train", "--config", cfg_path.string(), "--output-dir",
                               (dir / "run2").string()});
  CHECK(r2.code == 0);
  CHECK(read_file(dir / "run2" / "model.bin") == read_file(dir / "run1" / "model.bin"));
  CHECK(read_file(dir / "run2" / "history.csv") == read_file(dir / "run1" / "history.csv"));
  CHECK(read_file(dir / "run2" / "summary.json") ==
        read_file(dir / "run1" / "summary.json"));
}

TEST_CASE("cost-sensitive training at alpha zero writes the same model file as ce") {
  fs::path dir = fresh_dir("alpha_zero");
  json ce;
  ce["dataset"] = synth_dataset(3, 4, 12, 5);
  ce["arch"]["hidden"] = json::array({6});
  ce["train"] = base_train("ce");
  ce["output_dir"] = (dir / "ce").string();

  // with every off-diagonal pair costed the validation metric coincides with
  // the overall robust error, so model selection agrees run-to-run too
  json cs = ce;
  cs["train"]["loss"] = "cs_robust";
  cs["train"]["alpha"] = 0.0;
  cs["task"] = {{"kind", "matrix"}, {"csv", write_cost_csv(dir, all_ones_offdiag(3))}};
  cs["output_dir"] = (dir / "cs").string();

  RunResult r1 = run_cli(dir, {"train", "--config", write_config(dir, ce, "ce.json").string()});
  RunResult r2 = run_cli(dir, {"train", "--config", write_config(dir, cs, "cs.json").string()});
  REQUIRE(r1.code == 0);
  REQUIRE(r2.code == 0);
  CHECK(read_file(dir / "ce" / "model.bin") == read_file(dir / "cs" / "model.bin"));
}

TEST_CASE("config validation failures exit 2 and name the field") {
  fs::path dir = fresh_dir("config_errors");
  json cfg;
  cfg["dataset"] = synth_dataset(3, 4, 8, 5);
  cfg["arch"]["hidden"] = json::array({6});
  cfg["train"] = base_train("ce");
  cfg["output_dir"] = (dir / "out").string();

  SUBCASE("missing dataset section") {
    cfg.erase("dataset");
    RunResult r = run_cli(dir, {"train", "--config", write_config(dir, cfg).string()});
    CHECK(r.code == 2);
    json e = json::parse(r.err);
    CHECK(e["kind"] == "config");
    CHECK(e["field"] == "dataset");
  }
  SUBCASE("unknown top-level key") {
    cfg["datasett"] = 1;
    RunResult r = run_cli(dir, {"train", "--config", write_config(dir, cfg).string()});
    CHECK(r.code == 2);
    CHECK(json::parse(r.err)["field"] == "datasett");
  }
  SUBCASE("unknown nested key") {
    cfg["train"]["epochz"] = 3;
    RunResult r = run_cli(dir, {"train", "--config", write_config(dir, cfg).string()});
    CHECK(r.code == 2);
    CHECK(json::parse(r.err)["field"] == "train.epochz");
  }
  SUBCASE("negative evaluation radius") {
    cfg["eval"]["eps"] = -0.1;
    cfg["model"] = "whatever.bin";
    RunResult r = run_cli(dir, {"certify", "--config", write_config(dir, cfg).string()});
    CHECK(r.code == 2);
    CHECK(json::parse(r.err)["field"] == "eval.eps");
  }
}

TEST_CASE("tune-alpha requires the cs objective and an explicit budget flag") {
  fs::path dir = fresh_dir("tune_guards");
  json cfg;
  cfg["dataset"] = synth_dataset(3, 4, 8, 5);
  cfg["arch"]["hidden"] = json::array({6});
  cfg["train"] = base_train("cs_robust");
  cfg["task"] = {{"kind", "single_pair"}, {"s", 0}, {"t", 1}};
  cfg["tune"]["budget_ok"] = true;
  cfg["output_dir"] = (dir / "out").string();

  SUBCASE("wrong loss") {
    cfg["train"]["loss"] = "ce";
    cfg.erase("task");
    RunResult r = run_cli(dir, {"tune-alpha", "--config", write_config(dir, cfg).string()});
    CHECK(r.code == 2);
    CHECK(json::parse(r.err)["field"] == "train.loss");
  }
  SUBCASE("budget not acknowledged") {
    cfg["tune"]["budget_ok"] = false;
    RunResult r = run_cli(dir, {"tune-alpha", "--config", write_config(dir, cfg).string()});
    CHECK(r.code == 2);
    CHECK(json::parse(r.err)["field"] == "tune.budget_ok");
  }
  SUBCASE("no tune section") {
    cfg.erase("tune");
    RunResult r = run_cli(dir, {"tune-alpha", "--config", write_config(dir, cfg).string()});
    CHECK(r.code == 2);
    CHECK(json::parse(r.err)["field"] == "tune");
  }
}

TEST_CASE("data failures exit 3") {
  fs::path dir = fresh_dir("data_errors");
  std::string probe = save_probe(dir, 10);
  json data_cfg = write_idx(dir, 10, {{0, {{0, 200}}}, {1, {{1, 200}}}});

  json cfg;
  cfg["dataset"] = data_cfg;
  cfg["eval"]["eps"] = 0.1;
  cfg["model"] = probe;
  cfg["output_dir"] = (dir / "out").string();

  SUBCASE("missing image file") {
    cfg["dataset"]["images"] = (dir / "nope.idx").string();
    RunResult r = run_cli(dir, {"certify", "--config", write_config(dir, cfg).string()});
    CHECK(r.code == 3);
    CHECK(json::parse(r.err)["kind"] == "data");
  }
  SUBCASE("missing model file") {
    cfg["model"] = (dir / "nope.bin").string();
    RunResult r = run_cli(dir, {"certify", "--config", write_config(dir, cfg).string()});
    CHECK(r.code == 3);
    CHECK(json::parse(r.err)["kind"] == "data");
  }
  SUBCASE("ragged cost matrix csv") {
    write_file(dir / "bad.csv", "0,1\n1\n");
    cfg["task"] = {{"kind", "matrix"}, {"csv", (dir / "bad.csv").string()}};
    RunResult r = run_cli(dir, {"certify", "--config", write_config(dir, cfg).string()});
    CHECK(r.code == 3);
    CHECK(json::parse(r.err)["kind"] == "data");
  }
}

TEST_CASE("usage errors exit 2 with a machine-readable message") {
  fs::path dir = fresh_dir("usage_errors");
  SUBCASE("unknown subcommand") {
    RunResult r = run_cli(dir, {"frobnicate"});
    CHECK(r.code == 2);
    CHECK(json::parse(r.err)["kind"] == "config");
  }
  SUBCASE("missing --config") {
    RunResult r = run_cli(dir, {"train"});
    CHECK(r.code == 2);
    CHECK(json::parse(r.err)["kind"] == "config");
  }
}

TEST_CASE("divergent training exits 4 after saving the last finite checkpoint") {
  fs::path dir = fresh_dir("divergence");
  json cfg;
  cfg["dataset"] = synth_dataset(3, 4, 12, 5);
  cfg["arch"]["hidden"] = json::array({6});
  cfg["train"] = base_train("overall_robust");
  cfg["train"]["optimizer"] = "sgd";
  cfg["train"]["lr"] = 1e200;
  cfg["train"]["eps_start"] = 0.1;
  cfg["train"]["eps_target"] = 0.1;
  cfg["train"]["warmup_epochs"] = 0;
  cfg["output_dir"] = (dir / "out").string();

  RunResult r = run_cli(dir, {"train", "--config", write_config(dir, cfg).string()});
  CHECK(r.code == 4);
  CHECK(json::parse(r.err)["kind"] == "numeric");

  json s = json::parse(read_file(dir / "out" / "summary.json"));
  CHECK(s["diverged"] == true);
  CHECK(s["epochs_run"] == 0);
  CHECK(s["selection_fallback"] == true);
  CHECK(s["val_class_err"].is_null());

  Network net = load_model((dir / "out" / "model.bin").string());
  for (const AffineLayer& l : net.layers) {
    CHECK(l.W.all_finite());
    CHECK(l.b.all_finite());
  }
  CHECK(read_file(dir / "out" / "history.csv") ==
        "epoch,eps,lr,train_loss,val_class_err,val_robust_metric\n");
}

TEST_CASE("certify metrics on a hand-built dataset match the worked values") {
  fs::path dir = fresh_dir("certify_hand");
  // identity logits; at eps = 0.04 a seed/target pair certifies exactly when
  // the pixel gap exceeds 2*eps*255 = 20.4 levels
  std::string probe = save_probe(dir, 10);
  json data_cfg = write_idx(dir, 10,
                            {{0, {{0, 200}, {1, 100}, {2, 100}}},
                             {0, {{0, 120}, {1, 110}, {2, 60}}},
                             {1, {{1, 150}, {0, 50}, {2, 140}}},
                             {2, {{2, 230}, {0, 10}, {1, 10}}}});
  CostMatrix C = zeros_matrix(10);
  C.at(0, 1) = 1.0;
  C.at(0, 2) = 2.0;
  C.at(1, 2) = 3.0;

  json cfg;
  cfg["dataset"] = data_cfg;
  cfg["eval"]["eps"] = 0.04;
  cfg["task"] = {{"kind", "matrix"}, {"csv", write_cost_csv(dir, C)}};
  cfg["output_dir"] = (dir / "out").string();

  RunResult r = run_cli(dir, {"certify", "--config", write_config(dir, cfg).string(),
                              "--model", probe});
  REQUIRE(r.code == 0);

  json m = json::parse(read_file(dir / "out" / "metrics.json"));
  CHECK(m["command"] == "certify");
  CHECK(m["examples"] == 4);
  CHECK(m["eps"] == 0.04);
  CHECK(m["model_meta"]["epsilon"] == 0.04);
  CHECK(m["model_meta"]["seed"] == 7);
  CHECK(m["classification_error"] == 0.0);
  // seeds 1 and 2 each lose one pair out of the four examples
  CHECK(m["overall_robust_error"] == 0.5);
  CHECK(m["cost_sensitive"]["candidates"] == 3);
  CHECK(m["cost_sensitive"]["cs_robust_error"].get<double>() ==
        doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(m["cost_sensitive"]["robust_cost"].get<double>() ==
        doctest::Approx(4.0 / 3.0).epsilon(1e-12));
  CHECK(!m.contains("warning"));
  CHECK(json::parse(r.out) == m);

  std::istringstream lines(read_file(dir / "out" / "records.jsonl"));
  std::string line;
  std::vector<json> recs;
  while (std::getline(lines, line)) recs.push_back(json::parse(line));
  REQUIRE(recs.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(recs[i]["example_id"] == i);
    CHECK(recs[i]["targets"].size() == 9);
    CHECK(recs[i]["J"].size() == 9);
    CHECK(recs[i]["verdicts"].size() == 9);
  }
  CHECK(recs[0]["certified"] == true);
  CHECK(recs[1]["certified"] == false);
  for (std::size_t k = 0; k < 9; ++k)
    if (recs[1]["targets"][k] == 1) CHECK(recs[1]["J"][k].get<double>() < 0.0);
}

TEST_CASE("radius zero certification reproduces the classification error") {
  fs::path dir = fresh_dir("certify_eps0");
  std::string probe = save_probe(dir, 10);
  json data_cfg = write_idx(dir, 10,
                            {{0, {{0, 200}}},
                             {1, {{1, 200}}},
                             {2, {{2, 200}}},
                             {0, {{3, 200}}},
                             {1, {{4, 200}}},
                             {2, {{5, 200}}}});
  json cfg;
  cfg["dataset"] = data_cfg;
  cfg["eval"]["eps"] = 0.0;
  cfg["model"] = probe;
  cfg["output_dir"] = (dir / "out").string();

  RunResult r = run_cli(dir, {"certify", "--config", write_config(dir, cfg).string()});
  REQUIRE(r.code == 0);
  json m = json::parse(read_file(dir / "out" / "metrics.json"));
  CHECK(m["classification_error"] == 0.5);
  CHECK(m["overall_robust_error"] == 0.5);
  CHECK(m["cost_sensitive"].is_null());
}

TEST_CASE("certify reports null cost metrics with a warning when no seeds are candidates") {
  fs::path dir = fresh_dir("certify_nocand");
  std::string probe = save_probe(dir, 10);
  json data_cfg = write_idx(dir, 10, {{0, {{0, 200}}}, {1, {{1, 200}}}, {2, {{2, 200}}}});
  CostMatrix C = zeros_matrix(10);
  C.at(5, 0) = 1.0;  // only class-5 seeds are costed and none are present

  json cfg;
  cfg["dataset"] = data_cfg;
  cfg["eval"]["eps"] = 0.0;
  cfg["model"] = probe;
  cfg["task"] = {{"kind", "matrix"}, {"csv", write_cost_csv(dir, C)}};
  cfg["output_dir"] = (dir / "out").string();

  RunResult r = run_cli(dir, {"certify", "--config", write_config(dir, cfg).string()});
  CHECK(r.code == 0);
  json m = json::parse(read_file(dir / "out" / "metrics.json"));
  CHECK(m["cost_sensitive"]["candidates"] == 0);
  CHECK(m["cost_sensitive"]["cs_robust_error"].is_null());
  CHECK(m["cost_sensitive"]["robust_cost"].is_null());
  CHECK(m.contains("warning"));
  CHECK(json::parse(r.err).contains("warning"));
}

TEST_CASE("heatmap of a perfectly robust model is all zeros") {
  fs::path dir = fresh_dir("heatmap_zero");
  std::string probe = save_probe(dir, 10);
  std::vector<PixelRow> rows;
  for (std::size_t s = 0; s < 10; ++s) rows.push_back({s, {{s, 200}}});
  json cfg;
  cfg["dataset"] = write_idx(dir, 10, rows);
  cfg["eval"]["eps"] = 0.0;
  cfg["output_dir"] = (dir / "out").string();

  RunResult r = run_cli(dir, {"heatmap", "--config", write_config(dir, cfg).string(),
                              "--model", probe});
  REQUIRE(r.code == 0);
  CHECK(json::parse(r.out)["command"] == "heatmap");

  std::string text = read_file(dir / "out" / "heatmap.csv");
  CHECK(text.find("nan") == std::string::npos);
  auto grid = parse_csv(text);
  REQUIRE(grid.size() == 11);
  CHECK(grid[0][0] == "seed\\target");
  for (std::size_t s = 0; s < 10; ++s) {
    REQUIRE(grid[s + 1].size() == 11);
    CHECK(grid[s + 1][0] == std::to_string(s));
    for (std::size_t t = 0; t < 10; ++t)
      CHECK(std::stod(grid[s + 1][t + 1]) == 0.0);
  }
}

TEST_CASE("heatmap cells equal failure fractions recomputed from certification records") {
  fs::path dir = fresh_dir("heatmap_cross");
  std::string probe = save_probe(dir, 10);
  json data_cfg = write_idx(dir, 10, wheel_rows());

  json hm_cfg;
  hm_cfg["dataset"] = data_cfg;
  hm_cfg["eval"]["eps"] = 0.3;
  hm_cfg["model"] = probe;
  hm_cfg["output_dir"] = (dir / "hm").string();
  RunResult rh = run_cli(dir, {"heatmap", "--config",
                               write_config(dir, hm_cfg, "hm.json").string()});
  REQUIRE(rh.code == 0);

  json ct_cfg = hm_cfg;
  ct_cfg["task"] = {{"kind", "matrix"}, {"csv", write_cost_csv(dir, all_ones_offdiag(10))}};
  ct_cfg["output_dir"] = (dir / "ct").string();
  RunResult rc = run_cli(dir, {"certify", "--config",
                               write_config(dir, ct_cfg, "ct.json").string()});
  REQUIRE(rc.code == 0);

  // recount per-pair failure fractions straight from the per-example records
  double counts[10][10] = {};
  double totals[10] = {};
  std::istringstream lines(read_file(dir / "ct" / "records.jsonl"));
  std::string line;
  while (std::getline(lines, line)) {
    json rec = json::parse(line);
    std::size_t y = rec["label"];
    totals[y] += 1.0;
    for (std::size_t k = 0; k < rec["targets"].size(); ++k)
      if (rec["J"][k].get<double>() < 0.0) counts[y][rec["targets"][k].get<std::size_t>()] += 1.0;
  }

  auto grid = parse_csv(read_file(dir / "hm" / "heatmap.csv"));
  REQUIRE(grid.size() == 11);
  for (std::size_t s = 0; s < 10; ++s)
    for (std::size_t t = 0; t < 10; ++t) {
      double cell = std::stod(grid[s + 1][t + 1]);
      double expected = s == t ? 0.0 : counts[s][t] / totals[s];
      CHECK(cell == doctest::Approx(expected).epsilon(1e-9));
      if (t == (s + 1) % 10) CHECK(cell == 0.5);
    }

  // with every pair costed the two headline robust errors coincide
  json m = json::parse(read_file(dir / "ct" / "metrics.json"));
  CHECK(m["overall_robust_error"] == 0.5);
  CHECK(m["cost_sensitive"]["cs_robust_error"] == m["overall_robust_error"]);
}

TEST_CASE("epsilon sweep emits a nondecreasing two-model table") {
  fs::path dir = fresh_dir("sweep");
  std::string probe = save_probe(dir, 10);
  std::vector<PixelRow> rows = wheel_rows();
  rows.push_back({0, {{1, 200}}});  // one clean mistake so the eps=0 row is nonzero

  json cfg;
  cfg["dataset"] = write_idx(dir, 10, rows);
  cfg["eval"]["eps_list"] = json::array({0.0, 0.3, 0.7});
  cfg["task"] = {{"kind", "matrix"}, {"csv", write_cost_csv(dir, all_ones_offdiag(10))}};
  cfg["output_dir"] = (dir / "out").string();

  RunResult r = run_cli(dir, {"sweep-eps", "--config", write_config(dir, cfg).string(),
                              "--baseline", probe, "--cs", probe});
  REQUIRE(r.code == 0);
  CHECK(json::parse(r.out)["command"] == "sweep-eps");

  auto table = parse_csv(read_file(dir / "out" / "sweep.csv"));
  REQUIRE(table.size() == 7);
  CHECK(table[0] == std::vector<std::string>{"model", "eps", "classification_error",
                                             "cs_robust_error"});
  const double expected_eps[3] = {0.0, 0.3, 0.7};
  const double expected_err[3] = {1.0 / 21.0, 11.0 / 21.0, 1.0};
  for (std::size_t b = 0; b < 2; ++b) {
    double prev = -1.0;
    for (std::size_t k = 0; k < 3; ++k) {
      const auto& row = table[1 + b * 3 + k];
      REQUIRE(row.size() == 4);
      CHECK(row[0] == (b == 0 ? "baseline" : "cost_sensitive"));
      CHECK(std::stod(row[1]) == doctest::Approx(expected_eps[k]).epsilon(1e-12));
      double cs_err = std::stod(row[3]);
      CHECK(cs_err == doctest::Approx(expected_err[k]).epsilon(1e-12));
      CHECK(cs_err >= prev);
      prev = cs_err;
      if (k == 0) CHECK(cs_err == doctest::Approx(std::stod(row[2])).epsilon(1e-12));
    }
  }
}

TEST_CASE("alpha tuning reports the two-stage grids and picks from the fine grid") {
  fs::path dir = fresh_dir("tune_run");
  json cfg;
  cfg["dataset"] = synth_dataset(3, 4, 10, 9);
  cfg["arch"]["hidden"] = json::array({6});
  cfg["train"] = base_train("cs_robust");
  cfg["train"]["epochs"] = 6;
  cfg["train"]["lr"] = 0.02;
  cfg["train"]["eps_start"] = 0.02;
  cfg["train"]["eps_target"] = 0.02;
  cfg["train"]["warmup_epochs"] = 0;
  cfg["train"]["selection_threshold"] = 0.9;
  cfg["train"]["folds"] = 5;
  // every pair costed: any validation fold has candidate seeds
  cfg["task"] = {{"kind", "matrix"}, {"csv", write_cost_csv(dir, all_ones_offdiag(3))}};
  cfg["tune"]["budget_ok"] = true;
  cfg["output_dir"] = (dir / "out").string();

  RunResult r = run_cli(dir, {"tune-alpha", "--config", write_config(dir, cfg).string()});
  REQUIRE(r.code == 0);

  json t = json::parse(read_file(dir / "out" / "tuning.json"));
  CHECK(t["command"] == "tune-alpha");
  REQUIRE(t["coarse"].size() == 5);
  REQUIRE(t["fine"].size() == 7);
  const double decades[5] = {1e-2, 1e-1, 1.0, 1e1, 1e2};
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(t["coarse"][i]["alpha"].get<double>() == decades[i]);
    CHECK(t["coarse"][i].contains("class_err"));
    CHECK(t["coarse"][i].contains("cs_robust_err"));
  }
  double ac = t["alpha_coarse"].get<double>();
  CHECK(std::count(std::begin(decades), std::end(decades), ac) == 1);
  bool best_in_fine = false;
  for (int p = -3; p <= 3; ++p) {
    double a = std::ldexp(ac, p);
    CHECK(t["fine"][static_cast<std::size_t>(p + 3)]["alpha"].get<double>() == a);
    if (a == t["best_alpha"].get<double>()) best_in_fine = true;
  }
  CHECK(best_in_fine);
  CHECK(t["fallback_coarse"] == false);
  CHECK(t["threshold"] == 0.9);
  CHECK(t["config"]["tune"]["budget_ok"] == true);
  CHECK(json::parse(r.out) == t);
}

TEST_CASE("alpha tuning flags the fallback when the threshold is unmeetable") {
  fs::path dir = fresh_dir("tune_fallback");
  json cfg;
  cfg["dataset"] = synth_dataset(3, 4, 6, 9);
  cfg["arch"]["hidden"] = json::array({4});
  cfg["train"] = base_train("cs_robust");
  cfg["train"]["epochs"] = 1;
  cfg["train"]["eps_start"] = 0.02;
  cfg["train"]["eps_target"] = 0.02;
  cfg["train"]["warmup_epochs"] = 0;
  cfg["train"]["selection_threshold"] = 0.0;
  cfg["task"] = {{"kind", "matrix"}, {"csv", write_cost_csv(dir, all_ones_offdiag(3))}};
  cfg["tune"]["budget_ok"] = true;
  cfg["output_dir"] = (dir / "out").string();

  RunResult r = run_cli(dir, {"tune-alpha", "--config", write_config(dir, cfg).string()});
  REQUIRE(r.code == 0);
  json t = json::parse(read_file(dir / "out" / "tuning.json"));
  CHECK(t["fallback_coarse"] == true);
  CHECK(t["fallback_fine"] == true);
  CHECK(t["best_alpha"].is_number());
}
