#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "test_util.hpp"
#include "tgcfa/harness.hpp"

using namespace tgcfa;
using namespace tgcfa::harness;
namespace fs = std::filesystem;

namespace {

// Small dataset, stub table and a narrow backbone.
ExperimentConfig tiny_setup(const std::string& name, int epochs = 2) {
  const auto dir = testutil::scratch(name);
  synthdom::DatasetConfig dc;
  dc.n_train = 8;
  dc.n_val = 4;
  dc.n_test_per_domain = 4;
  dc.seed = 3;
  synthdom::build_dataset(dc, dir + "/data");
  const auto set = textbank::load_descriptions(testutil::data_path("descriptions/synth_abdominal.json"));
  textbank::save_table(textbank::build_table(set, textbank::StubTextEncoder(16)), dir + "/table.tgtb");

  ExperimentConfig c;
  c.dataset = dir + "/data";
  c.descriptions = testutil::data_path("descriptions/synth_abdominal.json");
  c.table = dir + "/table.tgtb";
  c.backbone.base_width = 4;
  c.epochs = epochs;
  c.batch_size = 4;
  c.optimizer.learning_rate = 1e-3;
  return c;
}

std::string bytes_of(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_CASE("experiment config JSON") {
  const auto c = ExperimentConfig::from_json(R"({"dataset": "d", "table": "t.tgtb", "epochs": 3,
    "neg_margin": 1.0, "backbone": {"base_width": 8}, "optimizer": {"learning_rate": 0.001}})",
                                             "/base");
  CHECK(c.dataset == "/base/d");
  CHECK(c.table == "/base/t.tgtb");
  CHECK(c.epochs == 3);
  CHECK(c.neg_margin == 1.0);
  CHECK(c.backbone.base_width == 8);
  CHECK(c.backbone.levels == 4);
  CHECK(c.optimizer.learning_rate == 0.001);
  CHECK(c.batch_size == 8);

  const auto again = ExperimentConfig::from_json(c.to_json());
  CHECK(again.to_json() == c.to_json());
  CHECK(again.hash() == c.hash());
  auto other = c;
  other.seed = 1;
  CHECK(other.hash() != c.hash());

  CHECK_THROWS_AS(ExperimentConfig::from_json("{\"epochs\": \"ten\"}"), SchemaError);
  CHECK_THROWS_AS(ExperimentConfig::from_file("/nonexistent.json"), ValidationError);
}

TEST_CASE("config validation") {
  auto c = tiny_setup("harness_validate");
  CHECK_NOTHROW(c.validate());

  auto no_table = c;
  no_table.table = c.table + ".missing";
  try {
    no_table.validate();
    FAIL("expected a validation error");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("embed-text") != std::string::npos);
  }

  auto bad = c;
  bad.batch_size = 0;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad = c;
  bad.neg_margin = 2;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad = c;
  bad.use_ce = bad.use_dice = false;
  CHECK_THROWS_AS(bad.validate(), ValidationError);

  auto from_env = c;
  from_env.dataset.clear();
  ::setenv("TGCFA_DATA_DIR", c.dataset.c_str(), 1);
  CHECK_NOTHROW(from_env.validate());
  CHECK(from_env.dataset == c.dataset);
  ::unsetenv("TGCFA_DATA_DIR");
  from_env.dataset.clear();
  CHECK_THROWS_AS(from_env.validate(), ValidationError);
}

TEST_CASE("zero epochs writes a run record and no checkpoint") {
  auto c = tiny_setup("harness_zero", 0);
  const auto out = testutil::scratch("harness_zero_out");
  const auto run = train(c, TrainOptions{out, false});
  CHECK(run.epochs.empty());
  CHECK(run.checkpoint_path.empty());
  CHECK(fs::exists(out + "/run.json"));
  CHECK(fs::exists(out + "/config.json"));
  CHECK_FALSE(fs::exists(out + "/checkpoint.tgck"));
}

TEST_CASE("training is deterministic and touches no target or test file") {
  auto c = tiny_setup("harness_determinism");
  c.validate();
  synthdom::Dataset dataset(c.dataset);
  std::vector<synthdom::ManifestRow> opened;
  dataset.set_access_hook([&](const std::string&, const synthdom::ManifestRow& row) { opened.push_back(row); });

  const auto out1 = testutil::scratch("harness_det_1");
  const auto out2 = testutil::scratch("harness_det_2");
  const auto r1 = train(c, dataset, TrainOptions{out1, false});
  const auto r2 = train(c, dataset, TrainOptions{out2, false});

  REQUIRE(r1.epochs.size() == 2);
  for (std::size_t e = 0; e < 2; ++e) {
    CHECK(r1.epochs[e].mean_loss.l_total == r2.epochs[e].mean_loss.l_total);
    CHECK(r1.epochs[e].val_dice == r2.epochs[e].val_dice);
    CHECK(r1.epochs[e].mean_loss.consistent());
    CHECK(r1.epochs[e].mean_loss.l_pos > 0);
  }
  CHECK(bytes_of(out1 + "/checkpoint.tgck") == bytes_of(out2 + "/checkpoint.tgck"));

  CHECK(opened.size() == 2 * 2 * (8 + 4));
  for (const auto& row : opened) {
    CHECK(row.domain == dataset.source_domain());
    CHECK(row.split != "test");
  }

  auto other = c;
  other.seed = 9;
  CHECK(train(other, dataset).epochs[0].mean_loss.l_total != r1.epochs[0].mean_loss.l_total);
}

TEST_CASE("checkpoint round-trip preserves parameters and evaluation") {
  auto c = tiny_setup("harness_checkpoint", 1);
  c.validate();
  synthdom::Dataset dataset(c.dataset);
  const auto out = testutil::scratch("harness_checkpoint_out");
  TgcfaModel model;
  const auto run = train(c, dataset, TrainOptions{out, false}, &model);
  REQUIRE_FALSE(run.checkpoint_path.empty());

  auto loaded = load_checkpoint(run.checkpoint_path);
  CHECK(loaded.config_hash == c.hash());
  auto a = model.parameters();
  auto b = loaded.model.parameters();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i]->name == b[i]->name);
    CHECK(a[i]->value == b[i]->value);
  }

  const auto domains = dataset.test_domains();
  const auto direct = evaluate(model, dataset, domains, 5);
  const auto via_file = evaluate(run.checkpoint_path, dataset, domains);
  for (const auto& d : domains) {
    CHECK(direct.at(d).mean_foreground == via_file.at(d).mean_foreground);
    CHECK(direct.at(d).per_class == via_file.at(d).per_class);
  }
  CHECK_THROWS_AS(evaluate(model, dataset, {"styleQ"}, 5), ValidationError);

  auto bytes = bytes_of(run.checkpoint_path);
  bytes[1] = 'X';
  std::ofstream(out + "/bad.tgck", std::ios::binary) << bytes;
  CHECK_THROWS_AS(load_checkpoint(out + "/bad.tgck"), FormatError);
  std::ofstream(out + "/short.tgck", std::ios::binary) << bytes_of(run.checkpoint_path).substr(0, 200);
  CHECK_THROWS_AS(load_checkpoint(out + "/short.tgck"), FormatError);
  CHECK_THROWS_AS(load_checkpoint(out + "/absent.tgck"), ValidationError);
}

TEST_CASE("run record JSON round-trip") {
  RunRecord r;
  r.config_hash = "abc";
  r.best_epoch = 1;
  r.best_val_dice = 42.5;
  EpochLog e;
  e.epoch = 1;
  e.learning_rate = 1e-4;
  e.mean_loss = segcore::total_loss(1.0, 0.5, 0.25, 0.5);
  e.val_dice = 42.5;
  r.epochs = {e};
  r.final_reports["styleA"] = segcore::DiceReport{{100, 50}, {true, true}, 50};
  const auto back = RunRecord::from_json(r.to_json());
  CHECK(back.to_json() == r.to_json());
  CHECK(back.epochs[0].mean_loss.align_weight == 0.5);
  CHECK(back.epochs[0].mean_loss.consistent());
}

TEST_CASE("a label count mismatch between table and model is rejected") {
  auto c = tiny_setup("harness_mismatch", 1);
  const auto set = textbank::parse_descriptions(R"({"labels": [
    {"id": 0, "name": "a", "descriptions": ["x"]}, {"id": 1, "name": "b", "descriptions": ["y"]}]})");
  textbank::save_table(textbank::build_table(set, textbank::StubTextEncoder(16)), c.table);
  CHECK_THROWS_AS(train(c), ValidationError);
}

TEST_CASE("an untrained model scores poorly") {
  auto c = tiny_setup("harness_random", 0);
  c.validate();
  synthdom::Dataset dataset(c.dataset);
  TgcfaModel model(c.backbone, 16, 0);
  const auto reports = evaluate(model, dataset, dataset.test_domains(), 5);
  for (const auto& [domain, report] : reports) CHECK(report.mean_foreground < 30);
}

TEST_CASE("trend study needs three seeds and is neutral without training") {
  auto c = tiny_setup("harness_trend", 0);
  CHECK_THROWS_AS(run_trend_study(c, {0, 1}), ValidationError);

  const auto out = testutil::scratch("harness_trend_out");
  const auto summary = run_trend_study(c, {0, 1, 2}, out);
  CHECK(summary.seeds.size() == 3);
  CHECK(summary.domains == std::vector<std::string>{"styleA", "styleB"});
  for (const auto& d : summary.domains) {
    CHECK(summary.mean_difference.at(d) == 0);
    CHECK(summary.positive_count.at(d) == 0);
  }
  CHECK(fs::exists(out + "/trend.json"));
  const auto back = TrendSummary::from_json(bytes_of(out + "/trend.json"));
  CHECK(back.to_json() == summary.to_json());
}

TEST_CASE("excluding background from alignment still trains") {
  auto c = tiny_setup("harness_exclude_bg", 1);
  c.exclude_background = true;
  const auto run = train(c);
  REQUIRE(run.epochs.size() == 1);
  CHECK(std::isfinite(run.epochs[0].mean_loss.l_total));
}
