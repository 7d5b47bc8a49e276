// tgcfa: text-guided feature alignment workflow.
//
//   tgcfa embed-text --descriptions PATH --provider stub --out table.tgtb
//   tgcfa gen-data   --config gen.json --out data/ --seed 0
//   tgcfa train      --config train.json --out runs/a [--trend-seeds 0,1,2]
//   tgcfa eval       --checkpoint runs/a/checkpoint.tgck --dataset data/ --domains styleB
//   tgcfa report     --run runs/a [--format text|csv] --out plots/
//
// Exit codes: 0 success, 1 validation error, 2 runtime error.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "tgcfa/harness.hpp"
#include "tgcfa/report.hpp"
#include "tgcfa/synthdom.hpp"
#include "tgcfa/textbank.hpp"

namespace fs = std::filesystem;
using namespace tgcfa;

namespace {

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open file: " + path);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_text(const std::string& path, const std::string& text) {
  const std::string partial = path + ".partial";
  {
    std::ofstream out(partial, std::ios::binary);
    if (!out) throw Error("cannot write " + partial);
    out << text;
  }
  fs::rename(partial, path);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

struct EmbedArgs {
  std::string descriptions, provider = "stub", out, import_file, model_dir;
  int dim = 64;
  bool normalize_variants = false;
  std::uint64_t seed = 0;
};

int cmd_embed_text(const EmbedArgs& a) {
  const auto set = textbank::load_descriptions(a.descriptions);
  std::unique_ptr<textbank::TextEncoderProvider> encoder;
  if (a.provider == "stub") {
    encoder = std::make_unique<textbank::StubTextEncoder>(a.dim, 77, a.seed);
  } else if (a.provider == "import") {
    if (a.import_file.empty()) throw ValidationError("--provider import requires --import-file");
    encoder = std::make_unique<textbank::ImportedTextEncoder>(textbank::ImportedTextEncoder::from_file(a.import_file));
  } else if (a.provider == "pretrained") {
    std::string dir = a.model_dir;
    if (dir.empty() && std::getenv("TGCFA_TEXT_MODEL")) dir = std::getenv("TGCFA_TEXT_MODEL");
    encoder = textbank::make_pretrained_encoder(dir, set);
  } else {
    throw ValidationError("unknown provider '" + a.provider + "'");
  }
  std::vector<std::string> warnings;
  textbank::BuildOptions options;
  options.normalize_variants = a.normalize_variants;
  options.warnings = &warnings;
  const auto table = textbank::build_table(set, *encoder, options);
  for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
  if (const auto parent = fs::path(a.out).parent_path(); !parent.empty()) fs::create_directories(parent);
  textbank::save_table(table, a.out);
  std::cout << "wrote " << a.out << " (" << table.n() << " labels x " << table.k() << " dims, "
            << table.encoder_fingerprint << ")\n";
  return 0;
}

struct GenArgs {
  std::string config, out;
  std::optional<std::uint64_t> seed;
};

int cmd_gen_data(const GenArgs& a) {
  synthdom::DatasetConfig config;
  if (!a.config.empty()) config = synthdom::dataset_config_from_json(read_text(a.config));
  if (a.seed) config.seed = *a.seed;
  const auto rows = synthdom::build_dataset(config, a.out);
  std::cout << "wrote " << rows.size() << " samples to " << a.out << " (source " << config.source.name
            << ", " << config.targets.size() << " target domain(s))\n";
  return 0;
}

struct TrainArgs {
  std::string config, out, dataset, table, trend_seeds;
  std::optional<std::uint64_t> seed;
  std::optional<int> epochs;
  bool no_align = false;
  bool quiet = false;
};

harness::ExperimentConfig experiment_from(const std::string& config_path, const std::string& dataset,
                                          const std::string& table) {
  harness::ExperimentConfig config;
  if (!config_path.empty()) config = harness::ExperimentConfig::from_file(config_path);
  if (!dataset.empty()) config.dataset = dataset;
  if (!table.empty()) config.table = table;
  return config;
}

int cmd_train(const TrainArgs& a) {
  auto config = experiment_from(a.config, a.dataset, a.table);
  if (a.seed) config.seed = *a.seed;
  if (a.epochs) config.epochs = *a.epochs;
  if (a.no_align) config.use_align = false;
  config.validate();

  if (!a.trend_seeds.empty()) {
    std::vector<std::uint64_t> seeds;
    for (const auto& s : split_list(a.trend_seeds)) {
      try {
        seeds.push_back(std::stoull(s));
      } catch (const std::exception&) {
        throw ValidationError("bad seed '" + s + "' in --trend-seeds");
      }
    }
    const auto summary = harness::run_trend_study(config, seeds, a.out, !a.quiet);
    std::cout << report::format_text(summary);
    return 0;
  }
  harness::TrainOptions options;
  options.out_dir = a.out;
  options.verbose = !a.quiet;
  const auto run = harness::train(config, options);
  std::cout << "best epoch " << run.best_epoch << ", source val dice " << run.best_val_dice << "\n";
  if (!run.checkpoint_path.empty()) std::cout << "checkpoint " << run.checkpoint_path << "\n";
  return 0;
}

struct EvalArgs {
  std::string checkpoint, dataset, domains, descriptions, out;
};

int cmd_eval(const EvalArgs& a) {
  std::string root = a.dataset;
  if (root.empty() && std::getenv("TGCFA_DATA_DIR")) root = std::getenv("TGCFA_DATA_DIR");
  const synthdom::Dataset dataset(root);
  auto domains = a.domains.empty() ? dataset.test_domains() : split_list(a.domains);
  std::optional<int> background = 0;
  if (!a.descriptions.empty()) background = textbank::load_descriptions(a.descriptions).background_id;
  const auto reports = harness::evaluate(a.checkpoint, dataset, domains, background);
  harness::RunRecord record;
  const fs::path run_json = fs::path(a.checkpoint).parent_path() / "run.json";
  if (fs::exists(run_json)) record = harness::RunRecord::from_json(read_text(run_json.string()));
  record.final_reports = reports;
  for (const auto& [domain, r] : reports) {
    std::cout << domain << ": mean foreground dice " << r.mean_foreground << "  per class [";
    for (std::size_t c = 0; c < r.per_class.size(); ++c) std::cout << (c ? ", " : "") << r.per_class[c];
    std::cout << "]\n";
  }
  if (!a.out.empty()) {
    fs::create_directories(a.out);
    write_text((fs::path(a.out) / "eval.json").string(), record.to_json());
  }
  return 0;
}

struct ReportArgs {
  std::string run, format = "text", out;
};

int cmd_report(const ReportArgs& a) {
  const auto trend = fs::path(a.run) / "trend.json";
  const auto eval = fs::path(a.run) / "eval.json";
  const auto run = fs::path(a.run) / "run.json";
  const std::string out_dir = a.out.empty() ? a.run : a.out;
  std::vector<std::string> plots;
  if (fs::exists(trend)) {
    const auto summary = harness::TrendSummary::from_json(read_text(trend.string()));
    std::cout << (a.format == "csv" ? report::format_csv(summary) : report::format_text(summary));
    plots = report::write_trend_plots(summary, out_dir);
  } else if (fs::exists(eval) || fs::exists(run)) {
    const auto record = harness::RunRecord::from_json(read_text((fs::exists(eval) ? eval : run).string()));
    std::cout << (a.format == "csv" ? report::format_run_csv(record) : report::format_run_text(record));
    plots = report::write_run_plots(record, out_dir);
  } else {
    throw ValidationError("no trend.json, eval.json or run.json in " + a.run);
  }
  for (const auto& p : plots) std::cerr << "plot " << p << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Text-guided contrastive feature alignment for single-source domain generalization"};
  app.require_subcommand(1);

  EmbedArgs embed;
  auto* embed_cmd = app.add_subcommand("embed-text", "Build the per-label text embedding table");
  embed_cmd->add_option("--descriptions", embed.descriptions, "Label description file (JSON)")->required();
  embed_cmd->add_option("--provider", embed.provider, "Text encoder: stub | import | pretrained")
      ->check(CLI::IsMember({"stub", "import", "pretrained"}));
  embed_cmd->add_option("--out", embed.out, "Output table path (.tgtb)")->required();
  embed_cmd->add_option("--import-file", embed.import_file, "Per-variant embeddings for --provider import");
  embed_cmd->add_option("--model-dir", embed.model_dir, "Local model directory for --provider pretrained");
  embed_cmd->add_option("--dim", embed.dim, "Stub embedding dimension")->check(CLI::PositiveNumber);
  embed_cmd->add_option("--seed", embed.seed, "Stub encoder seed");
  embed_cmd->add_flag("--normalize-variants", embed.normalize_variants, "L2-normalize variants before averaging");

  GenArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate the synthetic cross-domain dataset");
  gen_cmd->add_option("--config", gen.config, "Dataset config (JSON); defaults when omitted");
  gen_cmd->add_option("--out", gen.out, "Output dataset directory")->required();
  gen_cmd->add_option("--seed", gen.seed, "Master seed (overrides the config)");

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Train on the source domain (or run a paired trend study)");
  train_cmd->add_option("--config", tr.config, "Experiment config (JSON)");
  train_cmd->add_option("--out", tr.out, "Run output directory");
  train_cmd->add_option("--seed", tr.seed, "Seed for initialization and data order");
  train_cmd->add_option("--dataset", tr.dataset, "Dataset directory (overrides the config)");
  train_cmd->add_option("--table", tr.table, "Embedding table (overrides the config)");
  train_cmd->add_option("--epochs", tr.epochs, "Epoch count (overrides the config)");
  train_cmd->add_flag("--no-align", tr.no_align, "Disable the alignment loss (baseline)");
  train_cmd->add_option("--trend-seeds", tr.trend_seeds, "Comma-separated seeds: run baseline vs aligned per seed");
  train_cmd->add_flag("--quiet", tr.quiet, "Suppress per-epoch progress");

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on test domains");
  eval_cmd->add_option("--checkpoint", ev.checkpoint, "Checkpoint file (.tgck)")->required();
  eval_cmd->add_option("--dataset", ev.dataset, "Dataset directory (default: TGCFA_DATA_DIR)");
  eval_cmd->add_option("--domains", ev.domains, "Comma-separated domains (default: all test domains)");
  eval_cmd->add_option("--descriptions", ev.descriptions, "Description file naming the background label");
  eval_cmd->add_option("--out", ev.out, "Directory for eval.json");
  std::uint64_t unused_seed = 0;
  std::string unused_config;
  eval_cmd->add_option("--seed", unused_seed, "Accepted for uniformity; evaluation is deterministic");
  eval_cmd->add_option("--config", unused_config, "Accepted for uniformity; unused");

  ReportArgs rep;
  auto* report_cmd = app.add_subcommand("report", "Render tables and plots for a run or trend study");
  report_cmd->add_option("--run", rep.run, "Run or trend-study directory")->required();
  report_cmd->add_option("--format", rep.format, "text | csv")->check(CLI::IsMember({"text", "csv"}));
  report_cmd->add_option("--out", rep.out, "Directory for plot files (default: the run directory)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*embed_cmd) return cmd_embed_text(embed);
    if (*gen_cmd) return cmd_gen_data(gen);
    if (*train_cmd) return cmd_train(tr);
    if (*eval_cmd) return cmd_eval(ev);
    if (*report_cmd) return cmd_report(rep);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
