#include "tgcfa/harness.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <numeric>

#include <json.hpp>

#include "binary_io.hpp"

namespace tgcfa::harness {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string resolve(const std::string& path, const std::string& base_dir) {
  if (path.empty() || base_dir.empty() || fs::path(path).is_absolute()) return path;
  return (fs::path(base_dir) / path).lexically_normal().string();
}

json dice_json(const segcore::DiceReport& r) {
  std::vector<int> present(r.present.begin(), r.present.end());
  return {{"per_class", r.per_class}, {"present", present}, {"mean_foreground", r.mean_foreground}};
}

segcore::DiceReport dice_from(const json& j) {
  segcore::DiceReport r;
  r.per_class = j.at("per_class").get<std::vector<double>>();
  for (int p : j.at("present").get<std::vector<int>>()) r.present.push_back(p != 0);
  r.mean_foreground = j.at("mean_foreground").get<double>();
  return r;
}

json bundle_json(const segcore::LossBundle& b) {
  json j = {{"l_seg", b.l_seg}, {"l_pos", b.l_pos}, {"l_neg", b.l_neg},
            {"l_align", b.l_align}, {"l_total", b.l_total}};
  if (b.align_weight) j["align_weight"] = *b.align_weight;
  return j;
}

segcore::LossBundle bundle_from(const json& j) {
  segcore::LossBundle b;
  b.l_seg = j.at("l_seg").get<double>();
  b.l_pos = j.at("l_pos").get<double>();
  b.l_neg = j.at("l_neg").get<double>();
  b.l_align = j.at("l_align").get<double>();
  b.l_total = j.at("l_total").get<double>();
  if (j.contains("align_weight")) b.align_weight = j["align_weight"].get<double>();
  return b;
}

class Adam {
 public:
  Adam(const OptimizerConfig& config, std::vector<nn::Param<float>*> params)
      : config_(config), params_(std::move(params)) {
    for (auto* p : params_) {
      m_.push_back(nn::Tensor<float>::Zero(p->value.rows(), p->value.cols()));
      v_.push_back(nn::Tensor<float>::Zero(p->value.rows(), p->value.cols()));
    }
  }

  void zero_grad() {
    for (auto* p : params_) p->zero_grad();
  }

  void step(double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(config_.beta1, t_);
    const double bc2 = 1.0 - std::pow(config_.beta2, t_);
    const float b1 = static_cast<float>(config_.beta1), b2 = static_cast<float>(config_.beta2);
    const float step = static_cast<float>(lr / bc1);
    const float inv_bc2 = static_cast<float>(1.0 / bc2);
    const float eps = static_cast<float>(config_.epsilon);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto& g = params_[i]->grad;
      m_[i] = b1 * m_[i] + (1 - b1) * g;
      v_[i] = b2 * v_[i] + (1 - b2) * g.cwiseProduct(g);
      params_[i]->value.array() -=
          step * m_[i].array() / ((v_[i].array() * inv_bc2).sqrt() + eps);
    }
  }

 private:
  OptimizerConfig config_;
  std::vector<nn::Param<float>*> params_;
  std::vector<nn::Tensor<float>> m_, v_;
  int t_ = 0;
};

double scheduled_lr(const OptimizerConfig& opt, long step, long total) {
  if (opt.schedule == "constant" || total <= 0) return opt.learning_rate;
  return opt.learning_rate * 0.5 * (1.0 + std::cos(3.141592653589793 * static_cast<double>(step) / total));
}

struct Batch {
  nn::Activation<float> images;
  Eigen::VectorXi labels;
  std::vector<const LabelMap*> maps;
};

Batch make_batch(const std::vector<synthdom::SampleRecord>& samples, std::span<const int> indices) {
  const int b = static_cast<int>(indices.size());
  const int h = static_cast<int>(samples[indices[0]].image.rows());
  const int w = static_cast<int>(samples[indices[0]].image.cols());
  const int hw = h * w;
  Batch batch;
  batch.images = {nn::Tensor<float>(1, static_cast<Eigen::Index>(b) * hw), b, h, w};
  batch.labels.resize(static_cast<Eigen::Index>(b) * hw);
  for (int i = 0; i < b; ++i) {
    const auto& s = samples[indices[i]];
    if (s.image.rows() != h || s.image.cols() != w) throw ValidationError("batch images differ in size");
    std::copy(s.image.data(), s.image.data() + hw, batch.images.data.data() + static_cast<Eigen::Index>(i) * hw);
    std::copy(s.labels.data(), s.labels.data() + hw, batch.labels.data() + static_cast<Eigen::Index>(i) * hw);
    batch.maps.push_back(&s.labels);
  }
  return batch;
}

segcore::DiceReport evaluate_samples(TgcfaModel& model, const std::vector<synthdom::SampleRecord>& samples,
                                     int num_labels, std::optional<int> background_id) {
  constexpr int kChunk = 16;
  std::vector<segcore::DiceReport> reports;
  std::vector<int> indices(samples.size());
  std::iota(indices.begin(), indices.end(), 0);
  for (std::size_t start = 0; start < samples.size(); start += kChunk) {
    const auto count = std::min<std::size_t>(kChunk, samples.size() - start);
    const auto batch = make_batch(samples, std::span<const int>(indices).subspan(start, count));
    const auto out = model.net.forward(batch.images);
    for (std::size_t i = 0; i < count; ++i) {
      reports.push_back(segcore::dice_score(segcore::predict_labels(out.scores, static_cast<int>(i)),
                                            *batch.maps[i], num_labels, background_id));
    }
  }
  return segcore::mean_dice(reports, num_labels);
}

std::optional<int> background_of(const ExperimentConfig& config) {
  if (config.descriptions.empty()) return 0;
  return textbank::load_descriptions(config.descriptions).background_id;
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json(const std::string& json_text, const std::string& base_dir) {
  ExperimentConfig c;
  try {
    const json j = json::parse(json_text);
    c.dataset = resolve(j.value("dataset", c.dataset), base_dir);
    c.descriptions = resolve(j.value("descriptions", c.descriptions), base_dir);
    c.table = resolve(j.value("table", c.table), base_dir);
    c.provider = j.value("provider", c.provider);
    if (j.contains("backbone")) {
      const auto& b = j["backbone"];
      c.backbone.in_channels = b.value("in_channels", c.backbone.in_channels);
      c.backbone.num_classes = b.value("num_classes", c.backbone.num_classes);
      c.backbone.base_width = b.value("base_width", c.backbone.base_width);
      c.backbone.levels = b.value("levels", c.backbone.levels);
    }
    if (j.contains("optimizer")) {
      const auto& o = j["optimizer"];
      c.optimizer.kind = o.value("kind", c.optimizer.kind);
      c.optimizer.learning_rate = o.value("learning_rate", c.optimizer.learning_rate);
      c.optimizer.schedule = o.value("schedule", c.optimizer.schedule);
    }
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.neg_margin = j.value("neg_margin", c.neg_margin);
    c.mean_over_cells = j.value("mean_over_cells", c.mean_over_cells);
    c.align_weight = j.value("align_weight", c.align_weight);
    c.use_align = j.value("use_align", c.use_align);
    c.exclude_background = j.value("exclude_background", c.exclude_background);
    c.use_ce = j.value("use_ce", c.use_ce);
    c.use_dice = j.value("use_dice", c.use_dice);
    c.seed = j.value("seed", c.seed);
  } catch (const json::exception& e) {
    throw SchemaError(std::string("experiment config: ") + e.what());
  }
  return c;
}

ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
  if (!fs::exists(path)) throw ValidationError("config file not found: " + path);
  return from_json(detail::read_file_text(path), fs::path(path).parent_path().string());
}

std::string ExperimentConfig::to_json() const {
  const json j = {{"dataset", dataset},
                  {"descriptions", descriptions},
                  {"table", table},
                  {"provider", provider},
                  {"backbone", {{"in_channels", backbone.in_channels},
                                {"num_classes", backbone.num_classes},
                                {"base_width", backbone.base_width},
                                {"levels", backbone.levels}}},
                  {"optimizer", {{"kind", optimizer.kind},
                                 {"learning_rate", optimizer.learning_rate},
                                 {"schedule", optimizer.schedule}}},
                  {"epochs", epochs},
                  {"batch_size", batch_size},
                  {"neg_margin", neg_margin},
                  {"mean_over_cells", mean_over_cells},
                  {"align_weight", align_weight},
                  {"use_align", use_align},
                  {"exclude_background", exclude_background},
                  {"use_ce", use_ce},
                  {"use_dice", use_dice},
                  {"seed", seed}};
  return j.dump(2);
}

std::string ExperimentConfig::hash() const {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(to_json())));
  return buf;
}

void ExperimentConfig::validate() {
  const char* env = std::getenv("TGCFA_DATA_DIR");
  if (dataset.empty() && env) dataset = env;
  if (!dataset.empty() && !fs::exists(dataset) && env && !fs::path(dataset).is_absolute()) {
    const auto candidate = fs::path(env) / dataset;
    if (fs::exists(candidate)) dataset = candidate.string();
  }
  if (dataset.empty()) throw ValidationError("no dataset given (set 'dataset' or TGCFA_DATA_DIR)");
  if (!fs::is_directory(dataset)) throw ValidationError("dataset directory not found: " + dataset);
  if (table.empty()) throw ValidationError("no embedding table given; run embed-text first");
  if (!fs::exists(table)) {
    throw ValidationError("embedding table not found: " + table + " (run embed-text first)");
  }
  if (!descriptions.empty() && !fs::exists(descriptions)) {
    throw ValidationError("description file not found: " + descriptions);
  }
  backbone.validate();
  if (optimizer.kind != "adam") throw ValidationError("unsupported optimizer '" + optimizer.kind + "'");
  if (optimizer.schedule != "cosine" && optimizer.schedule != "constant") {
    throw ValidationError("unsupported schedule '" + optimizer.schedule + "'");
  }
  if (!(optimizer.learning_rate > 0)) throw ValidationError("learning rate must be positive");
  if (epochs < 0) throw ValidationError("epochs must be >= 0");
  if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
  if (neg_margin < -1 || neg_margin > 1) throw ValidationError("neg_margin must lie in [-1, 1]");
  if (!std::isfinite(align_weight) || align_weight < 0) throw ValidationError("align_weight must be >= 0");
  if (!use_ce && !use_dice) throw ValidationError("at least one of use_ce / use_dice is required");
}

std::string RunRecord::to_json() const {
  json epochs_json = json::array();
  for (const auto& e : epochs) {
    epochs_json.push_back({{"epoch", e.epoch},
                           {"learning_rate", e.learning_rate},
                           {"loss", bundle_json(e.mean_loss)},
                           {"val_dice", e.val_dice},
                           {"skipped_terms", e.skipped_terms}});
  }
  json reports = json::object();
  for (const auto& [domain, r] : final_reports) reports[domain] = dice_json(r);
  const json j = {{"config_hash", config_hash},
                  {"epochs", epochs_json},
                  {"best_epoch", best_epoch},
                  {"best_val_dice", best_val_dice},
                  {"checkpoint", checkpoint_path},
                  {"wall_clock_seconds", wall_clock_seconds},
                  {"final_reports", reports}};
  return j.dump(2) + "\n";
}

RunRecord RunRecord::from_json(const std::string& json_text) {
  RunRecord r;
  try {
    const json j = json::parse(json_text);
    r.config_hash = j.at("config_hash").get<std::string>();
    for (const auto& e : j.at("epochs")) {
      EpochLog log;
      log.epoch = e.at("epoch").get<int>();
      log.learning_rate = e.at("learning_rate").get<double>();
      log.mean_loss = bundle_from(e.at("loss"));
      log.val_dice = e.at("val_dice").get<double>();
      log.skipped_terms = e.value("skipped_terms", 0);
      r.epochs.push_back(log);
    }
    r.best_epoch = j.at("best_epoch").get<int>();
    r.best_val_dice = j.at("best_val_dice").get<double>();
    r.checkpoint_path = j.at("checkpoint").get<std::string>();
    r.wall_clock_seconds = j.at("wall_clock_seconds").get<double>();
    for (const auto& [domain, rep] : j.at("final_reports").items()) r.final_reports[domain] = dice_from(rep);
  } catch (const json::exception& e) {
    throw SchemaError(std::string("run record: ") + e.what());
  }
  return r;
}

RunRecord train(const ExperimentConfig& config, const synthdom::Dataset& dataset,
                const TrainOptions& options, TgcfaModel* trained) {
  const auto t0 = std::chrono::steady_clock::now();
  const synthdom::TrainingSource source(dataset);
  const auto table = textbank::load_table(config.table);
  const int n = config.backbone.num_classes;
  if (table.n() != n) {
    throw ValidationError("embedding table has " + std::to_string(table.n()) + " labels, model expects " +
                          std::to_string(n));
  }
  if (dataset.config().scene.num_labels != n) {
    throw ValidationError("dataset has " + std::to_string(dataset.config().scene.num_labels) +
                          " labels, model expects " + std::to_string(n));
  }
  const auto background_id = background_of(config);

  // Alignment label set: all labels, or all but background.
  std::vector<int> align_labels;
  for (int r = 0; r < n; ++r) {
    if (!(config.exclude_background && background_id && r == *background_id)) align_labels.push_back(r);
  }
  Matrix<float> align_table(static_cast<Eigen::Index>(align_labels.size()), table.k());
  for (std::size_t i = 0; i < align_labels.size(); ++i) align_table.row(i) = table.embeddings.row(align_labels[i]);

  std::vector<synthdom::SampleRecord> train_samples, val_samples;
  for (const auto* row : source.train()) train_samples.push_back(source.load(*row));
  for (const auto* row : source.val()) val_samples.push_back(source.load(*row));

  TgcfaModel model(config.backbone, table.k(), config.seed);
  auto params = model.parameters();
  Adam adam(config.optimizer, params);

  alignhead::AlignOptions<float> align_options;
  align_options.neg_margin = static_cast<float>(config.neg_margin);
  align_options.mean_over_cells = config.mean_over_cells;
  align_options.strict = false;
  segcore::SegLossOptions seg_options{config.use_ce, config.use_dice, 1.0};

  RunRecord record;
  record.config_hash = config.hash();
  const int n_train = static_cast<int>(train_samples.size());
  const long steps_per_epoch = n_train == 0 ? 0 : (n_train + config.batch_size - 1) / config.batch_size;
  const long total_steps = steps_per_epoch * config.epochs;
  long step = 0;
  std::vector<nn::Tensor<float>> best;

  std::vector<int> order(n_train);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng(mix_seed(config.seed, 1000 + epoch));
    for (int i = n_train - 1; i > 0; --i) std::swap(order[i], order[uniform_int(shuffle_rng, 0, i)]);

    double sum_seg = 0, sum_pos = 0, sum_neg = 0;
    int skipped = 0;
    double lr = 0;
    for (long s = 0; s < steps_per_epoch; ++s, ++step) {
      const int begin = static_cast<int>(s) * config.batch_size;
      const int count = std::min(config.batch_size, n_train - begin);
      const auto batch = make_batch(train_samples, std::span<const int>(order).subspan(begin, count));

      adam.zero_grad();
      auto fwd = model.net.forward(batch.images);
      nn::Activation<float> d_scores;
      const auto seg = segcore::segmentation_loss(fwd.scores, batch.labels, seg_options, &d_scores);

      double l_pos = 0, l_neg = 0;
      nn::Activation<float> d_bottleneck;
      if (config.use_align) {
        const auto& bott = fwd.bottleneck;
        d_bottleneck = {nn::Tensor<float>::Zero(bott.data.rows(), bott.data.cols()), bott.batch,
                        bott.height, bott.width};
        const auto projection = model.projection();
        alignhead::ProjectionGradients<float> proj_grads;
        const float scale = static_cast<float>(config.align_weight / count);
        for (int b = 0; b < count; ++b) {
          const auto grid = segcore::feature_grid_of(bott, b);
          const auto proj = alignhead::project_features(grid, projection);
          auto full_mask = alignhead::derive_feature_masks(*batch.maps[b], grid.height, grid.width, n);
          alignhead::FeatureLevelMask mask{
              decltype(full_mask.presence)(full_mask.presence.rows(), static_cast<Eigen::Index>(align_labels.size())),
              full_mask.height, full_mask.width};
          for (std::size_t i = 0; i < align_labels.size(); ++i) mask.presence.col(i) = full_mask.presence.col(align_labels[i]);
          alignhead::AlignmentGradients<float> grads;
          const auto loss = alignhead::alignment_loss_with_grad(proj, align_table, mask, align_options, grads);
          l_pos += loss.l_pos / count;
          l_neg += loss.l_neg / count;
          skipped += loss.skipped_terms;
          const Matrix<float> d_proj = grads.d_projected * scale;
          const Matrix<float> d_feat = alignhead::project_features_backward(grid, projection, d_proj, proj_grads);
          d_bottleneck.data.middleCols(static_cast<Eigen::Index>(b) * bott.plane(), bott.plane()) = d_feat.transpose();
        }
        model.proj_weight.grad += proj_grads.weight;
        model.proj_bias.grad.col(0) += proj_grads.bias;
      }

      segcore::LossBundle bundle;
      try {
        bundle = segcore::total_loss(seg.total, l_pos, l_neg, config.align_weight);
      } catch (const NumericError& e) {
        if (!options.out_dir.empty()) {
          json dump = {{"epoch", epoch}, {"batch", s}, {"l_seg", seg.total}, {"l_pos", l_pos},
                       {"l_neg", l_neg}, {"error", e.what()}};
          json seeds = json::array();
          for (int b = 0; b < count; ++b) seeds.push_back(source.train()[order[begin + b]]->scene_seed);
          dump["scene_seeds"] = seeds;
          detail::write_file_atomic((fs::path(options.out_dir) / "nonfinite_batch.json").string(), dump.dump(2));
        }
        throw NumericError("epoch " + std::to_string(epoch) + " batch " + std::to_string(s) + ": " + e.what());
      }
      if (!bundle.consistent()) throw NumericError("loss bundle failed its additivity check");

      model.net.backward(d_scores, config.use_align ? &d_bottleneck : nullptr);
      lr = scheduled_lr(config.optimizer, step, total_steps);
      adam.step(lr);
      sum_seg += bundle.l_seg;
      sum_pos += bundle.l_pos;
      sum_neg += bundle.l_neg;
    }

    EpochLog log;
    log.epoch = epoch;
    log.learning_rate = lr;
    const double denom = std::max<long>(1, steps_per_epoch);
    log.mean_loss = segcore::total_loss(sum_seg / denom, sum_pos / denom, sum_neg / denom, config.align_weight);
    log.skipped_terms = skipped;
    log.val_dice = val_samples.empty() ? 0.0
                                       : evaluate_samples(model, val_samples, n, background_id).mean_foreground;
    if (record.best_epoch < 0 || log.val_dice > record.best_val_dice) {
      record.best_epoch = epoch;
      record.best_val_dice = log.val_dice;
      best.clear();
      for (const auto* p : params) best.push_back(p->value);
    }
    if (options.verbose) {
      std::fprintf(stderr, "epoch %3d  lr %.2e  seg %.4f  pos %.4f  neg %.4f  val dice %.2f\n", epoch, lr,
                   log.mean_loss.l_seg, log.mean_loss.l_pos, log.mean_loss.l_neg, log.val_dice);
    }
    record.epochs.push_back(log);
  }

  if (!best.empty()) {
    for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = best[i];
  }
  if (!options.out_dir.empty()) {
    fs::create_directories(options.out_dir);
    if (!record.epochs.empty()) {
      record.checkpoint_path = (fs::path(options.out_dir) / "checkpoint.tgck").string();
      save_checkpoint(record.checkpoint_path, model, record.config_hash);
    }
    detail::write_file_atomic((fs::path(options.out_dir) / "config.json").string(), config.to_json());
  }
  record.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (!options.out_dir.empty()) {
    detail::write_file_atomic((fs::path(options.out_dir) / "run.json").string(), record.to_json());
  }
  if (trained) *trained = std::move(model);
  return record;
}

RunRecord train(ExperimentConfig config, const TrainOptions& options) {
  config.validate();
  const synthdom::Dataset dataset(config.dataset);
  return train(config, dataset, options);
}

DomainReports evaluate(TgcfaModel& model, const synthdom::Dataset& dataset,
                       const std::vector<std::string>& domains, int num_labels,
                       std::optional<int> background_id) {
  const auto available = dataset.test_domains();
  DomainReports out;
  for (const auto& domain : domains) {
    if (std::find(available.begin(), available.end(), domain) == available.end()) {
      std::string list;
      for (const auto& d : available) list += (list.empty() ? "" : ", ") + d;
      throw ValidationError("unknown domain '" + domain + "'; available: " + list);
    }
  }
  for (const auto& domain : domains) {
    std::vector<synthdom::SampleRecord> samples;
    for (const auto* row : dataset.select("test", domain)) samples.push_back(dataset.load(*row));
    out[domain] = evaluate_samples(model, samples, num_labels, background_id);
  }
  return out;
}

DomainReports evaluate(const std::string& checkpoint_path, const synthdom::Dataset& dataset,
                       const std::vector<std::string>& domains, std::optional<int> background_id) {
  auto loaded = load_checkpoint(checkpoint_path);
  return evaluate(loaded.model, dataset, domains, loaded.model.net.config().num_classes, background_id);
}

std::string TrendSummary::to_json() const {
  json seeds_json = json::array();
  for (const auto& s : seeds) {
    seeds_json.push_back({{"seed", s.seed},
                          {"baseline", {{"domain_dice", s.baseline.domain_dice},
                                        {"best_val_dice", s.baseline.run.best_val_dice},
                                        {"run", json::parse(s.baseline.run.to_json())}}},
                          {"tgcfa", {{"domain_dice", s.tgcfa.domain_dice},
                                     {"best_val_dice", s.tgcfa.run.best_val_dice},
                                     {"run", json::parse(s.tgcfa.run.to_json())}}},
                          {"difference", s.difference}});
  }
  const json j = {{"source_domain", source_domain},
                  {"domains", domains},
                  {"seeds", seeds_json},
                  {"mean_difference", mean_difference},
                  {"positive_count", positive_count}};
  return j.dump(2) + "\n";
}

TrendSummary TrendSummary::from_json(const std::string& json_text) {
  TrendSummary t;
  try {
    const json j = json::parse(json_text);
    t.source_domain = j.at("source_domain").get<std::string>();
    t.domains = j.at("domains").get<std::vector<std::string>>();
    for (const auto& s : j.at("seeds")) {
      TrendSeed seed;
      seed.seed = s.at("seed").get<std::uint64_t>();
      seed.baseline.domain_dice = s.at("baseline").at("domain_dice").get<std::map<std::string, double>>();
      seed.baseline.run = RunRecord::from_json(s.at("baseline").at("run").dump());
      seed.tgcfa.domain_dice = s.at("tgcfa").at("domain_dice").get<std::map<std::string, double>>();
      seed.tgcfa.run = RunRecord::from_json(s.at("tgcfa").at("run").dump());
      seed.difference = s.at("difference").get<std::map<std::string, double>>();
      t.seeds.push_back(std::move(seed));
    }
    t.mean_difference = j.at("mean_difference").get<std::map<std::string, double>>();
    t.positive_count = j.at("positive_count").get<std::map<std::string, int>>();
  } catch (const json::exception& e) {
    throw SchemaError(std::string("trend summary: ") + e.what());
  }
  return t;
}

TrendSummary run_trend_study(const ExperimentConfig& config, const std::vector<std::uint64_t>& seeds,
                             const std::string& out_dir, bool verbose) {
  if (seeds.size() < 3) throw ValidationError("trend study needs at least 3 seeds");
  ExperimentConfig base = config;
  base.validate();
  const synthdom::Dataset dataset(base.dataset);
  const auto background_id = background_of(base);

  TrendSummary summary;
  summary.source_domain = dataset.source_domain();
  summary.domains = dataset.test_domains();
  for (const auto seed : seeds) {
    TrendSeed entry;
    entry.seed = seed;
    for (const bool aligned : {false, true}) {
      ExperimentConfig arm = base;
      arm.seed = seed;
      arm.use_align = aligned;
      TrainOptions options;
      options.verbose = verbose;
      if (!out_dir.empty()) {
        options.out_dir = (fs::path(out_dir) / ("seed_" + std::to_string(seed)) /
                           (aligned ? "tgcfa" : "baseline")).string();
      }
      if (verbose) std::fprintf(stderr, "seed %llu, %s arm\n", static_cast<unsigned long long>(seed),
                                aligned ? "tgcfa" : "baseline");
      TgcfaModel model;
      TrendArm result;
      result.run = train(arm, dataset, options, &model);
      result.run.final_reports =
          evaluate(model, dataset, summary.domains, arm.backbone.num_classes, background_id);
      for (const auto& [domain, report] : result.run.final_reports) result.domain_dice[domain] = report.mean_foreground;
      if (!options.out_dir.empty()) {
        detail::write_file_atomic((fs::path(options.out_dir) / "run.json").string(), result.run.to_json());
      }
      (aligned ? entry.tgcfa : entry.baseline) = std::move(result);
    }
    for (const auto& domain : summary.domains) {
      entry.difference[domain] = entry.tgcfa.domain_dice[domain] - entry.baseline.domain_dice[domain];
    }
    summary.seeds.push_back(std::move(entry));
  }
  for (const auto& domain : summary.domains) {
    double sum = 0;
    int positive = 0;
    for (const auto& s : summary.seeds) {
      sum += s.difference.at(domain);
      positive += s.difference.at(domain) > 0;
    }
    summary.mean_difference[domain] = sum / static_cast<double>(summary.seeds.size());
    summary.positive_count[domain] = positive;
  }
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    detail::write_file_atomic((fs::path(out_dir) / "trend.json").string(), summary.to_json());
  }
  return summary;
}

}  // namespace tgcfa::harness
