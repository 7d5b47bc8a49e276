#include "tgcfa/synthdom.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "binary_io.hpp"

namespace tgcfa::synthdom {

using nlohmann::json;
namespace fs = std::filesystem;

std::string to_string(ShapeKind kind) {
  switch (kind) {
    case ShapeKind::kEllipse: return "ellipse";
    case ShapeKind::kRoundedRect: return "rounded-rect";
    case ShapeKind::kBlob: return "blob";
  }
  return "ellipse";
}

ShapeKind shape_kind_from_string(const std::string& s) {
  if (s == "ellipse") return ShapeKind::kEllipse;
  if (s == "rounded-rect") return ShapeKind::kRoundedRect;
  if (s == "blob") return ShapeKind::kBlob;
  throw ValidationError("unknown shape kind '" + s + "'");
}

bool Shape::contains(double y, double x) const {
  const double dy = y - center_y, dx = x - center_x;
  const double c = std::cos(rotation), s = std::sin(rotation);
  const double u = (c * dx + s * dy) / axis_x;
  const double v = (-s * dx + c * dy) / axis_y;
  switch (kind) {
    case ShapeKind::kEllipse:
      return u * u + v * v <= 1.0;
    case ShapeKind::kRoundedRect:
      return u * u * u * u + v * v * v * v <= 1.0;
    case ShapeKind::kBlob: {
      const double theta = std::atan2(v, u);
      double radius = 1.0;
      for (std::size_t i = 0; i + 1 < harmonics.size(); i += 2) {
        const double k = 2.0 + static_cast<double>(i / 2);
        radius += harmonics[i] * std::cos(k * theta + harmonics[i + 1]);
      }
      return std::sqrt(u * u + v * v) <= radius;
    }
  }
  return false;
}

double Shape::extent() const {
  double scale = 1.0;
  if (kind == ShapeKind::kRoundedRect) scale = std::pow(2.0, 0.25);
  if (kind == ShapeKind::kBlob) {
    for (std::size_t i = 0; i < harmonics.size(); i += 2) scale += std::abs(harmonics[i]);
  }
  return scale * std::max(axis_y, axis_x);
}

LabelMap SceneSpec::rasterize(LabelMap* owner) const {
  LabelMap labels = LabelMap::Zero(height, width);
  if (owner) owner->setConstant(height, width, -1);
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    const auto& shape = shapes[i];
    const double r = shape.extent() + 1.0;
    const int y0 = std::max(0, static_cast<int>(std::floor(shape.center_y - r)));
    const int y1 = std::min(height, static_cast<int>(std::ceil(shape.center_y + r)));
    const int x0 = std::max(0, static_cast<int>(std::floor(shape.center_x - r)));
    const int x1 = std::min(width, static_cast<int>(std::ceil(shape.center_x + r)));
    for (int y = y0; y < y1; ++y) {
      for (int x = x0; x < x1; ++x) {
        if (shape.contains(y + 0.5, x + 0.5)) {
          labels(y, x) = shape.label;
          if (owner) (*owner)(y, x) = static_cast<int>(i);
        }
      }
    }
  }
  return labels;
}

SceneConfig SceneConfig::abdominal() {
  SceneConfig c;
  ShapePrior liver;
  liver.label = 1;
  liver.kind = ShapeKind::kBlob;
  liver.center_y_min = 0.32; liver.center_y_max = 0.50;
  liver.center_x_min = 0.26; liver.center_x_max = 0.40;
  liver.axis_y_min = 0.14; liver.axis_y_max = 0.20;
  liver.axis_x_min = 0.10; liver.axis_x_max = 0.16;
  liver.max_rotation = 0.6;

  ShapePrior right_kidney;
  right_kidney.label = 2;
  right_kidney.kind = ShapeKind::kEllipse;
  right_kidney.center_y_min = 0.64; right_kidney.center_y_max = 0.76;
  right_kidney.center_x_min = 0.28; right_kidney.center_x_max = 0.40;
  right_kidney.axis_y_min = 0.07; right_kidney.axis_y_max = 0.10;
  right_kidney.axis_x_min = 0.04; right_kidney.axis_x_max = 0.06;
  right_kidney.max_rotation = 0.4;

  ShapePrior left_kidney = right_kidney;
  left_kidney.label = 3;
  left_kidney.center_x_min = 0.60; left_kidney.center_x_max = 0.72;

  ShapePrior spleen;
  spleen.label = 4;
  spleen.kind = ShapeKind::kRoundedRect;
  spleen.center_y_min = 0.28; spleen.center_y_max = 0.44;
  spleen.center_x_min = 0.64; spleen.center_x_max = 0.76;
  spleen.axis_y_min = 0.08; spleen.axis_y_max = 0.11;
  spleen.axis_x_min = 0.05; spleen.axis_x_max = 0.07;
  spleen.max_rotation = 0.5;

  c.priors = {liver, right_kidney, left_kidney, spleen};
  return c;
}

void SceneConfig::validate() const {
  if (height <= 0 || width <= 0) throw ValidationError("scene canvas must be positive");
  if (num_labels < 1 || num_labels > 255) throw ValidationError("scene needs 1..255 labels");
  for (const auto& p : priors) {
    if (p.label <= 0 || p.label >= num_labels) {
      throw ValidationError("shape prior label " + std::to_string(p.label) + " outside [1, " +
                            std::to_string(num_labels) + ")");
    }
    if (p.min_count < 0 || p.max_count < p.min_count) throw ValidationError("bad shape count range");
    if (p.axis_y_min <= 0 || p.axis_x_min <= 0 || p.axis_y_max < p.axis_y_min ||
        p.axis_x_max < p.axis_x_min || p.center_y_max < p.center_y_min ||
        p.center_x_max < p.center_x_min) {
      throw ValidationError("bad shape prior ranges for label " + std::to_string(p.label));
    }
  }
  if (max_retries < 1) throw ValidationError("max_retries must be positive");
}

SceneSpec generate_scene(const SceneConfig& config, std::uint64_t seed) {
  config.validate();
  SceneSpec scene;
  scene.height = config.height;
  scene.width = config.width;
  scene.num_labels = config.num_labels;
  scene.seed = seed;
  Rng rng(mix_seed(seed, 0x5ce4e));
  for (const auto& prior : config.priors) {
    const int count = uniform_int(rng, prior.min_count, prior.max_count);
    for (int c = 0; c < count; ++c) {
      bool placed = false;
      for (int attempt = 0; attempt < config.max_retries && !placed; ++attempt) {
        Shape s;
        s.label = prior.label;
        s.kind = prior.kind;
        s.center_y = uniform(rng, prior.center_y_min, prior.center_y_max) * config.height;
        s.center_x = uniform(rng, prior.center_x_min, prior.center_x_max) * config.width;
        s.axis_y = uniform(rng, prior.axis_y_min, prior.axis_y_max) * config.height;
        s.axis_x = uniform(rng, prior.axis_x_min, prior.axis_x_max) * config.width;
        s.rotation = uniform(rng, -prior.max_rotation, prior.max_rotation);
        if (s.kind == ShapeKind::kBlob) {
          for (int k = 0; k < 3; ++k) {
            s.harmonics.push_back(uniform(rng, 0.0, 0.12));
            s.harmonics.push_back(uniform(rng, 0.0, 6.283185307179586));
          }
        }
        const double r = s.extent();
        placed = s.center_y - r >= 0 && s.center_y + r <= config.height && s.center_x - r >= 0 &&
                 s.center_x + r <= config.width;
        if (placed) scene.shapes.push_back(std::move(s));
      }
      if (!placed) {
        throw ValidationError("scene generation: label " + std::to_string(prior.label) +
                              " does not fit the canvas after " +
                              std::to_string(config.max_retries) + " retries");
      }
    }
  }
  return scene;
}

void DomainStyle::validate(int num_labels) const {
  if (name.empty()) throw ValidationError("domain style needs a name");
  if (static_cast<int>(intensity.size()) != num_labels) {
    throw ValidationError("style " + name + " has " + std::to_string(intensity.size()) +
                          " intensity profiles for " + std::to_string(num_labels) + " labels");
  }
  auto check_profile = [&](const IntensityProfile& p) {
    if (p.mean < 0 || p.mean > 1 || p.std < 0) {
      throw ValidationError("style " + name + ": intensity mean must be in [0,1], std >= 0");
    }
  };
  for (const auto& p : intensity) check_profile(p);
  check_profile(confounder_intensity);
  if (noise_amplitude < 0 || smoothing_radius < 0 || confounder_density < 0 || bias_field < 0 ||
      confounder_min_axis <= 0 || confounder_max_axis < confounder_min_axis) {
    throw ValidationError("style " + name + ": texture, density and bias must be non-negative");
  }
}

DomainStyle DomainStyle::style_a() {
  DomainStyle s;
  s.name = "styleA";
  s.intensity = {{0.10, 0.03}, {0.80, 0.04}, {0.58, 0.04}, {0.58, 0.04}, {0.70, 0.04}};
  s.noise_amplitude = 0.03;
  s.smoothing_radius = 1;
  s.confounder_density = 6.0;
  s.confounder_intensity = {0.70, 0.08};
  s.bias_field = 0.05;
  return s;
}

DomainStyle DomainStyle::style_b() {
  DomainStyle s;
  s.name = "styleB";
  s.intensity = {{0.22, 0.05}, {0.42, 0.06}, {0.88, 0.04}, {0.88, 0.04}, {0.62, 0.05}};
  s.noise_amplitude = 0.06;
  s.smoothing_radius = 1;
  s.confounder_density = 1.0;
  s.confounder_intensity = {0.35, 0.10};
  s.bias_field = 0.20;
  return s;
}

namespace {

int poisson(Rng& rng, double mean) {
  if (mean <= 0) return 0;
  const double limit = std::exp(-mean);
  int k = 0;
  double prod = uniform01(rng);
  while (prod > limit) {
    ++k;
    prod *= uniform01(rng);
  }
  return k;
}

ImageF box_blur(const ImageF& in, int radius) {
  if (radius <= 0) return in;
  const int h = static_cast<int>(in.rows()), w = static_cast<int>(in.cols());
  ImageF tmp(h, w), out(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0;
      int n = 0;
      for (int d = -radius; d <= radius; ++d) {
        const int xx = x + d;
        if (xx >= 0 && xx < w) { acc += in(y, xx); ++n; }
      }
      tmp(y, x) = static_cast<float>(acc / n);
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0;
      int n = 0;
      for (int d = -radius; d <= radius; ++d) {
        const int yy = y + d;
        if (yy >= 0 && yy < h) { acc += tmp(yy, x); ++n; }
      }
      out(y, x) = static_cast<float>(acc / n);
    }
  }
  return out;
}

}  // namespace

SampleRecord render(const SceneSpec& scene, const DomainStyle& style, std::uint64_t seed) {
  style.validate(scene.num_labels);
  const int h = scene.height, w = scene.width;
  LabelMap owner;
  SampleRecord rec;
  rec.labels = scene.rasterize(&owner);
  rec.domain_name = style.name;
  rec.scene_seed = scene.seed;

  Rng rng(seed);
  const double bg = style.intensity[0].mean + style.intensity[0].std * normal(rng);
  std::vector<double> fill(scene.shapes.size());
  for (std::size_t i = 0; i < scene.shapes.size(); ++i) {
    const auto& p = style.intensity[scene.shapes[i].label];
    fill[i] = p.mean + p.std * normal(rng);
  }
  ImageF image(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      image(y, x) = static_cast<float>(owner(y, x) < 0 ? bg : fill[owner(y, x)]);
    }
  }

  // Distractors are painted only over background pixels.
  const int confounders = poisson(rng, style.confounder_density);
  rec.confounder_count = confounders;
  for (int c = 0; c < confounders; ++c) {
    Shape s;
    s.kind = ShapeKind::kEllipse;
    s.center_y = uniform(rng, 0, h);
    s.center_x = uniform(rng, 0, w);
    s.axis_y = uniform(rng, style.confounder_min_axis, style.confounder_max_axis);
    s.axis_x = uniform(rng, style.confounder_min_axis, style.confounder_max_axis);
    s.rotation = uniform(rng, -3.14159, 3.14159);
    const double value = style.confounder_intensity.mean + style.confounder_intensity.std * normal(rng);
    const double r = s.extent() + 1;
    for (int y = std::max(0, static_cast<int>(s.center_y - r)); y < std::min(h, static_cast<int>(s.center_y + r) + 1); ++y) {
      for (int x = std::max(0, static_cast<int>(s.center_x - r)); x < std::min(w, static_cast<int>(s.center_x + r) + 1); ++x) {
        if (rec.labels(y, x) == 0 && s.contains(y + 0.5, x + 0.5)) image(y, x) = static_cast<float>(value);
      }
    }
  }

  if (style.noise_amplitude > 0) {
    ImageF noise(h, w);
    for (Eigen::Index i = 0; i < noise.size(); ++i) noise.data()[i] = static_cast<float>(normal(rng));
    noise = box_blur(noise, style.smoothing_radius);
    // Rescale so the smoothed field keeps unit variance away from borders.
    const double gain = style.noise_amplitude * (2 * style.smoothing_radius + 1);
    image.array() += static_cast<float>(gain) * noise.array();
  }

  if (style.bias_field > 0) {
    const double fy = uniform(rng, 0.5, 1.5), fx = uniform(rng, 0.5, 1.5);
    const double py = uniform(rng, 0, 6.283185307179586), px = uniform(rng, 0, 6.283185307179586);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const double field = 0.5 * (std::cos(3.141592653589793 * fy * y / h + py) +
                                     std::cos(3.141592653589793 * fx * x / w + px));
        image(y, x) = static_cast<float>(image(y, x) * (1.0 + style.bias_field * field));
      }
    }
  }
  rec.image = image.cwiseMax(0.0f).cwiseMin(1.0f);
  return rec;
}

std::uint64_t render_seed(std::uint64_t scene_seed, const std::string& style_name) {
  return mix_seed(scene_seed, fnv1a(style_name));
}

void DatasetConfig::validate() const {
  if (n_train < 0 || n_val < 0 || n_test_per_domain < 0) throw ValidationError("split sizes must be >= 0");
  scene.validate();
  source.validate(scene.num_labels);
  std::set<std::string> names{source.name};
  for (const auto& t : targets) {
    t.validate(scene.num_labels);
    if (!names.insert(t.name).second) throw ValidationError("duplicate style name '" + t.name + "'");
  }
}

namespace {

json profile_json(const IntensityProfile& p) { return json::array({p.mean, p.std}); }

IntensityProfile profile_from(const json& j) {
  if (!j.is_array() || j.size() != 2) throw SchemaError("intensity profile must be [mean, std]");
  return {j[0].get<double>(), j[1].get<double>()};
}

json style_json(const DomainStyle& s) {
  json intensity = json::array();
  for (const auto& p : s.intensity) intensity.push_back(profile_json(p));
  return {{"name", s.name},
          {"intensity", intensity},
          {"noise_amplitude", s.noise_amplitude},
          {"smoothing_radius", s.smoothing_radius},
          {"confounder_density", s.confounder_density},
          {"confounder_intensity", profile_json(s.confounder_intensity)},
          {"confounder_axis", json::array({s.confounder_min_axis, s.confounder_max_axis})},
          {"bias_field", s.bias_field}};
}

DomainStyle style_from(const json& j) {
  if (j.is_string()) {
    const auto name = j.get<std::string>();
    if (name == "styleA") return DomainStyle::style_a();
    if (name == "styleB") return DomainStyle::style_b();
    throw SchemaError("unknown built-in style '" + name + "'");
  }
  DomainStyle s;
  s.name = j.at("name").get<std::string>();
  for (const auto& p : j.at("intensity")) s.intensity.push_back(profile_from(p));
  s.noise_amplitude = j.value("noise_amplitude", 0.0);
  s.smoothing_radius = j.value("smoothing_radius", 0);
  s.confounder_density = j.value("confounder_density", 0.0);
  if (j.contains("confounder_intensity")) s.confounder_intensity = profile_from(j["confounder_intensity"]);
  if (j.contains("confounder_axis")) {
    s.confounder_min_axis = j["confounder_axis"].at(0).get<double>();
    s.confounder_max_axis = j["confounder_axis"].at(1).get<double>();
  }
  s.bias_field = j.value("bias_field", 0.0);
  return s;
}

json prior_json(const ShapePrior& p) {
  return {{"label", p.label},
          {"kind", to_string(p.kind)},
          {"center_y", {p.center_y_min, p.center_y_max}},
          {"center_x", {p.center_x_min, p.center_x_max}},
          {"axis_y", {p.axis_y_min, p.axis_y_max}},
          {"axis_x", {p.axis_x_min, p.axis_x_max}},
          {"max_rotation", p.max_rotation},
          {"count", {p.min_count, p.max_count}}};
}

ShapePrior prior_from(const json& j) {
  ShapePrior p;
  p.label = j.at("label").get<int>();
  p.kind = shape_kind_from_string(j.value("kind", std::string("ellipse")));
  auto range = [&](const char* key, double& lo, double& hi) {
    if (j.contains(key)) {
      lo = j[key].at(0).get<double>();
      hi = j[key].at(1).get<double>();
    }
  };
  range("center_y", p.center_y_min, p.center_y_max);
  range("center_x", p.center_x_min, p.center_x_max);
  range("axis_y", p.axis_y_min, p.axis_y_max);
  range("axis_x", p.axis_x_min, p.axis_x_max);
  p.max_rotation = j.value("max_rotation", p.max_rotation);
  if (j.contains("count")) {
    p.min_count = j["count"].at(0).get<int>();
    p.max_count = j["count"].at(1).get<int>();
  }
  return p;
}

}  // namespace

DatasetConfig dataset_config_from_json(const std::string& json_text) {
  DatasetConfig c;
  try {
    const json j = json::parse(json_text);
    c.n_train = j.value("n_train", c.n_train);
    c.n_val = j.value("n_val", c.n_val);
    c.n_test_per_domain = j.value("n_test_per_domain", c.n_test_per_domain);
    c.seed = j.value("seed", c.seed);
    if (j.contains("scene")) {
      const auto& s = j["scene"];
      c.scene.height = s.value("height", c.scene.height);
      c.scene.width = s.value("width", c.scene.width);
      c.scene.num_labels = s.value("num_labels", c.scene.num_labels);
      c.scene.max_retries = s.value("max_retries", c.scene.max_retries);
      if (s.contains("priors")) {
        c.scene.priors.clear();
        for (const auto& p : s["priors"]) c.scene.priors.push_back(prior_from(p));
      }
    }
    if (j.contains("source")) c.source = style_from(j["source"]);
    if (j.contains("targets")) {
      c.targets.clear();
      for (const auto& t : j["targets"]) c.targets.push_back(style_from(t));
    }
  } catch (const json::exception& e) {
    throw SchemaError(std::string("dataset config: ") + e.what());
  }
  c.validate();
  return c;
}

std::string dataset_config_to_json(const DatasetConfig& c) {
  json priors = json::array();
  for (const auto& p : c.scene.priors) priors.push_back(prior_json(p));
  json targets = json::array();
  for (const auto& t : c.targets) targets.push_back(style_json(t));
  const json j = {{"n_train", c.n_train},
                  {"n_val", c.n_val},
                  {"n_test_per_domain", c.n_test_per_domain},
                  {"seed", c.seed},
                  {"scene", {{"height", c.scene.height},
                             {"width", c.scene.width},
                             {"num_labels", c.scene.num_labels},
                             {"max_retries", c.scene.max_retries},
                             {"priors", priors}}},
                  {"source", style_json(c.source)},
                  {"targets", targets}};
  return j.dump(2) + "\n";
}

void write_manifest(const std::string& path, const std::vector<ManifestRow>& rows) {
  std::ostringstream out;
  out << "split\tdomain\tscene_seed\timage\tlabels\n";
  for (const auto& r : rows) {
    out << r.split << '\t' << r.domain << '\t' << r.scene_seed << '\t' << r.image_path << '\t'
        << r.label_path << '\n';
  }
  detail::write_file_atomic(path, out.str());
}

std::vector<ManifestRow> read_manifest(const std::string& path) {
  std::istringstream in(detail::read_file_text(path));
  std::string line;
  std::vector<ManifestRow> rows;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 || line.empty()) continue;
    std::istringstream fields(line);
    ManifestRow r;
    std::string seed;
    if (!std::getline(fields, r.split, '\t') || !std::getline(fields, r.domain, '\t') ||
        !std::getline(fields, seed, '\t') || !std::getline(fields, r.image_path, '\t') ||
        !std::getline(fields, r.label_path)) {
      throw FormatError(path + ":" + std::to_string(line_no) + ": expected 5 tab-separated fields");
    }
    try {
      r.scene_seed = std::stoull(seed);
    } catch (const std::exception&) {
      throw FormatError(path + ":" + std::to_string(line_no) + ": bad scene seed");
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

std::vector<ManifestRow> build_dataset(const DatasetConfig& config, const std::string& out_dir) {
  config.validate();
  fs::create_directories(out_dir);
  const int total = config.n_train + config.n_val + config.n_test_per_domain;
  std::vector<std::uint64_t> seeds;
  std::set<std::uint64_t> used;
  for (std::uint64_t i = 0; static_cast<int>(seeds.size()) < total; ++i) {
    const auto s = mix_seed(config.seed, i);
    if (used.insert(s).second) seeds.push_back(s);
  }

  std::vector<ManifestRow> rows;
  char name[32];
  auto emit = [&](const std::string& split, const DomainStyle& style, int index, std::uint64_t seed) {
    const auto scene = generate_scene(config.scene, seed);
    const auto rec = render(scene, style, render_seed(seed, style.name));
    std::snprintf(name, sizeof name, "%05d", index);
    const std::string dir = split + "/" + style.name;
    fs::create_directories(fs::path(out_dir) / dir);
    ManifestRow row{split, style.name, seed, dir + "/" + name + ".img.tgts",
                    dir + "/" + name + ".lbl.tgts"};
    tensor_io::save_image((fs::path(out_dir) / row.image_path).string(), rec.image);
    tensor_io::save_labels((fs::path(out_dir) / row.label_path).string(), rec.labels);
    rows.push_back(std::move(row));
  };

  int next = 0;
  for (int i = 0; i < config.n_train; ++i) emit("train", config.source, i, seeds[next++]);
  for (int i = 0; i < config.n_val; ++i) emit("val", config.source, i, seeds[next++]);
  const int test_begin = next;
  for (int i = 0; i < config.n_test_per_domain; ++i) emit("test", config.source, i, seeds[test_begin + i]);
  for (const auto& target : config.targets) {
    for (int i = 0; i < config.n_test_per_domain; ++i) emit("test", target, i, seeds[test_begin + i]);
  }

  detail::write_file_atomic((fs::path(out_dir) / "dataset.json").string(), dataset_config_to_json(config));
  write_manifest((fs::path(out_dir) / "manifest.tsv").string(), rows);
  return rows;
}

Dataset::Dataset(std::string root) : root_(std::move(root)) {
  const auto manifest = fs::path(root_) / "manifest.tsv";
  const auto config = fs::path(root_) / "dataset.json";
  if (!fs::exists(manifest) || !fs::exists(config)) {
    throw ValidationError("not a dataset directory (missing manifest.tsv or dataset.json): " + root_);
  }
  rows_ = read_manifest(manifest.string());
  config_ = dataset_config_from_json(detail::read_file_text(config.string()));
}

std::vector<std::string> Dataset::test_domains() const {
  std::vector<std::string> out;
  for (const auto& r : rows_) {
    if (r.split == "test" && std::find(out.begin(), out.end(), r.domain) == out.end()) {
      out.push_back(r.domain);
    }
  }
  return out;
}

void Dataset::check_hygiene() const {
  std::set<std::uint64_t> fit_seeds, test_seeds;
  for (const auto& r : rows_) {
    if (r.split == "train" || r.split == "val") {
      if (r.domain != source_domain()) {
        throw ValidationError("manifest violation: " + r.split + " row from non-source domain " + r.domain);
      }
      const std::string prefix = r.split + "/";
      if (r.image_path.rfind(prefix, 0) != 0 || r.label_path.rfind(prefix, 0) != 0) {
        throw ValidationError("manifest violation: " + r.split + " row points outside " + prefix +
                              ": " + r.image_path);
      }
      fit_seeds.insert(r.scene_seed);
    } else if (r.split == "test") {
      test_seeds.insert(r.scene_seed);
    } else {
      throw ValidationError("manifest violation: unknown split '" + r.split + "'");
    }
  }
  for (auto s : test_seeds) {
    if (fit_seeds.count(s)) {
      throw ValidationError("manifest violation: scene seed " + std::to_string(s) +
                            " shared between training and test");
    }
  }
}

std::vector<const ManifestRow*> Dataset::select(const std::string& split, const std::string& domain) const {
  std::vector<const ManifestRow*> out;
  for (const auto& r : rows_) {
    if (r.split == split && r.domain == domain) out.push_back(&r);
  }
  return out;
}

SampleRecord Dataset::load(const ManifestRow& row) const {
  const auto image_path = (fs::path(root_) / row.image_path).string();
  const auto label_path = (fs::path(root_) / row.label_path).string();
  if (hook_) {
    hook_(image_path, row);
    hook_(label_path, row);
  }
  SampleRecord rec;
  rec.image = tensor_io::load_image(image_path);
  rec.labels = tensor_io::load_labels(label_path);
  rec.domain_name = row.domain;
  rec.scene_seed = row.scene_seed;
  return rec;
}

TrainingSource::TrainingSource(const Dataset& dataset) : dataset_(dataset) {
  dataset.check_hygiene();
  train_ = dataset.select("train", dataset.source_domain());
  val_ = dataset.select("val", dataset.source_domain());
}

SampleRecord TrainingSource::load(const ManifestRow& row) const {
  if ((row.split != "train" && row.split != "val") || row.domain != dataset_.source_domain()) {
    throw ValidationError("training loader refused " + row.split + "/" + row.domain + " file " +
                          row.image_path);
  }
  return dataset_.load(row);
}

}  // namespace tgcfa::synthdom
