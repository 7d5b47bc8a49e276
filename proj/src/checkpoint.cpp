#include <filesystem>

#include <json.hpp>

#include "binary_io.hpp"
#include "tgcfa/harness.hpp"

namespace tgcfa::harness {

using nlohmann::json;

namespace {
constexpr char kMagic[4] = {'T', 'G', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;
}  // namespace

TgcfaModel::TgcfaModel(const segcore::BackboneConfig& backbone, int text_dim, std::uint64_t seed)
    : net(backbone, mix_seed(seed, 1)),
      proj_weight("proj.weight", text_dim, backbone.bottleneck_channels()),
      proj_bias("proj.bias", text_dim, 1) {
  Rng rng(mix_seed(seed, 2));
  const auto init = alignhead::ProjectionParams<float>::initialized(backbone.bottleneck_channels(),
                                                                    text_dim, rng);
  proj_weight.value = init.weight;
  proj_bias.value = init.bias;
}

std::vector<nn::Param<float>*> TgcfaModel::parameters() {
  auto params = net.parameters();
  params.push_back(&proj_weight);
  params.push_back(&proj_bias);
  return params;
}

alignhead::ProjectionParams<float> TgcfaModel::projection() const {
  alignhead::ProjectionParams<float> p;
  p.weight = proj_weight.value;
  p.bias = proj_bias.value.col(0);
  return p;
}

void save_checkpoint(const std::string& path, TgcfaModel& model, const std::string& config_hash) {
  const auto& b = model.net.config();
  const json meta = {{"backbone", {{"in_channels", b.in_channels},
                                   {"num_classes", b.num_classes},
                                   {"base_width", b.base_width},
                                   {"levels", b.levels}}},
                     {"text_dim", model.proj_weight.value.rows()},
                     {"config_hash", config_hash}};
  const std::string meta_text = meta.dump();
  detail::ByteWriter w;
  w.raw(kMagic, 4);
  w.u32(kVersion);
  w.u32(static_cast<std::uint32_t>(meta_text.size()));
  w.text(meta_text);
  const auto params = model.parameters();
  w.u32(static_cast<std::uint32_t>(params.size()));
  for (const auto* p : params) {
    w.u32(static_cast<std::uint32_t>(p->name.size()));
    w.text(p->name);
    w.u32(static_cast<std::uint32_t>(p->value.rows()));
    w.u32(static_cast<std::uint32_t>(p->value.cols()));
    w.raw(p->value.data(), sizeof(float) * p->value.size());
  }
  detail::write_file_atomic(path, w.bytes());
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  if (!std::filesystem::exists(path)) throw ValidationError("checkpoint not found: " + path);
  detail::ByteReader r(detail::read_file_bytes(path), path);
  char magic[4];
  r.raw(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) throw FormatError(path + ": bad magic, not a checkpoint");
  if (const auto v = r.u32(); v != kVersion) {
    throw FormatError(path + ": unsupported checkpoint version " + std::to_string(v));
  }
  json meta;
  try {
    meta = json::parse(r.text(r.u32()));
  } catch (const json::exception& e) {
    throw FormatError(path + ": bad checkpoint metadata: " + e.what());
  }
  segcore::BackboneConfig backbone;
  const auto& b = meta.at("backbone");
  backbone.in_channels = b.at("in_channels").get<int>();
  backbone.num_classes = b.at("num_classes").get<int>();
  backbone.base_width = b.at("base_width").get<int>();
  backbone.levels = b.at("levels").get<int>();

  LoadedCheckpoint out{TgcfaModel(backbone, meta.at("text_dim").get<int>(), 0),
                       meta.at("config_hash").get<std::string>()};
  auto params = out.model.parameters();
  const auto count = r.u32();
  if (count != params.size()) throw FormatError(path + ": tensor count does not match architecture");
  for (auto* p : params) {
    const std::string name = r.text(r.u32());
    const auto rows = r.u32();
    const auto cols = r.u32();
    if (name != p->name || rows != p->value.rows() || cols != p->value.cols()) {
      throw FormatError(path + ": unexpected tensor " + name + " (expected " + p->name + ")");
    }
    r.raw(p->value.data(), sizeof(float) * p->value.size());
  }
  if (r.remaining() != 0) throw FormatError(path + ": trailing bytes");
  return out;
}

}  // namespace tgcfa::harness
