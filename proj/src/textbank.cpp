#include "tgcfa/textbank.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <filesystem>
#include <set>

#include <json.hpp>

#include "binary_io.hpp"

namespace tgcfa::textbank {

using nlohmann::json;

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

int line_of_offset(const std::string& text, std::size_t offset) {
  offset = std::min(offset, text.size());
  return 1 + static_cast<int>(std::count(text.begin(), text.begin() + offset, '\n'));
}

constexpr char kTableMagic[4] = {'T', 'G', 'T', 'B'};
constexpr std::uint32_t kTableVersion = 1;
constexpr const char* kLabelsTag = ";labels=";

}  // namespace

std::vector<std::string> DescriptionSet::names() const {
  std::vector<std::string> out;
  out.reserve(labels.size());
  for (const auto& l : labels) out.push_back(l.label_name);
  return out;
}

void DescriptionSet::validate() {
  if (labels.empty()) throw ValidationError("description set has no labels");
  std::sort(labels.begin(), labels.end(),
            [](const auto& a, const auto& b) { return a.label_id < b.label_id; });
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto& l = labels[i];
    if (i > 0 && labels[i - 1].label_id == l.label_id) {
      throw ValidationError("duplicate label_id " + std::to_string(l.label_id));
    }
    if (l.label_id != static_cast<int>(i)) {
      throw ValidationError("label ids must be contiguous from 0; missing id " + std::to_string(i));
    }
    if (l.descriptions.empty()) {
      throw ValidationError("label " + std::to_string(l.label_id) + " (" + l.label_name +
                            ") has no descriptions");
    }
    for (const auto& d : l.descriptions) {
      if (trim(d).empty()) {
        throw ValidationError("label " + std::to_string(l.label_id) + " has an empty description");
      }
    }
  }
  if (background_id && (*background_id < 0 || *background_id >= size())) {
    throw ValidationError("background_id " + std::to_string(*background_id) +
                          " does not name a label");
  }
}

DescriptionSet parse_descriptions(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw SchemaError("description file: parse error at line " +
                      std::to_string(line_of_offset(json_text, e.byte)) + ": " + e.what());
  }

  DescriptionSet set;
  if (!doc.is_object() || !doc.contains("labels") || !doc["labels"].is_array()) {
    throw SchemaError("description file: field 'labels' must be an array");
  }
  for (std::size_t i = 0; i < doc["labels"].size(); ++i) {
    const auto& entry = doc["labels"][i];
    const std::string where = "labels[" + std::to_string(i) + "]";
    if (!entry.is_object()) throw SchemaError("description file: " + where + " must be an object");
    if (!entry.contains("id") || !entry["id"].is_number_integer()) {
      throw SchemaError("description file: " + where + ".id must be an integer");
    }
    if (!entry.contains("name") || !entry["name"].is_string()) {
      throw SchemaError("description file: " + where + ".name must be a string");
    }
    if (!entry.contains("descriptions") || !entry["descriptions"].is_array()) {
      throw SchemaError("description file: " + where + ".descriptions must be an array");
    }
    LabelDescriptor label;
    label.label_id = entry["id"].get<int>();
    label.label_name = entry["name"].get<std::string>();
    for (const auto& d : entry["descriptions"]) {
      if (!d.is_string()) {
        throw SchemaError("description file: " + where + ".descriptions must hold strings");
      }
      label.descriptions.push_back(d.get<std::string>());
    }
    set.labels.push_back(std::move(label));
  }
  if (doc.contains("background_id") && !doc["background_id"].is_null()) {
    if (!doc["background_id"].is_number_integer()) {
      throw SchemaError("description file: background_id must be an integer");
    }
    set.background_id = doc["background_id"].get<int>();
  }
  set.validate();
  return set;
}

DescriptionSet load_descriptions(const std::string& path) {
  if (!std::filesystem::exists(path)) throw ValidationError("description file not found: " + path);
  return parse_descriptions(detail::read_file_text(path));
}

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> tokens;
  std::string current;
  for (unsigned char c : text) {
    if (std::isalnum(c)) {
      current.push_back(static_cast<char>(std::tolower(c)));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

EmbeddingVector embed_text(const TextEncoderProvider& encoder, const std::string& text,
                           std::vector<std::string>* warnings) {
  if (trim(text).empty()) throw ValidationError("cannot embed empty text");
  auto tokens = tokenize(text);
  if (tokens.empty()) throw ValidationError("text has no tokens: '" + text + "'");
  if (static_cast<int>(tokens.size()) > encoder.token_limit()) {
    if (warnings) {
      warnings->push_back("truncated to " + std::to_string(encoder.token_limit()) + " of " +
                          std::to_string(tokens.size()) + " tokens: '" + text.substr(0, 40) +
                          "...'");
    }
    tokens.resize(encoder.token_limit());
  }
  EmbeddingVector v = encoder.embed(tokens);
  if (v.size() != encoder.dimension() || !v.allFinite()) {
    throw EncoderError(encoder.fingerprint() + " returned an invalid embedding");
  }
  return v;
}

StubTextEncoder::StubTextEncoder(int dimension, int token_limit, std::uint64_t seed)
    : dim_(dimension), token_limit_(token_limit), seed_(seed) {
  if (dimension <= 0 || token_limit <= 0) {
    throw ValidationError("stub encoder needs positive dimension and token limit");
  }
}

std::string StubTextEncoder::fingerprint() const {
  return "stub-fnv1a:k=" + std::to_string(dim_) + ":seed=" + std::to_string(seed_);
}

EmbeddingVector StubTextEncoder::token_direction(const std::string& token) const {
  Rng rng(mix_seed(fnv1a(token), seed_));
  EmbeddingVector v(dim_);
  for (int i = 0; i < dim_; ++i) v[i] = normal(rng);
  return v / v.norm();
}

EmbeddingVector StubTextEncoder::embed(const std::vector<std::string>& tokens) const {
  EmbeddingVector sum = EmbeddingVector::Zero(dim_);
  for (const auto& t : tokens) sum += token_direction(t);
  const double norm = sum.norm();
  if (norm < 1e-12) throw EncoderError("stub embedding collapsed to zero");
  return sum / norm;
}

ImportedTextEncoder ImportedTextEncoder::from_json(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw SchemaError("embedding import: parse error at line " +
                      std::to_string(line_of_offset(json_text, e.byte)) + ": " + e.what());
  }
  if (!doc.is_object() || !doc.contains("embeddings") || !doc["embeddings"].is_array()) {
    throw SchemaError("embedding import: field 'embeddings' must be an array");
  }
  ImportedTextEncoder enc;
  enc.encoder_name_ = doc.value("encoder", std::string("unknown"));
  for (std::size_t i = 0; i < doc["embeddings"].size(); ++i) {
    const auto& e = doc["embeddings"][i];
    const std::string where = "embeddings[" + std::to_string(i) + "]";
    if (!e.contains("text") || !e["text"].is_string() || !e.contains("vector") ||
        !e["vector"].is_array()) {
      throw SchemaError("embedding import: " + where + " needs 'text' and 'vector'");
    }
    const auto values = e["vector"].get<std::vector<double>>();
    if (values.empty()) throw ValidationError("embedding import: " + where + " is empty");
    if (enc.dim_ == 0) enc.dim_ = static_cast<int>(values.size());
    if (static_cast<int>(values.size()) != enc.dim_) {
      throw ValidationError("embedding import: " + where + " has dimension " +
                            std::to_string(values.size()) + ", expected " +
                            std::to_string(enc.dim_));
    }
    EmbeddingVector v = Eigen::Map<const EmbeddingVector>(values.data(), enc.dim_);
    if (!v.allFinite()) throw ValidationError("embedding import: " + where + " is not finite");
    enc.entries_.emplace_back(e["text"].get<std::string>(), std::move(v));
  }
  if (enc.entries_.empty()) throw ValidationError("embedding import: no embeddings");
  return enc;
}

ImportedTextEncoder ImportedTextEncoder::from_file(const std::string& path) {
  if (!std::filesystem::exists(path)) throw EncoderError("embedding import file not found: " + path);
  return from_json(detail::read_file_text(path));
}

EmbeddingVector ImportedTextEncoder::lookup(const std::string& text) const {
  for (const auto& [key, vec] : entries_) {
    if (key == text) return vec;
  }
  throw EncoderError("no imported embedding for text '" + text + "'");
}

EmbeddingVector ImportedTextEncoder::embed(const std::vector<std::string>& tokens) const {
  // Imported vectors are keyed by the original text; tokens are matched
  // against each entry's own tokenization.
  for (const auto& [key, vec] : entries_) {
    if (tokenize(key) == tokens) return vec;
  }
  throw EncoderError("no imported embedding matches the given text");
}

std::unique_ptr<TextEncoderProvider> make_pretrained_encoder(const std::string& model_dir,
                                                             const DescriptionSet& set) {
  namespace fs = std::filesystem;
  if (model_dir.empty() || !fs::is_directory(model_dir)) {
    throw EncoderError("pretrained encoder unavailable: model directory '" + model_dir +
                       "' not found (set --model-dir or TGCFA_TEXT_MODEL)");
  }
  const fs::path script = fs::path(TGCFA_SOURCE_DIR) / "tools" / "export_text_embeddings.py";
  const fs::path tmp = fs::temp_directory_path() / ("tgcfa_pretrained_" +
                                                    std::to_string(fnv1a(model_dir)));
  fs::create_directories(tmp);
  const fs::path texts = tmp / "texts.json";
  const fs::path out = tmp / "embeddings.json";
  json doc;
  doc["labels"] = json::array();
  for (const auto& l : set.labels) {
    doc["labels"].push_back({{"id", l.label_id}, {"name", l.label_name},
                             {"descriptions", l.descriptions}});
  }
  detail::write_file_atomic(texts.string(), doc.dump());
  const std::string cmd = "python3 '" + script.string() + "' --model '" + model_dir +
                          "' --descriptions '" + texts.string() + "' --out '" + out.string() + "'";
  if (std::system(cmd.c_str()) != 0) {
    throw EncoderError("pretrained encoder failed to run: " + cmd);
  }
  return std::make_unique<ImportedTextEncoder>(ImportedTextEncoder::from_file(out.string()));
}

EmbeddingVector aggregate_label_embedding(std::span<const EmbeddingVector> variants) {
  if (variants.empty()) throw ValidationError("cannot aggregate an empty variant list");
  const auto k = variants.front().size();
  EmbeddingVector sum = EmbeddingVector::Zero(k);
  for (const auto& v : variants) {
    if (v.size() != k) {
      throw ValidationError("variant dimension mismatch: " + std::to_string(v.size()) + " vs " +
                            std::to_string(k));
    }
    sum += v;
  }
  return sum / static_cast<double>(variants.size());
}

bool TextEmbeddingTable::operator==(const TextEmbeddingTable& other) const {
  if (embeddings.rows() != other.embeddings.rows() || embeddings.cols() != other.embeddings.cols()) {
    return false;
  }
  // Bitwise comparison so that -0.0 / NaN payloads also count.
  return std::memcmp(embeddings.data(), other.embeddings.data(),
                     sizeof(float) * embeddings.size()) == 0 &&
         label_names == other.label_names && encoder_fingerprint == other.encoder_fingerprint;
}

TextEmbeddingTable build_table(const DescriptionSet& set, const TextEncoderProvider& encoder,
                               const BuildOptions& options) {
  const int n = set.size();
  const int k = encoder.dimension();
  TextEmbeddingTable table;
  table.embeddings.resize(n, k);
  table.label_names = set.names();

  std::string variant_counts;
  for (int r = 0; r < n; ++r) {
    const auto& label = set.labels[r];
    std::vector<EmbeddingVector> variants;
    variants.reserve(label.descriptions.size());
    for (const auto& text : label.descriptions) {
      try {
        EmbeddingVector v = embed_text(encoder, text, options.warnings);
        if (options.normalize_variants) v.normalize();
        variants.push_back(std::move(v));
      } catch (const EncoderError& e) {
        throw EncoderError("label " + std::to_string(r) + " (" + label.label_name + "): " + e.what());
      } catch (const ValidationError& e) {
        throw ValidationError("label " + std::to_string(r) + " (" + label.label_name + "): " + e.what());
      }
    }
    table.embeddings.row(r) = aggregate_label_embedding(variants).cast<float>().transpose();
    variant_counts += (r ? "," : "") + std::to_string(variants.size());
  }
  table.encoder_fingerprint = encoder.fingerprint() + ";v=" + variant_counts +
                              (options.normalize_variants ? ";normalized" : "");
  return table;
}

void save_table(const TextEmbeddingTable& table, const std::string& path) {
  std::string fingerprint = table.encoder_fingerprint;
  if (!table.label_names.empty()) fingerprint += kLabelsTag + json(table.label_names).dump();

  detail::ByteWriter w;
  w.raw(kTableMagic, 4);
  w.u32(kTableVersion);
  w.u32(static_cast<std::uint32_t>(table.n()));
  w.u32(static_cast<std::uint32_t>(table.k()));
  w.u32(static_cast<std::uint32_t>(fingerprint.size()));
  w.text(fingerprint);
  for (int r = 0; r < table.n(); ++r) {
    for (int c = 0; c < table.k(); ++c) w.f32(table.embeddings(r, c));
  }
  detail::write_file_atomic(path, w.bytes());
}

TextEmbeddingTable load_table(const std::string& path) {
  if (!std::filesystem::exists(path)) throw ValidationError("embedding table not found: " + path);
  detail::ByteReader r(detail::read_file_bytes(path), path);
  char magic[4];
  r.raw(magic, 4);
  if (std::memcmp(magic, kTableMagic, 4) != 0) throw FormatError(path + ": bad magic, not a TGTB table");
  const auto version = r.u32();
  if (version != kTableVersion) {
    throw FormatError(path + ": unsupported table version " + std::to_string(version));
  }
  const auto n = r.u32();
  const auto k = r.u32();
  const auto fp_len = r.u32();
  if (n == 0 || k == 0) throw FormatError(path + ": empty table dimensions");
  if (fp_len > r.remaining()) throw FormatError(path + ": truncated fingerprint");
  std::string fingerprint = r.text(fp_len);
  if (static_cast<std::uint64_t>(n) * k * sizeof(float) != r.remaining()) {
    throw FormatError(path + ": payload size does not match " + std::to_string(n) + "x" +
                      std::to_string(k) + " header");
  }
  TextEmbeddingTable table;
  table.embeddings.resize(n, k);
  for (std::uint32_t i = 0; i < n; ++i) {
    for (std::uint32_t c = 0; c < k; ++c) table.embeddings(i, c) = r.f32();
  }
  if (const auto pos = fingerprint.find(kLabelsTag); pos != std::string::npos) {
    try {
      table.label_names =
          json::parse(fingerprint.substr(pos + std::strlen(kLabelsTag))).get<std::vector<std::string>>();
    } catch (const json::exception&) {
      throw FormatError(path + ": malformed label list in fingerprint");
    }
    fingerprint.resize(pos);
  }
  table.encoder_fingerprint = std::move(fingerprint);
  if (!table.label_names.empty() && static_cast<int>(table.label_names.size()) != table.n()) {
    throw FormatError(path + ": label count does not match table rows");
  }
  return table;
}

}  // namespace tgcfa::textbank
